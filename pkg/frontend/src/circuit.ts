import type { ApiClient } from "./api.js";
import type { DistributionPayload, TimelineCluster, TimelinePayload } from "./types.js";

export interface ClusterRef {
  month: number;
  clusterId: number;
}

/**
 * Interaction model of the circuit-line clustering diagram: one line per
 * entity threading the monthly cluster boxes, boxes placed at their served
 * 1D positions and colored by mean anomaly. Hover filters the lines to the
 * members of the hovered cluster; click loads that cluster's aggregate
 * distribution from the service.
 */
export class CircuitDiagram {
  hovered: ClusterRef | null = null;

  constructor(
    private readonly api: ApiClient,
    public readonly timeline: TimelinePayload,
  ) {}

  clustersOf(month: number): TimelineCluster[] {
    return this.timeline.clusters[String(month)] ?? [];
  }

  cluster(ref: ClusterRef): TimelineCluster | undefined {
    return this.clustersOf(ref.month).find((c) => c.id === ref.clusterId);
  }

  /** entity labels whose line passes through the given cluster */
  membersOf(ref: ClusterRef): string[] {
    const c = this.cluster(ref);
    if (!c) return [];
    return c.entities.map((i) => this.timeline.entities[i]);
  }

  hover(ref: ClusterRef | null): void {
    this.hovered = ref;
  }

  /**
   * Lines currently rendered. With no hover all entity lines are visible;
   * with a hovered cluster, exactly the lines passing through it.
   */
  visibleLines(): string[] {
    const all = Object.keys(this.timeline.lines);
    if (this.hovered === null) return all;
    const members = new Set(this.membersOf(this.hovered));
    return all.filter((label) => members.has(label));
  }

  /** click interaction: fetch the hovered cluster's aggregate distribution */
  async openCluster(ref: ClusterRef, gridRes = 128): Promise<DistributionPayload> {
    const members = this.membersOf(ref);
    return this.api.distribution({
      members,
      months: [ref.month],
      grid_res: gridRes,
    });
  }
}
