import type { ApiClient } from "./api.js";
import type { Point } from "./types.js";

export interface NodeSpaceOptions {
  /** how many node thumbnails to render (farthest-point subset) */
  thumbnailCount?: number;
  /** debounce window for anchor PUTs, ms */
  debounceMs?: number;
  setTimeoutImpl?: (fn: () => void, ms: number) => unknown;
  clearTimeoutImpl?: (handle: unknown) => void;
}

/**
 * Farthest-point sampling over 2D positions, seeded at the lowest index so
 * the subset is deterministic for a given embedding.
 */
export function farthestPointSubset(positions: Point[], count: number): number[] {
  const n = positions.length;
  if (count >= n) return positions.map((_, i) => i);
  const chosen = [0];
  const dist = positions.map((p) => Math.hypot(p[0] - positions[0][0], p[1] - positions[0][1]));
  while (chosen.length < count) {
    let best = -1;
    let bestDist = -1;
    for (let i = 0; i < n; i++) {
      if (dist[i] > bestDist) {
        bestDist = dist[i];
        best = i;
      }
    }
    chosen.push(best);
    for (let i = 0; i < n; i++) {
      const d = Math.hypot(positions[i][0] - positions[best][0], positions[i][1] - positions[best][1]);
      if (d < dist[i]) dist[i] = d;
    }
  }
  return chosen.sort((a, b) => a - b);
}

/**
 * State of the node-space editor: node positions mirrored from the service,
 * anchors, and drag interaction with a debounced latest-wins anchor PUT.
 *
 * Every rendered position comes from a service response; a drag only moves
 * the local ghost of the dragged node until the round-trip lands.
 */
export class NodeSpaceEditor {
  positions: Point[] = [];
  anchors: Record<string, Point> = {};
  status = "";
  /** bumps whenever positions change; views key their re-render on it */
  embeddingVersion = 0;

  private pending: Record<string, Point> | null = null;
  private timer: unknown = null;
  private requestGeneration = 0;
  private appliedGeneration = 0;
  private readonly thumbnailCount: number;
  private readonly debounceMs: number;
  private readonly setT: (fn: () => void, ms: number) => unknown;
  private readonly clearT: (handle: unknown) => void;
  private inflight: Promise<void> = Promise.resolve();

  constructor(
    private readonly api: ApiClient,
    opts: NodeSpaceOptions = {},
  ) {
    this.thumbnailCount = opts.thumbnailCount ?? 100;
    this.debounceMs = opts.debounceMs ?? 150;
    this.setT = opts.setTimeoutImpl ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearT = opts.clearTimeoutImpl ?? ((h) => clearTimeout(h as never));
  }

  async load(): Promise<void> {
    const payload = await this.api.getAnchors();
    this.positions = payload.positions;
    this.anchors = payload.anchors;
    this.embeddingVersion++;
  }

  /** indices of the nodes that get full thumbnails */
  thumbnailNodes(): number[] {
    return farthestPointSubset(this.positions, this.thumbnailCount);
  }

  /**
   * Drag event stream: may fire per mouse-move. Only the latest target
   * position per node is sent, and only once the debounce window closes.
   */
  dragNode(node: number, to: Point): void {
    this.positions[node] = to; // optimistic ghost; replaced by the response
    this.pending = { ...(this.pending ?? this.anchors), [String(node)]: to };
    if (this.timer !== null) this.clearT(this.timer);
    this.timer = this.setT(() => {
      this.timer = null;
      void this.flush();
    }, this.debounceMs);
  }

  /** number of anchor PUTs currently scheduled or in flight */
  private async flush(): Promise<void> {
    if (this.pending === null) return;
    const body = this.pending;
    this.pending = null;
    const generation = ++this.requestGeneration;
    const run = async () => {
      const resp = await this.api.putAnchors(body);
      // latest-wins: a response from a superseded drag must not clobber
      // positions produced by a newer one
      if (generation > this.appliedGeneration) {
        this.appliedGeneration = generation;
        this.positions = resp.positions;
        this.anchors = resp.anchors;
        this.status = resp.status ?? "";
        this.embeddingVersion++;
      }
    };
    this.inflight = this.inflight.then(run, run);
    await this.inflight;
  }

  /** resolves when all scheduled anchor PUTs have been applied */
  async settle(): Promise<void> {
    while (this.timer !== null || this.pending !== null) {
      if (this.timer !== null) {
        this.clearT(this.timer);
        this.timer = null;
      }
      await this.flush();
    }
    await this.inflight;
  }

  async clearAnchor(node: number): Promise<void> {
    const next = { ...this.anchors };
    delete next[String(node)];
    const resp = await this.api.putAnchors(next);
    this.appliedGeneration = ++this.requestGeneration;
    this.positions = resp.positions;
    this.anchors = resp.anchors;
    this.embeddingVersion++;
  }
}
