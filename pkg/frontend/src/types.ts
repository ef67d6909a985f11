/** Wire types for the ensomap HTTP API. */

export type Point = [number, number];

export interface NodesPayload {
  rows: number;
  cols: number;
  num_cells: number;
  node_means: number[];
  positions?: Point[];
  anchors?: Record<string, Point>;
}

export interface AnchorsPayload {
  anchors: Record<string, Point>;
  positions: Point[];
  status?: string;
}

export interface AnnotationPayload {
  id: string;
  label: string;
  vertices: Point[];
  created_order: number;
}

export interface KdePayload {
  bandwidth: [number, number];
  x: number[];
  y: number[];
  density: number[][];
  /** keys are the mass fractions "0.25" | "0.5" | "0.75" */
  contours: Record<string, Point[][]>;
  thresholds: Record<string, number>;
}

export interface DistributionPayload {
  members: string[];
  months: number[];
  points: Point[];
  provenance: { member: number; year: number; month: number }[];
  kde: KdePayload;
  breakdown: { fractions: Record<string, number>; unannotated: number };
}

export interface VectorFieldPayload {
  origin: Point;
  extent: Point;
  n: number;
  vectors: Point[][];
  support: boolean[][];
}

export interface TransitionsPayload {
  regions: string[];
  flows: number[][];
}

export interface TimelineCluster {
  id: number;
  position: number;
  mean_anomaly: number;
  entities: number[];
  noise_singleton: boolean;
}

export interface TimelinePayload {
  months: number[];
  entities: string[];
  clusters: Record<string, TimelineCluster[]>;
  /** per entity label: sequence of [month, cluster_id] */
  lines: Record<string, [number, number][]>;
}

export interface ForwardPayload {
  kind: string;
  nodes: number[];
  boundary: Point[] | null;
}

export interface BackwardPayload {
  summary: string;
  nodes: number[];
  buckets: ({ node: number } & Record<string, number>)[];
}

export interface JobPayload {
  id: string;
  state: "running" | "done" | "failed" | "cancelled";
  progress: number;
  error?: string | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
