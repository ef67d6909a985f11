import type {
  AnchorsPayload,
  AnnotationPayload,
  ApiErrorBody,
  BackwardPayload,
  DistributionPayload,
  ForwardPayload,
  JobPayload,
  NodesPayload,
  Point,
  TimelinePayload,
  TransitionsPayload,
  VectorFieldPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin typed client over the service HTTP API. All analysis numbers the UI
 * renders come through this client; the UI computes nothing itself.
 */
export class ApiClient {
  constructor(
    private readonly base = "",
    private readonly fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const resp = await this.fetchImpl(this.base + path, init);
    if (!resp.ok) {
      let err: ApiErrorBody = { code: "unknown", message: `HTTP ${resp.status}` };
      try {
        err = (await resp.json()) as ApiErrorBody;
      } catch {
        /* non-JSON error body; keep the fallback */
      }
      throw new ApiError(resp.status, err.code, err.message);
    }
    return (await resp.json()) as T;
  }

  getNodes(): Promise<NodesPayload> {
    return this.request("GET", "/som/nodes");
  }

  getNode(node: number): Promise<{ node: number; pattern: number[] }> {
    return this.request("GET", `/som/node/${node}`);
  }

  getAnchors(): Promise<AnchorsPayload> {
    return this.request("GET", "/embedding/anchors");
  }

  putAnchors(anchors: Record<string, Point>): Promise<AnchorsPayload> {
    return this.request("PUT", "/embedding/anchors", { anchors });
  }

  listAnnotations(): Promise<AnnotationPayload[]> {
    return this.request("GET", "/annotations");
  }

  createAnnotation(label: string, vertices: Point[], id?: string) {
    return this.request<{ id: string; created_order: number }>("POST", "/annotations", {
      label,
      vertices,
      id,
    });
  }

  updateAnnotation(id: string, label: string, vertices: Point[]) {
    return this.request<{ id: string; created_order: number }>(
      "PUT",
      `/annotations/${id}`,
      { label, vertices },
    );
  }

  deleteAnnotation(id: string): Promise<{ ok: boolean }> {
    return this.request("DELETE", `/annotations/${id}`);
  }

  getJob(id: string): Promise<JobPayload> {
    return this.request("GET", `/jobs/${id}`);
  }

  distribution(req: {
    members: string[];
    months?: number[] | null;
    grid_res?: number;
  }): Promise<DistributionPayload> {
    return this.request("POST", "/analysis/distribution", req);
  }

  vectorField(req: {
    members_a: string[];
    members_b: string[];
    months?: number[] | null;
    k?: number;
    n?: number;
    seed?: number;
  }): Promise<VectorFieldPayload> {
    return this.request("POST", "/analysis/vector-field", req);
  }

  transitions(req: {
    members_a: string[];
    members_b: string[];
    months?: number[] | null;
    k?: number;
    seed?: number;
  }): Promise<TransitionsPayload> {
    return this.request("POST", "/analysis/transitions", req);
  }

  timelineRuns(params: { months: string; min_cluster_size?: number }): Promise<TimelinePayload> {
    const q = new URLSearchParams();
    q.set("months", params.months);
    if (params.min_cluster_size !== undefined) {
      q.set("min_cluster_size", String(params.min_cluster_size));
    }
    return this.request("GET", `/analysis/timeline/runs?${q.toString()}`);
  }

  llmForward(query: string): Promise<ForwardPayload> {
    return this.request("POST", "/llm/forward", { query });
  }

  llmBackward(vertices: Point[], samples?: number): Promise<BackwardPayload> {
    return this.request("POST", "/llm/backward", { vertices, samples });
  }
}
