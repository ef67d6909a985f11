/**
 * In-memory fake of the service HTTP API, exposed as a fetch-compatible
 * function. The backing store outlives individual clients, so "reload" in a
 * test means constructing a fresh ApiClient/store pair against the same
 * FakeService instance.
 */

import type { FetchLike } from "../src/api.js";
import type { AnnotationPayload, Point } from "../src/types.js";

export interface FakeServiceState {
  positions: Point[];
  anchors: Record<string, Point>;
  annotations: AnnotationPayload[];
  nextOrder: number;
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export class FakeService {
  state: FakeServiceState;
  requestLog: { method: string; path: string; body?: unknown }[] = [];
  /** optional per-request delay hook for ordering tests */
  delayFor: ((method: string, path: string) => Promise<void>) | null = null;

  constructor(positions: Point[]) {
    this.state = {
      positions: positions.map((p) => [...p] as Point),
      anchors: {},
      annotations: [],
      nextOrder: 0,
    };
  }

  /**
   * Re-embedding stand-in: anchored nodes sit exactly at their anchors and
   * every free node is shifted by the mean anchor displacement, so the test
   * can distinguish "positions came from the service response" from any
   * locally computed guess.
   */
  private reembed(anchors: Record<string, Point>): Point[] {
    const base = this.state.positions;
    let dx = 0;
    let dy = 0;
    let count = 0;
    for (const [key, target] of Object.entries(anchors)) {
      const i = Number(key);
      dx += target[0] - base[i][0];
      dy += target[1] - base[i][1];
      count++;
    }
    const shift: Point = count ? [dx / (4 * count), dy / (4 * count)] : [0, 0];
    return base.map((p, i) => {
      const anchored = anchors[String(i)];
      if (anchored) return [...anchored] as Point;
      return [p[0] + shift[0], p[1] + shift[1]];
    });
  }

  fetch: FetchLike = async (url, init) => {
    const method = (init?.method ?? "GET").toUpperCase();
    const path = url.replace(/^https?:\/\/[^/]+/, "").split("?")[0];
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.requestLog.push({ method, path, body });
    if (this.delayFor) await this.delayFor(method, path);

    if (method === "GET" && path === "/embedding/anchors") {
      return jsonResponse({
        anchors: this.state.anchors,
        positions: this.state.positions,
      });
    }
    if (method === "PUT" && path === "/embedding/anchors") {
      const anchors = body.anchors as Record<string, Point>;
      for (const key of Object.keys(anchors)) {
        const i = Number(key);
        if (!Number.isInteger(i) || i < 0 || i >= this.state.positions.length) {
          return jsonResponse({ code: "invalid", message: `node ${key} out of range` }, 422);
        }
      }
      this.state.positions = this.reembed(anchors);
      this.state.anchors = anchors;
      return jsonResponse({
        anchors: this.state.anchors,
        positions: this.state.positions,
        status: "ok",
      });
    }

    if (method === "GET" && path === "/annotations") {
      return jsonResponse(
        [...this.state.annotations].sort((a, b) => a.created_order - b.created_order),
      );
    }
    if (method === "POST" && path === "/annotations") {
      if ((body.vertices as Point[]).length < 3) {
        return jsonResponse({ code: "invalid", message: "need at least 3 vertices" }, 422);
      }
      const ann: AnnotationPayload = {
        id: body.id ?? `ann-${this.state.nextOrder}`,
        label: body.label,
        vertices: body.vertices,
        created_order: this.state.nextOrder++,
      };
      this.state.annotations.push(ann);
      return jsonResponse({ id: ann.id, created_order: ann.created_order });
    }
    const annMatch = path.match(/^\/annotations\/(.+)$/);
    if (annMatch) {
      const id = annMatch[1];
      const existing = this.state.annotations.find((a) => a.id === id);
      if (!existing) return jsonResponse({ code: "not_found", message: id }, 404);
      if (method === "PUT") {
        existing.label = body.label;
        existing.vertices = body.vertices;
        return jsonResponse({ id, created_order: existing.created_order });
      }
      if (method === "DELETE") {
        this.state.annotations = this.state.annotations.filter((a) => a.id !== id);
        return jsonResponse({ ok: true });
      }
    }

    if (method === "POST" && path === "/analysis/distribution") {
      // fixed tiny payload; tests only assert the request routing
      return jsonResponse({
        members: body.members,
        months: body.months ?? [],
        points: [],
        provenance: [],
        kde: {
          bandwidth: [0.1, 0.1],
          x: [0, 1],
          y: [0, 1],
          density: [[1]],
          contours: { "0.25": [], "0.5": [], "0.75": [] },
          thresholds: { "0.25": 0, "0.5": 0, "0.75": 0 },
        },
        breakdown: { fractions: {}, unannotated: 1 },
      });
    }

    if (method === "POST" && path === "/llm/forward") {
      if (typeof body.query !== "string" || !body.query.includes("test north")) {
        return jsonResponse({ code: "invalid", message: "could not parse question" }, 422);
      }
      return jsonResponse({ kind: "threshold_above", nodes: [1, 2], boundary: null });
    }

    return jsonResponse({ code: "not_found", message: path }, 404);
  };
}
