import { ApiError, type ApiClient } from "./api.js";
import type { BackwardPayload, ForwardPayload, Point } from "./types.js";

export interface ChatEntry {
  role: "user" | "assistant" | "error";
  text: string;
  /** forward answers carry the node selection to highlight */
  forward?: ForwardPayload;
  backward?: BackwardPayload;
}

/**
 * Chat-style panel for the two LLM pipelines. Forward queries select nodes
 * (drawn with the returned boundary); backward summarizes a polygon. The
 * exchange history is kept in view state.
 */
export class LlmPanel {
  history: ChatEntry[] = [];
  /** node ids highlighted by the latest forward answer */
  highlighted: number[] = [];

  constructor(private readonly api: ApiClient) {}

  async ask(query: string): Promise<void> {
    this.history.push({ role: "user", text: query });
    try {
      const fwd = await this.api.llmForward(query);
      this.highlighted = fwd.nodes;
      this.history.push({
        role: "assistant",
        text: `${fwd.nodes.length} nodes selected`,
        forward: fwd,
      });
    } catch (e) {
      const msg = e instanceof ApiError ? e.message : String(e);
      this.history.push({ role: "error", text: msg });
    }
  }

  async summarize(vertices: Point[], samples?: number): Promise<void> {
    try {
      const back = await this.api.llmBackward(vertices, samples);
      this.history.push({ role: "assistant", text: back.summary, backward: back });
    } catch (e) {
      const msg = e instanceof ApiError ? e.message : String(e);
      this.history.push({ role: "error", text: msg });
    }
  }
}
