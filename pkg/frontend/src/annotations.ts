import type { ApiClient } from "./api.js";
import type { AnnotationPayload, Point } from "./types.js";

/**
 * Client-side mirror of the server's annotation list. All mutations go
 * through the HTTP API and the local list is refreshed from the server's
 * answer, so a reload (new store instance) sees exactly the same state.
 */
export class AnnotationStore {
  annotations: AnnotationPayload[] = [];
  /** bumps on every edit; analysis views re-request when it changes */
  annotationVersion = 0;

  constructor(private readonly api: ApiClient) {}

  async load(): Promise<void> {
    this.annotations = await this.api.listAnnotations();
    this.annotationVersion++;
  }

  get(id: string): AnnotationPayload | undefined {
    return this.annotations.find((a) => a.id === id);
  }

  async create(label: string, vertices: Point[]): Promise<string> {
    const created = await this.api.createAnnotation(label, vertices);
    await this.load();
    return created.id;
  }

  async update(id: string, label: string, vertices: Point[]): Promise<void> {
    await this.api.updateAnnotation(id, label, vertices);
    await this.load();
  }

  async remove(id: string): Promise<void> {
    await this.api.deleteAnnotation(id);
    await this.load();
  }
}
