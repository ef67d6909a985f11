export * from "./types.js";
export { ApiClient, ApiError, type FetchLike } from "./api.js";
export { NodeSpaceEditor, farthestPointSubset } from "./nodeSpace.js";
export { AnnotationStore } from "./annotations.js";
export {
  CONTOUR_FILLS,
  CONTOUR_LEVELS,
  contourLevels,
  renderDistributionSvg,
  type ContourLevel,
} from "./distribution.js";
export { CircuitDiagram, type ClusterRef } from "./circuit.js";
export { LlmPanel, type ChatEntry } from "./llmPanel.js";
export { pointInPolygon, polygonCentroid } from "./geometry.js";
