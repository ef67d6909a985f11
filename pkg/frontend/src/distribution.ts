import type { KdePayload, Point } from "./types.js";

/** the three highest-density-region mass fractions, innermost first */
export const CONTOUR_LEVELS = ["0.25", "0.5", "0.75"] as const;

/** fill shades: darkest for the densest (0.25-mass) region */
export const CONTOUR_FILLS: Record<(typeof CONTOUR_LEVELS)[number], string> = {
  "0.25": "#1b7837",
  "0.5": "#7fbf7b",
  "0.75": "#d9f0d3",
};

export interface ContourLevel {
  level: (typeof CONTOUR_LEVELS)[number];
  fill: string;
  polygons: Point[][];
}

/**
 * Structured render model of a distribution view: the three contour levels
 * exactly as served, outermost drawn first so the darker inner regions
 * paint on top.
 */
export function contourLevels(kde: KdePayload): ContourLevel[] {
  return [...CONTOUR_LEVELS]
    .reverse()
    .map((level) => ({
      level,
      fill: CONTOUR_FILLS[level],
      polygons: kde.contours[level] ?? [],
    }));
}

function pathOf(poly: Point[]): string {
  const parts = poly.map(([x, y], i) => `${i === 0 ? "M" : "L"}${x},${y}`);
  return parts.join(" ") + " Z";
}

/** SVG markup for the distribution view (contours only; points overlaid elsewhere) */
export function renderDistributionSvg(kde: KdePayload, width = 480, height = 480): string {
  const x0 = kde.x[0];
  const x1 = kde.x[kde.x.length - 1];
  const y0 = kde.y[0];
  const y1 = kde.y[kde.y.length - 1];
  const sx = (x: number) => ((x - x0) / (x1 - x0)) * width;
  const sy = (y: number) => height - ((y - y0) / (y1 - y0)) * height;
  const groups = contourLevels(kde)
    .map((lvl) => {
      const paths = lvl.polygons
        .map((poly) => pathOf(poly.map(([x, y]) => [sx(x), sy(y)] as Point)))
        .map((d) => `<path d="${d}" fill="${lvl.fill}" stroke="#333" stroke-width="1"/>`)
        .join("");
      return `<g data-level="${lvl.level}">${paths}</g>`;
    })
    .join("");
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">${groups}</svg>`;
}
