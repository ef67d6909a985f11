import type { Point } from "./types.js";

/** even-odd ray casting; boundary points count as inside */
export function pointInPolygon(p: Point, ring: Point[]): boolean {
  const [px, py] = p;
  const n = ring.length;
  let inside = false;
  for (let i = 0, j = n - 1; i < n; j = i++) {
    const [xi, yi] = ring[i];
    const [xj, yj] = ring[j];
    // on-segment check
    const cross = (xj - xi) * (py - yi) - (yj - yi) * (px - xi);
    const dot = (px - xi) * (px - xj) + (py - yi) * (py - yj);
    if (Math.abs(cross) < 1e-12 && dot <= 1e-12) return true;
    if (yi > py !== yj > py && px < ((xj - xi) * (py - yi)) / (yj - yi) + xi) {
      inside = !inside;
    }
  }
  return inside;
}

export function polygonCentroid(ring: Point[]): Point {
  let sx = 0;
  let sy = 0;
  for (const [x, y] of ring) {
    sx += x;
    sy += y;
  }
  return [sx / ring.length, sy / ring.length];
}
