// Projection scatter geometry: fit the 2-d embedding into a pixel box
// preserving aspect ratio, and hit-test clicks to the nearest point.

export interface Viewport {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export function fitViewport(
  points: [number, number][],
  width: number,
  height: number,
  pad = 16
): Viewport {
  if (points.length === 0) return { scale: 1, offsetX: width / 2, offsetY: height / 2 };
  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const [x, y] of points) {
    if (x < minX) minX = x;
    if (x > maxX) maxX = x;
    if (y < minY) minY = y;
    if (y > maxY) maxY = y;
  }
  const spanX = Math.max(maxX - minX, 1e-12);
  const spanY = Math.max(maxY - minY, 1e-12);
  const scale = Math.min((width - 2 * pad) / spanX, (height - 2 * pad) / spanY);
  // center the data box inside the pixel box
  const cx = (minX + maxX) / 2;
  const cy = (minY + maxY) / 2;
  return {
    scale,
    offsetX: width / 2 - cx * scale,
    offsetY: height / 2 + cy * scale,
  };
}

// Screen y grows downward; data y grows upward.
export function toPixel(view: Viewport, p: [number, number]): [number, number] {
  return [view.offsetX + p[0] * view.scale, view.offsetY - p[1] * view.scale];
}

export function nearestPoint(
  view: Viewport,
  points: [number, number][],
  px: number,
  py: number,
  maxDistance = 12
): number | null {
  let best = -1;
  let bestD2 = maxDistance * maxDistance;
  points.forEach((p, i) => {
    const [x, y] = toPixel(view, p);
    const d2 = (x - px) * (x - px) + (y - py) * (y - py);
    // ties keep the earlier point so hits are stable
    if (best === -1 ? d2 <= bestD2 : d2 < bestD2) {
      best = i;
      bestD2 = d2;
    }
  });
  return best >= 0 ? best : null;
}
