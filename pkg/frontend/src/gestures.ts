/**
 * Pure gesture -> edit op mapping.
 *
 * Every function takes canvas-pixel inputs and returns exactly one edit op
 * in normalized scene units, or null when the gesture is below the dead
 * zone. No geometry is mutated here; committing is the session's job.
 */

import type { EditOp, RotateOp, ScaleOp, TranslateOp } from './types';

export type Point = { x: number; y: number };

export const DEAD_ZONE_PX = 3;

function dist(a: Point, b: Point): number {
  return Math.hypot(b.x - a.x, b.y - a.y);
}

/**
 * Drag on a selected blob's body: pixel delta scaled by the canvas size
 * into the unit scene frame.
 */
export function dragToTranslate(
  targetId: string,
  start: Point,
  end: Point,
  canvasWidth: number,
  canvasHeight: number,
  deadZonePx: number = DEAD_ZONE_PX,
): TranslateOp | null {
  if (dist(start, end) < deadZonePx) return null;
  return {
    kind: 'translate',
    target_id: targetId,
    dx: (end.x - start.x) / canvasWidth,
    dy: (end.y - start.y) / canvasHeight,
  };
}

/**
 * Drag on a corner handle: per-axis ratios measured in the ellipse frame
 * (theta is the blob's current orientation). Pulling a handle on the major
 * axis to twice its distance doubles `sa` and leaves `sb` at 1.
 */
export function handleToScale(
  targetId: string,
  center: Point,
  start: Point,
  end: Point,
  theta: number,
  deadZonePx: number = DEAD_ZONE_PX,
): ScaleOp | null {
  if (dist(start, end) < deadZonePx) return null;
  const cos = Math.cos(theta);
  const sin = Math.sin(theta);
  const startA = (start.x - center.x) * cos + (start.y - center.y) * sin;
  const startB = -(start.x - center.x) * sin + (start.y - center.y) * cos;
  const endA = (end.x - center.x) * cos + (end.y - center.y) * sin;
  const endB = -(end.x - center.x) * sin + (end.y - center.y) * cos;
  // an axis the handle doesn't reach along cannot be inferred; leave it alone
  const sa = Math.abs(startA) < 1e-9 ? 1 : Math.abs(endA) / Math.abs(startA);
  const sb = Math.abs(startB) < 1e-9 ? 1 : Math.abs(endB) / Math.abs(startB);
  if (sa <= 0 || sb <= 0) return null;
  return { kind: 'scale', target_id: targetId, sa, sb };
}

/**
 * Drag on the rotation handle: signed angle swept around the center.
 * Folded into (-pi, pi] so a short clockwise drag never shows up as a
 * near-full counterclockwise turn.
 */
export function handleToRotate(
  targetId: string,
  center: Point,
  start: Point,
  end: Point,
  deadZonePx: number = DEAD_ZONE_PX,
): RotateOp | null {
  if (dist(start, end) < deadZonePx) return null;
  let dtheta =
    Math.atan2(end.y - center.y, end.x - center.x) -
    Math.atan2(start.y - center.y, start.x - center.x);
  while (dtheta <= -Math.PI) dtheta += 2 * Math.PI;
  while (dtheta > Math.PI) dtheta -= 2 * Math.PI;
  if (dtheta === 0) return null;
  return { kind: 'rotate', target_id: targetId, dtheta };
}

export type GestureKind = 'drag' | 'scale-handle' | 'rotate-handle';

export type Gesture = {
  kind: GestureKind;
  targetId: string;
  start: Point;
  end: Point;
  center: Point;
  theta: number;
  canvasWidth: number;
  canvasHeight: number;
};

/** One gesture in, at most one op out. */
export function gestureToOp(g: Gesture): EditOp | null {
  switch (g.kind) {
    case 'drag':
      return dragToTranslate(g.targetId, g.start, g.end, g.canvasWidth, g.canvasHeight);
    case 'scale-handle':
      return handleToScale(g.targetId, g.center, g.start, g.end, g.theta);
    case 'rotate-handle':
      return handleToRotate(g.targetId, g.center, g.start, g.end);
  }
}
