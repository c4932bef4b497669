import { describe, expect, it } from 'vitest';

import {
  dragToTranslate,
  gestureToOp,
  handleToRotate,
  handleToScale,
} from '../src/gestures';

describe('dragToTranslate', () => {
  it('maps a pixel drag to normalized scene offsets', () => {
    const op = dragToTranslate('b1', { x: 10, y: 50 }, { x: 50, y: 30 }, 400, 200);
    expect(op).toEqual({ kind: 'translate', target_id: 'b1', dx: 0.1, dy: -0.1 });
  });

  it('emits nothing for a zero drag', () => {
    expect(dragToTranslate('b1', { x: 10, y: 10 }, { x: 10, y: 10 }, 400, 200)).toBeNull();
  });

  it('emits nothing below the dead zone', () => {
    expect(dragToTranslate('b1', { x: 10, y: 10 }, { x: 12, y: 11 }, 400, 200)).toBeNull();
  });

  it('emits once the dead zone is crossed', () => {
    const op = dragToTranslate('b1', { x: 0, y: 0 }, { x: 4, y: 0 }, 400, 200);
    expect(op).toEqual({ kind: 'translate', target_id: 'b1', dx: 0.01, dy: 0 });
  });
});

describe('handleToScale', () => {
  it('doubling the handle distance on the major axis gives sa=2, sb=1', () => {
    const op = handleToScale(
      'b1',
      { x: 100, y: 100 },
      { x: 150, y: 100 },
      { x: 200, y: 100 },
      0,
    );
    expect(op).toEqual({ kind: 'scale', target_id: 'b1', sa: 2, sb: 1 });
  });

  it('halving the distance on the minor axis gives sb=0.5', () => {
    const op = handleToScale(
      'b1',
      { x: 100, y: 100 },
      { x: 100, y: 180 },
      { x: 100, y: 140 },
      0,
    );
    expect(op).toEqual({ kind: 'scale', target_id: 'b1', sa: 1, sb: 0.5 });
  });

  it('measures ratios in the rotated ellipse frame', () => {
    const theta = Math.PI / 2;
    // the ellipse's major axis points along +y; a drag outward along y is a pure sa change
    const op = handleToScale(
      'b1',
      { x: 0, y: 0 },
      { x: 0, y: 50 },
      { x: 0, y: 150 },
      theta,
    );
    expect(op?.kind).toBe('scale');
    expect(op?.sa).toBeCloseTo(3, 12);
    expect(op?.sb).toBe(1);
  });

  it('respects the dead zone', () => {
    expect(
      handleToScale('b1', { x: 0, y: 0 }, { x: 50, y: 0 }, { x: 51, y: 0 }, 0),
    ).toBeNull();
  });
});

describe('handleToRotate', () => {
  it('a 30 degree sweep emits dtheta=pi/6', () => {
    const r = 100;
    const end = { x: r * Math.cos(Math.PI / 6), y: r * Math.sin(Math.PI / 6) };
    const op = handleToRotate('b1', { x: 0, y: 0 }, { x: r, y: 0 }, end);
    expect(op?.kind).toBe('rotate');
    expect(op?.target_id).toBe('b1');
    expect(op?.dtheta).toBeCloseTo(Math.PI / 6, 12);
  });

  it('folds the sweep into (-pi, pi]', () => {
    // 170deg -> 190deg is a 20deg turn, not a -340deg one
    const at = (deg: number) => ({
      x: 100 * Math.cos((deg * Math.PI) / 180),
      y: 100 * Math.sin((deg * Math.PI) / 180),
    });
    const op = handleToRotate('b1', { x: 0, y: 0 }, at(170), at(190));
    expect(op?.dtheta).toBeCloseTo((20 * Math.PI) / 180, 12);
  });

  it('clockwise sweeps come out negative', () => {
    const op = handleToRotate('b1', { x: 0, y: 0 }, { x: 0, y: 100 }, { x: 100, y: 0 });
    expect(op?.dtheta).toBeCloseTo(-Math.PI / 2, 12);
  });

  it('respects the dead zone', () => {
    expect(
      handleToRotate('b1', { x: 0, y: 0 }, { x: 100, y: 0 }, { x: 100, y: 1 }),
    ).toBeNull();
  });
});

describe('gestureToOp', () => {
  const base = {
    targetId: 'b9',
    center: { x: 100, y: 100 },
    theta: 0,
    canvasWidth: 400,
    canvasHeight: 400,
  };

  it('routes each gesture kind to exactly one op', () => {
    expect(
      gestureToOp({ ...base, kind: 'drag', start: { x: 0, y: 0 }, end: { x: 40, y: 0 } }),
    ).toEqual({ kind: 'translate', target_id: 'b9', dx: 0.1, dy: 0 });
    expect(
      gestureToOp({
        ...base,
        kind: 'scale-handle',
        start: { x: 150, y: 100 },
        end: { x: 200, y: 100 },
      }),
    ).toEqual({ kind: 'scale', target_id: 'b9', sa: 2, sb: 1 });
    const rot = gestureToOp({
      ...base,
      kind: 'rotate-handle',
      start: { x: 200, y: 100 },
      end: { x: 100, y: 200 },
    });
    expect(rot?.kind).toBe('rotate');
  });

  it('returns null inside the dead zone for every kind', () => {
    for (const kind of ['drag', 'scale-handle', 'rotate-handle'] as const) {
      expect(
        gestureToOp({ ...base, kind, start: { x: 150, y: 100 }, end: { x: 150, y: 100 } }),
      ).toBeNull();
    }
  });
});
