/**
 * Canvas editor: draws the server-rendered preview underneath the 5-DoF
 * ellipse overlays, and turns pointer interaction into gestures.
 *
 * All geometry math the server also does stays on the server; the overlay
 * is purely cosmetic feedback until the gesture commits.
 */

import { gestureToOp, GestureKind, Point } from './gestures';
import { EditorSession } from './session';
import type { BlobJSON } from './types';

const HANDLE_PX = 8;
const ROTATE_OFFSET_PX = 28;

type ActiveGesture = {
  kind: GestureKind;
  targetId: string;
  start: Point;
  center: Point;
  theta: number;
};

export class BlobEditor {
  private canvas: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D;
  private session: EditorSession;
  private active: ActiveGesture | null = null;
  private previewUrl: string | null = null;
  private previewImg: HTMLImageElement | null = null;
  onStatus: (line: string) => void = () => undefined;

  constructor(canvas: HTMLCanvasElement, session: EditorSession) {
    this.canvas = canvas;
    const ctx = canvas.getContext('2d');
    if (!ctx) throw new Error('2d canvas context unavailable');
    this.ctx = ctx;
    this.session = session;
    canvas.addEventListener('pointerdown', (ev) => this.onDown(ev));
    canvas.addEventListener('pointermove', (ev) => this.onMove(ev));
    canvas.addEventListener('pointerup', (ev) => void this.onUp(ev));
  }

  private toCanvas(b: BlobJSON): { cx: number; cy: number; rx: number; ry: number } {
    return {
      cx: b.ellipse.cx * this.canvas.width,
      cy: b.ellipse.cy * this.canvas.height,
      rx: b.ellipse.a * this.canvas.width,
      ry: b.ellipse.b * this.canvas.height,
    };
  }

  private point(ev: PointerEvent): Point {
    const rect = this.canvas.getBoundingClientRect();
    return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
  }

  private hitBlob(p: Point): BlobJSON | null {
    // front-to-back so the visually topmost blob wins
    const blobs = this.session.scene.blobs;
    for (let i = blobs.length - 1; i >= 0; i--) {
      const b = blobs[i];
      const { cx, cy, rx, ry } = this.toCanvas(b);
      const cos = Math.cos(b.ellipse.theta);
      const sin = Math.sin(b.ellipse.theta);
      const u = ((p.x - cx) * cos + (p.y - cy) * sin) / rx;
      const v = (-(p.x - cx) * sin + (p.y - cy) * cos) / ry;
      if (u * u + v * v <= 1) return b;
    }
    return null;
  }

  private handlePositions(b: BlobJSON): { scale: Point; rotate: Point; center: Point } {
    const { cx, cy, rx } = this.toCanvas(b);
    const cos = Math.cos(b.ellipse.theta);
    const sin = Math.sin(b.ellipse.theta);
    return {
      center: { x: cx, y: cy },
      scale: { x: cx + rx * cos, y: cy + rx * sin },
      rotate: { x: cx + (rx + ROTATE_OFFSET_PX) * cos, y: cy + (rx + ROTATE_OFFSET_PX) * sin },
    };
  }

  private onDown(ev: PointerEvent): void {
    if (!this.session.loaded) return;
    const p = this.point(ev);
    const selected = this.session.scene.blobs.find((b) => b.id === this.session.selectedBlobId);
    if (selected) {
      const h = this.handlePositions(selected);
      const gestureAt = (target: Point, kind: GestureKind): boolean => {
        if (Math.hypot(p.x - target.x, p.y - target.y) <= HANDLE_PX) {
          this.active = {
            kind,
            targetId: selected.id,
            start: p,
            center: h.center,
            theta: selected.ellipse.theta,
          };
          return true;
        }
        return false;
      };
      if (gestureAt(h.rotate, 'rotate-handle') || gestureAt(h.scale, 'scale-handle')) return;
    }
    const hit = this.hitBlob(p);
    this.session.selectedBlobId = hit ? hit.id : null;
    if (hit) {
      const h = this.handlePositions(hit);
      this.active = {
        kind: 'drag',
        targetId: hit.id,
        start: p,
        center: h.center,
        theta: hit.ellipse.theta,
      };
    }
    this.draw();
  }

  private onMove(ev: PointerEvent): void {
    if (!this.active) return;
    const p = this.point(ev);
    if (this.active.kind === 'drag') {
      this.session.overlay.set(this.active.targetId, {
        dx: (p.x - this.active.start.x) / this.canvas.width,
        dy: (p.y - this.active.start.y) / this.canvas.height,
        dtheta: 0,
      });
      this.draw();
    }
  }

  private async onUp(ev: PointerEvent): Promise<void> {
    const gesture = this.active;
    this.active = null;
    if (!gesture) return;
    this.session.overlay.delete(gesture.targetId);
    const op = gestureToOp({
      kind: gesture.kind,
      targetId: gesture.targetId,
      start: gesture.start,
      end: this.point(ev),
      center: gesture.center,
      theta: gesture.theta,
      canvasWidth: this.canvas.width,
      canvasHeight: this.canvas.height,
    });
    if (!op) {
      this.draw();
      return;
    }
    try {
      const outcome = await this.session.commit(op);
      this.onStatus(
        `${op.kind} -> revision ${outcome.doc.revision}${outcome.replayed ? ' (replayed)' : ''}`,
      );
      await this.refreshPreview();
    } catch (err) {
      this.onStatus(String(err));
    }
    this.draw();
  }

  /** Pull the composed preview for the current revision and repaint. */
  async refreshPreview(): Promise<void> {
    const bytes = await this.session.preview({
      kind: 'composed',
      w: this.canvas.width,
      h: this.canvas.height,
    });
    const copy = new Uint8Array(bytes);
    const blob = new Blob([copy.buffer as ArrayBuffer], { type: 'image/png' });
    const url = URL.createObjectURL(blob);
    const img = new Image();
    await new Promise<void>((resolve, reject) => {
      img.onload = () => resolve();
      img.onerror = () => reject(new Error('preview decode failed'));
      img.src = url;
    });
    if (this.previewUrl) URL.revokeObjectURL(this.previewUrl);
    this.previewUrl = url;
    this.previewImg = img;
    this.draw();
  }

  draw(): void {
    const { width, height } = this.canvas;
    this.ctx.clearRect(0, 0, width, height);
    if (this.previewImg) this.ctx.drawImage(this.previewImg, 0, 0, width, height);
    if (!this.session.loaded) return;
    for (const b of this.session.scene.blobs) {
      const over = this.session.overlay.get(b.id);
      const { cx, cy, rx, ry } = this.toCanvas(b);
      const x = cx + (over ? over.dx * width : 0);
      const y = cy + (over ? over.dy * height : 0);
      const theta = b.ellipse.theta + (over ? over.dtheta : 0);
      const selected = b.id === this.session.selectedBlobId;
      this.ctx.save();
      this.ctx.translate(x, y);
      this.ctx.rotate(theta);
      this.ctx.strokeStyle = selected ? '#ff9500' : '#4da3ff';
      this.ctx.lineWidth = selected ? 2 : 1;
      this.ctx.beginPath();
      this.ctx.ellipse(0, 0, rx, ry, 0, 0, 2 * Math.PI);
      this.ctx.stroke();
      if (selected) {
        this.ctx.fillStyle = '#ff9500';
        this.ctx.fillRect(rx - HANDLE_PX / 2, -HANDLE_PX / 2, HANDLE_PX, HANDLE_PX);
        this.ctx.beginPath();
        this.ctx.arc(rx + ROTATE_OFFSET_PX, 0, HANDLE_PX / 2, 0, 2 * Math.PI);
        this.ctx.fill();
      }
      this.ctx.restore();
    }
  }
}
