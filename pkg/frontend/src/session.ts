/**
 * Editor session: a local mirror of one server scene plus the plumbing the
 * canvas needs — commit-with-precondition, stale-revision recovery, a
 * revision-keyed preview cache, and lossless scene export/import.
 *
 * The mirror is only ever assigned from server responses, so its revision
 * can never run ahead of the server's. Geometry changes the user is still
 * dragging live in an optimistic overlay, not in the mirror.
 */

import { ApiClient, StaleRevisionError } from './api';
import type { BlobJSON, EditOp, RenderParams, SceneCreate, SceneDoc } from './types';

export type CommitOutcome = {
  doc: SceneDoc;
  /** true when the first attempt hit 409 and the op was replayed after a refresh */
  replayed: boolean;
};

function canonicalBlob(b: BlobJSON): BlobJSON {
  return {
    id: b.id,
    ellipse: {
      cx: b.ellipse.cx,
      cy: b.ellipse.cy,
      a: b.ellipse.a,
      b: b.ellipse.b,
      theta: b.ellipse.theta,
    },
    feature: [...b.feature],
    label: b.label,
  };
}

export class EditorSession {
  readonly sceneId: string;
  private api: ApiClient;
  private mirror: SceneDoc | null = null;
  selectedBlobId: string | null = null;
  pendingOp: EditOp | null = null;
  private previewCache = new Map<string, Uint8Array>();
  /** overlay ellipse deltas while a gesture is in flight, keyed by blob id */
  overlay = new Map<string, { dx: number; dy: number; dtheta: number }>();

  constructor(api: ApiClient, sceneId: string) {
    this.api = api;
    this.sceneId = sceneId;
  }

  get revision(): number {
    if (!this.mirror) throw new Error('session has no scene loaded');
    return this.mirror.revision;
  }

  get scene(): SceneDoc {
    if (!this.mirror) throw new Error('session has no scene loaded');
    return this.mirror;
  }

  get loaded(): boolean {
    return this.mirror !== null;
  }

  private setMirror(doc: SceneDoc): SceneDoc {
    if (this.mirror && doc.revision < this.mirror.revision) {
      throw new Error(
        `server returned revision ${doc.revision} behind local mirror ${this.mirror.revision}`,
      );
    }
    this.mirror = doc;
    return doc;
  }

  async refresh(): Promise<SceneDoc> {
    return this.setMirror(await this.api.getScene(this.sceneId));
  }

  async create(body: SceneCreate): Promise<SceneDoc> {
    return this.setMirror(await this.api.createScene(this.sceneId, body));
  }

  /**
   * Commit one op with the mirror's revision as precondition. On a 409 the
   * mirror is refreshed and the op replayed once against the new revision;
   * pass replayOnStale=false to surface the conflict instead.
   */
  async commit(op: EditOp, replayOnStale: boolean = true): Promise<CommitOutcome> {
    if (!this.mirror) throw new Error('session has no scene loaded');
    this.pendingOp = op;
    try {
      const doc = await this.api.applyEdit(this.sceneId, op, this.mirror.revision);
      this.pendingOp = null;
      return { doc: this.setMirror(doc), replayed: false };
    } catch (err) {
      if (!(err instanceof StaleRevisionError)) {
        this.pendingOp = null;
        throw err;
      }
      await this.refresh();
      if (!replayOnStale) throw err;
      const doc = await this.api.applyEdit(this.sceneId, op, this.mirror.revision);
      this.pendingOp = null;
      return { doc: this.setMirror(doc), replayed: true };
    }
  }

  private previewKey(params: RenderParams): string {
    return [
      this.revision,
      params.kind,
      params.w ?? '',
      params.h ?? '',
      params.p ?? '',
      params.blob ?? '',
      params.format ?? 'png',
    ].join('|');
  }

  /**
   * Fetch a render for the mirror's revision, memoized: a (revision,
   * params) key is filled at most once and never overwritten.
   */
  async preview(params: RenderParams): Promise<Uint8Array> {
    const key = this.previewKey(params);
    const hit = this.previewCache.get(key);
    if (hit) return hit;
    const result = await this.api.render(this.sceneId, params);
    if (result.revision !== this.revision) {
      // scene moved between mirror update and render; don't poison the cache
      return result.bytes;
    }
    this.previewCache.set(key, result.bytes);
    return result.bytes;
  }

  get previewCacheSize(): number {
    return this.previewCache.size;
  }

  /** Canonical scene JSON (create/replace body shape), stable byte-for-byte. */
  exportScene(): string {
    const doc = this.scene;
    const body: SceneCreate = {
      width: doc.width,
      height: doc.height,
      confidence: doc.confidence,
      blobs: doc.blobs.map(canonicalBlob),
    };
    return JSON.stringify(body);
  }

  /** Create a scene from exported JSON and mirror the server's echo. */
  async importScene(json: string): Promise<SceneDoc> {
    const body = JSON.parse(json) as SceneCreate;
    return this.create(body);
  }

  /**
   * Depth reorder via the existing op vocabulary: remove the entry, then
   * add it back at the requested index (default frontmost). Two commits,
   * two revision bumps.
   */
  async bringToFront(blobId: string): Promise<SceneDoc> {
    const entry = this.scene.blobs.find((b) => b.id === blobId);
    if (!entry) throw new Error(`no blob ${blobId} in the scene`);
    const copy = canonicalBlob(entry);
    await this.commit({ kind: 'remove', target_id: blobId });
    const out = await this.commit({
      kind: 'add',
      entry: copy,
      index: this.scene.blobs.length,
    });
    return out.doc;
  }

  async addBlob(entry: BlobJSON, index?: number): Promise<SceneDoc> {
    const op: EditOp = index === undefined ? { kind: 'add', entry } : { kind: 'add', entry, index };
    return (await this.commit(op)).doc;
  }

  async removeBlob(blobId: string): Promise<SceneDoc> {
    const doc = (await this.commit({ kind: 'remove', target_id: blobId })).doc;
    if (this.selectedBlobId === blobId) this.selectedBlobId = null;
    return doc;
  }
}
