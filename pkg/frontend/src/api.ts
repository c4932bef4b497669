/**
 * Minimal fetch client for the scene service.
 *
 * All methods reject with ApiError on non-2xx responses; a 409 on a
 * conditional edit becomes the StaleRevisionError subtype so callers can
 * implement refresh-and-replay without string matching.
 */

import type { EditOp, RenderParams, SceneCreate, SceneDoc } from './types';

export class ApiError extends Error {
  status: number;
  detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.status = status;
    this.detail = detail;
  }
}

export class StaleRevisionError extends ApiError {}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export type RenderResult = {
  bytes: Uint8Array;
  revision: number;
  contentType: string;
};

async function errorFrom(resp: Response): Promise<ApiError> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === 'string') detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  const cls = resp.status === 409 ? StaleRevisionError : ApiError;
  return new cls(resp.status, detail);
}

export class ApiClient {
  private baseUrl: string;
  private fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) throw await errorFrom(resp);
    return (await resp.json()) as T;
  }

  createScene(id: string, body: SceneCreate): Promise<SceneDoc> {
    return this.json<SceneDoc>(`/scenes/${id}`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  getScene(id: string): Promise<SceneDoc> {
    return this.json<SceneDoc>(`/scenes/${id}`);
  }

  replaceScene(id: string, body: SceneCreate): Promise<SceneDoc> {
    return this.json<SceneDoc>(`/scenes/${id}`, {
      method: 'PUT',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  async deleteScene(id: string): Promise<void> {
    const resp = await this.fetchFn(`${this.baseUrl}/scenes/${id}`, { method: 'DELETE' });
    if (!resp.ok) throw await errorFrom(resp);
  }

  /**
   * Apply one edit. `revision` is the optimistic-concurrency precondition:
   * the server rejects with 409 (StaleRevisionError) if the scene moved on.
   */
  applyEdit(id: string, op: EditOp, revision?: number): Promise<SceneDoc> {
    const body: { op: EditOp; revision?: number } = { op };
    if (revision !== undefined) body.revision = revision;
    return this.json<SceneDoc>(`/scenes/${id}/edit`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  async render(id: string, params: RenderParams): Promise<RenderResult> {
    const q = new URLSearchParams();
    q.set('kind', params.kind);
    if (params.w !== undefined) q.set('w', String(params.w));
    if (params.h !== undefined) q.set('h', String(params.h));
    if (params.p !== undefined) q.set('p', String(params.p));
    if (params.blob !== undefined) q.set('blob', params.blob);
    if (params.format !== undefined) q.set('format', params.format);
    const resp = await this.fetchFn(`${this.baseUrl}/scenes/${id}/render?${q.toString()}`);
    if (!resp.ok) throw await errorFrom(resp);
    const buf = await resp.arrayBuffer();
    return {
      bytes: new Uint8Array(buf),
      revision: Number(resp.headers.get('x-scene-revision') ?? -1),
      contentType: resp.headers.get('content-type') ?? '',
    };
  }

  async health(): Promise<boolean> {
    try {
      const resp = await this.fetchFn(`${this.baseUrl}/healthz`);
      return resp.ok;
    } catch {
      return false;
    }
  }
}
