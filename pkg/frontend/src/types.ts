/**
 * Wire types for the blob scene service.
 *
 * These mirror the JSON schemas published by the server under /schema;
 * the editor never invents fields of its own on the wire.
 */

export type EllipseJSON = {
  cx: number;
  cy: number;
  a: number;
  b: number;
  theta: number;
};

export type BlobJSON = {
  id: string;
  ellipse: EllipseJSON;
  feature: number[];
  label: string;
};

/** Scene document as the server returns it. Blob order is depth order: index 0 backmost. */
export type SceneDoc = {
  id: string;
  revision: number;
  width: number;
  height: number;
  confidence: number;
  blobs: BlobJSON[];
};

/** Body for scene create/replace. */
export type SceneCreate = {
  width: number;
  height: number;
  confidence: number;
  blobs: BlobJSON[];
};

export type TranslateOp = { kind: 'translate'; target_id: string; dx: number; dy: number };
export type ScaleOp = { kind: 'scale'; target_id: string; sa: number; sb: number };
export type RotateOp = { kind: 'rotate'; target_id: string; dtheta: number };
export type RemoveOp = { kind: 'remove'; target_id: string };
export type AddOp = {
  kind: 'add';
  entry: { id: string; ellipse: EllipseJSON; feature?: number[]; label?: string };
  index?: number;
};
export type ReplaceOp = {
  kind: 'replace';
  target_id: string;
  ellipse?: EllipseJSON;
  feature?: number[];
};

export type EditOp = TranslateOp | ScaleOp | RotateOp | RemoveOp | AddOp | ReplaceOp;

export type RenderKind = 'opacity' | 'composed' | 'mask' | 'feature-preview';

export type RenderParams = {
  kind: RenderKind;
  w?: number;
  h?: number;
  p?: number;
  blob?: string;
  format?: 'png' | 'field';
};
