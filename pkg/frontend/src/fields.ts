/**
 * Parser for the raw field payload the render endpoint returns with
 * format=field: ASCII magic "BLOBF1\n", then "{W} {H} {kind}\n", then
 * W*H little-endian float32 values, row-major.
 */

export type Field = {
  width: number;
  height: number;
  kind: string;
  values: Float32Array;
};

const MAGIC = 'BLOBF1\n';

export function parseField(bytes: Uint8Array): Field {
  const magic = new TextDecoder().decode(bytes.subarray(0, MAGIC.length));
  if (magic !== MAGIC) {
    throw new Error(`not a field payload (magic ${JSON.stringify(magic)})`);
  }
  let headerEnd = -1;
  for (let i = MAGIC.length; i < bytes.length; i++) {
    if (bytes[i] === 0x0a) {
      headerEnd = i;
      break;
    }
  }
  if (headerEnd < 0) throw new Error('field header line is unterminated');
  const header = new TextDecoder().decode(bytes.subarray(MAGIC.length, headerEnd));
  const parts = header.split(' ');
  if (parts.length !== 3) throw new Error(`malformed field header: ${JSON.stringify(header)}`);
  const width = Number(parts[0]);
  const height = Number(parts[1]);
  const kind = parts[2];
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new Error(`bad field dimensions ${parts[0]}x${parts[1]}`);
  }
  const body = bytes.subarray(headerEnd + 1);
  if (body.length !== width * height * 4) {
    throw new Error(`field body is ${body.length} bytes, expected ${width * height * 4}`);
  }
  // copy so the view is aligned regardless of the header's byte length
  const aligned = new Uint8Array(body);
  const values = new Float32Array(aligned.buffer, 0, width * height);
  return { width, height, kind, values };
}

export function fieldsEqual(a: Field, b: Field): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.values.length; i++) {
    if (a.values[i] !== b.values[i]) return false;
  }
  return true;
}
