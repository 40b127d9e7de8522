/**
 * Wire protocol types and codecs.
 *
 * Newline-delimited UTF-8 JSON. The server speaks first with a handshake
 * line, then answers each request line with exactly one response line.
 * Floats cross as shortest round-trip decimal text, so every double
 * survives the trip bit for bit.
 */

export interface Handshake {
  melime_bridge: 1;
  task: 'regression' | 'classification';
  n_features: number;
  classes?: string[];
}

export interface PredictRequest {
  id: number;
  x: number[][];
}

export type PredictResponse =
  | { id: number; y: number[][] }
  | { id: number | null; error: string };

/** A request that could not be honored; id is null when unrecoverable. */
export class RequestError extends Error {
  constructor(readonly id: number | null, message: string) {
    super(message);
  }
}

/** Parse one request line, checking shape against the declared width. */
export function decodeRequest(line: string, nFeatures: number): PredictRequest {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch (err) {
    throw new RequestError(null, `unreadable request: ${(err as Error).message}`);
  }
  if (typeof doc !== 'object' || doc === null || Array.isArray(doc)) {
    throw new RequestError(null, 'request must be a JSON object');
  }
  const { id, x } = doc as { id?: unknown; x?: unknown };
  const rid = typeof id === 'number' && Number.isInteger(id) ? id : null;
  if (rid === null) {
    throw new RequestError(null, 'request id must be an integer');
  }
  if (!Array.isArray(x) || x.length === 0) {
    throw new RequestError(rid, 'x must be a non-empty list of rows');
  }
  for (const row of x) {
    if (!Array.isArray(row) || row.length !== nFeatures) {
      throw new RequestError(rid, `each row of x must hold ${nFeatures} values`);
    }
    for (const v of row) {
      if (typeof v !== 'number' || !Number.isFinite(v)) {
        throw new RequestError(rid, 'x must contain only finite numbers');
      }
    }
  }
  return { id: rid, x: x as number[][] };
}

// JSON.stringify prints the sign-less "0" for negative zero; spelling it
// out keeps the echo of any double exact.
function numberText(v: number): string {
  if (Object.is(v, -0)) return '-0.0';
  return JSON.stringify(v);
}

/** Encode a response line; output floats keep shortest round-trip form. */
export function encodeResponse(res: PredictResponse): string {
  if ('error' in res) {
    return JSON.stringify({ id: res.id, error: res.error });
  }
  const rows = res.y.map((row) => '[' + row.map(numberText).join(',') + ']');
  return `{"id":${res.id},"y":[${rows.join(',')}]}`;
}

export function encodeHandshake(h: Handshake): string {
  return JSON.stringify(h);
}
