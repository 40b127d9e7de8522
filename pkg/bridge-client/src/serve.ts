/**
 * The serving loop: handshake first, then one response line per request
 * line, in request order. A bad request gets an error line, never a
 * crash; the next request is served normally. EOF ends the loop.
 */

import * as net from 'node:net';
import * as readline from 'node:readline';
import {
  Handshake,
  PredictResponse,
  RequestError,
  decodeRequest,
  encodeHandshake,
  encodeResponse,
} from './protocol';
import { ServedModel, validateModel } from './models';

export interface Transport {
  lines: AsyncIterable<string>;
  write(line: string): void;
  close(): void;
}

export function handleRequest(model: ServedModel, line: string): PredictResponse {
  let id: number;
  let x: number[][];
  try {
    ({ id, x } = decodeRequest(line, model.nFeatures));
  } catch (err) {
    if (err instanceof RequestError) return { id: err.id, error: err.message };
    throw err;
  }
  let y: number[][];
  try {
    y = model.predict(x);
  } catch (err) {
    return { id, error: `model failure: ${(err as Error).message}` };
  }
  const width = model.task === 'regression' ? 1 : model.classes!.length;
  if (!Array.isArray(y) || y.length !== x.length) {
    return { id, error: `model returned ${y?.length} rows for ${x.length} queries` };
  }
  for (const row of y) {
    if (!Array.isArray(row) || row.length !== width) {
      return { id, error: `each output row must hold ${width} values` };
    }
    for (const v of row) {
      if (typeof v !== 'number' || !Number.isFinite(v)) {
        return { id, error: 'model returned a non-finite value' };
      }
    }
    if (model.task === 'classification') {
      const sum = row.reduce((a, b) => a + b, 0);
      if (Math.abs(sum - 1) > 1e-6) {
        return { id, error: `class probabilities sum to ${sum}, not 1` };
      }
    }
  }
  return { id, y };
}

export async function serve(model: ServedModel, transport: Transport): Promise<void> {
  validateModel(model);
  const handshake: Handshake = {
    melime_bridge: 1,
    task: model.task,
    n_features: model.nFeatures,
  };
  if (model.task === 'classification') handshake.classes = model.classes;
  transport.write(encodeHandshake(handshake));
  try {
    for await (const line of transport.lines) {
      if (line === '') continue;
      transport.write(encodeResponse(handleRequest(model, line)));
    }
  } finally {
    transport.close();
  }
}

export function stdioTransport(): Transport {
  const rl = readline.createInterface({ input: process.stdin });
  return {
    lines: rl,
    write: (line) => process.stdout.write(line + '\n'),
    close: () => rl.close(),
  };
}

/**
 * Listen on 127.0.0.1 and serve the first connection, then stop.
 * onListen gets the bound port (useful with port 0).
 */
export function tcpServe(
  model: ServedModel,
  port: number,
  onListen?: (port: number) => void,
): Promise<void> {
  return new Promise((resolve, reject) => {
    const server = net.createServer((socket) => {
      server.close();
      const rl = readline.createInterface({ input: socket });
      const transport: Transport = {
        lines: rl,
        write: (line) => socket.write(line + '\n'),
        close: () => {
          rl.close();
          socket.end();
        },
      };
      serve(model, transport).then(resolve, reject);
    });
    server.on('error', reject);
    server.listen(port, '127.0.0.1', () => {
      const addr = server.address() as net.AddressInfo;
      if (onListen) onListen(addr.port);
    });
  });
}
