#!/usr/bin/env node
/**
 * Serve a model over the bridge protocol.
 *
 *   melime-bridge --linear "1,2,-3"          y = 1 + 2 x1 - 3 x2, stdio
 *   melime-bridge --model-file model.json    knn document, stdio
 *   melime-bridge --linear "0,2" --tcp 0     same, over TCP; the bound
 *                                            port is announced on stderr
 *
 * Exit codes: 0 on EOF, 2 on usage errors.
 */

import * as fs from 'node:fs';
import { ServedModel, knnRegressorFromJson, linearModel } from './models';
import { serve, stdioTransport, tcpServe } from './serve';

function usage(message: string): never {
  process.stderr.write(`melime-bridge: error: ${message}\n`);
  process.exit(2);
}

function parseArgs(argv: string[]): { model: ServedModel; tcp: number | null } {
  let linear: string | null = null;
  let modelFile: string | null = null;
  let tcp: number | null = null;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const value = () => {
      if (i + 1 >= argv.length) usage(`${arg} needs a value`);
      return argv[++i];
    };
    if (arg === '--linear') linear = value();
    else if (arg === '--model-file') modelFile = value();
    else if (arg === '--tcp') tcp = Number(value());
    else usage(`unknown argument ${arg}`);
  }
  if ((linear === null) === (modelFile === null)) {
    usage('give exactly one of --linear and --model-file');
  }
  if (tcp !== null && (!Number.isInteger(tcp) || tcp < 0 || tcp > 65535)) {
    usage('--tcp needs a port number');
  }

  let model: ServedModel;
  if (linear !== null) {
    const parts = linear.split(',').map((s) => Number(s.trim()));
    if (parts.length < 2 || parts.some((v) => !Number.isFinite(v))) {
      usage('--linear needs "intercept,coef1[,coef2...]"');
    }
    model = linearModel(parts[0], parts.slice(1));
  } else {
    let text: string;
    try {
      text = fs.readFileSync(modelFile!, 'utf8');
    } catch (err) {
      usage(`cannot read ${modelFile}: ${(err as Error).message}`);
    }
    try {
      model = knnRegressorFromJson(text);
    } catch (err) {
      usage((err as Error).message);
    }
  }
  return { model, tcp };
}

async function main(): Promise<void> {
  const { model, tcp } = parseArgs(process.argv.slice(2));
  if (tcp !== null) {
    await tcpServe(model, tcp, (port) => {
      process.stderr.write(`listening ${JSON.stringify({ port })}\n`);
    });
  } else {
    await serve(model, stdioTransport());
  }
}

main().catch((err) => {
  process.stderr.write(`melime-bridge: fatal: ${err?.message ?? err}\n`);
  process.exit(1);
});
