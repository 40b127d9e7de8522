import { ChildProcess, spawn } from 'node:child_process';
import * as fs from 'node:fs';
import * as net from 'node:net';
import * as os from 'node:os';
import * as path from 'node:path';
import { afterEach, describe, expect, it } from 'vitest';

const CLI = path.join(__dirname, '..', 'dist', 'cli.js');

class LineReader {
  private buffer = '';
  private lines: string[] = [];

  feed(chunk: string) {
    this.buffer += chunk;
    let cut;
    while ((cut = this.buffer.indexOf('\n')) >= 0) {
      this.lines.push(this.buffer.slice(0, cut));
      this.buffer = this.buffer.slice(cut + 1);
    }
  }

  async next(timeoutMs = 5000): Promise<string> {
    const deadline = Date.now() + timeoutMs;
    while (this.lines.length === 0) {
      if (Date.now() > deadline) throw new Error('no line before timeout');
      await new Promise((r) => setTimeout(r, 10));
    }
    return this.lines.shift()!;
  }
}

let child: ChildProcess | null = null;

function start(args: string[]): { proc: ChildProcess; stdout: LineReader; stderr: LineReader } {
  const proc = spawn(process.execPath, [CLI, ...args], { stdio: ['pipe', 'pipe', 'pipe'] });
  child = proc;
  const stdout = new LineReader();
  const stderr = new LineReader();
  proc.stdout!.on('data', (c) => stdout.feed(c.toString('utf8')));
  proc.stderr!.on('data', (c) => stderr.feed(c.toString('utf8')));
  return { proc, stdout, stderr };
}

function exitCode(proc: ChildProcess): Promise<number | null> {
  return new Promise((resolve) => proc.on('exit', resolve));
}

afterEach(() => {
  if (child && child.exitCode === null) child.kill();
  child = null;
});

describe('melime-bridge cli', () => {
  it('serves a linear model over stdio and exits cleanly on EOF', async () => {
    const { proc, stdout } = start(['--linear', '1,2,-3']);
    const handshake = JSON.parse(await stdout.next());
    expect(handshake).toEqual({ melime_bridge: 1, task: 'regression', n_features: 2 });

    proc.stdin!.write('{"id": 1, "x": [[1, 1], [0, 0]]}\n');
    expect(JSON.parse(await stdout.next())).toEqual({ id: 1, y: [[0], [1]] });

    proc.stdin!.write('garbage\n');
    const err = JSON.parse(await stdout.next());
    expect(err.id).toBeNull();
    expect(err.error).toMatch(/unreadable/);

    proc.stdin!.write('{"id": 2, "x": [[2, 0]]}\n');
    expect(JSON.parse(await stdout.next())).toEqual({ id: 2, y: [[5]] });

    proc.stdin!.end();
    expect(await exitCode(proc)).toBe(0);
  });

  it('serves a knn document from a file', async () => {
    const file = path.join(os.tmpdir(), `knn-${process.pid}.json`);
    fs.writeFileSync(
      file,
      JSON.stringify({
        format: 'melime-knn-regressor',
        version: 1,
        k: 1,
        feature_names: ['a'],
        x: [[0], [10]],
        y: [5, 7],
      }),
    );
    try {
      const { proc, stdout } = start(['--model-file', file]);
      await stdout.next();
      proc.stdin!.write('{"id": 1, "x": [[1], [9]]}\n');
      expect(JSON.parse(await stdout.next())).toEqual({ id: 1, y: [[5], [7]] });
      proc.stdin!.end();
      expect(await exitCode(proc)).toBe(0);
    } finally {
      fs.unlinkSync(file);
    }
  });

  it('exits 2 on usage errors', async () => {
    for (const args of [
      [],
      ['--linear', '1,2', '--model-file', 'x.json'],
      ['--linear', 'one,two'],
      ['--model-file', '/does/not/exist.json'],
      ['--what'],
    ]) {
      const { proc, stderr } = start(args);
      expect(await exitCode(proc)).toBe(2);
      expect(await stderr.next()).toMatch(/error:/);
    }
  });

  it('serves over TCP and announces the bound port', async () => {
    const { proc, stderr } = start(['--linear', '0,2', '--tcp', '0']);
    const notice = await stderr.next();
    const { port } = JSON.parse(notice.replace('listening ', ''));
    expect(port).toBeGreaterThan(0);

    const socket = net.connect(port, '127.0.0.1');
    const reader = new LineReader();
    socket.on('data', (c) => reader.feed(c.toString('utf8')));

    expect(JSON.parse(await reader.next()).task).toBe('regression');
    socket.write('{"id": 1, "x": [[4]]}\n');
    expect(JSON.parse(await reader.next())).toEqual({ id: 1, y: [[8]] });
    socket.end();
    expect(await exitCode(proc)).toBe(0);
  });
});
