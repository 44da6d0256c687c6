/**
 * Model-side adapter for the benchmarking harness's stdio wire protocol.
 *
 * The harness speaks newline-delimited JSON over stdin/stdout:
 *
 *   request   {"batch":["...", ...],"i":<int>}    or   {"file":"<path>","i":<int>}
 *   response  {"outputs":["...", ...],"i":<int>}
 *   ready     {"ready":true,"params":<int>,"name":"<name>"}
 *
 * `serve` wraps a model callback in this protocol: it emits the ready line
 * once the callback is constructed, answers one request at a time (the
 * harness is closed-loop, so there is never more than one outstanding
 * request), and exits 0 when stdin closes. Callback exceptions are written
 * to stderr and terminate the process with a nonzero status, which the
 * harness reports as a model crash.
 *
 * The library is dependency-free beyond the Node standard library so it can
 * wrap models from any framework without imposing one.
 */

import { readFileSync } from "node:fs";
import { createInterface } from "node:readline";

export interface ModelCallback {
  /** Maps a batch of input strings to exactly one output per input. */
  predict: (inputs: string[]) => string[] | Promise<string[]>;
  /**
   * Optional fast path for file-based (offline) requests. When absent, the
   * adapter reads the file itself and calls `predict` on all lines.
   */
  predictOffline?: (path: string) => string[] | Promise<string[]>;
  /** Parameter count reported in the ready line. */
  params: number;
  /** Model name reported in the ready line. */
  name: string;
}

/** Undoes the offline instance-file escaping (\\, \n, \r). */
export function unescapeOfflineLine(line: string): string {
  let out = "";
  let i = 0;
  while (i < line.length) {
    const c = line[i];
    if (c === "\\" && i + 1 < line.length) {
      const nxt = line[i + 1];
      if (nxt === "n") {
        out += "\n";
        i += 2;
        continue;
      }
      if (nxt === "r") {
        out += "\r";
        i += 2;
        continue;
      }
      if (nxt === "\\") {
        out += "\\";
        i += 2;
        continue;
      }
    }
    out += c;
    i += 1;
  }
  return out;
}

/** Reads an offline instance file: one escaped input per line, file order. */
export function readOfflineFile(path: string): string[] {
  const text = readFileSync(path, "utf-8");
  const lines = text.split("\n");
  if (lines.length > 0 && lines[lines.length - 1] === "") {
    lines.pop(); // trailing newline of the last record
  }
  return lines.map(unescapeOfflineLine);
}

export function encodeReady(params: number, name: string): string {
  return JSON.stringify({ ready: true, params, name }) + "\n";
}

export function encodeResponse(outputs: string[], i: number): string {
  return JSON.stringify({ outputs, i }) + "\n";
}

interface Request {
  batch?: unknown;
  file?: unknown;
  i?: unknown;
}

async function answer(callback: ModelCallback, line: string): Promise<string> {
  const req = JSON.parse(line) as Request;
  if (typeof req.i !== "number") {
    throw new Error(`request missing integer "i": ${line}`);
  }
  let inputs: string[];
  let outputs: string[];
  if (typeof req.file === "string") {
    if (callback.predictOffline) {
      inputs = readOfflineFile(req.file); // only for the length check
      outputs = await callback.predictOffline(req.file);
    } else {
      inputs = readOfflineFile(req.file);
      outputs = await callback.predict(inputs);
    }
  } else if (Array.isArray(req.batch)) {
    inputs = req.batch as string[];
    outputs = await callback.predict(inputs);
  } else {
    throw new Error(`request carries neither "batch" nor "file": ${line}`);
  }
  if (outputs.length !== inputs.length) {
    throw new Error(
      `callback returned ${outputs.length} outputs for ${inputs.length} inputs`,
    );
  }
  return encodeResponse(outputs, req.i);
}

/**
 * Runs the protocol loop until stdin closes. Resolves with the exit status
 * (0 on EOF); callers typically `process.exit(await serve(cb))`.
 */
export async function serve(
  callback: ModelCallback,
  stdin: NodeJS.ReadableStream = process.stdin,
  stdout: NodeJS.WritableStream = process.stdout,
): Promise<number> {
  stdout.write(encodeReady(callback.params, callback.name));

  const rl = createInterface({ input: stdin, terminal: false });
  for await (const raw of rl) {
    if (raw === "") continue;
    try {
      // closed-loop: one request at a time, answered in arrival order
      stdout.write(await answer(callback, raw));
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      process.stderr.write(`adapter: ${message}\n`);
      rl.close();
      return 1;
    }
  }
  return 0;
}
