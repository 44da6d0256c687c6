import { spawn } from "node:child_process";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

const here = dirname(fileURLToPath(import.meta.url));
export const distDir = join(here, "..", "dist");
export const repoRoot = join(here, "..", "..");

export function exampleCmd(name: string, ...args: string[]): string[] {
  return ["node", join(distDir, "examples", `${name}.js`), ...args];
}

export function selftestCmd(mode: string, ...extra: string[]): string[] {
  return ["python3", "-m", "inferbench.cli", "selftest-model", "--mode", mode, ...extra];
}

export interface RunResult {
  stdout: Buffer;
  stderr: string;
  status: number | null;
}

/** Spawns argv, writes `input` to stdin, closes it, and collects everything. */
export function runToCompletion(argv: string[], input: string): Promise<RunResult> {
  return new Promise((resolve, reject) => {
    const proc = spawn(argv[0], argv.slice(1), {
      stdio: ["pipe", "pipe", "pipe"],
      env: { ...process.env, PYTHONIOENCODING: "utf-8" },
    });
    const out: Buffer[] = [];
    const err: Buffer[] = [];
    proc.stdout.on("data", (chunk) => out.push(chunk));
    proc.stderr.on("data", (chunk) => err.push(chunk));
    proc.on("error", reject);
    proc.on("close", (status) => {
      resolve({
        stdout: Buffer.concat(out),
        stderr: Buffer.concat(err).toString("utf-8"),
        status,
      });
    });
    proc.stdin.write(input);
    proc.stdin.end();
  });
}

/**
 * Interactive session with a model process: waits for the ready line, then
 * sends each request and times the roundtrip to its response line.
 */
export function timedRoundtrips(argv: string[], requests: string[]): Promise<number[]> {
  return new Promise((resolve, reject) => {
    const proc = spawn(argv[0], argv.slice(1), {
      stdio: ["pipe", "pipe", "inherit"],
      env: { ...process.env, PYTHONIOENCODING: "utf-8" },
    });
    proc.on("error", reject);
    const times: number[] = [];
    let buffered = "";
    let pending = -1; // -1: awaiting ready
    let sentAt = 0;

    const sendNext = () => {
      const k = times.length;
      if (k === requests.length) {
        proc.stdin.end();
        resolve(times);
        return;
      }
      pending = k;
      sentAt = performance.now();
      proc.stdin.write(requests[k]);
    };

    proc.stdout.on("data", (chunk: Buffer) => {
      buffered += chunk.toString("utf-8");
      let nl;
      while ((nl = buffered.indexOf("\n")) >= 0) {
        const line = buffered.slice(0, nl);
        buffered = buffered.slice(nl + 1);
        if (pending === -1) {
          // ready line
          sendNext();
        } else {
          times.push(performance.now() - sentAt);
          sendNext();
        }
      }
    });
    proc.on("close", (status) => {
      if (times.length < requests.length) {
        reject(new Error(`model exited early with status ${status}`));
      }
    });
  });
}
