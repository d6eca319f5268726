/**
 * Executes one Python enumeration program in an isolated child process.
 *
 * Isolation is subprocess + resource limits (CPU time, address space) with
 * socket creation disabled in the child. This is a crash/runaway guard for
 * generated enumeration programs, NOT a security boundary against hostile
 * code. One answer per stdout line; a soft timeout sends SIGTERM and a hard
 * SIGKILL follows after a one second flush grace period.
 */

import { spawn } from "node:child_process";

import {
  SCHEMA_VERSION,
  type SandboxRequest,
  type SandboxResult,
  type SandboxStatus,
} from "./schema.js";

const GRACE_MS = 1000;
const STDERR_EXCERPT_BYTES = 2000;

export const PYTHON_BIN = process.env.SANDBOX_RUNNER_PYTHON ?? "python3";

/** Prefix prepended to every program: resource limits plus network denial. */
export function prelude(request: SandboxRequest): string {
  const memBytes = request.memory_mb * 1024 * 1024;
  const cpuSeconds = Math.ceil(request.timeout_s) + 1;
  return [
    "import resource as _r, socket as _s",
    "def _deny(*_a, **_k):",
    '    raise OSError("sandbox: network disabled")',
    "_s.socket = _deny",
    "_s.create_connection = _deny",
    `_r.setrlimit(_r.RLIMIT_CPU, (${cpuSeconds}, ${cpuSeconds}))`,
    "try:",
    `    _r.setrlimit(_r.RLIMIT_AS, (${memBytes}, ${memBytes}))`,
    "except (ValueError, OSError):",
    "    pass",
    "del _r, _s, _deny",
    "",
  ].join("\n");
}

export function runProgram(request: SandboxRequest): Promise<SandboxResult> {
  return new Promise((resolve, reject) => {
    const started = process.hrtime.bigint();
    const child = spawn(PYTHON_BIN, ["-I", "-"], {
      stdio: ["pipe", "pipe", "pipe"],
    });

    const stdoutChunks: Buffer[] = [];
    const stderrChunks: Buffer[] = [];
    let stdoutBytes = 0;
    let stderrBytes = 0;
    let timedOut = false;
    let overflowed = false;
    let settled = false;

    const softTimer = setTimeout(() => {
      timedOut = true;
      child.kill("SIGTERM");
      setTimeout(() => child.kill("SIGKILL"), GRACE_MS).unref();
    }, request.timeout_s * 1000);

    child.stdout.on("data", (chunk: Buffer) => {
      stdoutBytes += chunk.length;
      if (stdoutBytes > request.max_output_bytes) {
        overflowed = true;
        child.kill("SIGKILL");
        return;
      }
      stdoutChunks.push(chunk);
    });
    child.stderr.on("data", (chunk: Buffer) => {
      if (stderrBytes < STDERR_EXCERPT_BYTES) {
        stderrChunks.push(chunk);
      }
      stderrBytes += chunk.length;
    });

    child.on("error", (err) => {
      if (settled) return;
      settled = true;
      clearTimeout(softTimer);
      reject(new Error(`failed to start ${PYTHON_BIN}: ${err.message}`));
    });

    child.on("close", (code, signal) => {
      if (settled) return;
      settled = true;
      clearTimeout(softTimer);
      let wallS = Number(process.hrtime.bigint() - started) / 1e9;

      const lines = Buffer.concat(stdoutChunks)
        .toString("utf8")
        .split("\n")
        .filter((line) => line.trim().length > 0);
      let answers = lines;
      let truncated = false;
      if (lines.length > request.max_answers) {
        answers = lines.slice(0, request.max_answers);
        truncated = true;
      }

      let status: SandboxStatus = "ok";
      if (timedOut) {
        status = "timeout";
        wallS = Math.max(wallS, request.timeout_s);
      } else if (overflowed) {
        status = "output_overflow";
        truncated = true;
      } else if (code !== 0 || signal !== null) {
        status = "runtime_error";
      }

      const stderrText = Buffer.concat(stderrChunks)
        .toString("utf8")
        .slice(0, STDERR_EXCERPT_BYTES);
      resolve({
        v: SCHEMA_VERSION,
        status,
        answers: status === "ok" ? answers : status === "timeout" ? answers : [],
        truncated,
        stderr_excerpt: stderrText,
        wall_time_s: wallS,
      });
    });

    child.stdin.write(prelude(request) + request.source + "\n");
    child.stdin.end();
  });
}
