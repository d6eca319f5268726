import { execFile } from "node:child_process";
import { fileURLToPath } from "node:url";
import * as path from "node:path";
import { promisify } from "node:util";

import { describe, expect, it } from "vitest";

const execFileP = promisify(execFile);
const here = path.dirname(fileURLToPath(import.meta.url));
const entry = path.join(here, "..", "dist", "main.js");

interface Invocation {
  code: number;
  stdout: string;
  stderr: string;
}

async function invoke(stdin: string): Promise<Invocation> {
  const child = execFileP("node", [entry], { timeout: 30_000 });
  child.child.stdin!.write(stdin);
  child.child.stdin!.end();
  try {
    const { stdout, stderr } = await child;
    return { code: 0, stdout, stderr };
  } catch (err) {
    const e = err as { code?: number; stdout?: string; stderr?: string };
    return { code: e.code ?? -1, stdout: e.stdout ?? "", stderr: e.stderr ?? "" };
  }
}

describe("sandbox-runner CLI", () => {
  it("produces a result with exit 0 for a valid request", async () => {
    const { code, stdout } = await invoke(
      JSON.stringify({ v: 1, source: "print('hello')" }),
    );
    expect(code).toBe(0);
    const result = JSON.parse(stdout);
    expect(result).toMatchObject({ v: 1, status: "ok", answers: ["hello"] });
  });

  it("exits 0 even when the program fails", async () => {
    const { code, stdout } = await invoke(
      JSON.stringify({ v: 1, source: "1/0" }),
    );
    expect(code).toBe(0);
    expect(JSON.parse(stdout).status).toBe("runtime_error");
  });

  it("exits 2 on malformed requests", async () => {
    for (const bad of ["{oops", JSON.stringify({ v: 1 }),
                       JSON.stringify({ v: 99, source: "print(1)" })]) {
      const { code, stderr } = await invoke(bad);
      expect(code).toBe(2);
      expect(stderr.length).toBeGreaterThan(0);
    }
  });
});
