#!/usr/bin/env node
/**
 * CLI entry point: reads one JSON SandboxRequest on stdin, writes one JSON
 * SandboxResult on stdout. Exit codes: 0 = result produced (any status),
 * 2 = malformed request, 3 = internal fault.
 */

import { runProgram } from "./runner.js";
import { MalformedRequestError, parseRequest, serializeResult } from "./schema.js";

async function readStdin(): Promise<string> {
  const chunks: Buffer[] = [];
  for await (const chunk of process.stdin) {
    chunks.push(chunk as Buffer);
  }
  return Buffer.concat(chunks).toString("utf8");
}

async function main(): Promise<number> {
  let request;
  try {
    request = parseRequest(await readStdin());
  } catch (err) {
    if (err instanceof MalformedRequestError) {
      process.stderr.write(err.message + "\n");
      return 2;
    }
    throw err;
  }
  const result = await runProgram(request);
  process.stdout.write(serializeResult(result) + "\n");
  return 0;
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    process.stderr.write(`internal fault: ${err}\n`);
    process.exit(3);
  });
