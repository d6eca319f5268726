/**
 * Versioned stdio schema (v = 1): one JSON SandboxRequest on stdin, one JSON
 * SandboxResult on stdout.
 */

import { z } from "zod";

export const SCHEMA_VERSION = 1;

export const DEFAULT_TIMEOUT_S = 60;
export const DEFAULT_MAX_ANSWERS = 100;
export const DEFAULT_MAX_OUTPUT_BYTES = 1 << 20;
export const DEFAULT_MEMORY_MB = 512;

export const sandboxRequestSchema = z
  .object({
    v: z.literal(SCHEMA_VERSION),
    source: z.string().min(1, "source must be non-empty"),
    timeout_s: z.number().positive().default(DEFAULT_TIMEOUT_S),
    max_answers: z.number().int().min(1).default(DEFAULT_MAX_ANSWERS),
    max_output_bytes: z.number().int().min(1).default(DEFAULT_MAX_OUTPUT_BYTES),
    memory_mb: z.number().int().min(1).default(DEFAULT_MEMORY_MB),
  })
  .strict();

export type SandboxRequest = z.infer<typeof sandboxRequestSchema>;

export type SandboxStatus = "ok" | "timeout" | "runtime_error" | "output_overflow";

export interface SandboxResult {
  v: typeof SCHEMA_VERSION;
  status: SandboxStatus;
  answers: string[];
  truncated: boolean;
  stderr_excerpt: string;
  wall_time_s: number;
}

export class MalformedRequestError extends Error {}

/** Parse and validate a request document; throws MalformedRequestError. */
export function parseRequest(text: string): SandboxRequest {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch (err) {
    throw new MalformedRequestError(`request is not valid JSON: ${err}`);
  }
  const parsed = sandboxRequestSchema.safeParse(data);
  if (!parsed.success) {
    throw new MalformedRequestError(
      `request violates schema v${SCHEMA_VERSION}: ${parsed.error.message}`,
    );
  }
  return parsed.data;
}

export function serializeResult(result: SandboxResult): string {
  return JSON.stringify(result);
}
