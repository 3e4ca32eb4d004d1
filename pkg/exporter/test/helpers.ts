import { spawnSync } from "node:child_process";

const PYTHON = process.env.OVFUSE_PYTHON ?? "python3";

export interface CliResult {
  status: number;
  stdout: string;
  stderr: string;
}

/** Invoke the engine CLI out of process; the only coupling to the engine. */
export function ovfuse(...args: string[]): CliResult {
  const proc = spawnSync(PYTHON, ["-m", "ovfuse.cli", ...args], {
    encoding: "utf-8",
    timeout: 120_000,
  });
  if (proc.error) throw proc.error;
  return { status: proc.status ?? -1, stdout: proc.stdout, stderr: proc.stderr };
}

export function engineAvailable(): boolean {
  try {
    return ovfuse("--help").status === 0;
  } catch {
    return false;
  }
}
