// Global setup for the e2e run: synthesize a dataset, train a small model,
// and serve it with the real Python service. Tests receive the base URL and
// fixture paths through vitest's provide/inject.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdirSync, rmSync } from "node:fs";
import { join } from "node:path";
import type { GlobalSetupContext } from "vitest/node";

const PYTHON = process.env.NEUROSPECT_PYTHON ?? "python3";

function cli(args: string[], cwd: string): void {
  execFileSync(PYTHON, ["-m", "neurospect.cli", ...args], {
    cwd,
    stdio: ["ignore", "inherit", "inherit"],
    timeout: 240_000,
  });
}

export default async function setup({ provide }: GlobalSetupContext): Promise<() => void> {
  const dir = join(process.cwd(), ".e2e-tmp");
  rmSync(dir, { recursive: true, force: true });
  mkdirSync(dir, { recursive: true });

  const features = join(dir, "features.csv");
  const artifact = join(dir, "model.artifact");
  const evaluation = join(dir, "eval.json");
  const summary = join(dir, "summary.json");

  cli(["synth", "--out", features, "--preset", "seven-class",
       "--subjects-per-class", "12", "--method", "direct", "--seed", "99"], dir);
  cli(["train", "--features", features, "--out", artifact, "--epochs", "3",
       "--seed", "99", "--workers", "2", "--eval-out", evaluation], dir);
  cli(["summarize", "--features", features, "--out", summary], dir);

  const server: ChildProcess = spawn(
    PYTHON,
    ["-u", "-m", "neurospect.cli", "serve", "--model", artifact, "--metrics", evaluation,
     "--summary", summary, "--host", "127.0.0.1", "--port", "0"],
    { cwd: dir, stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stderr!.on("data", (chunk: Buffer) => process.stderr.write(chunk));

  const baseUrl = await new Promise<string>((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error("service did not announce its port within 60s")),
      60_000,
    );
    let buffer = "";
    server.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/serving on (http:\/\/[\d.]+:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]);
      }
    });
    server.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`service exited early with code ${code}`));
    });
  });

  provide("baseUrl", baseUrl);
  provide("featuresCsv", features);
  provide("evaluationJson", evaluation);
  provide("summaryJson", summary);

  return () => {
    server.kill("SIGTERM");
  };
}

declare module "vitest" {
  export interface ProvidedContext {
    baseUrl: string;
    featuresCsv: string;
    evaluationJson: string;
    summaryJson: string;
  }
}
