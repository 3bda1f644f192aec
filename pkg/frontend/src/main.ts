import { ApiClient } from "./api.js";
import { App } from "./app.js";
import { SessionFlow } from "./controller.js";
import type { EngineName } from "./types.js";

const ENGINES: EngineName[] = ["mozart", "haydn", "salieri", "visual"];

function resolveBaseUrl(params: URLSearchParams): string {
  return params.get("base") ?? window.location.origin;
}

function resolveEngine(params: URLSearchParams): EngineName {
  const requested = params.get("engine") ?? "haydn";
  if ((ENGINES as string[]).includes(requested)) return requested as EngineName;
  return "haydn";
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const api = new ApiClient(resolveBaseUrl(params));
  const seedParam = params.get("seed");
  const flow = new SessionFlow(api, resolveEngine(params), {
    seed: seedParam === null ? undefined : Number(seedParam),
  });
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const app = new App(root, flow);
  await app.start();
}

void boot();
