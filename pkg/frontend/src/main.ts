/** Browser bootstrap: worker id from a session prompt, then one task at a
 * time until the queue is empty. */

import { CrowdClient } from "./client.js";
import { readValue, renderTask, setStatus } from "./dom.js";
import { AnnotationSession } from "./session.js";
import type { TaskKind } from "./types.js";

function config(): { baseUrl: string; kind: TaskKind | null } {
  const params = new URLSearchParams(window.location.search);
  return {
    baseUrl: params.get("api") ?? "http://127.0.0.1:8731",
    kind: (params.get("kind") as TaskKind | null) ?? null,
  };
}

async function start(): Promise<void> {
  const container = document.getElementById("task");
  if (!container) {
    throw new Error("missing #task container");
  }
  const { baseUrl, kind } = config();
  const workerId = window.prompt("Worker id:")?.trim() || `anon-${Date.now()}`;
  const session = new AnnotationSession(new CrowdClient(baseUrl), workerId);

  const advance = async () => {
    const view = await session.loadNext(kind);
    renderTask(container, view);
    if (view === null) {
      return;
    }
    const button = container.querySelector<HTMLButtonElement>("#submit");
    button?.addEventListener("click", async () => {
      const value = readValue(container);
      if (value === null) {
        setStatus(container, "choose an answer first");
        return;
      }
      const outcome = await session.submit(value);
      if (outcome.advanced) {
        await advance();
      } else {
        setStatus(container, outcome.reason ?? outcome.status);
      }
    });
  };

  try {
    await advance();
  } catch (error) {
    renderTask(container, null);
    setStatus(container, `cannot reach the annotation service: ${String(error)}`);
  }
}

void start();
