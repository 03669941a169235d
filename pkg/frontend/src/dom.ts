/** DOM rendering for one task at a time. All labels and instructions come
 * from the server payload; this layer carries no language of its own. */

import type { JudgmentValue, TaskView } from "./types.js";

export function renderTask(container: HTMLElement, view: TaskView | null): void {
  container.replaceChildren();
  if (view === null) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No open tasks.";
    container.append(empty);
    return;
  }

  const heading = document.createElement("h2");
  heading.textContent = view.kind;
  container.append(heading);

  const instructions = document.createElement("p");
  instructions.className = "instructions";
  instructions.textContent = view.instructions;
  container.append(instructions);

  if (view.examples.length > 0) {
    const list = document.createElement("ol");
    list.className = "examples";
    for (const example of view.examples) {
      const item = document.createElement("li");
      item.textContent = example;
      list.append(item);
    }
    container.append(list);
  }

  if (view.target_sentences && view.target_sentences.length > 0) {
    const target = document.createElement("div");
    target.className = "target";
    for (const sentence of view.target_sentences) {
      const p = document.createElement("p");
      p.textContent = sentence;
      target.append(p);
    }
    container.append(target);
  }

  const form = document.createElement("div");
  form.className = "controls";
  if (view.control.type === "free_text") {
    const input = document.createElement("textarea");
    input.name = "response";
    input.rows = 2;
    form.append(input);
  } else {
    for (const option of view.control.options) {
      const label = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = "response";
      radio.value = String(option.value);
      radio.dataset.kind = typeof option.value;
      label.append(radio, document.createTextNode(option.label));
      form.append(label);
    }
  }
  container.append(form);

  const submit = document.createElement("button");
  submit.type = "button";
  submit.id = "submit";
  submit.textContent = "Submit";
  container.append(submit);

  const status = document.createElement("p");
  status.id = "status";
  container.append(status);
}

/** Current input value, or null when nothing is filled in. */
export function readValue(container: HTMLElement): JudgmentValue | null {
  const textarea = container.querySelector<HTMLTextAreaElement>("textarea[name=response]");
  if (textarea) {
    return textarea.value;
  }
  const checked = container.querySelector<HTMLInputElement>("input[name=response]:checked");
  if (!checked) {
    return null;
  }
  return checked.dataset.kind === "number" ? Number(checked.value) : checked.value;
}

export function setStatus(container: HTMLElement, text: string): void {
  const status = container.querySelector<HTMLElement>("#status");
  if (status) {
    status.textContent = text;
  }
}
