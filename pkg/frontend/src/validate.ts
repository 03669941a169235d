/** Client-side validation mirroring the server's value domains, so an
 * out-of-domain value never reaches the wire. */

import type { ControlSpec, JudgmentValue } from "./types.js";

export interface ValidationResult {
  ok: boolean;
  reason?: string;
}

export function validateValue(control: ControlSpec, value: JudgmentValue): ValidationResult {
  if (control.type === "free_text") {
    if (typeof value !== "string" || value.trim() === "") {
      return { ok: false, reason: "write a non-empty response" };
    }
    return { ok: true };
  }
  const allowed = control.options.map((option) => option.value);
  if (control.type === "ordinal" && typeof value !== "number") {
    return { ok: false, reason: "pick one of the scale levels" };
  }
  if (!allowed.some((candidate) => candidate === value)) {
    return { ok: false, reason: `value must be one of: ${allowed.join(", ")}` };
  }
  return { ok: true };
}
