// Live form rendering and the split submit path.
//
// Control order is exactly the config's item order (the markup preserves it).
// Sensitive controls carry a visible badge and a caption telling the user the
// value goes directly to the Core, never through the agent. On submit,
// sensitive values travel only to the UI-channel vault ingress; everything
// else rides the ordinary command path.

import { CoreAgentClient, CoreUiClient, setFormLine } from "./api.js";
import { parseCardMarkup, type ParsedField } from "./markup.js";
import type { UiSession } from "./session.js";
import type { CardState, ExecResult } from "./types.js";

export type RenderedControl = {
  nick: string;
  kind: "input" | "textarea" | "options";
  sensitive: boolean;
  element: HTMLInputElement | HTMLTextAreaElement | HTMLSelectElement;
  errorEl: HTMLElement;
  badgeEl: HTMLElement | null;
  allowedValues: string[] | null;
};

export type RenderedForm = {
  cardKey: string;
  root: HTMLElement;
  controls: RenderedControl[];
  submitLabel: string | null;
  state: CardState;
};

export type SubmitOutcome = {
  execResult: ExecResult | null;
  refs: Record<string, string>;
  validationErrors: Record<string, string>;
};

export async function renderCard(session: UiSession, cardKey: string): Promise<RenderedForm> {
  const ui = new CoreUiClient(session);
  const [{ markup }, state] = await Promise.all([ui.getMarkup(cardKey), ui.getState(cardKey)]);
  const parsed = parseCardMarkup(markup);

  const root = document.createElement("form");
  root.className = "anx-card";
  root.dataset.cardKey = cardKey;

  const heading = document.createElement("h2");
  heading.textContent = parsed.title;
  root.appendChild(heading);
  if (parsed.description) {
    const p = document.createElement("p");
    p.textContent = parsed.description;
    root.appendChild(p);
  }

  const controls: RenderedControl[] = [];
  for (const field of parsed.fields) {
    controls.push(buildControl(root, field, field.nick in state.sensitive));
  }

  let submitLabel: string | null = null;
  for (const button of parsed.buttons) {
    const el = document.createElement("button");
    el.type = "button";
    el.textContent = button.label;
    el.dataset.tap = button.tap ?? "";
    root.appendChild(el);
    if (button.tap === "submit") submitLabel = button.label;
  }
  return { cardKey, root, controls, submitLabel, state };
}

function buildControl(root: HTMLElement, field: ParsedField, sensitive: boolean): RenderedControl {
  const wrap = document.createElement("div");
  wrap.className = "anx-control";

  const label = document.createElement("label");
  label.textContent = field.nick;
  wrap.appendChild(label);

  let element: RenderedControl["element"];
  let allowedValues: string[] | null = null;
  if (field.kind === "options") {
    const select = document.createElement("select");
    const placeholder = document.createElement("option");
    placeholder.value = "";
    placeholder.textContent = `Please select ${field.nick}`;
    select.appendChild(placeholder);
    for (const opt of field.options) {
      const o = document.createElement("option");
      o.value = opt.value;
      o.textContent = opt.title;
      select.appendChild(o);
    }
    select.value = field.value;
    allowedValues = field.options.map((o) => o.value);
    if (field.optionsUrl !== null) {
      // unresolved dynamic set: keep the source visible and retryable
      select.dataset.optionsUrl = field.optionsUrl;
      select.dataset.retryable = "true";
      allowedValues = null;
    }
    element = select;
  } else if (field.kind === "textarea") {
    const area = document.createElement("textarea");
    area.value = field.value;
    element = area;
  } else {
    const input = document.createElement("input");
    input.type = sensitive ? "password" : "text";
    input.value = sensitive ? "" : field.value;
    element = input;
  }
  element.name = field.nick;
  wrap.appendChild(element);

  let badgeEl: HTMLElement | null = null;
  if (sensitive) {
    badgeEl = document.createElement("span");
    badgeEl.className = "anx-sensitive-badge";
    badgeEl.textContent = "sensitive";
    badgeEl.title = "Sent directly to the Core over the UI channel; the agent never sees this value.";
    wrap.appendChild(badgeEl);
  }

  const errorEl = document.createElement("span");
  errorEl.className = "anx-error";
  wrap.appendChild(errorEl);
  root.appendChild(wrap);

  return { nick: field.nick, kind: field.kind, sensitive, element, errorEl, badgeEl, allowedValues };
}

export function collectValues(form: RenderedForm): Record<string, string> {
  const values: Record<string, string> = {};
  for (const control of form.controls) {
    values[control.nick] = control.element.value;
  }
  return values;
}

export function validateForm(form: RenderedForm): Record<string, string> {
  const errors: Record<string, string> = {};
  for (const control of form.controls) {
    control.errorEl.textContent = "";
    const value = control.element.value;
    if (!value) continue;
    if (control.kind === "options" && control.allowedValues !== null
        && !control.allowedValues.includes(value)) {
      errors[control.nick] = `"${value}" is not one of the offered options`;
    }
  }
  for (const [nick, message] of Object.entries(errors)) {
    const control = form.controls.find((c) => c.nick === nick);
    if (control) control.errorEl.textContent = message;
  }
  return errors;
}

export async function submitForm(session: UiSession, form: RenderedForm): Promise<SubmitOutcome> {
  const validationErrors = validateForm(form);
  if (Object.keys(validationErrors).length > 0) {
    return { execResult: null, refs: {}, validationErrors };
  }

  const values = collectValues(form);
  const plain: Record<string, string> = {};
  const secret: Record<string, string> = {};
  for (const control of form.controls) {
    const value = values[control.nick] ?? "";
    if (control.sensitive) {
      if (value) secret[control.nick] = value;
    } else if (value) {
      plain[control.nick] = value;
    }
  }

  let refs: Record<string, string> = {};
  if (Object.keys(secret).length > 0) {
    const ui = new CoreUiClient(session);
    const result = await ui.submitSensitive(form.cardKey, secret);
    refs = result.refs;
    for (const control of form.controls) {
      const ref = refs[control.nick];
      if (control.badgeEl && ref) {
        control.badgeEl.textContent = `stored (${ref.slice(0, 12)}…)`;
        control.element.value = "";
      }
    }
  }

  let execResult: ExecResult | null = null;
  if (Object.keys(plain).length > 0) {
    const agent = new CoreAgentClient(session.coreUrl);
    execResult = await agent.execute(setFormLine(form.cardKey, plain));
  }
  return { execResult, refs, validationErrors: {} };
}
