// Reader for the canonical card markup the Core serves. Only the shapes a
// form needs: field nodes with their values, option rows, buttons.

export type OptionRow = { value: string; title: string };

export type ParsedField = {
  nick: string;
  kind: "input" | "textarea" | "options";
  key: string;
  value: string;
  options: OptionRow[];
  optionsUrl: string | null;
};

export type ParsedButton = { key: string; label: string; tap: string | null };

export type ParsedCard = {
  cardKey: string;
  title: string;
  description: string;
  fields: ParsedField[];
  buttons: ParsedButton[];
};

const INLINE_RE = /^<x((?: [^ >]+)*)>(.*)<\/x>$/;
const OPEN_RE = /^<x((?: [^ >]+)*)>$/;
const BOLD_RE = /^\*\*([A-Za-z_][A-Za-z0-9_]*):\*\*\s?(.*)$/s;

function unescapeText(s: string): string {
  return s.replace(/\\([\\<])/g, "$1");
}

function tokens(blob: string): string[] {
  return blob ? blob.split(" ").slice(1) : [];
}

function namedAttr(toks: string[], name: string): string | null {
  const prefix = `${name}="`;
  for (const t of toks) {
    if (t.startsWith(prefix) && t.endsWith('"')) return t.slice(prefix.length, -1);
  }
  return null;
}

function bareKey(toks: string[]): string {
  return toks.find((t) => /^[a-z]+_[0-9]+$/.test(t)) ?? "";
}

export function parseCardMarkup(text: string): ParsedCard {
  const lines = text.split("\n");
  if (lines[lines.length - 1] === "") lines.pop();

  const card: ParsedCard = { cardKey: "", title: "", description: "", fields: [], buttons: [] };
  let currentOptions: ParsedField | null = null;
  let currentButton: ParsedButton | null = null;
  let depth = 0;

  for (const line of lines) {
    if (line === "</x>") {
      depth -= 1;
      currentOptions = null;
      currentButton = null;
      continue;
    }
    const inline = INLINE_RE.exec(line);
    if (inline) {
      const toks = tokens(inline[1] ?? "");
      const kindTok = toks[0] ?? "";
      const content = unescapeText(inline[2] ?? "");
      if (/^\d+$/.test(kindTok) && currentOptions) {
        if (kindTok !== "0") {
          currentOptions.options.push({ value: toks[1] ?? "", title: content.trim() });
        }
        continue;
      }
      if (kindTok === "input" || kindTok === "textarea") {
        const bound = BOLD_RE.exec(content);
        card.fields.push({
          nick: bound?.[1] ?? "",
          kind: kindTok,
          key: bareKey(toks.slice(1)),
          value: bound?.[2] ?? "",
          options: [],
          optionsUrl: null,
        });
      }
      continue;
    }
    const open = OPEN_RE.exec(line);
    if (open) {
      const toks = tokens(open[1] ?? "");
      const kindTok = toks[0] ?? "";
      depth += 1;
      if (kindTok === "form" || kindTok === "sop") {
        card.cardKey = bareKey(toks.slice(1));
      } else if (kindTok === "options") {
        currentOptions = {
          nick: "",
          kind: "options",
          key: bareKey(toks.slice(1)),
          value: "",
          options: [],
          optionsUrl: namedAttr(toks, "url"),
        };
        card.fields.push(currentOptions);
      } else if (kindTok === "button") {
        currentButton = { key: bareKey(toks.slice(1)), label: "", tap: namedAttr(toks, "tap") };
        card.buttons.push(currentButton);
      }
      continue;
    }
    // text line
    const content = unescapeText(line);
    if (currentButton) {
      const link = /^\[(.*)\]\(.*\)$/.exec(content);
      currentButton.label = link?.[1] ?? content;
      continue;
    }
    const bound = BOLD_RE.exec(content);
    if (bound && currentOptions) {
      currentOptions.nick = bound[1] ?? "";
      currentOptions.value = bound[2] ?? "";
      continue;
    }
    if (depth === 1 && !card.title && content.startsWith("## ")) {
      card.title = content.slice(3);
      continue;
    }
    if (depth === 1 && card.title && !card.description && content && !content.startsWith("<")) {
      card.description = content;
    }
  }
  return card;
}
