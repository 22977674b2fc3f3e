// The pod's statement documents: one `<subject> <predicate> "object" .` per
// line, sorted, LF-terminated. Serialization must be byte-identical to the
// engine's so config writes round-trip without spurious diffs.

export const VOCAB = "http://caldesk.example/vocab#";

export type Triple = [subject: string, predicate: string, object: string];

const STATEMENT = /^<([^<>\s]+)> <([^<>\s]+)> "((?:[^"\\]|\\.)*)" \.$/;

function escapeObject(value: string): string {
  return value.replace(/\\/g, "\\\\").replace(/"/g, '\\"');
}

function unescapeObject(value: string): string {
  const out: string[] = [];
  let i = 0;
  while (i < value.length) {
    if (value[i] === "\\") {
      const next = value[i + 1];
      if (next !== '"' && next !== "\\") {
        throw new Error(`bad escape in object: ${JSON.stringify(value)}`);
      }
      out.push(next);
      i += 2;
    } else {
      out.push(value[i] as string);
      i += 1;
    }
  }
  return out.join("");
}

export function statement(subject: string, predicate: string, object: string): string {
  return `<${subject}> <${predicate}> "${escapeObject(object)}" .`;
}

export function parseStatement(line: string): Triple {
  const m = STATEMENT.exec(line);
  if (m === null) {
    throw new Error(`bad statement line: ${JSON.stringify(line)}`);
  }
  return [m[1] as string, m[2] as string, unescapeObject(m[3] as string)];
}

export function parseDoc(text: string): Triple[] {
  return text.split("\n").filter((line) => line !== "").map(parseStatement);
}

/** Statements sorted and joined with trailing newlines, the engine's wire form. */
export function encodeDoc(statements: string[]): string {
  return [...statements].sort().map((line) => line + "\n").join("");
}

/** Triples grouped by subject; conflicting duplicate predicates are rejected. */
export function groupBySubject(triples: Triple[]): Map<string, Map<string, string>> {
  const subjects = new Map<string, Map<string, string>>();
  for (const [subject, predicate, object] of triples) {
    if (!predicate.startsWith(VOCAB)) {
      throw new Error(`unknown vocabulary: ${predicate}`);
    }
    const key = predicate.slice(VOCAB.length);
    let fields = subjects.get(subject);
    if (fields === undefined) {
      fields = new Map();
      subjects.set(subject, fields);
    }
    const existing = fields.get(key);
    if (existing !== undefined && existing !== object) {
      throw new Error(`conflicting ${key} statements for ${subject}`);
    }
    fields.set(key, object);
  }
  return subjects;
}
