/** Client-side pre-check of the task grammar.
 *
 * Mirrors the service's grammar exactly so obviously malformed input is
 * caught before any request is sent:
 *
 *   formula := or
 *   or      := and ('|' and)*
 *   and     := until ('&' until)*
 *   until   := unary ('U' '[' nat ',' nat ']' unary)*
 *   unary   := '!' unary | 'G' interval unary | 'F' interval unary | atom
 *   atom    := 'true' | 'in' '(' name ')' | '(' or ')'
 *
 * The check is syntactic plus, optionally, predicate-name resolution; the
 * server stays the authority on everything else.
 */

export interface ParseOk {
  ok: true;
  /** Names referenced via in(...). */
  predicates: string[];
  /** Number of steps past the assignment instant the formula can reach. */
  depthBound: number;
}

export interface ParseFail {
  ok: false;
  message: string;
  position: number;
}

export type ParseResult = ParseOk | ParseFail;

interface Tok {
  kind: string;
  text: string;
  pos: number;
}

class SyntaxProblem extends Error {
  constructor(message: string, readonly position: number) {
    super(message);
  }
}

function tokenize(text: string): Tok[] {
  const toks: Tok[] = [];
  let i = 0;
  while (i < text.length) {
    const c = text[i];
    if (/\s/.test(c)) {
      i += 1;
      continue;
    }
    if ("!&|(),[]".includes(c)) {
      toks.push({ kind: c, text: c, pos: i });
      i += 1;
      continue;
    }
    if (/[A-Za-z_]/.test(c)) {
      let j = i;
      while (j < text.length && /[A-Za-z0-9_]/.test(text[j])) j += 1;
      toks.push({ kind: "ident", text: text.slice(i, j), pos: i });
      i = j;
      continue;
    }
    if (/[0-9]/.test(c)) {
      let j = i;
      while (j < text.length && /[0-9]/.test(text[j])) j += 1;
      toks.push({ kind: "nat", text: text.slice(i, j), pos: i });
      i = j;
      continue;
    }
    throw new SyntaxProblem(`unexpected character '${c}'`, i);
  }
  toks.push({ kind: "eof", text: "", pos: text.length });
  return toks;
}

class Parser {
  private pos = 0;
  readonly predicates = new Set<string>();

  constructor(private readonly toks: Tok[]) {}

  private peek(): Tok {
    return this.toks[this.pos];
  }

  private next(): Tok {
    return this.toks[this.pos++];
  }

  private expect(kind: string): Tok {
    const t = this.next();
    if (t.kind !== kind) {
      throw new SyntaxProblem(`expected '${kind}', found '${t.text}'`, t.pos);
    }
    return t;
  }

  parse(): number {
    const d = this.parseOr();
    const t = this.peek();
    if (t.kind !== "eof") {
      throw new SyntaxProblem(`unexpected trailing input '${t.text}'`, t.pos);
    }
    return d;
  }

  private parseOr(): number {
    let d = this.parseAnd();
    while (this.peek().kind === "|") {
      this.next();
      d = Math.max(d, this.parseAnd());
    }
    return d;
  }

  private parseAnd(): number {
    let d = this.parseUntil();
    while (this.peek().kind === "&") {
      this.next();
      d = Math.max(d, this.parseUntil());
    }
    return d;
  }

  private parseUntil(): number {
    let d = this.parseUnary();
    while (this.peek().kind === "ident" && this.peek().text === "U") {
      this.next();
      const [, b] = this.parseInterval();
      d = Math.max(d, b + this.parseUnary());
    }
    return d;
  }

  private parseInterval(): [number, number] {
    const open = this.expect("[");
    const a = Number(this.expect("nat").text);
    this.expect(",");
    const b = Number(this.expect("nat").text);
    this.expect("]");
    if (a > b) {
      throw new SyntaxProblem(`interval [${a},${b}] has a > b`, open.pos);
    }
    return [a, b];
  }

  private parseUnary(): number {
    const t = this.peek();
    if (t.kind === "!") {
      this.next();
      return this.parseUnary();
    }
    if (t.kind === "ident" && (t.text === "G" || t.text === "F")) {
      this.next();
      const [, b] = this.parseInterval();
      return b + this.parseUnary();
    }
    return this.parseAtom();
  }

  private parseAtom(): number {
    const t = this.next();
    if (t.kind === "(") {
      const d = this.parseOr();
      this.expect(")");
      return d;
    }
    if (t.kind === "ident" && t.text === "true") {
      return 0;
    }
    if (t.kind === "ident" && t.text === "in") {
      this.expect("(");
      const name = this.expect("ident").text;
      this.expect(")");
      this.predicates.add(name);
      return 0;
    }
    throw new SyntaxProblem(`unexpected token '${t.text}'`, t.pos);
  }
}

export function precheck(text: string, knownPredicates?: string[]): ParseResult {
  let parser: Parser;
  let depthBound: number;
  try {
    parser = new Parser(tokenize(text));
    depthBound = parser.parse();
  } catch (err) {
    if (err instanceof SyntaxProblem) {
      return { ok: false, message: err.message, position: err.position };
    }
    throw err;
  }
  const predicates = [...parser.predicates].sort();
  if (knownPredicates) {
    const known = new Set(knownPredicates);
    for (const name of predicates) {
      if (!known.has(name)) {
        return {
          ok: false,
          message: `unknown predicate '${name}'`,
          position: text.indexOf(name),
        };
      }
    }
  }
  return { ok: true, predicates, depthBound };
}
