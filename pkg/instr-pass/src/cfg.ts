// CFG construction, dominators, and natural-loop discovery.

import { Code, FunctionDef, Instruction, TERMINATORS, isLabel } from "./ir";

export interface Block {
  name: string;
  instrs: Instruction[];
  succs: string[];
  preds: string[];
}

export interface Cfg {
  blocks: Map<string, Block>;
  order: string[]; // block names in layout order
  entry: string;
}

let anonCounter = 0;

function freshName(prefix: string): string {
  return `${prefix}${anonCounter++}`;
}

/** Split a function's instruction list into labeled basic blocks. */
export function buildCfg(func: FunctionDef): Cfg {
  const blocks = new Map<string, Block>();
  const order: string[] = [];
  let current: Block | null = null;

  const open = (name: string): Block => {
    const block: Block = { name, instrs: [], succs: [], preds: [] };
    blocks.set(name, block);
    order.push(name);
    return block;
  };

  for (const code of func.instrs) {
    if (isLabel(code)) {
      if (current !== null) {
        current.instrs.push({ op: "jmp", labels: [code.label] }); // fallthrough
      }
      current = open(code.label);
    } else {
      if (current === null) current = open(freshName(".b"));
      current.instrs.push(code);
      if (TERMINATORS.has(code.op)) current = null;
    }
  }
  if (order.length === 0) open(freshName(".b"));
  // Terminate the final block.
  const lastBlock = blocks.get(order[order.length - 1])!;
  const tail = lastBlock.instrs[lastBlock.instrs.length - 1];
  if (!tail || !TERMINATORS.has(tail.op)) lastBlock.instrs.push({ op: "ret" });

  for (let i = 0; i < order.length; i++) {
    const block = blocks.get(order[i])!;
    const last = block.instrs[block.instrs.length - 1];
    if (last.op === "jmp") block.succs = [last.labels![0]];
    else if (last.op === "br") block.succs = [last.labels![0], last.labels![1]];
    else block.succs = [];
    for (const s of block.succs) {
      const succ = blocks.get(s);
      if (!succ) throw new Error(`${func.name}: jump to unknown label ${s}`);
      succ.preds.push(block.name);
    }
  }
  return { blocks, order, entry: order[0] };
}

/** Rebuild the flat instruction list from (possibly edited) blocks. */
export function cfgToInstrs(cfg: Cfg): Code[] {
  const out: Code[] = [];
  for (const name of cfg.order) {
    out.push({ label: name });
    out.push(...cfg.blocks.get(name)!.instrs);
  }
  return out;
}

/** Iterative dominator computation; dom.get(b) holds every dominator of b. */
export function dominators(cfg: Cfg): Map<string, Set<string>> {
  const all = new Set(cfg.order);
  const dom = new Map<string, Set<string>>();
  for (const name of cfg.order) {
    dom.set(name, name === cfg.entry ? new Set([name]) : new Set(all));
  }
  let changed = true;
  while (changed) {
    changed = false;
    for (const name of cfg.order) {
      if (name === cfg.entry) continue;
      const block = cfg.blocks.get(name)!;
      let meet: Set<string> | null = null;
      for (const p of block.preds) {
        const pd = dom.get(p)!;
        if (meet === null) {
          meet = new Set(pd);
        } else {
          const kept = new Set<string>();
          for (const x of meet) if (pd.has(x)) kept.add(x);
          meet = kept;
        }
      }
      const next = meet ?? new Set<string>();
      next.add(name);
      const cur = dom.get(name)!;
      if (next.size !== cur.size || [...next].some((x) => !cur.has(x))) {
        dom.set(name, next);
        changed = true;
      }
    }
  }
  return dom;
}

/** Backward liveness; returns the live-in variable set of every block. */
export function liveness(cfg: Cfg): Map<string, Set<string>> {
  const use = new Map<string, Set<string>>();
  const def = new Map<string, Set<string>>();
  for (const name of cfg.order) {
    const u = new Set<string>();
    const d = new Set<string>();
    for (const instr of cfg.blocks.get(name)!.instrs) {
      for (const a of instr.args ?? []) if (!d.has(a)) u.add(a);
      if (instr.dest) d.add(instr.dest);
    }
    use.set(name, u);
    def.set(name, d);
  }
  const liveIn = new Map<string, Set<string>>(cfg.order.map((n) => [n, new Set()]));
  let changed = true;
  while (changed) {
    changed = false;
    for (let i = cfg.order.length - 1; i >= 0; i--) {
      const name = cfg.order[i];
      const out = new Set<string>();
      for (const s of cfg.blocks.get(name)!.succs) {
        for (const v of liveIn.get(s)!) out.add(v);
      }
      const next = new Set(use.get(name)!);
      for (const v of out) if (!def.get(name)!.has(v)) next.add(v);
      const cur = liveIn.get(name)!;
      if (next.size !== cur.size || [...next].some((v) => !cur.has(v))) {
        liveIn.set(name, next);
        changed = true;
      }
    }
  }
  return liveIn;
}

export interface NaturalLoop {
  header: string;
  blocks: Set<string>;
}

/** Natural loops from back edges (tail -> header where header dom tail). */
export function naturalLoops(cfg: Cfg): NaturalLoop[] {
  const dom = dominators(cfg);
  const loops = new Map<string, Set<string>>(); // header -> body (merged)
  for (const name of cfg.order) {
    for (const succ of cfg.blocks.get(name)!.succs) {
      if (dom.get(name)!.has(succ)) {
        // back edge name -> succ
        const body = loops.get(succ) ?? new Set([succ]);
        const stack = [name];
        while (stack.length) {
          const b = stack.pop()!;
          if (body.has(b)) continue;
          body.add(b);
          stack.push(...cfg.blocks.get(b)!.preds);
        }
        loops.set(succ, body);
      }
    }
  }
  return [...loops.entries()].map(([header, blocks]) => ({ header, blocks }));
}

/** Loops not contained in any other loop's body. */
export function outermostLoops(loops: NaturalLoop[]): NaturalLoop[] {
  return loops.filter(
    (l) =>
      !loops.some(
        (other) => other !== l && other.blocks.has(l.header) && other.blocks.size > l.blocks.size
      )
  );
}
