// The instrumentation pass: find outermost loop nests, outline each SESE
// region into its own function, clone the outlined function into a
// counting version with per-block cost calls, and rewrite the call site
// with the begin / mode-dispatch / end protocol.
//
// Regions containing calls are abandoned whole: operations inside callees
// cannot be tracked, so a partially counted region would lie. Module-
// internal calls are treated the same way (no interprocedural counting).

import {
  Code,
  FunctionDef,
  FLOAT_ARITH_OPS,
  INT_ARITH_OPS,
  Instruction,
  Position,
  Program,
  RUNTIME_ABI,
  byteWidth,
  cloneCode,
  isLabel,
} from "./ir";
import {
  Block,
  Cfg,
  buildCfg,
  cfgToInstrs,
  liveness,
  naturalLoops,
  outermostLoops,
} from "./cfg";

export interface CandidateRegion {
  funcName: string;
  header: string;
  headerPos: Position;
  isSese: boolean;
  containsExternalCalls: boolean;
  blocks: Set<string>;
  exitTarget: string | null;
  index: number;
}

export interface BlockCost {
  loadBytes: number;
  storeBytes: number;
  intOps: number;
  fpOps: number;
}

export interface PassResult {
  program: Program;
  remarks: string[];
  instrumented: string[]; // outlined function names that got counting clones
}

const UNKNOWN_POS: Position = { file: "<unknown>", line: 0 };

function findHeaderPos(cfg: Cfg, loopBlocks: Set<string>, header: string): Position {
  for (const name of [header, ...loopBlocks]) {
    for (const instr of cfg.blocks.get(name)!.instrs) {
      if (instr.pos) return instr.pos;
    }
  }
  return UNKNOWN_POS;
}

function regionCalls(cfg: Cfg, loopBlocks: Set<string>): string[] {
  const callees: string[] = [];
  for (const name of loopBlocks) {
    for (const instr of cfg.blocks.get(name)!.instrs) {
      if (instr.op === "call") callees.push(instr.funcs![0]);
    }
  }
  return callees;
}

/** One candidate per outermost loop nest of the function. */
export function findLoopNests(func: FunctionDef): CandidateRegion[] {
  const cfg = buildCfg(func);
  const loops = outermostLoops(naturalLoops(cfg));
  // Deterministic order: by header layout position.
  loops.sort((a, b) => cfg.order.indexOf(a.header) - cfg.order.indexOf(b.header));
  return loops.map((loop, index) => {
    const exits = new Set<string>();
    let singleEntry = true;
    for (const name of loop.blocks) {
      for (const succ of cfg.blocks.get(name)!.succs) {
        if (!loop.blocks.has(succ)) exits.add(succ);
      }
      if (name !== loop.header) {
        for (const pred of cfg.blocks.get(name)!.preds) {
          if (!loop.blocks.has(pred)) singleEntry = false;
        }
      }
    }
    return {
      funcName: func.name,
      header: loop.header,
      headerPos: findHeaderPos(cfg, loop.blocks, loop.header),
      isSese: singleEntry && exits.size === 1,
      containsExternalCalls: regionCalls(cfg, loop.blocks).length > 0,
      blocks: loop.blocks,
      exitTarget: exits.size === 1 ? [...exits][0] : null,
      index,
    };
  });
}

function definedTypes(func: FunctionDef): Map<string, Instruction["type"]> {
  const types = new Map<string, Instruction["type"]>();
  for (const arg of func.args) types.set(arg.name, arg.type);
  for (const code of func.instrs) {
    if (!isLabel(code) && code.dest && code.type) types.set(code.dest, code.type);
  }
  return types;
}

interface OutlineResult {
  outlined: FunctionDef;
  stubBlock: string;
  liveIns: string[];
  liveOut: string | null;
  exitTarget: string;
}

/** Extract the region into `<func>_loop<k>_outlined`, leaving a call stub. */
export function outlineRegion(
  func: FunctionDef,
  candidate: CandidateRegion
): OutlineResult | string {
  if (!candidate.isSese || candidate.exitTarget === null) {
    return "not a single-entry single-exit region";
  }
  const cfg = buildCfg(func);
  const region = candidate.blocks;
  const exitTarget = candidate.exitTarget;

  const reads = new Set<string>();
  const defsInside = new Set<string>();
  for (const name of region) {
    for (const instr of cfg.blocks.get(name)!.instrs) {
      for (const a of instr.args ?? []) reads.add(a);
      if (instr.dest) defsInside.add(instr.dest);
    }
  }
  const defsOutside = new Set<string>(func.args.map((a) => a.name));
  for (const name of cfg.order) {
    if (region.has(name)) continue;
    for (const instr of cfg.blocks.get(name)!.instrs) {
      if (instr.dest) defsOutside.add(instr.dest);
    }
  }
  const liveIns: string[] = [];
  for (const name of cfg.order) {
    // stable first-occurrence order over reads
    if (!region.has(name)) continue;
    for (const instr of cfg.blocks.get(name)!.instrs) {
      for (const a of instr.args ?? []) {
        if (defsOutside.has(a) && !liveIns.includes(a)) liveIns.push(a);
      }
    }
  }
  // A region value escapes iff it is defined inside and live where control
  // lands after the region.
  const liveAtExit = liveness(cfg).get(exitTarget)!;
  const liveOuts = [...defsInside].filter((v) => liveAtExit.has(v)).sort();
  if (liveOuts.length > 1) {
    return `region computes ${liveOuts.length} live-out values (at most 1 supported)`;
  }
  const liveOut = liveOuts.length === 1 ? liveOuts[0] : null;

  const types = definedTypes(func);
  const outlinedName = `${func.name}_loop${candidate.index}_outlined`;
  const bodyInstrs: Code[] = [];
  for (const name of cfg.order) {
    if (!region.has(name)) continue;
    bodyInstrs.push({ label: name });
    for (const instr of cfg.blocks.get(name)!.instrs) {
      const copy = cloneCode(instr);
      // Region exits become returns from the outlined function.
      if (copy.op === "jmp" && copy.labels![0] === exitTarget) {
        bodyInstrs.push(
          liveOut ? { op: "ret", args: [liveOut] } : { op: "ret" }
        );
        continue;
      }
      if (copy.op === "br" && copy.labels!.includes(exitTarget)) {
        const retLabel = `${name}.ret`;
        copy.labels = copy.labels!.map((l) => (l === exitTarget ? retLabel : l));
        bodyInstrs.push(copy);
        bodyInstrs.push({ label: retLabel });
        bodyInstrs.push(liveOut ? { op: "ret", args: [liveOut] } : { op: "ret" });
        continue;
      }
      bodyInstrs.push(copy);
    }
  }
  const outlined: FunctionDef = {
    name: outlinedName,
    args: liveIns.map((v) => ({ name: v, type: types.get(v) ?? "int" })),
    type: liveOut ? types.get(liveOut) : undefined,
    instrs: [{ op: "jmp", labels: [candidate.header] }, ...bodyInstrs],
  };

  // Caller side: region collapses to a stub block holding the plain call.
  const callInstr: Instruction = {
    op: "call",
    funcs: [outlinedName],
    args: [...liveIns],
    pos: candidate.headerPos.line ? candidate.headerPos : undefined,
  };
  if (liveOut) {
    callInstr.dest = liveOut;
    callInstr.type = types.get(liveOut);
  }
  const newInstrs: Code[] = [];
  let stubEmitted = false;
  for (const name of cfg.order) {
    if (region.has(name)) {
      if (name === candidate.header && !stubEmitted) {
        newInstrs.push({ label: name });
        newInstrs.push(callInstr);
        newInstrs.push({ op: "jmp", labels: [exitTarget] });
        stubEmitted = true;
      }
      continue;
    }
    newInstrs.push({ label: name });
    newInstrs.push(...cfg.blocks.get(name)!.instrs);
  }
  func.instrs = newInstrs;
  return {
    outlined,
    stubBlock: candidate.header,
    liveIns,
    liveOut,
    exitTarget,
  };
}

/** Static per-block cost: bytes moved and arithmetic executed.

Loads carry their element type as the dest type; stores carry it in an
explicit `type` field. Pointer arithmetic (ptradd) and comparisons are
address/control work and contribute nothing.
*/
export function blockCost(block: Block): BlockCost {
  const cost: BlockCost = { loadBytes: 0, storeBytes: 0, intOps: 0, fpOps: 0 };
  for (const instr of block.instrs) {
    if (instr.op === "load") cost.loadBytes += byteWidth(instr.type ?? "int");
    else if (instr.op === "store") cost.storeBytes += byteWidth(instr.type ?? "int");
    else if (INT_ARITH_OPS.has(instr.op)) cost.intOps += 1;
    else if (FLOAT_ARITH_OPS.has(instr.op)) cost.fpOps += 1;
  }
  return cost;
}

export class ExternalCallError extends Error {}

/** Clone the outlined function into `<stem>_instrumented` with counting. */
export function duplicateAndInstrument(outlined: FunctionDef): FunctionDef {
  const clone: FunctionDef = JSON.parse(JSON.stringify(outlined));
  clone.name = outlined.name.replace(/_outlined$/, "") + "_instrumented";
  clone.args = [...clone.args, { name: "__mperf_lh", type: "int" }];
  const cfg = buildCfg(clone);
  for (const name of cfg.order) {
    const block = cfg.blocks.get(name)!;
    for (const instr of block.instrs) {
      if (instr.op === "call") {
        throw new ExternalCallError(
          `call to ${instr.funcs![0]} inside candidate region`
        );
      }
    }
    const cost = blockCost(block);
    if (cost.loadBytes || cost.storeBytes || cost.intOps || cost.fpOps) {
      const seq: Instruction[] = [
        { op: "const", dest: "__mperf_lb", type: "int", value: cost.loadBytes },
        { op: "const", dest: "__mperf_sb", type: "int", value: cost.storeBytes },
        { op: "const", dest: "__mperf_io", type: "int", value: cost.intOps },
        { op: "const", dest: "__mperf_fo", type: "int", value: cost.fpOps },
        {
          op: "call",
          funcs: [RUNTIME_ABI.addCounts],
          args: ["__mperf_lh", "__mperf_lb", "__mperf_sb", "__mperf_io", "__mperf_fo"],
        },
      ];
      block.instrs.splice(block.instrs.length - 1, 0, ...seq);
    }
  }
  clone.instrs = cfgToInstrs(cfg);
  return clone;
}

/** Swap the stub's plain call for the begin / dispatch / end protocol. */
export function rewriteCallSite(
  func: FunctionDef,
  outline: OutlineResult,
  instrumentedName: string,
  loopInfo: Position & { funcName: string }
): void {
  const cfg = buildCfg(func);
  const stub = cfg.blocks.get(outline.stubBlock)!;
  const callIdx = stub.instrs.findIndex(
    (i) => i.op === "call" && i.funcs![0] === outline.outlined.name
  );
  if (callIdx < 0) throw new Error(`stub block lost its call in ${func.name}`);
  const plainCall = stub.instrs[callIdx];

  const thenLabel = `${outline.stubBlock}.instr`;
  const elseLabel = `${outline.stubBlock}.plain`;
  const doneLabel = `${outline.stubBlock}.done`;

  const head: Instruction[] = [
    { op: "const", dest: "__mperf_line", type: "int", value: loopInfo.line },
    { op: "const", dest: "__mperf_file", type: "str", value: loopInfo.file },
    { op: "const", dest: "__mperf_func", type: "str", value: loopInfo.funcName },
    {
      op: "call",
      dest: "__mperf_lh",
      type: "int",
      funcs: [RUNTIME_ABI.begin],
      args: ["__mperf_line", "__mperf_file", "__mperf_func"],
    },
    {
      op: "call",
      dest: "__mperf_flag",
      type: "bool",
      funcs: [RUNTIME_ABI.isInstrumented],
      args: [],
    },
    { op: "br", args: ["__mperf_flag"], labels: [thenLabel, elseLabel] },
  ];
  const instrumentedCall: Instruction = {
    op: "call",
    funcs: [instrumentedName],
    args: [...outline.liveIns, "__mperf_lh"],
  };
  const plainTail: Instruction = { ...cloneCode(plainCall) };
  if (plainCall.dest) {
    instrumentedCall.dest = plainCall.dest;
    instrumentedCall.type = plainCall.type;
  }

  stub.instrs.splice(callIdx, 1, ...head);
  // Everything after the dispatch branch moves into the join block.
  const tail = stub.instrs.splice(callIdx + head.length);

  const joinInstrs: Instruction[] = [
    { op: "call", funcs: [RUNTIME_ABI.end], args: ["__mperf_lh"] },
    ...tail,
  ];

  appendBlock(cfg, thenLabel, [instrumentedCall, { op: "jmp", labels: [doneLabel] }]);
  appendBlock(cfg, elseLabel, [plainTail, { op: "jmp", labels: [doneLabel] }]);
  appendBlock(cfg, doneLabel, joinInstrs);
  func.instrs = cfgToInstrs(cfg);
}

function appendBlock(cfg: Cfg, name: string, instrs: Instruction[]): void {
  cfg.blocks.set(name, { name, instrs, succs: [], preds: [] });
  cfg.order.push(name);
}

/** Run the whole pass over a module. */
export function instrumentProgram(program: Program): PassResult {
  const remarks: string[] = [];
  const instrumented: string[] = [];
  const moduleFunctions = [...program.functions];
  for (const func of moduleFunctions) {
    const candidates = findLoopNests(func);
    for (const candidate of candidates) {
      const where = `${func.name} loop at ${candidate.headerPos.file}:${candidate.headerPos.line}`;
      if (!candidate.isSese) {
        remarks.push(`skipped ${where}: not a single-entry single-exit region`);
        continue;
      }
      if (candidate.containsExternalCalls) {
        remarks.push(
          `skipped ${where}: region calls ` +
            `${regionCallNames(func, candidate).join(", ")}; ` +
            "regions with calls cannot be fully instrumented"
        );
        continue;
      }
      const snapshot: Code[] = JSON.parse(JSON.stringify(func.instrs));
      const outline = outlineRegion(func, candidate);
      if (typeof outline === "string") {
        remarks.push(`skipped ${where}: ${outline}`);
        continue;
      }
      let counting: FunctionDef;
      try {
        counting = duplicateAndInstrument(outline.outlined);
      } catch (err) {
        if (err instanceof ExternalCallError) {
          func.instrs = snapshot; // restore the original region
          remarks.push(`skipped ${where}: ${err.message}`);
          continue;
        }
        throw err;
      }
      program.functions.push(outline.outlined, counting);
      rewriteCallSite(func, outline, counting.name, {
        ...candidate.headerPos,
        funcName: func.name,
      });
      instrumented.push(outline.outlined.name);
    }
  }
  return { program, remarks, instrumented };
}

function regionCallNames(func: FunctionDef, candidate: CandidateRegion): string[] {
  const cfg = buildCfg(func);
  const names = new Set<string>();
  for (const name of candidate.blocks) {
    for (const instr of cfg.blocks.get(name)!.instrs) {
      if (instr.op === "call") names.add(instr.funcs![0]);
    }
  }
  return [...names].sort();
}
