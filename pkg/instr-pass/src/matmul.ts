// Builds the tiled-matmul demo program in IR form: the six-deep loop nest
// plus a main() that allocates, fills deterministic f32 operands, runs the
// kernel, and prints a checksum. Loop headers carry source positions so
// the pass can key regions by file:line.

import { Code, FunctionDef, Position, Program, Type } from "./ir";

const FILE = "matmul.c";

class FnBuilder {
  instrs: Code[] = [];
  private tmp = 0;

  fresh(prefix = "t"): string {
    return `${prefix}${this.tmp++}`;
  }

  label(name: string): void {
    this.instrs.push({ label: name });
  }

  emit(instr: Code): void {
    this.instrs.push(instr);
  }

  cint(value: number, dest = this.fresh()): string {
    this.emit({ op: "const", dest, type: "int", value });
    return dest;
  }

  cfloat(value: number, dest = this.fresh()): string {
    this.emit({ op: "const", dest, type: "float", value });
    return dest;
  }

  op(op: string, type: Type, args: string[], dest = this.fresh()): string {
    this.emit({ op, dest, type, args });
    return dest;
  }

  effect(op: string, args: string[], extra: Partial<Code> = {}): void {
    this.emit({ op, args, ...(extra as object) });
  }
}

interface LoopSpec {
  name: string;
  indexVar: string;
  initVar: string; // variable holding the initial value
  stepVar: string;
  line: number;
  /** emit the continue-condition; returns the bool var */
  cond: (fb: FnBuilder) => string;
  body: (fb: FnBuilder) => void;
}

/** Emit `for (v = init; cond; v += step) body` as labeled blocks. */
function emitLoop(fb: FnBuilder, spec: LoopSpec): void {
  const pos: Position = { file: FILE, line: spec.line };
  fb.emit({ op: "id", dest: spec.indexVar, type: "int", args: [spec.initVar] });
  fb.effect("jmp", [], { labels: [`${spec.name}.cond`] });
  fb.label(`${spec.name}.cond`);
  const firstCondIdx = fb.instrs.length;
  const cond = spec.cond(fb);
  (fb.instrs[firstCondIdx] as { pos?: Position }).pos = pos;
  fb.effect("br", [cond], { labels: [`${spec.name}.body`, `${spec.name}.exit`] });
  fb.label(`${spec.name}.body`);
  spec.body(fb);
  fb.effect("jmp", [], { labels: [`${spec.name}.latch`] });
  fb.label(`${spec.name}.latch`);
  fb.emit({ op: "add", dest: spec.indexVar, type: "int", args: [spec.indexVar, spec.stepVar] });
  fb.effect("jmp", [], { labels: [`${spec.name}.cond`] });
  fb.label(`${spec.name}.exit`);
}

/** Condition `v < bound1 && v < n` for the intra-tile loops. */
function tileCond(v: string, base: string, tile: string, n: string) {
  return (fb: FnBuilder): string => {
    const bound = fb.op("add", "int", [base, tile]);
    const c1 = fb.op("lt", "bool", [v, bound]);
    const c2 = fb.op("lt", "bool", [v, n]);
    return fb.op("and", "bool", [c1, c2]);
  };
}

function simpleCond(v: string, n: string) {
  return (fb: FnBuilder): string => fb.op("lt", "bool", [v, n]);
}

function buildMatmulTiled(): FunctionDef {
  const fb = new FnBuilder();
  const zero = fb.cint(0, "zero");
  const one = fb.cint(1, "one");

  emitLoop(fb, {
    name: "ii", indexVar: "ii", initVar: zero, stepVar: "tile", line: 3,
    cond: simpleCond("ii", "n"),
    body: (fb) =>
      emitLoop(fb, {
        name: "jj", indexVar: "jj", initVar: zero, stepVar: "tile", line: 4,
        cond: simpleCond("jj", "n"),
        body: (fb) =>
          emitLoop(fb, {
            name: "kk", indexVar: "kk", initVar: zero, stepVar: "tile", line: 5,
            cond: simpleCond("kk", "n"),
            body: (fb) =>
              emitLoop(fb, {
                name: "i", indexVar: "i", initVar: "ii", stepVar: one, line: 6,
                cond: tileCond("i", "ii", "tile", "n"),
                body: (fb) =>
                  emitLoop(fb, {
                    name: "j", indexVar: "j", initVar: "jj", stepVar: one, line: 7,
                    cond: tileCond("j", "jj", "tile", "n"),
                    body: (fb) => {
                      const iN = fb.op("mul", "int", ["i", "n"], "iN");
                      const ij = fb.op("add", "int", [iN, "j"], "ij");
                      const pc = fb.op("ptradd", { ptr: "float" }, ["c", ij], "pc");
                      fb.emit({ op: "load", dest: "sum", type: "float", args: [pc] });
                      emitLoop(fb, {
                        name: "k", indexVar: "k", initVar: "kk", stepVar: one, line: 10,
                        cond: tileCond("k", "kk", "tile", "n"),
                        body: (fb) => {
                          const ik = fb.op("add", "int", [iN, "k"], "ik");
                          const pa = fb.op("ptradd", { ptr: "float" }, ["a", ik], "pa");
                          const va = fb.op("load", "float", [pa], "va");
                          const kN = fb.op("mul", "int", ["k", "n"], "kN");
                          const kj = fb.op("add", "int", [kN, "j"], "kj");
                          const pb = fb.op("ptradd", { ptr: "float" }, ["b", kj], "pb");
                          const vb = fb.op("load", "float", [pb], "vb");
                          const prod = fb.op("fmul", "float", [va, vb], "prod");
                          fb.emit({ op: "fadd", dest: "sum", type: "float", args: ["sum", prod] });
                        },
                      });
                      fb.effect("store", [pc, "sum"], { type: "float" });
                    },
                  }),
              }),
          }),
      }),
  });
  fb.effect("ret", []);

  return {
    name: "matmul_tiled",
    args: [
      { name: "a", type: { ptr: "float" } },
      { name: "b", type: { ptr: "float" } },
      { name: "c", type: { ptr: "float" } },
      { name: "n", type: "int" },
      { name: "tile", type: "int" },
    ],
    instrs: fb.instrs,
  };
}

function buildMain(): FunctionDef {
  const fb = new FnBuilder();
  const zero = fb.cint(0, "zero");
  const one = fb.cint(1, "one");
  const nn = fb.op("mul", "int", ["n", "n"], "nn");
  fb.emit({ op: "alloc", dest: "a", type: { ptr: "float" }, args: [nn] });
  fb.emit({ op: "alloc", dest: "b", type: { ptr: "float" }, args: [nn] });
  fb.emit({ op: "alloc", dest: "c", type: { ptr: "float" }, args: [nn] });

  const c7 = fb.cint(7, "c7");
  const c3 = fb.cint(3, "c3");
  const c13 = fb.cint(13, "c13");
  const c6 = fb.cint(6, "c6");
  const c5 = fb.cint(5, "c5");
  const c11 = fb.cint(11, "c11");
  const f8 = fb.cfloat(8, "f8");
  const fz = fb.cfloat(0, "fz");

  emitLoop(fb, {
    name: "fill", indexVar: "idx", initVar: zero, stepVar: one, line: 20,
    cond: simpleCond("idx", nn),
    body: (fb) => {
      let t = fb.op("mul", "int", ["idx", c7]);
      t = fb.op("add", "int", [t, c3]);
      t = fb.op("rem", "int", [t, c13]);
      t = fb.op("sub", "int", [t, c6]);
      let fa = fb.op("i2f", "float", [t]);
      fa = fb.op("fdiv", "float", [fa, f8]);
      const pa = fb.op("ptradd", { ptr: "float" }, ["a", "idx"]);
      fb.effect("store", [pa, fa], { type: "float" });

      let u = fb.op("mul", "int", ["idx", c5]);
      u = fb.op("add", "int", [u, one]);
      u = fb.op("rem", "int", [u, c11]);
      u = fb.op("sub", "int", [u, c5]);
      let fBVal = fb.op("i2f", "float", [u]);
      fBVal = fb.op("fdiv", "float", [fBVal, f8]);
      const pb = fb.op("ptradd", { ptr: "float" }, ["b", "idx"]);
      fb.effect("store", [pb, fBVal], { type: "float" });

      const pcx = fb.op("ptradd", { ptr: "float" }, ["c", "idx"]);
      fb.effect("store", [pcx, "fz"], { type: "float" });
    },
  });

  fb.effect("call", ["a", "b", "c", "n", "tile"], { funcs: ["matmul_tiled"] });

  fb.emit({ op: "id", dest: "sum", type: "float", args: [fz] });
  emitLoop(fb, {
    name: "chk", indexVar: "cidx", initVar: zero, stepVar: one, line: 30,
    cond: simpleCond("cidx", nn),
    body: (fb) => {
      const p = fb.op("ptradd", { ptr: "float" }, ["c", "cidx"]);
      const v = fb.op("load", "float", [p]);
      fb.emit({ op: "fadd", dest: "sum", type: "float", args: ["sum", v] });
    },
  });
  fb.effect("print", ["sum"]);
  const rv = fb.cint(0);
  fb.effect("ret", [rv]);

  return {
    name: "main",
    args: [
      { name: "n", type: "int" },
      { name: "tile", type: "int" },
    ],
    type: "int",
    instrs: fb.instrs,
  };
}

export function buildMatmulProgram(): Program {
  return { functions: [buildMatmulTiled(), buildMain()] };
}

/** Variant whose kernel body calls a library routine (not instrumentable). */
export function buildExternalCallProgram(): Program {
  const fb = new FnBuilder();
  const zero = fb.cint(0, "zero");
  const one = fb.cint(1, "one");
  emitLoop(fb, {
    name: "lp", indexVar: "i", initVar: zero, stepVar: one, line: 50,
    cond: simpleCond("i", "n"),
    body: (fb) => {
      fb.effect("call", ["i"], { funcs: ["extern_work"] });
    },
  });
  const rv = fb.cint(0);
  fb.effect("ret", [rv]);
  return {
    functions: [
      {
        name: "main",
        args: [{ name: "n", type: "int" }],
        type: "int",
        instrs: fb.instrs,
      },
    ],
    externals: ["extern_work"],
  };
}
