// Mid-level IR: a program is JSON, a function is a flat instruction list
// with labels, control flow is explicit (jmp/br/ret), memory is typed
// pointers into a linear heap. Positions ("pos") carry source debug info.

export type Type = "int" | "float" | "bool" | "str" | { ptr: Type };

export interface Position {
  file: string;
  line: number;
}

export interface Label {
  label: string;
  pos?: Position;
}

export interface Instruction {
  op: string;
  dest?: string;
  type?: Type;
  args?: string[];
  funcs?: string[];
  labels?: string[];
  value?: number | boolean | string;
  pos?: Position;
}

export type Code = Label | Instruction;

export interface FunctionDef {
  name: string;
  args: { name: string; type: Type }[];
  type?: Type;
  instrs: Code[];
}

export interface Program {
  functions: FunctionDef[];
  /** names callable but not defined in this module (library routines) */
  externals?: string[];
}

export function isLabel(code: Code): code is Label {
  return (code as Label).label !== undefined;
}

// Integer arithmetic per the counting model: add/sub/mul/div/rem plus
// shifts and bitwise ops. Comparisons and pointer arithmetic are not
// arithmetic work.
export const INT_ARITH_OPS = new Set([
  "add", "sub", "mul", "div", "rem", "shl", "shr", "band", "bor", "bxor",
]);

export const FLOAT_ARITH_OPS = new Set(["fadd", "fsub", "fmul", "fdiv"]);

export const TERMINATORS = new Set(["jmp", "br", "ret"]);

export const RUNTIME_ABI = {
  begin: "mperf_roofline_internal_notify_loop_begin",
  isInstrumented: "mperf_roofline_internal_is_instrumented_profiling",
  addCounts: "mperf_roofline_internal_add_counts",
  end: "mperf_roofline_internal_notify_loop_end",
} as const;

export const RUNTIME_ABI_NAMES = new Set<string>(Object.values(RUNTIME_ABI));

export function byteWidth(t: Type): number {
  if (t === "int" || t === "float") return 4; // i32 / f32
  if (t === "bool") return 1;
  throw new Error(`no byte width for type ${JSON.stringify(t)}`);
}

export function pointee(t: Type | undefined): Type {
  if (t && typeof t === "object" && "ptr" in t) return t.ptr;
  throw new Error(`expected pointer type, got ${JSON.stringify(t)}`);
}

export function parseProgram(text: string): Program {
  const prog = JSON.parse(text) as Program;
  if (!Array.isArray(prog.functions)) {
    throw new Error("program must carry a functions array");
  }
  return prog;
}

export function cloneCode<T extends Code>(code: T): T {
  return JSON.parse(JSON.stringify(code));
}
