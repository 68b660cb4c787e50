// Interpreter for the mid-level IR, including the roofline runtime ABI.
//
// Float semantics are f32 (Math.fround on every float op and load), so an
// instrumented-but-baseline run is bit-identical to an uninstrumented run
// of the same program. The VM honors the runtime environment protocol:
// MPERF_ROOFLINE_MODE selects the phase, MPERF_ROOFLINE_FILTER restricts
// counting to "<file>:<line>" keys, MPERF_ROOFLINE_OUT names the report
// written when the program finishes (default ./mperf_roofline_<pid>.json).

import * as fs from "fs";

import {
  FunctionDef,
  Instruction,
  Program,
  RUNTIME_ABI,
  byteWidth,
  isLabel,
  pointee,
  Type,
} from "./ir";

type Value = number | boolean | string | Pointer;

interface Pointer {
  addr: number; // byte offset into the heap
  elem: Type;
}

const HEAP_BYTES = 64 * 1024 * 1024;

interface LoopStats {
  file: string;
  line: number;
  func: string;
  invocations: number;
  wallNs: bigint;
  loadBytes: number;
  storeBytes: number;
  intOps: number;
  fpOps: number;
}

interface Handle {
  id: number;
  key: string;
  beginNs: bigint;
  loadBytes: number;
  storeBytes: number;
  intOps: number;
  fpOps: number;
  open: boolean;
}

class RooflineRuntime {
  private stats = new Map<string, LoopStats>();
  private handles = new Map<number, Handle>();
  private stack: Handle[] = [];
  private nextId = 1;
  private mode: string;
  private filter: Set<string> | null;
  misuseCount = 0;
  everNotified = false;

  constructor(private env: NodeJS.ProcessEnv) {
    this.mode = env.MPERF_ROOFLINE_MODE ?? "";
    const raw = env.MPERF_ROOFLINE_FILTER;
    this.filter = raw
      ? new Set(raw.split(",").map((s) => s.trim()).filter(Boolean))
      : null;
  }

  get phase(): string {
    return this.mode === "instrumented" ? "instrumented" : "baseline";
  }

  begin(line: number, file: string, func: string): number {
    this.everNotified = true;
    const key = `${file}:${line}:${func}`;
    if (!this.stats.has(key)) {
      this.stats.set(key, {
        file,
        line,
        func,
        invocations: 0,
        wallNs: 0n,
        loadBytes: 0,
        storeBytes: 0,
        intOps: 0,
        fpOps: 0,
      });
    }
    const handle: Handle = {
      id: this.nextId++,
      key,
      beginNs: process.hrtime.bigint(),
      loadBytes: 0,
      storeBytes: 0,
      intOps: 0,
      fpOps: 0,
      open: true,
    };
    this.handles.set(handle.id, handle);
    this.stack.push(handle);
    return handle.id;
  }

  isInstrumented(): boolean {
    if (this.mode !== "instrumented") return false;
    if (this.filter === null) return true;
    const top = this.stack[this.stack.length - 1];
    if (!top) return false;
    const [file, line] = top.key.split(":");
    return this.filter.has(`${file}:${line}`);
  }

  addCounts(id: number, lb: number, sb: number, io: number, fo: number): void {
    const handle = this.handles.get(id);
    if (!handle || !handle.open) {
      this.misuseCount++;
      return;
    }
    handle.loadBytes += lb;
    handle.storeBytes += sb;
    handle.intOps += io;
    handle.fpOps += fo;
  }

  end(id: number): void {
    const now = process.hrtime.bigint();
    const handle = this.handles.get(id);
    if (!handle || !handle.open || !this.stack.includes(handle)) {
      this.misuseCount++;
      return;
    }
    if (this.stack[this.stack.length - 1] !== handle) this.misuseCount++;
    while (this.stack.length) {
      const top = this.stack.pop()!;
      this.fold(top, now);
      if (top === handle) break;
    }
  }

  private fold(handle: Handle, now: bigint): void {
    handle.open = false;
    const slot = this.stats.get(handle.key)!;
    slot.invocations += 1;
    slot.wallNs += now > handle.beginNs ? now - handle.beginNs : 0n;
    slot.loadBytes += handle.loadBytes;
    slot.storeBytes += handle.storeBytes;
    slot.intOps += handle.intOps;
    slot.fpOps += handle.fpOps;
  }

  finalize(): void {
    if (!this.everNotified) return;
    const records = [...this.stats.values()]
      .filter((s) => s.invocations >= 1)
      .sort((a, b) =>
        a.file === b.file
          ? a.line === b.line
            ? a.func.localeCompare(b.func)
            : a.line - b.line
          : a.file.localeCompare(b.file)
      )
      .map((s) => ({
        file: s.file,
        line: s.line,
        func: s.func,
        invocations: s.invocations,
        wall_ns: Number(s.wallNs),
        load_bytes: s.loadBytes,
        store_bytes: s.storeBytes,
        int_ops: s.intOps,
        fp_ops: s.fpOps,
      }));
    const report = JSON.stringify({ phase: this.phase, records }, null, 2) + "\n";
    const path =
      this.env.MPERF_ROOFLINE_OUT ?? `./mperf_roofline_${process.pid}.json`;
    try {
      fs.writeFileSync(path, report);
    } catch (err) {
      process.stderr.write(
        `roofline runtime: cannot write report to ${path} (${err}); dumping here\n${report}`
      );
    }
  }
}

interface Frame {
  func: FunctionDef;
  env: Map<string, Value>;
  pc: number;
  labelIndex: Map<string, number>;
}

export interface RunResult {
  output: string[];
  returnValue: Value | undefined;
  runtime: RooflineRuntime;
}

export class Vm {
  private heap = new DataView(new ArrayBuffer(HEAP_BYTES));
  private brk = 8; // 0 is the null pointer
  private funcs = new Map<string, FunctionDef>();
  private externals: Set<string>;
  readonly output: string[] = [];
  readonly runtime: RooflineRuntime;

  constructor(private program: Program, env: NodeJS.ProcessEnv = process.env) {
    for (const f of program.functions) this.funcs.set(f.name, f);
    this.externals = new Set(program.externals ?? []);
    this.runtime = new RooflineRuntime(env);
  }

  run(mainArgs: number[] = []): RunResult {
    const main = this.funcs.get("main");
    if (!main) throw new Error("program has no main function");
    if (mainArgs.length !== main.args.length) {
      throw new Error(
        `main expects ${main.args.length} argument(s), got ${mainArgs.length}`
      );
    }
    const ret = this.callFunction(main, mainArgs);
    this.runtime.finalize();
    return { output: this.output, returnValue: ret, runtime: this.runtime };
  }

  private alloc(count: number, elem: Type): Pointer {
    const bytes = count * byteWidth(elem);
    const addr = this.brk;
    this.brk += (bytes + 3) & ~3;
    if (this.brk > HEAP_BYTES) throw new Error("heap exhausted");
    return { addr, elem };
  }

  private callFunction(func: FunctionDef, args: Value[]): Value | undefined {
    const env = new Map<string, Value>();
    func.args.forEach((a, i) => env.set(a.name, args[i]));
    const labelIndex = new Map<string, number>();
    func.instrs.forEach((code, i) => {
      if (isLabel(code)) labelIndex.set(code.label, i);
    });
    const frame: Frame = { func, env, pc: 0, labelIndex };

    while (frame.pc < func.instrs.length) {
      const code = func.instrs[frame.pc];
      if (isLabel(code)) {
        frame.pc++;
        continue;
      }
      const instr = code as Instruction;
      switch (instr.op) {
        case "jmp":
          frame.pc = labelIndex.get(instr.labels![0])!;
          continue;
        case "br": {
          const cond = this.get(env, instr.args![0]) as boolean;
          frame.pc = labelIndex.get(instr.labels![cond ? 0 : 1])!;
          continue;
        }
        case "ret":
          return instr.args?.length ? this.get(env, instr.args[0]) : undefined;
        case "call": {
          const result = this.dispatchCall(instr, env);
          if (instr.dest) env.set(instr.dest, result as Value);
          break;
        }
        default:
          this.execSimple(instr, env);
      }
      frame.pc++;
    }
    return undefined;
  }

  private dispatchCall(instr: Instruction, env: Map<string, Value>): Value | undefined {
    const name = instr.funcs![0];
    const argv = (instr.args ?? []).map((a) => this.get(env, a));
    switch (name) {
      case RUNTIME_ABI.begin:
        return this.runtime.begin(
          argv[0] as number,
          argv[1] as string,
          argv[2] as string
        );
      case RUNTIME_ABI.isInstrumented:
        return this.runtime.isInstrumented();
      case RUNTIME_ABI.addCounts:
        this.runtime.addCounts(
          argv[0] as number,
          argv[1] as number,
          argv[2] as number,
          argv[3] as number,
          argv[4] as number
        );
        return undefined;
      case RUNTIME_ABI.end:
        this.runtime.end(argv[0] as number);
        return undefined;
    }
    const callee = this.funcs.get(name);
    if (!callee) {
      const kind = this.externals.has(name) ? "external" : "undefined";
      throw new Error(`call to ${kind} function ${name}`);
    }
    return this.callFunction(callee, argv);
  }

  private execSimple(instr: Instruction, env: Map<string, Value>): void {
    const arg = (i: number) => this.get(env, instr.args![i]);
    const num = (i: number) => arg(i) as number;
    const set = (v: Value) => env.set(instr.dest!, v);
    switch (instr.op) {
      case "const":
        set(
          instr.type === "float"
            ? Math.fround(instr.value as number)
            : (instr.value as Value)
        );
        break;
      case "id":
        set(arg(0));
        break;
      case "add": set((num(0) + num(1)) | 0); break;
      case "sub": set((num(0) - num(1)) | 0); break;
      case "mul": set(Math.imul(num(0), num(1))); break;
      case "div": set(Math.trunc(num(0) / num(1)) | 0); break;
      case "rem": set((num(0) % num(1)) | 0); break;
      case "shl": set((num(0) << num(1)) | 0); break;
      case "shr": set(num(0) >> num(1)); break;
      case "band": set(num(0) & num(1)); break;
      case "bor": set(num(0) | num(1)); break;
      case "bxor": set(num(0) ^ num(1)); break;
      case "lt": set(num(0) < num(1)); break;
      case "le": set(num(0) <= num(1)); break;
      case "gt": set(num(0) > num(1)); break;
      case "ge": set(num(0) >= num(1)); break;
      case "eq": set(arg(0) === arg(1)); break;
      case "ne": set(arg(0) !== arg(1)); break;
      case "and": set((arg(0) as boolean) && (arg(1) as boolean)); break;
      case "or": set((arg(0) as boolean) || (arg(1) as boolean)); break;
      case "not": set(!(arg(0) as boolean)); break;
      case "fadd": set(Math.fround(num(0) + num(1))); break;
      case "fsub": set(Math.fround(num(0) - num(1))); break;
      case "fmul": set(Math.fround(num(0) * num(1))); break;
      case "fdiv": set(Math.fround(num(0) / num(1))); break;
      case "i2f": set(Math.fround(num(0))); break;
      case "alloc":
        set(this.alloc(num(0), pointee(instr.type)));
        break;
      case "ptradd": {
        const p = arg(0) as Pointer;
        set({ addr: p.addr + num(1) * byteWidth(p.elem), elem: p.elem });
        break;
      }
      case "load": {
        const p = arg(0) as Pointer;
        set(
          p.elem === "float"
            ? this.heap.getFloat32(p.addr, true)
            : this.heap.getInt32(p.addr, true)
        );
        break;
      }
      case "store": {
        const p = arg(0) as Pointer;
        const v = arg(1) as number;
        if (p.elem === "float") this.heap.setFloat32(p.addr, v, true);
        else this.heap.setInt32(p.addr, v | 0, true);
        break;
      }
      case "print":
        this.output.push(
          (instr.args ?? []).map((a) => String(this.get(env, a))).join(" ")
        );
        break;
      default:
        throw new Error(`unknown op ${instr.op}`);
    }
  }

  private get(env: Map<string, Value>, name: string): Value {
    const v = env.get(name);
    if (v === undefined) throw new Error(`undefined variable ${name}`);
    return v;
  }
}

export function runProgram(
  program: Program,
  args: number[] = [],
  env: NodeJS.ProcessEnv = process.env
): RunResult {
  return new Vm(program, env).run(args);
}
