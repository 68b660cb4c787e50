#!/usr/bin/env node
// CLI: emit the demo program, instrument a program, or run one in the VM.
//
//   node dist/main.js emit-matmul [-o prog.json]
//   node dist/main.js instrument prog.json [-o out.json]
//   node dist/main.js run prog.json [int args...]
//
// `run` honors MPERF_ROOFLINE_MODE / _FILTER / _OUT, so an instrumented
// program can be driven directly by `mperf roofline -- node dist/main.js
// run prog.json 64 4`.

import * as fs from "fs";

import { parseProgram } from "./ir";
import { buildMatmulProgram } from "./matmul";
import { instrumentProgram } from "./pass";
import { runProgram } from "./vm";

function readArg(args: string[], flag: string): string | undefined {
  const i = args.indexOf(flag);
  if (i < 0) return undefined;
  const v = args[i + 1];
  args.splice(i, 2);
  return v;
}

function writeOut(path: string | undefined, text: string): void {
  if (path) fs.writeFileSync(path, text);
  else process.stdout.write(text);
}

function main(argv: string[]): number {
  const [command, ...rest] = argv;
  switch (command) {
    case "emit-matmul": {
      const out = readArg(rest, "-o");
      writeOut(out, JSON.stringify(buildMatmulProgram(), null, 2) + "\n");
      return 0;
    }
    case "instrument": {
      const out = readArg(rest, "-o");
      const input = rest[0];
      if (!input) {
        process.stderr.write("instrument: need an input program\n");
        return 1;
      }
      const program = parseProgram(fs.readFileSync(input, "utf-8"));
      const result = instrumentProgram(program);
      for (const remark of result.remarks) {
        process.stderr.write(`remark: ${remark}\n`);
      }
      writeOut(out, JSON.stringify(result.program, null, 2) + "\n");
      return 0;
    }
    case "run": {
      const input = rest[0];
      if (!input) {
        process.stderr.write("run: need a program\n");
        return 1;
      }
      const args = rest.slice(1).map((s) => {
        const v = parseInt(s, 10);
        if (Number.isNaN(v)) throw new Error(`bad integer argument ${s}`);
        return v;
      });
      const program = parseProgram(fs.readFileSync(input, "utf-8"));
      const result = runProgram(program, args);
      for (const line of result.output) process.stdout.write(line + "\n");
      const rv = result.returnValue;
      return typeof rv === "number" ? rv : 0;
    }
    default:
      process.stderr.write(
        "usage: main.js emit-matmul|instrument|run [args...]\n"
      );
      return 1;
  }
}

process.exit(main(process.argv.slice(2)));
