// Acceptance-level checks for the instrumented matmul: baseline output is
// bit-identical to the uninstrumented build, and the counted totals hit
// the closed-form values exactly.

import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { describe, expect, test } from "vitest";

import { Program } from "../src/ir";
import { buildMatmulProgram } from "../src/matmul";
import { instrumentProgram } from "../src/pass";
import { runProgram } from "../src/vm";

function tmpReport(): string {
  return path.join(fs.mkdtempSync(path.join(os.tmpdir(), "mm-")), "r.json");
}

function freshInstrumented(): Program {
  return instrumentProgram(buildMatmulProgram()).program;
}

function readReport(p: string) {
  return JSON.parse(fs.readFileSync(p, "utf-8"));
}

function matmulRecord(report: any) {
  const rec = report.records.find((r: any) => r.func === "matmul_tiled");
  expect(rec).toBeDefined();
  return rec;
}

describe("baseline fidelity", () => {
  test("baseline-mode output is bit-identical to the uninstrumented build", () => {
    for (const [n, tile] of [
      [8, 2],
      [16, 4],
      [12, 4],
    ] as const) {
      const plain = runProgram(buildMatmulProgram(), [n, tile], {});
      const out = tmpReport();
      const instrumented = runProgram(freshInstrumented(), [n, tile], {
        MPERF_ROOFLINE_OUT: out,
      });
      expect(instrumented.output).toEqual(plain.output);
      expect(readReport(out).phase).toBe("baseline");
    }
  });

  test("instrumented-mode output is also unchanged (counting is pure)", () => {
    const plain = runProgram(buildMatmulProgram(), [16, 2], {});
    const instrumented = runProgram(freshInstrumented(), [16, 2], {
      MPERF_ROOFLINE_MODE: "instrumented",
      MPERF_ROOFLINE_OUT: tmpReport(),
    });
    expect(instrumented.output).toEqual(plain.output);
  });
});

describe("count fidelity", () => {
  test.each([
    [8, 2],
    [8, 4],
    [16, 2],
    [16, 4],
    [64, 4],
  ])("n=%i tile=%i matches the closed forms exactly", (n, tile) => {
    const out = tmpReport();
    runProgram(freshInstrumented(), [n, tile], {
      MPERF_ROOFLINE_MODE: "instrumented",
      MPERF_ROOFLINE_OUT: out,
    });
    const rec = matmulRecord(readReport(out));
    const n3 = n ** 3;
    expect(rec.fp_ops).toBe(2 * n3);
    expect(rec.load_bytes).toBe(4 * (2 * n3 + n3 / tile));
    expect(rec.store_bytes).toBe(4 * (n3 / tile));
    expect(rec.invocations).toBe(1);
    expect(rec.line).toBe(3);
    expect(rec.file).toBe("matmul.c");
  });

  test("two-phase env protocol produces joinable reports", () => {
    const program = freshInstrumented();
    const basePath = tmpReport();
    const instPath = tmpReport();
    runProgram(program, [8, 2], {
      MPERF_ROOFLINE_MODE: "baseline",
      MPERF_ROOFLINE_OUT: basePath,
    });
    runProgram(program, [8, 2], {
      MPERF_ROOFLINE_MODE: "instrumented",
      MPERF_ROOFLINE_OUT: instPath,
    });
    const base = readReport(basePath);
    const inst = readReport(instPath);
    const key = (r: any) => `${r.file}:${r.line}:${r.func}`;
    expect(base.records.map(key).sort()).toEqual(inst.records.map(key).sort());
    for (const rec of base.records) {
      expect(rec.load_bytes + rec.store_bytes + rec.int_ops + rec.fp_ops).toBe(0);
    }
    expect(matmulRecord(inst).fp_ops).toBe(2 * 8 ** 3);
  });

  test("main's own loops are instrumented as separate regions", () => {
    const out = tmpReport();
    runProgram(freshInstrumented(), [8, 2], {
      MPERF_ROOFLINE_MODE: "instrumented",
      MPERF_ROOFLINE_OUT: out,
    });
    const report = readReport(out);
    const keys = report.records.map((r: any) => `${r.func}@${r.file}:${r.line}`);
    expect(keys).toContain("matmul_tiled@matmul.c:3");
    expect(keys).toContain("main@matmul.c:20");
    expect(keys).toContain("main@matmul.c:30");
    // checksum loop: one f32 add and one 4-byte load per element
    const chk = report.records.find((r: any) => r.line === 30);
    expect(chk.fp_ops).toBe(64);
    expect(chk.load_bytes).toBe(256);
  });
});
