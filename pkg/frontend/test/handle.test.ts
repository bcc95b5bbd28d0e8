/**
 * Binding fidelity suite.
 *
 * The reference values come from direct library calls in a separate Python
 * process that replays the exact same call sequence on one integrator
 * instance, then prints the raw float64 bytes as hex. Comparing hex buffers
 * asserts bit-for-bit transfer across the boundary.
 */

import { execFileSync } from "node:child_process";
import { describe, expect, it } from "vitest";

import { BridgeError, IntegratorHandle, SimConfig } from "../src/handle.js";

const PY = process.env.RKSENS_PYTHON ?? "python3";

function hexOf(arr: Float64Array): string {
  return Buffer.from(arr.buffer, arr.byteOffset, arr.byteLength).toString("hex");
}

interface RefValues {
  nominal: string;
  jacobian: string;
  reverse: string;
  hess_grad: string;
  hess: string;
}

/** Same sequence as the worker sees, computed with in-process library calls. */
function pythonReference(
  model: string,
  family: string,
  s: number,
  nSteps: number,
  tSim: number,
  x0: number[],
  u0: number[],
  seed: number[],
): RefValues {
  const script = `
import json, sys
import numpy as np
from rksens.butcher import make_tableau
from rksens.irk import Irk, NewtonOpts
from rksens.models import get_model

spec = json.loads(sys.stdin.read())
model = get_model(spec["model"])
solver = Irk(
    model,
    make_tableau(spec["family"], spec["s"]),
    spec["n_steps"],
    opts=NewtonOpts(max_iters=30, tol=1e-12, freeze_jacobian=False),
)
x0 = np.array(spec["x0"]); u0 = np.array(spec["u0"]); seed = np.array(spec["seed"])
T = spec["T_sim"]
out = {}
out["nominal"] = solver.simulate(x0, u0, T).x_next.astype("<f8").tobytes().hex()
out["jacobian"] = solver.forward(x0, u0, T).S_forw.astype("<f8").tobytes().hex()
out["reverse"] = solver.adjoint(x0, u0, T, seed).grad_adj.astype("<f8").tobytes().hex()
h = solver.hessian(x0, u0, T, seed)
out["hess_grad"] = h.grad_adj.astype("<f8").tobytes().hex()
out["hess"] = h.hess.astype("<f8").tobytes().hex()
print(json.dumps(out))
`;
  const payload = JSON.stringify({ model, family, s, n_steps: nSteps, T_sim: tSim, x0, u0, seed });
  const stdout = execFileSync(PY, ["-c", script], { input: payload, encoding: "utf-8" });
  return JSON.parse(stdout);
}

const LINEAR_CFG: SimConfig = {
  family: "gauss-legendre",
  s: 1,
  nSteps: 1,
  tSim: 0.1,
  newton: { maxIters: 30, tol: 1e-12, freezeJacobian: false },
};

const CHAIN_CFG: SimConfig = {
  family: "gauss-legendre",
  s: 2,
  nSteps: 2,
  tSim: 0.1,
  newton: { maxIters: 30, tol: 1e-12, freezeJacobian: false },
};

function chainPoint(nx: number): { x0: number[]; u0: number[]; seed: number[] } {
  // fixed, representative off-equilibrium point
  const x0 = Array.from({ length: nx }, (_, i) => 0.05 * Math.cos(3 * i) + (i % 3 === 0 ? 0.06 : -0.02));
  const u0 = [0.03, -0.02, 0.01];
  const seed = Array.from({ length: nx }, (_, i) => Math.sin(i + 1));
  return { x0, u0, seed };
}

describe("IntegratorHandle", () => {
  it("creates handles with the model dimensions", async () => {
    const h = await IntegratorHandle.create("chain-3", {}, CHAIN_CFG, PY);
    expect([h.nx, h.nu, h.nz]).toEqual([9, 3, 0]);
    await h.close();
  });

  it("rejects unknown models with the worker's message", async () => {
    await expect(IntegratorHandle.create("nonexistent", {}, LINEAR_CFG, PY)).rejects.toThrow(
      /unknown model/,
    );
  });

  it.each([
    ["linear", LINEAR_CFG, { x0: [1.0], u0: [0.0], seed: [1.0] }],
    ["chain-3", CHAIN_CFG, chainPoint(9)],
  ] as const)(
    "matches primary-module calls bitwise on %s (full call sequence on one handle)",
    async (model, cfg, pt) => {
      const ref = pythonReference(
        model, cfg.family, cfg.s!, cfg.nSteps!, cfg.tSim, pt.x0, pt.u0, pt.seed,
      );
      const h = await IntegratorHandle.create(model, {}, cfg, PY);
      const x0 = Float64Array.from(pt.x0);
      const u0 = Float64Array.from(pt.u0);
      const seed = Float64Array.from(pt.seed);

      // the shooting-loop order: nominal, then jacobian, then reverse + hessian
      const nominal = await h.nominal(x0, u0);
      const jac = await h.jacobian(x0, u0);
      const grad = await h.reverse(x0, u0, seed);
      const hess = await h.hessian(x0, u0, seed);
      await h.close();

      expect(hexOf(nominal)).toBe(ref.nominal);
      expect(hexOf(jac.data)).toBe(ref.jacobian);
      expect(jac.rows).toBe(h.nx);
      expect(jac.cols).toBe(h.nx + h.nu);
      expect(hexOf(grad)).toBe(ref.reverse);
      expect(hexOf(hess.grad)).toBe(ref.hess_grad);
      expect(hexOf(hess.hess.data)).toBe(ref.hess);
    },
  );

  it("sequence outputs equal isolated fresh-handle calls with replayed warm starts", async () => {
    const pt = chainPoint(9);
    const x0 = Float64Array.from(pt.x0);
    const u0 = Float64Array.from(pt.u0);
    const seed = Float64Array.from(pt.seed);

    const full = await IntegratorHandle.create("chain-3", {}, CHAIN_CFG, PY);
    const nominal = await full.nominal(x0, u0);
    const jac = await full.jacobian(x0, u0);
    const grad = await full.reverse(x0, u0, seed);
    const hess = await full.hessian(x0, u0, seed);
    await full.close();

    const replay = async (steps: number): Promise<IntegratorHandle> => {
      const h = await IntegratorHandle.create("chain-3", {}, CHAIN_CFG, PY);
      if (steps > 0) await h.nominal(x0, u0);
      if (steps > 1) await h.jacobian(x0, u0);
      if (steps > 2) await h.reverse(x0, u0, seed);
      return h;
    };

    const h0 = await replay(0);
    expect(hexOf(await h0.nominal(x0, u0))).toBe(hexOf(nominal));
    await h0.close();
    const h1 = await replay(1);
    expect(hexOf((await h1.jacobian(x0, u0)).data)).toBe(hexOf(jac.data));
    await h1.close();
    const h2 = await replay(2);
    expect(hexOf(await h2.reverse(x0, u0, seed))).toBe(hexOf(grad));
    await h2.close();
    const h3 = await replay(3);
    const hess2 = await h3.hessian(x0, u0, seed);
    expect(hexOf(hess2.grad)).toBe(hexOf(hess.grad));
    expect(hexOf(hess2.hess.data)).toBe(hexOf(hess.hess.data));
    await h3.close();
  });

  it("zero seed gives a zero reverse gradient", async () => {
    const h = await IntegratorHandle.create("linear", {}, LINEAR_CFG, PY);
    const grad = await h.reverse(Float64Array.from([1.0]), Float64Array.from([0.0]), Float64Array.from([0.0]));
    expect(Array.from(grad)).toEqual([0.0, 0.0]);
    await h.close();
  });

  it("jacobian agrees with scripting-side finite differences of nominal", async () => {
    const h = await IntegratorHandle.create("linear", {}, LINEAR_CFG, PY);
    await h.reset();
    const jac = await h.jacobian(Float64Array.from([1.0]), Float64Array.from([0.2]));
    const step = 1e-6;
    const fd = new Float64Array(2);
    for (let k = 0; k < 2; k++) {
      const plus = Float64Array.from([1.0, 0.2]);
      const minus = Float64Array.from([1.0, 0.2]);
      plus[k] += step;
      minus[k] -= step;
      const fp = await h.nominal(plus.subarray(0, 1), plus.subarray(1));
      const fm = await h.nominal(minus.subarray(0, 1), minus.subarray(1));
      fd[k] = (fp[0] - fm[0]) / (2 * step);
    }
    expect(Math.abs(jac.data[0] - fd[0])).toBeLessThan(1e-6);
    expect(Math.abs(jac.data[1] - fd[1])).toBeLessThan(1e-6);
    await h.close();
  });

  it("rejects shape mismatches before touching the worker", async () => {
    const fresh = await IntegratorHandle.create("chain-3", {}, CHAIN_CFG, PY);
    const pt = chainPoint(9);
    const x0 = Float64Array.from(pt.x0);
    const u0 = Float64Array.from(pt.u0);
    const baseline = await fresh.nominal(x0, u0);
    await fresh.close();

    const h = await IntegratorHandle.create("chain-3", {}, CHAIN_CFG, PY);
    await expect(h.nominal(Float64Array.from([1, 2]), u0)).rejects.toThrow(RangeError);
    await expect(h.jacobian(x0, Float64Array.from([1]))).rejects.toThrow(RangeError);
    await expect(h.reverse(x0, u0, Float64Array.from([1]))).rejects.toThrow(RangeError);
    await expect(h.hessian(x0, Float64Array.from([]), Float64Array.from(pt.seed))).rejects.toThrow(
      RangeError,
    );
    // the warm-start state was never touched: first real call matches a fresh handle
    expect(hexOf(await h.nominal(x0, u0))).toBe(hexOf(baseline));
    await h.close();
  });

  it("reset restores the cold-start result bitwise", async () => {
    const pt = chainPoint(9);
    const x0 = Float64Array.from(pt.x0);
    const u0 = Float64Array.from(pt.u0);
    const h = await IntegratorHandle.create("chain-3", {}, CHAIN_CFG, PY);
    const first = await h.nominal(x0, u0);
    await h.nominal(x0, u0); // warm the stage variables
    await h.reset();
    const again = await h.nominal(x0, u0);
    expect(hexOf(again)).toBe(hexOf(first));
    await h.close();
  });

  it("refuses calls after close", async () => {
    const h = await IntegratorHandle.create("linear", {}, LINEAR_CFG, PY);
    await h.close();
    await expect(h.nominal(Float64Array.from([1]), Float64Array.from([0]))).rejects.toThrow(
      BridgeError,
    );
  });
});
