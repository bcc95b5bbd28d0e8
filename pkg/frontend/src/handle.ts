/**
 * IntegratorHandle: scripting-side face of one integrator instance.
 *
 * `create` spawns a dedicated Python worker (all heavyweight setup and
 * allocation happens there, once); the per-call entry points exchange raw
 * float64 buffers, so results are bit-identical to in-process library
 * calls. A handle is deliberately not thread-safe: calls are serialized
 * through an internal promise chain, and one worker owns one integrator.
 */

import { ChildProcessByStdio, spawn } from "node:child_process";
import type { Readable, Writable } from "node:stream";

import { FrameReader, OP, bufferToDoubles, doublesToBuffer, encodeFrame } from "./protocol.js";

type WorkerProcess = ChildProcessByStdio<Writable, Readable, null>;

export interface NewtonConfig {
  maxIters?: number;
  tol?: number;
  freezeJacobian?: boolean;
}

export interface SimConfig {
  /** tableau family: gauss-legendre | radau-iia | rk4 | euler | heun */
  family: string;
  /** stage count, required for the implicit families */
  s?: number;
  nSteps?: number;
  /** integration horizon of every call, fixed at creation */
  tSim: number;
  newton?: NewtonConfig;
}

export interface Matrix {
  rows: number;
  cols: number;
  /** row-major contents */
  data: Float64Array;
}

export class BridgeError extends Error {}

interface Pending {
  resolve: (payload: Buffer) => void;
  reject: (err: Error) => void;
}

export class IntegratorHandle {
  readonly nx: number;
  readonly nu: number;
  readonly nz: number;

  private proc: WorkerProcess;
  private pending: Pending[] = [];
  private queue: Promise<unknown> = Promise.resolve();
  private closed = false;

  private constructor(proc: WorkerProcess, dims: { nx: number; nu: number; nz: number }) {
    this.proc = proc;
    this.nx = dims.nx;
    this.nu = dims.nu;
    this.nz = dims.nz;
  }

  /** Spawn a worker and build the integrator; rejects on unknown model/config. */
  static async create(
    modelName: string,
    hyperParams: Record<string, unknown>,
    config: SimConfig,
    pythonBin = "python3",
  ): Promise<IntegratorHandle> {
    const proc = spawn(pythonBin, ["-m", "rksens.bridge"], {
      stdio: ["pipe", "pipe", "inherit"],
    });
    const pending: Pending[] = [];
    const reader = new FrameReader();
    proc.stdout.on("data", (chunk: Buffer) => {
      reader.push(chunk, (status, payload) => {
        const req = pending.shift();
        if (!req) return;
        if (status === 0) req.resolve(payload);
        else req.reject(new BridgeError(payload.toString("utf-8")));
      });
    });
    proc.on("exit", (code) => {
      while (pending.length) {
        pending.shift()!.reject(new BridgeError(`worker exited with code ${code}`));
      }
    });

    const createPayload = Buffer.from(
      JSON.stringify({
        model: modelName,
        hyper: hyperParams,
        family: config.family,
        s: config.s ?? null,
        n_steps: config.nSteps ?? 1,
        T_sim: config.tSim,
        newton: {
          max_iters: config.newton?.maxIters ?? 30,
          tol: config.newton?.tol ?? 1e-12,
          freeze_jacobian: config.newton?.freezeJacobian ?? false,
        },
      }),
      "utf-8",
    );
    const reply = await new Promise<Buffer>((resolve, reject) => {
      pending.push({ resolve, reject });
      proc.stdin.write(encodeFrame(OP.CREATE, createPayload));
    }).catch((err) => {
      proc.kill();
      throw err;
    });
    const dims = JSON.parse(reply.toString("utf-8"));
    const handle = new IntegratorHandle(proc, dims);
    handle.pending = pending;
    return handle;
  }

  private request(op: number, payload: Buffer): Promise<Buffer> {
    if (this.closed) {
      return Promise.reject(new BridgeError("handle is closed"));
    }
    const run = () =>
      new Promise<Buffer>((resolve, reject) => {
        this.pending.push({ resolve, reject });
        this.proc.stdin.write(encodeFrame(op, payload));
      });
    const result = this.queue.then(run, run);
    this.queue = result.catch(() => undefined);
    return result;
  }

  private checkShape(name: string, arr: Float64Array, want: number): void {
    if (arr.length !== want) {
      throw new RangeError(`${name} must have length ${want}, got ${arr.length}`);
    }
  }

  /** x(T_sim) from (x0, u0). */
  async nominal(x0: Float64Array, u0: Float64Array): Promise<Float64Array> {
    this.checkShape("x0", x0, this.nx);
    this.checkShape("u0", u0, this.nu);
    return bufferToDoubles(await this.request(OP.NOMINAL, doublesToBuffer(x0, u0)));
  }

  /** Forward sensitivity dPhi/d(x0,u0), nx rows by nx+nu columns. */
  async jacobian(x0: Float64Array, u0: Float64Array): Promise<Matrix> {
    this.checkShape("x0", x0, this.nx);
    this.checkShape("u0", u0, this.nu);
    const data = bufferToDoubles(await this.request(OP.JACOBIAN, doublesToBuffer(x0, u0)));
    return { rows: this.nx, cols: this.nx + this.nu, data };
  }

  /** Adjoint gradient of seed . Phi, length nx+nu. */
  async reverse(x0: Float64Array, u0: Float64Array, seed: Float64Array): Promise<Float64Array> {
    this.checkShape("x0", x0, this.nx);
    this.checkShape("u0", u0, this.nu);
    this.checkShape("seed", seed, this.nx);
    return bufferToDoubles(await this.request(OP.REVERSE, doublesToBuffer(x0, u0, seed)));
  }

  /**
   * Gradient and exact Hessian of seed . Phi. Both come from a single
   * worker call; no separate adjoint evaluation happens first.
   */
  async hessian(
    x0: Float64Array,
    u0: Float64Array,
    seed: Float64Array,
  ): Promise<{ grad: Float64Array; hess: Matrix }> {
    this.checkShape("x0", x0, this.nx);
    this.checkShape("u0", u0, this.nu);
    this.checkShape("seed", seed, this.nx);
    const m = this.nx + this.nu;
    const all = bufferToDoubles(await this.request(OP.HESSIAN, doublesToBuffer(x0, u0, seed)));
    return {
      grad: all.subarray(0, m).slice(),
      hess: { rows: m, cols: m, data: all.subarray(m).slice() },
    };
  }

  /** Zero the warm-started stage variables of the implicit integrator. */
  async reset(): Promise<void> {
    await this.request(OP.RESET, Buffer.alloc(0));
  }

  async close(): Promise<void> {
    if (this.closed) return;
    this.closed = false; // allow the final shutdown frame through
    try {
      await this.request(OP.SHUTDOWN, Buffer.alloc(0));
    } catch {
      // worker may already be gone
    }
    this.closed = true;
    this.proc.stdin.end();
  }
}
