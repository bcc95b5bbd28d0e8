"""Binary worker behind the foreign-function binding.

Run as ``python -m rksens.bridge``. Speaks a length-prefixed frame protocol
on stdin/stdout: little-endian u32 opcode (or status), u32 payload length,
payload. Array payloads are contiguous little-endian float64 buffers, so
values cross the boundary at full precision; only the one-time ``create``
call uses JSON. One worker owns exactly one integrator instance, which
keeps access serialized by construction.

Opcodes: 1 create, 2 nominal, 3 jacobian, 4 reverse, 5 hessian, 6 reset,
7 shutdown. Status: 0 ok (float64/JSON payload), 1 error (UTF-8 message).
"""

from __future__ import annotations

import json
import struct
import sys

import numpy as np

from .butcher import make_tableau
from .erk import Erk
from .irk import Irk, NewtonOpts
from .models import get_model

OP_CREATE = 1
OP_NOMINAL = 2
OP_JACOBIAN = 3
OP_REVERSE = 4
OP_HESSIAN = 5
OP_RESET = 6
OP_SHUTDOWN = 7

_HEADER = struct.Struct("<II")


def _read_exact(stream, n):
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _write_frame(stream, status, payload):
    stream.write(_HEADER.pack(status, len(payload)))
    stream.write(payload)
    stream.flush()


class _Session:
    def __init__(self):
        self.solver = None
        self.T_sim = None
        self.nx = self.nu = self.nz = 0

    def create(self, cfg):
        model = get_model(cfg["model"], **cfg.get("hyper", {}))
        tableau = make_tableau(cfg["family"], cfg.get("s"))
        n_steps = int(cfg.get("n_steps", 1))
        self.T_sim = float(cfg["T_sim"])
        if tableau.is_implicit:
            nw = cfg.get("newton", {})
            opts = NewtonOpts(
                max_iters=int(nw.get("max_iters", 30)),
                tol=float(nw.get("tol", 1e-12)),
                freeze_jacobian=bool(nw.get("freeze_jacobian", False)),
            )
            self.solver = Irk(model, tableau, n_steps, opts=opts)
        else:
            self.solver = Erk(model, tableau, n_steps)
        self.nx, self.nu, self.nz = model.nx, model.nu, model.nz
        return {"nx": self.nx, "nu": self.nu, "nz": self.nz}

    def _split(self, payload, with_seed):
        arr = np.frombuffer(payload, dtype="<f8")
        want = self.nx + self.nu + (self.nx if with_seed else 0)
        if arr.size != want:
            raise ValueError(f"payload has {arr.size} doubles, expected {want}")
        x0 = arr[: self.nx]
        u0 = arr[self.nx : self.nx + self.nu]
        seed = arr[self.nx + self.nu :] if with_seed else None
        return x0, u0, seed

    def handle(self, op, payload):
        if op == OP_CREATE:
            return json.dumps(self.create(json.loads(payload.decode()))).encode()
        if self.solver is None:
            raise RuntimeError("no integrator created yet")
        if op == OP_RESET:
            if isinstance(self.solver, Irk):
                self.solver.reset_stage_guess()
            return b""
        if op == OP_NOMINAL:
            x0, u0, _ = self._split(payload, with_seed=False)
            return self.solver.simulate(x0, u0, self.T_sim).x_next.astype("<f8").tobytes()
        if op == OP_JACOBIAN:
            x0, u0, _ = self._split(payload, with_seed=False)
            return self.solver.forward(x0, u0, self.T_sim).S_forw.astype("<f8").tobytes()
        if op == OP_REVERSE:
            x0, u0, seed = self._split(payload, with_seed=True)
            return self.solver.adjoint(x0, u0, self.T_sim, seed).grad_adj.astype("<f8").tobytes()
        if op == OP_HESSIAN:
            # gradient and Hessian come from one call; no separate adjoint
            # evaluation is needed (or cached) on this side of the boundary
            x0, u0, seed = self._split(payload, with_seed=True)
            out = self.solver.hessian(x0, u0, self.T_sim, seed)
            return out.grad_adj.astype("<f8").tobytes() + out.hess.astype("<f8").tobytes()
        raise ValueError(f"unknown opcode {op}")


def serve(stdin=None, stdout=None):
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    session = _Session()
    while True:
        header = _read_exact(stdin, _HEADER.size)
        if header is None:
            return
        op, length = _HEADER.unpack(header)
        payload = _read_exact(stdin, length) if length else b""
        if payload is None:
            return
        if op == OP_SHUTDOWN:
            _write_frame(stdout, 0, b"")
            return
        try:
            _write_frame(stdout, 0, session.handle(op, payload))
        except Exception as e:  # report to the client, keep the worker alive
            _write_frame(stdout, 1, str(e).encode())


if __name__ == "__main__":
    serve()
