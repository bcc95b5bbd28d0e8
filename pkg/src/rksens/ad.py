"""Forward-mode directional derivatives on numpy arrays.

``Dual1`` carries a value together with a block of first-order directions,
``Dual2`` adds a second direction block plus the mixed second-order term.
Direction axes sit at the *end* of every array, so the component-shaped
broadcasting of plain numpy code is untouched: model code written with
``+ - * /``, ``sqrt``, slicing, ``reshape`` and ``sum`` runs unchanged on
plain arrays and on dual sweeps.

The value path of every dual operation performs exactly the same
floating-point operations, in the same order, as the plain evaluation.
Integrators rely on this to keep nominal results bitwise identical whether
or not sensitivities are requested.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Dual1",
    "Dual2",
    "NonFiniteError",
    "sqrt",
    "sin",
    "cos",
    "exp",
    "log",
    "stack",
    "value",
    "jacobian",
    "jacobian_args",
    "hessian_vec",
    "fd_jacobian",
    "FD_STEP_JAC",
    "FD_STEP_HESS",
]

# Central-difference defaults: 1e-6 balances truncation/roundoff for first
# derivatives, 1e-4 for second-derivative oracles.
FD_STEP_JAC = 1e-6
FD_STEP_HESS = 1e-4


class NonFiniteError(ArithmeticError):
    """A function evaluation produced a non-finite output component."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def _checked(vals):
    flat = np.atleast_1d(np.asarray(vals, dtype=float)).ravel()
    if not np.all(np.isfinite(flat)):
        idx = int(np.flatnonzero(~np.isfinite(flat))[0])
        raise NonFiniteError(f"non-finite value at output index {idx}", index=idx)
    return vals


def _lift1(p):
    # plain operand -> broadcastable against a Dual1 dot block
    return np.asarray(p, dtype=float)[..., None]


def _lift2(p):
    return np.asarray(p, dtype=float)[..., None, None]


def _fit(dot, val_shape, n_dir_axes):
    """Broadcast a direction array up to val_shape + direction axes."""
    want = val_shape + dot.shape[dot.ndim - n_dir_axes:]
    if dot.shape != want:
        dot = np.broadcast_to(dot, want)
    return dot


class Dual1:
    """Value plus a block of first-order directional derivatives.

    ``val`` has an arbitrary component shape S, ``dot`` has shape S + (m,)
    for m simultaneous directions.
    """

    __slots__ = ("val", "dot")
    __array_ufunc__ = None  # force ndarray <op> Dual1 through our reflected ops
    __array_priority__ = 100.0

    def __init__(self, val, dot):
        self.val = np.asarray(val, dtype=float)
        self.dot = np.asarray(dot, dtype=float)

    @property
    def shape(self):
        return self.val.shape

    @property
    def ndirs(self):
        return self.dot.shape[-1]

    def __repr__(self):
        return f"Dual1(val={self.val!r}, ndirs={self.ndirs})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual2):
            return NotImplemented
        if isinstance(other, Dual1):
            return Dual1(self.val + other.val, self.dot + other.dot)
        v = self.val + np.asarray(other, dtype=float)
        return Dual1(v, _fit(self.dot, v.shape, 1))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual2):
            return NotImplemented
        if isinstance(other, Dual1):
            return Dual1(self.val - other.val, self.dot - other.dot)
        v = self.val - np.asarray(other, dtype=float)
        return Dual1(v, _fit(self.dot, v.shape, 1))

    def __rsub__(self, other):
        v = np.asarray(other, dtype=float) - self.val
        return Dual1(v, _fit(-self.dot, v.shape, 1))

    def __neg__(self):
        return Dual1(-self.val, -self.dot)

    def __mul__(self, other):
        if isinstance(other, Dual2):
            return NotImplemented
        if isinstance(other, Dual1):
            return Dual1(
                self.val * other.val,
                self.dot * other.val[..., None] + self.val[..., None] * other.dot,
            )
        p = np.asarray(other, dtype=float)
        return Dual1(self.val * p, self.dot * p[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            return NotImplemented
        if isinstance(other, Dual1):
            v = self.val / other.val
            dot = (self.dot - v[..., None] * other.dot) / other.val[..., None]
            return Dual1(v, dot)
        p = np.asarray(other, dtype=float)
        return Dual1(self.val / p, self.dot / p[..., None])

    def __rtruediv__(self, other):
        p = np.asarray(other, dtype=float)
        v = p / self.val
        return Dual1(v, -v[..., None] * self.dot / self.val[..., None])

    def __pow__(self, n):
        if not isinstance(n, (int, float)):
            return NotImplemented
        v = self.val**n
        return Dual1(v, (n * self.val ** (n - 1))[..., None] * self.dot)

    # -- shape helpers ------------------------------------------------------

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual1(self.val[idx], self.dot[idx])

    def reshape(self, shape):
        if isinstance(shape, int):
            shape = (shape,)
        return Dual1(self.val.reshape(shape), self.dot.reshape(shape + (self.ndirs,)))

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(self.val.ndim))
        elif isinstance(axis, int):
            axis = (axis % self.val.ndim,)
        else:
            axis = tuple(a % self.val.ndim for a in axis)
        return Dual1(self.val.sum(axis=axis), self.dot.sum(axis=axis))


class Dual2:
    """Value, two first-order direction blocks, and the mixed second-order block.

    Shapes: ``val`` S, ``da`` S+(ma,), ``db`` S+(mb,), ``dab`` S+(ma,mb).
    Seeding ``da = db = I`` and contracting ``dab`` with a seed vector
    yields the full Hessian of the seeded scalar in one evaluation.
    """

    __slots__ = ("val", "da", "db", "dab")
    __array_ufunc__ = None
    __array_priority__ = 100.0

    def __init__(self, val, da, db, dab):
        self.val = np.asarray(val, dtype=float)
        self.da = np.asarray(da, dtype=float)
        self.db = np.asarray(db, dtype=float)
        self.dab = np.asarray(dab, dtype=float)

    @property
    def shape(self):
        return self.val.shape

    def __repr__(self):
        return f"Dual2(val={self.val!r}, ndirs={self.da.shape[-1]}x{self.db.shape[-1]})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual1):
            return NotImplemented
        if isinstance(other, Dual2):
            return Dual2(
                self.val + other.val,
                self.da + other.da,
                self.db + other.db,
                self.dab + other.dab,
            )
        v = self.val + np.asarray(other, dtype=float)
        return Dual2(
            v, _fit(self.da, v.shape, 1), _fit(self.db, v.shape, 1), _fit(self.dab, v.shape, 2)
        )

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual1):
            return NotImplemented
        if isinstance(other, Dual2):
            return Dual2(
                self.val - other.val,
                self.da - other.da,
                self.db - other.db,
                self.dab - other.dab,
            )
        v = self.val - np.asarray(other, dtype=float)
        return Dual2(
            v, _fit(self.da, v.shape, 1), _fit(self.db, v.shape, 1), _fit(self.dab, v.shape, 2)
        )

    def __rsub__(self, other):
        v = np.asarray(other, dtype=float) - self.val
        return Dual2(
            v, _fit(-self.da, v.shape, 1), _fit(-self.db, v.shape, 1), _fit(-self.dab, v.shape, 2)
        )

    def __neg__(self):
        return Dual2(-self.val, -self.da, -self.db, -self.dab)

    def __mul__(self, other):
        if isinstance(other, Dual1):
            return NotImplemented
        if isinstance(other, Dual2):
            va, vb = self.val, other.val
            dab = (
                self.dab * vb[..., None, None]
                + va[..., None, None] * other.dab
                + self.da[..., :, None] * other.db[..., None, :]
                + other.da[..., :, None] * self.db[..., None, :]
            )
            return Dual2(
                va * vb,
                self.da * vb[..., None] + va[..., None] * other.da,
                self.db * vb[..., None] + va[..., None] * other.db,
                dab,
            )
        p = np.asarray(other, dtype=float)
        return Dual2(
            self.val * p, self.da * p[..., None], self.db * p[..., None], self.dab * p[..., None, None]
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual1):
            return NotImplemented
        if isinstance(other, Dual2):
            # q = a/b: q_i = (a_i - q b_i)/b; q_ij = (a_ij - q_j b_i - q_i b_j - q b_ij)/b
            b = other.val
            q = self.val / b
            qa = (self.da - q[..., None] * other.da) / b[..., None]
            qb = (self.db - q[..., None] * other.db) / b[..., None]
            qab = (
                self.dab
                - qb[..., None, :] * other.da[..., :, None]
                - qa[..., :, None] * other.db[..., None, :]
                - q[..., None, None] * other.dab
            ) / b[..., None, None]
            return Dual2(q, qa, qb, qab)
        p = np.asarray(other, dtype=float)
        return Dual2(
            self.val / p, self.da / p[..., None], self.db / p[..., None], self.dab / p[..., None, None]
        )

    def __rtruediv__(self, other):
        p = np.asarray(other, dtype=float)
        b = self.val
        q = p / b
        qa = -q[..., None] * self.da / b[..., None]
        qb = -q[..., None] * self.db / b[..., None]
        qab = (
            -qb[..., None, :] * self.da[..., :, None]
            - qa[..., :, None] * self.db[..., None, :]
            - q[..., None, None] * self.dab
        ) / b[..., None, None]
        return Dual2(q, qa, qb, qab)

    def __pow__(self, n):
        if not isinstance(n, (int, float)):
            return NotImplemented
        v = self.val
        return _unary2(self, v**n, n * v ** (n - 1), n * (n - 1) * v ** (n - 2))

    # -- shape helpers ------------------------------------------------------

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual2(self.val[idx], self.da[idx], self.db[idx], self.dab[idx])

    def reshape(self, shape):
        if isinstance(shape, int):
            shape = (shape,)
        ma = self.da.shape[-1]
        mb = self.db.shape[-1]
        return Dual2(
            self.val.reshape(shape),
            self.da.reshape(shape + (ma,)),
            self.db.reshape(shape + (mb,)),
            self.dab.reshape(shape + (ma, mb)),
        )

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(self.val.ndim))
        elif isinstance(axis, int):
            axis = (axis % self.val.ndim,)
        else:
            axis = tuple(a % self.val.ndim for a in axis)
        return Dual2(
            self.val.sum(axis=axis),
            self.da.sum(axis=axis),
            self.db.sum(axis=axis),
            self.dab.sum(axis=axis),
        )


def _unary2(x, v, f1, f2):
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    dab = x.dab * f1[..., None, None] + (x.da[..., :, None] * x.db[..., None, :]) * f2[
        ..., None, None
    ]
    return Dual2(v, x.da * f1[..., None], x.db * f1[..., None], dab)


# ---------------------------------------------------------------------------
# elementwise functions, generic over plain arrays / Dual1 / Dual2


def sqrt(x):
    if isinstance(x, Dual1):
        v = np.sqrt(x.val)
        return Dual1(v, x.dot * (0.5 / v)[..., None])
    if isinstance(x, Dual2):
        v = np.sqrt(x.val)
        return _unary2(x, v, 0.5 / v, -0.25 / (x.val * v))
    return np.sqrt(x)


def sin(x):
    if isinstance(x, Dual1):
        return Dual1(np.sin(x.val), x.dot * np.cos(x.val)[..., None])
    if isinstance(x, Dual2):
        v = np.sin(x.val)
        return _unary2(x, v, np.cos(x.val), -v)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual1):
        return Dual1(np.cos(x.val), x.dot * (-np.sin(x.val))[..., None])
    if isinstance(x, Dual2):
        v = np.cos(x.val)
        return _unary2(x, v, -np.sin(x.val), -v)
    return np.cos(x)


def exp(x):
    if isinstance(x, Dual1):
        v = np.exp(x.val)
        return Dual1(v, x.dot * v[..., None])
    if isinstance(x, Dual2):
        v = np.exp(x.val)
        return _unary2(x, v, v, v)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual1):
        return Dual1(np.log(x.val), x.dot / x.val[..., None])
    if isinstance(x, Dual2):
        return _unary2(x, np.log(x.val), 1.0 / x.val, -1.0 / x.val**2)
    return np.log(x)


def value(x):
    """Plain float array of a possibly-dual quantity."""
    if isinstance(x, (Dual1, Dual2)):
        return x.val
    return np.asarray(x, dtype=float)


def stack(parts):
    """Assemble a 1-D vector from scalar/vector pieces, generic over duals.

    Plain pieces mixed into a dual assembly get zero direction blocks.
    """
    has1 = any(isinstance(p, Dual1) for p in parts)
    has2 = any(isinstance(p, Dual2) for p in parts)
    if has1 and has2:
        raise TypeError("cannot mix Dual1 and Dual2 pieces")
    vals = [np.atleast_1d(value(p)) for p in parts]
    if not (has1 or has2):
        return np.concatenate(vals) if vals else np.zeros(0)
    if has1:
        m = next(p for p in parts if isinstance(p, Dual1)).ndirs
        dots = []
        for p, v in zip(parts, vals):
            if isinstance(p, Dual1):
                dots.append(np.broadcast_to(_fit(p.dot, p.val.shape, 1), v.shape + (m,)))
            else:
                dots.append(np.zeros(v.shape + (m,)))
        return Dual1(np.concatenate(vals), np.concatenate(dots))
    proto = next(p for p in parts if isinstance(p, Dual2))
    ma, mb = proto.da.shape[-1], proto.db.shape[-1]
    das, dbs, dabs = [], [], []
    for p, v in zip(parts, vals):
        if isinstance(p, Dual2):
            das.append(np.broadcast_to(_fit(p.da, p.val.shape, 1), v.shape + (ma,)))
            dbs.append(np.broadcast_to(_fit(p.db, p.val.shape, 1), v.shape + (mb,)))
            dabs.append(np.broadcast_to(_fit(p.dab, p.val.shape, 2), v.shape + (ma, mb)))
        else:
            das.append(np.zeros(v.shape + (ma,)))
            dbs.append(np.zeros(v.shape + (mb,)))
            dabs.append(np.zeros(v.shape + (ma, mb)))
    return Dual2(
        np.concatenate(vals), np.concatenate(das), np.concatenate(dbs), np.concatenate(dabs)
    )


# ---------------------------------------------------------------------------
# sweeps


def jacobian(f, x, block=None):
    """Jacobian of ``f`` at ``x``, columns restricted to ``block``.

    One multi-directional forward sweep; column k is the directional
    derivative of f along the unit vector of ``block[k]``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    idx = np.arange(n) if block is None else np.asarray(list(block), dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"block indices out of range for input of length {n}")
    dot = np.zeros((n, idx.size))
    dot[idx, np.arange(idx.size)] = 1.0
    y = f(Dual1(x, dot))
    vals = np.atleast_1d(value(y))
    _checked(vals)
    if isinstance(y, Dual1):
        return np.atleast_2d(_fit(y.dot, y.val.shape, 1).reshape(vals.size, idx.size)).copy()
    return np.zeros((vals.size, idx.size))


def jacobian_args(f, args, wrt):
    """Jacobian blocks of ``f(*args)`` w.r.t. the argument positions in ``wrt``.

    All requested blocks come out of a single forward sweep sharing one
    evaluation of ``f``. Returns a list of (dim f) x (len args[i]) arrays.
    """
    arrs = [np.atleast_1d(np.asarray(a, dtype=float)) for a in args]
    m = int(sum(arrs[i].size for i in wrt))
    seeded = list(arrs)
    slices = []
    off = 0
    for i in wrt:
        ni = arrs[i].size
        dot = np.zeros((ni, m))
        dot[np.arange(ni), off + np.arange(ni)] = 1.0
        seeded[i] = Dual1(arrs[i], dot)
        slices.append(slice(off, off + ni))
        off += ni
    y = f(*seeded)
    vals = np.atleast_1d(value(y))
    _checked(vals)
    if isinstance(y, Dual1):
        J = _fit(y.dot, y.val.shape, 1).reshape(vals.size, m)
    else:
        J = np.zeros((vals.size, m))
    return [J[:, sl].copy() for sl in slices]


def hessian_vec(f, x, seed):
    """Hessian of ``seed . f(x)`` w.r.t. ``x``, symmetrized as (H + H^T)/2."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    eye = np.eye(n)
    y = f(Dual2(x, eye, eye, np.zeros((n, n, n))))
    vals = np.atleast_1d(value(y))
    _checked(vals)
    seed = np.atleast_1d(np.asarray(seed, dtype=float))
    if seed.size != vals.size:
        raise ValueError(f"seed length {seed.size} does not match output length {vals.size}")
    if isinstance(y, Dual2):
        dab = _fit(y.dab, y.val.shape, 2).reshape(vals.size, n, n)
        H = np.einsum("k,kij->ij", seed, dab)
    else:
        H = np.zeros((n, n))
    return 0.5 * (H + H.T)


def fd_jacobian(f, x, step=FD_STEP_JAC):
    """Central-difference Jacobian oracle: (f(x+h e_k) - f(x-h e_k)) / 2h."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    J = np.zeros((f0.size, x.size))
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += step
        xm[k] -= step
        fp = np.atleast_1d(np.asarray(f(xp), dtype=float))
        fm = np.atleast_1d(np.asarray(f(xm), dtype=float))
        J[:, k] = (fp - fm) / (2.0 * step)
    return J
