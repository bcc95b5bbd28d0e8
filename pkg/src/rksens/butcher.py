"""Butcher tableaux for the supported Runge-Kutta families.

Implicit coefficients (Gauss-Legendre, Radau IIA) are embedded as
full-precision decimal literals, pre-computed offline from the roots of the
shifted Legendre / right-Radau polynomials at 60-digit precision. Embedding
literals instead of running a root finder at import keeps construction
bitwise deterministic. Every tableau is checked against the classical order
conditions (up to order 4) when built.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = ["SchemeFamily", "ButcherTableau", "make_tableau", "check_order_conditions"]


class SchemeFamily(enum.Enum):
    GAUSS_LEGENDRE = "gauss-legendre"
    RADAU_IIA = "radau-iia"
    RK4 = "rk4"
    EULER = "euler"
    HEUN = "heun"

    @property
    def is_implicit(self):
        return self in (SchemeFamily.GAUSS_LEGENDRE, SchemeFamily.RADAU_IIA)


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients (A, b, c) of an s-stage Runge-Kutta method."""

    s: int
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    family: SchemeFamily

    def __post_init__(self):
        for name in ("A", "b", "c"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def is_implicit(self):
        return self.family.is_implicit


# Gauss-Legendre: collocation at the roots of P_s(2x - 1); order 2s, A-stable.
_GAUSS_LEGENDRE = {
    1: (
        [[0.5]],
        [1.0],
        [0.5],
    ),
    2: (
        [[0.25, -0.03867513459481288],
         [0.5386751345948129, 0.25]],
        [0.5, 0.5],
        [0.2113248654051871, 0.7886751345948129],
    ),
    3: (
        [[0.1388888888888889, -0.0359766675249389, 0.009789444015308325],
         [0.30026319498086457, 0.2222222222222222, -0.022485417203086815],
         [0.26798833376246944, 0.48042111196938336, 0.1388888888888889]],
        [0.2777777777777778, 0.4444444444444444, 0.2777777777777778],
        [0.11270166537925831, 0.5, 0.8872983346207417],
    ),
    4: (
        [[0.08696371128436346, -0.026604180084998794, 0.012627462689404725, -0.0035551496857956833],
         [0.18811811749986806, 0.16303628871563652, -0.027880428602470895, 0.006735500594538156],
         [0.16719192197418878, 0.35395300603374397, 0.16303628871563652, -0.014190694931141144],
         [0.1774825722545226, 0.31344511474186837, 0.35267675751627187, 0.08696371128436346]],
        [0.17392742256872692, 0.32607257743127305, 0.32607257743127305, 0.17392742256872692],
        [0.06943184420297371, 0.33000947820757187, 0.6699905217924281, 0.9305681557970263],
    ),
}

# Radau IIA: collocation at the right-Radau points (c_s = 1); order 2s-1,
# L-stable, stiffly accurate (b equals the last row of A).
_RADAU_IIA = {
    1: (
        [[1.0]],
        [1.0],
        [1.0],
    ),
    2: (
        [[0.4166666666666667, -0.08333333333333333],
         [0.75, 0.25]],
        [0.75, 0.25],
        [0.3333333333333333, 1.0],
    ),
    3: (
        [[0.1968154772236604, -0.06553542585019839, 0.02377097434822015],
         [0.3944243147390873, 0.2920734116652285, -0.04154875212599793],
         [0.37640306270046725, 0.5124858261884216, 0.1111111111111111]],
        [0.37640306270046725, 0.5124858261884216, 0.1111111111111111],
        [0.1550510257216822, 0.6449489742783178, 1.0],
    ),
    4: (
        [[0.11299947932315618, -0.04030922072352221, 0.025802377420336392, -0.009904676507266424],
         [0.23438399574740026, 0.2068925739353589, -0.04785712804854072, 0.016047422806516273],
         [0.21668178462325033, 0.4061232638673733, 0.18903651817005634, -0.02418210489983294],
         [0.22046221117676837, 0.3881934688431719, 0.32884431998005975, 0.0625]],
        [0.22046221117676837, 0.3881934688431719, 0.32884431998005975, 0.0625],
        [0.08858795951270394, 0.4094668644407347, 0.787659461760847, 1.0],
    ),
}

_EXPLICIT = {
    SchemeFamily.RK4: (
        4,
        [[0.0, 0.0, 0.0, 0.0],
         [0.5, 0.0, 0.0, 0.0],
         [0.0, 0.5, 0.0, 0.0],
         [0.0, 0.0, 1.0, 0.0]],
        [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        [0.0, 0.5, 0.5, 1.0],
        4,
    ),
    SchemeFamily.EULER: (1, [[0.0]], [1.0], [0.0], 1),
    SchemeFamily.HEUN: (2, [[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5], [0.0, 1.0], 2),
}

_ORDER_CONDITIONS = [
    # (name, order, residual(A, b, c))
    ("b.1 - 1", 1, lambda A, b, c: b.sum() - 1.0),
    ("b.c - 1/2", 2, lambda A, b, c: b @ c - 0.5),
    ("b.c^2 - 1/3", 3, lambda A, b, c: b @ c**2 - 1.0 / 3.0),
    ("b.Ac - 1/6", 3, lambda A, b, c: b @ (A @ c) - 1.0 / 6.0),
    ("b.c^3 - 1/4", 4, lambda A, b, c: b @ c**3 - 0.25),
    ("b.(c*Ac) - 1/8", 4, lambda A, b, c: b @ (c * (A @ c)) - 0.125),
    ("b.Ac^2 - 1/12", 4, lambda A, b, c: b @ (A @ c**2) - 1.0 / 12.0),
    ("b.A^2c - 1/24", 4, lambda A, b, c: b @ (A @ (A @ c)) - 1.0 / 24.0),
]


def check_order_conditions(tab, up_to):
    """Residuals of the classical order conditions up to order ``up_to``.

    Returns a deterministic list of (condition name, |residual|) pairs.
    Only orders 1..4 are covered; higher orders are asserted empirically by
    the convergence study instead.
    """
    if up_to > 4:
        raise ValueError("order conditions are tabulated up to order 4 only")
    A, b, c = tab.A, tab.b, tab.c
    return [(name, abs(fn(A, b, c))) for name, order, fn in _ORDER_CONDITIONS if order <= up_to]


def _validate(tab):
    if abs(tab.b.sum() - 1.0) > 1e-14:
        raise ValueError(f"{tab.family.value} s={tab.s}: sum(b) != 1")
    if np.max(np.abs(tab.A.sum(axis=1) - tab.c)) > 1e-14:
        raise ValueError(f"{tab.family.value} s={tab.s}: row sums of A do not match c")
    if tab.family.is_implicit:
        if not np.any(np.abs(np.triu(tab.A)) > 0):
            raise ValueError(f"{tab.family.value}: implicit family with strictly lower A")
        if tab.family is SchemeFamily.RADAU_IIA and abs(tab.c[-1] - 1.0) > 1e-14:
            raise ValueError("Radau IIA requires c_s = 1")
    else:
        if np.max(np.abs(np.triu(tab.A))) != 0.0:
            raise ValueError(f"{tab.family.value}: explicit A must be strictly lower triangular")
    for name, resid in check_order_conditions(tab, min(tab.order, 4)):
        if resid > 1e-12:
            raise ValueError(f"{tab.family.value} s={tab.s}: order condition {name} residual {resid:g}")


def make_tableau(family, s=None):
    """Build the tableau of ``family`` with ``s`` stages.

    ``s`` is required for the implicit families (1..4) and fixed by the
    family for the explicit ones (RK4 -> 4, Euler -> 1, Heun -> 2).
    """
    family = SchemeFamily(family)
    if family.is_implicit:
        table = _GAUSS_LEGENDRE if family is SchemeFamily.GAUSS_LEGENDRE else _RADAU_IIA
        if s not in table:
            raise ValueError(
                f"{family.value} supports s in {sorted(table)}, got s={s!r}"
            )
        A, b, c = table[s]
        order = 2 * s if family is SchemeFamily.GAUSS_LEGENDRE else 2 * s - 1
    else:
        s_fixed, A, b, c, order = _EXPLICIT[family]
        if s is not None and s != s_fixed:
            raise ValueError(f"{family.value} has exactly s={s_fixed} stages, got s={s!r}")
        s = s_fixed
    tab = ButcherTableau(s=s, A=np.array(A), b=np.array(b), c=np.array(c), order=order, family=family)
    _validate(tab)
    return tab
