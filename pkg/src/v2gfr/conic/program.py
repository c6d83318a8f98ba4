"""Mixed-binary second-order cone programs.

A :class:`ConicProgram` collects variables with bounds, a linear objective,
linear rows and cone rows built from :class:`LinExpr` objects::

    prog = ConicProgram()
    x = prog.var("x", 0, None)
    y = prog.var("y")
    prog.add_soc(x, [y - 1.0])         # |y - 1| <= x
    prog.minimize(x + 0.1 * y)

Rotated cones ``2 z x >= ||y||^2`` (z, x >= 0) are stored as such and turned
into plain cones ``||(z - x, sqrt(2) y)|| <= z + x`` at compile time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp


class LinExpr:
    """Affine expression ``const + sum_j coef_j * x_j``."""

    __slots__ = ("terms", "const")
    __array_ufunc__ = None  # make numpy scalars defer to our operators

    def __init__(self, terms: Optional[Dict[int, float]] = None, const: float = 0.0):
        self.terms = terms if terms is not None else {}
        self.const = float(const)

    @staticmethod
    def lift(other) -> "LinExpr":
        if isinstance(other, LinExpr):
            return other
        if other is None:
            raise TypeError("cannot use None in an expression")
        return LinExpr({}, float(other))

    def copy(self) -> "LinExpr":
        return LinExpr(dict(self.terms), self.const)

    def __add__(self, other):
        if not isinstance(other, LinExpr):
            if other is None:
                raise TypeError("cannot use None in an expression")
            return LinExpr(dict(self.terms), self.const + float(other))
        terms = dict(self.terms)
        for j, c in other.terms.items():
            terms[j] = terms.get(j, 0.0) + c
        return LinExpr(terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({j: -c for j, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        if not isinstance(other, LinExpr):
            if other is None:
                raise TypeError("cannot use None in an expression")
            return LinExpr(dict(self.terms), self.const - float(other))
        terms = dict(self.terms)
        for j, c in other.terms.items():
            terms[j] = terms.get(j, 0.0) - c
        return LinExpr(terms, self.const - other.const)

    def __rsub__(self, other):
        return LinExpr.lift(other) + (-self)

    def __mul__(self, k):
        if isinstance(k, LinExpr):
            raise TypeError("product of two expressions is not affine")
        k = float(k)
        return LinExpr({j: c * k for j, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[j] for j, c in self.terms.items())

    def __repr__(self):
        body = " + ".join(f"{c:g}*x{j}" for j, c in sorted(self.terms.items()))
        return f"LinExpr({body or '0'} + {self.const:g})"


def lsum(exprs) -> LinExpr:
    """Sum of expressions without quadratic copying."""
    terms: Dict[int, float] = {}
    const = 0.0
    for e in exprs:
        e = LinExpr.lift(e)
        const += e.const
        for j, c in e.terms.items():
            terms[j] = terms.get(j, 0.0) + c
    return LinExpr(terms, const)


@dataclass
class LinearRow:
    kind: str  # "eq": expr == 0, "le": expr <= 0
    expr: LinExpr
    name: str


@dataclass
class SocRow:
    t: LinExpr
    u: List[LinExpr]
    name: str


@dataclass
class RsocRow:
    z: LinExpr
    x: LinExpr
    y: List[LinExpr]
    name: str


class ConicProgram:
    def __init__(self):
        self.names: List[str] = []
        self.lb: List[float] = []
        self.ub: List[float] = []
        self.binary: List[bool] = []
        self.objective = LinExpr()
        self.linear: List[LinearRow] = []
        self.socs: List[SocRow] = []
        self.rsocs: List[RsocRow] = []
        self._compiled = None

    # -- construction ------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.names)

    def var(self, name: str, lb: Optional[float] = None, ub: Optional[float] = None,
            binary: bool = False) -> LinExpr:
        if binary:
            lb = 0.0 if lb is None else max(lb, 0.0)
            ub = 1.0 if ub is None else min(ub, 1.0)
        lo = -math.inf if lb is None else float(lb)
        hi = math.inf if ub is None else float(ub)
        if lo > hi:
            raise ValueError(f"variable {name}: lb {lo} > ub {hi}")
        self.names.append(name)
        self.lb.append(lo)
        self.ub.append(hi)
        self.binary.append(bool(binary))
        self._compiled = None
        return LinExpr({self.n - 1: 1.0})

    def _check(self, expr: LinExpr):
        if expr.terms and not (0 <= min(expr.terms) and max(expr.terms) < len(self.names)):
            raise IndexError("expression references an unknown variable")

    def add_eq(self, lhs, rhs=0.0, name: str = "") -> None:
        e = LinExpr.lift(lhs) - rhs
        self._check(e)
        self.linear.append(LinearRow("eq", e, name))
        self._compiled = None

    def add_le(self, lhs, rhs=0.0, name: str = "") -> None:
        e = LinExpr.lift(lhs) - rhs
        self._check(e)
        self.linear.append(LinearRow("le", e, name))
        self._compiled = None

    def add_ge(self, lhs, rhs=0.0, name: str = "") -> None:
        self.add_le(LinExpr.lift(rhs) - lhs, 0.0, name)

    def add_soc(self, t, u: Sequence, name: str = "") -> None:
        """``||u||_2 <= t``."""
        t = LinExpr.lift(t)
        u = [LinExpr.lift(e) for e in u]
        for e in [t, *u]:
            self._check(e)
        self.socs.append(SocRow(t, u, name))
        self._compiled = None

    def add_rsoc(self, z, x, y: Sequence, name: str = "") -> None:
        """``2 z x >= ||y||_2^2`` with ``z, x >= 0``."""
        z, x = LinExpr.lift(z), LinExpr.lift(x)
        y = [LinExpr.lift(e) for e in y]
        for e in [z, x, *y]:
            self._check(e)
        self.rsocs.append(RsocRow(z, x, y, name))
        self._compiled = None

    def minimize(self, expr) -> None:
        self.objective = LinExpr.lift(expr)
        self._check(self.objective)

    # -- queries -----------------------------------------------------------
    @property
    def binaries(self) -> List[int]:
        return [j for j, b in enumerate(self.binary) if b]

    def index(self, expr: LinExpr) -> int:
        if len(expr.terms) != 1 or expr.const != 0 or next(iter(expr.terms.values())) != 1.0:
            raise ValueError("expression is not a single variable")
        return next(iter(expr.terms))

    def compiled(self) -> "CompiledProgram":
        if self._compiled is None:
            self._compiled = CompiledProgram.build(self)
        return self._compiled

    def residuals(self, x: np.ndarray) -> Dict[str, float]:
        """Worst violation per row family at point ``x``."""
        x = np.asarray(x, dtype=float)
        lb, ub = np.array(self.lb), np.array(self.ub)
        out = {"bounds": float(max(0.0, np.max(lb - x, initial=0.0), np.max(x - ub, initial=0.0))),
               "eq": 0.0, "le": 0.0, "soc": 0.0, "binary": 0.0}
        for row in self.linear:
            v = row.expr.value(x)
            if row.kind == "eq":
                out["eq"] = max(out["eq"], abs(v))
            else:
                out["le"] = max(out["le"], v)
        for row in self.socs:
            out["soc"] = max(out["soc"], math.sqrt(sum(e.value(x) ** 2 for e in row.u)) - row.t.value(x))
        for row in self.rsocs:
            z, xx = row.z.value(x), row.x.value(x)
            t, u = z + xx, [z - xx] + [math.sqrt(2.0) * e.value(x) for e in row.y]
            out["soc"] = max(out["soc"], math.sqrt(sum(v * v for v in u)) - t, -z, -xx)
        for j in self.binaries:
            out["binary"] = max(out["binary"], min(abs(x[j]), abs(1 - x[j])))
        return out


def _rows_to_csr(exprs: Sequence[LinExpr], n: int):
    indptr = [0]
    indices: List[int] = []
    data: List[float] = []
    const = np.empty(len(exprs))
    for i, e in enumerate(exprs):
        for j, c in e.terms.items():
            if c != 0.0:
                indices.append(j)
                data.append(c)
        indptr.append(len(indices))
        const[i] = e.const
    mat = sp.csr_matrix((np.array(data, dtype=float), np.array(indices, dtype=np.int64),
                         np.array(indptr, dtype=np.int64)), shape=(len(exprs), n))
    return mat, const


@dataclass
class CompiledProgram:
    """Structural rows in ``s = h - G x`` form, bounds kept separate.

    ``eq_*``: zero cone; ``le_*``: nonnegative cone; ``soc_*``: stacked cones
    with sizes ``soc_dims``. Row-name maps point back into each block.
    """

    n: int
    c: np.ndarray
    c0: float
    eq_G: sp.csr_matrix
    eq_h: np.ndarray
    le_G: sp.csr_matrix
    le_h: np.ndarray
    soc_G: sp.csr_matrix
    soc_h: np.ndarray
    soc_dims: List[int]
    eq_names: List[str] = field(default_factory=list)
    le_names: List[str] = field(default_factory=list)
    soc_names: List[str] = field(default_factory=list)

    @classmethod
    def build(cls, prog: ConicProgram) -> "CompiledProgram":
        n = prog.n
        c = np.zeros(n)
        for j, v in prog.objective.terms.items():
            c[j] += v
        eq = [r for r in prog.linear if r.kind == "eq"]
        le = [r for r in prog.linear if r.kind == "le"]
        # expr == 0 / expr <= 0  ->  s = -const - (coefs) x
        eq_G, eq_c = _rows_to_csr([r.expr for r in eq], n)
        le_G, le_c = _rows_to_csr([r.expr for r in le], n)
        soc_exprs: List[LinExpr] = []
        dims: List[int] = []
        names: List[str] = []
        r2 = math.sqrt(2.0)
        for row in prog.socs:
            block = [row.t, *row.u]
            soc_exprs.extend(block)
            dims.append(len(block))
            names.append(row.name)
        for row in prog.rsocs:
            block = [row.z + row.x, row.z - row.x, *[r2 * e for e in row.y]]
            soc_exprs.extend(block)
            dims.append(len(block))
            names.append(row.name)
        # cone membership of +expr: s = expr = const + a x  ->  G = -a, h = const
        soc_G, soc_c = _rows_to_csr(soc_exprs, n)
        return cls(n=n, c=c, c0=prog.objective.const,
                   eq_G=eq_G, eq_h=-eq_c, le_G=le_G, le_h=-le_c,
                   soc_G=-soc_G, soc_h=soc_c, soc_dims=dims,
                   eq_names=[r.name for r in eq], le_names=[r.name for r in le],
                   soc_names=names)


@dataclass
class ConicSolution:
    status: str  # optimal | infeasible | unbounded | gap-limit | error
    x: Optional[np.ndarray]
    objective: float
    duals: Dict[str, np.ndarray] = field(default_factory=dict)
    gap: float = 0.0
    bound: float = -math.inf
    iterations: int = 0
    nodes: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "gap-limit") and self.x is not None

    def value(self, expr) -> float:
        if self.x is None:
            raise ValueError(f"no primal solution (status {self.status})")
        return LinExpr.lift(expr).value(self.x)
