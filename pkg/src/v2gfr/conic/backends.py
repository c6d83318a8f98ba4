"""Continuous conic solves.

The default backend is Clarabel, an in-process primal-dual interior-point
method on the homogeneous embedding over symmetric cones. cvxopt's
``conelp`` is a second, independent interior-point code used to cross-check.
An ``external`` backend exchanges the plain-text problem format with a
subprocess.
"""

from __future__ import annotations

import logging
import math
import os
import subprocess
import tempfile
from typing import Dict, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .program import CompiledProgram, ConicProgram, ConicSolution

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
GAP_TOL = 1e-7


def _bound_rows(lb: np.ndarray, ub: np.ndarray):
    """Bounds as (fixed rows, inequality rows) in ``s = h - G x`` form."""
    n = len(lb)
    fixed = np.flatnonzero(np.isfinite(lb) & (lb == ub))
    lo = np.flatnonzero(np.isfinite(lb) & (lb != ub))
    hi = np.flatnonzero(np.isfinite(ub) & (lb != ub))
    G_fix = sp.csr_matrix((np.ones(len(fixed)), (np.arange(len(fixed)), fixed)), shape=(len(fixed), n))
    G_ineq = sp.vstack([
        sp.csr_matrix((-np.ones(len(lo)), (np.arange(len(lo)), lo)), shape=(len(lo), n)),
        sp.csr_matrix((np.ones(len(hi)), (np.arange(len(hi)), hi)), shape=(len(hi), n)),
    ]).tocsr()
    h_ineq = np.concatenate([-lb[lo], ub[hi]])
    return G_fix, lb[fixed], G_ineq, h_ineq


def _stack(cp: CompiledProgram, lb, ub):
    G_fix, h_fix, G_bnd, h_bnd = _bound_rows(lb, ub)
    G_zero = sp.vstack([cp.eq_G, G_fix]).tocsc()
    h_zero = np.concatenate([cp.eq_h, h_fix])
    G_nn = sp.vstack([cp.le_G, G_bnd]).tocsc()
    h_nn = np.concatenate([cp.le_h, h_bnd])
    return G_zero, h_zero, G_nn, h_nn


def _dual_map(cp: CompiledProgram, z_eq, z_le, z_soc) -> Dict[str, np.ndarray]:
    duals: Dict[str, np.ndarray] = {}
    for i, name in enumerate(cp.eq_names):
        if name:
            duals[name] = np.array([z_eq[i]])
    for i, name in enumerate(cp.le_names):
        if name:
            duals[name] = np.array([z_le[i]])
    off = 0
    for d, name in zip(cp.soc_dims, cp.soc_names):
        if name:
            duals[name] = np.array(z_soc[off:off + d])
        off += d
    return duals


def _trivially_infeasible(lb, ub) -> bool:
    return bool(np.any(lb > ub))


def solve_clarabel(prog: ConicProgram, lb=None, ub=None, tol: float = FEAS_TOL,
                   max_iter: int = 200) -> ConicSolution:
    import clarabel

    cp = prog.compiled()
    lb = np.asarray(prog.lb if lb is None else lb, dtype=float)
    ub = np.asarray(prog.ub if ub is None else ub, dtype=float)
    if _trivially_infeasible(lb, ub):
        return ConicSolution("infeasible", None, math.inf, message="crossed bounds")
    G_zero, h_zero, G_nn, h_nn = _stack(cp, lb, ub)
    A = sp.vstack([G_zero, G_nn, cp.soc_G]).tocsc()
    b = np.concatenate([h_zero, h_nn, cp.soc_h])
    cones = []
    if G_zero.shape[0]:
        cones.append(clarabel.ZeroConeT(G_zero.shape[0]))
    if G_nn.shape[0]:
        cones.append(clarabel.NonnegativeConeT(G_nn.shape[0]))
    for d in cp.soc_dims:
        cones.append(clarabel.SecondOrderConeT(d))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.presolve_enable = True
    P = sp.csc_matrix((cp.n, cp.n))
    solver = clarabel.DefaultSolver(P, cp.c, A, b, cones, settings)
    res = solver.solve()
    status = str(res.status).split(".")[-1]
    iters = int(getattr(res, "iterations", 0))
    if status in ("Solved", "AlmostSolved"):
        x = np.array(res.x)
        z = np.array(res.z)
        m0, m1 = G_zero.shape[0], G_nn.shape[0]
        ne, nl = cp.eq_G.shape[0], cp.le_G.shape[0]
        duals = _dual_map(cp, z[:ne], z[m0:m0 + nl], z[m0 + m1:])
        return ConicSolution("optimal", x, float(cp.c @ x + cp.c0), duals=duals,
                             bound=float(cp.c @ x + cp.c0), iterations=iters,
                             message=status)
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return ConicSolution("infeasible", None, math.inf, iterations=iters, message=status)
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return ConicSolution("unbounded", None, -math.inf, iterations=iters, message=status)
    log.warning("clarabel returned %s", status)
    return ConicSolution("error", None, math.nan, iterations=iters, message=status)


def solve_cvxopt(prog: ConicProgram, lb=None, ub=None, tol: float = FEAS_TOL) -> ConicSolution:
    from cvxopt import matrix, solvers, spmatrix

    cp = prog.compiled()
    lb = np.asarray(prog.lb if lb is None else lb, dtype=float)
    ub = np.asarray(prog.ub if ub is None else ub, dtype=float)
    if _trivially_infeasible(lb, ub):
        return ConicSolution("infeasible", None, math.inf, message="crossed bounds")
    G_zero, h_zero, G_nn, h_nn = _stack(cp, lb, ub)

    def spm(m):
        m = sp.coo_matrix(m)
        return spmatrix(m.data.tolist(), m.row.tolist(), m.col.tolist(), size=m.shape)

    G = sp.vstack([G_nn, cp.soc_G]).tocsr()
    h = np.concatenate([h_nn, cp.soc_h])
    dims = {"l": G_nn.shape[0], "q": list(cp.soc_dims), "s": []}
    kwargs = {}
    if G_zero.shape[0]:
        kwargs = {"A": spm(G_zero), "b": matrix(h_zero)}
    opts = {"show_progress": False, "abstol": tol, "reltol": tol, "feastol": tol,
            "maxiters": 200}
    try:
        res = solvers.conelp(matrix(cp.c), spm(G), matrix(h), dims, options=opts, **kwargs)
    except (ValueError, ArithmeticError) as exc:
        return ConicSolution("error", None, math.nan, message=str(exc))
    status = res["status"]
    if status == "optimal" or (status == "unknown" and res["x"] is not None
                               and res.get("relative gap") is not None
                               and res["relative gap"] < 1e-5):
        x = np.array(res["x"]).ravel()
        zs = np.array(res["z"]).ravel()
        ys = np.array(res["y"]).ravel() if G_zero.shape[0] else np.zeros(0)
        nl = cp.le_G.shape[0]
        duals = _dual_map(cp, ys[:cp.eq_G.shape[0]], zs[:nl], zs[G_nn.shape[0]:])
        obj = float(cp.c @ x + cp.c0)
        return ConicSolution("optimal", x, obj, duals=duals, bound=obj,
                             iterations=int(res.get("iterations", 0)), message=status)
    if status == "primal infeasible":
        return ConicSolution("infeasible", None, math.inf, message=status)
    if status == "dual infeasible":
        return ConicSolution("unbounded", None, -math.inf, message=status)
    return ConicSolution("error", None, math.nan, message=status)


def solve_external(prog: ConicProgram, command: Sequence[str], lb=None, ub=None) -> ConicSolution:
    """Run ``command PROBLEM SOLUTION`` on the plain-text format and read the result."""
    from .textio import dump_program, load_solution

    work = prog
    if lb is not None or ub is not None:
        work = _with_bounds(prog, lb, ub)
    with tempfile.TemporaryDirectory() as tmp:
        pfile = os.path.join(tmp, "problem.cone")
        sfile = os.path.join(tmp, "solution.txt")
        dump_program(work, pfile)
        proc = subprocess.run([*command, pfile, sfile], capture_output=True, text=True)
        if proc.returncode != 0 or not os.path.exists(sfile):
            return ConicSolution("error", None, math.nan,
                                 message=f"external solver failed: {proc.stderr.strip()}")
        return load_solution(sfile)


def _with_bounds(prog: ConicProgram, lb, ub) -> ConicProgram:
    import copy

    other = copy.copy(prog)
    other.lb = list(prog.lb if lb is None else np.asarray(lb, dtype=float))
    other.ub = list(prog.ub if ub is None else np.asarray(ub, dtype=float))
    other._compiled = None
    return other


BACKENDS = {"clarabel": solve_clarabel, "cvxopt": solve_cvxopt}


def solve_continuous(prog: ConicProgram, tol: float = FEAS_TOL, backend: str = "clarabel",
                     lb=None, ub=None, relax_binaries: bool = True,
                     external_command: Optional[Sequence[str]] = None) -> ConicSolution:
    """Solve with binaries relaxed to their bounds (``[0, 1]`` unless fixed)."""
    if not relax_binaries and prog.binaries:
        raise ValueError("program has binaries; use solve_mixed or relax them")
    if backend == "external":
        if not external_command:
            raise ValueError("external backend needs external_command")
        return solve_external(prog, external_command, lb, ub)
    try:
        fn = BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}") from None
    return fn(prog, lb=lb, ub=ub, tol=tol)
