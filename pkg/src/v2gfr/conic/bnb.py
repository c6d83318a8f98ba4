"""Best-first branch-and-bound over the binary variables of a conic program."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from typing import Dict, Iterable, Optional

import numpy as np

from .backends import FEAS_TOL, solve_continuous
from .program import ConicProgram, ConicSolution

log = logging.getLogger(__name__)

INT_TOL = 1e-6
DEFAULT_GAP = 1e-3


def _rel_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    if incumbent - bound <= 1e-9:
        return 0.0
    return (incumbent - bound) / max(abs(incumbent), 1e-9)


def solve_mixed(prog: ConicProgram, gap: float = DEFAULT_GAP, node_limit: int = 500,
                tol: float = FEAS_TOL, backend: str = "clarabel",
                hints: Optional[Iterable[Dict[int, float]]] = None,
                rounding: bool = True) -> ConicSolution:
    """Solve a mixed-binary conic program to relative ``gap``.

    Nodes are explored lowest-bound first. Branching picks the most fractional
    binary, lowest index on ties. ``hints`` are partial binary assignments tried
    as starting incumbents; ``rounding`` also tries the rounded root relaxation.
    Hitting ``node_limit`` returns the incumbent with status ``gap-limit``.
    """
    bins = prog.binaries
    if not bins:
        return solve_continuous(prog, tol=tol, backend=backend)
    lb0 = np.array(prog.lb, dtype=float)
    ub0 = np.array(prog.ub, dtype=float)
    bins_arr = np.array(bins)

    best: Optional[ConicSolution] = None
    n_solves = 0

    def relax(lb, ub) -> ConicSolution:
        nonlocal n_solves
        n_solves += 1
        return solve_continuous(prog, tol=tol, backend=backend, lb=lb, ub=ub)

    def try_assignment(assign: Dict[int, float]):
        """Solve with binaries fixed; remaining free binaries fixed by rounding later."""
        nonlocal best
        lb, ub = lb0.copy(), ub0.copy()
        for j, v in assign.items():
            lb[j] = ub[j] = v
        sol = relax(lb, ub)
        if not sol.ok:
            return
        frac = _fractional(sol.x, bins_arr, lb, ub)
        if frac.size:
            # round what the hint left free and re-solve once
            for j in frac:
                lb[j] = ub[j] = float(round(sol.x[j]))
            sol = relax(lb, ub)
            if not sol.ok:
                return
        _snap(sol, bins_arr)
        if best is None or sol.objective < best.objective:
            best = sol

    for hint in hints or ():
        try_assignment(dict(hint))

    root = relax(lb0, ub0)
    if root.status == "unbounded":
        return root
    if not root.ok:
        if best is not None:
            best.status, best.gap, best.nodes = "optimal", 0.0, n_solves
            return best
        return ConicSolution("infeasible", None, math.inf, nodes=n_solves,
                             message=f"root relaxation {root.status}")
    if rounding:
        try_assignment({int(j): float(round(root.x[j])) for j in bins})

    counter = itertools.count()
    heap = [(root.objective, next(counter), lb0, ub0, root)]
    explored = 0
    global_bound = root.objective
    while heap:
        global_bound = heap[0][0]
        if best is not None and _rel_gap(best.objective, global_bound) <= gap:
            break
        if explored >= node_limit:
            break
        bound, _, lb, ub, sol = heapq.heappop(heap)
        explored += 1
        if best is not None and _rel_gap(best.objective, bound) <= gap:
            continue
        frac = _fractional(sol.x, bins_arr, lb, ub)
        if frac.size == 0:
            # integral relaxation: fix and re-solve to drop round-off in the binaries
            lbf, ubf = lb.copy(), ub.copy()
            for j in bins:
                lbf[j] = ubf[j] = float(round(sol.x[j]))
            fixed = relax(lbf, ubf)
            if fixed.ok:
                _snap(fixed, bins_arr)
                if best is None or fixed.objective < best.objective:
                    best = fixed
            continue
        dist = np.minimum(sol.x[frac] - np.floor(sol.x[frac]),
                          np.ceil(sol.x[frac]) - sol.x[frac])
        j = int(frac[np.argmax(dist)])  # argmax returns the first (lowest index) maximum
        for v in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = v
            child = relax(clb, cub)
            if not child.ok:
                continue
            if best is not None and _rel_gap(best.objective, child.objective) <= gap:
                continue
            heapq.heappush(heap, (child.objective, next(counter), clb, cub, child))
    else:
        global_bound = best.objective if best is not None else math.inf

    if best is None:
        status = "gap-limit" if heap else "infeasible"
        return ConicSolution(status, None, math.inf, nodes=n_solves, bound=global_bound,
                             message="no integer-feasible point found")
    bound = min(global_bound, best.objective)
    best.bound = bound
    best.gap = _rel_gap(best.objective, bound)
    best.nodes = n_solves
    best.status = "optimal" if best.gap <= gap else "gap-limit"
    return best


def _fractional(x, bins_arr, lb, ub):
    free = bins_arr[lb[bins_arr] != ub[bins_arr]]
    xv = x[free]
    return free[np.minimum(np.abs(xv), np.abs(1.0 - xv)) > INT_TOL]


def _snap(sol: ConicSolution, bins_arr) -> None:
    sol.x = sol.x.copy()
    sol.x[bins_arr] = np.round(sol.x[bins_arr])
