"""Plain-text conic problem and solution files.

Problem file, one record per line, ``#`` starts a comment::

    format_version 1
    var <name> <lb> <ub> <C|B>                 # repeated, index = order
    objective <const> <j>:<coef> ...
    eq <name> <const> <j>:<coef> ...           # const + a.x == 0
    le <name> <const> <j>:<coef> ...           # const + a.x <= 0
    soc <name> <dim>                           # followed by dim 'expr' lines:
    expr <const> <j>:<coef> ...                #   first is t, rest are u (||u|| <= t)
    rsoc <name> <dim>                          # dim expr lines: z, x, y... (2zx >= ||y||^2)
    end

Bounds use ``-inf`` / ``inf``. Names must not contain whitespace (``-`` for
none). Solution file::

    format_version 1
    status <status>
    objective <value>
    x <v0> <v1> ...
    dual <name> <v> ...                        # optional, repeated
"""

from __future__ import annotations

import math
from typing import List

import numpy as np

from .program import ConicProgram, ConicSolution, LinExpr

FORMAT_VERSION = 1


def _fmt_expr(e: LinExpr) -> str:
    parts = [repr(e.const)] + [f"{j}:{c!r}" for j, c in sorted(e.terms.items())]
    return " ".join(parts)


def _name(s: str) -> str:
    if not s:
        return "-"
    if any(ch.isspace() for ch in s):
        raise ValueError(f"row/variable name {s!r} contains whitespace")
    return s


def dump_program(prog: ConicProgram, path) -> None:
    lines: List[str] = [f"format_version {FORMAT_VERSION}"]
    for name, lo, hi, b in zip(prog.names, prog.lb, prog.ub, prog.binary):
        lines.append(f"var {_name(name)} {lo!r} {hi!r} {'B' if b else 'C'}")
    lines.append(f"objective {_fmt_expr(prog.objective)}")
    for row in prog.linear:
        lines.append(f"{row.kind} {_name(row.name)} {_fmt_expr(row.expr)}")
    for row in prog.socs:
        lines.append(f"soc {_name(row.name)} {1 + len(row.u)}")
        lines.extend(f"expr {_fmt_expr(e)}" for e in [row.t, *row.u])
    for row in prog.rsocs:
        lines.append(f"rsoc {_name(row.name)} {2 + len(row.y)}")
        lines.extend(f"expr {_fmt_expr(e)}" for e in [row.z, row.x, *row.y])
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_expr(tokens) -> LinExpr:
    const = float(tokens[0])
    terms = {}
    for tok in tokens[1:]:
        j, c = tok.split(":")
        terms[int(j)] = terms.get(int(j), 0.0) + float(c)
    return LinExpr(terms, const)


def _unname(s: str) -> str:
    return "" if s == "-" else s


def load_program(path) -> ConicProgram:
    with open(path) as fh:
        raw = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [ln for ln in raw if ln]
    if not lines or lines[0].split() != ["format_version", str(FORMAT_VERSION)]:
        raise ValueError(f"{path}: missing or unsupported format_version")
    prog = ConicProgram()
    i = 1
    while i < len(lines):
        tok = lines[i].split()
        kind = tok[0]
        if kind == "end":
            break
        if kind == "var":
            lo, hi = float(tok[2]), float(tok[3])
            binary = tok[4] == "B"
            prog.names.append(_unname(tok[1]))
            prog.lb.append(lo)
            prog.ub.append(hi)
            prog.binary.append(binary)
        elif kind == "objective":
            prog.objective = _parse_expr(tok[1:])
        elif kind in ("eq", "le"):
            e = _parse_expr(tok[2:])
            (prog.add_eq if kind == "eq" else prog.add_le)(e, 0.0, name=_unname(tok[1]))
        elif kind in ("soc", "rsoc"):
            dim = int(tok[2])
            exprs = []
            for k in range(dim):
                sub = lines[i + 1 + k].split()
                if sub[0] != "expr":
                    raise ValueError(f"{path}: expected expr line after {kind}")
                exprs.append(_parse_expr(sub[1:]))
            if kind == "soc":
                prog.add_soc(exprs[0], exprs[1:], name=_unname(tok[1]))
            else:
                prog.add_rsoc(exprs[0], exprs[1], exprs[2:], name=_unname(tok[1]))
            i += dim
        else:
            raise ValueError(f"{path}: unknown record {kind!r}")
        i += 1
    else:
        raise ValueError(f"{path}: missing 'end'")
    return prog


def dump_solution(sol: ConicSolution, path) -> None:
    lines = [f"format_version {FORMAT_VERSION}", f"status {sol.status}",
             f"objective {sol.objective!r}"]
    if sol.x is not None:
        lines.append("x " + " ".join(repr(float(v)) for v in sol.x))
    for name, vals in sol.duals.items():
        lines.append(f"dual {_name(name)} " + " ".join(repr(float(v)) for v in vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_solution(path) -> ConicSolution:
    status, obj, x, duals = "error", math.nan, None, {}
    with open(path) as fh:
        for ln in fh:
            tok = ln.split()
            if not tok:
                continue
            if tok[0] == "status":
                status = tok[1]
            elif tok[0] == "objective":
                obj = float(tok[1])
            elif tok[0] == "x":
                x = np.array([float(v) for v in tok[1:]])
            elif tok[0] == "dual":
                duals[_unname(tok[1])] = np.array([float(v) for v in tok[2:]])
    return ConicSolution(status, x, obj, duals=duals, bound=obj)
