from .backends import FEAS_TOL, solve_continuous
from .bnb import DEFAULT_GAP, solve_mixed
from .program import ConicProgram, ConicSolution, LinExpr, lsum
from .textio import dump_program, dump_solution, load_program, load_solution

__all__ = [
    "ConicProgram", "ConicSolution", "LinExpr", "lsum",
    "solve_continuous", "solve_mixed", "FEAS_TOL", "DEFAULT_GAP",
    "dump_program", "load_program", "dump_solution", "load_solution",
]
