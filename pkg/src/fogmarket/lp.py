"""Dense linear programming behind a small maximize-form interface.

Hosts the welfare/max-min baselines, the Pareto-improvement search, and the
verifier's independent best-response check. Solves delegate to SciPy's HiGHS
backend; infeasible and unbounded outcomes raise distinct exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog


class LPError(RuntimeError):
    """LP solve failed for a reason other than infeasibility/unboundedness."""


class LPInfeasibleError(LPError):
    pass


class LPUnboundedError(LPError):
    pass


@dataclass(frozen=True, eq=False)
class DenseLP:
    """maximize c @ x  s.t.  A_ub @ x <= b_ub,  A_eq @ x == b_eq,  bounds.

    ``bounds`` is a per-variable list of (low, high) pairs; ``None`` means
    unbounded on that side. Defaults to x >= 0.
    """

    c: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    bounds: tuple | None = None

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        object.__setattr__(self, "c", c)
        n = c.size
        for name in ("a_ub", "a_eq"):
            mat = getattr(self, name)
            if mat is not None:
                mat = np.atleast_2d(np.asarray(mat, dtype=float))
                if mat.shape[1] != n:
                    raise ValueError(f"{name} has {mat.shape[1]} columns, expected {n}")
                object.__setattr__(self, name, mat)
        for mat, rhs in (("a_ub", "b_ub"), ("a_eq", "b_eq")):
            has_mat = getattr(self, mat) is not None
            has_rhs = getattr(self, rhs) is not None
            if has_mat != has_rhs:
                raise ValueError(f"{mat} and {rhs} must be given together")
            if has_rhs:
                vec = np.atleast_1d(np.asarray(getattr(self, rhs), dtype=float))
                if vec.size != getattr(self, mat).shape[0]:
                    raise ValueError(f"{rhs} length does not match {mat}")
                object.__setattr__(self, rhs, vec)
        arrays = [self.c] + [getattr(self, k) for k in ("a_ub", "b_ub", "a_eq", "b_eq")
                             if getattr(self, k) is not None]
        if any(not np.all(np.isfinite(arr)) for arr in arrays):
            raise ValueError("LP data must be finite")

    @property
    def num_vars(self) -> int:
        return self.c.size


@dataclass(frozen=True, eq=False)
class LPSolution:
    value: float
    x: np.ndarray
    ub_duals: np.ndarray | None   # multipliers of A_ub rows, nonnegative
    eq_duals: np.ndarray | None


def solve_lp(lp: DenseLP) -> LPSolution:
    """Solve to optimality; relative accuracy around 1e-8 or better."""
    bounds = lp.bounds if lp.bounds is not None else [(0, None)] * lp.num_vars

    def attempt(presolve: bool):
        return linprog(
            -lp.c,
            A_ub=lp.a_ub, b_ub=lp.b_ub,
            A_eq=lp.a_eq, b_eq=lp.b_eq,
            bounds=bounds,
            method="highs",
            options={"presolve": presolve},
        )

    res = attempt(True)
    if res.status in (2, 3):
        # presolve can misjudge razor-thin feasible sets; recheck without it
        res = attempt(False)
    if res.status == 2:
        raise LPInfeasibleError("LP is infeasible")
    if res.status == 3:
        raise LPUnboundedError("LP is unbounded")
    if not res.success:
        raise LPError(f"LP solve failed: {res.message}")
    ub_duals = None if lp.a_ub is None else -np.asarray(res.ineqlin.marginals)
    eq_duals = None if lp.a_eq is None else -np.asarray(res.eqlin.marginals)
    return LPSolution(value=-float(res.fun), x=np.asarray(res.x), ub_duals=ub_duals,
                      eq_duals=eq_duals)
