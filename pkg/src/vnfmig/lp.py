"""Dense two-phase tableau simplex for the small LPs of the follower stage.

Problems have the form::

    maximize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                x >= 0

Pivoting uses Dantzig's rule with lowest-index tie breaks and falls back to
Bland's least-index rule for good once a run of degenerate pivots is seen,
so every solve is deterministic and terminates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BudgetExceededError, InvalidParameterError, NumericalError

PIVOT_TOL = 1e-9
COST_TOL = 1e-9
FEAS_TOL = 1e-8
DEFAULT_BUDGET = 10_000
_DEGENERATE_RUN = 20


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = _block(self.A_ub, self.b_ub, n, "ub")
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, n, "eq")
        for arr in (self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq):
            if not np.all(np.isfinite(arr)):
                raise InvalidParameterError("LP coefficients must be finite")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def nonzeros(self) -> int:
        return int(np.count_nonzero(self.A_ub) + np.count_nonzero(self.A_eq))


def _block(A, b, n: int, tag: str) -> tuple[np.ndarray, np.ndarray]:
    if A is None:
        if b is not None and np.size(b):
            raise InvalidParameterError(f"b_{tag} given without A_{tag}")
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[0] == 0:
        A = A.reshape(0, n)
    if A.shape != (b.size, n):
        raise InvalidParameterError(f"A_{tag} has shape {A.shape}, expected ({b.size}, {n})")
    return A, b


@dataclass
class LPResult:
    status: Status
    x: np.ndarray | None
    objective: float
    iterations: int = 0
    tableau: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Tableau:
    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T
        self.basis = basis
        self.iterations = 0
        self.bland = False
        self._degenerate = 0

    def pivot(self, row: int, col: int) -> None:
        T = self.T
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row - 1] = col
        self.iterations += 1

    def run(self, allowed: np.ndarray, max_iter: int) -> Status:
        """Iterate on objective row 0 until optimal or unbounded."""
        T = self.T
        while True:
            if self.iterations > max_iter:
                raise NumericalError(f"simplex exceeded {max_iter} pivots")
            reduced = np.where(allowed, T[0, :-1], 0.0)
            candidates = np.flatnonzero(reduced < -COST_TOL)
            if candidates.size == 0:
                return Status.OPTIMAL
            if self.bland:
                col = int(candidates[0])
            else:
                col = int(candidates[np.argmin(reduced[candidates])])
            column = T[1:, col]
            rows = np.flatnonzero(column > PIVOT_TOL)
            if rows.size == 0:
                return Status.UNBOUNDED
            ratios = T[1 + rows, -1] / column[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            row = 1 + int(min(tied, key=lambda r: self.basis[r]))
            if best <= 1e-12:
                self._degenerate += 1
                if self._degenerate >= _DEGENERATE_RUN:
                    self.bland = True
            else:
                self._degenerate = 0
            self.pivot(row, col)


def solve(
    lp: LinearProgram,
    budget: int = DEFAULT_BUDGET,
    keep_tableau: bool = False,
) -> LPResult:
    """Solve ``lp``; statuses are reported, never raised."""
    if lp.nonzeros > budget:
        raise BudgetExceededError(f"LP has {lp.nonzeros} nonzeros, budget is {budget}")
    n = lp.n_vars
    m_ub, m_eq = lp.b_ub.size, lp.b_eq.size
    m = m_ub + m_eq

    A = np.vstack([lp.A_ub, lp.A_eq])
    b = np.concatenate([lp.b_ub, lp.b_eq])
    # slack (+1) for <= rows; flip rows with negative rhs
    slack = np.zeros((m, m_ub))
    slack[np.arange(m_ub), np.arange(m_ub)] = 1.0
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    slack = slack * sign[:, None]
    b = b * sign

    # rows whose slack is +1 start with the slack basic, the rest need an artificial
    needs_art = np.ones(m, dtype=bool)
    needs_art[:m_ub] = sign[:m_ub] < 0
    art_rows = np.flatnonzero(needs_art)
    n_art = art_rows.size
    art = np.zeros((m, n_art))
    art[art_rows, np.arange(n_art)] = 1.0

    width = n + m_ub + n_art
    T = np.zeros((m + 1, width + 1))
    T[1:, :n] = A
    T[1:, n : n + m_ub] = slack
    T[1:, n + m_ub : width] = art
    T[1:, -1] = b
    basis = [0] * m
    for i in range(m):
        basis[i] = n + i if not needs_art[i] else n + m_ub + int(np.searchsorted(art_rows, i))
    tab = _Tableau(T, basis)
    max_iter = 50 * (m + width) + 100

    if n_art:
        # phase 1: maximize -sum(artificials)
        T[0, :] = 0.0
        T[0, n + m_ub : width] = 1.0
        for i in art_rows:
            T[0] -= T[1 + i]
        allowed = np.ones(width, dtype=bool)
        tab.run(allowed, max_iter)
        scale = max(1.0, float(np.abs(b).max(initial=0.0)))
        if -T[0, -1] > FEAS_TOL * scale:
            return LPResult(Status.INFEASIBLE, None, float("nan"), tab.iterations)
        _drive_out_artificials(tab, n + m_ub)

    # phase 2
    T = tab.T
    T[0, :] = 0.0
    T[0, :n] = -lp.c
    for i, j in enumerate(tab.basis):
        if T[0, j] != 0.0:
            T[0] -= T[0, j] * T[1 + i]
    allowed = np.zeros(T.shape[1] - 1, dtype=bool)
    allowed[: n + m_ub] = True
    status = tab.run(allowed, max_iter)
    if status is Status.UNBOUNDED:
        return LPResult(status, None, float("inf"), tab.iterations)

    x = np.zeros(T.shape[1] - 1)
    for i, j in enumerate(tab.basis):
        x[j] = T[1 + i, -1]
    x = np.maximum(x[:n], 0.0)
    _check_solution(lp, x)
    return LPResult(
        Status.OPTIMAL,
        x,
        float(lp.c @ x),
        tab.iterations,
        T.copy() if keep_tableau else None,
    )


def _drive_out_artificials(tab: _Tableau, first_art: int) -> None:
    """Pivot zero-level artificials out of the basis; drop redundant rows."""
    row = 1
    while row < tab.T.shape[0]:
        if tab.basis[row - 1] >= first_art:
            entries = np.abs(tab.T[row, :first_art])
            cols = np.flatnonzero(entries > PIVOT_TOL)
            if cols.size:
                tab.pivot(row, int(cols[0]))
            else:
                tab.T = np.delete(tab.T, row, axis=0)
                del tab.basis[row - 1]
                continue
        row += 1


def _check_solution(lp: LinearProgram, x: np.ndarray) -> None:
    scale = 1.0 + float(np.abs(x).max(initial=0.0))
    if lp.b_ub.size:
        viol = (lp.A_ub @ x - lp.b_ub).max()
        if viol > 1e-6 * scale * (1.0 + np.abs(lp.A_ub).max()):
            raise NumericalError(f"simplex returned a point violating A_ub by {viol:.3e}")
    if lp.b_eq.size:
        viol = np.abs(lp.A_eq @ x - lp.b_eq).max()
        if viol > 1e-6 * scale * (1.0 + np.abs(lp.A_eq).max()):
            raise NumericalError(f"simplex returned a point violating A_eq by {viol:.3e}")


def dump_tableau(result: LPResult) -> str:
    """Human-readable tableau of a solve run with ``keep_tableau=True``."""
    if result.tableau is None:
        return "<no tableau kept>"
    with np.printoptions(precision=4, suppress=True, linewidth=160):
        return str(result.tableau)
