"""Dense two-phase tableau simplex with Bland's rule.

Small and slow by design: it serves as an exact reference for the interval
duals on test-sized problems, independent of any external LP library.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-10


class LPInfeasible(Exception):
    pass


class LPUnbounded(Exception):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    pivots: int


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    factor = tab[:, col].copy()
    factor[row] = 0.0
    tab -= np.outer(factor, tab[row])


def _run(tab: np.ndarray, basis: list[int], allowed: np.ndarray, max_pivots: int) -> int:
    """Iterate on a tableau whose last row holds reduced costs and last column the rhs."""
    pivots = 0
    while True:
        reduced = tab[-1, :-1]
        candidates = np.flatnonzero((reduced < -EPS) & allowed)
        if candidates.size == 0:
            return pivots
        col = int(candidates[0])
        column = tab[:-1, col]
        positive = np.flatnonzero(column > EPS)
        if positive.size == 0:
            raise LPUnbounded("objective unbounded below")
        ratios = tab[positive, -1] / column[positive]
        best = ratios.min()
        ties = positive[ratios <= best + EPS * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(tab, row, col)
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("simplex pivot limit exceeded")


def solve_lp(
    c: np.ndarray,
    A_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    A_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    max_pivots: int = 100_000,
) -> LPResult:
    """Minimize ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    nvar = c.size
    A_ub = np.zeros((0, nvar)) if A_ub is None else np.asarray(A_ub, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, nvar)) if A_eq is None else np.asarray(A_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    n_ub, n_eq = A_ub.shape[0], A_eq.shape[0]
    rows = n_ub + n_eq

    # standard form: [A_ub I; A_eq 0] [x; s] = b, then flip rows with negative rhs
    A = np.zeros((rows, nvar + n_ub))
    A[:n_ub, :nvar] = A_ub
    A[:n_ub, nvar:] = np.eye(n_ub)
    A[n_ub:, :nvar] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    ncols = nvar + n_ub

    tab = np.zeros((rows + 1, ncols + rows + 1))
    tab[:rows, :ncols] = A
    tab[:rows, ncols:ncols + rows] = np.eye(rows)
    tab[:rows, -1] = b
    basis = list(range(ncols, ncols + rows))
    # phase one: minimize the sum of artificials
    tab[-1, :ncols] = -A.sum(axis=0)
    tab[-1, -1] = -b.sum()
    allowed = np.ones(ncols + rows, dtype=bool)
    pivots = _run(tab, basis, allowed, max_pivots)
    if -tab[-1, -1] > 1e-8 * max(1.0, np.abs(b).max(initial=0.0)):
        raise LPInfeasible("no feasible point")

    # drive artificials out of the basis; drop redundant rows
    keep = []
    for r in range(rows):
        if basis[r] >= ncols:
            nonzero = np.flatnonzero(np.abs(tab[r, :ncols]) > 1e-9)
            if nonzero.size == 0:
                continue
            _pivot(tab, r, int(nonzero[0]))
            basis[r] = int(nonzero[0])
        keep.append(r)
    tab = np.vstack([tab[keep][:, list(range(ncols)) + [-1]], np.zeros((1, ncols + 1))])
    basis = [basis[r] for r in keep]

    # phase two
    cost = np.zeros(ncols)
    cost[:nvar] = c
    tab[-1, :ncols] = cost
    tab[-1, -1] = 0.0
    for r, j in enumerate(basis):
        tab[-1] -= cost[j] * tab[r]
    pivots += _run(tab, basis, np.ones(ncols, dtype=bool), max_pivots)

    x = np.zeros(ncols)
    for r, j in enumerate(basis):
        x[j] = tab[r, -1]
    return LPResult(x[:nvar], float(c @ x[:nvar]), pivots)
