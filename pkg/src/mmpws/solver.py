"""Convex solvers for the minimax predictor and the interval duals.

The minimax parameter minimizes

    F(mu) = -tau_hat @ mu + lam @ |mu| + mean_i logsumexp_y(Phi[i, y] @ mu)

and the interval endpoints are the optimal values of the piecewise-linear
problems

    upper = min_mu  -tau_hat @ mu + lam @ |mu| + mean_i max_y (Phi[i, y] @ mu + c[i, y])
    lower = max_mu  -tau_hat @ mu - lam @ |mu| + mean_i min_y (Phi[i, y] @ mu + c[i, y])

with ``c[i, y] = n / |I|`` for members of the group at the target class and 0
otherwise. ``primal_oracle`` solves the corresponding primal LPs over the
per-instance distributions directly.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import EmptyGroupError, InfeasibleError, WSError
from .features import FeatureMatrix
from .simplex import LPInfeasible, solve_lp
from .uncertainty import ExpectationEstimate

UNBOUNDED_LEVEL = -1e9
LP_ATTEMPTS = (("highs", {}), ("highs", {"presolve": False}), ("highs-ipm", {}))


@dataclass(frozen=True)
class StepRule:
    kind: str = "backtracking"
    beta: float = 0.5
    c: float = 0.5
    eta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("backtracking", "fixed", "diminishing"):
            raise WSError(f"unknown step rule {self.kind!r}", "solver")
        if not (0 < self.beta < 1 and self.c > 0 and self.eta > 0):
            raise WSError("step parameters must be positive (beta in (0, 1))", "solver")


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``tol`` is the interval tolerance (subgradient stopping and the containment
    cushion); ``grad_tol`` bounds the optimality residual of the minimax
    parameter. ``mmp_method`` is ``prox_grad`` or ``stochastic``;
    ``ci_method`` is ``lp`` or ``subgradient``.
    """

    max_iters: int = 5000
    tol: float = 1e-5
    step_rule: StepRule = field(default_factory=StepRule)
    seed: int = 0
    averaging: bool = True
    grad_tol: float = 1e-9
    mmp_method: str = "prox_grad"
    mmp_max_iters: int = 50_000
    ci_method: str = "lp"
    batch_size: int = 256

    def __post_init__(self):
        if self.tol <= 0 or self.grad_tol <= 0:
            raise WSError("tolerances must be positive", "solver")
        if self.max_iters < 1 or self.mmp_max_iters < 1 or self.batch_size < 1:
            raise WSError("iteration counts must be at least 1", "solver")
        if self.mmp_method not in ("prox_grad", "stochastic"):
            raise WSError(f"unknown mmp_method {self.mmp_method!r}", "solver")
        if self.ci_method not in ("lp", "subgradient"):
            raise WSError(f"unknown ci_method {self.ci_method!r}", "solver")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SolverConfig":
        d = dict(d)
        if "step_rule" in d:
            d["step_rule"] = StepRule(**d["step_rule"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise WSError(f"bad solver config: {exc}", "solver") from None


@dataclass(frozen=True, eq=False)
class SolveReport:
    mu: np.ndarray
    objective: float
    iterations: int
    converged: bool
    objective_trace: tuple[float, ...] = ()


# ------------------------------------------------------------ minimax objective


def _scores(features: FeatureMatrix, mu: np.ndarray) -> np.ndarray:
    return features.values @ mu


def _logsumexp_rows(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise log-sum-exp and softmax with max subtraction."""
    top = scores.max(axis=1, keepdims=True)
    ex = np.exp(scores - top)
    total = ex.sum(axis=1, keepdims=True)
    return (top + np.log(total))[:, 0], ex / total


def smooth_part(features: FeatureMatrix, tau_hat: np.ndarray, mu: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient of -tau_hat @ mu + mean_i logsumexp_y(Phi[i, y] @ mu)."""
    lse, soft = _logsumexp_rows(_scores(features, mu))
    value = -tau_hat @ mu + lse.mean()
    grad = -tau_hat + np.einsum("ny,nyd->d", soft, features.values) / features.n
    return float(value), grad


def mmp_objective(features: FeatureMatrix, estimate: ExpectationEstimate, mu: np.ndarray) -> float:
    value, _ = smooth_part(features, estimate.tau_hat, mu)
    return value + float(estimate.lam @ np.abs(mu))


def _soft_threshold(x: np.ndarray, thresh: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def _residual(grad: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> float:
    """Distance from 0 to the subdifferential of F at mu (infinity norm)."""
    at_zero = np.maximum(np.abs(grad) - lam, 0.0)
    off_zero = np.abs(grad + lam * np.sign(mu))
    return float(np.max(np.where(mu == 0, at_zero, off_zero), initial=0.0))


def _smooth_delta(
    features: FeatureMatrix, tau: np.ndarray, base: np.ndarray, soft: np.ndarray, diff: np.ndarray
) -> float:
    """f(base + diff) - f(base), computed without cancellation from the softmax at base."""
    shift = _scores(features, diff)
    if shift.max(initial=0.0) > 30.0:
        # large moves: the plain difference is already well conditioned
        return smooth_part(features, tau, base + diff)[0] - smooth_part(features, tau, base)[0]
    inc = np.log1p((soft * np.expm1(shift)).sum(axis=1))
    return float(-tau @ diff + inc.mean())


def _smooth_soft(features: FeatureMatrix, tau: np.ndarray, mu: np.ndarray):
    lse, soft = _logsumexp_rows(_scores(features, mu))
    grad = -tau + np.einsum("ny,nyd->d", soft, features.values) / features.n
    return float(-tau @ mu + lse.mean()), grad, soft


def minimize_mmp_objective(
    features: FeatureMatrix, estimate: ExpectationEstimate, config: SolverConfig | None = None
) -> SolveReport:
    """Minimize F from mu = 0.

    The default is monotone accelerated proximal gradient: soft-thresholding
    handles the L1 term and backtracking picks the step on the smooth part.
    Objective changes are evaluated as differences relative to the incumbent,
    so acceptance stays meaningful below the float resolution of F itself and
    the recorded trace never increases.
    """
    config = config or SolverConfig()
    if estimate.d != features.d:
        raise WSError("estimate and features disagree on d", "solver")
    if config.mmp_method == "stochastic":
        return _stochastic_mmp(features, estimate, config)
    tau, lam = estimate.tau_hat, estimate.lam
    rule = config.step_rule
    x = np.zeros(features.d)
    fx, gx, soft_x = _smooth_soft(features, tau, x)
    Fx = fx
    trace = [Fx]
    yk = x.copy()
    t = 1.0
    L = 1.0 / rule.eta
    converged = _residual(gx, lam, x) <= config.grad_tol
    it = 0
    while not converged and it < config.mmp_max_iters:
        it += 1
        if yk is x:
            gy, soft_y = gx, soft_x
        else:
            _, gy, soft_y = _smooth_soft(features, tau, yk)
        if rule.kind == "backtracking":
            L = max(L * rule.beta, 1e-12)
            while True:
                z = _soft_threshold(yk - gy / L, lam / L)
                diff = z - yk
                if _smooth_delta(features, tau, yk, soft_y, diff) <= gy @ diff + rule.c * L * (diff @ diff):
                    break
                L /= rule.beta
        else:
            z = _soft_threshold(yk - gy / L, lam / L)
        delta = _smooth_delta(features, tau, x, soft_x, z - x) + float(lam @ (np.abs(z) - np.abs(x)))
        if not np.isfinite(delta):
            return SolveReport(x, mmp_objective(features, estimate, x), it, False, tuple(trace))
        if delta <= 0:
            x_prev, x = x, z
            Fx += delta
            t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
            _, gx, soft_x = _smooth_soft(features, tau, x)
            yk = x + ((t - 1) / t_next) * (x - x_prev)
        else:
            # monotone restart from the incumbent
            t_next = 1.0
            yk = x
        t = t_next
        trace.append(Fx)
        converged = _residual(gx, lam, x) <= config.grad_tol
    return SolveReport(x, mmp_objective(features, estimate, x), it, bool(converged), tuple(trace))


def _stochastic_mmp(features: FeatureMatrix, estimate: ExpectationEstimate, config: SolverConfig) -> SolveReport:
    """Minibatch proximal stochastic gradient with 1/sqrt(k) steps and iterate averaging."""
    rng = np.random.default_rng(config.seed)
    tau, lam = estimate.tau_hat, estimate.lam
    n = features.n
    mu = np.zeros(features.d)
    avg = mu.copy()
    trace = [mmp_objective(features, estimate, mu)]
    eta0 = config.step_rule.eta
    batch = min(config.batch_size, n)
    for k in range(1, config.max_iters + 1):
        idx = rng.choice(n, size=batch, replace=False)
        _, soft = _logsumexp_rows(features.values[idx] @ mu)
        grad = -tau + np.einsum("by,byd->d", soft, features.values[idx]) / batch
        step = eta0 / np.sqrt(k)
        mu = _soft_threshold(mu - step * grad, step * lam)
        avg += (mu - avg) / k
        if k % 100 == 0 or k == config.max_iters:
            trace.append(mmp_objective(features, estimate, avg if config.averaging else mu))
    out = avg if config.averaging else mu
    _, g = smooth_part(features, tau, out)
    return SolveReport(out, mmp_objective(features, estimate, out), config.max_iters,
                       _residual(g, lam, out) <= config.tol, tuple(trace))


# --------------------------------------------------------------- interval duals


def group_mask(n: int, group: Iterable[int]) -> np.ndarray:
    idx = np.fromiter((int(i) for i in group), dtype=np.int64)
    if idx.size == 0:
        raise EmptyGroupError("group is empty", "solver")
    if idx.min() < 0 or idx.max() >= n:
        raise WSError("group index out of range", "solver")
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    return mask


def _bonus(features: FeatureMatrix, mask: np.ndarray, y: int) -> np.ndarray:
    if not 1 <= y <= features.T:
        raise WSError(f"label {y} out of range 1..{features.T}", "solver")
    c = np.zeros((features.n, features.T))
    c[mask, y - 1] = features.n / mask.sum()
    return c


def ci_dual_value(
    features: FeatureMatrix, estimate: ExpectationEstimate, group, y: int, mu: np.ndarray, upper: bool = True
) -> float:
    """Dual objective of the upper (min) or lower (max) interval problem at ``mu``."""
    mask = group_mask(features.n, group)
    inner = _scores(features, mu) + _bonus(features, mask, y)
    if upper:
        return float(-estimate.tau_hat @ mu + estimate.lam @ np.abs(mu) + inner.max(axis=1).mean())
    return float(-estimate.tau_hat @ mu - estimate.lam @ np.abs(mu) + inner.min(axis=1).mean())


def _ci_lp(features: FeatureMatrix, estimate: ExpectationEstimate, mask: np.ndarray, y: int, upper: bool) -> SolveReport:
    n, T, d = features.n, features.T, features.d
    tau, lam = estimate.tau_hat, estimate.lam
    c_bonus = _bonus(features, mask, y).ravel()
    Phi = sp.csr_matrix(features.values.reshape(n * T, d))
    rows_to_inst = sp.csr_matrix((np.ones(n * T), (np.arange(n * T), np.repeat(np.arange(n), T))), shape=(n * T, n))
    # variables: mu_plus (d), mu_minus (d), t (n)
    if upper:
        cost = np.concatenate([-tau + lam, tau + lam, np.full(n, 1.0 / n)])
        A = sp.hstack([Phi, -Phi, -rows_to_inst], format="csr")
        b = -c_bonus
    else:
        cost = np.concatenate([tau + lam, -tau + lam, np.full(n, -1.0 / n)])
        A = sp.hstack([-Phi, Phi, rows_to_inst], format="csr")
        b = c_bonus
    bounds = [(0, None)] * (2 * d) + [(None, None)] * n
    # presolve occasionally reports an unknown status on degenerate
    # equality-like bands; retry without it, then with interior point
    for method, options in LP_ATTEMPTS:
        res = linprog(cost, A_ub=A, b_ub=b, bounds=bounds, method=method, options=options)
        if res.status == 0:
            break
    if res.status == 3:
        raise InfeasibleError("uncertainty set is empty (interval dual unbounded)", "solver")
    if res.status != 0:
        raise WSError(f"interval LP failed: {res.message}", "solver")
    mu = res.x[:d] - res.x[d:2 * d]
    value = res.fun if upper else -res.fun
    return SolveReport(mu, float(value), int(res.nit), True, (float(value),))


def _ci_subgradient(
    features: FeatureMatrix, estimate: ExpectationEstimate, mask: np.ndarray, y: int, upper: bool, config: SolverConfig
) -> SolveReport:
    """Averaged subgradient descent on the (sign-adjusted) piecewise-linear dual."""
    n = features.n
    tau, lam = estimate.tau_hat, estimate.lam
    bonus = _bonus(features, mask, y)
    rows = np.arange(n)
    sign = 1.0 if upper else -1.0

    def value_and_sub(mu):
        inner = _scores(features, mu) + bonus
        pick = inner.argmax(axis=1) if upper else inner.argmin(axis=1)
        # minimize sign * dual objective
        val = sign * (-tau @ mu + sign * lam @ np.abs(mu) + inner[rows, pick].mean())
        sub = sign * (-tau + features.values[rows, pick].mean(axis=0)) + lam * np.sign(mu)
        return float(val), sub

    mu = np.zeros(features.d)
    avg = mu.copy()
    best_val, _ = value_and_sub(mu)
    best_mu = mu.copy()
    trace = [best_val]
    eta0 = config.step_rule.eta
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        val, sub = value_and_sub(mu)
        if val < best_val:
            best_val, best_mu = val, mu.copy()
        if val < UNBOUNDED_LEVEL:
            raise InfeasibleError("uncertainty set is empty (interval dual unbounded)", "solver")
        norm = np.linalg.norm(sub)
        if norm == 0:
            converged = True
            break
        mu = mu - (eta0 / np.sqrt(it)) * sub / norm
        avg += (mu - avg) / it
        if config.averaging:
            aval, _ = value_and_sub(avg)
            if aval < best_val:
                best_val, best_mu = aval, avg.copy()
        trace.append(best_val)
        if it > 100 and abs(trace[-100] - best_val) < config.tol:
            converged = True
            break
    return SolveReport(best_mu, sign * best_val, it, converged, tuple(sign * v for v in trace))


def _ci_solve(features, estimate, group, y, config, upper):
    config = config or SolverConfig()
    if estimate.d != features.d:
        raise WSError("estimate and features disagree on d", "solver")
    mask = group_mask(features.n, group)
    if config.ci_method == "lp":
        return _ci_lp(features, estimate, mask, y, upper)
    return _ci_subgradient(features, estimate, mask, y, upper, config)


def ci_dual_upper(features: FeatureMatrix, estimate: ExpectationEstimate, group, y: int,
                  config: SolverConfig | None = None) -> SolveReport:
    """Largest average probability of class ``y`` over ``group`` allowed by the uncertainty set."""
    return _ci_solve(features, estimate, group, y, config, upper=True)


def ci_dual_lower(features: FeatureMatrix, estimate: ExpectationEstimate, group, y: int,
                  config: SolverConfig | None = None) -> SolveReport:
    """Smallest average probability of class ``y`` over ``group`` allowed by the uncertainty set."""
    return _ci_solve(features, estimate, group, y, config, upper=False)


# ---------------------------------------------------------------- primal oracle

ORACLE_MAX_CELLS = 300


def _primal_lp_data(features: FeatureMatrix, estimate: ExpectationEstimate):
    n, T, d = features.n, features.T, features.d
    Phi = features.values.reshape(n * T, d).T / n  # (d, nT)
    A_ub = np.vstack([Phi, -Phi])
    b_ub = np.concatenate([estimate.tau_hat + estimate.lam, -(estimate.tau_hat - estimate.lam)])
    A_eq = np.kron(np.eye(n), np.ones((1, T)))
    return A_ub, b_ub, A_eq, np.ones(n)


def primal_oracle(features: FeatureMatrix, estimate: ExpectationEstimate, group, y: int) -> tuple[float, float]:
    """Exact (upper, lower) by solving the primal LPs with the reference simplex."""
    n, T = features.n, features.T
    if n * T > ORACLE_MAX_CELLS:
        raise WSError(f"primal oracle limited to n*T <= {ORACLE_MAX_CELLS}", "solver")
    mask = group_mask(n, group)
    objective = np.zeros((n, T))
    objective[mask, y - 1] = 1.0 / mask.sum()
    objective = objective.ravel()
    A_ub, b_ub, A_eq, b_eq = _primal_lp_data(features, estimate)
    try:
        hi = solve_lp(-objective, A_ub, b_ub, A_eq, b_eq)
        lo = solve_lp(objective, A_ub, b_ub, A_eq, b_eq)
    except LPInfeasible:
        raise InfeasibleError("uncertainty set is empty (primal infeasible)", "solver") from None
    return -hi.fun, lo.fun


def _simplex_grid(T: int, step: float) -> np.ndarray:
    k = int(round(1.0 / step))
    pts = [c for c in itertools.product(range(k + 1), repeat=T - 1) if sum(c) <= k]
    grid = np.array([list(c) + [k - sum(c)] for c in pts], dtype=float) / k
    return grid


def grid_oracle(
    features: FeatureMatrix,
    estimate: ExpectationEstimate,
    group,
    y: int,
    step: float = 1e-3,
    slack: float | None = None,
    max_points: int = 5_000_000,
) -> tuple[float, float]:
    """Brute-force (upper, lower) over a grid on each instance's simplex.

    Band constraints are relaxed by ``slack`` (default: step times the largest
    feature magnitude) so that grid points near a tight face still count.
    """
    n, T = features.n, features.T
    mask = group_mask(n, group)
    grid = _simplex_grid(T, step)
    if len(grid) ** n > max_points:
        raise WSError("grid too large for brute force", "solver")
    if slack is None:
        slack = step * max(1.0, float(np.abs(features.values).max()))
    # per-instance contribution to the feature average for each grid point: (G, d)
    contrib = [grid @ features.values[i] / n for i in range(n)]
    target = [grid[:, y - 1] * (mask[i] / mask.sum()) for i in range(n)]
    total = contrib[0]
    value = target[0]
    for i in range(1, n):
        total = (total[:, None, :] + contrib[i][None, :, :]).reshape(-1, features.d)
        value = (value[:, None] + target[i][None, :]).ravel()
    ok = np.all(np.abs(total - estimate.tau_hat) <= estimate.lam + slack, axis=1)
    if not ok.any():
        raise InfeasibleError("no grid point satisfies the band constraints", "solver")
    return float(value[ok].max()), float(value[ok].min())
