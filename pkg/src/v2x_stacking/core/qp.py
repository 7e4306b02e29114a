"""
Convex QP subsolver for v2x-stacking.

Solves

    minimize    1/2 x' P x + q' x + constant
    subject to  l <= A x <= u
                lb <= x <= ub

with an operator-splitting (ADMM) scheme: Ruiz equilibration, a cached sparse
factorization of the quasi-definite KKT matrix, over-relaxation, adaptive step
size, a primal infeasibility certificate and a final active-set polish.
Variable bounds are kept apart from the general rows so that integer handling can
fix columns without rebuilding A.
"""

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from v2x_stacking.config import get_settings
from v2x_stacking.core.exceptions import InfeasibleProblemError, IterationLimitError, ValidationError
from v2x_stacking.utils import get_logger

logger = get_logger(__name__)

RHO_MIN = 1e-6
RHO_MAX = 1e6
RHO_EQ_FACTOR = 1e3
RHO_ADAPT_THRESHOLD = 5.0
SCALING_ITER = 10
SCALING_REG = 1e-4
CHECK_INTERVAL = 10
EPS_PRIM_INF = 1e-5
POLISH_DELTA = 1e-6
POLISH_REFINE_ITER = 3


class SolveStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITER_LIMIT = "IterLimit"


@dataclass(eq=False)
class QpProblem:
    """Sparse QP with variable bounds and complementarity pair markers.

    ``pairs`` lists ``(first, second, kind)`` column pairs of which at most one may be
    nonzero in an integral solution; the relaxation ignores them. ``pair_hints[i]`` is
    True when a tie in pair ``i`` should keep the second member.
    """

    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    constant: float = 0.0
    columns: list[str] = field(default_factory=list)
    pairs: list[tuple[int, int, str]] = field(default_factory=list)
    pair_hints: list[bool] = field(default_factory=list)
    index: Any = None
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.q)
        self.P = sp.csc_matrix(self.P, shape=(n, n))
        self.A = sp.csc_matrix(self.A)
        if self.A.shape[1] != n:
            raise ValidationError(f"A has {self.A.shape[1]} columns, expected {n}")
        m = self.A.shape[0]
        for key, size in (("l", m), ("u", m), ("lb", n), ("ub", n)):
            arr = np.asarray(getattr(self, key), dtype=float).copy()
            if arr.shape != (size,):
                raise ValidationError(f"{key} must have length {size}, got {arr.shape}")
            setattr(self, key, arr)
        self.q = np.asarray(self.q, dtype=float)

    @property
    def n(self) -> int:
        return len(self.q)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x + self.constant)

    def with_zero_columns(self, columns) -> "QpProblem":
        """Copy with the given columns fixed to zero."""
        lb, ub = self.lb.copy(), self.ub.copy()
        cols = np.asarray(list(columns), dtype=int)
        lb[cols] = np.minimum(lb[cols], 0.0)
        ub[cols] = 0.0
        return replace(self, lb=lb, ub=ub, diagnostics=list(self.diagnostics))

    def stacked(self) -> tuple[sp.csc_matrix, np.ndarray, np.ndarray]:
        """General rows followed by one identity row per variable bound."""
        A = sp.vstack([self.A, sp.identity(self.n, format="csc")], format="csc")
        return A, np.concatenate([self.l, self.lb]), np.concatenate([self.u, self.ub])

    def max_violation(self, x: np.ndarray) -> float:
        """Largest bound or row violation of ``x`` in problem units."""
        ax = self.A @ x
        worst = 0.0
        if self.m:
            worst = max(float(np.max(self.l - ax, initial=0.0)), float(np.max(ax - self.u, initial=0.0)))
        return max(worst, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))


@dataclass
class SolveReport:
    """Outcome of a QP or MIQP solve."""

    status: SolveStatus
    objective: float
    x: np.ndarray | None = None
    decisions: Any = None
    relaxation_gap: float = 0.0
    binaries_fixed_by: str = "natural"
    iterations: int = 0
    wall_time: float = 0.0
    prim_res: float = 0.0
    dual_res: float = 0.0
    certificate: float | None = None
    fixes: int = 0
    nodes: int = 0
    polished: bool = False
    diagnostics: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    def raise_for_status(self) -> "SolveReport":
        if self.status is SolveStatus.INFEASIBLE:
            raise InfeasibleProblemError(
                f"Problem is infeasible (certificate {self.certificate})", certificate=self.certificate
            )
        if self.status is SolveStatus.ITER_LIMIT:
            raise IterationLimitError(
                f"Iteration limit reached after {self.iterations} iterations "
                f"(primal residual {self.prim_res:.2e}, dual residual {self.dual_res:.2e})"
            )
        return self

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "relaxation_gap": self.relaxation_gap,
            "binaries_fixed_by": self.binaries_fixed_by,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "fixes": self.fixes,
            "nodes": self.nodes,
            "diagnostics": list(self.diagnostics),
        }


@dataclass(frozen=True)
class QpSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iter: int = 10000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    polish: bool = True

    @classmethod
    def from_settings(cls) -> "QpSettings":
        s = get_settings()
        return cls(
            eps_abs=s.solver_eps_abs,
            eps_rel=s.solver_eps_rel,
            max_iter=s.solver_max_iter,
            rho=s.solver_rho,
            sigma=s.solver_sigma,
            alpha=s.solver_alpha,
            polish=s.solver_polish,
        )


def _norm_limits(norms: np.ndarray) -> np.ndarray:
    # empty columns keep unit scaling
    return np.where(norms < SCALING_REG, 1.0, np.minimum(norms, 1.0 / SCALING_REG))


def _col_inf_norms(M: sp.spmatrix) -> np.ndarray:
    if M.nnz == 0:
        return np.zeros(M.shape[1])
    return np.asarray(abs(M).max(axis=0).todense()).ravel()


class _AdmmWorkspace:
    """Scaled problem data and iterates of one solve."""

    def __init__(self, problem: QpProblem, opts: QpSettings):
        self.opts = opts
        A, l, u = problem.stacked()
        self.n, self.m = problem.n, A.shape[0]
        self._scale(problem.P, problem.q, A, l, u)

        eq = np.isclose(self.l, self.u, rtol=0.0, atol=1e-12) & np.isfinite(self.l)
        free = np.isinf(self.l) & np.isinf(self.u)
        self.eq_rows = eq
        self.free_rows = free
        self._set_rho(opts.rho)

        self.x = np.zeros(self.n)
        self.z = np.zeros(self.m)
        self.y = np.zeros(self.m)
        self.delta_y = np.zeros(self.m)

    def _scale(self, P, q, A, l, u) -> None:
        n, m = self.n, self.m
        d = np.ones(n)
        e = np.ones(m)
        Ps, As = P.copy().tocsc(), A.copy().tocsc()
        for _ in range(SCALING_ITER):
            col_p = np.maximum(_col_inf_norms(Ps), _col_inf_norms(As))
            row_a = _col_inf_norms(As.T.tocsc())
            dt = 1.0 / np.sqrt(_norm_limits(col_p))
            et = 1.0 / np.sqrt(_norm_limits(row_a))
            Dt, Et = sp.diags(dt), sp.diags(et)
            Ps = (Dt @ Ps @ Dt).tocsc()
            As = (Et @ As @ Dt).tocsc()
            d *= dt
            e *= et
        qs = d * q
        p_norm = float(np.mean(_col_inf_norms(Ps))) if n else 0.0
        c = max(p_norm, float(np.max(np.abs(qs), initial=0.0)))
        c = 1.0 / np.clip(c, SCALING_REG, 1.0 / SCALING_REG) if c > 0 else 1.0
        self.P = (c * Ps).tocsc()
        self.q = c * qs
        self.A = As
        self.At = As.T.tocsc()
        with np.errstate(invalid="ignore"):
            self.l = np.where(np.isinf(l), l, e * l)
            self.u = np.where(np.isinf(u), u, e * u)
        self.D, self.E, self.c = d, e, c
        self.Dinv, self.Einv = 1.0 / d, 1.0 / e

    def _set_rho(self, rho: float) -> None:
        self.rho_scalar = float(np.clip(rho, RHO_MIN, RHO_MAX))
        rho_vec = np.full(self.m, self.rho_scalar)
        rho_vec[self.eq_rows] = RHO_EQ_FACTOR * self.rho_scalar
        rho_vec[self.free_rows] = RHO_MIN
        self.rho = rho_vec
        self.rho_inv = 1.0 / rho_vec
        kkt = sp.bmat(
            [
                [self.P + self.opts.sigma * sp.identity(self.n), self.At],
                [self.A, -sp.diags(self.rho_inv)],
            ],
            format="csc",
        )
        self.factor = spla.splu(kkt)

    def step(self) -> None:
        opts = self.opts
        rhs = np.concatenate([opts.sigma * self.x - self.q, self.z - self.rho_inv * self.y])
        sol = self.factor.solve(rhs)
        x_tilde = sol[: self.n]
        z_tilde = self.z + self.rho_inv * (sol[self.n:] - self.y)
        self.x = opts.alpha * x_tilde + (1.0 - opts.alpha) * self.x
        z_relaxed = opts.alpha * z_tilde + (1.0 - opts.alpha) * self.z
        z_new = np.clip(z_relaxed + self.rho_inv * self.y, self.l, self.u)
        y_new = self.y + self.rho * (z_relaxed - z_new)
        self.delta_y = y_new - self.y
        self.y = y_new
        self.z = z_new

    def residuals(self, x, z, y) -> tuple[float, float, float, float]:
        """Unscaled primal and dual residuals with their tolerances."""
        ax = self.A @ x
        prim = float(np.max(np.abs(self.Einv * (ax - z)), initial=0.0))
        px = self.P @ x
        aty = self.At @ y
        dual = float(np.max(np.abs(self.Dinv * (px + self.q + aty)), initial=0.0)) / self.c
        opts = self.opts
        eps_prim = opts.eps_abs + opts.eps_rel * max(
            float(np.max(np.abs(self.Einv * ax), initial=0.0)),
            float(np.max(np.abs(self.Einv * z), initial=0.0)),
        )
        eps_dual = opts.eps_abs + opts.eps_rel / self.c * max(
            float(np.max(np.abs(self.Dinv * px), initial=0.0)),
            float(np.max(np.abs(self.Dinv * aty), initial=0.0)),
            float(np.max(np.abs(self.Dinv * self.q), initial=0.0)),
        )
        return prim, dual, eps_prim, eps_dual

    def adapt_rho(self) -> bool:
        ax = self.A @ self.x
        px = self.P @ self.x
        aty = self.At @ self.y
        prim = np.max(np.abs(ax - self.z), initial=0.0)
        dual = np.max(np.abs(px + self.q + aty), initial=0.0)
        prim_norm = prim / max(np.max(np.abs(ax), initial=0.0), np.max(np.abs(self.z), initial=0.0), 1e-10)
        dual_norm = dual / max(
            np.max(np.abs(px), initial=0.0), np.max(np.abs(aty), initial=0.0), np.max(np.abs(self.q), initial=0.0), 1e-10
        )
        if prim_norm <= 0 or dual_norm <= 0:
            return False
        new_rho = self.rho_scalar * np.sqrt(prim_norm / dual_norm)
        new_rho = float(np.clip(new_rho, RHO_MIN, RHO_MAX))
        if new_rho > RHO_ADAPT_THRESHOLD * self.rho_scalar or new_rho < self.rho_scalar / RHO_ADAPT_THRESHOLD:
            self._set_rho(new_rho)
            return True
        return False

    def primal_infeasible(self) -> float | None:
        """Certificate norm when the last dual step proves infeasibility, else None."""
        dy = self.delta_y.copy()
        dy[np.isinf(self.u) & (dy > 0)] = 0.0
        dy[np.isinf(self.l) & (dy < 0)] = 0.0
        norm = float(np.max(np.abs(self.E * dy), initial=0.0))
        if norm <= EPS_PRIM_INF:
            return None
        dy /= norm
        upper = np.where(dy > 0, self.u, 0.0)
        lower = np.where(dy < 0, self.l, 0.0)
        support = float(upper @ np.maximum(dy, 0.0) + lower @ np.minimum(dy, 0.0))
        if support >= -EPS_PRIM_INF:
            return None
        aty = float(np.max(np.abs(self.Dinv * (self.At @ dy)), initial=0.0))
        return -support if aty < EPS_PRIM_INF else None

    def polish(self) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
        """Solve the equality-constrained QP on the guessed active set."""
        low = np.flatnonzero(self.z - self.l < -self.y)
        upp = np.flatnonzero(self.u - self.z < self.y)
        upp = np.setdiff1d(upp, low)
        forced = np.setdiff1d(np.flatnonzero(self.eq_rows), np.concatenate([low, upp]))
        low = np.concatenate([low, forced])
        active = np.concatenate([low, upp]).astype(int)
        bounds = np.concatenate([self.l[low], self.u[upp]])
        if not np.isfinite(bounds).all():
            return None
        A_red = self.A[active]
        k = len(active)
        regularized = self.P + POLISH_DELTA * sp.identity(self.n)
        if k:
            kkt = sp.bmat([[regularized, A_red.T], [A_red, -POLISH_DELTA * sp.identity(k)]], format="csc")
            exact = sp.bmat([[self.P, A_red.T], [A_red, None]], format="csc")
        else:
            kkt, exact = regularized.tocsc(), self.P.tocsc()
        rhs = np.concatenate([-self.q, bounds])
        try:
            factor = spla.splu(kkt)
        except RuntimeError:
            return None
        sol = factor.solve(rhs)
        for _ in range(POLISH_REFINE_ITER):
            sol = sol + factor.solve(rhs - exact @ sol)
        if not np.isfinite(sol).all():
            return None
        x = sol[: self.n]
        y = np.zeros(self.m)
        y[active] = sol[self.n:]
        # multipliers of inequality rows must point outward
        ineq_low = np.setdiff1d(low, np.flatnonzero(self.eq_rows))
        if (y[ineq_low] > 1e-6).any() or (y[upp] < -1e-6).any():
            return None
        z = np.clip(self.A @ x, self.l, self.u)
        return x, z, y

    def unscale(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        return self.D * x, self.E * y / self.c


def solve_qp(problem: QpProblem, opts: QpSettings | None = None) -> SolveReport:
    """Solve the convex QP; integrality of ``problem.pairs`` is ignored.

    Returns a report with status Optimal, Infeasible (with a certificate value) or
    IterLimit (with the last iterate).
    """
    opts = opts or QpSettings.from_settings()
    start = time.perf_counter()

    gap = max(float(np.max(problem.lb - problem.ub, initial=-np.inf)),
              float(np.max(problem.l - problem.u, initial=-np.inf)))
    if gap > 0:
        logger.debug(f"QP rejected before iterating: crossed bounds by {gap:.3e}")
        return SolveReport(
            status=SolveStatus.INFEASIBLE, objective=np.inf, certificate=gap,
            wall_time=time.perf_counter() - start, diagnostics=["crossed bounds"],
        )

    if problem.n == 0:
        feasible = bool(np.all(problem.l <= 0.0) and np.all(problem.u >= 0.0))
        return SolveReport(
            status=SolveStatus.OPTIMAL if feasible else SolveStatus.INFEASIBLE,
            objective=problem.constant if feasible else np.inf,
            x=np.zeros(0),
            wall_time=time.perf_counter() - start,
        )

    w = _AdmmWorkspace(problem, opts)
    status = SolveStatus.ITER_LIMIT
    certificate = None
    polished = False
    prim = dual = np.inf
    iteration = 0
    for iteration in range(1, opts.max_iter + 1):
        w.step()
        if iteration % CHECK_INTERVAL and iteration != opts.max_iter:
            continue
        prim, dual, eps_prim, eps_dual = w.residuals(w.x, w.z, w.y)
        if prim <= eps_prim and dual <= eps_dual:
            status = SolveStatus.OPTIMAL
            break
        certificate = w.primal_infeasible()
        if certificate is not None:
            status = SolveStatus.INFEASIBLE
            break
        if opts.polish and iteration % (10 * CHECK_INTERVAL) == 0 and prim <= 1e3 * eps_prim and dual <= 1e3 * eps_dual:
            candidate = w.polish()
            if candidate is not None:
                p_prim, p_dual, p_eps_prim, p_eps_dual = w.residuals(*candidate)
                if p_prim <= p_eps_prim and p_dual <= p_eps_dual:
                    w.x, w.z, w.y = candidate
                    prim, dual = p_prim, p_dual
                    status, polished = SolveStatus.OPTIMAL, True
                    break
        w.adapt_rho()

    if status is not SolveStatus.INFEASIBLE and opts.polish and not polished:
        candidate = w.polish()
        if candidate is not None:
            p_prim, p_dual, p_eps_prim, p_eps_dual = w.residuals(*candidate)
            within = p_prim <= p_eps_prim and p_dual <= p_eps_dual
            if within or (p_prim <= prim and p_dual <= dual):
                w.x, w.z, w.y = candidate
                prim, dual, polished = p_prim, p_dual, True
                if within:
                    status = SolveStatus.OPTIMAL

    x, y = w.unscale(w.x, w.y)
    wall = time.perf_counter() - start
    if status is SolveStatus.INFEASIBLE:
        logger.debug(f"QP infeasible after {iteration} iterations (certificate {certificate:.3e})")
        return SolveReport(
            status=status, objective=np.inf, x=x, iterations=iteration, wall_time=wall,
            prim_res=prim, dual_res=dual, certificate=certificate,
        )
    # remove the polish regularization drift from the bounds
    x = np.clip(x, problem.lb, problem.ub)
    objective = problem.objective(x)
    logger.debug(
        f"QP {status.value}: n={problem.n} m={problem.m} iter={iteration} obj={objective:.6f} "
        f"prim={prim:.2e} dual={dual:.2e} polished={polished}"
    )
    return SolveReport(
        status=status, objective=objective, x=x, iterations=iteration, wall_time=wall,
        prim_res=prim, dual_res=dual, polished=polished,
    )


def dump_problem(problem: QpProblem, path: str | Path) -> Path:
    """Write the problem as plain-text sparse triplets for cross-checking with other solvers.

    Sections: ``P`` and ``A`` as ``row col value`` triplets (P upper triangle), then the
    dense vectors ``q``, ``l``, ``u``, ``lb``, ``ub``, the binary ``pairs`` and the
    column labels.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    P = sp.triu(problem.P).tocoo()
    A = problem.A.tocoo()

    def _vec(values) -> list[str]:
        return [repr(float(v)) for v in values]

    lines = [
        "# v2x-stacking QP: minimize 1/2 x'Px + q'x + constant s.t. l <= Ax <= u, lb <= x <= ub",
        f"n {problem.n}",
        f"m {problem.m}",
        f"constant {problem.constant!r}",
        f"P {P.nnz}",
    ]
    lines += [f"{i} {j} {v!r}" for i, j, v in zip(P.row, P.col, P.data)]
    lines.append(f"A {A.nnz}")
    lines += [f"{i} {j} {v!r}" for i, j, v in zip(A.row, A.col, A.data)]
    for name in ("q", "l", "u", "lb", "ub"):
        values = getattr(problem, name)
        lines.append(f"{name} {len(values)}")
        lines += _vec(values)
    lines.append(f"pairs {len(problem.pairs)}")
    lines += [f"{a} {b} {kind}" for a, b, kind in problem.pairs]
    lines.append(f"columns {len(problem.columns)}")
    lines += list(problem.columns)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote QP dump ({problem.n} columns, {problem.m} rows) to {path}")
    return path
