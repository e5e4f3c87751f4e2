"""Deterministic damped Gauss-Newton least-squares engine.

Every estimator in the package runs through :func:`least_squares_fit`:
one optimizer, one convergence contract, one error-reporting path.  The
Jacobian is always numerically differenced (central differences), the
damping is Levenberg-Marquardt style on the normal equations, and the
iteration stops when the relative parameter step falls below 1e-8 or the
gradient norm below 1e-10, with a hard cap of 200 iterations.
Non-convergence is reported in the result, never silently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import RankDeficiencyError, UsageError

STEP_TOL = 1e-8
GRAD_TOL = 1e-10
MAX_ITERATIONS = 200
# central-difference step scale; below cbrt(eps) so that location-type
# parameters (peak center ~ 800 with a ~1 wide feature) keep truncation
# error under the 1e-5 Jacobian-consistency contract
_DIFF_STEP = 1.0e-6


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``parameters`` and ``standard_errors`` share keys; derived quantities
    (unit conversions, propagated values) may be added by the wrapping
    estimator.  ``flags`` collects non-fatal diagnostics such as
    ``peak_at_edge`` or ``unpolarized``; ``bound_hit`` names parameters
    that finished on a box constraint.
    """

    parameters: dict
    standard_errors: dict
    residual_norm: float
    iterations: int
    converged: bool
    flags: list = field(default_factory=list)
    bound_hit: list = field(default_factory=list)
    n_points: int = 0

    def to_dict(self) -> dict:
        return {
            "parameters": {k: float(v) for k, v in self.parameters.items()},
            "standard_errors": {k: float(v) for k, v in self.standard_errors.items()},
            "residual_norm": float(self.residual_norm),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "flags": list(self.flags),
            "bound_hit": list(self.bound_hit),
            "n_points": int(self.n_points),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def numeric_jacobian(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    params: np.ndarray,
    step_scale: float = 1.0,
) -> np.ndarray:
    """Central-difference Jacobian of a residual vector function."""
    params = np.asarray(params, dtype=float)
    r0 = residual_fn(params)
    jac = np.empty((r0.size, params.size))
    for j in range(params.size):
        h = _DIFF_STEP * max(abs(params[j]), 1.0) * step_scale
        up = params.copy()
        dn = params.copy()
        up[j] += h
        dn[j] -= h
        jac[:, j] = (residual_fn(up) - residual_fn(dn)) / (2.0 * h)
    return jac


def _check_rank(jac: np.ndarray, names: Sequence[str]) -> None:
    sv, vt = np.linalg.svd(jac, full_matrices=False)[1:]
    if sv[0] == 0.0 or sv[-1] < 1e-12 * sv[0]:
        null_direction = vt[-1]
        worst = names[int(np.argmax(np.abs(null_direction)))]
        raise RankDeficiencyError(
            f"fit problem is rank deficient: parameter {worst!r} (or a combination "
            f"including it) does not affect the residuals at the initial point",
            parameter=worst,
        )


def least_squares_fit(
    model: Callable,
    x,
    y,
    sigma,
    initial: Sequence[float],
    bounds: tuple | None = None,
    names: Sequence[str] | None = None,
    max_iterations: int = MAX_ITERATIONS,
) -> FitResult:
    """Minimize sum(((y - model(x, p)) / sigma)^2) over p.

    ``bounds`` is an optional (lower, upper) pair of arrays; candidate
    steps are projected onto the box and parameters that finish on a bound
    are reported in ``bound_hit``.  Raises :class:`RankDeficiencyError`
    when the Jacobian at the initial point has an exactly unidentifiable
    direction.
    """
    y = np.asarray(y, dtype=float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    if np.any(sigma <= 0):
        raise UsageError("all sigma values must be positive")
    p = np.asarray(initial, dtype=float).copy()
    n_par = p.size
    if y.size < n_par:
        raise UsageError(f"need at least {n_par} data points, got {y.size}")
    if names is None:
        names = [f"p{i}" for i in range(n_par)]
    if bounds is not None:
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
        p = np.clip(p, lo, hi)
    else:
        lo = np.full(n_par, -np.inf)
        hi = np.full(n_par, np.inf)

    def residuals(params: np.ndarray) -> np.ndarray:
        return (y - np.asarray(model(x, params), dtype=float)) / sigma

    r = residuals(p)
    cost = float(r @ r)
    jac = numeric_jacobian(residuals, p)
    _check_rank(jac, names)

    converged = False
    iterations = 0
    while iterations < max_iterations:
        iterations += 1
        jtj = jac.T @ jac
        grad = jac.T @ r
        if np.max(np.abs(grad)) < GRAD_TOL:
            converged = True
            break
        diag = np.diag(jtj).copy()
        diag[diag <= 0] = max(float(diag.max()), 1.0) * 1e-12
        # pure Gauss-Newton first, then escalate Marquardt damping
        accepted = False
        lam = 0.0
        while lam <= 1e12:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam = 1e-4 if lam == 0.0 else lam * 10.0
                continue
            p_new = np.clip(p + step, lo, hi)
            r_new = residuals(p_new)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost * (1.0 + 1e-14):
                rel_step = float(np.max(np.abs(p_new - p) / np.maximum(np.abs(p), 1.0)))
                # numeric-Jacobian noise at an exact optimum can keep
                # producing cost-neutral micro-steps: a vanishing relative
                # improvement is convergence, not progress
                if cost - cost_new <= 1e-13 * max(cost, 1e-300):
                    converged = True
                p, r, cost = p_new, r_new, cost_new
                accepted = True
                if rel_step < STEP_TOL:
                    converged = True
                break
            lam = 1e-4 if lam == 0.0 else lam * 10.0
        if not accepted or converged:
            break
        jac = numeric_jacobian(residuals, p)

    jac = numeric_jacobian(residuals, p)
    dof = max(y.size - n_par, 1)
    scale = cost / dof
    col_norm = np.linalg.norm(jac, axis=0)
    try:
        cov = np.linalg.pinv(jac.T @ jac, rcond=1e-12) * scale
        errors = np.sqrt(np.clip(np.diag(cov), 0.0, np.inf))
    except np.linalg.LinAlgError:
        errors = np.full(n_par, np.inf)
    # a direction the data cannot see has no meaningful finite error
    errors[col_norm < 1e-8 * max(float(col_norm.max()), 1e-300)] = np.inf

    at_bound = [
        names[i]
        for i in range(n_par)
        if (np.isfinite(lo[i]) and abs(p[i] - lo[i]) <= 1e-12 * max(abs(lo[i]), 1.0))
        or (np.isfinite(hi[i]) and abs(p[i] - hi[i]) <= 1e-12 * max(abs(hi[i]), 1.0))
    ]
    return FitResult(
        parameters=dict(zip(names, p.tolist())),
        standard_errors=dict(zip(names, errors.tolist())),
        residual_norm=math.sqrt(cost),
        iterations=iterations,
        converged=converged,
        bound_hit=at_bound,
        n_points=int(y.size),
    )
