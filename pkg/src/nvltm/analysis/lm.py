"""Damped least squares (Levenberg-Marquardt) for small dense problems."""

from dataclasses import dataclass

import numpy as np

from ..errors import FitFailure

MAX_ITERATIONS = 200
STEP_TOLERANCE = 1e-10
LAMBDA_ACCEPT = 0.3
LAMBDA_REJECT = 2.0


@dataclass
class LsqResult:
    params: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    jacobian: np.ndarray
    iterations: int
    converged: bool

    @property
    def residual_norm(self):
        return float(np.linalg.norm(self.residuals))


def numeric_jacobian(fun, p, rel_step=1e-6):
    """Central-difference Jacobian of ``fun`` at ``p``."""
    p = np.asarray(p, dtype=float)
    f0 = np.asarray(fun(p))
    jac = np.empty((f0.size, p.size))
    for i in range(p.size):
        h = rel_step * max(abs(p[i]), 1.0)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        jac[:, i] = (np.asarray(fun(up)) - np.asarray(fun(dn))) / (2 * h)
    return jac


def levenberg_marquardt(fun, p0, jac=None, max_iter=MAX_ITERATIONS,
                        xtol=STEP_TOLERANCE, lam=1e-3, project=None):
    """Minimize ``sum(fun(p)**2)``.

    ``jac`` defaults to central differences. ``project`` maps a trial
    point back into the feasible set (used for box bounds). Raises
    FitFailure if the relative step never drops below ``xtol``.
    """
    if jac is None:
        def jac(q):
            return numeric_jacobian(fun, q)
    p = np.asarray(p0, dtype=float).copy()
    if project is not None:
        p = project(p)
    r = np.asarray(fun(p), dtype=float)
    if not np.all(np.isfinite(r)):
        raise FitFailure("non-finite residuals at the starting point", iterations=0)
    cost = r @ r
    j = jac(p)
    converged = False
    it = 0
    history = []
    while it < max_iter:
        it += 1
        jtj = j.T @ j
        grad = j.T @ r
        if not np.any(grad):
            converged = True
            break
        damp = np.diag(np.diag(jtj))
        damp[damp == 0] = 1.0
        try:
            step = -np.linalg.solve(jtj + lam * damp, grad)
        except np.linalg.LinAlgError:
            lam *= LAMBDA_REJECT
            continue
        trial = p + step
        if project is not None:
            trial = project(trial)
            step = trial - p
        r_trial = np.asarray(fun(trial), dtype=float)
        cost_trial = r_trial @ r_trial if np.all(np.isfinite(r_trial)) else np.inf
        rel_step = np.max(np.abs(step) / (np.abs(p) + 1e-300))
        history.append((it, float(cost), float(lam)))
        if cost_trial <= cost:
            p, r, cost = trial, r_trial, cost_trial
            lam *= LAMBDA_ACCEPT
            j = jac(p)
            if rel_step < xtol:
                converged = True
                break
        else:
            lam *= LAMBDA_REJECT
            if rel_step < xtol or lam > 1e16:
                # no further descent possible along any damped step
                converged = True
                break
    if not converged:
        raise FitFailure(f"no convergence after {it} iterations", iterations=it,
                         diagnostics={"cost": float(cost), "lambda": float(lam),
                                      "history": history[-10:]})
    dof = max(r.size - p.size, 1)
    s2 = cost / dof
    try:
        cov = np.linalg.pinv(j.T @ j) * s2
    except np.linalg.LinAlgError:
        cov = np.full((p.size, p.size), np.inf)
    cov = 0.5 * (cov + cov.T)
    return LsqResult(p, cov, r, j, it, converged)
