"""Damped least squares (Levenberg-Marquardt with Marquardt diagonal scaling).

Small dense problems only: the normal equations are formed explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitConvergenceError


@dataclass
class LMResult:
    x: np.ndarray
    residuals: np.ndarray
    jac: np.ndarray
    rss: float
    iterations: int
    converged: bool
    message: str


def levenberg_marquardt(
    fun,
    jac,
    x0,
    *,
    max_iter=200,
    xtol=1e-10,
    ftol=1e-12,
    atol=0.0,
    valid=None,
    lam0=1e-3,
    raise_on_failure=True,
):
    """Minimise ``sum(fun(x)**2)`` starting from ``x0``.

    Converges when the relative parameter step drops below ``xtol``, the
    relative RSS decrease drops below ``ftol``, or the RSS itself falls below
    ``atol``. ``valid(x)`` may veto a trial point, which is then treated like
    a rejected step. Raises FitConvergenceError after ``max_iter`` accepted
    steps unless ``raise_on_failure`` is false.
    """
    x = np.array(x0, dtype=float)
    r = np.asarray(fun(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals are not finite at the starting point")
    rss = float(r @ r)
    J = np.asarray(jac(x), dtype=float)
    lam = lam0
    it = 0
    message = ""
    converged = False

    if rss <= atol:
        return LMResult(x, r, J, rss, 0, True, "rss below atol at start")

    while it < max_iter:
        A = J.T @ J
        g = J.T @ r
        d = np.diag(A).copy()
        d[d <= 0] = 1.0
        d = np.maximum(d, 1e-12 * d.max())
        step_taken = False
        while lam < 1e20:
            try:
                dx = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + dx
            if valid is not None and not valid(x_new):
                lam *= 10.0
                continue
            r_new = np.asarray(fun(x_new), dtype=float)
            if not np.all(np.isfinite(r_new)):
                lam *= 10.0
                continue
            rss_new = float(r_new @ r_new)
            if rss_new <= rss:
                step_taken = True
                break
            lam *= 10.0
        if not step_taken:
            # no descent direction left at machine precision
            converged = True
            message = "stationary point (damping saturated)"
            break

        it += 1
        rel_step = np.linalg.norm(dx) / max(np.linalg.norm(x), 1e-300)
        rel_drop = (rss - rss_new) / max(rss, 1e-300)
        x, r, rss = x_new, r_new, rss_new
        J = np.asarray(jac(x), dtype=float)
        lam = max(lam / 10.0, 1e-15)

        if rss <= atol:
            converged, message = True, "rss below atol"
            break
        if rel_step < xtol:
            converged, message = True, "relative step below xtol"
            break
        if rel_drop < ftol:
            converged, message = True, "relative rss change below ftol"
            break

    if not converged:
        message = f"no convergence after {max_iter} iterations"
        if raise_on_failure:
            raise FitConvergenceError(message, best=x, rss=rss)
    return LMResult(x, r, J, rss, it, converged, message)


def gauss_newton_polish(fun, jac, x, *, max_iter=20, xtol=1e-15, slack=1e-12):
    """Undamped Gauss-Newton steps from a converged point.

    Near a minimum the RSS is flat to machine precision, so accept/reject
    by RSS cannot resolve the last digits. The Gauss-Newton step is driven
    by the gradient and keeps refining; a step is kept if the RSS does not
    rise by more than ``slack`` relative.
    """
    x = np.array(x, dtype=float)
    r = np.asarray(fun(x), dtype=float)
    rss = float(r @ r)
    for _ in range(max_iter):
        J = np.asarray(jac(x), dtype=float)
        dx, *_ = np.linalg.lstsq(J, -r, rcond=None)
        x_new = x + dx
        r_new = np.asarray(fun(x_new), dtype=float)
        if not np.all(np.isfinite(r_new)):
            break
        rss_new = float(r_new @ r_new)
        if rss_new > rss * (1 + slack) + 1e-300:
            break
        x, r, rss = x_new, r_new, rss_new
        if np.linalg.norm(dx) <= xtol * max(np.linalg.norm(x), 1e-300):
            break
    return x, rss


def covariance(jac, rss, n_points):
    """Parameter covariance ``s^2 (J^T J)^-1`` with ``s^2 = rss / dof``.

    Returns NaNs when there are no degrees of freedom.
    """
    jac = np.asarray(jac, dtype=float)
    p = jac.shape[1]
    dof = n_points - p
    if dof <= 0:
        return np.full((p, p), np.nan)
    s2 = rss / dof
    return s2 * np.linalg.pinv(jac.T @ jac)
