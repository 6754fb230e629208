"""Feasible-start log-barrier method for smooth concave maximization.

maximize f(z)  subject to  g_i(z) >= 0,  i = 1..n_c

with f concave and every g_i concave, both smooth on the interior.  The
barrier stages maximize f(z) + mu * sum_i log g_i(z) by damped Newton steps,
with mu shrinking from n_c by factors of 10 down to 1e-8 * n_c.  The start
must be strictly interior; the line search keeps every iterate interior and
inside the objective's own domain (the objective may return None to reject a
trial point, which the search treats as -inf).

Constraint blocks supply their rows in batches so structured problems avoid
forming per-row gradients:

    count          -> number of rows m
    values(z)      -> (m,) array of g_i(z)
    add_gradient(z, w, out)       out += sum_i w_i * grad g_i
    add_hessian(z, w1, w2, out)   out += sum_i (w1_i * hess g_i
                                               - w2_i * grad g_i grad g_i^T)

where the solver passes w = mu/g, w1 = mu/g, w2 = mu/g^2.
"""

import dataclasses
from typing import Callable, List, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

ARMIJO_C1 = 1e-4
MAX_HALVINGS = 60
KKT_TOL = 1e-6
MU_FLOOR_REL = 1e-8
MAX_NEWTON_PER_STAGE = 120


class InfeasibleStartError(ValueError):
    """The provided start violates a constraint or the objective domain."""


# ---- generic constraint blocks ----


class LinearBlock:
    """Rows a_i . z + b_i >= 0 with a dense coefficient matrix."""

    def __init__(self, a, b, label="linear"):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.count = self.a.shape[0]
        self.label = label

    def values(self, z):
        return self.a @ z + self.b

    def add_gradient(self, z, w, out):
        out += self.a.T @ w

    def add_hessian(self, z, w1, w2, out):
        out -= (self.a.T * w2) @ self.a


class BoxBlock:
    """lo_j <= z_j <= hi_j over an index subset; infinities drop the side."""

    def __init__(self, idx, lo, hi, label="box"):
        idx = np.asarray(idx, dtype=int)
        lo = np.broadcast_to(np.asarray(lo, dtype=float), idx.shape)
        hi = np.broadcast_to(np.asarray(hi, dtype=float), idx.shape)
        keep_lo, keep_hi = np.isfinite(lo), np.isfinite(hi)
        self.lo_idx, self.lo = idx[keep_lo], lo[keep_lo]
        self.hi_idx, self.hi = idx[keep_hi], hi[keep_hi]
        self.count = len(self.lo_idx) + len(self.hi_idx)
        self.label = label

    def values(self, z):
        return np.concatenate([z[self.lo_idx] - self.lo, self.hi - z[self.hi_idx]])

    def add_gradient(self, z, w, out):
        nlo = len(self.lo_idx)
        np.add.at(out, self.lo_idx, w[:nlo])
        np.subtract.at(out, self.hi_idx, w[nlo:])

    def add_hessian(self, z, w1, w2, out):
        nlo = len(self.lo_idx)
        d = out.ravel()
        n = out.shape[0]
        np.subtract.at(d, self.lo_idx * (n + 1), w2[:nlo])
        np.subtract.at(d, self.hi_idx * (n + 1), w2[nlo:])


class BallBlock:
    """r^2 - ||z[idx] - c||^2 >= 0 (one Euclidean ball over an index subset)."""

    def __init__(self, idx, center, radius, label="ball"):
        self.idx = np.asarray(idx, dtype=int)
        self.center = np.asarray(center, dtype=float)
        self.r2 = float(radius) ** 2
        self.count = 1
        self.label = label

    def values(self, z):
        d = z[self.idx] - self.center
        return np.array([self.r2 - d @ d])

    def add_gradient(self, z, w, out):
        d = z[self.idx] - self.center
        np.add.at(out, self.idx, -2.0 * w[0] * d)

    def add_hessian(self, z, w1, w2, out):
        d = z[self.idx] - self.center
        grad = np.zeros(len(self.idx))
        grad -= 2.0 * d
        sub = -2.0 * w1[0] * np.eye(len(self.idx)) - w2[0] * np.outer(grad, grad)
        out[np.ix_(self.idx, self.idx)] += sub


@dataclasses.dataclass
class SolveInfo:
    converged: bool
    stages: int
    newton_steps: int
    kkt_residual: float
    mu_final: float
    line_search_failed: bool
    message: str = ""


def _barrier_eval(objective, blocks, z, mu, order):
    """phi, grad, hess of f + mu * sum log g; None if z is out of domain."""
    res = objective(z, order)
    if res is None:
        return None
    gs = [blk.values(z) for blk in blocks]
    if any(np.any(g <= 0) for g in gs):
        return None
    phi = res[0] + mu * sum(np.sum(np.log(g)) for g in gs)
    if order == 0:
        return (phi,)
    grad = res[1].copy()
    for blk, g in zip(blocks, gs):
        blk.add_gradient(z, mu / g, grad)
    if order == 1:
        return phi, grad
    hess = res[2].copy()
    for blk, g in zip(blocks, gs):
        blk.add_hessian(z, mu / g, mu / g**2, hess)
    return phi, grad, hess


def _newton_direction(hess, grad):
    """Solve (-H) d = grad with escalating ridge damping if not PD."""
    neg = -hess
    scale = max(float(np.trace(neg)) / neg.shape[0], 1e-12)
    ridge = 0.0
    for _ in range(12):
        try:
            m = neg if ridge == 0.0 else neg + ridge * np.eye(neg.shape[0])
            c = np.linalg.cholesky(m)
            return sla.cho_solve((c, True), grad)
        except np.linalg.LinAlgError:
            ridge = scale * 1e-10 if ridge == 0.0 else ridge * 100.0
    raise np.linalg.LinAlgError("Newton system not positive definite despite damping")


def concave_max(
    objective: Callable,
    blocks: Sequence,
    z0: np.ndarray,
    kkt_tol: float = KKT_TOL,
    mu_floor_rel: float = MU_FLOOR_REL,
) -> Tuple[np.ndarray, SolveInfo]:
    """Maximize a smooth concave objective over concave inequality blocks.

    objective(z, order) returns (value,), (value, grad) or (value, grad, hess)
    per `order` in {0, 1, 2}, or None when z is outside its domain.  Returns
    the final iterate and a SolveInfo; raises InfeasibleStartError when z0 is
    not strictly interior.
    """
    z = np.asarray(z0, dtype=float).copy()
    for blk in blocks:
        vals = blk.values(z)
        if np.any(vals <= 0):
            bad = int(np.argmin(vals))
            raise InfeasibleStartError(
                f"start violates {getattr(blk, 'label', 'constraint')} row {bad} "
                f"(value {vals[bad]:.3e})"
            )
    if objective(z, 0) is None:
        raise InfeasibleStartError("start lies outside the objective domain")

    n_c = int(sum(blk.count for blk in blocks))
    if n_c == 0:
        mus = [0.0]
    else:
        mus = []
        mu = float(n_c)
        floor = mu_floor_rel * n_c
        while True:
            mus.append(mu)
            if mu <= floor * (1 + 1e-12):
                break
            mu /= 10.0
    steps = 0
    kkt = np.inf
    ls_failed = False
    message = ""
    for stage, mu in enumerate(mus):
        for _ in range(MAX_NEWTON_PER_STAGE):
            phi, grad, hess = _barrier_eval(objective, blocks, z, mu, 2)
            kkt = float(np.max(np.abs(grad)))
            if kkt <= kkt_tol:
                break
            try:
                d = _newton_direction(hess, grad)
            except np.linalg.LinAlgError as exc:
                ls_failed = True
                message = f"stage {stage}: {exc}"
                break
            slope = float(grad @ d)
            if slope <= 0:  # numerical loss of ascent direction
                ls_failed = True
                message = f"stage {stage}: non-ascent Newton direction"
                break
            alpha = 1.0
            accepted = False
            for _ in range(MAX_HALVINGS):
                trial = _barrier_eval(objective, blocks, z + alpha * d, mu, 0)
                if trial is not None and trial[0] >= phi + ARMIJO_C1 * alpha * slope:
                    z = z + alpha * d
                    accepted = True
                    break
                alpha *= 0.5
            steps += 1
            if not accepted:
                ls_failed = True
                message = f"stage {stage}: line search exhausted {MAX_HALVINGS} halvings"
                break
        if ls_failed:
            break
    final = _barrier_eval(objective, blocks, z, mus[-1], 1)
    if final is not None:
        kkt = float(np.max(np.abs(final[1])))
    info = SolveInfo(
        converged=(not ls_failed) and kkt <= kkt_tol,
        stages=len(mus),
        newton_steps=steps,
        kkt_residual=kkt,
        mu_final=mus[-1],
        line_search_failed=ls_failed,
        message=message,
    )
    return z, info


def feasibility_violations(blocks: Sequence, z: np.ndarray, tol: float = 1e-6) -> List[str]:
    """Constraint rows violated beyond tol, as human-readable labels."""
    out = []
    for blk in blocks:
        vals = blk.values(z)
        for i in np.nonzero(vals < -tol)[0]:
            out.append(f"{getattr(blk, 'label', 'constraint')}[{int(i)}] = {vals[int(i)]:.3e}")
    return out
