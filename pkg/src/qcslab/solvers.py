"""Decoders: constrained Lasso, unconstrained Lasso, PBP, generative latent descent.

The constrained Lasso minimizes the squared residual ||y_dot - Phi x - sqrt(m) v||^2
(same minimizers as the norm, smooth) subject to f(x) <= radius_x, g(v) <= radius_v
by projected gradient descent; the constraint set is a product so the joint
Euclidean projection separates.  The unconstrained Lasso adds lambda1*f + lambda2*g
penalties and uses proximal gradient.  Both have an optional FISTA-style
accelerated mode (objective monotonicity is only guaranteed in plain mode).

Batch variants solve many (x, v) pairs sharing one ensemble at once; columns of
the observation matrix are independent problems, which is what the uniform
recovery experiments need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import SensingEnsemble, rng_for
from .priors import (
    GenerativeMap,
    GroundTruthPair,
    LowRankPrior,
    SparsePrior,
    clamp_to_ball,
    generative_backward,
    generative_forward,
    project_l1_ball,
    project_norm_ball_cols,
    prox_norm_cols,
)
from .quantizer import QuantizedObservation


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    grad_tol: float = 1e-8
    step_rule: str = "fixed_inverse_lipschitz"  # or "backtracking"
    lipschitz_estimate: float | None = None
    accelerated: bool = False
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise SolverError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise SolverError("grad_tol must be positive")


@dataclass(frozen=True)
class LambdaPair:
    lambda1: float
    lambda2: float

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise SolverError("lambdas must be nonnegative")


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    v_hat: np.ndarray
    err_x: float
    err_v: float
    err_joint: float
    iters_used: int
    objective_trace: np.ndarray
    converged: bool


def _finish(x_hat, v_hat, truth, iters, trace, converged) -> RecoveryResult:
    if truth is not None:
        err_x = float(np.linalg.norm(x_hat - truth.x_star))
        err_v = float(np.linalg.norm(v_hat - truth.v_star))
    else:
        err_x = err_v = float("nan")
    return RecoveryResult(
        x_hat=x_hat,
        v_hat=v_hat,
        err_x=err_x,
        err_v=err_v,
        err_joint=math.hypot(err_x, err_v),
        iters_used=iters,
        objective_trace=np.asarray(trace),
        converged=converged,
    )


def stacked_operator_norm_sq(e: SensingEnsemble, iters: int = 50) -> float:
    """||[Phi | sqrt(m) I]||_op^2 = ||Phi||_op^2 + m (the stacked Gram is
    Phi Phi^T + m I); the Phi part comes from power iteration."""
    m = e.config.m
    v = rng_for(0, "power-iteration").standard_normal(e.config.n)
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iters):
        w = e.phi.T @ (e.phi @ v)
        lam = float(np.linalg.norm(w))
        v = w / lam
    return lam + m


def _check_obs(obs: QuantizedObservation):
    if not np.all(np.isfinite(obs.y_dot)):
        raise SolverError("non-finite observation")


# ---------------------------------------------------------------------------
# proximal / projected gradient core
# ---------------------------------------------------------------------------


def _prox_gradient_batch(ydot, e, apply_xv, cfg, grad_scale, record_trace, penalty=None):
    """Shared engine: minimize grad_scale/2 * ||Phi X + sqrt(m) V - ydot||_F^2
    (+ separable nonsmooth terms handled by apply_xv) columnwise.

    apply_xv(X, V, step) returns the prox/projection of a gradient step.
    penalty(X, V) adds the nonsmooth part to the recorded objective.
    """
    phi = e.phi
    m = e.config.m
    sqm = np.sqrt(m)
    P = ydot.shape[1]
    lip = cfg.lipschitz_estimate or stacked_operator_norm_sq(e)
    step = 1.0 / (1.1 * grad_scale * lip)

    X = np.zeros((e.config.n, P))
    V = np.zeros((m, P))
    Yx, Yv = X, V
    t_momentum = 1.0

    def objective(A, B):
        r = phi @ A + sqm * B - ydot
        val = 0.5 * grad_scale * float(np.sum(r * r))
        if penalty is not None:
            val += penalty(A, B)
        return val

    trace = [objective(X, V)] if record_trace else []
    converged = False
    iters = 0
    for it in range(cfg.max_iters):
        iters = it + 1
        R = phi @ Yx + sqm * Yv - ydot
        Gx = grad_scale * (phi.T @ R)
        Gv = grad_scale * (sqm * R)
        Xn, Vn = apply_xv(Yx - step * Gx, Yv - step * Gv, step)
        if cfg.accelerated:
            t_next = (1.0 + np.sqrt(1.0 + 4.0 * t_momentum**2)) / 2.0
            beta = (t_momentum - 1.0) / t_next
            Yx = Xn + beta * (Xn - X)
            Yv = Vn + beta * (Vn - V)
            t_momentum = t_next
        else:
            Yx, Yv = Xn, Vn
        delta = np.sqrt(
            (np.sum((Xn - X) ** 2, axis=0) + np.sum((Vn - V) ** 2, axis=0))
            / (1.0 + np.sum(Xn**2, axis=0) + np.sum(Vn**2, axis=0))
        )
        X, V = Xn, Vn
        if record_trace:
            trace.append(objective(X, V))
        if float(delta.max()) < cfg.grad_tol:
            converged = True
            break
    return X, V, iters, np.asarray(trace), converged


def solve_constrained_batch(
    ydot: np.ndarray,
    e: SensingEnsemble,
    x_prior,
    v_prior,
    radii_x: np.ndarray,
    radii_v: np.ndarray,
    cfg: SolverConfig,
    record_trace: bool = False,
):
    if x_prior.norm_tag == "none" or v_prior.norm_tag == "none":
        raise SolverError("constrained Lasso needs priors with a structure norm")
    if not np.all(np.isfinite(ydot)):
        raise SolverError("non-finite observation")
    radii_x = np.asarray(radii_x, dtype=float)
    radii_v = np.asarray(radii_v, dtype=float)

    def apply_xv(X, V, step):
        return (
            project_norm_ball_cols(x_prior, X, radii_x),
            project_norm_ball_cols(v_prior, V, radii_v),
        )

    return _prox_gradient_batch(ydot, e, apply_xv, cfg, 1.0, record_trace)


def solve_constrained(
    obs: QuantizedObservation,
    e: SensingEnsemble,
    x_prior,
    v_prior,
    radius_x: float,
    radius_v: float,
    cfg: SolverConfig,
    truth: GroundTruthPair | None = None,
) -> RecoveryResult:
    _check_obs(obs)
    X, V, iters, trace, conv = solve_constrained_batch(
        obs.y_dot[:, None], e, x_prior, v_prior, [radius_x], [radius_v], cfg, record_trace=True
    )
    return _finish(X[:, 0], V[:, 0], truth, iters, trace, conv)


def solve_unconstrained_batch(
    ydot: np.ndarray,
    e: SensingEnsemble,
    x_prior,
    v_prior,
    lambdas: LambdaPair,
    cfg: SolverConfig,
    record_trace: bool = False,
):
    if x_prior.norm_tag == "none" or v_prior.norm_tag == "none":
        raise SolverError("unconstrained Lasso needs priors with a structure norm")
    if not np.all(np.isfinite(ydot)):
        raise SolverError("non-finite observation")

    def apply_xv(X, V, step):
        return (
            prox_norm_cols(x_prior, X, step * lambdas.lambda1),
            prox_norm_cols(v_prior, V, step * lambdas.lambda2),
        )

    def penalty(X, V):
        val = 0.0
        if lambdas.lambda1 > 0:
            if isinstance(x_prior, SparsePrior):
                val += lambdas.lambda1 * float(np.abs(X).sum())
            else:
                mats = np.moveaxis(X.reshape(x_prior.p, x_prior.q, -1), 2, 0)
                val += lambdas.lambda1 * float(
                    np.linalg.svd(mats, compute_uv=False).sum()
                )
        if lambdas.lambda2 > 0:
            val += lambdas.lambda2 * float(np.abs(V).sum())
        return val

    # the penalized objective carries ||r||^2 without the 1/2, hence grad_scale 2
    return _prox_gradient_batch(ydot, e, apply_xv, cfg, 2.0, record_trace, penalty=penalty)


def solve_unconstrained(
    obs: QuantizedObservation,
    e: SensingEnsemble,
    x_prior,
    v_prior,
    lambdas: LambdaPair,
    cfg: SolverConfig,
    truth: GroundTruthPair | None = None,
) -> RecoveryResult:
    _check_obs(obs)
    X, V, iters, trace, conv = solve_unconstrained_batch(
        obs.y_dot[:, None], e, x_prior, v_prior, lambdas, cfg, record_trace=True
    )
    return _finish(X[:, 0], V[:, 0], truth, iters, trace, conv)


# ---------------------------------------------------------------------------
# regularization parameters
# ---------------------------------------------------------------------------


def _clog(x: float) -> float:
    """log with its argument clamped below at e, so the value is >= 1."""
    return math.log(max(x, math.e))


def default_lambdas(x_prior, v_prior, e: SensingEnsemble, q, c1: float, c2: float) -> LambdaPair:
    """Regularization pair for the unconstrained Lasso.

    Sparse/sparse and low-rank/sparse settings only; c1, c2 stand in for the
    "sufficiently large" absolute constants, sigma for the sub-Gaussian noise
    scale.  Log arguments are clamped below at e so the unquantized limit
    (delta -> 0) degenerates cleanly to zero.
    """
    delta = 0.0 if q.unquantized_mode else q.delta
    return default_lambdas_params(
        x_prior,
        v_prior,
        m=e.config.m,
        n=e.config.n,
        sigma=e.config.noise_sigma,
        delta=delta,
        c1=c1,
        c2=c2,
    )


def default_lambdas_params(
    x_prior, v_prior, m: int, n: int, sigma: float, delta: float, c1: float, c2: float
) -> LambdaPair:
    if not isinstance(v_prior, SparsePrior):
        raise SolverError("default_lambdas requires a sparse corruption prior")
    k = v_prior.s
    corr_term = m * k * _clog(m**2.5 / (k**2.5 * delta)) if delta > 0 else 0.0
    if isinstance(x_prior, SparsePrior):
        s = x_prior.s
        sig_term = m * s * _clog(n * m**1.5 / (s**2.5 * delta)) if delta > 0 else 0.0
        head = delta * math.sqrt(sig_term + corr_term)
        lam1 = c1 * head + c1 * (sigma + delta) * math.sqrt(m * _clog(n))
        lam2 = c2 * head + c2 * (sigma + delta) * math.sqrt(m * _clog(m))
    elif isinstance(x_prior, LowRankPrior):
        p, qq, r = x_prior.p, x_prior.q, x_prior.r
        rpq = r * (p + qq)
        sig_term = m * rpq * _clog(m**1.5 / (delta * rpq**1.5)) if delta > 0 else 0.0
        head = delta * math.sqrt(sig_term + corr_term)
        lam1 = c1 * head + c1 * (sigma + delta) * math.sqrt(m * (p + qq))
        lam2 = c2 * head + c2 * (sigma + delta) * math.sqrt(m * _clog(m))
    else:
        raise SolverError("default_lambdas supports sparse or low-rank signal priors only")
    return LambdaPair(lambda1=lam1, lambda2=lam2)


# ---------------------------------------------------------------------------
# projected back-projection
# ---------------------------------------------------------------------------


def project_intersection_dykstra(x, projections, tol: float = 1e-9, max_alternations: int = 500):
    """Exact Euclidean projection onto an intersection of convex sets (Dykstra)."""
    z = np.asarray(x, dtype=float).copy()
    increments = [np.zeros_like(z) for _ in projections]
    for _ in range(max_alternations):
        z_prev = z.copy()
        for i, proj in enumerate(projections):
            y = proj(z + increments[i])
            increments[i] = z + increments[i] - y
            z = y
        if np.linalg.norm(z - z_prev) <= tol * (1.0 + np.linalg.norm(z)):
            break
    return z


def solve_pbp(
    obs: QuantizedObservation,
    e: SensingEnsemble,
    k_set,
    cfg: SolverConfig,
    truth: GroundTruthPair | None = None,
) -> RecoveryResult:
    """One-shot estimator x_hat = P_K(Phi^T y_dot / m) over the effectively
    sparse set K = B_1(sqrt(s)) cap B_2 (corruption-free model)."""
    _check_obs(obs)
    back = e.phi.T @ obs.y_dot / e.config.m

    def proj_l2(z):
        nrm = np.linalg.norm(z)
        return z if nrm <= 1.0 else z / nrm

    if isinstance(k_set, SparsePrior) and k_set.s < k_set.n:
        rad1 = np.sqrt(k_set.s)
        x_hat = project_intersection_dykstra(
            back, [lambda z: project_l1_ball(z, rad1), proj_l2]
        )
    else:
        x_hat = proj_l2(back)
    r = obs.y_dot - e.phi @ x_hat
    return _finish(x_hat, np.zeros(e.config.m), truth, 1, [float(r @ r)], True)


# ---------------------------------------------------------------------------
# generative latent descent
# ---------------------------------------------------------------------------


def solve_generative(
    obs: QuantizedObservation,
    e: SensingEnsemble,
    g_x: GenerativeMap,
    g_v: GenerativeMap,
    cfg: SolverConfig,
    radius_x: float = 1.0,
    radius_v: float = 1.0,
    truth: GroundTruthPair | None = None,
) -> RecoveryResult:
    """Gradient descent over the latent pair with random restarts.

    Minimizes the squared residual of y_dot - Phi G(z) - sqrt(m) H(z'); latent
    iterates stay in their balls via radial clamping.  The returned restart is
    the one with the smallest measurement residual.
    """
    _check_obs(obs)
    phi = e.phi
    m = e.config.m
    sqm = np.sqrt(m)
    ydot = obs.y_dot

    def residual(z, zp):
        return ydot - phi @ generative_forward(g_x, z) - sqm * generative_forward(g_v, zp)

    def loss(z, zp):
        r = residual(z, zp)
        return 0.5 * float(r @ r)

    best = None
    best_res = np.inf
    total_iters = 0
    best_trace = [np.nan]
    n_restarts = max(1, cfg.restarts)
    for restart in range(n_restarts):
        rng = rng_for(cfg.seed, f"generative-restart/{restart}")

        def ball_init(dim, radius):
            d = rng.standard_normal(dim)
            d /= np.linalg.norm(d)
            return d * radius * rng.uniform() ** (1.0 / dim)

        z = ball_init(g_x.in_dim, radius_x)
        zp = ball_init(g_v.in_dim, radius_v)
        step = 1.0
        cur = loss(z, zp)
        trace = [2.0 * cur]
        aborted = False
        for it in range(cfg.max_iters):
            total_iters += 1
            r = residual(z, zp)
            gz = -generative_backward(g_x, z, phi.T @ r)
            gzp = -sqm * generative_backward(g_v, zp, r)
            gnorm_sq = float(gz @ gz + gzp @ gzp)
            if gnorm_sq == 0.0:
                break
            if cfg.step_rule == "backtracking":
                step = min(step * 2.0, 1e6)
                accepted = False
                for _ in range(60):
                    zn = clamp_to_ball(z - step * gz, radius_x)
                    zpn = clamp_to_ball(zp - step * gzp, radius_v)
                    new = loss(zn, zpn)
                    if np.isfinite(new) and new <= cur - 1e-4 * (
                        float(gz @ (z - zn)) + float(gzp @ (zp - zpn))
                    ):
                        accepted = True
                        break
                    step *= 0.5
                if not accepted:
                    break
            else:
                zn = clamp_to_ball(z - step * gz, radius_x)
                zpn = clamp_to_ball(zp - step * gzp, radius_v)
                new = loss(zn, zpn)
            if not np.isfinite(new):
                aborted = True
                break
            moved = float(np.linalg.norm(zn - z) + np.linalg.norm(zpn - zp))
            z, zp, cur = zn, zpn, new
            trace.append(2.0 * cur)
            if moved < cfg.grad_tol * (1.0 + float(np.linalg.norm(z) + np.linalg.norm(zp))):
                break
        if aborted:
            continue
        res = float(np.linalg.norm(residual(z, zp)))
        if res < best_res:
            best_res = res
            best = (z, zp)
            best_trace = trace
    if best is None:
        raise SolverError("all generative restarts diverged")
    z, zp = best
    x_hat = generative_forward(g_x, z)
    v_hat = generative_forward(g_v, zp)
    return _finish(x_hat, v_hat, truth, total_iters, best_trace, True)
