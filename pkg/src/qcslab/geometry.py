"""Theoretical-quantity calculators: entropy bounds, Gaussian widths, error overlays.

These feed plot overlays and sanity anchors.  The closed-form expressions carry
unspecified absolute constants in the theory; overlays evaluate them with the
constant set to 1 and are shape-only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .ensemble import SensingEnsemble
from .quantizer import Quantizer, dithered_quantize


class GeometryError(ValueError):
    pass


def _clog(x: float) -> float:
    return math.log(max(x, math.e))


def entropy_sparse(n: int, s: int, eps: float) -> float:
    """Covering-entropy bound s*log(9n/(eps*s)) for unit-ball s-sparse vectors."""
    if not (eps > 0 and 1 <= s <= n):
        raise GeometryError(f"bad arguments n={n}, s={s}, eps={eps}")
    val = s * math.log(9 * n / (eps * s))
    if val < 0:
        warnings.warn("covering radius exceeds the set diameter; entropy clipped to 0")
        return 0.0
    return val


def entropy_lowrank(p: int, q: int, r: int, eps: float) -> float:
    """Covering-entropy bound 2r(p+q)*log(9/eps) for unit-Frobenius rank-r matrices."""
    if not (eps > 0 and 1 <= r <= min(p, q)):
        raise GeometryError(f"bad arguments p={p}, q={q}, r={r}, eps={eps}")
    val = 2 * r * (p + q) * math.log(9 / eps)
    if val < 0:
        warnings.warn("covering radius exceeds the set diameter; entropy clipped to 0")
        return 0.0
    return val


class WidthEstimate(NamedTuple):
    value: float
    stderr: float


def width_sparse_cone_mc(n: int, s: int, trials: int, rng: np.random.Generator) -> WidthEstimate:
    """Monte-Carlo Gaussian width of unit-norm s-sparse vectors.

    The sup over the set for a fixed Gaussian draw g is the l2 norm of the s
    largest-magnitude entries of g, so the estimator averages exactly that.
    """
    if trials < 1:
        raise GeometryError("trials must be >= 1")
    g = rng.standard_normal((trials, n))
    if s >= n:
        sups = np.linalg.norm(g, axis=1)
    else:
        part = np.partition(np.abs(g), n - s, axis=1)[:, n - s :]
        sups = np.linalg.norm(part, axis=1)
    return WidthEstimate(
        value=float(sups.mean()),
        stderr=float(sups.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("inf"),
    )


def width_sparse_bound(n: int, s: int) -> float:
    """Closed-form width overlay sqrt(s*log(en/s)) (descent-cone upper-bound style)."""
    return math.sqrt(s * math.log(math.e * n / s))


def width_lowrank_bound(p: int, q: int, r: int) -> float:
    """Closed-form width overlay sqrt(r*(p+q)) for rank-r unit-Frobenius matrices."""
    return math.sqrt(r * (p + q))


def predicted_uniform_error(setting: str, params: dict) -> float:
    """Right-hand side of the uniform error bound, absolute constant set to 1.

    setting "sparse_sparse": sparse signal + sparse corruption;
    setting "lowrank_sparse": low-rank signal + sparse corruption.  Log arguments are
    clamped below at e.
    """
    m = params["m"]
    delta = params.get("delta", 0.0)
    sigma = params.get("sigma", 0.0)
    k = params["k"]
    if setting == "sparse_sparse":
        n, s = params["n"], params["s"]
        noise = sigma * math.sqrt(s * _clog(math.e * n / s) + k * _clog(math.e * m / k))
        if delta > 0:
            quant = delta * math.sqrt(
                s * _clog(n * m**1.5 / (s**2.5 * delta)) + k * _clog(m**2.5 / (k**2.5 * delta))
            )
        else:
            quant = 0.0
    elif setting == "lowrank_sparse":
        p, q, r = params["p"], params["q"], params["r"]
        noise = sigma * math.sqrt(r * (p + q) + k * _clog(math.e * m / k))
        if delta > 0:
            rpq = r * (p + q)
            quant = delta * math.sqrt(
                rpq * _clog(m**1.5 / (delta * rpq**1.5)) + k * _clog(m**2.5 / (k**2.5 * delta))
            )
        else:
            quant = 0.0
    else:
        raise GeometryError(f"unknown setting {setting!r}")
    return (noise + quant) / math.sqrt(m)


@dataclass(frozen=True)
class BoundReport:
    entropy_x: float
    entropy_v: float
    width_x: float
    width_v: float
    predicted_error: float
    zeta: float
    params: dict

    def to_dict(self) -> dict:
        return asdict(self)


def bound_report(setting: str, params: dict, rho_c: float = 0.1) -> BoundReport:
    """Assemble the overlay quantities for one (m, prior) configuration.

    Covering radii follow rho1 = c*delta*(s/m)^1.5 (low-rank: s -> r(p+q)),
    rho2 = c*delta*(k/m)^1.5 with c = rho_c; widths are the closed-form bound
    overlays, not estimates.
    """
    m = params["m"]
    delta = params.get("delta", 0.0)
    k = params["k"]
    eps_floor = 1e-12
    rho2 = max(rho_c * delta * (k / m) ** 1.5, eps_floor)
    if setting == "sparse_sparse":
        n, s = params["n"], params["s"]
        rho1 = max(rho_c * delta * (s / m) ** 1.5, eps_floor)
        h_x = entropy_sparse(n, s, rho1)
        width_x = width_sparse_bound(n, s)
    elif setting == "lowrank_sparse":
        p, q, r = params["p"], params["q"], params["r"]
        rho1 = max(rho_c * delta * (r * (p + q) / m) ** 1.5, eps_floor)
        h_x = entropy_lowrank(p, q, r, rho1)
        width_x = width_lowrank_bound(p, q, r)
    else:
        raise GeometryError(f"unknown setting {setting!r}")
    h_v = entropy_sparse(m, k, rho2)
    return BoundReport(
        entropy_x=h_x,
        entropy_v=h_v,
        width_x=width_x,
        width_v=width_sparse_bound(m, k),
        predicted_error=predicted_uniform_error(setting, params),
        zeta=4 * delta * (h_x + h_v) / m,
        params=dict(params, rho1=rho1, rho2=rho2),
    )


def qpe_statistic(
    e: SensingEnsemble,
    q: Quantizer,
    a_samples,
    b_samples,
    e_samples,
) -> float:
    """Empirical quantized-product-embedding statistic.

    max over sampled (a, b) and unit pairs (c, d) of
    |<xi_{a,b}, Phi c + sqrt(m) d>| / (delta * sqrt(m)), where xi_{a,b} is the
    quantization noise of observing the pair (a, b).
    """
    if q.unquantized_mode or q.delta <= 0:
        raise GeometryError("QPE statistic is undefined without quantization")
    if len(a_samples) == 0 or len(b_samples) == 0 or len(e_samples) == 0:
        raise GeometryError("sample lists must be nonempty")
    phi = e.phi
    m = e.config.m
    sqm = np.sqrt(m)
    cs = np.stack([np.asarray(c, dtype=float) for c, _ in e_samples], axis=1)
    ds = np.stack([np.asarray(d, dtype=float) for _, d in e_samples], axis=1)
    probes = phi @ cs + sqm * ds  # (m, n_e)
    b_mat = np.stack([np.asarray(b, dtype=float) for b in b_samples], axis=1)  # (m, n_b)
    best = 0.0
    for a in a_samples:
        y_clean = (phi @ np.asarray(a, dtype=float))[:, None] + sqm * b_mat + e.eps[:, None]
        xi = dithered_quantize(q, y_clean, np.broadcast_to(e.tau[:, None], y_clean.shape)).xi
        best = max(best, float(np.abs(xi.T @ probes).max()))
    return float(best / (q.delta * sqm))
