"""Structured and generative priors: instance sampling, norms, projections, proxes.

Low-rank instances travel as vectors of length p*q (column-major of nothing
fancy: plain C-order reshape); the nuclear-norm machinery reshapes internally.
Generative priors are frozen random-weight feed-forward nets with positive-part
activations between layers and a linear last layer; their Lipschitz constant is
the product of layer spectral norms.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np


class PriorError(ValueError):
    pass


# ---------------------------------------------------------------------------
# prior models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SparsePrior:
    """s-sparse vectors in R^n, structure norm ||.||_1."""

    n: int
    s: int
    norm_tag: str = "l1"

    def __post_init__(self):
        if not 1 <= self.s <= self.n:
            raise PriorError(f"need 1 <= s <= n, got s={self.s}, n={self.n}")


@dataclass(frozen=True)
class LowRankPrior:
    """Rank-<=r p-by-q matrices, handled as vectors of length n = p*q."""

    p: int
    q: int
    r: int
    norm_tag: str = "nuclear"

    def __post_init__(self):
        if not 1 <= self.r <= min(self.p, self.q):
            raise PriorError(f"need 1 <= r <= min(p, q), got r={self.r}")

    @property
    def n(self) -> int:
        return self.p * self.q


@dataclass(frozen=True)
class GenerativeMap:
    """Fixed-weight feed-forward map; positive-part activations between layers."""

    weights: tuple
    lipschitz_bound: float

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]


@dataclass(frozen=True)
class GenerativePrior:
    """Signals in the range of gmap over the latent ball B_2(radius)."""

    gmap: GenerativeMap
    radius: float = 1.0
    norm_tag: str = "none"

    @property
    def n(self) -> int:
        return self.gmap.out_dim


@dataclass(frozen=True)
class GroundTruthPair:
    x_star: np.ndarray
    v_star: np.ndarray
    x_prior: object
    v_prior: object


# ---------------------------------------------------------------------------
# instance sampling
# ---------------------------------------------------------------------------


def sample_sparse(n: int, s: int, rng: np.random.Generator) -> np.ndarray:
    """Support uniform over all size-s subsets, nonzeros N(0, 1)."""
    if not 1 <= s <= n:
        raise PriorError(f"need 1 <= s <= n, got s={s}, n={n}")
    x = np.zeros(n)
    support = rng.choice(n, size=s, replace=False)
    x[support] = rng.standard_normal(s)
    return x


def sample_lowrank(p: int, q: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """U V^T with orthonormal factors from thin QR of Gaussian matrices.

    All r singular values equal 1, so the Frobenius norm is sqrt(r).
    """
    if not 1 <= r <= min(p, q):
        raise PriorError(f"rank {r} infeasible for {p}x{q}")
    u, _ = np.linalg.qr(rng.standard_normal((p, r)))
    v, _ = np.linalg.qr(rng.standard_normal((q, r)))
    return u @ v.T


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def norm_f(prior, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if isinstance(prior, SparsePrior):
        return float(np.abs(x).sum())
    if isinstance(prior, LowRankPrior):
        sv = np.linalg.svd(x.reshape(prior.p, prior.q), compute_uv=False)
        return float(sv.sum())
    raise PriorError(f"no structure norm for prior {type(prior).__name__}")


# ---------------------------------------------------------------------------
# projections and proxes
# ---------------------------------------------------------------------------


def project_l1_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball via sort-and-threshold."""
    if radius < 0:
        raise PriorError("radius must be nonnegative")
    x = np.asarray(x, dtype=float)
    if np.abs(x).sum() <= radius:
        return x.copy()
    if radius == 0:
        return np.zeros_like(x)
    mags = np.sort(np.abs(x))[::-1]
    cumsum = np.cumsum(mags)
    ks = np.arange(1, x.size + 1)
    rho = np.max(np.nonzero(mags - (cumsum - radius) / ks > 0)[0]) + 1
    theta = (cumsum[rho - 1] - radius) / rho
    return np.sign(x) * np.maximum(np.abs(x) - theta, 0.0)


def project_l1_ball_cols(x: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Column-wise l1-ball projection with per-column radii (batched Duchi)."""
    x = np.asarray(x, dtype=float)
    radii = np.asarray(radii, dtype=float)
    mags = np.sort(np.abs(x), axis=0)[::-1]
    cumsum = np.cumsum(mags, axis=0)
    ks = np.arange(1, x.shape[0] + 1)[:, None]
    cond = mags - (cumsum - radii[None, :]) / ks > 0
    rho = x.shape[0] - 1 - np.argmax(cond[::-1], axis=0)
    theta = (cumsum[rho, np.arange(x.shape[1])] - radii) / (rho + 1)
    theta = np.maximum(theta, 0.0)
    inside = np.abs(x).sum(axis=0) <= radii
    theta[inside] = 0.0
    out = np.sign(x) * np.maximum(np.abs(x) - theta[None, :], 0.0)
    out[:, radii == 0] = 0.0
    return out


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def project_norm_ball(prior, x: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto {z : f(z) <= radius}."""
    if radius < 0:
        raise PriorError("radius must be nonnegative")
    x = np.asarray(x, dtype=float)
    if isinstance(prior, SparsePrior):
        return project_l1_ball(x, radius)
    if isinstance(prior, LowRankPrior):
        u, sv, vt = np.linalg.svd(x.reshape(prior.p, prior.q), full_matrices=False)
        sv_proj = project_l1_ball(sv, radius)
        return (u @ np.diag(sv_proj) @ vt).reshape(-1)
    raise PriorError(f"no norm-ball projection for prior {type(prior).__name__}")


def prox_norm(prior, x: np.ndarray, t: float) -> np.ndarray:
    """prox of t*f: soft-thresholding (l1) / singular-value thresholding (nuclear)."""
    if t < 0:
        raise PriorError("prox scale t must be nonnegative")
    x = np.asarray(x, dtype=float)
    if isinstance(prior, SparsePrior):
        return soft_threshold(x, t)
    if isinstance(prior, LowRankPrior):
        u, sv, vt = np.linalg.svd(x.reshape(prior.p, prior.q), full_matrices=False)
        return (u @ np.diag(np.maximum(sv - t, 0.0)) @ vt).reshape(-1)
    raise PriorError(f"no prox for prior {type(prior).__name__}")


def prox_norm_cols(prior, x: np.ndarray, t: float) -> np.ndarray:
    """Column-wise prox of t*f on a stack of instances."""
    if isinstance(prior, SparsePrior):
        return soft_threshold(x, t)
    if isinstance(prior, LowRankPrior):
        mats = np.moveaxis(x.reshape(prior.p, prior.q, -1), 2, 0)
        u, sv, vt = np.linalg.svd(mats, full_matrices=False)
        sv = np.maximum(sv - t, 0.0)
        out = np.einsum("bir,br,brj->bij", u, sv, vt)
        return np.moveaxis(out, 0, 2).reshape(x.shape)
    raise PriorError(f"no prox for prior {type(prior).__name__}")


def project_norm_ball_cols(prior, x: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Column-wise norm-ball projection with per-column radii."""
    if isinstance(prior, SparsePrior):
        return project_l1_ball_cols(x, radii)
    if isinstance(prior, LowRankPrior):
        mats = np.moveaxis(x.reshape(prior.p, prior.q, -1), 2, 0)
        u, sv, vt = np.linalg.svd(mats, full_matrices=False)
        sv_proj = np.stack([project_l1_ball(s, rad) for s, rad in zip(sv, radii)])
        out = np.einsum("bir,br,brj->bij", u, sv_proj, vt)
        return np.moveaxis(out, 0, 2).reshape(x.shape)
    raise PriorError(f"no norm-ball projection for prior {type(prior).__name__}")


# ---------------------------------------------------------------------------
# generative maps
# ---------------------------------------------------------------------------


def make_generative_map(weights) -> GenerativeMap:
    ws = tuple(np.asarray(w, dtype=float) for w in weights)
    for a, b in zip(ws, ws[1:]):
        if b.shape[1] != a.shape[0]:
            raise PriorError(f"layer shape mismatch: {a.shape} -> {b.shape}")
    lip = float(np.prod([np.linalg.norm(w, 2) for w in ws]))
    return GenerativeMap(weights=ws, lipschitz_bound=lip)


def random_generative_map(
    in_dim: int, hidden_dim: int, out_dim: int, rng: np.random.Generator, scale: float = 1.0
) -> GenerativeMap:
    """Frozen random-weight 2-layer net, roughly unit-gain per layer.

    Weight variance 2/fan_in keeps positive-part activations from shrinking the
    signal; `scale` multiplies the output layer.
    """
    w1 = rng.standard_normal((hidden_dim, in_dim)) * np.sqrt(2.0 / in_dim)
    w2 = rng.standard_normal((out_dim, hidden_dim)) * (scale / np.sqrt(hidden_dim))
    return make_generative_map([w1, w2])


def generative_forward(gmap: GenerativeMap, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[0] != gmap.in_dim:
        raise PriorError(f"latent dim {z.shape[0]} != map input dim {gmap.in_dim}")
    h = z
    for w in gmap.weights[:-1]:
        h = np.maximum(w @ h, 0.0)
    return gmap.weights[-1] @ h


def generative_backward(gmap: GenerativeMap, z: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of the forward map at z.

    The positive-part kink uses subgradient 0 at exactly-zero pre-activations.
    """
    z = np.asarray(z, dtype=float)
    cotangent = np.asarray(cotangent, dtype=float)
    if cotangent.shape[0] != gmap.out_dim:
        raise PriorError(f"cotangent dim {cotangent.shape[0]} != output dim {gmap.out_dim}")
    h = z
    pre_acts = []
    for w in gmap.weights[:-1]:
        pre = w @ h
        pre_acts.append(pre)
        h = np.maximum(pre, 0.0)
    g = gmap.weights[-1].T @ cotangent
    for w, pre in zip(gmap.weights[:-1][::-1], pre_acts[::-1]):
        g = w.T @ (g * (pre > 0))
    return g


def clamp_to_ball(z: np.ndarray, radius: float, warn: bool = False) -> np.ndarray:
    nrm = float(np.linalg.norm(z))
    if nrm <= radius:
        return z
    if warn:
        warnings.warn(f"latent norm {nrm:.3g} exceeds radius {radius:.3g}; clamping")
    return z * (radius / nrm)


def generative_map_to_json(gmap: GenerativeMap) -> str:
    return json.dumps({"weights": [w.tolist() for w in gmap.weights]})


def generative_map_from_json(payload: str) -> GenerativeMap:
    return make_generative_map(json.loads(payload)["weights"])
