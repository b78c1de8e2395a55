"""Sensing ensemble: one fixed draw of (Phi, eps, tau).

The measurement model is y = Phi x + sqrt(m) v + eps with Phi having i.i.d.
zero-mean unit-variance entries (Gaussian or Rademacher), Gaussian noise eps,
and uniform dither tau on [-delta/2, delta/2].  A single draw serves an
entire test set of (x, v) pairs, which is what "uniform recovery" means
operationally.
"""

from __future__ import annotations

import io
import json
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .quantizer import QuantizedObservation, Quantizer, dithered_quantize

MATRIX_KINDS = ("gaussian", "rademacher")


class EnsembleError(ValueError):
    pass


def rng_for(seed: int, tag: str) -> np.random.Generator:
    """Independent, reproducible stream keyed by (seed, purpose tag)."""
    key = zlib.crc32(tag.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


@dataclass(frozen=True)
class EnsembleConfig:
    m: int
    n: int
    matrix_kind: str = "gaussian"
    noise_sigma: float = 0.0
    delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise EnsembleError(f"need m, n >= 1, got m={self.m}, n={self.n}")
        if self.matrix_kind not in MATRIX_KINDS:
            raise EnsembleError(f"matrix_kind must be one of {MATRIX_KINDS}")
        if self.noise_sigma < 0 or self.delta < 0:
            raise EnsembleError("noise_sigma and delta must be nonnegative")


@dataclass(frozen=True)
class SensingEnsemble:
    phi: np.ndarray
    eps: np.ndarray
    tau: np.ndarray
    config: EnsembleConfig

    def fingerprint(self) -> str:
        h = zlib.crc32(self.phi.tobytes())
        h = zlib.crc32(self.eps.tobytes(), h)
        h = zlib.crc32(self.tau.tobytes(), h)
        return f"{h:08x}"


def draw_ensemble(cfg: EnsembleConfig) -> SensingEnsemble:
    m, n = cfg.m, cfg.n
    rng_phi = rng_for(cfg.seed, "phi")
    if cfg.matrix_kind == "gaussian":
        phi = rng_phi.standard_normal((m, n))
    else:
        phi = rng_phi.integers(0, 2, size=(m, n)).astype(float) * 2.0 - 1.0
    eps = cfg.noise_sigma * rng_for(cfg.seed, "eps").standard_normal(m)
    if cfg.delta > 0:
        tau = rng_for(cfg.seed, "tau").uniform(-cfg.delta / 2, cfg.delta / 2, size=m)
    else:
        tau = np.zeros(m)
    return SensingEnsemble(phi=phi, eps=eps, tau=tau, config=cfg)


def measure(e: SensingEnsemble, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """y = Phi x + sqrt(m) v + eps."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    m, n = e.config.m, e.config.n
    if x.shape != (n,) or v.shape != (m,):
        raise EnsembleError(f"expected shapes ({n},), ({m},); got {x.shape}, {v.shape}")
    return e.phi @ x + np.sqrt(m) * v + e.eps


def observe(e: SensingEnsemble, q: Quantizer, x: np.ndarray, v: np.ndarray) -> QuantizedObservation:
    """Quantized observation y_dot = Q_delta(y + tau) of the measurement y."""
    if not q.unquantized_mode and q.delta != e.config.delta:
        raise EnsembleError(
            f"quantizer delta {q.delta} does not match ensemble delta {e.config.delta}"
        )
    return dithered_quantize(q, measure(e, x, v), e.tau)


def save_ensemble(e: SensingEnsemble, path: str) -> None:
    """Text dump for cross-run replay: config JSON header, Phi rows, eps, tau."""
    with open(path, "w") as fh:
        fh.write(json.dumps(asdict(e.config)) + "\n")
        np.savetxt(fh, e.phi, delimiter=",")
        np.savetxt(fh, e.eps[None, :], delimiter=",")
        np.savetxt(fh, e.tau[None, :], delimiter=",")


def load_ensemble(path: str) -> SensingEnsemble:
    with open(path) as fh:
        cfg = EnsembleConfig(**json.loads(fh.readline()))
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    phi = np.loadtxt(io.StringIO("\n".join(lines[: cfg.m])), delimiter=",").reshape(cfg.m, cfg.n)
    eps = np.atleast_1d(np.loadtxt(io.StringIO(lines[cfg.m]), delimiter=","))
    tau = np.atleast_1d(np.loadtxt(io.StringIO(lines[cfg.m + 1]), delimiter=","))
    return SensingEnsemble(phi=phi, eps=eps, tau=tau, config=cfg)
