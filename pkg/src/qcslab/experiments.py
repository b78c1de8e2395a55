"""Uniform-recovery experiment harness.

One trial = one draw of (Phi, eps, tau) per grid point m, reused for every
test pair at that grid point.  Signal draws are keyed so they stay fixed while
m varies within a trial; corruption vectors live in R^m and are redrawn per m
from their own stream.  Test sets are generated sequentially, so smaller test
sets are prefixes of larger ones (nested by construction).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry
from .ensemble import EnsembleConfig, draw_ensemble, rng_for
from .priors import (
    GroundTruthPair,
    LowRankPrior,
    SparsePrior,
    generative_forward,
    norm_f,
    random_generative_map,
    sample_lowrank,
    sample_sparse,
)
from .quantizer import Quantizer, dithered_quantize
from .solvers import (
    SolverConfig,
    default_lambdas_params,
    solve_constrained_batch,
    solve_generative,
    solve_pbp,
    solve_unconstrained_batch,
)

SCENARIOS = (
    "sparse_sparse_constrained",
    "sparse_sparse_unconstrained",
    "lowrank_sparse_constrained",
    "lowrank_sparse_unconstrained",
    "pbp",
    "generative",
)

ERROR_FLOOR = 1e-6  # below this the exact-recovery floor flattens the decay curve


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    scenario: str = "sparse_sparse_constrained"
    m_grid: tuple = (150, 200, 300, 400, 500)
    testset_size: int = 100
    trials: int = 10
    n: int = 256
    s: int = 2
    k: int = 2
    p: int = 16
    q: int = 16
    r: int = 1
    k_lat: int = 2
    hidden_dim: int = 16
    latent_radius: float = 1.0
    delta: float = 0.1
    sigma: float = 0.0
    matrix_kind: str = "gaussian"
    seed: int = 0
    # multiplier for the regularization constants; calibrated by a pilot sweep
    # at (n=256, s=k=2, delta=0.1) minimizing median recovery error
    lambda_c: float = 0.1
    solver_max_iters: int = 3000
    solver_tol: float = 1e-7
    restarts: int = 10
    gd_steps: int = 1000

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        grid = tuple(self.m_grid)
        if list(grid) != sorted(set(grid)):
            raise ConfigError("m_grid must be strictly increasing")
        object.__setattr__(self, "m_grid", grid)
        if self.testset_size < 1:
            raise ConfigError("testset_size must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    @property
    def signal_dim(self) -> int:
        if self.scenario.startswith("lowrank"):
            return self.p * self.q
        return self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["m_grid"] = list(self.m_grid)
        return d


def plan_from_dict(data: dict) -> ExperimentPlan:
    known = set(ExperimentPlan.__dataclass_fields__)
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return ExperimentPlan(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _generative_maps(plan: ExperimentPlan, m: int):
    """Fixed-weight maps pinned by the plan seed (independent of trial and m
    for the signal; the corruption map output dim is m so it is keyed by m)."""
    g_x = random_generative_map(
        plan.k_lat, plan.hidden_dim, plan.n, rng_for(plan.seed, "gmap-x")
    )
    g_v = random_generative_map(
        plan.k_lat, plan.hidden_dim, m, rng_for(plan.seed, f"gmap-v/{m}")
    )
    return g_x, g_v


def build_testset(plan: ExperimentPlan, m: int, rng_x, rng_v) -> list:
    """testset_size ground-truth pairs for grid point m.

    Signal draws come from rng_x, corruption draws from rng_v; pairs are
    generated sequentially so prefixes give nested test sets.
    """
    pairs = []
    if plan.scenario == "generative":
        g_x, g_v = _generative_maps(plan, m)
        x_prior = v_prior = None
        for _ in range(plan.testset_size):
            z = _ball_point(rng_x, plan.k_lat, plan.latent_radius)
            zp = _ball_point(rng_v, plan.k_lat, plan.latent_radius)
            pairs.append(
                GroundTruthPair(
                    x_star=generative_forward(g_x, z),
                    v_star=generative_forward(g_v, zp),
                    x_prior=None,
                    v_prior=None,
                )
            )
        return pairs

    if plan.scenario.startswith("lowrank"):
        x_prior = LowRankPrior(p=plan.p, q=plan.q, r=plan.r)
    else:
        x_prior = SparsePrior(n=plan.n, s=plan.s)
    v_prior = SparsePrior(n=m, s=plan.k)
    for _ in range(plan.testset_size):
        if isinstance(x_prior, LowRankPrior):
            # unit Frobenius norm: the sampler returns norm sqrt(r)
            x = sample_lowrank(plan.p, plan.q, plan.r, rng_x).reshape(-1) / math.sqrt(plan.r)
        else:
            x = sample_sparse(plan.n, plan.s, rng_x)
            x /= np.linalg.norm(x)
        if plan.scenario == "pbp":
            v = np.zeros(m)
        else:
            v = sample_sparse(m, plan.k, rng_v)
            v /= np.linalg.norm(v)
        pairs.append(GroundTruthPair(x_star=x, v_star=v, x_prior=x_prior, v_prior=v_prior))
    return pairs


def _ball_point(rng, dim: int, radius: float) -> np.ndarray:
    d = rng.standard_normal(dim)
    d /= np.linalg.norm(d)
    return d * radius * rng.uniform() ** (1.0 / dim)


@dataclass
class SweepReport:
    scenario: str
    m_grid: tuple
    records: list
    aggregate: dict
    fitted_slope: float
    overlays: dict
    plan: dict
    flagged_cells: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "m_grid": list(self.m_grid),
            "records": self.records,
            "aggregate": {str(k): v for k, v in self.aggregate.items()},
            "fitted_slope": self.fitted_slope,
            "overlays": {str(k): v for k, v in self.overlays.items()},
            "plan": self.plan,
            "flagged_cells": self.flagged_cells,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_csv(self, path) -> None:
        write_curves_csv([self], path)


def write_curves_csv(reports, path) -> None:
    """Stable-order delimited output: scenario,m,trial,max_err,mean_err,predicted_error."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "m", "trial", "max_err", "mean_err", "predicted_error"])
        for report in reports:
            for rec in report.records:
                overlay = report.overlays.get(rec["m"])
                predicted = overlay["predicted_error"] if overlay else ""
                writer.writerow(
                    [
                        report.scenario,
                        rec["m"],
                        rec["trial"],
                        repr(rec["max_err"]),
                        repr(rec["mean_err"]),
                        repr(predicted) if predicted != "" else "",
                    ]
                )


def _overlay_setting(scenario: str):
    if scenario.startswith("sparse_sparse"):
        return "sparse_sparse"
    if scenario.startswith("lowrank"):
        return "lowrank_sparse"
    return None


def _run_cell(plan: ExperimentPlan, trial: int, m: int) -> dict:
    """Solve every test pair at one (m, trial) cell under a single ensemble."""
    cell_seed = int(rng_for(plan.seed, f"ensemble-seed/{trial}/{m}").integers(2**62))
    cfg = EnsembleConfig(
        m=m,
        n=plan.signal_dim,
        matrix_kind=plan.matrix_kind,
        noise_sigma=plan.sigma,
        delta=plan.delta,
        seed=cell_seed,
    )
    ensemble = draw_ensemble(cfg)
    fingerprint = ensemble.fingerprint()
    quantizer = (
        Quantizer(delta=plan.delta) if plan.delta > 0 else Quantizer(unquantized_mode=True)
    )
    rng_x = rng_for(plan.seed, f"testset-x/{trial}")
    rng_v = rng_for(plan.seed, f"testset-v/{trial}/{m}")
    pairs = build_testset(plan, m, rng_x, rng_v)

    solver_cfg = SolverConfig(
        max_iters=plan.solver_max_iters,
        grad_tol=plan.solver_tol,
        accelerated=True,
        restarts=plan.restarts,
        seed=int(rng_for(plan.seed, f"solver-seed/{trial}/{m}").integers(2**62)),
    )

    if plan.scenario == "generative":
        per_pair = _solve_generative_cell(plan, ensemble, quantizer, pairs, solver_cfg)
    elif plan.scenario == "pbp":
        per_pair = _solve_pbp_cell(plan, ensemble, quantizer, pairs, solver_cfg)
    else:
        per_pair = _solve_lasso_cell(plan, ensemble, quantizer, pairs, solver_cfg)

    per_pair = np.asarray(per_pair, dtype=float)
    flagged = [int(i) for i in np.nonzero(~np.isfinite(per_pair))[0]]
    valid = per_pair[np.isfinite(per_pair)]
    max_err = float("inf") if flagged else float(per_pair.max())
    mean_err = float(valid.mean()) if valid.size else float("inf")
    return {
        "m": m,
        "trial": trial,
        "max_err": max_err,
        "mean_err": mean_err,
        "per_pair": [float(x) for x in per_pair],
        "flagged": flagged,
        "ensemble_fingerprint": fingerprint,
    }


def _observe_batch(ensemble, quantizer, pairs):
    phi = ensemble.phi
    m = ensemble.config.m
    x_mat = np.stack([p.x_star for p in pairs], axis=1)
    v_mat = np.stack([p.v_star for p in pairs], axis=1)
    y_clean = phi @ x_mat + np.sqrt(m) * v_mat + ensemble.eps[:, None]
    tau = np.broadcast_to(ensemble.tau[:, None], y_clean.shape)
    return dithered_quantize(quantizer, y_clean, tau), x_mat, v_mat


def _solve_lasso_cell(plan, ensemble, quantizer, pairs, solver_cfg):
    obs, x_mat, v_mat = _observe_batch(ensemble, quantizer, pairs)
    x_prior = pairs[0].x_prior
    v_prior = pairs[0].v_prior
    if plan.scenario.endswith("unconstrained"):
        lambdas = default_lambdas_params(
            x_prior,
            v_prior,
            m=max(plan.m_grid),
            n=plan.signal_dim,
            sigma=plan.sigma,
            delta=plan.delta,
            c1=plan.lambda_c,
            c2=plan.lambda_c,
        )
        x_hat, v_hat, _, _, _ = solve_unconstrained_batch(
            obs.y_dot, ensemble, x_prior, v_prior, lambdas, solver_cfg
        )
    else:
        radii_x = np.array([norm_f(x_prior, p.x_star) for p in pairs])
        radii_v = np.array([norm_f(v_prior, p.v_star) for p in pairs])
        x_hat, v_hat, _, _, _ = solve_constrained_batch(
            obs.y_dot, ensemble, x_prior, v_prior, radii_x, radii_v, solver_cfg
        )
    return np.sqrt(
        np.sum((x_hat - x_mat) ** 2, axis=0) + np.sum((v_hat - v_mat) ** 2, axis=0)
    )


def _solve_pbp_cell(plan, ensemble, quantizer, pairs, solver_cfg):
    obs, x_mat, _ = _observe_batch(ensemble, quantizer, pairs)
    errors = []
    for j, pair in enumerate(pairs):
        single = type(obs)(
            y_dot=obs.y_dot[:, j], xi=obs.xi[:, j], y_clean=obs.y_clean[:, j]
        )
        result = solve_pbp(single, ensemble, pair.x_prior, solver_cfg, truth=pair)
        errors.append(result.err_x)
    return errors


def _solve_generative_cell(plan, ensemble, quantizer, pairs, solver_cfg):
    g_x, g_v = _generative_maps(plan, ensemble.config.m)
    obs, _, _ = _observe_batch(ensemble, quantizer, pairs)
    gen_cfg = SolverConfig(
        max_iters=plan.gd_steps,
        grad_tol=1e-10,
        step_rule="backtracking",
        restarts=plan.restarts,
        seed=solver_cfg.seed,
    )
    errors = []
    for j, pair in enumerate(pairs):
        single = type(obs)(
            y_dot=obs.y_dot[:, j], xi=obs.xi[:, j], y_clean=obs.y_clean[:, j]
        )
        result = solve_generative(
            single,
            ensemble,
            g_x,
            g_v,
            gen_cfg,
            radius_x=plan.latent_radius,
            radius_v=plan.latent_radius,
            truth=pair,
        )
        # relative-error tracking for the generative scenario
        rel_x = result.err_x / max(np.linalg.norm(pair.x_star), 1e-12)
        rel_v = result.err_v / max(np.linalg.norm(pair.v_star), 1e-12)
        errors.append(max(rel_x, rel_v))
    return errors


def fit_loglog_slope(m_values, errors, floor: float = ERROR_FLOOR) -> float:
    """OLS slope of log(err) vs log(m), skipping floor-level points."""
    xs, ys = [], []
    for m, err in zip(m_values, errors):
        if np.isfinite(err) and err > floor:
            xs.append(math.log(m))
            ys.append(math.log(err))
    if len(xs) < 2:
        return float("nan")
    slope = np.polyfit(xs, ys, 1)[0]
    return float(slope)


def run_sweep(plan: ExperimentPlan, jobs: int | None = None) -> SweepReport:
    tasks = [(trial, m) for trial in range(plan.trials) for m in plan.m_grid]
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(lambda tm: _run_cell(plan, *tm), tasks))
    else:
        records = [_run_cell(plan, trial, m) for trial, m in tasks]

    aggregate = {}
    for m in plan.m_grid:
        vals = [rec["max_err"] for rec in records if rec["m"] == m]
        aggregate[m] = float(np.mean(vals))
    slope = fit_loglog_slope(list(plan.m_grid), [aggregate[m] for m in plan.m_grid])

    setting = _overlay_setting(plan.scenario)
    overlays = {}
    for m in plan.m_grid:
        if setting is None:
            overlays[m] = None
        else:
            params = {"m": m, "delta": plan.delta, "sigma": plan.sigma, "k": plan.k}
            if setting == "sparse_sparse":
                params.update(n=plan.n, s=plan.s)
            else:
                params.update(p=plan.p, q=plan.q, r=plan.r)
            overlays[m] = geometry.bound_report(setting, params).to_dict()

    flagged_cells = [
        {"m": rec["m"], "trial": rec["trial"], "flagged": rec["flagged"]}
        for rec in records
        if rec["flagged"]
    ]
    return SweepReport(
        scenario=plan.scenario,
        m_grid=plan.m_grid,
        records=records,
        aggregate=aggregate,
        fitted_slope=slope,
        overlays=overlays,
        plan=plan.to_dict(),
        flagged_cells=flagged_cells,
    )


def qpe_sample_lists(plan: ExperimentPlan, m: int, n_samples: int, rng):
    """Sparse unit-norm (a, b) samples plus jointly unit-norm (c, d) probe pairs."""
    a_samples = []
    b_samples = []
    e_samples = []
    for _ in range(n_samples):
        a = sample_sparse(plan.n, plan.s, rng)
        a_samples.append(a / np.linalg.norm(a))
        b = sample_sparse(m, plan.k, rng)
        b_samples.append(b / np.linalg.norm(b))
        c = sample_sparse(plan.n, plan.s, rng)
        d = sample_sparse(m, plan.k, rng)
        scale = math.sqrt(c @ c + d @ d)
        e_samples.append((c / scale, d / scale))
    return a_samples, b_samples, e_samples


def run_qpe_check(plan: ExperimentPlan, n_samples: int = 50) -> dict:
    """Empirical quantized-product-embedding diagnostic at the largest grid m."""
    if plan.delta <= 0:
        raise ConfigError("qpe check requires delta > 0")
    m = plan.m_grid[-1]
    cfg = EnsembleConfig(
        m=m,
        n=plan.n,
        matrix_kind=plan.matrix_kind,
        noise_sigma=plan.sigma,
        delta=plan.delta,
        seed=plan.seed,
    )
    ensemble = draw_ensemble(cfg)
    quantizer = Quantizer(delta=plan.delta)
    rng = rng_for(plan.seed, "qpe-samples")
    a_s, b_s, e_s = qpe_sample_lists(plan, m, n_samples, rng)
    stat = geometry.qpe_statistic(ensemble, quantizer, a_s, b_s, e_s)
    params = {"m": m, "delta": plan.delta, "sigma": plan.sigma, "k": plan.k, "n": plan.n, "s": plan.s}
    overlay = geometry.bound_report("sparse_sparse", params)
    omega_e = math.sqrt(
        geometry.width_sparse_bound(plan.n, plan.s) ** 2
        + geometry.width_sparse_bound(m, plan.k) ** 2
    )
    band = 10.0 * (omega_e + math.sqrt(overlay.entropy_x + overlay.entropy_v))
    return {
        "statistic": stat,
        "omega_e": omega_e,
        "entropy_x": overlay.entropy_x,
        "entropy_v": overlay.entropy_v,
        "band": band,
        "within_band": bool(stat <= band),
        "n_samples": n_samples,
        "m": m,
    }


DELTA_SIGMA_GRID = ((0.02, 0.1), (0.02, 0.2), (0.04, 0.1), (0.04, 0.2))


def run_delta_sigma_study(plan: ExperimentPlan, jobs: int | None = None) -> dict:
    """Four sweeps over (sigma, delta) per the noise/resolution sensitivity protocol."""
    reports = {}
    for sigma, delta in DELTA_SIGMA_GRID:
        variant = plan_from_dict({**plan.to_dict(), "sigma": sigma, "delta": delta})
        reports[f"sigma={sigma},delta={delta}"] = run_sweep(variant, jobs=jobs)
    return reports
