"""Command-line entry point.

Every run echoes its resolved configuration into the output directory, so a
run is reproducible from its artifacts alone.  Exit codes: 0 success, 2 config
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments, geometry, plotting
from .experiments import ConfigError, ExperimentPlan, plan_from_dict

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, _, raw = item.partition("=")
    key = key.strip()
    if key.startswith("plan."):
        key = key[len("plan.") :]
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _load_config(path: str, overrides, extra_keys=()) -> tuple[ExperimentPlan, dict]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    for item in overrides or ():
        key, value = _parse_override(item)
        data[key] = value
    env_seed = os.environ.get("QCS_SEED")
    if env_seed is not None:
        try:
            data["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"QCS_SEED must be an integer, got {env_seed!r}") from exc
    extras = {key: data.pop(key) for key in list(data) if key in extra_keys}
    return plan_from_dict(data), extras


def _prepare_out_dir(out_dir: str) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_resolved(out: Path, plan: ExperimentPlan, extras=None) -> None:
    payload = plan.to_dict()
    if extras:
        payload.update(extras)
    with open(out / "resolved-config.json", "w") as fh:
        json.dump(payload, fh, indent=2)


def _run_sweep_command(args, forced_scenario=None) -> int:
    plan, _ = _load_config(args.config, args.set)
    if forced_scenario is not None:
        plan = plan_from_dict({**plan.to_dict(), "scenario": forced_scenario})
    out = _prepare_out_dir(args.out_dir)
    _write_resolved(out, plan)
    report = experiments.run_sweep(plan, jobs=args.jobs)
    report.write_json(out / "report.json")
    report.write_csv(out / "curves.csv")
    plotting.render_decay_figure({plan.scenario: report}, out / "decay_curves.png")
    print(f"wrote {out}/report.json, curves.csv, decay_curves.png")
    return EXIT_OK


def _run_delta_study(args) -> int:
    plan, _ = _load_config(args.config, args.set)
    out = _prepare_out_dir(args.out_dir)
    _write_resolved(out, plan)
    reports = experiments.run_delta_sigma_study(plan, jobs=args.jobs)
    payload = {label: rep.to_dict() for label, rep in reports.items()}
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    experiments.write_curves_csv(list(reports.values()), out / "curves.csv")
    plotting.render_decay_figure(
        reports, out / "decay_curves.png", title="noise/resolution sensitivity"
    )
    print(f"wrote {out}/report.json, curves.csv, decay_curves.png")
    return EXIT_OK


def _run_bounds(args) -> int:
    plan, _ = _load_config(args.config, args.set)
    out = _prepare_out_dir(args.out_dir)
    _write_resolved(out, plan)
    setting = experiments._overlay_setting(plan.scenario)
    if setting is None:
        raise ConfigError(f"scenario {plan.scenario!r} has no closed-form bound overlay")
    bounds = {}
    for m in plan.m_grid:
        params = {"m": m, "delta": plan.delta, "sigma": plan.sigma, "k": plan.k}
        if setting == "sparse_sparse":
            params.update(n=plan.n, s=plan.s)
        else:
            params.update(p=plan.p, q=plan.q, r=plan.r)
        bounds[str(m)] = geometry.bound_report(setting, params).to_dict()
    with open(out / "bounds.json", "w") as fh:
        json.dump(bounds, fh, indent=2)
    print(f"wrote {out}/bounds.json")
    return EXIT_OK


def _run_qpe_check(args) -> int:
    plan, extras = _load_config(args.config, args.set, extra_keys=("qpe_samples",))
    out = _prepare_out_dir(args.out_dir)
    _write_resolved(out, plan, extras)
    result = experiments.run_qpe_check(plan, n_samples=int(extras.get("qpe_samples", 50)))
    with open(out / "qpe.json", "w") as fh:
        json.dump(result, fh, indent=2)
    print(f"wrote {out}/qpe.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcslab",
        description="Quantized corrupted sensing simulation lab",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in [
        ("sweep", "run the scenario sweep from the config"),
        ("delta-study", "run the four-way noise/resolution sensitivity study"),
        ("qpe-check", "compute the empirical quantized product embedding statistic"),
        ("pbp", "run the projected back-projection track"),
        ("generative", "run the generative-prior track"),
        ("bounds", "evaluate bound overlays only, no solves"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON plan file")
        p.add_argument("--out-dir", default="out", help="output directory")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config field (dotted plan. prefix optional); last wins",
        )
        p.add_argument("--jobs", type=int, default=None, help="worker cap for cell solves")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    handlers = {
        "sweep": _run_sweep_command,
        "delta-study": _run_delta_study,
        "qpe-check": _run_qpe_check,
        "pbp": lambda a: _run_sweep_command(a, forced_scenario="pbp"),
        "generative": lambda a: _run_sweep_command(a, forced_scenario="generative"),
        "bounds": _run_bounds,
    }
    try:
        return handlers[args.subcommand](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # numerical / solver failure
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
