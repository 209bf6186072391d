"""Experiment orchestration: configs, scenario runners, result persistence.

Scenarios are thin compositions of the math modules; no numerical logic
lives here. Every run writes a JSON report, CSV series and a manifest into
the output directory. Identical (config, seeds) produce byte-identical
files: floats are written in shortest round-trip form, JSON keys are sorted,
and per-seed cells are aggregated in sorted seed order regardless of the
worker pool schedule. ADAFILTER_THREADS caps the pool.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, rng
from .diagnostics import (
    bound_check,
    posterior_concentration,
    stability_gap,
    step_errors,
    total_error_series,
)
from .errors import ConfigError, NotApplicableError
from .exact import dump_filter_csv, param_posterior, run_augmented_filter, state_marginal
from .measures import DiscreteMeasure, birkhoff_tau, mixing_constant, tv_norm
from .model import identifiability_scan, load_model, simulate, validate_model_dict
from .particle import dump_ensemble_csv, pf_estimates, pf_run

SCENARIOS = (
    "simulate",
    "filter",
    "posterior",
    "stability",
    "bounds",
    "metrics",
    "identifiability",
)


@dataclass
class ExperimentConfig:
    scenario: str
    model: str
    n: int = 100
    seeds: list[int] = field(default_factory=lambda: [0])
    eta: float = 0.1
    out: str = "results"
    alpha_index: int | None = None
    particles: int = 0
    fd_step: float = 1e-6
    ess_frac: float = 0.5
    rate_window: float = 0.5
    ident_tol: float = 1e-6
    mu: list[float] | None = None
    mu_prime: list[float] | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in known})


_NEEDS_ALPHA = ("simulate", "filter", "posterior", "stability")


def validate_config(config: ExperimentConfig) -> list[dict]:
    """All violations, each with a JSON pointer into the config."""
    bad = []
    if config.scenario not in SCENARIOS:
        bad.append({"pointer": "/scenario", "message": f"unknown scenario {config.scenario!r}"})
    if config.n < 1:
        bad.append({"pointer": "/n", "message": "horizon must be at least 1"})
    if not config.seeds:
        bad.append({"pointer": "/seeds", "message": "need at least one seed"})
    if config.scenario == "posterior" and not config.eta > 0:
        bad.append({"pointer": "/eta", "message": "eta must be positive"})
    if config.scenario in _NEEDS_ALPHA and config.alpha_index is None:
        bad.append({"pointer": "/alpha_index", "message": f"{config.scenario} needs --alpha-index"})
    if config.particles < 0:
        bad.append({"pointer": "/particles", "message": "particle count must be nonnegative"})
    if not 0 < config.ess_frac <= 1:
        bad.append({"pointer": "/ess_frac", "message": "ess_frac must lie in (0, 1]"})
    if not 0 < config.rate_window <= 1:
        bad.append({"pointer": "/rate_window", "message": "rate_window must lie in (0, 1]"})
    if not os.path.isfile(config.model):
        bad.append({"pointer": "/model", "message": f"model file not found: {config.model}"})
    return bad


def validate_model(path):
    """Parse and validate a model spec file; raises ConfigError with all violations."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(str(exc), [{"pointer": "/model", "message": str(exc)}])
    model, violations = validate_model_dict(obj)
    if model is None:
        raise ConfigError(f"invalid model file {path}", violations)
    return model


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ADAFILTER_THREADS", "4")))
    except ValueError:
        return 4


def _seed_map(fn, seeds):
    """Apply fn to each seed in a bounded pool; return results in seed order."""
    ordered = sorted(set(seeds))
    with ThreadPoolExecutor(max_workers=min(_threads(), len(ordered))) as pool:
        results = dict(zip(ordered, pool.map(fn, ordered)))
    return [(s, results[s]) for s in ordered]


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


class _RunContext:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.out = Path(config.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def finish(self, report: dict) -> None:
        report = {"config": self.config.to_dict(), **report}
        with open(self.path("report.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        canonical = json.dumps(self.config.to_dict(), sort_keys=True).encode()
        manifest = {
            "config": self.config.to_dict(),
            "config_hash": hashlib.sha256(canonical).hexdigest(),
            "seeds": sorted(set(self.config.seeds)),
            "version": __version__,
            "files": sorted(self.files),
        }
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def config_from_manifest(path) -> ExperimentConfig:
    with open(path) as fh:
        manifest = json.load(fh)
    return ExperimentConfig.from_dict(manifest["config"])


def run(config: ExperimentConfig) -> int:
    """Execute a scenario; returns 0 and writes result files.

    Raises ConfigError, IdentifiabilityError or NotApplicableError for the
    CLI to map onto exit codes 2, 3 and 4.
    """
    bad = validate_config(config)
    if bad:
        raise ConfigError("invalid configuration", bad)
    model = validate_model(config.model)
    ctx = _RunContext(config)
    runner = _SCENARIO_RUNNERS[config.scenario]
    runner(ctx, model)
    return 0


def _override_initial(model, weights):
    if weights is None:
        return model
    return model.with_initial(DiscreteMeasure(np.asarray(weights, dtype=float), probability=True))


def _scenario_simulate(ctx: _RunContext, model):
    cfg = ctx.config

    def cell(seed):
        return simulate(model, cfg.alpha_index, cfg.n, seed)

    for seed, traj in _seed_map(cell, cfg.seeds):
        rows = [
            (k + 1, int(traj.states[k]), _fmt(traj.observations[k]))
            for k in range(cfg.n)
        ]
        _write_csv(ctx.path(f"trajectory_seed{seed}.csv"), ["step", "state", "observation"], rows)
    ctx.finish({"scenario": "simulate", "alpha_index": cfg.alpha_index})


def _scenario_filter(ctx: _RunContext, model):
    cfg = ctx.config

    def cell(seed):
        traj = simulate(model, cfg.alpha_index, cfg.n, seed)
        states = run_augmented_filter(model, traj.observations)
        pf = None
        if cfg.particles > 0:
            pf = pf_run(model, traj.observations, cfg.particles, seed, ess_frac=cfg.ess_frac)
        return traj, states, pf

    terminal = {}
    for seed, (traj, states, pf) in _seed_map(cell, cfg.seeds):
        dump_filter_csv(ctx.path(f"filter_seed{seed}.csv"), states)
        entry = {"param_posterior": param_posterior(states[-1]).weights.tolist()}
        if pf is not None:
            dump_ensemble_csv(ctx.path(f"ensemble_seed{seed}.csv"), [pf[-1]])
            pf_state, pf_param = pf_estimates(pf[-1], model)
            entry["pf_state_tv_gap"] = tv_norm(pf_state, state_marginal(states[-1]))
            entry["pf_param_posterior"] = pf_param.weights.tolist()
        terminal[str(seed)] = entry
    ctx.finish({"scenario": "filter", "alpha_index": cfg.alpha_index, "terminal": terminal})


def _scenario_posterior(ctx: _RunContext, model):
    cfg = ctx.config
    report = posterior_concentration(
        model,
        cfg.alpha_index,
        cfg.eta,
        cfg.n,
        cfg.seeds,
        rate_window=cfg.rate_window,
        ident_tol=cfg.ident_tol,
    )
    rows = [(k + 1, _fmt(m)) for k, m in enumerate(report.mass_outside)]
    _write_csv(ctx.path("posterior_mass.csv"), ["step", "mass_outside"], rows)
    ctx.finish(
        {
            "scenario": "posterior",
            "alpha_index": cfg.alpha_index,
            "eta": report.eta,
            "log_rate": report.log_rate,
            "terminal_mass_outside": float(report.mass_outside[-1]),
        }
    )


def _scenario_stability(ctx: _RunContext, model):
    cfg = ctx.config
    pairs = identifiability_scan(model.family, model.obs, cfg.ident_tol)
    if pairs:
        from .errors import IdentifiabilityError

        raise IdentifiabilityError(f"equivalent grid pairs at tol {cfg.ident_tol}: {pairs}")
    point_prior = DiscreteMeasure.point_mass(cfg.alpha_index, model.family.size)
    model_alpha = model.with_prior(point_prior)
    mu = model.initial if cfg.mu is None else DiscreteMeasure(np.asarray(cfg.mu, float), probability=True)
    mu_prime = (
        model.initial if cfg.mu_prime is None else DiscreteMeasure(np.asarray(cfg.mu_prime, float), probability=True)
    )

    def cell(seed):
        traj = simulate(model, cfg.alpha_index, cfg.n, seed)
        return stability_gap(model, model_alpha, mu, mu_prime, traj.observations)

    gaps = np.zeros(cfg.n)
    for _, series in _seed_map(cell, cfg.seeds):
        gaps += series
    gaps /= len(set(cfg.seeds))
    rows = [(k + 1, _fmt(g)) for k, g in enumerate(gaps)]
    _write_csv(ctx.path("stability_gap.csv"), ["step", "gap"], rows)
    ctx.finish(
        {
            "scenario": "stability",
            "alpha_index": cfg.alpha_index,
            "first_gap": float(gaps[0]),
            "terminal_gap": float(gaps[-1]),
        }
    )


def _scenario_bounds(ctx: _RunContext, model):
    cfg = ctx.config
    grid_size = model.family.size
    if grid_size < 2:
        raise ConfigError(
            "bounds scenario needs at least two grid points",
            [{"pointer": "/model", "message": "grid has a single point"}],
        )

    def cell(seed):
        gen = rng.substream(seed, rng.DOMAIN_SCENARIO)
        alpha_idx, theta_idx = gen.permutation(grid_size)[:2]
        eps = mixing_constant(model.family.kernels[alpha_idx]).epsilon
        if eps <= 0:
            raise NotApplicableError(f"kernel at grid index {alpha_idx} is not mixing")
        traj = simulate(model, int(alpha_idx), cfg.n, seed)
        series = step_errors(
            model.family, model.obs, model.initial, int(theta_idx), int(alpha_idx), traj.observations
        )
        totals = total_error_series(
            model.family, model.obs, model.initial, int(theta_idx), int(alpha_idx), traj.observations
        )
        return int(theta_idx), int(alpha_idx), series, bound_check(series, totals)

    rows = []
    total_violations = 0
    for seed, (theta_idx, alpha_idx, series, rep) in _seed_map(cell, cfg.seeds):
        total_violations += rep.violations
        rows.append(
            (
                seed,
                theta_idx,
                alpha_idx,
                _fmt(series.epsilon),
                _fmt(rep.sup_total_error),
                _fmt(rep.sup_step_h),
                _fmt(rep.sup_step_tv),
                _fmt(rep.bound_h),
                _fmt(rep.bound_tv),
                rep.violations,
            )
        )
    _write_csv(
        ctx.path("bounds.csv"),
        ["seed", "theta_index", "alpha_index", "epsilon", "sup_total", "sup_step_h", "sup_step_tv", "bound_h", "bound_tv", "violations"],
        rows,
    )
    ctx.finish({"scenario": "bounds", "violations": total_violations})


def _scenario_metrics(ctx: _RunContext, model):
    rows = []
    entries = []
    for g, kernel in enumerate(model.family.kernels):
        cert = mixing_constant(kernel)
        tau = birkhoff_tau(kernel)
        rows.append((g, _fmt(cert.epsilon), _fmt(tau)))
        entries.append(
            {
                "param": model.family.param_grid[g].tolist(),
                "epsilon": cert.epsilon,
                "is_mixing": cert.is_mixing,
                "tau": tau,
                "lambda": cert.lam.weights.tolist(),
            }
        )
    _write_csv(ctx.path("metrics.csv"), ["param_index", "epsilon", "tau"], rows)
    ctx.finish({"scenario": "metrics", "kernels": entries})


def _scenario_identifiability(ctx: _RunContext, model):
    cfg = ctx.config
    pairs = identifiability_scan(model.family, model.obs, cfg.ident_tol)
    _write_csv(ctx.path("equivalent_pairs.csv"), ["i", "j"], pairs)
    ctx.finish(
        {
            "scenario": "identifiability",
            "tol": cfg.ident_tol,
            "pairs": [list(p) for p in pairs],
            "identifiable": not pairs,
        }
    )


_SCENARIO_RUNNERS = {
    "simulate": _scenario_simulate,
    "filter": _scenario_filter,
    "posterior": _scenario_posterior,
    "stability": _scenario_stability,
    "bounds": _scenario_bounds,
    "metrics": _scenario_metrics,
    "identifiability": _scenario_identifiability,
}
