"""Batch front end: JSON experiment config in, CSV artifacts and a manifest out.

Usage::

    infoflow simulate --config configs/simulate_binary.json --out-dir out/
    infoflow run --config configs/vol_surface.json --out-dir out/ --threads 8

``run`` dispatches on the config's ``"experiment"`` field.  Exit status is 0
on success, 1 for configuration or validation failures, 2 for runtime errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from infoflow import __version__
from infoflow.dynamics import ensemble_prices, ensemble_vol_paths, ensemble_volatility, rolling_vol_of_vol
from infoflow.errors import ConfigError, InfoFlowError, InvalidModel, TooFewPaths
from infoflow.infotheory import mutual_info_curve
from infoflow.io import write_csv
from infoflow.manipulation import conjugate_paths, manipulation_report
from infoflow.model import MarketModel, validate_measurability
from infoflow.options import OptionSpec, call_price_closed, call_price_mc, critical_information, vol_surface
from infoflow.paths import DEFAULT_STEPS, DEFAULT_TERMINAL_CUTOFF, TimeGrid, make_ensemble
from infoflow.sensitivity import fisher_surface

EXPERIMENTS = ("simulate", "volatility", "fisher", "mutual-info", "price", "surface", "manipulate", "validate")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class MeasurabilityFailure(InfoFlowError):
    pass


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict) or "model" not in cfg:
        raise ConfigError("config must be a JSON object with a 'model' entry")
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _grid(cfg: dict, horizon: float) -> TimeGrid:
    g = cfg.get("grid", {})
    return TimeGrid.uniform(horizon, int(g.get("steps", DEFAULT_STEPS)),
                            float(g.get("terminal_cutoff", DEFAULT_TERMINAL_CUTOFF)))


def _mc(cfg: dict) -> tuple[int, int]:
    mc = cfg.get("mc", {})
    return int(mc.get("paths", 1000)), int(mc.get("seed", 0))


def _sweep_models(cfg: dict, model: MarketModel) -> list[MarketModel]:
    sweep = cfg.get("sweep", {}).get("flow_probs")
    if not sweep:
        return [model]
    return [model.with_flow(model.flow_values, probs) for probs in sweep]


def _require_measurable(model: MarketModel, strict: bool) -> None:
    report = validate_measurability(model)
    if not report.is_measurable:
        print(report.describe(), file=sys.stderr)
        if strict:
            raise MeasurabilityFailure("model fails the measurability check (use --no-strict to proceed)")


class Runner:
    def __init__(self, cfg: dict, out_dir: Path, experiment: str, threads: int, strict: bool):
        self.cfg = cfg
        self.out_dir = out_dir
        self.experiment = experiment
        self.threads = max(1, threads)
        self.strict = strict
        self.model = MarketModel.from_dict(cfg["model"])
        self.outputs: list[str] = []
        self.summary: dict = {}

    def out(self, name: str) -> Path:
        path = self.out_dir / f"{self.experiment}_{name}.csv"
        self.outputs.append(path.name)
        return path

    def run(self) -> int:
        handler = getattr(self, "do_" + self.experiment.replace("-", "_"))
        return handler()

    def do_validate(self) -> int:
        report = validate_measurability(self.model)
        print(report.describe())
        rows = ((xa, sa, xb, sb) for (xa, sa), (xb, sb) in report.collisions)
        write_csv(self.out("collisions"), ["cash_a", "flow_a", "cash_b", "flow_b"], rows)
        self.summary["is_measurable"] = report.is_measurable
        return EXIT_OK if report.is_measurable else EXIT_VALIDATION

    def do_simulate(self) -> int:
        _require_measurable(self.model, self.strict)
        n, seed = _mc(self.cfg)
        grid = _grid(self.cfg, self.model.horizon)
        ens = make_ensemble(self.model, grid, n, seed, workers=self.threads)
        ens.to_csv(self.out("paths"))
        prices = ensemble_prices(ens, self.model)
        vols = ensemble_vol_paths(ens, self.model)
        write_csv(self.out("prices"), ["path_id", "t", "price", "volatility"],
                  ((j, t, prices[j, i], vols[j, i]) for j in range(n) for i, t in enumerate(grid.points)))
        window = int(self.cfg.get("volatility", {}).get("window", 11))
        ensemble_volatility(ens, self.model, window).to_csv(self.out("volatility"))
        return EXIT_OK

    def do_volatility(self) -> int:
        n, seed = _mc(self.cfg)
        grid = _grid(self.cfg, self.model.horizon)
        window = int(self.cfg.get("volatility", {}).get("window", 11))
        models = _sweep_models(self.cfg, self.model)
        for k, m in enumerate(models):
            _require_measurable(m, self.strict)
            ens = make_ensemble(m, grid, n, seed, workers=self.threads)
            name = "mean_vol" if len(models) == 1 else f"mean_vol_{k}"
            ensemble_volatility(ens, m, window).to_csv(self.out(name))
        self.summary["flow_probs"] = [list(m.flow_probs) for m in models]
        return EXIT_OK

    def do_fisher(self) -> int:
        n, seed = _mc(self.cfg)
        f = self.cfg.get("fisher", {})
        T = self.model.horizon
        sigmas = f.get("sigmas", np.round(np.arange(0.1, 1.51, 0.1), 10).tolist())
        times = f.get("times", (np.linspace(0.05, 0.95, 19) * T).tolist())
        fisher_surface(self.model, sigmas, times, n, seed).to_csv(self.out("surface"))
        return EXIT_OK

    def do_mutual_info(self) -> int:
        n, seed = _mc(self.cfg)
        T = self.model.horizon
        cutoff = float(self.cfg.get("grid", {}).get("terminal_cutoff", DEFAULT_TERMINAL_CUTOFF))
        times = self.cfg.get("mutual_info", {}).get("times") or np.linspace(0.05 * T, (1 - cutoff) * T, 20).tolist()
        models = _sweep_models(self.cfg, self.model)
        for k, m in enumerate(models):
            _require_measurable(m, self.strict)
            name = "curve" if len(models) == 1 else f"curve_{k}"
            mutual_info_curve(m, times, n, seed).to_csv(self.out(name))
        self.summary["flow_probs"] = [list(m.flow_probs) for m in models]
        return EXIT_OK

    def _option_nodes(self) -> list[OptionSpec]:
        opt = self.cfg.get("option")
        if not opt:
            raise ConfigError("'option' section required")
        mats = opt.get("maturities", [opt.get("maturity")])
        strikes = opt.get("strikes", [opt.get("strike")])
        if None in mats or None in strikes:
            raise ConfigError("option needs maturity/maturities and strike/strikes")
        return [OptionSpec(float(t), float(k)) for t in mats for k in strikes]

    def do_price(self) -> int:
        _require_measurable(self.model, self.strict)
        n, seed = _mc(self.cfg)
        rows = []
        for spec in self._option_nodes():
            closed = call_price_closed(self.model, spec)
            try:
                xi_star = critical_information(self.model, spec)
            except InfoFlowError:
                xi_star = float("nan")
            mc, se = call_price_mc(self.model, spec, n, seed)
            rows.append((spec.option_maturity, spec.strike, xi_star, closed, mc, se))
        write_csv(self.out("options"), ["maturity", "strike", "xi_star", "price_closed", "price_mc", "mc_std_err"], rows)
        return EXIT_OK

    def do_surface(self) -> int:
        _require_measurable(self.model, self.strict)
        s = self.cfg.get("surface", {})
        strikes = s.get("strikes", np.round(np.arange(0.1, 0.91, 0.1), 10).tolist())
        maturities = s.get("maturities", [0.25, 0.5, 1.0])
        sigma_init = float(s.get("bhm_sigma_init", 1.5))
        template = self.model.with_constant_flow(sigma_init)
        surf = vol_surface(self.model, strikes, maturities, template, sigma_init, workers=self.threads)
        surf.to_csv(self.out("vol_surface"))
        self.summary["all_converged"] = bool(surf.convergence_flags.all())
        return EXIT_OK

    def do_manipulate(self) -> int:
        man = self.cfg.get("manipulation", {})
        if "believed_sigma" not in man:
            raise ConfigError("'manipulation.believed_sigma' required")
        true_sigma = float(man.get("true_sigma", self.model.flow_values[0]))
        model_true = self.model.with_constant_flow(true_sigma)
        _require_measurable(model_true, self.strict)
        n, seed = _mc(self.cfg)
        grid = _grid(self.cfg, model_true.horizon)
        ens = conjugate_paths(model_true, float(man["believed_sigma"]), grid, seed, n, workers=self.threads)
        ens.to_csv(self.out("paths"))
        fractions = {}
        for i, x in enumerate(model_true.cash_values):
            try:
                rep = manipulation_report(ens, x)
            except TooFewPaths:
                continue
            rep.to_csv(self.out(f"skew_cash{i}"))
            fractions[format(x, "g")] = rep.opposite_fraction
        self.summary["opposite_sign_fraction"] = fractions
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infoflow", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=("run",) + EXPERIMENTS,
                        help="experiment to run; 'run' uses the config's \"experiment\" field")
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--out-dir", required=True, help="directory for CSVs and manifest.json")
    parser.add_argument("--seed", type=int, help="override mc.seed")
    parser.add_argument("--paths", type=int, help="override mc.paths")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")
    strict = parser.add_mutually_exclusive_group()
    strict.add_argument("--strict", dest="strict", action="store_true", default=True,
                        help="fail on measurability collisions (default)")
    strict.add_argument("--no-strict", dest="strict", action="store_false")
    return parser


def run(config_path, out_dir, overrides: dict | None = None, command: str = "run") -> int:
    """Execute one experiment and return the process exit code."""
    overrides = overrides or {}
    started = time.perf_counter()
    try:
        cfg = load_config(config_path)
        if overrides.get("seed") is not None:
            cfg.setdefault("mc", {})["seed"] = int(overrides["seed"])
        if overrides.get("paths") is not None:
            cfg.setdefault("mc", {})["paths"] = int(overrides["paths"])
        experiment = cfg.get("experiment") if command == "run" else command
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        runner = Runner(cfg, out, experiment, int(overrides.get("threads") or 1),
                        bool(overrides.get("strict", True)))
        code = runner.run()
    except (ConfigError, InvalidModel, MeasurabilityFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    manifest = {
        "experiment": experiment,
        "config_sha256": config_hash(cfg),
        "seed": cfg.get("mc", {}).get("seed", 0),
        "paths": cfg.get("mc", {}).get("paths"),
        "version": __version__,
        "exit_code": code,
        "outputs": runner.outputs,
        "summary": runner.summary,
        "started_utc": datetime.now(timezone.utc).isoformat(),
        "wall_time_s": time.perf_counter() - started,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "paths": args.paths, "threads": args.threads, "strict": args.strict}
    return run(args.config, args.out_dir, overrides, command=args.command)


if __name__ == "__main__":
    sys.exit(main())
