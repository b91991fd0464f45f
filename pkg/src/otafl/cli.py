"""Command-line entry point: config parsing, overrides, and subcommands.

Config files are flat [section] key = value text; any key can be overridden
on the command line with --set section.key=value.  Subcommands:

  verify-moments  compare closed-form estimator moments against Monte Carlo
  train           run one experiment configuration
  sweep           run the cartesian product permutations x scenarios x trials
  dump-phase      emit oscillator phase trajectories as CSV
  inspect-data    print shard and label histograms for the configured data

Exit codes: 0 success, 1 validation or acceptance failure, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import channel, data, fedsim, model, moments, permute
from .core import (NORMALIZER_MODES, ROLE_PHASE, UNBIASED, RngStream,
                   SystemParams)

SCENARIO_SIGMA = {"none": 0.0, "low": 0.0005, "high": 0.02}


class ConfigError(ValueError):
    """Bad config text: unknown key, wrong type, or invalid value."""


def _int(text: str) -> int:
    return int(text, 0)


def _float(text: str) -> float:
    return float(text)


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _str(text: str) -> str:
    return text


def _choice(options):
    def convert(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {text!r}")
        return text
    return convert


def _name_list(options):
    def convert(text: str) -> tuple[str, ...]:
        names = tuple(part.strip() for part in text.split(",") if part.strip())
        for name in names:
            if name not in options:
                raise ValueError(f"expected names from {', '.join(options)}; got {name!r}")
        if not names:
            raise ValueError("expected a comma-separated list")
        return names
    return convert


# dotted config key -> (ExperimentConfig field, converter)
EXPERIMENT_KEYS = {
    "system.num_devices": ("num_devices", _int),
    "system.sigma_h2": ("sigma_h2", _float),
    "system.sigma_e2": ("sigma_e2", _float),
    "system.sigma_w2": ("sigma_w2", _float),
    "system.threshold_t": ("threshold_t", _float),
    "system.power_limit": ("power_limit", _float),
    "system.normalizer": ("normalizer_mode", _choice(NORMALIZER_MODES)),
    "training.permutation": ("permutation", _choice(permute.KINDS)),
    "training.learning_rate": ("learning_rate", _float),
    "training.batch_size": ("batch_size", _int),
    "training.epochs": ("epochs", _int),
    "training.eval_every_batches": ("eval_every_batches", _int),
    "training.trials": ("trials", _int),
    "training.sort_refresh_per_epoch": ("sort_refresh_per_epoch", _int),
    "training.base_seed": ("base_seed", _int),
    "training.dump_grad_profile": ("dump_grad_profile", _bool),
    "data.data_dir": ("data_dir", _str),
    "data.train_images": ("train_images", _str),
    "data.train_labels": ("train_labels", _str),
    "data.test_images": ("test_images", _str),
    "data.test_labels": ("test_labels", _str),
    "data.train_per_class": ("train_per_class", _int),
    "data.test_per_class": ("test_per_class", _int),
    "output.directory": ("output_dir", _str),
}

SCENARIO_KEY = "system.scenario"

SWEEP_KEYS = {
    "sweep.permutations": ("permutations", _name_list(permute.KINDS)),
    "sweep.scenarios": ("scenarios", _name_list(tuple(SCENARIO_SIGMA))),
    "sweep.workers": ("workers", _int),
}

MOMENTS_KEYS = {
    "moments.num_devices": ("num_devices", _int),
    "moments.dim": ("dim", _int),
    "moments.sigma_h2": ("sigma_h2", _float),
    "moments.sigma_e2": ("sigma_e2", _float),
    "moments.sigma_w2": ("sigma_w2", _float),
    "moments.threshold_t": ("threshold_t", _float),
    "moments.realizations": ("realizations", _int),
}

KNOWN_KEYS = ({SCENARIO_KEY} | EXPERIMENT_KEYS.keys() | SWEEP_KEYS.keys()
              | MOMENTS_KEYS.keys())


@dataclass(frozen=True)
class MomentsSettings:
    """Moment-verification setup; defaults are the acceptance configuration."""

    num_devices: int = 4
    dim: int = 8
    sigma_h2: float = 1.0
    sigma_e2: float = 0.02
    sigma_w2: float = 2e-8
    threshold_t: float = 0.01
    realizations: int = 200_000

    def system_params(self, base_seed: int) -> SystemParams:
        return SystemParams(num_devices=self.num_devices, model_dim=self.dim,
                            sigma_h2=self.sigma_h2, sigma_e2=self.sigma_e2,
                            sigma_w2=self.sigma_w2, threshold_t=self.threshold_t,
                            normalizer_mode=UNBIASED, base_seed=base_seed)


@dataclass(frozen=True)
class Settings:
    experiment: fedsim.ExperimentConfig
    sweep_permutations: tuple[str, ...] = tuple(permute.KINDS)
    sweep_scenarios: tuple[str, ...] = ("low", "high")
    sweep_workers: int = 0  # 0 = one worker per CPU, capped at the run count
    moments: MomentsSettings = MomentsSettings()


def read_flat_text(text: str) -> dict[str, tuple[str, int]]:
    """Parse [section] key = value lines into {dotted key: (value, lineno)}."""
    entries: dict[str, tuple[str, int]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"config line {lineno}: empty section name")
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if section is None:
            raise ConfigError(f"config line {lineno}: key {key!r} outside any [section]")
        dotted = f"{section}.{key}"
        if dotted in entries:
            raise ConfigError(f"config line {lineno}: duplicate key '{dotted}'")
        entries[dotted] = (value.strip(), lineno)
    return entries


def _convert(dotted, value, lineno, converter):
    try:
        return converter(value)
    except ValueError as err:
        where = f"line {lineno}" if lineno else "command-line override"
        raise ConfigError(f"config {where}: key '{dotted}': {err}") from None


def parse_config(text: str = "", overrides=(), seed: int | None = None) -> Settings:
    """Build Settings from config text plus command-line overrides.

    An empty text yields the full set of defaults.  Unknown keys are fatal
    and name the offending key; type and range errors carry line context.
    """
    entries = read_flat_text(text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, _, value = item.partition("=")
        entries[dotted.strip()] = (value.strip(), 0)

    for dotted, (_, lineno) in entries.items():
        if dotted not in KNOWN_KEYS:
            where = f" (line {lineno})" if lineno else ""
            raise ConfigError(f"unknown config key '{dotted}'{where}")

    exp_kwargs = {}
    sweep_kwargs = {}
    moments_kwargs = {}
    for dotted, (value, lineno) in entries.items():
        if dotted == SCENARIO_KEY:
            continue
        if dotted in EXPERIMENT_KEYS:
            field, converter = EXPERIMENT_KEYS[dotted]
            exp_kwargs[field] = _convert(dotted, value, lineno, converter)
        elif dotted in SWEEP_KEYS:
            field, converter = SWEEP_KEYS[dotted]
            sweep_kwargs[field] = _convert(dotted, value, lineno, converter)
        else:
            field, converter = MOMENTS_KEYS[dotted]
            moments_kwargs[field] = _convert(dotted, value, lineno, converter)

    if SCENARIO_KEY in entries:
        value, lineno = entries[SCENARIO_KEY]
        scenario = _convert(SCENARIO_KEY, value, lineno,
                            _choice(tuple(SCENARIO_SIGMA)))
        if "sigma_e2" in exp_kwargs:
            raise ConfigError(
                "set either system.scenario or system.sigma_e2, not both")
        exp_kwargs["sigma_e2"] = SCENARIO_SIGMA[scenario]

    if seed is not None:
        exp_kwargs["base_seed"] = seed

    try:
        experiment = fedsim.ExperimentConfig(**exp_kwargs)
        moments_settings = MomentsSettings(**moments_kwargs)
        if moments_settings.realizations < 1000:
            raise ValueError("moments.realizations must be >= 1000")
        if moments_settings.dim % 2 != 0 or moments_settings.dim < 2:
            raise ValueError("moments.dim must be a positive even integer")
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return Settings(experiment=experiment,
                    sweep_permutations=sweep_kwargs.get("permutations",
                                                        tuple(permute.KINDS)),
                    sweep_scenarios=sweep_kwargs.get("scenarios", ("low", "high")),
                    sweep_workers=sweep_kwargs.get("workers", 0),
                    moments=moments_settings)


def load_settings(args) -> Settings:
    text = ""
    if args.config is not None:
        text = Path(args.config).read_text()
    return parse_config(text, overrides=args.overrides, seed=args.seed)


def cmd_verify_moments(args) -> int:
    settings = load_settings(args)
    params = settings.moments.system_params(settings.experiment.base_seed)
    reports = moments.verify_moments(params, settings.moments.realizations)
    header = ("d", "closed_mean", "mc_mean", "stderr", "closed_var", "mc_var",
              "realizations", "pass")
    rows = [(r.d, r.closed_mean, r.mc_mean, r.mc_mean_stderr, r.closed_var,
             r.mc_var, r.realizations, int(r.passed())) for r in reports]
    print(f"moment verification: K={params.num_devices} D={params.model_dim} "
          f"sigma_e2={params.sigma_e2} t={params.threshold_t} "
          f"R={settings.moments.realizations}")
    print(" ".join(header))
    for row in rows:
        print(" ".join(str(v) for v in row))
    if args.output:
        with open(args.output, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        print(f"wrote {args.output}")
    ok = all(r.passed() for r in reports)
    print("all coordinates pass" if ok else "FAILED coordinates present")
    return 0 if ok else 1


def cmd_train(args) -> int:
    settings = load_settings(args)
    out = fedsim.run_to_directory(settings.experiment, out_dir=args.output)
    print(f"run complete: {out}")
    return 0


def _sweep_run(config: fedsim.ExperimentConfig) -> str:
    return str(fedsim.run_to_directory(config))


def cmd_sweep(args) -> int:
    settings = load_settings(args)
    base = settings.experiment
    root = Path(args.output) if args.output else Path(base.output_dir)
    runs = []
    for perm in settings.sweep_permutations:
        for scenario in settings.sweep_scenarios:
            for trial in range(base.trials):
                out = root / f"{perm}_{scenario}" / f"trial{trial:02d}"
                runs.append(replace(
                    base, permutation=perm, sigma_e2=SCENARIO_SIGMA[scenario],
                    trials=1, trial_offset=trial, output_dir=str(out)))
    workers = settings.sweep_workers or min(len(runs), os.cpu_count() or 1)
    print(f"sweep: {len(runs)} runs, {workers} workers, output {root}")
    failures = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_sweep_run, cfg): cfg for cfg in runs}
        for future, cfg in futures.items():
            try:
                print(f"done: {future.result()}")
            except Exception as err:
                failures.append((cfg.output_dir, err))
    for out_dir, err in failures:
        print(f"FAILED {out_dir}: {err}", file=sys.stderr)
    if failures:
        return 2 if any(isinstance(e, OSError) for _, e in failures) else 1
    return 0


def cmd_dump_phase(args) -> int:
    settings = load_settings(args)
    names = tuple(s.strip() for s in args.scenarios.split(",") if s.strip())
    for name in names:
        if name not in SCENARIO_SIGMA:
            raise ConfigError(f"unknown scenario {name!r}; "
                              f"expected {', '.join(SCENARIO_SIGMA)}")
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    dim = model.param_count()
    for index, name in enumerate(names):
        params = SystemParams(num_devices=1, model_dim=dim,
                              sigma_e2=SCENARIO_SIGMA[name],
                              base_seed=settings.experiment.base_seed)
        stream = RngStream(params.base_seed, role=ROLE_PHASE, entity=index)
        block = channel.sample_block(params, stream, shape=(args.realizations,))
        walk = np.cumsum(block.increments[:, 0, :], axis=-1)
        path = out_dir / f"phase_{name}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["realization", "s", "phase_radians"])
            for real in range(args.realizations):
                for s in range(walk.shape[1]):
                    writer.writerow([real, s, walk[real, s]])
        print(f"wrote {path} ({args.realizations} trajectories, "
              f"{walk.shape[1]} symbols)")
    return 0


def cmd_inspect_data(args) -> int:
    settings = load_settings(args)
    config = settings.experiment
    train, test = fedsim.load_data(config)
    print(f"train: {len(train)} samples, test: {len(test)} samples")
    assignment = data.shard_heterogeneous(
        train, RngStream(config.base_seed, 0, role=4), config.num_devices)
    print(f"shards: {config.num_devices * data.SHARDS_PER_DEVICE} "
          f"of size {assignment.shard_size}")
    for k in range(config.num_devices):
        labels = train.labels[assignment.device_indices[k]]
        hist = np.bincount(labels, minlength=10)
        present = np.flatnonzero(hist)
        print(f"device {k}: {len(labels)} samples, shards "
              f"{assignment.device_shards[k]}, labels {present.tolist()}, "
              f"counts {hist[present].tolist()}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="otafl",
        description="Over-the-air federated learning simulator with "
                    "oscillator phase noise and gradient permutations.")
    parser.add_argument("--config", help="flat-section config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override training.base_seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-moments",
                       help="compare closed-form moments against Monte Carlo")
    p.add_argument("--output", help="also write the report as CSV")
    p.set_defaults(func=cmd_verify_moments)

    p = sub.add_parser("train", help="run one experiment configuration")
    p.add_argument("--output", help="override output.directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep",
                       help="run permutations x scenarios x trials")
    p.add_argument("--output", help="override the sweep root directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-phase", help="emit phase trajectories as CSV")
    p.add_argument("--realizations", type=int, default=50)
    p.add_argument("--scenarios", default="low,high")
    p.add_argument("--output", default="phase-dumps")
    p.set_defaults(func=cmd_dump_phase)

    p = sub.add_parser("inspect-data", help="print shard and label histograms")
    p.set_defaults(func=cmd_inspect_data)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
