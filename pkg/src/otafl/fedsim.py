"""Federated training loop over the simulated uplink.

Each round, every device computes one batch gradient at the shared model,
applies the round's permutation, and transmits through its own fading /
phase-noise realization; the base station estimates the permuted average,
inverts the permutation, and takes one SGD step.  The downlink broadcast of
the updated model is ideal.  All randomness is drawn from streams keyed by
(trial, role, device, round), so every trial is reproducible in isolation.
"""

from __future__ import annotations

import json
import logging
import os
import subprocess
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import channel, data, model, permute
from .core import (PRACTICAL, NORMALIZER_MODES, ROLE_BATCH, ROLE_CHANNEL,
                   ROLE_INIT, ROLE_NOISE, ROLE_SHARD, ROLE_SORT, RngStream,
                   SystemParams)

log = logging.getLogger(__name__)

DATA_DIR_ENV = "OTAFL_DATA_DIR"

METRICS_FIELDS = ("trial", "epoch", "batch_index", "permutation", "sigma_e2",
                  "test_accuracy", "mean_train_loss", "power_violations")


@dataclass
class MetricsRecord:
    """One evaluation point of one trial."""

    trial: int
    epoch: int
    batch_index: int
    permutation: str
    sigma_e2: float
    test_accuracy: float
    mean_train_loss: float
    power_violations: int


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment."""

    num_devices: int = 10
    sigma_h2: float = 1.0
    sigma_e2: float = 0.0
    sigma_w2: float = 2e-8
    threshold_t: float = 0.01
    power_limit: float = 1.0
    normalizer_mode: str = PRACTICAL
    base_seed: int = 0
    permutation: str = permute.IDENTITY
    learning_rate: float = 0.01
    batch_size: int = 5
    epochs: int = 30
    eval_every_batches: int = 100
    trials: int = 10
    sort_refresh_per_epoch: int = 1
    trial_offset: int = 0
    data_dir: str = ""
    train_images: str = "train-images-idx3-ubyte.gz"
    train_labels: str = "train-labels-idx1-ubyte.gz"
    test_images: str = "t10k-images-idx3-ubyte.gz"
    test_labels: str = "t10k-labels-idx1-ubyte.gz"
    train_per_class: int = 0
    test_per_class: int = 0
    dump_grad_profile: bool = False
    output_dir: str = "runs/out"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.eval_every_batches < 1:
            raise ValueError("eval_every_batches must be >= 1")
        for name in ("num_devices", "batch_size", "epochs", "trials",
                     "sort_refresh_per_epoch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.permutation not in permute.KINDS:
            raise ValueError(f"unknown permutation {self.permutation!r}")
        if self.normalizer_mode not in NORMALIZER_MODES:
            raise ValueError(f"unknown normalizer_mode {self.normalizer_mode!r}")
        if self.train_per_class < 0 or self.test_per_class < 0:
            raise ValueError("per-class subset sizes must be >= 0")
        if self.trial_offset < 0:
            raise ValueError("trial_offset must be >= 0")

    def system_params(self, model_dim: int) -> SystemParams:
        return SystemParams(
            num_devices=self.num_devices, model_dim=model_dim,
            sigma_h2=self.sigma_h2, sigma_e2=self.sigma_e2,
            sigma_w2=self.sigma_w2, threshold_t=self.threshold_t,
            power_limit=self.power_limit, normalizer_mode=self.normalizer_mode,
            base_seed=self.base_seed)

    def resolved_data_dir(self) -> Path:
        return Path(self.data_dir or os.environ.get(DATA_DIR_ENV, "."))

    def data_paths(self) -> dict[str, Path]:
        base = self.resolved_data_dir()
        return {name: base / getattr(self, name)
                for name in ("train_images", "train_labels",
                             "test_images", "test_labels")}


def load_data(config: ExperimentConfig) -> tuple[data.Dataset, data.Dataset]:
    """Load train/test sets, applying the desk-scale per-class subsets."""
    paths = config.data_paths()
    missing = [str(p) for p in paths.values() if not p.exists()]
    if missing:
        raise FileNotFoundError(
            "missing MNIST IDX files; expected: " + ", ".join(missing))
    train = data.load_dataset(paths["train_images"], paths["train_labels"])
    test = data.load_dataset(paths["test_images"], paths["test_labels"])
    if config.train_per_class:
        train = data.subsample_per_class(train, config.train_per_class)
    if config.test_per_class:
        test = data.subsample_per_class(test, config.test_per_class)
    return train, test


def run_round(theta, device_batches, plan, params, channel_stream,
              noise_stream, learning_rate):
    """One uplink round: local gradients, permuted transmission, estimate,
    inverse permutation, SGD step.

    Returns (theta', transcript, mean device loss, raw gradients (K, D)).
    """
    weights = model.unflatten(theta)
    grads = np.empty((params.num_devices, params.model_dim))
    losses = np.empty(params.num_devices)
    for k, (images, labels) in enumerate(device_batches):
        losses[k], grads[k] = model.batch_gradient(weights, images, labels)
    permuted = permute.apply(plan, grads)
    block = channel.sample_block(params, channel_stream)
    x = channel.encode(permuted, block, params)
    violations = channel.count_power_violations(x, params)
    y = channel.receive_inverted(permuted, block, params, noise_stream)
    estimate = permute.inverse(plan, channel.estimate(y, params))
    transcript = channel.RoundTranscript(transmitted=x, received=y,
                                         estimate=estimate,
                                         power_violations=violations)
    return theta - learning_rate * estimate, transcript, float(losses.mean()), grads


def _sort_plan_from_probe(theta, train, assignment, config, trial,
                          global_round):
    """Refresh the sort permutation from one dedicated batch per device.

    Only gradient magnitudes cross the (idealized error-free) side channel:
    the base station sees |g| per device and returns the index vector.
    """
    weights = model.unflatten(theta)
    magnitudes = np.empty((config.num_devices, model.param_count()))
    for k in range(config.num_devices):
        stream = RngStream(config.base_seed, trial, ROLE_SORT, k, global_round)
        idx = stream.permutation(assignment.device_indices[k])[:config.batch_size]
        _, grad = model.batch_gradient(weights, train.images[idx],
                                       train.labels[idx])
        magnitudes[k] = np.abs(grad)
    return permute.make_sort_plan(magnitudes, round_index=global_round)


def _run_trial(config, params, train, test, trial, on_round, on_trial_end,
               on_grad_profile):
    seed = config.base_seed
    assignment = data.shard_heterogeneous(
        train, RngStream(seed, trial, ROLE_SHARD), config.num_devices)
    rounds_per_epoch = len(assignment.device_indices[0]) // config.batch_size
    theta = model.init_params(RngStream(seed, trial, ROLE_INIT)).flatten()

    plan = None
    if config.permutation != permute.SORT:
        plan = permute.PermutationPlan(kind=config.permutation,
                                       dim=params.model_dim)
    refresh_every = max(1, rounds_per_epoch // config.sort_refresh_per_epoch)

    global_round = 0
    window_losses = []
    window_violations = 0
    for epoch in range(config.epochs):
        iterators = [
            data.batches(assignment, k, config.batch_size,
                         RngStream(seed, trial, ROLE_BATCH, k, epoch))
            for k in range(config.num_devices)
        ]
        profile_sum = np.zeros(params.model_dim)
        for r in range(rounds_per_epoch):
            if config.permutation == permute.SORT and r % refresh_every == 0:
                plan = _sort_plan_from_probe(theta, train, assignment, config,
                                             trial, global_round)
            device_batches = []
            for it in iterators:
                idx = next(it)
                device_batches.append((train.images[idx], train.labels[idx]))
            theta, transcript, mean_loss, grads = run_round(
                theta, device_batches, plan, params,
                RngStream(seed, trial, ROLE_CHANNEL, 0, global_round),
                RngStream(seed, trial, ROLE_NOISE, 0, global_round),
                config.learning_rate)
            window_losses.append(mean_loss)
            window_violations += transcript.power_violations
            if config.dump_grad_profile:
                profile_sum += np.abs(grads).mean(axis=0)
            global_round += 1
            if config.permutation == permute.ROLL:
                plan = permute.advance_round(plan)
            if on_round is not None:
                on_round(trial, global_round, theta)
            if global_round % config.eval_every_batches == 0:
                accuracy = model.evaluate(model.unflatten(theta),
                                          test.images, test.labels)
                yield MetricsRecord(
                    trial=trial, epoch=epoch, batch_index=r + 1,
                    permutation=config.permutation, sigma_e2=config.sigma_e2,
                    test_accuracy=accuracy,
                    mean_train_loss=float(np.mean(window_losses)),
                    power_violations=window_violations)
                window_losses = []
                window_violations = 0
        if config.dump_grad_profile and on_grad_profile is not None:
            on_grad_profile(trial, epoch, profile_sum / rounds_per_epoch)
    if on_trial_end is not None:
        on_trial_end(trial, theta)


def run_experiment(config: ExperimentConfig, on_round=None, on_trial_end=None,
                   on_grad_profile=None):
    """Yield MetricsRecords for all trials; a failing trial is logged and
    skipped without aborting the remaining trials.  Errors independent of
    the trial (unshardable data, oversized batches) are raised up front."""
    train, test = load_data(config)
    num_shards = config.num_devices * data.SHARDS_PER_DEVICE
    if len(train) % num_shards != 0:
        raise ValueError(
            f"train size {len(train)} not divisible into {num_shards} equal "
            "shards; adjust data.train_per_class or system.num_devices")
    samples_per_device = len(train) // config.num_devices
    if samples_per_device < config.batch_size:
        raise ValueError(
            f"batch size {config.batch_size} exceeds the {samples_per_device} "
            "samples held per device")
    params = config.system_params(model.param_count())
    for trial in range(config.trial_offset, config.trial_offset + config.trials):
        try:
            yield from _run_trial(config, params, train, test, trial,
                                  on_round, on_trial_end, on_grad_profile)
        except Exception:
            log.exception("trial %d failed; continuing with remaining trials",
                          trial)


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10,
                             cwd=Path(__file__).parent)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def run_to_directory(config: ExperimentConfig, out_dir=None) -> Path:
    """Run an experiment, writing manifest, incremental metrics CSV, final
    parameter checkpoints, and (optionally) the gradient-magnitude profile."""
    import csv

    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": asdict(config), "model_dim": model.param_count(),
                "git": git_describe()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                  sort_keys=True) + "\n")

    profile_fh = None
    profile_writer = None
    if config.dump_grad_profile:
        profile_fh = open(out / "grad_profile.csv", "w", newline="")
        profile_writer = csv.writer(profile_fh)
        profile_writer.writerow(["trial", "epoch", "coord", "mean_abs_grad"])

    def on_grad_profile(trial, epoch, profile):
        for d, value in enumerate(profile):
            profile_writer.writerow([trial, epoch, d, value])
        profile_fh.flush()

    def on_trial_end(trial, theta):
        model.save_flat(out / f"params_trial{trial:02d}.bin", theta)

    try:
        with open(out / "metrics.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=METRICS_FIELDS)
            writer.writeheader()
            for record in run_experiment(
                    config, on_trial_end=on_trial_end,
                    on_grad_profile=on_grad_profile if profile_writer else None):
                writer.writerow(asdict(record))
                fh.flush()
    finally:
        if profile_fh is not None:
            profile_fh.close()
    return out
