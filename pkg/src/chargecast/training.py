"""Optimization loop, Adam, and the finite-difference gradient check.

Models trained here expose two methods: ``param_blocks()`` returning a
name -> array dict of the live parameter arrays, and
``batch_loss_and_grads(windows)`` returning the mean batch loss and a
matching dict of gradient arrays.  The loop shuffles windows each epoch
with the package PRNG, walks them in mini-batches, and applies Adam in
place, so two runs from the same seed produce bit-identical parameters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, TextIO

import numpy as np

from .data import Window
from .errors import DataError, NumericalError, ShapeError
from .features import ProfileSet
from .numerics import finite_diff_gradient, make_rng, relative_error

TRAINING_LOG_HEADER = ["epoch", "mean_loss"]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the Adam training loop."""

    epochs: int = 20
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise DataError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise DataError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (self.lr > 0 and np.isfinite(self.lr)):
            raise DataError(f"lr must be positive and finite, got {self.lr}")


@dataclass(frozen=True)
class TrainingData:
    """Everything a forecaster may need to fit: windows, series, profiles."""

    windows: tuple[Window, ...]
    series: tuple
    profiles: ProfileSet


class TrainableModel(Protocol):
    def param_blocks(self) -> dict[str, np.ndarray]: ...

    def batch_loss_and_grads(self, windows: Sequence[Window]) -> tuple[float, dict[str, np.ndarray]]: ...


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter block."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, blocks: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in blocks.items()},
            v={name: np.zeros_like(arr) for name, arr in blocks.items()},
            t=0,
        )


def adam_step(
    blocks: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> None:
    """One bias-corrected Adam update, applied to the blocks in place.

    Raises:
        NumericalError: if any gradient block contains a non-finite
            value; the message names the block.
    """
    if set(blocks) != set(grads):
        raise ShapeError(f"gradient blocks {sorted(grads)} do not match parameters {sorted(blocks)}")
    state.t += 1
    t = state.t
    for name, theta in blocks.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {theta.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in block {name!r} at step {t}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        theta -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def write_training_log(history: Sequence[float], dest: str | Path | TextIO) -> None:
    """Write per-epoch mean losses as CSV with header ``epoch,mean_loss``."""
    if isinstance(dest, (str, Path)):
        stream: TextIO = open(dest, "w", newline="")
        owned = True
    else:
        stream, owned = dest, False
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(TRAINING_LOG_HEADER)
        for epoch, loss in enumerate(history, start=1):
            writer.writerow([epoch, repr(float(loss))])
    finally:
        if owned:
            stream.close()


def train(
    model: TrainableModel,
    windows: Sequence[Window],
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
) -> list[float]:
    """Run the mini-batch Adam loop and return per-epoch mean losses.

    The epoch loss is the window-weighted mean of batch losses, i.e. the
    mean loss over all windows as visited during the epoch.

    Raises:
        DataError: if there are no training windows.
        NumericalError: if a batch loss or gradient is non-finite.
    """
    if not windows:
        raise DataError("no training windows")
    if rng is None:
        rng = make_rng(cfg.seed)
    blocks = model.param_blocks()
    state = AdamState.init(blocks)
    n = len(windows)
    history: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = [windows[i] for i in order[start : start + cfg.batch_size]]
            loss, grads = model.batch_loss_and_grads(batch)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite batch loss {loss}")
            adam_step(blocks, grads, state, cfg)
            total += loss * len(batch)
        history.append(total / n)
    return history


# ---------------------------------------------------------------------------
# Flattened parameter views (used by the gradient check and tests)


def flatten_blocks(blocks: dict[str, np.ndarray]) -> tuple[np.ndarray, list[tuple[str, tuple[int, ...]]]]:
    """Concatenate blocks into one flat vector plus a (name, shape) spec."""
    spec = [(name, arr.shape) for name, arr in blocks.items()]
    if not spec:
        return np.zeros(0), spec
    vec = np.concatenate([np.asarray(arr, dtype=np.float64).ravel() for arr in blocks.values()])
    return vec, spec


def unflatten_into(blocks: dict[str, np.ndarray], vec: np.ndarray) -> None:
    """Write a flat vector back into the block arrays in place."""
    offset = 0
    for name, arr in blocks.items():
        size = arr.size
        arr[...] = vec[offset : offset + size].reshape(arr.shape)
        offset += size
    if offset != vec.size:
        raise ShapeError(f"flat vector has {vec.size} entries, blocks hold {offset}")


def _locate(spec: list[tuple[str, tuple[int, ...]]], flat_index: int) -> tuple[str, int]:
    offset = 0
    for name, shape in spec:
        size = int(np.prod(shape)) if shape else 1
        if flat_index < offset + size:
            return name, flat_index - offset
        offset += size
    raise IndexError(f"flat index {flat_index} out of range")


class GradCheckModel(Protocol):
    def param_blocks(self) -> dict[str, np.ndarray]: ...

    def batch_loss_and_grads(self, windows: Sequence[Window]) -> tuple[float, dict[str, np.ndarray]]: ...

    def loss_on_windows(self, windows: Sequence[Window]) -> float: ...


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of comparing analytic gradients against central differences."""

    passed: bool
    max_rel_error: float
    tolerance: float
    n_params: int
    worst_block: str
    worst_offset: int
    analytic_at_worst: float
    numeric_at_worst: float


def gradient_check(
    model: GradCheckModel,
    windows: Sequence[Window],
    eps: float = 1e-5,
    tolerance: float = 1e-4,
    inject_fault: bool = False,
) -> GradCheckReport:
    """Compare the model's analytic gradient with central differences.

    The relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8);
    the check passes when the maximum over all coordinates is below
    ``tolerance``.  Parameters are restored to their original values
    afterwards.  ``inject_fault`` mis-scales the analytic gradient by 1%
    as a self-test that the comparison can actually fail.
    """
    blocks = model.param_blocks()
    theta0, spec = flatten_blocks(blocks)
    _, grads = model.batch_loss_and_grads(windows)
    analytic = np.concatenate([grads[name].ravel() for name, _ in spec])
    if inject_fault:
        analytic = analytic * 1.01
    try:

        def f(v: np.ndarray) -> float:
            unflatten_into(blocks, v)
            return model.loss_on_windows(windows)

        numeric = finite_diff_gradient(f, theta0, eps=eps)
    finally:
        unflatten_into(blocks, theta0)
    rel = relative_error(analytic, numeric)
    worst = int(np.argmax(rel))
    worst_block, worst_offset = _locate(spec, worst)
    max_rel = float(rel[worst])
    return GradCheckReport(
        passed=max_rel < tolerance,
        max_rel_error=max_rel,
        tolerance=tolerance,
        n_params=int(theta0.size),
        worst_block=worst_block,
        worst_offset=worst_offset,
        analytic_at_worst=float(analytic[worst]),
        numeric_at_worst=float(numeric[worst]),
    )
