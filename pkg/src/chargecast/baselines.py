"""Forecasters: the fused model and the comparators it is judged against.

Every model implements the same small contract: ``fit(data, cfg)`` then
``predict(window) -> (output_slots,)`` probabilities (or 0/1 values for
the memory-based models).  Training-based models also expose
``param_blocks`` / ``batch_loss_and_grads`` so the shared Adam loop and
the gradient check can drive them, and every model can round-trip
through a checkpoint via ``state()`` / ``from_state``.

The comparators:

* historical average: per (station, weekday, slot-of-day) mean occupancy;
* nearest neighbour: copy the continuation of the most similar past
  input run (squared Euclidean distance, k=1);
* logistic regression: one independent sigmoid head per target slot on
  the raw input bits;
* recurrent encoder + linear heads (all target slots at once);
* recurrent encoder/decoder without any static information, sharing the
  fused model's autoregressive decoder structure.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .data import SLOTS_PER_DAY, Window, slot_of_day_of, weekday_of
from .errors import ConfigError, DataError, NotFittedError, ShapeError
from .features import (
    GLOBAL_STATION,
    ProfileSet,
    StaticProfile,
    encode_window_inputs,
    static_rows_batch,
)
from .model import (
    DfdsConfig,
    DfdsParams,
    GruParams,
    _decode,
    _decode_backward,
    _sequence_backward,
    _sequence_forward,
    bce_loss,
    bce_loss_grad,
    dfds_backward_batch,
    dfds_forward_batch,
)
from .numerics import glorot_init, make_rng, sigmoid
from .training import TrainConfig, TrainingData, train

_PREDICT_CHUNK = 4096

_WEEK_BUCKETS = 7 * SLOTS_PER_DAY


def _stack_targets(windows: Sequence[Window]) -> np.ndarray:
    return np.stack([w.target_occ for w in windows]).astype(np.float64)


def _stack_input_occ(windows: Sequence[Window]) -> np.ndarray:
    return np.stack([w.input_occ for w in windows]).astype(np.float64)


class Forecaster(ABC):
    """Common interface: fit once, then predict per window."""

    kind: str = ""

    def __init__(self) -> None:
        self.fitted = False

    def _require_fitted(self) -> None:
        if not self.fitted:
            raise NotFittedError(f"{type(self).__name__} must be fitted before predicting")

    @abstractmethod
    def fit(self, data: TrainingData, cfg: TrainConfig | None = None) -> list[float] | None:
        """Fit on training data; returns per-epoch losses when trained iteratively."""

    @abstractmethod
    def predict(self, window: Window) -> np.ndarray:
        """Forecast the window's target slots, values in [0, 1]."""

    def predict_batch(self, windows: Sequence[Window]) -> np.ndarray:
        """Forecast many windows; default loops over :meth:`predict`."""
        self._require_fitted()
        if not windows:
            return np.zeros((0, 0))
        return np.stack([self.predict(w) for w in windows])

    @abstractmethod
    def state(self) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        """Checkpointable state: a JSON-safe config dict and named arrays."""

    @classmethod
    @abstractmethod
    def from_state(cls, config: dict[str, Any], blocks: dict[str, np.ndarray]) -> "Forecaster":
        """Rebuild a fitted forecaster from checkpoint state."""


class _TrainableMixin:
    """Shared glue for models driven by the Adam loop and gradient check."""

    def loss_on_windows(self, windows: Sequence[Window]) -> float:
        preds = self.predict_batch(windows)  # type: ignore[attr-defined]
        return bce_loss(preds, _stack_targets(windows))


# ---------------------------------------------------------------------------
# Historical average


class HistoricalAverageForecaster(Forecaster):
    """Mean occupancy per (station, weekday, slot of day) on training data.

    Empty buckets fall back to the station's overall training mean;
    stations never seen in training fall back to the pooled buckets over
    all stations.
    """

    kind = "havg"

    def __init__(self) -> None:
        super().__init__()
        self.station_mean: dict[str, np.ndarray] = {}
        self.station_count: dict[str, np.ndarray] = {}
        self.station_overall: dict[str, float] = {}
        self.global_mean = np.zeros(_WEEK_BUCKETS)
        self.global_count = np.zeros(_WEEK_BUCKETS, dtype=np.int64)
        self.global_overall = 0.0

    def fit(self, data: TrainingData, cfg: TrainConfig | None = None) -> None:
        if not data.series:
            raise DataError("historical average needs at least one training series")
        sums: dict[str, np.ndarray] = {}
        counts: dict[str, np.ndarray] = {}
        for s in data.series:
            slots = s.epoch_slots()
            bucket = weekday_of(slots) * SLOTS_PER_DAY + slot_of_day_of(slots)
            if s.station_id not in sums:
                sums[s.station_id] = np.zeros(_WEEK_BUCKETS)
                counts[s.station_id] = np.zeros(_WEEK_BUCKETS, dtype=np.int64)
            sums[s.station_id] += np.bincount(bucket, weights=s.occupancy.astype(np.float64), minlength=_WEEK_BUCKETS)
            counts[s.station_id] += np.bincount(bucket, minlength=_WEEK_BUCKETS)
        total_sum = np.zeros(_WEEK_BUCKETS)
        total_count = np.zeros(_WEEK_BUCKETS, dtype=np.int64)
        for sid in sorted(sums):
            cnt = counts[sid]
            mean = np.divide(sums[sid], cnt, out=np.zeros(_WEEK_BUCKETS), where=cnt > 0)
            self.station_mean[sid] = mean
            self.station_count[sid] = cnt
            self.station_overall[sid] = float(sums[sid].sum() / cnt.sum())
            total_sum += sums[sid]
            total_count += cnt
        self.global_count = total_count
        self.global_mean = np.divide(
            total_sum, total_count, out=np.zeros(_WEEK_BUCKETS), where=total_count > 0
        )
        self.global_overall = float(total_sum.sum() / total_count.sum())
        self.fitted = True
        return None

    def predict(self, window: Window) -> np.ndarray:
        self._require_fitted()
        slots = window.target_epoch_slots()
        bucket = weekday_of(slots) * SLOTS_PER_DAY + slot_of_day_of(slots)
        if window.station_id in self.station_mean:
            mean = self.station_mean[window.station_id]
            count = self.station_count[window.station_id]
            fallback = self.station_overall[window.station_id]
        else:
            mean = self.global_mean
            count = self.global_count
            fallback = self.global_overall
        vals = mean[bucket]
        return np.where(count[bucket] > 0, vals, fallback)

    def state(self) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        self._require_fitted()
        config = {"stations": sorted(self.station_mean)}
        blocks: dict[str, np.ndarray] = {}
        for sid in config["stations"]:
            blocks[f"station.{sid}.mean"] = self.station_mean[sid]
            blocks[f"station.{sid}.count"] = self.station_count[sid]
            blocks[f"station.{sid}.overall"] = np.array([self.station_overall[sid]])
        blocks["global.mean"] = self.global_mean
        blocks["global.count"] = self.global_count
        blocks["global.overall"] = np.array([self.global_overall])
        return config, blocks

    @classmethod
    def from_state(cls, config: dict[str, Any], blocks: dict[str, np.ndarray]) -> "HistoricalAverageForecaster":
        fc = cls()
        for sid in config["stations"]:
            fc.station_mean[sid] = blocks[f"station.{sid}.mean"]
            fc.station_count[sid] = blocks[f"station.{sid}.count"].astype(np.int64)
            fc.station_overall[sid] = float(blocks[f"station.{sid}.overall"][0])
        fc.global_mean = blocks["global.mean"]
        fc.global_count = blocks["global.count"].astype(np.int64)
        fc.global_overall = float(blocks["global.overall"][0])
        fc.fitted = True
        return fc


# ---------------------------------------------------------------------------
# Nearest neighbour (k=1)


class KnnForecaster(Forecaster):
    """Copy the continuation of the most similar training input run.

    Distance is squared Euclidean over the input occupancy bits.  The
    candidate pool is the window's own station when it has training
    windows, otherwise all stations.  Exact ties resolve to the earliest
    input start, then the lexicographically smallest station id, so the
    prediction never depends on pool ordering.
    """

    kind = "knn"

    def __init__(self) -> None:
        super().__init__()
        self.inputs = np.zeros((0, 0), dtype=np.uint8)
        self.targets = np.zeros((0, 0), dtype=np.uint8)
        self.starts = np.zeros(0, dtype=np.int64)
        self.station_idx = np.zeros(0, dtype=np.int32)
        self.stations: list[str] = []
        self._by_station: dict[str, np.ndarray] = {}

    def fit(self, data: TrainingData, cfg: TrainConfig | None = None) -> None:
        windows = data.windows
        if not windows:
            raise DataError("nearest neighbour needs at least one training window")
        self.stations = sorted({w.station_id for w in windows})
        station_to_idx = {sid: k for k, sid in enumerate(self.stations)}
        self.inputs = np.stack([w.input_occ for w in windows]).astype(np.uint8)
        self.targets = np.stack([w.target_occ for w in windows]).astype(np.uint8)
        self.starts = np.array([w.input_start.epoch_slot for w in windows], dtype=np.int64)
        self.station_idx = np.array([station_to_idx[w.station_id] for w in windows], dtype=np.int32)
        self._rebuild_index()
        self.fitted = True
        return None

    def _rebuild_index(self) -> None:
        self._by_station = {
            sid: np.flatnonzero(self.station_idx == k) for k, sid in enumerate(self.stations)
        }

    def predict(self, window: Window) -> np.ndarray:
        self._require_fitted()
        pool = self._by_station.get(window.station_id)
        if pool is None or pool.size == 0:
            pool = np.arange(self.inputs.shape[0])
        query = np.asarray(window.input_occ, dtype=np.uint8)
        if query.size != self.inputs.shape[1]:
            raise ShapeError(
                f"window input length {query.size} does not match fitted length {self.inputs.shape[1]}"
            )
        # On 0/1 bits the squared Euclidean distance is the number of
        # differing positions, which stays exact in integer arithmetic.
        dists = np.count_nonzero(self.inputs[pool] != query, axis=1)
        best = int(dists.min())
        tied = pool[np.flatnonzero(dists == best)]
        winner = min(tied, key=lambda j: (self.starts[j], self.stations[self.station_idx[j]]))
        return self.targets[winner].astype(np.float64)

    def state(self) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        self._require_fitted()
        config = {"stations": self.stations}
        blocks = {
            "inputs": self.inputs,
            "targets": self.targets,
            "starts": self.starts,
            "station_idx": self.station_idx,
        }
        return config, blocks

    @classmethod
    def from_state(cls, config: dict[str, Any], blocks: dict[str, np.ndarray]) -> "KnnForecaster":
        fc = cls()
        fc.stations = list(config["stations"])
        fc.inputs = blocks["inputs"].astype(np.uint8)
        fc.targets = blocks["targets"].astype(np.uint8)
        fc.starts = blocks["starts"].astype(np.int64)
        fc.station_idx = blocks["station_idx"].astype(np.int32)
        fc._rebuild_index()
        fc.fitted = True
        return fc


# ---------------------------------------------------------------------------
# Logistic regression


class LogisticRegressionForecaster(_TrainableMixin, Forecaster):
    """One independent sigmoid unit per target slot over the input bits."""

    kind = "logreg"

    def __init__(self, input_slots: int, output_slots: int) -> None:
        super().__init__()
        if input_slots < 1 or output_slots < 1:
            raise ConfigError(f"horizons must be >= 1, got ({input_slots}, {output_slots})")
        self.input_slots = input_slots
        self.output_slots = output_slots
        self.W = np.zeros((output_slots, input_slots))
        self.b = np.zeros(output_slots)

    def param_blocks(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}

    def initialize(self, rng: np.random.Generator) -> None:
        self.W = glorot_init(self.output_slots, self.input_slots, rng)
        self.b = np.zeros(self.output_slots)
        self.fitted = True

    def fit(self, data: TrainingData, cfg: TrainConfig | None = None) -> list[float]:
        cfg = cfg or TrainConfig()
        rng = make_rng(cfg.seed)
        self.initialize(rng)
        return train(self, data.windows, cfg, rng=rng)

    def _forward(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(X @ self.W.T + self.b)

    def batch_loss_and_grads(self, windows: Sequence[Window]) -> tuple[float, dict[str, np.ndarray]]:
        X = _stack_input_occ(windows)
        Y = _stack_targets(windows)
        P = self._forward(X)
        loss, dP = bce_loss_grad(P, Y)
        dpre = dP * P * (1.0 - P)
        return loss, {"W": dpre.T @ X, "b": dpre.sum(axis=0)}

    def predict(self, window: Window) -> np.ndarray:
        self._require_fitted()
        return self._forward(np.asarray(window.input_occ, dtype=np.float64)[None, :])[0]

    def predict_batch(self, windows: Sequence[Window]) -> np.ndarray:
        self._require_fitted()
        if not windows:
            return np.zeros((0, self.output_slots))
        return self._forward(_stack_input_occ(windows))

    def state(self) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        self._require_fitted()
        config = {"input_slots": self.input_slots, "output_slots": self.output_slots}
        return config, {"W": self.W, "b": self.b}

    @classmethod
    def from_state(cls, config: dict[str, Any], blocks: dict[str, np.ndarray]) -> "LogisticRegressionForecaster":
        fc = cls(int(config["input_slots"]), int(config["output_slots"]))
        fc.W = blocks["W"]
        fc.b = blocks["b"]
        fc.fitted = True
        return fc


# ---------------------------------------------------------------------------
# Recurrent encoder with linear heads


class GruFcForecaster(_TrainableMixin, Forecaster):
    """GRU over the occupancy sequence, then one linear unit per target slot."""

    kind = "gru_fc"

    def __init__(self, input_slots: int, output_slots: int, hidden: int = 100) -> None:
        super().__init__()
        if hidden < 1:
            raise ConfigError(f"hidden size must be >= 1, got {hidden}")
        self.input_slots = input_slots
        self.output_slots = output_slots
        self.hidden = hidden
        self.encoder = GruParams.zeros(hidden, 1)
        self.head_W = np.zeros((output_slots, hidden))
        self.head_b = np.zeros(output_slots)

    def param_blocks(self) -> dict[str, np.ndarray]:
        out = self.encoder.blocks("encoder")
        out["head.W"] = self.head_W
        out["head.b"] = self.head_b
        return out

    def initialize(self, rng: np.random.Generator) -> None:
        self.encoder = GruParams.init(self.hidden, 1, rng)
        self.head_W = glorot_init(self.output_slots, self.hidden, rng)
        self.head_b = np.zeros(self.output_slots)
        self.fitted = True

    def fit(self, data: TrainingData, cfg: TrainConfig | None = None) -> list[float]:
        cfg = cfg or TrainConfig()
        rng = make_rng(cfg.seed)
        self.initialize(rng)
        return train(self, data.windows, cfg, rng=rng)

    def batch_loss_and_grads(self, windows: Sequence[Window]) -> tuple[float, dict[str, np.ndarray]]:
        X = _stack_input_occ(windows)[:, :, None]
        Y = _stack_targets(windows)
        e, cache = _sequence_forward(X, None, self.encoder)
        P = sigmoid(e @ self.head_W.T + self.head_b)
        loss, dP = bce_loss_grad(P, Y)
        dpre = dP * P * (1.0 - P)
        grads = GruParams.zeros(self.hidden, 1)
        de = dpre @ self.head_W
        assert cache is not None
        _sequence_backward(de, cache, self.encoder, grads)
        out = grads.blocks("encoder")
        out["head.W"] = dpre.T @ e
        out["head.b"] = dpre.sum(axis=0)
        return loss, out

    def predict(self, window: Window) -> np.ndarray:
        return self.predict_batch([window])[0]

    def predict_batch(self, windows: Sequence[Window]) -> np.ndarray:
        self._require_fitted()
        if not windows:
            return np.zeros((0, self.output_slots))
        out = np.empty((len(windows), self.output_slots))
        for lo in range(0, len(windows), _PREDICT_CHUNK):
            chunk = windows[lo : lo + _PREDICT_CHUNK]
            X = _stack_input_occ(chunk)[:, :, None]
            e, _ = _sequence_forward(X, None, self.encoder, keep_cache=False)
            out[lo : lo + len(chunk)] = sigmoid(e @ self.head_W.T + self.head_b)
        return out

    def state(self) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        self._require_fitted()
        config = {
            "input_slots": self.input_slots,
            "output_slots": self.output_slots,
            "hidden": self.hidden,
        }
        blocks = self.param_blocks()
        return config, blocks

    @classmethod
    def from_state(cls, config: dict[str, Any], blocks: dict[str, np.ndarray]) -> "GruFcForecaster":
        fc = cls(int(config["input_slots"]), int(config["output_slots"]), int(config["hidden"]))
        fc.encoder = GruParams(
            W_z=blocks["encoder.W_z"],
            W_r=blocks["encoder.W_r"],
            W_h=blocks["encoder.W_h"],
            U_z=blocks["encoder.U_z"],
            U_r=blocks["encoder.U_r"],
            U_h=blocks["encoder.U_h"],
            b_z=blocks["encoder.b_z"],
            b_r=blocks["encoder.b_r"],
            b_h=blocks["encoder.b_h"],
        )
        fc.head_W = blocks["head.W"]
        fc.head_b = blocks["head.b"]
        fc.fitted = True
        return fc


# ---------------------------------------------------------------------------
# Recurrent encoder/decoder (no static information)


class Seq2SeqForecaster(_TrainableMixin, Forecaster):
    """GRU encoder over occupancy; autoregressive GRU decoder from its state.

    The decoder is structurally identical to the fused model's: initial
    hidden state from the encoder, previous prediction as next input,
    last observation as bootstrap, shared sigmoid head.
    """

    kind = "seq2seq"

    def __init__(self, input_slots: int, output_slots: int, hidden: int = 100) -> None:
        super().__init__()
        if hidden < 1:
            raise ConfigError(f"hidden size must be >= 1, got {hidden}")
        self.input_slots = input_slots
        self.output_slots = output_slots
        self.hidden = hidden
        self.encoder = GruParams.zeros(hidden, 1)
        self.decoder = GruParams.zeros(hidden, 1)
        self.head_w = np.zeros(hidden)
        self.head_b = np.zeros(1)

    def param_blocks(self) -> dict[str, np.ndarray]:
        out = self.encoder.blocks("encoder")
        out.update(self.decoder.blocks("decoder"))
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out

    def initialize(self, rng: np.random.Generator) -> None:
        # Draw order: encoder, decoder, head.
        self.encoder = GruParams.init(self.hidden, 1, rng)
        self.decoder = GruParams.init(self.hidden, 1, rng)
        self.head_w = glorot_init(1, self.hidden, rng)[0]
        self.head_b = np.zeros(1)
        self.fitted = True

    def fit(self, data: TrainingData, cfg: TrainConfig | None = None) -> list[float]:
        cfg = cfg or TrainConfig()
        rng = make_rng(cfg.seed)
        self.initialize(rng)
        return train(self, data.windows, cfg, rng=rng)

    def batch_loss_and_grads(self, windows: Sequence[Window]) -> tuple[float, dict[str, np.ndarray]]:
        X = _stack_input_occ(windows)[:, :, None]
        Y = _stack_targets(windows)
        last = np.array([float(w.last_observed) for w in windows])
        e, enc_cache = _sequence_forward(X, None, self.encoder)
        P, dec_cache = _decode(e, last, self.output_slots, self.decoder, self.head_w, self.head_b)
        loss, dP = bce_loss_grad(P, Y)
        enc_grads = GruParams.zeros(self.hidden, 1)
        dec_grads = GruParams.zeros(self.hidden, 1)
        head_w_grad = np.zeros(self.hidden)
        head_b_grad = np.zeros(1)
        assert enc_cache is not None and dec_cache is not None
        de = _decode_backward(dP, dec_cache, self.decoder, self.head_w, dec_grads, head_w_grad, head_b_grad)
        _sequence_backward(de, enc_cache, self.encoder, enc_grads)
        out = enc_grads.blocks("encoder")
        out.update(dec_grads.blocks("decoder"))
        out["head.w"] = head_w_grad
        out["head.b"] = head_b_grad
        return loss, out

    def predict(self, window: Window) -> np.ndarray:
        return self.predict_batch([window])[0]

    def predict_batch(self, windows: Sequence[Window]) -> np.ndarray:
        self._require_fitted()
        if not windows:
            return np.zeros((0, self.output_slots))
        out = np.empty((len(windows), self.output_slots))
        for lo in range(0, len(windows), _PREDICT_CHUNK):
            chunk = windows[lo : lo + _PREDICT_CHUNK]
            X = _stack_input_occ(chunk)[:, :, None]
            last = np.array([float(w.last_observed) for w in chunk])
            e, _ = _sequence_forward(X, None, self.encoder, keep_cache=False)
            P, _ = _decode(e, last, self.output_slots, self.decoder, self.head_w, self.head_b, keep_cache=False)
            out[lo : lo + len(chunk)] = P
        return out

    def state(self) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        self._require_fitted()
        config = {
            "input_slots": self.input_slots,
            "output_slots": self.output_slots,
            "hidden": self.hidden,
        }
        return config, self.param_blocks()

    @classmethod
    def from_state(cls, config: dict[str, Any], blocks: dict[str, np.ndarray]) -> "Seq2SeqForecaster":
        fc = cls(int(config["input_slots"]), int(config["output_slots"]), int(config["hidden"]))

        def gru(prefix: str) -> GruParams:
            return GruParams(
                W_z=blocks[f"{prefix}.W_z"],
                W_r=blocks[f"{prefix}.W_r"],
                W_h=blocks[f"{prefix}.W_h"],
                U_z=blocks[f"{prefix}.U_z"],
                U_r=blocks[f"{prefix}.U_r"],
                U_h=blocks[f"{prefix}.U_h"],
                b_z=blocks[f"{prefix}.b_z"],
                b_r=blocks[f"{prefix}.b_r"],
                b_h=blocks[f"{prefix}.b_h"],
            )

        fc.encoder = gru("encoder")
        fc.decoder = gru("decoder")
        fc.head_w = blocks["head.w"]
        fc.head_b = blocks["head.b"]
        fc.fitted = True
        return fc


# ---------------------------------------------------------------------------
# The fused dynamic/static model behind the same contract


class DfdsForecaster(_TrainableMixin, Forecaster):
    """Wrapper that trains and serves the fused dynamic/static model."""

    kind = "dfds"

    def __init__(self, config: DfdsConfig | None = None) -> None:
        super().__init__()
        self.config = config or DfdsConfig()
        self.params: DfdsParams | None = None
        self.profiles: ProfileSet | None = None

    def param_blocks(self) -> dict[str, np.ndarray]:
        if self.params is None:
            raise NotFittedError("parameters are not initialized; call fit first")
        return self.params.blocks()

    def initialize(self, rng: np.random.Generator) -> None:
        self.params = DfdsParams.init(self.config, rng)
        self.fitted = True

    def fit(self, data: TrainingData, cfg: TrainConfig | None = None) -> list[float]:
        cfg = cfg or TrainConfig()
        rng = make_rng(cfg.seed)
        self.profiles = data.profiles
        self.initialize(rng)
        return train(self, data.windows, cfg, rng=rng)

    def _batch_inputs(
        self, windows: Sequence[Window]
    ) -> tuple[np.ndarray | None, dict[str, np.ndarray], np.ndarray]:
        cfg = self.config
        for w in windows:
            if w.input_slots != cfg.input_slots or w.output_slots != cfg.output_slots:
                raise ShapeError(
                    f"window horizons ({w.input_slots}, {w.output_slots}) do not match "
                    f"config ({cfg.input_slots}, {cfg.output_slots})"
                )
        X = encode_window_inputs(windows, cfg.dynamic_layout) if cfg.use_dynamic else None
        rows: dict[str, np.ndarray] = {}
        if cfg.active_static_features:
            assert self.profiles is not None
            stacked = static_rows_batch(self.profiles, windows)
            order = {"mean": 0, "q25": 1, "q75": 2}
            rows = {feat: stacked[:, order[feat], :] for feat in cfg.active_static_features}
        last = np.array([float(w.last_observed) for w in windows])
        return X, rows, last

    def batch_loss_and_grads(self, windows: Sequence[Window]) -> tuple[float, dict[str, np.ndarray]]:
        assert self.params is not None
        X, rows, last = self._batch_inputs(windows)
        Y = _stack_targets(windows)
        preds, cache = dfds_forward_batch(self.params, X, rows, last)
        loss, dP = bce_loss_grad(preds, Y)
        assert cache is not None
        grads = dfds_backward_batch(dP, cache, self.params)
        return loss, grads.blocks()

    def predict(self, window: Window) -> np.ndarray:
        return self.predict_batch([window])[0]

    def predict_batch(self, windows: Sequence[Window]) -> np.ndarray:
        self._require_fitted()
        assert self.params is not None
        if not windows:
            return np.zeros((0, self.config.output_slots))
        out = np.empty((len(windows), self.config.output_slots))
        for lo in range(0, len(windows), _PREDICT_CHUNK):
            chunk = windows[lo : lo + _PREDICT_CHUNK]
            X, rows, last = self._batch_inputs(chunk)
            P, _ = dfds_forward_batch(self.params, X, rows, last, keep_cache=False)
            out[lo : lo + len(chunk)] = P
        return out

    def state(self) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        self._require_fitted()
        assert self.params is not None and self.profiles is not None
        config = {
            "config": self.config.to_dict(),
            "profile_stations": sorted(self.profiles.stations),
            "weekday_conditioned": self.profiles.weekday_conditioned,
        }
        blocks = dict(self.params.blocks())
        for sid, prof in [(s, self.profiles.stations[s]) for s in config["profile_stations"]] + [
            (GLOBAL_STATION, self.profiles.global_profile)
        ]:
            blocks[f"profile.{sid}.mean"] = prof.mean
            blocks[f"profile.{sid}.q25"] = prof.q25
            blocks[f"profile.{sid}.q75"] = prof.q75
            blocks[f"profile.{sid}.count"] = prof.count
        return config, blocks

    @classmethod
    def from_state(cls, config: dict[str, Any], blocks: dict[str, np.ndarray]) -> "DfdsForecaster":
        model_config = DfdsConfig.from_dict(config["config"])
        fc = cls(model_config)
        params = DfdsParams.zeros(model_config)
        for name, arr in params.blocks().items():
            arr[...] = blocks[name]
        fc.params = params
        weekday_conditioned = bool(config["weekday_conditioned"])

        def profile(sid: str) -> StaticProfile:
            return StaticProfile(
                station_id=sid,
                mean=blocks[f"profile.{sid}.mean"],
                q25=blocks[f"profile.{sid}.q25"],
                q75=blocks[f"profile.{sid}.q75"],
                count=blocks[f"profile.{sid}.count"].astype(np.int64),
                weekday_conditioned=weekday_conditioned,
            )

        fc.profiles = ProfileSet(
            stations={sid: profile(sid) for sid in config["profile_stations"]},
            global_profile=profile(GLOBAL_STATION),
            weekday_conditioned=weekday_conditioned,
        )
        fc.fitted = True
        return fc


MODEL_REGISTRY: dict[str, type[Forecaster]] = {
    "dfds": DfdsForecaster,
    "havg": HistoricalAverageForecaster,
    "knn": KnnForecaster,
    "logreg": LogisticRegressionForecaster,
    "gru_fc": GruFcForecaster,
    "seq2seq": Seq2SeqForecaster,
}


def make_forecaster(
    name: str,
    input_slots: int,
    output_slots: int,
    hidden: int = 100,
    dfds_config: DfdsConfig | None = None,
) -> Forecaster:
    """Construct an unfitted forecaster by registry name."""
    if name not in MODEL_REGISTRY:
        raise ConfigError(f"unknown model {name!r}, expected one of {sorted(MODEL_REGISTRY)}")
    if name == "dfds":
        config = dfds_config or DfdsConfig(
            input_slots=input_slots,
            output_slots=output_slots,
            d_encoder=hidden,
            d_static=hidden,
            d_fusion=hidden,
            d_decoder=hidden,
        )
        return DfdsForecaster(config)
    if name == "havg":
        return HistoricalAverageForecaster()
    if name == "knn":
        return KnnForecaster()
    if name == "logreg":
        return LogisticRegressionForecaster(input_slots, output_slots)
    if name == "gru_fc":
        return GruFcForecaster(input_slots, output_slots, hidden)
    return Seq2SeqForecaster(input_slots, output_slots, hidden)
