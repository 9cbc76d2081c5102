"""The fused dynamic/static occupancy forecaster and its gradients.

The model has four learned parts:

* a GRU *encoder* that reads the window's dynamic feature sequence and
  keeps its final hidden state,
* three small ReLU *static encoders*, one per profile statistic (mean,
  q25, q75), each mapping the profile row over the target slots to a
  vector,
* a ReLU *fusion* layer over the concatenation of all encoded vectors,
* a GRU *decoder* whose initial hidden state is the fused vector and
  whose scalar input at each step is the previous step's prediction
  (the last observed occupancy bootstraps step one), followed by a
  sigmoid head shared across steps.

All forward passes are written batch-first on float64 numpy arrays, and
every gradient is derived and implemented by hand here; training never
calls an autodiff framework.  The backward pass follows the same
autoregressive path as the forward pass, so the gradient of step t flows
into the parameters through every earlier prediction.

GRU convention used throughout (x is the step input, h the state):

    z = sigmoid(W_z x + U_z h_prev + b_z)
    r = sigmoid(W_r x + U_r h_prev + b_r)
    hbar = tanh(W_h x + U_h (r * h_prev) + b_h)
    h = (1 - z) * h_prev + z * hbar
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .data import Window
from .errors import ConfigError, ShapeError
from .features import (
    FULL_LAYOUT,
    STATIC_FEATURES,
    DynamicLayout,
    StaticRows,
    encode_window_inputs,
)
from .numerics import glorot_init, sigmoid, tanh

BCE_CLAMP = 1e-7


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class DfdsConfig:
    """Shape and wiring of the fused forecaster.

    The fusion output feeds the decoder as its initial hidden state, so
    ``d_fusion`` must equal ``d_decoder``.  Ablation configurations turn
    off the dynamic branch, the static branch, individual static
    features, or individual dynamic feature blocks; at least one branch
    must stay active.  ``bootstrap_last_obs`` controls whether the first
    decoder input is the last observed occupancy (normal operation) or a
    constant 0.5 (used when all occupancy information is withheld).
    """

    input_slots: int = 64
    output_slots: int = 32
    d_encoder: int = 100
    d_static: int = 100
    d_fusion: int = 100
    d_decoder: int = 100
    dynamic_layout: DynamicLayout = FULL_LAYOUT
    static_features: tuple[str, ...] = STATIC_FEATURES
    use_dynamic: bool = True
    use_static: bool = True
    bootstrap_last_obs: bool = True

    def __post_init__(self) -> None:
        if self.input_slots < 1 or self.output_slots < 1:
            raise ConfigError(
                f"horizons must be >= 1 slot, got input={self.input_slots}, output={self.output_slots}"
            )
        for name in ("d_encoder", "d_static", "d_fusion", "d_decoder"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_fusion != self.d_decoder:
            raise ConfigError(
                f"fusion output ({self.d_fusion}) must match decoder state size ({self.d_decoder})"
            )
        if not self.use_dynamic and not self.use_static:
            raise ConfigError("at least one of the dynamic and static branches must be active")
        if self.use_dynamic and self.dynamic_layout.dim == 0:
            raise ConfigError("dynamic branch is active but every dynamic feature block is dropped")
        if self.use_static:
            if not self.static_features:
                raise ConfigError("static branch is active but no static features are selected")
            bad = [f for f in self.static_features if f not in STATIC_FEATURES]
            if bad:
                raise ConfigError(f"unknown static features {bad!r}, expected subset of {STATIC_FEATURES}")
            if len(set(self.static_features)) != len(self.static_features):
                raise ConfigError(f"duplicate static features in {self.static_features!r}")

    @property
    def active_static_features(self) -> tuple[str, ...]:
        return self.static_features if self.use_static else ()

    @property
    def fusion_input_width(self) -> int:
        width = self.d_encoder if self.use_dynamic else 0
        width += self.d_static * len(self.active_static_features)
        return width

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_slots": self.input_slots,
            "output_slots": self.output_slots,
            "d_encoder": self.d_encoder,
            "d_static": self.d_static,
            "d_fusion": self.d_fusion,
            "d_decoder": self.d_decoder,
            "dynamic_layout": {
                "occupation": self.dynamic_layout.occupation,
                "day_of_week": self.dynamic_layout.day_of_week,
                "time_of_day": self.dynamic_layout.time_of_day,
            },
            "static_features": list(self.static_features),
            "use_dynamic": self.use_dynamic,
            "use_static": self.use_static,
            "bootstrap_last_obs": self.bootstrap_last_obs,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DfdsConfig":
        layout = d.get("dynamic_layout", {})
        return cls(
            input_slots=int(d["input_slots"]),
            output_slots=int(d["output_slots"]),
            d_encoder=int(d["d_encoder"]),
            d_static=int(d["d_static"]),
            d_fusion=int(d["d_fusion"]),
            d_decoder=int(d["d_decoder"]),
            dynamic_layout=DynamicLayout(
                occupation=bool(layout.get("occupation", True)),
                day_of_week=bool(layout.get("day_of_week", True)),
                time_of_day=bool(layout.get("time_of_day", True)),
            ),
            static_features=tuple(d["static_features"]),
            use_dynamic=bool(d["use_dynamic"]),
            use_static=bool(d["use_static"]),
            bootstrap_last_obs=bool(d["bootstrap_last_obs"]),
        )


# ---------------------------------------------------------------------------
# GRU parameters and the cell


@dataclass
class GruParams:
    """Weights of one GRU: input maps W_*, recurrent maps U_*, biases b_*."""

    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @classmethod
    def init(cls, d: int, x_dim: int, rng: np.random.Generator) -> "GruParams":
        """Glorot-uniform weights, zero biases.  Draw order: W_z, W_r, W_h, U_z, U_r, U_h."""
        return cls(
            W_z=glorot_init(d, x_dim, rng),
            W_r=glorot_init(d, x_dim, rng),
            W_h=glorot_init(d, x_dim, rng),
            U_z=glorot_init(d, d, rng),
            U_r=glorot_init(d, d, rng),
            U_h=glorot_init(d, d, rng),
            b_z=np.zeros(d),
            b_r=np.zeros(d),
            b_h=np.zeros(d),
        )

    @classmethod
    def zeros(cls, d: int, x_dim: int) -> "GruParams":
        return cls(
            W_z=np.zeros((d, x_dim)),
            W_r=np.zeros((d, x_dim)),
            W_h=np.zeros((d, x_dim)),
            U_z=np.zeros((d, d)),
            U_r=np.zeros((d, d)),
            U_h=np.zeros((d, d)),
            b_z=np.zeros(d),
            b_r=np.zeros(d),
            b_h=np.zeros(d),
        )

    @property
    def d(self) -> int:
        return self.W_z.shape[0]

    @property
    def x_dim(self) -> int:
        return self.W_z.shape[1]

    def blocks(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.W_z": self.W_z,
            f"{prefix}.W_r": self.W_r,
            f"{prefix}.W_h": self.W_h,
            f"{prefix}.U_z": self.U_z,
            f"{prefix}.U_r": self.U_r,
            f"{prefix}.U_h": self.U_h,
            f"{prefix}.b_z": self.b_z,
            f"{prefix}.b_r": self.b_r,
            f"{prefix}.b_h": self.b_h,
        }


@dataclass
class GruCellCache:
    """Everything the cell backward needs: inputs and gate activations."""

    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    rh: np.ndarray
    hbar: np.ndarray


def _cell_forward(x: np.ndarray, h_prev: np.ndarray, p: GruParams) -> tuple[np.ndarray, GruCellCache]:
    """One batched GRU step.  x is (B, x_dim), h_prev is (B, d)."""
    az = x @ p.W_z.T + h_prev @ p.U_z.T + p.b_z
    ar = x @ p.W_r.T + h_prev @ p.U_r.T + p.b_r
    z = sigmoid(az)
    r = sigmoid(ar)
    rh = r * h_prev
    ah = x @ p.W_h.T + rh @ p.U_h.T + p.b_h
    hbar = tanh(ah)
    h = (1.0 - z) * h_prev + z * hbar
    return h, GruCellCache(x=x, h_prev=h_prev, z=z, r=r, rh=rh, hbar=hbar)


def _cell_backward(
    dh: np.ndarray, cache: GruCellCache, p: GruParams, grads: GruParams
) -> tuple[np.ndarray, np.ndarray]:
    """Backward through one batched GRU step.

    Accumulates parameter gradients into ``grads`` and returns
    (dx, dh_prev).  Derivation: with h = (1-z) h_prev + z hbar,

        dz    = dh * (hbar - h_prev)
        dhbar = dh * z
        dh_prev = dh * (1 - z)                       (direct path)
        dah   = dhbar * (1 - hbar^2)                 (tanh)
        drh   = dah @ U_h                            (hbar pre-activation)
        dr    = drh * h_prev;  dh_prev += drh * r    (reset product)
        daz   = dz * z * (1 - z);  dar = dr * r * (1 - r)   (sigmoids)
        dh_prev += daz @ U_z + dar @ U_r             (gate pre-activations)
    """
    z, r, rh, hbar, h_prev, x = cache.z, cache.r, cache.rh, cache.hbar, cache.h_prev, cache.x
    dz = dh * (hbar - h_prev)
    dhbar = dh * z
    dh_prev = dh * (1.0 - z)
    dah = dhbar * (1.0 - hbar * hbar)
    drh = dah @ p.U_h
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    grads.W_z += daz.T @ x
    grads.W_r += dar.T @ x
    grads.W_h += dah.T @ x
    grads.U_z += daz.T @ h_prev
    grads.U_r += dar.T @ h_prev
    grads.U_h += dah.T @ rh
    grads.b_z += daz.sum(axis=0)
    grads.b_r += dar.sum(axis=0)
    grads.b_h += dah.sum(axis=0)
    dx = daz @ p.W_z + dar @ p.W_r + dah @ p.W_h
    dh_prev = dh_prev + daz @ p.U_z + dar @ p.U_r
    return dx, dh_prev


def gru_cell_forward(
    x: np.ndarray, h_prev: np.ndarray, p: GruParams
) -> tuple[np.ndarray, GruCellCache]:
    """Single-example GRU step: x is (x_dim,), h_prev is (d,)."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.shape != (p.x_dim,) or h_prev.shape != (p.d,):
        raise ShapeError(
            f"gru_cell_forward expects x ({p.x_dim},) and h_prev ({p.d},), got {x.shape} and {h_prev.shape}"
        )
    h, cache = _cell_forward(x[None, :], h_prev[None, :], p)
    return h[0], cache


def gru_cell_backward(
    dh: np.ndarray, cache: GruCellCache, p: GruParams
) -> tuple[np.ndarray, np.ndarray, GruParams]:
    """Single-example backward step: returns (dx, dh_prev, parameter grads)."""
    dh = np.asarray(dh, dtype=np.float64)
    if dh.ndim == 1:
        dh = dh[None, :]
    grads = GruParams.zeros(p.d, p.x_dim)
    dx, dh_prev = _cell_backward(dh, cache, p, grads)
    return dx[0], dh_prev[0], grads


# ---------------------------------------------------------------------------
# GRU over a full input sequence (the encoder)


@dataclass
class GruSeqCache:
    """Stacked per-step cell caches for a whole sequence."""

    X: np.ndarray  # (B, T, x_dim)
    H: np.ndarray  # (T+1, B, d); H[0] is the initial state
    Z: np.ndarray  # (T, B, d)
    R: np.ndarray
    RH: np.ndarray
    HBAR: np.ndarray


def _sequence_forward(
    X: np.ndarray, h0: np.ndarray | None, p: GruParams, keep_cache: bool = True
) -> tuple[np.ndarray, GruSeqCache | None]:
    """Run the GRU over X of shape (B, T, x_dim); returns final state and cache.

    Input projections are hoisted out of the time loop as one matrix
    product per gate.  With ``keep_cache=False`` (inference) the per-step
    stacks are not stored and the cache is None.
    """
    B, T, x_dim = X.shape
    if x_dim != p.x_dim:
        raise ShapeError(f"sequence input dim {x_dim} does not match params ({p.x_dim})")
    d = p.d
    if h0 is None:
        h0 = np.zeros((B, d))
    flat = X.reshape(B * T, x_dim)
    xz = (flat @ p.W_z.T).reshape(B, T, d)
    xr = (flat @ p.W_r.T).reshape(B, T, d)
    xh = (flat @ p.W_h.T).reshape(B, T, d)
    if keep_cache:
        H = np.empty((T + 1, B, d))
        Z = np.empty((T, B, d))
        R = np.empty((T, B, d))
        RH = np.empty((T, B, d))
        HBAR = np.empty((T, B, d))
        H[0] = h0
    h = h0
    for t in range(T):
        z = sigmoid(xz[:, t] + h @ p.U_z.T + p.b_z)
        r = sigmoid(xr[:, t] + h @ p.U_r.T + p.b_r)
        rh = r * h
        hbar = tanh(xh[:, t] + rh @ p.U_h.T + p.b_h)
        h = (1.0 - z) * h + z * hbar
        if keep_cache:
            Z[t], R[t], RH[t], HBAR[t], H[t + 1] = z, r, rh, hbar, h
    if not keep_cache:
        return h, None
    return H[T], GruSeqCache(X=X, H=H, Z=Z, R=R, RH=RH, HBAR=HBAR)


def _sequence_backward(
    dh_final: np.ndarray, cache: GruSeqCache, p: GruParams, grads: GruParams
) -> np.ndarray:
    """Backpropagate through the whole sequence given d(final state).

    Accumulates parameter gradients into ``grads`` and returns dh0.  The
    per-step pre-activation gradients are staged and turned into weight
    gradients with a handful of large matrix products after the loop;
    gradients with respect to the (data) inputs are not formed.
    """
    B, T, x_dim = cache.X.shape
    d = p.d
    DAZ = np.empty((T, B, d))
    DAR = np.empty((T, B, d))
    DAH = np.empty((T, B, d))
    dh = dh_final
    for t in range(T - 1, -1, -1):
        z, r, rh, hbar = cache.Z[t], cache.R[t], cache.RH[t], cache.HBAR[t]
        h_prev = cache.H[t]
        dz = dh * (hbar - h_prev)
        dhbar = dh * z
        dh_prev = dh * (1.0 - z)
        dah = dhbar * (1.0 - hbar * hbar)
        drh = dah @ p.U_h
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        dh = dh_prev + daz @ p.U_z + dar @ p.U_r
        DAZ[t], DAR[t], DAH[t] = daz, dar, dah
    flat_X = np.ascontiguousarray(cache.X.transpose(1, 0, 2)).reshape(T * B, x_dim)
    flat_Hprev = cache.H[:T].reshape(T * B, d)
    flat_RH = cache.RH.reshape(T * B, d)
    daz_flat = DAZ.reshape(T * B, d)
    dar_flat = DAR.reshape(T * B, d)
    dah_flat = DAH.reshape(T * B, d)
    grads.W_z += daz_flat.T @ flat_X
    grads.W_r += dar_flat.T @ flat_X
    grads.W_h += dah_flat.T @ flat_X
    grads.U_z += daz_flat.T @ flat_Hprev
    grads.U_r += dar_flat.T @ flat_Hprev
    grads.U_h += dah_flat.T @ flat_RH
    grads.b_z += daz_flat.sum(axis=0)
    grads.b_r += dar_flat.sum(axis=0)
    grads.b_h += dah_flat.sum(axis=0)
    return dh


def gru_forward(xs: np.ndarray, h0: np.ndarray | None, p: GruParams) -> tuple[np.ndarray, GruSeqCache]:
    """Single-sequence GRU run: xs is (T, x_dim); returns the final state."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise ShapeError(f"gru_forward expects (T, x_dim), got {xs.shape}")
    h0_b = None if h0 is None else np.asarray(h0, dtype=np.float64)[None, :]
    h, cache = _sequence_forward(xs[None, :, :], h0_b, p)
    return h[0], cache


# ---------------------------------------------------------------------------
# Model parameters


@dataclass
class DfdsParams:
    """All learnable weights, together with the configuration they fit."""

    config: DfdsConfig
    encoder: GruParams | None
    static_A: dict[str, np.ndarray]
    static_c: dict[str, np.ndarray]
    fusion_W: np.ndarray
    fusion_b: np.ndarray
    decoder: GruParams
    head_w: np.ndarray
    head_b: np.ndarray

    @classmethod
    def init(cls, config: DfdsConfig, rng: np.random.Generator) -> "DfdsParams":
        """Glorot-uniform weights, zero biases.

        Deterministic draw order: encoder, static encoders in configured
        feature order, fusion, decoder, head.
        """
        encoder = (
            GruParams.init(config.d_encoder, config.dynamic_layout.dim, rng)
            if config.use_dynamic
            else None
        )
        static_A: dict[str, np.ndarray] = {}
        static_c: dict[str, np.ndarray] = {}
        for feat in config.active_static_features:
            static_A[feat] = glorot_init(config.d_static, config.output_slots, rng)
            static_c[feat] = np.zeros(config.d_static)
        fusion_W = glorot_init(config.d_fusion, config.fusion_input_width, rng)
        fusion_b = np.zeros(config.d_fusion)
        decoder = GruParams.init(config.d_decoder, 1, rng)
        head_w = glorot_init(1, config.d_decoder, rng)[0]
        head_b = np.zeros(1)
        return cls(
            config=config,
            encoder=encoder,
            static_A=static_A,
            static_c=static_c,
            fusion_W=fusion_W,
            fusion_b=fusion_b,
            decoder=decoder,
            head_w=head_w,
            head_b=head_b,
        )

    @classmethod
    def zeros(cls, config: DfdsConfig) -> "DfdsParams":
        encoder = (
            GruParams.zeros(config.d_encoder, config.dynamic_layout.dim)
            if config.use_dynamic
            else None
        )
        static_A = {
            feat: np.zeros((config.d_static, config.output_slots))
            for feat in config.active_static_features
        }
        static_c = {feat: np.zeros(config.d_static) for feat in config.active_static_features}
        return cls(
            config=config,
            encoder=encoder,
            static_A=static_A,
            static_c=static_c,
            fusion_W=np.zeros((config.d_fusion, config.fusion_input_width)),
            fusion_b=np.zeros(config.d_fusion),
            decoder=GruParams.zeros(config.d_decoder, 1),
            head_w=np.zeros(config.d_decoder),
            head_b=np.zeros(1),
        )

    def blocks(self) -> dict[str, np.ndarray]:
        """Named parameter arrays in a fixed, deterministic order."""
        out: dict[str, np.ndarray] = {}
        if self.encoder is not None:
            out.update(self.encoder.blocks("encoder"))
        for feat in self.config.active_static_features:
            out[f"static.{feat}.A"] = self.static_A[feat]
            out[f"static.{feat}.c"] = self.static_c[feat]
        out["fusion.W"] = self.fusion_W
        out["fusion.b"] = self.fusion_b
        out.update(self.decoder.blocks("decoder"))
        out["head.w"] = self.head_w
        out["head.b"] = self.head_b
        return out


# ---------------------------------------------------------------------------
# Static encoders and fusion


@dataclass
class StaticEncodeCache:
    rows: dict[str, np.ndarray]  # (B, o) per feature
    pre: dict[str, np.ndarray]  # (B, d_static) pre-activation per feature


def _encode_static(
    rows: dict[str, np.ndarray], params: DfdsParams
) -> tuple[dict[str, np.ndarray], StaticEncodeCache]:
    """ReLU(A @ row + c) per configured static feature; rows are (B, o)."""
    encoded: dict[str, np.ndarray] = {}
    pre: dict[str, np.ndarray] = {}
    for feat in params.config.active_static_features:
        p = rows[feat] @ params.static_A[feat].T + params.static_c[feat]
        pre[feat] = p
        encoded[feat] = np.maximum(p, 0.0)
    return encoded, StaticEncodeCache(rows=rows, pre=pre)


def encode_static(rows: StaticRows, params: DfdsParams) -> tuple[dict[str, np.ndarray], StaticEncodeCache]:
    """Single-window static encoding; returns feature -> (d_static,) vectors."""
    batch_rows = {
        "mean": np.asarray(rows.mean, dtype=np.float64)[None, :],
        "q25": np.asarray(rows.q25, dtype=np.float64)[None, :],
        "q75": np.asarray(rows.q75, dtype=np.float64)[None, :],
    }
    encoded, cache = _encode_static(batch_rows, params)
    return {feat: vec[0] for feat, vec in encoded.items()}, cache


@dataclass
class FuseCache:
    v: np.ndarray  # (B, width) concatenated input
    pre: np.ndarray  # (B, d_fusion)
    part_widths: list[int]


def _fuse(parts: Sequence[np.ndarray], params: DfdsParams) -> tuple[np.ndarray, FuseCache]:
    """Concatenate encoded vectors and apply the ReLU fusion layer."""
    v = np.concatenate(parts, axis=1)
    if v.shape[1] != params.config.fusion_input_width:
        raise ShapeError(
            f"fusion input width {v.shape[1]} does not match configured {params.config.fusion_input_width}"
        )
    pre = v @ params.fusion_W.T + params.fusion_b
    u = np.maximum(pre, 0.0)
    return u, FuseCache(v=v, pre=pre, part_widths=[p.shape[1] for p in parts])


def fuse(parts: Sequence[np.ndarray], params: DfdsParams) -> tuple[np.ndarray, FuseCache]:
    """Single-window fusion over (d,) vectors; returns the fused (d_fusion,) vector."""
    u, cache = _fuse([np.asarray(p, dtype=np.float64)[None, :] for p in parts], params)
    return u[0], cache


# ---------------------------------------------------------------------------
# Autoregressive decoder


@dataclass
class DecodeCache:
    A: np.ndarray  # (o, B, 1) step inputs; A[0] is the bootstrap value
    H: np.ndarray  # (o+1, B, d); H[0] = fused vector
    Z: np.ndarray
    R: np.ndarray
    RH: np.ndarray
    HBAR: np.ndarray
    P: np.ndarray  # (B, o) sigmoid predictions


def _decode(
    u: np.ndarray,
    a1: np.ndarray,
    output_slots: int,
    dec: GruParams,
    head_w: np.ndarray,
    head_b: np.ndarray,
    keep_cache: bool = True,
) -> tuple[np.ndarray, DecodeCache | None]:
    """Roll the decoder forward for ``output_slots`` steps.

    u is the initial hidden state (B, d); a1 the (B,) bootstrap input.
    Each step feeds the previous sigmoid prediction back in as the next
    scalar input.
    """
    B = u.shape[0]
    d = dec.d
    o = output_slots
    if keep_cache:
        A = np.empty((o, B, 1))
        H = np.empty((o + 1, B, d))
        Z = np.empty((o, B, d))
        R = np.empty((o, B, d))
        RH = np.empty((o, B, d))
        HBAR = np.empty((o, B, d))
        H[0] = u
    P = np.empty((B, o))
    a = a1[:, None].astype(np.float64)
    h = u
    for t in range(o):
        h_new, cache = _cell_forward(a, h, dec)
        y = sigmoid(h_new @ head_w + head_b[0])
        P[:, t] = y
        if keep_cache:
            A[t] = a
            Z[t], R[t], RH[t], HBAR[t] = cache.z, cache.r, cache.rh, cache.hbar
            H[t + 1] = h_new
        h = h_new
        a = y[:, None]
    if not keep_cache:
        return P, None
    return P, DecodeCache(A=A, H=H, Z=Z, R=R, RH=RH, HBAR=HBAR, P=P)


def _decode_backward(
    dP: np.ndarray,
    cache: DecodeCache,
    dec: GruParams,
    head_w: np.ndarray,
    dec_grads: GruParams,
    head_w_grad: np.ndarray,
    head_b_grad: np.ndarray,
) -> np.ndarray:
    """Backward through the autoregressive decoder.

    Returns du, the gradient at the initial hidden state.  The gradient
    of each prediction flows both directly from the loss (dP) and from
    its use as the next step's input, so the loop carries da, the
    gradient with respect to the upcoming step input, backwards in time.
    """
    o, B, d = cache.Z.shape[0], cache.Z.shape[1], cache.Z.shape[2]
    da_next = np.zeros(B)  # d(loss)/d(a_{t+1}) flowing back into y_t
    dh = np.zeros((B, d))
    for t in range(o - 1, -1, -1):
        y = cache.P[:, t]
        dy = dP[:, t] + da_next
        ds = dy * y * (1.0 - y)
        head_w_grad += cache.H[t + 1].T @ ds
        head_b_grad[0] += ds.sum()
        dh = dh + ds[:, None] * head_w[None, :]
        cell_cache = GruCellCache(
            x=cache.A[t],
            h_prev=cache.H[t],
            z=cache.Z[t],
            r=cache.R[t],
            rh=cache.RH[t],
            hbar=cache.HBAR[t],
        )
        dx, dh = _cell_backward(dh, cell_cache, dec, dec_grads)
        da_next = dx[:, 0]
    # da_next now holds d(loss)/d(a_1); the bootstrap input is data, so it stops here.
    return dh


def decode(
    u: np.ndarray, last_obs: float, output_slots: int, params: DfdsParams
) -> tuple[np.ndarray, DecodeCache]:
    """Single-window decode from a fused (d_fusion,) vector."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (params.config.d_decoder,):
        raise ShapeError(f"decode expects u of shape ({params.config.d_decoder},), got {u.shape}")
    P, cache = _decode(
        u[None, :], np.array([float(last_obs)]), output_slots, params.decoder, params.head_w, params.head_b
    )
    return P[0], cache


# ---------------------------------------------------------------------------
# Full model forward/backward


@dataclass
class DfdsCache:
    """Intermediate state of one batched forward pass."""

    X_dyn: np.ndarray | None
    enc_cache: GruSeqCache | None
    static_cache: StaticEncodeCache | None
    fuse_cache: FuseCache
    decode_cache: DecodeCache
    preds: np.ndarray  # (B, o)


def _bootstrap_values(last_obs: np.ndarray, config: DfdsConfig) -> np.ndarray:
    if config.bootstrap_last_obs:
        return last_obs.astype(np.float64)
    # With occupancy information withheld the decoder starts from an
    # uninformative constant instead of the last observation.
    return np.full(last_obs.shape, 0.5)


def dfds_forward_batch(
    params: DfdsParams,
    X_dyn: np.ndarray | None,
    rows: dict[str, np.ndarray],
    last_obs: np.ndarray,
    keep_cache: bool = True,
) -> tuple[np.ndarray, DfdsCache | None]:
    """Batched forward pass from pre-encoded inputs.

    Args:
        params: model weights and configuration.
        X_dyn: dynamic feature sequences (B, input_slots, layout.dim), or
            None when the dynamic branch is off.
        rows: static profile rows per feature, each (B, output_slots).
        last_obs: (B,) last observed occupancy per window.
        keep_cache: store intermediates for the backward pass; turn off
            for inference.

    Returns:
        Predictions (B, output_slots) in (0, 1) and the cache for
        :func:`dfds_backward_batch` (None when ``keep_cache`` is off).
    """
    cfg = params.config
    parts: list[np.ndarray] = []
    enc_cache = None
    if cfg.use_dynamic:
        assert params.encoder is not None and X_dyn is not None
        e, enc_cache = _sequence_forward(X_dyn, None, params.encoder, keep_cache=keep_cache)
        parts.append(e)
    static_cache = None
    if cfg.active_static_features:
        encoded, static_cache = _encode_static(rows, params)
        parts.extend(encoded[feat] for feat in cfg.active_static_features)
    u, fuse_cache = _fuse(parts, params)
    a1 = _bootstrap_values(last_obs, cfg)
    preds, decode_cache = _decode(
        u, a1, cfg.output_slots, params.decoder, params.head_w, params.head_b, keep_cache=keep_cache
    )
    if not keep_cache:
        return preds, None
    assert decode_cache is not None
    return preds, DfdsCache(
        X_dyn=X_dyn,
        enc_cache=enc_cache,
        static_cache=static_cache,
        fuse_cache=fuse_cache,
        decode_cache=decode_cache,
        preds=preds,
    )


def dfds_backward_batch(dP: np.ndarray, cache: DfdsCache, params: DfdsParams) -> DfdsParams:
    """Batched backward pass; dP is d(loss)/d(predictions), shape (B, o)."""
    cfg = params.config
    grads = DfdsParams.zeros(cfg)
    du = _decode_backward(
        dP,
        cache.decode_cache,
        params.decoder,
        params.head_w,
        grads.decoder,
        grads.head_w,
        grads.head_b,
    )
    fc = cache.fuse_cache
    dpre = du * (fc.pre > 0.0)
    grads.fusion_W += dpre.T @ fc.v
    grads.fusion_b += dpre.sum(axis=0)
    dv = dpre @ params.fusion_W
    offset = 0
    dparts: list[np.ndarray] = []
    for width in fc.part_widths:
        dparts.append(dv[:, offset : offset + width])
        offset += width
    idx = 0
    if cfg.use_dynamic:
        de = dparts[idx]
        idx += 1
        assert params.encoder is not None and cache.enc_cache is not None and grads.encoder is not None
        _sequence_backward(de, cache.enc_cache, params.encoder, grads.encoder)
    if cfg.active_static_features:
        assert cache.static_cache is not None
        for feat in cfg.active_static_features:
            ds = dparts[idx]
            idx += 1
            dpre_s = ds * (cache.static_cache.pre[feat] > 0.0)
            grads.static_A[feat] += dpre_s.T @ cache.static_cache.rows[feat]
            grads.static_c[feat] += dpre_s.sum(axis=0)
    return grads


def window_inputs(params: DfdsParams, window: Window, rows: StaticRows) -> tuple[np.ndarray | None, dict[str, np.ndarray], np.ndarray]:
    """Encode one window into the batched forward's input arrays."""
    cfg = params.config
    if window.input_slots != cfg.input_slots or window.output_slots != cfg.output_slots:
        raise ShapeError(
            f"window horizons ({window.input_slots}, {window.output_slots}) do not match "
            f"config ({cfg.input_slots}, {cfg.output_slots})"
        )
    X = encode_window_inputs([window], cfg.dynamic_layout) if cfg.use_dynamic else None
    row_map = {
        "mean": np.asarray(rows.mean, dtype=np.float64)[None, :],
        "q25": np.asarray(rows.q25, dtype=np.float64)[None, :],
        "q75": np.asarray(rows.q75, dtype=np.float64)[None, :],
    }
    row_map = {feat: row_map[feat] for feat in cfg.active_static_features}
    last_obs = np.array([float(window.last_observed)])
    return X, row_map, last_obs


def dfds_forward(window: Window, static_rows: StaticRows, params: DfdsParams) -> tuple[np.ndarray, DfdsCache]:
    """Forward pass for one window; returns (output_slots,) predictions and a cache."""
    X, rows, last_obs = window_inputs(params, window, static_rows)
    preds, cache = dfds_forward_batch(params, X, rows, last_obs)
    return preds[0], cache


def dfds_backward(cache: DfdsCache, targets: np.ndarray, params: DfdsParams) -> DfdsParams:
    """Gradients of the single-window BCE loss with respect to all parameters."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[None, :]
    _, dP = bce_loss_grad(cache.preds, targets)
    return dfds_backward_batch(dP, cache, params)


# ---------------------------------------------------------------------------
# Loss


def bce_loss(preds: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].

    Args:
        preds: predicted probabilities, any shape.
        targets: 0/1 values of the same shape.
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ShapeError(f"preds shape {preds.shape} does not match targets {targets.shape}")
    if preds.size == 0:
        raise ShapeError("bce_loss needs at least one prediction")
    bad = (targets != 0.0) & (targets != 1.0)
    if bad.any():
        raise ShapeError("targets must be 0 or 1")
    p = np.clip(preds, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(-np.mean(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)))


def bce_loss_grad(preds: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """BCE loss and its gradient with respect to the raw predictions.

    The gradient is zero wherever the clamp is active, matching the
    piecewise-constant loss there.
    """
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ShapeError(f"preds shape {preds.shape} does not match targets {targets.shape}")
    p = np.clip(preds, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = float(-np.mean(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)))
    inside = (preds > BCE_CLAMP) & (preds < 1.0 - BCE_CLAMP)
    dP = np.where(inside, (p - targets) / (p * (1.0 - p)), 0.0) / preds.size
    return loss, dP
