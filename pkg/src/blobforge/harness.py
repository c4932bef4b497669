"""Dual-branch denoising toy with zero-initialized fusion gates.

A desk-scale stand-in for a two-stream latent denoiser: the foreground
branch encodes (latent, opacity, feature) channel stacks, the background
branch encodes (latent, opacity) stacks, and per-level gates inject
foreground features into the background stream, scaled by a global fusion
weight.  The gates start at exactly zero, so a freshly initialized model
reproduces the background-only prediction bit for bit at any fusion weight.

The backbone is deliberately tiny and fully linear: per-level channel maps
with 2x average pooling on the way down, nearest-neighbor upsampling with
skip connections on the way back up, and a linear prediction head read off
the noisy half of the width-concatenated input.  Everything stays
analytically differentiable, so the hand-written gradients can be verified
against central finite differences to near machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from blobforge.blob import DomainError
from blobforge.fields import FeatureMap, FieldMap

__all__ = [
    "LatentTensor",
    "DiffusionSchedule",
    "InContextInput",
    "HarnessState",
    "HarnessBatch",
    "LossBreakdown",
    "DropoutFlags",
    "diffuse_forward",
    "build_fg_input",
    "build_bg_input",
    "fg_features",
    "bg_prediction",
    "fused_prediction",
    "denoise_loss",
    "identity_loss",
    "loss_total",
    "lambda_schedule",
    "draw_dropout_flags",
    "apply_dropout",
    "analytic_gradients",
    "grad_check",
    "random_batch",
    "run_harness_check",
]


@dataclass(frozen=True)
class LatentTensor:
    """c x h x w array of latent values; finite, positive dimensions."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or min(v.shape) < 1:
            raise DomainError(f"latent shape {v.shape} is not a positive (c, h, w)")
        if not np.all(np.isfinite(v)):
            raise DomainError("latent values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return int(self.values.shape[0])

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-step cumulative signal fractions, strictly decreasing in (0, 1]."""

    alpha_bar: tuple[float, ...]

    def __post_init__(self) -> None:
        ab = tuple(float(a) for a in self.alpha_bar)
        if not ab:
            raise DomainError("schedule needs at least one step")
        for a in ab:
            if not (math.isfinite(a) and 0.0 < a <= 1.0):
                raise DomainError(f"signal fraction {a} outside (0, 1]")
        if any(b >= a for a, b in zip(ab, ab[1:])):
            raise DomainError("signal fractions must be strictly decreasing")
        object.__setattr__(self, "alpha_bar", ab)

    def __len__(self) -> int:
        return len(self.alpha_bar)

    @classmethod
    def linear(cls, steps: int = 10, start: float = 1.0, end: float = 0.1) -> "DiffusionSchedule":
        return cls(tuple(float(a) for a in np.linspace(start, end, steps)))


@dataclass(frozen=True)
class InContextInput:
    """Channel-stacked (condition | noisy) pair concatenated along width.

    `values` is (C, h, 2w): columns [0, w) hold the condition half and
    [w, 2w) the noisy half.  `groups` names the channel blocks in order,
    e.g. (("latent", c), ("opacity", 1), ("feature", d)), so both halves
    and every block are recoverable exactly.
    """

    values: np.ndarray
    groups: tuple[tuple[str, int], ...]
    frame_width: int

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise DomainError(f"expected (C, h, 2w) values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("input values must be finite")
        if self.frame_width < 1 or v.shape[2] != 2 * self.frame_width:
            raise DomainError(
                f"width {v.shape[2]} does not equal twice the frame width {self.frame_width}"
            )
        groups = tuple((str(n), int(k)) for n, k in self.groups)
        names = [n for n, _ in groups]
        if len(set(names)) != len(names):
            raise DomainError("channel group names must be unique")
        if any(k < 1 for _, k in groups):
            raise DomainError("channel groups must be non-empty")
        if sum(k for _, k in groups) != v.shape[0]:
            raise DomainError(
                f"channel groups sum to {sum(k for _, k in groups)} but values have {v.shape[0]} channels"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "groups", groups)

    @property
    def channels(self) -> int:
        return int(self.values.shape[0])

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    def half(self, which: str) -> np.ndarray:
        if which == "condition":
            return self.values[:, :, : self.frame_width]
        if which == "noisy":
            return self.values[:, :, self.frame_width :]
        raise DomainError(f"unknown half {which!r}")

    def group_slice(self, name: str) -> slice:
        lo = 0
        for n, k in self.groups:
            if n == name:
                return slice(lo, lo + k)
            lo += k
        raise DomainError(f"no channel group named {name!r}")

    def block(self, which: str, name: str) -> np.ndarray:
        return self.half(which)[self.group_slice(name)]


def diffuse_forward(
    z0: LatentTensor, t: int, eps: LatentTensor, schedule: DiffusionSchedule
) -> LatentTensor:
    """Mix clean latent and noise at step t: sqrt(a_t)*z0 + sqrt(1 - a_t)*eps."""
    if z0.values.shape != eps.values.shape:
        raise DomainError(
            f"latent shape {z0.values.shape} does not match noise shape {eps.values.shape}"
        )
    if not 1 <= t <= len(schedule):
        raise DomainError(f"step {t} outside [1, {len(schedule)}]")
    a = schedule.alpha_bar[t - 1]
    return LatentTensor(math.sqrt(a) * z0.values + math.sqrt(1.0 - a) * eps.values)


def _check_frame(z: LatentTensor, oc: FieldMap) -> None:
    if (z.height, z.width) != (oc.height, oc.width):
        raise DomainError(
            f"latent frame {(z.height, z.width)} does not match field {(oc.height, oc.width)}"
        )


def build_fg_input(
    z1: LatentTensor, oc1: FieldMap, f1: FeatureMap, zt1: LatentTensor
) -> InContextInput:
    """Stack (latent, opacity, feature) channels; the condition half carries
    the clean latent z1, the noisy half carries zt1."""
    _check_frame(z1, oc1)
    if zt1.values.shape != z1.values.shape:
        raise DomainError("noisy latent shape does not match the clean latent")
    if (f1.height, f1.width) != (z1.height, z1.width) or f1.depth < 1:
        raise DomainError("feature map does not match the latent frame")
    oc = oc1.values[None, :, :]
    feat = np.moveaxis(f1.values, 2, 0)
    cond = np.concatenate([z1.values, oc, feat], axis=0)
    noisy = np.concatenate([zt1.values, oc, feat], axis=0)
    groups = (("latent", z1.channels), ("opacity", 1), ("feature", f1.depth))
    return InContextInput(np.concatenate([cond, noisy], axis=2), groups, z1.width)


def build_bg_input(z0: LatentTensor, oc0: FieldMap, zt: LatentTensor) -> InContextInput:
    """Stack (latent, opacity) channels; condition half z0, noisy half zt."""
    _check_frame(z0, oc0)
    if zt.values.shape != z0.values.shape:
        raise DomainError("noisy latent shape does not match the clean latent")
    oc = oc0.values[None, :, :]
    cond = np.concatenate([z0.values, oc], axis=0)
    noisy = np.concatenate([zt.values, oc], axis=0)
    groups = (("latent", z0.channels), ("opacity", 1))
    return InContextInput(np.concatenate([cond, noisy], axis=2), groups, z0.width)


@dataclass
class HarnessState:
    """Parameters of the toy dual-branch denoiser.

    Per level: one channel map per branch plus a fusion gate (weight and
    bias, both exactly zero at initialization).  The two prediction heads
    map the finest decoder state back to latent channels.  `omega` scales
    every gate's contribution.  The toy maps do not condition on the
    diffusion step.
    """

    levels: int
    hidden: int
    latent_channels: int
    feature_dim: int
    fg_weights: list[np.ndarray]
    fg_biases: list[np.ndarray]
    bg_weights: list[np.ndarray]
    bg_biases: list[np.ndarray]
    gate_weights: list[np.ndarray]
    gate_biases: list[np.ndarray]
    fg_head_weight: np.ndarray
    fg_head_bias: np.ndarray
    bg_head_weight: np.ndarray
    bg_head_bias: np.ndarray
    omega: float
    schedule: DiffusionSchedule = field(default_factory=DiffusionSchedule.linear)
    p_omega: float = 0.1
    p_feature: float = 0.1
    p_vae: float = 0.1
    lambda_start: float = 1.0
    lambda_end: float = 0.6

    @classmethod
    def initialize(
        cls,
        seed: int,
        *,
        latent_channels: int = 2,
        feature_dim: int = 3,
        hidden: int = 4,
        levels: int = 2,
        omega: float = 1.0,
        steps: int = 10,
    ) -> "HarnessState":
        if min(latent_channels, feature_dim, hidden, levels) < 1:
            raise DomainError("channel counts and level count must be positive")
        if not 0.0 <= omega <= 1.0:
            raise DomainError(f"fusion weight {omega} outside [0, 1]")
        rng = np.random.default_rng(seed)

        def lin(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray]:
            w = rng.normal(0.0, 1.0 / math.sqrt(n_in), size=(n_out, n_in))
            b = rng.normal(0.0, 0.05, size=n_out)
            return w, b

        fg_in = latent_channels + 1 + feature_dim
        bg_in = latent_channels + 1
        fg_w: list[np.ndarray] = []
        fg_b: list[np.ndarray] = []
        bg_w: list[np.ndarray] = []
        bg_b: list[np.ndarray] = []
        for i in range(levels):
            w, b = lin(hidden, fg_in if i == 0 else hidden)
            fg_w.append(w)
            fg_b.append(b)
        for i in range(levels):
            w, b = lin(hidden, bg_in if i == 0 else hidden)
            bg_w.append(w)
            bg_b.append(b)
        fgh_w, fgh_b = lin(latent_channels, hidden)
        bgh_w, bgh_b = lin(latent_channels, hidden)
        return cls(
            levels=levels,
            hidden=hidden,
            latent_channels=latent_channels,
            feature_dim=feature_dim,
            fg_weights=fg_w,
            fg_biases=fg_b,
            bg_weights=bg_w,
            bg_biases=bg_b,
            gate_weights=[np.zeros((hidden, hidden)) for _ in range(levels)],
            gate_biases=[np.zeros(hidden) for _ in range(levels)],
            fg_head_weight=fgh_w,
            fg_head_bias=fgh_b,
            bg_head_weight=bgh_w,
            bg_head_bias=bgh_b,
            omega=float(omega),
            schedule=DiffusionSchedule.linear(steps),
        )

    def copy(self) -> "HarnessState":
        return replace(
            self,
            fg_weights=[w.copy() for w in self.fg_weights],
            fg_biases=[b.copy() for b in self.fg_biases],
            bg_weights=[w.copy() for w in self.bg_weights],
            bg_biases=[b.copy() for b in self.bg_biases],
            gate_weights=[w.copy() for w in self.gate_weights],
            gate_biases=[b.copy() for b in self.gate_biases],
            fg_head_weight=self.fg_head_weight.copy(),
            fg_head_bias=self.fg_head_bias.copy(),
            bg_head_weight=self.bg_head_weight.copy(),
            bg_head_bias=self.bg_head_bias.copy(),
        )


def _channel_map(w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.tensordot(w, x, axes=([1], [0])) + b[:, None, None]


def _avg_pool2(x: np.ndarray) -> np.ndarray:
    _, h, wdt = x.shape
    if h % 2 or wdt % 2:
        raise DomainError(f"spatial dims {(h, wdt)} must be even to pool")
    return 0.25 * (x[:, 0::2, 0::2] + x[:, 0::2, 1::2] + x[:, 1::2, 0::2] + x[:, 1::2, 1::2])


def _nearest_up2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def _sum_pool2(g: np.ndarray) -> np.ndarray:
    # adjoint of _nearest_up2
    return g[:, 0::2, 0::2] + g[:, 0::2, 1::2] + g[:, 1::2, 0::2] + g[:, 1::2, 1::2]


def _encode(values: np.ndarray, weights: list[np.ndarray], biases: list[np.ndarray]) -> list[np.ndarray]:
    feats: list[np.ndarray] = []
    x = values
    for i, (w, b) in enumerate(zip(weights, biases)):
        if i > 0:
            x = _avg_pool2(x)
        x = _channel_map(w, b, x)
        feats.append(x)
    return feats


def _decode(feats: list[np.ndarray]) -> np.ndarray:
    d = feats[-1]
    for f in reversed(feats[:-1]):
        d = _nearest_up2(d) + f
    return d


def fg_features(
    x1: InContextInput, t: int, state: HarnessState
) -> tuple[list[np.ndarray], LatentTensor]:
    """Per-level foreground features plus the branch's own noise prediction.

    Level i has spatial extent (h, 2w) / 2**i; the prediction is read off
    the noisy half, so it has the latent frame's shape.
    """
    feats = _encode(x1.values, state.fg_weights, state.fg_biases)
    full = _channel_map(state.fg_head_weight, state.fg_head_bias, _decode(feats))
    return feats, LatentTensor(full[:, :, x1.frame_width :])


def bg_prediction(x0: InContextInput, t: int, state: HarnessState) -> LatentTensor:
    """Background-only noise prediction (no foreground injection)."""
    feats = _encode(x0.values, state.bg_weights, state.bg_biases)
    full = _channel_map(state.bg_head_weight, state.bg_head_bias, _decode(feats))
    return LatentTensor(full[:, :, x0.frame_width :])


def fused_prediction(
    x0: InContextInput, x1: InContextInput, t: int, state: HarnessState
) -> LatentTensor:
    """Background prediction with gated foreground features added per level.

    fused_i = bg_i + omega * (Z_i fg_i + z_i); with every gate at zero this
    reduces to the background-only path bit for bit, for any omega.
    """
    if x0.height != x1.height or x0.frame_width != x1.frame_width:
        raise DomainError("foreground and background inputs must share a frame")
    e_bg = _encode(x0.values, state.bg_weights, state.bg_biases)
    e_fg = _encode(x1.values, state.fg_weights, state.fg_biases)
    fused = [
        b + state.omega * _channel_map(zw, zb, f)
        for b, f, zw, zb in zip(e_bg, e_fg, state.gate_weights, state.gate_biases)
    ]
    full = _channel_map(state.bg_head_weight, state.bg_head_bias, _decode(fused))
    return LatentTensor(full[:, :, x0.frame_width :])


@dataclass(frozen=True)
class HarnessBatch:
    """One training example: both in-context inputs, true noise, fg mask."""

    fg_input: InContextInput
    bg_input: InContextInput
    eps: LatentTensor
    mask: np.ndarray
    t: int

    def __post_init__(self) -> None:
        m = np.asarray(self.mask, dtype=float)
        if m.shape != (self.eps.height, self.eps.width):
            raise DomainError(
                f"mask shape {m.shape} does not match the latent frame "
                f"{(self.eps.height, self.eps.width)}"
            )
        if not np.all((m == 0.0) | (m == 1.0)):
            raise DomainError("mask must be binary")
        for name, x in (("fg", self.fg_input), ("bg", self.bg_input)):
            if x.height != self.eps.height or x.frame_width != self.eps.width:
                raise DomainError(f"{name} input frame does not match the noise tensor")
            k = x.group_slice("latent")
            if k.stop - k.start != self.eps.channels:
                raise DomainError(f"{name} latent block does not match the noise channels")
        if int(self.t) < 1:
            raise DomainError("step index must be >= 1")
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "t", int(self.t))


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    denoise: float
    identity: float
    lambda_id: float

    def __post_init__(self) -> None:
        want = self.denoise + self.lambda_id * self.identity
        if abs(self.total - want) > 1e-12 * max(1.0, abs(want)):
            raise DomainError("total does not decompose into denoise + lambda * identity")

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "denoise": self.denoise,
            "identity": self.identity,
            "lambda_id": self.lambda_id,
        }


def denoise_loss(eps: LatentTensor, pred: LatentTensor) -> float:
    """Mean squared error between true and predicted noise."""
    if eps.values.shape != pred.values.shape:
        raise DomainError("prediction shape does not match the noise tensor")
    r = eps.values - pred.values
    return float(np.mean(r * r))


def identity_loss(eps: LatentTensor, fg_pred: LatentTensor, mask: np.ndarray) -> float:
    """Squared residual restricted to the mask, divided by the full element
    count (the denominator does not shrink with the mask)."""
    if eps.values.shape != fg_pred.values.shape:
        raise DomainError("prediction shape does not match the noise tensor")
    m = np.asarray(mask, dtype=float)
    if m.shape != (eps.height, eps.width):
        raise DomainError(f"mask shape {m.shape} does not match {(eps.height, eps.width)}")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise DomainError("mask must be binary")
    r = m[None, :, :] * (eps.values - fg_pred.values)
    return float(np.sum(r * r) / eps.values.size)


def loss_total(batch: HarnessBatch, state: HarnessState, lambda_id: float) -> LossBreakdown:
    """Denoising objective plus the weighted masked identity objective."""
    fused = fused_prediction(batch.bg_input, batch.fg_input, batch.t, state)
    _, fg_pred = fg_features(batch.fg_input, batch.t, state)
    denoise = denoise_loss(batch.eps, fused)
    ident = identity_loss(batch.eps, fg_pred, batch.mask)
    return LossBreakdown(
        total=denoise + lambda_id * ident,
        denoise=denoise,
        identity=ident,
        lambda_id=float(lambda_id),
    )


def lambda_schedule(step: int, total_steps: int, start: float = 1.0, end: float = 0.6) -> float:
    """Linear decay of the identity-loss weight; endpoints are exact."""
    if total_steps < 1:
        raise DomainError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise DomainError(f"step {step} outside [0, {total_steps}]")
    if step == 0:
        return float(start)
    if step == total_steps:
        return float(end)
    frac = step / total_steps
    return start + (end - start) * frac


@dataclass(frozen=True)
class DropoutFlags:
    omega_dropped: bool
    feature_dropped: bool
    latent_dropped: bool

    def to_json_dict(self) -> dict:
        return {
            "omega_dropped": self.omega_dropped,
            "feature_dropped": self.feature_dropped,
            "latent_dropped": self.latent_dropped,
        }


def draw_dropout_flags(
    seed: int, p_omega: float = 0.1, p_feature: float = 0.1, p_vae: float = 0.1
) -> DropoutFlags:
    """Three independent Bernoulli draws in a fixed order from one seeded rng."""
    for p in (p_omega, p_feature, p_vae):
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"probability {p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    return DropoutFlags(
        omega_dropped=bool(rng.random() < p_omega),
        feature_dropped=bool(rng.random() < p_feature),
        latent_dropped=bool(rng.random() < p_vae),
    )


def apply_dropout(
    omega: float,
    x1: InContextInput,
    seed: int,
    p_omega: float = 0.1,
    p_feature: float = 0.1,
    p_vae: float = 0.1,
) -> tuple[float, InContextInput, DropoutFlags]:
    """Randomly disable fusion (omega -> 0), zero the feature block, or zero
    the condition-half latent of the foreground input.

    The noisy-half latent is the quantity being denoised and is never
    dropped.  Deterministic per (seed, probabilities).
    """
    x1.group_slice("latent")
    x1.group_slice("feature")
    flags = draw_dropout_flags(seed, p_omega, p_feature, p_vae)
    new_omega = 0.0 if flags.omega_dropped else float(omega)
    if not (flags.feature_dropped or flags.latent_dropped):
        return new_omega, x1, flags
    values = x1.values.copy()
    if flags.feature_dropped:
        values[x1.group_slice("feature"), :, :] = 0.0
    if flags.latent_dropped:
        values[x1.group_slice("latent"), :, : x1.frame_width] = 0.0
    return new_omega, InContextInput(values, x1.groups, x1.frame_width), flags


def analytic_gradients(
    batch: HarnessBatch, state: HarnessState, lambda_id: float
) -> dict[str, "np.ndarray | float"]:
    """Hand-derived gradients of the total loss for every fusion parameter
    (gate weights/biases, omega) and the foreground prediction head.

    The denoising term reaches the gates through the shared decoder; the
    identity term reaches only the foreground head, so its gradient block
    scales linearly with lambda_id while the gate blocks ignore it.
    """
    x0, x1 = batch.bg_input, batch.fg_input
    w = x0.frame_width
    n = batch.eps.values.size
    e_bg = _encode(x0.values, state.bg_weights, state.bg_biases)
    e_fg = _encode(x1.values, state.fg_weights, state.fg_biases)
    gates = [
        _channel_map(zw, zb, f)
        for zw, zb, f in zip(state.gate_weights, state.gate_biases, e_fg)
    ]
    fused = [b + state.omega * g for b, g in zip(e_bg, gates)]
    d = _decode(fused)
    full = _channel_map(state.bg_head_weight, state.bg_head_bias, d)
    pred = full[:, :, w:]

    g_full = np.zeros_like(full)
    g_full[:, :, w:] = (2.0 / n) * (pred - batch.eps.values)
    g_d = np.tensordot(state.bg_head_weight, g_full, axes=([0], [0]))

    # walk the decoder back down: the finest level sees g_d directly, each
    # deeper level the summed-pool adjoint of the upsampling above it
    grads: dict[str, "np.ndarray | float"] = {}
    g_omega = 0.0
    for i in range(len(fused)):
        grads[f"gate_weight_{i}"] = state.omega * np.einsum("ayx,byx->ab", g_d, e_fg[i])
        grads[f"gate_bias_{i}"] = state.omega * g_d.sum(axis=(1, 2))
        g_omega += float(np.sum(g_d * gates[i]))
        if i < len(fused) - 1:
            g_d = _sum_pool2(g_d)
    grads["omega"] = g_omega

    d_fg = _decode(e_fg)
    fg_full = _channel_map(state.fg_head_weight, state.fg_head_bias, d_fg)
    fg_pred = fg_full[:, :, w:]
    m = batch.mask[None, :, :]
    g_fg_full = np.zeros_like(fg_full)
    g_fg_full[:, :, w:] = lambda_id * (2.0 / n) * m * (fg_pred - batch.eps.values)
    grads["fg_head_weight"] = np.einsum("ayx,byx->ab", g_fg_full, d_fg)
    grads["fg_head_bias"] = g_fg_full.sum(axis=(1, 2))
    return grads


def grad_check(
    state: HarnessState,
    batch: HarnessBatch,
    lambda_id: float = 1.0,
    eps_fd: float = 1e-5,
) -> dict:
    """Compare analytic gradients against central finite differences.

    Covers every gate weight and bias, the fusion weight, and the fg head.
    Returns {"max_rel_error", "per_parameter"}; relative error is
    |a - f| / max(|a|, |f|, 1e-8) entry-wise.
    """
    work = state.copy()
    analytic = analytic_gradients(batch, work, lambda_id)

    def loss_at() -> float:
        val = loss_total(batch, work, lambda_id).total
        if not math.isfinite(val):
            raise DomainError("non-finite loss during gradient check")
        return val

    def rel(a: float, f: float) -> float:
        return abs(a - f) / max(abs(a), abs(f), 1e-8)

    per: dict[str, float] = {}

    def check_array(name: str, arr: np.ndarray) -> None:
        grad = analytic[name]
        worst = 0.0
        for idx in np.ndindex(arr.shape):
            keep = arr[idx]
            arr[idx] = keep + eps_fd
            hi = loss_at()
            arr[idx] = keep - eps_fd
            lo = loss_at()
            arr[idx] = keep
            worst = max(worst, rel(float(grad[idx]), (hi - lo) / (2.0 * eps_fd)))
        per[name] = worst

    for i in range(work.levels):
        check_array(f"gate_weight_{i}", work.gate_weights[i])
        check_array(f"gate_bias_{i}", work.gate_biases[i])
    check_array("fg_head_weight", work.fg_head_weight)
    check_array("fg_head_bias", work.fg_head_bias)

    keep = work.omega
    work.omega = keep + eps_fd
    hi = loss_at()
    work.omega = keep - eps_fd
    lo = loss_at()
    work.omega = keep
    per["omega"] = rel(float(analytic["omega"]), (hi - lo) / (2.0 * eps_fd))

    return {"max_rel_error": max(per.values()), "per_parameter": per}


def random_batch(
    seed: int,
    *,
    latent_channels: int = 2,
    feature_dim: int = 3,
    height: int = 8,
    width: int = 8,
    schedule: "DiffusionSchedule | None" = None,
    t: int = 3,
    mask_fill: float = 0.4,
) -> HarnessBatch:
    """Seeded synthetic batch: normal latents, uniform opacities, random mask."""
    if schedule is None:
        schedule = DiffusionSchedule.linear()
    rng = np.random.default_rng(seed)
    c, d, h, w = latent_channels, feature_dim, height, width
    z0 = LatentTensor(rng.normal(size=(c, h, w)))
    z1 = LatentTensor(rng.normal(size=(c, h, w)))
    eps = LatentTensor(rng.normal(size=(c, h, w)))
    zt = diffuse_forward(z0, t, eps, schedule)
    zt1 = diffuse_forward(z1, t, eps, schedule)
    oc0 = FieldMap(w, h, rng.uniform(0.0, 0.5, size=(h, w)), "opacity")
    oc1 = FieldMap(w, h, rng.uniform(0.0, 0.5, size=(h, w)), "opacity")
    f1 = FeatureMap(w, h, d, rng.normal(size=(h, w, d)))
    mask = (rng.random((h, w)) < mask_fill).astype(float)
    return HarnessBatch(
        fg_input=build_fg_input(z1, oc1, f1, zt1),
        bg_input=build_bg_input(z0, oc0, zt),
        eps=eps,
        mask=mask,
        t=t,
    )


def run_harness_check(seed: int = 0, size: int = 8, levels: int = 2) -> dict:
    """Evaluate every harness invariant plus the finite-difference table.

    Returns a JSON-ready report; "passed" aggregates all checks.
    """
    state = HarnessState.initialize(seed, levels=levels)
    batch = random_batch(seed + 1, height=size, width=size)
    checks: dict = {}

    bg = bg_prediction(batch.bg_input, batch.t, state)
    zero_ok = True
    for om in (0.0, 0.3, 1.0):
        state.omega = om
        fused = fused_prediction(batch.bg_input, batch.fg_input, batch.t, state)
        zero_ok = zero_ok and fused.values.tobytes() == bg.values.tobytes()
    checks["zero_init_equivalence"] = bool(zero_ok)

    lb = loss_total(batch, state, lambda_schedule(3, 10))
    checks["loss_decomposition_residual"] = abs(
        lb.total - (lb.denoise + lb.lambda_id * lb.identity)
    )

    _, fg_pred = fg_features(batch.fg_input, batch.t, state)
    rng = np.random.default_rng(seed + 2)
    bump = rng.normal(size=fg_pred.values.shape) * (batch.mask[None, :, :] == 0.0)
    base = identity_loss(batch.eps, fg_pred, batch.mask)
    moved = identity_loss(batch.eps, LatentTensor(fg_pred.values + bump), batch.mask)
    checks["mask_annihilation_delta"] = abs(moved - base)

    checks["lambda_endpoints"] = bool(
        lambda_schedule(0, 7) == 1.0 and lambda_schedule(7, 7) == 0.6
    )

    f1 = draw_dropout_flags(seed, 0.1, 0.1, 0.1)
    f2 = draw_dropout_flags(seed, 0.1, 0.1, 0.1)
    checks["dropout_deterministic"] = bool(f1 == f2)
    hits = np.zeros(3)
    trials = 10_000
    for s in range(trials):
        fl = draw_dropout_flags(s, 0.1, 0.1, 0.1)
        hits += (fl.omega_dropped, fl.feature_dropped, fl.latent_dropped)
    checks["dropout_rates"] = [float(r) for r in hits / trials]

    work = state.copy()
    grng = np.random.default_rng(seed + 3)
    for zw, zb in zip(work.gate_weights, work.gate_biases):
        zw[...] = grng.normal(0.0, 0.3, size=zw.shape)
        zb[...] = grng.normal(0.0, 0.3, size=zb.shape)
    work.omega = 0.7
    table = grad_check(work, batch, lambda_id=0.8)
    checks["grad_max_rel_error"] = table["max_rel_error"]
    checks["grad_table"] = table["per_parameter"]

    passed = (
        checks["zero_init_equivalence"]
        and checks["loss_decomposition_residual"] <= 1e-12
        and checks["mask_annihilation_delta"] == 0.0
        and checks["lambda_endpoints"]
        and checks["dropout_deterministic"]
        and all(abs(r - 0.1) <= 0.02 for r in checks["dropout_rates"])
        and checks["grad_max_rel_error"] <= 1e-4
    )
    return {"seed": seed, "size": size, "levels": levels, "passed": bool(passed), "checks": checks}
