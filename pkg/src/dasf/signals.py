"""Synthetic multi-channel signal models and batch statistics.

Two stochastic streams are supported. The primary stream mixes latent
sources into M channels and adds white noise,

    y(t) = mix_y s(t) + n(t),

and an optional second stream adds extra mixed components on top of it,

    v(t) = mix_v r(t) + y(t).

A drifting variant replaces the mixture by a single time-varying steering
vector, y(t) = p(t) s(t) + n(t) with p(t) = p0 + lambda(t) * delta, used for
tracking studies. All draws are i.i.d. Gaussian and seed-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

__all__ = [
    "LambdaSchedule",
    "DriftSpec",
    "SignalModel",
    "SampleBatch",
    "sample_stationary",
    "sample_adaptive",
    "estimate_covariance",
    "estimate_cross",
    "mean_squared_norm",
    "mean_squared_error",
]


@dataclass(frozen=True)
class LambdaSchedule:
    """Piecewise-linear mixing weight t -> [0, 1], held constant past the ends."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ValueError("schedule needs matching 1-d times and values")
        if np.any(np.diff(t) < 0):
            raise ValueError("schedule times must be non-decreasing")
        if np.any((v < 0) | (v > 1)):
            raise ValueError("schedule values must lie in [0, 1]")
        object.__setattr__(self, "times", tuple(float(x) for x in t))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


@dataclass(frozen=True)
class DriftSpec:
    """Steering drift between p0 and p0 + delta, paced by a lambda schedule."""

    p0: np.ndarray      # (M,) base steering vector
    delta: np.ndarray   # (M,) drift direction
    schedule: LambdaSchedule

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float).ravel()
        delta = np.asarray(self.delta, dtype=float).ravel()
        if p0.shape != delta.shape:
            raise ValueError("p0 and delta must have the same length")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "delta", delta)


@dataclass(frozen=True)
class SignalModel:
    """Network-wide signal description, including the per-node channel split.

    mix_y : (M, S) mixing of the latent sources into the primary stream,
            or None when ``drift`` provides a time-varying steering vector.
    mix_v : (M, R) extra mixing for the second stream, or None to disable it.
    """

    channels: tuple[int, ...]
    source_var: float
    noise_var: float
    mix_y: np.ndarray | None = None
    mix_v: np.ndarray | None = None
    drift: DriftSpec | None = None

    def __post_init__(self):
        chans = tuple(int(m) for m in self.channels)
        if any(m < 1 for m in chans):
            raise ValueError("channel counts must be positive")
        object.__setattr__(self, "channels", chans)
        m_total = sum(chans)
        if (self.mix_y is None) == (self.drift is None):
            raise ValueError("exactly one of mix_y and drift must be set")
        if self.source_var < 0 or self.noise_var < 0:
            raise ValueError("variances must be non-negative")
        if self.mix_y is not None:
            mix = np.atleast_2d(np.asarray(self.mix_y, dtype=float))
            if mix.shape[0] != m_total:
                raise ValueError(f"mix_y must have {m_total} rows")
            object.__setattr__(self, "mix_y", mix)
        if self.drift is not None and self.drift.p0.size != m_total:
            raise ValueError(f"drift vectors must have length {m_total}")
        if self.mix_v is not None:
            if self.drift is not None:
                raise ValueError("second stream is not supported with drift")
            mv = np.atleast_2d(np.asarray(self.mix_v, dtype=float))
            if mv.shape[0] != m_total:
                raise ValueError(f"mix_v must have {m_total} rows")
            object.__setattr__(self, "mix_v", mv)

    @property
    def total_channels(self) -> int:
        return sum(self.channels)


@dataclass(frozen=True)
class SampleBatch:
    """One batch of N samples, stacked network-wide with per-node block views.

    Vertically stacking block(1..K) reproduces ``y`` exactly, the blocks are
    row views into the same array.
    """

    y: np.ndarray                 # (M, N) primary stream
    channels: tuple[int, ...]
    t: int = 0                    # sample index of the first column
    v: np.ndarray | None = None   # (M, N) second stream
    s: np.ndarray | None = None   # (S, N) latent target rows

    def __post_init__(self):
        offsets = np.concatenate([[0], np.cumsum(self.channels)])
        if self.y.shape[0] != offsets[-1]:
            raise ValueError("row count does not match the channel split")
        object.__setattr__(self, "_offsets", offsets)

    @property
    def n_samples(self) -> int:
        return self.y.shape[1]

    def _rows(self, node: int) -> slice:
        return slice(int(self._offsets[node - 1]), int(self._offsets[node]))

    def block(self, node: int) -> np.ndarray:
        return self.y[self._rows(node)]

    def v_block(self, node: int) -> np.ndarray:
        if self.v is None:
            raise ValueError("batch has no second stream")
        return self.v[self._rows(node)]

    def to_csv(self, path, stream: str = "y") -> None:
        """Dump one stream as CSV, rows = channels, columns = samples."""
        data = {"y": self.y, "v": self.v, "s": self.s}[stream]
        if data is None:
            raise ValueError(f"batch has no '{stream}' stream")
        np.savetxt(path, data, delimiter=",")


def sample_stationary(model: SignalModel, t: int, n_samples: int, rng_seed=None) -> SampleBatch:
    """Draw one stationary batch. Draw order is sources, extras, noise."""
    if model.drift is not None:
        raise ValueError("model has a drift spec, use sample_adaptive")
    rng = np.random.default_rng(rng_seed)
    m_total = model.total_channels
    s = math.sqrt(model.source_var) * rng.standard_normal((model.mix_y.shape[1], n_samples))
    r = None
    if model.mix_v is not None:
        r = math.sqrt(model.source_var) * rng.standard_normal((model.mix_v.shape[1], n_samples))
    noise = math.sqrt(model.noise_var) * rng.standard_normal((m_total, n_samples))
    y = model.mix_y @ s + noise
    v = y + model.mix_v @ r if r is not None else None
    return SampleBatch(y=y, channels=model.channels, t=int(t), v=v, s=s)


def sample_adaptive(model: SignalModel, t: int, n_samples: int, rng_seed=None) -> SampleBatch:
    """Draw one batch starting at sample index ``t``.

    Without drift this is a fresh stationary batch. With drift, each column
    tau uses the steering vector p0 + lambda(tau) * delta, so the batch picks
    up whatever portion of the schedule it covers.
    """
    if model.drift is None:
        return sample_stationary(model, t, n_samples, rng_seed)
    rng = np.random.default_rng(rng_seed)
    m_total = model.total_channels
    tau = np.arange(t, t + n_samples)
    lam = model.drift.schedule(tau)
    s = math.sqrt(model.source_var) * rng.standard_normal((1, n_samples))
    noise = math.sqrt(model.noise_var) * rng.standard_normal((m_total, n_samples))
    steering = model.drift.p0[:, None] + lam[None, :] * model.drift.delta[:, None]
    y = steering * s + noise
    return SampleBatch(y=y, channels=model.channels, t=int(t), s=s)


def estimate_covariance(y: np.ndarray) -> np.ndarray:
    """Sample covariance Y Y^T / N of a zero-mean (M, N) batch."""
    return (y @ y.T) / y.shape[1]


def estimate_cross(y: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Sample cross-correlation Y D^T / N between a batch and (L, N) target rows."""
    target = np.atleast_2d(target)
    return (y @ target.T) / y.shape[1]


def mean_squared_norm(z: np.ndarray) -> float:
    """Batch estimate of E||z(t)||^2, the direct matrix form ||Z||_F^2 / N."""
    return float(np.sum(z * z)) / z.shape[1]


def mean_squared_error(target: np.ndarray, z: np.ndarray) -> float:
    """Batch estimate of E||d(t) - z(t)||^2."""
    d = np.atleast_2d(target) - z
    return float(np.sum(d * d)) / z.shape[1]
