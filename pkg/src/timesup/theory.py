"""Expected cross-modal cosine under a low-dimensional Gaussian modality model.

Each modality is a fixed ambient mean plus i.i.d. Gaussian noise supported on
its first `manifold_dim` coordinates.  The closed form predicts the expected
cosine between independent samples of two such modalities as

    <mu_a, mu_b> / (sqrt(||mu_a||^2 + m*sigma_a^2) * sqrt(||mu_b||^2 + n*sigma_b^2))

which the Monte-Carlo estimator verifies, and the squared-norm fluctuation
std/mean decays like 1/sqrt(m), which the concentration curve measures.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .linalg import ZeroNormError
from .rng import Rng

_CHUNK = 4096


@dataclass(frozen=True)
class ModalitySpec:
    """Gaussian modality: ambient mean, noise scale, and noise support size."""

    mu: np.ndarray
    sigma: float
    manifold_dim: int

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64).ravel())
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if not 0 <= self.manifold_dim <= self.mu.size:
            raise ValueError(
                f"manifold_dim {self.manifold_dim} outside [0, {self.mu.size}]"
            )
        if np.linalg.norm(self.mu) == 0.0:
            raise ZeroNormError("modality mean must be nonzero")

    @property
    def ambient_dim(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class CosineEstimate:
    mean: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class ConcentrationPoint:
    m: int
    mean: float
    std: float
    rel_fluct: float


@dataclass(frozen=True)
class ConcentrationCurve:
    points: list[ConcentrationPoint]
    slope: float  # fitted log-log slope of rel_fluct vs m; nan when degenerate


def sample_modality(spec: ModalitySpec, rng: Rng) -> np.ndarray:
    """One draw x = mu + eps with eps on the first manifold_dim coordinates."""
    return sample_modality_batch(spec, rng, 1)[0]


def sample_modality_batch(spec: ModalitySpec, rng: Rng, count: int) -> np.ndarray:
    """count independent draws, shape (count, ambient_dim)."""
    x = np.tile(spec.mu, (count, 1))
    m = spec.manifold_dim
    if m > 0 and spec.sigma > 0.0:
        x[:, :m] += spec.sigma * rng.normal(count * m).reshape(count, m)
    return x


def closed_form_cosine(ts: ModalitySpec, l: ModalitySpec) -> float:
    """Predicted expected cosine between independent samples of two modalities."""
    if ts.ambient_dim != l.ambient_dim:
        raise ValueError(
            f"ambient dims differ: {ts.ambient_dim} vs {l.ambient_dim}"
        )
    num = float(np.dot(ts.mu, l.mu))
    den_ts = np.sqrt(np.dot(ts.mu, ts.mu) + ts.manifold_dim * ts.sigma**2)
    den_l = np.sqrt(np.dot(l.mu, l.mu) + l.manifold_dim * l.sigma**2)
    return num / (den_ts * den_l)


def monte_carlo_cosine(ts: ModalitySpec, l: ModalitySpec, trials: int,
                       rng: Rng) -> CosineEstimate:
    """Empirical mean/stderr of cos(x_ts, x_l) over i.i.d. paired samples."""
    if trials < 100:
        raise ValueError(f"trials must be >= 100, got {trials}")
    if ts.ambient_dim != l.ambient_dim:
        raise ValueError(
            f"ambient dims differ: {ts.ambient_dim} vs {l.ambient_dim}"
        )
    values = np.empty(trials)
    done = 0
    while done < trials:
        count = min(_CHUNK, trials - done)
        a = sample_modality_batch(ts, rng, count)
        b = sample_modality_batch(l, rng, count)
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        if (na == 0.0).any() or (nb == 0.0).any():
            raise ZeroNormError("degenerate zero-norm sample in Monte-Carlo trial")
        values[done:done + count] = np.sum(a * b, axis=1) / (na * nb)
        done += count
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return CosineEstimate(mean=mean, stderr=stderr, trials=trials)


def concentration_curve(template: ModalitySpec, m_values: list[int], trials: int,
                        rng: Rng) -> ConcentrationCurve:
    """Relative fluctuation of ||x||^2 as the noise support size m grows.

    The template fixes the ambient mean and sigma; each point re-reads it with
    manifold_dim = m.  Also fits the log-log slope of fluctuation vs m (the
    expected value is -1/2 when the noise energy dominates the mean).
    """
    if len(m_values) < 2:
        raise ValueError("need at least 2 m values")
    if any(b <= a for a, b in zip(m_values, m_values[1:])):
        raise ValueError(f"m values must be ascending, got {m_values}")
    if trials < 1000:
        raise ValueError(f"trials must be >= 1000, got {trials}")
    if m_values[-1] > template.ambient_dim:
        raise ValueError(
            f"largest m {m_values[-1]} exceeds ambient dim {template.ambient_dim}"
        )
    points = []
    for m in m_values:
        spec = replace(template, manifold_dim=int(m))
        sq = np.empty(trials)
        done = 0
        while done < trials:
            count = min(_CHUNK, trials - done)
            x = sample_modality_batch(spec, rng, count)
            sq[done:done + count] = np.sum(x * x, axis=1)
            done += count
        mean = float(sq.mean())
        std = float(sq.std(ddof=1))
        points.append(ConcentrationPoint(m=int(m), mean=mean, std=std,
                                         rel_fluct=std / mean))
    flucts = np.array([p.rel_fluct for p in points])
    if (flucts <= 0.0).any():
        slope = float("nan")
    else:
        logs_m = np.log(np.array(m_values, dtype=np.float64))
        logs_f = np.log(flucts)
        xc = logs_m - logs_m.mean()
        slope = float(np.dot(xc, logs_f - logs_f.mean()) / np.dot(xc, xc))
    return ConcentrationCurve(points=points, slope=slope)
