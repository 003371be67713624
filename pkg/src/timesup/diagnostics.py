"""Measurement instruments: pairwise cosine statistics, the PCA explained-
variance intrinsic-dimension probe, a pseudo-alignment index, per-layer trace
reports, and exact-round-trip embedding dumps for external projection tools.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .linalg import ZeroNormError, cosine, sym_eig
from .model import LayerTrace

_DECILES = np.arange(10, 100, 10)


@dataclass(frozen=True)
class CosineStats:
    mean: float
    std: float
    min: float
    max: float
    deciles: tuple[float, ...]  # 10th..90th percentiles
    pairs: int
    zero_rows_excluded: int


@dataclass(frozen=True)
class ConeLayerStats:
    cross: CosineStats
    intra_time: CosineStats
    intra_language: CosineStats


@dataclass(frozen=True)
class ConeReport:
    layers: list[ConeLayerStats]


@dataclass(frozen=True)
class EvrReport:
    eigenvalues: tuple[float, ...]       # descending
    cumulative_evr: tuple[float, ...]
    intrinsic_dim: int
    threshold: float
    degenerate: bool


@dataclass(frozen=True)
class AlignmentIndex:
    centroid_cosine: float
    collapse_ratio: float


def _drop_zero_rows(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    norms = np.linalg.norm(mat, axis=1)
    keep = norms > 0.0
    return mat[keep], norms[keep], int((~keep).sum())


def pairwise_cosine_stats(a: np.ndarray, b: np.ndarray) -> CosineStats:
    """Statistics over all |a| x |b| row-pair cosines, zero-norm rows excluded."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"need 2-D token matrices of equal width, got {a.shape}, {b.shape}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("token batches must be nonempty")
    a, na, dropped_a = _drop_zero_rows(a)
    b, nb, dropped_b = _drop_zero_rows(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ZeroNormError("all rows of one batch have zero norm")
    sims = ((a / na[:, None]) @ (b / nb[:, None]).T).ravel()
    return CosineStats(
        mean=float(sims.mean()),
        std=float(sims.std()),
        min=float(sims.min()),
        max=float(sims.max()),
        deciles=tuple(float(x) for x in np.percentile(sims, _DECILES)),
        pairs=sims.size,
        zero_rows_excluded=dropped_a + dropped_b,
    )


def intrinsic_dimension(tokens: np.ndarray, threshold: float = 0.99) -> EvrReport:
    """Principal components needed to explain `threshold` of the variance.

    Columns are mean-centered, the covariance uses rows-1 normalization, and
    the spectrum comes from the Jacobi eigensolver (scaled to O(1) first so
    its absolute tolerance is meaningful).
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[0] < 2:
        raise ValueError(f"need >= 2 token rows, got shape {tokens.shape}")
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    rows, d = tokens.shape
    centered = tokens - tokens.mean(axis=0)
    cov = (centered.T @ centered) / (rows - 1)
    scale = np.abs(cov).max()
    if scale == 0.0:
        return EvrReport(eigenvalues=(0.0,) * d, cumulative_evr=(1.0,) * d,
                         intrinsic_dim=0, threshold=threshold, degenerate=True)
    eigvals, _ = sym_eig(cov / scale)
    eigvals = np.clip(eigvals * scale, 0.0, None)
    total = eigvals.sum()
    cum = np.cumsum(eigvals) / total
    dim = int(np.searchsorted(cum, threshold - 1e-12) + 1)
    return EvrReport(eigenvalues=tuple(float(x) for x in eigvals),
                     cumulative_evr=tuple(float(x) for x in cum),
                     intrinsic_dim=dim, threshold=threshold, degenerate=False)


def pseudo_alignment_index(a: np.ndarray, b: np.ndarray) -> AlignmentIndex:
    """Centroid cosine plus inter-centroid distance over mean per-coordinate
    RMS spread.  Small ratios mean the modalities collapsed onto one centroid;
    ratios well above 1 mean they kept separate structure."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"need 2-D token matrices of equal width, got {a.shape}, {b.shape}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("token batches must be nonempty")
    d = a.shape[1]
    cent_a = a.mean(axis=0)
    cent_b = b.mean(axis=0)
    spread_a = np.sqrt(np.mean(np.sum((a - cent_a) ** 2, axis=1)) / d)
    spread_b = np.sqrt(np.mean(np.sum((b - cent_b) ** 2, axis=1)) / d)
    for name, spread in (("first", spread_a), ("second", spread_b)):
        if spread == 0.0:
            raise ZeroNormError(f"{name} modality has zero spread around its centroid")
    ratio = float(np.linalg.norm(cent_a - cent_b) / (0.5 * (spread_a + spread_b)))
    return AlignmentIndex(centroid_cosine=cosine(cent_a, cent_b), collapse_ratio=ratio)


def trace_report(trace: LayerTrace) -> tuple[ConeReport, list[AlignmentIndex]]:
    """Per-entry cross/intra-modal cosine statistics and alignment indices."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    layers = []
    alignment = []
    for i, entry in enumerate(trace.entries):
        if entry.time is None or entry.language is None:
            missing = "time" if entry.time is None else "language"
            raise ValueError(f"trace entry {i} is missing the {missing} modality")
        layers.append(ConeLayerStats(
            cross=pairwise_cosine_stats(entry.time, entry.language),
            intra_time=pairwise_cosine_stats(entry.time, entry.time),
            intra_language=pairwise_cosine_stats(entry.language, entry.language),
        ))
        alignment.append(pseudo_alignment_index(entry.time, entry.language))
    return ConeReport(layers=layers), alignment


def dump_embeddings(trace: LayerTrace, path) -> None:
    """CSV dump of every token at every trace entry, 17-significant-digit
    decimals so a reload reproduces the floats bit-exactly."""
    if len(trace) == 0:
        raise ValueError("empty trace; nothing to dump")
    widths = {m.shape[1] for e in trace.entries for m in (e.time, e.language)
              if m is not None}
    if len(widths) != 1:
        raise ValueError(f"inconsistent embedding widths in trace: {widths}")
    d = widths.pop()
    lines = ["layer,modality,token_index," + ",".join(f"d_{j}" for j in range(d))]
    for layer, entry in enumerate(trace.entries):
        for modality, mat in (("time", entry.time), ("language", entry.language)):
            if mat is None:
                continue
            for t, row in enumerate(mat):
                cells = ",".join(f"{x:.17g}" for x in row)
                lines.append(f"{layer},{modality},{t},{cells}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embedding_dump(path) -> dict[tuple[int, str], np.ndarray]:
    """Reload a dump_embeddings CSV into {(layer, modality): matrix}."""
    lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    out: dict[tuple[int, str], list[list[float]]] = {}
    for line in lines[1:]:
        cells = line.split(",")
        key = (int(cells[0]), cells[1])
        out.setdefault(key, []).append([float(x) for x in cells[3:]])
    return {k: np.array(v) for k, v in out.items()}


def cone_report_to_json(report: ConeReport) -> str:
    return json.dumps({"layers": [asdict(l) for l in report.layers]}, indent=2)


def evr_report_to_json(report: EvrReport) -> str:
    return json.dumps(asdict(report), indent=2)


def alignment_to_json(indices: list[AlignmentIndex]) -> str:
    return json.dumps({"layers": [asdict(a) for a in indices]}, indent=2)
