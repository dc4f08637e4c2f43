"""Matching and biometric metrics: CMC/Rank-k, ROC, EER, GAR@FAR.

Scores are distances (lower = more similar); a pair is accepted when its
distance falls at or below the decision threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .net import EmbeddingNet, ShapeError, forward_batch


@dataclass
class ScoreSet:
    genuine: np.ndarray  # same-identity distances
    impostor: np.ndarray  # different-identity distances


@dataclass
class RocCurve:
    far: np.ndarray
    gar: np.ndarray
    threshold: np.ndarray


@dataclass
class IdentReport:
    rank_accuracies: np.ndarray  # index r-1 = CMC at rank r
    n_probes: int
    n_gallery: int

    @property
    def rank1(self) -> float:
        return float(self.rank_accuracies[0])


@dataclass
class VerificationReport:
    eer: float
    gar_at: dict[float, float]


def embed_dataset(net: EmbeddingNet, dataset: Dataset) -> dict[int, np.ndarray]:
    """Embed every sample; returns id -> embedding."""
    if not dataset.samples:
        return {}
    if dataset.feature_dim != net.config.input_dim:
        raise ShapeError(
            f"dataset feature_dim {dataset.feature_dim} != net input_dim "
            f"{net.config.input_dim}"
        )
    feats = np.stack([s.features for s in dataset.samples])
    embs = forward_batch(net, feats)
    return {s.id: embs[i] for i, s in enumerate(dataset.samples)}


def distance_matrix(probes: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, probes on rows."""
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    gallery = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    if probes.size == 0 or gallery.size == 0:
        raise ValueError("probe and gallery sets must be nonempty")
    if probes.shape[1] != gallery.shape[1]:
        raise ShapeError("probe/gallery embedding dims differ")
    diff = probes[:, None, :] - gallery[None, :, :]
    d = np.einsum("ijk,ijk->ij", diff, diff)
    return np.maximum(d, 0.0)


def identify(
    dist: np.ndarray,
    probe_identities,
    gallery_identities,
    strict: bool = True,
) -> IdentReport:
    """CMC over a probe x gallery distance matrix.

    Ties break toward the lower gallery index. In strict mode a probe
    identity missing from the gallery is an error; otherwise that probe is
    never counted as retrieved at any rank.
    """
    dist = np.asarray(dist, dtype=np.float64)
    probe_identities = list(probe_identities)
    gallery_identities = list(gallery_identities)
    if dist.shape != (len(probe_identities), len(gallery_identities)):
        raise ShapeError("distance matrix does not match label lists")
    gallery_set = set(gallery_identities)
    n_probes, n_gallery = dist.shape

    hits = np.zeros(n_gallery, dtype=np.int64)
    for i, ident in enumerate(probe_identities):
        if ident not in gallery_set:
            if strict:
                raise ValueError(f"probe identity {ident!r} absent from gallery")
            continue
        order = np.argsort(dist[i], kind="stable")
        for rank, j in enumerate(order, start=1):
            if gallery_identities[j] == ident:
                hits[rank - 1] += 1
                break
    cmc = np.cumsum(hits) / n_probes
    return IdentReport(rank_accuracies=cmc, n_probes=n_probes, n_gallery=n_gallery)


def roc(scores: ScoreSet) -> RocCurve:
    """Sweep all distinct distances (plus -inf/+inf sentinels) as thresholds."""
    genuine = np.asarray(scores.genuine, dtype=np.float64)
    impostor = np.asarray(scores.impostor, dtype=np.float64)
    if genuine.size == 0 or impostor.size == 0:
        raise ValueError("genuine and impostor sets must be nonempty")
    thresholds = np.concatenate(
        ([-np.inf], np.unique(np.concatenate([genuine, impostor])), [np.inf])
    )
    genuine_sorted = np.sort(genuine)
    impostor_sorted = np.sort(impostor)
    gar = np.searchsorted(genuine_sorted, thresholds, side="right") / genuine.size
    far = np.searchsorted(impostor_sorted, thresholds, side="right") / impostor.size
    return RocCurve(far=far, gar=gar, threshold=thresholds)


def eer(curve: RocCurve) -> float:
    """Operating point where FAR equals FRR, linearly interpolated."""
    far = curve.far
    frr = 1.0 - curve.gar
    diff = far - frr  # non-decreasing along the threshold sweep
    idx = int(np.searchsorted(diff, 0.0, side="left"))
    if idx == 0:
        return float(far[0])
    if idx == len(diff):
        return float(far[-1])
    d0, d1 = diff[idx - 1], diff[idx]
    if d1 == d0:
        return float(far[idx])
    t = -d0 / (d1 - d0)
    return float(far[idx - 1] + t * (far[idx] - far[idx - 1]))


def gar_at_far(curve: RocCurve, far_level: float) -> float:
    """GAR at the requested FAR, interpolating between operating points.

    Below the smallest achievable positive FAR the curve is taken as flat
    at its FAR = 0 value.
    """
    if not 0.0 <= far_level <= 1.0:
        raise ValueError("far_level must lie in [0, 1]")
    # Collapse to one (max) GAR per distinct FAR.
    best: dict[float, float] = {}
    for f, g in zip(curve.far, curve.gar):
        if f not in best or g > best[f]:
            best[f] = g
    fars = np.array(sorted(best))
    gars = np.array([best[f] for f in fars])
    positive = fars[fars > 0]
    if positive.size and far_level < positive[0]:
        return float(gars[fars == 0.0][0]) if (fars == 0.0).any() else float(gars[0])
    return float(np.interp(far_level, fars, gars))


def verification_scores(
    dist: np.ndarray, probe_identities, gallery_identities
) -> ScoreSet:
    """Label every probe x gallery distance genuine or impostor by identity."""
    dist = np.asarray(dist, dtype=np.float64)
    probe_identities = np.asarray(list(probe_identities))
    gallery_identities = np.asarray(list(gallery_identities))
    same = probe_identities[:, None] == gallery_identities[None, :]
    return ScoreSet(genuine=dist[same], impostor=dist[~same])


def verification_report(
    scores: ScoreSet, far_levels=(0.001, 0.1)
) -> VerificationReport:
    curve = roc(scores)
    return VerificationReport(
        eer=eer(curve),
        gar_at={f: gar_at_far(curve, f) for f in far_levels},
    )


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("far,gar,threshold\n")
        for fa, ga, th in zip(curve.far, curve.gar, curve.threshold):
            f.write(f"{fa:.9g},{ga:.9g},{th:.9g}\n")


def write_cmc_csv(report: IdentReport, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("rank,accuracy\n")
        for r, acc in enumerate(report.rank_accuracies, start=1):
            f.write(f"{r},{acc:.9g}\n")
