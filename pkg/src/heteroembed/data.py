"""(identity, domain)-labeled feature vectors: manifest I/O, splits, synthesis.

Manifest format (`.hem`, UTF-8 text):
    HETERO-EMBED-DATA v1 dim=<D>
    <identity>,<domain>,<f1> <f2> ... <fD>
Lines starting with '#' are comments; blank lines are skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .net import ShapeError

MANIFEST_MAGIC = "HETERO-EMBED-DATA v1"


class ParseError(ValueError):
    """Malformed manifest or config file."""


@dataclass
class Sample:
    id: int
    identity: str
    domain: str
    features: np.ndarray


@dataclass
class Dataset:
    samples: list[Sample]
    feature_dim: int

    def __len__(self):
        return len(self.samples)

    def identities(self) -> list[str]:
        return sorted({s.identity for s in self.samples})

    def domains(self) -> list[str]:
        return sorted({s.domain for s in self.samples})

    def subset(self, sample_ids) -> "Dataset":
        ids = set(sample_ids)
        return Dataset(
            samples=[s for s in self.samples if s.id in ids],
            feature_dim=self.feature_dim,
        )


@dataclass
class DomainShift:
    rotation_angle_degrees: float = 30.0
    offset_magnitude: float = 1.0
    noise_scale: float = 0.1


@dataclass
class SynthConfig:
    n_identities: int = 50
    samples_per_identity_per_domain: int = 20
    feature_dim: int = 16
    cluster_spread: float = 0.3
    domain_shift: DomainShift = field(default_factory=DomainShift)
    seed: int = 0

    def __post_init__(self):
        if self.n_identities < 2:
            raise ValueError("need at least 2 identities")
        if self.samples_per_identity_per_domain < 1 or self.feature_dim < 1:
            raise ValueError("counts and dims must be positive")


def load_manifest(path) -> Dataset:
    """Parse a `.hem` manifest into a Dataset. Ids follow record order from 0."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0]
    if not header.startswith(MANIFEST_MAGIC + " dim="):
        raise ParseError(f"{path}: bad header {header!r}")
    try:
        dim = int(header.split("dim=", 1)[1])
    except ValueError as exc:
        raise ParseError(f"{path}: bad dim in header") from exc

    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"{path}:{lineno}: expected identity,domain,features")
        identity, domain, feat_str = parts
        try:
            feats = np.array([float(v) for v in feat_str.split()], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-numeric feature") from exc
        if feats.size != dim:
            raise ShapeError(f"{path}:{lineno}: {feats.size} features, expected {dim}")
        if not np.all(np.isfinite(feats)):
            raise ParseError(f"{path}:{lineno}: non-finite feature")
        samples.append(Sample(id=len(samples), identity=identity, domain=domain, features=feats))
    if not samples:
        raise ParseError(f"{path}: no data lines")
    return Dataset(samples=samples, feature_dim=dim)


def save_manifest(dataset: Dataset, path) -> None:
    """Write a Dataset as a `.hem` manifest (17 significant digits, round-trip exact)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{MANIFEST_MAGIC} dim={dataset.feature_dim}\n")
        for s in dataset.samples:
            feats = " ".join(format(v, ".17g") for v in s.features)
            f.write(f"{s.identity},{s.domain},{feats}\n")


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Two-domain clustered data with a controlled domain shift.

    Each identity gets a Gaussian cluster center. Domain "A" samples scatter
    around the center; domain "B" samples scatter around the center rotated
    (in the first two coordinates) plus a shared offset, with extra noise.
    """
    rng = np.random.default_rng(config.seed)
    dim = config.feature_dim
    shift = config.domain_shift

    theta = math.radians(shift.rotation_angle_degrees)
    rot = np.eye(dim)
    if dim >= 2:
        rot[0, 0] = math.cos(theta)
        rot[0, 1] = -math.sin(theta)
        rot[1, 0] = math.sin(theta)
        rot[1, 1] = math.cos(theta)

    offset = np.zeros(dim)
    if shift.offset_magnitude != 0.0:
        direction = rng.standard_normal(dim)
        offset = shift.offset_magnitude * direction / np.linalg.norm(direction)
    else:
        rng.standard_normal(dim)  # keep the stream aligned across offset settings

    samples = []
    n = config.samples_per_identity_per_domain
    for ident in range(config.n_identities):
        label = f"id{ident:03d}"
        center = rng.standard_normal(dim)
        center_b = rot @ center + offset
        for _ in range(n):
            feats = center + config.cluster_spread * rng.standard_normal(dim)
            samples.append(Sample(len(samples), label, "A", feats))
        for _ in range(n):
            feats = (
                center_b
                + config.cluster_spread * rng.standard_normal(dim)
                + shift.noise_scale * rng.standard_normal(dim)
            )
            samples.append(Sample(len(samples), label, "B", feats))
    return Dataset(samples=samples, feature_dim=dim)


def split_by_identity(dataset: Dataset, train_fraction: float, seed: int):
    """Identity-disjoint train/test split; both sides keep at least one identity."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    identities = dataset.identities()
    if len(identities) < 2:
        raise ValueError("need at least 2 identities to split")
    rng = np.random.default_rng(seed)
    order = [identities[i] for i in rng.permutation(len(identities))]
    n_train = round(train_fraction * len(identities))
    n_train = min(max(n_train, 1), len(identities) - 1)
    train_ids = set(order[:n_train])
    train = [s for s in dataset.samples if s.identity in train_ids]
    test = [s for s in dataset.samples if s.identity not in train_ids]
    return (
        Dataset(samples=train, feature_dim=dataset.feature_dim),
        Dataset(samples=test, feature_dim=dataset.feature_dim),
    )


def split_enroll_probe(dataset: Dataset, per_identity_enroll: int, seed: int):
    """Per identity, enroll a fixed number of samples; the rest become probes."""
    if per_identity_enroll < 1:
        raise ValueError("per_identity_enroll must be positive")
    by_identity: dict[str, list[Sample]] = {}
    for s in dataset.samples:
        by_identity.setdefault(s.identity, []).append(s)
    for ident in sorted(by_identity):
        if len(by_identity[ident]) < per_identity_enroll + 1:
            raise ValueError(
                f"identity {ident!r} has {len(by_identity[ident])} samples, "
                f"needs at least {per_identity_enroll + 1}"
            )
    rng = np.random.default_rng(seed)
    gallery_ids = set()
    for ident in sorted(by_identity):
        group = sorted(by_identity[ident], key=lambda s: s.id)
        picks = rng.permutation(len(group))[:per_identity_enroll]
        gallery_ids.update(group[i].id for i in picks)
    gallery = [s for s in dataset.samples if s.id in gallery_ids]
    probes = [s for s in dataset.samples if s.id not in gallery_ids]
    return (
        Dataset(samples=gallery, feature_dim=dataset.feature_dim),
        Dataset(samples=probes, feature_dim=dataset.feature_dim),
    )
