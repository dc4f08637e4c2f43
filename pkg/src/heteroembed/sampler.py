"""Random tuple composition from an indexed dataset.

No hard mining: the sampler sees only labels and an RNG stream, never
embeddings or distances. All internal choices run over sorted label
lists so results are independent of dict iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset

MAX_RETRIES = 64


class InfeasibleError(ValueError):
    """No valid tuple can be drawn from the index."""


@dataclass(frozen=True)
class TupleSpec:
    k: int = 4
    domain_policy: str = "uniform_pair"  # or "fixed"
    fixed_p: str | None = None
    fixed_q: str | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.domain_policy not in ("uniform_pair", "fixed"):
            raise ValueError(f"unknown domain policy {self.domain_policy!r}")
        if self.domain_policy == "fixed":
            if self.fixed_p is None or self.fixed_q is None or self.fixed_p == self.fixed_q:
                raise ValueError("fixed policy needs two distinct domains")


@dataclass
class DatasetIndex:
    groups: dict[tuple[str, str], list[int]]  # (identity, domain) -> sample ids
    identities: list[str]
    domains: list[str]

    def group(self, identity: str, domain: str) -> list[int]:
        return self.groups.get((identity, domain), [])


@dataclass
class SampledTuple:
    anchor_id: int
    pos_same_id: int
    pos_cross_id: int
    neg_same_ids: list[int]
    neg_cross_ids: list[int]
    identity_a: str
    identity_b: str
    domain_p: str
    domain_q: str


def build_index(dataset: Dataset) -> DatasetIndex:
    """Group sample ids by (identity, domain) with sorted label lists."""
    if not dataset.samples:
        raise ValueError("cannot index an empty dataset")
    groups: dict[tuple[str, str], list[int]] = {}
    for s in dataset.samples:
        groups.setdefault((s.identity, s.domain), []).append(s.id)
    for ids in groups.values():
        ids.sort()
    return DatasetIndex(
        groups=groups,
        identities=dataset.identities(),
        domains=dataset.domains(),
    )


def _anchor_ok(index: DatasetIndex, a: str, p: str, q: str) -> bool:
    return len(index.group(a, p)) >= 2 and len(index.group(a, q)) >= 1


def _negative_ok(index: DatasetIndex, b: str, p: str, q: str) -> bool:
    return len(index.group(b, p)) >= 1 and len(index.group(b, q)) >= 1


def _domain_pairs(index: DatasetIndex, spec: TupleSpec) -> list[tuple[str, str]]:
    if spec.domain_policy == "fixed":
        return [(spec.fixed_p, spec.fixed_q)]
    return [(p, q) for p in index.domains for q in index.domains if p != q]


def _draw_ids(rng: np.random.Generator, ids: list[int], n: int) -> list[int]:
    picked = rng.permutation(len(ids))[:n]
    return [ids[i] for i in picked]


def _compose(index, rng, spec, a, b, p, q) -> SampledTuple:
    anchor_id, pos_same_id = _draw_ids(rng, index.group(a, p), 2)
    pos_cross_id = _draw_ids(rng, index.group(a, q), 1)[0]
    neg_same = index.group(b, p)
    neg_cross = index.group(b, q)
    return SampledTuple(
        anchor_id=anchor_id,
        pos_same_id=pos_same_id,
        pos_cross_id=pos_cross_id,
        neg_same_ids=_draw_ids(rng, neg_same, min(spec.k, len(neg_same))),
        neg_cross_ids=_draw_ids(rng, neg_cross, min(spec.k, len(neg_cross))),
        identity_a=a,
        identity_b=b,
        domain_p=p,
        domain_q=q,
    )


def sample_tuple(
    index: DatasetIndex, rng: np.random.Generator, spec: TupleSpec
) -> SampledTuple:
    """Draw one training tuple: bounded rejection sampling, then a full scan."""
    if len(index.identities) < 2:
        raise InfeasibleError("index has fewer than 2 identities")
    pairs = _domain_pairs(index, spec)
    if not pairs:
        raise InfeasibleError("no ordered domain pair available (need >= 2 domains)")

    idents = index.identities
    for _ in range(MAX_RETRIES):
        p, q = pairs[rng.integers(len(pairs))]
        a = idents[rng.integers(len(idents))]
        b = idents[rng.integers(len(idents))]
        if a == b or not _anchor_ok(index, a, p, q) or not _negative_ok(index, b, p, q):
            continue
        return _compose(index, rng, spec, a, b, p, q)

    # Deterministic feasibility scan, tracking how far constraints get.
    saw_anchor = False
    for p, q in pairs:
        for a in idents:
            if not _anchor_ok(index, a, p, q):
                continue
            saw_anchor = True
            for b in idents:
                if b != a and _negative_ok(index, b, p, q):
                    return _compose(index, rng, spec, a, b, p, q)
    if saw_anchor:
        raise InfeasibleError(
            "no negative identity has samples in both domains of any feasible pair"
        )
    raise InfeasibleError(
        "no identity has >= 2 samples in one domain and >= 1 in another"
    )


def epoch_tuples(
    index: DatasetIndex, rng: np.random.Generator, spec: TupleSpec, n_tuples: int
) -> list[SampledTuple]:
    """n_tuples independent draws from one RNG stream."""
    if n_tuples < 0:
        raise ValueError("n_tuples must be >= 0")
    return [sample_tuple(index, rng, spec) for _ in range(n_tuples)]
