"""Training loop: tuple batches, analytic gradients, Adam updates.

One logical thread; the sampler stream, network init, and optimizer are
all seeded so a run is a pure function of (config, data, seed). The
triplet baseline consumes the identical sampler stream and simply
ignores the cross-domain and extra-negative fields of each tuple.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .loss import Margins, EmbeddingTuple, hetero_loss_grad, triplet_loss_grad
from .net import (
    AdamState,
    EmbeddingNet,
    NetConfig,
    adam_step,
    backward,
    decay_learning_rate,
    forward_batch,
    init_net,
)
from .sampler import SampledTuple, TupleSpec, build_index, epoch_tuples


class NumericalError(RuntimeError):
    """Loss or gradient became non-finite during training."""


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    mean_l1: float
    mean_l2: float
    active_fraction: float
    lr: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("epoch,mean_loss,mean_l1,mean_l2,active_fraction,lr\n")
            for r in self.records:
                f.write(
                    f"{r.epoch},{r.mean_loss:.17g},{r.mean_l1:.17g},"
                    f"{r.mean_l2:.17g},{r.active_fraction:.17g},{r.lr:.17g}\n"
                )


@dataclass
class TrainConfig:
    net: NetConfig
    margins: Margins = field(default_factory=Margins)
    tuple_spec: TupleSpec = field(default_factory=TupleSpec)
    learning_rate: float = 1e-3
    lr_decay: float = 1.0
    epochs: int = 30
    tuples_per_epoch: int = 2000
    batch_size: int = 32
    seed: int = 42
    loss_mode: str = "hetero"  # or "triplet_baseline"

    def __post_init__(self):
        if self.loss_mode not in ("hetero", "triplet_baseline"):
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")
        if self.epochs < 0 or self.tuples_per_epoch < 1 or self.batch_size < 1:
            raise ValueError("epochs/tuples_per_epoch/batch_size out of range")


def _tuple_sample_ids(tup: SampledTuple, baseline: bool) -> list[int]:
    if baseline:
        return [tup.anchor_id, tup.pos_same_id, tup.neg_same_ids[0]]
    return [
        tup.anchor_id,
        tup.pos_same_id,
        tup.pos_cross_id,
        *tup.neg_same_ids,
        *tup.neg_cross_ids,
    ]


def _batch_step(
    net: EmbeddingNet,
    features: dict[int, np.ndarray],
    batch: list[SampledTuple],
    margins: Margins,
    baseline: bool,
):
    """Returns (param grads, sum loss, sum l1, sum l2, active hinges, total hinges)."""
    # Forward every occurrence in one vectorized pass; shared samples appear
    # once per occurrence, which sums their gradient contributions naturally.
    ids: list[int] = []
    offsets = []
    for tup in batch:
        tup_ids = _tuple_sample_ids(tup, baseline)
        offsets.append((len(ids), len(tup_ids)))
        ids.extend(tup_ids)
    X = np.stack([features[i] for i in ids])
    E = forward_batch(net, X)

    scale = 1.0 / len(batch)  # batch reduction: mean over tuples
    G = np.zeros_like(E)
    loss_sum = l1_sum = l2_sum = 0.0
    active = total_hinges = 0
    for tup, (start, count) in zip(batch, offsets):
        if baseline:
            a, p, n = E[start], E[start + 1], E[start + 2]
            val, d_a, d_p, d_n = triplet_loss_grad(a, p, n, margins.alpha1)
            loss_sum += val
            l1_sum += val
            active += val > 0
            total_hinges += 1
            G[start] += scale * d_a
            G[start + 1] += scale * d_p
            G[start + 2] += scale * d_n
        else:
            k1 = len(tup.neg_same_ids)
            k2 = len(tup.neg_cross_ids)
            emb = EmbeddingTuple(
                anchor=E[start],
                pos_same=E[start + 1],
                pos_cross=E[start + 2],
                negs_same=[E[start + 3 + i] for i in range(k1)],
                negs_cross=[E[start + 3 + k1 + i] for i in range(k2)],
            )
            val, grad = hetero_loss_grad(emb, margins)
            loss_sum += val.total
            l1_sum += val.l1
            l2_sum += val.l2
            active += int(val.l1_active) + int(val.l2_active)
            total_hinges += 2
            G[start] += scale * grad.d_anchor
            G[start + 1] += scale * grad.d_pos_same
            G[start + 2] += scale * grad.d_pos_cross
            for i, g in enumerate(grad.d_negs_same):
                G[start + 3 + i] += scale * g
            for i, g in enumerate(grad.d_negs_cross):
                G[start + 3 + k1 + i] += scale * g

    param_grads = backward(net, X, G)
    return param_grads, loss_sum, l1_sum, l2_sum, active, total_hinges


def train(dataset: Dataset, config: TrainConfig) -> tuple[EmbeddingNet, TrainingLog]:
    """Train an embedding network on the given dataset."""
    index = build_index(dataset)
    features = {s.id: s.features for s in dataset.samples}
    net = init_net(config.net, config.seed)
    sampler_rng = np.random.default_rng([config.seed, 1])
    state = AdamState(learning_rate=config.learning_rate, decay=config.lr_decay)
    baseline = config.loss_mode == "triplet_baseline"
    log = TrainingLog()

    for epoch in range(config.epochs):
        tuples = epoch_tuples(index, sampler_rng, config.tuple_spec, config.tuples_per_epoch)
        loss_sum = l1_sum = l2_sum = 0.0
        active = hinges = 0
        for start in range(0, len(tuples), config.batch_size):
            batch = tuples[start : start + config.batch_size]
            grads, bl, b1, b2, ba, bh = _batch_step(
                net, features, batch, config.margins, baseline
            )
            if not np.isfinite(bl):
                raise NumericalError(f"non-finite loss in epoch {epoch}")
            params = net.params()
            new_params, state = adam_step(state, params, grads)
            n_layers = len(net.weights)
            net = EmbeddingNet(
                config=net.config,
                weights=[new_params[2 * i] for i in range(n_layers)],
                biases=[new_params[2 * i + 1] for i in range(n_layers)],
            )
            loss_sum += bl
            l1_sum += b1
            l2_sum += b2
            active += ba
            hinges += bh
        n = len(tuples)
        log.records.append(
            EpochRecord(
                epoch=epoch,
                mean_loss=loss_sum / n,
                mean_l1=l1_sum / n,
                mean_l2=l2_sum / n,
                active_fraction=active / hinges if hinges else 0.0,
                lr=state.learning_rate,
            )
        )
        state = decay_learning_rate(state)
    return net, log
