"""Command-line entry point: synth / train / eval / compare.

Config files are flat `key=value` text with dotted keys, e.g.
`net.embed_dim=32`. Lines starting with '#' are comments. Exit codes:
0 success, 2 config/parse error, 3 sampler infeasibility, 4 numerical
failure, 5 shape mismatch.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .data import (
    Dataset,
    DomainShift,
    ParseError,
    SynthConfig,
    generate_synthetic,
    load_manifest,
    save_manifest,
    split_by_identity,
    split_enroll_probe,
)
from .loss import Margins
from .metrics import (
    IdentReport,
    VerificationReport,
    distance_matrix,
    embed_dataset,
    identify,
    roc,
    verification_report,
    verification_scores,
    write_cmc_csv,
    write_roc_csv,
)
from .net import (
    ConfigError,
    NetConfig,
    ShapeError,
    load_checkpoint,
    save_checkpoint,
)
from .sampler import InfeasibleError, TupleSpec
from .train import NumericalError, TrainConfig, train

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4
EXIT_SHAPE = 5


def parse_config_file(path) -> dict[str, str]:
    """Read flat key=value config text into a dict."""
    out: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected key=value")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _pop(cfg: dict, key: str, conv, default):
    if key not in cfg:
        return default
    raw = cfg.pop(key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ParseError(f"config key {key!r}: bad value {raw!r}") from exc


def _bool(raw: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise ValueError(raw)


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in raw.split(",") if v.strip())


def synth_config_from(cfg: dict[str, str], seed_override=None) -> SynthConfig:
    cfg = dict(cfg)
    config = SynthConfig(
        n_identities=_pop(cfg, "synth.n_identities", int, 50),
        samples_per_identity_per_domain=_pop(
            cfg, "synth.samples_per_identity_per_domain", int, 20
        ),
        feature_dim=_pop(cfg, "synth.feature_dim", int, 16),
        cluster_spread=_pop(cfg, "synth.cluster_spread", float, 0.3),
        domain_shift=DomainShift(
            rotation_angle_degrees=_pop(cfg, "synth.rotation_angle_degrees", float, 30.0),
            offset_magnitude=_pop(cfg, "synth.offset_magnitude", float, 1.0),
            noise_scale=_pop(cfg, "synth.noise_scale", float, 0.1),
        ),
        seed=_pop(cfg, "synth.seed", int, 0),
    )
    _reject_unknown(cfg, allow_prefixes=())
    if seed_override is not None:
        config.seed = seed_override
    return config


RUN_KEYS_DOC = (
    "net.hidden_dims, net.embed_dim, net.activation, net.normalize_output, "
    "margins.alpha1, margins.alpha2, tuple.k, tuple.domain_policy, "
    "tuple.fixed_p, tuple.fixed_q, optimizer.learning_rate, optimizer.decay, "
    "epochs, tuples_per_epoch, batch_size, seed, loss_mode, "
    "split.train_fraction, split.enroll_per_identity"
)


def run_config_from(
    cfg: dict[str, str], input_dim: int, seed_override=None
) -> tuple[TrainConfig, float, int]:
    """Build a TrainConfig plus (train_fraction, enroll_per_identity)."""
    cfg = {k: v for k, v in cfg.items() if not k.startswith("synth.")}
    net = NetConfig(
        input_dim=input_dim,
        hidden_dims=_pop(cfg, "net.hidden_dims", _int_list, (32,)),
        embed_dim=_pop(cfg, "net.embed_dim", int, 32),
        activation=_pop(cfg, "net.activation", str, "relu"),
        normalize_output=_pop(cfg, "net.normalize_output", _bool, True),
    )
    margins = Margins(
        alpha1=_pop(cfg, "margins.alpha1", float, 0.4),
        alpha2=_pop(cfg, "margins.alpha2", float, 0.4),
    )
    tuple_spec = TupleSpec(
        k=_pop(cfg, "tuple.k", int, 4),
        domain_policy=_pop(cfg, "tuple.domain_policy", str, "uniform_pair"),
        fixed_p=_pop(cfg, "tuple.fixed_p", str, None),
        fixed_q=_pop(cfg, "tuple.fixed_q", str, None),
    )
    config = TrainConfig(
        net=net,
        margins=margins,
        tuple_spec=tuple_spec,
        learning_rate=_pop(cfg, "optimizer.learning_rate", float, 1e-3),
        lr_decay=_pop(cfg, "optimizer.decay", float, 1.0),
        epochs=_pop(cfg, "epochs", int, 30),
        tuples_per_epoch=_pop(cfg, "tuples_per_epoch", int, 2000),
        batch_size=_pop(cfg, "batch_size", int, 32),
        seed=_pop(cfg, "seed", int, 42),
        loss_mode=_pop(cfg, "loss_mode", str, "hetero"),
    )
    train_fraction = _pop(cfg, "split.train_fraction", float, 0.8)
    enroll = _pop(cfg, "split.enroll_per_identity", int, 3)
    _reject_unknown(cfg, allow_prefixes=())
    if seed_override is not None:
        config.seed = seed_override
    return config, train_fraction, enroll


def _reject_unknown(cfg: dict, allow_prefixes):
    for key in cfg:
        if not any(key.startswith(p) for p in allow_prefixes):
            raise ParseError(f"unknown config key {key!r}")


# --- evaluation protocols ---------------------------------------------------


def evaluate_enroll_probe(
    net, test_set: Dataset, enroll_per_identity: int, seed: int
) -> tuple[IdentReport, VerificationReport, "np.ndarray", list, list]:
    """Mixed-domain protocol: enroll a few samples per test identity."""
    gallery, probes = split_enroll_probe(test_set, enroll_per_identity, seed)
    return _match(net, gallery, probes)


def evaluate_cross_domain(
    net, test_set: Dataset, gallery_domain: str, probe_domain: str
) -> tuple[IdentReport, VerificationReport, "np.ndarray", list, list]:
    """Gallery entirely in one domain, probes entirely in the other."""
    gallery = Dataset(
        samples=[s for s in test_set.samples if s.domain == gallery_domain],
        feature_dim=test_set.feature_dim,
    )
    probes = Dataset(
        samples=[s for s in test_set.samples if s.domain == probe_domain],
        feature_dim=test_set.feature_dim,
    )
    return _match(net, gallery, probes)


def _match(net, gallery: Dataset, probes: Dataset):
    gal_emb = embed_dataset(net, gallery)
    probe_emb = embed_dataset(net, probes)
    gal_ids = [s.id for s in gallery.samples]
    probe_ids = [s.id for s in probes.samples]
    dist = distance_matrix(
        np.stack([probe_emb[i] for i in probe_ids]),
        np.stack([gal_emb[i] for i in gal_ids]),
    )
    gal_labels = [s.identity for s in gallery.samples]
    probe_labels = [s.identity for s in probes.samples]
    ident = identify(dist, probe_labels, gal_labels)
    verif = verification_report(verification_scores(dist, probe_labels, gal_labels))
    return ident, verif, dist, probe_labels, gal_labels


def report_lines(ident: IdentReport, verif: VerificationReport, prefix="") -> list[str]:
    lines = [f"{prefix}rank1={ident.rank1:.9g}", f"{prefix}eer={verif.eer:.9g}"]
    for level in sorted(verif.gar_at):
        lines.append(f"{prefix}gar@{level:g}={verif.gar_at[level]:.9g}")
    return lines


# --- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = parse_config_file(args.config) if args.config else {}
    config = synth_config_from(cfg, seed_override=args.seed)
    dataset = generate_synthetic(config)
    try:
        save_manifest(dataset, args.out)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"samples={len(dataset)}")
    print(f"identities={len(dataset.identities())}")
    print(f"domains={len(dataset.domains())}")
    return 0


def cmd_train(args) -> int:
    dataset = load_manifest(args.data)
    cfg = parse_config_file(args.config) if args.config else {}
    config, train_fraction, _ = run_config_from(
        cfg, dataset.feature_dim, seed_override=args.seed
    )
    train_set, _ = split_by_identity(dataset, train_fraction, config.seed)
    net, log = train(train_set, config)
    save_checkpoint(net, args.out)
    log_path = args.log_out or (str(args.out) + ".log.csv")
    log.write_csv(log_path)
    print(f"checkpoint={args.out}")
    print(f"log={log_path}")
    if log.records:
        print(f"final_mean_loss={log.records[-1].mean_loss:.9g}")
    return 0


def cmd_eval(args) -> int:
    net = load_checkpoint(args.checkpoint)
    dataset = load_manifest(args.data)
    if dataset.feature_dim != net.config.input_dim:
        print(
            f"error: data feature_dim {dataset.feature_dim} != checkpoint "
            f"input_dim {net.config.input_dim}",
            file=sys.stderr,
        )
        return EXIT_SHAPE
    cfg = parse_config_file(args.config) if args.config else {}
    config, train_fraction, enroll = run_config_from(
        cfg, dataset.feature_dim, seed_override=args.seed
    )
    _, test_set = split_by_identity(dataset, train_fraction, config.seed)
    ident, verif, dist, probe_labels, gal_labels = evaluate_enroll_probe(
        net, test_set, enroll, config.seed
    )
    for line in report_lines(ident, verif):
        print(line)
    if args.roc_out:
        write_roc_csv(roc(verification_scores(dist, probe_labels, gal_labels)), args.roc_out)
    if args.cmc_out:
        write_cmc_csv(ident, args.cmc_out)
    return 0


def run_compare(dataset: Dataset, config: TrainConfig, train_fraction: float, enroll: int):
    """Train baseline and hetero on identical data/seed; evaluate the same split.

    Returns a flat dict of metric keys. Cross-domain rows use the first
    sorted domain as gallery and the second as probes.
    """
    train_set, test_set = split_by_identity(dataset, train_fraction, config.seed)
    domains = dataset.domains()
    if len(domains) < 2:
        raise InfeasibleError("compare needs at least 2 domains")
    results: dict[str, float] = {}
    for mode in ("triplet_baseline", "hetero"):
        mode_cfg = TrainConfig(
            net=config.net,
            margins=config.margins,
            tuple_spec=config.tuple_spec,
            learning_rate=config.learning_rate,
            lr_decay=config.lr_decay,
            epochs=config.epochs,
            tuples_per_epoch=config.tuples_per_epoch,
            batch_size=config.batch_size,
            seed=config.seed,
            loss_mode=mode,
        )
        net, log = train(train_set, mode_cfg)
        key = "baseline" if mode == "triplet_baseline" else "hetero"
        if log.records:
            results[f"{key}.first_epoch_loss"] = log.records[0].mean_loss
            results[f"{key}.final_epoch_loss"] = log.records[-1].mean_loss
        ident, verif, _, _, _ = evaluate_enroll_probe(net, test_set, enroll, config.seed)
        results[f"{key}.rank1"] = ident.rank1
        results[f"{key}.eer"] = verif.eer
        for level, gar in verif.gar_at.items():
            results[f"{key}.gar@{level:g}"] = gar
        x_ident, x_verif, _, _, _ = evaluate_cross_domain(
            net, test_set, domains[0], domains[1]
        )
        results[f"{key}.cross_rank1"] = x_ident.rank1
        results[f"{key}.cross_eer"] = x_verif.eer
    for metric in ("rank1", "eer", "cross_rank1", "cross_eer"):
        results[f"delta.{metric}"] = results[f"hetero.{metric}"] - results[f"baseline.{metric}"]
    return results


def cmd_compare(args) -> int:
    dataset = load_manifest(args.data)
    cfg = parse_config_file(args.config) if args.config else {}
    config, train_fraction, enroll = run_config_from(
        cfg, dataset.feature_dim, seed_override=args.seed
    )
    results = run_compare(dataset, config, train_fraction, enroll)
    for key in sorted(results):
        print(f"{key}={results[key]:.9g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heteroembed",
        description="Heterogeneity-aware embedding training and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-domain manifest")
    p.add_argument("--config", help="flat key=value config file (synth.* keys)")
    p.add_argument("--out", required=True, help="output .hem manifest path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train an embedding network")
    p.add_argument("--config", help=f"flat key=value config ({RUN_KEYS_DOC})")
    p.add_argument("--data", required=True, help="input .hem manifest")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--log-out", help="training log CSV path (default <out>.log.csv)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="flat key=value config (split.* keys)")
    p.add_argument("--data", required=True, help="input .hem manifest")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--roc-out", help="write the ROC curve CSV here")
    p.add_argument("--cmc-out", help="write the CMC curve CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train+evaluate baseline and hetero losses")
    p.add_argument("--config", help=f"flat key=value config ({RUN_KEYS_DOC})")
    p.add_argument("--data", required=True, help="input .hem manifest")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ConfigError, ValueError) as exc:
        if isinstance(exc, ShapeError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_SHAPE
        if isinstance(exc, InfeasibleError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
