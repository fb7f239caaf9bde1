"""Command line interface.

Subcommands: generate-data, train, saliency, prune, adapt, evaluate,
experiment, report.  All file formats are the library's JSON/NPZ containers,
so every artifact a subcommand writes can feed the next one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .adaptation import AdaptConfig, AdaptationPlan, adapt
from .datagen import (
    GeneratorSpec,
    degrade_noise,
    degrade_reverb,
    generate_clean,
    load_corpus,
    save_corpus,
)
from .harness import ExperimentConfig, ResultTable, report, run_experiment
from .network import init_network, load_checkpoint, save_checkpoint
from .pruning import LayerPrune, PrunePlan, apply_mask, build_mask, structural_prune
from .saliency import MIConfig, SaliencyReport, mbp_saliency, mi_saliency, obs_saliency
from .training import TrainConfig, evaluate, train


def _parse_range(text):
    """A scalar ('10') or a low,high range ('0,15')."""
    parts = [float(p) for p in str(text).split(",")]
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return tuple(parts)
    raise argparse.ArgumentTypeError(f"expected NUM or LO,HI, got {text!r}")


def _parse_ints(text):
    return tuple(int(p) for p in str(text).split(","))


def _load_spec(path):
    if path is None:
        return GeneratorSpec()
    with open(path) as fh:
        return GeneratorSpec.from_dict(json.load(fh))


def _cmd_generate_data(args):
    spec = _load_spec(args.spec)
    corpus = generate_clean(spec, args.frames, seed=args.seed)
    if args.condition == "noisy":
        snr = args.snr if args.snr is not None else spec.noise_snr_db
        corpus = degrade_noise(corpus, snr, seed=args.degrade_seed)
    elif args.condition == "reverb":
        decay = args.decay if args.decay is not None else spec.reverb_decay
        corpus = degrade_reverb(corpus, decay, seed=args.degrade_seed)
    save_corpus(corpus, args.out)
    print(
        f"wrote {corpus.n_frames} frames ({args.condition}, {corpus.domain_tag}) "
        f"to {args.out}"
    )
    return 0


def _cmd_train(args):
    train_corpus = load_corpus(args.train)
    cv_corpus = load_corpus(args.cv)
    net = init_network(
        train_corpus.frames.shape[1],
        args.hidden,
        train_corpus.spec.num_classes,
        hidden_activation=args.activation,
        seed=args.seed,
    )
    cfg = TrainConfig(
        initial_lr=args.lr,
        constant_epochs=args.constant_epochs,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        l2=args.l2,
        seed=args.seed,
    )
    net, history = train(net, train_corpus, cv_corpus, cfg)
    save_checkpoint(net, args.out)
    if args.history_out:
        with open(args.history_out, "w") as fh:
            json.dump(history, fh, indent=2)
    print(
        f"trained {len(history)} epochs; final cv error "
        f"{history[-1]['cv_error']:.4f}; checkpoint at {args.out}"
    )
    return 0


def _compute_report(net, method, layer, calib, window, max_frames):
    if method == "mbp":
        return mbp_saliency(net, layer)
    if calib is None:
        raise SystemExit(f"--calib is required for method {method}")
    corpus = load_corpus(calib)
    if method == "obs":
        return obs_saliency(net, layer, corpus)
    return mi_saliency(net, layer, corpus, MIConfig(window, max_frames))


def _cmd_saliency(args):
    net = load_checkpoint(args.model)
    rep = _compute_report(
        net, args.method, args.layer, args.calib, args.window, args.max_frames
    )
    rep.save(args.out)
    print(f"wrote {args.method} saliency for layer {args.layer} to {args.out}")
    return 0


def _cmd_prune(args):
    net = load_checkpoint(args.model)
    reports = [
        _compute_report(
            net, args.method, layer, args.calib, args.window, args.max_frames
        )
        for layer in args.layers
    ]
    plan = PrunePlan(
        [
            LayerPrune(layer, args.method, args.band, args.hypo, args.hyper)
            for layer in args.layers
        ]
    )
    mask = build_mask(reports, plan)
    pruned = structural_prune(net, mask) if args.structural else apply_mask(net, mask)
    save_checkpoint(pruned, args.out_model)
    if args.out_mask:
        mask.save(args.out_mask)
    layer_list = ",".join(str(l) for l in args.layers)
    print(
        f"pruned {mask.n_pruned()} neurons (layers {layer_list}, band {args.band}); "
        f"model at {args.out_model}"
    )
    return 0


def _cmd_adapt(args):
    net = load_checkpoint(args.model)
    adapt_corpus = load_corpus(args.adapt_corpus)
    orig_corpus = load_corpus(args.orig_corpus)
    plan = AdaptationPlan(
        args.variant,
        hypo_pct=args.hypo,
        hyper_pct=args.hyper,
        mi_window=args.window,
    )
    update_mask = None
    if args.mask_from:
        reports = [SaliencyReport.load(p) for p in args.mask_from]
        rules = [
            LayerPrune(r.layer_index, r.method, "hypo+hyper", args.hypo, args.hyper)
            for r in reports
        ]
        update_mask = build_mask(reports, PrunePlan(rules))
    cfg = AdaptConfig(
        l2=args.l2,
        initial_lr=args.lr,
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        data_mix=args.mix,
        seed=args.seed,
        update_mask=update_mask,
    )
    label_source = load_checkpoint(args.label_model) if args.label_model else None
    adapted, history = adapt(
        net, adapt_corpus, orig_corpus, plan, cfg, label_source=label_source
    )
    save_checkpoint(adapted, args.out)
    if args.history_out:
        with open(args.history_out, "w") as fh:
            json.dump(history, fh, indent=2)
    print(f"adapted (Model {plan.variant}, {len(history)} epochs); saved {args.out}")
    return 0


def _cmd_evaluate(args):
    net = load_checkpoint(args.model)
    corpus = load_corpus(args.corpus)
    err = evaluate(net, corpus)
    print(f"frame error rate: {err:.6f} ({corpus.domain_tag}, {corpus.n_frames} frames)")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"frame_error_rate": err, "domain_tag": corpus.domain_tag}, fh)
    return 0


def _cmd_experiment(args):
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig.default()
    table = run_experiment(cfg, workers=args.workers)
    os.makedirs(args.out_dir, exist_ok=True)
    table.save(os.path.join(args.out_dir, "results.csv"))
    with open(os.path.join(args.out_dir, "results.txt"), "w") as fh:
        fh.write(table.to_text())
    with open(os.path.join(args.out_dir, "failures.json"), "w") as fh:
        json.dump(table.failures, fh, indent=2)
    cfg.save(os.path.join(args.out_dir, "config.json"))
    print(table.to_text())
    if table.failures:
        print(f"{len(table.failures)} cell(s) failed", file=sys.stderr)
        return 1
    return 0


def _cmd_report(args):
    table = ResultTable.load(args.table)
    rendered = report(table, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(rendered)
    else:
        print(rendered, end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="prunekit",
        description="Neuron-saliency pruning and selective adaptation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--condition", choices=("clean", "noisy", "reverb"),
                   default="clean")
    p.add_argument("--snr", type=_parse_range, default=None,
                   help="SNR in dB, scalar or LO,HI (noisy condition)")
    p.add_argument("--decay", type=_parse_range, default=None,
                   help="decay seconds, scalar or LO,HI (reverb condition)")
    p.add_argument("--degrade-seed", type=int, default=1)
    p.add_argument("--spec", default=None, help="generator spec JSON file")
    p.set_defaults(func=_cmd_generate_data)

    p = sub.add_parser("train", help="train a frame classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--cv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=_parse_ints, default=(128, 128, 128))
    p.add_argument("--activation", default="sigmoid")
    p.add_argument("--lr", type=float, default=0.008)
    p.add_argument("--constant-epochs", type=int, default=4)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-epochs", type=int, default=20)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--history-out", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("saliency", help="score neurons of one hidden layer")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=("mbp", "obs", "mi"), required=True)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--calib", default=None)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--max-frames", type=int, default=None)
    p.set_defaults(func=_cmd_saliency)

    p = sub.add_parser("prune", help="prune a band of one or more layers")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=("mbp", "obs", "mi"), required=True)
    p.add_argument("--layers", type=_parse_ints, required=True)
    p.add_argument("--hypo", type=float, default=0.0)
    p.add_argument("--hyper", type=float, default=0.0)
    p.add_argument("--band", choices=("hypo", "hyper", "mid", "both"),
                   default="both")
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-mask", default=None)
    p.add_argument("--calib", default=None)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--structural", action="store_true",
                   help="remove neurons instead of masking them")
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("adapt", help="unsupervised adaptation (Models A-D)")
    p.add_argument("--model", required=True)
    p.add_argument("--variant", choices=("A", "B", "C", "D"), required=True)
    p.add_argument("--adapt-corpus", required=True)
    p.add_argument("--orig-corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-from", nargs="+", default=None,
                   help="saliency report JSON files naming updatable neurons")
    p.add_argument("--mix", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.004)
    p.add_argument("--l2", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hypo", type=float, default=8.0)
    p.add_argument("--hyper", type=float, default=4.0)
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--label-model", default=None,
                   help="baseline checkpoint that generates pseudo-labels "
                        "(required for Model C)")
    p.add_argument("--history-out", default=None)
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("evaluate", help="frame error rate of a model on a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("experiment", help="run a full multi-seed experiment")
    p.add_argument("--config", default=None,
                   help="experiment config JSON (omit for the default grid)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="render a result table")
    p.add_argument("--table", required=True)
    p.add_argument("--format", choices=("csv", "text"), default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
