"""Declarative experiment runner: baselines, pruning cells, adaptation cells.

One :class:`ExperimentConfig` describes the whole run: the synthetic corpora,
the model shape, training settings, a list of prune plans, and the adaptation
variants.  ``run_experiment`` trains one baseline per seed (the corpora are
shared across seeds), evaluates every cell on the in-domain and out-of-domain
eval splits, and aggregates mean and sample std over seeds into a
:class:`ResultTable` whose CSV rendering is byte-stable for a fixed config.

Cell failures are recorded per cell and do not stop the run.  Independent
cells may execute concurrently; the worker count comes from the
``PRUNEKIT_WORKERS`` environment variable unless given explicitly.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adaptation import AdaptConfig, run_adaptation_suite
from .datagen import (
    GeneratorSpec,
    calibration_subset,
    degrade_noise,
    degrade_reverb,
    generate_clean,
)
from .network import init_network
from .pruning import LayerPrune, PruneMask, PrunePlan, apply_mask, build_mask
from .saliency import MIConfig, mbp_saliency, mi_saliency, obs_saliency
from .training import TrainConfig, evaluate, train


@dataclass
class CorpusConfig:
    """Recipe for the five corpora one experiment uses.

    The same corpora serve every seed; only model initialization and batch
    order vary across seeds.
    """

    spec: GeneratorSpec = field(default_factory=GeneratorSpec)
    train_frames: int = 6000
    cv_frames: int = 600
    eval_frames: int = 3000
    adapt_frames: int = 2000
    train_snr_db: object = None  # defaults to spec.noise_snr_db
    eval_decay: object = None    # defaults to spec.reverb_decay
    adapt_decay: object = (0.04, 0.25)  # adaptation data is milder than eval
    data_seed: int = 1000

    def build(self):
        spec = self.spec
        snr = self.train_snr_db if self.train_snr_db is not None else spec.noise_snr_db
        decay = self.eval_decay if self.eval_decay is not None else spec.reverb_decay
        adecay = self.adapt_decay if self.adapt_decay is not None else decay
        s = self.data_seed
        return {
            "train": degrade_noise(
                generate_clean(spec, self.train_frames, s), snr, s + 1
            ),
            "cv": degrade_noise(
                generate_clean(spec, self.cv_frames, s + 2), snr, s + 3
            ),
            "eval_in": degrade_noise(
                generate_clean(spec, self.eval_frames, s + 4), snr, s + 5
            ),
            "eval_ood": degrade_reverb(
                generate_clean(spec, self.eval_frames, s + 6), decay, s + 7
            ),
            "adapt": degrade_reverb(
                generate_clean(spec, self.adapt_frames, s + 8), adecay, s + 9
            ),
        }

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["spec"] = self.spec.to_dict()
        for key in ("train_snr_db", "eval_decay", "adapt_decay"):
            v = d[key]
            if isinstance(v, tuple):
                d[key] = list(v)
        return d

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if "spec" in doc:
            doc["spec"] = GeneratorSpec.from_dict(doc["spec"])
        for key in ("train_snr_db", "eval_decay", "adapt_decay"):
            if isinstance(doc.get(key), list):
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass
class ExperimentConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    hidden_widths: tuple = (128, 128, 128)
    activation: str = "sigmoid"
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(batch_size=64, max_epochs=8, l2=3e-4)
    )
    prune_plans: list = field(default_factory=list)
    adapt_variants: tuple = ("A", "B", "C", "D")
    adapt_cfg: AdaptConfig = field(default_factory=AdaptConfig)
    adapt_mix: float = 0.5
    mask_method: str = "mi"
    mask_layers: tuple = (1, 2)
    mask_hypo_pct: float = 8.0
    mask_hyper_pct: float = 4.0
    mi_window: int = 10
    calibration_fraction: float = 0.1
    seeds: tuple = (0, 1, 2)

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        if not self.hidden_widths:
            raise ValueError("hidden_widths must be nonempty")
        for plan in self.prune_plans:
            for rule in plan.rules:
                for pct in (rule.hypo_pct, rule.hyper_pct):
                    if not 0 <= pct < 100:
                        raise ValueError(f"percentage {pct} out of range")

    @classmethod
    def default(cls):
        """Compact grid touching every method and band plus all four variants."""
        plans = [
            PrunePlan.single("mbp", 1, "hypo", hypo_pct=4.0),
            PrunePlan.single("mbp", 1, "hypo", hypo_pct=8.0),
            PrunePlan.single("mbp", 1, "mid", hypo_pct=4.0),
            PrunePlan.single("obs", 2, "hyper", hyper_pct=4.0),
            PrunePlan.single("mi", 1, "hypo+hyper", 8.0, 4.0),
            PrunePlan.multi_layer("mi", (1, 2, 3)),
        ]
        return cls(prune_plans=plans)

    def to_dict(self):
        return {
            "corpus": self.corpus.to_dict(),
            "hidden_widths": list(self.hidden_widths),
            "activation": self.activation,
            "train": dataclasses.asdict(self.train),
            "prune_plans": [plan.to_dict() for plan in self.prune_plans],
            "adapt_variants": list(self.adapt_variants),
            "adapt_cfg": {
                k: v
                for k, v in dataclasses.asdict(self.adapt_cfg).items()
                if k != "update_mask"
            },
            "adapt_mix": self.adapt_mix,
            "mask_method": self.mask_method,
            "mask_layers": list(self.mask_layers),
            "mask_hypo_pct": self.mask_hypo_pct,
            "mask_hyper_pct": self.mask_hyper_pct,
            "mi_window": self.mi_window,
            "calibration_fraction": self.calibration_fraction,
            "seeds": list(self.seeds),
        }

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if "corpus" in doc:
            doc["corpus"] = CorpusConfig.from_dict(doc["corpus"])
        if "train" in doc:
            doc["train"] = TrainConfig(**doc["train"])
        if "prune_plans" in doc:
            doc["prune_plans"] = [PrunePlan.from_dict(p) for p in doc["prune_plans"]]
        if "adapt_cfg" in doc:
            doc["adapt_cfg"] = AdaptConfig(**doc["adapt_cfg"])
        for key in ("hidden_widths", "adapt_variants", "mask_layers", "seeds"):
            if isinstance(doc.get(key), list):
                doc[key] = tuple(doc[key])
        return cls(**doc)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ResultRow:
    experiment_id: str
    method: str
    layers: str
    pct: float | None
    net_pct: float | None
    in_mean: float
    in_std: float
    out_mean: float
    out_std: float

    COLUMNS = (
        "experiment_id", "method", "layers", "pct", "net_pct",
        "in_mean", "in_std", "out_mean", "out_std",
    )


def _fmt(value):
    return "" if value is None else repr(float(value))


def _parse(value):
    return None if value == "" else float(value)


class ResultTable:
    """Aggregated rows sorted by experiment id, plus per-cell failures."""

    def __init__(self, rows, failures=None):
        self.rows = sorted(rows, key=lambda r: r.experiment_id)
        self.failures = dict(failures or {})

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, ResultTable):
            return NotImplemented
        return self.to_csv() == other.to_csv()

    def row(self, experiment_id):
        for row in self.rows:
            if row.experiment_id == experiment_id:
                return row
        raise KeyError(experiment_id)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(ResultRow.COLUMNS)
        for r in self.rows:
            writer.writerow(
                [
                    r.experiment_id, r.method, r.layers, _fmt(r.pct),
                    _fmt(r.net_pct), _fmt(r.in_mean), _fmt(r.in_std),
                    _fmt(r.out_mean), _fmt(r.out_std),
                ]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != ResultRow.COLUMNS:
            raise ValueError("unrecognized result table header")
        rows = []
        for rec in reader:
            if not rec:
                continue
            rows.append(
                ResultRow(
                    rec[0], rec[1], rec[2], _parse(rec[3]), _parse(rec[4]),
                    float(rec[5]), float(rec[6]), float(rec[7]), float(rec[8]),
                )
            )
        return cls(rows)

    def to_text(self):
        lines = ["metric: frame error rate (mean +- sample std over seeds)"]
        header = f"{'experiment':<40} {'in-domain':>20} {'out-of-domain':>20}"
        lines.append(header)
        lines.append("-" * len(header))
        for r in self.rows:
            lines.append(
                f"{r.experiment_id:<40} "
                f"{r.in_mean:.4f} +- {r.in_std:.4f}    "
                f"{r.out_mean:.4f} +- {r.out_std:.4f}"
            )
        if self.failures:
            lines.append("")
            lines.append("failed cells:")
            for cell in sorted(self.failures):
                lines.append(f"  {cell}: {self.failures[cell]}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_csv(fh.read())


def report(table, format):
    """Render a table as ``csv`` or ``text``."""
    if not table.rows:
        raise ValueError("result table is empty")
    if format == "csv":
        return table.to_csv()
    if format == "text":
        return table.to_text()
    raise ValueError(f"unknown report format {format!r}")


def _aggregate(values):
    values = np.asarray(values, dtype=np.float64)
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return mean, std


def plan_id(plan):
    method = plan.rules[0].method
    parts = [
        f"L{r.layer}:{r.band}:{r.hypo_pct:g}/{r.hyper_pct:g}" for r in plan.rules
    ]
    return f"prune:{method}:" + ",".join(parts)


def compute_report(net, method, layer, calib, mi_window=10):
    if method == "mbp":
        return mbp_saliency(net, layer)
    if method == "obs":
        return obs_saliency(net, layer, calib)
    if method == "mi":
        return mi_saliency(net, layer, calib, MIConfig(window_q=mi_window))
    raise ValueError(f"unknown saliency method {method!r}")


def run_experiment(cfg, workers=None):
    """Execute every configured cell; aggregate over the surviving seeds."""
    if workers is None:
        workers = int(os.environ.get("PRUNEKIT_WORKERS", "1"))
    workers = max(1, workers)

    corpora = cfg.corpus.build()
    input_width = corpora["train"].frames.shape[1]
    n_classes = cfg.corpus.spec.num_classes
    calib = calibration_subset(
        corpora["train"], cfg.calibration_fraction, seed=cfg.corpus.data_seed + 101
    )

    failures = {}
    baselines = {}
    for seed in cfg.seeds:
        try:
            net = init_network(
                input_width, cfg.hidden_widths, n_classes,
                hidden_activation=cfg.activation, seed=seed,
            )
            tcfg = dataclasses.replace(cfg.train, seed=seed)
            net, _ = train(net, corpora["train"], corpora["cv"], tcfg)
            baselines[seed] = net
        except Exception as exc:  # noqa: BLE001 - cell isolation by contract
            failures[f"baseline[seed={seed}]"] = str(exc)
    seeds = [s for s in cfg.seeds if s in baselines]
    if not seeds:
        return ResultTable([], failures)

    rows = [
        ResultRow(
            "baseline", "", "", None, None,
            *_aggregate([evaluate(baselines[s], corpora["eval_in"]) for s in seeds]),
            *_aggregate([evaluate(baselines[s], corpora["eval_ood"]) for s in seeds]),
        )
    ]

    needed = set()
    for plan in cfg.prune_plans:
        for rule in plan.rules:
            needed.add((rule.method, rule.layer))
    variants = tuple(cfg.adapt_variants)
    if "B" in variants or "C" in variants:
        for layer in cfg.mask_layers:
            needed.add((cfg.mask_method, layer))

    reports = {}
    for seed in seeds:
        reports[seed] = {}
        for method, layer in sorted(needed):
            try:
                reports[seed][(method, layer)] = compute_report(
                    baselines[seed], method, layer, calib, cfg.mi_window
                )
            except Exception as exc:  # noqa: BLE001
                failures[f"saliency:{method}:L{layer}[seed={seed}]"] = str(exc)

    def prune_cell(plan):
        cell = plan_id(plan)
        errs_in, errs_out = [], []
        net_pct = None
        for seed in seeds:
            mask = build_mask(list(reports[seed].values()), plan)
            net_pct = 100.0 * mask.overall_fraction(cfg.hidden_widths)
            pruned = apply_mask(baselines[seed], mask)
            errs_in.append(evaluate(pruned, corpora["eval_in"]))
            errs_out.append(evaluate(pruned, corpora["eval_ood"]))
        lead = plan.rules[0]
        return ResultRow(
            cell,
            lead.method,
            "+".join(str(l) for l in plan.layers),
            lead.hypo_pct + lead.hyper_pct,
            net_pct,
            *_aggregate(errs_in),
            *_aggregate(errs_out),
        )

    def adapt_cells():
        per_variant = {v: {"in": [], "out": []} for v in variants}
        for seed in seeds:
            update_mask = None
            if "B" in variants or "C" in variants:
                mask_plan = PrunePlan(
                    [
                        LayerPrune(
                            layer, cfg.mask_method, "hypo+hyper",
                            cfg.mask_hypo_pct, cfg.mask_hyper_pct,
                        )
                        for layer in cfg.mask_layers
                    ]
                )
                update_mask = build_mask(list(reports[seed].values()), mask_plan)
            acfg = dataclasses.replace(cfg.adapt_cfg, seed=seed)
            suite = run_adaptation_suite(
                baselines[seed], corpora["adapt"], corpora["train"],
                cfg=acfg, update_mask=update_mask, mix=cfg.adapt_mix,
                variants=variants,
            )
            for v in variants:
                net = suite[v][0]
                per_variant[v]["in"].append(evaluate(net, corpora["eval_in"]))
                per_variant[v]["out"].append(evaluate(net, corpora["eval_ood"]))
        out = []
        for v in variants:
            out.append(
                ResultRow(
                    f"adapt:{v}", "", "", None, None,
                    *_aggregate(per_variant[v]["in"]),
                    *_aggregate(per_variant[v]["out"]),
                )
            )
        return out

    jobs = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for plan in cfg.prune_plans:
            jobs.append((plan_id(plan), pool.submit(prune_cell, plan)))
        if variants:
            jobs.append(("adapt", pool.submit(adapt_cells)))
        for cell, fut in jobs:
            try:
                result = fut.result()
            except Exception as exc:  # noqa: BLE001
                failures[cell] = str(exc)
                continue
            if isinstance(result, list):
                rows.extend(result)
            else:
                rows.append(result)
    return ResultTable(rows, failures)
