import dataclasses
import time

import pytest

from prunekit.adaptation import run_adaptation_suite
from prunekit.datagen import calibration_subset
from prunekit.harness import ExperimentConfig
from prunekit.network import init_network
from prunekit.pruning import LayerPrune, PrunePlan, build_mask
from prunekit.saliency import MIConfig, mi_saliency
from prunekit.training import train

_criterion_lines = []


def record_criterion(line):
    """Collect an acceptance line; echoed again in the terminal summary."""
    _criterion_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk():
    """Default-config corpora, trained baselines, and adaptation suites.

    Everything downstream of the default experiment setup (the acceptance
    checks and the domain-shift sanity tests) shares this one build.  The
    elapsed build time is recorded so runtime budgets can account for it.
    """
    t0 = time.time()
    cfg = ExperimentConfig.default()
    corpora = cfg.corpus.build()
    calib = calibration_subset(
        corpora["train"], cfg.calibration_fraction, seed=cfg.corpus.data_seed + 101
    )

    baselines = {}
    histories = {}
    for seed in cfg.seeds:
        net = init_network(
            corpora["train"].frames.shape[1],
            cfg.hidden_widths,
            cfg.corpus.spec.num_classes,
            hidden_activation=cfg.activation,
            seed=seed,
        )
        net, hist = train(
            net, corpora["train"], corpora["cv"], dataclasses.replace(cfg.train, seed=seed)
        )
        baselines[seed] = net
        histories[seed] = hist
    train_seconds = time.time() - t0

    update_masks = {}
    suites = {}
    for seed in cfg.seeds:
        reports = [
            mi_saliency(baselines[seed], layer, calib, MIConfig(cfg.mi_window))
            for layer in cfg.mask_layers
        ]
        plan = PrunePlan(
            [
                LayerPrune(layer, cfg.mask_method, "hypo+hyper",
                           cfg.mask_hypo_pct, cfg.mask_hyper_pct)
                for layer in cfg.mask_layers
            ]
        )
        update_masks[seed] = build_mask(reports, plan)
        suites[seed] = run_adaptation_suite(
            baselines[seed],
            corpora["adapt"],
            corpora["train"],
            cfg=dataclasses.replace(cfg.adapt_cfg, seed=seed),
            update_mask=update_masks[seed],
            mix=cfg.adapt_mix,
        )

    return {
        "config": cfg,
        "corpora": corpora,
        "calib": calib,
        "baselines": baselines,
        "histories": histories,
        "update_masks": update_masks,
        "suites": suites,
        "train_seconds": train_seconds,
        "build_seconds": time.time() - t0,
    }
