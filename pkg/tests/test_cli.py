import json

import numpy as np
import pytest

from prunekit.adaptation import AdaptConfig
from prunekit.cli import main
from prunekit.datagen import GeneratorSpec, load_corpus
from prunekit.harness import CorpusConfig, ExperimentConfig, ResultTable
from prunekit.network import load_checkpoint
from prunekit.pruning import PruneMask, PrunePlan
from prunekit.saliency import SaliencyReport
from prunekit.training import TrainConfig

SPEC = GeneratorSpec(num_classes=4, feature_dim=6, context=1,
                     segment_frames=(12, 30))


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """One directory with every pipeline artifact, produced via the CLI."""
    root = tmp_path_factory.mktemp("cli")
    paths = {name: str(root / name) for name in (
        "spec.json", "train.npz", "cv.npz", "shifted.npz", "model.json",
        "history.json", "sal_mbp.json", "sal_obs.json", "sal_mi_1.json",
        "sal_mi_2.json", "pruned.json", "mask.json", "pruned_small.json",
        "eval.json", "adapted_b.json", "adapted_c.json", "config.json",
    )}
    paths["expdir"] = str(root / "exp")

    with open(paths["spec.json"], "w") as fh:
        json.dump(SPEC.to_dict(), fh)

    steps = [
        ["generate-data", "--out", paths["train.npz"], "--frames", "500",
         "--seed", "0", "--condition", "noisy", "--snr", "5,15",
         "--spec", paths["spec.json"]],
        ["generate-data", "--out", paths["cv.npz"], "--frames", "200",
         "--seed", "1", "--condition", "noisy", "--snr", "5,15",
         "--degrade-seed", "2", "--spec", paths["spec.json"]],
        ["generate-data", "--out", paths["shifted.npz"], "--frames", "300",
         "--seed", "3", "--condition", "reverb", "--decay", "0.2,0.5",
         "--degrade-seed", "4", "--spec", paths["spec.json"]],
        ["train", "--train", paths["train.npz"], "--cv", paths["cv.npz"],
         "--out", paths["model.json"], "--hidden", "12,10",
         "--max-epochs", "2", "--batch-size", "64",
         "--history-out", paths["history.json"]],
        ["saliency", "--model", paths["model.json"], "--method", "mbp",
         "--layer", "1", "--out", paths["sal_mbp.json"]],
        ["saliency", "--model", paths["model.json"], "--method", "obs",
         "--layer", "1", "--calib", paths["train.npz"],
         "--out", paths["sal_obs.json"]],
        ["saliency", "--model", paths["model.json"], "--method", "mi",
         "--layer", "1", "--calib", paths["train.npz"], "--window", "6",
         "--out", paths["sal_mi_1.json"]],
        ["saliency", "--model", paths["model.json"], "--method", "mi",
         "--layer", "2", "--calib", paths["train.npz"], "--window", "6",
         "--out", paths["sal_mi_2.json"]],
        ["prune", "--model", paths["model.json"], "--method", "mbp",
         "--layers", "1", "--hypo", "10", "--band", "hypo",
         "--out-model", paths["pruned.json"], "--out-mask", paths["mask.json"]],
        ["prune", "--model", paths["model.json"], "--method", "mbp",
         "--layers", "1", "--hypo", "10", "--band", "hypo", "--structural",
         "--out-model", paths["pruned_small.json"]],
        ["evaluate", "--model", paths["model.json"],
         "--corpus", paths["shifted.npz"], "--out", paths["eval.json"]],
        ["adapt", "--model", paths["model.json"], "--variant", "B",
         "--adapt-corpus", paths["shifted.npz"],
         "--orig-corpus", paths["train.npz"],
         "--mask-from", paths["sal_mi_1.json"], paths["sal_mi_2.json"],
         "--epochs", "1", "--out", paths["adapted_b.json"]],
        ["adapt", "--model", paths["adapted_b.json"], "--variant", "C",
         "--adapt-corpus", paths["shifted.npz"],
         "--orig-corpus", paths["train.npz"],
         "--label-model", paths["model.json"], "--mix", "0.5",
         "--epochs", "1", "--out", paths["adapted_c.json"]],
    ]
    for argv in steps:
        assert main(argv) == 0, argv

    cfg = ExperimentConfig(
        corpus=CorpusConfig(spec=SPEC, train_frames=400, cv_frames=150,
                            eval_frames=200, adapt_frames=150, data_seed=500),
        hidden_widths=(12, 10, 8),
        train=TrainConfig(batch_size=64, max_epochs=2, seed=0),
        prune_plans=[PrunePlan.single("mbp", 1, "hypo", hypo_pct=8.0)],
        adapt_variants=("A", "B"),
        adapt_cfg=AdaptConfig(max_epochs=2),
        mi_window=6,
        seeds=(0, 1),
    )
    cfg.save(paths["config.json"])
    assert main(["experiment", "--config", paths["config.json"],
                 "--out-dir", paths["expdir"], "--workers", "1"]) == 0
    return paths


def test_generated_corpora(ws):
    train = load_corpus(ws["train.npz"])
    assert train.n_frames == 500
    assert train.domain_tag == "in_domain"
    assert train.spec == SPEC
    shifted = load_corpus(ws["shifted.npz"])
    assert shifted.domain_tag == "out_of_domain"


def test_trained_checkpoint_and_history(ws):
    net = load_checkpoint(ws["model.json"])
    assert net.widths == [SPEC.stacked_dim, 12, 10, SPEC.num_classes]
    with open(ws["history.json"]) as fh:
        history = json.load(fh)
    assert len(history) == 2
    assert set(history[0]) == {"epoch", "lr", "train_loss", "cv_error"}


def test_saliency_artifacts(ws):
    for name, method in (("sal_mbp.json", "mbp"), ("sal_obs.json", "obs"),
                         ("sal_mi_1.json", "mi")):
        rep = SaliencyReport.load(ws[name])
        assert rep.method == method
        assert rep.layer_index == 1
        assert rep.width == 12
    assert SaliencyReport.load(ws["sal_mi_2.json"]).layer_index == 2


def test_pruned_models_agree(ws):
    net = load_checkpoint(ws["model.json"])
    masked = load_checkpoint(ws["pruned.json"])
    small = load_checkpoint(ws["pruned_small.json"])
    mask = PruneMask.load(ws["mask.json"])
    assert mask.n_pruned() == 1
    assert masked.widths == net.widths
    assert masked.keep_masks[1].sum() == 11
    assert small.widths == [SPEC.stacked_dim, 11, 10, SPEC.num_classes]

    from prunekit.network import forward
    X = np.random.default_rng(0).standard_normal((5, SPEC.stacked_dim))
    a, _ = forward(masked, X)
    b, _ = forward(small, X)
    assert np.max(np.abs(a - b)) < 1e-12


def test_evaluation_json(ws):
    with open(ws["eval.json"]) as fh:
        doc = json.load(fh)
    assert doc["domain_tag"] == "out_of_domain"
    assert 0.0 <= doc["frame_error_rate"] <= 1.0


def test_adapted_checkpoints(ws):
    net = load_checkpoint(ws["model.json"])
    b = load_checkpoint(ws["adapted_b.json"])
    c = load_checkpoint(ws["adapted_c.json"])
    assert not b.params_equal(net)
    assert not c.params_equal(b)
    # the selective variant's masks name layers 1 and 2, so the output layer
    # must come back bit-identical
    assert np.array_equal(b.layers[2].weights, net.layers[2].weights)
    assert np.array_equal(b.layers[2].biases, net.layers[2].biases)


def test_experiment_directory(ws):
    import os

    for name in ("results.csv", "results.txt", "failures.json", "config.json"):
        assert os.path.exists(os.path.join(ws["expdir"], name))
    table = ResultTable.load(os.path.join(ws["expdir"], "results.csv"))
    assert [r.experiment_id for r in table.rows] == \
        ["adapt:A", "adapt:B", "baseline", "prune:mbp:L1:hypo:8/0"]
    with open(os.path.join(ws["expdir"], "failures.json")) as fh:
        assert json.load(fh) == {}
    saved = ExperimentConfig.load(os.path.join(ws["expdir"], "config.json"))
    assert saved == ExperimentConfig.load(ws["config.json"])


def test_report_rendering(ws, capsys):
    import os

    csv_path = os.path.join(ws["expdir"], "results.csv")
    assert main(["report", "--table", csv_path, "--format", "csv"]) == 0
    with open(csv_path) as fh:
        assert capsys.readouterr().out == fh.read()
    assert main(["report", "--table", csv_path]) == 0
    assert "baseline" in capsys.readouterr().out


def test_experiment_exit_code_flags_failures(ws, tmp_path):
    cfg = ExperimentConfig.load(ws["config.json"])
    import dataclasses

    bad = dataclasses.replace(
        cfg,
        prune_plans=[PrunePlan.single("mbp", 99, "hypo", hypo_pct=8.0)],
        adapt_variants=(),
    )
    bad_path = tmp_path / "bad.json"
    bad.save(bad_path)
    out_dir = tmp_path / "exp"
    assert main(["experiment", "--config", str(bad_path),
                 "--out-dir", str(out_dir), "--workers", "1"]) == 1
    with open(out_dir / "failures.json") as fh:
        assert json.load(fh)


def test_mi_saliency_requires_calibration_data(ws, tmp_path):
    with pytest.raises(SystemExit, match="calib"):
        main(["saliency", "--model", ws["model.json"], "--method", "mi",
              "--layer", "1", "--out", str(tmp_path / "nope.json")])


def test_unknown_command_is_rejected(capsys):
    with pytest.raises(SystemExit):
        main(["frobnicate"])
    capsys.readouterr()


def test_blind_variant_rejects_mixing(ws, tmp_path):
    with pytest.raises(ValueError, match="data_mix"):
        main(["adapt", "--model", ws["model.json"], "--variant", "A",
              "--adapt-corpus", ws["shifted.npz"],
              "--orig-corpus", ws["train.npz"], "--mix", "0.5",
              "--epochs", "1", "--out", str(tmp_path / "nope.json")])
