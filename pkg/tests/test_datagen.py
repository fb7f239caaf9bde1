import numpy as np
import pytest

from prunekit.datagen import (
    FrameCorpus,
    GeneratorSpec,
    calibration_subset,
    degrade_noise,
    degrade_reverb,
    frame_power,
    generate_clean,
    load_corpus,
    measure_snr,
    reverb_kernel,
    save_corpus,
)

SMALL = GeneratorSpec(feature_dim=4, context=0, segment_frames=(30, 80))


def test_spec_validation():
    bad = [
        dict(num_classes=1),
        dict(feature_dim=0),
        dict(markov_stay_prob=0.0),
        dict(markov_stay_prob=1.0),
        dict(root_compress=0.5),
        dict(context=-1),
        dict(frame_rate=0),
        dict(segment_frames=(0, 10)),
        dict(segment_frames=(10, 5)),
        dict(jitter=-0.1),
    ]
    for kwargs in bad:
        with pytest.raises(ValueError):
            GeneratorSpec(**kwargs)


def test_spec_round_trip_and_stacked_dim():
    spec = GeneratorSpec()
    assert spec.stacked_dim == 40 * 17
    assert GeneratorSpec.from_dict(spec.to_dict()) == spec
    doc = spec.to_dict()
    assert isinstance(doc["noise_snr_db"], list)


def test_generate_clean_is_deterministic():
    a = generate_clean(SMALL, 500, seed=3)
    b = generate_clean(SMALL, 500, seed=3)
    c = generate_clean(SMALL, 500, seed=4)
    assert np.array_equal(a.frames, b.frames)
    assert np.array_equal(a.labels, b.labels)
    assert a.segments == b.segments
    assert not np.array_equal(a.frames, c.frames)
    assert a.domain_tag == "in_domain"
    assert a.frames.shape == (500, SMALL.stacked_dim)


def test_generate_clean_rejects_streams_shorter_than_context():
    spec = GeneratorSpec(context=8)
    with pytest.raises(ValueError, match="context"):
        generate_clean(spec, 16)


def test_label_transitions_match_sticky_chain():
    corpus = generate_clean(SMALL, 100_000, seed=3)
    K = SMALL.num_classes
    counts = np.zeros((K, K))
    np.add.at(counts, (corpus.labels[:-1], corpus.labels[1:]), 1)
    emp = counts / counts.sum(axis=1, keepdims=True)
    stay = SMALL.markov_stay_prob
    want = np.full((K, K), (1 - stay) / (K - 1))
    np.fill_diagonal(want, stay)
    assert np.max(np.abs(emp - want)) < 0.02


def test_segments_partition_with_bounded_lengths():
    corpus = generate_clean(SMALL, 4000, seed=5)
    lo, hi = SMALL.segment_frames
    pos = 0
    for a, b in corpus.segments:
        assert a == pos
        assert lo <= b - a < hi + lo
        pos = b
    assert pos == 4000


def test_neighboring_frames_are_strongly_correlated():
    corpus = generate_clean(SMALL, 6000, seed=6)
    prev, nxt = [], []
    for a, b in corpus.segments:
        prev.append(corpus.frames[a:b - 1])
        nxt.append(corpus.frames[a + 1:b])
    prev, nxt = np.concatenate(prev), np.concatenate(nxt)
    corr = [np.corrcoef(prev[:, j], nxt[:, j])[0, 1] for j in range(prev.shape[1])]
    assert np.mean(corr) > 0.5


def test_degradations_require_raw_features():
    corpus = generate_clean(SMALL, 300, seed=0)
    stripped = FrameCorpus(corpus.frames, corpus.labels, corpus.segments,
                           corpus.domain_tag, corpus.spec, raw=None)
    with pytest.raises(ValueError, match="raw features"):
        degrade_noise(stripped, 10.0)
    with pytest.raises(ValueError, match="raw features"):
        degrade_reverb(stripped, 0.3)


def test_noise_at_infinite_snr_changes_nothing():
    corpus = generate_clean(SMALL, 600, seed=1)
    out = degrade_noise(corpus, np.inf, seed=9)
    assert np.array_equal(out.frames, corpus.frames)
    assert np.array_equal(out.raw, corpus.raw)
    assert out.domain_tag == "in_domain"


def test_noise_hits_target_snr_per_frame():
    corpus = generate_clean(SMALL, 1200, seed=2)
    out = degrade_noise(corpus, 0.0, seed=7)
    p_sig = frame_power(corpus.raw)
    p_noise = frame_power(out.raw - corpus.raw)
    assert np.allclose(p_noise, p_sig, rtol=1e-9)
    assert np.array_equal(out.labels, corpus.labels)
    assert out.segments == corpus.segments

    measured = measure_snr(corpus.raw, out.raw)
    assert abs(measured - 0.0) < 0.1


def test_noise_range_is_sampled_per_segment():
    corpus = generate_clean(SMALL, 2000, seed=3)
    out = degrade_noise(corpus, (5.0, 15.0), seed=11)
    per_seg = []
    for a, b in corpus.segments:
        per_seg.append(measure_snr(corpus.raw[a:b], out.raw[a:b]))
    per_seg = np.asarray(per_seg)
    assert np.all(per_seg > 5.0 - 0.1) and np.all(per_seg < 15.0 + 0.1)
    assert per_seg.std() > 0.5, "expected different draws across segments"
    again = degrade_noise(corpus, (5.0, 15.0), seed=11)
    assert np.array_equal(again.raw, out.raw)


def test_reverb_kernel_shape():
    tau = 0.3 * 100.0 / np.log(1e3)
    kernel = reverb_kernel(0.3, 100.0)
    assert kernel[0] == 1.0
    assert np.allclose(kernel[1:] / kernel[:-1], np.exp(-1.0 / tau))
    assert kernel[-1] < 1e-7
    assert np.array_equal(reverb_kernel(0.0, 100.0), [1.0])


def test_reverb_impulse_response_and_energy():
    spec = GeneratorSpec(feature_dim=3, context=0, segment_frames=(1, 500))
    T = 160
    raw = np.zeros((T, 3))
    raw[0, 0] = 1.0
    impulse = FrameCorpus(np.zeros((T, 3)), np.zeros(T, dtype=int),
                          [(0, T)], "in_domain", spec, raw=raw)
    out = degrade_reverb(impulse, 0.3)
    kernel = reverb_kernel(0.3, spec.frame_rate)
    assert len(kernel) < T
    assert np.array_equal(out.raw[: len(kernel), 0], kernel)
    assert np.all(out.raw[len(kernel):, 0] == 0)
    assert np.all(out.raw[:, 1:] == 0)
    ratio = out.raw.sum() / raw.sum()
    assert abs(ratio - kernel.sum()) < 1e-6


def test_reverb_zero_decay_keeps_features_but_tags_domain():
    corpus = generate_clean(SMALL, 500, seed=4)
    out = degrade_reverb(corpus, 0.0)
    assert np.array_equal(out.raw, corpus.raw)
    assert np.array_equal(out.frames, corpus.frames)
    assert out.domain_tag == "out_of_domain"


def test_reverb_validation_and_determinism():
    corpus = generate_clean(SMALL, 800, seed=5)
    with pytest.raises(ValueError, match="non-negative"):
        degrade_reverb(corpus, -0.2)
    a = degrade_reverb(corpus, (0.1, 0.8), seed=6)
    b = degrade_reverb(corpus, (0.1, 0.8), seed=6)
    assert np.array_equal(a.frames, b.frames)
    assert a.domain_tag == "out_of_domain"
    assert np.array_equal(a.labels, corpus.labels)


def test_smearing_shifts_the_normalized_features():
    # channels are normalized against fixed reference statistics, so the
    # energy added by smearing must stay visible as a mean offset
    corpus = generate_clean(SMALL, 3000, seed=8)
    out = degrade_reverb(corpus, (0.1, 0.8), seed=9)
    assert abs(corpus.frames.mean()) < 0.2
    assert out.frames.mean() > corpus.frames.mean() + 0.3


def test_calibration_subset_keeps_whole_segments():
    corpus = generate_clean(SMALL, 4000, seed=9)
    sub = calibration_subset(corpus, fraction=0.1, seed=3)
    assert sub.n_frames >= 0.1 * corpus.n_frames
    assert sub.n_frames < corpus.n_frames
    lengths = {b - a for a, b in corpus.segments}
    for a, b in sub.segments:
        assert b - a in lengths
    # every picked span matches a source segment's frames exactly
    starts = {corpus.raw[a:b].tobytes(): (a, b) for a, b in corpus.segments}
    for a, b in sub.segments:
        src = starts[sub.raw[a:b].tobytes()]
        assert np.array_equal(sub.frames[a:b],
                              corpus.frames[src[0]:src[1]])
        assert np.array_equal(sub.labels[a:b],
                              corpus.labels[src[0]:src[1]])
    again = calibration_subset(corpus, fraction=0.1, seed=3)
    assert np.array_equal(again.frames, sub.frames)


def test_calibration_subset_validation():
    corpus = generate_clean(SMALL, 500, seed=10)
    for fraction in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError, match="fraction"):
            calibration_subset(corpus, fraction=fraction)
    everything = calibration_subset(corpus, fraction=1.0)
    assert everything.n_frames == corpus.n_frames


def test_corpus_validation():
    corpus = generate_clean(SMALL, 300, seed=11)
    with pytest.raises(ValueError, match="align"):
        FrameCorpus(corpus.frames, corpus.labels[:-1], corpus.segments,
                    "in_domain", SMALL)
    with pytest.raises(ValueError, match="domain tag"):
        FrameCorpus(corpus.frames, corpus.labels, corpus.segments,
                    "shifted", SMALL)
    with pytest.raises(ValueError, match="contiguous"):
        FrameCorpus(corpus.frames, corpus.labels,
                    [(0, 100), (120, 300)], "in_domain", SMALL)
    with pytest.raises(ValueError, match="cover"):
        FrameCorpus(corpus.frames, corpus.labels,
                    [(0, 100)], "in_domain", SMALL)
    with pytest.raises(ValueError, match="class range"):
        FrameCorpus(corpus.frames, corpus.labels + SMALL.num_classes,
                    corpus.segments, "in_domain", SMALL)


def test_save_load_round_trip(tmp_path):
    corpus = degrade_noise(generate_clean(SMALL, 400, seed=12), 10.0, seed=13)
    path = tmp_path / "corpus.npz"
    save_corpus(corpus, path)
    back = load_corpus(path)
    assert np.array_equal(back.frames, corpus.frames)
    assert np.array_equal(back.labels, corpus.labels)
    assert np.array_equal(back.raw, corpus.raw)
    assert back.segments == corpus.segments
    assert back.domain_tag == corpus.domain_tag
    assert back.spec == corpus.spec

    stripped = FrameCorpus(corpus.frames, corpus.labels, corpus.segments,
                           corpus.domain_tag, corpus.spec, raw=None)
    save_corpus(stripped, tmp_path / "lean.npz")
    assert load_corpus(tmp_path / "lean.npz").raw is None


def test_trained_model_degrades_on_shifted_data(desk):
    # the out-of-domain condition has to actually hurt a competent model
    from prunekit.training import evaluate

    corpora = desk["corpora"]
    for seed, net in desk["baselines"].items():
        err_in = evaluate(net, corpora["eval_in"])
        err_out = evaluate(net, corpora["eval_ood"])
        assert err_out > err_in, (seed, err_in, err_out)
