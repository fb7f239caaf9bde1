"""Synthetic domain-shifted frame-classification corpora.

The generator produces time-ordered streams of positive linear-power feature
frames.  Class labels follow a sticky Markov chain; each class emits a fixed
spectral envelope modulated by a slow quasi-periodic component, so features
are strongly correlated across neighboring frames.  Streams are split into
segments (utterance analogs) and two degradations are available:

* additive colored noise at a controlled per-frame SNR (in-domain condition);
* causal exponential temporal smearing within segments (out-of-domain).

Degradations act on the raw linear-power features.  The published frames are
root-compressed, per-channel normalized, and context-stacked; context windows
clamp at segment edges and never cross a boundary.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

DOMAIN_TAGS = ("in_domain", "out_of_domain")


@dataclass
class GeneratorSpec:
    num_classes: int = 8
    feature_dim: int = 40
    markov_stay_prob: float = 0.96
    noise_snr_db: tuple = (0.0, 15.0)
    reverb_decay: tuple = (0.1, 0.8)
    root_compress: float = 15.0
    context: int = 8
    frame_rate: float = 100.0
    segment_frames: tuple = (40, 120)
    emission_seed: int = 0
    jitter: float = 0.05

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        if not 0.0 < self.markov_stay_prob < 1.0:
            raise ValueError("markov_stay_prob must lie strictly inside (0, 1)")
        if self.root_compress < 1:
            raise ValueError("root_compress must be >= 1")
        if self.context < 0:
            raise ValueError("context must be non-negative")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        lo, hi = self.segment_frames
        if not 1 <= lo <= hi:
            raise ValueError("segment_frames must be an increasing positive range")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")

    @property
    def stacked_dim(self):
        return self.feature_dim * (2 * self.context + 1)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["noise_snr_db"] = list(self.noise_snr_db)
        d["reverb_decay"] = list(self.reverb_decay)
        d["segment_frames"] = list(self.segment_frames)
        return d

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        for key in ("noise_snr_db", "reverb_decay", "segment_frames"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass
class FrameCorpus:
    """Stacked feature frames with labels, segment spans, and a domain tag.

    ``raw`` keeps the uncompressed linear-power features so degradations can
    be applied after generation; it is optional on disk.
    """

    frames: np.ndarray
    labels: np.ndarray
    segments: list
    domain_tag: str
    spec: GeneratorSpec
    raw: np.ndarray | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.frames.ndim != 2:
            raise ValueError("frames must be 2-D")
        if self.labels.shape != (self.frames.shape[0],):
            raise ValueError("labels must align with frames")
        if self.domain_tag not in DOMAIN_TAGS:
            raise ValueError(f"unknown domain tag {self.domain_tag!r}")
        if self.labels.size and not (
            0 <= self.labels.min() and self.labels.max() < self.spec.num_classes
        ):
            raise ValueError("labels out of class range")
        self.segments = [(int(a), int(b)) for a, b in self.segments]
        pos = 0
        for a, b in self.segments:
            if a != pos or b <= a:
                raise ValueError("segments must partition the stream contiguously")
            pos = b
        if pos != self.frames.shape[0]:
            raise ValueError("segments do not cover the stream")

    @property
    def n_frames(self):
        return self.frames.shape[0]


def _class_emissions(spec):
    """Per-class envelope, modulation period/depth, and channel phases.

    Drawn from ``emission_seed`` so every corpus built from the same spec
    shares one class-conditional structure.
    """
    rng = np.random.default_rng(spec.emission_seed)
    F, K = spec.feature_dim, spec.num_classes
    grid = np.arange(F)
    envelopes = np.empty((K, F))
    for c in range(K):
        env = np.full(F, 0.2)
        for _ in range(3):
            center = rng.uniform(0, F)
            width = rng.uniform(F / 12, F / 4)
            height = rng.uniform(0.5, 1.5)
            env += height * np.exp(-0.5 * ((grid - center) / width) ** 2)
        envelopes[c] = env
    periods = rng.integers(8, 21, size=K)
    depths = rng.uniform(0.3, 0.7, size=K)
    phases = rng.uniform(0, 2 * np.pi, size=(K, F))
    return envelopes, periods, depths, phases


def _draw_segments(length, lo, hi, rng):
    spans = []
    pos = 0
    while pos < length:
        n = int(rng.integers(lo, hi + 1))
        if length - pos - n < lo:
            n = length - pos  # absorb the remainder into the final segment
        spans.append((pos, pos + n))
        pos += n
    return spans


def _compress(raw, root):
    return np.power(np.maximum(raw, 0.0), 1.0 / root)


def _markov_labels(spec, length, rng):
    K = spec.num_classes
    labels = np.empty(length, dtype=np.int64)
    labels[0] = rng.integers(K)
    for t in range(1, length):
        if rng.random() < spec.markov_stay_prob:
            labels[t] = labels[t - 1]
        else:
            step = rng.integers(1, K)  # uniform over the other classes
            labels[t] = (labels[t - 1] + step) % K
    return labels


def _emit(spec, labels, rng):
    envelopes, periods, depths, phases = _class_emissions(spec)
    t = np.arange(len(labels))[:, None]
    mod = 1.0 + depths[labels, None] * np.sin(
        2 * np.pi * t / periods[labels, None] + phases[labels]
    )
    raw = envelopes[labels] * mod
    raw += spec.jitter * np.abs(rng.standard_normal(raw.shape))
    return raw


_REF_FRAMES = 4096
_REF_SEED = 97
_ref_cache = {}


def _reference_stats(spec):
    """Fixed per-channel mean/std of the compressed clean process.

    Computed once per spec from an internal fixed-seed stream, mimicking
    global mean/variance normalization estimated on training data.  Every
    corpus shares one normalization, so a degradation that shifts the
    feature distribution stays visible after it.
    """
    key = json.dumps(spec.to_dict(), sort_keys=True)
    hit = _ref_cache.get(key)
    if hit is None:
        rng = np.random.default_rng(_REF_SEED)
        labels = _markov_labels(spec, _REF_FRAMES, rng)
        compressed = _compress(_emit(spec, labels, rng), spec.root_compress)
        mu = compressed.mean(axis=0)
        sd = np.where(compressed.std(axis=0) < 1e-12, 1.0, compressed.std(axis=0))
        hit = _ref_cache[key] = (mu, sd)
    return hit


def _standardize(compressed, spec):
    """Normalize channels by the spec's fixed reference statistics.

    Root compression leaves features in a narrow band around 1; classifiers
    expect the usual normalized front end.
    """
    mu, sd = _reference_stats(spec)
    return (compressed - mu) / sd


def _stack(compressed, context, segments):
    """Context-stack per segment; window indices clamp at segment edges."""
    if context == 0:
        return compressed.copy()
    T, F = compressed.shape
    out = np.empty((T, F * (2 * context + 1)))
    offsets = np.arange(-context, context + 1)
    for a, b in segments:
        t = np.arange(a, b)
        idx = np.clip(t[:, None] + offsets[None, :], a, b - 1)
        out[a:b] = compressed[idx].reshape(b - a, -1)
    return out


def _rebuild(corpus, raw, domain_tag):
    frames = _stack(
        _standardize(_compress(raw, corpus.spec.root_compress), corpus.spec),
        corpus.spec.context,
        corpus.segments,
    )
    return FrameCorpus(
        frames=frames,
        labels=corpus.labels.copy(),
        segments=list(corpus.segments),
        domain_tag=domain_tag,
        spec=corpus.spec,
        raw=raw,
    )


def generate_clean(spec, length, seed=0):
    """Markov-labeled clean stream, deterministic per (spec, length, seed)."""
    if length <= 2 * spec.context:
        raise ValueError("length must exceed the full context window")
    rng = np.random.default_rng(seed)
    labels = _markov_labels(spec, length, rng)
    segments = _draw_segments(length, *spec.segment_frames, rng=rng)
    raw = _emit(spec, labels, rng)

    frames = _stack(
        _standardize(_compress(raw, spec.root_compress), spec),
        spec.context,
        segments,
    )
    return FrameCorpus(frames, labels, segments, "in_domain", spec, raw=raw)


def frame_power(raw):
    """Per-frame power of linear-power features (their sum)."""
    return np.sum(raw, axis=1)


def measure_snr(clean_raw, degraded_raw):
    """Corpus-level SNR in dB between a stream and its degraded version."""
    noise = degraded_raw - clean_raw
    p_noise = float(np.sum(noise))
    if p_noise <= 0:
        return np.inf
    return 10.0 * np.log10(float(np.sum(clean_raw)) / p_noise)


def _require_raw(corpus, op):
    if corpus.raw is None:
        raise ValueError(f"{op} needs a corpus with raw features attached")
    return corpus.raw


def degrade_noise(corpus, snr_db, seed=0):
    """Additive colored noise at an exact per-frame SNR; labels unchanged.

    ``snr_db`` is a scalar or a (low, high) range sampled per segment.
    """
    raw = _require_raw(corpus, "degrade_noise")
    if np.isscalar(snr_db) and np.isinf(snr_db):
        return _rebuild(corpus, raw.copy(), "in_domain")
    rng = np.random.default_rng(seed)

    # colored noise: squared smoothed gaussian, correlated across channels;
    # "same" convolution needs the kernel no longer than the channel axis
    g = rng.standard_normal(raw.shape)
    width = min(5, raw.shape[1])
    kernel = np.ones(width) / width
    g = np.apply_along_axis(lambda v: np.convolve(v, kernel, mode="same"), 1, g)
    noise = g ** 2 + 1e-12

    out = raw.copy()
    for a, b in corpus.segments:
        target = snr_db if np.isscalar(snr_db) else rng.uniform(*snr_db)
        gain = 10.0 ** (-float(target) / 10.0)
        p_sig = frame_power(raw[a:b])
        p_noise = frame_power(noise[a:b])
        scale = p_sig * gain / p_noise
        out[a:b] = raw[a:b] + noise[a:b] * scale[:, None]
    return _rebuild(corpus, out, "in_domain")


def reverb_kernel(decay, frame_rate):
    """Causal exponential smear with unit first tap.

    ``decay`` is the reverberation time in seconds: the point where the
    kernel has fallen by 60 dB. Truncated once taps drop below 1e-8.
    """
    # amplitude e-folding constant from the -60 dB convention
    tau = float(decay) * float(frame_rate) / np.log(1e3)
    if tau <= 0:
        return np.ones(1)
    length = int(np.ceil(tau * np.log(1e8))) + 1
    return np.exp(-np.arange(length) / tau)


def degrade_reverb(corpus, decay, seed=0):
    """Causal temporal smearing within segments; labels unchanged.

    ``decay`` is a reverberation time in seconds, scalar or a (low, high)
    range sampled per segment.
    """
    raw = _require_raw(corpus, "degrade_reverb")
    if np.isscalar(decay) and decay < 0:
        raise ValueError("decay must be non-negative")
    rng = np.random.default_rng(seed)
    out = np.zeros_like(raw)
    for a, b in corpus.segments:
        d = decay if np.isscalar(decay) else rng.uniform(*decay)
        kernel = reverb_kernel(d, corpus.spec.frame_rate)
        seg = raw[a:b]
        acc = np.zeros_like(seg)
        for j in range(min(len(kernel), b - a)):
            acc[j:] += kernel[j] * seg[: b - a - j]
        out[a:b] = acc
    return _rebuild(corpus, out, "out_of_domain")


def calibration_subset(corpus, fraction=0.1, seed=0):
    """Seeded whole-segment subset holding roughly ``fraction`` of the frames."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(corpus.segments))
    want = fraction * corpus.n_frames
    picked = []
    got = 0
    for i in order:
        picked.append(i)
        got += corpus.segments[i][1] - corpus.segments[i][0]
        if got >= want:
            break
    picked.sort()
    take = np.concatenate(
        [np.arange(*corpus.segments[i]) for i in picked]
    )
    spans = []
    pos = 0
    for i in picked:
        a, b = corpus.segments[i]
        spans.append((pos, pos + (b - a)))
        pos += b - a
    return FrameCorpus(
        frames=corpus.frames[take],
        labels=corpus.labels[take],
        segments=spans,
        domain_tag=corpus.domain_tag,
        spec=corpus.spec,
        raw=None if corpus.raw is None else corpus.raw[take],
    )


def save_corpus(corpus, path):
    arrays = {
        "frames": corpus.frames,
        "labels": corpus.labels,
        "segments": np.asarray(corpus.segments, dtype=np.int64),
        "domain_tag": np.array(corpus.domain_tag),
        "spec": np.array(json.dumps(corpus.spec.to_dict())),
    }
    if corpus.raw is not None:
        arrays["raw"] = corpus.raw
    np.savez(path, **arrays)


def load_corpus(path):
    with np.load(path, allow_pickle=False) as doc:
        spec = GeneratorSpec.from_dict(json.loads(str(doc["spec"])))
        raw = doc["raw"] if "raw" in doc.files else None
        return FrameCorpus(
            frames=doc["frames"],
            labels=doc["labels"],
            segments=[tuple(s) for s in doc["segments"]],
            domain_tag=str(doc["domain_tag"]),
            spec=spec,
            raw=raw,
        )
