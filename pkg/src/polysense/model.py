"""Learned state: sense/context embedding matrices, stick-breaking statistics, persistence.

Each English word owns up to ``max_senses`` sense vectors plus accumulated
expected-assignment counts; the counts induce a Beta posterior over the
stick-breaking weights, from which sense priors and the active-sense set are
derived. All sense indices are 0-based.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO

import numpy as np
from scipy.special import digamma

from ._kernels import VARIANT_FULL, VARIANT_MONO, VARIANT_ONE_SIDED, crc64
from .corpus import Vocabulary

MAGIC = b"PSNS"
FORMAT_VERSION = 1

VARIANT_CODES = {"full": VARIANT_FULL, "one-sided": VARIANT_ONE_SIDED, "mono": VARIANT_MONO}


class ModelFormatError(Exception):
    """Corrupt, truncated, or incompatible model file."""


@dataclass(frozen=True)
class TrainConfig:
    """Every training hyperparameter.

    ``window`` is the per-side English window used when a crosslingual context
    is attached; English-only contexts (mono variant, unaligned tokens) widen
    to ``window + 1`` so the total context budget stays the same.
    ``cross_window`` is the per-side window in the aligned foreign sentence.
    A sense participates in gradient updates only while its posterior weight
    exceeds ``sense_threshold``.

    ``estep_noise_weight`` scales how strongly the drawn noise samples enter
    the per-token sense scores. At 1 each sense is scored by its exact
    per-context-word term of the training objective; at 0 only positive
    log-sigmoid scores enter, which systematically favors untrained senses
    (a zero vector scores log 1/2 per context word while trained vectors sit at
    their negative-sampling equilibrium) and inflates the number of active
    senses of frequent words, while 1 suppresses new senses so strongly that
    genuinely polysemous words never split. Intermediate values consolidate
    monosemous words yet let likelihood-backed senses emerge.

    ``prior_scores`` selects how the stick prior enters the per-token scores:
    ``"mean"`` (default) uses log E[p(z=k)], the same prior the disambiguation
    rule integrates against; ``"log"`` uses E[log p(z=k)], whose psi(alpha)
    penalty on unseen senses (about -1/alpha nats) effectively freezes sense
    allocation when counts start at zero and accumulate without decay.
    """

    alpha: float = 0.1
    max_senses: int = 10
    dim: int = 100
    window: int = 4
    cross_window: int = 0
    sense_threshold: float = 0.001
    lr: float = 0.025
    iterations: int = 10
    negatives: int = 5
    noise_power: float = 0.75
    min_count: int = 5
    variant: str = "full"
    seed: int = 1
    subsample: float = 0.0
    stick_decay: float = 0.0
    estep_noise_weight: float = 0.5
    prior_scores: str = "mean"
    threads: int = 1

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.max_senses < 1:
            raise ValueError("max_senses must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not 0 < self.sense_threshold < 1:
            raise ValueError("sense_threshold must lie in (0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.window < 0 or self.cross_window < 0:
            raise ValueError("windows must be >= 0")
        if self.variant not in VARIANT_CODES:
            raise ValueError(f"variant must be one of {sorted(VARIANT_CODES)}, got {self.variant!r}")
        if not 0.0 <= self.estep_noise_weight <= 2.0:
            raise ValueError("estep_noise_weight must lie in [0, 2]")
        if self.prior_scores not in ("mean", "log"):
            raise ValueError(f"prior_scores must be 'mean' or 'log', got {self.prior_scores!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def variant_code(self) -> int:
        return VARIANT_CODES[self.variant]


@dataclass
class SenseModel:
    """All trainable matrices plus bookkeeping for resumable training.

    sense_vecs:  [n_en_words, max_senses, dim] input vectors, one row per sense;
    ctx_en:      [n_en_words, dim] English context vectors;
    fg_vecs:     [n_fg_words, dim] foreign input vectors (one sense per foreign word);
    ctx_fg:      [n_fg_words, dim] foreign context vectors;
    stick_counts:[n_en_words, max_senses] accumulated expected sense assignments.
    """

    vocab: Vocabulary
    config: TrainConfig
    sense_vecs: np.ndarray
    ctx_en: np.ndarray
    fg_vecs: np.ndarray
    ctx_fg: np.ndarray
    stick_counts: np.ndarray
    epochs_done: int = 0
    tokens_processed: int = 0
    schedule_total: int = 0
    train_stats: object = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.sense_vecs.shape[2]

    @property
    def max_senses(self) -> int:
        return self.sense_vecs.shape[1]

    def en_id(self, word) -> int:
        return word if isinstance(word, (int, np.integer)) else self.vocab.en_id(word)

    def fg_id(self, word, lang=None) -> int:
        return word if isinstance(word, (int, np.integer)) else self.vocab.fg_id(word, lang)


def init_model(vocab: Vocabulary, config: TrainConfig) -> SenseModel:
    """Fresh model: inputs uniform in [-0.5/dim, +0.5/dim], context vectors zero.

    Deterministic in ``config.seed``; the English sense matrix is drawn first,
    then the foreign matrix, so equal seeds give bit-identical models.
    """
    rng = np.random.default_rng(config.seed)
    t, m = config.max_senses, config.dim
    v_en, v_fg = vocab.n_en_words, vocab.n_fg_words
    scale = 1.0 / m
    sense_vecs = (rng.random((v_en, t, m)) - 0.5) * scale
    fg_vecs = (rng.random((v_fg, m)) - 0.5) * scale
    return SenseModel(
        vocab=vocab,
        config=config,
        sense_vecs=sense_vecs,
        ctx_en=np.zeros((v_en, m)),
        fg_vecs=fg_vecs,
        ctx_fg=np.zeros((v_fg, m)),
        stick_counts=np.zeros((v_en, t)),
        schedule_total=0,
    )


def stick_beta_params(counts: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Beta posterior parameters per stick: a_k = 1 + n_k, b_k = alpha + sum_{r>k} n_r.

    Accepts a [t] vector or an [n_words, t] matrix of counts.
    """
    counts = np.asarray(counts, dtype=np.float64)
    tail = np.flip(np.cumsum(np.flip(counts, -1), -1), -1) - counts
    return 1.0 + counts, alpha + tail


def expected_log_priors(model: SenseModel, word) -> np.ndarray:
    """E[log p(z = k)] under the stick posterior, for every sense of ``word``.

    The last sense takes the residual stick mass, so only the accumulated
    log(1 - beta) terms contribute there.
    """
    counts = model.stick_counts[model.en_id(word)]
    a, b = stick_beta_params(counts, model.config.alpha)
    dg_ab = digamma(a + b)
    log_beta = digamma(a) - dg_ab
    log_rest = digamma(b) - dg_ab
    prefix = np.concatenate(([0.0], np.cumsum(log_rest)[:-1]))
    out = prefix + log_beta
    out[-1] = prefix[-1]
    return out


def expected_log_prior(model: SenseModel, word, k: int) -> float:
    """E[log p(z = k)] for one sense index (0-based)."""
    t = model.max_senses
    if not 0 <= k < t:
        raise IndexError(f"sense index {k} outside [0, {t})")
    return float(expected_log_priors(model, word)[k])


def _sense_priors_from_counts(counts: np.ndarray, alpha: float) -> np.ndarray:
    a, b = stick_beta_params(counts, alpha)
    mean_beta = a / (a + b)
    rest = np.concatenate(
        [np.ones(counts.shape[:-1] + (1,)), np.cumprod(1.0 - mean_beta, -1)[..., :-1]], axis=-1
    )
    probs = mean_beta * rest
    probs[..., -1] = rest[..., -1]
    return probs


def expected_sense_prior(model: SenseModel, word) -> np.ndarray:
    """Expected stick-breaking sense probabilities E[beta_k] prod_{r<k}(1 - E[beta_r]).

    Exact under the independent-Beta posterior; the last sense takes the
    remaining mass so the vector sums to exactly 1.
    """
    return _sense_priors_from_counts(model.stick_counts[model.en_id(word)], model.config.alpha)


def sense_prior_matrix(model: SenseModel) -> np.ndarray:
    """Expected sense priors for the whole vocabulary, shape [n_en_words, max_senses]."""
    return _sense_priors_from_counts(model.stick_counts, model.config.alpha)


def active_senses(model: SenseModel, word) -> list[int]:
    """Sense indices whose expected prior probability exceeds the sense threshold."""
    prior = expected_sense_prior(model, word)
    return [int(k) for k in np.nonzero(prior > model.config.sense_threshold)[0]]


def active_sense_counts(model: SenseModel) -> np.ndarray:
    """Number of active senses per English word, shape [n_en_words]."""
    prior = sense_prior_matrix(model)
    return (prior > model.config.sense_threshold).sum(axis=1)


def polysemy_rate(model: SenseModel) -> float:
    """Fraction of the English vocabulary with at least two active senses."""
    counts = active_sense_counts(model)
    return float((counts >= 2).mean()) if counts.size else 0.0


def models_equal(a: SenseModel, b: SenseModel) -> bool:
    """Bitwise equality of all learned state, vocab and config."""
    return (
        a.config == b.config
        and a.vocab.en_forms == b.vocab.en_forms
        and a.vocab.fg_forms == b.vocab.fg_forms
        and np.array_equal(a.vocab.en_counts, b.vocab.en_counts)
        and np.array_equal(a.vocab.fg_counts, b.vocab.fg_counts)
        and a.vocab.n_e == b.vocab.n_e
        and a.vocab.n_f == b.vocab.n_f
        and a.epochs_done == b.epochs_done
        and a.tokens_processed == b.tokens_processed
        and a.schedule_total == b.schedule_total
        and all(
            np.array_equal(getattr(a, name), getattr(b, name))
            for name in ("sense_vecs", "ctx_en", "fg_vecs", "ctx_fg", "stick_counts")
        )
    )


_ARRAY_FIELDS = ("sense_vecs", "ctx_en", "fg_vecs", "ctx_fg", "stick_counts")


def _write_block(buf: BinaryIO, payload: bytes) -> None:
    buf.write(struct.pack("<Q", len(payload)))
    buf.write(payload)


def save_model(model: SenseModel, path) -> None:
    """Serialize to the PSNS binary format (little-endian, CRC-64 trailer)."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    _write_block(buf, json.dumps(model.config.__dict__, sort_keys=True).encode())
    vocab = model.vocab
    vocab_doc = {
        "en": [[w, int(c)] for w, c in zip(vocab.en_forms, vocab.en_counts)],
        "fg": [[w, lang, int(c)] for (w, lang), c in zip(vocab.fg_forms, vocab.fg_counts)],
        "n_e": vocab.n_e,
        "n_f": vocab.n_f,
        "langs": list(vocab.langs),
        "min_count": vocab.min_count,
    }
    _write_block(buf, json.dumps(vocab_doc).encode())
    state = {
        "epochs_done": model.epochs_done,
        "tokens_processed": model.tokens_processed,
        "schedule_total": model.schedule_total,
    }
    _write_block(buf, json.dumps(state, sort_keys=True).encode())
    buf.write(struct.pack("<I", len(_ARRAY_FIELDS)))
    for name in _ARRAY_FIELDS:
        arr = np.ascontiguousarray(getattr(model, name), dtype="<f8")
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(arr.tobytes())
    payload = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<Q", crc64(payload)))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("truncated model file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path) -> SenseModel:
    """Read a PSNS model file back; the round trip is bit-exact."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 12:
        raise ModelFormatError("truncated model file")
    payload, trailer = raw[:-8], raw[-8:]
    if payload[: len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"bad magic bytes {payload[:4]!r}")
    if crc64(payload) != struct.unpack("<Q", trailer)[0]:
        raise ModelFormatError("checksum mismatch: file corrupt")
    rd = _Reader(payload)
    rd.take(len(MAGIC))
    (version,) = rd.unpack("<I")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}")

    def read_block() -> bytes:
        (size,) = rd.unpack("<Q")
        return rd.take(size)

    try:
        config = TrainConfig(**json.loads(read_block()))
        vocab_doc = json.loads(read_block())
        state = json.loads(read_block())
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"bad metadata block: {exc}") from exc
    vocab = Vocabulary(
        en_forms=[w for w, _ in vocab_doc["en"]],
        en_counts=np.array([c for _, c in vocab_doc["en"]], dtype=np.int64),
        fg_forms=[(w, lang) for w, lang, _ in vocab_doc["fg"]],
        fg_counts=np.array([c for _, _, c in vocab_doc["fg"]], dtype=np.int64),
        n_e=vocab_doc["n_e"],
        n_f=vocab_doc["n_f"],
        langs=tuple(vocab_doc["langs"]),
        min_count=vocab_doc["min_count"],
    )
    (n_arrays,) = rd.unpack("<I")
    if n_arrays != len(_ARRAY_FIELDS):
        raise ModelFormatError(f"expected {len(_ARRAY_FIELDS)} arrays, found {n_arrays}")
    arrays = {}
    for name in _ARRAY_FIELDS:
        (ndim,) = rd.unpack("<B")
        shape = tuple(rd.unpack("<" + "Q" * ndim))
        n_items = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(rd.take(n_items * 8), dtype="<f8").reshape(shape).copy()
    if rd.pos != len(payload):
        raise ModelFormatError("trailing bytes after model payload")

    t, m = config.max_senses, config.dim
    expected = {
        "sense_vecs": (vocab.n_en_words, t, m),
        "ctx_en": (vocab.n_en_words, m),
        "fg_vecs": (vocab.n_fg_words, m),
        "ctx_fg": (vocab.n_fg_words, m),
        "stick_counts": (vocab.n_en_words, t),
    }
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise ModelFormatError(f"{name} has shape {arrays[name].shape}, expected {shape}")
    return SenseModel(
        vocab=vocab,
        config=config,
        epochs_done=state["epochs_done"],
        tokens_processed=state["tokens_processed"],
        schedule_total=state["schedule_total"],
        **arrays,
    )


def export_text(model: SenseModel, path, include_foreign: bool = True) -> int:
    """Write active sense vectors (and optionally foreign vectors) as text.

    Header line is ``<rows> <dim>``; sense rows are ``word#k p_k v_1 .. v_dim``
    with the expected prior probability, foreign rows are ``word@lang v_1 .. v_dim``.
    Values are printed with 9 significant digits. Returns the row count.
    """
    priors = sense_prior_matrix(model)
    active = priors > model.config.sense_threshold
    rows = int(active.sum()) + (model.vocab.n_fg_words if include_foreign else 0)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{rows} {model.dim}\n")
        for w, word in enumerate(model.vocab.en_forms):
            for k in np.nonzero(active[w])[0]:
                vec = " ".join(f"{v:.9g}" for v in model.sense_vecs[w, k])
                fh.write(f"{word}#{k} {priors[w, k]:.9g} {vec}\n")
        if include_foreign:
            for f, (word, lang) in enumerate(model.vocab.fg_forms):
                vec = " ".join(f"{v:.9g}" for v in model.fg_vecs[f])
                fh.write(f"{word}@{lang} {vec}\n")
    return rows


def config_with(config: TrainConfig, **updates) -> TrainConfig:
    """Copy of a config with the given fields replaced (validation re-runs)."""
    return replace(config, **updates)
