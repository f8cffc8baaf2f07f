"""Variational training loop: per-token sense posteriors, stick updates, gradient steps.

Per sentence pair the trainer scores every retained English token's senses
against its combined mono- and crosslingual context, renormalizes, accumulates
stick statistics, and applies one simultaneous negative-sampling gradient step
over all context words for the senses whose posterior exceeds the threshold.
Foreign tokens then receive standard single-vector skip-gram updates (skipped
entirely in the mono variant; the one-sided variant drops their English context).

All operations below mutate model arrays in place and mirror exactly what the
compiled per-sentence kernel does, since both call the same numba functions.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from .corpus import (
    ENGLISH,
    AlignedSentencePair,
    CorpusFile,
    EncodedCorpus,
    NoiseTable,
    Token,
    build_noise_table,
    build_vocabulary,
    encode_corpus,
    load_manifest,
    neighborhood,
)
from .model import SenseModel, TrainConfig, active_sense_counts, init_model

PROGRESS_EVERY = 100_000


class NumericsError(RuntimeError):
    """Training produced a non-finite value; aborted with diagnostics."""


@dataclass
class TrainStats:
    """Diagnostics accumulated over one ``train`` call (not persisted)."""

    tokens: int
    seconds: float
    max_posterior_error: float
    negative_draw_skips: int
    max_posteriors: np.ndarray  # [n_en_words, max_senses] peak q(z) seen per sense

    @property
    def tokens_per_second(self) -> float:
        return self.tokens / self.seconds if self.seconds > 0 else float("inf")


def learning_rate(t: int, total: int, lr0: float) -> float:
    """Linearly decayed rate lr0 * (1 - t/total), floored at lr0 * 1e-4."""
    if not 0 <= t <= total:
        raise ValueError(f"t={t} outside [0, {total}]")
    return lr0 * max(1.0 - t / total, K.LR_FLOOR)


def log_sigmoid_score(model: SenseModel, vec: np.ndarray, token: Token) -> float:
    """log sigmoid(ctx(token) . vec), the per-context-word likelihood score.

    The dot product is clamped to +/-30 before the sigmoid so the result is
    always finite.
    """
    row = _ctx_row(model, token)
    return float(K._log_sigmoid(float(np.dot(row, vec))))


def sense_update(log_scores: np.ndarray, model: SenseModel, word, token: Token) -> None:
    """Add the context token's log-likelihood score to every sense's running score."""
    w = model.en_id(word)
    K._add_context_scores(model.sense_vecs[w], _ctx_row(model, token), log_scores)


def renormalize(log_scores: np.ndarray) -> np.ndarray:
    """Softmax with max subtraction; returns a fresh probability vector."""
    out = np.asarray(log_scores, dtype=np.float64).copy()
    K._softmax_inplace(out)
    return out


def build_english_context(pair: AlignedSentencePair, i: int, config: TrainConfig) -> list[Token]:
    """Combined context for English position ``i``: neighbors, then crosslingual extras.

    With a crosslingual attachment (non-mono variant, aligned position) the
    English window is ``config.window`` per side, followed by the foreign
    neighborhood of the aligned position (``config.cross_window``) and the
    aligned foreign word itself. English-only contexts use ``window + 1``.
    """
    j = pair.a_ef.get(i)
    crosslingual = config.variant != "mono" and j is not None
    width = config.window if crosslingual else config.window + 1
    ctx = neighborhood(pair.en, i, width)
    if crosslingual:
        ctx += neighborhood(pair.fg, j, config.cross_window)
        ctx.append(pair.fg[j])
    return ctx


def build_foreign_context(pair: AlignedSentencePair, j: int, config: TrainConfig) -> list[Token]:
    """Context for foreign position ``j``: own neighborhood, plus English side when full.

    The one-sided variant keeps only the monolingual foreign neighborhood; the
    full variant appends the English neighborhood (``cross_window``) of the
    aligned position and the aligned English word.
    """
    ctx = neighborhood(pair.fg, j, config.window)
    i = pair.a_fe.get(j)
    if config.variant == "full" and i is not None:
        ctx += neighborhood(pair.en, i, config.cross_window)
        ctx.append(pair.en[i])
    return ctx


def _ctx_row(model: SenseModel, token: Token) -> np.ndarray:
    if token.lang == ENGLISH:
        return model.ctx_en[model.vocab.en_id(token.surface)]
    return model.ctx_fg[model.vocab.fg_id(token.surface, token.lang)]


def _sample_arrays(model: SenseModel, y: Token, negatives: np.ndarray):
    side = 0 if y.lang == ENGLISH else 1
    yid = model.vocab.en_id(y.surface) if side == 0 else model.vocab.fg_id(y.surface, y.lang)
    ids = np.concatenate(([yid], np.asarray(negatives, dtype=np.int64)))
    labels = np.zeros(len(ids))
    labels[0] = 1.0
    langs = np.full(len(ids), side, dtype=np.int8)
    return ids, labels, langs


def _negsamp_step(model, centers, weights, eps, ids, labels, langs, lr) -> None:
    dots = np.empty((centers.shape[0], len(ids)))
    delta = np.empty_like(centers)
    K._compute_dots(centers, model.ctx_en, model.ctx_fg, ids, langs, len(ids), dots)
    K._apply_from_dots(centers, weights, eps, model.ctx_en, model.ctx_fg,
                       ids, labels, langs, len(ids), lr, dots, delta)


def sense_gradient_step(
    model: SenseModel,
    word,
    senses: np.ndarray,
    y: Token,
    negatives: np.ndarray,
    lr: float,
) -> None:
    """Negative-sampling gradient step for one context word, weighted per sense.

    Senses whose posterior weight is at most the sense threshold are untouched;
    for the rest, both the sense vectors and the context vectors of the positive
    and negative samples move by lr times the exact gradient.
    """
    w = model.en_id(word)
    ids, labels, langs = _sample_arrays(model, y, negatives)
    _negsamp_step(model, model.sense_vecs[w], np.asarray(senses, dtype=np.float64),
                  model.config.sense_threshold, ids, labels, langs, lr)


def skip_gram_update(model: SenseModel, x_fg, y: Token, negatives: np.ndarray, lr: float) -> None:
    """Standard single-vector skip-gram negative-sampling update for a foreign word."""
    if isinstance(x_fg, Token):
        x = model.vocab.fg_id(x_fg.surface, x_fg.lang)
    else:
        x = model.fg_id(x_fg)
    ids, labels, langs = _sample_arrays(model, y, negatives)
    _negsamp_step(model, model.fg_vecs[x : x + 1], np.ones(1), 0.0, ids, labels, langs, lr)


def _pair_stream(corpus):
    if len(corpus) and isinstance(corpus[0], CorpusFile):
        return load_manifest(corpus)
    return iter(corpus)


def _check_finite(model: SenseModel, epoch: int, tokens: int) -> None:
    for name in ("sense_vecs", "ctx_en", "fg_vecs", "ctx_fg", "stick_counts"):
        arr = getattr(model, name)
        if arr.size and not np.isfinite(arr).all():
            raise NumericsError(
                f"non-finite values in {name} at epoch {epoch}, ~{tokens} tokens processed; "
                f"try a lower learning rate"
            )


def _progress_line(model: SenseModel, done: int, total: int, tps: float, lr: float) -> str:
    hist = np.bincount(active_sense_counts(model).astype(np.int64))
    hist_s = " ".join(f"{k}:{int(n)}" for k, n in enumerate(hist) if n and k > 0)
    return f"[train] tokens {done}/{total} ({tps:,.0f} tok/s) lr={lr:.6f} active-senses {hist_s}"


def train(
    corpus: Sequence,
    config: TrainConfig | None = None,
    *,
    start_model: SenseModel | None = None,
    epochs: int | None = None,
    progress: bool = False,
) -> SenseModel:
    """Run the training loop over a corpus manifest (or in-memory pair list).

    ``corpus`` is either a sequence of :class:`CorpusFile` entries (streamed
    from disk, concatenated in order) or a re-iterable sequence of
    :class:`AlignedSentencePair`. Passing ``start_model`` resumes a checkpoint:
    its vocabulary, config and token counters carry on exactly where training
    stopped, and resumed runs are bit-identical to uninterrupted ones.
    ``epochs`` limits how many epochs this call runs (default: the remainder of
    ``config.iterations``). Single-threaded runs are deterministic in
    ``config.seed``; ``config.threads > 1`` switches to the lock-free parallel
    mode which races on the shared model and makes no bitwise guarantee.
    """
    if start_model is not None:
        if config is not None and config != start_model.config:
            raise ValueError("pass config only when starting fresh; resume uses the checkpoint's")
        model = start_model
        config = model.config
        vocab = model.vocab
    else:
        if config is None:
            raise ValueError("config is required when no start_model is given")
        vocab = build_vocabulary(_pair_stream(corpus), config.min_count)
        model = init_model(vocab, config)

    encoded = encode_corpus(_pair_stream(corpus), vocab)
    en_table = build_noise_table(vocab.en_counts, config.noise_power)
    if vocab.n_fg_words:
        fg_table = build_noise_table(vocab.fg_counts, config.noise_power)
    else:
        fg_table = NoiseTable(cumulative=np.ones(1))

    if model.schedule_total == 0:
        model.schedule_total = config.iterations * encoded.tokens_per_epoch
    n_epochs = epochs if epochs is not None else max(0, config.iterations - model.epochs_done)

    run_range = K._train_range
    if config.threads > 1:
        import numba

        numba.set_num_threads(min(config.threads, numba.config.NUMBA_NUM_THREADS))
        run_range = K._train_range_parallel

    max_posteriors = np.zeros_like(model.stick_counts)
    stats = np.zeros(2)
    avg_len = max(1, encoded.tokens_per_epoch // max(1, encoded.n_pairs))
    chunk = max(1, PROGRESS_EVERY // avg_len)
    total_this_call = 0
    t_start = time.perf_counter()

    for _ in range(n_epochs):
        epoch = model.epochs_done
        enc = encoded
        if config.subsample > 0:
            rng = np.random.default_rng([config.seed, epoch])
            enc = encode_corpus(_pair_stream(corpus), vocab, config.subsample, rng)
        epoch_base = model.tokens_processed
        for lo in range(0, enc.n_pairs, chunk):
            hi = min(lo + chunk, enc.n_pairs)
            run_range(
                lo, hi,
                enc.en_tokens, enc.en_offsets, enc.fg_tokens, enc.fg_offsets,
                enc.align_ef, enc.align_fe, enc.token_base,
                model.sense_vecs, model.ctx_en, model.fg_vecs, model.ctx_fg,
                model.stick_counts, en_table.cumulative, fg_table.cumulative,
                config.alpha, config.sense_threshold, config.lr,
                model.schedule_total, config.negatives,
                config.window, config.cross_window, config.variant_code,
                config.stick_decay, config.estep_noise_weight, config.prior_scores == "mean",
                config.seed, epoch_base, max_posteriors, stats,
            )
            done_chunk = int(enc.token_base[hi])
            _check_finite(model, epoch, epoch_base + done_chunk)
            if progress:
                done = epoch_base + done_chunk
                tps = (total_this_call + done_chunk) / max(1e-9, time.perf_counter() - t_start)
                lr_now = learning_rate(min(done, model.schedule_total), model.schedule_total, config.lr)
                print(_progress_line(model, done, model.schedule_total, tps, lr_now), file=sys.stderr)
        model.tokens_processed += enc.tokens_per_epoch
        model.epochs_done += 1
        total_this_call += enc.tokens_per_epoch

    model.train_stats = TrainStats(
        tokens=total_this_call,
        seconds=time.perf_counter() - t_start,
        max_posterior_error=float(stats[0]),
        negative_draw_skips=int(stats[1]),
        max_posteriors=max_posteriors,
    )
    return model
