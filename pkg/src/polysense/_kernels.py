"""Compiled numerical kernels for the training loop.

Everything here is numba-jitted and operates on raw arrays so that one epoch
over an encoded corpus runs without touching the interpreter. The Python-facing
wrappers in :mod:`polysense.inference` call the same kernels, so the unit-level
operations and the trainer share one implementation.

Negative samples are drawn from a counter-based hash stream keyed by
(seed, global token index, sample slot, attempt). Draws therefore depend only
on those coordinates, which makes single-threaded runs bit-reproducible,
checkpoint resumption exact, and the draw sequence independent of chunking or
thread count.

Per center token, the dot products between every sense vector and every sample
(context words plus their negatives) are computed once and shared between the
posterior scores and the gradient step, which applies one simultaneous update
of the weighted negative-sampling objective evaluated at the pre-update
parameters.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

VARIANT_FULL = 0
VARIANT_ONE_SIDED = 1
VARIANT_MONO = 2

DOT_CLAMP = 30.0
LR_FLOOR = 1e-4
MAX_NEG_ATTEMPTS = 100

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True, fastmath=True)
def _splitmix64(x):
    z = np.uint64(x) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, fastmath=True)
def _mix64(a, b):
    return _splitmix64(np.uint64(a) ^ (_splitmix64(b) + _GOLDEN))


@njit(cache=True, fastmath=True)
def _hash_uniform(seed, token_idx, slot, attempt):
    """Uniform in [0, 1) determined entirely by its integer coordinates."""
    h = _mix64(_mix64(_mix64(np.uint64(seed), np.uint64(token_idx)), np.uint64(slot)), np.uint64(attempt))
    return (h >> np.uint64(11)) * 1.1102230246251565e-16  # 2**-53


@njit(cache=True, fastmath=True)
def _digamma(x):
    """Digamma via recurrence into the asymptotic region (abs err ~1e-13 for x > 0)."""
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    tail = inv2 * (
        1.0 / 12.0
        - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0)))
    )
    return acc + np.log(x) - 0.5 / x - tail


@njit(cache=True, fastmath=True)
def _sigmoid(t):
    if t > DOT_CLAMP:
        t = DOT_CLAMP
    elif t < -DOT_CLAMP:
        t = -DOT_CLAMP
    return 1.0 / (1.0 + np.exp(-t))


@njit(cache=True, fastmath=True)
def _log_sigmoid(t):
    if t > DOT_CLAMP:
        t = DOT_CLAMP
    elif t < -DOT_CLAMP:
        t = -DOT_CLAMP
    if t >= 0.0:
        return -np.log1p(np.exp(-t))
    return t - np.log1p(np.exp(t))


@njit(cache=True, fastmath=True)
def _stick_log_priors(counts, alpha, out):
    """Expected log stick-breaking prior over senses under the Beta posterior.

    out[k] = E[log beta_k] + sum_{r<k} E[log(1 - beta_r)], with the last sense
    taking the residual mass (its own E[log beta] term is dropped).
    """
    t_max = counts.shape[0]
    tail = 0.0
    for k in range(t_max):
        tail += counts[k]
    acc = 0.0
    for k in range(t_max):
        tail -= counts[k]
        a = 1.0 + counts[k]
        b = alpha + tail
        dg_ab = _digamma(a + b)
        if k < t_max - 1:
            out[k] = acc + _digamma(a) - dg_ab
        else:
            out[k] = acc
        acc += _digamma(b) - dg_ab


@njit(cache=True, fastmath=True)
def _stick_mean_log_priors(counts, alpha, out):
    """Log of the expected stick-breaking probabilities, log(E[beta_k] prod(1 - E[beta_r])).

    This is the prior the disambiguation rule integrates against. Unlike the
    expected-log form it has no -1/alpha cliff for unseen senses, which is what
    lets training allocate a new sense before any counts exist.
    """
    t_max = counts.shape[0]
    tail = 0.0
    for k in range(t_max):
        tail += counts[k]
    acc = 0.0
    for k in range(t_max):
        tail -= counts[k]
        a = 1.0 + counts[k]
        b = alpha + tail
        if k < t_max - 1:
            out[k] = acc + np.log(a / (a + b))
        else:
            out[k] = acc
        acc += np.log(b / (a + b))


@njit(cache=True, fastmath=True)
def _add_context_scores(sense_vecs, ctx_vec, scores):
    """scores[k] += log sigmoid(sense_vecs[k] . ctx_vec) for every sense."""
    t_max, dim = sense_vecs.shape
    for k in range(t_max):
        dot = 0.0
        for q in range(dim):
            dot += sense_vecs[k, q] * ctx_vec[q]
        scores[k] += _log_sigmoid(dot)


@njit(cache=True, fastmath=True)
def _softmax_inplace(scores):
    """Exponentiate-and-normalize with max subtraction; returns |sum - 1| post-normalization."""
    t_max = scores.shape[0]
    zmax = scores[0]
    for k in range(1, t_max):
        if scores[k] > zmax:
            zmax = scores[k]
    total = 0.0
    for k in range(t_max):
        scores[k] = np.exp(scores[k] - zmax)
        total += scores[k]
    for k in range(t_max):
        scores[k] /= total
    check = 0.0
    for k in range(t_max):
        check += scores[k]
    return abs(check - 1.0)


@njit(cache=True, fastmath=True)
def _draw_negative(cum, seed, token_idx, slot, positive):
    """Noise-table draw that never returns ``positive``; -1 after 100 attempts."""
    for attempt in range(MAX_NEG_ATTEMPTS):
        u = _hash_uniform(seed, token_idx, slot, attempt)
        nid = np.searchsorted(cum, u, side="right")
        if nid != positive:
            return nid
    return -1


@njit(cache=True, fastmath=True)
def _expand_negatives(ids, langs, n_ctx, negatives, en_cum, fg_cum, seed, token_idx,
                      sample_ids, sample_labels, sample_langs):
    """Expand context tokens into (positive + negatives) sample rows; returns (count, skips)."""
    p = 0
    skips = 0
    for c in range(n_ctx):
        sample_ids[p] = ids[c]
        sample_labels[p] = 1.0
        sample_langs[p] = langs[c]
        p += 1
        for g in range(negatives):
            slot = c * negatives + g
            if langs[c] == 0:
                nid = _draw_negative(en_cum, seed, token_idx, slot, ids[c])
            else:
                nid = _draw_negative(fg_cum, seed, token_idx, slot, ids[c])
            if nid < 0:
                skips += 1
            sample_ids[p] = nid
            sample_labels[p] = 0.0
            sample_langs[p] = langs[c]
            p += 1
    return p, skips


@njit(cache=True, fastmath=True)
def _compute_dots(centers, ctx_en, ctx_fg, sample_ids, sample_langs, n_samples, dots):
    """dots[k, p] = centers[k] . ctx(sample p); skipped samples (id < 0) left untouched."""
    t_max, dim = centers.shape
    for p in range(n_samples):
        y = sample_ids[p]
        if y < 0:
            continue
        if sample_langs[p] == 0:
            for k in range(t_max):
                dot = 0.0
                for q in range(dim):
                    dot += centers[k, q] * ctx_en[y, q]
                dots[k, p] = dot
        else:
            for k in range(t_max):
                dot = 0.0
                for q in range(dim):
                    dot += centers[k, q] * ctx_fg[y, q]
                dots[k, p] = dot


@njit(cache=True, fastmath=True)
def _scores_from_dots(dots, sample_ids, sample_labels, n_samples, scores, noise_weight):
    """Add per-sense likelihood scores to ``scores`` from precomputed dots.

    Positive samples contribute log sigmoid(dot); the drawn noise samples
    contribute noise_weight * log sigmoid(-dot). At weight 1 each sense is
    scored by its exact per-context-word term of the training objective; at 0
    only the positive log-sigmoid scores remain, which favors untrained senses
    (an untrained vector is indifferent to noise and scores log 1/2 on
    everything, while trained vectors sit at a negative-dot equilibrium on
    typical contexts).
    """
    t_max = scores.shape[0]
    for k in range(t_max):
        acc = 0.0
        for p in range(n_samples):
            if sample_ids[p] < 0:
                continue
            if sample_labels[p] > 0.5:
                acc += _log_sigmoid(dots[k, p])
            elif noise_weight > 0.0:
                acc += noise_weight * _log_sigmoid(-dots[k, p])
        scores[k] += acc


@njit(cache=True, fastmath=True)
def _apply_from_dots(centers, weights, eps, ctx_en, ctx_fg,
                     sample_ids, sample_labels, sample_langs, n_samples, lr, dots, delta):
    """One simultaneous gradient step of the weighted negative-sampling objective.

    objective = sum_k 1[weights_k > eps] * weights_k *
                sum_p [ labels_p * log sigmoid(centers_k . ctx_p)
                        + (1 - labels_p) * log sigmoid(-centers_k . ctx_p) ]

    ``dots`` must hold the pre-update dot products; it is overwritten with the
    per-pair step coefficients. All reads happen against pre-update parameters,
    so the applied update is lr times the exact gradient, with repeated context
    rows accumulating their contributions. Samples with id < 0 are skipped.
    """
    t_max, dim = centers.shape
    for k in range(t_max):
        if weights[k] <= eps:
            continue
        for q in range(dim):
            delta[k, q] = 0.0
        for p in range(n_samples):
            if sample_ids[p] < 0:
                continue
            dots[k, p] = (sample_labels[p] - _sigmoid(dots[k, p])) * weights[k] * lr
    for p in range(n_samples):
        y = sample_ids[p]
        if y < 0:
            continue
        if sample_langs[p] == 0:
            for k in range(t_max):
                if weights[k] <= eps:
                    continue
                g = dots[k, p]
                for q in range(dim):
                    delta[k, q] += g * ctx_en[y, q]
        else:
            for k in range(t_max):
                if weights[k] <= eps:
                    continue
                g = dots[k, p]
                for q in range(dim):
                    delta[k, q] += g * ctx_fg[y, q]
    for p in range(n_samples):
        y = sample_ids[p]
        if y < 0:
            continue
        if sample_langs[p] == 0:
            for k in range(t_max):
                if weights[k] <= eps:
                    continue
                g = dots[k, p]
                for q in range(dim):
                    ctx_en[y, q] += g * centers[k, q]
        else:
            for k in range(t_max):
                if weights[k] <= eps:
                    continue
                g = dots[k, p]
                for q in range(dim):
                    ctx_fg[y, q] += g * centers[k, q]
    for k in range(t_max):
        if weights[k] <= eps:
            continue
        for q in range(dim):
            centers[k, q] += delta[k, q]


@njit(cache=True, fastmath=True)
def _collect_en_context(s, i, en_tokens, en_offsets, fg_tokens, fg_offsets, align_ef,
                        window, cross_window, variant, ids, langs):
    """Context token ids for English position ``i`` (global) of sentence ``s``.

    The per-side English window is ``window`` when a crosslingual context is
    attached (non-mono variant and aligned token) and ``window + 1`` otherwise,
    keeping the total context budget constant. langs: 0 = English, 1 = foreign.
    Returns the number of collected items.
    """
    lo_s = en_offsets[s]
    hi_s = en_offsets[s + 1]
    j = align_ef[i]
    crosslingual = variant != VARIANT_MONO and j >= 0
    w = window if crosslingual else window + 1
    n = 0
    lo = i - w
    if lo < lo_s:
        lo = lo_s
    hi = i + w
    if hi > hi_s - 1:
        hi = hi_s - 1
    for p in range(lo, hi + 1):
        if p != i:
            ids[n] = en_tokens[p]
            langs[n] = 0
            n += 1
    if crosslingual:
        flo_s = fg_offsets[s]
        fhi_s = fg_offsets[s + 1]
        flo = j - cross_window
        if flo < flo_s:
            flo = flo_s
        fhi = j + cross_window
        if fhi > fhi_s - 1:
            fhi = fhi_s - 1
        for p in range(flo, fhi + 1):
            if p != j:
                ids[n] = fg_tokens[p]
                langs[n] = 1
                n += 1
        ids[n] = fg_tokens[j]
        langs[n] = 1
        n += 1
    return n


@njit(cache=True, fastmath=True)
def _collect_fg_context(s, j, en_tokens, en_offsets, fg_tokens, fg_offsets, align_fe,
                        window, cross_window, variant, ids, langs):
    """Context token ids for foreign position ``j``; window is always ``window``.

    The full variant attaches the English neighborhood (size ``cross_window``)
    and the aligned English word; the one-sided variant keeps the monolingual
    foreign neighborhood only.
    """
    lo_s = fg_offsets[s]
    hi_s = fg_offsets[s + 1]
    n = 0
    lo = j - window
    if lo < lo_s:
        lo = lo_s
    hi = j + window
    if hi > hi_s - 1:
        hi = hi_s - 1
    for p in range(lo, hi + 1):
        if p != j:
            ids[n] = fg_tokens[p]
            langs[n] = 1
            n += 1
    i = align_fe[j]
    if variant == VARIANT_FULL and i >= 0:
        elo_s = en_offsets[s]
        ehi_s = en_offsets[s + 1]
        elo = i - cross_window
        if elo < elo_s:
            elo = elo_s
        ehi = i + cross_window
        if ehi > ehi_s - 1:
            ehi = ehi_s - 1
        for p in range(elo, ehi + 1):
            if p != i:
                ids[n] = en_tokens[p]
                langs[n] = 0
                n += 1
        ids[n] = en_tokens[i]
        langs[n] = 0
        n += 1
    return n


@njit(cache=True, fastmath=True)
def _train_pair(s, en_tokens, en_offsets, fg_tokens, fg_offsets, align_ef, align_fe,
                token_base, sense_vecs, ctx_en, fg_vecs, ctx_fg, stick_counts,
                en_cum, fg_cum, alpha, eps, lr0, schedule_total, negatives,
                window, cross_window, variant, stick_decay, noise_weight, mean_prior,
                seed, epoch_base, max_posteriors, stats,
                ids, langs, sample_ids, sample_labels, sample_langs, dots, delta, scores, one):
    """Process one sentence pair: English sense updates, then foreign skip-gram updates.

    stats[0] accumulates the max posterior normalization error, stats[1] counts
    skipped negative draws.
    """
    t_max = sense_vecs.shape[1]
    en_lo = en_offsets[s]
    en_hi = en_offsets[s + 1]
    fg_lo = fg_offsets[s]
    fg_hi = fg_offsets[s + 1]
    base = epoch_base + token_base[s]

    for i in range(en_lo, en_hi):
        w = en_tokens[i]
        token_idx = base + (i - en_lo)
        frac = 1.0 - token_idx / schedule_total
        if frac < LR_FLOOR:
            frac = LR_FLOOR
        lr = lr0 * frac
        n_ctx = _collect_en_context(
            s, i, en_tokens, en_offsets, fg_tokens, fg_offsets, align_ef,
            window, cross_window, variant, ids, langs)
        n_samples, skips = _expand_negatives(
            ids, langs, n_ctx, negatives, en_cum, fg_cum, seed, token_idx,
            sample_ids, sample_labels, sample_langs)
        stats[1] += skips
        centers = sense_vecs[w]
        _compute_dots(centers, ctx_en, ctx_fg, sample_ids, sample_langs, n_samples, dots)
        if mean_prior:
            _stick_mean_log_priors(stick_counts[w], alpha, scores)
        else:
            _stick_log_priors(stick_counts[w], alpha, scores)
        _scores_from_dots(dots, sample_ids, sample_labels, n_samples, scores, noise_weight)
        err = _softmax_inplace(scores)
        if err > stats[0]:
            stats[0] = err
        for k in range(t_max):
            if scores[k] > max_posteriors[w, k]:
                max_posteriors[w, k] = scores[k]
        if stick_decay > 0.0:
            for k in range(t_max):
                stick_counts[w, k] *= 1.0 - stick_decay
        for k in range(t_max):
            stick_counts[w, k] += scores[k]
        _apply_from_dots(centers, scores, eps, ctx_en, ctx_fg,
                         sample_ids, sample_labels, sample_langs, n_samples, lr, dots, delta)

    if variant == VARIANT_MONO:
        return

    en_len = en_hi - en_lo
    for j in range(fg_lo, fg_hi):
        x = fg_tokens[j]
        token_idx = base + en_len + (j - fg_lo)
        frac = 1.0 - token_idx / schedule_total
        if frac < LR_FLOOR:
            frac = LR_FLOOR
        lr = lr0 * frac
        n_ctx = _collect_fg_context(
            s, j, en_tokens, en_offsets, fg_tokens, fg_offsets, align_fe,
            window, cross_window, variant, ids, langs)
        n_samples, skips = _expand_negatives(
            ids, langs, n_ctx, negatives, en_cum, fg_cum, seed, token_idx,
            sample_ids, sample_labels, sample_langs)
        stats[1] += skips
        center = fg_vecs[x : x + 1]
        _compute_dots(center, ctx_en, ctx_fg, sample_ids, sample_langs, n_samples, dots)
        _apply_from_dots(center, one, 0.0, ctx_en, ctx_fg,
                         sample_ids, sample_labels, sample_langs, n_samples, lr, dots, delta)


@njit(cache=True, fastmath=True)
def _train_range(lo, hi, en_tokens, en_offsets, fg_tokens, fg_offsets, align_ef, align_fe,
                 token_base, sense_vecs, ctx_en, fg_vecs, ctx_fg, stick_counts,
                 en_cum, fg_cum, alpha, eps, lr0, schedule_total, negatives,
                 window, cross_window, variant, stick_decay, noise_weight, mean_prior,
                 seed, epoch_base, max_posteriors, stats):
    t_max = sense_vecs.shape[1]
    dim = sense_vecs.shape[2]
    n_ctx_max = 2 * (window + 1) + 2 * cross_window + 1
    n_samp_max = n_ctx_max * (1 + negatives)
    ids = np.empty(n_ctx_max, dtype=np.int64)
    langs = np.empty(n_ctx_max, dtype=np.int8)
    sample_ids = np.empty(n_samp_max, dtype=np.int64)
    sample_labels = np.empty(n_samp_max, dtype=np.float64)
    sample_langs = np.empty(n_samp_max, dtype=np.int8)
    dots = np.empty((t_max, n_samp_max), dtype=np.float64)
    delta = np.empty((t_max, dim), dtype=np.float64)
    scores = np.empty(t_max, dtype=np.float64)
    one = np.ones(1, dtype=np.float64)
    for s in range(lo, hi):
        _train_pair(s, en_tokens, en_offsets, fg_tokens, fg_offsets, align_ef, align_fe,
                    token_base, sense_vecs, ctx_en, fg_vecs, ctx_fg, stick_counts,
                    en_cum, fg_cum, alpha, eps, lr0, schedule_total, negatives,
                    window, cross_window, variant, stick_decay, noise_weight, mean_prior,
                    seed, epoch_base, max_posteriors, stats,
                    ids, langs, sample_ids, sample_labels, sample_langs, dots, delta, scores, one)


@njit(cache=True, parallel=True, fastmath=True)
def _train_range_parallel(lo, hi, en_tokens, en_offsets, fg_tokens, fg_offsets, align_ef,
                          align_fe, token_base, sense_vecs, ctx_en, fg_vecs, ctx_fg,
                          stick_counts, en_cum, fg_cum, alpha, eps, lr0, schedule_total,
                          negatives, window, cross_window, variant, stick_decay,
                          noise_weight, mean_prior, seed, epoch_base, max_posteriors, stats):
    """Lock-free data-parallel variant: sentence pairs race on the shared model.

    Per-coordinate writes may be lost (bounded staleness); negative draws are
    still counter-keyed and thus independent of the schedule.
    """
    t_max = sense_vecs.shape[1]
    dim = sense_vecs.shape[2]
    n_ctx_max = 2 * (window + 1) + 2 * cross_window + 1
    n_samp_max = n_ctx_max * (1 + negatives)
    for s in prange(lo, hi):
        ids = np.empty(n_ctx_max, dtype=np.int64)
        langs = np.empty(n_ctx_max, dtype=np.int8)
        sample_ids = np.empty(n_samp_max, dtype=np.int64)
        sample_labels = np.empty(n_samp_max, dtype=np.float64)
        sample_langs = np.empty(n_samp_max, dtype=np.int8)
        dots = np.empty((t_max, n_samp_max), dtype=np.float64)
        delta = np.empty((t_max, dim), dtype=np.float64)
        scores = np.empty(t_max, dtype=np.float64)
        one = np.ones(1, dtype=np.float64)
        _train_pair(s, en_tokens, en_offsets, fg_tokens, fg_offsets, align_ef, align_fe,
                    token_base, sense_vecs, ctx_en, fg_vecs, ctx_fg, stick_counts,
                    en_cum, fg_cum, alpha, eps, lr0, schedule_total, negatives,
                    window, cross_window, variant, stick_decay, noise_weight, mean_prior,
                    seed, epoch_base, max_posteriors, stats,
                    ids, langs, sample_ids, sample_labels, sample_langs, dots, delta, scores, one)


def _build_crc64_table() -> np.ndarray:
    # reflected CRC-64/XZ polynomial
    poly = 0xC96C5795D7870F42
    table = np.empty(256, dtype=np.uint64)
    for b in range(256):
        crc = b
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table[b] = crc
    return table


_CRC64_TABLE = _build_crc64_table()


@njit(cache=True)
def _crc64_feed(crc, data, table):
    for i in range(data.shape[0]):
        crc = table[(crc ^ np.uint64(data[i])) & np.uint64(0xFF)] ^ (crc >> np.uint64(8))
    return crc


def crc64(data: bytes | np.ndarray, crc: int = 0) -> int:
    """CRC-64/XZ of a byte buffer (init/xorout all-ones, reflected)."""
    arr = np.frombuffer(data, dtype=np.uint8) if isinstance(data, (bytes, bytearray, memoryview)) else data
    out = _crc64_feed(np.uint64(crc ^ 0xFFFFFFFFFFFFFFFF), arr, _CRC64_TABLE)
    return int(out ^ np.uint64(0xFFFFFFFFFFFFFFFF))
