"""Test-time sense inference from monolingual context, plus similarity queries."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ._kernels import _log_sigmoid
from .model import SenseModel, active_senses, expected_sense_prior, sense_prior_matrix


def disambiguate(model: SenseModel, word: str, context: Sequence[str]) -> np.ndarray:
    """Posterior over the active senses of ``word`` given English context words.

    Combines the expected stick-breaking prior with the clamped log-sigmoid
    context scores used during training; inactive senses get probability 0 and
    the rest sum to 1. Context words outside the vocabulary are dropped; with
    no surviving context the (renormalized) prior is returned. Raises KeyError
    when ``word`` itself is out of vocabulary.
    """
    vocab = model.vocab
    if word not in vocab.en_ids:
        raise KeyError(f"word not in vocabulary: {word!r}")
    w = vocab.en_ids[word]
    active = active_senses(model, w)
    prior = expected_sense_prior(model, w)
    scores = np.log(prior[active])
    for ctx_word in context:
        y = vocab.en_ids.get(ctx_word)
        if y is None:
            continue
        row = model.ctx_en[y]
        for pos, k in enumerate(active):
            scores[pos] += _log_sigmoid(float(np.dot(row, model.sense_vecs[w, k])))
    scores -= scores.max()
    weights = np.exp(scores)
    out = np.zeros(model.max_senses)
    out[active] = weights / weights.sum()
    return out


def disambiguate_batch(model: SenseModel, rows: Sequence[tuple[str, Sequence[str]]]) -> list[np.ndarray]:
    """Vector of posteriors for (word, context) rows, in input order."""
    return [disambiguate(model, word, ctx) for word, ctx in rows]


def _unit(vecs: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vecs, axis=-1, keepdims=True)
    return vecs / np.maximum(norms, 1e-12)


def nearest_neighbors(
    model: SenseModel,
    word: str,
    k: int,
    n: int = 10,
    include_foreign: bool = False,
) -> list[tuple[str, float]]:
    """Top-``n`` cosine neighbors of sense ``k`` of ``word`` among active senses.

    Candidates are every active English sense vector (labelled ``word#k``) and,
    when requested, every foreign vector (labelled ``word@lang``); the query
    sense itself is excluded. Raises ValueError for an inactive query sense.
    """
    w = model.en_id(word)
    priors = sense_prior_matrix(model)
    active = priors > model.config.sense_threshold
    if not 0 <= k < model.max_senses or not active[w, k]:
        raise ValueError(f"sense {k} of {word!r} is not active")
    labels = []
    rows = []
    for wi, form in enumerate(model.vocab.en_forms):
        for ki in np.nonzero(active[wi])[0]:
            if wi == w and ki == k:
                continue
            labels.append(f"{form}#{ki}")
            rows.append(model.sense_vecs[wi, ki])
    if include_foreign:
        for fi, (form, lang) in enumerate(model.vocab.fg_forms):
            labels.append(f"{form}@{lang}")
            rows.append(model.fg_vecs[fi])
    if not rows:
        return []
    sims = _unit(np.asarray(rows)) @ _unit(model.sense_vecs[w, k])
    order = np.argsort(-sims)[:n]
    return [(labels[i], float(sims[i])) for i in order]


def contextual_similarity(
    model: SenseModel,
    w1: str,
    ctx1: Sequence[str],
    w2: str,
    ctx2: Sequence[str],
    mode: str = "avg",
) -> float:
    """Sense-aware similarity of two words in their respective contexts.

    ``avg`` weights the cosine of every sense pair by the two disambiguation
    posteriors; ``max`` takes the cosine of the two maximum-posterior senses.
    """
    if mode not in ("avg", "max"):
        raise ValueError(f"mode must be 'avg' or 'max', got {mode!r}")
    p1 = disambiguate(model, w1, ctx1)
    p2 = disambiguate(model, w2, ctx2)
    v1 = _unit(model.sense_vecs[model.en_id(w1)])
    v2 = _unit(model.sense_vecs[model.en_id(w2)])
    if mode == "max":
        return float(v1[int(np.argmax(p1))] @ v2[int(np.argmax(p2))])
    return float(p1 @ (v1 @ v2.T) @ p2)
