"""Evaluation: word-sense-induction scoring (ARI) and rank correlation.

WSI data interchange is TSV, one instance per line:
``target <TAB> gold_label <TAB> space-separated context words``.
Similarity evaluation rows are
``w1 <TAB> ctx1 words <TAB> w2 <TAB> ctx2 words <TAB> human_score``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as sp_stats

from .disambig import contextual_similarity, disambiguate
from .model import SenseModel


@dataclass(frozen=True)
class WsiInstance:
    """One occurrence of a target word with its context and gold sense label."""

    target: str
    context: tuple[str, ...]
    gold_cluster: str


def adjusted_rand_index(pred: Sequence, gold: Sequence) -> float:
    """Chance-corrected pair-counting agreement between two partitions.

    (index - expected) / (max - expected) over the contingency table; 1.0 for
    identical partitions (including the degenerate cases where the correction
    denominator vanishes), ~0 for independent ones. Labels may be any hashables.
    """
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gold)}")
    n = len(pred)
    if n < 2:
        raise ValueError("need at least 2 elements")
    _, pi = np.unique(np.asarray(pred, dtype=object), return_inverse=True)
    _, gi = np.unique(np.asarray(gold, dtype=object), return_inverse=True)
    joint = np.zeros((pi.max() + 1, gi.max() + 1), dtype=np.int64)
    np.add.at(joint, (pi, gi), 1)

    def pairs(x):
        return int((x.astype(object) * (x.astype(object) - 1) // 2).sum())

    index = pairs(joint.ravel())
    sum_pred = pairs(joint.sum(axis=1))
    sum_gold = pairs(joint.sum(axis=0))
    total = n * (n - 1) // 2
    expected_num = sum_pred * sum_gold
    max_num = (sum_pred + sum_gold) * total
    denom = max_num - 2 * expected_num
    if denom == 0:
        return 1.0
    return (2 * total * index - 2 * expected_num) / denom


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties.

    Raises ValueError on length mismatch, fewer than 3 points, or constant input.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape:
        raise ValueError(f"length mismatch: {xs.shape} vs {ys.shape}")
    if xs.size < 3:
        raise ValueError("need at least 3 points")
    if np.all(xs == xs[0]) or np.all(ys == ys[0]):
        raise ValueError("rank correlation undefined for constant input")
    return float(sp_stats.spearmanr(xs, ys).statistic)


@dataclass
class WsiReport:
    """Per-target and averaged ARI, plus any skipped out-of-vocabulary targets."""

    per_word: dict[str, float]
    average: float
    skipped: list[str]
    predictions: dict[str, list[int]]


def wsi_evaluate(
    model: SenseModel,
    instances: Iterable[WsiInstance],
    aggregate: str = "macro",
) -> WsiReport:
    """Cluster each instance by its argmax sense and score against gold clusters.

    ``macro`` averages the per-target-word ARI; ``pooled`` computes one ARI over
    all instances with labels namespaced per word. Targets outside the
    vocabulary are skipped and reported.
    """
    if aggregate not in ("macro", "pooled"):
        raise ValueError(f"aggregate must be 'macro' or 'pooled', got {aggregate!r}")
    by_word: dict[str, list[WsiInstance]] = defaultdict(list)
    skipped = []
    for inst in instances:
        if inst.target in model.vocab.en_ids:
            by_word[inst.target].append(inst)
        elif inst.target not in skipped:
            skipped.append(inst.target)
    per_word = {}
    predictions = {}
    pooled_pred: list = []
    pooled_gold: list = []
    for word, insts in by_word.items():
        pred = [int(np.argmax(disambiguate(model, word, inst.context))) for inst in insts]
        gold = [inst.gold_cluster for inst in insts]
        predictions[word] = pred
        per_word[word] = adjusted_rand_index(pred, gold)
        pooled_pred.extend((word, p) for p in pred)
        pooled_gold.extend((word, g) for g in gold)
    if not per_word:
        raise ValueError("no scorable instances: every target was out of vocabulary")
    if aggregate == "macro":
        average = float(np.mean(list(per_word.values())))
    else:
        average = adjusted_rand_index(pooled_pred, pooled_gold)
    return WsiReport(per_word=per_word, average=average, skipped=skipped, predictions=predictions)


def read_wsi_tsv(path) -> list[WsiInstance]:
    """Read ``target \\t gold_label \\t context words`` rows."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{line_no}: expected 3 tab-separated fields, got {len(parts)}")
            target, gold, ctx = parts
            out.append(WsiInstance(target=target, context=tuple(ctx.split()), gold_cluster=gold))
    return out


def write_wsi_tsv(path, instances: Iterable[WsiInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(f"{inst.target}\t{inst.gold_cluster}\t{' '.join(inst.context)}\n")


def similarity_evaluate(model: SenseModel, rows, mode: str = "avg"):
    """Model-vs-human rank correlation on contextual similarity rows.

    Rows are (w1, ctx1, w2, ctx2, human_score); rows with an out-of-vocabulary
    target word are skipped. Returns (spearman, model_scores, skipped_count).
    """
    human = []
    scores = []
    skipped = 0
    for w1, ctx1, w2, ctx2, gold in rows:
        try:
            scores.append(contextual_similarity(model, w1, ctx1, w2, ctx2, mode=mode))
        except KeyError:
            skipped += 1
            continue
        human.append(float(gold))
    if len(scores) < 3:
        raise ValueError("fewer than 3 scorable similarity rows")
    return spearman(scores, human), scores, skipped


def read_similarity_tsv(path) -> list[tuple[str, tuple[str, ...], str, tuple[str, ...], float]]:
    """Read ``w1 \\t ctx1 \\t w2 \\t ctx2 \\t human_score`` rows."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{line_no}: expected 5 tab-separated fields, got {len(parts)}")
            w1, ctx1, w2, ctx2, score = parts
            out.append((w1, tuple(ctx1.split()), w2, tuple(ctx2.split()), float(score)))
    return out
