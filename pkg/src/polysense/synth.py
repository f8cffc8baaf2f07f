"""Synthetic parallel corpora with planted word senses.

Each sentence plants one ambiguous word in a known sense; its context words are
drawn from a sense-specific topic vocabulary mixed with shared filler words.
The foreign side is a word-for-word translation with exact positional
alignments. A language may *merge* the planted senses (both senses share one
foreign surface form) or keep them lexically distinct, which is what makes a
second, non-merging language informative during training.

Held-out disambiguation instances with gold sense labels are emitted alongside
the corpus files, which use exactly the formats the corpus reader consumes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CorpusFile
from .evaluation import WsiInstance, write_wsi_tsv


@dataclass(frozen=True)
class PlantedWord:
    """An ambiguous English word with disjoint per-sense topic vocabularies.

    ``topic_noise`` overrides the spec-level contamination for this word,
    grading how hard the senses are to separate from monolingual context alone.
    """

    word: str = "poly0"
    senses: int = 2
    topic_words: int = 40
    topic_noise: float | None = None

    def topics(self) -> list[list[str]]:
        return [
            [f"{self.word}_s{k}t{j:02d}" for j in range(self.topic_words)]
            for k in range(self.senses)
        ]


@dataclass(frozen=True)
class SynthLanguage:
    """A foreign language; with ``merge`` every planted sense shares one surface form."""

    lang: str
    merge: bool = False


@dataclass(frozen=True)
class SynthSpec:
    """Generator parameters; everything is deterministic in ``seed``.

    ``pairs`` counts sentence pairs per language. ``topic_rate`` is the
    probability that a non-center slot draws from a topic vocabulary rather
    than the shared filler vocabulary; a topic draw comes from the active
    sense's vocabulary with probability ``1 - topic_noise`` and from one of the
    other senses' vocabularies otherwise. Contamination makes the senses'
    monolingual context distributions overlap (as they do in real corpora)
    while the planted word's foreign lexicalization stays exact, so the
    crosslingual signal remains crisp. Held-out instances draw uncontaminated
    contexts.
    """

    planted: tuple[PlantedWord, ...] = (PlantedWord(),)
    languages: tuple[SynthLanguage, ...] = (SynthLanguage("f1"),)
    pairs: int = 20000
    sentence_length: int = 9
    topic_rate: float = 0.5
    topic_noise: float = 0.3
    filler_words: int = 60
    wsi_instances: int = 200
    wsi_context: int = 4
    seed: int = 1

    def __post_init__(self):
        if self.sentence_length < 2:
            raise ValueError("sentence_length must be >= 2")
        if not 0 <= self.topic_rate <= 1:
            raise ValueError("topic_rate must lie in [0, 1]")
        if not 0 <= self.topic_noise <= 1:
            raise ValueError("topic_noise must lie in [0, 1]")
        for p in self.planted:
            if p.topic_noise is not None and not 0 <= p.topic_noise <= 1:
                raise ValueError(f"topic_noise override for {p.word!r} must lie in [0, 1]")
        if any(p.topic_words < self.wsi_context for p in self.planted):
            raise ValueError("topic vocabularies must cover the instance context size")
        seen = set()
        for p in self.planted:
            if p.word in seen:
                raise ValueError(f"duplicate planted word {p.word!r}")
            seen.add(p.word)


@dataclass
class SynthData:
    """Everything a downstream run needs: manifest, gold instances, translation maps."""

    manifest: list[CorpusFile]
    instances: list[WsiInstance]
    wsi_path: str
    translations: dict[str, dict[str, str]]
    lexicalizations: dict[tuple[str, str], tuple[str, ...]]
    gold_sense_counts: dict[str, np.ndarray] = field(default_factory=dict)

    def corpora(self, *langs: str) -> list[CorpusFile]:
        """Manifest restricted to the given languages (training-time subsetting)."""
        keep = [c for c in self.manifest if c.lang in langs]
        if len(keep) != len(langs):
            missing = set(langs) - {c.lang for c in keep}
            raise KeyError(f"no corpus for language(s) {sorted(missing)}")
        return keep


def _translate(token: str, lang: str) -> str:
    return f"{token}_{lang}"


def _lexicalization(planted: PlantedWord, language: SynthLanguage) -> tuple[str, ...]:
    if language.merge:
        return tuple(_translate(planted.word, language.lang) for _ in range(planted.senses))
    return tuple(
        f"{planted.word}_s{k}_{language.lang}" for k in range(planted.senses)
    )


def generate_synthetic(spec: SynthSpec, out_dir) -> SynthData:
    """Write corpus/alignment files per language plus the held-out WSI instances."""
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    fillers = [f"fill{j:02d}" for j in range(spec.filler_words)]
    topics = {p.word: p.topics() for p in spec.planted}
    lex = {
        (p.word, lang.lang): _lexicalization(p, lang)
        for p in spec.planted
        for lang in spec.languages
    }
    shared_tokens = fillers + [t for p in spec.planted for ts in topics[p.word] for t in ts]
    translations = {
        tok: {lang.lang: _translate(tok, lang.lang) for lang in spec.languages}
        for tok in shared_tokens
    }

    manifest = []
    gold_counts = {p.word: np.zeros(p.senses, dtype=np.int64) for p in spec.planted}
    align_line = " ".join(f"{i}-{i}" for i in range(spec.sentence_length))
    for language in spec.languages:
        en_path = out / f"{language.lang}.en.txt"
        fg_path = out / f"{language.lang}.fg.txt"
        align_path = out / f"{language.lang}.align.txt"
        with open(en_path, "w", encoding="utf-8") as fe, open(
            fg_path, "w", encoding="utf-8"
        ) as ff, open(align_path, "w", encoding="utf-8") as fa:
            for _ in range(spec.pairs):
                p = spec.planted[rng.integers(len(spec.planted))]
                z = int(rng.integers(p.senses))
                gold_counts[p.word][z] += 1
                center = int(rng.integers(spec.sentence_length))
                word_topics = topics[p.word]
                en_sent = []
                fg_sent = []
                for pos in range(spec.sentence_length):
                    if pos == center:
                        en_sent.append(p.word)
                        fg_sent.append(lex[(p.word, language.lang)][z])
                        continue
                    if rng.random() < spec.topic_rate:
                        noise = spec.topic_noise if p.topic_noise is None else p.topic_noise
                        sense = z
                        if p.senses > 1 and rng.random() < noise:
                            sense = int((z + 1 + rng.integers(p.senses - 1)) % p.senses)
                        pool = word_topics[sense]
                        tok = pool[rng.integers(len(pool))]
                    else:
                        tok = fillers[rng.integers(len(fillers))]
                    en_sent.append(tok)
                    fg_sent.append(_translate(tok, language.lang))
                fe.write(" ".join(en_sent) + "\n")
                ff.write(" ".join(fg_sent) + "\n")
                fa.write(align_line + "\n")
        manifest.append(CorpusFile(str(en_path), str(fg_path), str(align_path), language.lang))

    instances = []
    for p in spec.planted:
        for _ in range(spec.wsi_instances):
            z = int(rng.integers(p.senses))
            ctx = rng.choice(topics[p.word][z], size=spec.wsi_context, replace=False)
            instances.append(
                WsiInstance(target=p.word, context=tuple(ctx), gold_cluster=f"s{z}")
            )
    wsi_path = out / "wsi.tsv"
    write_wsi_tsv(wsi_path, instances)

    return SynthData(
        manifest=manifest,
        instances=instances,
        wsi_path=str(wsi_path),
        translations=translations,
        lexicalizations=lex,
        gold_sense_counts=gold_counts,
    )
