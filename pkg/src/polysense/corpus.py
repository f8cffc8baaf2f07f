"""Parallel-corpus ingestion: aligned sentence pairs, vocabularies, windows, noise tables.

File formats (all UTF-8):
  * corpus files: one pre-tokenized sentence per line, tokens separated by whitespace;
  * alignment files: one line per sentence pair, space-separated ``i-j`` entries where
    ``i`` indexes the English sentence and ``j`` the foreign sentence, both 0-based.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

ENGLISH = "en"


class CorpusError(Exception):
    """Structural problem with a corpus (line-count mismatch, empty corpus, ...)."""


class AlignmentError(CorpusError):
    """Bad alignment entry; carries the 1-based line number when known."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass(frozen=True)
class Token:
    """One surface form tagged with the language it came from."""

    surface: str
    lang: str

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")

    def __repr__(self):
        return f"{self.surface}@{self.lang}"


@dataclass
class AlignedSentencePair:
    """An English sentence, a foreign sentence, and their word alignments.

    ``a_ef`` maps English positions to foreign positions, ``a_fe`` the reverse.
    Both are functions (at most one target per source); ``a_fe`` is obtained by
    inverting ``a_ef``, keeping the first link on collision.
    """

    en: list[Token]
    fg: list[Token]
    a_ef: dict[int, int]
    a_fe: dict[int, int]

    @property
    def lang(self) -> str:
        return self.fg[0].lang if self.fg else ENGLISH


@dataclass(frozen=True)
class CorpusFile:
    """One parallel corpus on disk: English side, foreign side, alignments, language tag."""

    en_path: str
    fg_path: str
    align_path: str
    lang: str


def parse_alignment_line(line: str, line_no: int | None = None) -> list[tuple[int, int]]:
    """Parse one ``i-j``-pair alignment line into (en_index, fg_index) tuples."""
    pairs = []
    for tok in line.split():
        src, dash, tgt = tok.partition("-")
        if not dash or not src.isdigit() or not tgt.isdigit():
            raise AlignmentError(f"malformed alignment token {tok!r}", line_no)
        pairs.append((int(src), int(tgt)))
    return pairs


def _invert_alignment(a_ef: dict[int, int]) -> tuple[dict[int, int], int]:
    a_fe: dict[int, int] = {}
    collisions = 0
    for i, j in a_ef.items():
        if j in a_fe:
            collisions += 1
        else:
            a_fe[j] = i
    return a_fe, collisions


def load_parallel_corpus(
    en_path,
    fg_path,
    align_path,
    lang: str,
    on_error: str = "abort",
) -> Iterator[AlignedSentencePair]:
    """Stream aligned sentence pairs from a corpus file triple.

    The three files must have equal line counts. Alignment entries pointing
    outside either sentence make the pair invalid; with ``on_error="abort"``
    that raises, with ``"skip"`` the pair is dropped with a logged warning.
    """
    if on_error not in ("abort", "skip"):
        raise ValueError(f"on_error must be 'abort' or 'skip', got {on_error!r}")
    sentinel = object()
    skipped = 0
    with open(en_path, encoding="utf-8") as fe, open(fg_path, encoding="utf-8") as ff, open(
        align_path, encoding="utf-8"
    ) as fa:
        rows = itertools.zip_longest(fe, ff, fa, fillvalue=sentinel)
        for line_no, (le, lf, la) in enumerate(rows, start=1):
            if sentinel in (le, lf, la):
                raise CorpusError(
                    f"line-count mismatch between {en_path}, {fg_path}, {align_path} "
                    f"(first divergence at line {line_no})"
                )
            en = [Token(w, ENGLISH) for w in le.split()]
            fg = [Token(w, lang) for w in lf.split()]
            try:
                links = parse_alignment_line(la, line_no)
                a_ef: dict[int, int] = {}
                collisions = 0
                for i, j in links:
                    if i >= len(en) or j >= len(fg):
                        raise AlignmentError(
                            f"alignment {i}-{j} out of bounds for lengths "
                            f"({len(en)}, {len(fg)})",
                            line_no,
                        )
                    if i in a_ef:
                        collisions += 1
                    else:
                        a_ef[i] = j
            except AlignmentError:
                if on_error == "abort":
                    raise
                skipped += 1
                log.warning("skipping pair at line %d of %s", line_no, align_path)
                continue
            a_fe, inv_collisions = _invert_alignment(a_ef)
            if collisions or inv_collisions:
                log.debug(
                    "line %d: dropped %d duplicate links, %d inverse collisions",
                    line_no,
                    collisions,
                    inv_collisions,
                )
            yield AlignedSentencePair(en, fg, a_ef, a_fe)
    if skipped:
        log.warning("%s: skipped %d invalid pairs", align_path, skipped)


def load_manifest(manifest: Sequence[CorpusFile], on_error: str = "abort") -> Iterator[AlignedSentencePair]:
    """Concatenate several parallel corpora into one stream, preserving file order."""
    for entry in manifest:
        yield from load_parallel_corpus(
            entry.en_path, entry.fg_path, entry.align_path, entry.lang, on_error=on_error
        )


@dataclass
class Vocabulary:
    """Dense, contiguous id spaces for English words and language-tagged foreign words.

    English ids index ``en_forms``; foreign ids index ``fg_forms`` whose entries are
    ``(word, lang)`` so equal surfaces from different languages never share an id.
    ``n_e`` / ``n_f`` count retained token occurrences (words below ``min_count``
    are dropped entirely and do not occupy window slots).
    """

    en_forms: list[str]
    en_counts: np.ndarray
    fg_forms: list[tuple[str, str]]
    fg_counts: np.ndarray
    n_e: int
    n_f: int
    langs: tuple[str, ...]
    min_count: int
    en_ids: dict[str, int] = field(repr=False, default_factory=dict)
    fg_ids: dict[tuple[str, str], int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.en_ids:
            self.en_ids = {w: i for i, w in enumerate(self.en_forms)}
        if not self.fg_ids:
            self.fg_ids = {wl: i for i, wl in enumerate(self.fg_forms)}

    @property
    def n_en_words(self) -> int:
        return len(self.en_forms)

    @property
    def n_fg_words(self) -> int:
        return len(self.fg_forms)

    def en_id(self, word: str) -> int:
        """Id of an English word; raises KeyError when out of vocabulary."""
        return self.en_ids[word]

    def fg_id(self, word: str, lang: str) -> int:
        return self.fg_ids[(word, lang)]

    def token_id(self, token: Token) -> int | None:
        """Vocabulary id for a token, or None when it was dropped."""
        if token.lang == ENGLISH:
            return self.en_ids.get(token.surface)
        return self.fg_ids.get((token.surface, token.lang))


def build_vocabulary(pairs: Iterable[AlignedSentencePair], min_count: int = 5) -> Vocabulary:
    """Count words over a pair stream and keep those seen at least ``min_count`` times.

    Ids are assigned by decreasing count, ties broken lexicographically, so a
    given corpus always produces the same vocabulary.
    """
    en_counts: dict[str, int] = {}
    fg_counts: dict[tuple[str, str], int] = {}
    langs: list[str] = []
    n_pairs = 0
    for pair in pairs:
        n_pairs += 1
        for tok in pair.en:
            en_counts[tok.surface] = en_counts.get(tok.surface, 0) + 1
        for tok in pair.fg:
            key = (tok.surface, tok.lang)
            fg_counts[key] = fg_counts.get(key, 0) + 1
            if tok.lang not in langs:
                langs.append(tok.lang)
    if n_pairs == 0:
        raise CorpusError("empty corpus: no sentence pairs")

    en_kept = sorted(
        (w for w, c in en_counts.items() if c >= min_count),
        key=lambda w: (-en_counts[w], w),
    )
    fg_kept = sorted(
        (wl for wl, c in fg_counts.items() if c >= min_count),
        key=lambda wl: (-fg_counts[wl], wl),
    )
    if not en_kept:
        raise CorpusError(f"no English word reaches min_count={min_count}")
    en_arr = np.array([en_counts[w] for w in en_kept], dtype=np.int64)
    fg_arr = np.array([fg_counts[wl] for wl in fg_kept], dtype=np.int64)
    return Vocabulary(
        en_forms=en_kept,
        en_counts=en_arr,
        fg_forms=fg_kept,
        fg_counts=fg_arr,
        n_e=int(en_arr.sum()),
        n_f=int(fg_arr.sum()) if len(fg_kept) else 0,
        langs=tuple(langs),
        min_count=min_count,
    )


def neighborhood(sentence: Sequence, i: int, d: int) -> list:
    """Up to ``d`` items on each side of position ``i``, excluding ``i`` itself."""
    if not 0 <= i < len(sentence):
        raise IndexError(f"position {i} outside sentence of length {len(sentence)}")
    lo = max(0, i - d)
    hi = min(len(sentence), i + d + 1)
    return list(sentence[lo:i]) + list(sentence[i + 1 : hi])


@dataclass
class NoiseTable:
    """Cumulative unigram^power distribution for drawing negative samples."""

    cumulative: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.diff(self.cumulative, prepend=0.0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` ids with probability proportional to the table weights."""
        return np.searchsorted(self.cumulative, rng.random(n), side="right").astype(np.int64)


def build_noise_table(counts: np.ndarray, power: float = 0.75) -> NoiseTable:
    """Noise distribution with P(w) proportional to count(w)**power."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        raise CorpusError("cannot build a noise table over an empty vocabulary side")
    if power < 0:
        raise ValueError("power must be >= 0")
    weights = counts**power
    cum = np.cumsum(weights / weights.sum())
    cum[-1] = 1.0
    return NoiseTable(cumulative=cum)


def filter_pair(pair: AlignedSentencePair, vocab: Vocabulary) -> AlignedSentencePair:
    """Drop out-of-vocabulary tokens and remap alignments onto the kept positions.

    Links survive only when both endpoints are retained; windows are later built
    over the filtered sequences, so dropped tokens do not occupy context slots.
    """
    en_keep = [i for i, tok in enumerate(pair.en) if vocab.token_id(tok) is not None]
    fg_keep = [j for j, tok in enumerate(pair.fg) if vocab.token_id(tok) is not None]
    en_map = {old: new for new, old in enumerate(en_keep)}
    fg_map = {old: new for new, old in enumerate(fg_keep)}
    a_ef = {
        en_map[i]: fg_map[j]
        for i, j in pair.a_ef.items()
        if i in en_map and j in fg_map
    }
    a_fe, _ = _invert_alignment(a_ef)
    return AlignedSentencePair(
        en=[pair.en[i] for i in en_keep],
        fg=[pair.fg[j] for j in fg_keep],
        a_ef=a_ef,
        a_fe=a_fe,
    )


@dataclass
class EncodedCorpus:
    """Materialized id-encoded corpus ready for the training kernels.

    Sentences are concatenated; ``en_offsets``/``fg_offsets`` give per-pair slices.
    ``align_ef[p]`` holds the aligned *global* foreign position for global English
    position ``p``, or -1 when unaligned (``align_fe`` mirrors this). ``token_base``
    is the running count of retained tokens (English then foreign, per pair) used
    to give every center token a stable global index.
    """

    en_tokens: np.ndarray
    en_offsets: np.ndarray
    fg_tokens: np.ndarray
    fg_offsets: np.ndarray
    align_ef: np.ndarray
    align_fe: np.ndarray
    token_base: np.ndarray
    n_pairs: int

    @property
    def tokens_per_epoch(self) -> int:
        return int(self.token_base[-1])


def encode_corpus(
    pairs: Iterable[AlignedSentencePair],
    vocab: Vocabulary,
    subsample: float = 0.0,
    rng: np.random.Generator | None = None,
) -> EncodedCorpus:
    """Filter, id-encode and flatten a pair stream.

    With ``subsample`` > 0, frequent words are randomly dropped before windowing
    using the usual ``(sqrt(f/s) + 1) * s/f`` keep probability on the English side
    relative frequency ``f`` (and analogously for the foreign side).
    """
    keep_en = keep_fg = None
    if subsample > 0:
        if rng is None:
            raise ValueError("subsampling requires an rng")
        f_en = vocab.en_counts / max(vocab.n_e, 1)
        f_fg = vocab.fg_counts / max(vocab.n_f, 1) if vocab.n_fg_words else np.zeros(0)
        keep_en = np.minimum(1.0, (np.sqrt(f_en / subsample) + 1) * subsample / f_en)
        keep_fg = np.minimum(1.0, (np.sqrt(f_fg / subsample) + 1) * subsample / f_fg) if f_fg.size else f_fg

    en_tok: list[int] = []
    fg_tok: list[int] = []
    en_off = [0]
    fg_off = [0]
    aef: list[int] = []
    afe: list[int] = []
    base = [0]
    n_pairs = 0
    for pair in pairs:
        n_pairs += 1
        filtered = filter_pair(pair, vocab)
        en_ids = [vocab.token_id(t) for t in filtered.en]
        fg_ids = [vocab.token_id(t) for t in filtered.fg]
        a_ef = filtered.a_ef
        if keep_en is not None:
            kept = [i for i, w in enumerate(en_ids) if rng.random() < keep_en[w]]
            kmap = {old: new for new, old in enumerate(kept)}
            en_ids = [en_ids[i] for i in kept]
            keptf = [j for j, w in enumerate(fg_ids) if rng.random() < keep_fg[w]]
            fmap = {old: new for new, old in enumerate(keptf)}
            fg_ids = [fg_ids[j] for j in keptf]
            a_ef = {kmap[i]: fmap[j] for i, j in a_ef.items() if i in kmap and j in fmap}
        en_base = en_off[-1]
        fg_base = fg_off[-1]
        en_tok.extend(en_ids)
        fg_tok.extend(fg_ids)
        en_off.append(en_base + len(en_ids))
        fg_off.append(fg_base + len(fg_ids))
        link_ef = [-1] * len(en_ids)
        link_fe = [-1] * len(fg_ids)
        for i, j in a_ef.items():
            link_ef[i] = fg_base + j
            if link_fe[j] < 0:
                link_fe[j] = en_base + i
        aef.extend(link_ef)
        afe.extend(link_fe)
        base.append(base[-1] + len(en_ids) + len(fg_ids))
    if n_pairs == 0:
        raise CorpusError("empty corpus: no sentence pairs")
    return EncodedCorpus(
        en_tokens=np.array(en_tok, dtype=np.int32),
        en_offsets=np.array(en_off, dtype=np.int64),
        fg_tokens=np.array(fg_tok, dtype=np.int32),
        fg_offsets=np.array(fg_off, dtype=np.int64),
        align_ef=np.array(aef, dtype=np.int64),
        align_fe=np.array(afe, dtype=np.int64),
        token_base=np.array(base, dtype=np.int64),
        n_pairs=n_pairs,
    )
