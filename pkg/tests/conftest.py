import numpy as np
import pytest

from polysense.corpus import AlignedSentencePair, Token


def make_tiny_model(t_max=10, alpha=0.1, dim=8, seed=1, eps=0.001, **cfg_kw):
    from polysense.corpus import build_vocabulary
    from polysense.model import TrainConfig, init_model

    pairs = [make_pair("a b c d", "x y", [(0, 0)])]
    vocab = build_vocabulary(pairs, min_count=1)
    cfg = TrainConfig(alpha=alpha, max_senses=t_max, dim=dim, seed=seed,
                      sense_threshold=eps, **cfg_kw)
    return init_model(vocab, cfg)


def make_pair(en_words, fg_words, links, lang="fr"):
    en = [Token(w, "en") for w in en_words.split()]
    fg = [Token(w, lang) for w in fg_words.split()]
    a_ef = dict(links)
    a_fe = {}
    for i, j in a_ef.items():
        a_fe.setdefault(j, i)
    return AlignedSentencePair(en, fg, a_ef, a_fe)


def write_corpus(tmp_path, name, rows, lang="fr"):
    """rows: list of (en_sentence, fg_sentence, align_line); returns a CorpusFile."""
    from polysense.corpus import CorpusFile

    en_path = tmp_path / f"{name}.en"
    fg_path = tmp_path / f"{name}.fg"
    al_path = tmp_path / f"{name}.align"
    en_path.write_text("\n".join(r[0] for r in rows) + "\n", encoding="utf-8")
    fg_path.write_text("\n".join(r[1] for r in rows) + "\n", encoding="utf-8")
    al_path.write_text("\n".join(r[2] for r in rows) + "\n", encoding="utf-8")
    return CorpusFile(str(en_path), str(fg_path), str(al_path), lang)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """Small bilingual corpus with two planted senses and distinct lexicalizations."""
    from polysense.synth import SynthLanguage, SynthSpec, generate_synthetic

    spec = SynthSpec(
        pairs=2500,
        seed=5,
        languages=(SynthLanguage("f1"),),
        wsi_instances=100,
    )
    return spec, generate_synthetic(spec, tmp_path_factory.mktemp("synth"))


@pytest.fixture(scope="session")
def trained_model(small_synth):
    """A bilingual model trained long enough for the planted word to split."""
    from polysense.inference import train
    from polysense.model import TrainConfig

    _, data = small_synth
    return train(data.manifest, TrainConfig(iterations=6, seed=11))
