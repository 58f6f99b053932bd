"""Shared builders for synthetic sentences and corpora."""

import numpy as np
import pytest

from causetag.corpus import ROOT_HEAD, Corpus, Sentence, Token


def make_sentence(surfaces, labels, heads=None, rels=None, sent_id="s0",
                  dataset="test", explicit=None):
    """Sentence with a chain tree by default: token 0 is the root and every
    other token attaches to its left neighbour with relation 'dep'."""
    n = len(surfaces)
    if heads is None:
        heads = [ROOT_HEAD] + list(range(n - 1))
    if rels is None:
        rels = ["root"] + ["dep"] * (n - 1)
    tokens = tuple(
        Token(i, surfaces[i], heads[i], rels[i]) for i in range(n)
    )
    return Sentence(sent_id, dataset, tokens, tuple(labels), explicit)


def make_corpus(sentences, name="test"):
    return Corpus(name, tuple(sentences))


def xy_corpus(n_sentences=32, seed=7, dataset="xy"):
    """Deterministic pattern corpus: token 'X' is always C, 'Y' always E,
    fillers are O. Linearly separable from hash embeddings."""
    rng = np.random.default_rng(seed)
    fillers = [f"w{i}" for i in range(20)]
    sentences = []
    for i in range(n_sentences):
        length = int(rng.integers(4, 9))
        surfaces = [fillers[int(rng.integers(len(fillers)))] for _ in range(length)]
        labels = ["O"] * length
        x_pos, y_pos = rng.choice(length, size=2, replace=False)
        surfaces[x_pos], labels[x_pos] = "X", "C"
        surfaces[y_pos], labels[y_pos] = "Y", "E"
        sentences.append(
            make_sentence(surfaces, labels, sent_id=f"xy{i}", dataset=dataset)
        )
    return make_corpus(sentences, name=dataset)


def template_sentences(name, n_sentences, seed, template="explicit",
                       vocab_size=20, id_prefix=None):
    """Pattern sentences for transfer tests.

    'explicit' sentences read  [fillers] w_a causes w_b [fillers]  with
    labels C on w_a and E on w_b; 'implicit' sentences read
    [fillers] w_a follows w_b [fillers] with E on w_a and C on w_b (the
    marker token 'follows' is not in the lexicon). The two differ only in
    the pivot word and the label order, so a model trained on one template
    transfers poorly to the other.
    """
    rng = np.random.default_rng(seed)
    slot_words = [f"v{i}" for i in range(vocab_size)]
    fillers = [f"g{i}" for i in range(10)]
    pivot, left, right = {
        "explicit": ("causes", "C", "E"),
        "implicit": ("follows", "E", "C"),
    }[template]
    prefix = id_prefix if id_prefix is not None else name
    sentences = []
    for i in range(n_sentences):
        pre = [fillers[int(rng.integers(len(fillers)))] for _ in range(int(rng.integers(0, 3)))]
        post = [fillers[int(rng.integers(len(fillers)))] for _ in range(int(rng.integers(0, 3)))]
        w_a = slot_words[int(rng.integers(len(slot_words)))]
        w_b = slot_words[int(rng.integers(len(slot_words)))]
        surfaces = pre + [w_a, pivot, w_b] + post
        labels = ["O"] * len(pre) + [left, "O", right] + ["O"] * len(post)
        sentences.append(
            make_sentence(surfaces, labels, sent_id=f"{prefix}{i}", dataset=name)
        )
    return sentences


def template_corpus(name, n_sentences, seed, template="explicit", vocab_size=20):
    return make_corpus(
        template_sentences(name, n_sentences, seed, template, vocab_size), name=name
    )


def mixed_corpus(name, n_explicit, n_implicit, seed):
    """Corpus containing both templates (used as a composition-sweep source
    and as the 'superset pattern' corpus in containment checks)."""
    sentences = template_sentences(name, n_explicit, seed, "explicit",
                                   id_prefix=f"{name}-ex")
    sentences += template_sentences(name, n_implicit, seed + 1, "implicit",
                                    id_prefix=f"{name}-im")
    return make_corpus(sentences, name=name)


def random_tree_sentence(rng, sent_id="r0", dataset="rand", max_len=8):
    """Random sentence with a valid random tree, random compound/amod edges,
    and random labels; exercises partition/collapse invariants."""
    n = int(rng.integers(1, max_len + 1))
    rels_pool = ["compound", "amod", "nsubj", "obj", "det", "punct"]
    surfaces = [f"t{int(rng.integers(50))}" for _ in range(n)]
    labels = [("C", "E", "O")[int(rng.integers(3))] for _ in range(n)]
    heads = [ROOT_HEAD]
    rels = ["root"]
    for i in range(1, n):
        heads.append(int(rng.integers(0, i)))  # head to the left: acyclic
        rels.append(rels_pool[int(rng.integers(len(rels_pool)))])
    return make_sentence(surfaces, labels, heads, rels, sent_id=sent_id, dataset=dataset)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
