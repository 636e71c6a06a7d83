"""Shared builders for the test suite."""

from __future__ import annotations

import random

import numpy as np
import pytest

from bild import ProbDist, Sampler, TableLM, Vocabulary, fit_ngram, vanilla_decode


def make_table(vocab: Vocabulary, default, rows=None) -> TableLM:
    rows = rows or {}
    return TableLM(
        vocab,
        {tuple(ctx): ProbDist(np.array(p)) for ctx, p in rows.items()},
        ProbDist(np.array(default)),
    )


@pytest.fixture
def vocab3() -> Vocabulary:
    return Vocabulary(size=3, eos=2, tokens=("a", "b", "<eos>"))


def random_corpus(rng: random.Random, vocab: Vocabulary, n_seqs: int, max_body: int = 7):
    """Random sequences of non-eos tokens, each terminated by eos."""
    corpus = []
    for _ in range(n_seqs):
        body_len = rng.randint(1, max_body)
        body = [rng.randrange(vocab.size - 1) for _ in range(body_len)]
        corpus.append(body + [vocab.eos])
    return corpus


def eos_terminating_ngram(rng: random.Random, vocab: Vocabulary, horizon: int):
    """A random fitted n-gram whose greedy decode reaches eos within `horizon`.

    Rebuilds with fresh corpora until the greedy walk from the empty prompt
    terminates, so degenerate-threshold equivalence runs never hit the
    generation budget mid-draft.
    """
    for _ in range(50):
        corpus = random_corpus(rng, vocab, rng.randint(4, 12))
        order = rng.choice([1, 2, 3])
        smoothing = rng.choice([0.1, 0.5, 1.0])
        model = fit_ngram(corpus, order, smoothing, vocab)
        out = vanilla_decode(model, [], Sampler.greedy(), horizon).sequence
        if out and out[-1] == vocab.eos:
            return model
    raise AssertionError("could not build an eos-terminating model")


def random_model_pair(seed: int, max_vocab: int = 8, horizon: int = 20):
    """Two independently fitted eos-terminating models over one vocabulary."""
    rng = random.Random(seed)
    size = rng.randint(3, max_vocab)
    vocab = Vocabulary(size=size, eos=size - 1)
    small = eos_terminating_ngram(rng, vocab, horizon)
    large = eos_terminating_ngram(rng, vocab, horizon)
    return vocab, small, large
