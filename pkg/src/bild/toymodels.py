"""Deterministic toy language models and the prediction-alignment recipe.

``TableLM`` maps exact prefixes to stored distributions and is the main
test oracle. ``NgramLM`` is a Laplace-smoothed n-gram model fit from a
corpus; it stands in for the trained small/large models at desk scale.
``align_small`` refits a small n-gram model on the large model's greedy
generations so the two models disagree less, mirroring how a drafting
model is fine-tuned on the verifying model's outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dist import ProbDist
from .engine import vanilla_decode
from .errors import InvalidInputError
from .models import LanguageModel
from .sampling import Sampler
from .vocab import EMPTY_SEQUENCE_MARK, Vocabulary

# Begin-of-sequence context padding: a reserved id outside the vocabulary,
# used only inside n-gram context tuples, never predicted.
BOS = -1

DEFAULT_ROW_MARK = "DEFAULT"


class TableLM(LanguageModel):
    """Lookup-table model: exact prefix -> stored distribution.

    Unlisted prefixes fall through to ``default_row``.
    """

    def __init__(
        self,
        vocabulary: Vocabulary,
        rows: dict[tuple[int, ...], ProbDist],
        default_row: ProbDist,
    ) -> None:
        for ctx, row in rows.items():
            vocabulary.validate_sequence(ctx)
            if len(row) != vocabulary.size:
                raise InvalidInputError("table row length must equal vocabulary size")
        if len(default_row) != vocabulary.size:
            raise InvalidInputError("default row length must equal vocabulary size")
        self._vocabulary = vocabulary
        self._rows = dict(rows)
        self._default_row = default_row

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    @property
    def default_row(self) -> ProbDist:
        return self._default_row

    def score_next(self, prefix: Sequence[int]) -> ProbDist:
        self._check_prefix(prefix)
        return self._rows.get(tuple(prefix), self._default_row)


def load_table_lm(path: str | Path, vocabulary: Vocabulary) -> TableLM:
    """Parse a table-model file.

    One record per line: ``<context tokens or -> | <p_0> ... <p_{V-1}>``.
    A ``DEFAULT`` context row is required and covers unlisted prefixes.
    """
    rows: dict[tuple[int, ...], ProbDist] = {}
    default_row: ProbDist | None = None
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "|" not in line:
            raise InvalidInputError(f"{path}:{lineno}: expected '<context> | <probs>'")
        ctx_part, probs_part = line.split("|", 1)
        probs = [float(x) for x in probs_part.split()]
        if len(probs) != vocabulary.size:
            raise InvalidInputError(
                f"{path}:{lineno}: expected {vocabulary.size} probabilities, got {len(probs)}"
            )
        dist = ProbDist(np.array(probs))
        ctx_part = ctx_part.strip()
        if ctx_part == DEFAULT_ROW_MARK:
            default_row = dist
        elif ctx_part in ("", EMPTY_SEQUENCE_MARK):
            rows[()] = dist
        else:
            rows[tuple(vocabulary.id_of(s) for s in ctx_part.split())] = dist
    if default_row is None:
        raise InvalidInputError(f"{path}: missing required DEFAULT row")
    return TableLM(vocabulary, rows, default_row)


def save_table_lm(model: TableLM, path: str | Path) -> None:
    vocab = model.vocabulary
    lines = []
    for ctx in sorted(model._rows):
        ctx_str = " ".join(vocab.symbol(t) for t in ctx) if ctx else EMPTY_SEQUENCE_MARK
        probs = " ".join(repr(p) for p in model._rows[ctx].to_list())
        lines.append(f"{ctx_str} | {probs}")
    probs = " ".join(repr(p) for p in model.default_row.to_list())
    lines.append(f"{DEFAULT_ROW_MARK} | {probs}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class NgramLM(LanguageModel):
    """Laplace-smoothed n-gram model.

    The conditional probability of token ``t`` after context ``c`` is
    ``(count(c, t) + smoothing) / (total(c) + smoothing * V)``. Contexts
    shorter than ``order - 1`` are padded on the left with ``BOS``.
    """

    def __init__(
        self,
        vocabulary: Vocabulary,
        order: int,
        smoothing: float,
        counts: dict[tuple[tuple[int, ...], int], int],
    ) -> None:
        if order < 1:
            raise InvalidInputError("order must be >= 1")
        if smoothing <= 0:
            raise InvalidInputError("smoothing must be > 0")
        self._vocabulary = vocabulary
        self.order = order
        self.smoothing = float(smoothing)
        self.counts = dict(counts)
        self._context_totals: dict[tuple[int, ...], int] = {}
        for (ctx, _), c in counts.items():
            if c < 0:
                raise InvalidInputError("counts must be non-negative")
            self._context_totals[ctx] = self._context_totals.get(ctx, 0) + c

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    def context_of(self, prefix: Sequence[int]) -> tuple[int, ...]:
        """The (order-1)-token context for a prefix, BOS-padded on the left."""
        if self.order == 1:
            return ()
        padded = [BOS] * (self.order - 1) + list(prefix)
        return tuple(padded[-(self.order - 1) :])

    def score_next(self, prefix: Sequence[int]) -> ProbDist:
        self._check_prefix(prefix)
        ctx = self.context_of(prefix)
        v = self._vocabulary.size
        total = self._context_totals.get(ctx, 0)
        denom = total + self.smoothing * v
        probs = np.array(
            [(self.counts.get((ctx, t), 0) + self.smoothing) / denom for t in range(v)]
        )
        return ProbDist(probs)

    def to_json_dict(self) -> dict:
        counts = sorted((list(ctx), tok, c) for (ctx, tok), c in self.counts.items())
        return {
            "order": self.order,
            "smoothing": self.smoothing,
            "vocab_size": self._vocabulary.size,
            "counts": counts,
            "eos": self._vocabulary.eos,
        }

    @classmethod
    def from_json_dict(cls, data: dict, vocabulary: Vocabulary | None = None) -> "NgramLM":
        if vocabulary is None:
            if "eos" not in data:
                raise InvalidInputError("n-gram document lacks 'eos'; pass a vocabulary")
            vocabulary = Vocabulary(size=int(data["vocab_size"]), eos=int(data["eos"]))
        elif vocabulary.size != int(data["vocab_size"]):
            raise InvalidInputError("vocabulary size does not match the n-gram document")
        counts = {
            (tuple(int(t) for t in ctx), int(tok)): int(c) for ctx, tok, c in data["counts"]
        }
        return cls(vocabulary, int(data["order"]), float(data["smoothing"]), counts)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, vocabulary: Vocabulary | None = None) -> "NgramLM":
        return cls.from_json_dict(
            json.loads(Path(path).read_text(encoding="utf-8")), vocabulary
        )


def fit_ngram(
    corpus: Sequence[Sequence[int]],
    order: int,
    smoothing: float,
    vocabulary: Vocabulary,
) -> NgramLM:
    """Count every length-``order`` window of every sequence and smooth.

    Sequences are padded on the left with ``order - 1`` BOS symbols so
    every token, including the first, contributes one (context, token)
    observation.
    """
    if len(corpus) == 0:
        raise InvalidInputError("corpus must be non-empty")
    counts: dict[tuple[tuple[int, ...], int], int] = {}
    for seq in corpus:
        vocabulary.validate_sequence(seq)
        padded = [BOS] * (order - 1) + list(seq)
        for i, token in enumerate(seq):
            ctx = tuple(padded[i : i + order - 1])
            key = (ctx, token)
            counts[key] = counts.get(key, 0) + 1
    return NgramLM(vocabulary, order, smoothing, counts)


@dataclass(frozen=True)
class CalibrationSet:
    """Input prefixes paired with the large model's greedy outputs."""

    pairs: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]

    def outputs(self) -> list[list[int]]:
        return [list(out) for _, out in self.pairs]

    def __len__(self) -> int:
        return len(self.pairs)


def generate_corpus(
    model: LanguageModel,
    prompts: Sequence[Sequence[int]],
    sampler: Sampler,
    max_len: int,
) -> list[list[int]]:
    """Decode a continuation for each prompt; outputs exclude the prompts.

    Prompts are independent: run ``i`` uses seed ``sampler.seed + i`` so
    generation order never matters.
    """
    if max_len < 1:
        raise InvalidInputError("max_len must be >= 1")
    outputs = []
    for i, prompt in enumerate(prompts):
        per_prompt = Sampler(
            kind=sampler.kind, p=sampler.p, t=sampler.t, seed=sampler.seed + i
        )
        outputs.append(vanilla_decode(model, prompt, per_prompt, max_len).sequence)
    return outputs


def generate_calibration(
    large: LanguageModel,
    prompts: Sequence[Sequence[int]],
    max_len: int,
) -> CalibrationSet:
    """Greedy large-model outputs for each prompt, as alignment targets."""
    if len(prompts) == 0:
        raise InvalidInputError("prompt list must be non-empty")
    outputs = generate_corpus(large, prompts, Sampler.greedy(), max_len)
    return CalibrationSet(
        pairs=tuple((tuple(p), tuple(o)) for p, o in zip(prompts, outputs))
    )


def align_small(
    large: LanguageModel,
    prompts: Sequence[Sequence[int]],
    order: int,
    smoothing: float,
    max_len: int,
) -> NgramLM:
    """Refit a small n-gram model on the large model's greedy generations.

    The calibration set is deterministic; rebuild it with
    ``generate_calibration`` for inspection.
    """
    calibration = generate_calibration(large, prompts, max_len)
    return fit_ngram(calibration.outputs(), order, smoothing, large.vocabulary)
