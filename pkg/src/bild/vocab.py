"""Token vocabularies and the plain-text vocabulary/corpus file formats.

A vocabulary file lists one token symbol per line; the line number is the
token id. The symbol ``<eos>`` marks the end-of-sequence token and must be
present. A corpus file holds one sequence per line as whitespace-separated
symbols; the line ``-`` denotes an empty sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidInputError

EOS_SYMBOL = "<eos>"
EMPTY_SEQUENCE_MARK = "-"


@dataclass(frozen=True)
class Vocabulary:
    """A dense set of token ids ``0..size-1`` with a designated eos id."""

    size: int
    eos: int
    tokens: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.size < 2:
            raise InvalidInputError("vocabulary size must be >= 2")
        if not 0 <= self.eos < self.size:
            raise InvalidInputError(f"eos id {self.eos} out of range [0, {self.size})")
        if self.tokens is not None and len(self.tokens) != self.size:
            raise InvalidInputError("token symbol list must match vocabulary size")

    def validate_token(self, token: int) -> None:
        if not isinstance(token, (int,)) or not 0 <= token < self.size:
            raise InvalidInputError(f"token id {token!r} out of range [0, {self.size})")

    def validate_sequence(self, tokens: Iterable[int]) -> None:
        for t in tokens:
            self.validate_token(t)

    def symbol(self, token: int) -> str:
        """Display string for a token id."""
        self.validate_token(token)
        if self.tokens is not None:
            return self.tokens[token]
        return EOS_SYMBOL if token == self.eos else str(token)

    def id_of(self, symbol: str) -> int:
        """Token id for a symbol (or a bare integer id when symbols are unset)."""
        if self.tokens is not None:
            try:
                return self.tokens.index(symbol)
            except ValueError:
                raise InvalidInputError(f"unknown token symbol {symbol!r}") from None
        if symbol == EOS_SYMBOL:
            return self.eos
        try:
            token = int(symbol)
        except ValueError:
            raise InvalidInputError(f"unknown token symbol {symbol!r}") from None
        self.validate_token(token)
        return token

    def compatible_with(self, other: "Vocabulary") -> bool:
        """Whether two models over these vocabularies can be paired."""
        return self.size == other.size and self.eos == other.eos


def load_vocabulary(path: str | Path) -> Vocabulary:
    """Read a vocabulary file (one symbol per line, line number = id)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    symbols = [line.strip() for line in lines if line.strip()]
    if len(symbols) < 2:
        raise InvalidInputError(f"vocabulary file {path} must list at least 2 symbols")
    if len(set(symbols)) != len(symbols):
        raise InvalidInputError(f"vocabulary file {path} has duplicate symbols")
    if EOS_SYMBOL not in symbols:
        raise InvalidInputError(f"vocabulary file {path} must contain {EOS_SYMBOL!r}")
    return Vocabulary(size=len(symbols), eos=symbols.index(EOS_SYMBOL), tokens=tuple(symbols))


def save_vocabulary(vocabulary: Vocabulary, path: str | Path) -> None:
    symbols = [vocabulary.symbol(t) for t in range(vocabulary.size)]
    Path(path).write_text("\n".join(symbols) + "\n", encoding="utf-8")


def parse_sequence(line: str, vocabulary: Vocabulary) -> list[int]:
    """Parse one corpus line into token ids (``-`` means empty)."""
    line = line.strip()
    if not line or line == EMPTY_SEQUENCE_MARK:
        return []
    return [vocabulary.id_of(sym) for sym in line.split()]


def load_corpus(path: str | Path, vocabulary: Vocabulary) -> list[list[int]]:
    """Read a corpus file: one whitespace-separated sequence per line.

    Blank lines are skipped; use ``-`` for an intentionally empty sequence.
    """
    sequences = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        sequences.append(parse_sequence(line, vocabulary))
    return sequences


def format_sequence(tokens: Sequence[int], vocabulary: Vocabulary) -> str:
    if not tokens:
        return EMPTY_SEQUENCE_MARK
    return " ".join(vocabulary.symbol(t) for t in tokens)


def save_corpus(sequences: Iterable[Sequence[int]], vocabulary: Vocabulary, path: str | Path) -> None:
    lines = [format_sequence(seq, vocabulary) for seq in sequences]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
