"""The abstract language-model interface.

A model is a pure function from a token prefix to a next-token
distribution. ``score_next`` evaluates one position; ``score_all`` scores
every position of a sequence in a single logical invocation, which is what
lets a verifying model review many drafted tokens at the cost of one weight
load. The two must agree exactly: the m-th element of ``score_all(y)`` is
``score_next(y[:m])``.

``score_all`` deliberately excludes the empty-prefix distribution; callers
that need the very first position use ``score_next([])``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Sequence

from .dist import ProbDist
from .errors import InvalidInputError
from .vocab import Vocabulary

if TYPE_CHECKING:
    from .costmodel import ModelDescriptor


class LanguageModel(ABC):
    """Pure next-token scorer over a fixed vocabulary.

    Implementations must be deterministic and stateless across calls:
    identical prefixes yield identical distributions. Models are immutable
    after construction and safe to share between concurrent decode runs.
    """

    @property
    @abstractmethod
    def vocabulary(self) -> Vocabulary:
        ...

    @property
    def descriptor(self) -> "ModelDescriptor | None":
        """Shape parameters for cost accounting, when attached."""
        return getattr(self, "_descriptor", None)

    def with_descriptor(self, descriptor: "ModelDescriptor") -> "LanguageModel":
        self._descriptor = descriptor
        return self

    @abstractmethod
    def score_next(self, prefix: Sequence[int]) -> ProbDist:
        """Next-token distribution conditioned on ``prefix`` (may be empty)."""

    def score_all(self, sequence: Sequence[int]) -> list[ProbDist]:
        """Next-token distributions after each prefix ``sequence[:m]``, m=1..n.

        Raises on an empty sequence; there is no position to score.
        """
        if len(sequence) == 0:
            raise InvalidInputError("score_all requires a non-empty sequence")
        self.vocabulary.validate_sequence(sequence)
        return [self.score_next(sequence[: m + 1]) for m in range(len(sequence))]

    def _check_prefix(self, prefix: Sequence[int]) -> None:
        self.vocabulary.validate_sequence(prefix)
