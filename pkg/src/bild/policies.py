"""Fallback and rollback decision rules.

The fallback rule hands control to the large model when the small model's
maximum next-token probability falls strictly below ``alpha_fb``. The
rollback rule reviews drafted tokens with the large model's distributions
and discards everything from the first position whose hard-label
cross-entropy distance strictly exceeds ``alpha_rb``.

Both comparisons are strict, so boundary cases keep the small model's
output. The distance is a negative natural log, floored at ``PROB_FLOOR``
and therefore bounded by ``MAX_DISTANCE``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .dist import PROB_FLOOR, ProbDist
from .errors import InvalidInputError

# Largest value the distance metric can take given the probability floor.
MAX_DISTANCE = -math.log(PROB_FLOOR)

CONFIDENCE = "confidence"
FIXED_WINDOW = "fixed_window"


@dataclass(frozen=True)
class PolicyConfig:
    """Thresholds and switches steering a collaborative decode run.

    ``alpha_fb``: fallback threshold on the small model's max probability.
    ``alpha_rb``: rollback threshold on the hard-label distance.
    ``window_cap``: most consecutive small-model tokens before a forced
      handover (10 by default).
    ``rollback_enabled``: ablation switch; when false, verified drafts are
      always kept.
    ``fallback_mode``: ``"confidence"`` (threshold rule) or
      ``"fixed_window"`` (unconditional handover after ``fixed_window_k``
      drafts; the confidence rule is disabled).
    ``verify_eos``: when true, a drafted end-of-sequence token triggers a
      verification pass instead of terminating immediately.
    """

    alpha_fb: float
    alpha_rb: float
    window_cap: int = 10
    rollback_enabled: bool = True
    fallback_mode: str = CONFIDENCE
    fixed_window_k: int | None = None
    verify_eos: bool = False

    def __post_init__(self) -> None:
        if self.alpha_fb < 0 or self.alpha_rb < 0:
            raise InvalidInputError("thresholds must be non-negative")
        if self.window_cap < 1:
            raise InvalidInputError("window_cap must be >= 1")
        if self.fallback_mode not in (CONFIDENCE, FIXED_WINDOW):
            raise InvalidInputError(f"unknown fallback_mode {self.fallback_mode!r}")
        if self.fallback_mode == FIXED_WINDOW:
            if self.fixed_window_k is None or self.fixed_window_k < 1:
                raise InvalidInputError("fixed_window mode requires fixed_window_k >= 1")

    @property
    def draft_cap(self) -> int:
        """Effective bound on consecutive drafts for the active mode."""
        if self.fallback_mode == FIXED_WINDOW:
            return int(self.fixed_window_k)  # type: ignore[arg-type]
        return self.window_cap

    def without_rollback(self) -> "PolicyConfig":
        return replace(self, rollback_enabled=False)

    def with_fixed_window(self, k: int) -> "PolicyConfig":
        return replace(self, fallback_mode=FIXED_WINDOW, fixed_window_k=k)

    def to_json_dict(self) -> dict:
        out = {
            "alpha_fb": self.alpha_fb,
            "alpha_rb": self.alpha_rb,
            "window_cap": self.window_cap,
            "rollback_enabled": self.rollback_enabled,
            "fallback_mode": self.fallback_mode,
        }
        if self.fallback_mode == FIXED_WINDOW:
            out["fixed_window_k"] = self.fixed_window_k
        if self.verify_eos:
            out["verify_eos"] = True
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "PolicyConfig":
        return cls(
            alpha_fb=float(data["alpha_fb"]),
            alpha_rb=float(data["alpha_rb"]),
            window_cap=int(data.get("window_cap", 10)),
            rollback_enabled=bool(data.get("rollback_enabled", True)),
            fallback_mode=data.get("fallback_mode", CONFIDENCE),
            fixed_window_k=(
                int(data["fixed_window_k"]) if data.get("fixed_window_k") is not None else None
            ),
            verify_eos=bool(data.get("verify_eos", False)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "PolicyConfig":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")


def should_fallback(small_dist: ProbDist, config: PolicyConfig) -> bool:
    """True iff the small model's max probability is strictly below alpha_fb."""
    if config.fallback_mode != CONFIDENCE:
        raise InvalidInputError("confidence fallback queried in fixed_window mode")
    return small_dist.max_prob() < config.alpha_fb


def distance(chosen: int, large_dist: ProbDist) -> float:
    """Hard-label cross-entropy: -ln of the large model's mass on ``chosen``.

    Probabilities are clamped to ``PROB_FLOOR`` below and snapped to 1 when
    within ``PROB_FLOOR`` of it, so the result is 0 exactly when the large
    model (numerically) agrees with certainty, and never exceeds
    ``MAX_DISTANCE``.
    """
    p = large_dist[chosen]
    if p >= 1.0 - PROB_FLOOR:
        return 0.0
    return -math.log(max(p, PROB_FLOOR))


def find_rollback_position(
    pending_tokens: Sequence[int],
    large_dists: Sequence[ProbDist],
    config: PolicyConfig,
) -> int | None:
    """Index of the first drafted token whose distance strictly exceeds alpha_rb.

    ``large_dists[i]`` must be the large model's distribution for the
    position at which ``pending_tokens[i]`` was emitted (conditioned on
    everything strictly before it). Returns ``None`` when no position
    violates the threshold or when rollback is disabled.
    """
    if len(pending_tokens) != len(large_dists):
        raise InvalidInputError("pending tokens and distributions must align")
    if not config.rollback_enabled:
        return None
    for i, (token, dist) in enumerate(zip(pending_tokens, large_dists)):
        if distance(token, dist) > config.alpha_rb:
            return i
    return None
