"""Shared result type for bound evaluations."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BoundPoint:
    """One point on a bound curve.

    rate_nats is the reported (already conservatively adjusted) value;
    ci, when present, is (nominal/opposite end, reported end) in nats.
    side is 'lower' for achievability, 'upper' for converses,
    'estimate' for approximations.
    """

    n: int
    epsilon: float
    rate_nats: float
    side: str
    tau: float | None = None
    ci: tuple[float, float] | None = None
