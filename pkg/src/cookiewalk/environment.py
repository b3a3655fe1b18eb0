"""Cookie environments: per-site excitation laws and regime classification.

A cookie environment assigns each site a vector of M "cookie" strengths;
the walk's j-th departure from a site steps right with the j-th strength,
and with probability 1/2 once the cookies are exhausted.  Site vectors are
drawn i.i.d. from either a deterministic law or a finite mixture, which
keeps every moment used downstream exactly computable.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

WEIGHT_TOL = 1e-12

RECURRENT = "recurrent"
TRANSIENT_LEFT = "transient-left"
TRANSIENT_RIGHT = "transient-right"


@dataclass(frozen=True)
class CookieVector:
    """One site's cookie strengths; entries beyond the last are implicitly 1/2."""

    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.probs) < 1:
            raise ValueError("cookie vector needs at least one entry")
        for p in self.probs:
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"cookie strength {p} outside [0, 1]")
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    @property
    def m(self) -> int:
        return len(self.probs)

    def strength(self, visit: int) -> float:
        """Right-step probability on the ``visit``-th visit (1-based)."""
        if visit < 1:
            raise ValueError("visits are 1-based")
        return self.probs[visit - 1] if visit <= self.m else 0.5

    def drift(self) -> float:
        return sum(2.0 * p - 1.0 for p in self.probs)

    def mirrored(self) -> "CookieVector":
        return CookieVector(tuple(1.0 - p for p in self.probs))


@dataclass(frozen=True)
class RegimeReport:
    delta: float
    recurrence: str
    speed_sign: str


class CookieEnvironment:
    """The i.i.d. per-site law of cookie vectors (deterministic or finite mixture).

    Construction validates weights and the non-degeneracy condition
    E[prod_j w(j)] > 0 and E[prod_j (1 - w(j))] > 0; environments failing
    it are rejected because the walk could get stuck on a deterministic step.
    Instances are immutable and safe to share across threads.
    """

    def __init__(
        self,
        components: Sequence[tuple[float, CookieVector]],
        law: str | None = None,
        strict: bool = True,
    ):
        if not components:
            raise ValueError("environment needs at least one component")
        vectors = [v for _, v in components]
        weights = [float(w) for w, _ in components]
        m = vectors[0].m
        if any(v.m != m for v in vectors):
            raise ValueError("all mixture components must share the same M")
        if any(w <= 0 for w in weights):
            raise ValueError("mixture weights must be positive")
        if abs(sum(weights) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"mixture weights sum to {sum(weights)!r}, not 1")
        self._weights = tuple(weights)
        self._vectors = tuple(vectors)
        self._m = m
        if law is None:
            law = "deterministic" if len(vectors) == 1 else "mixture"
        self._law = law

        # strict=False admits degenerate calibration environments (e.g. every
        # cookie equal to 1) that the non-degeneracy condition would reject.
        if strict and (
            self.expect_product_omega() <= 0.0
            or self.expect_product_one_minus_omega() <= 0.0
        ):
            raise ValueError(
                "degenerate environment: needs E[prod w] > 0 and E[prod (1-w)] > 0"
            )

    # -- constructors ----------------------------------------------------

    @classmethod
    def deterministic(cls, probs: Sequence[float], strict: bool = True) -> "CookieEnvironment":
        return cls([(1.0, CookieVector(tuple(probs)))], law="deterministic", strict=strict)

    @classmethod
    def mixture(
        cls, components: Sequence[tuple[float, Sequence[float]]], strict: bool = True
    ) -> "CookieEnvironment":
        return cls(
            [(w, CookieVector(tuple(probs))) for w, probs in components],
            law="mixture",
            strict=strict,
        )

    # -- basic accessors -------------------------------------------------

    @property
    def m(self) -> int:
        return self._m

    @property
    def law(self) -> str:
        return self._law

    @property
    def weights(self) -> tuple[float, ...]:
        return self._weights

    @property
    def vectors(self) -> tuple[CookieVector, ...]:
        return self._vectors

    @property
    def is_deterministic(self) -> bool:
        return len(self._vectors) == 1

    def prob_table(self) -> np.ndarray:
        """Array of shape (components, M + 1): strengths then the flat 1/2 tail."""
        table = np.empty((len(self._vectors), self._m + 1))
        for i, v in enumerate(self._vectors):
            table[i, : self._m] = v.probs
            table[i, self._m] = 0.5
        return table

    def weight_array(self) -> np.ndarray:
        return np.asarray(self._weights)

    # -- exact moments ---------------------------------------------------

    def delta(self) -> float:
        """Expected total drift per site, sum_j E[2 w(j) - 1]."""
        return sum(w * v.drift() for w, v in zip(self._weights, self._vectors))

    def expect_omega1(self) -> float:
        """E[w(1)], the chance the first departure from a fresh site goes right."""
        return sum(w * v.probs[0] for w, v in zip(self._weights, self._vectors))

    def expect_product_omega(self) -> float:
        return sum(w * math.prod(v.probs) for w, v in zip(self._weights, self._vectors))

    def expect_product_one_minus_omega(self) -> float:
        return sum(
            w * math.prod(1.0 - p for p in v.probs)
            for w, v in zip(self._weights, self._vectors)
        )

    # -- operations ------------------------------------------------------

    def classify(self) -> RegimeReport:
        """Recurrence/speed regime from the drift thresholds +-1 and +-2.

        Boundary values sit in the closed intervals: delta in [-1, 1] is
        recurrent and delta in [-2, 2] has zero speed.
        """
        d = self.delta()
        if d < -1.0:
            rec = TRANSIENT_LEFT
        elif d > 1.0:
            rec = TRANSIENT_RIGHT
        else:
            rec = RECURRENT
        if d < -2.0:
            sign = "negative"
        elif d > 2.0:
            sign = "positive"
        else:
            sign = "zero"
        return RegimeReport(delta=d, recurrence=rec, speed_sign=sign)

    def mirror(self) -> "CookieEnvironment":
        """Environment with every cookie strength p replaced by 1 - p.

        An exact involution: the mirrored environment keeps a back-reference,
        so mirroring twice returns the original object (1 - (1 - p) need not
        round-trip in floating point).
        """
        mirrored = getattr(self, "_mirror_cache", None)
        if mirrored is None:
            mirrored = CookieEnvironment(
                [(w, v.mirrored()) for w, v in zip(self._weights, self._vectors)],
                law=self._law,
                strict=False,  # validity is symmetric; degenerate cases stay mirrorable
            )
            mirrored._mirror_cache = self
            self._mirror_cache = mirrored
        return mirrored

    def sample_site(self, rng: np.random.Generator) -> CookieVector:
        """Draw one site's cookie vector."""
        if self.is_deterministic:
            return self._vectors[0]
        i = rng.choice(len(self._vectors), p=self._weights)
        return self._vectors[int(i)]

    def sample_component_indices(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Vectorized component draws (index into ``vectors``)."""
        if self.is_deterministic:
            return np.zeros(count, dtype=np.int64)
        cum = np.cumsum(self._weights)
        return np.searchsorted(cum, rng.random(count), side="right").astype(np.int64)

    # -- identity & serialization ----------------------------------------

    def canonical_text(self) -> str:
        lines = [f"M = {self._m}", f"law = {self._law}"]
        if self.is_deterministic:
            lines.append("cookies = [" + ", ".join(repr(p) for p in self._vectors[0].probs) + "]")
        else:
            for w, v in zip(self._weights, self._vectors):
                cookies = ", ".join(repr(p) for p in v.probs)
                lines.append(f"component {{ weight = {w!r}, cookies = [{cookies}] }}")
        return "\n".join(lines)

    def env_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, CookieEnvironment):
            return NotImplemented
        return (
            self._law == other._law
            and self._weights == other._weights
            and self._vectors == other._vectors
        )

    def __hash__(self):
        return hash((self._law, self._weights, self._vectors))

    def __repr__(self):
        if self.is_deterministic:
            return f"CookieEnvironment.deterministic({list(self._vectors[0].probs)})"
        comps = [(w, list(v.probs)) for w, v in zip(self._weights, self._vectors)]
        return f"CookieEnvironment.mixture({comps})"


# Canonical desk-scale environments used throughout the test and
# acceptance suites.

def env_fair() -> CookieEnvironment:
    """Simple symmetric random walk (drift 0)."""
    return CookieEnvironment.deterministic([0.5])


def env_single_07() -> CookieEnvironment:
    """One cookie of strength 0.7 (drift 0.4, recurrent)."""
    return CookieEnvironment.deterministic([0.7])


def env_ballistic() -> CookieEnvironment:
    """Five cookies of strength 0.75 (drift 2.5, positive speed)."""
    return CookieEnvironment.deterministic([0.75] * 5)


def env_sublinear() -> CookieEnvironment:
    """Three cookies of strength 0.8 (drift 1.8, transient with zero speed)."""
    return CookieEnvironment.deterministic([0.8] * 3)
