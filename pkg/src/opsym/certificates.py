"""Result types: norm intervals and three-valued cone certificates."""
from dataclasses import dataclass, field
from typing import Any, Optional

POSITIVE = "Positive"
REFUTED = "Refuted"
UNDECIDED = "Undecided"


@dataclass
class NormInterval:
    """Two-sided estimate of a norm.

    ``lower`` is always certified (it comes with a replayable witness).  ``upper``
    is certified when ``upper_certified`` is true, otherwise it is a
    stabilisation estimate.
    """

    lower: float
    upper: float
    upper_certified: bool = True
    estimate: Optional[float] = None
    lower_witness: Any = None
    upper_witness: Any = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lower = float(self.lower)
        self.upper = float(self.upper)
        if self.estimate is None:
            self.estimate = self.lower
        if self.lower > self.upper + 1e-9:
            if self.upper_certified:
                raise AssertionError("certified interval is inverted: [%r, %r]" % (self.lower, self.upper))
            self.upper = self.lower

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, value, slack=0.0):
        return self.lower - slack <= value <= self.upper + slack

    def overlaps(self, other, slack=0.0):
        return self.lower <= other.upper + slack and other.lower <= self.upper + slack

    def to_json(self):
        out = {
            "lower": self.lower,
            "upper": self.upper,
            "upper_certified": bool(self.upper_certified),
            "estimate": float(self.estimate),
        }
        for key in ("lower_witness", "upper_witness"):
            w = getattr(self, key)
            if w is not None and hasattr(w, "to_json"):
                out[key] = w.to_json()
        if self.info:
            out["info"] = {k: v for k, v in self.info.items() if isinstance(v, (int, float, str, bool, list))}
        return out


@dataclass
class ConeCertificate:
    """Verdict on membership of a hermitian tensor in the positive cone.

    Positive carries a synthesis witness ``(x, s, residual)``; Refuted carries
    an admissible pair, an eigenvector and its (negative) Rayleigh quotient.
    """

    verdict: str
    witness: Any = None
    info: dict = field(default_factory=dict)

    @property
    def is_positive(self):
        return self.verdict == POSITIVE

    @property
    def is_refuted(self):
        return self.verdict == REFUTED

    @property
    def is_undecided(self):
        return self.verdict == UNDECIDED

    def to_json(self):
        out = {"verdict": self.verdict}
        if self.witness is not None and hasattr(self.witness, "to_json"):
            out["witness"] = self.witness.to_json()
        if self.info:
            out["info"] = {k: v for k, v in self.info.items() if isinstance(v, (int, float, str, bool, list))}
        return out
