"""External-parameter estimation from observations.

All estimators return exact Fractions.  Float observations coming from JSON
or CSV are converted through their decimal text, so ``0.1`` is ``1/10``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import InferenceError

METHODS = ("fixed", "mean", "mean_rate", "bayes")


def to_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, bool):
        raise InferenceError(f"expected a number, got {v!r}")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(repr(v))
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except ValueError:
            raise InferenceError(f"not a number: {v!r}") from None
    raise InferenceError(f"expected a number, got {type(v).__name__}")


@dataclass
class InferenceSpec:
    method: str
    value: Fraction | None = None
    observations: list = field(default_factory=list)
    prior: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    target: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InferenceError(f"unknown inference method '{self.method}' (use {', '.join(METHODS)})")
        if self.value is not None:
            self.value = to_fraction(self.value)
        self.observations = [to_fraction(v) for v in self.observations]
        self.prior = [to_fraction(v) for v in self.prior]
        self.counts = [to_fraction(v) for v in self.counts]
        self.validate()

    def validate(self):
        m = self.method
        if m == "fixed" and self.value is None:
            raise InferenceError("fixed inference needs a value")
        if m in ("mean", "mean_rate"):
            if not self.observations:
                raise InferenceError(f"{m} needs at least one observation")
            if any(o < 0 for o in self.observations):
                raise InferenceError("observations must be non-negative")
            if m == "mean_rate" and any(o <= 0 for o in self.observations):
                raise InferenceError("mean_rate needs strictly positive durations")
        if m == "bayes":
            if not self.prior:
                raise InferenceError("bayes needs prior pseudo-counts")
            if any(a <= 0 for a in self.prior):
                raise InferenceError("prior pseudo-counts must be positive")
            if not self.counts:
                self.counts = [Fraction(0)] * len(self.prior)
            if len(self.counts) != len(self.prior):
                raise InferenceError("prior and counts must have the same number of outcomes")
            if any(c < 0 for c in self.counts):
                raise InferenceError("observed counts must be non-negative")
            if not 0 <= self.target < len(self.prior):
                raise InferenceError(f"target outcome {self.target} out of range")


def infer(spec: InferenceSpec) -> Fraction:
    m = spec.method
    if m == "fixed":
        return spec.value
    if m == "mean":
        return sum(spec.observations, Fraction(0)) / len(spec.observations)
    if m == "mean_rate":
        # durations in seconds; the rate is events per second
        return len(spec.observations) / sum(spec.observations, Fraction(0))
    posterior = [a + c for a, c in zip(spec.prior, spec.counts)]
    return posterior[spec.target] / sum(posterior, Fraction(0))


def load_observations(path) -> list:
    """Read one value per line (first column if the file has several); blank lines
    and lines starting with ``#`` are skipped, as is a non-numeric header."""
    rows = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        for i, rec in enumerate(csv.reader(fh)):
            if not rec or not rec[0].strip() or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append(to_fraction(rec[0]))
            except InferenceError:
                if i == 0 and not rows:
                    continue
                raise InferenceError(f"{path}: line {i + 1}: not a number: {rec[0]!r}") from None
    return rows
