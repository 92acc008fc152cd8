from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_EPS = 1e-9


@dataclass
class VerificationResult:
    """Outcome of checking one property on one model.

    ``value`` is a float for queries and a bool for bound-form properties.
    ``values`` holds the per-state vector of the (last) query leaf when the
    engine produced one.  ``policy`` maps states (mdp) or observation tuples
    (pomdp) to the chosen action.
    """
    value: object
    values: np.ndarray | None = None
    policy: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    def as_float(self):
        return float(self.value)
