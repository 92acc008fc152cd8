"""Parametric model checking: closed-form results as rational functions."""

from .eliminate import (eliminate_query, eliminate_states, eval_rf, rf_partials,
                        steady_state_query)
from .poly import Polynomial, RationalFunction, from_expr
from .sensitivity import PropertyFunction

__all__ = ["Polynomial", "RationalFunction", "from_expr", "eliminate_states",
           "eliminate_query", "steady_state_query", "eval_rf", "rf_partials", "PropertyFunction"]
