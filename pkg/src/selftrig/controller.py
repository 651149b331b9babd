"""Online decision law: pick the wait and the input from the lookup table.

Given a fresh sample and the set of waits the channel allows, the
controller evaluates ``alpha/i + x' P(i) x`` over that set, picks the
minimizing wait and applies the matching state feedback.  Everything is a
pure function of an immutable gain table.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, GainLookupError, SchedulingError
from .model import as_vector
from .synthesis import GainTable


@dataclass(frozen=True)
class Decision:
    """Outcome of one online decision.

    ``i_star`` is the chosen wait, ``u`` the held input ``-L(i_star) x``,
    ``value`` the achieved cost and ``values_by_i`` the cost of every
    candidate wait (kept for diagnostics and trace output).
    """

    i_star: int
    u: np.ndarray
    value: float
    values_by_i: dict


def _value(gt: GainTable, x: np.ndarray, i: int) -> float:
    # Single evaluation path shared by value_of and decide so that argmin
    # comparisons are exact on the same floats.
    return float(gt.alpha / i + x @ gt.P(i) @ x)


def value_of(gt: GainTable, x, i: int) -> float:
    """Predicted cost ``alpha/i + x' P(i) x`` of waiting ``i`` steps."""
    return _value(gt, as_vector(x, "x", gt.n), i)


def decide(gt: GainTable, x, feasible) -> Decision:
    """Minimize the predicted cost over the feasible waits.

    Ties are broken toward the larger wait: equal cost at less
    communication.  With x = 0 the quadratic terms vanish and the rule
    reduces to the largest feasible wait with u = 0.
    """
    feas = sorted(set(int(i) for i in feasible))
    if not feas:
        raise SchedulingError("cannot decide over an empty feasible set")
    unknown = [i for i in feas if i not in gt.entries]
    if unknown:
        raise GainLookupError(
            f"loop {gt.loop_id!r}: feasible waits {unknown} have no table entry"
        )
    x = as_vector(x, "x", gt.n)
    values = {i: _value(gt, x, i) for i in feas}
    i_star = feas[0]
    best = values[i_star]
    for i in feas[1:]:
        if values[i] <= best:
            best, i_star = values[i], i
    u = -(gt.L(i_star) @ x)
    u.setflags(write=False)
    return Decision(i_star=i_star, u=u, value=best, values_by_i=values)


def partition_1d(gt: GainTable, x_grid) -> np.ndarray:
    """Unrestricted optimal wait at each point of a scalar-state grid.

    Diagnostic reproduction of the switching curve between waits; only
    defined for scalar-state tables.
    """
    if gt.n != 1:
        raise ConfigurationError(
            f"state-space partition is only available for scalar states (n={gt.n})"
        )
    grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    out = np.empty(grid.size, dtype=int)
    for j, x in enumerate(grid):
        out[j] = decide(gt, [x], gt.I0).i_star
    return out
