"""Dynamic NOMA/OMA policy: map channel-gain orderings to states 1-10 and modes.

The policy compares the high-SNR NOMA-over-OMA sum-rate gain against the
superiority threshold R_th.  NOMA is worth its receiver complexity only in
states 1, 3 (SIC at vehicle 1) and 6, 8 (SIC at vehicle 2); everything else is
OMA.  Ties between gains fall through the strict > tests to OMA, which is the
right limit: equal links make the NOMA gain zero.
"""

import dataclasses
from typing import Tuple

import numpy as np

from relayplan.scenario import ChannelState, Scenario

# Table rows: state -> mode
STATE_MODE = {1: 1, 2: 3, 3: 1, 4: 3, 5: 3, 6: 2, 7: 3, 8: 2, 9: 3, 10: 3}


def select_mode(h_r: float, h_1: float, h_2: float, r_th: float) -> Tuple[int, int]:
    """One slot's (state, mode) from the three gains and the threshold."""
    if h_r <= 0 or h_1 <= 0 or h_2 <= 0:
        raise ValueError("gains must be positive")
    if h_1 >= h_2:
        if h_r > h_1:
            state = 1 if 0.5 * np.log2(h_1 / h_2) > r_th else 2
        elif h_r > h_2:
            state = 3 if 0.5 * np.log2(h_r / h_2) > r_th else 4
        else:
            state = 5
    else:
        if h_r > h_2:
            state = 6 if 0.5 * np.log2(h_2 / h_1) > r_th else 7
        elif h_r > h_1:
            state = 8 if 0.5 * np.log2(h_r / h_1) > r_th else 9
        else:
            state = 10
    return state, STATE_MODE[state]


@dataclasses.dataclass(frozen=True)
class ModeSchedule:
    """Per-slot policy state and operating mode (dense encoding of the indicator triples)."""

    states: np.ndarray  # (N,) ints in 1..10
    modes: np.ndarray  # (N,) ints in {1, 2, 3}

    def __post_init__(self):
        for name in ("states", "modes"):
            arr = np.asarray(getattr(self, name), dtype=int)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.states.shape != self.modes.shape:
            raise ValueError("states/modes length mismatch")
        want = np.array([STATE_MODE[s] for s in self.states.tolist()])
        if not np.array_equal(want, self.modes):
            raise ValueError("state/mode assignment inconsistent with the policy table")

    def indicator_matrices(self):
        """(A, B, Gamma) as (10, N) one-hot matrices; exactly one 1 per column."""
        n = len(self.states)
        a = np.zeros((10, n))
        b = np.zeros((10, n))
        g = np.zeros((10, n))
        cols = np.arange(n)
        rows = self.states - 1
        a[rows, cols] = self.modes == 1
        b[rows, cols] = self.modes == 2
        g[rows, cols] = self.modes == 3
        return a, b, g

    def mode_fractions(self):
        """Fraction of slots in each mode, keyed 1/2/3."""
        n = len(self.modes)
        return {m: float(np.sum(self.modes == m)) / n for m in (1, 2, 3)}


def mode_schedule(cs: ChannelState, sc: Scenario) -> ModeSchedule:
    """Vectorized per-slot policy over a channel state."""
    h_r, h_1, h_2 = cs.h_r, cs.h_1, cs.h_2
    r_th = sc.mode_threshold
    n = len(h_r)
    states = np.zeros(n, dtype=int)
    first = h_1 >= h_2
    hi, lo = np.where(first, h_1, h_2), np.where(first, h_2, h_1)
    noma_gain = 0.5 * np.log2(hi / lo) > r_th
    relay_gain = np.zeros(n, dtype=bool)
    mid = (h_r <= hi) & (h_r > lo)
    relay_gain[mid] = 0.5 * np.log2(h_r[mid] / lo[mid]) > r_th
    states[first & (h_r > h_1)] = np.where(noma_gain[first & (h_r > h_1)], 1, 2)
    states[first & mid] = np.where(relay_gain[first & mid], 3, 4)
    states[first & (h_r <= lo)] = 5
    second = ~first
    states[second & (h_r > h_2)] = np.where(noma_gain[second & (h_r > h_2)], 6, 7)
    states[second & mid] = np.where(relay_gain[second & mid], 8, 9)
    states[second & (h_r <= lo)] = 10
    modes = np.array([STATE_MODE[s] for s in states.tolist()])
    return ModeSchedule(states=states, modes=modes)
