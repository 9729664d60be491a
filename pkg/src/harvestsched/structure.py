"""Structural transforms on harvest profiles and schedules.

The deferral staircase turns an arbitrary harvest profile into the virtual
profile whose per-slot spend gives the least-deferred feasible nondecreasing
power sequence.  Slot sorting permutes a schedule into nondecreasing-power
order; the bilinear utility is invariant under permuting powers and share
columns together, though the permuted schedule may lose energy causality.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Instance, Schedule, _check_dims


@dataclass(frozen=True, eq=False)
class VirtualHarvests:
    """Deferral-transformed harvests and the slots where power steps up.

    ``virtual_e[t] / T`` is the induced power of slot ``t``; the powers are
    nondecreasing, conserve total energy, and never spend ahead of the
    original cumulative harvests.  ``segment_boundaries`` lists the 0-based
    slots where the induced power strictly increases.
    """

    virtual_e: np.ndarray
    segment_boundaries: tuple


@dataclass(frozen=True, eq=False)
class SlotPermutation:
    """``pi[j]`` is the original slot placed at position ``j``."""

    pi: tuple


def virtual_harvests(inst: Instance) -> VirtualHarvests:
    """Equalize the harvest profile into its nondecreasing staircase.

    Each segment carries the mean of the harvests it spans; merging adjacent
    segments whenever the later mean does not exceed the earlier one yields
    the fixed point of local energy deferral: segment means strictly
    increase, prefix sums stay below the original prefix sums, and moving any
    further energy forward is unnecessary.
    """
    sums: list[float] = []
    lens: list[int] = []
    for e in inst.harvests_e:
        sums.append(float(e))
        lens.append(1)
        while len(sums) > 1 and sums[-1] * lens[-2] <= sums[-2] * lens[-1]:
            s, l = sums.pop(), lens.pop()
            sums[-1] += s
            lens[-1] += l
    virtual = np.concatenate([np.full(l, s / l) for s, l in zip(sums, lens)])
    boundaries = tuple(int(b) for b in np.cumsum(lens[:-1]))
    virtual.setflags(write=False)
    return VirtualHarvests(virtual_e=virtual, segment_boundaries=boundaries)


def sort_schedule_nondecreasing(inst: Instance, sched: Schedule):
    """Permute slots so powers are nondecreasing, shares following their slots.

    Returns ``(schedule, permutation, feasible)``.  The stable sort makes the
    permutation deterministic under ties.  Utility is unchanged because each
    user's bits are a sum over slots, reordered but not altered.  The flag
    reports whether the permuted schedule still satisfies energy causality;
    no repair is attempted when it does not.
    """
    _check_dims(inst, sched)
    perm = np.argsort(sched.powers_p, kind="stable")
    sorted_sched = Schedule(
        powers_p=sched.powers_p[perm],
        shares_tau=sched.shares_tau[:, perm],
    )
    spent = np.cumsum(sorted_sched.powers_p) * inst.slot_length_t
    feasible = bool(np.all(spent <= inst.cum_harvests + inst.tol_energy))
    return sorted_sched, SlotPermutation(pi=tuple(int(i) for i in perm)), feasible
