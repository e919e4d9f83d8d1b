"""Enumeration of the discrete action space and switch-action plumbing.

A set-action states, for every object of one substation, which busbar it
belongs on.  The space of valid unique set-actions pins the first attached
object of each substation to busbar 1 (killing the busbar-relabeling mirror)
and rejects assignments that put a generator or load on a busbar with no
line endpoint, since such an injection cannot be served.

A switch-action is the relative view: one bit per object in canonical order,
1 meaning "move to the other busbar".  Models predict in switch space; the
projection back onto valid actions picks the nearest encoding by Euclidean
distance, ties to the lowest action index.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .grid_model import (
    BUS1,
    BUS2,
    DISABLED,
    DO_NOTHING,
    GEN,
    LOAD,
    GridTopology,
    SetAction,
)


@dataclass(frozen=True)
class SwitchAction:
    """Per-object flip bits in canonical order; action_index set when the
    encoding came from projecting onto a known action space."""

    bits: np.ndarray
    action_index: int | None = None

    def __post_init__(self):
        b = np.ascontiguousarray(self.bits, dtype=np.int8)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def is_do_nothing(self) -> bool:
        return not self.bits.any()


@dataclass(frozen=True)
class ActionSpace:
    """Ordered valid set-actions: explicit do-nothing first, then substations
    ascending, assignments lexicographic.  Immutable and shareable."""

    actions: tuple[SetAction, ...]
    per_substation: dict[int, tuple[int, int]]

    # (n_actions, n_objects) target busbar per object, 0 where untouched
    target_matrix: np.ndarray = None

    def __post_init__(self):
        n_objects = 0
        for a in self.actions:
            if a.object_index:
                n_objects = max(n_objects, max(a.object_index) + 1)
        tm = np.zeros((len(self.actions), max(n_objects, 1)), dtype=np.int8)
        for k, a in enumerate(self.actions):
            for obj, bus in zip(a.object_index, a.busbar):
                tm[k, obj] = bus
        tm.setflags(write=False)
        object.__setattr__(self, "target_matrix", tm)

    def __len__(self) -> int:
        return len(self.actions)

    def encodings(self, current: np.ndarray) -> np.ndarray:
        """Switch encodings of every action w.r.t. ``current``, (n_actions, n_objects)."""
        tm = self.target_matrix
        cur = np.asarray(current, dtype=np.int8)
        return ((tm > 0) & (cur != DISABLED) & (tm != cur)).astype(np.float64)


def enumerate_substation_configs(
    grid: GridTopology, substation: int, exclude_lone_endpoint: bool = False
) -> list[tuple[int, ...]]:
    """Valid mirror-unique busbar assignments for one substation's objects.

    The first attached object is pinned to busbar 1; the remaining n-1
    choose freely, then assignments leaving an injection on a busbar with
    no line endpoint are dropped.  ``exclude_lone_endpoint`` additionally
    drops busbars holding exactly one line endpoint and nothing else.
    """
    objs = grid.objects_at(substation)
    if not objs:
        raise ValueError(f"substation {substation} has no attached objects")
    is_injection = np.array(
        [grid.object_order[k].kind in (GEN, LOAD) for k in objs], dtype=bool
    )
    out = []
    for tail in product((BUS1, BUS2), repeat=len(objs) - 1):
        assign = np.array((BUS1,) + tail, dtype=np.int8)
        valid = True
        for busbar in (1, 2):
            here = assign == busbar
            injections = int((here & is_injection).sum())
            endpoints = int((here & ~is_injection).sum())
            if injections >= 1 and endpoints == 0:
                valid = False
                break
            if exclude_lone_endpoint and injections == 0 and endpoints == 1:
                valid = False
                break
        if valid:
            out.append(tuple(int(b) for b in assign))
    return out


def build_action_space(
    grid: GridTopology, exclude_lone_endpoint: bool = False
) -> ActionSpace:
    """Explicit do-nothing plus every valid unique set-action, in canonical order."""
    actions: list[SetAction] = [DO_NOTHING]
    per_substation: dict[int, tuple[int, int]] = {}
    for sub in range(len(grid.substations)):
        objs = tuple(grid.objects_at(sub))
        start = len(actions)
        for assign in enumerate_substation_configs(grid, sub, exclude_lone_endpoint):
            actions.append(
                SetAction(
                    substation=sub,
                    object_index=objs,
                    busbar=assign,
                    index=len(actions),
                )
            )
        per_substation[sub] = (start, len(actions))
    return ActionSpace(actions=tuple(actions), per_substation=per_substation)


def set_to_switch(action: SetAction, current: np.ndarray, grid: GridTopology) -> SwitchAction:
    """Relative encoding of a set-action against the current topology.

    A bit is set iff the action assigns the object a busbar different from
    its current one; disabled objects never flip.
    """
    bits = np.zeros(grid.n_objects, dtype=np.int8)
    if action.is_do_nothing:
        return SwitchAction(bits=bits, action_index=action.index)
    idx = np.asarray(action.object_index)
    target = np.asarray(action.busbar, dtype=np.int8)
    cur = current[idx]
    bits[idx] = (cur != DISABLED) & (target != cur)
    return SwitchAction(bits=bits, action_index=action.index)


def switch_to_set(switch: SwitchAction, current: np.ndarray, grid: GridTopology) -> SetAction:
    """Inverse of set_to_switch: an assignment flipping exactly the set bits."""
    flagged = np.flatnonzero(switch.bits)
    if len(flagged) == 0:
        return DO_NOTHING
    subs = np.unique(grid.object_substation[flagged])
    if len(subs) > 1:
        raise ValueError(f"switch bits span substations {subs.tolist()}")
    if np.any(current[flagged] == DISABLED):
        raise ValueError("switch bits set on disabled objects")
    busbar = (3 - current[flagged]).astype(int)
    return SetAction(
        substation=int(subs[0]),
        object_index=tuple(int(k) for k in flagged),
        busbar=tuple(int(b) for b in busbar),
    )


def nearest_valid_index_batch(
    predictions: np.ndarray, space: ActionSpace, current: np.ndarray, grid: GridTopology
) -> np.ndarray:
    """Index into ``space.actions`` of the nearest valid encoding, per row.

    Distance is Euclidean against the switch encodings of all actions under
    the shared ``current`` topology; ties resolve to the lowest index.
    """
    table = space.encodings(current)             # (A, n_obj)
    P = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    # argmin over ||p - e||^2 = const - 2 p.e + sum(e); first hit wins ties
    score = table.sum(axis=1)[None, :] - 2.0 * (P @ table.T)
    return np.argmin(score, axis=1)


def nearest_valid_switch(
    prediction: np.ndarray, space: ActionSpace, current: np.ndarray, grid: GridTopology
) -> SwitchAction:
    """Project a raw prediction in (0,1)^n onto the nearest valid switch-action."""
    k = int(nearest_valid_index_batch(prediction, space, current, grid)[0])
    sw = set_to_switch(space.actions[k], current, grid)
    return SwitchAction(bits=sw.bits, action_index=k)


def action_space_to_dict(space: ActionSpace, grid: GridTopology) -> dict:
    """JSON-ready dump of the enumerated space, for audit and for the console."""
    return {
        "n_actions": len(space),
        "per_substation": {str(s): list(r) for s, r in space.per_substation.items()},
        "actions": [
            {
                "index": a.index,
                "substation": a.substation,
                "object_index": list(a.object_index),
                "busbar": list(a.busbar),
                "label": a.describe(),
            }
            for a in space.actions
        ],
    }
