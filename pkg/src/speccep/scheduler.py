"""Top-k selection of window versions and their assignment to operator instances."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .tree import COMPLETION_EDGE, CGVertex, WindowVersion


def _order_key(sp, wv, bits):
    # higher survival first; ties by window, abandon side before completion side, id
    return (-sp, wv.window.id, bits, wv.id)


def find_top_k_versions(tree, k: int, prob, eligible=None) -> list:
    """Best-first search for the ``k`` most likely window versions.

    ``prob(cg)`` gives the completion probability of a group.  Versions for
    which ``eligible(wv)`` is false are still expanded but not returned.
    """
    if k <= 0:
        return []
    heap = []
    for root in tree.roots:
        heap.append((_order_key(1.0, root, ()), 1.0, root))
    heapq.heapify(heap)
    out = []
    push = heapq.heappush
    while heap and len(out) < k:
        key, sp, wv = heapq.heappop(heap)
        if eligible is None or eligible(wv):
            out.append(wv)
        stack = [(wv.child, sp, key[2])]
        while stack:
            node, s, bits = stack.pop()
            if node is None:
                continue
            if isinstance(node, WindowVersion):
                push(heap, (_order_key(s, node, bits), s, node))
            else:
                p = prob(node.cg)
                stack.append((node.completion, s * p, bits + (1,)))
                stack.append((node.abandon, s * (1.0 - p), bits + (0,)))
    return out


def brute_force_top_k(tree, k: int, prob, eligible=None) -> list:
    """Reference selection: score every version from its root path and sort."""
    scored = []
    for wv in tree.versions.values():
        if eligible is not None and not eligible(wv):
            continue
        sp = 1.0
        bits = []
        for v, edge in tree.path(wv):
            p = prob(v.cg)
            if edge == COMPLETION_EDGE:
                sp = sp * p
                bits.append(1)
            else:
                sp = sp * (1.0 - p)
                bits.append(0)
        scored.append((_order_key(sp, wv, tuple(bits)), wv))
    scored.sort(key=lambda t: t[0])
    return [wv for _, wv in scored[:k]]


@dataclass
class Assignment:
    """Which version each instance works on after a scheduling round."""

    by_instance: dict = field(default_factory=dict)
    reassigned: int = 0

    def __getitem__(self, instance_id):
        return self.by_instance[instance_id]


def schedule(instances, topk) -> Assignment:
    """Keep versions on their current instance; hand the rest to free instances.

    Free instances are used lowest id first; any left over go idle.
    """
    keep = set()
    to_place = []
    for wv in topk:
        inst = wv.instance
        if inst is not None and inst.scheduled is wv:
            keep.add(inst.id)
        else:
            to_place.append(wv)
    free = [op for op in instances if op.id not in keep]
    free.reverse()
    moved = 0
    for wv in to_place:
        op = free.pop()
        old = op.scheduled
        if old is not None and old.instance is op:
            old.instance = None
        op.scheduled = wv
        wv.instance = op
        moved += 1
    for op in free:
        old = op.scheduled
        if old is not None:
            if old.instance is op:
                old.instance = None
            op.scheduled = None
    return Assignment({op.id: (op.scheduled.id if op.scheduled is not None else None)
                       for op in instances}, moved)
