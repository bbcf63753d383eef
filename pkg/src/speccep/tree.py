"""Dependency tree of window versions.

Window versions (WV) and consumption groups (CG) alternate along every path.
A WV has at most one child: either the next window's version or the vertex of
one of its CGs.  A CG vertex has two edges: on the *completion* edge live the
versions that assume the group completes (they suppress its events), on the
*abandon* edge the versions that assume it never completes.

When a CG is created its owner's subtree is duplicated: the old subtree moves
to the abandon edge and a copy, suppressing the new group, goes on the
completion edge.  Completion or abandonment splices the vertex out and drops
the losing side.  Windows that do not overlap any earlier window start a new
tree, so the structure is a forest ordered by window.

Processing state of a version is owned by the runtime.  The tree only calls
two hooks while duplicating a subtree: ``acquire(wv)``/``release(wv)`` around
each original version (the runtime locks it and applies its outstanding
feedback) and ``clone_state(src, dst, cgmap)`` to copy processing state.
"""

from __future__ import annotations

import itertools
from collections import deque

OPEN = "open"
COMPLETED = "completed"
ABANDONED = "abandoned"

CHILD = 0
ABANDON_EDGE = 1
COMPLETION_EDGE = 2


class ContractViolation(RuntimeError):
    pass


class ConsumptionGroup:
    """Events a partial match would consume if it completes."""

    __slots__ = ("id", "owner", "status", "events", "constituents", "delta", "version",
                 "vertices", "__weakref__")

    def __init__(self, id, owner, delta, events=(), constituents=()):
        self.id = id
        self.owner = owner
        self.status = OPEN
        self.events = list(events)
        self.constituents = list(constituents)
        self.delta = delta
        self.version = 0
        self.vertices = []

    def add(self, seq, consumed=True, delta=None):
        self.constituents.append(seq)
        if consumed:
            self.events.append(seq)
        if delta is not None:
            self.delta = delta
        self.version += 1

    def clone(self, new_id, owner):
        c = ConsumptionGroup(new_id, owner, self.delta, self.events, self.constituents)
        c.status = self.status
        c.version = self.version
        return c

    def __repr__(self):
        return f"CG{self.id}({self.status}, d={self.delta}, {len(self.events)} ev)"


class WindowVersion:
    """One speculative version of a window.

    Structural fields are maintained by the tree; the processing fields after
    ``lock`` are owned by the runtime.
    """

    __slots__ = ("id", "window", "parent", "edge", "child", "suppressed", "completed_cgs",
                 "alive", "confirmed", "instance", "is_root",
                 "lock", "pending", "det", "pos", "mask", "used", "seen", "lastv", "slots",
                 "owned", "buffer", "finished", "unpublished", "__weakref__")

    def __init__(self, id, window, suppressed):
        self.id = id
        self.window = window
        self.parent = None
        self.edge = None
        self.child = None
        self.suppressed = suppressed
        self.completed_cgs = []
        self.alive = True
        self.confirmed = False
        self.instance = None
        self.is_root = False
        self.lock = None
        self.pending = None
        self.det = None
        self.pos = 0
        self.mask = None
        self.used = None
        self.seen = None
        self.lastv = None
        self.slots = None
        self.owned = None
        self.buffer = None
        self.finished = False
        self.unpublished = None

    def __repr__(self):
        return f"WV{self.id}(w{self.window.id})"


class CGVertex:
    __slots__ = ("cg", "parent", "edge", "completion", "abandon")

    def __init__(self, cg):
        self.cg = cg
        self.parent = None
        self.edge = None
        self.completion = None
        self.abandon = None

    def __repr__(self):
        return f"V({self.cg!r})"


class _Tree:
    __slots__ = ("root", "windows")

    def __init__(self, root, windows):
        self.root = root
        self.windows = windows


def relevant(cg, window) -> bool:
    """A group matters to ``window`` if its owner's window reaches into it."""
    return cg.owner is not None and cg.owner.window.end > window.start


def _attach(parent, edge, node):
    if edge == CHILD:
        parent.child = node
    elif edge == COMPLETION_EDGE:
        parent.completion = node
    else:
        parent.abandon = node
    if node is not None:
        node.parent = parent
        node.edge = edge


class DependencyTree:
    """Forest of window-version trees, one per run of overlapping windows."""

    def __init__(self, acquire=None, release=None, clone_state=None, first_id=1):
        self.trees: list[_Tree] = []
        self.versions: dict[int, WindowVersion] = {}
        self.acquire = acquire
        self.release = release
        self.clone_state = clone_state
        self._wv_ids = itertools.count(first_id)
        self._cg_ids = itertools.count(first_id)
        self._last_end = None
        self._window_tree: dict[int, _Tree] = {}
        self._confirmed_cgs: deque = deque()
        self.dropped = 0
        self.max_versions = 0

    # helpers

    def new_cg_id(self) -> int:
        return next(self._cg_ids)

    def new_consumption_group(self, owner, delta, events=(), constituents=None):
        return ConsumptionGroup(self.new_cg_id(), owner, delta, events,
                                events if constituents is None else constituents)

    def __len__(self):
        return len(self.versions)

    @property
    def roots(self) -> list:
        return [t.root for t in self.trees]

    def windows(self) -> list:
        return [w for t in self.trees for w in t.windows]

    def _make_version(self, window, suppressed):
        wv = WindowVersion(next(self._wv_ids), window, suppressed)
        self.versions[wv.id] = wv
        n = len(self.versions)
        if n > self.max_versions:
            self.max_versions = n
        return wv

    def _suppression_for(self, window, parent_wv, path):
        sup = [c for c in parent_wv.suppressed if relevant(c, window)]
        sup.extend(c for c in parent_wv.completed_cgs if relevant(c, window))
        sup.extend(v.cg for v, e in path if e == COMPLETION_EDGE and relevant(v.cg, window))
        return sup

    def tree_of(self, wv) -> _Tree:
        return self._window_tree[wv.window.id]

    # windows

    def new_window(self, window) -> list:
        """Attach versions of a newly opened window; returns the new version ids."""
        if self._last_end is not None and window.start < self._last_end and self.trees:
            t = self.trees[-1]
            slots = list(self._empty_slots(t.root))
            created = []
            for pwv, path, node, edge in slots:
                wv = self._make_version(window, self._suppression_for(window, pwv, path))
                _attach(node, edge, wv)
                created.append(wv.id)
            t.windows.append(window)
        else:
            sup = [c for c in self._confirmed_cgs if relevant(c, window)]
            wv = self._make_version(window, sup)
            wv.is_root = True
            t = _Tree(wv, [window])
            self.trees.append(t)
            created = [wv.id]
        self._window_tree[window.id] = t
        self._last_end = window.end if self._last_end is None else max(self._last_end, window.end)
        return created

    @staticmethod
    def _empty_slots(root):
        # depth first, abandon side before completion side
        stack = [(root, root, ())]
        while stack:
            node, pwv, path = stack.pop()
            if isinstance(node, WindowVersion):
                if node.child is None:
                    yield node, (), node, CHILD
                else:
                    stack.append((node.child, node, ()))
            else:
                todo = []
                for edge, child in ((ABANDON_EDGE, node.abandon), (COMPLETION_EDGE, node.completion)):
                    p2 = path + ((node, edge),)
                    if child is None:
                        yield pwv, p2, node, edge
                    else:
                        todo.append((child, pwv, p2))
                stack.extend(reversed(todo))

    # consumption groups

    def consumption_group_created(self, cg, wv) -> None:
        """Insert the vertex of ``cg`` (owned by ``wv``) and duplicate the subtree below."""
        if not wv.alive:
            raise ContractViolation(f"{wv!r} is not in the tree")
        if cg.status != OPEN:
            raise ContractViolation(f"{cg!r} is not open")
        old = wv.child
        v = CGVertex(cg)
        cg.vertices.append(v)
        _attach(wv, CHILD, v)
        if old is not None:
            _attach(v, ABANDON_EDGE, old)
            _attach(v, COMPLETION_EDGE, self._copy(old, cg))

    def _copy(self, node, cg):
        wvmap: dict = {}
        cgmap: dict = {}
        held = []
        top = CGVertex(None)  # scratch parent for the copy's root
        try:
            stack = [(node, top, COMPLETION_EDGE)]
            while stack:
                orig, npar, edge = stack.pop()
                if isinstance(orig, WindowVersion):
                    if self.acquire is not None:
                        self.acquire(orig)
                        held.append(orig)
                    sup = [cgmap.get(c, c) for c in orig.suppressed]
                    if relevant(cg, orig.window):
                        sup.append(cg)
                    new = self._make_version(orig.window, sup)
                    wvmap[orig] = new
                    new.completed_cgs = [self._clone_cg(c, new, cgmap) for c in orig.completed_cgs]
                    if self.clone_state is not None:
                        self.clone_state(orig, new, cgmap)
                    _attach(npar, edge, new)
                    if orig.child is not None:
                        stack.append((orig.child, new, CHILD))
                else:
                    c = orig.cg
                    owner = wvmap.get(c.owner)
                    if owner is not None:
                        c2 = cgmap.get(c)
                        if c2 is None:
                            c2 = self._clone_cg(c, owner, cgmap)
                    else:
                        c2 = c
                    nv = CGVertex(c2)
                    c2.vertices.append(nv)
                    _attach(npar, edge, nv)
                    if orig.completion is not None:
                        stack.append((orig.completion, nv, COMPLETION_EDGE))
                    if orig.abandon is not None:
                        stack.append((orig.abandon, nv, ABANDON_EDGE))
        finally:
            if self.release is not None:
                for wv in reversed(held):
                    self.release(wv)
        root = top.completion
        root.parent = None
        return root

    def _clone_cg(self, c, owner, cgmap):
        c2 = cgmap.get(c)
        if c2 is None:
            c2 = c.clone(self.new_cg_id(), owner)
            cgmap[c] = c2
        return c2

    def consumption_group_completed(self, cg) -> list:
        """Keep the completion side of every vertex of ``cg``; returns dropped version ids."""
        return self._resolve(cg, COMPLETED)

    def consumption_group_abandoned(self, cg) -> list:
        """Keep the abandon side of every vertex of ``cg``; returns dropped version ids."""
        return self._resolve(cg, ABANDONED)

    def _resolve(self, cg, status):
        if cg.status != OPEN:
            raise ContractViolation(f"{cg!r} already {cg.status}")
        cg.status = status
        dropped = []
        for v in list(cg.vertices):
            if status == COMPLETED:
                keep, lose = v.completion, v.abandon
            else:
                keep, lose = v.abandon, v.completion
            dropped.extend(self._drop(lose))
            parent, edge = v.parent, v.edge
            _attach(parent, edge, keep)
        cg.vertices = []
        if status == COMPLETED and cg.owner is not None and cg.owner.alive:
            cg.owner.completed_cgs.append(cg)
        return dropped

    def _drop(self, node) -> list:
        if node is None:
            return []
        dropped = []
        stack = [node]
        while stack:
            x = stack.pop()
            if isinstance(x, WindowVersion):
                x.alive = False
                self.versions.pop(x.id, None)
                dropped.append(x.id)
                for c in x.completed_cgs:
                    c.vertices = []
                if x.child is not None:
                    stack.append(x.child)
            else:
                c = x.cg
                if x in c.vertices:
                    c.vertices.remove(x)
                if c.owner is not None and not c.owner.alive and c.status == OPEN:
                    c.status = ABANDONED
                    c.vertices = []
                if x.completion is not None:
                    stack.append(x.completion)
                if x.abandon is not None:
                    stack.append(x.abandon)
        self.dropped += len(dropped)
        return dropped

    # rollback and confirmation

    def rollback(self, wv, old_cgs=()) -> list:
        """Discard everything below ``wv`` and regrow one fresh version per later window."""
        if not wv.alive:
            raise ContractViolation(f"{wv!r} is not in the tree")
        dropped = self._drop(wv.child)
        wv.child = None
        for c in list(old_cgs) + wv.completed_cgs:
            if c.status == OPEN:
                c.status = ABANDONED
            c.vertices = []
        wv.completed_cgs = []
        t = self.tree_of(wv)
        later = t.windows[t.windows.index(wv.window) + 1:]
        parent = wv
        for w in later:
            new = self._make_version(w, self._suppression_for(w, parent, ()))
            _attach(parent, CHILD, new)
            parent = new
        return dropped

    def confirm_root(self):
        """Remove the root of the first tree; its child becomes the new root."""
        if not self.trees:
            raise ContractViolation("empty tree")
        t = self.trees[0]
        root = t.root
        child = root.child
        if isinstance(child, CGVertex):
            raise ContractViolation(f"{root!r} still has open consumption groups")
        self.versions.pop(root.id, None)
        root.alive = False
        root.confirmed = True
        t.windows.pop(0)
        self._window_tree.pop(root.window.id, None)
        if child is None:
            if t.windows:
                raise ContractViolation("root has no successor version")
            self.trees.pop(0)
        else:
            child.parent = None
            child.edge = None
            child.is_root = True
            t.root = child
        self._confirmed_cgs.extend(root.completed_cgs)
        # later windows start at or after this point, older groups cannot reach them
        horizon = self.trees[0].windows[0].start if self.trees else root.window.start
        while self._confirmed_cgs and self._confirmed_cgs[0].owner.window.end <= horizon:
            self._confirmed_cgs.popleft()
        return root

    # queries

    def path(self, wv) -> list:
        """``(cg_vertex, edge)`` pairs from the root down to ``wv``."""
        out = []
        node = wv
        while node.parent is not None:
            p = node.parent
            if isinstance(p, CGVertex):
                out.append((p, node.edge))
            node = p
        out.reverse()
        return out

    def survival_probability(self, wv, prob) -> float:
        """Product over the root path of ``P`` (completion edges) and ``1 - P`` (abandon edges)."""
        sp = 1.0
        for v, edge in self.path(wv):
            p = prob(v.cg)
            sp = sp * (p if edge == COMPLETION_EDGE else 1.0 - p)
        return sp

    def iter_nodes(self):
        for t in self.trees:
            stack = [t.root]
            while stack:
                x = stack.pop()
                yield x
                if isinstance(x, WindowVersion):
                    if x.child is not None:
                        stack.append(x.child)
                else:
                    if x.completion is not None:
                        stack.append(x.completion)
                    if x.abandon is not None:
                        stack.append(x.abandon)

    def iter_versions(self):
        return (x for x in self.iter_nodes() if isinstance(x, WindowVersion))

    def leaves(self):
        return [x for x in self.iter_versions() if x.child is None]

    def expected_suppression(self, wv) -> set:
        """Suppressed group ids recomputed from the root path (used by `validate`)."""
        t = self.tree_of(wv)
        node_path = []
        node = wv
        while node is not None:
            node_path.append(node)
            node = node.parent
        node_path.reverse()
        window = wv.window
        out = {c.id for c in t.root.suppressed if relevant(c, window)}
        for i, x in enumerate(node_path[:-1]):
            nxt = node_path[i + 1]
            if isinstance(x, WindowVersion):
                out.update(c.id for c in x.completed_cgs if relevant(c, window))
            elif nxt.edge == COMPLETION_EDGE and relevant(x.cg, window):
                out.add(x.cg.id)
        return out

    def validate(self, prob=None) -> None:
        """Check the structural invariants; raises `ContractViolation` on failure."""
        seen = set()
        for t in self.trees:
            if t.root.parent is not None or not t.root.is_root:
                raise ContractViolation("tree root has a parent")
            if t.root.window is not t.windows[0]:
                raise ContractViolation("root window mismatch")
            stack = [(t.root, 0)]
            while stack:
                x, depth = stack.pop()
                if isinstance(x, WindowVersion):
                    if not x.alive or self.versions.get(x.id) is not x:
                        raise ContractViolation(f"{x!r} in tree but not registered")
                    if x.window is not t.windows[depth]:
                        raise ContractViolation(f"{x!r} at depth {depth} has the wrong window")
                    seen.add(x.id)
                    got = {c.id for c in x.suppressed}
                    if len(got) != len(x.suppressed):
                        raise ContractViolation(f"{x!r} suppresses a group twice")
                    if got != self.expected_suppression(x):
                        raise ContractViolation(f"{x!r} suppression differs from its path")
                    if x.child is None:
                        if depth != len(t.windows) - 1:
                            raise ContractViolation(f"{x!r} is a leaf but later windows exist")
                    else:
                        if x.child.parent is not x or x.child.edge != CHILD:
                            raise ContractViolation("broken parent pointer")
                        stack.append((x.child, depth + 1))
                else:
                    if not isinstance(x.parent, (CGVertex, WindowVersion)):
                        raise ContractViolation("CG vertex without parent")
                    if x not in x.cg.vertices or x.cg.status != OPEN:
                        raise ContractViolation(f"{x!r} vertex of a closed group")
                    if (x.completion is None) != (x.abandon is None):
                        raise ContractViolation(f"{x!r} has exactly one child")
                    if x.completion is None:
                        if depth != len(t.windows):
                            raise ContractViolation(f"{x!r} is a leaf but later windows exist")
                    for edge, ch in ((COMPLETION_EDGE, x.completion), (ABANDON_EDGE, x.abandon)):
                        if ch is not None:
                            if ch.parent is not x or ch.edge != edge:
                                raise ContractViolation("broken parent pointer")
                            stack.append((ch, depth))
        if seen != set(self.versions):
            raise ContractViolation("registered versions missing from the tree")
        if prob is not None:
            for x in self.iter_versions():
                if x.parent is not None:
                    p = x.parent
                    while not isinstance(p, WindowVersion):
                        p = p.parent
                    if self.survival_probability(x, prob) > self.survival_probability(p, prob) + 1e-12:
                        raise ContractViolation(f"{x!r} more likely than its ancestor")

    def dump(self, prob=None) -> str:
        """Indented text rendering, one vertex per line."""
        lines = []
        for t in self.trees:
            stack = [(t.root, 0, 1.0)]
            while stack:
                x, depth, sp = stack.pop()
                pad = "  " * depth
                if isinstance(x, WindowVersion):
                    lines.append(f"{pad}WV {x.id} win={x.window.id} SP={sp:.6g}")
                    if x.child is not None:
                        stack.append((x.child, depth + 1, sp))
                else:
                    p = prob(x.cg) if prob is not None else float("nan")
                    lines.append(f"{pad}CG {x.cg.id} δ={x.cg.delta} P={p:.6g}")
                    if x.completion is not None:
                        stack.append((x.completion, depth + 1, sp * p))
                    if x.abandon is not None:
                        stack.append((x.abandon, depth + 1, sp * (1.0 - p)))
        return "\n".join(lines) + ("\n" if lines else "")
