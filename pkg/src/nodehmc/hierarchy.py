"""Class hierarchies, true-path closure of annotations, and DAG-to-tree normalization."""
import logging
from collections import deque
from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import AnnotationError, HierarchyError

logger = logging.getLogger(__name__)


class Hierarchy:
    """Directed acyclic graph of classes; an edge ``(parent, child)`` means
    ``parent`` is a direct ancestor of ``child``.

    Construction fails on undeclared endpoints, self-loops and cycles, so every
    instance admits a topological order.
    """

    def __init__(self, classes=(), edges=()):
        edges = [(str(p), str(c)) for p, c in edges]
        declared = set(map(str, classes))
        for p, c in edges:
            declared.add(p)
            declared.add(c)
        self.classes = tuple(sorted(declared))
        parents = {c: set() for c in self.classes}
        children = {c: set() for c in self.classes}
        for p, c in edges:
            if p == c:
                raise HierarchyError(f"self-loop on class {p!r}")
            parents[c].add(p)
            children[p].add(c)
        self.parents = {c: tuple(sorted(ps)) for c, ps in parents.items()}
        self.children = {c: tuple(sorted(cs)) for c, cs in children.items()}
        self.edges = frozenset((p, c) for c, ps in self.parents.items() for p in ps)
        self._order = self._kahn()
        self._ancestors = None

    def __repr__(self):
        return f"Hierarchy(classes={len(self.classes)}, edges={len(self.edges)})"

    def __contains__(self, cls):
        return cls in self.parents

    @property
    def roots(self):
        return tuple(c for c in self.classes if not self.parents[c])

    def _kahn(self):
        indeg = {c: len(ps) for c, ps in self.parents.items()}
        queue = deque(c for c in self.classes if indeg[c] == 0)
        order = []
        while queue:
            c = queue.popleft()
            order.append(c)
            for ch in self.children[c]:
                indeg[ch] -= 1
                if indeg[ch] == 0:
                    queue.append(ch)
        if len(order) != len(self.classes):
            stuck = sorted(c for c, d in indeg.items() if d > 0)
            raise HierarchyError(f"hierarchy has a cycle through {stuck[:10]}")
        return tuple(order)

    def topological_order(self, leaves_first=False):
        return self._order[::-1] if leaves_first else self._order

    def ancestors(self, cls):
        """All strict ancestors of ``cls`` as a frozenset."""
        if self._ancestors is None:
            anc = {}
            for c in self._order:
                s = set()
                for p in self.parents[c]:
                    s.add(p)
                    s |= anc[p]
                anc[c] = frozenset(s)
            self._ancestors = anc
        try:
            return self._ancestors[cls]
        except KeyError:
            raise HierarchyError(f"unknown class {cls!r}") from None


class AnnotationMap(Mapping):
    """Read-only mapping ``node -> frozenset of classes``.

    ``classes`` is the universe of class identifiers the map is defined over
    (defaults to the union of all annotated classes).
    """

    def __init__(self, data, classes=None):
        self._data = {str(n): frozenset(map(str, cs)) for n, cs in dict(data).items()}
        union = set()
        for cs in self._data.values():
            union |= cs
        self.classes = frozenset(union if classes is None else set(map(str, classes)) | union)
        self._inverse = None

    def __getitem__(self, node):
        return self._data[node]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __repr__(self):
        return f"AnnotationMap(nodes={len(self._data)}, classes={len(self.classes)})"

    def _build_inverse(self):
        inv = {c: set() for c in self.classes}
        for n, cs in self._data.items():
            for c in cs:
                inv[c].add(n)
        self._inverse = {c: frozenset(ns) for c, ns in inv.items()}

    def nodes_with(self, cls):
        """The preimage of ``cls``: every node annotated with it."""
        if self._inverse is None:
            self._build_inverse()
        if cls not in self._inverse:
            raise AnnotationError(f"unknown class {cls!r}")
        return self._inverse[cls]

    def counts(self):
        if self._inverse is None:
            self._build_inverse()
        return {c: len(ns) for c, ns in self._inverse.items()}

    def restrict(self, nodes):
        nodes = set(nodes)
        return AnnotationMap({n: cs for n, cs in self._data.items() if n in nodes}, self.classes)


def close_annotations(phi, h):
    """Smallest superset of ``phi`` closed under ancestors in ``h``."""
    unknown = set()
    out = {}
    for node, classes in phi.items():
        closed = set()
        for c in classes:
            if c not in h:
                unknown.add(c)
                continue
            closed.add(c)
            closed |= h.ancestors(c)
        out[node] = closed
    if unknown:
        raise AnnotationError(f"annotations reference classes missing from the hierarchy: {sorted(unknown)[:10]}")
    return AnnotationMap(out, h.classes)


@dataclass(frozen=True)
class ClassCensus:
    annotated_count: dict
    descendant_count: dict = field(default_factory=dict)


def descendant_counts(h):
    """Number of distinct strict descendants of every class (diamonds counted once).

    Descendant sets are carried as integer bitsets and merged leaves-first.
    """
    bit = {c: 1 << i for i, c in enumerate(h.classes)}
    below = {}
    for c in h.topological_order(leaves_first=True):
        acc = 0
        for ch in h.children[c]:
            acc |= bit[ch] | below[ch]
        below[c] = acc
    return {c: below[c].bit_count() for c in h.classes}


def class_census(h, closed):
    counts = closed.counts()
    return ClassCensus(
        {c: counts.get(c, 0) for c in h.classes},
        descendant_counts(h),
    )


def edge_weight(census, parent, child):
    """Exact ratio ``|annotated(child)| / |annotated(parent)|`` as a Fraction."""
    pc = census.annotated_count.get(parent)
    cc = census.annotated_count.get(child)
    if pc is None or cc is None:
        raise HierarchyError(f"census has no count for edge {parent!r} -> {child!r}")
    if pc == 0:
        raise HierarchyError(f"unpopulated ancestor {parent!r} (no annotated nodes)")
    return Fraction(cc, pc)


class TreeHierarchy:
    """Forest of classes: every class has at most one parent."""

    def __init__(self, classes, parent, removed_edges=()):
        self.classes = tuple(classes)
        self.parent = {c: parent.get(c) for c in self.classes}
        children = {c: [] for c in self.classes}
        for c, p in self.parent.items():
            if p is not None:
                if p not in children:
                    raise HierarchyError(f"parent {p!r} of {c!r} is not a declared class")
                children[p].append(c)
        self.children = {c: tuple(sorted(cs)) for c, cs in children.items()}
        self.roots = tuple(sorted(c for c, p in self.parent.items() if p is None))
        self.removed_edges = tuple(removed_edges)
        order = []
        queue = deque(self.roots)
        while queue:
            c = queue.popleft()
            order.append(c)
            queue.extend(self.children[c])
        if len(order) != len(self.classes):
            raise HierarchyError("tree parent map contains a cycle")
        self._order = tuple(order)

    def __repr__(self):
        return f"TreeHierarchy(classes={len(self.classes)}, roots={len(self.roots)})"

    @property
    def edges(self):
        return frozenset((p, c) for c, p in self.parent.items() if p is not None)

    def topological_order(self):
        """Breadth-first order from the roots; parents precede children."""
        return self._order

    def path(self, cls):
        """Classes from the root down to ``cls`` inclusive."""
        out = [cls]
        while self.parent[out[-1]] is not None:
            out.append(self.parent[out[-1]])
        return out[::-1]

    def subtree(self, cls):
        out = []
        queue = deque([cls])
        while queue:
            c = queue.popleft()
            out.append(c)
            queue.extend(self.children[c])
        return tuple(out)


def normalize(h, census):
    """Reduce the DAG ``h`` to a forest by keeping one incoming edge per class.

    The kept parent maximizes ``edge_weight(parent, child)``; ties go to the
    lexicographically smallest parent identifier. Classes whose own count is 0
    weigh 0 on every incoming edge, so the tie-break alone decides.
    """
    counts = census.annotated_count
    parent = {}
    removed = []
    for c in h.topological_order(leaves_first=True):
        ps = h.parents[c]
        if not ps:
            parent[c] = None
            continue
        if len(ps) == 1:
            parent[c] = ps[0]
            continue
        cc = counts[c]
        if cc == 0:
            best = ps[0]
        else:
            # with a shared positive numerator, the largest ratio has the smallest denominator
            for p in ps:
                if counts[p] == 0:
                    raise HierarchyError(f"unpopulated ancestor {p!r} above populated class {c!r}")
            best = min(ps, key=lambda p: (counts[p], p))
        parent[c] = best
        removed.extend((p, c) for p in ps if p != best)
    removed.sort()
    return TreeHierarchy(h.classes, parent, removed)


@dataclass(frozen=True)
class SubHierarchy:
    """A subtree of the normalized hierarchy paired with the subgraph of nodes
    annotated with its root."""

    root: str
    classes: tuple
    parent: dict
    targets: frozenset
    subgraph: object

    @property
    def children(self):
        kids = {c: [] for c in self.classes}
        for c in self.classes:
            p = self.parent[c]
            if p is not None:
                kids[p].append(c)
        return {c: tuple(v) for c, v in kids.items()}

    @property
    def structural(self):
        return frozenset(c for c in self.classes if c not in self.targets)

    def topological_order(self):
        return self.classes


def split_subhierarchies(t, closed, net, min_count=5, max_count=300):
    """Cut the forest ``t`` into independent prediction problems.

    Targets are classes whose closed annotation count lies in
    ``[min_count, max_count]``. One sub-hierarchy is formed per child of every
    global root; those without a single target are dropped. Out-of-range classes
    inside a kept subtree stay as structural pass-throughs.

    The result is sorted by class count, then node count, then root id.
    """
    if not 1 <= min_count <= max_count:
        raise HierarchyError(f"invalid class-size bounds [{min_count}, {max_count}]")
    clash = sorted(c for c in t.classes if c in net)
    if clash:
        raise HierarchyError(f"identifiers used both as class and as node: {clash[:5]}")
    counts = closed.counts()
    targets ={c for c in t.classes if min_count <= counts.get(c, 0) <= max_count}
    if not targets:
        raise HierarchyError(f"no classes in range [{min_count}, {max_count}]")
    subs = []
    for g in t.roots:
        for top in t.children[g]:
            classes = t.subtree(top)
            sub_targets = frozenset(c for c in classes if c in targets)
            if not sub_targets:
                continue
            members = closed.nodes_with(top)
            missing = [n for n in members if n not in net]
            if missing:
                raise AnnotationError(
                    f"{len(missing)} nodes annotated with {top!r} are absent from the network, e.g. {sorted(missing)[:3]}"
                )
            parent = {c: (None if c == top else t.parent[c]) for c in classes}
            subs.append(SubHierarchy(top, classes, parent, sub_targets, net.subgraph(members)))
    subs.sort(key=lambda s: (len(s.classes), len(s.subgraph), s.root))
    return subs


def read_hierarchy(path):
    """Read tab-separated ``parent  child`` edges."""
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) == 1:
                edges.append((None, parts[0]))
                continue
            if len(parts) != 2:
                raise HierarchyError(f"{path}:{lineno}: expected 'parent<TAB>child'")
            edges.append((parts[0], parts[1]))
    classes = [c for p, c in edges if p is None]
    return Hierarchy(classes, [(p, c) for p, c in edges if p is not None])


def read_annotations(path):
    """Read tab-separated ``node  class`` pairs into ``{node: set(classes)}``."""
    phi = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise AnnotationError(f"{path}:{lineno}: expected 'node<TAB>class'")
            phi.setdefault(parts[0], set()).add(parts[1])
    return phi


def write_tree(tree, path):
    with open(path, "w", encoding="utf-8") as fh:
        for c in tree.topological_order():
            p = tree.parent[c]
            fh.write(f"{c}\n" if p is None else f"{p}\t{c}\n")


def read_tree(path):
    h = read_hierarchy(path)
    parent = {}
    for c in h.classes:
        ps = h.parents[c]
        if len(ps) > 1:
            raise HierarchyError(f"{path}: class {c!r} has {len(ps)} parents; not a tree")
        parent[c] = ps[0] if ps else None
    return TreeHierarchy(h.classes, parent)
