"""Edge-weighted rooted trees.

Trees are immutable after construction.  Vertex ids are opaque strings;
every edge carries a strictly positive length (time units).  The module
provides truncation at a distance from the root, restriction to a leaf
subset, spread, well-spread restriction extraction, stretching to a
common leaf depth, nested families and their density profile, and
Newick I/O.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "Tree",
    "TreePoint",
    "NestedFamily",
    "TreeError",
    "DEPTH_TOL",
    "shared_path_length",
    "spread",
    "truncate",
    "descendant_leaves",
    "restrict",
    "extract_well_spread_restriction",
    "stretch_to_height",
    "big_bang_profile",
    "generate_family",
    "parse_newick",
    "to_newick",
]

# Absolute tolerance for depth comparisons at truncation boundaries.
DEPTH_TOL = 1e-12


class TreeError(ValueError):
    pass


class Tree:
    """Finite rooted tree with positive edge lengths.

    Built from ``(parent, child, length)`` triples.  Derived structure
    (children lists, depths, leaf set, height) is computed once; instances
    are never mutated afterwards, so they are safe to share across
    concurrent workers.
    """

    def __init__(self, root: str, edges):
        self.root = root
        parent: dict[str, str] = {}
        length: dict[str, float] = {}
        children: dict[str, list[str]] = {root: []}
        for u, v, ln in edges:
            if ln <= 0:
                raise TreeError(f"edge {u}->{v} has non-positive length {ln}")
            if v in parent or v == root:
                raise TreeError(f"vertex {v} has more than one parent")
            parent[v] = u
            length[v] = float(ln)
            children.setdefault(u, []).append(v)
            children.setdefault(v, [])
        for v in parent:
            # walk to the root to reject disconnected pieces / cycles
            seen = set()
            u = v
            while u != root:
                if u in seen:
                    raise TreeError("cycle detected")
                seen.add(u)
                if u not in parent:
                    raise TreeError(f"vertex {u} is not connected to the root")
                u = parent[u]
        self.parent = parent
        self.length = length
        self.children = {u: tuple(sorted(cs)) for u, cs in children.items()}
        self.vertices = frozenset(children)
        depth: dict[str, float] = {root: 0.0}
        order = [root]
        stack = [root]
        while stack:
            u = stack.pop()
            for c in self.children[u]:
                depth[c] = depth[u] + length[c]
                order.append(c)
                stack.append(c)
        self.depth = depth
        self.topo_order = tuple(order)
        self.leaves = tuple(sorted(v for v in self.vertices
                                   if not self.children[v] and v != root)
                            or ([root] if not self.children[root] else []))
        self.height = max((depth[x] for x in self.leaves), default=0.0)

    def edge_list(self):
        """Edges as sorted (parent, child, length) triples."""
        return sorted((self.parent[v], v, self.length[v]) for v in self.parent)

    def subtree_leaves(self, v: str) -> tuple[str, ...]:
        """Leaves at or below vertex v, sorted."""
        if v not in self.vertices:
            raise TreeError(f"unknown vertex {v}")
        if not self.children[v]:
            return (v,)
        out = []
        stack = [v]
        while stack:
            u = stack.pop()
            cs = self.children[u]
            if not cs:
                out.append(u)
            else:
                stack.extend(cs)
        return tuple(sorted(out))

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        if self.root != other.root or self.parent.keys() != other.parent.keys():
            return False
        return all(self.parent[v] == other.parent[v]
                   and math.isclose(self.length[v], other.length[v],
                                    rel_tol=0.0, abs_tol=1e-9)
                   for v in self.parent)

    def __hash__(self):
        # identity hash: trees are immutable, caches key on the instance
        return id(self)

    def __repr__(self):
        return (f"Tree(root={self.root!r}, leaves={len(self.leaves)}, "
                f"height={self.height:.6g})")


@dataclass(frozen=True, order=True)
class TreePoint:
    """A point on the tree: ``offset`` along the incoming edge of ``vertex``,
    measured from the parent endpoint.  A vertex itself is represented with
    offset equal to its incoming edge length; the root has offset 0."""

    vertex: str
    offset: float

    def is_vertex_of(self, tree: Tree) -> bool:
        if self.vertex == tree.root:
            return True
        return abs(self.offset - tree.length[self.vertex]) <= DEPTH_TOL

    def depth_in(self, tree: Tree) -> float:
        if self.vertex == tree.root:
            return 0.0
        return tree.depth[tree.parent[self.vertex]] + self.offset


def _lca_depth(tree: Tree, x: str, y: str) -> float:
    """Depth of the lowest common ancestor of two vertices."""
    ax = {}
    u = x
    while True:
        ax[u] = tree.depth[u]
        if u == tree.root:
            break
        u = tree.parent[u]
    u = y
    while u not in ax:
        u = tree.parent[u]
    return tree.depth[u]


def shared_path_length(tree: Tree, x: str, y: str) -> float:
    """Total length of the edges shared by the root-to-x and root-to-y paths."""
    if x == y:
        raise TreeError("leaves must be distinct")
    for z in (x, y):
        if z not in tree.leaves:
            raise TreeError(f"unknown leaf {z}")
    return _lca_depth(tree, x, y)


def spread(tree: Tree) -> float:
    """Average of min(shared path length, 1) over ordered pairs of
    distinct leaves."""
    leaves = tree.leaves
    n = len(leaves)
    if n < 2:
        raise TreeError("spread requires at least 2 leaves")
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            total += 2.0 * min(_lca_depth(tree, leaves[i], leaves[j]), 1.0)
    return total / (n * (n - 1))


def truncate(tree: Tree, s: float) -> tuple[TreePoint, ...]:
    """Boundary points at distance ``s`` from the root.

    Returns the points at depth exactly s on root-to-leaf paths together
    with the leaves at depth below s.  When s reaches the height of the
    tree this is exactly the leaf set.  A boundary falling on a vertex
    yields the vertex itself, once.
    """
    if s <= 0:
        raise TreeError("truncation distance must be positive")
    points = []
    for v in tree.parent:
        du = tree.depth[tree.parent[v]]
        dv = tree.depth[v]
        if abs(dv - s) <= DEPTH_TOL:
            points.append(TreePoint(v, tree.length[v]))
        elif du < s - DEPTH_TOL < dv:
            points.append(TreePoint(v, s - du))
        elif dv < s - DEPTH_TOL and not tree.children[v]:
            points.append(TreePoint(v, tree.length[v]))
    return tuple(sorted(points))


def descendant_leaves(tree: Tree, point: TreePoint) -> tuple[str, ...]:
    """Leaves of the tree lying at or below the given point."""
    return tree.subtree_leaves(point.vertex)


def restrict(tree: Tree, leaf_subset) -> Tree:
    """Restriction to a leaf subset: keep only root-to-leaf paths, merging
    suppressed degree-2 vertices with summed edge lengths."""
    subset = sorted(set(leaf_subset))
    if not subset:
        raise TreeError("leaf subset must be nonempty")
    for x in subset:
        if x not in tree.leaves:
            raise TreeError(f"unknown leaf {x}")
    kept = set()
    for x in subset:
        u = x
        while u not in kept:
            kept.add(u)
            if u == tree.root:
                break
            u = tree.parent[u]
    kept_children = {u: [c for c in tree.children[u] if c in kept]
                     for u in kept}
    selected = set(subset)
    edges = []

    def attach(parent_kept: str, v: str, acc: float):
        # follow chains of suppressed degree-2 vertices
        while len(kept_children[v]) == 1 and v not in selected:
            (w,) = kept_children[v]
            acc += tree.length[w]
            v = w
        edges.append((parent_kept, v, acc))
        for c in kept_children[v]:
            attach(v, c, tree.length[c])

    for c in kept_children[tree.root]:
        attach(tree.root, c, tree.length[c])
    return Tree(tree.root, edges)


def extract_well_spread_restriction(tree: Tree, s: float) -> Tree:
    """Restriction to one descendant leaf per boundary point of the
    truncation at ``s``; the result has spread at most s."""
    return restrict(tree, chosen_leaves(tree, s))


def chosen_leaves(tree: Tree, s: float) -> tuple[str, ...]:
    """The lexicographically smallest descendant leaf of each boundary
    point of the truncation at ``s``, sorted."""
    return tuple(sorted(descendant_leaves(tree, p)[0]
                        for p in truncate(tree, s)))


def stretch_to_height(tree: Tree, h_star: float) -> Tree:
    """Lengthen every leaf edge so all leaves sit at depth ``h_star``.
    Topology, internal lengths and shared path lengths are unchanged."""
    if h_star < tree.height - DEPTH_TOL:
        raise TreeError(f"h_star={h_star} below tree height {tree.height}")
    edges = []
    for v in tree.parent:
        ln = tree.length[v]
        if not tree.children[v]:
            ln += h_star - tree.depth[v]
        edges.append((tree.parent[v], v, ln))
    return Tree(tree.root, edges)


@dataclass
class NestedFamily:
    """An ordered list of trees sharing a root, each obtained from the
    previous by adding one leaf edge."""

    trees: list[Tree] = field(default_factory=list)

    def __len__(self):
        return len(self.trees)

    def __getitem__(self, k):
        return self.trees[k]

    def validate(self) -> list[str]:
        """Nestedness violations, one message per offending index."""
        problems = []
        for k in range(1, len(self.trees)):
            prev, cur = self.trees[k - 1], self.trees[k]
            if cur.root != prev.root:
                problems.append(f"tree {k}: root differs from tree {k - 1}")
                continue
            if len(cur.leaves) != len(prev.leaves) + 1:
                problems.append(
                    f"tree {k}: adds {len(cur.leaves) - len(prev.leaves)} "
                    "leaves instead of 1")
                continue
            if not set(prev.leaves) <= set(cur.leaves):
                problems.append(f"tree {k}: leaf set not nested")
                continue
            if restrict(cur, prev.leaves) != prev:
                problems.append(f"tree {k}: restriction to tree {k - 1} "
                                "leaves differs from it")
        return problems


def big_bang_profile(family: NestedFamily, s_grid) -> dict:
    """Boundary-point counts |bd T^k(s)| for each tree and each s, with a
    heuristic flag for scales whose count is constant over the last half
    of the family.  Diagnostic only."""
    s_grid = list(s_grid)
    if not family.trees or not s_grid:
        raise TreeError("family and grid must be nonempty")
    if any(s <= 0 for s in s_grid):
        raise TreeError("grid values must be positive")
    counts = {s: [len(truncate(t, s)) for t in family.trees] for s in s_grid}
    flagged = []
    for s in s_grid:
        tail = counts[s][len(family.trees) // 2:]
        if len(family.trees) >= 2 and len(set(tail)) == 1:
            flagged.append(s)
    return {"counts": counts, "flagged": flagged}


# ---------------------------------------------------------------------------
# family generators


def _star_family(k: int, h: float) -> NestedFamily:
    trees = []
    for n in range(1, k + 1):
        trees.append(Tree("rho", [("rho", f"L{i:04d}", h)
                                  for i in range(1, n + 1)]))
    return NestedFamily(trees)


def _pinched_star_family(m: int, s: float, h: float) -> NestedFamily:
    if not 0 < s < h:
        raise TreeError("pinched star needs 0 < s < h")
    trees = []
    for n in range(1, m + 1):
        edges = [("rho", "pinch", s)]
        edges += [("pinch", f"L{i:04d}", h - s) for i in range(1, n + 1)]
        trees.append(Tree("rho", edges))
    return NestedFamily(trees)


def _figure1_edges(k: int, h: float):
    """Spine leaf at depth h plus pendant leaves attached on the spine at
    depths 2^-1 .. 2^-k, all leaves at depth h."""
    edges = []
    # spine vertices ordered by increasing depth: v_k (2^-k) .. v_1 (2^-1)
    prev, prev_depth = "rho", 0.0
    for j in range(k, 0, -1):
        d = 2.0 ** -j
        edges.append((prev, f"v{j:04d}", d - prev_depth))
        prev, prev_depth = f"v{j:04d}", d
    edges.append((prev, "L0000", h - prev_depth))
    for j in range(1, k + 1):
        edges.append((f"v{j:04d}", f"L{j:04d}", h - 2.0 ** -j))
    return edges


def _figure1_family(k: int, h: float) -> NestedFamily:
    return NestedFamily([Tree("rho", _figure1_edges(n, h))
                         for n in range(1, k + 1)])


def _figure2_family(k: int, n_spine: int, h: float) -> NestedFamily:
    """Fixed near-root attachments plus a growing heavy subtree hanging off
    the deepest spine vertex: the truncation near the root is eventually
    constant while the leaf count grows."""
    base = _figure1_edges(n_spine, h)
    trees = []
    for n in range(1, k + 1):
        extra = [("v0001", f"K{i:04d}", h - 0.5) for i in range(1, n + 1)]
        trees.append(Tree("rho", base + extra))
    return NestedFamily(trees)


def _random_ultrametric_family(k: int, h: float, seed: int) -> NestedFamily:
    import numpy as np

    rng = np.random.default_rng(seed)
    edges = [("rho", "L0001", h)]
    trees = [Tree("rho", list(edges))]
    counter = 0
    for n in range(2, k + 1):
        tree = trees[-1]
        leaf = tree.leaves[rng.integers(len(tree.leaves))]
        d = float(rng.uniform(0.0, h))
        # locate the edge of the root->leaf path containing depth d and
        # split it there, attaching a new pendant leaf reaching depth h
        path = []
        u = leaf
        while u != "rho":
            path.append(u)
            u = tree.parent[u]
        path.reverse()
        new_edges = list(edges)
        for v in path:
            du, dv = tree.depth[tree.parent[v]], tree.depth[v]
            if du < d <= dv:
                if abs(dv - d) <= DEPTH_TOL:
                    attach = v
                else:
                    counter += 1
                    split = f"u{counter:04d}"
                    new_edges.remove((tree.parent[v], v, tree.length[v]))
                    new_edges.append((tree.parent[v], split, d - du))
                    new_edges.append((split, v, dv - d))
                    attach = split
                new_edges.append((attach, f"L{n:04d}", h - d))
                break
        edges = new_edges
        trees.append(Tree("rho", list(edges)))
    return NestedFamily(trees)


def generate_family(kind: str, params: dict, seed: int = 0) -> NestedFamily:
    """Deterministic named families.  ``kind`` is one of star, pinched_star,
    figure1, figure2, random_ultrametric."""
    p = dict(params)
    k = int(p.get("k", p.get("m", 1)))
    h = float(p.get("h", 1.0))
    if k < 1 or h <= 0:
        raise TreeError("counts must be >= 1 and lengths positive")
    if kind == "star":
        return _star_family(k, h)
    if kind == "pinched_star":
        return _pinched_star_family(k, float(p.get("s", 0.05)), h)
    if kind == "figure1":
        return _figure1_family(k, h)
    if kind == "figure2":
        return _figure2_family(k, int(p.get("n_spine", 3)), h)
    if kind == "random_ultrametric":
        return _random_ultrametric_family(k, h, seed)
    raise TreeError(f"unknown family kind {kind!r}")


# ---------------------------------------------------------------------------
# Newick I/O


def parse_newick(text: str) -> Tree:
    """Parse a Newick string with branch lengths.  Leaf names are required;
    unnamed internal vertices get generated ids."""
    text = text.strip()
    if text.endswith(";"):
        text = text[:-1]
    pos = 0
    counter = 0

    def parse_clade():
        # returns (name, length or None, list of child clades)
        nonlocal pos, counter
        kids = []
        if pos < len(text) and text[pos] == "(":
            pos += 1
            while True:
                kids.append(parse_clade())
                if pos >= len(text):
                    raise TreeError("unbalanced parentheses in newick input")
                if text[pos] == ",":
                    pos += 1
                    continue
                if text[pos] == ")":
                    pos += 1
                    break
                raise TreeError(f"newick parse error at offset {pos}")
        start = pos
        while pos < len(text) and text[pos] not in ":,()":
            pos += 1
        name = text[start:pos].strip()
        if not name:
            if not kids:
                raise TreeError("leaf without a name in newick input")
            counter += 1
            name = f"n{counter:04d}"
        ln = None
        if pos < len(text) and text[pos] == ":":
            pos += 1
            start = pos
            while pos < len(text) and text[pos] not in ",()":
                pos += 1
            ln = float(text[start:pos])
        return name, ln, kids

    top = parse_clade()
    if pos != len(text):
        raise TreeError(f"trailing newick input at offset {pos}")
    edges = []

    def collect(node):
        name, _, kids = node
        for kid in kids:
            if kid[1] is None:
                raise TreeError(f"missing branch length for {kid[0]}")
            edges.append((name, kid[0], kid[1]))
            collect(kid)

    collect(top)
    return Tree(top[0], edges)


def to_newick(tree: Tree) -> str:
    def fmt(v):
        cs = tree.children[v]
        label = v
        if cs:
            inner = ",".join(f"{fmt(c)}:{tree.length[c]:.17g}" for c in cs)
            return f"({inner}){label}"
        return label

    return fmt(tree.root) + ";"
