"""The Markov chain propagated down a tree.

Forward simulation of leaf states (single realization for any generative
process, vectorized batches for finite chains) and exact leaf-distribution
computation on small trees, which serves as the brute-force oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctmc import (CtmcError, Distribution, FiniteChainProcess, RateMatrix,
                   total_variation, transition_matrix)
from .tree import Tree

__all__ = [
    "LeafLaw",
    "simulate",
    "simulate_batch",
    "exact_leaf_law",
    "exact_leaf_tv",
    "write_assignment_csv",
]

SIZE_GUARD = 10 ** 6


@dataclass(frozen=True)
class LeafLaw:
    """Sparse joint distribution of the leaf states of one tree.

    Outcomes are tuples of states in ``leaf_order``.
    """

    leaf_order: tuple
    probs: dict

    def mass(self, outcome) -> float:
        return self.probs.get(tuple(outcome), 0.0)

    def outcome_of(self, assignment: dict) -> tuple:
        return tuple(assignment[x] for x in self.leaf_order)

    def total(self) -> float:
        return sum(self.probs.values())

    def as_distribution(self) -> Distribution:
        return Distribution(self.probs)


def _as_process(process):
    if isinstance(process, RateMatrix):
        return FiniteChainProcess(process)
    return process


def simulate(tree: Tree, process, root_state, rng) -> dict:
    """One realization of the chain on the tree; returns leaf id -> state.

    Sibling subtrees evolve independently given the parent state.
    """
    proc = _as_process(process)
    states = {tree.root: root_state}
    for v in tree.topo_order:
        if v == tree.root:
            continue
        states[v] = proc.sample(states[tree.parent[v]], tree.length[v], rng)
    return {x: states[x] for x in tree.leaves}


def simulate_batch(tree: Tree, Q: RateMatrix, root_state: int, n: int,
                   rng) -> np.ndarray:
    """``n`` independent realizations of a finite chain on the tree.

    Returns an (n, len(leaves)) int array in ``tree.leaves`` order.  Edge
    transitions are drawn from cached transition-matrix rows, vectorized
    over trials, so large trial counts stay cheap.
    """
    cum = {}

    def cum_rows(t):
        c = cum.get(t)
        if c is None:
            c = np.cumsum(transition_matrix(Q, t), axis=1)
            cum[t] = c
        return c

    states = {tree.root: np.full(n, root_state, dtype=np.int64)}
    for v in tree.topo_order:
        if v == tree.root:
            continue
        c = cum_rows(tree.length[v])
        parent = states[tree.parent[v]]
        u = rng.random(n)
        out = np.empty(n, dtype=np.int64)
        for s in np.unique(parent):
            mask = parent == s
            out[mask] = np.searchsorted(c[s - 1], u[mask], side="right") + 1
        states[v] = np.minimum(out, Q.n)
    return np.column_stack([states[x] for x in tree.leaves])


def exact_leaf_law(tree: Tree, Q: RateMatrix, root_state: int) -> LeafLaw:
    """Exact joint leaf distribution by dynamic programming over the tree:
    sum over internal states, product over edges."""
    n_out = Q.n ** len(tree.leaves)
    if n_out > SIZE_GUARD:
        raise CtmcError(
            f"{Q.n}^{len(tree.leaves)} outcomes exceeds the size guard")
    P = {}

    def trans(t):
        m = P.get(t)
        if m is None:
            m = transition_matrix(Q, t)
            P[t] = m
        return m

    cache: dict = {}

    def law_below(v: str, state: int) -> dict:
        # joint law of the leaves under v given state at v, keyed by
        # tuples over those leaves in DFS order
        key = (v, state)
        hit = cache.get(key)
        if hit is not None:
            return hit
        if not tree.children[v]:
            out = {(state,): 1.0}
        else:
            out = {(): 1.0}
            for c in tree.children[v]:
                row = trans(tree.length[c])[state - 1]
                mixed: dict = {}
                for y in range(1, Q.n + 1):
                    p = row[y - 1]
                    if p == 0.0:
                        continue
                    for tup, pr in law_below(c, y).items():
                        mixed[tup] = mixed.get(tup, 0.0) + p * pr
                out = {ta + tb: pa * pb
                       for ta, pa in out.items()
                       for tb, pb in mixed.items()}
        cache[key] = out
        return out

    def dfs_leaves(v):
        if not tree.children[v]:
            return [v]
        return [x for c in tree.children[v] for x in dfs_leaves(c)]

    raw = law_below(tree.root, root_state)
    # permute outcomes from DFS order to the sorted global leaf order
    dfs = dfs_leaves(tree.root)
    perm = [dfs.index(x) for x in tree.leaves]
    probs: dict = {}
    for tup, p in raw.items():
        if p > 0.0:
            key = tuple(tup[i] for i in perm)
            probs[key] = probs.get(key, 0.0) + p
    law = LeafLaw(tuple(tree.leaves), probs)
    if abs(law.total() - 1.0) > 1e-10:
        raise CtmcError(f"leaf law mass {law.total()} drifted from 1")
    return law


def exact_leaf_tv(tree: Tree, Q: RateMatrix, i: int, j: int) -> float:
    """Total variation between the exact leaf laws for root states i and j."""
    if i == j:
        return 0.0
    a = exact_leaf_law(tree, Q, i)
    b = exact_leaf_law(tree, Q, j)
    return total_variation(a.as_distribution(), b.as_distribution())


def write_assignment_csv(assignment: dict, fh) -> None:
    fh.write("leaf,state\n")
    for leaf in sorted(assignment):
        fh.write(f"{leaf},{assignment[leaf]}\n")
