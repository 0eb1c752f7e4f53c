"""Root-state estimators.

Exact and restricted maximum a posteriori estimation, the frequency-test
estimator on stretched well-spread restrictions, its data-driven variant
for chains with uniformly bounded rates, and the two-state majority vote.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

from .ctmc import Distribution, total_variation, tv_achieving_set, _label_key
from .tree import Tree, chosen_leaves, restrict, spread
from .treechain import _as_process

__all__ = [
    "EstimatorError",
    "EstimatorReport",
    "RowTable",
    "map_estimate",
    "restricted_map_estimate",
    "frequency_estimate",
    "uniform_chain_estimate",
    "majority_estimate",
    "lambda_epsilon",
    "exclusivity_stats",
]

DURATION_TOL = 1e-12

# suite-wide tally of frequency-test invocations and of violations of the
# at-most-one-passing-state guarantee (expected to stay at zero)
_EXCLUSIVITY = {"invocations": 0, "violations": 0}


def exclusivity_stats() -> dict:
    return dict(_EXCLUSIVITY)


class EstimatorError(ValueError):
    pass


@dataclass
class EstimatorReport:
    """Outcome of one frequency-test estimation."""

    state: object
    fallback: bool
    s: float
    m: int
    spread: float
    lam: tuple
    passed: tuple
    margins: dict = field(default_factory=dict)


class RowTable:
    """Time-h* transition rows for a set of states, with cached pairwise
    total variation distances, achieving sets, and set masses."""

    def __init__(self, rows: dict):
        self.rows = dict(rows)
        self._tv: dict = {}
        self._sets: dict = {}
        self._masses: dict = {}

    def states(self):
        return self.rows.keys()

    def row(self, i) -> Distribution:
        return self.rows[i]

    def tv(self, i, j) -> float:
        key = (i, j) if _label_key(i) < _label_key(j) else (j, i)
        v = self._tv.get(key)
        if v is None:
            v = total_variation(self.rows[i], self.rows[j])
            self._tv[key] = v
        return v

    def delta(self, lam) -> float:
        """Minimum pairwise TV over a state subset; +inf for singletons."""
        lam = list(lam)
        best = math.inf
        for a in range(len(lam)):
            for b in range(a + 1, len(lam)):
                best = min(best, self.tv(lam[a], lam[b]))
        return best

    def achieving(self, i, j):
        key = (i, j)
        v = self._sets.get(key)
        if v is None:
            v = tv_achieving_set(self.rows[i], self.rows[j], (i, j))
            self._sets[key] = v
        return v

    def threshold_mass(self, i, j) -> float:
        """Mass of row i on the achieving set for the ordered pair (i, j)."""
        key = (i, j)
        v = self._masses.get(key)
        if v is None:
            v = self.achieving(i, j).mass_under(self.rows[i])
            self._masses[key] = v
        return v


def _as_row_table(rows) -> RowTable:
    return rows if isinstance(rows, RowTable) else RowTable(rows)


# ---------------------------------------------------------------------------
# maximum a posteriori


def _posterior_argmax(laws: dict, prior: Distribution, observed: dict,
                      candidates, allow_zero: bool) -> object:
    best_state, best_w = None, -1.0
    for i in sorted(candidates, key=_label_key):
        law = laws[i]
        w = prior.mass(i) * law.mass(law.outcome_of(observed))
        if w > best_w:
            best_state, best_w = i, w
    if best_w <= 0.0 and not allow_zero:
        raise EstimatorError("observation impossible under every root state")
    return best_state


def map_estimate(laws: dict, prior: Distribution, observed: dict) -> object:
    """Posterior argmax over root states; ties go to the smallest label."""
    return _posterior_argmax(laws, prior, observed, laws.keys(),
                             allow_zero=False)


def restricted_map_estimate(laws: dict, prior: Distribution, observed: dict,
                            lam) -> object:
    """Posterior argmax restricted to the state subset ``lam``.  When the
    observation is impossible under all of ``lam`` the smallest label is
    returned (the restricted argmax is then a free choice)."""
    lam = list(lam)
    if not lam:
        raise EstimatorError("state subset must be nonempty")
    return _posterior_argmax(laws, prior, observed, lam, allow_zero=True)


def lambda_epsilon(prior: Distribution, epsilon: float) -> tuple:
    """High-prior state set: the shortest label-ordered prefix whose
    complement has prior mass below epsilon."""
    if epsilon <= 0:
        raise EstimatorError("epsilon must be positive")
    states = sorted(prior.support, key=_label_key)
    tail = 1.0
    out = []
    for s in states:
        if tail < epsilon:
            break
        out.append(s)
        tail -= prior.mass(s)
    return tuple(out)


# ---------------------------------------------------------------------------
# frequency-test estimators


@dataclass(frozen=True)
class _StretchPlan:
    s: float
    h_star: float
    m: int
    spread: float
    leaves: tuple
    durations: tuple


@lru_cache(maxsize=128)
def _stretch_plan(tree: Tree, s: float, h_star: float) -> _StretchPlan:
    leaves = chosen_leaves(tree, s)
    m = len(leaves)
    if m == 0:
        raise EstimatorError(f"truncation at s={s} has no boundary points")
    spr = spread(restrict(tree, leaves)) if m >= 2 else 0.0
    durations = []
    for x in leaves:
        d = h_star - tree.depth[x]
        if d < -DURATION_TOL:
            raise EstimatorError(f"h_star={h_star} below depth of leaf {x}")
        durations.append(max(d, 0.0))
    return _StretchPlan(s, h_star, m, spr, leaves, tuple(durations))


def _stretched_counts(plan: _StretchPlan, process, observed: dict,
                      rng) -> Counter:
    """Leaf-state frequencies of the stretched restriction: the selected
    leaves' observed states, each run forward to depth h*."""
    proc = _as_process(process)
    counts: Counter = Counter()
    for leaf, dur in zip(plan.leaves, plan.durations):
        state = observed[leaf]
        if dur > DURATION_TOL:
            state = proc.sample(state, dur, rng)
        counts[state] += 1
    return counts


def _run_tests(plan: _StretchPlan, counts: Counter, lam, table: RowTable,
               rng) -> EstimatorReport:
    lam = sorted(lam, key=_label_key)
    m = plan.m
    if len(lam) == 1:
        return EstimatorReport(state=lam[0], fallback=False, s=plan.s, m=m,
                               spread=plan.spread, lam=tuple(lam),
                               passed=tuple(lam))
    delta = table.delta(lam)
    passed = []
    margins: dict = {}
    _EXCLUSIVITY["invocations"] += 1
    for i in lam:
        ok = True
        for j in lam:
            if j == i:
                continue
            aset = table.achieving(i, j)
            freq = sum(c for st, c in counts.items() if st in aset) / m
            margin = freq - (table.threshold_mass(i, j) - delta / 2.0)
            if margin <= 0.0:
                ok = False
                break
        if ok:
            passed.append(i)
            for j in lam:
                if j == i:
                    continue
                aset = table.achieving(i, j)
                freq = sum(c for st, c in counts.items() if st in aset) / m
                margins[(i, j)] = freq - (table.threshold_mass(i, j)
                                          - delta / 2.0)
    if len(passed) > 1:
        _EXCLUSIVITY["violations"] += 1
        raise AssertionError(
            f"multiple states passed the frequency tests: {passed}")
    if passed:
        return EstimatorReport(state=passed[0], fallback=False, s=plan.s,
                               m=m, spread=plan.spread, lam=tuple(lam),
                               passed=tuple(passed), margins=margins)
    choice = lam[rng.integers(len(lam))]
    return EstimatorReport(state=choice, fallback=True, s=plan.s, m=m,
                           spread=plan.spread, lam=tuple(lam), passed=())


def frequency_estimate(tree: Tree, process, observed: dict, s: float,
                       h_star: float, lam, rows, rng) -> EstimatorReport:
    """Frequency-test root estimate on the stretched restriction at scale s.

    ``rows`` maps each state of ``lam`` to its time-h* distribution (exact
    rows for finite chains, Monte Carlo plug-in rows otherwise).  The unique
    state whose achieving-set frequencies all clear their thresholds is
    returned; absent one, a uniform random member of ``lam`` is returned
    with the fallback flag set.
    """
    lam = list(lam)
    if not lam:
        raise EstimatorError("state subset must be nonempty")
    plan = _stretch_plan(tree, s, h_star)
    table = _as_row_table(rows)
    counts = _stretched_counts(plan, process, observed, rng)
    return _run_tests(plan, counts, lam, table, rng)


def uniform_chain_estimate(tree: Tree, process, observed: dict, s: float,
                           h_star: float, q_star: float, rows_provider,
                           rng) -> EstimatorReport:
    """Frequency-test estimate with the data-driven candidate set for
    chains whose rates are bounded by ``q_star``: candidates are the states
    whose stretched-restriction frequency reaches half of e^(-q* h*)."""
    if q_star < 1.0:
        raise EstimatorError("q_star must be at least 1")
    f_star = math.exp(-q_star * h_star)
    plan = _stretch_plan(tree, s, h_star)
    counts = _stretched_counts(plan, process, observed, rng)
    lam_hat = sorted((st for st, c in counts.items()
                      if c / plan.m >= 0.5 * f_star), key=_label_key)
    if not lam_hat:
        observed_states = sorted(set(counts), key=_label_key)
        choice = observed_states[rng.integers(len(observed_states))]
        return EstimatorReport(state=choice, fallback=True, s=s, m=plan.m,
                               spread=plan.spread, lam=(), passed=())
    table = _as_row_table(rows_provider(lam_hat))
    return _run_tests(plan, counts, lam_hat, table, rng)


def majority_estimate(observed: dict) -> int:
    """Majority vote over a two-state leaf assignment; requires an odd
    number of leaves."""
    m = len(observed)
    if m % 2 == 0:
        raise EstimatorError("majority vote needs an odd leaf count")
    bad = set(observed.values()) - {1, 2}
    if bad:
        raise EstimatorError(f"majority vote is two-state only, got {bad}")
    n1 = sum(1 for v in observed.values() if v == 1)
    return 1 if n1 > m / 2 else 2


def write_report_csv(reports, fh) -> None:
    """Per-trial estimator reports: trial id, truth, estimate, fallback,
    worst margin."""
    fh.write("trial,true_root,estimate,fallback,min_margin\n")
    for t, (truth, rep) in enumerate(reports):
        margin = min(rep.margins.values()) if rep.margins else ""
        fh.write(f"{t},{truth},{rep.state},{int(rep.fallback)},{margin}\n")
