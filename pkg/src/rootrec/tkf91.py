"""Insertion-deletion-substitution sequence process with an immortal link.

Sequences over {A, T, C, G} are plain strings; "" is the empty sequence
consisting of the immortal link alone.  The immortal link is implicit as
position 0: it is never deleted or substituted, but it can give birth.
The stationary length law is geometric with ratio lambda/mu.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .ctmc import CtmcError, Distribution

__all__ = [
    "Tkf91Params",
    "Tkf91Process",
    "ALPHABET",
    "LENGTH_CAP",
    "tkf91_evolve",
    "stationary_sample",
    "stationary_pmf",
    "stationary_length_pmf",
    "top_states",
    "mc_rows",
    "tkf91_root_experiment",
    "write_experiment_csv",
]

ALPHABET = "ATCG"

# guard against runaway growth from misconfigured rates; with lambda < mu
# the length process is positive recurrent and never gets near this
LENGTH_CAP = 10 ** 4


@dataclass(frozen=True)
class Tkf91Params:
    """Substitution rate nu, insertion rate lam, deletion rate mu, and the
    nucleotide frequencies, all per unit time."""

    nu: float
    lam: float
    mu: float
    pi_A: float = 0.25
    pi_T: float = 0.25
    pi_C: float = 0.25
    pi_G: float = 0.25

    def __post_init__(self):
        if not (self.nu > 0 and self.lam > 0 and self.mu > 0):
            raise CtmcError("rates must be positive")
        if not self.lam < self.mu:
            raise CtmcError("lambda must be < mu")
        freqs = self.freqs
        if any(f < 0 for f in freqs):
            raise CtmcError("nucleotide frequencies must be nonnegative")
        if abs(sum(freqs) - 1.0) > 1e-12:
            raise CtmcError(f"frequencies sum to {sum(freqs)}, not 1")

    @property
    def freqs(self) -> tuple:
        return (self.pi_A, self.pi_T, self.pi_C, self.pi_G)

    @property
    def ratio(self) -> float:
        return self.lam / self.mu


def _draw_letter(params: Tkf91Params, rng) -> str:
    return ALPHABET[rng.choice(4, p=params.freqs)]


def tkf91_evolve(params: Tkf91Params, seq: str, t: float, rng) -> str:
    """Run the process from ``seq`` for duration ``t`` by exact event
    simulation.

    With current length M the total event rate is M nu + M mu + (M+1) lam:
    every ordinary site can be substituted or deleted, and every site
    including the immortal link can give birth immediately to its right.
    """
    if t < 0:
        raise CtmcError("time must be nonnegative")
    sites = list(seq)
    clock = 0.0
    while True:
        m = len(sites)
        total = m * (params.nu + params.mu) + (m + 1) * params.lam
        clock += rng.exponential(1.0 / total)
        if clock > t:
            return "".join(sites)
        u = rng.random() * total
        if u < m * params.nu:
            sites[int(u / params.nu)] = _draw_letter(params, rng)
        elif u < m * (params.nu + params.mu):
            del sites[int((u - m * params.nu) / params.mu)]
        else:
            # parent site index 0 is the immortal link; the child lands
            # immediately to the parent's right
            parent = int((u - m * (params.nu + params.mu)) / params.lam)
            sites.insert(parent, _draw_letter(params, rng))
            if len(sites) > LENGTH_CAP:
                raise CtmcError(
                    f"sequence length exceeded the cap {LENGTH_CAP}")


def stationary_sample(params: Tkf91Params, rng) -> str:
    """Draw from the stationary law: geometric length (success 1 - lam/mu,
    support 0, 1, ...) with i.i.d. letters."""
    m = int(rng.geometric(1.0 - params.ratio)) - 1
    return "".join(_draw_letter(params, rng) for _ in range(m))


def stationary_length_pmf(params: Tkf91Params, m: int) -> float:
    if m < 0:
        return 0.0
    return (1.0 - params.ratio) * params.ratio ** m


def stationary_pmf(params: Tkf91Params, seq: str) -> float:
    """Exact stationary mass of one sequence:
    (1 - lam/mu) (lam/mu)^M prod pi."""
    p = stationary_length_pmf(params, len(seq))
    for ch in seq:
        p *= params.freqs[ALPHABET.index(ch)]
    return p


def _seq_key(seq: str) -> tuple:
    return (len(seq), seq)


def top_states(params: Tkf91Params, epsilon: float,
               max_states: int = 10 ** 6) -> tuple:
    """Smallest set of highest-stationary-mass sequences whose complement
    has mass below ``epsilon``, in decreasing mass order (ties by length
    then lexicographic).

    Best-first search over the append tree: every extension of a sequence
    has strictly smaller mass, so a max-heap seeded with "" enumerates the
    whole space in mass order.
    """
    if epsilon <= 0:
        raise CtmcError("epsilon must be positive")
    heap = [(-stationary_pmf(params, ""), _seq_key(""), "")]
    out = []
    tail = 1.0
    while tail >= epsilon:
        if not heap or len(out) >= max_states:
            raise CtmcError("state enumeration exceeded max_states")
        neg, _, seq = heapq.heappop(heap)
        out.append(seq)
        tail += neg
        for ch in ALPHABET:
            child = seq + ch
            heapq.heappush(
                heap, (-stationary_pmf(params, child), _seq_key(child), child))
    return tuple(out)


class Tkf91Process:
    """GenerativeProcess over sequence space; exact rows are unavailable
    (row() returns None), so estimators use Monte Carlo plug-in rows."""

    def __init__(self, params: Tkf91Params):
        self.params = params

    def sample(self, state, duration, rng):
        return tkf91_evolve(self.params, state, duration, rng)

    def row(self, state, t):
        return None


def mc_rows(params: Tkf91Params, states, t: float, n_samples: int,
            rng) -> dict:
    """Monte Carlo plug-in time-t rows: empirical endpoint distribution of
    ``n_samples`` independent runs from each state."""
    if n_samples < 1:
        raise CtmcError("n_samples must be at least 1")
    rows = {}
    for state in states:
        counts: dict = {}
        for _ in range(n_samples):
            end = tkf91_evolve(params, state, t, rng)
            counts[end] = counts.get(end, 0) + 1
        rows[state] = Distribution({s: c / n_samples
                                    for s, c in counts.items()})
    return rows


def tkf91_root_experiment(family, params: Tkf91Params, s: float,
                          h_star: float, trials: int, master_seed: int,
                          epsilon: float = 0.3, row_samples: int = 4000,
                          ks=None) -> list:
    """Empirical root-reconstruction error per family member.

    ``ks`` selects 1-based family members (default: all).  The root is
    drawn from the stationary law, leaves are simulated down the tree, and
    the frequency-test estimator runs over the high-mass candidate set
    with Monte Carlo plug-in rows (shared across members, drawn from a
    dedicated substream).  Returns one summary dict per k.
    """
    from .bounds import wilson_interval
    from .estimators import frequency_estimate
    from .treechain import simulate

    if trials < 1:
        raise CtmcError("trials must be at least 1")
    ks = list(ks) if ks is not None else list(range(1, len(family) + 1))
    lam_set = top_states(params, epsilon)
    proc = Tkf91Process(params)
    rows = mc_rows(params, lam_set, h_star, row_samples,
                   np.random.default_rng([master_seed, 10 ** 9]))
    results = []
    for k in ks:
        tree = family[k - 1]
        errors = 0
        for t in range(trials):
            rng = np.random.default_rng([master_seed, k, t])
            truth = stationary_sample(params, rng)
            observed = simulate(tree, proc, truth, rng)
            rep = frequency_estimate(tree, proc, observed, s, h_star,
                                     lam_set, rows, rng)
            if rep.state != truth:
                errors += 1
        lo, hi = wilson_interval(errors, trials)
        results.append({"k": k, "trials": trials, "errors": errors,
                        "rate": errors / trials, "ci_low": lo, "ci_high": hi})
    return results


def write_experiment_csv(results, fh) -> None:
    fh.write("k,trials,errors,rate,ci_low,ci_high\n")
    for r in results:
        fh.write(f"{r['k']},{r['trials']},{r['errors']},"
                 f"{r['rate']:.10g},{r['ci_low']:.10g},{r['ci_high']:.10g}\n")
