"""Edge-consistency decisions for belief machines.

An edge (source belief, observation, target belief) is consistent at level
``lam`` when every belief within L1 distance lam of the source maps, after
one belief step, to within lam of the target. Consistency is decided by
showing the refutation system infeasible:

    exists b in the simplex with
        ||b - b_src||_1 <= lam,  sum_i alpha_i b_i > 0,
        sum_j |e_j(b)| > lam * sum_i alpha_i b_i,

where e_j(b) = sum_i T_ij alpha_i b_i - b_tgt_j * sum_i alpha_i b_i clears
the Bayes denominator, making everything piecewise linear in b.

Two exact decision procedures are provided:

* ``lp``: one small LP per sign pattern of (e_1..e_n). Within a pattern's
  region the refutation objective sum_j s_j e_j - lam * alpha.b is linear,
  so a positive optimum in any pattern witnesses refutation and all-pattern
  failure proves consistency. Patterns are visited nearest-first to the sign
  pattern at the source belief so refuted edges exit early.
* ``vertex``: the objective is convex in b, hence maximized at a vertex of
  the feasible polytope; the polytope's vertices are enumerated in closed
  form and the objective evaluated directly. Orders of magnitude faster for
  large policy counts; the two methods agree away from the decision
  threshold (see tests).

Strict inequalities are realized as optimum > DELTA_STRICT: LP solvers
decide closed systems, and positive slack witnesses the open one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .belief import ZERO_DENOM, normalize, tv_distance
from .game import GameInstance, Observation, SwitchModel

DELTA_STRICT = 1e-9
_CACHE_ROUND = 12  # decimals used for verdict-cache keys
_HIGHS_OPTS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


def per_policy_margin(n_policies: int, per_component: float = 2.25e-3) -> float:
    """Decision margin that ignores refutations totalling less than
    `per_component` of violation per policy.

    The refutation objective aggregates one cleared-denominator error term
    per policy, so a fixed per-component tolerance scales linearly with the
    policy count. Synthesis under this margin trades worst-case ball
    guarantees for considerably smaller machines whose *reachable* tracking
    error stays well inside the budget on the bundled benchmarks; the
    strict default (DELTA_STRICT) keeps every edge exactly consistent.
    """
    return per_component * n_policies


class LPBackendError(RuntimeError):
    """The LP solver failed; the verdict is unknown, never silently consistent."""


@dataclass(frozen=True)
class EdgeQuery:
    """One candidate edge plus the data needed to decide its consistency."""

    source_belief: np.ndarray
    target_belief: np.ndarray
    observation: Observation
    lam: float
    alphas: np.ndarray
    switch: SwitchModel

    def __post_init__(self):
        n = len(self.source_belief)
        if len(self.target_belief) != n or len(self.alphas) != n \
                or self.switch.matrix.shape != (n, n):
            raise ValueError("edge query dimensions disagree")
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if (self.alphas < 0).any() or (self.alphas > 1).any():
            raise ValueError("alphas must lie in [0, 1]")
        if self.alphas.max() <= 0:
            raise ValueError("observation has zero probability under every policy")

    @classmethod
    def from_instance(cls, instance: GameInstance, source_belief, obs: Observation,
                      target_belief, lam: float) -> "EdgeQuery":
        return cls(np.asarray(source_belief, dtype=float),
                   np.asarray(target_belief, dtype=float),
                   obs, float(lam), instance.alphas(obs).astype(float),
                   instance.switch)

    @property
    def n(self):
        return len(self.source_belief)

    def cache_key(self):
        return (np.round(self.source_belief, _CACHE_ROUND).tobytes(),
                np.round(self.target_belief, _CACHE_ROUND).tobytes(),
                np.round(self.alphas, _CACHE_ROUND).tobytes(),
                np.round(self.switch.matrix, _CACHE_ROUND).tobytes(),
                round(self.lam, _CACHE_ROUND))


@dataclass(frozen=True)
class Verdict:
    consistent: bool
    witness: np.ndarray | None = None
    pre_distance: float | None = None
    post_distance: float | None = None

    def __bool__(self):
        return self.consistent


def _error_matrix(q: EdgeQuery) -> np.ndarray:
    """E with e_j(b) = (E @ b)_j, linear in b."""
    return q.switch.matrix.T * q.alphas[None, :] - np.outer(q.target_belief, q.alphas)


def evaluate_candidate(q: EdgeQuery, b: np.ndarray):
    """Re-evaluate a belief against the query: (pre, post, alpha_mass).

    post is None when the observation has zero probability under b.
    """
    b = np.asarray(b, dtype=float)
    pre = tv_distance(b, q.source_belief)
    w = q.alphas * b
    mass = float(w.sum())
    if mass < ZERO_DENOM:
        return pre, None, mass
    shifted = normalize(q.switch.matrix.T @ (w / mass))
    return pre, tv_distance(shifted, q.target_belief), mass


def _refuted_verdict(q, witness):
    witness = normalize(np.clip(witness, 0.0, None))
    pre, post, _ = evaluate_candidate(q, witness)
    return Verdict(False, witness=witness, pre_distance=pre, post_distance=post)


def feasible_vertices(q_or_belief, lam=None) -> np.ndarray:
    """Vertices of {b >= 0, sum b = 1, ||b - center||_1 <= lam}.

    Every vertex of this polytope moves at most two coordinates off
    {0, center_j}: one up by lam/2 and one down by the remaining budget after
    a (possibly empty) set of small coordinates is zeroed out. Simplex
    corners inside the ball complete the set.
    """
    if lam is None:
        center = np.asarray(q_or_belief.source_belief, dtype=float)
        lam = q_or_belief.lam
    else:
        center = np.asarray(q_or_belief, dtype=float)
    n = len(center)
    half = lam / 2.0
    tiny = 1e-12

    smalls = [j for j in range(n) if center[j] <= half + tiny]
    if len(smalls) > 20:
        raise ValueError("too many near-zero coordinates for vertex enumeration")
    zero_sets = [(frozenset(), 0.0)]
    for j in smalls:
        zero_sets += [(zs | {j}, z + center[j]) for zs, z in zero_sets
                      if z + center[j] <= half + tiny]
        if len(zero_sets) > 200_000:
            raise ValueError("vertex enumeration blow-up")

    seen = set()
    out = []

    def emit(b):
        if (b < -tiny).any():
            return
        key = tuple(np.round(b, 12))
        if key not in seen:
            seen.add(key)
            out.append(np.clip(b, 0.0, None))

    for zs, z in zero_sets:
        rest = [j for j in range(n) if j not in zs]
        down = z - half  # mass change of the decreasing coordinate, <= 0
        for i in rest:
            for k in rest:
                if i == k:
                    continue
                if center[k] + down < -tiny:
                    continue
                b = center.copy()
                for j in zs:
                    b[j] = 0.0
                b[i] += half
                b[k] += down
                emit(b)
    for i in range(n):
        corner = np.zeros(n)
        corner[i] = 1.0
        if np.abs(corner - center).sum() <= lam + tiny:
            emit(corner)
    if not out:  # lam == 0 would be rejected upstream; keep the center anyway
        emit(center.copy())
    return np.array(out)


def _objective_at(q: EdgeQuery, B: np.ndarray) -> np.ndarray:
    """Refutation objective sum_j |e_j(b)| - lam * alpha.b, rows of B."""
    w = B * q.alphas[None, :]
    denom = w.sum(axis=1)
    e = w @ q.switch.matrix - denom[:, None] * q.target_belief[None, :]
    return np.abs(e).sum(axis=1) - q.lam * denom


def _vertex_refute(q: EdgeQuery, delta: float) -> Verdict:
    verts = feasible_vertices(q)
    vals = _objective_at(q, verts)
    best = int(np.argmax(vals))
    if vals[best] > delta:
        return _refuted_verdict(q, verts[best])
    return Verdict(True)


def _lp_refute(q: EdgeQuery, delta: float) -> Verdict:
    n = q.n
    bm = q.source_belief
    E = _error_matrix(q)

    e0 = E @ bm
    base = e0 >= 0  # greedy sign guess at the source belief
    # Bound each e_j over the (relaxed) feasible set to rule out sign patterns
    # whose region is provably empty.
    spread = (E.max(axis=1) - E.min(axis=1)) * (q.lam / 2.0)
    lo, hi = e0 - spread, e0 + spread
    forced = np.zeros(n, dtype=int)  # +1 / -1 when the sign is forced, else 0
    forced[lo > 0] = 1
    forced[hi < 0] = -1
    free = np.flatnonzero(forced == 0)

    # Static LP pieces over variables [b (n), x (n)].
    A_eq = np.zeros((1, 2 * n))
    A_eq[0, :n] = 1.0
    rows, rhs = [], []
    for i in range(n):
        r = np.zeros(2 * n)
        r[i], r[n + i] = 1.0, -1.0
        rows.append(r)
        rhs.append(bm[i])
        r = np.zeros(2 * n)
        r[i], r[n + i] = -1.0, -1.0
        rows.append(r)
        rhs.append(-bm[i])
    budget = np.zeros(2 * n)
    budget[n:] = 1.0
    rows.append(budget)
    rhs.append(q.lam)
    A_static = np.array(rows)
    b_static = np.array(rhs)
    bounds = [(0.0, 1.0)] * n + [(0.0, q.lam)] * n

    masks = sorted(range(1 << len(free)), key=lambda m: m.bit_count())
    signs = np.where(base, 1.0, -1.0)
    signs[forced != 0] = forced[forced != 0]

    for mask in masks:
        s = signs.copy()
        for pos, j in enumerate(free):
            if mask >> pos & 1:
                s[j] = -s[j]
        sign_rows = np.zeros((n, 2 * n))
        sign_rows[:, :n] = -s[:, None] * E
        c = np.zeros(2 * n)
        c[:n] = -(s @ E - q.lam * q.alphas)  # minimize the negated objective
        res = linprog(c, A_ub=np.vstack([A_static, sign_rows]),
                      b_ub=np.concatenate([b_static, np.zeros(n)]),
                      A_eq=A_eq, b_eq=[1.0], bounds=bounds,
                      method="highs", options=_HIGHS_OPTS)
        if res.status == 2:  # this sign region is empty
            continue
        if res.status != 0:
            raise LPBackendError(
                f"LP solver status {res.status} ({res.message}) on edge {q.observation}")
        if -res.fun > delta:
            return _refuted_verdict(q, res.x[:n])
    return Verdict(True)


def check_edge(q: EdgeQuery, method: str = "lp", delta: float = DELTA_STRICT) -> Verdict:
    """Decide edge consistency; Refuted verdicts carry a witness belief.

    A positive refutation optimum forces sum_i alpha_i b_i > 0 on its own:
    zero observation mass zeroes every e_j and the whole objective.
    """
    if method == "vertex":
        try:
            return _vertex_refute(q, delta)
        except ValueError:
            return _lp_refute(q, delta)
    if method == "lp":
        return _lp_refute(q, delta)
    raise ValueError(f"unknown method {method!r}")


class EdgeChecker:
    """Caching front-end for check_edge.

    Synthesis re-checks many identical edges; verdicts are memoized on the
    rounded query data. Correctness never depends on a cache hit.
    """

    def __init__(self, method: str = "lp", delta: float = DELTA_STRICT):
        self.method = method
        self.delta = delta
        self.checks = 0
        self.cache_hits = 0
        self._cache = {}

    def check(self, q: EdgeQuery) -> Verdict:
        self.checks += 1
        key = q.cache_key()
        hit = self._cache.get(key)
        if hit is not None:
            self.cache_hits += 1
            return hit
        verdict = check_edge(q, method=self.method, delta=self.delta)
        self._cache[key] = verdict
        return verdict


def brute_force_refute(q: EdgeQuery, samples: int, seed: int) -> np.ndarray | None:
    """Sampling refuter: a found witness proves refutation, absence proves nothing.

    Checks the feasible polytope's vertices (for small policy counts) and
    Dirichlet proposals pulled into the L1 ball around the source belief.
    """
    if samples < 1:
        raise ValueError("need at least one sample")

    def violates(b):
        pre, post, mass = evaluate_candidate(q, b)
        return post is not None and pre <= q.lam + 1e-12 and post > q.lam

    if q.n <= 4:
        for v in feasible_vertices(q):
            if violates(v):
                return v
    rng = np.random.default_rng(seed)
    bm = q.source_belief
    proposals = rng.dirichlet(np.ones(q.n), size=samples)
    d = proposals - bm[None, :]
    norms = np.abs(d).sum(axis=1)
    scale = np.minimum(1.0, q.lam / np.maximum(norms, 1e-300))
    pulled = bm[None, :] + scale[:, None] * d
    for b in pulled:
        if violates(b):
            return b
    return None
