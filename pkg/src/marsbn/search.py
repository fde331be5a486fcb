"""Phase two: the DAG of minimum total local score over a score cache."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import Dag, descendants
from .scoring import ScoreCache

EXACT_LIMIT = 25


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class SearchResult:
    dag: Dag
    total: float
    exact: bool
    wall_time: float
    moves: int = 0


def total_score(dag: Dag, cache: ScoreCache) -> float:
    """Sum of each node's cached local score under the DAG's parent sets."""
    if dag.n != cache.n:
        raise SearchError(f"DAG has {dag.n} nodes, cache has {cache.n}")
    total = 0.0
    for i, ps in enumerate(dag.parents):
        try:
            total += cache.lookup(i, ps)
        except KeyError:
            raise SearchError(
                f"no cached score for node {cache.names[i]} with parents "
                f"{{{', '.join(cache.names[p] for p in sorted(ps))}}}") from None
    return total


def _masks(cache: ScoreCache):
    """Per node: (parent masks, scores) sorted by score, then mask."""
    out = []
    for recs in cache.records:
        items = sorted(((r.score, sum(1 << p for p in r.parents)) for r in recs))
        out.append((np.array([m for _, m in items], dtype=np.int64),
                    np.array([s for s, _ in items], dtype=float)))
    return out


def _popcount(a: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(a).astype(np.int64)
    a = a.copy()
    c = np.zeros_like(a)
    while a.any():
        c += a & 1
        a >>= 1
    return c


def _best_local(pmasks: np.ndarray, scores: np.ndarray, U: np.ndarray) -> np.ndarray:
    out = np.full(U.shape, np.inf)
    open_ = np.ones(U.shape, dtype=bool)
    for m, s in zip(pmasks, scores):
        hit = open_ & ((U & m) == m)
        out[hit] = s
        open_ &= ~hit
        if not open_.any():
            break
    return out


def _best_local_scalar(pmasks, scores, U: int) -> tuple[float, int]:
    for m, s in zip(pmasks.tolist(), scores.tolist()):
        if U & m == m:
            return s, m
    return np.inf, -1


def search_exact(cache: ScoreCache, exact_limit: int = EXACT_LIMIT) -> SearchResult:
    """Dynamic programme over node subsets (best sink decomposition).

    best(S) = min over v in S of best(S - v) + bestLocal(v, S - v). Ties are
    resolved by choosing the smallest sink index at each backtracking step,
    which yields the lexicographically smallest optimal sink sequence.
    """
    n = cache.n
    if n > exact_limit:
        raise SearchError(f"n = {n} exceeds the exact limit {exact_limit}; use search_local")
    t0 = time.perf_counter()
    recs = _masks(cache)
    size = 1 << n
    best = np.full(size, np.inf)
    best[0] = 0.0
    allm = np.arange(size, dtype=np.int64)
    pc = _popcount(allm)
    order = np.argsort(pc, kind="stable")
    bounds = np.searchsorted(pc[order], np.arange(n + 2))
    for k in range(1, n + 1):
        layer = order[bounds[k]:bounds[k + 1]]
        acc = np.full(layer.shape, np.inf)
        for v in range(n):
            sel = ((layer >> v) & 1) == 1
            U = layer[sel] ^ (1 << v)
            cand = best[U] + _best_local(recs[v][0], recs[v][1], U)
            acc[sel] = np.minimum(acc[sel], cand)
        best[layer] = acc
    full = size - 1
    if not np.isfinite(best[full]):
        raise SearchError("no acyclic assignment of cached parent sets exists")

    parents: list[frozenset[int]] = [frozenset()] * n
    S = full
    while S:
        target = best[S]
        tol = 1e-12 * max(1.0, abs(target))
        for v in range(n):
            if not (S >> v) & 1:
                continue
            U = S ^ (1 << v)
            s, m = _best_local_scalar(recs[v][0], recs[v][1], U)
            if best[U] + s <= target + tol:
                parents[v] = frozenset(i for i in range(n) if (m >> i) & 1)
                S = U
                break
        else:  # pragma: no cover - DP table and backtrack disagree
            raise SearchError("backtracking failed")
    dag = Dag(tuple(parents))
    return SearchResult(dag, total_score(dag, cache), True, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# local search


def _admissible_start(cache: ScoreCache, order, rng=None):
    placed = set()
    choice = [0] * cache.n
    for v in order:
        ok = [i for i, r in enumerate(cache.records[v]) if r.parents <= placed]
        if not ok:
            return None
        if rng is None:
            choice[v] = min(ok, key=lambda i: cache.records[v][i].score)
        else:
            choice[v] = int(ok[rng.integers(len(ok))])
        placed.add(v)
    return choice


def _hill_climb(cache: ScoreCache, choice: list[int]):
    n = cache.n
    recs = cache.records
    parents = [set(recs[v][choice[v]].parents) for v in range(n)]
    children = [set() for _ in range(n)]
    for v in range(n):
        for p in parents[v]:
            children[p].add(v)
    moves = 0
    while True:
        best = None  # (delta, v, i)
        for v in range(n):
            cur = recs[v][choice[v]].score
            desc = None
            for i, r in enumerate(recs[v]):
                delta = r.score - cur
                if i == choice[v] or not delta < 0:
                    continue
                if best is not None and delta >= best[0]:
                    continue
                if desc is None:
                    desc = descendants(children, v)
                if r.parents & desc:
                    continue
                best = (delta, v, i)
        if best is None:
            return choice, moves
        _, v, i = best
        for p in parents[v]:
            children[p].discard(v)
        parents[v] = set(recs[v][i].parents)
        for p in parents[v]:
            children[p].add(v)
        choice[v] = i
        moves += 1


def search_local(cache: ScoreCache, restarts: int = 10, seed=0, threads: int = 1,
                 on_improve: Callable[[SearchResult], None] | None = None) -> SearchResult:
    """Steepest-descent hill climbing over cached parent-set records, with restarts.

    A move replaces one node's parent set by another of its cached records when
    that lowers the total and keeps the graph acyclic. Restart 0 starts from a
    greedy assignment in index order; later restarts start from random acyclic
    assignments.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    t0 = time.perf_counter()
    seqs = np.random.SeedSequence(seed).spawn(restarts)

    def run(r):
        if r == 0:
            start = _admissible_start(cache, range(cache.n))
        else:
            start = None
        rng = np.random.default_rng(seqs[r])
        tries = 0
        while start is None:
            start = _admissible_start(cache, rng.permutation(cache.n), rng)
            tries += 1
            if start is None and tries > 1000:
                raise SearchError("could not find an acyclic starting assignment")
        choice, moves = _hill_climb(cache, list(start))
        dag = Dag(tuple(cache.records[v][choice[v]].parents for v in range(cache.n)))
        return SearchResult(dag, total_score(dag, cache), False, 0.0, moves)

    incumbent = None

    def consider(res):
        nonlocal incumbent
        if incumbent is None or res.total < incumbent.total:
            incumbent = res
            if on_improve is not None:
                on_improve(SearchResult(res.dag, res.total, False, time.perf_counter() - t0, res.moves))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            for res in ex.map(run, range(restarts)):
                consider(res)
    else:
        for r in range(restarts):
            consider(run(r))
    return SearchResult(incumbent.dag, incumbent.total, False, time.perf_counter() - t0, incumbent.moves)


def learn_dag(cache: ScoreCache, exact_limit: int = EXACT_LIMIT, heuristic: bool = False,
              restarts: int = 10, seed=0, threads: int = 1) -> SearchResult:
    if not heuristic and cache.n <= exact_limit:
        return search_exact(cache, exact_limit)
    return search_local(cache, restarts, seed, threads)
