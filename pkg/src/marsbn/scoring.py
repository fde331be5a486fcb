"""Phase one: local GCV scores for forest-filtered candidate parent sets.

Scores are collected per child in a :class:`ScoreCache` and can be exchanged
with external solvers through the GOBNILP local-score text format, where
scores are negated because those solvers maximise.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .dataset import Dataset
from .forest import ForestConfig, filter_candidates
from .mars import FitConfig, fit_mars

log = logging.getLogger(__name__)

DEFAULT_TIME_LIMIT = 60.0


class ScoreFileError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreRecord:
    child: int
    parents: frozenset[int]
    score: float

    def __post_init__(self):
        object.__setattr__(self, "parents", frozenset(int(p) for p in self.parents))
        if self.child in self.parents:
            raise ValueError("child cannot be in its own parent set")


@dataclass(frozen=True)
class ScoreCache:
    names: tuple[str, ...]
    records: tuple[tuple[ScoreRecord, ...], ...]
    candidates: tuple[tuple[int, ...], ...] = ()
    timed_out: tuple[bool, ...] = ()
    dataset_hash: str = ""
    config: str = ""

    def __post_init__(self):
        n = len(self.names)
        if len(self.records) != n:
            raise ValueError("need one record list per variable")
        for c, recs in enumerate(self.records):
            seen = set()
            for r in recs:
                if r.child != c:
                    raise ValueError(f"record for child {r.child} filed under {c}")
                if r.parents in seen:
                    raise ValueError(f"duplicate parent set {sorted(r.parents)} for child {c}")
                if any(not 0 <= p < n for p in r.parents):
                    raise ValueError(f"parent index out of range for child {c}")
                seen.add(r.parents)
        if not self.candidates:
            object.__setattr__(self, "candidates", tuple(() for _ in range(n)))
        if not self.timed_out:
            object.__setattr__(self, "timed_out", tuple(False for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.names)

    def lookup(self, child: int, parents) -> float:
        ps = frozenset(parents)
        for r in self.records[child]:
            if r.parents == ps:
                return r.score
        raise KeyError((child, tuple(sorted(ps))))

    def best(self, child: int) -> ScoreRecord:
        return min(self.records[child], key=lambda r: (r.score, len(r.parents), sorted(r.parents)))

    def with_records(self, records) -> "ScoreCache":
        return ScoreCache(self.names, tuple(tuple(r) for r in records), self.candidates,
                          self.timed_out, self.dataset_hash, self.config)

    def equals(self, other: "ScoreCache", tol: float = 0.0) -> bool:
        if self.names != other.names:
            return False
        for a, b in zip(self.records, other.records):
            if len(a) != len(b):
                return False
            for ra, rb in zip(a, b):
                if ra.parents != rb.parents:
                    return False
                if ra.score != rb.score and not abs(ra.score - rb.score) <= tol:
                    return False
        return True


def subsets_by_size(candidates: Sequence[int]):
    """Subsets in size-major order, lexicographic in candidate order within a size."""
    for k in range(len(candidates) + 1):
        yield from itertools.combinations(candidates, k)


def score_child(data: Dataset, child: int, lam: int, fit_cfg: FitConfig | None = None,
                forest_cfg: ForestConfig | None = None, time_limit: float = DEFAULT_TIME_LIMIT,
                clock: Callable[[], float] = time.monotonic):
    """Score one child's candidate subsets; returns (candidates, records, timed_out)."""
    fit_cfg = fit_cfg or FitConfig()
    start = clock()
    cands = filter_candidates(child, data, lam, forest_cfg)
    records = []
    timed_out = False
    total = 2 ** len(cands)
    for i, subset in enumerate(subsets_by_size(cands)):
        model = fit_mars(child, subset, data, fit_cfg)
        records.append(ScoreRecord(child, frozenset(subset), model.gcv))
        if i + 1 < total and clock() - start >= time_limit:
            timed_out = True
            log.info("time limit reached for %s after %d of %d parent sets",
                     data.metas[child].name, i + 1, total)
            break
    return cands, tuple(records), timed_out


def score_all_variables(data: Dataset, lam: int = 5, fit_cfg: FitConfig | None = None,
                        forest_cfg: ForestConfig | None = None,
                        time_limit_per_var: float = DEFAULT_TIME_LIMIT, threads: int = 1) -> ScoreCache:
    if not 1 <= lam < data.n:
        raise ValueError(f"lambda must satisfy 1 <= lambda < n (= {data.n}); got {lam}")
    if not time_limit_per_var > 0:
        raise ValueError("time limit must be positive")
    fit_cfg = fit_cfg or FitConfig()
    forest_cfg = forest_cfg or ForestConfig()

    def work(child):
        return score_child(data, child, lam, fit_cfg, forest_cfg, time_limit_per_var)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, range(data.n)))
    else:
        results = [work(c) for c in range(data.n)]
    cfg_text = describe_config(lam, fit_cfg, forest_cfg, time_limit_per_var)
    return ScoreCache(tuple(data.names), tuple(r[1] for r in results), tuple(r[0] for r in results),
                      tuple(r[2] for r in results), data.fingerprint(), cfg_text)


def describe_config(lam, fit_cfg: FitConfig, forest_cfg: ForestConfig, time_limit) -> str:
    parts = [f"lambda={lam}", f"time_limit={time_limit:g}"]
    parts += [f"{k}={v}" for k, v in vars(fit_cfg).items()]
    parts += [f"forest_{k}={v}" for k, v in vars(forest_cfg).items()]
    return " ".join(parts)


def prune_dominated(cache: ScoreCache) -> ScoreCache:
    """Drop (c, P, s) whenever some cached (c, P', s') has P' a proper subset of P and s' <= s."""
    kept = []
    for recs in cache.records:
        keep = [r for r in recs
                if not any(o.parents < r.parents and o.score <= r.score for o in recs)]
        kept.append(keep)
    return cache.with_records(kept)


# ---------------------------------------------------------------------------
# GOBNILP-style local score files


def _fmt_score(x: float) -> str:
    if x == 0:
        return "0.0"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.12g}"
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def format_score_file(cache: ScoreCache) -> str:
    lines = ["# local scores: negated GCV (larger is better); internal scores are minimised"]
    if cache.dataset_hash:
        lines.append(f"# dataset_hash: {cache.dataset_hash}")
    if cache.config:
        lines.append(f"# config: {cache.config}")
    out = [x for x in cache.timed_out]
    if any(out):
        lines.append("# timed_out: " + " ".join(cache.names[i] for i, t in enumerate(out) if t))
    for i, cands in enumerate(cache.candidates):
        if cands:
            lines.append(f"# candidates {cache.names[i]}: " + " ".join(cache.names[c] for c in cands))
    lines.append(str(cache.n))
    for c, recs in enumerate(cache.records):
        lines.append(f"{cache.names[c]} {len(recs)}")
        for r in recs:
            ps = sorted(r.parents)
            lines.append(" ".join([_fmt_score(-r.score), str(len(ps))] + [cache.names[p] for p in ps]))
    return "\n".join(lines) + "\n"


def write_score_file(cache: ScoreCache, path) -> None:
    for nm in cache.names:
        if not nm or any(ch.isspace() for ch in nm):
            raise ValueError(f"variable name {nm!r} cannot be written to a score file")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_score_file(cache))


def read_score_file(path) -> ScoreCache:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_score_file(text, source=str(path))


def parse_score_file(text: str, source: str = "<scores>") -> ScoreCache:
    meta: dict[str, str] = {}
    cand_names: dict[str, list[str]] = {}
    body: list[tuple[int, str]] = []
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].partition(":")
            key = key.strip()
            if sep and key.startswith("candidates "):
                cand_names[key[len("candidates "):].strip()] = val.split()
            elif sep:
                meta[key] = val.strip()
            continue
        body.append((lineno, line))

    def fail(lineno, msg):
        raise ScoreFileError(f"{source}:{lineno}: {msg}")

    if not body:
        raise ScoreFileError(f"{source}: no content")
    pos = 0
    lineno, line = body[0]
    try:
        n = int(line)
    except ValueError:
        fail(lineno, f"expected variable count, got {line!r}")
    if n < 1:
        fail(lineno, "variable count must be positive")
    pos = 1
    blocks = []
    for _ in range(n):
        if pos >= len(body):
            fail(body[-1][0] + 1, "unexpected end of file, expected 'name count'")
        lineno, line = body[pos]
        toks = line.split()
        if len(toks) != 2:
            fail(lineno, f"expected 'name count', got {line!r}")
        try:
            count = int(toks[1])
        except ValueError:
            fail(lineno, f"record count {toks[1]!r} is not an integer")
        if count < 0:
            fail(lineno, "record count must be non-negative")
        pos += 1
        recs = []
        for _ in range(count):
            if pos >= len(body):
                fail(body[-1][0] + 1, f"unexpected end of file in block for {toks[0]!r}")
            rl, rline = body[pos]
            rt = rline.split()
            try:
                score = -float(rt[0])
                k = int(rt[1])
            except (ValueError, IndexError):
                fail(rl, f"expected 'score k parents...', got {rline!r}")
            if len(rt) != 2 + k:
                fail(rl, f"parent count {k} does not match {len(rt) - 2} names")
            recs.append((rl, score, rt[2:]))
            pos += 1
        blocks.append((lineno, toks[0], recs))
    if pos != len(body):
        fail(body[pos][0], "unexpected content after last variable block")

    names = tuple(b[1] for b in blocks)
    if len(set(names)) != len(names):
        raise ScoreFileError(f"{source}: duplicate variable names")
    index = {nm: i for i, nm in enumerate(names)}
    records = []
    for c, (lineno, name, recs) in enumerate(blocks):
        out = []
        seen = set()
        for rl, score, pnames in recs:
            try:
                ps = frozenset(index[p] for p in pnames)
            except KeyError as e:
                fail(rl, f"unknown parent {e.args[0]!r}")
            if c in ps:
                fail(rl, f"{name} listed as its own parent")
            if ps in seen:
                fail(rl, "duplicate parent set")
            seen.add(ps)
            out.append(ScoreRecord(c, ps, score))
        records.append(tuple(out))
    cands = tuple(tuple(index[x] for x in cand_names.get(nm, ()) if x in index) for nm in names)
    timed = set(meta.get("timed_out", "").split())
    return ScoreCache(names, tuple(records), cands, tuple(nm in timed for nm in names),
                      meta.get("dataset_hash", ""), meta.get("config", ""))
