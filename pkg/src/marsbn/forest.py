"""Random-forest permutation importance for candidate-parent filtering.

Trees are CART on bootstrap samples: variance reduction for a continuous
target, Gini impurity for a categorical one. Categorical features split as
binary label subsets: labels are ordered by the node's target mean and the
best prefix goes left. Importance of a feature is the mean over trees of the
out-of-bag error increase after permuting that feature among the tree's OOB
rows, divided by the standard deviation of those per-tree increases.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 50
    mtry: int | None = None  # None: ceil(sqrt(p)) classification, ceil(p/3) regression
    max_depth: int = 12
    min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("n_trees, max_depth and min_leaf must be positive")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be positive")

    def resolve_mtry(self, p: int, classification: bool) -> int:
        if self.mtry is not None:
            return min(self.mtry, p)
        m = math.ceil(math.sqrt(p)) if classification else math.ceil(p / 3)
        return max(1, min(m, p))


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray      # local feature index per node, -1 for leaves
    threshold: np.ndarray    # numeric split: x <= threshold goes left
    cat_left: np.ndarray     # (nodes, max_labels) bool; rows used for categorical splits
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray        # (nodes, R): mean target or class distribution
    n_train: np.ndarray      # bootstrap rows (with multiplicity) in each leaf; 0 for internal nodes
    oob: np.ndarray          # row indices not drawn in the bootstrap
    used: frozenset

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def leaf_of(self, X: np.ndarray, is_cat: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            r, nd, ff = rows[active], node[active], f[active]
            x = X[r, ff]
            cat = is_cat[ff]
            go_left = np.where(cat, self.cat_left[nd, np.where(cat, x, 0).astype(np.int64)],
                               x <= self.threshold[nd])
            node[active] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X: np.ndarray, is_cat: np.ndarray) -> np.ndarray:
        return self.value[self.leaf_of(X, is_cat)]


@dataclass(frozen=True, eq=False)
class Forest:
    target: int
    features: tuple[int, ...]   # dataset column of each local feature
    is_cat: np.ndarray
    classification: bool
    n_classes: int
    trees: tuple[Tree, ...]
    config: ForestConfig


@dataclass(frozen=True)
class ImportanceRanking:
    target: int
    scores: dict[int, float]
    order: tuple[int, ...]


def _segment_best(key, seg, y, onehot, min_leaf, classification, n_seg):
    """Best split position of every segment.

    Rows are sorted by (segment, key). Returns per-segment (score, threshold)
    where score is the child-side term to maximise: sum of S^2/n for
    regression, sum over classes of C^2/n for classification; -inf when a
    segment has no admissible split.
    """
    m = key.shape[0]
    change = np.empty(m, dtype=bool)
    change[0] = True
    np.not_equal(seg[1:], seg[:-1], out=change[1:])
    starts = np.flatnonzero(change)
    ends = np.append(starts[1:], m)
    sizes = ends - starts
    seg_of_row = np.repeat(np.arange(starts.size), sizes)
    i = np.arange(m) - starts[seg_of_row] + 1
    n = sizes[seg_of_row]
    valid = np.zeros(m, dtype=bool)
    valid[:-1] = ~change[1:] & (key[1:] != key[:-1])
    valid &= (i >= min_leaf) & (n - i >= min_leaf)
    if classification:
        cs = np.cumsum(onehot, axis=0)
        before = np.vstack([np.zeros((1, cs.shape[1])), cs])[starts]
        Sl = cs - before[seg_of_row]
        tot = (cs[ends - 1] - before)[seg_of_row]
        score = (Sl ** 2).sum(axis=1) / i + ((tot - Sl) ** 2).sum(axis=1) / np.maximum(n - i, 1)
    else:
        cs = np.cumsum(y)
        before = np.concatenate(([0.0], cs))[starts]
        Sl = cs - before[seg_of_row]
        tot = (cs[ends - 1] - before)[seg_of_row]
        score = Sl ** 2 / i + (tot - Sl) ** 2 / np.maximum(n - i, 1)
    score = np.where(valid, score, -np.inf)
    seg_max = np.maximum.reduceat(score, starts)
    pos = np.where(score == seg_max[seg_of_row], np.arange(m), m)
    first = np.minimum.reduceat(pos, starts)
    out_score = np.full(n_seg, -np.inf)
    out_thr = np.full(n_seg, np.nan)
    ids = seg[starts]
    ok = np.isfinite(seg_max)
    fo = first[ok]
    out_score[ids[ok]] = seg_max[ok]
    out_thr[ids[ok]] = 0.5 * (key[fo] + key[fo + 1])
    return out_score, out_thr


def _label_ranks(x, seg, y, onehot, class_counts, n_seg, n_labels):
    """Per segment, rank of each label by mean target (absent labels last, ties by label id).

    For classification the "target" is the indicator of the segment's
    majority class.
    """
    lab = x.astype(np.int64)
    flat = seg * n_labels + lab
    cnt = np.bincount(flat, minlength=n_seg * n_labels).reshape(n_seg, n_labels)
    if onehot is not None:
        major = np.argmax(class_counts, axis=1)
        w = onehot[np.arange(lab.size), major[seg]]
    else:
        w = y
    tot = np.bincount(flat, weights=w, minlength=n_seg * n_labels).reshape(n_seg, n_labels)
    means = np.where(cnt > 0, tot / np.maximum(cnt, 1), np.inf)
    return np.argsort(np.argsort(means, axis=1, kind="stable"), axis=1, kind="stable")


def _grow_tree(X, y, onehot, is_cat, n_labels, classification, cfg, mtry, rng, max_labels) -> Tree:
    """Grow one tree breadth-first; all nodes of a depth are split together."""
    N, p = X.shape
    boot = rng.integers(0, N, size=N)
    drawn = np.zeros(N, dtype=bool)
    drawn[boot] = True
    oob = np.flatnonzero(~drawn)
    Xb, yb = X[boot], y[boot]
    ob = onehot[boot] if classification else None
    width = max(max_labels, 1)

    cap = 2 * N + 1
    feature = np.full(cap, -1)
    threshold = np.full(cap, np.nan)
    left = np.full(cap, -1)
    right = np.full(cap, -1)
    cat_left = np.zeros((cap, width), dtype=bool)
    n_nodes = 1
    presorted = [None if is_cat[f] else np.argsort(Xb[:, f], kind="stable") for f in range(p)]
    node_of = np.zeros(N, dtype=np.int64)
    frontier = np.array([0])
    used = set()

    for depth in range(cfg.max_depth):
        F = frontier.size
        loc_of = np.full(n_nodes, -1)
        loc_of[frontier] = np.arange(F)
        loc = loc_of[node_of]
        live = loc >= 0
        counts = np.bincount(loc[live], minlength=F)
        if classification:
            cls = np.zeros((F, onehot.shape[1]))
            np.add.at(cls, loc[live], ob[live])
            parent = (cls ** 2).sum(axis=1) / np.maximum(counts, 1)
            pure = np.count_nonzero(cls, axis=1) < 2
        else:
            sums = np.bincount(loc[live], weights=yb[live], minlength=F)
            sq = np.bincount(loc[live], weights=yb[live] ** 2, minlength=F)
            parent = sums ** 2 / np.maximum(counts, 1)
            pure = sq - parent <= 1e-12 * np.maximum(sq, 1e-300)
        splittable = (counts >= 2 * cfg.min_leaf) & ~pure
        if not splittable.any():
            break
        # mtry distinct features per node, drawn for every frontier node in order
        picks = np.argsort(rng.random((F, p)), axis=1)[:, :mtry]
        chosen = np.zeros((F, p), dtype=bool)
        np.put_along_axis(chosen, picks, True, axis=1)
        chosen &= splittable[:, None]

        best_score = np.full(F, -np.inf)
        best_feat = np.full(F, -1)
        best_thr = np.full(F, np.nan)
        best_mask = np.zeros((F, width), dtype=bool)
        seg_dtype = np.int16 if F < 2 ** 15 else np.int64
        for f in range(p):
            take = live & chosen[np.maximum(loc, 0), f]
            if not take.any():
                continue
            if is_cat[f]:
                rows = np.flatnonzero(take)
                seg = loc[rows]
                ranks = _label_ranks(Xb[rows, f], seg, yb[rows], ob[rows] if classification else None,
                                     cls if classification else None, F, n_labels[f])
                key = ranks[seg, Xb[rows, f].astype(np.int64)].astype(float)
                order = np.lexsort((key, seg))
                rows, seg, key = rows[order], seg[order], key[order]
            else:
                rows = presorted[f][take[presorted[f]]]
                rows = rows[np.argsort(loc[rows].astype(seg_dtype), kind="stable")]
                seg = loc[rows]
                key = Xb[rows, f]
            sc, th = _segment_best(key, seg, yb[rows], ob[rows] if classification else None,
                                   cfg.min_leaf, classification, F)
            better = sc > best_score
            best_score[better] = sc[better]
            best_feat[better] = f
            best_thr[better] = th[better]
            if is_cat[f] and better.any():
                best_mask[better] = False
                best_mask[better, :n_labels[f]] = ranks[better] <= np.floor(th[better])[:, None]

        do = splittable & (best_feat >= 0) & (best_score > parent * (1 + 1e-12))
        if not do.any():
            break
        ks = np.flatnonzero(do)
        nids = frontier[ks]
        fs = best_feat[ks]
        used.update(int(f) for f in np.unique(fs))
        feature[nids] = fs
        threshold[nids] = np.where(is_cat[fs], np.nan, best_thr[ks])
        cat_left[nids] = best_mask[ks] & is_cat[fs][:, None]
        child_left = np.full(F, -1)
        child_right = np.full(F, -1)
        child_left[ks] = n_nodes + 2 * np.arange(ks.size)
        child_right[ks] = child_left[ks] + 1
        left[nids], right[nids] = child_left[ks], child_right[ks]
        n_nodes += 2 * ks.size
        new_frontier = np.column_stack([child_left[ks], child_right[ks]]).ravel()
        # route rows of split nodes
        moving = live & do[np.maximum(loc, 0)]
        r = np.flatnonzero(moving)
        k = loc[r]
        f = best_feat[k]
        xv = Xb[r, f]
        catm = is_cat[f]
        go_left = np.where(catm, best_mask[k, np.where(catm, xv, 0).astype(np.int64)], xv <= best_thr[k])
        node_of[r] = np.where(go_left, child_left[k], child_right[k])
        frontier = new_frontier

    cnt = np.bincount(node_of, minlength=n_nodes)
    if classification:
        val = np.zeros((n_nodes, onehot.shape[1]))
        np.add.at(val, node_of, ob)
    else:
        val = np.bincount(node_of, weights=yb, minlength=n_nodes)[:, None]
    val = val / np.maximum(cnt, 1)[:, None]
    return Tree(feature[:n_nodes], threshold[:n_nodes], cat_left[:n_nodes], left[:n_nodes],
                right[:n_nodes], val, cnt, oob, frozenset(used))


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def fit_forest(target: int, data: Dataset, cfg: ForestConfig | None = None, threads: int = 1) -> Forest:
    """Grow ``cfg.n_trees`` CART trees for ``target`` on all other variables."""
    cfg = cfg or ForestConfig()
    if data.n < 2:
        raise ValueError("need at least two variables")
    if data.N < 2 * cfg.min_leaf:
        raise ValueError(f"need N >= 2*min_leaf = {2 * cfg.min_leaf}")
    features = tuple(i for i in range(data.n) if i != target)
    X = data.values[:, features]
    metas = [data.metas[i] for i in features]
    is_cat = np.array([m.is_categorical for m in metas])
    n_labels = [m.n_labels for m in metas]
    tmeta = data.metas[target]
    classification = tmeta.is_categorical
    y = data.values[:, target]
    K = tmeta.n_labels
    onehot = (y[:, None] == np.arange(K)[None, :]).astype(float) if classification else None
    mtry = cfg.resolve_mtry(len(features), classification)
    seeds = np.random.SeedSequence([cfg.seed, target]).spawn(cfg.n_trees)

    def grow(ss):
        return _grow_tree(X, y, onehot, is_cat, n_labels, classification, cfg, mtry,
                          np.random.default_rng(ss), max(n_labels + [0]))

    trees = _map(grow, seeds, threads)
    return Forest(target, features, is_cat, classification, K, tuple(trees), cfg)


def _error(pred: np.ndarray, y: np.ndarray, classification: bool) -> float:
    if classification:
        return float(np.mean(np.argmax(pred, axis=1) != y))
    return float(np.mean((pred[:, 0] - y) ** 2))


def oob_importance(forest: Forest, data: Dataset, seed=0, threads: int = 1) -> ImportanceRanking:
    """Normalised out-of-bag permutation importance for every candidate."""
    X = data.values[:, forest.features]
    y = data.values[:, forest.target]
    p = len(forest.features)
    seeds = np.random.SeedSequence([int(seed), forest.target]).spawn(len(forest.trees))

    def per_tree(args):
        tree, ss = args
        diffs = np.zeros(p)
        if tree.oob.size == 0:
            return None
        rng = np.random.default_rng(ss)
        Xo = X[tree.oob]
        yo = y[tree.oob]
        base = _error(tree.predict(Xo, forest.is_cat), yo, forest.classification)
        for f in range(p):
            perm = rng.permutation(tree.oob.size)
            if f not in tree.used:
                continue
            Xp = Xo.copy()
            Xp[:, f] = Xo[perm, f]
            diffs[f] = _error(tree.predict(Xp, forest.is_cat), yo, forest.classification) - base
        return diffs

    rows = [d for d in _map(per_tree, list(zip(forest.trees, seeds)), threads) if d is not None]
    scores = {}
    if len(rows) >= 2:
        D = np.vstack(rows)
        mean = D.mean(axis=0)
        sd = D.std(axis=0, ddof=1)
        for k, f in enumerate(forest.features):
            scores[f] = float(mean[k] / sd[k]) if sd[k] > 0 else 0.0
    else:
        scores = {f: 0.0 for f in forest.features}
    order = tuple(sorted(forest.features, key=lambda f: (-scores[f], f)))
    return ImportanceRanking(forest.target, scores, order)


def rank_candidates(target: int, data: Dataset, cfg: ForestConfig | None = None, threads: int = 1) -> ImportanceRanking:
    cfg = cfg or ForestConfig()
    forest = fit_forest(target, data, cfg, threads)
    return oob_importance(forest, data, seed=cfg.seed, threads=threads)


def filter_candidates(target: int, data: Dataset, lam: int = 5, cfg: ForestConfig | None = None,
                      threads: int = 1) -> tuple[int, ...]:
    """The ``lam`` most important candidate parents of ``target``."""
    if not 1 <= lam < data.n:
        raise ValueError(f"lambda must satisfy 1 <= lambda < n (= {data.n}); got {lam}")
    return rank_candidates(target, data, cfg, threads).order[:lam]
