"""Multivariate adaptive regression splines for parent-set scoring.

A model is an intercept plus a linear combination of basis functions, each a
product of hinges max(0, x - t) / max(0, t - x) on distinct design columns.
Categorical children are fit as l simultaneous responses sharing one set of
basis functions; RSS and GCV are summed over responses.

The forward pass adds reflected hinge pairs greedily by RSS reduction. For a
parent basis B (already in the model) the pair [B(x-t)_+, B(t-x)_+] spans the
same space as {B*x, B*(x-t)_+} modulo the current basis, so every knot of a
(B, x) combination is scored from suffix sums over rows sorted by x.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular

from .dataset import Dataset, encode_dataset, response_matrix

MAX_DEGREE_CAP = 10
_INDEP_TOL = 1e-10


@dataclass(frozen=True)
class Hinge:
    design_col: int
    knot: float
    direction: int = 1  # +1: max(0, x - t); -1: max(0, t - x)

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")

    def evaluate(self, x):
        return np.maximum(0.0, self.direction * (np.asarray(x, dtype=float) - self.knot))

    def describe(self, name: str) -> str:
        t = f"{abs(self.knot):.6g}"
        if self.direction > 0:
            return f"h({name}{'-' if self.knot >= 0 else '+'}{t})"
        return f"h({'' if self.knot >= 0 else '-'}{t}-{name})"


@dataclass(frozen=True)
class BasisFunction:
    factors: tuple[Hinge, ...]

    def __post_init__(self):
        facs = tuple(self.factors)
        if not facs:
            raise ValueError("a basis function needs at least one hinge")
        cols = [h.design_col for h in facs]
        if len(set(cols)) != len(cols):
            raise ValueError("hinge factors must use distinct design columns")
        if len(facs) > MAX_DEGREE_CAP:
            raise ValueError(f"at most {MAX_DEGREE_CAP} hinges per product")
        object.__setattr__(self, "factors", facs)

    @property
    def degree(self) -> int:
        return len(self.factors)

    @property
    def cols(self) -> frozenset[int]:
        return frozenset(h.design_col for h in self.factors)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Evaluate on an (N, p) design matrix."""
        out = np.ones(X.shape[0])
        for h in self.factors:
            out = out * h.evaluate(X[:, h.design_col])
        return out

    def extend(self, hinge: Hinge) -> "BasisFunction":
        return BasisFunction(self.factors + (hinge,))


def eval_basis(b: BasisFunction, row) -> float:
    row = np.asarray(row, dtype=float)
    val = 1.0
    for h in b.factors:
        val *= float(max(0.0, h.direction * (row[h.design_col] - h.knot)))
    return val


@dataclass(frozen=True)
class FitConfig:
    max_terms: int = 21
    max_degree: int = 10
    min_rss_improve: float = 1e-3
    gcv_penalty: float = 3.0
    max_knots_per_var: int = 100
    gcv_form: str = "standard"  # or "literal"

    def __post_init__(self):
        if self.max_terms < 1 or self.max_degree < 1 or self.max_knots_per_var < 1:
            raise ValueError("max_terms, max_degree and max_knots_per_var must be positive")
        if self.max_degree > MAX_DEGREE_CAP:
            raise ValueError(f"max_degree cannot exceed {MAX_DEGREE_CAP}")
        if self.min_rss_improve < 0 or self.gcv_penalty < 0:
            raise ValueError("min_rss_improve and gcv_penalty must be non-negative")
        if self.gcv_form not in ("standard", "literal"):
            raise ValueError("gcv_form must be 'standard' or 'literal'")


@dataclass(frozen=True, eq=False)
class MarsModel:
    child: int
    parents: tuple[int, ...]
    intercept: np.ndarray  # (R,)
    terms: tuple[tuple[BasisFunction, np.ndarray], ...]
    n_obs: int
    rss: float
    gcv: float
    col_names: tuple[str, ...] = field(default=())

    @property
    def n_responses(self) -> int:
        return self.intercept.shape[0]

    @property
    def term_count(self) -> int:
        return 1 + len(self.terms)

    @property
    def bases(self) -> list[BasisFunction]:
        return [b for b, _ in self.terms]

    def coefficient_matrix(self) -> np.ndarray:
        """(term_count, R) coefficients, intercept row first."""
        rows = [self.intercept] + [c for _, c in self.terms]
        return np.vstack(rows)

    def predict(self, X: np.ndarray | None) -> np.ndarray:
        if not self.terms:
            n = self.n_obs if X is None else X.shape[0]
            return np.tile(self.intercept, (n, 1))
        return basis_matrix(self.bases, X) @ self.coefficient_matrix()

    def dump(self) -> str:
        names = self.col_names or tuple(f"x{j}" for j in range(_max_col(self) + 1))
        fmt = lambda cs: " ".join(f"{c:.6g}" for c in cs)
        lines = [fmt(self.intercept)]
        for b, c in self.terms:
            lines.append(fmt(c) + " " + "*".join(h.describe(names[h.design_col]) for h in b.factors))
        return "\n".join(lines) + "\n"

    def same_as(self, other: "MarsModel") -> bool:
        return (self.child == other.child and self.parents == other.parents
                and self.bases == other.bases and self.rss == other.rss
                and self.gcv == other.gcv
                and np.array_equal(self.coefficient_matrix(), other.coefficient_matrix()))


def _max_col(model: MarsModel) -> int:
    return max((h.design_col for b in model.bases for h in b.factors), default=0)


def basis_matrix(bases: Sequence[BasisFunction], X: np.ndarray | None, n: int | None = None) -> np.ndarray:
    """Evaluated design with a leading intercept column."""
    n = X.shape[0] if X is not None else n
    cols = [np.ones(n)] + [b.evaluate(X) for b in bases]
    return np.column_stack(cols)


def fit_least_squares(design: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares by column-pivoted QR.

    Columns whose pivot falls below 1e-10 times the largest column norm are
    dropped (coefficient 0). Returns ``(coef, rss)`` with coef shaped
    (p, R), or (p,) for a 1-d target; rss is summed over responses.
    """
    A = np.asarray(design, dtype=float)
    Y = np.asarray(targets, dtype=float)
    flat = Y.ndim == 1
    if flat:
        Y = Y[:, None]
    if A.ndim != 2 or A.shape[0] != Y.shape[0]:
        raise ValueError("design and targets disagree on the number of rows")
    norms = np.linalg.norm(A, axis=0)
    if A.size == 0 or norms.max() == 0.0:
        raise ValueError("design matrix is all zero")
    Qf, Rf, piv = qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rf))
    rank = int(np.sum(diag > 1e-10 * norms.max()))
    coef = np.zeros((A.shape[1], Y.shape[1]))
    if rank:
        z = Qf[:, :rank].T @ Y
        coef[piv[:rank]] = solve_triangular(Rf[:rank, :rank], z)
    resid = Y - A @ coef
    rss = float(np.sum(resid * resid))
    return (coef[:, 0] if flat else coef), rss


def rss(model: MarsModel, X: np.ndarray | None, Y: np.ndarray) -> float:
    """Residual sum of squares of ``model`` on design X and targets Y, summed over responses."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    resid = Y - model.predict(X) if X is not None else Y - model.intercept
    return float(np.sum(resid * resid))


def effective_params(term_count: int, penalty: float) -> float:
    return term_count + penalty * (term_count - 1) / 2.0


def gcv(rss: float, N: int, term_count: int, cfg: FitConfig | None = None) -> float:
    """Generalized cross-validation score; +inf when the model is too large for N.

    standard: (rss/N) / (1 - C/N)^2 with C = lam + d*(lam-1)/2.
    literal:  rss / ((1 - lam)/N)^2, evaluated as written.
    """
    cfg = cfg or FitConfig()
    if N < 1 or term_count < 1:
        raise ValueError("need N >= 1 and term_count >= 1")
    if cfg.gcv_form == "literal":
        den = ((1.0 - term_count) / N) ** 2
        return rss / den if den > 0 else float("inf")
    frac = 1.0 - effective_params(term_count, cfg.gcv_penalty) / N
    if frac <= 0:
        return float("inf")
    return (rss / N) / (frac * frac)


# ---------------------------------------------------------------------------
# forward stage


def _problem(child: int, parents: Sequence[int], data: Dataset):
    parents = tuple(sorted(int(p) for p in parents))
    if child in parents:
        raise ValueError("child cannot be its own parent")
    Y = response_matrix(data, child)
    if not parents:
        return parents, None, Y, (), np.zeros(0, dtype=bool)
    enc = encode_dataset(data, parents)
    names = tuple(enc.column_name(j) for j in range(enc.n_cols))
    indicator = np.array([enc.is_indicator(j) for j in range(enc.n_cols)])
    return parents, enc.columns, Y, names, indicator


def _suffix_sums(a: np.ndarray) -> np.ndarray:
    """out[i] = sum(a[i:]) along axis 0, with a trailing zero row."""
    out = np.zeros((a.shape[0] + 1,) + a.shape[1:])
    out[:-1] = np.cumsum(a[::-1], axis=0)[::-1]
    return out


def _orthogonalize(v: np.ndarray, Q: np.ndarray) -> np.ndarray:
    u = v - Q @ (Q.T @ v)
    return u - Q @ (Q.T @ u)


class _ForwardState:
    def __init__(self, X, Y, indicator, cfg):
        self.X, self.Y, self.cfg = X, Y, cfg
        self.indicator = indicator
        N = X.shape[0]
        self.order = [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]
        self.bases: list[BasisFunction | None] = [None]
        self.cols = [np.ones(N)]
        self.Q = np.full((N, 1), 1.0 / np.sqrt(N))
        self.resid = Y - Y.mean(axis=0)
        self.tss = float(np.sum(self.resid ** 2))
        self.rss = self.tss

    def knots(self, xs: np.ndarray, j: int) -> np.ndarray:
        if self.indicator[j]:
            return np.array([0.5]) if xs[0] < 0.5 < xs[-1] else np.empty(0)
        distinct = xs[np.r_[True, xs[1:] != xs[:-1]]]
        k = self.cfg.max_knots_per_var
        if distinct.size > k:
            idx = np.unique(np.round(np.linspace(0, distinct.size - 1, k)).astype(int))
            distinct = distinct[idx]
        return distinct

    def pair_gains(self, m: int, j: int):
        """RSS reduction for every knot of the pair (basis m, column j)."""
        b = self.cols[m]
        x = self.X[:, j]
        order = self.order[j]
        sub = order[b[order] > 0]
        if sub.size < 2:
            return None
        xs = x[sub]
        knots = self.knots(xs, j)
        if knots.size == 0:
            return None
        Q, R = self.Q, self.resid
        v = b * x
        u = _orthogonalize(v, Q)
        nv, nu = float(v @ v), float(u @ u)
        if nv > 0 and nu > _INDEP_TOL * nv:
            q = u / np.sqrt(nu)
            qr_ = q @ R
            g_lin = float(qr_ @ qr_)
            R = R - np.outer(q, qr_)
            Qs = np.column_stack([Q[sub], q[sub]])
        else:
            g_lin = 0.0
            Qs = Q[sub]
        nr = R.shape[1]
        bs = b[sub]
        xc = xs - xs.mean()
        tc = knots - xs.mean()
        pos = np.searchsorted(xs, knots, side="right")
        W = np.column_stack([R[sub], Qs]) * bs[:, None]
        S0 = _suffix_sums(W)[pos]
        S1 = _suffix_sums(W * xc[:, None])[pos]
        dots = S1 - tc[:, None] * S0
        b2 = bs * bs
        T = _suffix_sums(np.column_stack([b2, b2 * xc, b2 * xc * xc]))
        s_full = T[0, 2]
        T = T[pos]
        ss = T[:, 2] - 2.0 * tc * T[:, 1] + tc * tc * T[:, 0]
        a2 = np.sum(dots[:, :nr] ** 2, axis=1)
        den = ss - np.sum(dots[:, nr:] ** 2, axis=1)
        ok = (ss > 1e-10 * s_full) & (den > 1e-9 * ss)
        g_knot = np.where(ok, a2 / np.where(ok, den, 1.0), 0.0)
        return knots, g_lin + g_knot

    def best_candidate(self):
        cfg = self.cfg
        tol = 1e-12 * max(self.tss, 1e-300)
        best = None  # (gain, j, knot, m)
        for j in range(self.X.shape[1]):
            for m, basis in enumerate(self.bases):
                if basis is not None and (j in basis.cols or basis.degree + 1 > cfg.max_degree):
                    continue
                res = self.pair_gains(m, j)
                if res is None:
                    continue
                knots, gains = res
                k = int(np.argmax(gains))
                g = float(gains[k])
                tied = np.nonzero(gains >= g - tol)[0]
                k = int(tied[0])
                cand = (float(gains[k]), j, float(knots[k]), m)
                if best is None or cand[0] > best[0] + tol or (
                        abs(cand[0] - best[0]) <= tol and cand[1:] < best[1:]):
                    best = cand
        return best

    def try_add(self, m: int, j: int, knot: float, room: int):
        """Add the independent members of the pair; returns new state pieces or None."""
        parent = self.bases[m]
        Q = self.Q
        new_bases, new_cols, new_q = [], [], []
        for direction in (1, -1):
            if len(new_bases) >= room:
                break
            h = Hinge(j, knot, direction)
            bf = BasisFunction((h,)) if parent is None else parent.extend(h)
            col = self.cols[m] * h.evaluate(self.X[:, j])
            u = _orthogonalize(col, Q)
            nc, nu = float(col @ col), float(u @ u)
            if nc > 0 and nu > _INDEP_TOL * nc:
                q = u / np.sqrt(nu)
                Q = np.column_stack([Q, q])
                new_bases.append(bf)
                new_cols.append(col)
                new_q.append(q)
        if not new_bases:
            return None
        Qn = np.column_stack(new_q)
        resid = self.resid - Qn @ (Qn.T @ self.resid)
        return new_bases, new_cols, Q, resid

    def run(self):
        cfg = self.cfg
        if self.tss <= 0:
            return
        while len(self.bases) < cfg.max_terms:
            best = self.best_candidate()
            if best is None or best[0] <= 1e-12 * self.tss:
                break
            _, j, knot, m = best
            added = self.try_add(m, j, knot, cfg.max_terms - len(self.bases))
            if added is None:
                break
            new_bases, new_cols, Q, resid = added
            new_rss = float(np.sum(resid * resid))
            if (self.rss - new_rss) / self.tss < cfg.min_rss_improve or new_rss >= self.rss:
                break
            self.bases.extend(new_bases)
            self.cols.extend(new_cols)
            self.Q, self.resid, self.rss = Q, resid, new_rss


def _assemble(child, parents, bases, X, Y, names, cfg) -> MarsModel:
    N = Y.shape[0]
    if not bases:
        mean = Y.mean(axis=0)
        r = float(np.sum((Y - mean) ** 2))
        return MarsModel(child, parents, mean, (), N, r, gcv(r, N, 1, cfg), names)
    A = basis_matrix(bases, X)
    coef, r = fit_least_squares(A, Y)
    terms = tuple((b, coef[i + 1].copy()) for i, b in enumerate(bases))
    return MarsModel(child, parents, coef[0].copy(), terms, N, r, gcv(r, N, 1 + len(bases), cfg), names)


def forward_pass(child: int, parents: Sequence[int], data: Dataset, cfg: FitConfig | None = None) -> MarsModel:
    """Greedy forward stage; returns the unpruned model."""
    cfg = cfg or FitConfig()
    parents, X, Y, names, indicator = _problem(child, parents, data)
    if X is None:
        return _assemble(child, parents, [], None, Y, names, cfg)
    state = _ForwardState(X, Y, indicator, cfg)
    state.run()
    return _assemble(child, parents, state.bases[1:], X, Y, names, cfg)


# ---------------------------------------------------------------------------
# backward stage


def backward_prune(model: MarsModel, data: Dataset, cfg: FitConfig | None = None) -> MarsModel:
    """Delete terms one at a time by lowest resulting GCV; keep the best subset seen."""
    cfg = cfg or FitConfig()
    if not model.terms:
        return model
    parents, X, Y, names, _ = _problem(model.child, model.parents, data)
    N = Y.shape[0]
    A = basis_matrix(model.bases, X)
    Qf, Rf = np.linalg.qr(A)
    z = Qf.T @ Y
    base_rss = float(np.sum((Y - Qf @ z) ** 2))

    def subset_rss(cols):
        _, r = fit_least_squares(Rf[:, cols], z)
        return base_rss + r

    current = list(range(A.shape[1]))
    best_cols = list(current)
    best_gcv = gcv(subset_rss(current), N, len(current), cfg)
    while len(current) > 1:
        choice = None
        for j in current[1:]:
            trial = [c for c in current if c != j]
            r = subset_rss(trial)
            if choice is None or r < choice[0]:
                choice = (r, j)
        current = [c for c in current if c != choice[1]]
        g = gcv(choice[0], N, len(current), cfg)
        if g <= best_gcv:
            best_gcv, best_cols = g, list(current)
    kept = [model.bases[c - 1] for c in best_cols[1:]]
    pruned = _assemble(model.child, parents, kept, X, Y, names, cfg)
    start = replace(model, gcv=gcv(model.rss, N, model.term_count, cfg))
    # guards against last-ulp disagreement between the subset and full refits
    return pruned if pruned.gcv <= start.gcv else start


def fit_mars(child: int, parents: Sequence[int], data: Dataset, cfg: FitConfig | None = None) -> MarsModel:
    cfg = cfg or FitConfig()
    return backward_prune(forward_pass(child, parents, data, cfg), data, cfg)


def model_design(model: MarsModel, data: Dataset):
    """(X, Y) arrays the model was fit on, for use with :func:`rss`."""
    _, X, Y, _, _ = _problem(model.child, model.parents, data)
    return X, Y
