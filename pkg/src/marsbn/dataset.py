"""Typed observational data: CSV loading, indicator encoding, synthetic networks."""

from __future__ import annotations

import csv
import hashlib
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import Dag

MAX_CATEGORICAL_LABELS = 20


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class VariableMeta:
    name: str
    index: int
    domain: tuple[str, ...] | None = None  # None means continuous

    def __post_init__(self):
        if self.domain is not None:
            dom = tuple(str(x) for x in self.domain)
            if len(dom) < 2:
                raise DataError(f"categorical variable {self.name!r} needs at least 2 labels")
            if len(set(dom)) != len(dom):
                raise DataError(f"categorical variable {self.name!r} has duplicate labels")
            object.__setattr__(self, "domain", dom)

    @property
    def is_categorical(self) -> bool:
        return self.domain is not None

    @property
    def kind(self) -> str:
        return "categorical" if self.is_categorical else "continuous"

    @property
    def n_labels(self) -> int:
        return len(self.domain) if self.domain is not None else 0


@dataclass(frozen=True, eq=False)
class Dataset:
    """N complete rows over n typed variables.

    ``values`` is an (N, n) float array; categorical cells hold the dense
    label id (position in the variable's domain).
    """

    metas: tuple[VariableMeta, ...]
    values: np.ndarray

    def __post_init__(self):
        metas = tuple(self.metas)
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 2:
            raise DataError("values must be a 2-d array")
        if vals.shape[0] < 1 or vals.shape[1] < 1:
            raise DataError("dataset needs at least one row and one column")
        if vals.shape[1] != len(metas):
            raise DataError(f"{vals.shape[1]} columns but {len(metas)} variable metas")
        if [m.index for m in metas] != list(range(len(metas))):
            raise DataError("variable indices must be 0..n-1 in order")
        if len({m.name for m in metas}) != len(metas):
            raise DataError("variable names must be unique")
        if not np.all(np.isfinite(vals)):
            raise DataError("dataset contains missing or non-finite values")
        for m in metas:
            if m.is_categorical:
                col = vals[:, m.index]
                if np.any(col != np.round(col)) or col.min() < 0 or col.max() >= m.n_labels:
                    raise DataError(f"column {m.name!r} has label ids outside its domain")
        vals.flags.writeable = False
        object.__setattr__(self, "metas", metas)
        object.__setattr__(self, "values", vals)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.metas]

    def column(self, i: int) -> np.ndarray:
        return self.values[:, i]

    def index_of(self, name: str) -> int:
        for m in self.metas:
            if m.name == name:
                return m.index
        raise KeyError(name)

    def fingerprint(self) -> str:
        """Stable content hash of metas and values."""
        h = hashlib.sha256()
        for m in self.metas:
            h.update(f"{m.name}|{m.kind}|{','.join(m.domain or ())}\n".encode())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.metas == other.metas and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    """Numeric design matrix built from a subset of dataset variables.

    ``col_map[j]`` is ``(variable index, label)`` where label is None for a
    continuous passthrough column and the domain label for an indicator.
    """

    source: Dataset
    columns: np.ndarray
    col_map: tuple[tuple[int, str | None], ...]

    @property
    def n_cols(self) -> int:
        return self.columns.shape[1]

    def is_indicator(self, j: int) -> bool:
        return self.col_map[j][1] is not None

    def column_name(self, j: int) -> str:
        var, label = self.col_map[j]
        name = self.source.metas[var].name
        return name if label is None else f"{name}={label}"


def encode_dataset(d: Dataset, vars: Sequence[int]) -> EncodedMatrix:
    """Expand variables into design columns in variable-index order.

    A categorical variable with l labels becomes l 0/1 indicator columns.
    """
    idx = sorted(set(int(v) for v in vars))
    if not idx:
        raise ValueError("encode_dataset needs at least one variable")
    for v in idx:
        if not 0 <= v < d.n:
            raise IndexError(f"variable index {v} out of range for n={d.n}")
    cols = []
    cmap = []
    for v in idx:
        meta = d.metas[v]
        x = d.values[:, v]
        if meta.is_categorical:
            for k, label in enumerate(meta.domain):
                cols.append((x == k).astype(float))
                cmap.append((v, label))
        else:
            cols.append(x.copy())
            cmap.append((v, None))
    mat = np.column_stack(cols)
    mat.flags.writeable = False
    return EncodedMatrix(d, mat, tuple(cmap))


def response_matrix(d: Dataset, child: int) -> np.ndarray:
    """Regression targets for a child: one column, or l indicator columns."""
    return encode_dataset(d, [child]).columns


# ---------------------------------------------------------------------------
# CSV and schema IO


def _parse_float(tok: str) -> float | None:
    try:
        val = float(tok)
    except ValueError:
        return None
    return val if math.isfinite(val) else None


def _is_integer_token(tok: str) -> bool:
    t = tok[1:] if tok[:1] in "+-" else tok
    return t.isdigit()


def _infer_meta(name: str, index: int, tokens: list[str]) -> VariableMeta:
    distinct = list(dict.fromkeys(tokens))
    numeric = [_parse_float(t) is not None for t in distinct]
    fractional = any(num and not _is_integer_token(t) for t, num in zip(distinct, numeric))
    if not fractional and 2 <= len(distinct) <= MAX_CATEGORICAL_LABELS:
        return VariableMeta(name, index, tuple(distinct))
    if all(numeric):
        return VariableMeta(name, index, None)
    bad = next(t for t, num in zip(distinct, numeric) if not num)
    raise DataError(f"column {name!r}: non-numeric token {bad!r} in a continuous column")


def read_schema(path) -> dict[str, tuple[str, ...] | None]:
    """Parse a schema sidecar: ``name = continuous`` or ``name = categorical:A,B,C``."""
    out: dict[str, tuple[str, ...] | None] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'name = kind'")
            name, spec = (s.strip() for s in line.split("=", 1))
            if spec == "continuous":
                out[name] = None
            elif spec.startswith("categorical:"):
                out[name] = tuple(s.strip() for s in spec[len("categorical:"):].split(","))
            else:
                raise DataError(f"{path}:{lineno}: unknown kind {spec!r}")
    return out


def write_schema(d: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for m in d.metas:
            kind = "continuous" if m.domain is None else "categorical:" + ",".join(m.domain)
            fh.write(f"{m.name} = {kind}\n")


def schema_path_for(csv_path) -> str:
    return os.fspath(csv_path) + ".schema"


def load_csv(path, schema=None) -> Dataset:
    """Load a comma-separated file with a header row.

    ``schema`` may be a mapping name -> domain tuple (None = continuous), a
    sequence of VariableMeta, or a path to a schema sidecar. Without one,
    ``<path>.schema`` is used when present; otherwise kinds are inferred.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(c.strip() for c in rows[0]):
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    body = rows[1:]
    while body and not any(c.strip() for c in body[-1]):
        body.pop()
    if not body:
        raise DataError(f"{path}: no data rows")
    n = len(header)
    for r, row in enumerate(body, 1):
        if len(row) != n:
            raise DataError(f"{path}: row {r} has {len(row)} cells, expected {n}")
        for c, cell in enumerate(row):
            if not cell.strip():
                raise DataError(f"{path}: missing value at row {r}, column {header[c]!r}")
    tokens = [[row[c].strip() for row in body] for c in range(n)]

    if schema is None and os.path.exists(schema_path_for(path)):
        schema = schema_path_for(path)
    if isinstance(schema, (str, os.PathLike)):
        schema = read_schema(schema)
    if schema is not None and not isinstance(schema, dict):
        schema = {m.name: m.domain for m in schema}

    metas = []
    for c, name in enumerate(header):
        if schema is not None:
            if name not in schema:
                raise DataError(f"schema has no entry for column {name!r}")
            metas.append(VariableMeta(name, c, schema[name]))
        else:
            metas.append(_infer_meta(name, c, tokens[c]))

    values = np.empty((len(body), n))
    for m in metas:
        col = tokens[m.index]
        if m.is_categorical:
            lookup = {lab: k for k, lab in enumerate(m.domain)}
            for r, t in enumerate(col):
                if t not in lookup:
                    raise DataError(f"{path}: row {r + 1}, column {m.name!r}: label {t!r} not in domain")
                values[r, m.index] = lookup[t]
        else:
            for r, t in enumerate(col):
                v = _parse_float(t)
                if v is None:
                    raise DataError(f"{path}: row {r + 1}, column {m.name!r}: non-numeric value {t!r}")
                values[r, m.index] = v
    return Dataset(tuple(metas), values)


def write_csv(d: Dataset, path, with_schema: bool = True) -> None:
    """Write data as CSV; floats use repr so reload is exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.names)
        cols = []
        for m in d.metas:
            x = d.values[:, m.index]
            if m.is_categorical:
                cols.append([m.domain[int(v)] for v in x])
            else:
                cols.append([repr(float(v)) for v in x])
        w.writerows(zip(*cols))
    if with_schema:
        write_schema(d, schema_path_for(path))


# ---------------------------------------------------------------------------
# synthetic ground truth


@dataclass(frozen=True)
class LinearMechanism:
    parents: tuple[int, ...]
    weights: tuple[float, ...]
    noise_sd: float


@dataclass(frozen=True)
class HingeMechanism:
    """Sum over parents of w_pos*(x - t)_+ + w_neg*(t - x)_+, plus noise."""

    parents: tuple[int, ...]
    knots: tuple[float, ...]
    weights_pos: tuple[float, ...]
    weights_neg: tuple[float, ...]
    noise_sd: float


@dataclass(frozen=True, eq=False)
class CptMechanism:
    """Conditional probability table.

    Rows are indexed by the mixed-radix parent configuration (first parent
    most significant), columns by the child's label id.
    """

    parents: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 2 or t.shape[1] < 2:
            raise ValueError("CPT must be 2-d with at least two child labels")
        if np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("CPT rows must be probability vectors")
        object.__setattr__(self, "table", t)

    @property
    def cardinality(self) -> int:
        return self.table.shape[1]


KINDS = ("linear", "hinge", "discrete")


@dataclass(frozen=True)
class GroundTruthNetwork:
    dag: Dag
    mechanisms: tuple
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.names:
            object.__setattr__(self, "names", tuple(f"V{i}" for i in range(self.dag.n)))
        if len(self.mechanisms) != self.dag.n:
            raise ValueError("need one mechanism per node")
        for i, mech in enumerate(self.mechanisms):
            if frozenset(mech.parents) != self.dag.parents[i]:
                raise ValueError(f"mechanism of node {i} does not match its DAG parents")
            if isinstance(mech, CptMechanism):
                expected = 1
                for p in mech.parents:
                    pm = self.mechanisms[p]
                    if not isinstance(pm, CptMechanism):
                        raise ValueError("CPT nodes need categorical parents")
                    expected *= pm.cardinality
                if mech.table.shape[0] != expected:
                    raise ValueError(f"CPT of node {i} has {mech.table.shape[0]} rows, expected {expected}")


def _random_dag(n, max_in, max_out, rng) -> Dag:
    order = rng.permutation(n)
    outdeg = np.zeros(n, dtype=int)
    parents: list[set[int]] = [set() for _ in range(n)]
    for pos in range(1, n):
        child = int(order[pos])
        pool = [int(p) for p in order[:pos] if outdeg[p] < max_out]
        if not pool or max_in == 0:
            continue
        k = int(rng.integers(0, min(max_in, len(pool)) + 1))
        for p in rng.choice(pool, size=k, replace=False):
            parents[child].add(int(p))
            outdeg[p] += 1
    return Dag(tuple(frozenset(p) for p in parents))


def _signed_weights(k, rng):
    return tuple(float(s * m) for s, m in zip(rng.choice([-1.0, 1.0], size=k), rng.uniform(0.5, 1.5, size=k)))


def generate_network(n: int, max_in_degree: int = 3, max_out_degree: int = 3,
                     kind: str = "hinge", seed=0, noise_sd: float = 0.1,
                     pilot_size: int = 2000, source_sd: float | None = None) -> GroundTruthNetwork:
    """Random DAG with degree caps and per-node mechanisms.

    Every continuous node adds N(0, noise_sd^2) noise, so a source node is
    pure noise; ``source_sd`` overrides the scale for sources only. Hinge
    knots sit at the 0.25/0.5/0.75 quantile of the parent, measured on a
    pilot sample.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if max_in_degree < 0 or max_out_degree < 0:
        raise ValueError("degree bounds must be >= 0")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if noise_sd < 0 or (source_sd is not None and source_sd < 0):
        raise ValueError("noise scales must be >= 0")
    src_sd = noise_sd if source_sd is None else source_sd
    rng = np.random.default_rng(seed)
    dag = _random_dag(n, max_in_degree, max_out_degree, rng)
    mechs: list = [None] * n
    if kind == "discrete":
        card = rng.integers(2, 4, size=n)
        for i in dag.topological_order():
            ps = tuple(sorted(dag.parents[i]))
            rows = int(np.prod([card[p] for p in ps])) if ps else 1
            table = rng.dirichlet(np.full(card[i], 0.5), size=rows)
            table = table / table.sum(axis=1, keepdims=True)
            mechs[i] = CptMechanism(ps, table)
        return GroundTruthNetwork(dag, tuple(mechs))

    pilot = np.zeros((pilot_size, n))
    prng = np.random.default_rng(rng.integers(2**63))
    for i in dag.topological_order():
        ps = tuple(sorted(dag.parents[i]))
        sd = noise_sd if ps else src_sd
        if kind == "linear":
            mechs[i] = LinearMechanism(ps, _signed_weights(len(ps), rng), sd)
        else:
            qs = rng.choice([0.25, 0.5, 0.75], size=len(ps))
            knots = tuple(float(np.quantile(pilot[:, p], q)) for p, q in zip(ps, qs))
            mechs[i] = HingeMechanism(ps, knots, _signed_weights(len(ps), rng),
                                      _signed_weights(len(ps), rng), sd)
        pilot[:, i] = _evaluate(mechs[i], pilot, prng)
    return GroundTruthNetwork(dag, tuple(mechs))


def _evaluate(mech, values: np.ndarray, rng, cards=None) -> np.ndarray:
    N = values.shape[0]
    if isinstance(mech, CptMechanism):
        cfg = np.zeros(N, dtype=np.int64)
        for p in mech.parents:
            cfg = cfg * cards[p] + values[:, p].astype(np.int64)
        cum = np.cumsum(mech.table, axis=1)[cfg]
        u = rng.random(N)
        labels = (u[:, None] >= cum[:, :-1]).sum(axis=1)
        return labels.astype(float)
    out = np.zeros(N)
    if isinstance(mech, LinearMechanism):
        for p, w in zip(mech.parents, mech.weights):
            out += w * values[:, p]
    else:
        for p, t, wp, wn in zip(mech.parents, mech.knots, mech.weights_pos, mech.weights_neg):
            x = values[:, p]
            out += wp * np.maximum(0.0, x - t) + wn * np.maximum(0.0, t - x)
    if mech.noise_sd > 0:
        out += rng.normal(0.0, mech.noise_sd, size=N)
    return out


def sample(net: GroundTruthNetwork, N: int, seed=0) -> Dataset:
    """Forward (ancestral) sampling in topological order."""
    if N < 1:
        raise ValueError("N must be >= 1")
    n = net.dag.n
    cards = {i: m.cardinality for i, m in enumerate(net.mechanisms) if isinstance(m, CptMechanism)}
    rng = np.random.default_rng(seed)
    values = np.zeros((N, n))
    for i in net.dag.topological_order():
        values[:, i] = _evaluate(net.mechanisms[i], values, rng, cards)
    metas = []
    for i, mech in enumerate(net.mechanisms):
        dom = tuple(str(k) for k in range(mech.cardinality)) if isinstance(mech, CptMechanism) else None
        metas.append(VariableMeta(net.names[i], i, dom))
    return Dataset(tuple(metas), values)
