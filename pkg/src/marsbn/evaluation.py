"""Comparing a learned DAG with ground truth: CPDAG-based SHD and skeleton F1."""

from __future__ import annotations

from dataclasses import dataclass

from .graph import Dag

# bnlearn repository networks used as benchmark metadata: name -> (n nodes, m edges)
BNLEARN_BENCHMARKS = {
    "pathfinder": (109, 195),
    "munin1": (186, 273),
    "andes": (223, 338),
    "diabetes": (413, 602),
    "pigs": (441, 592),
    "link": (724, 1125),
    "munin2": (1003, 1244),
    "munin4": (1038, 1306),
    "munin3": (1041, 1388),
    "munin": (1041, 1397),
}


@dataclass(frozen=True)
class Cpdag:
    n: int
    directed: frozenset[tuple[int, int]]
    undirected: frozenset[frozenset[int]]

    def __post_init__(self):
        if {frozenset(e) for e in self.directed} & set(self.undirected):
            raise ValueError("an adjacency cannot be both directed and undirected")

    def skeleton(self) -> set[frozenset[int]]:
        return {frozenset(e) for e in self.directed} | set(self.undirected)

    def mark(self, a: int, b: int):
        """'->' if a->b, '<-' if b->a, '--' if undirected, None if non-adjacent."""
        if (a, b) in self.directed:
            return "->"
        if (b, a) in self.directed:
            return "<-"
        if frozenset((a, b)) in self.undirected:
            return "--"
        return None


def _order_edges(dag: Dag) -> list[tuple[int, int]]:
    """Edges in the total order used for compelled-edge labelling.

    Repeatedly take the lowest node (in topological order) that still has an
    unordered incoming edge, and order its edge from the highest such parent.
    """
    topo = dag.topological_order()
    rank = {v: i for i, v in enumerate(topo)}
    ordered = []
    for y in topo:
        for x in sorted(dag.parents[y], key=lambda p: -rank[p]):
            ordered.append((x, y))
    return ordered


def dag_to_cpdag(dag: Dag) -> Cpdag:
    """Label every edge compelled or reversible and return the CPDAG."""
    edges = _order_edges(dag)
    pos = {e: i for i, e in enumerate(edges)}
    label: dict[tuple[int, int], str | None] = {e: None for e in edges}
    parents = dag.parents

    def into(y):
        return [(z, y) for z in parents[y]]

    while True:
        unknown = [e for e in edges if label[e] is None]
        if not unknown:
            break
        x, y = min(unknown, key=pos.__getitem__)
        restart = False
        for w in parents[x]:
            if label[(w, x)] != "compelled":
                continue
            if w not in parents[y]:
                for e in into(y):
                    label[e] = "compelled"
                restart = True
                break
            label[(w, y)] = "compelled"
        if restart:
            continue
        if any(z != x and z not in parents[x] for z in parents[y]):
            fill = "compelled"
        else:
            fill = "reversible"
        for e in into(y):
            if label[e] is None:
                label[e] = fill
    directed = frozenset(e for e in edges if label[e] == "compelled")
    undirected = frozenset(frozenset(e) for e in edges if label[e] == "reversible")
    return Cpdag(dag.n, directed, undirected)


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    wd: int
    shd: int
    sp: int
    skel_fp: int
    skel_fn: int
    f1: float
    m: int

    @property
    def tp_wd(self) -> int:
        return self.tp + self.wd

    def normalized(self) -> dict[str, float]:
        """Counts divided by the truth edge count m (all zero when m = 0)."""
        keys = ("tp", "fp", "fn", "wd", "shd", "tp_wd")
        if self.m == 0:
            return {k: 0.0 for k in keys}
        return {k: getattr(self, k) / self.m for k in keys}

    def as_row(self) -> dict[str, object]:
        row = {"TP": self.tp, "FP": self.fp, "FN": self.fn, "WD": self.wd, "SHD": self.shd,
               "SP": self.sp, "F1": round(self.f1, 6), "TP+WD": self.tp_wd, "m": self.m}
        for k, v in self.normalized().items():
            row[f"{k.upper().replace('_', '+')}/m"] = round(v, 6)
        return row

    def to_tsv(self) -> str:
        row = self.as_row()
        return "\t".join(row) + "\n" + "\t".join(str(v) for v in row.values()) + "\n"

    def to_kv(self) -> str:
        return "".join(f"{k}: {v}\n" for k, v in self.as_row().items())


def _check(learned: Dag, truth: Dag):
    if learned.n != truth.n:
        raise ValueError(f"node sets differ: learned has {learned.n} nodes, truth has {truth.n}")


def shd_counts(learned: Dag, truth: Dag) -> tuple[int, int, int, int]:
    """(TP, FP, FN, WD) over unordered node pairs of the two CPDAGs."""
    _check(learned, truth)
    cl, ct = dag_to_cpdag(learned), dag_to_cpdag(truth)
    tp = fp = fn = wd = 0
    for pair in cl.skeleton() | ct.skeleton():
        a, b = sorted(pair)
        ml, mt = cl.mark(a, b), ct.mark(a, b)
        if ml is None:
            fn += 1
        elif mt is None:
            fp += 1
        elif ml == mt:
            tp += 1
        else:
            wd += 1
    return tp, fp, fn, wd


def shd(learned: Dag, truth: Dag) -> int:
    _, fp, fn, wd = shd_counts(learned, truth)
    return fn + fp + wd


def _skeleton_counts(learned: Dag, truth: Dag):
    _check(learned, truth)
    sl, st = learned.skeleton(), truth.skeleton()
    return len(sl & st), len(sl - st), len(st - sl)


def f1_from_counts(sp: int, fp: int, fn: int) -> float:
    den = sp + 0.5 * (fp + fn)
    return 1.0 if den == 0 else sp / den


def f1_skeleton(learned: Dag, truth: Dag) -> float:
    return f1_from_counts(*_skeleton_counts(learned, truth))


def report(learned: Dag, truth: Dag) -> EvalReport:
    tp, fp, fn, wd = shd_counts(learned, truth)
    sp, sfp, sfn = _skeleton_counts(learned, truth)
    return EvalReport(tp, fp, fn, wd, fn + fp + wd, sp, sfp, sfn, f1_from_counts(sp, sfp, sfn), truth.n_edges)
