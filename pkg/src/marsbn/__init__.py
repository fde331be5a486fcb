"""Bayesian network structure learning with MARS/GCV local scores.

Typical use::

    from marsbn import learn_dag, load_csv, prune_dominated, score_all_variables
    data = load_csv("data.csv")
    cache = score_all_variables(data, lam=5)
    result = learn_dag(prune_dominated(cache))
"""

from .dataset import (DataError, Dataset, GroundTruthNetwork, VariableMeta, generate_network,
                      load_csv, sample, write_csv)
from .evaluation import EvalReport, dag_to_cpdag, f1_skeleton, report, shd
from .forest import ForestConfig, filter_candidates, rank_candidates
from .graph import CycleError, Dag, read_edges, write_edges
from .mars import FitConfig, MarsModel, backward_prune, fit_mars, forward_pass, gcv
from .scoring import (ScoreCache, ScoreFileError, ScoreRecord, prune_dominated, read_score_file,
                      score_all_variables, write_score_file)
from .search import SearchError, SearchResult, learn_dag, search_exact, search_local, total_score

__version__ = "0.1.0"

__all__ = [
    "CycleError", "Dag", "DataError", "Dataset", "EvalReport", "FitConfig", "ForestConfig",
    "GroundTruthNetwork", "MarsModel", "ScoreCache", "ScoreFileError", "ScoreRecord", "SearchError",
    "SearchResult", "VariableMeta", "backward_prune", "dag_to_cpdag", "f1_skeleton", "filter_candidates",
    "fit_mars", "forward_pass", "gcv", "generate_network", "learn_dag", "load_csv", "prune_dominated",
    "rank_candidates", "read_edges", "read_score_file", "report", "sample", "score_all_variables",
    "search_exact", "search_local", "shd", "total_score", "write_csv", "write_edges", "write_score_file",
]
