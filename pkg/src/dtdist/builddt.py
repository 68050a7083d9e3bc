"""Fitting a depth-bounded decision tree to an unknown distribution.

The search minimizes the expected total influence left at the leaves,

    objective(T) = E_{leaf l of T, reached uniformly} [ Inf((f_D)_l) ],

over trees whose every split variable has restricted influence at least
tau where it is used.  Small leaf influence certifies closeness: a leaf
whose restricted weighting has low total influence is nearly constant,
so labeling it with its subcube mass approximates D there.  Splitting on
coordinate i lowers the objective by exactly Inf_i at that node, which
is why only influential coordinates are worth considering and why the
tree returned by exhaustive recursion over candidates is optimal among
all such trees.

Influences come from an InfluenceOracle (exact, monotone-bias, or
two-point conditioning); leaf masses come from the distribution oracle
(exactly, or as consistent fractions of a plain-sample pool).
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Union

from .core import (
    EMPTY,
    DistOracle,
    DistTree,
    Internal,
    Leaf,
    Node,
    OracleMode,
    Restriction,
    subcube_weight,
)
from .errors import BudgetExceededError, ConfigError, DegenerateEstimateError
from .influence import (
    KIND_EXACT,
    EstimatorBudget,
    InfluenceOracle,
)

THRESHOLD_EXACT = "exact"
THRESHOLD_ESTIMATED = "estimated"


def default_tau(eps: float, depth_budget: int) -> float:
    """Influence threshold eps / (8 d^2); with it the optimal tree's
    objective is small enough that the result lands within eps/2 of D in
    total variation, with slack for estimation error."""
    if depth_budget <= 0:
        return eps
    return eps / (8.0 * depth_budget * depth_budget)


def default_leaf_sample_count(eps: float, delta: float, depth_budget: int) -> int:
    """Plain samples per leaf-mass estimate: Hoeffding gives each leaf's
    weighting value +-eps/2 at confidence 1 - delta/2^(d+1) after a union
    bound over at most 2^(d+1) leaf evaluations."""
    d = max(depth_budget, 0)
    return math.ceil(32.0 * 4.0 ** d * math.log(2.0 ** (d + 2) / delta) / (eps * eps))


def call_count_bound(eps: float, depth_budget: int) -> float:
    """Upper bound (16 d^3 / eps)^d on recursive calls; the factor-2 slack
    over the exact-threshold bound covers estimated thresholds."""
    if depth_budget <= 0:
        return 1.0
    return (16.0 * depth_budget ** 3 / eps) ** depth_budget


@dataclass
class BuildParams:
    """Knobs of one tree search."""

    depth_budget: int
    tau: float
    eps: float
    delta: float
    leaf_sample_count: int
    threshold_mode: str = THRESHOLD_EXACT

    def validate(self, n: int, i_oracle: Optional[InfluenceOracle] = None):
        if self.depth_budget < 0 or self.depth_budget > n:
            raise ConfigError(f"depth budget {self.depth_budget} outside [0, {n}]")
        if not 0.0 < self.eps < 1.0:
            raise ConfigError(f"eps must be in (0,1), got {self.eps}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must be in (0,1), got {self.delta}")
        if not 0.0 < self.tau <= self.eps:
            raise ConfigError(f"tau must be in (0, eps], got {self.tau}")
        if self.leaf_sample_count < 1:
            raise ConfigError("leaf_sample_count must be positive")
        if self.threshold_mode not in (THRESHOLD_EXACT, THRESHOLD_ESTIMATED):
            raise ConfigError(f"unknown threshold mode {self.threshold_mode!r}")
        if (
            self.threshold_mode == THRESHOLD_ESTIMATED
            and i_oracle is not None
            and i_oracle.accuracy > self.tau / 4.0 + 1e-12
        ):
            raise ConfigError(
                f"estimated thresholds need influence accuracy <= tau/4 "
                f"({self.tau / 4.0:.3g}), oracle advertises {i_oracle.accuracy:.3g}"
            )


@dataclass
class SearchStats:
    recursive_calls: int = 0
    influence_queries: int = 0
    leaf_estimates: int = 0

    def merged(self, other: "SearchStats") -> "SearchStats":
        return SearchStats(
            self.recursive_calls + other.recursive_calls,
            self.influence_queries + other.influence_queries,
            self.leaf_estimates + other.leaf_estimates,
        )


class _Search:
    """One memoized search: shared caches, stats, and the recursion guard."""

    def __init__(self, d_oracle: DistOracle, i_oracle: InfluenceOracle, params: BuildParams):
        params.validate(d_oracle.n, i_oracle)
        self.d_oracle = d_oracle
        self.i_oracle = i_oracle
        self.params = params
        self.stats = SearchStats()
        self.guard = call_count_bound(params.eps, params.depth_budget) * d_oracle.n
        self.memo: dict = {}
        self.inf_cache: dict = {}

    def influences(self, s: Restriction):
        got = self.inf_cache.get(s.key())
        if got is None:
            coords, vals, _ = self.i_oracle.estimate_all(s)
            self.stats.influence_queries += len(coords)
            got = (coords, vals)
            self.inf_cache[s.key()] = got
        return got

    def candidates(self, s: Restriction) -> list:
        coords, vals = self.influences(s)
        cut = self.params.tau
        if self.params.threshold_mode == THRESHOLD_ESTIMATED:
            cut = 0.75 * self.params.tau
        return [i for i, v in zip(coords, vals) if v >= cut]

    def leaf_density(self, s: Restriction) -> float:
        self.stats.leaf_estimates += 1
        if self.d_oracle.mode == OracleMode.EXACT_PMF:
            w = subcube_weight(self.d_oracle.dense(), s)
        else:
            pool = self.i_oracle.plain_pool(self.params.leaf_sample_count)
            w = float(s.consistent_mask(pool).mean())
        # weighting value 2^|s| * w, stored as a density by dividing by 2^n
        return w / 2.0 ** (self.d_oracle.n - len(s))

    def build(self, s: Restriction, budget: int):
        self.stats.recursive_calls += 1
        if self.stats.recursive_calls > self.guard:
            raise BudgetExceededError(
                f"tree search exceeded {self.guard:.3g} recursive calls"
            )
        key = (s.key(), budget)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        _, vals = self.influences(s)
        cands = self.candidates(s) if budget > 0 else []
        if not cands:
            node: Node = Leaf(self.leaf_density(s))
            obj = float(vals.sum())
        else:
            best = None
            # ascending order + strict improvement = smallest index wins ties
            for i in cands:
                lo, lo_obj = self.build(s.extended(i, -1), budget - 1)
                hi, hi_obj = self.build(s.extended(i, +1), budget - 1)
                obj_i = 0.5 * (lo_obj + hi_obj)
                if best is None or obj_i < best[1]:
                    best = (Internal(i, lo, hi), obj_i)
            node, obj = best
        self.memo[key] = (node, obj)
        return node, obj


def candidate_set(i_oracle: InfluenceOracle, s: Restriction, p: BuildParams) -> list:
    """Free coordinates whose restricted influence estimate clears the
    threshold (tau exactly, or 3 tau / 4 when thresholds are estimated)."""
    coords, vals, _ = i_oracle.estimate_all(s)
    cut = p.tau if p.threshold_mode == THRESHOLD_EXACT else 0.75 * p.tau
    return [i for i, v in zip(coords, vals) if v >= cut]


def leaf_label(d_oracle: DistOracle, s: Restriction, p: BuildParams) -> float:
    """Leaf density for the subcube s: its weighting value 2^|s| * Pr[x in s]
    divided by 2^n.  Exact with EXACT_PMF access, otherwise the consistent
    fraction of leaf_sample_count fresh plain samples."""
    if d_oracle.mode == OracleMode.EXACT_PMF:
        w = subcube_weight(d_oracle.dense(), s)
    else:
        X = d_oracle.sample_batch(p.leaf_sample_count)
        w = float(s.consistent_mask(X).mean())
    return w / 2.0 ** (d_oracle.n - len(s))


def tree_objective(
    t: Union[DistTree, Node], i_oracle: InfluenceOracle, s: Restriction = EMPTY
) -> float:
    """E over leaves (each internal node splitting the mass evenly) of the
    estimated total influence of the restricted weighting at the leaf."""
    node = t.root if isinstance(t, DistTree) else t

    def walk(nd, r):
        if isinstance(nd, Leaf):
            return i_oracle.total_at(r)
        return 0.5 * (
            walk(nd.lo, r.extended(nd.var, -1)) + walk(nd.hi, r.extended(nd.var, +1))
        )

    return walk(node, s)


def build_dt(
    d_oracle: DistOracle,
    i_oracle: InfluenceOracle,
    s: Restriction,
    p: BuildParams,
):
    """Best depth-limited subtree for the restriction s.

    Returns (root node, objective value, SearchStats).  Recursion over
    all candidate splits with memoization on (canonical restriction,
    remaining budget); aborts past call_count_bound * n recursive calls.
    """
    search = _Search(d_oracle, i_oracle, p)
    node, obj = search.build(s, p.depth_budget)
    return node, obj, search.stats


# ---------------------------------------------------------------------------
# full learning pipeline


@dataclass
class LearnResult:
    """Learned tree plus the search's diagnostics.

    raw_leaf_values keeps the pre-normalization leaf densities (preorder)
    since the returned tree is rescaled to satisfy normalization exactly.
    """

    tree: DistTree
    objective: float
    stats: SearchStats
    params: BuildParams
    estimator_kind: str
    raw_leaf_values: list = field(default_factory=list)
    normalization: float = 1.0
    oracle_queries: dict = field(default_factory=dict)
    influence_accuracy: float = 0.0
    influence_confidence: float = 0.0


def _expected_query_count(n: int, d: int) -> int:
    """Distinct (restriction, coordinate) influence queries reachable by a
    memoized depth-d search; sizes the per-query confidence split."""
    restr = sum(math.comb(n, k) * 2 ** k for k in range(min(d, n) + 1))
    return max(1, n * restr)


def _scaled(node: Node, factor: float) -> Node:
    if isinstance(node, Leaf):
        return Leaf(node.density * factor)
    return Internal(node.var, _scaled(node.lo, factor), _scaled(node.hi, factor))


def learn_distribution_result(
    d_oracle: DistOracle,
    depth_budget: int,
    eps: float,
    delta: float,
    estimator_kind: str = KIND_EXACT,
    tau: Optional[float] = None,
    accuracy: Optional[float] = None,
    confidence: Optional[float] = None,
    leaf_sample_count: Optional[int] = None,
    budget: Optional[EstimatorBudget] = None,
) -> LearnResult:
    """Learn a depth-d tree distribution within eps total variation.

    Defaults follow the analysis: threshold tau = eps/(8 d^2), influence
    accuracy min(tau/4, eps/n), per-query confidence delta split over the
    worst-case number of distinct queries.  Those estimator targets can be
    extremely sample-hungry at deep restrictions; pass an EstimatorBudget
    (and optionally a coarser tau) to bound the work, at the cost of the
    formal guarantee.  The returned tree is renormalized exactly; the raw
    estimated leaf values are kept in the result.
    """
    n = d_oracle.n
    tau = default_tau(eps, depth_budget) if tau is None else float(tau)
    if accuracy is None:
        accuracy = min(tau / 4.0, eps / max(n, 1))
    if confidence is None:
        confidence = delta / (2.0 * _expected_query_count(n, depth_budget))
    if leaf_sample_count is None:
        leaf_sample_count = default_leaf_sample_count(eps, delta, depth_budget)
    mode = THRESHOLD_EXACT if estimator_kind == KIND_EXACT else THRESHOLD_ESTIMATED
    i_oracle = InfluenceOracle(estimator_kind, d_oracle, accuracy, confidence, budget)
    params = BuildParams(
        depth_budget=depth_budget,
        tau=tau,
        eps=eps,
        delta=delta,
        leaf_sample_count=leaf_sample_count,
        threshold_mode=mode,
    )
    root, objective, stats = build_dt(d_oracle, i_oracle, EMPTY, params)

    # collect raw leaf densities and the realized normalization
    raw_vals: list = []
    total = 0.0

    def scan(node, depth):
        nonlocal total
        if isinstance(node, Leaf):
            raw_vals.append(node.density)
            total += node.density * 2.0 ** (n - depth)
            return
        scan(node.lo, depth + 1)
        scan(node.hi, depth + 1)

    scan(root, 0)
    if total <= 0.0:
        raise DegenerateEstimateError("all estimated leaf masses are zero")
    tree = DistTree(n, _scaled(root, 1.0 / total))
    return LearnResult(
        tree=tree,
        objective=objective,
        stats=stats,
        params=params,
        estimator_kind=estimator_kind,
        raw_leaf_values=raw_vals,
        normalization=total,
        oracle_queries={m.name: c for m, c in d_oracle.query_count.items()},
        influence_accuracy=accuracy,
        influence_confidence=confidence,
    )


def learn_distribution(
    d_oracle: DistOracle,
    depth_budget: int,
    eps: float,
    delta: float,
    estimator_kind: str = KIND_EXACT,
    **kwargs,
) -> DistTree:
    """As learn_distribution_result, returning just the tree."""
    return learn_distribution_result(
        d_oracle, depth_budget, eps, delta, estimator_kind, **kwargs
    ).tree
