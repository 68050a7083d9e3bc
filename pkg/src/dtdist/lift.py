"""Lifting uniform-distribution learners to tree-structured distributions.

Given a depth-d decision-tree distribution D (or a learned approximation
of one) and examples (x, f*(x)) with x ~ D, each leaf's conditional
distribution is uniform on its subcube.  So: route the sample by leaf,
rerandomize the coordinates fixed on each leaf's path (making the routed
points exactly uniform when D is exactly the tree), run any
uniform-distribution learner per leaf, and stitch the per-leaf
hypotheses back together by routing test points the same way.  The
D-weighted error of the stitched hypothesis is the reach-probability
weighted sum of per-leaf conditional errors.
"""

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

import numpy as np

from ._seeds import stream
from .core import (
    DensePmf,
    DistOracle,
    DistTree,
    all_points,
    points_to_indices,
)
from .errors import BudgetExceededError, ConfigError, DimensionMismatchError
from .builddt import LearnResult, learn_distribution_result


# ---------------------------------------------------------------------------
# samples and hypotheses


@dataclass
class LabeledSample:
    """Points with {0,1} labels."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.int8)
        self.y = np.asarray(self.y, dtype=np.uint8)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DimensionMismatchError(
                f"sample shapes {self.X.shape} / {self.y.shape} do not align"
            )
        if self.y.size and self.y.max() > 1:
            raise ValueError("labels must be 0 or 1")

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "LabeledSample":
        return LabeledSample(self.X[idx], self.y[idx])


class Hypothesis:
    """A {0,1}-valued predictor on {-1,+1}^n."""

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x) -> int:
        return int(self.predict_batch(np.asarray(x, dtype=np.int8)[None, :])[0])

    def to_json_dict(self) -> dict:
        raise NotImplementedError


class ConstantHypothesis(Hypothesis):
    def __init__(self, value: int):
        self.value = int(value)

    def predict_batch(self, X):
        return np.full(X.shape[0], self.value, dtype=np.uint8)

    def to_json_dict(self):
        return {"kind": "const", "value": self.value}


class TruthTableHypothesis(Hypothesis):
    """Explicit truth table, indexed like DensePmf (n <= 16)."""

    def __init__(self, n: int, table):
        if n > 16:
            raise ConfigError(f"truth tables capped at n=16, got {n}")
        self.n = int(n)
        self.table = np.asarray(table, dtype=np.uint8)
        if self.table.shape != (1 << n,):
            raise DimensionMismatchError(f"table shape {self.table.shape}")

    def predict_batch(self, X):
        return self.table[points_to_indices(X)]

    def to_json_dict(self):
        return {"kind": "table", "n": self.n, "table": [int(v) for v in self.table]}


class LowDegreeHypothesis(Hypothesis):
    """Sign of a sparse low-degree expansion.

    terms maps coordinate tuples to coefficients of the parity on those
    coordinates; the predictor is label 0 where the expansion of
    (-1)^label is nonnegative.
    """

    def __init__(self, n: int, terms: dict):
        self.n = int(n)
        self.terms = {tuple(int(i) for i in t): float(c) for t, c in terms.items()}

    def predict_batch(self, X):
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for t, c in self.terms.items():
            if t:
                acc += c * np.prod(X[:, t].astype(np.float64), axis=1)
            else:
                acc += c
        return (acc < 0.0).astype(np.uint8)

    def to_json_dict(self):
        return {
            "kind": "lowdeg",
            "n": self.n,
            "terms": [
                {"vars": list(t), "coef": c} for t, c in sorted(self.terms.items())
            ],
        }


class TreeRoutedHypothesis(Hypothesis):
    """Routes a point down a tree skeleton and defers to that leaf's
    hypothesis; leaf order matches DistTree.leaves() (preorder)."""

    def __init__(self, tree: DistTree, leaf_hyps: list):
        if len(tree.leaves()) != len(leaf_hyps):
            raise DimensionMismatchError("one hypothesis per leaf required")
        self.tree = tree
        self.leaf_hyps = list(leaf_hyps)

    def predict_batch(self, X):
        ords = self.tree.leaf_index_batch(X)
        out = np.empty(X.shape[0], dtype=np.uint8)
        for j, hyp in enumerate(self.leaf_hyps):
            rows = np.flatnonzero(ords == j)
            if rows.size:
                out[rows] = hyp.predict_batch(X[rows])
        return out

    def to_json_dict(self):
        hyps = iter(self.leaf_hyps)

        def conv(node):
            if hasattr(node, "density"):
                return {"hyp": next(hyps).to_json_dict()}
            return {"var": node.var, "lo": conv(node.lo), "hi": conv(node.hi)}

        return {"kind": "tree-routed", "n": self.tree.n, "root": conv(self.tree.root)}


def hypothesis_from_json(obj: dict) -> Hypothesis:
    kind = obj.get("kind")
    if kind == "const":
        return ConstantHypothesis(obj["value"])
    if kind == "table":
        return TruthTableHypothesis(obj["n"], obj["table"])
    if kind == "lowdeg":
        return LowDegreeHypothesis(
            obj["n"], {tuple(t["vars"]): t["coef"] for t in obj["terms"]}
        )
    if kind == "tree-routed":
        from .core import Internal, Leaf  # local to avoid unused at module scope

        hyps: list = []

        def conv(d):
            if "hyp" in d:
                hyps.append(hypothesis_from_json(d["hyp"]))
                return Leaf(0.0)
            return Internal(int(d["var"]), conv(d["lo"]), conv(d["hi"]))

        root = conv(obj["root"])
        n = int(obj["n"])
        # skeleton only: give it a valid uniform normalization
        leaves = len(hyps)

        def renorm(node, depth):
            if isinstance(node, Leaf):
                return Leaf(1.0 / (leaves * 2.0 ** (n - depth)))
            return Internal(node.var, renorm(node.lo, depth + 1), renorm(node.hi, depth + 1))

        return TreeRoutedHypothesis(DistTree(n, renorm(root, 0)), hyps)
    raise ConfigError(f"unknown hypothesis kind {kind!r}")


# ---------------------------------------------------------------------------
# learners


@dataclass
class UniformLearner:
    """A PAC learner for the uniform distribution with declared budgets.

    learn maps a LabeledSample (>= m points) to a Hypothesis with error
    at most eps against uniform w.p. >= 1 - delta.  c is the robustness
    constant: trained on a distribution eta-close to uniform in total
    variation, the error guarantee degrades to eps + c * eta.  Any
    (eps, delta) learner is automatically (eps, 3m)-robust, hence the
    default c = 3m.
    """

    name: str
    m: int
    eps: float
    delta: float
    learn: Callable[[LabeledSample], Hypothesis]
    c: Optional[float] = None

    def __post_init__(self):
        if self.c is None:
            self.c = 3.0 * self.m


def required_sample_size(m: int, d: int, eps: float, delta: float) -> int:
    """Labeled examples so every leaf of a depth-d tree that matters at
    error scale eps receives m points w.p. >= 1 - delta:
    ceil(8 * (d + m + ln(2^(d+1)/delta)) * 2^d / eps)."""
    return math.ceil(
        8.0 * (d + m + math.log(2.0 ** (d + 1) / delta)) * 2.0 ** d / eps
    )


def split_and_rerandomize(
    t: DistTree, sample: LabeledSample, rng: np.random.Generator
) -> list:
    """Partition the sample by the leaf each point reaches and overwrite
    each point's path coordinates with fresh uniform signs.

    When the sample is drawn from exactly the distribution of t, each
    returned part is uniform on the full cube: the off-path coordinates
    were already uniform conditionally on the leaf, and the path
    coordinates are rerandomized.  Labels ride along untouched (the
    rerandomized coordinates are exactly the ones the leaf's restriction
    had fixed, which the conditional target does not read).
    """
    if sample.n != t.n:
        raise DimensionMismatchError(f"sample n={sample.n}, tree n={t.n}")
    ords = t.leaf_index_batch(sample.X)
    parts = []
    for j, (restriction, _) in enumerate(t.leaves()):
        rows = np.flatnonzero(ords == j)
        Xl = np.array(sample.X[rows], copy=True)
        coords = list(restriction.coords())
        if coords and rows.size:
            bits = rng.integers(0, 2, size=(rows.size, len(coords)), dtype=np.int8)
            Xl[:, coords] = 2 * bits - 1
        parts.append(LabeledSample(Xl, sample.y[rows]))
    return parts


@dataclass
class LeafRecord:
    leaf: int
    restriction: str
    count: int
    status: str  # "ok", "skipped" (too few points), or "error"
    detail: str = ""


@dataclass
class LiftReport:
    hypothesis: Hypothesis
    leaf_records: list = field(default_factory=list)


def lift_learn_result(
    t: DistTree,
    learner: UniformLearner,
    sample: LabeledSample,
    rng: Optional[np.random.Generator] = None,
    eps: Optional[float] = None,
    delta: Optional[float] = None,
) -> LiftReport:
    """Run the learner on each leaf's rerandomized part and stitch.

    Leaves receiving fewer than learner.m points get the constant-0
    hypothesis, as does any leaf whose learner raises; both are recorded.
    A sample smaller than required_sample_size for the overall error
    target (eps, delta), defaulting to the learner's own, only warns.
    """
    rng = rng if rng is not None else stream(0, "lift")
    need = required_sample_size(
        learner.m,
        t.depth(),
        eps if eps is not None else learner.eps,
        delta if delta is not None else learner.delta,
    )
    if len(sample) < need:
        warnings.warn(
            f"sample of {len(sample)} is below the recommended {need}",
            stacklevel=2,
        )
    parts = split_and_rerandomize(t, sample, rng)
    hyps = []
    records = []
    for j, ((restriction, _), part) in enumerate(zip(t.leaves(), parts)):
        if len(part) < learner.m:
            hyps.append(ConstantHypothesis(0))
            records.append(
                LeafRecord(j, str(restriction), len(part), "skipped",
                           f"{len(part)} < m={learner.m}")
            )
            continue
        try:
            hyps.append(learner.learn(part))
            records.append(LeafRecord(j, str(restriction), len(part), "ok"))
        except Exception as exc:  # noqa: BLE001 - leaf failure must not kill the lift
            hyps.append(ConstantHypothesis(0))
            records.append(
                LeafRecord(j, str(restriction), len(part), "error", repr(exc))
            )
    return LiftReport(TreeRoutedHypothesis(t, hyps), records)


def lift_learn(
    t: DistTree,
    learner: UniformLearner,
    sample: LabeledSample,
    rng: Optional[np.random.Generator] = None,
) -> Hypothesis:
    return lift_learn_result(t, learner, sample, rng).hypothesis


# ---------------------------------------------------------------------------
# confidence boosting


def boost(learner: UniformLearner, delta_target: float) -> UniformLearner:
    """Drive the failure probability down to delta_target.

    Trains ceil(log2(2/delta_target)) independent runs on disjoint chunks
    and keeps the run with the lowest error on a holdout sized so that
    selection adds at most 10% to the error; the boosted learner declares
    (1.1 * eps, delta_target).
    """
    runs = max(1, math.ceil(math.log2(2.0 / delta_target)))
    holdout = math.ceil(
        2.0 * math.log(4.0 * runs / delta_target) / (0.05 * learner.eps) ** 2
    )
    m_new = runs * learner.m + holdout

    def learn(sample: LabeledSample) -> Hypothesis:
        if len(sample) < m_new:
            raise BudgetExceededError(
                f"boosted learner needs {m_new} points, got {len(sample)}"
            )
        train = len(sample) - holdout
        chunk = train // runs  # >= learner.m by the check above
        hold = sample.subset(slice(train, len(sample)))
        best = None
        for r in range(runs):
            part = sample.subset(slice(r * chunk, (r + 1) * chunk))
            hyp = learner.learn(part)
            err = float(np.mean(hyp.predict_batch(hold.X) != hold.y))
            if best is None or err < best[0]:
                best = (err, hyp)
        return best[1]

    return UniformLearner(
        name=f"boost({learner.name})",
        m=m_new,
        eps=1.1 * learner.eps,
        delta=delta_target,
        learn=learn,
    )


# ---------------------------------------------------------------------------
# reference uniform learners


def low_degree_learn(sample: LabeledSample, k: int) -> Hypothesis:
    """Estimate all parity correlations of degree <= k and predict with
    the sign of the thresholded expansion.

    Correlations are taken against (-1)^label; coefficients below the
    joint Hoeffding noise floor sqrt(2 ln(4 * #terms) / N) are zeroed.
    """
    n, N = sample.n, len(sample)
    if N == 0:
        return ConstantHypothesis(0)
    g = 1.0 - 2.0 * sample.y.astype(np.float64)  # label 0 -> +1, 1 -> -1
    Xf = sample.X.astype(np.float64)
    terms = [t for size in range(k + 1) for t in combinations(range(n), size)]
    floor = math.sqrt(2.0 * math.log(4.0 * len(terms)) / N)
    kept = {}
    for t in terms:
        chi = np.prod(Xf[:, t], axis=1) if t else np.ones(N)
        coef = float(np.mean(g * chi))
        if abs(coef) > floor:
            kept[t] = coef
    return LowDegreeHypothesis(n, kept)


def make_low_degree_learner(n: int, k: int, eps: float, delta: float) -> UniformLearner:
    terms = sum(math.comb(n, j) for j in range(k + 1))
    m = math.ceil(4.0 * terms * math.log(4.0 * terms / delta) / eps)
    return UniformLearner(
        name=f"lowdeg:{k}",
        m=m,
        eps=eps,
        delta=delta,
        learn=lambda s: low_degree_learn(s, k),
    )


def count_depth_trees(n: int, k: int) -> int:
    """Number of (not necessarily reduced) depth <= k tree predictors."""
    if k == 0 or n == 0:
        return 2
    return 2 + n * count_depth_trees(n - 1, k - 1) ** 2


def exhaustive_tree_learn(sample: LabeledSample, k: int) -> Hypothesis:
    """Empirical-risk-minimizing decision tree of depth <= k.

    Exhaustive search with memoization on (restriction, depth); among
    minimizers the lexicographically least encoding wins, where a leaf
    labeled 0 precedes a leaf labeled 1 precedes any split and splits
    compare by variable then subtrees.  Guarded at k <= 3, n <= 16.
    """
    n, N = sample.n, len(sample)
    if k > 3 or n > 16:
        raise BudgetExceededError(f"exhaustive search capped at k<=3, n<=16; got k={k}, n={n}")
    X, y = sample.X, sample.y
    memo: dict = {}

    def rec(key: tuple, mask: np.ndarray, depth: int):
        got = memo.get((key, depth))
        if got is not None:
            return got
        ones = int(y[mask].sum())
        zeros = int(mask.sum()) - ones
        # leaf encoding (0, label); internal (1, var, lo, hi)
        best = (ones, (0, 0)) if ones <= zeros else (zeros, (0, 1))
        if depth > 0:
            taken = {i for i, _ in key}
            for v in range(n):
                if v in taken:
                    continue
                mlo = mask & (X[:, v] < 0)
                mhi = mask & (X[:, v] > 0)
                elo, tlo = rec(tuple(sorted(key + ((v, -1),))), mlo, depth - 1)
                ehi, thi = rec(tuple(sorted(key + ((v, 1),))), mhi, depth - 1)
                cand = (elo + ehi, (1, v, tlo, thi))
                if cand < best:
                    best = cand
        memo[(key, depth)] = best
        return best

    _, encoding = rec((), np.ones(N, dtype=bool), k)

    def evaluate(enc, P):
        if enc[0] == 0:
            return np.full(P.shape[0], enc[1], dtype=np.uint8)
        _, v, lo, hi = enc
        out = np.empty(P.shape[0], dtype=np.uint8)
        sel = P[:, v] > 0
        out[sel] = evaluate(hi, P[sel])
        out[~sel] = evaluate(lo, P[~sel])
        return out

    hyp = TruthTableHypothesis(n, evaluate(encoding, all_points(n)))
    hyp.tree_encoding = encoding
    return hyp


def make_exhaustive_tree_learner(n: int, k: int, eps: float, delta: float) -> UniformLearner:
    log_h = math.log(count_depth_trees(n, k))
    m = math.ceil((log_h + math.log(1.0 / delta)) / eps)
    return UniformLearner(
        name=f"tree:{k}",
        m=m,
        eps=eps,
        delta=delta,
        learn=lambda s: exhaustive_tree_learn(s, k),
    )


# ---------------------------------------------------------------------------
# evaluation helpers


def uniform_error(hyp: Hypothesis, target_table: np.ndarray) -> float:
    n = int(round(math.log2(target_table.size)))
    pred = hyp.predict_batch(all_points(n))
    return float(np.mean(pred != target_table))


def dist_error(hyp: Hypothesis, target_table: np.ndarray, dense: DensePmf) -> float:
    """Pr_{x ~ D}[hyp(x) != f*(x)] by enumeration."""
    pred = hyp.predict_batch(all_points(dense.n))
    return float(dense.table[pred != target_table].sum())


def make_labeled_source(d_oracle: DistOracle, target_table: np.ndarray) -> Callable:
    """labeled_source(k) drawing x ~ D and labeling with the target table."""

    def source(k: int) -> LabeledSample:
        X = d_oracle.sample_batch(k)
        return LabeledSample(X, target_table[points_to_indices(X)])

    return source


# ---------------------------------------------------------------------------
# end to end


@dataclass
class LiftResult:
    hypothesis: Hypothesis
    tree: DistTree
    learn_result: LearnResult
    leaf_records: list
    learner_name: str
    boosted: bool
    labeled_count: int


def end_to_end(
    d_oracle: DistOracle,
    labeled_source: Callable[[int], LabeledSample],
    learner: UniformLearner,
    depth_budget: int,
    eps: float,
    delta: float,
    estimator_kind: str = "exact",
    dist_eps: Optional[float] = None,
    dist_kwargs: Optional[dict] = None,
    seed: int = 0,
) -> LiftResult:
    """Learn the distribution, then lift the learner over the learned tree.

    Stages: (1) learn a depth-d tree for D to total variation dist_eps,
    defaulting to the robustness budget eps / (3 * learner.m); (2) boost
    the learner to per-leaf failure delta / 2^(d+1) unless its declared
    delta already meets that; (3) draw required_sample_size labeled
    points and lift.  The default dist_eps makes stage (1) extremely
    demanding for sample-based estimators; pass dist_eps/dist_kwargs to
    trade guarantee for feasibility.
    """
    if dist_eps is None:
        dist_eps = eps / (3.0 * learner.m)
    lr = learn_distribution_result(
        d_oracle,
        depth_budget,
        dist_eps,
        delta / 2.0,
        estimator_kind,
        **(dist_kwargs or {}),
    )
    delta_leaf = delta / (2.0 * 2.0 ** depth_budget)
    boosted = learner.delta > delta_leaf
    use = boost(learner, delta_leaf) if boosted else learner
    count = required_sample_size(use.m, depth_budget, eps, delta)
    sample = labeled_source(count)
    report = lift_learn_result(
        lr.tree, use, sample, stream(seed, "lift-rerand"), eps=eps, delta=delta
    )
    return LiftResult(
        hypothesis=report.hypothesis,
        tree=lr.tree,
        learn_result=lr,
        leaf_records=report.leaf_records,
        learner_name=use.name,
        boosted=boosted,
        labeled_count=count,
    )
