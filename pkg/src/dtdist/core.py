"""Distributions over the boolean hypercube {-1,+1}^n.

Two concrete representations:

* `DistTree` -- a decision tree whose leaves carry densities; the pmf is
  constant on each leaf subcube.
* `DensePmf` -- an explicit table of 2^n probabilities (n <= 20).

Plus `DistOracle`, the single access point experiments use to draw
samples, draw subcube-conditioned samples, or evaluate the pmf, with an
explicit access mode and per-mode query accounting.

Conventions: coordinates are 0-indexed; a point is an int8 vector of
signs; bit i of a dense-table index is 1 exactly when coordinate i is +1.
"""

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional, Union

import numpy as np

from ._seeds import derive_seed, stream
from .errors import (
    DimensionMismatchError,
    InvalidPmfError,
    InvalidTreeError,
    OracleModeError,
    RejectionCapExceededError,
    ZeroWeightSubcubeError,
)

MAX_DENSE_N = 20

# identities and checks hold to this additive tolerance
ATOL = 1e-9
# serialization round-trips hold to this tolerance
ATOL_ROUNDTRIP = 1e-12


# ---------------------------------------------------------------------------
# points


def as_point(x, n: Optional[int] = None) -> np.ndarray:
    """Validate and convert one point to an int8 sign vector."""
    arr = np.asarray(x, dtype=np.int8)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"point must be 1-d, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise DimensionMismatchError(f"point has {arr.shape[0]} coords, expected {n}")
    if not np.all(np.abs(arr) == 1):
        raise ValueError("point coordinates must be -1 or +1")
    return arr


_POINTS_CACHE: dict = {}


def all_points(n: int) -> np.ndarray:
    """(2^n, n) matrix whose row k is the point with index k.

    Cached per n; callers must treat the result as read-only.
    """
    got = _POINTS_CACHE.get(n)
    if got is None:
        idx = np.arange(1 << n, dtype=np.int64)
        bits = (idx[:, None] >> np.arange(n)) & 1
        got = (2 * bits - 1).astype(np.int8)
        got.setflags(write=False)
        if n <= MAX_DENSE_N:
            _POINTS_CACHE[n] = got
    return got


def points_to_indices(X: np.ndarray) -> np.ndarray:
    """Dense-table indices for a (k, n) batch of points."""
    bits = (X > 0).astype(np.int64)
    return bits @ (np.int64(1) << np.arange(X.shape[1], dtype=np.int64))


def point_index(x) -> int:
    return int(points_to_indices(np.asarray(x, dtype=np.int8)[None, :])[0])


def index_to_point(idx: int, n: int) -> np.ndarray:
    bits = (idx >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.int8)


# ---------------------------------------------------------------------------
# restrictions


@dataclass(frozen=True)
class Restriction:
    """A partial assignment of coordinates to signs; names a subcube.

    `pairs` holds (coordinate, sign) with distinct coordinates.  The
    canonical key sorts by coordinate so that restrictions built in
    different orders compare and hash the same.
    """

    pairs: tuple = ()

    def __post_init__(self):
        coords = [i for i, _ in self.pairs]
        if len(set(coords)) != len(coords):
            raise ValueError(f"repeated coordinate in restriction {self.pairs}")
        for i, b in self.pairs:
            if i < 0:
                raise ValueError(f"negative coordinate {i}")
            if b not in (-1, 1):
                raise ValueError(f"sign must be -1 or +1, got {b}")

    @classmethod
    def empty(cls) -> "Restriction":
        return cls(())

    @classmethod
    def of(cls, *pairs) -> "Restriction":
        """Build from (coord, sign) pairs or a single {coord: sign} mapping."""
        if len(pairs) == 1 and isinstance(pairs[0], dict):
            pairs = tuple(pairs[0].items())
        return cls(tuple((int(i), int(b)) for i, b in pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def fixed(self) -> dict:
        return dict(self.pairs)

    def coords(self) -> tuple:
        return tuple(i for i, _ in self.pairs)

    def extended(self, i: int, b: int) -> "Restriction":
        return Restriction(self.pairs + ((int(i), int(b)),))

    def key(self) -> tuple:
        return tuple(sorted(self.pairs))

    def free_coords(self, n: int) -> list:
        taken = set(self.coords())
        return [i for i in range(n) if i not in taken]

    def consistent_mask(self, X: np.ndarray) -> np.ndarray:
        """Boolean mask over the rows of X that lie in the subcube."""
        mask = np.ones(X.shape[0], dtype=bool)
        for i, b in self.pairs:
            mask &= X[:, i] == b
        return mask

    def matches(self, x) -> bool:
        return all(x[i] == b for i, b in self.pairs)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Copy of X with the fixed coordinates overwritten."""
        out = np.array(X, copy=True)
        for i, b in self.pairs:
            out[:, i] = b
        return out

    def __str__(self) -> str:
        if not self.pairs:
            return "(empty)"
        return ",".join(f"{i}={'+1' if b > 0 else '-1'}" for i, b in self.key())

    @classmethod
    def parse(cls, text: str) -> "Restriction":
        """Parse "0=+1,3=-1" (empty string means the full cube)."""
        text = text.strip()
        if not text or text == "(empty)":
            return cls.empty()
        pairs = []
        for part in text.split(","):
            i, _, b = part.partition("=")
            pairs.append((int(i), int(b)))
        return cls.of(*pairs)


EMPTY = Restriction.empty()


# ---------------------------------------------------------------------------
# decision-tree distributions


@dataclass(frozen=True)
class Leaf:
    density: float


@dataclass(frozen=True)
class Internal:
    var: int
    lo: Union["Internal", Leaf]  # branch taken when x[var] == -1
    hi: Union["Internal", Leaf]


Node = Union[Internal, Leaf]


def node_depth(node: Node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(node_depth(node.lo), node_depth(node.hi))


class DistTree:
    """Depth-d decision tree computing a pmf on {-1,+1}^n.

    A point's probability is the density at the leaf its path reaches;
    conditioned on a leaf, the distribution is uniform on the leaf's
    subcube.  Valid trees never repeat a split variable along a path and
    satisfy sum over leaves of 2^(n-|path|) * density = 1 within 1e-9.
    Treat instances as immutable.
    """

    def __init__(self, n: int, root: Node):
        if n < 0:
            raise InvalidTreeError(f"n must be nonnegative, got {n}")
        self.n = int(n)
        self.root = root
        self._flat = None  # lazy: parallel arrays for vectorized descent
        self._cond_cache: dict = {}
        self._validate()

    # -- structure ---------------------------------------------------------

    def _validate(self):
        total = 0.0

        def walk(node, path):
            nonlocal total
            if isinstance(node, Leaf):
                if node.density < -1e-12:
                    raise InvalidTreeError(f"negative leaf density {node.density}")
                total += node.density * 2.0 ** (self.n - len(path))
                return
            if not 0 <= node.var < self.n:
                raise InvalidTreeError(f"split variable {node.var} out of range")
            if node.var in path:
                raise InvalidTreeError(f"variable {node.var} repeated on a path")
            walk(node.lo, path | {node.var})
            walk(node.hi, path | {node.var})

        walk(self.root, set())
        if abs(total - 1.0) > ATOL:
            raise InvalidTreeError(f"leaf masses sum to {total!r}, not 1")

    def depth(self) -> int:
        return node_depth(self.root)

    def leaves(self) -> list:
        """Preorder list of (Restriction, density) over the leaves."""
        out = []

        def walk(node, restriction):
            if isinstance(node, Leaf):
                out.append((restriction, node.density))
                return
            walk(node.lo, restriction.extended(node.var, -1))
            walk(node.hi, restriction.extended(node.var, +1))

        walk(self.root, EMPTY)
        return out

    def _flatten(self):
        """Preorder arrays: var (-1 at leaves), child indices, density, depth.

        Children always carry a larger index than their parent, so a single
        reversed pass computes bottom-up aggregates.
        """
        if self._flat is not None:
            return self._flat
        var, lo, hi, density, depth = [], [], [], [], []

        def walk(node, d):
            j = len(var)
            if isinstance(node, Leaf):
                var.append(-1)
                lo.append(-1)
                hi.append(-1)
                density.append(node.density)
                depth.append(d)
                return j
            var.append(node.var)
            lo.append(-1)
            hi.append(-1)
            density.append(0.0)
            depth.append(d)
            lo[j] = walk(node.lo, d + 1)
            hi[j] = walk(node.hi, d + 1)
            return j

        walk(self.root, 0)
        self._flat = {
            "var": np.array(var, dtype=np.int64),
            "lo": np.array(lo, dtype=np.int64),
            "hi": np.array(hi, dtype=np.int64),
            "density": np.array(density, dtype=np.float64),
            "depth": np.array(depth, dtype=np.int64),
        }
        return self._flat

    def conditional_masses(self, s: Restriction) -> np.ndarray:
        """Per-node mass of (subtree cell) intersect (subcube s).

        Entry j is Pr[x in subtree j and x consistent with s] when leaf
        densities are interpreted as probabilities.  Cached per subcube;
        with s empty this is the plain subtree-mass table used by sampling.
        """
        key = s.key()
        cached = self._cond_cache.get(key)
        if cached is not None:
            return cached
        f = self._flatten()
        fixed = s.fixed()
        out = np.zeros(len(f["var"]), dtype=np.float64)

        def rec(j, consumed):
            v = f["var"][j]
            if v < 0:
                outside = len(fixed) - consumed  # s-coords not on the path
                out[j] = f["density"][j] * 2.0 ** (self.n - f["depth"][j] - outside)
                return out[j]
            if v in fixed:
                child = f["lo"][j] if fixed[v] < 0 else f["hi"][j]
                out[j] = rec(child, consumed + 1)
            else:
                out[j] = rec(f["lo"][j], consumed) + rec(f["hi"][j], consumed)
            return out[j]

        rec(0, 0)
        self._cond_cache[key] = out
        return out

    # -- evaluation ---------------------------------------------------------

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        """pmf at each row of X."""
        if X.shape[1] != self.n:
            raise DimensionMismatchError(f"points have {X.shape[1]} coords, tree has {self.n}")
        f = self._flatten()
        out = np.empty(X.shape[0], dtype=np.float64)
        todo = [(0, np.arange(X.shape[0]))]
        while todo:
            j, rows = todo.pop()
            if rows.size == 0:
                continue
            v = f["var"][j]
            if v < 0:
                out[rows] = f["density"][j]
                continue
            hi_sel = X[rows, v] > 0
            todo.append((f["lo"][j], rows[~hi_sel]))
            todo.append((f["hi"][j], rows[hi_sel]))
        return out

    def eval(self, x) -> float:
        return float(self.eval_batch(as_point(x, self.n)[None, :])[0])

    def leaf_index_batch(self, X: np.ndarray) -> np.ndarray:
        """Preorder leaf ordinal each row of X routes to."""
        f = self._flatten()
        leaf_ord = np.cumsum(f["var"] < 0) - 1  # ordinal among leaves
        out = np.empty(X.shape[0], dtype=np.int64)
        todo = [(0, np.arange(X.shape[0]))]
        while todo:
            j, rows = todo.pop()
            if rows.size == 0:
                continue
            v = f["var"][j]
            if v < 0:
                out[rows] = leaf_ord[j]
                continue
            hi_sel = X[rows, v] > 0
            todo.append((f["lo"][j], rows[~hi_sel]))
            todo.append((f["hi"][j], rows[hi_sel]))
        return out

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        def conv(node):
            if isinstance(node, Leaf):
                return {"leaf": float(node.density)}
            return {"var": int(node.var), "lo": conv(node.lo), "hi": conv(node.hi)}

        return {"n": self.n, "root": conv(self.root)}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DistTree":
        def conv(d):
            if "leaf" in d:
                return Leaf(float(d["leaf"]))
            return Internal(int(d["var"]), conv(d["lo"]), conv(d["hi"]))

        return cls(int(obj["n"]), conv(obj["root"]))

    def __eq__(self, other):
        return (
            isinstance(other, DistTree)
            and self.n == other.n
            and self.to_json_dict() == other.to_json_dict()
        )


def uniform_tree(n: int) -> DistTree:
    return DistTree(n, Leaf(2.0 ** -n))


# ---------------------------------------------------------------------------
# dense pmfs


class DensePmf:
    """Explicit pmf table over 2^n points (n <= 20).

    table[k] is the probability of the point whose index is k.
    """

    def __init__(self, n: int, table, validate: bool = True):
        if n > MAX_DENSE_N:
            raise InvalidPmfError(f"dense representation capped at n={MAX_DENSE_N}, got {n}")
        self.n = int(n)
        self.table = np.asarray(table, dtype=np.float64)
        if self.table.shape != (1 << n,):
            raise DimensionMismatchError(
                f"table has shape {self.table.shape}, expected ({1 << n},)"
            )
        if validate:
            if self.table.min() < -1e-12:
                raise InvalidPmfError(f"negative probability {self.table.min()}")
            total = float(self.table.sum())
            if abs(total - 1.0) > ATOL:
                raise InvalidPmfError(f"probabilities sum to {total!r}, not 1")

    def cube(self) -> np.ndarray:
        """Table reshaped to [2]*n; axis a indexes coordinate n-1-a."""
        return self.table.reshape([2] * self.n)

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.n:
            raise DimensionMismatchError(f"points have {X.shape[1]} coords, pmf has {self.n}")
        return self.table[points_to_indices(X)]

    def eval(self, x) -> float:
        return float(self.table[point_index(as_point(x, self.n))])

    def to_json_dict(self) -> dict:
        return {"n": self.n, "table": [float(v) for v in self.table]}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DensePmf":
        return cls(int(obj["n"]), np.array(obj["table"], dtype=np.float64))


def uniform_dense(n: int) -> DensePmf:
    return DensePmf(n, np.full(1 << n, 2.0 ** -n))


Dist = Union[DistTree, DensePmf]


# ---------------------------------------------------------------------------
# shared operations


def eval_pmf(dist: Dist, x) -> float:
    """Probability of a single point."""
    return dist.eval(x)


def weighting(dist: Dist, x) -> float:
    """Density of `dist` relative to uniform: 2^n * pmf(x).

    Averages to exactly 1 over a uniform point.
    """
    return float(2.0 ** dist.n) * dist.eval(x)


def weighting_table(dist: Dist) -> np.ndarray:
    """Full table of 2^n * pmf over all points, indexed like DensePmf."""
    d = dist if isinstance(dist, DensePmf) else tree_to_dense(dist)
    return d.table * (2.0 ** d.n)


def tv_distance(a: DensePmf, b: DensePmf) -> float:
    """Total variation distance, (1/2) * l1 between the tables."""
    if a.n != b.n:
        raise DimensionMismatchError(f"n mismatch: {a.n} vs {b.n}")
    return 0.5 * float(np.abs(a.table - b.table).sum())


def restrict_dist(d: DensePmf, s: Restriction):
    """Conditional distribution on the subcube s.

    Returns (DensePmf over the free coordinates in increasing original
    order, subcube weight).  Raises ZeroWeightSubcubeError on mass 0.
    """
    idx = [slice(None)] * d.n
    for i, b in s.pairs:
        if not 0 <= i < d.n:
            raise DimensionMismatchError(f"restriction coordinate {i} out of range")
        idx[d.n - 1 - i] = (b + 1) // 2
    sub = d.cube()[tuple(idx)].reshape(-1)
    w = float(sub.sum())
    if w <= 0.0:
        raise ZeroWeightSubcubeError(f"subcube {s} has zero mass")
    m = d.n - len(s)
    return DensePmf(m, sub / w, validate=False), w


def subcube_weight(d: DensePmf, s: Restriction) -> float:
    idx = [slice(None)] * d.n
    for i, b in s.pairs:
        idx[d.n - 1 - i] = (b + 1) // 2
    return float(d.cube()[tuple(idx)].sum())


def tree_to_dense(t: DistTree) -> DensePmf:
    """Materialize the tree's pmf table (n <= 20)."""
    if t.n > MAX_DENSE_N:
        raise InvalidPmfError(f"dense representation capped at n={MAX_DENSE_N}")
    arr = np.empty([2] * t.n, dtype=np.float64) if t.n else np.empty([], dtype=np.float64)

    def fill(node, idx):
        if isinstance(node, Leaf):
            arr[tuple(idx)] = node.density
            return
        lo_idx = list(idx)
        lo_idx[t.n - 1 - node.var] = 0
        hi_idx = list(idx)
        hi_idx[t.n - 1 - node.var] = 1
        fill(node.lo, lo_idx)
        fill(node.hi, hi_idx)

    fill(t.root, [slice(None)] * t.n)
    return DensePmf(t.n, arr.reshape(-1))


def dense_to_tree(d: DensePmf) -> DistTree:
    """Minimal exact tree by greedy recursive splitting.

    Splits on the smallest coordinate whose two restrictions of the table
    differ; emits a leaf once the table is constant.  Reproduces the pmf
    exactly; the resulting depth is an exact cover, not necessarily the
    minimum decision-tree depth.
    """

    def build(sub, coords):
        # sub is the table over `coords` (increasing), little-endian
        if sub.max() - sub.min() <= 0.0:
            return Leaf(float(sub[0]))
        m = len(coords)
        cube = sub.reshape([2] * m)
        for pos, coord in enumerate(coords):
            ax = m - 1 - pos
            lo = np.take(cube, 0, axis=ax).reshape(-1)
            hi = np.take(cube, 1, axis=ax).reshape(-1)
            if not np.array_equal(lo, hi):
                rest = coords[:pos] + coords[pos + 1 :]
                return Internal(coord, build(lo, rest), build(hi, rest))
        return Leaf(float(sub[0]))  # unreachable: some axis must differ

    return DistTree(d.n, build(d.table.copy(), tuple(range(d.n))))


# ---------------------------------------------------------------------------
# oracle access


class OracleMode(IntEnum):
    """Access levels; a stronger mode grants every weaker mode's queries."""

    SAMPLE = 1
    SUBCUBE_SAMPLE = 2
    EXACT_PMF = 3


class DistOracle:
    """Query interface to an unknown distribution.

    backing: a DistTree, a DensePmf, or a callable `(k, rng) -> (k, n)
    int8 array` standing in for an external sample stream.  The mode caps
    what callers may ask for regardless of what the backing could answer;
    `query_count[mode]` tallies points drawn (or pmf evaluations) per mode.
    """

    REJECTION_CAP_FACTOR = 64  # attempts per accepted point: ceil(64 / w_hat)

    def __init__(self, backing, mode: OracleMode, seed: int = 0, n: Optional[int] = None):
        self.backing = backing
        self.mode = OracleMode(mode)
        self.seed = int(seed)
        if isinstance(backing, (DistTree, DensePmf)):
            self.n = backing.n
        else:
            if n is None:
                raise DimensionMismatchError("stream backing requires explicit n")
            if self.mode == OracleMode.EXACT_PMF:
                raise OracleModeError("EXACT_PMF mode requires a tree or dense backing")
            self.n = int(n)
        self.rng = stream(self.seed, "oracle")
        self.query_count = {m: 0 for m in OracleMode}

    # -- constructors --------------------------------------------------------

    @classmethod
    def exact(cls, dist: Dist, seed: int = 0) -> "DistOracle":
        return cls(dist, OracleMode.EXACT_PMF, seed)

    @classmethod
    def subcube(cls, dist, seed: int = 0, n: Optional[int] = None) -> "DistOracle":
        return cls(dist, OracleMode.SUBCUBE_SAMPLE, seed, n)

    @classmethod
    def sampler(cls, dist, seed: int = 0, n: Optional[int] = None) -> "DistOracle":
        return cls(dist, OracleMode.SAMPLE, seed, n)

    def split(self, worker_index: int) -> "DistOracle":
        """Independent child oracle for a worker; counts start at zero and
        are merged back by summation."""
        child_seed = derive_seed(self.seed, "split", worker_index)
        return DistOracle(self.backing, self.mode, child_seed, n=self.n)

    @staticmethod
    def merge_query_counts(oracles: Iterable["DistOracle"]) -> dict:
        total = {m: 0 for m in OracleMode}
        for o in oracles:
            for m, c in o.query_count.items():
                total[m] += c
        return total

    def total_queries(self) -> int:
        return sum(self.query_count.values())

    def _require(self, needed: OracleMode):
        if self.mode < needed:
            raise OracleModeError(f"mode {self.mode.name} does not grant {needed.name}")

    # -- plain samples --------------------------------------------------------

    def sample_batch(self, k: int) -> np.ndarray:
        self._require(OracleMode.SAMPLE)
        self.query_count[OracleMode.SAMPLE] += k
        return self._draw(EMPTY, k)

    def sample(self) -> np.ndarray:
        return self.sample_batch(1)[0]

    # -- subcube-conditioned samples -------------------------------------------

    def subcube_sample_batch(self, s: Restriction, k: int) -> np.ndarray:
        self._require(OracleMode.SUBCUBE_SAMPLE)
        self.query_count[OracleMode.SUBCUBE_SAMPLE] += k
        return self._draw(s, k)

    def subcube_sample(self, s: Restriction) -> np.ndarray:
        return self.subcube_sample_batch(s, 1)[0]

    def two_point_fraction_batch(self, X: np.ndarray, i: int, k: int) -> np.ndarray:
        """For each row x, draw k samples conditioned on the two-point
        subcube {x, x with coordinate i flipped} and report the fraction
        equal to x.  Counts rows*k subcube queries.

        Conditioned on that subcube the draws are i.i.d. Bernoulli with
        success probability D(x) / (D(x) + D(x^i)), so with an exact
        backing the count is drawn binomially instead of materializing k
        points; a stream backing falls back to literal rejection sampling.
        """
        self._require(OracleMode.SUBCUBE_SAMPLE)
        rows = X.shape[0]
        self.query_count[OracleMode.SUBCUBE_SAMPLE] += rows * k
        if isinstance(self.backing, (DistTree, DensePmf)):
            Xf = np.array(X, copy=True)
            Xf[:, i] *= -1
            px = self.backing.eval_batch(X)
            pf = self.backing.eval_batch(Xf)
            tot = px + pf
            if np.any(tot <= 0.0):
                raise ZeroWeightSubcubeError("two-point subcube has zero mass")
            return self.rng.binomial(k, px / tot) / float(k)
        out = np.empty(rows, dtype=np.float64)
        for r in range(rows):
            pairs = [(j, int(X[r, j])) for j in range(self.n) if j != i]
            got = self._reject(Restriction.of(*pairs), k)
            out[r] = float(np.mean(got[:, i] == X[r, i]))
        return out

    # -- exact pmf ---------------------------------------------------------------

    def pmf_batch(self, X: np.ndarray) -> np.ndarray:
        self._require(OracleMode.EXACT_PMF)
        self.query_count[OracleMode.EXACT_PMF] += X.shape[0]
        return self.backing.eval_batch(X)

    def pmf(self, x) -> float:
        return float(self.pmf_batch(as_point(x, self.n)[None, :])[0])

    def dense(self) -> DensePmf:
        """Full table (EXACT_PMF mode only); conversion cached."""
        self._require(OracleMode.EXACT_PMF)
        if isinstance(self.backing, DensePmf):
            return self.backing
        if not hasattr(self, "_dense_cache"):
            self._dense_cache = tree_to_dense(self.backing)
        return self._dense_cache

    # -- internals -----------------------------------------------------------------

    def _draw(self, s: Restriction, k: int) -> np.ndarray:
        for i, _ in s.pairs:
            if not 0 <= i < self.n:
                raise DimensionMismatchError(f"restriction coordinate {i} out of range")
        if isinstance(self.backing, DistTree):
            return self._draw_tree(s, k)
        if isinstance(self.backing, DensePmf):
            return self._draw_dense(s, k)
        if len(s) == 0:
            got = np.asarray(self.backing(k, self.rng), dtype=np.int8)
            if got.shape != (k, self.n):
                raise DimensionMismatchError(f"stream returned shape {got.shape}")
            return got
        return self._reject(s, k)

    def _draw_tree(self, s: Restriction, k: int) -> np.ndarray:
        t: DistTree = self.backing
        cm = t.conditional_masses(s)
        if cm[0] <= 0.0:
            raise ZeroWeightSubcubeError(f"subcube {s} has zero mass")
        f = t._flatten()
        fixed = s.fixed()
        bits = self.rng.integers(0, 2, size=(k, self.n), dtype=np.int8)
        X = (2 * bits - 1).astype(np.int8)
        for i, b in s.pairs:
            X[:, i] = b
        todo = [(0, np.arange(k))]
        while todo:
            j, rows = todo.pop()
            if rows.size == 0:
                continue
            v = f["var"][j]
            if v < 0:
                continue
            if v in fixed:
                child = f["lo"][j] if fixed[v] < 0 else f["hi"][j]
                todo.append((child, rows))
                continue
            mlo, mhi = cm[f["lo"][j]], cm[f["hi"][j]]
            p_hi = mhi / (mlo + mhi)
            hi_sel = self.rng.random(rows.size) < p_hi
            X[rows[hi_sel], v] = 1
            X[rows[~hi_sel], v] = -1
            todo.append((f["lo"][j], rows[~hi_sel]))
            todo.append((f["hi"][j], rows[hi_sel]))
        return X

    def _draw_dense(self, s: Restriction, k: int) -> np.ndarray:
        d: DensePmf = self.backing
        if len(s) == 0:
            idx = self.rng.choice(d.table.size, size=k, p=d.table)
            return all_points(d.n)[idx]
        pts = all_points(d.n)
        mask = s.consistent_mask(pts)
        w = float(d.table[mask].sum())
        if w <= 0.0:
            raise ZeroWeightSubcubeError(f"subcube {s} has zero mass")
        sub_idx = np.flatnonzero(mask)
        pick = self.rng.choice(sub_idx.size, size=k, p=d.table[sub_idx] / w)
        return pts[sub_idx[pick]]

    def _reject(self, s: Restriction, k: int) -> np.ndarray:
        """Collect k conditioned points by filtering plain samples.

        Total attempts are capped at ceil(64 / w_hat) per accepted point,
        where w_hat is the Laplace-smoothed running acceptance rate floored
        at a quarter of the subcube's uniform weight.  The floor keeps the
        cap finite so conditioning on (near-)zero-mass subcubes fails fast
        instead of looping.
        """
        w_floor = 2.0 ** -(min(len(s), 58) + 2)
        kept = []
        accepted = 0
        attempted = 0
        while accepted < k:
            w_hat = max((accepted + 1.0) / (attempted + 2.0), w_floor)
            budget = math.ceil(self.REJECTION_CAP_FACTOR / w_hat) * k
            if attempted >= budget:
                raise RejectionCapExceededError(
                    f"rejection cap hit after {attempted} attempts for {accepted}/{k} "
                    f"points in subcube {s}"
                )
            batch = int(min(max(1024, k), budget - attempted))
            got = self._draw(EMPTY, batch)
            attempted += batch
            sub = got[s.consistent_mask(got)]
            if sub.size:
                kept.append(sub)
                accepted += sub.shape[0]
        return np.concatenate(kept, axis=0)[:k]


# ---------------------------------------------------------------------------
# JSON with fixed float formatting


def json_dumps(obj) -> str:
    """Serialize with floats at 17 significant digits (lossless for float64)."""

    def emit(v):
        if isinstance(v, (bool, np.bool_)):
            return "true" if bool(v) else "false"
        if isinstance(v, float):
            return format(v, ".17g")
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, np.floating):
            return format(float(v), ".17g")
        if isinstance(v, str):
            return json.dumps(v)
        if v is None:
            return "null"
        if isinstance(v, (list, tuple, np.ndarray)):
            return "[" + ", ".join(emit(x) for x in v) + "]"
        if isinstance(v, dict):
            items = ", ".join(f"{json.dumps(str(k))}: {emit(x)}" for k, x in v.items())
            return "{" + items + "}"
        raise TypeError(f"cannot serialize {type(v)}")

    return emit(obj)


def save_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json_dumps(obj))
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def save_tree(path, t: DistTree):
    save_json(path, t.to_json_dict())


def load_tree(path) -> DistTree:
    return DistTree.from_json_dict(load_json(path))


def save_dense(path, d: DensePmf):
    save_json(path, d.to_json_dict())


def load_dense(path) -> DensePmf:
    return DensePmf.from_json_dict(load_json(path))
