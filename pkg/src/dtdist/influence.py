"""Variable influence of distribution weighting functions.

For a distribution D on {-1,+1}^n write f_D(x) = 2^n * D(x).  The
influence of coordinate i on a function f is

    Inf_i(f) = E_x |f(x) - f(x with coordinate i rerandomized)|
             = (1/2) E_x |f(x) - f(x with coordinate i flipped)|

with x uniform, and total influence is the sum over coordinates.  This
module computes influences of restricted weighting functions (f_D)_s,
where (f)_s(x) evaluates f with the coordinates in the restriction s
overwritten, three ways:

* exactly, by enumeration over a dense table;
* for monotone D, from plain samples via the identity
  Inf_i(f_{D_s}) = E_{x ~ D_s}[x_i];
* for arbitrary D, from subcube-conditioned samples via two-point
  conditioning: draw x ~ D_s, condition on {x, x with i flipped}, and
  average |2p - 1| where p is the fraction of draws equal to x.

Estimators report on the conditional scale Inf_i(f_{D_s}); the exact
restricted value follows from

    Inf_i((f_D)_s) = 2^|s| * Pr_D[x in s] * Inf_i(f_{D_s}).
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    EMPTY,
    DensePmf,
    DistOracle,
    OracleMode,
    Restriction,
    restrict_dist,
)
from .errors import BudgetExceededError, OracleModeError, RejectionCapExceededError

KIND_EXACT = "exact"
KIND_MONOTONE = "monotone"
KIND_SUBCUBE = "subcube"
KINDS = (KIND_EXACT, KIND_MONOTONE, KIND_SUBCUBE)


# ---------------------------------------------------------------------------
# exact enumeration


def _slice_cube(d: DensePmf, s: Restriction):
    """Sub-table of D on the subcube s.

    Returns (q, free) where free lists the unrestricted coordinates in
    increasing order and q is the table over them; axis a of q indexes
    coordinate free[m-1-a].
    """
    idx = [slice(None)] * d.n
    for i, b in s.pairs:
        idx[d.n - 1 - i] = (b + 1) // 2
    return d.cube()[tuple(idx)], s.free_coords(d.n)


def exact_influence_all(d: DensePmf, s: Restriction = EMPTY):
    """(free coords, their influences) of the restricted weighting (f_D)_s.

    Over the 2^m-point subcube, (f_D)_s takes value 2^n * D(y) on the
    fraction 2^-m of the full cube mapping to y, so

        Inf_i((f_D)_s) = 2^(n-m-1) * sum_y |D(y) - D(y with i flipped)|.
    """
    q, free = _slice_cube(d, s)
    m = len(free)
    scale = 2.0 ** (d.n - m - 1)
    vals = np.empty(m, dtype=np.float64)
    for pos in range(m):
        ax = m - 1 - pos
        vals[pos] = scale * float(np.abs(q - np.flip(q, axis=ax)).sum())
    return free, vals


def exact_influence(d: DensePmf, i: int, s: Restriction = EMPTY) -> float:
    """Inf_i((f_D)_s) by enumeration."""
    q, free = _slice_cube(d, s)
    if i not in free:
        raise ValueError(f"coordinate {i} is fixed by the restriction")
    m = len(free)
    ax = m - 1 - free.index(i)
    return 2.0 ** (d.n - m - 1) * float(np.abs(q - np.flip(q, axis=ax)).sum())


def exact_total_influence(d: DensePmf, s: Restriction = EMPTY) -> float:
    _, vals = exact_influence_all(d, s)
    return float(vals.sum())


def exact_conditional_influence(d: DensePmf, i: int, s: Restriction = EMPTY) -> float:
    """Inf_i(f_{D_s}): influence under the conditional distribution itself."""
    if len(s) == 0:
        return exact_influence(d, i)
    cond, _ = restrict_dist(d, s)
    free = s.free_coords(d.n)
    return exact_influence(cond, free.index(i))


def scale_to_restriction(cond_value: float, s: Restriction, weight: float) -> float:
    """Convert a conditional-scale influence to the restricted scale:
    Inf_i((f_D)_s) = 2^|s| * weight * Inf_i(f_{D_s})."""
    return (2.0 ** len(s)) * weight * cond_value


# ---------------------------------------------------------------------------
# estimator sizing


def bias_sample_count(eps: float, delta: float) -> int:
    """Conditioned samples for a +-eps, 1-delta bias estimate (Hoeffding)."""
    return math.ceil(math.log(2.0 / delta) / (2.0 * eps * eps))


def infest_sample_count(eps: float) -> int:
    """Two-point conditioned samples per run; the run's bias is <= eps."""
    return math.ceil(1.0 / (eps * eps))


def infest_repetitions(eps: float, delta: float) -> int:
    """Runs of infest(eps/2) whose mean is +-eps accurate w.p. 1-delta."""
    return math.ceil(2.0 * math.log(2.0 / delta) / ((eps / 2.0) ** 2))


# ---------------------------------------------------------------------------
# estimates


@dataclass
class InfluenceEstimate:
    """One estimated influence value with its advertised quality."""

    coordinate: int
    value: float
    accuracy_target: float
    confidence: float
    samples_used: int
    restriction: Restriction = EMPTY
    kind: str = KIND_EXACT

    def to_json_dict(self) -> dict:
        return {
            "coord": int(self.coordinate),
            "value": float(self.value),
            "accuracy": float(self.accuracy_target),
            "confidence": float(self.confidence),
            "samples": int(self.samples_used),
        }


def _collect_conditioned(oracle: DistOracle, s: Restriction, count: int) -> np.ndarray:
    """count samples of D conditioned on s using plain draws only.

    Rejection-filters sample_batch output; total attempts are capped at
    ceil(64 / w_hat) per accepted point with the running acceptance rate
    floored at a quarter of the subcube's uniform weight.
    """
    if len(s) == 0:
        return oracle.sample_batch(count)
    w_floor = 2.0 ** -(min(len(s), 58) + 2)
    kept = []
    accepted = 0
    attempted = 0
    while accepted < count:
        w_hat = max((accepted + 1.0) / (attempted + 2.0), w_floor)
        budget = math.ceil(DistOracle.REJECTION_CAP_FACTOR / w_hat) * count
        if attempted >= budget:
            raise RejectionCapExceededError(
                f"could not collect {count} conditioned samples in subcube {s}: "
                f"{accepted} accepted out of {attempted} attempts"
            )
        batch = int(min(max(4096, count), budget - attempted))
        got = oracle.sample_batch(batch)
        attempted += batch
        sub = got[s.consistent_mask(got)]
        if sub.size:
            kept.append(sub)
            accepted += sub.shape[0]
    return np.concatenate(kept, axis=0)[:count]


def monotone_bias_estimate(
    oracle: DistOracle,
    i: int,
    s: Restriction = EMPTY,
    eps: float = 0.05,
    delta: float = 0.05,
) -> InfluenceEstimate:
    """Estimate Inf_i(f_{D_s}) for monotone D from plain samples.

    For monotone D the conditional influence equals the conditional mean
    of x_i, so the estimator averages coordinate i over
    ceil(ln(2/delta) / (2 eps^2)) samples conditioned on s (obtained by
    rejection).  The mean is clamped at 0: the true value is nonnegative,
    sampling noise need not be.
    """
    n_cond = bias_sample_count(eps, delta)
    X = _collect_conditioned(oracle, s, n_cond)
    value = max(0.0, float(X[:, i].mean()))
    return InfluenceEstimate(
        coordinate=i,
        value=value,
        accuracy_target=eps,
        confidence=delta,
        samples_used=n_cond,
        restriction=s,
        kind=KIND_MONOTONE,
    )


def infest(oracle: DistOracle, i: int, eps: float, s: Restriction = EMPTY) -> float:
    """One two-point-conditioning run; its expectation is within eps of
    Inf_i(f_{D_s}).

    Draw x ~ D_s, then ceil(1/eps^2) samples conditioned on the pair
    {x, x with i flipped} (intersected with s this is the same pair), and
    output |p - (1 - p)| for p the fraction equal to x.
    """
    k = infest_sample_count(eps)
    x = oracle.subcube_sample(s)
    p_hat = float(oracle.two_point_fraction_batch(x[None, :], i, k)[0])
    return abs(2.0 * p_hat - 1.0)


def _infest_mean(
    oracle: DistOracle, i: int, s: Restriction, run_eps: float, runs: int
) -> tuple:
    """Mean of `runs` independent infest(run_eps) outputs, batched."""
    k = infest_sample_count(run_eps)
    X = oracle.subcube_sample_batch(s, runs)
    p_hat = oracle.two_point_fraction_batch(X, i, k)
    # np.mean reduces pairwise, keeping the result order-independent
    return float(np.mean(np.abs(2.0 * p_hat - 1.0))), runs * (k + 1)


def infest_high_accuracy(
    oracle: DistOracle,
    i: int,
    s: Restriction = EMPTY,
    eps: float = 0.05,
    delta: float = 0.05,
) -> InfluenceEstimate:
    """+-eps estimate of Inf_i(f_{D_s}) w.p. >= 1-delta for arbitrary D.

    Averages ceil(2 ln(2/delta) / (eps/2)^2) runs of infest(eps/2): each
    run is biased by at most eps/2 and the mean concentrates to eps/2.
    """
    runs = infest_repetitions(eps, delta)
    value, used = _infest_mean(oracle, i, s, eps / 2.0, runs)
    return InfluenceEstimate(
        coordinate=i,
        value=value,
        accuracy_target=eps,
        confidence=delta,
        samples_used=used,
        restriction=s,
        kind=KIND_SUBCUBE,
    )


# ---------------------------------------------------------------------------
# unified oracle over the three access paths


@dataclass
class EstimatorBudget:
    """Hard resource caps for the sample-based estimator engine.

    The contract sample counts grow like accuracy^-2 (and the two-point
    path like accuracy^-4), so tight accuracies at deep restrictions can
    demand astronomically many draws.  When a cap binds, the engine uses
    everything the cap allows and reports the realized sample count
    instead of failing; pass strict=True to InfluenceOracle to fail
    instead.
    """

    max_pool: int = 2_000_000
    infest_reps_cap: int = 20_000
    infest_run_eps: Optional[float] = None  # default: half the conditional accuracy


class InfluenceOracle:
    """Uniform access to restricted influences Inf_i((f_D)_s).

    kind "exact" reads a dense table through an EXACT_PMF DistOracle;
    "monotone" averages coordinates of plain samples (valid for monotone
    D); "subcube" runs two-point conditioning through subcube samples.
    `accuracy` and `confidence` are the per-query targets on the
    restricted scale; weight estimation gets accuracy/2^(|s|+2) and the
    conditional estimate accuracy/(2^|s| * w_hat), each at half the
    failure budget.

    The sample-based kinds keep one growing pool of plain samples and
    reuse it across queries (weights, monotone biases, and leaf-mass
    estimates elsewhere); a union bound over queries is unaffected by the
    reuse, and the pool is the dominant sample cost.
    """

    def __init__(
        self,
        kind: str,
        source: DistOracle,
        accuracy: float,
        confidence: float,
        budget: Optional[EstimatorBudget] = None,
        strict: bool = False,
    ):
        if kind not in KINDS:
            raise ValueError(f"unknown influence oracle kind {kind!r}")
        needed = {
            KIND_EXACT: OracleMode.EXACT_PMF,
            KIND_MONOTONE: OracleMode.SAMPLE,
            KIND_SUBCUBE: OracleMode.SUBCUBE_SAMPLE,
        }[kind]
        if source.mode < needed:
            raise OracleModeError(
                f"influence kind {kind!r} needs oracle mode {needed.name}, "
                f"got {source.mode.name}"
            )
        self.kind = kind
        self.source = source
        self.accuracy = float(accuracy)
        self.confidence = float(confidence)
        self.budget = budget or EstimatorBudget()
        self.strict = strict
        self.queries = 0
        self._pool = np.empty((0, source.n), dtype=np.int8)
        self._dense = source.dense() if kind == KIND_EXACT else None

    # -- pooled plain samples ------------------------------------------------

    def plain_pool(self, min_rows: int) -> np.ndarray:
        """Shared pool of plain samples with at least min_rows rows
        (subject to the pool cap)."""
        want = min(int(min_rows), self.budget.max_pool)
        if self._pool.shape[0] < want:
            extra = self.source.sample_batch(want - self._pool.shape[0])
            self._pool = np.concatenate([self._pool, extra], axis=0)
        return self._pool

    def _capped(self, wanted: int, cap: int, what: str) -> int:
        if wanted <= cap:
            return wanted
        if self.strict:
            raise BudgetExceededError(
                f"{what} requires {wanted} samples, cap is {cap}"
            )
        return cap

    # -- queries ---------------------------------------------------------------

    def estimate_all(
        self,
        s: Restriction = EMPTY,
        coords: Optional[Sequence[int]] = None,
        accuracy: Optional[float] = None,
        confidence: Optional[float] = None,
    ):
        """Restricted-scale influence estimates for each free coordinate.

        Returns (coords, values, samples_used_per_query).
        """
        a = self.accuracy if accuracy is None else float(accuracy)
        dq = self.confidence if confidence is None else float(confidence)
        coords = list(s.free_coords(self.source.n) if coords is None else coords)
        self.queries += len(coords)
        if not coords:
            return coords, np.zeros(0), 0
        if self.kind == KIND_EXACT:
            free, vals = exact_influence_all(self._dense, s)
            pos = [free.index(i) for i in coords]
            return coords, vals[pos], 0

        # weight of the subcube from plain samples
        if len(s) == 0:
            w_hat, d_rest = 1.0, dq
        else:
            e_w = a / 2.0 ** (len(s) + 2)
            n_w = self._capped(
                bias_sample_count(e_w, dq / 2.0), self.budget.max_pool, "weight estimate"
            )
            pool = self.plain_pool(n_w)
            w_hat = float(s.consistent_mask(pool).mean())
            d_rest = dq / 2.0
        if w_hat <= 0.0:
            # no observed mass: restricted influences are below resolution
            return coords, np.zeros(len(coords)), self._pool.shape[0]
        e_cond = min(0.5, a / (2.0 ** len(s) * w_hat))

        if self.kind == KIND_MONOTONE:
            n_c = self._capped(
                bias_sample_count(e_cond, d_rest), self.budget.max_pool, "bias estimate"
            )
            pool = self.plain_pool(self._pool.shape[0])
            mask = s.consistent_mask(pool)
            have = int(mask.sum())
            while have < n_c and pool.shape[0] < self.budget.max_pool:
                goal = math.ceil(n_c / max(w_hat, 2.0 ** -(len(s) + 2)))
                pool = self.plain_pool(max(goal, 2 * pool.shape[0]))
                mask = s.consistent_mask(pool)
                have = int(mask.sum())
            if have < n_c and self.strict:
                raise BudgetExceededError(
                    f"needed {n_c} conditioned samples in {s}, pool yielded {have}"
                )
            if have == 0:
                return coords, np.zeros(len(coords)), 0
            if len(s) > 0:
                w_hat = float(mask.mean())  # refresh with the grown pool
            # conditional bias of each coordinate; clamp at 0 (monotone truth)
            bias = pool[mask][:, coords].mean(axis=0)
            vals = 2.0 ** len(s) * w_hat * np.clip(bias, 0.0, None)
            return coords, vals, have

        # two-point conditioning path
        runs_wanted = infest_repetitions(e_cond, d_rest)
        runs = self._capped(runs_wanted, self.budget.infest_reps_cap, "infest repetitions")
        run_eps = self.budget.infest_run_eps or e_cond / 2.0
        k = infest_sample_count(run_eps)
        X = self.source.subcube_sample_batch(s, runs)
        vals = np.empty(len(coords), dtype=np.float64)
        for pos, i in enumerate(coords):
            p_hat = self.source.two_point_fraction_batch(X, i, k)
            vals[pos] = np.mean(np.abs(2.0 * p_hat - 1.0))
        vals *= 2.0 ** len(s) * w_hat
        return coords, vals, runs * (k + 1)

    def estimate(
        self,
        i: int,
        s: Restriction = EMPTY,
        accuracy: Optional[float] = None,
        confidence: Optional[float] = None,
    ) -> InfluenceEstimate:
        coords, vals, used = self.estimate_all(s, [i], accuracy, confidence)
        return InfluenceEstimate(
            coordinate=i,
            value=float(vals[0]),
            accuracy_target=self.accuracy if accuracy is None else float(accuracy),
            confidence=self.confidence if confidence is None else float(confidence),
            samples_used=int(used),
            restriction=s,
            kind=self.kind,
        )

    def total_at(self, s: Restriction = EMPTY) -> float:
        """Estimated total influence of (f_D)_s over the free coordinates."""
        _, vals, _ = self.estimate_all(s)
        return float(vals.sum())


def oracle_influence(
    o: InfluenceOracle,
    i: int,
    s: Restriction = EMPTY,
    accuracy: Optional[float] = None,
    confidence: Optional[float] = None,
) -> InfluenceEstimate:
    """Restricted-scale influence estimate through whichever access path
    the oracle wraps; per-call accuracy/confidence override its defaults."""
    return o.estimate(i, s, accuracy, confidence)
