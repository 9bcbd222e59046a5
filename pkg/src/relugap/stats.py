"""Rank tests, effect size and the max-gap permutation test used to compare widths."""
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import norm, rankdata

from . import csvio
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p: float
    method: str


@dataclass(frozen=True)
class PermutationResult:
    stat: float
    p: float
    raw_count: int
    n_perm: int
    exhaustive: bool = False


@dataclass(frozen=True)
class GapSummary:
    width: int
    mean: float
    median: float
    max: float
    hit_rate: float
    pairs: int


def _as_sample(x, name):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise InvalidArgumentError(f"sample {name} is empty")
    return x


def _rank_sum_distribution(doubled_ranks, k):
    """Counts of subsets of size ``k`` by sum of doubled midranks."""
    total = int(doubled_ranks.sum())
    counts = np.zeros((k + 1, total + 1), dtype=np.int64)
    counts[0, 0] = 1
    for i, v in enumerate(doubled_ranks, start=1):
        v = int(v)
        for j in range(min(i, k), 0, -1):
            counts[j, v:] += counts[j - 1, :total + 1 - v]
    return counts[k]


def mann_whitney(a, b, exact=None):
    """Two-sided Mann-Whitney U test; ``u`` counts ``a > b`` plus half the ties.

    Uses the exact permutation distribution of the (mid)rank sum when
    ``len(a) * len(b) <= 400``, otherwise the normal approximation with tie and
    continuity corrections.
    """
    a = _as_sample(a, "a")
    b = _as_sample(b, "b")
    na, nb = a.size, b.size
    n = na + nb
    ranks = rankdata(np.concatenate([a, b]))
    u = float(ranks[:na].sum() - na * (na + 1) / 2.0)
    mu = na * nb / 2.0
    if exact is None:
        exact = na * nb <= 400
    if exact:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        dist = _rank_sum_distribution(doubled, na)
        sums = np.nonzero(dist)[0]
        u_vals = sums / 2.0 - na * (na + 1) / 2.0
        dev = abs(u - mu)
        extreme = np.abs(u_vals - mu) >= dev - 1e-9
        p = float(dist[sums[extreme]].sum() / dist.sum())
        return MannWhitneyResult(u, min(p, 1.0), "exact")
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1))
    var = na * nb / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return MannWhitneyResult(u, 1.0, "normal")
    z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
    return MannWhitneyResult(u, float(min(1.0, 2.0 * norm.sf(z))), "normal")


def cliffs_delta(a, b):
    """``(#{a_i > b_j} - #{a_i < b_j}) / (|a| |b|)``."""
    a = _as_sample(a, "a")
    b = np.sort(_as_sample(b, "b"))
    greater = int(np.searchsorted(b, a, side="left").sum())
    less = int((b.size - np.searchsorted(b, a, side="right")).sum())
    return (greater - less) / (a.size * b.size)


def _max_diff(values, mask_a):
    return values[mask_a].max() - values[~mask_a].max()


def permutation_test_max(a, b, n_perm=10_000, seed=0, exhaustive=False, chunk=2000):
    """One-sided test that ``max(a)`` exceeds ``max(b)`` beyond label exchangeability.

    The statistic is ``max(a) - max(b)``.  In Monte Carlo mode
    ``p = (1 + raw_count) / (1 + n_perm)`` where ``raw_count`` counts random
    relabelings whose statistic reaches the observed one.  In exhaustive mode
    every split of the pooled values is visited once and ``p`` is the exact
    fraction (the observed split included).
    """
    a = _as_sample(a, "a")
    b = _as_sample(b, "b")
    if n_perm < 1:
        raise InvalidArgumentError("n_perm must be >= 1")
    pooled = np.concatenate([a, b])
    na, n = a.size, pooled.size
    observed = float(a.max() - b.max())
    if exhaustive:
        count = total = 0
        mask = np.zeros(n, dtype=bool)
        for idx in combinations(range(n), na):
            mask[:] = False
            mask[list(idx)] = True
            total += 1
            count += _max_diff(pooled, mask) >= observed
        return PermutationResult(observed, count / total, int(count), total, True)
    rng = np.random.default_rng(int(seed))
    count = 0
    base = np.arange(n)
    done = 0
    while done < n_perm:
        k = min(chunk, n_perm - done)
        perms = rng.permuted(np.broadcast_to(base, (k, n)), axis=1)
        vals = pooled[perms]
        stats = vals[:, :na].max(axis=1) - vals[:, na:].max(axis=1)
        count += int(np.count_nonzero(stats >= observed))
        done += k
    return PermutationResult(observed, (1 + count) / (1 + n_perm), count, n_perm, False)


def summarize(records, width=None):
    """Mean, lower median and max gap plus the hit fraction of a set of pairs."""
    records = list(records)
    if not records:
        raise InvalidArgumentError("cannot summarize an empty record list")
    gaps = np.sort(np.array([r.gap for r in records], dtype=np.float64))
    hits = sum(1 for r in records if r.hit)
    if width is None:
        width = records[0].width
    return GapSummary(int(width), float(np.mean(gaps)), float(gaps[(gaps.size - 1) // 2]),
                      float(gaps[-1]), hits / len(records), len(records))


SUMMARY_HEADER = ["width", "mean_gap", "median_gap", "max_gap", "hit_rate", "pairs"]
STATS_HEADER = ["dataset", "metric", "width_a", "width_b", "statistic", "p_value", "raw_count", "n_perm"]


def summary_row(s):
    return [s.width, s.mean, s.median, s.max, s.hit_rate, s.pairs]


def compare_rows(dataset, width_a, width_b, gaps_a, gaps_b, n_perm=10_000, seed=0):
    """Stats CSV rows comparing the gap samples of two widths."""
    mw = mann_whitney(gaps_a, gaps_b)
    delta = cliffs_delta(gaps_a, gaps_b)
    perm = permutation_test_max(gaps_a, gaps_b, n_perm=n_perm, seed=seed)
    return [
        [dataset, "mann_whitney", width_a, width_b, mw.u, mw.p, "", ""],
        [dataset, "cliffs_delta", width_a, width_b, delta, "", "", ""],
        [dataset, "permutation_max", width_a, width_b, perm.stat, perm.p, perm.raw_count, perm.n_perm],
    ]


def write_stats_csv(rows, path):
    csvio.write_rows(path, STATS_HEADER, rows)
