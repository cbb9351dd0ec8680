"""Binned homodyne outcomes: interval partitions, outcome distributions and classical entropies.

Bin indices follow the protocol's alphabet. For a finite cutoff ``alpha`` the
bins are ``(-inf, -alpha + delta], (-alpha + delta, -alpha + 2 delta], ...,
(alpha - delta, inf)`` with indices ``1..M``, ``M = 2 alpha / delta``. For
``alpha = inf`` bin ``i`` is ``((i - 1) delta, i delta]`` for every integer
``i``; distributions are then stored on a finite window and the Gaussian tails
beyond it are folded into the outermost bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np
import scipy.integrate
from scipy.special import log_ndtr, ndtr, xlogy

# Marginal windows for alpha = inf; tail mass beyond is 2 * Phi(-12) ~ 3.6e-33.
MARGINAL_TRUNCATION_SIGMAS = 12.0
# Joint tables are cut tighter to keep the banded table small (tail mass ~ 2.3e-19).
JOINT_TRUNCATION_SIGMAS = 9.0
MAX_CORRELATION = 1.0 - 1e-9


@dataclass(frozen=True)
class BinningScheme:
    """Uniform partition of the quadrature axis with bin width ``delta`` and cutoff ``alpha``.

    ``alpha`` may be ``math.inf``; otherwise ``2 alpha / delta`` must be an integer.
    """

    alpha: float
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"bin width must be positive, got {self.delta}")
        if math.isfinite(self.alpha):
            if self.alpha <= 0:
                raise ValueError(f"cutoff alpha must be positive, got {self.alpha}")
            ratio = 2.0 * self.alpha / self.delta
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 2:
                raise ValueError(f"2*alpha/delta must be an integer >= 2, got {ratio!r}")

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.alpha)

    @property
    def alphabet_size(self) -> float:
        """``M = 2 alpha / delta``; infinite for ``alpha = inf``."""
        if not self.is_finite:
            return math.inf
        return int(round(2.0 * self.alpha / self.delta))

    def lower_edge(self, index):
        """Left edge of bin ``index`` (``-inf`` for the first bin of a finite scheme)."""
        index = np.asarray(index)
        if self.is_finite:
            edge = -self.alpha + (index - 1) * self.delta
            return np.where(index <= 1, -np.inf, edge)
        return (index - 1) * self.delta

    def upper_edge(self, index):
        index = np.asarray(index)
        if self.is_finite:
            edge = -self.alpha + index * self.delta
            return np.where(index >= self.alphabet_size, np.inf, edge)
        return index * self.delta

    def bin_index(self, x) -> np.ndarray:
        """Alphabet index of each outcome ``x`` (int64 array)."""
        x = np.asarray(x, dtype=float)
        if self.is_finite:
            idx = np.ceil((x + self.alpha) / self.delta)
            return np.clip(idx, 1, self.alphabet_size).astype(np.int64)
        return np.ceil(x / self.delta).astype(np.int64)

    def index_range(self, lo: float, hi: float) -> tuple[int, int]:
        """Inclusive index range of bins meeting ``[lo, hi]``, clipped to the alphabet."""
        first, last = self.bin_index([lo, hi])
        return int(first), int(last)

    def aligned_with_infinite(self) -> bool:
        """True when the finite scheme's inner edges coincide with the ``alpha = inf`` grid."""
        if not self.is_finite:
            return True
        r = self.alpha / self.delta
        return abs(r - round(r)) < 1e-9 * max(1.0, r)


@dataclass(frozen=True)
class BinnedDistribution:
    """Probabilities over consecutive bin indices ``offset, offset + 1, ...``."""

    probabilities: np.ndarray
    offset: int = 1

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probabilities must be a nonempty 1-d sequence")
        if np.any(p < -1e-15):
            raise ValueError("probabilities must be nonnegative")
        p = np.maximum(p, 0.0)
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "offset", int(self.offset))

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.probabilities.size)

    def __len__(self):
        return self.probabilities.size

    def mass_at(self, index: int) -> float:
        i = index - self.offset
        return float(self.probabilities[i]) if 0 <= i < self.probabilities.size else 0.0


def _cell_masses(lo, hi, sigma) -> np.ndarray:
    """``P(lo < X <= hi)`` for ``X ~ N(0, sigma^2)``, accurate in both tails."""
    a = np.asarray(lo, dtype=float) / sigma
    b = np.asarray(hi, dtype=float) / sigma
    right = a >= 0
    # right half: use survival functions so tiny tail masses keep full precision
    return np.where(right, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def bin_probabilities(variance: float, scheme: BinningScheme) -> BinnedDistribution:
    """Binned distribution of a zero-mean Gaussian quadrature with the given variance."""
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    sigma = math.sqrt(variance)
    if scheme.is_finite:
        idx = np.arange(1, scheme.alphabet_size + 1)
        lo, hi = scheme.lower_edge(idx), scheme.upper_edge(idx)
    else:
        cut = MARGINAL_TRUNCATION_SIGMAS * sigma
        first, last = scheme.index_range(-cut, cut)
        idx = np.arange(first, last + 1)
        lo = scheme.lower_edge(idx).astype(float)
        hi = scheme.upper_edge(idx).astype(float)
        lo[0], hi[-1] = -np.inf, np.inf
    p = _cell_masses(lo, hi, sigma)
    return BinnedDistribution(p / p.sum(), offset=int(idx[0]))


def _log2_terms(p: np.ndarray) -> float:
    return float(-np.sum(xlogy(p, p)) / math.log(2.0))


def shannon_entropy(dist) -> float:
    """Shannon entropy in bits of a (joint or single) binned distribution."""
    if isinstance(dist, JointBinnedDistribution):
        return dist.joint_entropy()
    p = dist.probabilities if isinstance(dist, BinnedDistribution) else np.asarray(dist, dtype=float)
    return _log2_terms(p)


def renyi_half_entropy(dist) -> float:
    """Renyi entropy of order 1/2, ``2 log2 sum sqrt(p)``, in bits."""
    p = dist.probabilities if isinstance(dist, BinnedDistribution) else np.asarray(dist, dtype=float)
    return float(2.0 * math.log2(np.sum(np.sqrt(p))))


@lru_cache(maxsize=256)
def _prolate_eigenvalue(bandwidth: float, nodes: int = 48) -> float:
    # Largest eigenvalue of the sinc kernel sin(c(x-y)) / (pi (x-y)) on [-1, 1],
    # i.e. (2c / pi) * R_00(c, 1)^2 for the radial prolate function R_00.
    x, w = np.polynomial.legendre.leggauss(nodes)
    diff = x[:, None] - x[None, :]
    kernel = (bandwidth / math.pi) * np.sinc(bandwidth * diff / math.pi)
    sw = np.sqrt(w)
    return float(np.linalg.eigvalsh(sw[:, None] * kernel * sw[None, :])[-1])


def overlap_c(delta: float) -> float:
    """Maximal overlap ``c(delta)`` between amplitude and phase projections onto
    intervals of width ``delta`` (hbar = 1).

    ``c = delta^2 / (2 pi) * S_0(1, delta^2 / 4)^2``, evaluated as the top
    eigenvalue of the finite-interval sinc kernel with bandwidth ``delta^2 / 4``.
    For small ``delta`` it behaves as ``delta^2 / (2 pi) * (1 - delta^4 / 144)``.
    """
    if not delta > 0:
        raise ValueError(f"bin width must be positive, got {delta}")
    c = _prolate_eigenvalue(float(delta) ** 2 / 4.0)
    if c >= 1.0 - 1e-12:
        raise ValueError(f"overlap c({delta}) = {c} is not below 1; the uncertainty bound is trivial")
    return c


def overlap_c_series(delta: float) -> float:
    """Leading-order series ``delta^2/(2 pi) * (1 - u^2 / 9)`` with ``u = delta^2 / 4``."""
    u = delta * delta / 4.0
    return delta * delta / (2.0 * math.pi) * (1.0 - u * u / 9.0)


@dataclass
class JointBinnedDistribution:
    """Banded joint table of ``(X_A, X_B)`` bin indices.

    Row ``i`` holds A-index ``row_offset + i``; its entries ``table[i, j]``
    belong to B-index ``col_start[i] + j``. Cells outside the band carry no
    mass.
    """

    table: np.ndarray
    row_offset: int
    col_start: np.ndarray
    marginal_a: BinnedDistribution | None = field(default=None, repr=False)
    marginal_b: BinnedDistribution | None = field(default=None, repr=False)

    @classmethod
    def from_dense(cls, table, row_offset: int = 1, col_offset: int = 1) -> "JointBinnedDistribution":
        t = np.asarray(table, dtype=float)
        if abs(t.sum() - 1.0) > 1e-9 or np.any(t < 0):
            raise ValueError("joint table must be a nonnegative array summing to 1")
        return cls(t, int(row_offset), np.full(t.shape[0], int(col_offset), dtype=np.int64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape

    def total_mass(self) -> float:
        return float(self.table.sum())

    def row_indices(self) -> np.ndarray:
        return np.arange(self.row_offset, self.row_offset + self.table.shape[0])

    def column_indices(self) -> np.ndarray:
        return self.col_start[:, None] + np.arange(self.table.shape[1])[None, :]

    def marginal_rows(self) -> BinnedDistribution:
        p = self.table.sum(axis=1)
        return BinnedDistribution(p / p.sum(), offset=self.row_offset)

    def marginal_columns(self) -> BinnedDistribution:
        cols = self.column_indices()
        lo = int(cols.min())
        p = np.bincount((cols - lo).ravel(), weights=self.table.ravel())
        return BinnedDistribution(p / p.sum(), offset=lo)

    def to_dense(self) -> tuple[np.ndarray, int, int]:
        """Dense table with its (row, column) index offsets."""
        cols = self.column_indices()
        lo, hi = int(cols.min()), int(cols.max())
        dense = np.zeros((self.table.shape[0], hi - lo + 1))
        rows = np.repeat(np.arange(self.table.shape[0]), self.table.shape[1])
        np.add.at(dense, (rows, (cols - lo).ravel()), self.table.ravel())
        return dense, self.row_offset, lo

    def joint_entropy(self) -> float:
        return _log2_terms(self.table)

    def distance_moments(self) -> tuple[float, float]:
        """``(E|j - k|, Var|j - k|)`` in bin units."""
        dist = np.abs(self.row_indices()[:, None] - self.column_indices())
        m1 = float(np.sum(self.table * dist))
        m2 = float(np.sum(self.table * dist * dist))
        return m1, max(m2 - m1 * m1, 0.0)


def conditional_shannon_entropy(joint: JointBinnedDistribution) -> float:
    """``H(X_A | X_B) = H(X_A X_B) - H(X_B)`` in bits."""
    hb = shannon_entropy(joint.marginal_b if joint.marginal_b is not None else joint.marginal_columns())
    return joint.joint_entropy() - hb


def expected_distance(joint: JointBinnedDistribution) -> tuple[float, float]:
    """Mean and variance of the per-round bin distance ``|X_A - X_B|``."""
    return joint.distance_moments()


# --------------------------------------------------------------------------
# Bivariate rectangle probabilities for correlated Gaussian quadratures.
# --------------------------------------------------------------------------


def _check_block(cov2) -> tuple[float, float, float]:
    g = np.asarray(cov2, dtype=float)
    if g.shape != (2, 2):
        raise ValueError(f"expected a 2x2 covariance block, got shape {g.shape}")
    va, vb, c = float(g[0, 0]), float(g[1, 1]), 0.5 * float(g[0, 1] + g[1, 0])
    if va <= 0 or vb <= 0:
        raise ValueError("quadrature variances must be positive")
    rho = c / math.sqrt(va * vb)
    if abs(rho) > MAX_CORRELATION:
        raise ValueError(f"correlation {rho!r} is too close to +-1; joint table is singular")
    return va, vb, c


def _node_count(width: float, cond_sd: float, slope: float) -> int:
    ratio = abs(slope) * width / cond_sd
    return int(min(32, 3 + math.ceil(8.0 * ratio)))


def _active_rows(scheme: BinningScheme, sigma: float) -> tuple[int, int]:
    cut = JOINT_TRUNCATION_SIGMAS * sigma
    return scheme.index_range(-cut, cut)


@dataclass
class _RowBlock:
    first_row: int
    col_start: np.ndarray
    table: np.ndarray


def _iter_joint_rows(cov2, scheme: BinningScheme, block_rows: int = 512) -> Iterator[_RowBlock]:
    """Yield the joint table in blocks of consecutive A-rows.

    Interior rows integrate the conditional B-cell probabilities over the row's
    interval with Gauss-Legendre nodes; the two outermost active rows are
    half-infinite and are integrated along the B axis instead.
    """
    va, vb, c = _check_block(cov2)
    sa, sb = math.sqrt(va), math.sqrt(vb)
    slope = c / va  # E[x_B | x_A] = slope * x_A
    cond_sd = math.sqrt(vb - c * c / va)
    delta = scheme.delta
    first, last = _active_rows(scheme, sa)
    b_first, b_last = _active_rows(scheme, sb)
    if last - first < 2:
        raise ValueError("bin width too coarse for the joint table; use the dense oracle")

    half = JOINT_TRUNCATION_SIGMAS * cond_sd + abs(slope) * delta
    width = int(math.ceil(2.0 * half / delta)) + 3
    width = min(width, b_last - b_first + 1)

    def window_start(x_center):
        lo = scheme.bin_index(slope * x_center - half)
        return np.clip(lo, b_first, b_last - width + 1).astype(np.int64)

    def col_edges(starts):
        idx = starts[:, None] + np.arange(width + 1)[None, :]
        edges = scheme.lower_edge(idx).astype(float)
        # window ends absorb the conditional tails (and the alphabet's end bins)
        edges[:, 0] = -np.inf
        edges[:, -1] = np.inf
        return edges

    nodes = _node_count(delta, cond_sd, slope)
    gx, gw = np.polynomial.legendre.leggauss(nodes)

    # first (half-infinite) row
    yield _edge_row(first, True, scheme, va, vb, c, width, b_first, b_last)

    interior = np.arange(first + 1, last)
    for s in range(0, interior.size, block_rows):
        rows = interior[s : s + block_rows]
        lo = scheme.lower_edge(rows).astype(float)
        hi = scheme.upper_edge(rows).astype(float)
        mid, rad = 0.5 * (lo + hi), 0.5 * (hi - lo)
        starts = window_start(mid)
        edges = col_edges(starts)  # (R, W+1)
        x = mid[:, None] + rad[:, None] * gx[None, :]  # (R, n)
        wx = rad[:, None] * gw[None, :] * np.exp(-0.5 * x * x / va) / math.sqrt(2.0 * math.pi * va)
        z = (edges[:, None, :] - slope * x[:, :, None]) / cond_sd  # (R, n, W+1)
        cdf = ndtr(z)
        cells = np.diff(cdf, axis=2)
        table = np.einsum("rn,rnw->rw", wx, cells)
        # renormalize each row to its exact marginal mass
        exact = _cell_masses(lo, hi, sa)
        sums = table.sum(axis=1)
        scale = np.divide(exact, sums, out=np.ones_like(sums), where=sums > 0)
        yield _RowBlock(int(rows[0]), starts, table * scale[:, None])

    yield _edge_row(last, False, scheme, va, vb, c, width, b_first, b_last)


def _edge_row(row, lower, scheme, va, vb, c, width, b_first, b_last) -> _RowBlock:
    """Half-infinite outermost row, integrated along the B axis."""
    sa = math.sqrt(va)
    edge = float(scheme.upper_edge(row)) if lower else float(scheme.lower_edge(row))
    mass = float(_cell_masses(-np.inf, edge, sa) if lower else _cell_masses(edge, np.inf, sa))
    slope_ba = c / vb
    cond_a = math.sqrt(va - c * c / vb)
    # x_A | x_A beyond the edge sits close to the edge; centre the band on its image
    centre = (c / va) * edge
    lo_idx = int(np.clip(scheme.bin_index(centre - 0.5 * width * scheme.delta), b_first, b_last - width + 1))
    cols = lo_idx + np.arange(width)
    lo = scheme.lower_edge(cols).astype(float)
    hi = scheme.upper_edge(cols).astype(float)
    lo[0], hi[-1] = -np.inf, np.inf
    vals = np.empty(width)
    gx, gw = np.polynomial.legendre.leggauss(16)
    for j in range(width):
        a, b = lo[j], hi[j]
        if math.isinf(a) or math.isinf(b):
            vals[j] = np.nan
            continue
        y = 0.5 * (a + b) + 0.5 * (b - a) * gx
        py = np.exp(-0.5 * y * y / vb) / math.sqrt(2.0 * math.pi * vb)
        z = (edge - slope_ba * y) / cond_a
        inner = np.exp(log_ndtr(z)) if lower else np.exp(log_ndtr(-z))
        vals[j] = 0.5 * (b - a) * np.sum(gw * py * inner)
    finite = np.nan_to_num(vals, nan=0.0)
    # the open cell away from the tail is integrated directly; the tail-side
    # open cell takes the remaining row mass
    tail_low = lower == (c >= 0)
    other = -1 if tail_low else 0
    a = lo[-1] if tail_low else hi[0]

    def integrand(y):
        z = (edge - slope_ba * y) / cond_a
        inner = math.exp(log_ndtr(z) if lower else log_ndtr(-z))
        return math.exp(-0.5 * y * y / vb) / math.sqrt(2.0 * math.pi * vb) * inner

    limits = (a, np.inf) if tail_low else (-np.inf, a)
    finite[other] = scipy.integrate.quad(integrand, *limits, epsabs=0.0, epsrel=1e-10)[0]
    finite[0 if tail_low else -1] = max(mass - finite.sum(), 0.0)
    if finite.sum() > 0:
        finite *= mass / finite.sum()
    return _RowBlock(int(row), np.array([lo_idx], dtype=np.int64), finite[None, :])


def joint_bin_distribution(cov2, scheme: BinningScheme) -> JointBinnedDistribution:
    """Binned joint distribution of two correlated zero-mean Gaussian quadratures.

    Args:
        cov2: 2x2 covariance of ``(x_A, x_B)``.
        scheme: binning applied identically on both sides.
    """
    va, vb, _ = _check_block(cov2)
    blocks = list(_iter_joint_rows(cov2, scheme))
    table = np.concatenate([b.table for b in blocks], axis=0)
    starts = np.concatenate(
        [np.broadcast_to(b.col_start, (b.table.shape[0],)) for b in blocks]
    ).astype(np.int64)
    table = table / table.sum()
    return JointBinnedDistribution(
        table,
        blocks[0].first_row,
        starts,
        marginal_a=bin_probabilities(va, scheme),
        marginal_b=bin_probabilities(vb, scheme),
    )


@dataclass(frozen=True)
class JointStatistics:
    """Entropies (bits) and distance moments (bin units) of a binned quadrature pair."""

    h_a: float
    h_b: float
    h_ab: float
    mean_distance: float
    var_distance: float
    renyi_half_a: float

    @property
    def mutual_information(self) -> float:
        return self.h_a + self.h_b - self.h_ab

    @property
    def h_a_given_b(self) -> float:
        return self.h_ab - self.h_b


def joint_statistics(cov2, scheme: BinningScheme) -> JointStatistics:
    """Streaming evaluation of the quantities the key-length formulas need.

    Equivalent to building :func:`joint_bin_distribution` and reading off the
    entropies and distance moments, without holding the whole table.
    """
    va, vb, _ = _check_block(cov2)
    pa = bin_probabilities(va, scheme)
    pb = bin_probabilities(vb, scheme)
    total = 0.0
    plogp = 0.0
    m1 = 0.0
    m2 = 0.0
    for blk in _iter_joint_rows(cov2, scheme):
        t = blk.table
        rows = blk.first_row + np.arange(t.shape[0])
        cols = np.broadcast_to(blk.col_start, (t.shape[0],))[:, None] + np.arange(t.shape[1])[None, :]
        d = np.abs(rows[:, None] - cols)
        total += t.sum()
        plogp += np.sum(xlogy(t, t))
        m1 += np.sum(t * d)
        m2 += np.sum(t * d * d)
    # normalize exactly as joint_bin_distribution does
    h_ab = (-plogp / total + math.log(total)) / math.log(2.0)
    m1 /= total
    m2 /= total
    return JointStatistics(
        h_a=shannon_entropy(pa),
        h_b=shannon_entropy(pb),
        h_ab=float(h_ab),
        mean_distance=float(m1),
        var_distance=float(max(m2 - m1 * m1, 0.0)),
        renyi_half_a=renyi_half_entropy(pa),
    )


def dense_joint_oracle(cov2, scheme: BinningScheme) -> np.ndarray:
    """Dense joint table from bivariate-normal CDF rectangles (scipy); small alphabets only.

    Kept separate from the banded integrator so tests can compare the two.
    """
    from scipy.stats import multivariate_normal

    va, vb, c = _check_block(cov2)
    if not scheme.is_finite:
        raise ValueError("dense oracle needs a finite scheme")
    m = scheme.alphabet_size
    idx = np.arange(1, m + 1)
    lo, hi = scheme.lower_edge(idx), scheme.upper_edge(idx)
    mvn = multivariate_normal(mean=[0.0, 0.0], cov=[[va, c], [c, vb]])
    big = 50.0 * math.sqrt(max(va, vb))
    lo = np.where(np.isinf(lo), -big, lo)
    hi = np.where(np.isinf(hi), big, hi)
    out = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            out[i, j] = mvn.cdf([hi[i], hi[j]], lower_limit=[lo[i], lo[j]])
    return out
