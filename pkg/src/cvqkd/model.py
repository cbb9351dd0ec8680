"""Honest-party scenario: source, channel and reconciliation efficiency."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from cvqkd.discretization import BinningScheme, JointStatistics, bin_probabilities, joint_statistics
from cvqkd.gaussian import CovarianceMatrix, apply_loss_excess, two_mode_squeezed_source


@dataclass(frozen=True)
class ScenarioModel:
    """Everything needed to predict the honest parties' statistics.

    Defaults are the headline scenario: 11 dB squeezing / 16 dB antisqueezing,
    no loss, 1% excess noise and reconciliation efficiency 0.95.
    """

    squeezing_db: float = 11.0
    antisqueezing_db: float = 16.0
    loss: float = 0.0
    excess_noise: float = 0.01
    ec_efficiency: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.ec_efficiency <= 1.0:
            raise ValueError(f"ec_efficiency must lie in (0, 1], got {self.ec_efficiency}")
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError(f"loss must lie in [0, 1], got {self.loss}")
        if self.excess_noise < 0:
            raise ValueError("excess_noise must be nonnegative")

    def covariance(self) -> CovarianceMatrix:
        """Covariance matrix of the two modes after the channel (both modes affected)."""
        source = two_mode_squeezed_source(self.squeezing_db, self.antisqueezing_db)
        return apply_loss_excess(source, self.loss, self.excess_noise)

    def quadrature_block(self, quadrature: str = "q") -> np.ndarray:
        """2x2 covariance of ``(x_A, x_B)`` for a matching-basis round.

        Bob flips the sign of his phase outcome so both bases are positively correlated.
        """
        g = self.covariance().matrix
        if quadrature == "q":
            return g[np.ix_([0, 2], [0, 2])].copy()
        if quadrature == "p":
            blk = g[np.ix_([1, 3], [1, 3])].copy()
            blk[0, 1] = blk[1, 0] = -blk[0, 1]
            return blk
        raise ValueError(f"quadrature must be 'q' or 'p', got {quadrature!r}")

    @property
    def alice_variance(self) -> float:
        """Larger of Alice's two quadrature variances."""
        g = self.covariance().matrix
        return float(max(g[0, 0], g[1, 1]))

    def joint_statistics(self, scheme: BinningScheme) -> JointStatistics:
        blk = self.quadrature_block("q")
        return binned_pair_statistics(float(blk[0, 0]), float(blk[1, 1]), float(blk[0, 1]), scheme)

    def alice_distribution(self, scheme: BinningScheme):
        return bin_probabilities(float(self.quadrature_block("q")[0, 0]), scheme)

    def to_dict(self) -> dict:
        return asdict(self)


def _effective_scheme(scheme: BinningScheme, sigma: float) -> BinningScheme:
    # A finite scheme whose cutoff lies beyond the joint truncation window gives
    # the same table as the infinite one, up to an index shift that entropies and
    # distances ignore.
    from cvqkd.discretization import JOINT_TRUNCATION_SIGMAS

    if scheme.is_finite and scheme.aligned_with_infinite():
        if scheme.alpha - scheme.delta > JOINT_TRUNCATION_SIGMAS * sigma + scheme.delta:
            return BinningScheme(float("inf"), scheme.delta)
    return scheme


@lru_cache(maxsize=512)
def _cached_joint(va: float, vb: float, z: float, scheme: BinningScheme) -> JointStatistics:
    return joint_statistics(np.array([[va, z], [z, vb]]), scheme)


def binned_pair_statistics(va: float, vb: float, z: float, scheme: BinningScheme) -> JointStatistics:
    eff = _effective_scheme(scheme, float(np.sqrt(max(va, vb))))
    stats = _cached_joint(va, vb, z, eff)
    if eff is scheme:
        return stats
    # marginal entropies are cheap; take them on the requested scheme itself
    from cvqkd.discretization import renyi_half_entropy, shannon_entropy

    pa = bin_probabilities(va, scheme)
    pb = bin_probabilities(vb, scheme)
    return JointStatistics(
        h_a=shannon_entropy(pa),
        h_b=shannon_entropy(pb),
        h_ab=stats.h_ab,
        mean_distance=stats.mean_distance,
        var_distance=stats.var_distance,
        renyi_half_a=renyi_half_entropy(pa),
    )
