"""Finite-key length against coherent attacks via the entropic uncertainty relation.

Logarithm bases matter here: the uncertainty and ``gamma`` terms are in bits
(log2), while the inner logarithm of the sampling correction ``mu`` is natural
because it inverts an exponential tail bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

from scipy.special import ndtr, ndtri

from cvqkd.discretization import (
    BinningScheme,
    JointBinnedDistribution,
    JointStatistics,
    conditional_shannon_entropy,
    overlap_c,
    shannon_entropy,
)
from cvqkd.errors import BudgetExhaustedError

if TYPE_CHECKING:
    from cvqkd.model import ScenarioModel

DEFAULT_EPS_ROBUST = 1e-2


@dataclass(frozen=True)
class SecurityBudget:
    """Security parameters and the allocation of ``eps_s`` between proof steps.

    ``smoothing_share``, ``sampling_share`` and ``pa_share`` are fractions of
    ``eps_s`` and must sum to at most one.
    """

    eps_s: float = 1e-6
    eps_c: float = 1e-6
    eps_pe: float = 1e-6
    smoothing_share: float = 0.5
    sampling_share: float = 0.25
    pa_share: float = 0.25

    def __post_init__(self):
        for name in ("eps_s", "eps_c", "eps_pe"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        shares = (self.smoothing_share, self.sampling_share, self.pa_share)
        if any(not 0.0 < s <= 1.0 for s in shares):
            raise ValueError("budget shares must lie in (0, 1]")
        if sum(shares) > 1.0 + 1e-12:
            raise ValueError(f"budget shares sum to {sum(shares)} > 1")

    @property
    def eps_smooth(self) -> float:
        return self.eps_s * self.smoothing_share

    @property
    def eps_sampling(self) -> float:
        return self.eps_s * self.sampling_share

    @property
    def eps_pa(self) -> float:
        return self.eps_s * self.pa_share

    def hash_costs(self) -> dict:
        """Correctness-hash and leftover-hash costs in bits (both subtracted)."""
        return {
            "ec_hash_bits": -math.log2(2.0 / self.eps_c),
            "pa_bits": -2.0 * math.log2(1.0 / (2.0 * self.eps_pa)),
        }


@dataclass(frozen=True)
class ProtocolParams:
    """Round counts, binning and abort threshold of one protocol run.

    ``N`` counts sifted rounds, ``k`` of them go to parameter estimation and
    ``n = N - k`` form the raw key. ``d0`` is in bin units.
    """

    N: int
    k: int
    scheme: BinningScheme
    d0: float
    p_alpha: float

    def __post_init__(self):
        if not 0 < self.k < self.N:
            raise ValueError(f"need 0 < k < N, got k={self.k}, N={self.N}")
        if self.d0 < 0:
            raise ValueError(f"abort threshold must be nonnegative, got {self.d0}")
        if not 0.0 <= self.p_alpha < 1.0:
            raise ValueError(f"p_alpha must lie in [0, 1), got {self.p_alpha}")

    @property
    def n(self) -> int:
        return self.N - self.k

    @classmethod
    def from_model(
        cls,
        model: "ScenarioModel",
        N: int,
        k: int,
        scheme: BinningScheme,
        eps_robust: float = DEFAULT_EPS_ROBUST,
    ) -> "ProtocolParams":
        """Fill ``d0`` and ``p_alpha`` from the honest model."""
        p_alpha = p_alpha_from_model(model.alice_variance, scheme.alpha)
        draft = cls(N=N, k=k, scheme=scheme, d0=0.0, p_alpha=p_alpha)
        return replace(draft, d0=set_abort_threshold(model, draft, eps_robust))

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "k": self.k,
            "n": self.n,
            "alpha": self.scheme.alpha,
            "delta": self.scheme.delta,
            "d0": self.d0,
            "p_alpha": self.p_alpha,
        }


@dataclass
class KeyRateResult:
    """Key length with every term that entered it.

    ``breakdown`` maps term names to signed bit contributions whose sum is the
    key length before flooring and clamping.
    """

    ell: int
    N: int
    breakdown: dict
    params: dict
    attack: str = "coherent"
    secrecy: float = float("nan")
    reason: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return self.ell / self.N

    @property
    def raw_length(self) -> float:
        return float(sum(self.breakdown.values()))

    def to_dict(self) -> dict:
        return {
            "attack": self.attack,
            "N": self.N,
            "ell": self.ell,
            "rate": self.rate,
            "secrecy": self.secrecy,
            "reason": self.reason,
            "params": dict(self.params),
            "breakdown": dict(self.breakdown),
            "extra": dict(self.extra),
        }


def log2_gamma(t: float) -> float:
    """``log2 gamma(t)``, evaluated stably for small and large ``t``."""
    if t < 0:
        raise ValueError(f"gamma is defined for t >= 0, got {t}")
    if t == 0:
        return 0.0
    root = math.sqrt(1.0 + t * t)
    # t / (sqrt(1 + t^2) - 1) == (sqrt(1 + t^2) + 1) / t
    return (math.asinh(t) + t * math.log((root + 1.0) / t)) / math.log(2.0)


def gamma(t: float) -> float:
    """``gamma(t) = (t + sqrt(1 + t^2)) * (t / (sqrt(1 + t^2) - 1))^t``, with ``gamma(0) = 1``.

    ``gamma(d0)^n`` bounds the number of integer vectors ``x`` in ``Z^n`` with
    ``sum |x_i| <= n d0``.
    """
    return 2.0 ** log2_gamma(t)


def tail_correction_f(p_alpha: float, n: int) -> float:
    """``sqrt(2 (1 - (1 - p_alpha)^n))``."""
    if not 0.0 <= p_alpha <= 1.0:
        raise ValueError(f"p_alpha must lie in [0, 1], got {p_alpha}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if p_alpha == 1.0:
        return math.sqrt(2.0)
    return math.sqrt(2.0 * -math.expm1(n * math.log1p(-p_alpha)))


def p_alpha_from_model(variance: float, alpha: float) -> float:
    """Probability that a zero-mean Gaussian quadrature with ``variance`` exceeds ``|alpha|``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if math.isinf(alpha):
        return 0.0
    return float(2.0 * ndtr(-alpha / math.sqrt(variance)))


def sampling_epsilon(budget: SecurityBudget, params: ProtocolParams) -> float:
    """``eps_s/4 - 2 f(p_alpha, n)`` with the budget's sampling share in place of ``1/4``."""
    return budget.eps_sampling - 2.0 * tail_correction_f(params.p_alpha, params.n)


def mu_correction(params: ProtocolParams, eps_mu: float) -> float:
    """Statistical correction between the sampled and the raw-key average distance, in bin units.

    ``|X| sqrt(N (k + 1) / (n k^2) ln(1 / eps_mu))``.
    """
    if eps_mu <= 0:
        raise BudgetExhaustedError(
            "tail correction exhausts the eps budget: p_alpha is too large for this alpha"
        )
    if eps_mu > 1:
        raise ValueError(f"eps_mu must not exceed 1, got {eps_mu}")
    size = params.scheme.alphabet_size
    N, k, n = params.N, params.k, params.n
    return size * math.sqrt(N * (k + 1) / (n * k * k) * math.log(1.0 / eps_mu))


def _stats_entropies(joint) -> tuple[float, float]:
    if isinstance(joint, JointStatistics):
        return joint.h_a, joint.mutual_information
    if isinstance(joint, JointBinnedDistribution):
        h_a = shannon_entropy(joint.marginal_a if joint.marginal_a is not None else joint.marginal_rows())
        h_a_b = conditional_shannon_entropy(joint)
        return h_a, h_a - h_a_b
    raise TypeError(f"unsupported joint distribution type {type(joint).__name__}")


def leak_ec(n: int, joint, beta: float) -> float:
    """Error-correction leakage ``n (H(X_A) - beta I(X_A; X_B))`` in bits."""
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    h_a, mi = _stats_entropies(joint)
    return n * (h_a - beta * mi)


def set_abort_threshold(model: "ScenarioModel", params: ProtocolParams, eps_robust: float = DEFAULT_EPS_ROBUST) -> float:
    """Abort threshold ``d0`` with honest abort probability about ``eps_robust``.

    ``d0 = E[d] + z sqrt(Var|j - k| / k)`` with ``z`` the upper Gaussian quantile;
    a robustness policy only, security does not depend on it.
    """
    if not 0.0 < eps_robust < 1.0:
        raise ValueError(f"eps_robust must lie in (0, 1), got {eps_robust}")
    stats = model.joint_statistics(params.scheme)
    return abort_threshold(stats.mean_distance, stats.var_distance, params.k, eps_robust)


def abort_threshold(mean: float, var: float, k: int, eps_robust: float) -> float:
    z = max(float(ndtri(1.0 - eps_robust)), 0.0)
    return mean + z * math.sqrt(var / k)


def key_length_coherent(params: ProtocolParams, budget: SecurityBudget, model: "ScenarioModel") -> KeyRateResult:
    """Composable key length against coherent attacks.

    ``ell = n (log2 1/c(delta) - log2 gamma(d0 + mu)) - leak_EC - log2(2/eps_c)
    - 2 log2(1/(2 eps_pa))``, floored and clamped at zero.
    """
    n = params.n
    scheme = params.scheme
    if not scheme.is_finite:
        raise ValueError("the coherent analysis needs a finite cutoff alpha")
    eps_mu = sampling_epsilon(budget, params)
    mu = mu_correction(params, eps_mu)
    c = overlap_c(scheme.delta)
    stats = model.joint_statistics(scheme)
    breakdown = {
        "uncertainty_bits": n * -math.log2(c),
        "max_entropy_bits": -n * log2_gamma(params.d0 + mu),
        "leak_ec_bits": -leak_ec(n, stats, model.ec_efficiency),
        **budget.hash_costs(),
    }
    raw = sum(breakdown.values())
    ell = max(0, math.floor(raw))
    reason = "" if ell > 0 else "uncertainty term does not cover max-entropy, leakage and hashing"
    return KeyRateResult(
        ell=ell,
        N=params.N,
        breakdown=breakdown,
        params={**params.to_dict(), "mu": mu, "eps_mu": eps_mu},
        attack="coherent",
        secrecy=budget.eps_s,
        reason=reason,
        extra={"c_delta": c, "mean_distance": stats.mean_distance},
    )

