"""Monte Carlo realization of the protocol.

Every random stage draws from its own Philox stream derived from the master
seed and a stage label, so a stage can be replayed on its own and identical
``(config, seed)`` pairs give bit-identical runs.
"""

from __future__ import annotations

import hashlib
import math
import zlib
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
import scipy.signal

from cvqkd.coherent import KeyRateResult, ProtocolParams, SecurityBudget, key_length_coherent, leak_ec
from cvqkd.discretization import BinningScheme
from cvqkd.errors import CVQKDError
from cvqkd.gaussian import CovarianceMatrix
from cvqkd.model import ScenarioModel

REPORT_SCHEMA_VERSION = 1
MAX_ENUMERATION_VOLUME = 10**8


def stage_rng(seed: int, stage: str) -> np.random.Generator:
    """Counter-based generator for one named stage of a run."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stage.encode())])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class SimulationRun:
    """Outcome of sampling and sifting ``rounds`` protocol rounds.

    Basis bits are 0 for amplitude and 1 for phase. Bob's phase outcomes are
    sign-flipped so matching rounds are positively correlated in both bases.
    """

    seed: int
    rounds: int
    basis_a: np.ndarray
    basis_b: np.ndarray
    x_a: np.ndarray  # sifted outcomes only
    x_b: np.ndarray
    sifted_basis: np.ndarray
    bins_a: np.ndarray | None = None
    bins_b: np.ndarray | None = None

    @property
    def sifted_count(self) -> int:
        return int(self.x_a.size)

    def truncated(self, count: int) -> "SimulationRun":
        """Keep the first ``count`` sifted rounds."""
        if count > self.sifted_count:
            raise CVQKDError(f"only {self.sifted_count} sifted rounds available, {count} requested")
        cut = slice(0, count)
        return replace(
            self,
            x_a=self.x_a[cut],
            x_b=self.x_b[cut],
            sifted_basis=self.sifted_basis[cut],
            bins_a=None if self.bins_a is None else self.bins_a[cut],
            bins_b=None if self.bins_b is None else self.bins_b[cut],
        )

    def binned(self, scheme: BinningScheme) -> "SimulationRun":
        return replace(self, bins_a=scheme.bin_index(self.x_a), bins_b=scheme.bin_index(self.x_b))


def sample_protocol_rounds(cov, rounds: int, seed: int) -> SimulationRun:
    """Draw basis choices and homodyne outcomes for ``rounds`` rounds, then sift.

    Mismatched-basis rounds are sampled too (from the cross-quadrature block)
    and then discarded, so sifting statistics match the protocol exactly.
    """
    cov = cov if isinstance(cov, CovarianceMatrix) else CovarianceMatrix(cov)
    if cov.modes != 2:
        raise ValueError("protocol sampling needs a two-mode state")
    g = cov.matrix
    rng_basis = stage_rng(seed, "basis")
    rng_meas = stage_rng(seed, "measurement")
    basis_a = rng_basis.integers(0, 2, size=rounds, dtype=np.uint8)
    basis_b = rng_basis.integers(0, 2, size=rounds, dtype=np.uint8)
    x_a = np.empty(rounds)
    x_b = np.empty(rounds)
    # fixed combination order keeps the stream consumption deterministic
    for ba in (0, 1):
        for bb in (0, 1):
            sel = np.flatnonzero((basis_a == ba) & (basis_b == bb))
            idx = [ba, 2 + bb]
            blk = g[np.ix_(idx, idx)].copy()
            if bb == 1:
                blk[0, 1] = blk[1, 0] = -blk[0, 1]
            chol = np.linalg.cholesky(blk)
            draws = rng_meas.standard_normal((sel.size, 2)) @ chol.T
            x_a[sel] = draws[:, 0]
            x_b[sel] = draws[:, 1]
    keep = basis_a == basis_b
    return SimulationRun(
        seed=int(seed),
        rounds=int(rounds),
        basis_a=basis_a,
        basis_b=basis_b,
        x_a=x_a[keep],
        x_b=x_b[keep],
        sifted_basis=basis_a[keep],
    )


@dataclass(frozen=True)
class EstimationResult:
    """Parameter-estimation outcome; distance sums are exact integers."""

    passed: bool
    k: int
    n: int
    sum_pe: int
    sum_key: int
    d0: float

    @property
    def N(self) -> int:
        return self.k + self.n

    @property
    def sum_tot(self) -> int:
        return self.sum_pe + self.sum_key

    @property
    def d_pe(self) -> float:
        return self.sum_pe / self.k

    @property
    def d_key(self) -> float:
        return self.sum_key / self.n if self.n else 0.0

    @property
    def d_tot(self) -> float:
        return self.sum_tot / self.N

    def sampling_identity_holds(self) -> bool:
        """``N d_tot == k d_pe + n d_key`` in exact rational arithmetic."""
        d_tot = Fraction(self.sum_tot, self.N)
        d_pe = Fraction(self.sum_pe, self.k)
        d_key = Fraction(self.sum_key, self.n) if self.n else Fraction(0)
        return self.N * d_tot == self.k * d_pe + self.n * d_key


def _pe_split(size: int, k: int, seed: int) -> np.ndarray:
    rng = stage_rng(seed, "parameter-estimation")
    mask = np.zeros(size, dtype=bool)
    mask[rng.choice(size, size=k, replace=False)] = True
    return mask


def run_parameter_estimation(run: SimulationRun, k: int, d0: float, seed: int) -> EstimationResult:
    """Reveal a uniformly random ``k``-subset of sifted rounds and test ``d_pe <= d0``."""
    if run.bins_a is None:
        raise ValueError("run must be binned before parameter estimation")
    size = run.sifted_count
    if not 0 < k < size:
        raise ValueError(f"need 0 < k < {size}, got k={k}")
    mask = _pe_split(size, k, seed)
    dist = np.abs(run.bins_a - run.bins_b)
    sum_pe = int(dist[mask].sum())
    sum_key = int(dist[~mask].sum())
    return EstimationResult(
        passed=bool(sum_pe <= d0 * k),
        k=int(k),
        n=int(size - k),
        sum_pe=sum_pe,
        sum_key=sum_key,
        d0=float(d0),
    )


def serfling_bound(nu, alphabet_size: float, k: int, n: int) -> np.ndarray:
    """``P[d_key >= d_pe + nu] <= exp(-2 nu^2 n k^2 / (|X|^2 N (k + 1)))``."""
    nu = np.asarray(nu, dtype=float)
    N = k + n
    return np.exp(-2.0 * nu * nu * n * k * k / (alphabet_size**2 * N * (k + 1)))


def adversarial_population(alphabet_size: int, N: int) -> np.ndarray:
    """Distances split evenly between the extremes 0 and ``|X|`` (maximal spread)."""
    pop = np.zeros(N, dtype=np.int64)
    pop[: N // 2] = alphabet_size
    return pop


@dataclass
class SerflingCurve:
    nu: np.ndarray
    empirical: np.ndarray
    bound: np.ndarray
    trials: int

    @property
    def binomial_sigma(self) -> np.ndarray:
        p = np.clip(self.bound, 0.0, 1.0)
        return np.sqrt(p * (1.0 - p) / self.trials)

    def violations(self, sigmas: float = 3.0) -> np.ndarray:
        return self.empirical > self.bound + sigmas * self.binomial_sigma


def serfling_experiment(
    alphabet_size: int,
    population,
    k: int,
    n: int,
    trials: int,
    seed: int,
    nu=None,
) -> SerflingCurve:
    """Empirical exceedance ``P[d_key >= d_pe + nu]`` over random PE splits of a fixed population.

    Args:
        alphabet_size: ``|X|``, the largest possible per-round distance.
        population: per-round distances (length ``k + n``) or ``"adversarial"``.
        nu: grid of deviations; defaults to 25 points where the bound spans 1 to 1e-3.
    """
    N = k + n
    if isinstance(population, str):
        if population != "adversarial":
            raise ValueError(f"unknown population spec {population!r}")
        population = adversarial_population(alphabet_size, N)
    pop = np.asarray(population, dtype=np.int64)
    if pop.size != N:
        raise ValueError(f"population has {pop.size} rounds, expected k + n = {N}")
    if nu is None:
        scale = alphabet_size * math.sqrt(N * (k + 1) / (2.0 * n * k * k))
        nu = np.linspace(0.0, scale * math.sqrt(math.log(1e3)), 25)
    nu = np.asarray(nu, dtype=float)
    rng = stage_rng(seed, "serfling")
    total = int(pop.sum())
    hits = np.zeros(nu.size, dtype=np.int64)
    for _ in range(trials):
        pe = rng.choice(N, size=k, replace=False)
        s_pe = int(pop[pe].sum())
        d_pe = s_pe / k
        d_key = (total - s_pe) / n
        hits += d_key >= d_pe + nu
    return SerflingCurve(nu=nu, empirical=hits / trials, bound=serfling_bound(nu, alphabet_size, k, n), trials=trials)


def counting_enumeration(n: int, d0: float) -> int:
    """Exact size of ``{x in Z^n : sum |x_i| <= n d0}``.

    Dynamic programming over the running total of ``|x_i|``; each coordinate
    contributes one way to reach 0 and two ways (``+-s``) to reach ``s >= 1``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if d0 < 0:
        raise ValueError("d0 must be nonnegative")
    budget = int(math.floor(n * d0 + 1e-9))
    # crude volume estimate guards against runaway requests
    if n > 10 or (2 * budget + 1) ** min(n, budget + 1) > MAX_ENUMERATION_VOLUME * 10**6:
        raise ValueError(f"enumeration too large for n={n}, d0={d0}")
    ways = [1] + [0] * budget
    for _ in range(n):
        nxt = [0] * (budget + 1)
        for total, count in enumerate(ways):
            if not count:
                continue
            nxt[total] += count
            for s in range(1, budget - total + 1):
                nxt[total + s] += 2 * count
        ways = nxt
    return sum(ways)


def toeplitz_hash(raw_bits, out_len: int, seed: int) -> np.ndarray:
    """Binary Toeplitz-matrix hash of ``raw_bits`` down to ``out_len`` bits.

    The ``out_len x len(raw)`` matrix has ``T[i, j] = t[i - j + len(raw) - 1]``
    with the ``len(raw) + out_len - 1`` defining bits ``t`` drawn from the seed.
    """
    x = np.asarray(raw_bits, dtype=np.uint8).ravel()
    n = x.size
    if out_len < 0:
        raise ValueError("output length must be nonnegative")
    if out_len > n:
        raise ValueError(f"cannot hash {n} bits to {out_len} bits")
    if out_len == 0:
        return np.zeros(0, dtype=np.uint8)
    t = stage_rng(seed, "toeplitz").integers(0, 2, size=n + out_len - 1, dtype=np.uint8)
    if n * out_len <= 1 << 22:
        full = np.convolve(t.astype(np.int64), x.astype(np.int64))
    else:
        full = np.rint(scipy.signal.fftconvolve(t.astype(float), x.astype(float))).astype(np.int64)
    return (full[n - 1 : n - 1 + out_len] & 1).astype(np.uint8)


toeplitz_privacy_amplification = toeplitz_hash


def symbols_to_bits(symbols, alphabet_size: int) -> np.ndarray:
    """Fixed-width big-endian binary encoding of alphabet indices ``1..M``."""
    width = max(1, int(math.ceil(math.log2(alphabet_size))))
    vals = np.asarray(symbols, dtype=np.int64) - 1
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((vals[:, None] >> shifts[None, :]) & 1).astype(np.uint8).ravel()


@dataclass
class RunReport:
    """Everything an end-to-end run produced; ``key`` is only kept on request."""

    config: dict
    seed: int
    statistics: dict
    passed: bool
    ell: int
    key_digest: str
    key: list | None = None
    calculator: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config,
            "seed": self.seed,
            "statistics": self.statistics,
            "passed": self.passed,
            "ell": self.ell,
            "key_length": 0 if not self.passed else self.ell,
            "key_digest": self.key_digest,
            "calculator": self.calculator,
        }
        if self.key is not None:
            out["key"] = "".join(str(b) for b in self.key)
        return out


class StageError(CVQKDError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # label and re-raise
        raise StageError(name, exc) from exc


def end_to_end_run(
    model: ScenarioModel,
    params: ProtocolParams,
    budget: SecurityBudget,
    seed: int,
    emit_key: bool = False,
) -> RunReport:
    """Sample, sift, bin, estimate, and hash to the calculator's key length.

    Error correction is not decoded: the report counts the modelled leakage
    and the correctness hash against the key, as the key-length formula does.
    """
    N = params.N
    scheme = params.scheme
    if not scheme.is_finite:
        raise ValueError("end-to-end runs use the finite-alphabet (coherent) analysis")
    rounds = 2 * N + int(10 * math.sqrt(2 * N)) + 16
    run = _stage("sample", sample_protocol_rounds, model.covariance(), rounds, seed)
    run = _stage("sift", run.truncated, N)
    run = _stage("bin", run.binned, scheme)
    pe = _stage("parameter-estimation", run_parameter_estimation, run, params.k, params.d0, seed)
    result: KeyRateResult = _stage("key-length", key_length_coherent, params, budget, model)
    stats = model.joint_statistics(scheme)
    statistics = {
        "rounds": run.rounds,
        "sifted": run.sifted_count,
        "k": pe.k,
        "n": pe.n,
        "sum_pe": pe.sum_pe,
        "sum_key": pe.sum_key,
        "sum_tot": pe.sum_tot,
        "d_pe": pe.d_pe,
        "d_key": pe.d_key,
        "d_tot": pe.d_tot,
        "d0": params.d0,
        "expected_distance": stats.mean_distance,
        "distance_variance": stats.var_distance,
        "leak_ec_bits": leak_ec(pe.n, stats, model.ec_efficiency),
    }
    key = np.zeros(0, dtype=np.uint8)
    if pe.passed and result.ell > 0:
        mask = _pe_split(run.sifted_count, params.k, seed)
        raw = symbols_to_bits(run.bins_a[~mask], scheme.alphabet_size)
        key = _stage("privacy-amplification", toeplitz_hash, raw, result.ell, seed)
    digest = hashlib.sha256(np.packbits(key).tobytes() + len(key).to_bytes(8, "big")).hexdigest()
    return RunReport(
        config={"model": model.to_dict(), "params": params.to_dict(), "budget": budget.__dict__.copy()},
        seed=int(seed),
        statistics=statistics,
        passed=pe.passed,
        ell=result.ell,
        key_digest=digest,
        key=key.tolist() if emit_key else None,
        calculator=result.to_dict(),
    )


@dataclass
class CoverageResult:
    hits: int
    trials: int
    eps_pe: float

    @property
    def coverage(self) -> float:
        return self.hits / self.trials

    @property
    def binomial_sigma(self) -> float:
        p = 1.0 - self.eps_pe
        return math.sqrt(p * (1.0 - p) / self.trials)


def simulate_box_coverage(cov, m: int, trials: int, eps_pe: float, seed: int, chunk: int = 64) -> CoverageResult:
    """How often the confidence box built from ``m`` sampled amplitude pairs contains the true parameters.

    Each trial draws ``m`` pairs from the amplitude block of ``cov``, forms the
    zero-mean estimates of ``(V_a, V_b, Z)`` and asks the box around them to
    contain the true values.
    """
    from cvqkd.collective import build_confidence_box

    cov = cov if isinstance(cov, CovarianceMatrix) else CovarianceMatrix(cov)
    g = cov.matrix
    truth = (g[0, 0], g[2, 2], g[0, 2])
    chol = np.linalg.cholesky(g[np.ix_([0, 2], [0, 2])])
    rng = stage_rng(seed, "box-coverage")
    hits = 0
    done = 0
    while done < trials:
        batch = min(chunk, trials - done)
        draws = rng.standard_normal((batch, m, 2)) @ chol.T
        va = np.mean(draws[..., 0] ** 2, axis=1)
        vb = np.mean(draws[..., 1] ** 2, axis=1)
        zc = np.mean(draws[..., 0] * draws[..., 1], axis=1)
        for est in zip(va, vb, zc):
            box = build_confidence_box(tuple(float(x) for x in est), m, eps_pe)
            hits += box.contains(truth)
        done += batch
    return CoverageResult(hits=hits, trials=trials, eps_pe=eps_pe)
