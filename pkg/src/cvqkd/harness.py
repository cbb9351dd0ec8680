"""Library-level front doors used by the command line: simulation runs and self-checks."""

from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np

from cvqkd.coherent import ProtocolParams, gamma
from cvqkd.config import ScenarioConfig
from cvqkd.discretization import BinningScheme, overlap_c, overlap_c_series
from cvqkd.gaussian import (
    VACUUM_VARIANCE,
    CovarianceMatrix,
    gaussian_entropy,
    gaussian_purification,
    symplectic_eigenvalues,
    tmsv_like,
)
from cvqkd.simulation import (
    counting_enumeration,
    end_to_end_run,
    run_parameter_estimation,
    sample_protocol_rounds,
    serfling_experiment,
    toeplitz_hash,
)


def simulate(cfg: ScenarioConfig, N: int | None = None, seed: int | None = None, emit_key: bool = False) -> dict:
    """Run the full pipeline for the config's simulation settings and return the JSON-ready report."""
    sim = cfg.simulation
    N = sim.N if N is None else int(N)
    seed = cfg.seed if seed is None else int(seed)
    k = sim.k if sim.k is not None else max(1, N // 10)
    scheme = BinningScheme(sim.alpha, sim.delta)
    params = ProtocolParams.from_model(cfg.model, N, k, scheme, cfg.eps_robust)
    if sim.d0 is not None:
        params = replace(params, d0=sim.d0)
    report = end_to_end_run(cfg.model, params, cfg.budget, seed, emit_key=emit_key).to_dict()
    report["scenario"] = cfg.to_dict()
    return report


def _check_counting():
    for n in range(1, 7):
        for d0 in (0.25, 0.5, 1.0, 2.0):
            if counting_enumeration(n, d0) > gamma(d0) ** n * (1 + 1e-12):
                return False, f"count exceeds gamma^n at n={n}, d0={d0}"
    return True, "lattice counts below gamma(d0)^n"


def _check_serfling():
    curve = serfling_experiment(16, "adversarial", 100, 400, 1000, seed=1)
    bad = int(curve.violations().sum())
    return bad == 0, f"{bad} exceedances above bound + 3 sigma"


def _check_gaussian():
    rng = np.random.default_rng(5)
    worst = worst_h = 0.0
    for _ in range(20):
        va, vb = rng.uniform(0.6, 5.0, 2)
        zmax = math.sqrt((va - 0.5) * (vb - 0.5))
        cov = tmsv_like(va, vb, rng.uniform(0, 0.99) * zmax)
        pure = gaussian_purification(cov)
        worst = max(worst, float(np.max(np.abs(symplectic_eigenvalues(pure).as_array() - VACUUM_VARIANCE))))
        env = pure.submatrix([2, 3])
        worst_h = max(worst_h, abs(gaussian_entropy(env) - gaussian_entropy(cov)))
    return worst < 1e-8 and worst_h < 1e-6, f"purity residue {worst:.2e}, H(E) - H(AB) {worst_h:.2e}"


def _check_overlap():
    rel = max(abs(overlap_c(d) / overlap_c_series(d) - 1) for d in (0.01, 0.05, 0.1))
    return rel < 1e-6, f"overlap vs series relative error {rel:.2e}"


def _check_toeplitz():
    zeros = toeplitz_hash(np.zeros(64, dtype=np.uint8), 16, seed=3)
    x = np.random.default_rng(0).integers(0, 2, 64)
    y = np.random.default_rng(1).integers(0, 2, 64)
    lin = np.array_equal(toeplitz_hash(x ^ y, 16, 4), toeplitz_hash(x, 16, 4) ^ toeplitz_hash(y, 16, 4))
    return (not zeros.any()) and lin, "hash is linear over GF(2)"


def _check_sampling():
    run = sample_protocol_rounds(CovarianceMatrix.vacuum(2), 20000, seed=2).binned(BinningScheme(4.0, 0.5))
    pe = run_parameter_estimation(run, 1000, math.inf, seed=2)
    return pe.passed and pe.sampling_identity_holds(), "sampling identity exact"


SELFTESTS = {
    "counting": _check_counting,
    "serfling": _check_serfling,
    "gaussian": _check_gaussian,
    "overlap": _check_overlap,
    "toeplitz": _check_toeplitz,
    "sampling": _check_sampling,
}


def selftest() -> list[tuple[str, bool, str, float]]:
    results = []
    for name, fn in SELFTESTS.items():
        t0 = time.perf_counter()
        try:
            ok, msg = fn()
        except Exception as exc:  # a crash is a failure, not an abort of the suite
            ok, msg = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), msg, time.perf_counter() - t0))
    return results
