"""Grid optimization of free protocol parameters and scenario sweeps."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor

from cvqkd.coherent import (
    KeyRateResult,
    ProtocolParams,
    key_length_coherent,
    p_alpha_from_model,
    sampling_epsilon,
)
from cvqkd.collective import devetak_winter_rate, key_length_collective
from cvqkd.config import ScenarioConfig
from cvqkd.discretization import BinningScheme
from cvqkd.errors import BudgetExhaustedError, CVQKDError

BREAKDOWN_COLUMNS = {
    "coherent": ("uncertainty_bits", "max_entropy_bits", "leak_ec_bits", "ec_hash_bits", "pa_bits"),
    "collective": ("entropy_bits", "aep_bits", "leak_ec_bits", "ec_hash_bits", "pa_bits"),
    "dw": ("entropy_bits", "leak_ec_bits"),
}
PARAM_COLUMNS = ("k", "n", "alpha", "delta", "d0", "mu", "p_alpha")


def _better(candidate: KeyRateResult, best: KeyRateResult | None) -> bool:
    # strict improvement only, so iteration order decides ties
    if best is None:
        return True
    if candidate.ell != best.ell:
        return candidate.ell > best.ell
    if candidate.ell == 0:
        return candidate.raw_length > best.raw_length
    return False


def _k_values(N: int, fractions) -> list[int]:
    ks = []
    for f in fractions:
        k = min(max(1, int(round(f * N))), N - 1)
        if k not in ks:
            ks.append(k)
    return sorted(ks)


def _infeasible(N: int, attack: str, reasons: Counter) -> KeyRateResult:
    binding = reasons.most_common(1)[0][0] if reasons else "empty grid"
    return KeyRateResult(
        ell=0,
        N=N,
        breakdown={c: 0.0 for c in BREAKDOWN_COLUMNS[attack]},
        params={},
        attack=attack,
        reason=f"no feasible grid point: {binding}",
        extra={"infeasible_counts": dict(reasons)},
    )


def _coherent_grid(N: int, cfg: ScenarioConfig) -> KeyRateResult:
    model, budget = cfg.model, cfg.budget
    best = None
    reasons: Counter = Counter()
    evaluated = 0
    for k in _k_values(N, cfg.k_fractions):
        for delta in cfg.deltas:
            for alpha in cfg.alphas:
                if math.isinf(alpha):
                    reasons["coherent analysis needs a finite alpha"] += 1
                    continue
                try:
                    scheme = BinningScheme(alpha, delta)
                except ValueError:
                    reasons["alpha is not a multiple of delta/2"] += 1
                    continue
                # cheap feasibility check before touching the joint table
                draft = ProtocolParams(N, k, scheme, 0.0, p_alpha_from_model(model.alice_variance, alpha))
                if sampling_epsilon(budget, draft) <= 0:
                    reasons["tail correction exhausts the sampling budget (alpha too small)"] += 1
                    continue
                try:
                    params = ProtocolParams.from_model(model, N, k, scheme, cfg.eps_robust)
                    res = key_length_coherent(params, budget, model)
                except BudgetExhaustedError as exc:
                    reasons[str(exc)] += 1
                    continue
                evaluated += 1
                if _better(res, best):
                    best = res
    if best is None:
        return _infeasible(N, "coherent", reasons)
    best.extra["grid_points_evaluated"] = evaluated
    best.extra["infeasible_counts"] = dict(reasons)
    return best


def _collective_grid(N: int, cfg: ScenarioConfig) -> KeyRateResult:
    best = None
    reasons: Counter = Counter()
    for k in _k_values(N, cfg.k_fractions):
        for delta in cfg.deltas:
            try:
                res = key_length_collective(N, k, BinningScheme(math.inf, delta), cfg.budget, cfg.model)
            except (ValueError, CVQKDError) as exc:
                reasons[str(exc).split(":")[0]] += 1
                continue
            if _better(res, best):
                best = res
    return _infeasible(N, "collective", reasons) if best is None else best


def _dw_grid(N: int, cfg: ScenarioConfig) -> KeyRateResult:
    best = None
    cov = cfg.model.covariance()
    for delta in cfg.deltas:
        scheme = BinningScheme(math.inf, delta)
        rate = devetak_winter_rate(cov, scheme)
        stats = cfg.model.joint_statistics(scheme)
        breakdown = {"entropy_bits": N * (rate + stats.h_a_given_b), "leak_ec_bits": -N * stats.h_a_given_b}
        res = KeyRateResult(
            ell=max(0, math.floor(N * rate)),
            N=N,
            breakdown=breakdown,
            params={"k": 0, "n": N, "alpha": math.inf, "delta": delta},
            attack="dw",
            secrecy=0.0,
            reason="" if rate > 0 else "asymptotic rate is not positive",
            extra={"rate_per_symbol": rate},
        )
        if best is None or rate > best.extra["rate_per_symbol"]:
            best = res
    return best


def optimize_parameters(N: int, cfg: ScenarioConfig) -> KeyRateResult:
    """Exhaustive grid search maximizing the key length at ``N`` sifted rounds.

    Ties go to the smallest ``k``, then ``delta``, then ``alpha``. When no grid
    point is feasible the result has ``ell = 0`` and names the most frequent
    binding constraint in ``reason``.
    """
    N = int(N)
    if cfg.attack == "coherent":
        return _coherent_grid(N, cfg)
    if cfg.attack == "collective":
        return _collective_grid(N, cfg)
    return _dw_grid(N, cfg)


def _sweep_point(args):
    cfg, value = args
    if cfg.sweep_axis == "N":
        return optimize_parameters(int(value), cfg)
    return optimize_parameters(cfg.N, cfg.with_overrides(loss=float(value)))


def sweep(cfg: ScenarioConfig, workers: int = 1) -> list[dict]:
    """One optimized result per axis value, in axis order.

    Per-point failures are recorded in the row's ``error`` column and the
    sweep carries on.
    """
    jobs = [(cfg, v) for v in cfg.sweep_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_safe_point, j) for j in jobs]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_safe_point(j) for j in jobs]
    return [_row(cfg, v, out) for (_, v), out in zip(jobs, outcomes)]


def _safe_point(job):
    try:
        return _sweep_point(job)
    except (CVQKDError, ValueError, ArithmeticError) as exc:
        return exc


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return repr(x)
    return str(x)


def _row(cfg: ScenarioConfig, value, outcome) -> dict:
    row = {"axis": cfg.sweep_axis, "value": value, "attack": cfg.attack}
    cols = BREAKDOWN_COLUMNS[cfg.attack]
    if isinstance(outcome, Exception):
        row.update({"N": "", "ell": "", "rate": "", "reason": "", "error": f"{type(outcome).__name__}: {outcome}"})
        row.update({c: "" for c in PARAM_COLUMNS})
        row.update({c: "" for c in cols})
        return row
    row.update({"N": outcome.N, "ell": outcome.ell, "rate": outcome.rate, "reason": outcome.reason, "error": ""})
    row.update({c: outcome.params.get(c, "") for c in PARAM_COLUMNS})
    row.update({c: outcome.breakdown.get(c, 0.0) for c in cols})
    return row


def sweep_columns(attack: str) -> list[str]:
    return ["axis", "value", "attack", "N", "ell", "rate", *PARAM_COLUMNS, *BREAKDOWN_COLUMNS[attack], "reason", "error"]


def sweep_csv(rows: list[dict], attack: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = sweep_columns(attack)
    writer.writerow(cols)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


__all__ = ["optimize_parameters", "sweep", "sweep_csv", "sweep_columns", "BREAKDOWN_COLUMNS"]
