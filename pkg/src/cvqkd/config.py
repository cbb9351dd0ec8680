"""Scenario configuration: JSON schema, defaults and normalization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from cvqkd.coherent import DEFAULT_EPS_ROBUST, SecurityBudget
from cvqkd.errors import ConfigError
from cvqkd.model import ScenarioModel

ATTACKS = ("coherent", "collective", "dw")

DEFAULT_K_FRACTIONS = (0.02, 0.05, 0.1, 0.15, 0.2, 0.3)
DEFAULT_DELTAS = (0.002, 0.005, 0.01, 0.02, 0.05, 0.1)
DEFAULT_ALPHAS = (20.0, 24.0, 28.0, 32.0, 36.0, 40.0, 44.0, 48.0, 52.0, 56.0, 60.0, 64.0, 72.0, 80.0)
DEFAULT_N_AXIS = (1e5, 1e6, 1e7, 1e8, 1e9, 1e10, 1e11)

_number = {"type": "number"}
_prob = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_alpha = {"anyOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "source": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "squeezing_db": {"type": "number", "minimum": 0},
                "antisqueezing_db": {"type": "number", "minimum": 0},
            },
        },
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "loss": {"type": "number", "minimum": 0, "maximum": 1},
                "excess_noise": {"type": "number", "minimum": 0},
            },
        },
        "ec_efficiency": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "budget": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps_s": _prob,
                "eps_c": _prob,
                "eps_pe": _prob,
                "smoothing_share": _prob | {"maximum": 1},
                "sampling_share": _prob | {"maximum": 1},
                "pa_share": _prob | {"maximum": 1},
            },
        },
        "attack": {"enum": list(ATTACKS)},
        "N": {"type": "number", "minimum": 2},
        "eps_robust": _prob,
        "seed": {"type": "integer", "minimum": 0},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "axis": {"enum": ["N", "loss"]},
                "values": {"type": "array", "minItems": 1, "items": _number},
            },
        },
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_fractions": {"type": "array", "minItems": 1, "items": _prob},
                "deltas": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
                "alphas": {"type": "array", "minItems": 1, "items": _alpha},
            },
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 2},
                "k": {"type": ["integer", "null"], "minimum": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "d0": {"type": ["number", "null"], "minimum": 0},
            },
        },
    },
}


def _alpha_out(a: float):
    return "inf" if math.isinf(a) else float(a)


def _alpha_in(a) -> float:
    return math.inf if a == "inf" else float(a)


@dataclass(frozen=True)
class SimulationSettings:
    N: int = 100_000
    k: int | None = None  # defaults to N // 10
    alpha: float = 36.0
    delta: float = 0.01
    d0: float | None = None  # defaults to the robust threshold

    @property
    def k_effective(self) -> int:
        return self.k if self.k is not None else max(1, self.N // 10)


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario; defaults are the headline 11/16 dB, 1% noise, beta 0.95 setup."""

    model: ScenarioModel = field(default_factory=ScenarioModel)
    budget: SecurityBudget = field(default_factory=SecurityBudget)
    attack: str = "coherent"
    N: int = 10**9
    eps_robust: float = DEFAULT_EPS_ROBUST
    seed: int = 0
    sweep_axis: str = "N"
    sweep_values: tuple = DEFAULT_N_AXIS
    k_fractions: tuple = DEFAULT_K_FRACTIONS
    deltas: tuple = DEFAULT_DELTAS
    alphas: tuple = DEFAULT_ALPHAS
    simulation: SimulationSettings = field(default_factory=SimulationSettings)

    def __post_init__(self):
        if self.attack not in ATTACKS:
            raise ConfigError(f"attack must be one of {ATTACKS}, got {self.attack!r}")
        for name in ("k_fractions", "deltas", "alphas", "sweep_values"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None
        src = data.get("source", {})
        ch = data.get("channel", {})
        sw = data.get("sweep", {})
        gr = data.get("grids", {})
        sim = data.get("simulation", {})
        try:
            model = ScenarioModel(
                squeezing_db=float(src.get("squeezing_db", 11.0)),
                antisqueezing_db=float(src.get("antisqueezing_db", 16.0)),
                loss=float(ch.get("loss", 0.0)),
                excess_noise=float(ch.get("excess_noise", 0.01)),
                ec_efficiency=float(data.get("ec_efficiency", 0.95)),
            )
            budget = SecurityBudget(**{k: float(v) for k, v in data.get("budget", {}).items()})
            axis = sw.get("axis", "N")
            values = sw.get("values", DEFAULT_N_AXIS if axis == "N" else (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3))
            return cls(
                model=model,
                budget=budget,
                attack=data.get("attack", "coherent"),
                N=int(data.get("N", 10**9)),
                eps_robust=float(data.get("eps_robust", DEFAULT_EPS_ROBUST)),
                seed=int(data.get("seed", 0)),
                sweep_axis=axis,
                sweep_values=tuple(float(v) for v in values),
                k_fractions=tuple(sorted(float(v) for v in gr.get("k_fractions", DEFAULT_K_FRACTIONS))),
                deltas=tuple(sorted(float(v) for v in gr.get("deltas", DEFAULT_DELTAS))),
                alphas=tuple(sorted(_alpha_in(v) for v in gr.get("alphas", DEFAULT_ALPHAS))),
                simulation=SimulationSettings(
                    N=int(sim.get("N", 100_000)),
                    k=sim.get("k"),
                    alpha=float(sim.get("alpha", 36.0)),
                    delta=float(sim.get("delta", 0.01)),
                    d0=None if sim.get("d0") is None else float(sim["d0"]),
                ),
            )
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        m = self.model
        b = self.budget
        s = self.simulation
        return {
            "source": {"squeezing_db": m.squeezing_db, "antisqueezing_db": m.antisqueezing_db},
            "channel": {"loss": m.loss, "excess_noise": m.excess_noise},
            "ec_efficiency": m.ec_efficiency,
            "budget": {
                "eps_s": b.eps_s,
                "eps_c": b.eps_c,
                "eps_pe": b.eps_pe,
                "smoothing_share": b.smoothing_share,
                "sampling_share": b.sampling_share,
                "pa_share": b.pa_share,
            },
            "attack": self.attack,
            "N": self.N,
            "eps_robust": self.eps_robust,
            "seed": self.seed,
            "sweep": {"axis": self.sweep_axis, "values": list(self.sweep_values)},
            "grids": {
                "k_fractions": list(self.k_fractions),
                "deltas": list(self.deltas),
                "alphas": [_alpha_out(a) for a in self.alphas],
            },
            "simulation": {"N": s.N, "k": s.k, "alpha": s.alpha, "delta": s.delta, "d0": s.d0},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Return a copy with top-level fields or ``model``-level fields replaced."""
        from dataclasses import replace

        model_fields = {"squeezing_db", "antisqueezing_db", "loss", "excess_noise", "ec_efficiency"}
        model_changes = {k: changes.pop(k) for k in list(changes) if k in model_fields}
        model = replace(self.model, **model_changes) if model_changes else self.model
        return replace(self, model=model, **changes)
