"""Tunable constants of the calibration procedures.

Each numeric constant of the loss and of the CNOT/IRB algebra is defined here
once; every other module reads it from these objects so a run config can
override it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import InvalidArgument


def sigmoid(x):
    """Logistic function 1 / (1 + exp(-x)), overflow-safe."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class LossConstants:
    amp_target: float = 0.5
    amp_scale: float = 0.03
    offset_target: float = 0.5
    offset_scale: float = 0.05
    tx90_target_ns: float = 32.0
    tx90_scale_ns: float = 4.0
    bic_term_scale: float = 0.5
    bic_divisor: float = 10.0
    sentinel_loss: float = 1e4

    @classmethod
    def from_mapping(cls, overrides: dict | None = None) -> "LossConstants":
        if not overrides:
            return cls()
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise InvalidArgument(f"unknown loss constants: {sorted(unknown)}")
        return replace(cls(), **{k: float(v) for k, v in overrides.items()})

    def to_dict(self) -> dict:
        return asdict(self)


# theta2 + theta3 for every stored set of CNOT correction angles.
CNOT_CONSTRAINT_SUM = 2.0 * np.pi


def irb_prefactor(dim: int) -> float:
    """(d - 1) / d; 3/4 for a qubit pair."""
    return (dim - 1) / dim


@dataclass(frozen=True)
class AutoRabiDefaults:
    fq_bracket_ghz: float = 2e-3
    fr_bracket_ghz: float = 2e-3
    amp_bracket: float = 0.3
    budget: int = 40
    shots: int = 400
    n_widths: int = 50
    width_step_ns: int = 4


@dataclass(frozen=True)
class ProtocolDefaults:
    n_stack: int = 16
    x180_n_stack: int = 8
    stack_points: int = 41
    stack_half_width: float = 0.05  # fraction of the nominal amplitude
    stack_shots: int = 1000
    cr_coarse: tuple[float, float, int] = (0.05, 0.95, 19)
    cr_fine_half_width: float = 0.06
    cr_fine_points: int = 13
    cr_fine_pulses: int = 3
    cr_shots: int = 2000
    xy_shots: int = 2000
    xy_points: int = 48
    xy_tolerance_rad: float = 0.03
    xy_max_passes: int = 3
