"""Run configuration: device file, seed and per-stage overrides.

Config files are JSON or TOML. Unknown keys and out-of-range values are
rejected up front so a long pipeline run never fails halfway on a typo.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .constants import AutoRabiDefaults, LossConstants, ProtocolDefaults
from .errors import InvalidArgument

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


_A = AutoRabiDefaults
_P = ProtocolDefaults

STAGE_DEFAULTS: dict[str, dict] = {
    "autorabi": {
        "budget": _A.budget, "shots": _A.shots, "n_widths": _A.n_widths, "width_step_ns": _A.width_step_ns,
        "method": "cobyqa", "fq_bracket_ghz": _A.fq_bracket_ghz, "fr_bracket_ghz": _A.fr_bracket_ghz,
        "amp_bracket": _A.amp_bracket, "loss_constants": {},
    },
    "finetune": {
        "n_stack": _P.n_stack, "points": _P.stack_points, "half_width": _P.stack_half_width,
        "shots": _P.stack_shots, "x180_n_stack": _P.x180_n_stack,
    },
    "crsweep": {
        "coarse": list(_P.cr_coarse), "fine_half_width": _P.cr_fine_half_width, "fine_points": _P.cr_fine_points,
        "shots": _P.cr_shots, "fine_pulses": _P.cr_fine_pulses,
    },
    "xyfit": {
        "shots": _P.xy_shots, "points": _P.xy_points, "tolerance": _P.xy_tolerance_rad,
        "max_passes": _P.xy_max_passes,
    },
    "rb": {
        "channel": "backend", "lengths_1q": [1, 10, 25, 50, 100, 150], "lengths_2q": [1, 3, 6, 10, 16, 24],
        "circuits": 20, "shots": 1000, "xrb_circuits": 10, "inject": "",
    },
}

# (low, high) accepted for numeric overrides.
RANGES = {
    ("autorabi", "budget"): (1, 1000),
    ("autorabi", "shots"): (10, 100_000),
    ("autorabi", "n_widths"): (10, 500),
    ("autorabi", "width_step_ns"): (4, 64),
    ("autorabi", "fq_bracket_ghz"): (1e-5, 0.05),
    ("autorabi", "fr_bracket_ghz"): (1e-5, 0.05),
    ("autorabi", "amp_bracket"): (0.01, 1.0),
    ("finetune", "n_stack"): (4, 400),
    ("finetune", "points"): (6, 1000),
    ("finetune", "half_width"): (1e-3, 0.5),
    ("finetune", "shots"): (10, 100_000),
    ("finetune", "x180_n_stack"): (2, 400),
    ("crsweep", "fine_half_width"): (1e-3, 0.5),
    ("crsweep", "fine_points"): (3, 1000),
    ("crsweep", "shots"): (10, 100_000),
    ("crsweep", "fine_pulses"): (1, 15),
    ("xyfit", "shots"): (10, 100_000),
    ("xyfit", "points"): (12, 1000),
    ("xyfit", "tolerance"): (1e-4, 1.0),
    ("xyfit", "max_passes"): (1, 10),
    ("rb", "circuits"): (1, 10_000),
    ("rb", "shots"): (1, 1_000_000),
    ("rb", "xrb_circuits"): (1, 10_000),
}


@dataclass
class RunConfig:
    seed: int
    device: str | None = None
    out_dir: str = "autocal_out"
    store: str | None = None
    qubits: tuple[int, ...] = (0, 1)
    stages: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")
        if self.device is not None and not Path(self.device).is_file():
            raise InvalidArgument(f"device file not found: {self.device}")
        self.qubits = tuple(int(q) for q in self.qubits)
        if self.qubits not in ((0,), (0, 1)):
            raise InvalidArgument("qubits must be [0] or [0, 1]")
        merged = {}
        for stage, defaults in STAGE_DEFAULTS.items():
            given = dict(self.stages.get(stage, {}))
            unknown = set(given) - set(defaults)
            if unknown:
                raise InvalidArgument(f"unknown {stage} options: {sorted(unknown)}")
            merged[stage] = {**defaults, **given}
        extra = set(self.stages) - set(STAGE_DEFAULTS)
        if extra:
            raise InvalidArgument(f"unknown stages: {sorted(extra)}")
        for (stage, key), (lo, hi) in RANGES.items():
            v = merged[stage][key]
            if not lo <= v <= hi:
                raise InvalidArgument(f"{stage}.{key} = {v} outside [{lo}, {hi}]")
        LossConstants.from_mapping(merged["autorabi"]["loss_constants"])
        if merged["autorabi"]["method"] not in ("cobyqa", "cobyla"):
            raise InvalidArgument("autorabi.method must be cobyqa or cobyla")
        if merged["rb"]["channel"] not in ("backend", "ideal"):
            raise InvalidArgument("rb.channel must be backend or ideal")
        if merged["finetune"]["n_stack"] % 4 or merged["finetune"]["x180_n_stack"] % 2:
            raise InvalidArgument("finetune stacks: X90 needs a multiple of 4, X180 an even count")
        self.stages = merged

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise InvalidArgument(f"config file not found: {path}")
        text = path.read_text()
        data = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
        if "seed" not in data:
            raise InvalidArgument("config must set a seed")
        device = data.get("device")
        if device is not None and not Path(device).is_absolute():
            device = str((path.parent / device).resolve())
        known = {"seed", "device", "out_dir", "store", "qubits", *STAGE_DEFAULTS}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        return cls(
            seed=data["seed"],
            device=device,
            out_dir=data.get("out_dir", "autocal_out"),
            store=data.get("store"),
            qubits=tuple(data.get("qubits", (0, 1))),
            stages={k: data[k] for k in STAGE_DEFAULTS if k in data},
        )

    def stage(self, name: str) -> dict:
        return self.stages[name]

    def fingerprint(self) -> str:
        """Hash of everything that determines results (not output locations)."""
        d = {"seed": self.seed, "qubits": list(self.qubits), "stages": self.stages}
        if self.device:
            d["device_sha256"] = hashlib.sha256(Path(self.device).read_bytes()).hexdigest()
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return asdict(self)
