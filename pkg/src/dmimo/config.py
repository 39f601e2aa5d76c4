"""Experiment configuration: TOML files or the built-in ``paper2x2`` preset.

Lengths in config files are given in nm and times in ms; everything is
converted to SI on load.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .cir import DiffusionParams, NoiseModel, Topology, paired_grid
from .training import SequenceConstraints, as_bits

NM = 1e-9
MS = 1e-3

PRESETS = {
    "paper2x2": {
        "diffusion": {"D": 1e-9, "N": 1e5, "T_int_ms": 0.2, "L": 3},
        "topology": {"M": 2, "d_nm": 400.0, "h_nm": 200.0, "rx_radius_nm": 50.0},
        "noise": {"mode": "relative", "value": 0.3},
        "sequences": {"bits": ["1110000101011001", "1110100011100001"]},
        "design": {"strategy": "auto", "max_zero_run": 4, "seed": 0, "restarts": 50},
        "experiment": {
            "sigma_jitter_nm": 50.0,
            "trials": 1000,
            "repeats": [1, 2, 3, 4, 5, 6, 7],
            "seed": 0,
        },
    }
}


@dataclass
class DesignSettings:
    strategy: str = "auto"
    max_zero_run: int = 4
    max_ones: int | None = None
    seed: int = 0
    restarts: int = 50

    @property
    def constraints(self) -> SequenceConstraints:
        return SequenceConstraints(self.max_ones, self.max_zero_run)


@dataclass
class ExperimentConfig:
    topology: Topology
    diffusion: DiffusionParams
    noise: NoiseModel = NoiseModel()
    sigma_jitter: float = 0.0
    trials: int = 1000
    K1: int = 16
    K_list: list = field(default_factory=lambda: [16 * r for r in range(1, 8)])
    base_sequences: np.ndarray | None = None
    design: DesignSettings = field(default_factory=DesignSettings)
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sigma_jitter < 0:
            raise ValueError("sigma_jitter must be >= 0")
        if self.base_sequences is not None:
            seqs = np.array([as_bits(s) for s in self.base_sequences])
            if seqs.ndim != 2 or seqs.shape[0] != self.topology.M:
                raise ValueError(
                    f"need {self.topology.M} base sequences of equal length"
                )
            self.base_sequences = seqs
            self.K1 = seqs.shape[1]
        self.K_list = sorted(int(k) for k in self.K_list)
        bad = [k for k in self.K_list if k < 1 or k % self.K1]
        if bad:
            raise ValueError(f"K values {bad} are not positive multiples of K1={self.K1}")
        if self.K1 < self.diffusion.L:
            raise ValueError(f"K1={self.K1} is shorter than L={self.diffusion.L}")

    @property
    def M(self) -> int:
        return self.topology.M


def _topology(block: dict) -> Topology:
    radius = block.get("rx_radius_nm", 50.0) * NM
    if "tx_nm" in block or "rx_nm" in block:
        return Topology(
            np.asarray(block["tx_nm"], dtype=float) * NM,
            np.asarray(block["rx_nm"], dtype=float) * NM,
            radius,
        )
    return paired_grid(block["d_nm"] * NM, block.get("h_nm", 0.0) * NM, int(block.get("M", 2)), radius)


def from_dict(raw: dict) -> ExperimentConfig:
    diff = raw.get("diffusion", {})
    params = DiffusionParams(
        D=float(diff.get("D", 1e-9)),
        N=float(diff.get("N", 1e5)),
        T_int=float(diff.get("T_int_ms", 0.2)) * MS,
        L=int(diff.get("L", 3)),
    )
    noise = NoiseModel(**raw.get("noise", {}))
    exp = raw.get("experiment", {})
    design = DesignSettings(**raw.get("design", {}))
    seqs = raw.get("sequences", {}).get("bits")
    K1 = int(exp.get("K1", len(seqs[0]) if seqs else 16))
    if "K_list" in exp:
        K_list = exp["K_list"]
    else:
        K_list = [K1 * r for r in exp.get("repeats", range(1, 8))]
    return ExperimentConfig(
        topology=_topology(raw.get("topology", {"d_nm": 400.0, "h_nm": 200.0})),
        diffusion=params,
        noise=noise,
        sigma_jitter=float(exp.get("sigma_jitter_nm", 0.0)) * NM,
        trials=int(exp.get("trials", 1000)),
        K1=K1,
        K_list=list(K_list),
        base_sequences=seqs,
        design=design,
        seed=int(exp.get("seed", 0)),
    )


def load_raw(source: str | Path) -> dict:
    """Parse a TOML file, or return a copy of a named preset."""
    name = str(source)
    if name in PRESETS:
        return copy.deepcopy(PRESETS[name])
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"no config file or preset named {name!r}")
    with path.open("rb") as fh:
        return tomllib.load(fh)


def load_config(source: str | Path = "paper2x2", **overrides) -> ExperimentConfig:
    """Load a config; keyword ``overrides`` replace top-level fields afterwards."""
    cfg = from_dict(load_raw(source))
    if not overrides:
        return cfg
    fields = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    fields.update(overrides)
    return ExperimentConfig(**fields)


def paper2x2(**overrides) -> ExperimentConfig:
    return load_config("paper2x2", **overrides)
