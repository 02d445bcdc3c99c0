"""Analytic energy estimator: per-invocation weight-loading energy (DDR vs SRAM)
plus compute energy.

The central assumption, stated in every report: weights are re-loaded from
memory on every invocation (no cross-invocation cache), and the encoder and
predictor are DDR-resident regardless of size — only joiner components are
candidates for the accelerator-local SRAM buffer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ContractViolation, MetricUndefinedError
from .metrics import FACTORIZED, RuntimeStats

SRAM = "sram"
DDR = "ddr"

ASSUMPTIONS = (
    "weights are re-loaded from memory on every invocation (no cross-invocation cache)",
    "encoder and predictor are DDR-resident regardless of size",
    "ops counted as 2 per weight (multiply-accumulate); activation costs ignored",
    "INT8 deployment: 1 byte per parameter",
)


@dataclass
class PowerParams:
    """Hardware cost constants; defaults follow common mobile DSP/accelerator figures."""

    ddr_pj_per_byte: float = 120.0
    sram_pj_per_byte: float = 1.5
    int8_gops_per_mw: float = 5.0  # 5 GOPS/mW == 0.2 pJ/op
    sram_capacity_bytes: int = 2 * 1024 * 1024

    @property
    def pj_per_op(self) -> float:
        return 1.0 / self.int8_gops_per_mw

    def validate(self) -> None:
        if min(self.ddr_pj_per_byte, self.sram_pj_per_byte, self.int8_gops_per_mw) <= 0:
            raise ContractViolation("power constants must be positive")
        if self.sram_capacity_bytes <= 0:
            raise ContractViolation("sram_capacity_bytes must be positive")
        if self.sram_energy >= self.ddr_energy:
            raise ContractViolation("SRAM access must be cheaper than DDR")

    # Aliases used in reports.
    @property
    def ddr_energy(self) -> float:
        return self.ddr_pj_per_byte

    @property
    def sram_energy(self) -> float:
        return self.sram_pj_per_byte

    def as_dict(self) -> dict:
        return {
            "ddr_pj_per_byte": self.ddr_pj_per_byte,
            "sram_pj_per_byte": self.sram_pj_per_byte,
            "int8_gops_per_mw": self.int8_gops_per_mw,
            "pj_per_op": self.pj_per_op,
            "sram_capacity_bytes": self.sram_capacity_bytes,
        }


@dataclass
class ComponentProfile:
    name: str
    weight_bytes: int  # INT8 deployment size
    invocations: int
    ops_per_invocation: int
    forced_ddr: bool = False  # encoder/predictor never move to SRAM

    def validate(self) -> None:
        if min(self.weight_bytes, self.invocations, self.ops_per_invocation) < 0:
            raise ContractViolation("profile fields must be >= 0")


@dataclass
class ComponentEnergy:
    name: str
    placement: str
    weight_bytes: int
    invocations: int
    memory_pj: float
    compute_pj: float

    @property
    def total_pj(self) -> float:
        return self.memory_pj + self.compute_pj


@dataclass
class EnergyBreakdown:
    components: list[ComponentEnergy]
    params: PowerParams

    @property
    def memory_pj(self) -> float:
        return sum(c.memory_pj for c in self.components)

    @property
    def compute_pj(self) -> float:
        return sum(c.compute_pj for c in self.components)

    @property
    def total_pj(self) -> float:
        return self.memory_pj + self.compute_pj

    def as_dict(self) -> dict:
        return {
            "components": [
                {
                    "name": c.name,
                    "placement": c.placement,
                    "weight_bytes": c.weight_bytes,
                    "invocations": c.invocations,
                    "memory_pj": c.memory_pj,
                    "compute_pj": c.compute_pj,
                    "total_pj": c.total_pj,
                }
                for c in self.components
            ],
            "totals": {
                "memory_pj": self.memory_pj,
                "compute_pj": self.compute_pj,
                "total_pj": self.total_pj,
                "total_microjoules": self.total_pj * 1e-6,
            },
            "params": self.params.as_dict(),
            "assumptions": list(ASSUMPTIONS),
        }


def place(profile: ComponentProfile, params: PowerParams) -> str:
    """SRAM iff the component's weights fit the local buffer (boundary: equal
    size still fits); encoder/predictor are pinned to DDR."""
    profile.validate()
    if profile.forced_ddr:
        return DDR
    return SRAM if profile.weight_bytes <= params.sram_capacity_bytes else DDR


def estimate_energy(
    profiles: list[ComponentProfile], params: PowerParams | None = None
) -> EnergyBreakdown:
    """Memory energy = invocations * bytes * placement rate; compute = invocations * ops * pJ/op."""
    params = params or PowerParams()
    params.validate()
    comps = []
    for prof in profiles:
        prof.validate()
        placement = place(prof, params)
        rate = params.sram_pj_per_byte if placement == SRAM else params.ddr_pj_per_byte
        comps.append(
            ComponentEnergy(
                name=prof.name,
                placement=placement,
                weight_bytes=prof.weight_bytes,
                invocations=prof.invocations,
                memory_pj=prof.invocations * prof.weight_bytes * rate,
                compute_pj=prof.invocations * prof.ops_per_invocation * params.pj_per_op,
            )
        )
    return EnergyBreakdown(comps, params)


def compare_runs(a: EnergyBreakdown, b: EnergyBreakdown) -> float:
    """Total-energy reduction of run b relative to baseline a, in percent."""
    if a.total_pj <= 0:
        raise MetricUndefinedError("cannot compare against a zero-energy baseline")
    return 100.0 * (1.0 - b.total_pj / a.total_pj)


# ---------------------------------------------------------------------------
# Component profiles from runtime statistics
# ---------------------------------------------------------------------------

# Component byte sizes mirroring the published architecture at INT8
# (1 byte/param): encoder 68M, predictor 6M; small joiners are a single
# projection (blank path 1K / non-blank 5M), large add hidden layers
# (blank 1M / non-blank 11M).
PAPER_BYTES = {
    "small": {
        "encoder": 68_000_000,
        "predictor": 6_000_000,
        "joiner": 5_000_000,
        "joiner_blank": 1_000,
        "joiner_nonblank": 5_000_000,
    },
    "large": {
        "encoder": 68_000_000,
        "predictor": 6_000_000,
        "joiner": 11_000_000,
        "joiner_blank": 1_000_000,
        "joiner_nonblank": 11_000_000,
    },
}


def profiles_from_stats(
    stats: RuntimeStats, bytes_table: dict[str, int]
) -> list[ComponentProfile]:
    """Build component profiles from measured invocation counts and a byte table.

    ops_per_invocation follows the 2-ops-per-weight convention uniformly.
    """
    def ops(b):
        return 2 * b

    profiles = [
        ComponentProfile(
            "encoder", bytes_table["encoder"], stats.encoder_calls,
            ops(bytes_table["encoder"]), forced_ddr=True,
        ),
        ComponentProfile(
            "predictor", bytes_table["predictor"], stats.predictor_calls,
            ops(bytes_table["predictor"]), forced_ddr=True,
        ),
    ]
    if stats.joiner_kind == FACTORIZED:
        profiles.append(
            ComponentProfile(
                "joiner_blank", bytes_table["joiner_blank"], stats.blank_joiner_calls,
                ops(bytes_table["joiner_blank"]),
            )
        )
        profiles.append(
            ComponentProfile(
                "joiner_nonblank", bytes_table["joiner_nonblank"],
                stats.nonblank_joiner_calls, ops(bytes_table["joiner_nonblank"]),
            )
        )
    else:
        profiles.append(
            ComponentProfile(
                "joiner", bytes_table["joiner"], stats.full_joiner_calls,
                ops(bytes_table["joiner"]),
            )
        )
    return profiles


def paper_profiles(stats: RuntimeStats, size: str) -> list[ComponentProfile]:
    if size not in PAPER_BYTES:
        raise ContractViolation(f"unknown profile size {size!r}; use 'small' or 'large'")
    return profiles_from_stats(stats, PAPER_BYTES[size])


def model_bytes_table(model) -> dict[str, int]:
    """Byte table from an actual model's parameter counts (INT8: 1 byte/param)."""
    from .model import count_params

    return {
        "encoder": count_params(model, "encoder"),
        "predictor": count_params(model, "predictor"),
        "joiner": count_params(model, "joiner.nf")
        + count_params(model, "joiner.enc_proj")
        + count_params(model, "joiner.pred_proj"),
        "joiner_blank": count_params(model, "joiner.blank"),
        "joiner_nonblank": count_params(model, "joiner.nonblank")
        + count_params(model, "joiner.enc_proj")
        + count_params(model, "joiner.pred_proj"),
    }
