"""muspec: an executable workbench for speculation contracts.

Interprets uAsm programs under architectural, contract, and speculative
out-of-order hardware semantics, implements hardware countermeasures
(sequential scheduling, eager load delay, taint tracking), and decides
contract satisfaction, non-interference, SNI, wSNI, sandboxing, and
constant-time by bounded enumeration.
"""

from .analysis import (
    Policy,
    StateDomain,
    Verdict,
    check_contract_satisfaction,
    check_lattice,
    check_ni,
    check_sni,
    check_wsni,
    classify_constant_time,
    classify_sandboxing,
    low_equivalent,
)
from .arch import ArchState, arch_run, arch_step
from .contracts import ContractId, contract_stronger_test, contract_trace
from .isa import Program, check_well_formed, parse_program
from .pipeline import HwConfig, HwState, adversary_view, hw_run, hw_step

__all__ = [
    "ArchState",
    "ContractId",
    "HwConfig",
    "HwState",
    "Policy",
    "Program",
    "StateDomain",
    "Verdict",
    "adversary_view",
    "arch_run",
    "arch_step",
    "check_contract_satisfaction",
    "check_lattice",
    "check_ni",
    "check_sni",
    "check_well_formed",
    "check_wsni",
    "classify_constant_time",
    "classify_sandboxing",
    "contract_stronger_test",
    "contract_trace",
    "hw_run",
    "hw_step",
    "low_equivalent",
    "parse_program",
]
