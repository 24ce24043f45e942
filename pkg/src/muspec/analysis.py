"""Decision procedures over finite state domains: contract satisfaction,
non-interference, SNI/wSNI, the sandboxing and constant-time tables, and
the contract lattice.

All verdicts are relative to an explicitly enumerated domain of initial
states; counterexamples replay deterministically.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, replace
from typing import Optional, Union

from .arch import DEFAULT_FUEL, ArchState
from .contracts import (
    BOT_INF,
    SEQ_ARCH,
    SEQ_CT,
    SPEC_ARCH,
    SPEC_CT,
    SPEC_PC_CT,
    TOP,
    ContractId,
    StrengthWitness,
    contract_stronger_test,
    contract_trace,
)
from .isa import (
    BOTTOM,
    Assign,
    Barrier,
    Beqz,
    BinOp,
    CondAssign,
    Const,
    Jmp,
    Load,
    Program,
    Reg,
    Skip,
    Store,
    UnOp,
)
from .pipeline import HwConfig, hw_run

PAIR_GUARD = 2 ** 24


class DomainTooLarge(Exception):
    pass


@dataclass(frozen=True)
class Policy:
    """Low address ranges; everything else is high. Registers are all zero
    in initial states, so only memory needs classifying."""

    low: tuple  # ((lo, hi), ...), inclusive

    def is_low(self, addr: int) -> bool:
        return any(lo <= addr <= hi for lo, hi in self.low)

    @staticmethod
    def parse(text: str) -> "Policy":
        ranges = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2 or parts[0] != "low":
                raise ValueError(f"policy line {lineno}: expected 'low <addr>|<lo>..<hi>'")
            if ".." in parts[1]:
                lo, hi = parts[1].split("..", 1)
                ranges.append((int(lo), int(hi)))
            else:
                ranges.append((int(parts[1]), int(parts[1])))
        return Policy(tuple(ranges))


@dataclass(frozen=True)
class StateDomain:
    """Finite set of initial states: fixed memory cells plus varying cells
    enumerated over inclusive value ranges, arithmetic modulo ``modulus``."""

    modulus: int = 16
    vary: tuple = ()  # ((addr, lo, hi), ...)
    fixed: tuple = ()  # ((addr, value), ...)

    @property
    def addresses(self) -> tuple:
        return tuple(a for a, *_ in self.vary) + tuple(a for a, _ in self.fixed)

    def size(self) -> int:
        n = 1
        for _, lo, hi in self.vary:
            n *= hi - lo + 1
        return n

    def initial_states(self, program: Program):
        n = self.size()
        if n * n > PAIR_GUARD:
            raise DomainTooLarge(f"{n} states yield {n * n} pairs (> {PAIR_GUARD})")
        base = dict(self.fixed)
        ranges = [range(lo, hi + 1) for _, lo, hi in self.vary]
        addrs = [a for a, *_ in self.vary]
        for values in itertools.product(*ranges):
            mem = dict(base)
            mem.update(zip(addrs, values))
            yield ArchState.initial(program, mem)

    @staticmethod
    def parse(text: str) -> "StateDomain":
        modulus = 16
        vary = []
        fixed = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "values" and len(parts) == 2:
                    modulus = int(parts[1])
                elif parts[0] == "vary" and len(parts) == 4 and parts[2] == "in":
                    lo, hi = parts[3].split("..", 1)
                    vary.append((int(parts[1]), int(lo), int(hi)))
                elif parts[0] == "fix" and len(parts) == 4 and parts[2] == "=":
                    fixed.append((int(parts[1]), int(parts[3])))
                else:
                    raise ValueError
            except ValueError:
                raise ValueError(
                    f"domain line {lineno}: expected 'values <V>', "
                    f"'vary <addr> in <lo>..<hi>', or 'fix <addr> = <v>'"
                ) from None
        return StateDomain(modulus, tuple(vary), tuple(fixed))


@dataclass(frozen=True)
class Verdict:
    ok: bool
    check: str
    sigma: Optional[ArchState] = None
    sigma_prime: Optional[ArchState] = None
    position: Optional[int] = None
    trace: Optional[tuple] = None
    trace_prime: Optional[tuple] = None

    def __bool__(self):
        return self.ok


def low_equivalent(sigma: ArchState, sigma_prime: ArchState, policy: Policy) -> bool:
    cells = set(sigma.mem) | set(sigma_prime.mem)
    return all(
        sigma.read_mem(a) == sigma_prime.read_mem(a)
        for a in cells
        if policy.is_low(a)
    )


def _low_fingerprint(sigma: ArchState, policy: Policy) -> tuple:
    return tuple(sorted((a, v) for a, v in sigma.mem.items() if policy.is_low(a)))


def _first_divergence(t1: tuple, t2: tuple) -> int:
    for i, (a, b) in enumerate(zip(t1, t2)):
        if a != b:
            return i
    return min(len(t1), len(t2))


def _semantics_tracer(semantics, program, domain, fuel):
    """Trace function for either a ContractId or a hardware HwConfig."""
    snapshot_addrs = tuple(domain.addresses)
    if isinstance(semantics, ContractId):
        def run(sigma):
            return contract_trace(
                semantics, program, sigma, fuel, domain.modulus, snapshot_addrs
            )
    elif isinstance(semantics, HwConfig):
        cfg = replace(semantics, modulus=domain.modulus, fuel=fuel)
        def run(sigma):
            return hw_run(program, sigma, cfg)[0]
    else:
        raise TypeError(f"semantics must be a ContractId or HwConfig, got {semantics!r}")
    return run


def _equal_within_groups(program, domain, group_key, tracer, check_name, fuel) -> Verdict:
    """Shared engine: states with equal group keys must have equal traces.

    Each state is compared against its group's first member, so the first
    counterexample in enumeration order wins deterministically.
    """
    groups: dict = {}
    for sigma in domain.initial_states(program):
        key = group_key(sigma)
        trace = tracer(sigma)
        if key in groups:
            rep_sigma, rep_trace = groups[key]
            if rep_trace != trace:
                return Verdict(
                    ok=False,
                    check=check_name,
                    sigma=rep_sigma,
                    sigma_prime=sigma,
                    position=_first_divergence(rep_trace, trace),
                    trace=rep_trace,
                    trace_prime=trace,
                )
        else:
            groups[key] = (sigma, trace)
    return Verdict(ok=True, check=check_name)


def check_contract_satisfaction(
    program: Program,
    contract: ContractId,
    cfg: HwConfig,
    domain: StateDomain,
    fuel: int = DEFAULT_FUEL,
) -> Verdict:
    """Equal contract traces must imply equal adversary-visible hardware
    traces on the domain."""
    if contract.mode == "spec":
        window = contract.window or 0
        if window <= cfg.buffer_size + 1:
            raise ValueError(
                f"speculative contract window {window} must exceed "
                f"buffer_size + 1 = {cfg.buffer_size + 1}"
            )
    snapshot_addrs = tuple(domain.addresses)
    hw = _semantics_tracer(cfg, program, domain, fuel)

    def key(sigma):
        return contract_trace(contract, program, sigma, fuel, domain.modulus, snapshot_addrs)

    return _equal_within_groups(
        program, domain, key, hw, f"sat[{contract} vs {cfg.countermeasure}]", fuel
    )


def check_ni(
    program: Program,
    policy: Policy,
    semantics: Union[ContractId, HwConfig],
    domain: StateDomain,
    fuel: int = DEFAULT_FUEL,
) -> Verdict:
    """Low-equivalent initial states must produce equal traces."""
    tracer = _semantics_tracer(semantics, program, domain, fuel)
    name = str(semantics) if isinstance(semantics, ContractId) else f"hw:{semantics.countermeasure}"
    return _equal_within_groups(
        program, domain, lambda s: _low_fingerprint(s, policy), tracer, f"ni[{name}]", fuel
    )


def check_wsni(
    program: Program,
    contract: ContractId,
    domain: StateDomain,
    fuel: int = DEFAULT_FUEL,
) -> Verdict:
    """Equal seq-arch traces must imply equal traces under ``contract``."""
    snapshot_addrs = tuple(domain.addresses)
    tracer = _semantics_tracer(contract, program, domain, fuel)

    def key(sigma):
        return contract_trace(SEQ_ARCH, program, sigma, fuel, domain.modulus, snapshot_addrs)

    return _equal_within_groups(program, domain, key, tracer, f"wsni[{contract}]", fuel)


def check_sni(
    program: Program,
    policy: Policy,
    contract: ContractId,
    domain: StateDomain,
    fuel: int = DEFAULT_FUEL,
) -> Verdict:
    """Low-equivalence plus equal seq-ct traces must imply equal traces
    under ``contract``."""
    snapshot_addrs = tuple(domain.addresses)
    tracer = _semantics_tracer(contract, program, domain, fuel)

    def key(sigma):
        return (
            _low_fingerprint(sigma, policy),
            contract_trace(SEQ_CT, program, sigma, fuel, domain.modulus, snapshot_addrs),
        )

    return _equal_within_groups(program, domain, key, tracer, f"sni[{contract}]", fuel)


# ---------------------------------------------------------------------------
# Table classifications


def _spec_contracts(window: int) -> dict:
    return {
        "seq-ct": SEQ_CT,
        "seq-arch": SEQ_ARCH,
        "spec-ct": replace(SPEC_CT, window=window),
        "spec-pc-ct": replace(SPEC_PC_CT, window=window),
    }


@dataclass(frozen=True)
class TableRow:
    program: str
    vanilla: Verdict
    cells: tuple  # ((contract name, "Y,..."|"N", Verdict|None), ...)

    def cell(self, contract_name: str) -> str:
        for name, text, _verdict in self.cells:
            if name == contract_name:
                return text
        raise KeyError(contract_name)


def classify_sandboxing(
    program: Program,
    policy: Policy,
    domain: StateDomain,
    window: int,
    name: str = "",
    fuel: int = DEFAULT_FUEL,
) -> TableRow:
    """One row of the sandboxing table: vanilla sandboxing is NI against
    seq-arch; contracts at least as strong as seq-arch pass by the lattice,
    the speculative ones take a wSNI check."""
    contracts = _spec_contracts(window)
    vanilla = check_ni(program, policy, SEQ_ARCH, domain, fuel)
    cells = []
    for cname, contract in contracts.items():
        if cname in ("seq-ct", "seq-arch"):
            cells.append((cname, "Y,>=", None))
            continue
        verdict = check_wsni(program, contract, domain, fuel)
        cells.append((cname, "Y,wSNI" if verdict.ok else "N", verdict))
    return TableRow(name, vanilla, tuple(cells))


def classify_constant_time(
    program: Program,
    policy: Policy,
    domain: StateDomain,
    window: int,
    name: str = "",
    fuel: int = DEFAULT_FUEL,
) -> TableRow:
    """One row of the constant-time table: vanilla constant-time is NI
    against seq-ct; seq-arch is checked directly as NI (values make it
    unusable for constant-time); the speculative contracts take SNI."""
    contracts = _spec_contracts(window)
    vanilla = check_ni(program, policy, SEQ_CT, domain, fuel)
    cells = []
    for cname, contract in contracts.items():
        if cname == "seq-ct":
            cells.append((cname, "Y,>=" if vanilla.ok else "N", vanilla))
        elif cname == "seq-arch":
            verdict = check_ni(program, policy, SEQ_ARCH, domain, fuel)
            cells.append((cname, "Y,NI" if verdict.ok else "N", verdict))
        else:
            verdict = check_sni(program, policy, contract, domain, fuel)
            cells.append((cname, "Y,SNI" if verdict.ok else "N", verdict))
    return TableRow(name, vanilla, tuple(cells))


# ---------------------------------------------------------------------------
# Lattice


def lattice_edges(window: int) -> tuple:
    """The seven strength edges, strongest contract first in each pair."""
    spec_ct = replace(SPEC_CT, window=window)
    spec_pc = replace(SPEC_PC_CT, window=window)
    spec_arch = replace(SPEC_ARCH, window=window)
    return (
        (TOP, SEQ_CT),
        (SEQ_CT, spec_pc),
        (SEQ_CT, SEQ_ARCH),
        (spec_pc, spec_ct),
        (spec_ct, spec_arch),
        (SEQ_ARCH, spec_arch),
        (spec_arch, BOT_INF),
    )


def check_lattice(
    corpus,
    domain: StateDomain,
    window: int,
    fuel: int = DEFAULT_FUEL,
) -> dict:
    """Run the strength test on every lattice edge over the corpus;
    maps edge names to None (pass) or the refuting witness."""
    results = {}
    programs = list(corpus)
    for c1, c2 in lattice_edges(window):
        witness = contract_stronger_test(c1, c2, programs, domain, fuel)
        results[f"{c1} >= {c2}"] = witness
    return results


# ---------------------------------------------------------------------------
# Random well-formed programs for the lattice suite


_RANDOM_REGS = ("x", "y", "z", "w")


def _random_expr(rng: random.Random, modulus: int, depth: int = 2):
    roll = rng.random()
    if depth == 0 or roll < 0.35:
        return Const(rng.randrange(min(modulus, 16)))
    if roll < 0.7:
        return Reg(rng.choice(_RANDOM_REGS))
    if roll < 0.8:
        return UnOp(rng.choice(("neg", "not")), _random_expr(rng, modulus, depth - 1))
    op = rng.choice(("+", "-", "*", "<", "=", "&", "|", "^"))
    return BinOp(op, _random_expr(rng, modulus, depth - 1), _random_expr(rng, modulus, depth - 1))


def random_programs(count: int, seed: int = 0, length: int = 8, modulus: int = 16) -> list:
    """Well-formed random programs; control flow only moves forward, so
    every one of them terminates."""
    rng = random.Random(seed)
    programs = []
    for _ in range(count):
        instrs = []
        for addr in range(length):
            roll = rng.random()
            if roll < 0.20:
                instrs.append(Assign(rng.choice(_RANDOM_REGS), _random_expr(rng, modulus)))
            elif roll < 0.40:
                instrs.append(Load(rng.choice(_RANDOM_REGS), _random_expr(rng, modulus, 1)))
            elif roll < 0.55:
                instrs.append(Store(rng.choice(_RANDOM_REGS), _random_expr(rng, modulus, 1)))
            elif roll < 0.75:
                choices = list(range(addr + 2, length))
                if choices and rng.random() < 0.7:
                    target = rng.choice(choices)
                else:
                    target = BOTTOM
                instrs.append(Beqz(rng.choice(_RANDOM_REGS), target))
            elif roll < 0.82:
                instrs.append(Jmp(Const(rng.randrange(addr + 1, length + 1))))
            elif roll < 0.90:
                instrs.append(
                    CondAssign(
                        rng.choice(_RANDOM_REGS),
                        _random_expr(rng, modulus, 1),
                        _random_expr(rng, modulus, 1),
                    )
                )
            elif roll < 0.96:
                instrs.append(Skip())
            else:
                instrs.append(Barrier())
        programs.append(Program(tuple(instrs)))
    return programs
