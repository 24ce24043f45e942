"""Labeled ISA semantics (contracts), their traces, and contract strength.

Observations are plain tuples so traces hash and compare cheaply:
    ("load", n) | ("store", n) | ("pc", v) | ("loadv", n, v) | ("state", blob)
where v is an int or the string "end" for the undefined value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .arch import DEFAULT_FUEL, ArchState, FuelExhausted, arch_step
from .isa import (
    BOTTOM,
    DEFAULT_MODULUS,
    PC,
    Barrier,
    Beqz,
    Jmp,
    Load,
    Program,
    Store,
    StuckError,
    Value,
    eval_expr,
)

INF = math.inf

DEFAULT_SPEC_WINDOW = 7

OBSERVERS = ("ct", "arch", "pc-ct")


def _obs_value(v: Value):
    return "end" if v is BOTTOM else v


@dataclass(frozen=True)
class ContractId:
    """One of the five labeled semantics plus the two degenerate contracts."""

    mode: str  # "seq" | "spec" | "top" | "bot"
    observer: Optional[str] = None
    window: Optional[int] = None  # spec mode only

    def __post_init__(self):
        if self.mode == "seq":
            if self.observer not in ("ct", "arch"):
                raise ValueError(f"seq contract needs observer ct|arch, got {self.observer!r}")
        elif self.mode == "spec":
            if self.observer not in OBSERVERS:
                raise ValueError(f"spec contract needs observer ct|arch|pc-ct, got {self.observer!r}")
        elif self.mode in ("top", "bot"):
            if self.observer is not None or self.window is not None:
                raise ValueError(f"{self.mode} contract takes no parameters")
        else:
            raise ValueError(f"unknown contract mode {self.mode!r}")

    def __str__(self):
        if self.mode == "seq":
            return f"seq-{self.observer}"
        if self.mode == "spec":
            return f"spec-{self.observer}"
        return "bot-inf" if self.mode == "bot" else "top"

    @staticmethod
    def parse(name: str, window: Optional[int] = None) -> "ContractId":
        table = {
            "seq-ct": ("seq", "ct"),
            "seq-arch": ("seq", "arch"),
            "spec-ct": ("spec", "ct"),
            "spec-pc-ct": ("spec", "pc-ct"),
            "spec-arch": ("spec", "arch"),
        }
        if name in table:
            mode, obs = table[name]
            return ContractId(mode, obs, window if mode == "spec" else None)
        if name == "top":
            return ContractId("top")
        if name in ("bot-inf", "bot"):
            return ContractId("bot")
        raise ValueError(f"unknown contract {name!r}")


SEQ_CT = ContractId("seq", "ct")
SEQ_ARCH = ContractId("seq", "arch")
SPEC_CT = ContractId("spec", "ct")
SPEC_PC_CT = ContractId("spec", "pc-ct")
SPEC_ARCH = ContractId("spec", "arch")
TOP = ContractId("top")
BOT_INF = ContractId("bot")


def _labeled_step(p, state, observer, modulus):
    """One architectural step plus its observation (None when silent).

    The ct observer exposes load/store addresses and post-step pc at
    branches and jumps; arch additionally exposes loaded values.
    """
    ins = p.lookup(state.regs[PC])
    nxt = arch_step(p, state, modulus)
    obs = None
    if isinstance(ins, Load):
        n = eval_expr(ins.addr, state.regs, modulus=modulus)
        if observer == "arch":
            obs = ("loadv", _obs_value(n), _obs_value(state.read_mem(n)))
        else:
            obs = ("load", _obs_value(n))
    elif isinstance(ins, Store):
        n = eval_expr(ins.addr, state.regs, modulus=modulus)
        obs = ("store", _obs_value(n))
    elif isinstance(ins, (Beqz, Jmp)):
        obs = ("pc", _obs_value(nxt.regs[PC]))
    return nxt, obs


def trace_seq(
    p: Program,
    state: ArchState,
    observer: str = "ct",
    fuel: int = DEFAULT_FUEL,
    modulus: int = DEFAULT_MODULUS,
) -> tuple:
    if observer not in ("ct", "arch"):
        raise ValueError(f"sequential observer must be ct|arch, got {observer!r}")
    trace = []
    for _ in range(fuel):
        if state.is_final():
            return tuple(trace)
        state, obs = _labeled_step(p, state, observer, modulus)
        if obs is not None:
            trace.append(obs)
    raise FuelExhausted(f"no final state within {fuel} steps")


def trace_spec(
    p: Program,
    state: ArchState,
    observer: str = "ct",
    window: int = DEFAULT_SPEC_WINDOW,
    fuel: int = DEFAULT_FUEL,
    modulus: int = DEFAULT_MODULUS,
) -> tuple:
    """Always-mispredict exploration with speculative window ``window``.

    Configurations are stacks of (state, remaining window); the initial
    state sits at the bottom with an infinite window. Branches push the
    mispredicted continuation; exhausted windows roll back with a pc
    observation of the resumed state.
    """
    if observer not in OBSERVERS:
        raise ValueError(f"unknown observer {observer!r}")
    if window < 1:
        raise ValueError("speculative window must be >= 1")
    step_observer = "arch" if observer == "arch" else "ct"
    stack = [(state, INF)]
    trace = []
    for _ in range(fuel):
        top, w = stack[-1]
        if w == INF and top.is_final():
            return tuple(trace)
        if w == 0:
            resumed, _ = stack[-2]
            trace.append(("pc", _obs_value(resumed.regs[PC])))
            stack.pop()
            continue
        ins = p.lookup(top.regs[PC])
        if isinstance(ins, Beqz):
            guard = top.regs[ins.guard]
            if guard is BOTTOM:
                raise StuckError(f"branch on undefined register {ins.guard}")
            pc = top.regs[PC]
            correct = ins.target if guard == 0 else pc + 1
            mispred = pc + 1 if guard == 0 else ins.target
            new_w = INF if w == INF else w - 1
            w_mispred = window if w == INF else new_w
            trace.append(("pc", _obs_value(mispred)))
            stack[-1] = (top.with_regs(**{PC: correct}), new_w)
            stack.append((top.with_regs(**{PC: mispred}), w_mispred))
            continue
        if top.is_final():
            # terminated path inside a speculative frame: program lookup at
            # the undefined pc keeps yielding the terminate step, silently
            # burning the window until rollback
            nxt, obs = top, None
        else:
            nxt, obs = _labeled_step(p, top, step_observer, modulus)
        if isinstance(ins, Barrier):
            # barriers zero speculative windows; outside speculation they
            # are ordinary steps (the bottom frame keeps its infinite window)
            new_w = INF if w == INF else 0
        else:
            new_w = INF if w == INF else w - 1
        if obs is not None:
            if observer == "pc-ct" and w != INF and obs[0] in ("load", "loadv", "store"):
                obs = None
        if obs is not None:
            trace.append(obs)
        stack[-1] = (nxt, new_w)
    raise FuelExhausted(f"no final state within {fuel} steps")


def state_snapshot(state: ArchState, addrs: tuple = ()) -> tuple:
    """Canonical full-state blob: sorted registers, then memory restricted
    to nonzero cells plus ``addrs``."""
    cells = set(state.mem) | set(addrs)
    return (
        tuple(sorted((r, _obs_value(v)) for r, v in state.regs.items())),
        tuple(sorted((a, _obs_value(state.read_mem(a))) for a in cells)),
    )


def trace_degenerate(
    p: Program,
    state: ArchState,
    which: str,
    fuel: int = DEFAULT_FUEL,
    modulus: int = DEFAULT_MODULUS,
    snapshot_addrs: tuple = (),
) -> tuple:
    if which == "top":
        return ()
    if which != "bot":
        raise ValueError(f"unknown degenerate contract {which!r}")
    trace = []
    touched = set(snapshot_addrs)
    for _ in range(fuel):
        if state.is_final():
            return tuple(trace)
        ins = p.lookup(state.regs[PC])
        if isinstance(ins, (Load, Store)):
            touched.add(eval_expr(ins.addr, state.regs, modulus=modulus))
        state = arch_step(p, state, modulus)
        trace.append(("state", state_snapshot(state, tuple(touched))))
    raise FuelExhausted(f"no final state within {fuel} steps")


def contract_trace(
    contract: ContractId,
    p: Program,
    state: ArchState,
    fuel: int = DEFAULT_FUEL,
    modulus: int = DEFAULT_MODULUS,
    snapshot_addrs: tuple = (),
) -> tuple:
    if contract.mode == "seq":
        return trace_seq(p, state, contract.observer, fuel, modulus)
    if contract.mode == "spec":
        window = contract.window or DEFAULT_SPEC_WINDOW
        return trace_spec(p, state, contract.observer, window, fuel, modulus)
    return trace_degenerate(p, state, contract.mode, fuel, modulus, snapshot_addrs)


@dataclass(frozen=True)
class StrengthWitness:
    """A pair distinguishing c1 while agreeing on c2."""

    program_index: int
    sigma: ArchState
    sigma_prime: ArchState
    trace1: tuple
    trace1_prime: tuple


def contract_stronger_test(
    c1: ContractId,
    c2: ContractId,
    corpus,
    domain,
    fuel: int = DEFAULT_FUEL,
) -> Optional[StrengthWitness]:
    """Empirical check of c1's strength over c2 on finite domains.

    Returns None when every c2-equal state pair is also c1-equal on every
    program, else the first witness in canonical enumeration order.
    """
    snapshot_addrs = tuple(domain.addresses)
    for idx, p in enumerate(corpus):
        buckets = {}
        for sigma in domain.initial_states(p):
            t2 = contract_trace(c2, p, sigma, fuel, domain.modulus, snapshot_addrs)
            t1 = contract_trace(c1, p, sigma, fuel, domain.modulus, snapshot_addrs)
            if t2 in buckets:
                rep_sigma, rep_t1 = buckets[t2]
                if rep_t1 != t1:
                    return StrengthWitness(idx, rep_sigma, sigma, rep_t1, t1)
            else:
                buckets[t2] = (sigma, t1)
    return None


def format_trace(trace: tuple) -> str:
    """Trace record format, one observation per line."""
    lines = []
    for obs in trace:
        if obs[0] == "state":
            lines.append(f"state {_blob(obs[1])}")
        else:
            lines.append(" ".join(str(x) for x in obs))
    return "\n".join(lines) + ("\n" if lines else "")


def _blob(snapshot) -> str:
    regs, mem = snapshot
    parts = [f"{r}={v}" for r, v in regs] + [f"[{a}]={v}" for a, v in mem]
    return ",".join(parts)
