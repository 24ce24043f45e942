"""Architectural (ISA-level) semantics: deterministic steps and runs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

from .isa import (
    BOTTOM,
    DEFAULT_MODULUS,
    PC,
    Assign,
    Barrier,
    Beqz,
    CondAssign,
    Jmp,
    Load,
    Program,
    Skip,
    Store,
    StuckError,
    Value,
    eval_expr,
    format_value,
)

DEFAULT_FUEL = 10 ** 6


class FuelExhausted(Exception):
    """The step bound ran out, i.e. the program may not terminate."""


@dataclass(frozen=True)
class ArchState:
    """Memory plus register assignment.

    Memory is total with default 0; only nonzero cells are stored so that
    dict equality coincides with semantic equality.
    """

    regs: dict
    mem: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "mem", {k: v for k, v in self.mem.items() if v != 0})

    @staticmethod
    def initial(program: Program, mem: dict = None) -> "ArchState":
        return ArchState(regs={r: 0 for r in program.registers}, mem=dict(mem or {}))

    def read_mem(self, addr: int) -> Value:
        return self.mem.get(addr, 0)

    def is_final(self) -> bool:
        return self.regs[PC] is BOTTOM

    def is_initial(self) -> bool:
        return all(v == 0 for v in self.regs.values())

    def with_regs(self, **updates) -> "ArchState":
        regs = dict(self.regs)
        regs.update(updates)
        return ArchState(regs=regs, mem=self.mem)

    def with_mem(self, addr: int, value: Value) -> "ArchState":
        mem = dict(self.mem)
        mem[addr] = value
        return ArchState(regs=self.regs, mem=mem)

    def key(self) -> tuple:
        """Hashable canonical form."""
        return (
            tuple(sorted((r, "end" if v is BOTTOM else v) for r, v in self.regs.items())),
            tuple(sorted((a, "end" if v is BOTTOM else v) for a, v in self.mem.items())),
        )

    def __eq__(self, other):
        return isinstance(other, ArchState) and self.regs == other.regs and self.mem == other.mem

    def __hash__(self):
        return hash(self.key())


def arch_step(p: Program, state: ArchState, modulus: int = DEFAULT_MODULUS) -> ArchState:
    """The unique successor of a non-final state."""
    pc = state.regs[PC]
    if pc is BOTTOM:
        raise StuckError("arch_step on a final state")
    ins = p.lookup(pc)
    a = state.regs
    if ins is None:
        return state.with_regs(**{PC: BOTTOM})
    if isinstance(ins, (Skip, Barrier)):
        return state.with_regs(**{PC: pc + 1})
    if isinstance(ins, Assign):
        v = eval_expr(ins.expr, a, modulus=modulus)
        return state.with_regs(**{PC: pc + 1, ins.target: v})
    if isinstance(ins, CondAssign):
        guard = eval_expr(ins.guard, a, modulus=modulus)
        if guard == 0:
            v = eval_expr(ins.expr, a, modulus=modulus)
            return state.with_regs(**{PC: pc + 1, ins.target: v})
        return state.with_regs(**{PC: pc + 1})
    if isinstance(ins, Load):
        n = eval_expr(ins.addr, a, modulus=modulus)
        return state.with_regs(**{PC: pc + 1, ins.target: state.read_mem(n)})
    if isinstance(ins, Store):
        n = eval_expr(ins.addr, a, modulus=modulus)
        v = a[ins.src]
        if v is BOTTOM:
            raise StuckError(f"store of undefined register {ins.src} at address {pc}")
        return state.with_mem(n, v).with_regs(**{PC: pc + 1})
    if isinstance(ins, Beqz):
        v = a[ins.guard]
        if v is BOTTOM:
            raise StuckError(f"branch on undefined register {ins.guard} at address {pc}")
        if v == 0:
            return state.with_regs(**{PC: ins.target})
        return state.with_regs(**{PC: pc + 1})
    if isinstance(ins, Jmp):
        target = eval_expr(ins.target, a, modulus=modulus)
        return state.with_regs(**{PC: target})
    raise TypeError(f"not an instruction: {ins!r}")


def arch_run(
    p: Program,
    state: ArchState,
    fuel: int = DEFAULT_FUEL,
    modulus: int = DEFAULT_MODULUS,
) -> Tuple[ArchState, int]:
    """Iterate arch_step to the final state; returns (final state, steps)."""
    steps = 0
    while not state.is_final():
        if steps >= fuel:
            raise FuelExhausted(f"no final state within {fuel} steps")
        state = arch_step(p, state, modulus)
        steps += 1
    return state, steps


# ---------------------------------------------------------------------------
# State literals: `reg name=value` / `mem addr=value`, one per line.


def parse_state(text: str, program: Program) -> ArchState:
    state = ArchState.initial(program)
    regs = dict(state.regs)
    mem = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or "=" not in parts[1]:
            raise ValueError(f"state line {lineno}: expected 'reg name=value' or 'mem addr=value'")
        kind, assignment = parts
        lhs, rhs = assignment.split("=", 1)
        value: Value = BOTTOM if rhs == "end" else int(rhs)
        if kind == "reg":
            regs[lhs] = value
        elif kind == "mem":
            mem[int(lhs)] = value
        else:
            raise ValueError(f"state line {lineno}: unknown kind {kind!r}")
    return ArchState(regs=regs, mem=mem)


def format_state(state: ArchState) -> str:
    lines = [f"reg {r}={format_value(v)}" for r, v in sorted(state.regs.items())]
    lines += [f"mem {a}={format_value(v)}" for a, v in sorted(state.mem.items())]
    return "\n".join(lines) + "\n"
