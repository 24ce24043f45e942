"""Out-of-order speculative hardware semantics: fetch/execute/retire
micro-steps, the top-level step rule, runs, and the adversary view.

A hardware state is the architectural state plus a labeled reorder buffer
and the cache / branch predictor / scheduler component states.  Stages
communicate through plain (unlabeled) command tuples; the configured
countermeasure decides what a stage may see (unlabel) and how the result
is retainted (relabel).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

from . import countermeasures as cm
from .arch import DEFAULT_FUEL, ArchState, FuelExhausted
from .isa import (
    BOTTOM,
    DEFAULT_MODULUS,
    PC,
    Assign,
    Barrier,
    Beqz,
    CondAssign,
    Ite,
    Jmp,
    Load,
    Program,
    Reg,
    Skip,
    Store,
    Value,
    eval_expr,
    is_value,
)
from .uarch import (
    FETCH,
    RETIRE,
    apply_buffer,
    buf_project,
    cmd_assign,
    cmd_barrier,
    cmd_load,
    cmd_skip,
    cmd_store,
    make_cache,
    make_predictor,
    make_scheduler,
)

STUCK = object()  # stage outcome: no rule applies for the directive

DEFAULT_BUFFER_SIZE = 5


class DeadlockError(Exception):
    """No directive made progress for a full rotation of candidates."""


@dataclass(frozen=True)
class HwConfig:
    buffer_size: int = DEFAULT_BUFFER_SIZE
    cache: str = "lru:4"
    predictor: str = "fallthrough"
    scheduler: str = "ooo"
    countermeasure: str = "none"
    fuel: int = DEFAULT_FUEL
    modulus: int = DEFAULT_MODULUS
    mask_literal: bool = False
    expose_labels: bool = True

    def __post_init__(self):
        if self.countermeasure not in cm.COUNTERMEASURES:
            raise ValueError(f"unknown countermeasure {self.countermeasure!r}")
        if self.countermeasure == "seq" and self.scheduler != "seq":
            object.__setattr__(self, "scheduler", "seq")

    @staticmethod
    def parse(text: str) -> "HwConfig":
        """Config file: `key = value` lines, # comments."""
        fields = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in ("buffer_size", "fuel", "modulus"):
                fields[key] = int(value)
            elif key in ("cache", "predictor", "scheduler", "countermeasure"):
                fields[key] = value
            elif key in ("mask_literal", "expose_labels"):
                fields[key] = value.lower() in ("1", "true", "yes")
            else:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
        return HwConfig(**fields)


@dataclass(frozen=True)
class HwState:
    sigma: ArchState
    buf: tuple  # ((command, label), ...)
    cs: object
    bp: object
    sc: object

    def is_final(self) -> bool:
        return not self.buf and self.sigma.regs[PC] is BOTTOM


def initial_hw_state(program: Program, sigma: ArchState, cfg: HwConfig) -> HwState:
    return HwState(
        sigma=sigma,
        buf=(),
        cs=make_cache(cfg.cache),
        bp=make_predictor(cfg.predictor, program),
        sc=make_scheduler(cfg.scheduler, cfg.buffer_size),
    )


# ---------------------------------------------------------------------------
# Stages. Each takes plain command tuples and returns
# (regs, mem, buf, cs, bp) or STUCK.


def _instr_commands(ins) -> tuple:
    """Buffer entry for a fetched non-control instruction."""
    if isinstance(ins, Skip):
        return cmd_skip()
    if isinstance(ins, Barrier):
        return cmd_barrier()
    if isinstance(ins, Assign):
        return cmd_assign(ins.target, ins.expr)
    if isinstance(ins, CondAssign):
        # generic non-transmit form: keep the old value unless the guard is 0
        return cmd_assign(ins.target, Ite(ins.guard, Reg(ins.target), ins.expr))
    if isinstance(ins, Load):
        return cmd_load(ins.target, ins.addr)
    if isinstance(ins, Store):
        return cmd_store(Reg(ins.src), ins.addr)
    raise TypeError(f"not fetchable as a plain instruction: {ins!r}")


def fetch_step(p: Program, regs, mem, buf, cs, bp, mu_w: int, modulus: int):
    a = apply_buffer(tuple((c, None) for c in buf), regs)
    pc = a[PC]
    if pc is BOTTOM:
        return STUCK
    if len(buf) >= mu_w:
        return STUCK
    hit = cs.access(pc)
    cs2 = cs.update(pc)
    if not hit:
        return (regs, mem, buf, cs2, bp)
    ins = p.lookup(pc)
    if isinstance(ins, Beqz):
        predicted = bp.predict(pc)
        return (regs, mem, buf + (cmd_assign(PC, predicted, tag=pc),), cs2, bp)
    if isinstance(ins, Jmp):
        return (regs, mem, buf + (cmd_assign(PC, ins.target),), cs2, bp)
    if ins is None:
        # no instruction at pc: the program is over on this path
        return (regs, mem, buf + (cmd_assign(PC, BOTTOM),), cs2, bp)
    if len(buf) >= mu_w - 1:
        return STUCK
    entry = _instr_commands(ins)
    marked = cmd_assign(PC, pc + 1, marked=True)
    return (regs, mem, buf + (entry, marked), cs2, bp)


def execute_step(p: Program, regs, mem, buf, cs, bp, i: int, modulus: int):
    if not 1 <= i <= len(buf):
        return STUCK
    prefix, entry, suffix = buf[: i - 1], buf[i - 1], buf[i:]
    kind, A, B, tag, marked = entry
    if kind in ("skip", "barrier"):
        return (regs, mem, buf, cs, bp)
    if any(c[0] == "barrier" for c in prefix):
        return STUCK
    a = apply_buffer(tuple((c, None) for c in prefix), regs)

    if kind == "load":
        if A == PC or any(c[0] == "store" for c in prefix):
            return STUCK
        n = B if is_value(B) else eval_expr(B, a, partial=True, modulus=modulus)
        if n is BOTTOM:
            return STUCK
        hit = cs.access(n)
        cs2 = cs.update(n)
        if not hit:
            return (regs, mem, buf, cs2, bp)
        loaded = cmd_assign(A, mem.get(n, 0), tag)
        return (regs, mem, prefix + (loaded,) + suffix, cs2, bp)

    if kind == "assign" and tag is not None:
        # branch resolution: tag is the branch address
        ins0 = p.lookup(tag)
        if not isinstance(ins0, Beqz):
            return STUCK
        guard = a.get(ins0.guard, BOTTOM)
        if guard is BOTTOM:
            return STUCK
        correct = ins0.target if guard == 0 else tag + 1
        if B == correct:
            resolved = cmd_assign(PC, B)
            return (regs, mem, prefix + (resolved,) + suffix, cs, bp.update(tag, B))
        corrected = cmd_assign(PC, correct)
        return (regs, mem, prefix + (corrected,), cs, bp.update(tag, correct))

    if kind == "assign":
        v = B if is_value(B) else eval_expr(B, a, partial=True, modulus=modulus)
        if v is BOTTOM:
            return STUCK
        resolved = cmd_assign(A, v, None, marked)
        return (regs, mem, prefix + (resolved,) + suffix, cs, bp)

    if kind == "store":
        v = A if is_value(A) else eval_expr(A, a, partial=True, modulus=modulus)
        n = B if is_value(B) else eval_expr(B, a, partial=True, modulus=modulus)
        if v is BOTTOM or n is BOTTOM:
            return STUCK
        return (regs, mem, prefix + (cmd_store(v, n, tag),) + suffix, cs, bp)

    return STUCK


def retire_step(p: Program, regs, mem, buf, cs, bp, modulus: int):
    if not buf:
        return STUCK
    kind, A, B, tag, _marked = buf[0]
    if tag is not None:
        return STUCK
    rest = buf[1:]
    if kind in ("skip", "barrier"):
        return (regs, mem, rest, cs, bp)
    if kind == "assign":
        if not is_value(B):
            return STUCK
        regs2 = dict(regs)
        regs2[A] = B
        return (regs2, mem, rest, cs, bp)
    if kind == "store":
        if not (isinstance(A, int) and isinstance(B, int)):
            return STUCK
        mem2 = dict(mem)
        mem2[B] = A
        return (regs, mem2, rest, cs.update(B), bp)
    return STUCK


def _tt_policy(countermeasure: str) -> Optional[str]:
    if countermeasure == "tt":
        return "tt"
    if countermeasure == "nda-strict":
        return "nda-strict"
    if countermeasure == "nda-permissive":
        return "nda-permissive"
    return None


def hw_step(p: Program, h: HwState, cfg: HwConfig) -> Tuple[HwState, tuple, bool]:
    """One top-level step: query the scheduler, run the stage through the
    countermeasure wrappers, relabel, update the scheduler.

    Returns (new state, directive, stage_progressed). A stuck stage is a
    delay: the buffer and architectural state stay put while the scheduler
    state still advances, so a later step can pick a different directive.
    """
    directive = h.sc.next()
    policy = _tt_policy(cfg.countermeasure)

    allowed = True
    if cfg.countermeasure == "loaddelay":
        allowed = cm.loaddelay_guard(h.buf, directive)

    result = STUCK
    if allowed:
        if policy is None:
            plain = tuple(c for c, _l in h.buf)
        elif policy == "tt":
            plain = cm.tt_unlabel(h.buf, directive, cfg.mask_literal)
        else:
            plain = cm.nda_unlabel(h.buf, directive, cfg.mask_literal)
        regs, mem = h.sigma.regs, h.sigma.mem
        if directive[0] == "fetch":
            result = fetch_step(p, regs, mem, plain, h.cs, h.bp, cfg.buffer_size, cfg.modulus)
        elif directive[0] == "execute":
            result = execute_step(p, regs, mem, plain, h.cs, h.bp, directive[1], cfg.modulus)
        else:
            result = retire_step(p, regs, mem, plain, h.cs, h.bp, cfg.modulus)

    if result is STUCK:
        new_buf, sigma, cs2, bp2 = h.buf, h.sigma, h.cs, h.bp
        progressed = False
    else:
        regs2, mem2, buf_plain, cs2, bp2 = result
        if policy is None:
            new_buf = cm.plain_labels(buf_plain)
        else:
            new_buf = cm.relabel(buf_plain, h.buf, directive, policy)
        sigma = ArchState(regs=regs2, mem=mem2)
        progressed = True

    sc2 = h.sc.update(buf_project(new_buf))
    return HwState(sigma, new_buf, cs2, bp2, sc2), directive, progressed


def adversary_view(h: HwState, expose_labels: bool = True) -> tuple:
    """What the microarchitectural adversary sees: the data-independent
    buffer projection plus cache, predictor, and scheduler state."""
    proj = buf_project(h.buf)
    if not expose_labels:
        proj = tuple(entry[:5] for entry in proj)
    return (proj, h.cs.key(), h.bp.key(), h.sc.key())


def hw_run(
    p: Program,
    sigma: ArchState,
    cfg: HwConfig,
) -> Tuple[tuple, HwState]:
    """Run to the final hardware state collecting the adversary trace
    (one view per state, the initial one included)."""
    h = initial_hw_state(p, sigma, cfg)
    views = [adversary_view(h, cfg.expose_labels)]
    idle = 0
    idle_limit = 4 * (cfg.buffer_size + 3)
    for _ in range(cfg.fuel):
        if h.is_final():
            return tuple(views), h
        h2, directive, progressed = hw_step(p, h, cfg)
        views.append(adversary_view(h2, cfg.expose_labels))
        changed = progressed and (
            h2.sigma != h.sigma or h2.buf != h.buf or h2.cs != h.cs or h2.bp != h.bp
        )
        idle = 0 if changed else idle + 1
        if idle > idle_limit:
            raise DeadlockError(
                f"no progress after {idle} steps; last directive {directive}"
            )
        h = h2
    raise FuelExhausted(f"no final hardware state within {cfg.fuel} steps")
