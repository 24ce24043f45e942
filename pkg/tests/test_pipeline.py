"""Hardware stage rules, top-level stepping, runs, and the adversary view."""
import random

import pytest

from muspec import corpus
from muspec.arch import ArchState, arch_run
from muspec.isa import BOTTOM, PC, BinOp, Const, Reg, parse_program
from muspec.pipeline import (
    STUCK,
    HwConfig,
    adversary_view,
    execute_step,
    fetch_step,
    hw_run,
    hw_step,
    initial_hw_state,
    retire_step,
)
from muspec.uarch import (
    LruCache,
    buf_project,
    cmd_assign,
    cmd_load,
    cmd_skip,
    cmd_store,
    make_predictor,
)

MU_W = 5
MOD = 16


def plain(*cmds):
    return tuple(cmds)


def warm_cache(*addrs):
    cs = LruCache(8)
    for a in addrs:
        cs = cs.update(a)
    return cs


# -- fetch --------------------------------------------------------------------


def test_fetch_branch_appends_tagged_prediction():
    p = parse_program("beqz x, 5\nskip\nskip\nskip\nskip\nskip")
    bp = make_predictor("fallthrough", p)
    regs = {PC: 0, "x": 0}
    result = fetch_step(p, regs, {}, (), warm_cache(0), bp, MU_W, MOD)
    assert result is not STUCK
    _, _, buf, cs, _ = result
    assert buf == (cmd_assign(PC, 1, tag=0),)
    assert cs.access(0)


def test_fetch_cold_cache_misses_then_hits():
    p = parse_program("skip")
    bp = make_predictor("fallthrough", p)
    regs = {PC: 0}
    r1 = fetch_step(p, regs, {}, (), LruCache(4), bp, MU_W, MOD)
    _, _, buf1, cs1, _ = r1
    assert buf1 == ()  # miss: only the cache learned the address
    assert cs1.access(0)
    r2 = fetch_step(p, regs, {}, (), cs1, bp, MU_W, MOD)
    _, _, buf2, _, _ = r2
    assert buf2 == (cmd_skip(), cmd_assign(PC, 1, marked=True))


def test_fetch_load_appends_marked_pc_increment():
    p = parse_program("load z, 4 + 3")
    bp = make_predictor("fallthrough", p)
    result = fetch_step(p, {PC: 0, "z": 0}, {}, (), warm_cache(0), bp, MU_W, MOD)
    _, _, buf, _, _ = result
    assert buf == (cmd_load("z", BinOp("+", Const(4), Const(3))), cmd_assign(PC, 1, marked=True))


def test_fetch_jump_appends_target_expression():
    p = parse_program("jmp 4 + 1\nskip\nskip\nskip\nskip\nskip")
    result = fetch_step(p, {PC: 0}, {}, (), warm_cache(0), None, MU_W, MOD)
    _, _, buf, _, _ = result
    assert buf == (cmd_assign(PC, BinOp("+", Const(4), Const(1))),)


def test_fetch_past_program_appends_terminate_entry():
    p = parse_program("skip")
    result = fetch_step(p, {PC: 1}, {}, (), warm_cache(1), None, MU_W, MOD)
    _, _, buf, _, _ = result
    assert buf == (cmd_assign(PC, BOTTOM),)


def test_fetch_stuck_on_undefined_pc_or_full_buffer():
    p = parse_program("skip\nskip")
    buf = plain(cmd_load("x", Const(3)))  # pending load of... pc? no: x
    # undefined pc: a pending unresolved jump target
    buf_pc = plain(cmd_assign(PC, Reg("x")))
    assert fetch_step(p, {PC: 0, "x": 1}, {}, buf_pc, warm_cache(0), None, MU_W, MOD) is STUCK
    full = plain(*(cmd_skip() for _ in range(MU_W)))
    assert fetch_step(p, {PC: 0, "x": 1}, {}, full, warm_cache(0), None, MU_W, MOD) is STUCK
    # two-entry fetch needs two free slots
    nearly = plain(*(cmd_skip() for _ in range(MU_W - 1)))
    assert fetch_step(p, {PC: 0, "x": 1}, {}, nearly, warm_cache(0), None, MU_W, MOD) is STUCK


# -- execute ------------------------------------------------------------------


def test_execute_load_hit_resolves_to_value():
    p = parse_program("skip")
    buf = plain(cmd_load("z", Const(9)), cmd_assign(PC, 1, marked=True))
    result = execute_step(p, {PC: 0, "z": 0}, {9: 4}, buf, warm_cache(9), None, 1, MOD)
    _, _, buf2, cs2, _ = result
    assert buf2[0] == cmd_assign("z", 4)
    assert buf2[1] == buf[1]


def test_execute_load_miss_only_updates_cache():
    p = parse_program("skip")
    buf = plain(cmd_load("z", Const(9)))
    result = execute_step(p, {PC: 0, "z": 0}, {9: 4}, buf, LruCache(4), None, 1, MOD)
    _, _, buf2, cs2, _ = result
    assert buf2 == buf
    assert cs2.access(9)


def test_execute_branch_rollback_squashes_suffix():
    p = parse_program("beqz x, 5\nskip\nskip\nskip\nskip\nskip")
    bp = make_predictor("twobit", p)
    buf = plain(cmd_assign(PC, 1, tag=0), cmd_skip(), cmd_assign(PC, 2, marked=True))
    result = execute_step(p, {PC: 0, "x": 0}, {}, buf, warm_cache(), bp, 1, MOD)
    _, _, buf2, _, bp2 = result
    assert buf2 == (cmd_assign(PC, 5),)  # corrected target, suffix gone
    assert bp2.counters == ((0, 1),)  # branch recorded as taken


def test_execute_branch_commit_keeps_suffix():
    p = parse_program("beqz x, 5\nskip\nskip\nskip\nskip\nskip")
    bp = make_predictor("fallthrough", p)
    buf = plain(cmd_assign(PC, 1, tag=0), cmd_skip())
    result = execute_step(p, {PC: 0, "x": 3}, {}, buf, warm_cache(), bp, 1, MOD)
    _, _, buf2, _, _ = result
    assert buf2 == (cmd_assign(PC, 1), cmd_skip())


def test_execute_assignment_resolves_expression():
    p = parse_program("skip")
    buf = plain(cmd_assign("x", BinOp("+", Const(2), Const(3))))
    result = execute_step(p, {PC: 0, "x": 0}, {}, buf, warm_cache(), None, 1, MOD)
    assert result[2][0] == cmd_assign("x", 5)


def test_execute_stuck_cases():
    p = parse_program("beqz x, 5\nskip\nskip\nskip\nskip\nskip")
    # operand depends on an earlier unresolved entry
    buf = plain(cmd_load("y", Const(3)), cmd_assign("x", Reg("y")))
    assert execute_step(p, {PC: 0, "x": 0, "y": 0}, {}, buf, warm_cache(3), None, 2, MOD) is STUCK
    # load behind an in-flight store
    buf = plain(cmd_store(Reg("x"), Const(3)), cmd_load("y", Const(3)))
    assert execute_step(p, {PC: 0, "x": 1, "y": 0}, {}, buf, warm_cache(3), None, 2, MOD) is STUCK
    # branch guard unresolved
    buf = plain(cmd_load("x", Const(3)), cmd_assign(PC, 1, tag=0))
    assert execute_step(p, {PC: 0, "x": 0}, {}, buf, warm_cache(3), None, 2, MOD) is STUCK
    # index out of range
    assert execute_step(p, {PC: 0, "x": 0}, {}, (), warm_cache(), None, 1, MOD) is STUCK


def test_execute_store_resolves_both_operands():
    p = parse_program("skip")
    buf = plain(cmd_store(Reg("x"), BinOp("+", Const(2), Const(1))))
    result = execute_step(p, {PC: 0, "x": 9}, {}, buf, warm_cache(), None, 1, MOD)
    assert result[2][0] == cmd_store(9, 3)


# -- retire -------------------------------------------------------------------


def test_retire_assignment_writes_register():
    p = parse_program("skip")
    result = retire_step(p, {PC: 0, "x": 0}, {}, plain(cmd_assign("x", 5)), warm_cache(), None, MOD)
    regs, _, buf, _, _ = result
    assert regs["x"] == 5
    assert buf == ()


def test_retire_store_writes_memory_and_cache():
    p = parse_program("skip")
    result = retire_step(p, {PC: 0}, {}, plain(cmd_store(3, 7)), LruCache(4), None, MOD)
    _, mem, _, cs, _ = result
    assert mem[7] == 3
    assert cs.access(7)


def test_retire_stuck_on_tagged_or_unresolved_head():
    p = parse_program("skip")
    assert retire_step(p, {PC: 0}, {}, plain(cmd_assign(PC, 5, tag=0)), warm_cache(), None, MOD) is STUCK
    assert retire_step(p, {PC: 0}, {}, plain(cmd_assign("x", Reg("y"))), warm_cache(), None, MOD) is STUCK
    assert retire_step(p, {PC: 0}, {}, (), warm_cache(), None, MOD) is STUCK


# -- top-level stepping and runs ----------------------------------------------


def test_sequential_run_on_skip_reaches_final():
    p = corpus.load("skip")
    cfg = HwConfig(countermeasure="seq")
    views, final = hw_run(p, ArchState.initial(p), cfg)
    assert final.is_final()
    assert final.sigma.regs[PC] is BOTTOM


def test_ooo_run_performs_rollback_on_misprediction():
    p = corpus.load("P1")
    cfg = HwConfig()
    sigma = ArchState.initial(p, {7: 1})
    h = initial_hw_state(p, sigma, cfg)
    shrunk = False
    prev_len = 0
    for _ in range(1000):
        if h.is_final():
            break
        h, directive, _ = hw_step(p, h, cfg)
        if len(h.buf) < prev_len and directive[0] == "execute":
            shrunk = True
        prev_len = len(h.buf)
    assert shrunk  # a mispredicted branch squashed its suffix


def test_buffer_never_exceeds_capacity():
    for name in ("P1", "ex2", "ex1"):
        p = corpus.load(name)
        cfg = HwConfig(buffer_size=4)
        h = initial_hw_state(p, ArchState.initial(p, {7: 1, 10: 1}), cfg)
        for _ in range(2000):
            if h.is_final():
                break
            h, _, _ = hw_step(p, h, cfg)
            assert len(h.buf) <= 4
        assert h.is_final()


def test_hw_run_deterministic():
    p = corpus.load("ex2")
    cfg = HwConfig(countermeasure="loaddelay", predictor="twobit")
    s = ArchState.initial(p, {10: 1, 11: 2})
    assert hw_run(p, s, cfg) == hw_run(p, s, cfg)


@pytest.mark.parametrize("name", [n for n in corpus.program_names()])
@pytest.mark.parametrize("countermeasure", ["none", "seq", "loaddelay", "tt"])
def test_final_state_matches_architectural_run(name, countermeasure):
    p = corpus.load(name)
    mem = {7: 2, 9: 1, 10: 1, 11: 3, 12: 2}
    sigma = ArchState.initial(p, mem)
    expected, _ = arch_run(p, sigma)
    cfg = HwConfig(countermeasure=countermeasure)
    _, final = hw_run(p, sigma, cfg)
    assert final.sigma == expected


def test_adversary_view_initial_and_cache_sensitivity():
    p = corpus.load("skip")
    cfg = HwConfig()
    h = initial_hw_state(p, ArchState.initial(p), cfg)
    proj, cs, bp, sc = adversary_view(h)
    assert proj == ()
    h2 = h.__class__(h.sigma, h.buf, h.cs.update(3), h.bp, h.sc)
    assert adversary_view(h2) != adversary_view(h)


def test_adversary_view_ignores_resolved_values():
    p = corpus.load("skip")
    cfg = HwConfig()
    h = initial_hw_state(p, ArchState.initial(p), cfg)
    buf1 = ((cmd_assign("x", 5), frozenset()),)
    buf2 = ((cmd_assign("x", 9), frozenset()),)
    v1 = adversary_view(h.__class__(h.sigma, buf1, h.cs, h.bp, h.sc))
    v2 = adversary_view(h.__class__(h.sigma, buf2, h.cs, h.bp, h.sc))
    assert v1 == v2


def test_projection_invariance_of_runs():
    # memory cells that are never observed by the adversary directly can
    # only influence the view through addresses; equal contract traces mean
    # equal views at every step (spot check on a fenced program)
    p = corpus.load("P1f")
    cfg = HwConfig()
    t1, _ = hw_run(p, ArchState.initial(p, {7: 0}), cfg)
    t2, _ = hw_run(p, ArchState.initial(p, {7: 3}), cfg)
    assert t1 == t2


def test_config_parsing():
    cfg = HwConfig.parse(
        "buffer_size = 4\ncache = direct:4:1\npredictor = twobit\n"
        "scheduler = seq\ncountermeasure = loaddelay\n"
    )
    assert cfg.buffer_size == 4
    assert cfg.cache == "direct:4:1"
    assert cfg.predictor == "twobit"
    assert cfg.scheduler == "seq"
    assert cfg.countermeasure == "loaddelay"
    with pytest.raises(ValueError):
        HwConfig.parse("nonsense = 1")


def test_seq_countermeasure_forces_sequential_scheduler():
    cfg = HwConfig(countermeasure="seq", scheduler="ooo")
    assert cfg.scheduler == "seq"


def test_label_erasure_flag():
    from muspec.uarch import cmd_load as _load

    p = corpus.load("skip")
    cfg = HwConfig()
    h = initial_hw_state(p, ArchState.initial(p), cfg)
    labeled = ((cmd_assign("x", Reg("y")), frozenset((1,))),)
    h2 = h.__class__(h.sigma, labeled, h.cs, h.bp, h.sc)
    with_labels = adversary_view(h2, expose_labels=True)
    without = adversary_view(h2, expose_labels=False)
    assert with_labels != without
    assert without[0][0][:5] == with_labels[0][0][:5]
