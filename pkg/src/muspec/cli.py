"""Command-line front end.

Programs are file paths or shipped corpus names (P1, P1f, P1', P1'f, P2,
P2f, P2', P2'f, ex1, ex2, ex3, skip, loop).  Exit codes: 0 pass,
1 counterexample found, 2 usage or run error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import corpus
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
    random_programs,
)
from .arch import ArchState, arch_run, format_state, parse_state
from .contracts import DEFAULT_SPEC_WINDOW, ContractId, contract_trace, format_trace
from .isa import ParseError, Program, parse_program
from .pipeline import DEFAULT_BUFFER_SIZE, HwConfig, hw_run

DEFAULT_WINDOW = DEFAULT_SPEC_WINDOW

TABLE_CONTRACT_NAMES = ("seq-ct", "seq-arch", "spec-ct", "spec-pc-ct")


def _load_program(spec: str) -> Program:
    if spec in corpus.names():
        return corpus.load(spec)
    with open(spec) as fh:
        return parse_program(fh.read())


def _default_domain(spec: str) -> StateDomain:
    if spec in corpus.names():
        return StateDomain(modulus=16, vary=corpus.default_vary(spec))
    return StateDomain(modulus=16, vary=((0, 0, 3), (1, 0, 3)))


def _default_policy() -> Policy:
    return Policy(corpus.TABLE_POLICY_LOW)


def _load_domain(args, prog_spec: str) -> StateDomain:
    if args.domain:
        with open(args.domain) as fh:
            return StateDomain.parse(fh.read())
    return _default_domain(prog_spec)


def _load_policy(args) -> Policy:
    if args.policy:
        with open(args.policy) as fh:
            return Policy.parse(fh.read())
    return _default_policy()


def _load_config(args) -> HwConfig:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = HwConfig.parse(fh.read())
    else:
        cfg = HwConfig()
    if getattr(args, "countermeasure", None):
        cfg = replace(cfg, countermeasure=args.countermeasure)
        if args.countermeasure == "seq":
            cfg = replace(cfg, scheduler="seq")
    if getattr(args, "fuel", None):
        cfg = replace(cfg, fuel=args.fuel)
    if getattr(args, "mask_literal", False):
        cfg = replace(cfg, mask_literal=True)
    return cfg


def _emit(args, record: dict):
    if args.format == "json-lines":
        print(json.dumps(record, sort_keys=True, default=str))
    else:
        kind = record.pop("kind", "")
        fields = " ".join(f"{k}={v}" for k, v in record.items())
        print(f"{kind} {fields}".strip())


def _verdict_records(args, verdict: Verdict, dump_prefix=None) -> int:
    if verdict.ok:
        _emit(args, {"kind": "pass", "check": verdict.check})
        return 0
    _emit(
        args,
        {
            "kind": "counterexample",
            "check": verdict.check,
            "position": verdict.position,
            "trace": format_trace(verdict.trace).replace("\n", ";"),
            "trace_prime": format_trace(verdict.trace_prime).replace("\n", ";"),
        },
    )
    if dump_prefix:
        for suffix, state in (("sigma", verdict.sigma), ("sigma_prime", verdict.sigma_prime)):
            path = f"{dump_prefix}.{suffix}.txt"
            with open(path, "w") as fh:
                fh.write(format_state(state))
            _emit(args, {"kind": "state-file", "which": suffix, "path": path})
    return 1


def _cmd_run(args) -> int:
    program = _load_program(args.program)
    if args.state:
        with open(args.state) as fh:
            sigma = parse_state(fh.read(), program)
    else:
        sigma = ArchState.initial(program)
    final, steps = arch_run(program, sigma, fuel=args.fuel)
    _emit(args, {"kind": "run", "steps": steps})
    sys.stdout.write(format_state(final))
    return 0


def _cmd_trace(args) -> int:
    program = _load_program(args.program)
    contract = ContractId.parse(args.contract, window=args.window)
    if args.state:
        with open(args.state) as fh:
            sigma = parse_state(fh.read(), program)
    else:
        sigma = ArchState.initial(program)
    trace = contract_trace(contract, program, sigma, fuel=args.fuel)
    sys.stdout.write(format_trace(trace))
    return 0


def _cmd_hwrun(args) -> int:
    program = _load_program(args.program)
    cfg = _load_config(args)
    if args.state:
        with open(args.state) as fh:
            sigma = parse_state(fh.read(), program)
    else:
        sigma = ArchState.initial(program)
    views, final = hw_run(program, sigma, cfg)
    print(f"step 0 dir=- view={views[0]}")
    # replay the scheduler decisions for the dump
    from .pipeline import hw_step, initial_hw_state

    h = initial_hw_state(program, sigma, cfg)
    for k in range(1, len(views)):
        h, directive, _ = hw_step(program, h, cfg)
        if directive[0] == "execute":
            d = f"exec {directive[1]}"
        else:
            d = directive[0]
        print(f"step {k} dir={d} view={views[k]}")
    sys.stdout.write(format_state(final.sigma))
    return 0


def _cmd_check(args) -> int:
    program = _load_program(args.program)
    domain = _load_domain(args, args.program)
    window = args.window
    if args.what == "sat":
        contract = ContractId.parse(args.contract, window=window)
        cfg = _load_config(args)
        verdict = check_contract_satisfaction(program, contract, cfg, domain, fuel=args.fuel)
    elif args.what == "ni":
        policy = _load_policy(args)
        if args.countermeasure or args.config:
            semantics = _load_config(args)
        else:
            semantics = ContractId.parse(args.contract or "seq-ct", window=window)
        verdict = check_ni(program, policy, semantics, domain, fuel=args.fuel)
    elif args.what == "wsni":
        contract = ContractId.parse(args.contract, window=window)
        verdict = check_wsni(program, contract, domain, fuel=args.fuel)
    else:  # sni
        policy = _load_policy(args)
        contract = ContractId.parse(args.contract, window=window)
        verdict = check_sni(program, policy, contract, domain, fuel=args.fuel)
    return _verdict_records(args, verdict, args.dump_states)


def _cmd_classify(args) -> int:
    policy = _load_policy(args)
    window = args.window
    exit_code = 0
    classify = classify_sandboxing if args.what == "sandbox" else classify_constant_time
    for spec in args.programs:
        program = _load_program(spec)
        domain = _load_domain(args, spec)
        row = classify(program, policy, domain, window, name=spec, fuel=args.fuel)
        record = {"kind": "row", "program": spec, "vanilla": "Y" if row.vanilla.ok else "N"}
        for cname, text, _verdict in row.cells:
            record[cname] = text
            if text == "N":
                exit_code = 1
        if not row.vanilla.ok:
            exit_code = 1
        _emit(args, record)
    return exit_code


def _cmd_lattice(args) -> int:
    programs = [corpus.load(n) for n in corpus.program_names()]
    if args.random:
        programs += random_programs(args.random, seed=args.seed)
    if args.domain:
        with open(args.domain) as fh:
            domain = StateDomain.parse(fh.read())
    else:
        domain = StateDomain(modulus=16, vary=((7, 0, 3), (9, 0, 3)))
    results = check_lattice(programs, domain, args.window, fuel=args.fuel)
    bad = 0
    for edge, witness in results.items():
        if witness is None:
            _emit(args, {"kind": "edge", "edge": edge, "result": "pass"})
        else:
            bad = 1
            _emit(
                args,
                {
                    "kind": "edge",
                    "edge": edge,
                    "result": "witness",
                    "program_index": witness.program_index,
                },
            )
    return bad


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="muspec", description=__doc__)
    parser.add_argument("--format", choices=("plain", "json-lines"), default="plain")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, program=True):
        if program:
            p.add_argument("program", help="program file or corpus name")
        p.add_argument("--fuel", type=int, default=10 ** 6)
        p.add_argument("--window", type=int, default=DEFAULT_WINDOW)

    p_run = sub.add_parser("run", help="architectural run")
    common(p_run)
    p_run.add_argument("--state")
    p_run.set_defaults(func=_cmd_run)

    p_trace = sub.add_parser("trace", help="contract trace")
    common(p_trace)
    p_trace.add_argument("--contract", required=True)
    p_trace.add_argument("--state")
    p_trace.set_defaults(func=_cmd_trace)

    p_hw = sub.add_parser("hwrun", help="hardware run with adversary views")
    common(p_hw)
    p_hw.add_argument("--state")
    p_hw.add_argument("--config")
    p_hw.add_argument("--countermeasure")
    p_hw.add_argument("--mask-literal", action="store_true", dest="mask_literal")
    p_hw.set_defaults(func=_cmd_hwrun)

    p_check = sub.add_parser("check", help="decision procedures")
    p_check.add_argument("what", choices=("sat", "ni", "sni", "wsni"))
    common(p_check)
    p_check.add_argument("--contract")
    p_check.add_argument("--countermeasure")
    p_check.add_argument("--config")
    p_check.add_argument("--policy")
    p_check.add_argument("--domain")
    p_check.add_argument("--dump-states", dest="dump_states")
    p_check.add_argument("--mask-literal", action="store_true", dest="mask_literal")
    p_check.set_defaults(func=_cmd_check)

    p_cls = sub.add_parser("classify", help="sandboxing / constant-time tables")
    p_cls.add_argument("what", choices=("sandbox", "ct"))
    p_cls.add_argument("programs", nargs="+")
    p_cls.add_argument("--fuel", type=int, default=10 ** 6)
    p_cls.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p_cls.add_argument("--policy")
    p_cls.add_argument("--domain")
    p_cls.set_defaults(func=_cmd_classify)

    p_lat = sub.add_parser("lattice", help="contract lattice edge report")
    p_lat.add_argument("--fuel", type=int, default=10 ** 6)
    p_lat.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p_lat.add_argument("--random", type=int, default=0)
    p_lat.add_argument("--seed", type=int, default=0)
    p_lat.add_argument("--domain")
    p_lat.set_defaults(func=_cmd_lattice)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # fuel, deadlock, domain-too-large
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
