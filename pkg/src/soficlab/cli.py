"""Command-line entry point.

Exit codes: 0 success, 1 bad input or violated precondition,
2 bound hypotheses unmet, 3 a size cap was exceeded.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import tempfile
from pathlib import Path

from . import charts as ch
from . import entropy as en
from .monoids import (
    FiniteMonoid,
    FragmentCapError,
    MonoidError,
    find_nontrivial_idempotent,
    frobenius_idempotent,
    idempotents,
    is_group,
    load_table,
    parse_descriptor,
    parse_polynomial,
    split_top_level,
)
from .shifts import (
    SFT,
    CellularAutomaton,
    ConfigCapError,
    ca_full_map,
    check_equivariance,
    enumerate_rules,
)

DEFAULT_SEED = 20240917

EXIT_OK, EXIT_INPUT, EXIT_HYPOTHESES, EXIT_CAP = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def write_output(text: str, out: str | None):
    """Write atomically so a failed run never leaves a partial file."""
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=False) + "\n"


def parse_int_set(text: str) -> list[int]:
    """``"-2..2"`` or ``"0,1,5"``."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x.strip()]


def parse_labels(text: str) -> list[str]:
    return [t for t in split_top_level(text) if t]


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read {path}: {exc}") from None


def load_sft(path, monoid) -> SFT:
    data = load_json(path)
    declared = data.get("monoid")
    if declared is not None and parse_descriptor(declared, Path(path).parent) != monoid:
        raise CliError(f"SFT monoid {declared} does not match the chart monoid {monoid.descriptor}")
    return SFT.from_json(data, monoid)


def _monoid_arg(args):
    if getattr(args, "table", None):
        return load_table(args.table)
    if getattr(args, "monoid", None):
        return parse_descriptor(args.monoid)
    raise CliError("give --table or --monoid")


# -- chart ------------------------------------------------------------------


def cmd_chart_build(args) -> int:
    kind = args.kind
    if kind == "cyclic":
        chart = ch.cyclic_chart(args.n, parse_int_set(args.K))
    elif kind == "saturating":
        chart = ch.saturating_chart(args.n, parse_int_set(args.K))
    elif kind == "poly":
        chart = ch.polynomial_chart(args.p, [parse_polynomial(t) for t in args.K.split(",")])
    elif kind == "random-perm":
        chart = ch.random_perm_chart(args.d, args.k, args.L, args.seed)
    elif kind == "regular":
        monoid = _monoid_arg(args)
        if not isinstance(monoid, FiniteMonoid):
            raise CliError("regular charts need a finite monoid")
        chart = ch.regular_chart(monoid)
    elif kind == "product":
        if not args.charts:
            raise CliError("--charts is required for product charts")
        eps = ch.parse_fraction(args.epsilon) if args.epsilon else None
        chart = ch.product_chart([ch.load_chart(p) for p in args.charts], eps)
    else:
        raise CliError(f"unknown chart kind {kind}")
    if args.extend:
        chart = ch.extend_by_identity(chart, [chart.monoid.parse(t) for t in parse_labels(args.extend)])
    write_output(dump_json(chart.to_json()), args.out)
    return EXIT_OK


def cmd_chart_quality(args) -> int:
    monoid = parse_descriptor(args.monoid) if args.monoid else None
    chart = ch.load_chart(args.chart, monoid)
    report = ch.quality_with_obstructions(chart, monoid)
    data = report.to_json()
    if chart.seed is not None:
        data["seed"] = chart.seed
    print(report.verdict())
    write_output(dump_json(data), args.out)
    return EXIT_OK


def cmd_chart_search(args) -> int:
    budget = ch.parse_fraction(args.budget)
    if args.shards > 1:
        import numpy as np
        seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(args.seed).spawn(args.shards)]
        results = [ch.bicyclic_chart_search(args.d, args.iterations, s, budget) for s in seeds]
        result = ch.merge_search_results(results, budget)
    else:
        result = ch.bicyclic_chart_search(args.d, args.iterations, args.seed, budget)
    # The output is itself a loadable chart file; search details ride along.
    data = result.chart.to_json()
    data["seed"] = args.seed
    data["search"] = {"iterations": args.iterations, "shards": args.shards,
                      "budget": ch.fraction_str(budget), "report": result.report.to_json(),
                      "trace": result.to_json()["trace"]}
    print(result.report.verdict())
    write_output(dump_json(data), args.out)
    return EXIT_OK


# -- entropy ----------------------------------------------------------------

METHODS = {"exact": en.EXACT, "sampled": en.SAMPLED, "bound": en.UPPER}


def _entropy_inputs(args):
    chart = ch.load_chart(args.chart)
    sft = load_sft(args.sft, chart.monoid)
    F = [chart.monoid.parse(t) for t in parse_labels(args.F)]
    params = en.GoodnessParams.from_elements(chart, F, ch.parse_fraction(args.delta),
                                             ch.parse_fraction(args.epsilon))
    return chart, sft, params


def _count_kw(args) -> dict:
    kw = dict(shards=args.shards, workers=args.workers, samples=args.samples, seed=args.seed)
    if args.cap is not None:
        kw["cap"] = args.cap
    return kw


def _csv_with_seed(rows, seed) -> str:
    text = en.rows_to_csv(rows)
    lines = text.splitlines()
    lines[0] += ",seed"
    lines[1:] = [line + f",{seed}" for line in lines[1:]]
    return "\n".join(lines) + "\n"


def cmd_entropy_estimate(args) -> int:
    chart, sft, params = _entropy_inputs(args)
    res = en.count_good_traces(sft, params, chart, METHODS[args.method], args.admissibility,
                               **_count_kw(args))
    est = en.entropy_estimate(res)
    row = en.SweepRow(chart.d, res.method, res.mode, res.count, est.nats, est.base_a)
    code = EXIT_OK
    if not sft.is_full_shift and len(params.F) >= 2:
        rep = en.monotonicity_report(sft, chart, params)
        row.beta0, row.certified_upper_bound = rep.beta0, rep.certified_upper_bound
        if not rep.hypotheses_met:
            row.note = "bound hypotheses unmet: " + "; ".join(rep.reasons)
            if res.method == en.UPPER:
                code = EXIT_HYPOTHESES
    write_output(_csv_with_seed([row], args.seed), args.out)
    return code


def _family(args):
    sizes = parse_int_set(args.sizes)
    K = parse_int_set(args.K) if args.K else None
    for n in sizes:
        if args.family == "cyclic":
            yield ch.cyclic_chart(n, K if K is not None else [-1, 0, 1])
        elif args.family == "saturating":
            yield ch.saturating_chart(n, K if K is not None else [0, 1])
        elif args.family == "random-perm":
            yield ch.random_perm_chart(n, args.k, args.L, args.seed)
        else:
            raise CliError(f"unknown chart family {args.family}")


def cmd_entropy_sweep(args) -> int:
    if args.charts:
        family = [ch.load_chart(p) for p in args.charts]
    else:
        family = list(_family(args))
    if not family:
        raise CliError("empty chart family")
    monoid = family[0].monoid
    sft = load_sft(args.sft, monoid)
    F = [monoid.parse(t) for t in parse_labels(args.F)]
    rows = en.sweep(family, sft, F, ch.parse_fraction(args.delta), ch.parse_fraction(args.epsilon),
                    METHODS[args.method], args.admissibility, **_count_kw(args))
    write_output(_csv_with_seed(rows, args.seed), args.out)
    return EXIT_OK


def cmd_entropy_bound(args) -> int:
    chart, sft, params = _entropy_inputs(args)
    eps = ch.parse_fraction(args.bound_epsilon) if args.bound_epsilon else None
    rep = en.monotonicity_report(sft, chart, params, eps)
    write_output(dump_json(rep.to_json()), args.out)
    return EXIT_OK if rep.hypotheses_met else EXIT_HYPOTHESES


# -- monoid -----------------------------------------------------------------


def _finite_monoid(args) -> FiniteMonoid:
    monoid = _monoid_arg(args)
    if not isinstance(monoid, FiniteMonoid):
        raise CliError("this command needs a finite monoid")
    return monoid


def cmd_monoid_idempotents(args) -> int:
    M = _finite_monoid(args)
    nontrivial = [e for e in idempotents(M) if e != M.identity_index]
    traces = []
    for a in M.elements():
        if not any(M.multiply(a, b) == M.identity_index == M.multiply(b, a) for b in M.elements()):
            tr = frobenius_idempotent(M, a)
            traces.append({"element": M.label(a), "index": tr.index, "period": tr.period,
                           "exponent": tr.exponent, "idempotent": M.label(tr.idempotent)})
    first = find_nontrivial_idempotent(M)
    data = {"monoid": M.descriptor, "idempotents": nontrivial,
            "labels": [M.label(e) for e in nontrivial],
            "first": first, "frobenius": traces}
    write_output(dump_json(data), args.out)
    return EXIT_OK


def cmd_monoid_isgroup(args) -> int:
    M = _finite_monoid(args)
    verdict = is_group(M)
    assert verdict == (find_nontrivial_idempotent(M) is None)
    write_output(dump_json({"monoid": M.descriptor, "is_group": verdict}), args.out)
    return EXIT_OK


def surjunctivity_sweep(M: FiniteMonoid, a: int, max_memory: int) -> dict:
    """Every memory set up to ``max_memory`` elements, every local rule."""
    total = injective = counterexamples = non_equivariant = 0
    for size in range(1, max_memory + 1):
        for memory in itertools.combinations(M.elements(), size):
            for rule in enumerate_rules(a, size):
                tau = ca_full_map(M, CellularAutomaton(a, memory, rule))
                total += 1
                if not check_equivariance(M, tau):
                    non_equivariant += 1
                if tau.is_injective():
                    injective += 1
                    if not tau.is_surjective():
                        counterexamples += 1
    return {"automata": total, "injective": injective, "injective_not_surjective": counterexamples,
            "non_equivariant": non_equivariant,
            "all_injective_surjective": counterexamples == 0}


def cmd_monoid_ca_check(args) -> int:
    M = _finite_monoid(args)
    result = surjunctivity_sweep(M, args.alphabet, min(args.max_memory, M.order))
    result["monoid"] = M.descriptor
    print(f"all injective CAs surjective: {str(result['all_injective_surjective']).lower()}")
    write_output(dump_json(result), args.out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soficlab", description=__doc__.splitlines()[0])
    groups = parser.add_subparsers(dest="group", required=True)

    chart = groups.add_parser("chart").add_subparsers(dest="cmd", required=True)
    b = chart.add_parser("build", help="construct a chart and write its JSON")
    b.add_argument("--kind", required=True,
                   choices=["cyclic", "saturating", "poly", "random-perm", "regular", "product"])
    b.add_argument("--n", type=int)
    b.add_argument("--K", help="'lo..hi' or a comma list; polynomials for --kind poly")
    b.add_argument("--p", type=int)
    b.add_argument("--d", type=int)
    b.add_argument("--k", type=int, default=2)
    b.add_argument("--L", type=int, default=2)
    b.add_argument("--seed", type=int, default=DEFAULT_SEED)
    b.add_argument("--charts", nargs="*")
    b.add_argument("--epsilon")
    b.add_argument("--monoid")
    b.add_argument("--table")
    b.add_argument("--extend", help="labels of extra elements mapped to the identity")
    b.add_argument("--out")
    b.set_defaults(func=cmd_chart_build)

    q = chart.add_parser("quality", help="measure SM1-SM4 statistics of a chart")
    q.add_argument("--chart", required=True)
    q.add_argument("--monoid", help="override the chart's monoid descriptor")
    q.add_argument("--out")
    q.set_defaults(func=cmd_chart_quality)

    s = chart.add_parser("search-bicyclic", help="local search for bicyclic charts")
    s.add_argument("--d", type=int, default=50)
    s.add_argument("--iterations", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--budget", default="1/10")
    s.add_argument("--shards", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_chart_search)

    ent = groups.add_parser("entropy").add_subparsers(dest="cmd", required=True)

    def common(p, with_chart=True):
        if with_chart:
            p.add_argument("--chart", required=True)
        p.add_argument("--sft", required=True)
        p.add_argument("--F", required=True, help="comma-separated element labels")
        p.add_argument("--delta", required=True, help="exact rational num/den")
        p.add_argument("--epsilon", default="1/2")
        p.add_argument("--method", choices=sorted(METHODS), default="exact")
        p.add_argument("--admissibility", choices=["local", "exact"], default="local")
        p.add_argument("--shards", type=int, default=1)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--samples", type=int, default=1000)
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--cap", type=int, help="size cap for exact counting")
        p.add_argument("--out")

    e = ent.add_parser("estimate", help="count good traces on one chart (CSV)")
    common(e)
    e.set_defaults(func=cmd_entropy_estimate)

    w = ent.add_parser("sweep", help="count over a family of charts (CSV)")
    common(w, with_chart=False)
    w.add_argument("--charts", nargs="*")
    w.add_argument("--family", choices=["cyclic", "saturating", "random-perm"], default="cyclic")
    w.add_argument("--sizes", default="4..8")
    w.add_argument("--K")
    w.add_argument("--k", type=int, default=2)
    w.add_argument("--L", type=int, default=1)
    w.set_defaults(func=cmd_entropy_sweep)

    bd = ent.add_parser("bound", help="beta0 and the certified upper bound (JSON)")
    common(bd)
    bd.add_argument("--bound-epsilon", help="SM3 level for the bound; default delta/C(|F|,2)")
    bd.set_defaults(func=cmd_entropy_bound)

    mon = groups.add_parser("monoid").add_subparsers(dest="cmd", required=True)
    for name, func, help_ in [("idempotents", cmd_monoid_idempotents, "non-trivial idempotents"),
                              ("isgroup", cmd_monoid_isgroup, "group test"),
                              ("ca-check", cmd_monoid_ca_check, "exhaustive surjunctivity check")]:
        p = mon.add_parser(name, help=help_)
        p.add_argument("--table")
        p.add_argument("--monoid")
        p.add_argument("--out")
        if name == "ca-check":
            p.add_argument("--alphabet", type=int, default=2)
            p.add_argument("--max-memory", type=int, default=2)
        p.set_defaults(func=func)
    return parser


# Options whose values may start with a minus sign ("-2..2", "-1,0,1").
SIGNED_OPTIONS = ("--K", "--F", "--sizes")


def join_signed_values(argv: list[str]) -> list[str]:
    """Rewrite ``--K -2..2`` as ``--K=-2..2`` so argparse does not read the
    value as an option."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in SIGNED_OPTIONS and i + 1 < len(argv) and argv[i + 1][:2].lstrip("-")[:1].isdigit():
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(join_signed_values(argv))
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (en.SizeCapError, ConfigCapError, ch.CarrierCapError, FragmentCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ValueError, KeyError, TypeError, MonoidError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
