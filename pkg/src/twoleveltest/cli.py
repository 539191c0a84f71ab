"""Command-line surface: distribution computation, limits, two-level runs,
and reproduction of the published tables/figures.

Exit codes: 0 success, 1 usage error, 2 resource/validation error, 3 I/O
error.  A statistical rejection at the second level is a result, not an
error; pipelines read the JSON.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, published
from . import discrepancy as dc
from . import exactdist as ed
from . import mcdist as mc
from . import onelevel as ol
from . import twolevel as tl
from .bitgen import make_source
from .errors import TwoLevelError, ValidationError, WorkBudgetError

EXIT_OK, EXIT_USAGE, EXIT_RESOURCE, EXIT_IO = 0, 1, 2, 3

_TEST_ALIASES = {
    "frequency": "frequency", "freq": "frequency", "monobit": "frequency",
    "block-frequency": "block_frequency", "block_frequency": "block_frequency",
    "blockfreq": "block_frequency", "bf": "block_frequency",
    "longest": "longest_run", "longest-run": "longest_run", "longest_run": "longest_run",
    "overlap": "overlapping_template", "overlapping-template": "overlapping_template",
    "overlapping_template": "overlapping_template",
    "linear": "linear_complexity", "linear-complexity": "linear_complexity",
    "linear_complexity": "linear_complexity",
    "excursions": "random_excursions", "random-excursions": "random_excursions",
    "random_excursions": "random_excursions",
    "dft": "dft", "spectral": "dft",
}

_CLASS_TESTS = ("longest_run", "overlapping_template", "linear_complexity", "random_excursions")
_SCAN_TESTS = ("frequency", "dft")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _intish(text: str) -> int:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if v < 0 or v != int(v):
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text!r}")
    return int(v)


def _test_name(text: str) -> str:
    key = text.strip().lower()
    if key not in _TEST_ALIASES:
        raise argparse.ArgumentTypeError(f"unknown test {text!r}")
    return _TEST_ALIASES[key]


@dataclass
class RunConfig:
    """Everything that determines a run; embedded in every output file."""

    subcommand: str
    test: str | None = None
    n: int | None = None
    m: int | None = None
    x: int | None = None
    nu: int = 9
    N: int | None = None
    M: int | None = None
    streams: int | None = None
    seed: int | None = None
    seeds: list[int] = field(default_factory=list)
    generator: str | None = None
    variance_variant: str | None = None
    null: str | None = None
    partitions: int | None = None
    workers: int | None = None
    budget: int | None = None
    alpha_safe: float = 0.25
    alpha_risky: float = 0.0001
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def provenance(self) -> dict:
        d = asdict(self)
        d["tool_version"] = __version__
        return d


def _outdir() -> str:
    return os.environ.get("TWOLEVELTEST_OUTDIR", ".")


def _outpath(path: str | None, default: str) -> str:
    if path:
        return path
    return os.path.join(_outdir(), default)


def _write_json(path: str, payload: dict) -> None:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
    except OSError as exc:
        raise _IOFail(str(exc))


class _IOFail(Exception):
    pass


def _dist_table(dist: ed.CategoryDistribution, report: dc.DiscrepancyReport | None) -> str:
    lines = ["  i     q_i"]
    for i, v in enumerate(dist.q):
        lines.append(f"  {i}   {v:.7f}")
    lines.append(f"  mass accounted: {dist.mass_accounted:.12f}")
    if report is not None:
        lines.append(f"  delta = {report.delta:.6e}   u = {report.u:.6e}")
        safe = "none (numerator <= 0)" if report.n_safe is None else f"{report.n_safe:,}"
        lines.append(f"  N_safe({report.quantile_safe.alpha}) = {safe}")
        lines.append(f"  N_risky({report.quantile_risky.alpha}) = {report.n_risky:,}")
    return "\n".join(lines)


def _spec_for(cfg: RunConfig) -> ol.TestSpec:
    params = {}
    if cfg.m is not None:
        params["m"] = cfg.m
    if cfg.x is not None:
        params["x"] = cfg.x
    if cfg.test == "random_excursions" and cfg.x is None:
        raise ValidationError("random excursions distributions need --x (1..4)")
    return ol.class_spec(cfg.test, cfg.n, **params)


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------

def cmd_exact_q(args) -> int:
    cfg = RunConfig(
        subcommand="exact-q", test=args.test, n=args.n, m=args.m, x=args.x,
        nu=args.nu, partitions=args.partitions, workers=args.workers,
        budget=args.budget, variance_variant=args.sigma,
    )
    if cfg.test in _SCAN_TESTS:
        dist = ed.binomial_scan_q(cfg.test.upper(), cfg.n, args.sigma or "sigma0", cfg.nu)
    else:
        spec = _spec_for(cfg)
        dist = ed.enumerate_q(
            spec, nu=cfg.nu, partitions=cfg.partitions, workers=cfg.workers,
            budget=cfg.budget if cfg.budget else ed.DEFAULT_BUDGET,
            checkpoint_path=args.checkpoint, chunk_rows=args.chunk_rows,
        )
    report = None
    try:
        report = dc.report_from_distribution(dist, alpha_risky=cfg.alpha_risky,
                                             alpha_safe=cfg.alpha_safe)
    except TwoLevelError:
        pass
    out = _outpath(args.out, f"exact_q_{cfg.test}.json")
    payload = dist.to_dict()
    payload["config"] = cfg.provenance()
    if report:
        payload["limits"] = report.to_dict()
    _write_json(out, payload)
    print(_dist_table(dist, report))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_mc_q(args) -> int:
    cfg = RunConfig(
        subcommand="mc-q", test=args.test, n=args.n, m=args.m, x=args.x,
        nu=args.nu, M=args.M, streams=args.streams, seed=args.seed,
        generator=args.gen, variance_variant=args.sigma,
    )
    if cfg.M < 1:
        raise ValidationError("--M must be at least 1")
    source = make_source(cfg.generator, cfg.seed)
    if cfg.test == "block_frequency":
        trace = mc.mc_block_frequency_q(
            cfg.n, cfg.m or 128, cfg.M, cfg.nu, source=source,
            streams=cfg.streams, checkpoint_every=args.checkpoint_every,
        )
    elif cfg.test == "dft":
        trace = mc.mc_sequence_q(
            "dft", cfg.n, cfg.M, source=source, nu=cfg.nu, streams=cfg.streams,
            checkpoint_every=args.checkpoint_every,
            params={"variant": args.sigma or "sigma0"},
        )
    elif cfg.test in _CLASS_TESTS:
        spec = _spec_for(cfg)
        trace = mc.mc_class_q(
            spec, cfg.M, cfg.nu, source=source, streams=cfg.streams,
            checkpoint_every=args.checkpoint_every,
        )
    else:
        raise ValidationError(f"no Monte-Carlo estimator for test {cfg.test!r}")
    report = dc.report_from_distribution(trace.final)
    trace_path = _outpath(args.trace, f"mc_q_{cfg.test}_trace.csv")
    out = _outpath(args.out, f"mc_q_{cfg.test}.json")
    try:
        trace.write_csv(trace_path)
    except OSError as exc:
        raise _IOFail(str(exc))
    payload = trace.to_dict()
    payload["config"] = cfg.provenance()
    payload["limits"] = report.to_dict()
    _write_json(out, payload)
    print(_dist_table(trace.final, report))
    print(f"delta_sd(jackknife) = {trace.delta_sd}  u_sd = {trace.u_sd}  "
          f"delta plug-in bias ~ {trace.delta_bias:.3e}")
    print(f"wrote {out} and {trace_path}")
    return EXIT_OK


def cmd_limits(args) -> int:
    cfg = RunConfig(subcommand="limits", alpha_safe=args.alpha_safe,
                    alpha_risky=args.alpha_risky)
    if args.dist:
        try:
            dist = ed.CategoryDistribution.load(args.dist)
        except OSError as exc:
            raise _IOFail(str(exc))
        cfg.inputs["dist"] = args.dist
    else:
        raise ValidationError("--dist FILE is required (compute one with exact-q/mc-q)")
    delta = dc.chi2_discrepancy(dist.q, np.full(dist.nu + 1, 1.0 / (dist.nu + 1)))
    if delta == 0.0:
        print("no finite limits (delta = 0): the null already matches q")
        return EXIT_RESOURCE
    report = dc.report_from_distribution(dist, alpha_risky=cfg.alpha_risky,
                                         alpha_safe=cfg.alpha_safe)
    print(_dist_table(dist, report))
    if args.out:
        payload = report.to_dict()
        payload["config"] = cfg.provenance()
        _write_json(args.out, payload)
        print(f"wrote {args.out}")
    return EXIT_OK


def _parse_null(spec_text: str, test: str, nu: int) -> tl.SecondLevelNull:
    if spec_text == "uniform":
        return tl.SecondLevelNull.uniform(nu)
    for prefix, kind in (("exact:", tl.EXACT), ("mc:", tl.MC)):
        if spec_text.startswith(prefix):
            path = spec_text[len(prefix):]
            if test == "random_excursions" and "{x}" in path:
                per = {}
                for x in ol.EXCURSION_STATES:
                    d = ed.CategoryDistribution.load(path.replace("{x}", str(abs(x))))
                    per[x] = d.q / d.q.sum()
                return tl.SecondLevelNull(kind, per_component=per)
            d = ed.CategoryDistribution.load(path)
            null = tl.SecondLevelNull.from_distribution(d)
            if null.kind != kind:
                null.kind = kind  # trust the caller's declared kind
            return null
    raise ValidationError(
        f"null must be 'uniform', 'exact:FILE' or 'mc:FILE', got {spec_text!r}"
    )


def cmd_two_level(args) -> int:
    seeds = list(range(1, args.seeds + 1)) if args.seeds else [args.seed or 1]
    cfg = RunConfig(
        subcommand="two-level", test=args.test, n=args.n, N=args.N, nu=args.nu,
        m=args.m, generator=args.gen, seeds=seeds, null=args.null,
        variance_variant=args.sigma,
    )
    try:
        null = _parse_null(args.null, cfg.test, cfg.nu)
    except OSError as exc:
        raise _IOFail(str(exc))
    params = {}
    if cfg.m is not None:
        params["m"] = cfg.m
    if args.sigma:
        params["variant"] = args.sigma
    results = []
    for seed in seeds:
        source = make_source(cfg.generator, seed, path=args.input_file)
        res = tl.run_two_level(source, cfg.test, cfg.n, cfg.N, null, cfg.nu, params)
        results.append(res)
    # one row per component, one p-value column per seed
    labels = [c.label for c in results[0].components]
    header = f"{cfg.test}  {cfg.generator}  N={cfg.N:,}  null={null.kind}"
    print(header)
    for j, label in enumerate(labels):
        cells = "  ".join(f"{r.components[j].p_second:.2e}" for r in results)
        row = f"  {label:>6}" if label else f"  {'p':>6}"
        print(f"{row}  {cells}")
    out = _outpath(args.out, f"two_level_{cfg.test}.json")
    payload = {
        "config": cfg.provenance(),
        "results": [r.to_dict() for r in results],
    }
    _write_json(out, payload)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    source = make_source(args.gen, args.seed)
    nbits = args.bits
    try:
        with open(args.out, "wb") as fh:
            chunk = 1 << 23
            written = 0
            while written < nbits:
                take = min(chunk, nbits - written)
                packed = source.next_packed(take)
                if args.format == "raw":
                    fh.write(packed.tobytes())
                else:
                    bits = np.unpackbits(packed)[:take]
                    fh.write(bits.astype("S1").tobytes().replace(b"\x00", b"0").replace(b"\x01", b"1"))
                written += take
    except OSError as exc:
        raise _IOFail(str(exc))
    print(f"wrote {nbits} bits ({args.format}) to {args.out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    table = args.table
    if table == "T1":
        return _reproduce_t1(args)
    if table == "T3":
        return _reproduce_t3(args)
    if table == "T8-limits":
        return _reproduce_t8_limits(args)
    if table in ("F1", "F2", "F3", "F4", "F5", "F6"):
        return _reproduce_figures(args)
    if table.startswith("qualitative:"):
        return _reproduce_qualitative(args, table.split(":", 1)[1])
    raise ValidationError(f"unknown table {table!r}")


def _roundtrip_row(name: str, q, pub_delta: float, pub_safe: int, pub_risky: int) -> dict:
    q = np.asarray(q)
    p = np.full(len(q), 1.0 / len(q))
    delta = dc.chi2_discrepancy(q, p)
    u = dc.max_ratio_dev(q, p)
    n_safe, n_risky = dc.risky_safe_sizes(delta, u, len(q) - 1)
    box = published.size_interval_from_printed(q)
    ok_delta = abs(delta - pub_delta) <= 1e-8
    ok_safe = n_safe is not None and abs(n_safe - pub_safe) <= 1
    ok_risky = abs(n_risky - pub_risky) <= 1
    in_box = (box["n_safe"][0] <= pub_safe <= box["n_safe"][1]
              and box["n_risky"][0] <= pub_risky <= box["n_risky"][1])
    return {
        "name": name, "delta": delta, "u": u,
        "n_safe": n_safe, "n_risky": n_risky,
        "published": {"delta": pub_delta, "n_safe": pub_safe, "n_risky": pub_risky},
        "delta_match_1e-8": bool(ok_delta),
        "sizes_match_pm1": bool(ok_safe and ok_risky),
        "published_within_print_precision_box": bool(in_box),
        "print_precision_box": box,
    }


def _print_roundtrip(row: dict) -> None:
    pub = row["published"]
    flag = "MATCH" if row["sizes_match_pm1"] else (
        "WITHIN-PRINT-PRECISION" if row["published_within_print_precision_box"] else "MISMATCH")
    print(f"{row['name']:>24}: delta {row['delta']:.6e} (pub {pub['delta']:.6e}, "
          f"{'ok' if row['delta_match_1e-8'] else 'off'}) "
          f"sizes {row['n_safe']:,}/{row['n_risky']:,} "
          f"(pub {pub['n_safe']:,}/{pub['n_risky']:,}) [{flag}]")


def _reproduce_t1(args) -> int:
    rows = []
    for name, entry in published.T1.items():
        rows.append(_roundtrip_row(name, entry["q"], entry["delta"],
                                   entry["n_safe"], entry["n_risky"]))
        _print_roundtrip(rows[-1])
    if args.long_run:
        spec = ol.longest_run_spec(10 ** 6, 10000)
        budget = args.budget or ed.DEFAULT_BUDGET
        print(f"long-run: enumerating {ed.estimate_workload(spec):,} compositions ...")
        dist = ed.enumerate_q(spec, workers=args.workers, budget=budget,
                              checkpoint_path=args.checkpoint)
        pubq = np.asarray(published.T1["longest_run"]["q"])
        err = float(np.abs(dist.q - pubq).max())
        print(f"longest-run enumeration: max |q - published| = {err:.2e} "
              f"({'MATCH' if err <= 5e-7 else 'MISMATCH'} at 5e-7)")
        rows.append({"name": "longest_run_enumerated", "q": [float(v) for v in dist.q],
                     "max_abs_err": err})
    if args.out:
        _write_json(args.out, {"table": "T1", "rows": rows})
    return EXIT_OK


def _reproduce_t3(args) -> int:
    xs = [args.x] if args.x else [1, 2, 3, 4]
    rows = []
    for x in xs:
        entry = published.T3[x]
        rows.append(_roundtrip_row(f"x=+-{x}", entry["q"], entry["delta"],
                                   entry["n_safe"], entry["n_risky"]))
        _print_roundtrip(rows[-1])
    if args.long_run:
        budget = args.budget or ed.DEFAULT_BUDGET
        for x in xs:
            spec = ol.random_excursions_spec(x, 500)
            workload = ed.estimate_workload(spec)
            if workload > budget and not args.checkpoint:
                print(f"x=+-{x}: {workload:,} compositions exceed the budget; "
                      f"pass --budget/--checkpoint to run")
                return EXIT_RESOURCE
            dist = ed.enumerate_q(spec, workers=args.workers, budget=budget,
                                  checkpoint_path=args.checkpoint)
            pubq = np.asarray(published.T3[x]["q"])
            err = float(np.abs(dist.q - pubq).max())
            print(f"x=+-{x} enumeration: max |q - published| = {err:.2e}")
    if args.out:
        _write_json(args.out, {"table": "T3", "rows": rows})
    return EXIT_OK


def _reproduce_t8_limits(args) -> int:
    rows = []
    match = None
    for variant in ol.DFT_VARIANTS:
        dist = ed.binomial_scan_q("DFT", 10 ** 6, variant)
        report = dc.report_from_distribution(dist)
        row = {"variant": variant, "delta": report.delta, "u": report.u,
               "n_safe": report.n_safe, "n_risky": report.n_risky}
        rows.append(row)
        hit = (report.n_safe == published.DFT_SCAN_SIZES["n_safe"]
               and report.n_risky == published.DFT_SCAN_SIZES["n_risky"])
        if hit:
            match = variant
        safe = "none" if report.n_safe is None else f"{report.n_safe:,}"
        print(f"{variant}: N_safe {safe}  N_risky {report.n_risky:,}"
              + ("  <- matches published sizes" if hit else ""))
    print(f"matching variant: {match}")
    if args.out:
        _write_json(args.out, {"table": "T8-limits", "rows": rows, "match": match})
    return EXIT_OK


def _reproduce_figures(args) -> int:
    fig = args.table
    M = args.M or 10 ** 6
    seed = args.seed or 1
    source = make_source(args.gen or "splitstream", seed)
    if fig in ("F1", "F2"):
        spec = ol.linear_complexity_spec(10 ** 6, 500)
        trace = mc.mc_class_q(spec, M, source=source, streams=args.streams)
        ref = published.MC_ESTIMATES["linear_complexity_m500"]
    elif fig in ("F3", "F4"):
        trace = mc.mc_block_frequency_q(10 ** 6, 128, M, source=source, streams=args.streams)
        ref = published.MC_ESTIMATES["block_frequency_m128"]
    else:
        trace = mc.mc_sequence_q("dft", 10 ** 6, M, source=make_source(args.gen or "mt", seed),
                                 streams=args.streams, params={"variant": "sigma2"})
        ref = published.MC_ESTIMATES["dft"]
    _, dhat, uhat = trace.checkpoints[-1]
    tol_d = 5 * max(trace.delta_sd or 0.0, 1e-12) + trace.delta_bias
    print(f"{fig}: delta_hat {dhat:.6e} (published {ref['delta']:.3e}) "
          f"u_hat {uhat:.6e} (published {ref['u']:.3e}); "
          f"|diff| {abs(dhat - ref['delta']):.2e} vs tolerance ~{tol_d:.2e} "
          f"(plug-in bias {trace.delta_bias:.2e} at M={M:,})")
    trace_path = _outpath(args.out, f"{fig}_trace.csv")
    trace.write_csv(trace_path)
    print(f"wrote {trace_path}")
    return EXIT_OK


_QUALITATIVE_RUNS = {
    # table -> (generator, [(test, params, published Ns)])
    "T2": ("mt", [("longest_run", {"m": 10000}, (21000, 235000)),
                  ("overlapping_template", {}, (2600000, 27033000))]),
    "T4": ("mt", [("random_excursions", {}, (5000, 63000))]),
    "T5": ("sha1", [("random_excursions", {}, (5000, 63000))]),
    "T6": ("sha1", [("linear_complexity", {"m": 500}, (507000, 5354000))]),
    "T7": ("mt", [("block_frequency", {"m": 128}, (71800, 1161000))]),
}


def _reproduce_qualitative(args, table: str) -> int:
    if table not in _QUALITATIVE_RUNS:
        raise ValidationError(
            f"no qualitative recipe for {table!r}; published sizes: "
            + json.dumps(published.QUALITATIVE_SIZES, default=str)
        )
    gen, runs = _QUALITATIVE_RUNS[table]
    scale = args.scale
    seeds = list(range(1, (args.seeds or 2) + 1))
    if scale < 1.0:
        print(f"desk scale: published N values scaled by {scale}; the "
              f"qualitative rejection pattern emerges at --scale 1")
    null = tl.SecondLevelNull.uniform(9)
    for test, params, sizes in runs:
        for N_pub in sizes:
            N = max(100, int(N_pub * scale))
            cells = []
            for seed in seeds:
                source = make_source(gen, seed)
                res = tl.run_two_level(source, test, 10 ** 6, N, null, 9, dict(params))
                p = min(c.p_second for c in res.components)
                cells.append(f"{p:.2e}")
            print(f"{table} {test:>22} {gen:>5} N={N:>9,}  " + "  ".join(cells))
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

def build_parser() -> _Parser:
    p = _Parser(prog="twoleveltest",
                description="Category distributions of approximated p-values, "
                            "discrepancy-based sample-size limits, and "
                            "corrected-null two-level randomness testing.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True)

    def common_dist(sp):
        sp.add_argument("--test", type=_test_name, required=True)
        sp.add_argument("--n", type=_intish, default=10 ** 6,
                        help="first-level sample size in bits")
        sp.add_argument("--m", type=_intish, default=None, help="block size")
        sp.add_argument("--x", type=_intish, default=None,
                        help="random-excursions state (1..4)")
        sp.add_argument("--nu", type=_intish, default=9)
        sp.add_argument("--sigma", choices=ol.DFT_VARIANTS, default=None,
                        help="DFT variance variant")
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("exact-q", help="exact category distribution")
    common_dist(sp)
    sp.add_argument("--partitions", type=_intish, default=None)
    sp.add_argument("--workers", type=_intish, default=None)
    sp.add_argument("--budget", type=_intish, default=None,
                    help=f"composition budget (default {ed.DEFAULT_BUDGET:.0e})")
    sp.add_argument("--checkpoint", default=None)
    sp.add_argument("--chunk-rows", type=_intish, default=1 << 18)
    sp.set_defaults(func=cmd_exact_q)

    sp = sub.add_parser("mc-q", help="Monte-Carlo category distribution")
    common_dist(sp)
    sp.add_argument("--M", type=_intish, required=True, help="number of samples")
    sp.add_argument("--streams", type=_intish, default=10)
    sp.add_argument("--seed", type=_intish, default=1)
    sp.add_argument("--gen", default="splitstream",
                    help="mt | sha1 | well | splitstream")
    sp.add_argument("--checkpoint-every", type=_intish, default=None)
    sp.add_argument("--trace", default=None, help="trace CSV path")
    sp.set_defaults(func=cmd_mc_q)

    sp = sub.add_parser("limits", help="delta/u and safe/risky sizes of a distribution")
    sp.add_argument("--dist", required=False, help="CategoryDistribution JSON")
    sp.add_argument("--alpha-safe", type=float, default=0.25)
    sp.add_argument("--alpha-risky", type=float, default=0.0001)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_limits)

    sp = sub.add_parser("two-level", help="run the second-level uniformity test")
    sp.add_argument("--gen", default="mt")
    sp.add_argument("--seed", type=_intish, default=None)
    sp.add_argument("--seeds", type=_intish, default=None,
                    help="run seeds 1..K through the keyed derivation")
    sp.add_argument("--input-file", default=None, help="bit file for --gen file")
    sp.add_argument("--test", type=_test_name, required=True)
    sp.add_argument("--n", type=_intish, default=10 ** 6)
    sp.add_argument("--N", type=_intish, required=True, help="second-level sample size")
    sp.add_argument("--m", type=_intish, default=None)
    sp.add_argument("--nu", type=_intish, default=9)
    sp.add_argument("--sigma", choices=ol.DFT_VARIANTS, default=None)
    sp.add_argument("--null", default="uniform", help="uniform | exact:FILE | mc:FILE")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_two_level)

    sp = sub.add_parser("gen", help="dump generator bits to a file")
    sp.add_argument("--gen", default="mt")
    sp.add_argument("--seed", type=_intish, default=5489)
    sp.add_argument("--bits", type=_intish, required=True)
    sp.add_argument("--format", choices=("raw", "ascii"), default="raw")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("reproduce", help="reproduce a published table or figure")
    sp.add_argument("table", help="T1 | T3 | T8-limits | F1..F6 | qualitative:T2 ...")
    sp.add_argument("--long-run", action="store_true",
                    help="run the full-scale enumeration where applicable")
    sp.add_argument("--budget", type=_intish, default=None)
    sp.add_argument("--checkpoint", default=None)
    sp.add_argument("--workers", type=_intish, default=None)
    sp.add_argument("--M", type=_intish, default=None)
    sp.add_argument("--x", type=_intish, default=None)
    sp.add_argument("--seed", type=_intish, default=None)
    sp.add_argument("--gen", default=None)
    sp.add_argument("--streams", type=_intish, default=10)
    sp.add_argument("--scale", type=float, default=0.01,
                    help="N scale factor for qualitative tables (1 = published)")
    sp.add_argument("--seeds", type=_intish, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except WorkBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except _IOFail as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TwoLevelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
