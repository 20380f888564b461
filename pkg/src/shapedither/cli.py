"""Command-line front end.

Exit codes: 0 success/pass, 1 analytic fail, 2 usage error.

Every flag can also come from a ``--config`` file in ``key = value`` form.
Keys go under a section named after the subcommand (``[check]``,
``[reproduce]``, ...) or under ``[common]``, with dashes or underscores as
in the flag names.  Flags given on the command line override the file.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import re
import sys
from typing import Optional

from . import __version__
from .cf import scans_to_csv, whiteness_gate
from .conditions import theorem1_check, theorem2_check
from .dither import FilterParseError, FirFilter, G1, G2
from .oracle import (DEFAULT_CAP, EnumerationCapError, exact_error_pmf, sinusoid_phase_grid,
                     verify_cf)
from .quantizer import QuantizerSpec
from .sim import TAP_NAMES, ConfigError, PipelineConfig, SignalSpec, compare, format_table, run, \
    preset_config, write_taps
from .stats import harmonic_number, tv_distance

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
ORACLE_TOL = 1e-12
SCHEMA = 1

# Threshold values reported by ``reproduce``.
FIG3_TV_UNIFORM_MAX = 0.01
FIG3_TV_NONUNIFORM_MIN = 0.05
FIG3_TV_ORACLE_MAX = 0.01
FIG3_SPUR_DB = 20.0
FIG4_MIN_GAP_DB = 1.0


class UsageError(Exception):
    pass


def _filter_arg(text: str) -> FirFilter:
    if text.upper() == "G1":
        return G1
    if text.upper() == "G2":
        return G2
    try:
        return FirFilter.parse(text)
    except (FilterParseError, ValueError) as exc:
        raise argparse.ArgumentTypeError(f"bad filter literal {text!r}: {exc}") from None


def _args_hash(args: argparse.Namespace) -> str:
    d = {k: (list(v.coeffs) if isinstance(v, FirFilter) else v)
         for k, v in sorted(vars(args).items()) if k not in ("func", "out", "config", "plot")}
    canon = json.dumps(d, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _write(out_dir: Optional[str], name: str, text: str) -> Optional[str]:
    if out_dir is None:
        return None
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- subcommands -------------------------------------------------------------

def cmd_check(args) -> int:
    filt = args.filter
    t2 = theorem2_check(filt, strict=args.strict)
    p_min = args.p_min
    p_max = args.p_max if args.p_max is not None else filt.K
    if p_min < 1 or p_max < p_min:
        raise UsageError(f"invalid lag range {p_min}..{p_max}")
    t1 = [theorem1_check(filt, p) for p in range(p_min, p_max + 1)]
    print(t2.summary())
    for rep in t1:
        print(rep.summary())
    report = {
        "schema": SCHEMA, "config_hash": _args_hash(args), "seed": None,
        "filter": list(filt.coeffs), "L": filt.L, "K": filt.K,
        "theorem2": t2.to_dict(), "theorem1": [rep.to_dict() for rep in t1],
    }
    _write(args.out, "check_report.json", _json(report))
    return EXIT_OK if t2.passed else EXIT_FAIL


def cmd_cf_scan(args) -> int:
    filt = args.filter
    if args.p_min < 1 or args.p_max < args.p_min:
        raise UsageError(f"invalid lag range {args.p_min}..{args.p_max}")
    if args.tol < 0:
        raise UsageError("tol must be non-negative")
    gate = whiteness_gate(filt, args.p_max, args.tol, p_min=args.p_min)
    verdict = {
        "schema": SCHEMA, "config_hash": _args_hash(args), "seed": None,
        "filter": list(filt.coeffs), "p_min": args.p_min, "p_max": args.p_max, "tol": args.tol,
        "verdict": gate.verdict, "reason": gate.reason,
        "failing_lags": gate.failing_lags(),
        "offending_count": len(gate.offending),
        "offending": [[p, k1, k2, mag] for p, k1, k2, mag in gate.offending[:args.max_rows]],
    }
    _write(args.out, "cf_scan.csv", scans_to_csv(gate.scans))
    _write(args.out, "cf_gate.json", _json(verdict))
    msg = f"gate: {gate.verdict} ({gate.reason})"
    if gate.offending:
        msg += f"; {len(gate.offending)} nonzero grid points at lags {gate.failing_lags()}"
    print(msg)
    for p, k1, k2, mag in gate.offending[:10]:
        print(f"  p={p} k1={k1} k2={'' if k2 is None else k2} |cf|={mag:.6g}")
    return EXIT_OK if gate.passed else EXIT_FAIL


def cmd_oracle_verify(args) -> int:
    try:
        result = verify_cf(args.filter, args.p, cap=args.cap)
    except EnumerationCapError as exc:
        raise UsageError(str(exc)) from None
    result.update({"schema": SCHEMA, "config_hash": _args_hash(args), "seed": None,
                   "tolerance": ORACLE_TOL,
                   "verdict": "pass" if result["max_discrepancy"] <= ORACLE_TOL else "fail"})
    _write(args.out, "oracle_verify.json", _json(result))
    print(f"max |closed form - enumerated| = {result['max_discrepancy']:.3e} "
          f"({result['verdict']}); joint is product of marginals: {result['joint_is_product']}")
    return EXIT_OK if result["verdict"] == "pass" else EXIT_FAIL


def _sim_config(args) -> PipelineConfig:
    taps = tuple(t.strip() for t in args.taps.split(",") if t.strip())
    signal = SignalSpec(kind=args.signal, amplitude=args.amplitude, frequency=args.frequency,
                        dc=args.dc, path=args.input_file, coherent=args.coherent)
    q = QuantizerSpec(levels=args.levels, step=args.step)
    common = dict(quantizer=q, signal=signal, n=args.n, seed=args.seed, taps=taps,
                  overload_policy=args.overload_policy, band_fraction=args.band_fraction,
                  segment_length=args.segment_length)
    if args.dither == "filtered":
        if args.filter is None:
            raise UsageError("--dither filtered needs --filter")
        return PipelineConfig("filtered-subtractive", "filtered", args.filter, **common)
    arch = args.architecture or "subtractive"
    return PipelineConfig(arch, args.dither, None, **common)


def cmd_simulate(args) -> int:
    try:
        config = _sim_config(args)
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    result = run(config)
    summary = result.summary()
    summary.update({"schema": SCHEMA, "config": config.to_dict()})
    if args.out:
        write_taps(result, args.out, args.tap_format)
        _write(args.out, "error_pmf.csv", result.stats.pmf.to_csv())
        if result.stats.psd is not None:
            _write(args.out, "error_psd.csv", result.stats.psd.to_csv())
            _write(args.out, "y_psd.csv", result.y_psd.to_csv())
        _write(args.out, "summary.json", _json(summary))
    print(format_table(compare([config], [result])))
    return EXIT_OK


def _spur_rows(spurs, fundamental, df):
    return [dict(s.to_dict(), harmonic=harmonic_number(s.frequency, fundamental, 1.5 * df))
            for s in spurs]


def _reproduce_fig3(args, out):
    names = ("G1", "G2")
    results = [run(preset_config(n, n=args.n, seed=args.seed)) for n in names]
    q = QuantizerSpec()
    phases = sinusoid_phase_grid(2.0 * q.step)
    entries = {}
    for name, res in zip(names, results):
        cfg, st = res.config, res.stats
        oracle = exact_error_pmf(cfg.filter, q, phases)
        tv_oracle = tv_distance(st.pmf, oracle)
        f0 = cfg.signal.effective_frequency(cfg.segment_length)
        _write(out, f"fig3_{name}_error_pmf.csv", st.pmf.to_csv())
        _write(out, f"fig3_{name}_oracle_pmf.csv", oracle.to_csv())
        _write(out, f"fig3_{name}_error_psd.csv", st.psd.to_csv())
        entries[name] = {
            "config_hash": cfg.config_hash(),
            "variance": st.variance,
            "tv_to_uniform": st.tv_to_uniform,
            "tv_to_oracle": tv_oracle,
            "uniformity": st.uniformity.to_dict(),
            "welch_averages": st.psd.n_averages,
            "spurs": _spur_rows(st.spurs, f0, st.psd.df),
            "overloads": res.overloads,
        }
    g1, g2 = entries["G1"], entries["G2"]
    claims = {
        "G2_uniformity_pass": g2["uniformity"]["verdict"] == "pass",
        "G1_uniformity_fail": g1["uniformity"]["verdict"] == "fail",
        "G2_spur_free": not g2["spurs"],
        "G1_has_harmonic_spur": any(s["harmonic"] for s in g1["spurs"]),
    }
    thresholds = {
        f"G2_tv_to_uniform_below_{FIG3_TV_UNIFORM_MAX}": g2["tv_to_uniform"] < FIG3_TV_UNIFORM_MAX,
        f"G1_tv_to_uniform_above_{FIG3_TV_NONUNIFORM_MIN}": g1["tv_to_uniform"] > FIG3_TV_NONUNIFORM_MIN,
        f"tv_to_oracle_below_{FIG3_TV_ORACLE_MAX}": max(g1["tv_to_oracle"], g2["tv_to_oracle"]) < FIG3_TV_ORACLE_MAX,
        f"G1_spur_above_{FIG3_SPUR_DB:g}dB": any(
            s["harmonic"] and s["db_above_floor"] >= FIG3_SPUR_DB for s in g1["spurs"]),
    }
    if args.plot:
        _plot_fig3(out, results)
    return {"figure": "fig3", "results": entries, "claims": claims, "thresholds": thresholds}


def _reproduce_fig4(args, out):
    names = ("G1", "G2", "uniform")
    configs = [preset_config(n, n=args.n, seed=args.seed) for n in names]
    results = [run(c) for c in configs]
    rows = compare(configs, results)
    entries = {}
    for name, res, row in zip(names, results, rows):
        _write(out, f"fig4_{name}_y_psd.csv", res.y_psd.to_csv())
        f0 = res.config.signal.effective_frequency(res.config.segment_length)
        entries[name] = dict(row, y_spurs=_spur_rows(res.y_spurs, f0, res.y_psd.df))
    p = {n: entries[n]["inband_power_y_db"] for n in names}
    claims = {
        "inband_ordering_G1_lt_G2_lt_uniform": p["G1"] < p["G2"] < p["uniform"],
        "G2_y_spur_free": not entries["G2"]["y_spurs"],
        "uniform_y_spur_free": not entries["uniform"]["y_spurs"],
        "G1_y_has_spurs": bool(entries["G1"]["y_spurs"]),
    }
    thresholds = {
        f"gaps_at_least_{FIG4_MIN_GAP_DB:g}dB": (p["G2"] - p["G1"] >= FIG4_MIN_GAP_DB
                                                 and p["uniform"] - p["G2"] >= FIG4_MIN_GAP_DB),
    }
    if args.plot:
        _plot_fig4(out, results)
    print(format_table(rows))
    return {"figure": "fig4", "results": entries, "claims": claims, "thresholds": thresholds,
            "band_fraction": configs[0].band_fraction}


def cmd_reproduce(args) -> int:
    out = args.out or f"{args.figure}_out"
    fn = _reproduce_fig3 if args.figure == "fig3" else _reproduce_fig4
    summary = fn(args, out)
    for key in ("claims", "thresholds"):
        summary[key] = {k: bool(v) for k, v in summary[key].items()}
    summary.update({"schema": SCHEMA, "seed": args.seed, "n": args.n,
                    "config_hash": _args_hash(args)})
    _write(out, f"{args.figure}_summary.json", _json(summary))
    for key, ok in summary["claims"].items():
        print(f"claim     {key}: {'pass' if ok else 'FAIL'}")
    for key, ok in summary["thresholds"].items():
        print(f"threshold {key}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if all(summary["claims"].values()) else EXIT_FAIL


# -- optional plotting -------------------------------------------------------

def _pyplot():
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise UsageError("--plot needs matplotlib (pip install artifact[plot])") from exc
    return plt


def _plot_fig3(out, results):
    plt = _pyplot()
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    for col, res in enumerate(results):
        st = res.stats
        axes[0, col].bar(st.pmf.centers, st.pmf.probs, width=st.pmf.pitch)
        axes[0, col].set_title(f"{res.config.label}: error pmf")
        axes[1, col].plot(st.psd.freqs, st.psd.db())
        axes[1, col].set_title(f"{res.config.label}: error PSD (dB)")
        axes[1, col].set_xlabel("normalized frequency")
    fig.tight_layout()
    fig.savefig(os.path.join(out, "fig3.png"), metadata={"Software": None})
    plt.close(fig)


def _plot_fig4(out, results):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 5))
    for res in results:
        ax.plot(res.y_psd.freqs, res.y_psd.db(), label=res.config.label, lw=0.8)
    ax.set_xlabel("normalized frequency")
    ax.set_ylabel("PSD of y (dB)")
    ax.legend()
    fig.savefig(os.path.join(out, "fig4.png"), metadata={"Software": None})
    plt.close(fig)


# -- parser ------------------------------------------------------------------

class _DefaultsFormatter(argparse.HelpFormatter):
    """Show the default of every option that has one, even without help text."""

    def _get_help_string(self, action):
        text = action.help or ""
        if (action.option_strings and action.default not in (None, False, argparse.SUPPRESS)
                and "%(default)" not in text):
            default = action.default
            if isinstance(default, FirFilter):
                default = default.literal()
            text += f" (default: {default})"
        return text.strip()

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shapedither",
        description="Filtered subtractive dither: condition checks, cf scans, oracle, simulation.",
        formatter_class=_DefaultsFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="key = value config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = _DefaultsFormatter

    p = sub.add_parser("check", help="whitening-condition checks", formatter_class=fmt)
    p.add_argument("--filter", type=_filter_arg, required=True,
                   help='comma-separated integers, e.g. "-1,-2,-4,-8,16,-1", or G1/G2')
    p.add_argument("--p-min", type=int, default=1, help="first lag for the lag-p check")
    p.add_argument("--p-max", type=int, default=None, help="last lag (default: filter length K)")
    p.add_argument("--strict", action="store_true",
                   help="also require every |g| to be a power of two")
    p.add_argument("--out", default=None, help="directory for check_report.json")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("cf-scan", help="characteristic-function grid scan and gate",
                       formatter_class=fmt)
    p.add_argument("--filter", type=_filter_arg, required=True)
    p.add_argument("--p-min", type=int, default=1, help="first lag scanned")
    p.add_argument("--p-max", type=int, default=12, help="last lag scanned")
    p.add_argument("--tol", type=float, default=1e-12, help="magnitude treated as zero")
    p.add_argument("--max-rows", type=int, default=1000,
                   help="offending points listed in cf_gate.json")
    p.add_argument("--out", default=None, help="directory for cf_scan.csv and cf_gate.json")
    p.set_defaults(func=cmd_cf_scan)

    p = sub.add_parser("oracle-verify", help="closed form vs. enumeration", formatter_class=fmt)
    p.add_argument("--filter", type=_filter_arg, required=True)
    p.add_argument("--p", type=int, default=1, help="lag")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="enumeration cap in bits")
    p.add_argument("--out", default=None, help="directory for oracle_verify.json")
    p.set_defaults(func=cmd_oracle_verify)

    p = sub.add_parser("simulate", help="run one pipeline", formatter_class=fmt)
    p.add_argument("--dither", choices=["none", "uniform", "filtered"], default="filtered",
                   help="dither kind")
    p.add_argument("--filter", type=_filter_arg, default=G2,
                   help="G1, G2 or a comma-separated integer literal")
    p.add_argument("--architecture", choices=["additive", "subtractive"], default=None,
                   help="for non-filtered dither (default subtractive)")
    p.add_argument("--levels", type=int, default=5, help="quantizer levels Q (odd)")
    p.add_argument("--step", type=float, default=1.0, help="quantizer step")
    p.add_argument("--signal", choices=["sinusoid", "dc", "uniform-random", "file"],
                   default="sinusoid")
    p.add_argument("--amplitude", type=float, default=2.0, help="input amplitude")
    p.add_argument("--frequency", type=float, default=0.0137,
                   help="sinusoid frequency in cycles/sample")
    p.add_argument("--dc", type=float, default=0.0, help="dc level added to the input")
    p.add_argument("--input-file", default=None, help=".npy, .csv or whitespace text series")
    p.add_argument("--coherent", action="store_true",
                   help="snap the sinusoid to an odd Welch bin")
    p.add_argument("--n", type=int, default=1 << 20, help="number of samples")
    p.add_argument("--seed", type=int, default=7, help="master seed")
    p.add_argument("--taps", default="e", help=f"comma list from {','.join(TAP_NAMES)}")
    p.add_argument("--tap-format", choices=["csv", "f64"], default="f64",
                   help="taps.csv or <tap>.f64 with a JSON sidecar")
    p.add_argument("--overload-policy", choices=["warn", "fail"], default="fail",
                   help="what to do when the input can overload the quantizer")
    p.add_argument("--band-fraction", type=float, default=0.1,
                   help="in-band edge as a fraction of Nyquist")
    p.add_argument("--segment-length", type=int, default=8192, help="Welch segment length")
    p.add_argument("--out", default=None, help="directory for taps, CSVs and summary.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", help="regenerate figure data", formatter_class=fmt)
    p.add_argument("figure", choices=["fig3", "fig4"])
    p.add_argument("--seed", type=int, default=7, help="master seed")
    p.add_argument("--n", type=int, default=1 << 20, help="samples per run")
    p.add_argument("--out", default=None, help="output directory (default <figure>_out)")
    p.add_argument("--plot", action="store_true", help="also render PNGs with matplotlib")
    p.set_defaults(func=cmd_reproduce)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    cp = configparser.ConfigParser()
    if not cp.read(known.config):
        raise UsageError(f"cannot read config file {known.config}")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((a for a in rest if a in subparsers.choices), None)
    if command is None:
        return
    sp = subparsers.choices[command]
    actions = {a.dest: a for a in sp._actions}
    values = {}
    for section in ("common", command):
        if not cp.has_section(section):
            continue
        for k, v in cp.items(section, raw=True):
            key = k.replace("-", "_")
            if key in actions:
                values[key] = v
            elif section == command:
                # [common] may carry keys other subcommands use; a command
                # section may not
                raise UsageError(f"unknown key {k!r} in config section [{command}]")
    defaults = {}
    for key, raw in values.items():
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key}: {exc}") from None
        else:
            defaults[key] = raw
        action.required = False
    sp.set_defaults(**defaults)


_LITERAL = re.compile(r"^\s*-?\d+(\s*,\s*-?\d+)*\s*$")


def _glue_filter_literals(argv: list[str]) -> list[str]:
    """Turn ``--filter -1,-2`` into ``--filter=-1,-2`` so argparse keeps it a value."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--filter" and i + 1 < len(argv) and _LITERAL.match(argv[i + 1]):
            out.append(f"--filter={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv: Optional[list[str]] = None) -> int:
    argv = _glue_filter_literals(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
