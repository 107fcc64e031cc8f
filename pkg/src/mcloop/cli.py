"""Command-line entry point: ``mcloop {simulate,decode,characterize,filters,sweep}``."""

from __future__ import annotations

import argparse
import copy
import sys
from pathlib import Path

import numpy as np

from . import io
from .channel import single_responses
from .errors import ConfigurationError, DomainError, EndOfTrace, TraceFormatError
from .experiment import (SR_COUNT, SR_SPACING, ExperimentSpec, build_filter, build_frame,
                         parse_bits, run_experiment, summarize)
from .detect import decode_trace
from .model import PhysicalConfig, characterize
from .sync import build_blind_corr_filter, build_blind_diff_filter, build_data_filter

DEFAULT_CONFIG = "paper_testbed.json"


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _add_experiment_args(p):
    p.add_argument("--config", default=DEFAULT_CONFIG,
                   help="JSON config; bundled names such as paper_testbed.json need no path")
    p.add_argument("--M", type=int, help="modulation order")
    p.add_argument("--Ts", type=float, help="symbol duration [s]")
    p.add_argument("--Ti", type=float, help="irradiation duration [s]")
    p.add_argument("--dt", type=float, help="sample interval [s]")
    p.add_argument("--filter", choices=["SCF", "SDCF", "BCF", "BDCF"], help="receive filter")
    p.add_argument("--pfa", type=float, help="start-detection false alarm probability")
    p.add_argument("--radius", type=float, help="normalized search radius r")
    p.add_argument("--skip", type=int, help="settle symbols N_skip")
    p.add_argument("--pilots", type=int, help="pilot symbols P")
    p.add_argument("--window", type=int, help="threshold update window W")
    p.add_argument("--period", type=int, help="threshold update period F")
    p.add_argument("--frozen", action="store_true", help="keep the pilot thresholds (no adaptation)")
    p.add_argument("--seed", type=int, help="seed for message, settle symbols and noise")
    p.add_argument("--noise", type=float, help="RX noise standard deviation")
    ex = p.add_mutually_exclusive_group()
    ex.add_argument("--ex", dest="ex_active", action="store_true", default=None, help="eraser on")
    ex.add_argument("--no-ex", dest="ex_active", action="store_false", help="eraser off")


def _apply_overrides(config: dict, args) -> dict:
    cfg = copy.deepcopy(config)
    for key in ("physical", "modulation"):
        if key not in cfg:
            raise ConfigurationError(f"config lacks a {key} section")
    mod = cfg["modulation"]
    det = cfg.setdefault("detector", {})
    chan = cfg.setdefault("channel", {})
    rx = cfg.setdefault("receiver", {})
    msg = cfg.setdefault("message", {})
    if args.M is not None:
        mod["modulation_order"] = args.M
    if args.Ti is not None:
        mod["irradiation_duration"] = args.Ti
    if args.Ts is not None:
        # keep the irradiation time and put the rest into the guard interval
        mod["guard_duration"] = args.Ts - mod["irradiation_duration"]
        if mod["guard_duration"] < 0:
            raise ConfigurationError("--Ts must not be shorter than the irradiation duration")
    if args.dt is not None:
        mod["sample_interval"] = args.dt
    for flag, section, key in ((args.filter, rx, "filter_kind"), (args.pfa, rx, "p_fa"),
                               (args.radius, rx, "search_radius"), (args.skip, det, "skip_count"),
                               (args.pilots, det, "pilot_count"), (args.window, det, "window_width"),
                               (args.period, det, "update_period"), (args.seed, msg, "seed"),
                               (args.noise, chan, "rx_noise_sigma"), (args.ex_active, chan, "ex_active")):
        if flag is not None:
            section[key] = flag
    if args.frozen:
        det["adaptive"] = False
    if getattr(args, "symbols", None) is not None:
        msg["symbols"] = args.symbols
    if getattr(args, "message", None):
        msg["source"] = "bits"
        msg["bits"] = "".join(message_arg(args.message))
    return cfg


def message_arg(source: str) -> str:
    """Message bits from a file path or a literal 0/1 string."""
    p = Path(source)
    text = p.read_text() if p.exists() else source
    return "".join(str(b) for b in parse_bits(text))


def _spec(args) -> ExperimentSpec:
    return ExperimentSpec.from_config(_apply_overrides(io.load_config(args.config), args))


def cmd_simulate(args) -> int:
    spec = _spec(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(spec)
    stem = out / args.prefix
    io.write_trace(result.trace, f"{stem}_trace.csv")
    io.write_json(spec.to_dict(), f"{stem}_config.json")
    io.write_report(result.report.to_dict(), f"{stem}_report.json")
    m = result.report.metrics
    print(f"status={result.report.status} ber={m.get('ber')} bit_errors={m.get('bit_errors')} "
          f"amed={m.get('amed')} symbols={m.get('decoded_symbols')}")
    print(f"wrote {stem}_trace.csv, {stem}_config.json, {stem}_report.json")
    return 0


def cmd_decode(args) -> int:
    spec = _spec(args)
    trace = io.read_trace(args.trace, normalize=args.normalize)
    dt = spec.modulation.sample_interval
    if abs(trace.sample_interval - dt) > 1e-6 * dt:
        raise ConfigurationError(f"trace sample interval {trace.sample_interval} s != configured {dt} s")
    responses = None
    if args.responses:
        responses = [io.read_trace(p) for p in args.responses]
    filt = build_filter(spec.filter_kind, spec.modulation, spec.channel, spec.loess_span, responses)
    M = spec.modulation.modulation_order
    frame = build_frame(M, spec.symbols, spec.detector, spec.seed, spec.message_bits)
    report = decode_trace(trace, spec.modulation, spec.detector, filt, spec.p_fa, spec.search_radius,
                          frame.pilots, None if args.open_ended else spec.symbols, spec.block_length)
    report.config = spec.to_dict()
    if report.status == "ok":
        if not args.no_truth:
            for r in report.records[:frame.symbols.size]:
                r.true = int(frame.symbols[r.k])
            report.metrics = summarize(report, frame.symbols, M, spec.detector)
        else:
            report.metrics = {"decoded_symbols": len(report.records)}
    else:
        print("transmission start not detected")
    io.write_report(report.to_dict(), args.out)
    print(f"status={report.status} metrics={report.metrics}")
    print(f"wrote {args.out}")
    return 0


def cmd_characterize(args) -> int:
    config = io.load_config(args.config)
    phys = PhysicalConfig.from_dict(config["physical"])
    table = characterize(phys, args.M, args.Ts)
    reported = config.get("reported", {})
    table["reported"] = reported
    notes = []
    if "reynolds" in reported:
        notes.append(f"Reynolds number from 2 r_T v_eff / nu is {table['reynolds']:.1f}; "
                     f"the reported value is {reported['reynolds']:g}")
    table["notes"] = notes
    print(f"{'Reynolds':<24}{table['reynolds']:.4g}")
    print(f"{'Peclet':<24}{table['peclet']:.4g}")
    print(f"{'loop time [s]':<24}{table['loop_time_s']:.4g}")
    print(f"{'reservoir time [s]':<24}{table['reservoir_residence_s']:.4g}")
    print(f"{'GFPD molecules':<24}{table['molecule_count']:.4g}")
    print(f"{'flux velocity [m/s]':<24}{table['flux_velocity_m_s']:.4g}")
    print("M  Ts[s]  rate[bit/s]")
    for row in table["data_rates"]:
        print(f"{row['M']:<3}{row['symbol_duration_s']:<7g}{row['bit_per_s']:.4g}")
    for note in notes:
        print("note:", note)
    if args.out:
        io.write_json(table, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_filters(args) -> int:
    spec = _spec(args)
    mod = spec.modulation
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    filters = [build_blind_corr_filter(mod.irradiation_duration, mod.symbol_duration, mod.sample_interval),
               build_blind_diff_filter(mod.irradiation_duration, mod.symbol_duration, mod.sample_interval)]
    if not args.blind_only:
        responses = single_responses(spec.channel, mod, SR_COUNT, SR_SPACING)
        for kind in ("SCF", "SDCF"):
            filters.append(build_data_filter(responses, kind, mod.symbol_duration, spec.loess_span))
    for f in filters:
        path = out / f"{args.prefix}_{f.kind}.csv"
        t = np.arange(f.coefficients.size) * f.sample_interval
        io.write_columns(path, ("t_s", "coefficient"), (t, f.coefficients))
        print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    base = io.load_config(args.config)
    rows = []
    for M in args.M_list:
        for Ts in args.Ts_list:
            ns = argparse.Namespace(**{**vars(args), "M": M, "Ts": Ts, "Ti": Ts - args.guard})
            spec = ExperimentSpec.from_config(_apply_overrides(base, ns))
            result = run_experiment(spec)
            m = result.report.metrics
            rows.append((M, Ts, Ts - args.guard, spec.modulation.data_rate, m.get("ber", np.nan)))
            print(f"M={M} Ts={Ts:g} Ti={Ts - args.guard:g} rate={spec.modulation.data_rate:.4g} "
                  f"ber={m.get('ber')}")
    if args.out:
        io.write_columns(args.out, ("M", "Ts_s", "Ti_s", "rate_bit_s", "ber"), list(zip(*rows)))
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcloop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a transmission and decode it")
    _add_experiment_args(p)
    p.add_argument("--symbols", type=_positive_int, help="total symbols including settle and pilots")
    p.add_argument("--message", help="message bits: file path or literal 0/1 string (repeated to fill)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--prefix", default="run")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decode", help="decode a trace CSV")
    p.add_argument("trace")
    _add_experiment_args(p)
    p.add_argument("--symbols", type=_positive_int, help="declared message length")
    p.add_argument("--message", help="message bits used for BER evaluation")
    p.add_argument("--responses", nargs="+", help="single-response CSVs for data-based filters")
    p.add_argument("--normalize", action="store_true", help="scale the trace to a maximum of 1")
    p.add_argument("--open-ended", action="store_true", help="decode until the trace ends")
    p.add_argument("--no-truth", action="store_true", help="skip BER evaluation against the seeded message")
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("characterize", help="print testbed characterization numbers")
    p.add_argument("--config", default=DEFAULT_CONFIG)
    p.add_argument("--M", type=int, nargs="+", default=[2, 4, 8])
    p.add_argument("--Ts", type=float, nargs="+", default=[5.0, 10.0, 15.0])
    p.add_argument("--out")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("filters", help="export receive filters as CSV")
    _add_experiment_args(p)
    p.add_argument("--blind-only", action="store_true")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--prefix", default="filter")
    p.set_defaults(func=cmd_filters)

    p = sub.add_parser("sweep", help="BER over a grid of modulation orders and symbol durations")
    _add_experiment_args(p)
    p.set_defaults(M=None, Ts=None)
    p.add_argument("--orders", dest="M_list", type=int, nargs="+", default=[2, 4, 8])
    p.add_argument("--durations", dest="Ts_list", type=float, nargs="+", default=[5.0, 10.0])
    p.add_argument("--guard", type=float, default=2.0, help="guard interval; T_I = T_S - guard")
    p.add_argument("--symbols", type=_positive_int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, TraceFormatError, EndOfTrace, OSError) as exc:
        print(f"mcloop {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
