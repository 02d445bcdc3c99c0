"""Command-line surface: decode, gen, bench, power, and oracle-check.

Exit codes: 0 ok, 1 usage error, 2 data/config error, 3 oracle-check failure.
Set BLANKSKIP_LOG=debug|info|warning to control log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import gen as genmod
from . import oracle as oraclemod
from . import power as powermod
from . import presets, report
from .decoder import BeamConfig, beam_search, threshold_from_logit
from .errors import (
    BlankskipError,
    ContractViolation,
    DataFormatError,
    EmptyInputError,
    MetricUndefinedError,
)
from .formats import list_traces, read_model, read_trace, write_model
from .metrics import RuntimeStats, nbp, rtf
from .model import FACTORIZED
from .runner import decode_traces, merged_stats

log = logging.getLogger("blankskip")

USAGE_EXIT = 1
DATA_EXIT = 2
ORACLE_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(USAGE_EXIT)


def _thresh_value(text: str):
    if text.lower() == "disabled":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"thresh must be a float or 'disabled', got {text!r}")


def _sweep_value(text: str):
    return [_thresh_value(part.strip()) for part in text.split(",") if part.strip()]


def _beam_config(args) -> BeamConfig:
    return BeamConfig(
        beam_width=args.beam_size,
        thresh=args.thresh,
        max_symbols_per_frame=args.max_symbols,
        length_normalize=not args.no_length_norm,
    )


def _add_decode_flags(p, with_thresh=True):
    if with_thresh:
        p.add_argument("--thresh", type=_thresh_value, default=None,
                       help="blank threshold logit, or 'disabled' (default)")
    p.add_argument("--beam-size", type=int, default=10)
    p.add_argument("--max-symbols", type=int, default=10,
                   help="per-frame symbol budget for the inner loop")
    p.add_argument("--no-length-norm", action="store_true",
                   help="select the final hypothesis by raw log prob")
    p.add_argument("--jobs", type=int, default=1, help="utterance-level parallelism")
    p.add_argument("--pipelined", action="store_true",
                   help="run the encoder as a producer thread over a bounded queue")


def _add_power_flags(p):
    p.add_argument("--power-profile", choices=["none", "paper-small", "paper-large", "model"],
                   default="none", help="component byte table for the energy estimate")
    p.add_argument("--power-params", type=Path, default=None,
                   help="JSON file overriding PowerParams fields")
    p.add_argument("--ddr-pj", type=float, default=None)
    p.add_argument("--sram-pj", type=float, default=None)
    p.add_argument("--gops-per-mw", type=float, default=None)
    p.add_argument("--sram-capacity", type=int, default=None, help="bytes")


def _power_params(args) -> powermod.PowerParams:
    params = powermod.PowerParams()
    if args.power_params:
        overrides = json.loads(Path(args.power_params).read_text())
        for key, value in overrides.items():
            if not hasattr(params, key):
                raise ContractViolation(f"unknown power param {key!r}")
            setattr(params, key, value)
    for key, flag in (
        ("ddr_pj_per_byte", "ddr_pj"),
        ("sram_pj_per_byte", "sram_pj"),
        ("int8_gops_per_mw", "gops_per_mw"),
        ("sram_capacity_bytes", "sram_capacity"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(params, key, value)
    params.validate()
    return params


def _energy_block(args, model, agg: RuntimeStats):
    if args.power_profile == "none":
        return None
    params = _power_params(args)
    if args.power_profile == "model":
        profiles = powermod.profiles_from_stats(agg, powermod.model_bytes_table(model))
    else:
        size = args.power_profile.split("-")[1]
        profiles = powermod.paper_profiles(agg, size)
    breakdown = powermod.estimate_energy(profiles, params)
    block = breakdown.as_dict()
    block["profile"] = args.power_profile
    return block


def _load_traces(path: Path):
    path = Path(path)
    if path.is_dir():
        return [(p.name, read_trace(p)) for p in list_traces(path)]
    return [(path.name, read_trace(path))]


def _cmd_decode(args) -> int:
    model = read_model(args.model)
    traces = _load_traces(args.trace)
    cfg = _beam_config(args)
    results = decode_traces(model, traces, cfg, jobs=args.jobs, pipelined=args.pipelined)
    agg = merged_stats(results)
    for name, res in results:
        print(f"{name}\t{' '.join(map(str, res.best.tokens))}")
    rtf_join, rtf_all = rtf(agg)
    print(
        f"# utterances={agg.utterances} nbp={nbp(agg):.2f}% "
        f"rtf_join={rtf_join:.4f} rtf_all={rtf_all:.4f}",
        file=sys.stderr,
    )
    if args.stats_out:
        echo = report.config_echo(
            cfg,
            model_path=args.model,
            trace_path=args.trace,
            jobs=args.jobs,
            pipelined=args.pipelined,
            joiner_kind=model.config.joiner_kind,
        )
        rep = report.build_report(echo, results, agg, energy=_energy_block(args, model, agg))
        report.write_report(args.stats_out, rep)
        log.info("wrote stats to %s", args.stats_out)
    return 0


def _cmd_bench(args) -> int:
    model = read_model(args.model)
    traces = _load_traces(args.trace_dir)
    rows = []
    for thresh in args.thresh_sweep:
        cfg = BeamConfig(
            beam_width=args.beam_size,
            thresh=thresh,
            max_symbols_per_frame=args.max_symbols,
            length_normalize=not args.no_length_norm,
        )
        results = decode_traces(model, traces, cfg, jobs=args.jobs)
        agg = merged_stats(results)
        rtf_join, rtf_all = rtf(agg)
        energy = _energy_block(args, model, agg)
        rows.append(
            {
                "thresh": "disabled" if thresh is None else f"{thresh:g}",
                "p_threshold": threshold_from_logit(thresh),
                "nbp": nbp(agg),
                "rtf_join": rtf_join,
                "rtf_all": rtf_all,
                "energy_uj": "" if energy is None else energy["totals"]["total_microjoules"],
                "blank_calls": agg.blank_joiner_calls,
                "nonblank_calls": agg.nonblank_joiner_calls,
                "full_calls": agg.full_joiner_calls,
            }
        )
        log.info("thresh=%s nbp=%.2f rtf_join=%.4f", rows[-1]["thresh"], rows[-1]["nbp"], rtf_join)
    fieldnames = list(rows[0].keys())
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


def _stats_from_report(path) -> RuntimeStats:
    rep = json.loads(Path(path).read_text())
    try:
        counts = rep["aggregate"]["counts"]
        stats = RuntimeStats(joiner_kind=rep["config"].get("joiner_kind", FACTORIZED))
        stats.blank_joiner_calls = counts["blank_joiner_calls"]
        stats.nonblank_joiner_calls = counts["nonblank_joiner_calls"]
        stats.full_joiner_calls = counts["full_joiner_calls"]
        stats.predictor_calls = counts["predictor_calls"]
        stats.encoder_calls = counts["encoder_calls"]
        stats.audio_s = rep["aggregate"]["audio_s"]
        stats.utterances = rep["aggregate"]["utterances"]
        return stats
    except KeyError as exc:
        raise DataFormatError(f"stats report missing field {exc}") from exc


def _cmd_power(args) -> int:
    params = _power_params(args)
    size = args.profile.split("-")[1]

    def breakdown(path):
        stats = _stats_from_report(path)
        return powermod.estimate_energy(powermod.paper_profiles(stats, size), params)

    current = breakdown(args.stats)
    out = current.as_dict()
    out["profile"] = args.profile
    if args.baseline:
        base = breakdown(args.baseline)
        out["baseline"] = {
            "stats": str(args.baseline),
            "total_pj": base.total_pj,
            "reduction_pct": powermod.compare_runs(base, current),
        }
    text = json.dumps(out, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    for line in powermod.ASSUMPTIONS:
        print(f"# assumption: {line}", file=sys.stderr)
    if args.baseline:
        print(
            f"# total energy reduction vs baseline: {out['baseline']['reduction_pct']:.1f}%",
            file=sys.stderr,
        )
    return 0


def _cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = 0
    max_dev = 0.0
    mismatches = []
    for trial in range(args.trials):
        vocab = int(rng.integers(1, args.vocab + 1))
        T = int(rng.integers(1, args.frames + 1))
        if args.mode == "never-skip":
            model = genmod.random_small_model(rng, vocab, kind=FACTORIZED)
            frames = genmod.random_enc_frames(rng, T, model.config.enc_dim)
            cfg = BeamConfig(beam_width=args.beam, thresh=None,
                             max_symbols_per_frame=args.max_emits)
            a = beam_search(model, frames, cfg)
            b = beam_search(model, frames, cfg, thresholding=False)
            dev = abs(a.best.log_prob - b.best.log_prob)
            max_dev = max(max_dev, dev)
            if a.best.tokens != b.best.tokens or dev > 1e-9:
                failures += 1
                mismatches.append(trial)
            continue
        model, frames, _ = genmod.random_table_instance(rng, T, vocab, args.max_emits)
        cfg = BeamConfig(beam_width=args.beam, thresh=None,
                         max_symbols_per_frame=args.max_emits)
        result = beam_search(model, frames, cfg)
        table = oraclemod.exhaustive_decode(model, frames, args.max_emits)
        best_seq, best_p = oraclemod.oracle_best(table)
        got = tuple(result.best.tokens)
        dev = abs(np.exp(result.best.log_prob) - table.get(got, 0.0))
        max_dev = max(max_dev, dev)
        if args.beam > 1 and (got != best_seq or dev > 1e-6):
            failures += 1
            mismatches.append(trial)
        elif args.beam == 1 and got != best_seq:
            # Greedy-width beams may legitimately miss the oracle winner;
            # reported, not failed.
            mismatches.append(trial)
    print(
        f"mode={args.mode} trials={args.trials} failures={failures} "
        f"max_deviation={max_dev:.3g} flagged={mismatches[:10]}"
    )
    return ORACLE_EXIT if failures else 0


def _cmd_gen(args) -> int:
    if args.what == "model":
        model = presets.desk_model(args.preset, seed=args.seed, quantize=args.quantize)
        write_model(args.out, model)
        print(f"wrote {args.preset} model to {args.out}")
    elif args.what == "spiky-trace":
        manifest = genmod.gen_spiky_suite(
            args.out,
            utterances=args.utterances,
            frames=args.frames,
            target_high_frac=args.target_high_frac,
            joiner_size=args.joiner,
            dim=args.dim,
            seed=args.seed,
            self_check=not args.no_self_check,
        )
        print(
            f"wrote spiky suite to {args.out}: realized high fraction "
            f"{manifest['realized_high_frac']:.4f} over "
            f"{args.utterances * args.frames} frames"
        )
    elif args.what == "posterior-table":
        genmod.gen_posterior_table_fixture(
            args.out, frames=args.frames, vocab=args.vocab,
            max_emits=args.max_emits, seed=args.seed,
        )
        print(f"wrote posterior-table fixture to {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="blankskip", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decode a trace (or directory) with one model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--trace", required=True, type=Path)
    _add_decode_flags(p)
    p.add_argument("--stats-out", type=Path, default=None)
    _add_power_flags(p)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("bench", help="threshold sweep over a trace directory, CSV out")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--trace-dir", required=True, type=Path)
    p.add_argument("--thresh-sweep", type=_sweep_value,
                   default=[16.0, 8.0, 4.0, 2.0, 1.0, 0.5, 0.1],
                   help="comma-separated logits and/or 'disabled'")
    _add_decode_flags(p, with_thresh=False)
    p.add_argument("--out", type=Path, default=None, help="CSV path (default stdout)")
    _add_power_flags(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("power", help="energy estimate from a stats JSON")
    p.add_argument("--stats", required=True, type=Path)
    p.add_argument("--profile", choices=["paper-small", "paper-large"], default="paper-small")
    p.add_argument("--baseline", type=Path, default=None,
                   help="stats JSON of a baseline run to compare against")
    p.add_argument("--out", type=Path, default=None)
    _add_power_flags(p)
    p.set_defaults(func=_cmd_power)

    p = sub.add_parser("oracle-check", help="beam search vs exhaustive oracle on random instances")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=3, help="max frames per instance")
    p.add_argument("--vocab", type=int, default=2, help="max vocabulary size")
    p.add_argument("--beam", type=int, default=16)
    p.add_argument("--max-emits", type=int, default=3)
    p.add_argument("--mode", choices=["oracle", "never-skip"], default="oracle")
    p.set_defaults(func=_cmd_oracle_check)

    p = sub.add_parser("gen", help="generate models, trace suites, and fixtures")
    gsub = p.add_subparsers(dest="what", required=True)

    g = gsub.add_parser("model", help="random desk-scale preset model")
    g.add_argument("--preset", choices=presets.PRESETS, required=True)
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--quantize", action="store_true")
    g.set_defaults(func=_cmd_gen)

    g = gsub.add_parser("spiky-trace", help="calibrated spiky trace suite + carrier model")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--utterances", type=int, default=100)
    g.add_argument("--frames", type=int, default=120)
    g.add_argument("--target-high-frac", type=float, default=0.5)
    g.add_argument("--joiner", choices=["small", "large"], default="small")
    g.add_argument("--dim", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--no-self-check", action="store_true")
    g.set_defaults(func=_cmd_gen)

    g = gsub.add_parser("posterior-table", help="exact posterior-table model fixture")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--frames", type=int, default=3)
    g.add_argument("--vocab", type=int, default=2)
    g.add_argument("--max-emits", type=int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_gen)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("BLANKSKIP_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, ContractViolation, EmptyInputError, MetricUndefinedError,
            FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except BlankskipError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
