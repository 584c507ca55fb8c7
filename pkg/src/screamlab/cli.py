"""``screamlab`` command-line entry point.

Exit codes: 0 success, 1 analysis error (the error class name is printed),
2 usage error (bad flags, unreadable or missing inputs, invalid configuration).
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import store
from .attack import Profile, ScoreMatrix, build_profile, correlation_attack
from .collect import SimulatedCollector
from .exceptions import ConfigError, ScreamLabError, StorageError
from .experiment import rank_vs_traces, run_attack_sweep
from .keyrank import histogram_rank
from .localization import SweepGrid, SweepReport, pattern_sweep, ttest_sweep
from .scenario import Scenario, load_scenario
from .simulator import make_rng, synth_raw_capture

log = logging.getLogger("screamlab")


class UsageError(Exception):
    pass


def _scenario(args):
    sc = load_scenario(args.config) if getattr(args, "config", None) else Scenario()
    seed = args.seed
    if seed is None and os.environ.get("SCREAMLAB_SEED"):
        try:
            seed = int(os.environ["SCREAMLAB_SEED"])
        except ValueError:
            raise UsageError("SCREAMLAB_SEED must be an integer") from None
    if seed is not None:
        sc = sc.with_(seed=seed)
    if getattr(args, "segmentation", None):
        sc = sc.with_(collection={"segmentation": args.segmentation})
    return sc


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_json(path, obj):
    _write_text(path, json.dumps(obj, indent=1) + "\n")


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _load_traces(args, role):
    if args.traces:
        try:
            return store.read_container(args.traces)
        except StorageError as exc:
            if isinstance(exc.__cause__, FileNotFoundError):
                raise UsageError(str(exc)) from None
            raise
    if args.freq is None:
        raise UsageError("give either --traces or --freq (with --config) to collect traces")
    sc = _scenario(args)
    n = args.n_traces or (sc.collection.n_profile if role == "profiling" else sc.collection.n_attack)
    return SimulatedCollector(sc).trace_set(args.freq, n, role)


# -- subcommands ---------------------------------------------------------------------
def cmd_simulate(args):
    sc = _scenario(args)
    rng = make_rng(sc.seed, 0x51, int(round(args.freq)))
    P = rng.integers(0, 256, (args.n_cps, 16), dtype=np.uint8)
    iq = synth_raw_capture(sc.device, sc.noise, sc.interferers, args.freq, P,
                           cps_enabled=not args.no_cp, rng=rng)
    extra = {"seed": sc.seed, "cps_enabled": not args.no_cp, "n_cps": args.n_cps,
             "period_samples": sc.device.period_samples,
             "plaintexts": [bytes(p).hex() for p in P], "key": sc.device.key.hex()}
    store.write_iq(iq, args.out, args.freq, extra)
    print(f"wrote {args.out}.iq.f32 ({len(iq)} samples)")


def cmd_scan(args):
    try:
        grid = SweepGrid(args.f_start, args.f_stop, args.f_step)
    except ValueError as exc:
        raise UsageError(f"invalid grid: {exc}") from None
    sc = _scenario(args)
    collector = SimulatedCollector(sc, cps_enabled=not args.no_cp)
    if args.method == "ttest":
        rep = ttest_sweep(grid, collector, args.n_traces or sc.collection.n_ttest,
                          n_jobs=args.workers)
    else:
        rep = pattern_sweep(grid, collector, args.n_segs or sc.collection.n_segs,
                            args.n_tests or sc.collection.n_tests, n_jobs=args.workers)
    rep.save(args.out)
    print(f"{args.method}: {int(rep.detected.sum())}/{len(grid)} frequencies detected; "
          f"wrote {args.out}.csv and {args.out}.json")


def cmd_report(args):
    rep = SweepReport.from_dict(_read_json(args.input, "report"))
    print(f"method={rep.method} threshold={rep.threshold} points={len(rep.grid)} "
          f"detected={int(rep.detected.sum())} warnings={len(rep.warnings)}")
    for f, s in zip(rep.frequencies[rep.detected], rep.scores[rep.detected]):
        print(f"{f:.0f}\t{s:.4f}")


def cmd_profile(args):
    ts = _load_traces(args, "profiling")
    if args.save_traces:
        store.write_container(ts, args.save_traces)
    prof = build_profile(ts)
    prof.save(args.out)
    print(f"profile at {prof.frequency:.0f} Hz from {ts.meta.n_traces} traces; wrote {args.out}")


def cmd_attack(args):
    prof = Profile.from_dict(_read_json(args.profile, "profile"))
    if args.freq is None and not args.traces:
        args.freq = prof.frequency
    ts = _load_traces(args, "attack")
    if args.save_traces:
        store.write_container(ts.without_key(), args.save_traces)
    m = correlation_attack(ts, prof)
    d = m.to_dict()
    d["frequency"] = ts.meta.center_frequency
    _write_json(args.out, d)
    print(f"best key guess {bytes(m.best_key()).hex()}; wrote {args.out}")


def cmd_rank(args):
    d = _read_json(args.scores, "score matrix")
    lp = np.asarray(d["logprobs"] if isinstance(d, dict) else d, dtype=np.float64)
    key_hex = args.key or (_scenario(args).device.key.hex() if args.config else None)
    if key_hex is None:
        raise UsageError("--key (or --config) is required to rank")
    try:
        key = np.frombuffer(bytes.fromhex(key_hex), dtype=np.uint8)
    except ValueError:
        raise UsageError(f"--key must be hex, got {key_hex!r}") from None
    res = histogram_rank(lp, key, args.bins)
    text = res.to_json() + "\n"
    if args.out:
        _write_text(args.out, text)
    sys.stdout.write(text)


def cmd_experiment(args):
    sc = _scenario(args)
    if args.f_start is not None:
        grid = SweepGrid(args.f_start, args.f_stop, args.f_step).points()
    elif args.freqs:
        grid = args.freqs
    else:
        grid = sc.sweep.points()
    if args.kind == "attack-sweep":
        res = run_attack_sweep(sc, grid, args.n_profile, args.n_attack, n_jobs=args.workers)
    else:
        counts = args.counts or [sc.collection.n_attack]
        res = rank_vs_traces(sc, grid, counts, args.repeats, args.n_profile, n_jobs=args.workers)
    _write_text(args.out, res.to_csv())
    print(f"wrote {args.out}")


# -- parser --------------------------------------------------------------------------
def build_parser():
    p = argparse.ArgumentParser(prog="screamlab",
                                description="Simulated RF leakage lab: sweeps, attacks, key rank.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="scenario JSON (defaults built in)")
        sp.add_argument("--seed", type=int, help="overrides the scenario seed and SCREAMLAB_SEED")

    workers = os.cpu_count() or 1

    s = sub.add_parser("simulate", help="write a raw IQ capture")
    common(s)
    s.add_argument("--freq", type=float, required=True)
    s.add_argument("--out", required=True, help="output stem (<out>.iq.f32 + <out>.json)")
    s.add_argument("--n-cps", type=int, required=True)
    s.add_argument("--no-cp", action="store_true", help="idle victim (no encryptions)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("scan", help="localize leakage over a frequency grid")
    common(s)
    s.add_argument("--method", choices=("ttest", "pattern"), required=True)
    s.add_argument("--f-start", type=float, required=True)
    s.add_argument("--f-stop", type=float, required=True)
    s.add_argument("--f-step", type=float, required=True)
    s.add_argument("--out", required=True, help="output stem (<out>.csv + <out>.json)")
    s.add_argument("--n-traces", type=int, help="t-test traces per fixed class")
    s.add_argument("--n-tests", type=int)
    s.add_argument("--n-segs", type=int)
    s.add_argument("--no-cp", action="store_true")
    s.add_argument("--segmentation", choices=("pattern", "aligned"))
    s.add_argument("--workers", type=int, default=workers)
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("report", help="summarize a sweep report JSON")
    s.add_argument("input")
    s.set_defaults(func=cmd_report)

    for name, func, role in (("profile", cmd_profile, "profiling"), ("attack", cmd_attack, "attack")):
        s = sub.add_parser(name, help=f"{name} from a trace container or fresh simulated traces")
        common(s)
        s.add_argument("--traces", help=f"{role} trace container stem")
        s.add_argument("--freq", type=float)
        s.add_argument("--n-traces", type=int)
        s.add_argument("--segmentation", choices=("pattern", "aligned"))
        s.add_argument("--save-traces", help="also store the traces as a container")
        s.add_argument("--out", required=True)
        if name == "attack":
            s.add_argument("--profile", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("rank", help="key rank of a score matrix")
    common(s)
    s.add_argument("--scores", required=True, help="JSON with a 'logprobs' matrix")
    s.add_argument("--key", help="correct key, hex")
    s.add_argument("--bins", type=int, default=2048)
    s.add_argument("--out")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("experiment", help="attack sweep or rank-vs-traces curve")
    common(s)
    s.add_argument("--kind", choices=("attack-sweep", "rank-curve"), default="attack-sweep")
    s.add_argument("--freqs", type=float, nargs="+")
    s.add_argument("--f-start", type=float)
    s.add_argument("--f-stop", type=float)
    s.add_argument("--f-step", type=float)
    s.add_argument("--n-profile", type=int)
    s.add_argument("--n-attack", type=int)
    s.add_argument("--counts", type=int, nargs="+")
    s.add_argument("--repeats", type=int, default=20)
    s.add_argument("--segmentation", choices=("pattern", "aligned"))
    s.add_argument("--workers", type=int, default=workers)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "experiment" and args.f_start is not None and (
            args.f_stop is None or args.f_step is None):
        parser.error("--f-start needs --f-stop and --f-step")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"screamlab: error: {exc}", file=sys.stderr)
        return 2
    except ScreamLabError as exc:
        print(f"screamlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"screamlab: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"screamlab: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
