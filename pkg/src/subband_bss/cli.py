"""Command-line front end: ``synth``, ``separate``, ``evaluate``, ``experiment``.

Exit codes: 0 success, 1 unexpected failure, 2 bad usage or config,
3 missing/unreadable input or unwritable output, 4 numerical failure
during separation, 5 evaluation inputs that do not match.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import _backend
from . import config as cfgmod
from .bss import project_back, truncate_channels
from .config import ConfigError, ExperimentConfig
from .errors import BssError
from .experiment import evaluate, run_experiment, separate_spectrogram
from .metrics import REPORT_FIELDS, dominance_map
from .sim import load_manifest, simulate, write_simulation
from .stft import istft, stft
from .wavio import read_wavs, write_wav

log = logging.getLogger("subband_bss")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_EVAL = 0, 1, 2, 3, 4, 5


class EvaluationError(ValueError):
    pass


def _pair(text):
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected THETA_W,THETA_DELTA, got {text!r}") from None
    return [a, b]


# flag dest -> dotted config key
_OVERRIDES = {
    "method": "method",
    "splitting": "splitting",
    "theta_w": "theta_w",
    "theta_delta": "theta_delta",
    "mode": "mode",
    "inner_iters": "inner_iters",
    "total_iter_budget": "total_iter_budget",
    "seeds": "seeds",
    "k_bases": "k_bases",
    "ref_channel": "ref_channel",
    "output_dir": "output_dir",
    "jobs": "jobs",
    "window_len": "stft.window_len",
    "hop": "stft.hop",
    "n_sources": "scenario.n_sources",
    "n_mics": "scenario.n_mics",
    "sample_rate": "scenario.sample_rate",
    "duration": "scenario.duration",
    "rir_len": "scenario.rir_len",
    "grid_methods": "grid.methods",
    "grid_params": "grid.params",
    "grid_modes": "grid.modes",
}


def _add_config_flags(p):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    g = p.add_argument_group("config overrides")
    g.add_argument("--method", choices=["aux_iva", "ilrma", "oc_iva"])
    g.add_argument("--splitting", choices=["none", "ss"])
    g.add_argument("--theta-w", type=int)
    g.add_argument("--theta-delta", type=int)
    g.add_argument("--mode", choices=["tight", "loose"])
    g.add_argument("--inner-iters", type=int)
    g.add_argument("--total-iter-budget", type=int)
    g.add_argument("--seeds", type=int, nargs="+")
    g.add_argument("--k-bases", type=int)
    g.add_argument("--ref-channel", type=int)
    g.add_argument("--output-dir")
    g.add_argument("--jobs", type=int)
    g.add_argument("--window-len", type=int)
    g.add_argument("--hop", type=int)
    g.add_argument("--n-sources", type=int)
    g.add_argument("--n-mics", type=int)
    g.add_argument("--sample-rate", type=int)
    g.add_argument("--duration", type=float)
    g.add_argument("--rir-len", type=int)
    g.add_argument("--grid-methods", nargs="+")
    g.add_argument("--grid-params", type=_pair, nargs="+", metavar="TW,TD")
    g.add_argument("--grid-modes", nargs="+")


def _config_from_args(args):
    cfg = cfgmod.load(args.config) if args.config else ExperimentConfig()
    overrides = {key: getattr(args, dest) for dest, key in _OVERRIDES.items()}
    return cfgmod.with_overrides(cfg, overrides)


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path} is not writable")


def cmd_synth(cfg, args):
    if args.manifest:
        scenario, manifest = load_manifest(args.manifest)
        out = cfg.output_dir
        _ensure_dir(out)
        write_simulation(simulate(scenario, manifest.get("ref_mic", 0)), out, manifest.get("ref_mic", 0))
        print(out)
        return
    _ensure_dir(cfg.output_dir)
    for seed in cfg.seeds:
        out = os.path.join(cfg.output_dir, f"seed_{seed:04d}")
        scenario = dataclasses.replace(cfg.scenario, seed=seed)
        write_simulation(simulate(scenario, cfg.ref_channel), out, cfg.ref_channel)
        print(out)


def cmd_separate(cfg, args):
    x, fs = read_wavs(args.mixtures)
    n_src = cfg.scenario.n_sources
    X = truncate_channels(stft(x, cfg.stft), n_src)
    seed = cfg.seeds[0]
    n_iter = cfg.effective_inner_iters
    t0 = time.perf_counter()
    res = separate_spectrogram(
        X, cfg.method, cfg.splitting, cfg.theta_w, cfg.theta_delta, cfg.mode, n_iter, cfg.k_bases, seed
    )
    wall = time.perf_counter() - t0
    Yp = project_back(res.Y, res.W, cfg.ref_channel)
    y = istft(Yp, cfg.stft, x.shape[1])

    _ensure_dir(cfg.output_dir)
    outputs = []
    for n in range(n_src):
        path = os.path.join(cfg.output_dir, f"separated_{n}.wav")
        write_wav(path, y[n], fs)
        outputs.append({"path": os.path.basename(path), "sha256": _sha256(path)})
    record = {
        "method": cfg.label,
        "theta_w": cfg.theta_w if cfg.splitting == "ss" or cfg.method == "oc_iva" else None,
        "theta_delta": cfg.theta_delta if cfg.splitting == "ss" or cfg.method == "oc_iva" else None,
        "mode": cfg.mode if cfg.splitting == "ss" or cfg.method == "oc_iva" else None,
        "seed": seed,
        "inner_iters": n_iter,
        "total_iters": res.total_iters,
        "touch_counts": res.touch_counts.tolist(),
        "band_plan": None if res.plan is None else res.plan.to_dict(),
        "band_order": res.band_order,
        "cost_traces": [t.tolist() for t in res.cost_traces],
        "wall_time_s": wall,
        "backend": _backend.BACKEND,
        "inputs": [os.path.abspath(p) for p in args.mixtures],
        "sample_rate": fs,
        "outputs": outputs,
        "config": cfg.to_dict(),
    }
    with open(os.path.join(cfg.output_dir, "run_record.json"), "w") as fh:
        json.dump(record, fh, indent=1)
        fh.write("\n")
    print(os.path.join(cfg.output_dir, "run_record.json"))


def cmd_evaluate(cfg, args):
    est, fs_e = read_wavs(args.separated)
    ref, fs_r = read_wavs(args.references)
    obs, fs_o = read_wavs([args.observed])
    if len({fs_e, fs_r, fs_o}) != 1:
        raise EvaluationError(f"sample rate mismatch: {fs_e}, {fs_r}, {fs_o}")
    if est.shape != ref.shape or obs.shape[1] != ref.shape[1]:
        raise EvaluationError(
            f"length mismatch: separated {est.shape}, references {ref.shape}, observed {obs.shape}"
        )
    report = evaluate(ref, est, obs[0], cfg.stft)

    meta = {}
    if args.run_record:
        with open(args.run_record) as fh:
            meta = json.load(fh)
    row = {k: ("" if meta.get(k) is None else meta.get(k)) for k in REPORT_FIELDS}
    if isinstance(row["wall_time_s"], float):
        row["wall_time_s"] = f"{row['wall_time_s']:.3f}"
    row["delta_sdr_mean_db"] = f"{report.delta_sdr_mean_db:.6f}"
    row["pc"] = f"{report.pc:.6f}"

    out = args.out or os.path.join(cfg.output_dir, "eval.csv")
    _ensure_dir(os.path.dirname(os.path.abspath(out)))
    new = not os.path.exists(out) or os.path.getsize(out) == 0
    with open(out, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        if new:
            writer.writeheader()
        writer.writerow(row)

    dom, silent = dominance_map(stft(ref, cfg.stft))
    perfreq = args.perfreq_out or os.path.splitext(out)[0] + "_perfreq.csv"
    with open(perfreq, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_bin", "q_f", "best_global", "dominant_source", "silent"])
        for f in range(len(dom)):
            w.writerow([f, int(report.per_freq_perm[f]), report.best_global_perm, int(dom[f]), int(silent[f])])
    print(f"delta_sdr_db={np.round(report.delta_sdr_db, 3).tolist()} pc={report.pc:.4f}")


def cmd_experiment(cfg, args):
    _ensure_dir(cfg.output_dir)
    out = run_experiment(cfg, record_wall_time=args.record_wall_time)
    for name in ("results", "summary", "table", "timings"):
        with open(os.path.join(cfg.output_dir, f"{name}.csv"), "w", newline="") as fh:
            fh.write(out[name])
    cfgmod.save(cfg, os.path.join(cfg.output_dir, "config.toml"))
    failed = sum(r["status"] != "ok" for r in out["rows"])
    print(out["table"], end="")
    if failed:
        log.warning("%d of %d trials failed; see results.csv", failed, len(out["rows"]))


def build_parser():
    parser = argparse.ArgumentParser(prog="subband-bss", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate seeded synthetic mixtures")
    _add_config_flags(p)
    p.add_argument("--manifest", help="replay a manifest.json into --output-dir")

    p = sub.add_parser("separate", help="separate mixture WAV file(s)")
    _add_config_flags(p)
    p.add_argument("mixtures", nargs="+", help="one multichannel WAV or one mono WAV per mic")

    p = sub.add_parser("evaluate", help="score separated WAVs against references")
    _add_config_flags(p)
    p.add_argument("--separated", nargs="+", required=True)
    p.add_argument("--references", nargs="+", required=True, help="source images at the reference mic")
    p.add_argument("--observed", required=True, help="reference-mic mixture WAV")
    p.add_argument("--run-record", help="run_record.json from `separate` to fill the row metadata")
    p.add_argument("--out", help="CSV to append to (default OUTPUT_DIR/eval.csv)")
    p.add_argument("--perfreq-out", help="per-frequency permutation / dominance CSV")

    p = sub.add_parser("experiment", help="sweep a method grid over seeds")
    _add_config_flags(p)
    p.add_argument("--record-wall-time", action="store_true", help="also fill wall_time_s in results.csv")
    return parser


COMMANDS = {"synth": cmd_synth, "separate": cmd_separate, "evaluate": cmd_evaluate, "experiment": cmd_experiment}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = _config_from_args(args)
        if args.print_config:
            sys.stdout.write(cfgmod.dumps(cfg))
            return EXIT_OK
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BssError as exc:
        it = getattr(exc, "iteration", None)
        print(f"separation failed{'' if it is None else f' at iteration {it}'}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
