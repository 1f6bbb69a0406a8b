"""End-to-end separation, evaluation and grid sweeps over seeded scenarios."""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .bss import NmfModel, identity_demixing, project_back, run_bss, truncate_channels
from .config import METHOD_LABELS
from .metrics import REPORT_FIELDS, EvalReport, delta_sdr, permutation_consistency
from .sim import simulate
from .stft import istft, stft
from .subband import SeparationResult, make_subbands, subband_separate

log = logging.getLogger(__name__)

RESULT_FIELDS = REPORT_FIELDS + ("status",)
SUMMARY_FIELDS = (
    "method",
    "mode",
    "theta_w",
    "theta_delta",
    "n",
    "n_failed",
    "delta_sdr_median_db",
    "delta_sdr_q1_db",
    "delta_sdr_q3_db",
    "pc_median",
    "pc_q1",
    "pc_q3",
)
TIMING_FIELDS = ("method", "theta_w", "theta_delta", "mode", "seed", "wall_time_s")


def nmf_rng(seed):
    """RNG for the NMF activations, independent of the scenario streams."""
    return np.random.default_rng([seed, 2])


def separate_spectrogram(
    X,
    method="aux_iva",
    splitting="none",
    theta_w=4,
    theta_delta=2,
    mode="loose",
    n_iter=100,
    k_bases=2,
    seed=0,
    W_init=None,
):
    """Separate a (F, T, N) spectrogram with a vanilla, OC or subband-split method."""
    n_freq, n_frames, n_src = X.shape
    W0 = identity_demixing(n_freq, n_src) if W_init is None else W_init
    aux = NmfModel.initial(n_src, n_freq, n_frames, k_bases, nmf_rng(seed)) if method == "ilrma" else None

    if splitting == "ss":
        return subband_separate(X, method, theta_w, theta_delta, mode, n_iter, W0, aux)

    plan = make_subbands(n_freq, theta_w, theta_delta, mode) if method == "oc_iva" else None
    Y, W, aux, trace = run_bss(X, W0, aux, method, n_iter, plan=plan)
    return SeparationResult(
        Y=Y,
        W=W,
        aux=aux,
        cost_traces=[trace],
        band_order=[0],
        touch_counts=np.full(n_freq, n_iter, dtype=np.int64),
        plan=plan,
        method=method,
    )


def evaluate(references, estimates, observed_ref, stft_cfg, Y_spec=None):
    """Time-domain SI-SDR improvement and STFT-domain permutation consistency."""
    improvement, _ = delta_sdr(references, estimates, observed_ref)
    S = stft(references, stft_cfg)
    Y = stft(estimates, stft_cfg) if Y_spec is None else Y_spec
    pc, q, best = permutation_consistency(S, Y)
    return EvalReport(delta_sdr_db=improvement, pc=pc, best_global_perm=best, per_freq_perm=q)


def _cells(cfg):
    cells = []
    for label in cfg.grid.methods:
        method, splitting = METHOD_LABELS[label]
        if splitting == "none" and method != "oc_iva":
            cells.append((label, None, None, None))
            continue
        for tw, td in cfg.grid.params:
            for mode in cfg.grid.modes:
                cells.append((label, tw, td, mode))
    return cells


def run_trial(cfg, cell, seed):
    """Simulate, separate and evaluate one (cell, seed); returns a result row dict."""
    label, tw, td, mode = cell
    method, splitting = METHOD_LABELS[label]
    n_iter = cfg.iterations_for(splitting, td or 1)
    row = {
        "method": label,
        "theta_w": "" if tw is None else tw,
        "theta_delta": "" if td is None else td,
        "mode": mode or "",
        "seed": seed,
        "inner_iters": n_iter,
        "total_iters": "",
        "delta_sdr_mean_db": "",
        "pc": "",
        "wall_time_s": "",
        "status": "ok",
    }
    try:
        sim = simulate(dataclasses.replace(cfg.scenario, seed=seed), ref_mic=cfg.ref_channel)
        X = truncate_channels(stft(sim.mixture, cfg.stft), cfg.scenario.n_sources)
        t0 = time.perf_counter()
        res = separate_spectrogram(
            X, method, splitting, tw or 1, td or 1, mode or "loose", n_iter, cfg.k_bases, seed
        )
        wall = time.perf_counter() - t0
        Yp = project_back(res.Y, res.W, cfg.ref_channel)
        y = istft(Yp, cfg.stft, sim.mixture.shape[1])
        report = evaluate(sim.images, y, sim.mixture[cfg.ref_channel], cfg.stft, Y_spec=Yp)
    except Exception as exc:  # partial-failure policy: record and continue
        log.exception("trial %s seed %d failed", cell, seed)
        row["status"] = f"error: {type(exc).__name__}: {exc}"
        return row, None
    row["total_iters"] = res.total_iters
    row["delta_sdr_mean_db"] = f"{report.delta_sdr_mean_db:.6f}"
    row["pc"] = f"{report.pc:.6f}"
    return row, wall


def _run_job(args):
    return run_trial(*args)


def summarize(rows):
    """Median and quartiles of ΔSDR and PC per (method, mode, theta_w, theta_delta)."""
    groups = {}
    for r in rows:
        key = (r["method"], r["mode"], r["theta_w"], r["theta_delta"])
        groups.setdefault(key, []).append(r)
    out = []
    for (label, mode, tw, td), members in groups.items():
        ok = [r for r in members if r["status"] == "ok"]
        rec = {"method": label, "mode": mode, "theta_w": tw, "theta_delta": td, "n": len(ok), "n_failed": len(members) - len(ok)}
        for name, col in (("delta_sdr", "delta_sdr_mean_db"), ("pc", "pc")):
            unit = "_db" if name == "delta_sdr" else ""
            if ok:
                q1, med, q3 = np.percentile([float(r[col]) for r in ok], [25, 50, 75])
                rec.update({f"{name}_median{unit}": f"{med:.6f}", f"{name}_q1{unit}": f"{q1:.6f}", f"{name}_q3{unit}": f"{q3:.6f}"})
            else:
                rec.update({f"{name}_median{unit}": "", f"{name}_q1{unit}": "", f"{name}_q3{unit}": ""})
        out.append(rec)
    return out


def summary_table(summary):
    """Wide median-ΔSDR table: one row per (method, mode), one column per (theta_w, theta_delta)."""
    cols = []
    for s in summary:
        if s["theta_w"] != "" and (s["theta_w"], s["theta_delta"]) not in cols:
            cols.append((s["theta_w"], s["theta_delta"]))
    header = ["method", "mode", "vanilla"] + [f"({tw},{td})" for tw, td in cols]
    rows = {}
    for s in summary:
        key = (s["method"], s["mode"])
        line = rows.setdefault(key, {"method": s["method"], "mode": s["mode"]})
        name = "vanilla" if s["theta_w"] == "" else f"({s['theta_w']},{s['theta_delta']})"
        line[name] = s["delta_sdr_median_db"]
    return header, list(rows.values())


def _csv_text(fields, rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n", restval="")
    writer.writeheader()
    for r in rows:
        writer.writerow(r)
    return buf.getvalue()


def run_experiment(cfg, record_wall_time=False):
    """Run every grid cell for every seed.

    Returns a dict of CSV texts: ``results``, ``summary``, ``table`` and
    ``timings``. Wall times only enter ``results`` when
    ``record_wall_time`` is set, so the results file is reproducible
    byte for byte.
    """
    jobs = [(cfg, cell, seed) for cell in _cells(cfg) for seed in cfg.seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(_run_job, jobs))
    else:
        outcomes = [_run_job(j) for j in jobs]

    rows, timings = [], []
    for (row, wall), (_, cell, seed) in zip(outcomes, jobs):
        if record_wall_time and wall is not None:
            row["wall_time_s"] = f"{wall:.3f}"
        rows.append(row)
        timings.append(
            {
                "method": row["method"],
                "theta_w": row["theta_w"],
                "theta_delta": row["theta_delta"],
                "mode": row["mode"],
                "seed": seed,
                "wall_time_s": "" if wall is None else f"{wall:.3f}",
            }
        )
    summary = summarize(rows)
    header, table = summary_table(summary)
    return {
        "results": _csv_text(RESULT_FIELDS, rows),
        "summary": _csv_text(SUMMARY_FIELDS, summary),
        "table": _csv_text(header, table),
        "timings": _csv_text(TIMING_FIELDS, timings),
        "rows": rows,
        "summary_rows": summary,
    }
