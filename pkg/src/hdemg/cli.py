"""Batch command-line interface tying the pipeline together.

Exit codes: 0 success, 1 usage error, 2 data/format error. Every command is
a deterministic function of its inputs, flags and --seed; running a command
twice produces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import container, render
from .decompose import DecompParams, decompose
from .errors import HdemgError
from .gesture import (TrainConfig, cross_validate, crossval_summary, evaluate,
                      split_dataset, train)
from .metrics import (aligned_rate_of_agreement, build_report, clean_units,
                      dedup_units, motor_unit_from_estimate)
from .signals import FilterSpec, apply_filter, preprocess_baseline, preprocess_gesture
from .stats import overall_rms, rms_per_channel, two_sample_ttest, zscore_outliers
from .synth import SynthConfig, synth_gesture_dataset, synthesize

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdemg",
        description="Synthesize, preprocess, decompose and classify HD-EMG recordings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic recording with ground truth")
    p.add_argument("--out", required=True, help="output recording (.hdmg)")
    p.add_argument("--sidecar", help="optional ground-truth sidecar (.json)")
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--units", type=int, default=8)
    p.add_argument("--sample-rate", type=float, default=2048.0)
    p.add_argument("--duration", type=float, default=20.0, help="seconds")
    p.add_argument("--rate-min", type=float, default=8.0, help="lowest unit firing rate (Hz)")
    p.add_argument("--rate-max", type=float, default=15.0, help="highest unit firing rate (Hz)")
    p.add_argument("--isi-cov", type=float, default=15.0, help="ISI CoV target (%%)")
    p.add_argument("--muap-ms", type=float, default=15.0)
    p.add_argument("--spread", type=float, default=4.0, help="spatial spread (channels)")
    p.add_argument("--snr", type=float, default=20.0, help="dB; use 'inf' for noiseless")
    p.add_argument("--amplitude", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("filter", help="apply a preprocessing chain")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--chain", choices=["baseline", "gesture"],
                   help="named chain; omit to build one from --notch/--band")
    p.add_argument("--notch", type=float, action="append", default=[],
                   metavar="HZ", help="notch center, repeatable")
    p.add_argument("--q", type=float, default=30.0, help="notch quality factor")
    p.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"),
                   help="bandpass edges in Hz")
    p.add_argument("--order", type=int, default=4, help="bandpass order")
    p.add_argument("--causal", action="store_true",
                   help="single-pass filtering instead of zero-phase")

    p = sub.add_parser("qc", help="channel quality control and grid comparison")
    p.add_argument("--in", dest="infiles", action="append", required=True,
                   help="recording; pass twice to compare two grids")
    p.add_argument("--out", required=True, help="output report (.json)")
    p.add_argument("--threshold", type=float, default=3.0, help="Z-score cutoff")
    p.add_argument("--variant", choices=["pooled", "welch"], default="pooled")
    p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("decompose", help="blind-source-separate into motor units")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True, help="decomposition report (.json)")
    p.add_argument("--sil", type=float, default=0.85, help="silhouette cutoff")
    p.add_argument("--iters", type=int, default=200, help="number of initializations")
    p.add_argument("--ext", type=int, help="extension factor R (default: ~1000/channels)")
    p.add_argument("--min-dist-ms", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--share", type=float, default=0.3, help="duplicate share threshold")
    p.add_argument("--dedup-tol-ms", type=float, default=0.5)
    p.add_argument("--no-clean", action="store_true",
                   help="skip the CoV/firing-rate cleaning step")

    p = sub.add_parser("metrics", help="clean/dedup a report and score against ground truth")
    p.add_argument("--report", required=True, help="decomposition report (.json)")
    p.add_argument("--out", required=True)
    p.add_argument("--sidecar", help="ground-truth sidecar for agreement scoring")
    p.add_argument("--tol-ms", type=float, default=0.5, help="spike match tolerance")
    p.add_argument("--max-shift-ms", type=float, default=25.0,
                   help="alignment search range for agreement")
    p.add_argument("--share", type=float, default=0.3)
    p.add_argument("--dedup-tol-ms", type=float, default=0.5)

    p = sub.add_parser("gesture-synth", help="generate a labeled gesture window set")
    p.add_argument("--out", required=True, help="output dataset (.hdmg)")
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--windows-per-class", type=int, default=240)
    p.add_argument("--channels", type=int, default=60)
    p.add_argument("--window-ms", type=float, default=250.0)
    p.add_argument("--sample-rate", type=float, default=2000.0)
    p.add_argument("--snr", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)

    def add_train_flags(p):
        p.add_argument("--epochs", type=int, default=20)
        p.add_argument("--batch", type=int, default=32)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--filters", type=int, default=16)
        p.add_argument("--hidden", type=int, default=64)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train the gesture classifier")
    p.add_argument("--data", required=True, help="dataset (.hdmg)")
    p.add_argument("--out", required=True, help="model blob")
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--eval-out", help="optional held-out evaluation report (.json)")
    add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("crossval", help="k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=5)
    add_train_flags(p)

    p = sub.add_parser("report", help="render CSV/SVG views of results")
    p.add_argument("--kind", choices=["signal", "confusion"], required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--csv", help="CSV output path")
    p.add_argument("--svg", help="SVG output path")
    p.add_argument("--channels", help="comma-separated channel list (signal only)")
    return parser


def _cmd_synth(args) -> int:
    config = SynthConfig(num_channels=args.channels, num_units=args.units,
                         sample_rate=args.sample_rate, duration_s=args.duration,
                         firing_rate_range=(args.rate_min, args.rate_max),
                         isi_cov_pct=args.isi_cov, muap_length_ms=args.muap_ms,
                         spatial_spread=args.spread, snr_db=args.snr,
                         base_amplitude=args.amplitude, seed=args.seed)
    gt = synthesize(config)
    container.write_recording(args.out, gt.recording)
    if args.sidecar:
        container.write_json_doc(args.sidecar, container.ground_truth_sidecar_doc(gt))
    print(f"wrote {args.out}: {config.num_units} units, "
          f"{gt.recording.num_samples} samples x {gt.recording.num_channels} channels")
    return 0


def _cmd_filter(args) -> int:
    rec = container.read_recording(args.infile)
    if args.chain == "baseline":
        out = preprocess_baseline(rec)
    elif args.chain == "gesture":
        out = preprocess_gesture(rec)
    else:
        if not args.notch and not args.band:
            print("error: provide --chain or at least one of --notch/--band",
                  file=sys.stderr)
            return 1
        out = rec
        zero_phase = not args.causal
        for f0 in args.notch:
            out = apply_filter(out, FilterSpec.notch(f0, q=args.q, zero_phase=zero_phase))
        if args.band:
            out = apply_filter(out, FilterSpec.bandpass(args.band[0], args.band[1],
                                                        order=args.order,
                                                        zero_phase=zero_phase))
    container.write_recording(args.out, out)
    print(f"wrote {args.out}: {out.meta.get('filter_chain')}")
    return 0


def _cmd_qc(args) -> int:
    if len(args.infiles) > 2:
        print("error: qc takes at most two recordings", file=sys.stderr)
        return 1
    doc = {"schema_version": container.SCHEMA_VERSION, "kind": "qc_report",
           "threshold": args.threshold, "recordings": []}
    retained_rms = []
    for path in args.infiles:
        rec = container.read_recording(path)
        active = np.flatnonzero(rec.channel_mask)
        rms_all = rms_per_channel(rec)
        stats = zscore_outliers(rms_all[active], threshold=args.threshold)
        retained = active[~stats.outlier]
        entry = container.channel_stats_doc(stats)
        entry.update({"path": str(path),
                      "active_channels": [int(c) for c in active],
                      "retained_channels": [int(c) for c in retained],
                      "overall_rms_active": overall_rms(rec, use_mask=True),
                      "overall_rms_retained": float(rms_all[retained].mean())})
        doc["recordings"].append(entry)
        retained_rms.append(rms_all[retained])
        print(f"{path}: {retained.size}/{active.size} channels retained, "
              f"mean RMS {rms_all[retained].mean():.4g}")
    if len(retained_rms) == 2:
        result = two_sample_ttest(retained_rms[0], retained_rms[1], variant=args.variant)
        doc["ttest"] = container.ttest_doc(result)
        doc["significant"] = bool(result.p_value < args.alpha)
        print(f"t = {result.t_statistic:.4g}, p = {result.p_value:.4g} "
              f"({'significant' if doc['significant'] else 'not significant'} "
              f"at alpha={args.alpha})")
    container.write_json_doc(args.out, doc)
    return 0


def _cmd_decompose(args) -> int:
    rec = container.read_recording(args.infile)
    params = DecompParams(extension_factor=args.ext, max_sources=args.iters,
                          sil_cutoff=args.sil, min_peak_distance_ms=args.min_dist_ms,
                          seed=args.seed)
    estimates = decompose(rec, params)
    units = [motor_unit_from_estimate(e, rec.sample_rate) for e in estimates]
    units = dedup_units(units, share_threshold=args.share, tol_ms=args.dedup_tol_ms)
    cleaned = units if args.no_clean else clean_units(units)
    report = build_report(units, cleaned, params)
    container.write_json_doc(args.out, container.decomposition_report_doc(
        report, rec.sample_rate))
    print(f"{len(estimates)} accepted sources, {len(units)} after dedup, "
          f"{len(cleaned)} after cleaning -> {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    units, fs = container.parse_decomposition_report(
        container.read_json_doc(args.report))
    deduped = dedup_units(units, share_threshold=args.share, tol_ms=args.dedup_tol_ms)
    cleaned = clean_units(deduped)
    doc = {"schema_version": container.SCHEMA_VERSION, "kind": "metrics_report",
           "count_input": len(units), "count_after_dedup": len(deduped),
           "count_after_cleaning": len(cleaned),
           "units": [{"spikes": [int(s) for s in u.spikes], "sil": u.sil,
                      "cov_isi": u.cov_isi, "firing_rate": u.firing_rate}
                     for u in cleaned]}
    if args.sidecar:
        trains, _, gt_fs = container.parse_ground_truth_sidecar(
            container.read_json_doc(args.sidecar))
        agreement = []
        for t_idx, truth in enumerate(trains):
            best = {"truth_index": t_idx, "best_unit": None, "roa": 0.0}
            for u_idx, unit in enumerate(cleaned):
                roa = aligned_rate_of_agreement(unit, truth, tol_ms=args.tol_ms,
                                                max_shift_ms=args.max_shift_ms)
                if roa > best["roa"]:
                    best.update({"best_unit": u_idx, "roa": roa})
            agreement.append(best)
        doc["agreement"] = agreement
        doc["mean_roa"] = (float(np.mean([a["roa"] for a in agreement]))
                           if agreement else None)
        print(f"agreement vs {len(trains)} ground-truth units: "
              + ", ".join(f"{a['roa']:.3f}" for a in agreement))
    container.write_json_doc(args.out, doc)
    print(f"{len(cleaned)} units -> {args.out}")
    return 0


def _cmd_gesture_synth(args) -> int:
    ds = synth_gesture_dataset(num_classes=args.classes,
                               windows_per_class=args.windows_per_class,
                               num_channels=args.channels,
                               window_ms=args.window_ms,
                               sample_rate=args.sample_rate,
                               snr_db=args.snr, seed=args.seed)
    container.write_gesture_dataset(args.out, ds, args.sample_rate)
    print(f"wrote {args.out}: {len(ds)} windows of "
          f"{ds.window_samples}x{ds.num_channels}, {ds.num_classes} classes")
    return 0


def _train_config(args, folds: int = 5) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                       batch_size=args.batch, seed=args.seed, folds=folds,
                       num_filters=args.filters, hidden=args.hidden)


def _cmd_train(args) -> int:
    ds, _ = container.read_gesture_dataset(args.data)
    config = _train_config(args)
    train_ds, test_ds = split_dataset(ds, train_frac=args.train_frac, seed=args.seed)
    params = train(train_ds, config)
    container.write_model(args.out, params)
    print(f"trained on {len(train_ds)} windows -> {args.out}")
    if len(test_ds):
        report = evaluate(params, test_ds)
        print(f"held-out accuracy: {report.accuracy:.2f}%")
        if args.eval_out:
            container.write_json_doc(args.eval_out, container.eval_report_doc(
                report, ds.class_names))
    return 0


def _cmd_eval(args) -> int:
    params = container.read_model(args.model)
    ds, _ = container.read_gesture_dataset(args.data)
    report = evaluate(params, ds)
    container.write_json_doc(args.out, container.eval_report_doc(report, ds.class_names))
    print(f"accuracy: {report.accuracy:.2f}% on {len(ds)} windows -> {args.out}")
    return 0


def _cmd_crossval(args) -> int:
    ds, _ = container.read_gesture_dataset(args.data)
    config = _train_config(args, folds=args.folds)
    reports = cross_validate(ds, config)
    mean, std = crossval_summary(reports)
    container.write_json_doc(args.out, container.crossval_doc(
        reports, mean, std, ds.class_names))
    print(f"{args.folds}-fold accuracy: {mean:.2f}% +- {std:.2f}% -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    if not args.csv and not args.svg:
        print("error: provide --csv and/or --svg", file=sys.stderr)
        return 1
    if args.kind == "signal":
        rec = container.read_recording(args.infile)
        channels = None
        if args.channels:
            channels = [int(c) for c in args.channels.split(",")]
        if args.csv:
            render.signal_csv(args.csv, rec, channels)
        if args.svg:
            render.signal_svg(args.svg, rec, channels)
    else:
        doc = container.read_json_doc(args.infile)
        if "confusion_matrix" not in doc:
            print(f"error: {args.infile} has no confusion matrix", file=sys.stderr)
            return 2
        matrix = np.asarray(doc["confusion_matrix"], dtype=np.int64)
        names = doc.get("class_names") or None
        if args.csv:
            render.confusion_csv(args.csv, matrix, names)
        if args.svg:
            render.confusion_svg(args.svg, matrix, names)
    for path in (args.csv, args.svg):
        if path:
            print(f"wrote {path}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "filter": _cmd_filter,
    "qc": _cmd_qc,
    "decompose": _cmd_decompose,
    "metrics": _cmd_metrics,
    "gesture-synth": _cmd_gesture_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "crossval": _cmd_crossval,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage problems; we report 1.
        return 0 if exc.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except HdemgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
