"""Command-line entry point: synth, train, eval, bench, stream, sweep, plot.

Exit codes: 0 success, 1 usage error, 2 data/model error.  All randomness is
controlled by ``--seed`` flags, so reruns with identical inputs produce
byte-identical outputs.  ``SPIKEDEC_THREADS`` caps the worker thread count
(applied to the numeric backend's thread pools before it loads).
"""

import os
import sys

# honor the thread cap before the numeric backend spins up its pools
_threads = os.environ.get("SPIKEDEC_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse

import numpy as np

from . import bench as bench_mod
from . import data as data_mod
from . import plots
from . import stream as stream_mod
from .errors import SpikedecError
from .model import Model, preset, sweep_config
from .numerics import Rng
from .train import TrainConfig, fit, history_to_csv


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _build_parser():
    p = _Parser(prog="spikedec", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", parents=[], help="generate a synthetic recording + splits")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--channels", type=int, default=96)
    sp.add_argument("--seconds", type=float, default=1200.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--split", default="0.5,0.25,0.25",
                    help="train,val,test fractions (default 0.5,0.25,0.25)")
    sp.add_argument("--csv", action="store_true", help="also write full.csv")

    tp = sub.add_parser("train", help="train a decoder on train.ndr/val.ndr")
    tp.add_argument("--data", required=True, help="directory holding train.ndr and val.ndr")
    tp.add_argument("--track", default="track2", choices=["track1", "track2"])
    tp.add_argument("--recurrence", default="gru", choices=["gru", "lif", "sgru"])
    tp.add_argument("--ckpt", required=True, help="checkpoint path prefix")
    tp.add_argument("--history", help="training history CSV path")
    tp.add_argument("--epochs", type=int, default=50)
    tp.add_argument("--lr", type=float, default=1e-3)
    tp.add_argument("--batch-size", type=int, default=8)
    tp.add_argument("--patience", type=int, default=6)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--quiet", action="store_true")

    ep = sub.add_parser("eval", help="write per-window predictions for a recording")
    ep.add_argument("--ckpt", required=True)
    ep.add_argument("--data", required=True, help="NDR (or CSV) recording")
    ep.add_argument("--out", required=True, help="predictions CSV path")

    bp = sub.add_parser("bench", help="accuracy + resource metrics over a test recording")
    bp.add_argument("--ckpt", required=True)
    bp.add_argument("--data", required=True)
    bp.add_argument("--report", required=True, help="JSON report path")
    bp.add_argument("--csv", help="also append a CSV row here")

    mp = sub.add_parser("stream", help="simulate bin-by-bin streaming inference")
    mp.add_argument("--ckpt", required=True)
    mp.add_argument("--data", required=True)
    mp.add_argument("--bins", type=int, default=1024)
    mp.add_argument("--out", help="emitted velocity CSV path")
    mp.add_argument("--verify", action="store_true",
                    help="compare emissions against the batch forward")

    wp = sub.add_parser("sweep", help="train/bench a keypoint-resolution sweep")
    wp.add_argument("--data", required=True, help="directory holding train/val/test.ndr")
    wp.add_argument("--keypoints", default="1025,513,257,129")
    wp.add_argument("--recurrence", default="gru", choices=["gru", "lif", "sgru"])
    wp.add_argument("--epochs", type=int, default=10)
    wp.add_argument("--seed", type=int, default=0)
    wp.add_argument("--out", required=True, help="sweep CSV path")
    wp.add_argument("--plot", help="optional SVG figure path")
    wp.add_argument("--quiet", action="store_true")

    pp = sub.add_parser("plot", help="render figures from predictions or a recording")
    pp.add_argument("--pred", help="predictions CSV from `eval`")
    pp.add_argument("--data", help="recording for --interp overlays")
    pp.add_argument("--interp", action="store_true",
                    help="render a stride-step interpolation overlay")
    pp.add_argument("--stride", type=int, default=8)
    pp.add_argument("--out", required=True, help="output directory")
    pp.add_argument("--samples", type=int, default=3)
    return p


def _load_recording(path):
    if path.endswith(".csv"):
        return data_mod.load_csv(path)
    return data_mod.load_ndr(path)


def _cmd_synth(args):
    fractions = tuple(float(v) for v in args.split.split(","))
    rec = data_mod.synth_reaching(Rng(args.seed), args.seconds, args.channels)
    os.makedirs(args.out, exist_ok=True)
    data_mod.save_ndr(rec, os.path.join(args.out, "full.ndr"))
    parts = data_mod.split(rec, data_mod.SplitSpec(fractions))
    for name, part in zip(("train", "val", "test"), parts):
        data_mod.save_ndr(part, os.path.join(args.out, f"{name}.ndr"))
    if args.csv:
        data_mod.save_csv(rec, os.path.join(args.out, "full.csv"))
    print(f"wrote full/train/val/test .ndr to {args.out} "
          f"(T={rec.spikes.shape[0]}, C={rec.channels})")
    return 0


def _cmd_train(args):
    train_rec = data_mod.load_ndr(os.path.join(args.data, "train.ndr"))
    val_rec = data_mod.load_ndr(os.path.join(args.data, "val.ndr"))
    cfg = preset(args.track, args.recurrence)
    cfg.seed = args.seed
    model = Model.init(cfg)
    tcfg = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                       seed=args.seed, early_stop_patience=args.patience)
    log = None if args.quiet else lambda s: print(s, flush=True)
    best, history = fit(model, train_rec, val_rec, tcfg, log=log)
    best.save(args.ckpt)
    if args.history:
        with open(args.history, "w", encoding="utf-8") as f:
            f.write(history_to_csv(history))
    best_r2 = max(h[2] for h in history)
    print(f"saved {args.ckpt}.manifest.json/.weights.bin (best val R2 {best_r2:+.4f})")
    return 0


def _predictions(model, rec):
    x, y = data_mod.windows(rec, model.cfg.seq_len)
    preds = np.empty_like(y)
    for lo in range(0, x.shape[0], 8):
        vel, _ = model.forward(x[lo:lo + 8], want_trace=False)
        preds[lo:lo + vel.shape[0]] = vel
    return preds, y


def _cmd_eval(args):
    model = Model.load(args.ckpt)
    rec = _load_recording(args.data)
    preds, targets = _predictions(model, rec)
    n, T, _ = preds.shape
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("window,t,pred_vx,pred_vy,target_vx,target_vy\n")
        for w in range(n):
            for t in range(T):
                f.write(f"{w},{t},{float(preds[w, t, 0])!r},{float(preds[w, t, 1])!r},"
                        f"{float(targets[w, t, 0])!r},{float(targets[w, t, 1])!r}\n")
    r2 = bench_mod.r2_score(preds.reshape(-1, 2), targets.reshape(-1, 2))
    print(f"wrote {n * T} predictions to {args.out} (R2 {r2:+.4f})")
    return 0


def _cmd_bench(args):
    model = Model.load(args.ckpt)
    rec = _load_recording(args.data)
    report = bench_mod.run_bench(model, rec)
    with open(args.report, "w", encoding="utf-8") as f:
        f.write(report.to_json() + "\n")
    if args.csv:
        fresh = not os.path.exists(args.csv)
        with open(args.csv, "a", encoding="utf-8") as f:
            if fresh:
                f.write(report.CSV_HEADER + "\n")
            f.write(report.csv_row() + "\n")
    print(f"footprint {report.footprint_bytes} B | conn sparsity "
          f"{report.connection_sparsity:.3f} | act sparsity {report.activation_sparsity:.3f}")
    print(f"dense {report.dense:.1f}/step | macs {report.macs:.1f}/step | "
          f"acs {report.acs:.1f}/step | R2 {report.r2:+.4f}")
    return 0


def _cmd_stream(args):
    model = Model.load(args.ckpt)
    rec = _load_recording(args.data)
    bins = min(args.bins, rec.spikes.shape[0])
    st = stream_mod.stream_init(model)
    lat, rate = stream_mod.stream_latency(model)
    print(f"receptive field {st.rf} bins, stride {st.stride} bins "
          f"-> latency {lat:g} ms, rate {rate:g} Hz")
    emitted = []
    for t in range(bins):
        seg = stream_mod.stream_push(st, rec.spikes[t].astype(np.float64))
        if seg is not None:
            emitted.append(seg)
    out = np.concatenate(emitted) if emitted else np.zeros((0, 2))
    print(f"pushed {bins} bins, emitted {out.shape[0]} velocity samples "
          f"({st.keypoints_emitted} keypoints)")
    if args.verify:
        if bins < model.cfg.seq_len:
            print("verify: needs at least one full window", file=sys.stderr)
            return 2
        vel, _ = model.forward(rec.spikes[:model.cfg.seq_len].astype(np.float64).T,
                               want_trace=False)
        n = min(out.shape[0], vel.shape[0])
        print(f"max |stream - batch| over first {n} samples: "
              f"{np.abs(out[:n] - vel[:n]).max():.3e}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write("t,vx,vy\n")
            for t in range(out.shape[0]):
                f.write(f"{t},{float(out[t, 0])!r},{float(out[t, 1])!r}\n")
    return 0


def _cmd_sweep(args):
    train_rec = data_mod.load_ndr(os.path.join(args.data, "train.ndr"))
    val_rec = data_mod.load_ndr(os.path.join(args.data, "val.ndr"))
    test_rec = data_mod.load_ndr(os.path.join(args.data, "test.ndr"))
    keypoints = [int(v) for v in args.keypoints.split(",")]
    rows = []
    for kp in keypoints:
        cfg = sweep_config(kp, recurrence=args.recurrence, seed=args.seed)
        model = Model.init(cfg)
        tcfg = TrainConfig(epochs=args.epochs, seed=args.seed)
        best, _ = fit(model, train_rec, val_rec, tcfg)
        report = bench_mod.run_bench(best, test_rec)
        rows.append({"keypoints": kp, "stride": cfg.keypoint_stride,
                     "dense": report.dense, "macs": report.macs,
                     "acs": report.acs, "r2": report.r2,
                     "footprint_bytes": report.footprint_bytes})
        if not args.quiet:
            print(f"keypoints {kp:5d}: dense {report.dense:9.1f}/step "
                  f"macs {report.macs:8.1f} R2 {report.r2:+.4f}", flush=True)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("keypoints,stride,dense,macs,acs,r2,footprint_bytes\n")
        for r in rows:
            f.write(f"{r['keypoints']},{r['stride']},{r['dense']:.6g},{r['macs']:.6g},"
                    f"{r['acs']:.6g},{r['r2']:.6g},{r['footprint_bytes']}\n")
    if args.plot:
        plots.save_sweep_curves(rows, args.plot)
    print(f"wrote sweep table to {args.out}")
    return 0


def _read_predictions(path):
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        want = ["window", "t", "pred_vx", "pred_vy", "target_vx", "target_vy"]
        if header != want:
            raise SpikedecError(f"unexpected predictions header {header}")
        rows = [line.strip().split(",") for line in f if line.strip()]
    windows = {}
    for cells in rows:
        windows.setdefault(int(cells[0]), []).append([float(v) for v in cells[2:]])
    out = {}
    for w, vals in windows.items():
        arr = np.array(vals)
        out[w] = (arr[:, :2], arr[:, 2:])
    return out


def _cmd_plot(args):
    os.makedirs(args.out, exist_ok=True)
    made = []
    if args.pred:
        per_window = _read_predictions(args.pred)
        scored = []
        for w, (pred, target) in sorted(per_window.items()):
            try:
                scored.append((bench_mod.r2_score(pred, target), w))
            except SpikedecError:
                continue
        if not scored:
            raise SpikedecError("no scorable windows in predictions file")
        scored.sort(reverse=True)
        picks = [scored[0]]
        if len(scored) > 2 and args.samples >= 3:
            picks.append(scored[len(scored) // 2])
        if len(scored) > 1:
            picks.append(scored[-1])
        samples = [(f"window {w} (R2 {r2:+.2f})",) + per_window[w] for r2, w in picks]
        fig_path = os.path.join(args.out, "velocity_traces.svg")
        plots.save_velocity_panels(samples, fig_path)
        csv_path = os.path.join(args.out, "velocity_traces.csv")
        with open(csv_path, "w", encoding="utf-8") as f:
            f.write("window,t,pred_vx,pred_vy,target_vx,target_vy\n")
            for _, w in picks:
                pred, target = per_window[w]
                for t in range(pred.shape[0]):
                    f.write(f"{w},{t},{float(pred[t, 0])!r},{float(pred[t, 1])!r},"
                            f"{float(target[t, 0])!r},{float(target[t, 1])!r}\n")
        made += [fig_path, csv_path]
    if args.interp:
        if not args.data:
            raise SpikedecError("--interp needs --data")
        rec = _load_recording(args.data)
        v = rec.velocities
        T = (v.shape[0] // args.stride) * args.stride
        v = v[:T]
        kp = v[::args.stride]
        from .layers import lerp_upsample
        recon = np.empty_like(v)
        recon[:T - args.stride] = lerp_upsample(kp, args.stride)
        recon[T - args.stride:] = kp[-1]
        r2 = data_mod.interp_oracle_r2(v, args.stride)
        fig_path = os.path.join(args.out, f"interp_overlay_s{args.stride}.svg")
        plots.save_interp_overlay(v, recon, args.stride, fig_path)
        csv_path = os.path.join(args.out, f"interp_overlay_s{args.stride}.csv")
        with open(csv_path, "w", encoding="utf-8") as f:
            f.write("t,vx,vy,recon_vx,recon_vy\n")
            for t in range(min(T, 2048)):
                f.write(f"{t},{float(v[t, 0])!r},{float(v[t, 1])!r},{float(recon[t, 0])!r},{float(recon[t, 1])!r}\n")
        print(f"interpolation R2 at stride {args.stride}: {r2:.4f}")
        made += [fig_path, csv_path]
    if not made:
        raise SpikedecError("plot: nothing to do (pass --pred and/or --interp)")
    print("wrote " + ", ".join(made))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "stream": _cmd_stream,
    "sweep": _cmd_sweep,
    "plot": _cmd_plot,
}


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (SpikedecError, OSError, ValueError) as e:
        print(f"spikedec {args.command}: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
