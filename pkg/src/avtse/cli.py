"""Command-line harness: train, eval, degrade, tokenize, ablate, dump-attention."""

import argparse
import csv
import itertools
import os

import numpy as np
import torch

from . import data, degrade as deg
from .config import make_config, parse_config_file, parse_cues, CUE_NAMES
from .fusion import weights_to_csv_rows
from .metrics import run_eval, write_report_csv, CLEAN
from .tokens import extract_frame_feats, tokenize, fit_kmeans, \
    save_codebook, load_codebook
from .train import run_train, load_checkpoint, set_determinism

DEFAULT_PROPORTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)


def _add_config_flags(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--preset", choices=("fast", "full", "toy"))
    p.add_argument("--cues", help="comma list of spk,acoustic,semantic or 'none'")
    p.add_argument("--fusion", choices=("interaction", "concat"))
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--samples", type=int, dest="num_samples")
    p.add_argument("--lr", type=float)
    p.add_argument("--deterministic", action="store_true", default=None)


def _config_from_args(args):
    overrides = {}
    if args.config:
        overrides.update(parse_config_file(args.config))
    preset = args.preset or overrides.pop("preset", "fast")
    for name in ("fusion", "seed", "steps", "num_samples", "lr",
                 "deterministic"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if args.cues is not None:
        overrides["cues"] = parse_cues(args.cues)
    return make_config(preset, **overrides)


def cmd_train(args):
    cfg = _config_from_args(args)
    result = run_train(cfg, args.out)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    print(f"final loss: {result.final_loss:.6f}")
    print(f"train SI-SNRi: {result.train_sisnri_db:.3f} dB")
    return 0


def _eval_samples(cfg, seed):
    specs = data.corpus_specs(cfg.num_samples, seed, cfg.num_speakers,
                              cfg.duration_s, (cfg.snr_low, cfg.snr_high))
    return [data.realize(s) for s in specs]


def cmd_eval(args):
    if not os.path.exists(args.checkpoint):
        raise SystemExit(f"missing checkpoint: {args.checkpoint}")
    model, cfg, _, _ = load_checkpoint(args.checkpoint)
    set_determinism(args.seed, args.deterministic or False)
    samples = _eval_samples(cfg, args.seed)
    os.makedirs(args.out, exist_ok=True)
    kinds = [k.strip() for k in args.degrade.split(",")] if args.degrade else []
    proportions = ([float(p) for p in args.proportions.split(",")]
                   if args.proportions else list(DEFAULT_PROPORTIONS))
    clean_report = run_eval(model, samples, [(CLEAN, 0.0)], seed=args.seed)
    clean_path = os.path.join(args.out, "eval_clean.csv")
    write_report_csv(clean_report, clean_path)
    print(f"{clean_path}: mean SI-SNRi {clean_report.mean():.3f} dB")
    for kind in kinds:
        sweep = [(kind if p > 0 else CLEAN, p) for p in proportions]
        report = run_eval(model, samples, sweep, seed=args.seed)
        path = os.path.join(args.out, f"eval_{kind}.csv")
        write_report_csv(report, path)
        print(f"{path}: mean SI-SNRi {report.mean():.3f} dB")
    return 0


def cmd_degrade(args):
    x = np.load(args.input)
    spec = deg.make_spec(args.degrade, x.shape[-1] if args.degrade == "mf"
                         else x.shape[0], args.proportion, args.seed)
    out = deg.degrade(x, spec, args.seed)
    np.save(args.output, out)
    print(f"wrote {args.output} ({args.degrade}, p={args.proportion})")
    return 0


def cmd_tokenize(args):
    if args.wav:
        wave = data.read_wav(args.wav)
    else:
        wave, _ = data.synth_av_pair(args.seed, args.duration, args.speaker)
    feats = extract_frame_feats(wave, args.kind)
    if args.codebook and os.path.exists(args.codebook):
        codebook = load_codebook(args.codebook)
    else:
        codebook = fit_kmeans(feats.T, args.clusters, seed=args.seed)
        if args.codebook:
            save_codebook(codebook, args.codebook)
    toks = tokenize(feats, codebook)
    line = " ".join(str(int(t)) for t in toks)
    if args.output:
        with open(args.output, "w") as f:
            f.write(line + "\n")
    print(line)
    return 0


def cmd_ablate(args):
    os.makedirs(args.out, exist_ok=True)
    combos = [combo for r in range(len(CUE_NAMES), -1, -1)
              for combo in itertools.combinations(CUE_NAMES, r)]
    runs = [(combo, "interaction") for combo in combos]
    runs.append((CUE_NAMES, "concat"))
    summary_path = os.path.join(args.out, "ablation_summary.csv")
    with open(summary_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["cues", "fusion", "final_loss", "train_sisnri_db"])
        for combo, fusion in runs:
            tag = "+".join(combo) if combo else "none"
            cfg = make_config("toy", cues=combo, fusion=fusion,
                              steps=args.steps, seed=args.seed,
                              num_samples=args.num_samples)
            result = run_train(cfg, os.path.join(args.out,
                                                 f"{tag}_{fusion}"))
            writer.writerow([tag, fusion, f"{result.final_loss:.6f}",
                             f"{result.train_sisnri_db:.3f}"])
            print(f"{tag:32s} {fusion:12s} loss={result.final_loss:.4f} "
                  f"si-snri={result.train_sisnri_db:.2f} dB")
    print(f"summary: {summary_path}")
    return 0


def cmd_dump_attention(args):
    if not os.path.exists(args.checkpoint):
        raise SystemExit(f"missing checkpoint: {args.checkpoint}")
    model, cfg, _, _ = load_checkpoint(args.checkpoint)
    if model.fusion.mode != "interaction":
        raise SystemExit("attention dump requires fusion=interaction")
    specs = data.corpus_specs(1, args.seed, cfg.num_speakers, cfg.duration_s,
                              (cfg.snr_low, cfg.snr_high))
    sample = data.realize(specs[0])
    with torch.no_grad():
        out = model(torch.as_tensor(sample.mixture, dtype=torch.float32),
                    torch.as_tensor(sample.video, dtype=torch.float32))
    indices = [int(h) for h in args.features.split(",")]
    rows = weights_to_csv_rows(out.fusion_weights.numpy(), indices)
    with open(args.output, "w", newline="") as f:
        csv.writer(f).writerows(rows)
    print(f"wrote {args.output} ({len(rows) - 1} frames)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="avtse",
        description="Audio-visual target-speaker extraction harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on the synthetic corpus")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="degradation-sweep evaluation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--degrade", help="comma list from gb,cc,mf,fm")
    p.add_argument("--proportions",
                   help="comma list, default 0,0.25,0.5,0.75,1.0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("degrade", help="corrupt a saved video/feature array")
    p.add_argument("--degrade", required=True, choices=deg.KINDS)
    p.add_argument("--proportion", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", required=True, help=".npy frames or feature")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("tokenize", help="frame features -> discrete tokens")
    p.add_argument("--wav", help="input WAV; synthesized when omitted")
    p.add_argument("--kind", choices=("acoustic", "semantic"),
                   default="acoustic")
    p.add_argument("--codebook", help="codebook JSON to load or create")
    p.add_argument("--clusters", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speaker", type=int, default=0)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--output")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("ablate",
                       help="short training runs over cue combinations")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-samples", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("dump-attention",
                       help="write fusion-weight traces as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", default="0",
                   help="comma list of feature indices")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_dump_attention)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
