"""Command-line surface: gen-data, train, eval, adapt, bench.

Reports are line-delimited JSON with a schema version; every command is
deterministic under a fixed seed. Exit code 0 on success; failures emit a
machine-readable error record on stderr and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .adapt import AdaptConfig, adapt_session
from .bench import flops_report, instrumented_macs, latency_stats
from .config import RunConfig, load_run_config, save_run_config
from .model import DecoderModel, load_checkpoint, save_checkpoint
from .ngram import train_lm, save_lm, load_lm
from .rng import stream
from .synth import generate, save_dataset, load_dataset, split_days, default_corpus
from .train import TrainConfig, train, evaluate, preprocess_bundle

SCHEMA_VERSION = 1


def _emit(fh, record):
    record = {"schema": SCHEMA_VERSION, **record}
    fh.write(json.dumps(record, sort_keys=True) + "\n")


def _load_config(args):
    run = load_run_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        run.seed = args.seed
        run.train = replace(run.train, seed=args.seed)
        run.synth = replace(run.synth, seed=args.seed)
    return run


def cmd_gen_data(args):
    run = _load_config(args)
    cfg = run.synth
    if not cfg.corpus:
        cfg = replace(cfg, corpus=default_corpus())
    bundle = generate(cfg)
    save_dataset(bundle, args.out)
    lm = train_lm(cfg.corpus, order=args.lm_order)
    save_lm(lm, args.out + ".lm")
    print(json.dumps({"trials": len(bundle.trials), "sessions": cfg.sessions,
                      "dataset": args.out, "lm": args.out + ".lm"}))
    return 0


def cmd_train(args):
    run = _load_config(args)
    bundle = load_dataset(args.dataset)
    model = DecoderModel(run.model, rng=stream(run.seed, "init"))
    with open(args.out + ".log.ndjson", "w", encoding="utf-8") as log:
        def progress(rec):
            _emit(log, rec)
        logs, best = train(model, bundle, run.train, run.augment,
                           progress=progress)
    model.load_state(best["state"])
    blob = save_checkpoint(model, epoch=best["epoch"],
                           rng_state={"seed": run.seed})
    with open(args.out, "wb") as f:
        f.write(blob)
    print(json.dumps({"best_epoch": best["epoch"],
                      "best_val_per": best["val_per"], "checkpoint": args.out}))
    return 0


def cmd_eval(args):
    run = _load_config(args)
    bundle = load_dataset(args.dataset)
    with open(args.checkpoint, "rb") as f:
        model, _ = load_checkpoint(f.read())
    lm = load_lm(args.lm)
    sessions = set(args.sessions) if args.sessions else None
    trials = bundle.split_trials(args.split, sessions=sessions)
    summary, records, _, _ = evaluate(model, bundle, trials, run.decode, lm,
                                      gauss_width=run.augment.gauss_width)
    with open(args.out, "w", encoding="utf-8") as f:
        for r in records:
            _emit(f, r)
        _emit(f, {"summary": summary})
    print(json.dumps(summary))
    return 0


def cmd_adapt(args):
    run = _load_config(args)
    bundle = load_dataset(args.dataset)
    with open(args.checkpoint, "rb") as f:
        blob = f.read()
    lm = load_lm(args.lm)
    _, held = split_days(bundle, args.train_days, args.heldout_days)
    feats = preprocess_bundle(bundle)
    acfg = AdaptConfig(n_augment=run.adapt_n_augment,
                       learning_rate=run.adapt_learning_rate,
                       trainable_group=run.adapt_trainable_group,
                       augment=run.augment, decode=run.decode, seed=run.seed)

    def day_wer(records, day_trials):
        from .metrics import corpus_error_rate
        ref = {t.trial_id: t.text.split() for t in day_trials}
        pairs = [(ref[r["trial_id"]], r["text"].split()) for r in records]
        return corpus_error_rate(pairs).rate

    rows = []
    # arm 1: frozen model
    model, _ = load_checkpoint(blob)
    for day, trials in held.items():
        summary, _, _, _ = evaluate(model, bundle, trials, run.decode, lm,
                                    gauss_width=run.augment.gauss_width,
                                    feats=feats)
        rows.append({"day": day, "arm": "no_adapt", "wer": summary["wer"]})
    # arm 2: DietCORP, continuous across days
    model, _ = load_checkpoint(blob)
    opt = None
    for day, trials in held.items():
        reports, opt = adapt_session(model, bundle, trials, lm, acfg,
                                     optimizer=opt, feats=feats)
        rows.append({"day": day, "arm": "dietcorp",
                     "wer": day_wer(reports, trials),
                     "skipped": sum(r["skipped"] for r in reports)})
    with open(args.out, "w", encoding="utf-8") as f:
        for r in rows:
            _emit(f, r)
    with open(args.out + ".ckpt", "wb") as f:
        f.write(save_checkpoint(model))
    print(json.dumps(rows))
    return 0


def cmd_bench(args):
    run = _load_config(args)
    if args.checkpoint:
        with open(args.checkpoint, "rb") as f:
            model, _ = load_checkpoint(f.read())
    else:
        model = DecoderModel(run.model, rng=stream(run.seed, "init"))
    rep = flops_report(model.config, bin_ms=run.synth.bin_ms)
    inst = instrumented_macs(model, rep["n_patches"])
    lat = latency_stats(model, n_chunks=args.chunks)
    out = {"parameters": model.n_parameters(),
           "analytic_macs_total": sum(rep["macs"].values()),
           "instrumented_macs": inst, "flops": rep, "latency": lat}
    with open(args.out, "w", encoding="utf-8") as f:
        _emit(f, out)
    print(json.dumps({"parameters": out["parameters"],
                      "mflops": rep["flops_per_second"]["total"] / 1e6,
                      "latency_ms": lat["mean_s"] * 1e3}))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="streamdec")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic dataset + LM")
    common(p)
    p.add_argument("--lm-order", type=int, default=3)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a decoder")
    common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--sessions", type=int, nargs="*", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("adapt", help="held-out-day adaptation experiment")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--train-days", type=int, required=True)
    p.add_argument("--heldout-days", type=int, required=True)
    p.set_defaults(fn=cmd_adapt)

    p = sub.add_parser("bench", help="FLOPs / parameter / latency report")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--chunks", type=int, default=1000)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("write-config", help="write the default config file")
    common(p)
    p.set_defaults(fn=lambda a: (save_run_config(_load_config(a), a.out), 0)[1])
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:  # noqa: BLE001 - CLI boundary
        sys.stderr.write(json.dumps(
            {"error": type(e).__name__, "message": str(e)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
