"""Command-line front end.

Subcommands: ``gen-data``, ``train``, ``eval``, ``gradcheck``. Exit
codes: 0 success, 1 check failure, 2 config/input error, 3 runtime
numeric failure. Every command is deterministic given its config file;
flags only override paths and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import encoder as encoder_mod
from . import evaluate as evaluate_mod
from . import gradcheck as gradcheck_mod
from . import synth as synth_mod
from . import training as train_mod
from .config import RunConfig, load_run_config
from .errors import ConfigError, DataFormatError, NumericError

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_NUMERIC_ERROR = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokmem",
        description="token-constrained contrastive learning on synthetic identity data")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a dataset file pair")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", help="override paths.dataset")

    tr = sub.add_parser("train", help="train the encoder and write a checkpoint")
    tr.add_argument("--config", required=True)

    ev = sub.add_parser("eval", help="evaluate a checkpoint with retrieval metrics")
    ev.add_argument("--config", required=True)
    ev.add_argument("--checkpoint", help="override paths.checkpoint")
    ev.add_argument("--per-query-csv", help="also write per-query average precision")

    gc = sub.add_parser("gradcheck", help="verify analytic gradients numerically")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--trials", type=int, default=50)
    return parser


def _cmd_gen_data(args) -> int:
    cfg = load_run_config(args.config)
    out = Path(args.out) if args.out else cfg.paths.dataset
    ds = synth_mod.generate(cfg.data)
    synth_mod.save_dataset(ds, out)
    print(f"wrote {ds.num_samples} samples ({cfg.data.num_identities} identities) "
          f"to {out}.json / {out}.f32")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    ds = synth_mod.load_dataset(cfg.paths.dataset)
    try:
        result = train_mod.train(cfg.train, ds)
    except NumericError as exc:
        diag_path = Path(str(cfg.paths.log) + ".diag.json")
        diag_path.parent.mkdir(parents=True, exist_ok=True)
        diag_path.write_text(json.dumps(exc.diagnostics, indent=2, sort_keys=True) + "\n")
        print(f"error: {exc} (diagnostics in {diag_path})", file=sys.stderr)
        return EXIT_NUMERIC_ERROR
    encoder_mod.save_checkpoint(result.params, cfg.paths.checkpoint)
    log_path = cfg.paths.log
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with log_path.open("w") as fh:
        for record in result.log:
            fh.write(json.dumps(record) + "\n")
    if result.log:
        last = result.log[-1]
        print(f"epoch {last['epoch']}: total={_fmt(last['mean_total'])} "
              f"constraint={_fmt(last['mean_constraint'])} "
              f"proto={_fmt(last['mean_proto'])} anchor={_fmt(last['mean_anchor'])} "
              f"C={last['C']} outliers={last['outliers']} lr={last['lr']:g}")
    else:
        print("no epochs run")
    print(f"checkpoint written to {cfg.paths.checkpoint}.json / .f32")
    return EXIT_OK


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    checkpoint = Path(args.checkpoint) if args.checkpoint else cfg.paths.checkpoint
    params = encoder_mod.load_checkpoint(checkpoint)
    _check_checkpoint_dims(cfg, params)
    ds = synth_mod.load_dataset(cfg.paths.dataset)
    features = train_mod.encode_dataset(params, ds)
    query_idx, gallery_idx = synth_mod.split_query_gallery(
        ds, cfg.eval.query_per_identity, cfg.eval.seed)
    result = evaluate_mod.evaluate_retrieval(
        features[query_idx], ds.identities[query_idx],
        features[gallery_idx], ds.identities[gallery_idx], cfg.eval.k_max)
    csv_path = Path(args.per_query_csv) if args.per_query_csv else None
    evaluate_mod.write_metrics(result, cfg.paths.metrics, per_query_csv=csv_path)
    print(f"mAP={result.mean_ap:.4f} rank1={result.cmc[0]:.4f} "
          f"queries={result.num_queries} excluded={result.excluded_queries}")
    return EXIT_OK


def _check_checkpoint_dims(cfg: RunConfig, params: encoder_mod.EncoderParams) -> None:
    pairs = [("feature_dim", params.feature_dim, cfg.train.feature_dim),
             ("patch_input_dim", params.patch_input_dim, cfg.train.patch_input_dim),
             ("part_tokens", params.part_tokens, cfg.train.part_tokens)]
    for name, actual, expected in pairs:
        if actual != expected:
            raise ConfigError(
                f"checkpoint {name} {actual} does not match config {expected}")


def _cmd_gradcheck(args) -> int:
    results = gradcheck_mod.run_gradcheck(seed=args.seed, trials=args.trials)
    print(gradcheck_mod.format_report(results, args.trials))
    failures = [n for n, err in results.items() if err >= gradcheck_mod.TOLERANCE]
    if failures:
        print(f"gradcheck failed for: {', '.join(failures)} (seed {args.seed})",
              file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DataFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
