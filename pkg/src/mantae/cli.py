"""Command-line entry point: ``mantae <subcommand> [options]``.

Results go to ``--out-dir`` as CSV (one table per file) plus a JSON document
holding the full configuration echo and every run record.  Failures exit
non-zero after printing one JSON line ``{"error": ..., "message": ...}`` to stderr.
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 1


def _write_csv(path, rows):
    rows = list(rows)
    fields = []
    for row in rows:
        fields += [k for k in row if k not in fields]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        writer.writerows(rows)


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=float)
        fh.write("\n")


def _progress(quiet):
    def log(rec):
        if not quiet:
            m = rec.metrics
            where = " ".join(f"{k}={m[k]}" for k in ("order", "dim", "fraction", "alpha", "repeat") if k in m)
            print(f"{rec.experiment} {rec.model} {where} test_nmse={rec.test_nmse:.6g}", file=sys.stderr)
    return log


def _emit(args, name, cfg, records=(), summary=None, extra=None):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if records:
        _write_csv(out / f"{name}_runs.csv", [r.row() for r in records])
    if summary is not None:
        _write_csv(out / f"{name}_summary.csv", summary)
    doc = {"command": name, "seed": args.seed, "config": cfg,
           "runs": [r.to_dict() for r in records], "summary": summary or []}
    if extra:
        doc.update(extra)
    _write_json(out / f"{name}.json", doc)
    return doc


def _load_x(path):
    from .fileformat import load_tensor
    return load_tensor(path)


def cmd_synth_benchmark(args, cfg):
    from . import experiments as ex
    records, summary = ex.synth_benchmark(cfg, args.seed, _progress(args.quiet))
    _emit(args, "synth_benchmark", cfg, records, summary)


def cmd_permutation_study(args, cfg):
    from . import experiments as ex
    records, summary = ex.permutation_study(cfg, args.seed, _progress(args.quiet))
    _emit(args, "permutation_study", cfg, records, summary)


def cmd_param_sweep(args, cfg):
    from . import experiments as ex
    rows = ex.param_sweep(cfg)
    _emit(args, "param_sweep", cfg, summary=rows)


def cmd_compress(args, cfg):
    from . import experiments as ex
    from .fileformat import save_tensor
    if args.alphas:
        cfg["experiment"]["alphas"] = [float(a) for a in args.alphas.split(",")]
        from .config import validate
        validate(cfg)
    x = _load_x(args.tensor)
    records, recon = ex.compress(x, cfg, args.seed, _progress(args.quiet))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for (kind, alpha), xr in recon.items():
        fname = f"recon_{kind}_a{alpha:g}.ntt"
        save_tensor(out / fname, xr)
        files[f"{kind}@{alpha:g}"] = fname
    _emit(args, "compress", cfg, records, ex.summarize(records, ("alpha", "latent_ratio", "effective_ratio")),
          {"reconstructions": files})


def cmd_cluster(args, cfg):
    from . import experiments as ex
    from .errors import InputError
    from .fileformat import load_labels
    if not args.labels:
        raise InputError("cluster needs --labels (one integer per sample)")
    x = _load_x(args.tensor)
    records = ex.cluster(x, load_labels(args.labels), cfg, args.seed, args.min_latent, _progress(args.quiet))
    rows = [dict(model=r.model, **r.metrics) for r in records]
    _emit(args, "cluster", cfg, records, rows)


def cmd_train(args, cfg):
    from . import experiments as ex
    from .datagen import Dataset, train_test_split
    from .rng import derive_seed
    from .training import save_checkpoint
    x = _load_x(args.tensor)
    ds = Dataset(x, None if args.reference is None else _load_x(args.reference))
    tr, te = train_test_split(ds, cfg["data"]["train_fraction"], derive_seed(args.seed, "split"))
    model = ex._build(cfg, args.model, x.shape, derive_seed(args.seed, "model", args.model))
    hist, wall, echo = ex._fit(model, tr, te, cfg, derive_seed(args.seed, "train", args.model))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / args.checkpoint
    save_checkpoint(ckpt, model, extra={"seed": args.seed, "epochs": cfg["train"]["epochs"]})
    rec = ex.RunRecord("train", args.model, args.seed, echo, model.param_count(), model.flop_count(),
                       hist.train_loss, hist.train_nmse[-1], hist.test_nmse[-1], {},
                       sum(hist.epoch_time) / len(hist.epoch_time), wall)
    _emit(args, "train", cfg, [rec], extra={"checkpoint": str(ckpt), "history": hist.to_dict()})


def cmd_eval(args, cfg):
    from . import experiments as ex
    from .fileformat import save_tensor
    from .training import load_checkpoint, reconstruct
    model, _, _ = load_checkpoint(args.checkpoint)
    x = _load_x(args.tensor)
    ref = None if args.reference is None else _load_x(args.reference)
    result = ex.evaluate(model, x, ref)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.write_reconstruction:
        save_tensor(out / "reconstruction.ntt", reconstruct(model, x))
    _emit(args, "eval", cfg, summary=[dict(model=model.kind, **result)], extra={"checkpoint": str(args.checkpoint)})
    print(json.dumps(result))


COMMANDS = {
    "synth-benchmark": (cmd_synth_benchmark, "train all models on synthetic Tucker data, NMSE table"),
    "permutation-study": (cmd_permutation_study, "synthetic benchmark with mode-permuted samples"),
    "param-sweep": (cmd_param_sweep, "parameter and FLOP counts over dimensions and orders"),
    "compress": (cmd_compress, "train per reduction factor on a tensor file, write reconstructions"),
    "cluster": (cmd_cluster, "k-means on learned latents vs. raw features"),
    "train": (cmd_train, "train one model on a tensor file and save a checkpoint"),
    "eval": (cmd_eval, "NMSE of a checkpoint on a tensor file"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default="results")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads (1 keeps runs bitwise reproducible)")
    common.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="mantae", description="Mode-aware non-linear Tucker autoencoder experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name in ("compress", "cluster", "train", "eval"):
            p.add_argument("tensor", help="NTT1 tensor file, samples along the first axis")
        if name == "compress":
            p.add_argument("--alphas", help="comma-separated reduction factors (overrides the config)")
        if name == "cluster":
            p.add_argument("--labels", help="label sidecar: one integer per line")
            p.add_argument("--min-latent", type=int, default=25)
        if name == "train":
            p.add_argument("--model", default="ma-ntae", choices=["ma-ntae", "tfnn", "dae"])
            p.add_argument("--reference", help="clean reference tensor for test NMSE")
            p.add_argument("--checkpoint", default="model.ntck")
        if name == "eval":
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--reference", help="reference tensor (defaults to the input)")
            p.add_argument("--write-reconstruction", action="store_true")
    return parser


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        return _fail("ConfigError", "--threads must be >= 1", EXIT_CONFIG)
    # must be set before numpy loads its BLAS
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(args.threads))

    from .config import load_config
    from .errors import ConfigError, FormatError, InputError, MantaeError

    try:
        cfg = load_config(args.config)
        COMMANDS[args.command][0](args, cfg)
    except ConfigError as exc:
        return _fail("ConfigError", str(exc), EXIT_CONFIG)
    except (InputError, FormatError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_INPUT)
    except FileNotFoundError as exc:
        return _fail("InputError", f"{exc.filename}: {exc.strerror}", EXIT_INPUT)
    except (MantaeError, OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_RUNTIME)
    return 0


if __name__ == "__main__":
    sys.exit(main())
