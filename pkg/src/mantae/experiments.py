"""Experiment protocols behind the CLI: synthetic benchmark, permutation study,
parameter sweep, compression and clustering.

Every function is a pure function of ``(cfg, seed)`` apart from wall-clock
fields.  Per-repeat randomness comes from ``derive_seed(seed, "repeat", order,
dim, r)`` and named sub-streams below it, so a permutation run at fraction 0
replays the synthetic benchmark exactly.
"""

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .datagen import Dataset, SynthConfig, permute_modes_subset, synth_tucker_batch, train_test_split
from .errors import ConfigError, InputError
from .metrics import cluster_scores, kmeans
from .models import ModePlan, build_model, compression_ratio, dae_widths, model_counts
from .rng import derive_seed
from .training import TrainConfig, evaluate_nmse, reconstruct, train

# wall-clock fields; excluded when comparing reruns
TIMING_FIELDS = ("time_per_epoch", "wall_time")


@dataclass
class RunRecord:
    experiment: str
    model: str
    seed: int
    config: dict
    params: int = 0
    flops: int = 0
    epoch_losses: list = field(default_factory=list)
    train_nmse: float = float("nan")
    test_nmse: float = float("nan")
    metrics: dict = field(default_factory=dict)
    time_per_epoch: float = 0.0
    wall_time: float = 0.0

    def to_dict(self):
        return asdict(self)

    def comparable(self):
        d = self.to_dict()
        for k in TIMING_FIELDS:
            d.pop(k)
        return d

    def row(self):
        """Flat CSV row: scalar fields plus every metric."""
        out = {"experiment": self.experiment, "model": self.model, "seed": self.seed}
        out.update(self.metrics)
        out.update(params=self.params, flops=self.flops, train_nmse=self.train_nmse,
                   test_nmse=self.test_nmse, final_loss=self.epoch_losses[-1] if self.epoch_losses else "",
                   time_per_epoch=self.time_per_epoch)
        return out


def model_lr(cfg, kind):
    """Learning rate for ``kind``: its ``lr_<kind>`` override, else the shared ``lr``."""
    override = cfg["train"].get("lr_" + kind.replace("-", "_"))
    return cfg["train"]["lr"] if override is None else override


def train_config(cfg, seed, kind=None):
    t = cfg["train"]
    lr = t["lr"] if kind is None else model_lr(cfg, kind)
    return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"], lr=lr,
                       eval_every=t["eval_every"], seed=seed)


def _model_kwargs(cfg, kind):
    return {"layout": cfg["model"]["tfnn_layout"]} if kind == "tfnn" else {}


def _build(cfg, kind, shape, seed, alpha=None, min_latent=None):
    alpha = cfg["model"]["alpha"] if alpha is None else alpha
    return build_model(kind, shape, alpha, seed=seed, modes=cfg["model"]["modes"],
                       min_latent=min_latent, **_model_kwargs(cfg, kind))


def _fit(model, tr, te, cfg, seed, log=None):
    """Train and return ``(history, wall seconds, run config echo)``."""
    tcfg = train_config(cfg, seed, model.kind)
    t0 = time.perf_counter()
    _, hist = train(model, tr, te, tcfg, log=log)
    wall = time.perf_counter() - t0
    return hist, wall, {"model": model.config(), "train": asdict(tcfg)}


def repeat_seed(seed, order, dim, r):
    return derive_seed(seed, "repeat", order, dim, r)


def synthetic_split(cfg, seed, order, dim, r, fraction=0.0):
    d = cfg["data"]
    rs = repeat_seed(seed, order, dim, r)
    scfg = SynthConfig(order=order, dim=dim, batch=d["batch"], core_ratio=d["core_ratio"],
                       factor_noise=d["factor_noise"], snr_db=d["snr_db"],
                       seed=derive_seed(rs, "data"), shared_factors=d["shared_factors"])
    ds = synth_tucker_batch(scfg)
    if fraction:
        ds = permute_modes_subset(ds, fraction, derive_seed(rs, "permute"))
    tr, te = train_test_split(ds, d["train_fraction"], derive_seed(rs, "split"))
    return tr, te, scfg


def run_synthetic(cfg, seed, order, dim, kind, r, fraction=0.0, experiment="synth-benchmark", log=None):
    tr, te, scfg = synthetic_split(cfg, seed, order, dim, r, fraction)
    rs = repeat_seed(seed, order, dim, r)
    model = _build(cfg, kind, scfg.shape, derive_seed(rs, "model", kind))
    hist, wall, echo = _fit(model, tr, te, cfg, derive_seed(rs, "train", kind), log)
    echo.update(data=asdict(scfg), train_fraction=cfg["data"]["train_fraction"])
    metrics = {"order": order, "dim": dim, "repeat": r}
    if experiment == "permutation-study":
        echo["permuted_fraction"] = fraction
        echo["permute_seed"] = derive_seed(rs, "permute")
        metrics["fraction"] = fraction
    return RunRecord(experiment, kind, seed, echo, model.param_count(), model.flop_count(),
                     hist.train_loss, hist.train_nmse[-1], hist.test_nmse[-1], metrics,
                     float(np.mean(hist.epoch_time)), wall)


def summarize(records, keys):
    """Mean and population std of train/test NMSE grouped by ``keys`` (model always included)."""
    groups = {}
    for rec in records:
        gk = tuple(rec.metrics.get(k) for k in keys) + (rec.model,)
        groups.setdefault(gk, []).append(rec)
    rows = []
    for gk, recs in groups.items():
        test = np.array([r.test_nmse for r in recs])
        trn = np.array([r.train_nmse for r in recs])
        row = dict(zip(keys, gk[:-1]))
        row.update(model=gk[-1], n=len(recs), test_nmse_mean=float(test.mean()), test_nmse_std=float(test.std()),
                   train_nmse_mean=float(trn.mean()), train_nmse_std=float(trn.std()),
                   params=recs[0].params, time_per_epoch_mean=float(np.mean([r.time_per_epoch for r in recs])))
        rows.append(row)
    return rows


def synth_benchmark(cfg, seed, log=None):
    exp = cfg["experiment"]
    records = []
    for order in exp["orders"]:
        for dim in exp["dims"]:
            for r in range(exp["repeats"]):
                for kind in exp["models"]:
                    rec = run_synthetic(cfg, seed, order, dim, kind, r)
                    records.append(rec)
                    if log:
                        log(rec)
    return records, summarize(records, ("order", "dim"))


def permutation_study(cfg, seed, log=None):
    exp = cfg["experiment"]
    records = []
    for order in exp["orders"]:
        for dim in exp["dims"]:
            for frac in exp["fractions"]:
                for r in range(exp["repeats"]):
                    for kind in exp["models"]:
                        rec = run_synthetic(cfg, seed, order, dim, kind, r, frac, "permutation-study")
                        records.append(rec)
                        if log:
                            log(rec)
    return records, summarize(records, ("order", "dim", "fraction"))


def param_sweep(cfg, batch=1):
    """Parameter and FLOP counts per model over ``sweep_orders x sweep_dims``, no training."""
    exp = cfg["experiment"]
    alpha = cfg["model"]["alpha"]
    rows = []
    for order in exp["sweep_orders"]:
        for dim in exp["sweep_dims"]:
            shape = (batch,) + (dim,) * (order - 1)
            counts = {k: model_counts(k, shape, alpha, **_model_kwargs(cfg, k)) for k in exp["models"]}
            base = counts.get("ma-ntae", (None,))[0]
            for kind, (params, flops) in counts.items():
                rows.append({"order": order, "dim": dim, "model": kind, "alpha": alpha, "params": params,
                             "flops": flops, "params_vs_ma_ntae": params / base if base else ""})
    return rows


def _latent_ratio(kind, shape, alpha, cfg, min_latent=None):
    if kind == "dae":
        w = dae_widths(shape, alpha)
        return w[0] / w[2]
    plan = ModePlan.from_alpha(shape, alpha, modes=cfg["model"]["modes"], min_latent=min_latent)
    return compression_ratio(shape, plan)


def _real_split(x, train_fraction, seed, labels=None):
    ds = Dataset(np.asarray(x, dtype=np.float64), labels=labels)
    return ds, train_test_split(ds, train_fraction, derive_seed(seed, "split"))


def compress(x, cfg, seed, log=None):
    """Train every configured model at every alpha; returns (records, reconstructions).

    ``reconstructions`` maps ``(model, alpha)`` to the reconstruction of all of ``x``.
    """
    exp = cfg["experiment"]
    ds, (tr, te) = _real_split(x, exp["compress_train_fraction"], seed)
    records, recon = [], {}
    for alpha in exp["alphas"]:
        for kind in exp["models"]:
            model = _build(cfg, kind, ds.noisy.shape, derive_seed(seed, "model", kind, alpha), alpha)
            hist, wall, echo = _fit(model, tr, te, cfg, derive_seed(seed, "train", kind, alpha))
            params = model.param_count()
            ratio = _latent_ratio(kind, ds.noisy.shape, alpha, cfg)
            stored = ds.noisy.size / ratio + params
            metrics = {"alpha": alpha, "latent_ratio": ratio, "param_overhead": params / ds.noisy.size,
                       "effective_ratio": ds.noisy.size / stored}
            rec = RunRecord("compress", kind, seed, echo, params, model.flop_count(), hist.train_loss,
                            hist.train_nmse[-1], hist.test_nmse[-1], metrics,
                            float(np.mean(hist.epoch_time)), wall)
            records.append(rec)
            recon[(kind, alpha)] = reconstruct(model, ds.noisy)
            if log:
                log(rec)
    return records, recon


def _cluster_repeats(features, labels, k, repeats, seed):
    feats = np.ascontiguousarray(features.reshape(features.shape[0], -1))
    scores = [cluster_scores(kmeans(feats, k, seed=derive_seed(seed, "kmeans", r)).assignment, labels)
              for r in range(repeats)]
    out = {}
    for key in scores[0]:
        vals = np.array([s[key] for s in scores])
        out[key] = float(vals.mean())
        out[key + "_std"] = float(vals.std())
    return out


def cluster(x, labels, cfg, seed, min_latent=25, log=None):
    """Train on the split, encode every sample, then k-means on latents vs. raw features."""
    exp = cfg["experiment"]
    if labels is None:
        raise InputError("clustering needs a label sidecar")
    labels = np.asarray(labels)
    if len(labels) != x.shape[0]:
        raise InputError(f"{len(labels)} labels for {x.shape[0]} samples")
    k = exp["clusters"] or len(np.unique(labels))
    if k > x.shape[0]:
        raise ConfigError(f"{k} clusters for {x.shape[0]} samples")
    ds, (tr, te) = _real_split(x, cfg["data"]["train_fraction"], seed, labels)
    reps = exp["cluster_repeats"]
    base = _cluster_repeats(ds.noisy, labels, k, reps, derive_seed(seed, "baseline"))
    base.update(features=int(math.prod(ds.noisy.shape[1:])), clusters=k)
    records = [RunRecord("cluster", "all-features", seed, {}, metrics=base)]
    if log:
        log(records[0])
    for kind in exp["models"]:
        ml = None if kind == "dae" else min_latent
        model = _build(cfg, kind, ds.noisy.shape, derive_seed(seed, "model", kind), min_latent=ml)
        hist, wall, echo = _fit(model, tr, te, cfg, derive_seed(seed, "train", kind))
        latent = model.encode(ds.noisy)
        m = _cluster_repeats(latent, labels, k, reps, derive_seed(seed, "latent", kind))
        m.update(features=int(math.prod(latent.shape[1:])), clusters=k)
        rec = RunRecord("cluster", kind, seed, echo, model.param_count(), model.flop_count(), hist.train_loss,
                        hist.train_nmse[-1], hist.test_nmse[-1], m, float(np.mean(hist.epoch_time)), wall)
        records.append(rec)
        if log:
            log(rec)
    return records


def evaluate(model, x, reference=None):
    ds = Dataset(np.asarray(x, dtype=np.float64), None if reference is None else np.asarray(reference))
    return {"nmse": evaluate_nmse(model, ds)}
