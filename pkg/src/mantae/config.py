"""INI experiment configuration with typed keys and unknown-key rejection.

Every section and key is optional; omitted keys take the defaults below::

    [data]        batch, core_ratio, factor_noise, snr_db, shared_factors, train_fraction
    [model]       alpha, modes, min_latent, tfnn_layout
    [train]       epochs, batch_size ("full" or an integer), lr, eval_every,
                  lr_ma_ntae, lr_tfnn, lr_dae (per-model overrides of lr)
    [experiment]  orders, dims, models, repeats, fractions, alphas, compress_train_fraction,
                  cluster_repeats, clusters, sweep_orders, sweep_dims
"""

import configparser
import copy

from .errors import ConfigError
from .models import MODEL_KINDS


def _int_list(s):
    return [int(v) for v in s.split(",") if v.strip()]


def _float_list(s):
    return [float(v) for v in s.split(",") if v.strip()]


def _str_list(s):
    return [v.strip() for v in s.split(",") if v.strip()]


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _optional(parse):
    def inner(s):
        return None if s.strip().lower() in ("", "none", "auto") else parse(s)
    return inner


def _batch_size(s):
    return None if s.strip().lower() == "full" else int(s)


# section -> key -> (parser, default)
SCHEMA = {
    "data": {
        "batch": (int, 512),
        "core_ratio": (float, 0.25),
        "factor_noise": (float, 0.05),
        "snr_db": (float, 30.0),
        "shared_factors": (_bool, True),
        "train_fraction": (float, 0.8),
    },
    "model": {
        "alpha": (float, 0.5),
        "modes": (_optional(_int_list), None),
        "min_latent": (_optional(int), None),
        "tfnn_layout": (str, "per_mode"),
    },
    "train": {
        "epochs": (int, 1000),
        "batch_size": (_batch_size, 16),
        "lr": (float, 1e-3),
        "eval_every": (int, 1),
        "lr_ma_ntae": (_optional(float), None),
        "lr_tfnn": (_optional(float), None),
        "lr_dae": (_optional(float), None),
    },
    "experiment": {
        "orders": (_int_list, [3]),
        "dims": (_int_list, [20]),
        "models": (_str_list, list(MODEL_KINDS)),
        "repeats": (int, 5),
        "fractions": (_float_list, [0.0, 0.1, 0.2, 0.3]),
        "alphas": (_float_list, [0.5, 0.4, 0.3, 0.2]),
        "compress_train_fraction": (float, 0.5),
        "cluster_repeats": (int, 30),
        "clusters": (_optional(int), None),
        "sweep_orders": (_int_list, [3, 4, 5]),
        "sweep_dims": (_int_list, [8, 12, 16, 20, 24, 32, 48, 64]),
    },
}


def defaults():
    return {sec: {k: copy.deepcopy(d) for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def parse_config(text, source="<config>"):
    """Parse INI text into a nested dict of typed values over the defaults."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__no_defaults__")
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = defaults()
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown key {key!r} in section [{sec}]")
            parse, _ = SCHEMA[sec][key]
            try:
                cfg[sec][key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {sec}.{key}: {exc}") from None
    validate(cfg)
    return cfg


def load_config(path=None):
    if path is None:
        cfg = defaults()
        validate(cfg)
        return cfg
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def validate(cfg):
    exp = cfg["experiment"]
    for m in exp["models"]:
        if m not in MODEL_KINDS:
            raise ConfigError(f"experiment.models: unknown model {m!r}; expected some of {', '.join(MODEL_KINDS)}")
    if exp["repeats"] < 1:
        raise ConfigError("experiment.repeats must be >= 1")
    if exp["cluster_repeats"] < 1:
        raise ConfigError("experiment.cluster_repeats must be >= 1")
    if any(not 0 <= f <= 1 for f in exp["fractions"]):
        raise ConfigError("experiment.fractions must lie in [0, 1]")
    if any(not 0 < a < 1 for a in exp["alphas"] + [cfg["model"]["alpha"]]):
        raise ConfigError("reduction factors alpha must lie in (0, 1)")
    if cfg["model"]["tfnn_layout"] not in ("per_mode", "layerwise"):
        raise ConfigError("model.tfnn_layout must be 'per_mode' or 'layerwise'")
    bs = cfg["train"]["batch_size"]
    if bs is not None and bs < 1:
        raise ConfigError("train.batch_size must be 'full' or >= 1")
    if cfg["train"]["epochs"] < 1:
        raise ConfigError("train.epochs must be >= 1")
    for key in ("lr", "lr_ma_ntae", "lr_tfnn", "lr_dae"):
        v = cfg["train"][key]
        if v is not None and not v > 0:
            raise ConfigError(f"train.{key} must be > 0")
    if cfg["train"]["eval_every"] < 1:
        raise ConfigError("train.eval_every must be >= 1")
    return cfg
