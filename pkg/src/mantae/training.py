"""Adam, the training loop, NMSE evaluation and checkpoints."""

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from . import autodiff as ad
from .errors import ConfigError, DivergenceError, FormatError
from .fileformat import load_checkpoint_arrays, save_checkpoint_arrays
from .metrics import nmse
from .models import model_from_config
from .rng import derive_seed, make_rng


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = None  # None: full training set per step
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    eval_every: int = 1  # full-set metrics every k epochs; the last epoch is always evaluated

    def __post_init__(self):
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_update(param, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step on ``param.value`` from ``param.grad``."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    _kernels.adam(param.value, param.grad, state.m, state.v, beta1, beta2, eps, c2, lr / c1)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = [AdamState(np.zeros_like(p.value), np.zeros_like(p.value)) for p in self.params]

    def step(self):
        for p, s in zip(self.params, self.state):
            adam_update(p, s, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        ad.zero_grad(self.params)

    @property
    def steps(self):
        return self.state[0].t if self.state else 0

    def hyper(self):
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


@dataclass
class History:
    train_loss: list = field(default_factory=list)   # full-set loss, batch-mean squared error
    train_nmse: list = field(default_factory=list)   # reconstruction vs. training inputs
    test_loss: list = field(default_factory=list)
    test_nmse: list = field(default_factory=list)    # reconstruction vs. test reference
    epoch_time: list = field(default_factory=list)
    epochs: list = field(default_factory=list)       # epoch index of each evaluated entry

    def to_dict(self):
        return asdict(self)


def reconstruct(model, x, chunk=512):
    if x.shape[0] <= chunk:
        return model.reconstruct(x)
    return np.concatenate([model.reconstruct(x[i:i + chunk]) for i in range(0, x.shape[0], chunk)])


def _batch_loss(xhat, x):
    d = xhat - x
    return float(np.sum(d * d) / x.shape[0])


def evaluate_nmse(model, ds):
    """NMSE of the reconstruction of ``ds.noisy`` against ``ds.reference``."""
    if len(ds) == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    return nmse(reconstruct(model, ds.noisy), ds.reference)


def train(model, train_set, test_set, config, optimizer=None, log=None, start_epoch=0):
    """Minimize the batch reconstruction loss of ``model`` on ``train_set.noisy``.

    Returns ``(model, history)``.  Deterministic for fixed model and config seeds.
    Resuming with ``start_epoch`` and a restored optimizer continues the same
    shuffle sequence, so a split run matches an uninterrupted one bitwise.
    """
    x_train = train_set.noisy
    n = x_train.shape[0]
    bs = n if config.batch_size is None else min(config.batch_size, n)
    if optimizer is None:
        optimizer = Adam(model.parameters(), config.lr, config.beta1, config.beta2, config.eps)
    history = History()
    last = start_epoch + config.epochs
    for epoch in range(start_epoch, last):
        t0 = time.perf_counter()
        if config.shuffle:
            order = make_rng(derive_seed(config.seed, "epoch", epoch)).permutation(n)
        else:
            order = np.arange(n)
        for mb, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            xb = x_train[np.sort(idx)] if bs == n else x_train[idx]
            tape = ad.Tape()
            x = tape.constant(xb)
            loss = ad.mse_loss(model.forward(tape, x), x)
            if not math.isfinite(float(loss.value)):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, minibatch {mb}", epoch, mb)
            optimizer.zero_grad()
            tape.backward(loss)
            tape.clear()
            optimizer.step()
        elapsed = time.perf_counter() - t0
        history.epoch_time.append(elapsed)
        if (epoch + 1) % config.eval_every and epoch + 1 != last:
            continue

        history.epochs.append(epoch)
        rec = reconstruct(model, x_train)
        history.train_loss.append(_batch_loss(rec, x_train))
        history.train_nmse.append(nmse(rec, x_train))
        if test_set is not None and len(test_set):
            rec_t = reconstruct(model, test_set.noisy)
            history.test_loss.append(_batch_loss(rec_t, test_set.noisy))
            history.test_nmse.append(nmse(rec_t, test_set.reference))
        if not math.isfinite(history.train_loss[-1]):
            raise DivergenceError(f"non-finite training loss after epoch {epoch}", epoch, None)
        if log is not None:
            log(epoch, history)
    return model, history


def save_checkpoint(path, model, optimizer=None, extra=None):
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    meta = {"model": model.config(), "extra": extra or {}}
    if optimizer is not None:
        for p, s in zip(optimizer.params, optimizer.state):
            arrays[f"adam.m/{p.name}"] = s.m
            arrays[f"adam.v/{p.name}"] = s.v
        meta["optimizer"] = dict(optimizer.hyper(), t=optimizer.steps)
    save_checkpoint_arrays(path, arrays, meta)


def load_checkpoint(path):
    """Returns ``(model, optimizer_or_None, extra)``."""
    if not Path(path).exists():
        raise FormatError(f"checkpoint {path} does not exist")
    arrays, meta = load_checkpoint_arrays(path)
    model = model_from_config(meta["model"])
    model.load_state_dict({k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")})
    optimizer = None
    if "optimizer" in meta:
        hyper = meta["optimizer"]
        optimizer = Adam(model.parameters(), hyper["lr"], hyper["beta1"], hyper["beta2"], hyper["eps"])
        for p, s in zip(optimizer.params, optimizer.state):
            s.m = arrays[f"adam.m/{p.name}"].reshape(p.shape)
            s.v = arrays[f"adam.v/{p.name}"].reshape(p.shape)
            s.t = hyper["t"]
    return model, optimizer, meta.get("extra", {})
