"""Synthetic Tucker data, noise, mode-permutation corruption and splitting."""

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DegenerateInputError, RankError, ShapeError
from .rng import derive_seed, make_rng
from .tensor import mode_n_product


@dataclass(frozen=True)
class SynthConfig:
    order: int = 3
    dim: int = 20
    batch: int = 512
    core_ratio: float = 0.25
    factor_noise: float = 0.05
    snr_db: float = 30.0
    seed: int = 0
    shared_factors: bool = True

    def __post_init__(self):
        if self.order < 2:
            raise ConfigError("order must be >= 2 (batch mode plus at least one data mode)")
        if self.batch < 2:
            raise ConfigError("batch must be >= 2")
        if not 0 < self.core_ratio <= 1:
            raise ConfigError("core_ratio must lie in (0, 1]")
        if self.core_rank < 1:
            raise ConfigError(f"round(core_ratio * dim) = {self.core_rank} < 1")

    @property
    def core_rank(self):
        return int(math.floor(self.core_ratio * self.dim + 0.5))

    @property
    def shape(self):
        return (self.batch,) + (self.dim,) * (self.order - 1)


@dataclass
class Dataset:
    noisy: np.ndarray
    clean: np.ndarray = None
    labels: np.ndarray = None
    permuted: np.ndarray = None  # bool per sample, set by permute_modes_subset
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.noisy.shape[0]
        if self.clean is not None and self.clean.shape != self.noisy.shape:
            raise ShapeError(f"clean shape {self.clean.shape} != noisy shape {self.noisy.shape}")
        if self.labels is not None and len(self.labels) != n:
            raise ShapeError(f"{len(self.labels)} labels for {n} samples")

    def __len__(self):
        return self.noisy.shape[0]

    @property
    def reference(self):
        """Evaluation target: clean data if known, else the inputs themselves."""
        return self.clean if self.clean is not None else self.noisy

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]
        return Dataset(self.noisy[idx], pick(self.clean), pick(self.labels), pick(self.permuted), dict(self.meta))


def orthonormal_factor(rows, cols, seed):
    """``rows x cols`` matrix with orthonormal columns (Gram-Schmidt, two passes)."""
    if cols > rows:
        raise RankError(f"cannot have {cols} orthonormal columns in R^{rows}")
    a = make_rng(seed).standard_normal((rows, cols))
    q = np.zeros_like(a)
    for j in range(cols):
        v = a[:, j].copy()
        for _ in range(2):  # re-orthogonalize
            for i in range(j):
                v -= (q[:, i] @ v) * q[:, i]
        q[:, j] = v / np.linalg.norm(v)
    return q


def add_awgn(x, snr_db, seed):
    """Add white Gaussian noise so that 10 log10(signal power / noise power) = snr_db."""
    x = np.asarray(x, dtype=np.float64)
    energy = float(np.sum(x * x))
    if energy == 0.0:
        raise DegenerateInputError("cannot calibrate noise against a zero signal")
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    sigma2 = energy / (x.size * 10.0 ** (snr_db / 10.0))
    return x + make_rng(seed).standard_normal(x.shape) * math.sqrt(sigma2)


def synth_tucker_batch(cfg):
    """Batch of Tucker tensors ``G_b x_2 U~_2 ... x_N U~_N`` plus AWGN.

    Factors are orthonormal I x K matrices perturbed entrywise by N(0, sigma_U^2),
    shared by all samples unless ``cfg.shared_factors`` is False.
    """
    k, dim = cfg.core_rank, cfg.dim
    core_shape = (cfg.batch,) + (k,) * (cfg.order - 1)
    core = make_rng(derive_seed(cfg.seed, "core")).standard_normal(core_shape)

    def factors(tag):
        out = []
        for n in range(1, cfg.order):
            u = orthonormal_factor(dim, k, derive_seed(cfg.seed, "factor", tag, n))
            noise = make_rng(derive_seed(cfg.seed, "perturb", tag, n)).standard_normal(u.shape)
            out.append(u + cfg.factor_noise * noise)
        return out

    if cfg.shared_factors:
        clean = core
        for n, u in enumerate(factors("shared"), start=1):
            clean = mode_n_product(clean, u, n)
    else:
        clean = np.empty(cfg.shape)
        for b in range(cfg.batch):
            sample = core[b:b + 1]
            for n, u in enumerate(factors(b), start=1):
                sample = mode_n_product(sample, u, n)
            clean[b] = sample[0]
    noisy = add_awgn(clean, cfg.snr_db, derive_seed(cfg.seed, "noise"))
    return Dataset(noisy, clean, meta={"core_shape": list(core_shape)})


def _non_identity_permutations(m):
    ident = tuple(range(m))
    return [p for p in itertools.permutations(range(m)) if p != ident]


def permute_modes_subset(ds, fraction, seed):
    """Permute the data modes of a random ceil(fraction * B) subset of samples.

    Each chosen sample gets a permutation drawn uniformly from the non-identity
    permutations of its data modes; clean and noisy copies move together.
    """
    if not 0 <= fraction <= 1:
        raise ConfigError(f"fraction must lie in [0, 1], got {fraction}")
    dims = ds.noisy.shape[1:]
    if len(set(dims)) != 1:
        raise ShapeError(f"mode permutation needs equal data-mode extents, got {dims}")
    batch = len(ds)
    count = math.ceil(round(fraction * batch, 9))
    permuted = np.zeros(batch, dtype=bool) if ds.permuted is None else ds.permuted.copy()
    if count == 0:
        return replace(ds, permuted=permuted)
    perms = _non_identity_permutations(len(dims))
    if not perms:
        raise ShapeError("a single data mode cannot be permuted")
    rng = make_rng(seed)
    chosen = np.sort(rng.choice(batch, size=count, replace=False))
    noisy = ds.noisy.copy()
    clean = None if ds.clean is None else ds.clean.copy()
    for b in chosen:
        perm = perms[rng.integers(len(perms))]
        noisy[b] = np.transpose(ds.noisy[b], perm)
        if clean is not None:
            clean[b] = np.transpose(ds.clean[b], perm)
        permuted[b] = True
    return Dataset(noisy, clean, ds.labels, permuted, dict(ds.meta))


def split_sizes(batch, train_fraction):
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train fraction must lie in (0, 1), got {train_fraction}")
    n_train = math.ceil(round(train_fraction * batch, 9))
    if n_train < 1 or n_train >= batch:
        raise ConfigError(f"split of {batch} samples at {train_fraction} leaves one side empty")
    return n_train, batch - n_train


def train_test_split(ds, train_fraction, seed):
    """Seeded disjoint split with ceil(fraction * B) training samples.

    Permuted samples (if any) are dealt alternately to train and test so the
    corruption is spread over both sides.
    """
    batch = len(ds)
    n_train, n_test = split_sizes(batch, train_fraction)
    order = make_rng(seed).permutation(batch)
    if ds.permuted is None or not ds.permuted.any():
        return ds.subset(order[:n_train]), ds.subset(order[n_train:])
    flagged = [int(i) for i in order if ds.permuted[i]]
    plain = [int(i) for i in order if not ds.permuted[i]]
    train, test = flagged[0::2], flagged[1::2]
    if len(test) > n_test:
        train, test = train + test[n_test:], test[:n_test]
    if len(train) > n_train:
        train, test = train[:n_train], test + train[n_train:]
    fill = n_train - len(train)
    train = train + plain[:fill]
    test = test + plain[fill:]
    return ds.subset(train), ds.subset(test)
