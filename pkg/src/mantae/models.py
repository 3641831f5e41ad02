"""Tensor autoencoders: MA-NTAE and the DAE / TFNN baselines.

Mode 0 is always the batch (sample) mode and is never encoded.  All models
share one interface used by the training loop:

* ``parameters()`` - list of :class:`~mantae.autodiff.Parameter`
* ``forward(tape, x_node)`` - reconstruction node
* ``encode_nodes(tape, x_node)`` - latent node (plus model-specific cache)
* ``reconstruct(X)`` / ``encode(X)`` - plain numpy convenience wrappers
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import PlanError, SizeError, UsageError
from .rng import derive_seed, make_rng


def reduced_dim(extent, factor):
    """max(1, factor * extent rounded half-up)."""
    return max(1, int(math.floor(factor * extent + 0.5)))


@dataclass(frozen=True)
class ModePlan:
    """Ordered target modes with per-mode input/hidden/latent widths."""

    modes: tuple
    in_dims: tuple
    hidden: tuple
    latent: tuple
    alpha: float = None

    def __post_init__(self):
        n = len(self.modes)
        if not (len(self.in_dims) == len(self.hidden) == len(self.latent) == n):
            raise PlanError("plan fields must have one entry per target mode")
        if len(set(self.modes)) != n:
            raise PlanError(f"target modes must be distinct: {self.modes}")
        for m, i, h, k in zip(self.modes, self.in_dims, self.hidden, self.latent):
            if m < 1:
                raise PlanError(f"mode {m} is the batch mode or invalid; target modes start at 1")
            if h < 1:
                raise PlanError(f"hidden width must be >= 1 (mode {m})")
            if not 1 <= k < i:
                raise PlanError(f"latent width {k} must satisfy 1 <= K < I={i} (mode {m})")

    @classmethod
    def from_alpha(cls, input_shape, alpha, modes=None, min_latent=None):
        """Default widths H = round(alpha I), K = round(alpha^2 I).

        ``modes`` defaults to every non-batch mode in order.  With
        ``min_latent`` the smallest latent widths are grown one at a time
        (earliest mode first on ties) until the latent core per sample has
        at least that many entries.
        """
        input_shape = tuple(input_shape)
        if modes is None:
            modes = tuple(range(1, len(input_shape)))
        modes = tuple(int(m) for m in modes)
        for m in modes:
            if not 1 <= m < len(input_shape):
                raise PlanError(f"mode {m} out of range for input shape {input_shape}")
        in_dims = tuple(input_shape[m] for m in modes)
        hidden = [reduced_dim(i, alpha) for i in in_dims]
        latent = [reduced_dim(i, alpha * alpha) for i in in_dims]
        if min_latent is not None:
            rest = math.prod(input_shape[m] for m in range(1, len(input_shape)) if m not in modes)
            while rest * math.prod(latent) < min_latent:
                growable = [j for j in range(len(latent)) if latent[j] + 1 < in_dims[j]]
                if not growable:
                    break
                j = min(growable, key=lambda q: (latent[q], q))
                latent[j] += 1
                hidden[j] = max(hidden[j], latent[j])
        return cls(modes, in_dims, tuple(hidden), tuple(latent), alpha)

    def validate(self, input_shape):
        input_shape = tuple(input_shape)
        for m, i in zip(self.modes, self.in_dims):
            if m >= len(input_shape):
                raise PlanError(f"mode {m} out of range for input shape {input_shape}")
            if input_shape[m] != i:
                raise PlanError(f"plan expects extent {i} at mode {m}, input has {input_shape[m]}")

    def to_dict(self):
        return {"modes": list(self.modes), "in_dims": list(self.in_dims),
                "hidden": list(self.hidden), "latent": list(self.latent), "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["modes"]), tuple(d["in_dims"]), tuple(d["hidden"]),
                   tuple(d["latent"]), d.get("alpha"))


def stage_shapes(input_shape, plan):
    """Shapes Z_0 .. Z_L of the encoder chain; the last one is the latent core."""
    plan.validate(input_shape)
    shapes = [tuple(input_shape)]
    cur = list(input_shape)
    for m, k in zip(plan.modes, plan.latent):
        cur[m] = k
        shapes.append(tuple(cur))
    return shapes


def compression_ratio(input_shape, plan):
    """Per-sample input size over per-sample latent size."""
    latent = stage_shapes(input_shape, plan)[-1]
    return math.prod(input_shape[1:]) / math.prod(latent[1:])


def _he_normal(seed, name, shape, fan_in):
    rng = make_rng(derive_seed(seed, name))
    return rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)


def _check_input(x_shape, input_shape):
    if tuple(x_shape[1:]) != tuple(input_shape[1:]):
        raise SizeError(f"input sample shape {tuple(x_shape[1:])} != model sample shape {tuple(input_shape[1:])}")


_ACTIVATIONS = {"relu": ad.relu, "identity": ad.identity}


class _Model:
    kind = None

    def parameters(self):
        return list(self.params.values())

    def param_count(self):
        return sum(p.size for p in self.params.values())

    def bias_count(self):
        return sum(p.size for name, p in self.params.items() if name.split(".")[-1].startswith("b"))

    def reconstruct(self, x):
        tape = ad.Tape(record=False)
        return self.forward(tape, tape.constant(x)).value

    def encode(self, x):
        tape = ad.Tape(record=False)
        return self.encode_nodes(tape, tape.constant(x))[0].value

    def state_dict(self):
        return {name: p.value.copy() for name, p in self.params.items()}

    def load_state_dict(self, state):
        for name, p in self.params.items():
            v = np.asarray(state[name], dtype=np.float64)
            if v.shape != p.value.shape:
                raise SizeError(f"{name}: stored shape {v.shape} != {p.value.shape}")
            p.value = v.copy()
            p.zero_grad()


class MaNtae(_Model):
    """Mode-aware non-linear Tucker autoencoder.

    Encoder stage l unfolds the current tensor at mode s_l, applies
    FC(I->H) -> act -> FC(H->K) column-wise and folds back with K in place
    of I.  The decoder runs the stages in reverse with FC(K->H) -> act ->
    FC(H->I).  With skip connections on, the encoder input of stage l is
    added to the decoder output of the mirrored stage.
    """

    kind = "ma-ntae"

    def __init__(self, input_shape, plan, seed=0, skip_connections=None, activation="relu", fused=True):
        self.input_shape = tuple(input_shape)
        # fused=False runs the literal unfold -> fc -> fold chain (reference path)
        self.fused = fused
        self.plan = plan
        self.shapes = stage_shapes(self.input_shape, plan)
        if skip_connections is None:
            skip_connections = len(self.input_shape) >= 4
        self.skip_connections = bool(skip_connections)
        self.activation = activation
        self.seed = seed
        self._act = _ACTIVATIONS[activation]
        self._cache = None
        self.params = {}
        for l, (i, h, k) in enumerate(zip(plan.in_dims, plan.hidden, plan.latent)):
            self._add(f"enc{l}.W1", (h, i), i)
            self._add(f"enc{l}.b1", (h,))
            self._add(f"enc{l}.W2", (k, h), h)
            self._add(f"enc{l}.b2", (k,))
            self._add(f"dec{l}.W1", (h, k), k)
            self._add(f"dec{l}.b1", (h,))
            self._add(f"dec{l}.W2", (i, h), h)
            self._add(f"dec{l}.b2", (i,))

    def _add(self, name, shape, fan_in=None):
        value = np.zeros(shape) if fan_in is None else _he_normal(self.seed, name, shape, fan_in)
        self.params[name] = ad.Parameter(value, name)

    def config(self):
        return {"kind": self.kind, "input_shape": list(self.input_shape), "plan": self.plan.to_dict(),
                "seed": self.seed, "skip_connections": self.skip_connections, "activation": self.activation}

    def _stage(self, tape, z, prefix, mode, out_shape):
        """Unfold at ``mode``, FC -> act -> FC column-wise, fold back into ``out_shape``."""
        p = {k: tape.param(self.params[f"{prefix}.{k}"]) for k in ("W1", "b1", "W2", "b2")}
        if self.fused:
            h = self._act(ad.mode_fc(p["W1"], p["b1"], z, mode))
            return ad.mode_fc(p["W2"], p["b2"], h, mode)
        h = self._act(ad.fc(p["W1"], p["b1"], ad.unfold(z, mode)))
        return ad.fold(ad.fc(p["W2"], p["b2"], h), mode, out_shape)

    def encode_nodes(self, tape, x):
        _check_input(x.value.shape, self.input_shape)
        batch = x.value.shape[0]
        cache = []
        z = x
        for l, mode in enumerate(self.plan.modes):
            cache.append(z)
            out_shape = (batch,) + self.shapes[l + 1][1:]
            z = self._stage(tape, z, f"enc{l}", mode, out_shape)
        return z, cache

    def decode_nodes(self, tape, g, cache=None):
        if tuple(g.value.shape[1:]) != self.shapes[-1][1:]:
            raise SizeError(f"latent sample shape {g.value.shape[1:]} != {self.shapes[-1][1:]}")
        if self.skip_connections and cache is None:
            raise UsageError("skip connections need the encoder cache; call encode first")
        batch = g.value.shape[0]
        z = g
        for l in reversed(range(len(self.plan.modes))):
            mode = self.plan.modes[l]
            out_shape = (batch,) + self.shapes[l][1:]
            z = self._stage(tape, z, f"dec{l}", mode, out_shape)
            if self.skip_connections:
                z = ad.add(z, cache[l])
        return z

    def forward(self, tape, x):
        g, cache = self.encode_nodes(tape, x)
        return self.decode_nodes(tape, g, cache)

    def encode(self, x):
        tape = ad.Tape(record=False)
        g, cache = self.encode_nodes(tape, tape.constant(x))
        self._cache = [c.value for c in cache]
        return g.value

    def decode(self, g):
        tape = ad.Tape(record=False)
        cache = None
        if self.skip_connections:
            if self._cache is None:
                raise UsageError("skip connections need the encoder cache; call encode first")
            cache = [tape.constant(c) for c in self._cache]
        return self.decode_nodes(tape, tape.constant(g), cache).value

    def tucker_param_count(self):
        """Bias-free count 2 * sum_s H_s (I_s + K_s)."""
        p = self.plan
        return 2 * sum(h * (i + k) for i, h, k in zip(p.in_dims, p.hidden, p.latent))

    def flop_count(self, input_shape=None):
        """Multiply-accumulate count of the two matrix products per stage, encoder + decoder."""
        shapes = stage_shapes(input_shape or self.input_shape, self.plan)
        total = 0
        for l, (mode, i, h, k) in enumerate(zip(self.plan.modes, self.plan.in_dims, self.plan.hidden, self.plan.latent)):
            rest = math.prod(shapes[l]) // shapes[l][mode]
            total += h * rest * (i + k)
        return 2 * total


def dae_widths(input_shape, alpha):
    dims = tuple(input_shape)[1:]
    d = math.prod(dims)
    h = math.prod(reduced_dim(i, alpha) for i in dims)
    c = math.prod(reduced_dim(i, alpha * alpha) for i in dims)
    return (d, h, c, h, d)


class Dae(_Model):
    """Flatten-then-MLP autoencoder D -> h -> c -> h -> D with ReLU between layers."""

    kind = "dae"

    def __init__(self, input_shape, alpha, seed=0):
        self.input_shape = tuple(input_shape)
        self.alpha = alpha
        self.seed = seed
        self.widths = dae_widths(self.input_shape, alpha)
        self.params = {}
        for l in range(4):
            fan_in, fan_out = self.widths[l], self.widths[l + 1]
            w = _he_normal(seed, f"fc{l}.W", (fan_out, fan_in), fan_in)
            self.params[f"fc{l}.W"] = ad.Parameter(w, f"fc{l}.W")
            self.params[f"fc{l}.b"] = ad.Parameter(np.zeros(fan_out), f"fc{l}.b")

    def config(self):
        return {"kind": self.kind, "input_shape": list(self.input_shape), "alpha": self.alpha, "seed": self.seed}

    def _flatten(self, x):
        shape = x.value.shape
        batch = shape[0]
        return ad.reshape_map(x, lambda v: np.ascontiguousarray(v.reshape(batch, -1).T),
                              lambda g: np.ascontiguousarray(g.T).reshape(shape))

    def _layer(self, tape, z, l):
        return ad.fc(tape.param(self.params[f"fc{l}.W"]), tape.param(self.params[f"fc{l}.b"]), z)

    def encode_nodes(self, tape, x):
        _check_input(x.value.shape, self.input_shape)
        z = self._flatten(x)
        z = ad.relu(self._layer(tape, z, 0))
        z = self._layer(tape, z, 1)
        return ad.transpose(z), None

    def forward(self, tape, x):
        _check_input(x.value.shape, self.input_shape)
        shape = x.value.shape
        z = self._flatten(x)
        for l in range(3):
            z = ad.relu(self._layer(tape, z, l))
        z = self._layer(tape, z, 3)
        return ad.reshape_map(z, lambda v: np.ascontiguousarray(v.T).reshape(shape),
                              lambda g: np.ascontiguousarray(g.reshape(shape[0], -1).T))

    def flop_count(self, input_shape=None):
        batch = (input_shape or self.input_shape)[0]
        return batch * sum(a * b for a, b in zip(self.widths[:-1], self.widths[1:]))


class Tfnn(_Model):
    """Tucker-factorized network autoencoder (bias-free factor matrices).

    ``layout="per_mode"`` (default): stage l applies V_l on mode s_l, the
    activation, then W_l on mode s_l, before moving to the next mode; the
    stage shapes match :func:`stage_shapes` exactly.

    ``layout="layerwise"``: each layer multiplies the tensor by one factor
    matrix on every target mode and only then applies the activation, i.e. a
    Tucker-factorized dense layer followed by a nonlinearity.  Layers are
    I -> H (act) -> K, mirrored K -> H (act) -> I.
    """

    kind = "tfnn"
    LAYOUTS = ("per_mode", "layerwise")

    def __init__(self, input_shape, plan, seed=0, layout="per_mode", activation="relu"):
        if layout not in self.LAYOUTS:
            raise ValueError(f"unknown TFNN layout {layout!r}")
        self.input_shape = tuple(input_shape)
        self.plan = plan
        self.shapes = stage_shapes(self.input_shape, plan)
        self.layout = layout
        self.seed = seed
        self.activation = activation
        self._act = _ACTIVATIONS[activation]
        self.params = {}
        for l, (i, h, k) in enumerate(zip(plan.in_dims, plan.hidden, plan.latent)):
            for name, shape in ((f"enc{l}.V", (h, i)), (f"enc{l}.W", (k, h)),
                                (f"dec{l}.V", (h, k)), (f"dec{l}.W", (i, h))):
                self.params[name] = ad.Parameter(_he_normal(seed, name, shape, shape[1]), name)

    def config(self):
        return {"kind": self.kind, "input_shape": list(self.input_shape), "plan": self.plan.to_dict(),
                "seed": self.seed, "layout": self.layout, "activation": self.activation}

    def _mode_product(self, tape, z, name, mode):
        """Differentiable ``Z x_mode P``."""
        return ad.mode_fc(tape.param(self.params[name]), None, z, mode)

    def _multi(self, tape, z, suffix, stages, side):
        for l in stages:
            z = self._mode_product(tape, z, f"{side}{l}.{suffix}", self.plan.modes[l])
        return z

    def encode_nodes(self, tape, x):
        _check_input(x.value.shape, self.input_shape)
        L = range(len(self.plan.modes))
        if self.layout == "layerwise":
            z = self._act(self._multi(tape, x, "V", L, "enc"))
            return self._multi(tape, z, "W", L, "enc"), None
        z = x
        for l in L:
            z = self._act(self._mode_product(tape, z, f"enc{l}.V", self.plan.modes[l]))
            z = self._mode_product(tape, z, f"enc{l}.W", self.plan.modes[l])
        return z, None

    def decode_nodes(self, tape, g, cache=None):
        L = list(reversed(range(len(self.plan.modes))))
        if self.layout == "layerwise":
            z = self._act(self._multi(tape, g, "V", L, "dec"))
            return self._multi(tape, z, "W", L, "dec")
        z = g
        for l in L:
            z = self._act(self._mode_product(tape, z, f"dec{l}.V", self.plan.modes[l]))
            z = self._mode_product(tape, z, f"dec{l}.W", self.plan.modes[l])
        return z

    def forward(self, tape, x):
        g, _ = self.encode_nodes(tape, x)
        return self.decode_nodes(tape, g)

    def decode(self, g):
        tape = ad.Tape(record=False)
        return self.decode_nodes(tape, tape.constant(g)).value

    def tucker_param_count(self):
        p = self.plan
        return 2 * sum(h * i + k * h for i, h, k in zip(p.in_dims, p.hidden, p.latent))

    def flop_count(self, input_shape=None):
        shape = list(input_shape or self.input_shape)
        total = 0
        enc = [(self.plan.modes[l], self.params[f"enc{l}.{s}"].shape) for s in ("V", "W") for l in range(len(self.plan.modes))]
        if self.layout == "per_mode":
            enc = [(self.plan.modes[l], self.params[f"enc{l}.{s}"].shape) for l in range(len(self.plan.modes)) for s in ("V", "W")]
        for mode, (out, inp) in enc:
            rest = math.prod(shape) // shape[mode]
            total += out * inp * rest
            shape[mode] = out
        return 2 * total


MODEL_KINDS = ("ma-ntae", "tfnn", "dae")


def build_ma_ntae(input_shape, plan, seed=0, **kwargs):
    return MaNtae(input_shape, plan, seed=seed, **kwargs)


def build_dae(input_shape, alpha, seed=0):
    return Dae(input_shape, alpha, seed=seed)


def build_tfnn(input_shape, plan, seed=0, **kwargs):
    return Tfnn(input_shape, plan, seed=seed, **kwargs)


def build_model(kind, input_shape, alpha, seed=0, modes=None, min_latent=None, **kwargs):
    """Build any model kind from a reduction factor (plan derived with :meth:`ModePlan.from_alpha`)."""
    if kind == "dae":
        return Dae(input_shape, alpha, seed=seed)
    plan = ModePlan.from_alpha(input_shape, alpha, modes=modes, min_latent=min_latent)
    if kind == "ma-ntae":
        return MaNtae(input_shape, plan, seed=seed, **kwargs)
    if kind == "tfnn":
        return Tfnn(input_shape, plan, seed=seed, **kwargs)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def model_from_config(cfg):
    kind = cfg["kind"]
    shape = tuple(cfg["input_shape"])
    if kind == "dae":
        return Dae(shape, cfg["alpha"], seed=cfg["seed"])
    plan = ModePlan.from_dict(cfg["plan"])
    if kind == "ma-ntae":
        return MaNtae(shape, plan, seed=cfg["seed"], skip_connections=cfg["skip_connections"],
                      activation=cfg["activation"])
    if kind == "tfnn":
        return Tfnn(shape, plan, seed=cfg["seed"], layout=cfg["layout"], activation=cfg["activation"])
    raise ValueError(f"unknown model kind {kind!r}")


def model_counts(kind, input_shape, alpha, modes=None, min_latent=None, **kwargs):
    """``(param_count, flop_count)`` without allocating DAE weights, which get huge fast."""
    if kind == "dae":
        w = dae_widths(input_shape, alpha)
        pairs = list(zip(w[:-1], w[1:]))
        return sum(a * b + b for a, b in pairs), input_shape[0] * sum(a * b for a, b in pairs)
    m = build_model(kind, input_shape, alpha, modes=modes, min_latent=min_latent, **kwargs)
    return m.param_count(), m.flop_count()


def param_count(model):
    return model.param_count()


def flop_count(model, input_shape=None):
    return model.flop_count(input_shape)
