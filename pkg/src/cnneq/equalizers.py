"""Forward passes of the FIR, order-3 Volterra and strided-CNN equalizers.

All three produce one soft symbol per ``n_os`` input samples; the soft
symbol ``k`` is aligned with input sample ``k * n_os``.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .errors import ConfigurationError, UsageError
from .signals import PAM2, SymbolSeq

BN_EPS = 1e-5


def _as_samples(samples):
    return np.asarray(getattr(samples, "values", samples), dtype=np.float64)


def _symbol_windows(x, m, n_os):
    """Length-``m`` windows starting ``m//2`` before every ``n_os``-th sample."""
    half = m // 2
    n_sym = x.shape[0] // n_os
    xp = np.pad(x, (half, half + n_os))
    return sliding_window_view(xp, m)[: (n_sym - 1) * n_os + 1 : n_os]


# --- FIR -------------------------------------------------------------------


@dataclass(frozen=True)
class FirConfig:
    taps: int
    n_os: int = 2

    def validate(self):
        if self.taps < 1 or self.taps % 2 == 0:
            raise ConfigurationError("FIR needs an odd number of taps")
        return self

    def describe(self):
        return f"fir_m{self.taps}"


@dataclass
class FirModel:
    weights: np.ndarray
    n_os: int = 2

    family = "fir"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.size % 2 == 0:
            raise ConfigurationError("FIR needs an odd number of taps")

    @property
    def taps(self):
        return self.weights.size

    @property
    def config(self):
        return FirConfig(self.taps, self.n_os)

    @classmethod
    def init(cls, m, n_os=2):
        w = np.zeros(m)
        w[m // 2] = 1.0
        return cls(w, n_os)

    def receptive_half_width(self):
        """Half-width of the input window, in symbols."""
        return -(-(self.taps // 2) // self.n_os)

    def state(self):
        return {"m": self.taps, "n_os": self.n_os}, {"weights": self.weights}

    @classmethod
    def from_state(cls, config, tensors):
        return cls(tensors["weights"].copy(), config["n_os"])


def fir_forward(samples, model):
    """Weighted sum of ``M`` centered inputs, read at the symbol instants."""
    x = _as_samples(samples)
    if x.shape[0] < model.taps:
        raise UsageError("input shorter than the FIR")
    y = kernels.conv1d_forward(x[None, :], model.weights[None, None, :], model.n_os)[0]
    return SymbolSeq(y, PAM2)


# --- Volterra --------------------------------------------------------------


@dataclass(frozen=True)
class VolterraConfig:
    m1: int
    m2: int
    m3: int
    n_os: int = 2

    def validate(self):
        if min(self.m1, self.m2, self.m3) < 0:
            raise ConfigurationError("Volterra memory lengths must be >= 0 (0 disables an order)")
        if not any((self.m1, self.m2, self.m3)):
            raise ConfigurationError("at least one Volterra order must be enabled")
        return self

    def describe(self):
        return f"volterra_{self.m1}_{self.m2}_{self.m3}"


@dataclass
class VolterraModel:
    """Order-3 Volterra kernel. An order with memory 0 is disabled.

    Odd memories give centered windows; an even memory ``M`` spans
    offsets ``-M//2 .. M//2 - 1``.
    """

    w0: float
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    n_os: int = 2

    family = "volterra"

    def __post_init__(self):
        self.w0 = float(self.w0)
        self.w1 = np.asarray(self.w1, dtype=np.float64).reshape(-1)
        m2 = np.asarray(self.w2, dtype=np.float64)
        m3 = np.asarray(self.w3, dtype=np.float64)
        self.w2 = m2.reshape((m2.shape[0],) * 2) if m2.size else np.zeros((0, 0))
        self.w3 = m3.reshape((m3.shape[0],) * 3) if m3.size else np.zeros((0, 0, 0))

    @property
    def memory(self):
        return self.w1.shape[0], self.w2.shape[0], self.w3.shape[0]

    @property
    def config(self):
        return VolterraConfig(*self.memory, self.n_os)

    @classmethod
    def init(cls, m1, m2, m3, n_os=2):
        w1 = np.zeros(m1)
        if m1:
            w1[m1 // 2] = 1.0
        return cls(0.0, w1, np.zeros((m2, m2)), np.zeros((m3, m3, m3)), n_os)

    def receptive_half_width(self):
        return -(-(max(self.memory) // 2) // self.n_os)

    def state(self):
        m1, m2, m3 = self.memory
        tensors = {"w0": np.array([self.w0]), "w1": self.w1, "w2": self.w2, "w3": self.w3}
        return {"m1": m1, "m2": m2, "m3": m3, "n_os": self.n_os}, tensors

    @classmethod
    def from_state(cls, config, tensors):
        m2, m3 = config["m2"], config["m3"]
        return cls(
            float(tensors["w0"][0]),
            tensors["w1"].copy(),
            tensors["w2"].reshape(m2, m2).copy(),
            tensors["w3"].reshape(m3, m3, m3).copy(),
            config["n_os"],
        )


def volterra_windows(x, model):
    return tuple(_symbol_windows(x, m, model.n_os) if m else None for m in model.memory)


def volterra_forward(samples, model, chunk=1 << 16):
    """Evaluate the order-3 Volterra sum at every symbol instant."""
    x = _as_samples(samples)
    if x.shape[0] < max(model.memory):
        raise UsageError("input shorter than the Volterra memory")
    n_sym = x.shape[0] // model.n_os
    out = np.full(n_sym, model.w0)
    x1, x2, x3 = volterra_windows(x, model)
    m3 = model.memory[2]
    w3_flat = model.w3.reshape(m3 * m3, m3) if m3 else None
    for lo in range(0, n_sym, chunk):
        hi = min(n_sym, lo + chunk)
        if x1 is not None:
            out[lo:hi] += x1[lo:hi] @ model.w1
        if x2 is not None:
            a = x2[lo:hi]
            out[lo:hi] += np.einsum("na,ab,nb->n", a, model.w2, a)
        if x3 is not None:
            a = x3[lo:hi]
            outer = (a[:, :, None] * a[:, None, :]).reshape(hi - lo, m3 * m3)
            out[lo:hi] += np.einsum("nc,nc->n", outer @ w3_flat, a)
    return SymbolSeq(out, PAM2)


# --- CNN -------------------------------------------------------------------


@dataclass(frozen=True)
class CnnConfig:
    """Topology of the strided 1-D CNN template.

    ``padding`` is recorded as given; outputs are always cropped to the
    centered nominal shape, so any padding >= (K-1)/2 behaves identically.
    """

    v_p: int = 8
    layers: int = 3
    kernel: int = 9
    channels: int = 5
    n_os: int = 2
    padding: int = 10
    bias: bool = False

    def validate(self):
        if self.layers < 2:
            raise ConfigurationError("the CNN template needs at least 2 layers")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigurationError("kernel size must be odd")
        if min(self.v_p, self.channels, self.n_os) < 1:
            raise ConfigurationError("v_p, channels and n_os must be >= 1")
        if self.padding < 0:
            raise ConfigurationError("padding must be >= 0")
        return self

    @property
    def group(self):
        """Input samples consumed per network pass."""
        return self.v_p * self.n_os

    def strides(self):
        return [self.v_p] + [1] * (self.layers - 2) + [self.n_os]

    def channel_plan(self):
        """(in, out) channel counts per layer."""
        c = self.channels
        return [(1, c)] + [(c, c)] * (self.layers - 2) + [(c, self.v_p)]

    def overlap_samples(self):
        """Half receptive field in input samples."""
        return (self.kernel - 1) * (1 + self.v_p * (self.layers - 1)) // 2

    def receptive_half_width(self):
        """Conservative half-width in symbols, for BER skip regions."""
        return -(-self.overlap_samples() // self.n_os) + self.v_p

    def describe(self):
        return f"cnn_vp{self.v_p}_l{self.layers}_k{self.kernel}_c{self.channels}"


@dataclass
class CnnModel:
    config: CnnConfig
    weights: List[np.ndarray]
    biases: List[Optional[np.ndarray]]
    bn_gamma: List[np.ndarray] = field(default_factory=list)
    bn_beta: List[np.ndarray] = field(default_factory=list)
    bn_mean: List[np.ndarray] = field(default_factory=list)
    bn_var: List[np.ndarray] = field(default_factory=list)

    family = "cnn"

    def __post_init__(self):
        cfg = self.config.validate()
        plan = cfg.channel_plan()
        if len(self.weights) != cfg.layers or len(self.biases) != cfg.layers:
            raise UsageError("one kernel and one bias slot per layer expected")
        for w, (ci, co) in zip(self.weights, plan):
            if w.shape != (co, ci, cfg.kernel):
                raise UsageError(f"kernel shape {w.shape} != {(co, ci, cfg.kernel)}")
        for lst in (self.bn_gamma, self.bn_beta, self.bn_mean, self.bn_var):
            if len(lst) != cfg.layers - 1:
                raise UsageError("batch-norm parameters needed for every hidden layer")
        if any(np.any(v <= 0) for v in self.bn_var):
            raise UsageError("batch-norm variance must be positive")

    @classmethod
    def init(cls, config, rng):
        """Uniform(+-1/sqrt(fan_in)) kernels, identity batch norm."""
        config.validate()
        weights, biases = [], []
        for ci, co in config.channel_plan():
            bound = 1.0 / np.sqrt(ci * config.kernel)
            weights.append(rng.uniform(-bound, bound, size=(co, ci, config.kernel)))
            biases.append(rng.uniform(-bound, bound, size=co) if config.bias else None)
        c = config.channels
        hidden = config.layers - 1
        return cls(
            config,
            weights,
            biases,
            [np.ones(c) for _ in range(hidden)],
            [np.zeros(c) for _ in range(hidden)],
            [np.zeros(c) for _ in range(hidden)],
            [np.ones(c) for _ in range(hidden)],
        )

    def receptive_half_width(self):
        return self.config.receptive_half_width()

    def folded(self):
        """Per-layer (kernel, bias) with inference batch norm folded in."""
        out = []
        for l, w in enumerate(self.weights):
            b = self.biases[l] if self.biases[l] is not None else np.zeros(w.shape[0])
            if l < self.config.layers - 1:
                scale = self.bn_gamma[l] / np.sqrt(self.bn_var[l] + BN_EPS)
                w = w * scale[:, None, None]
                b = (b - self.bn_mean[l]) * scale + self.bn_beta[l]
            out.append((w, b))
        return out

    def copy(self):
        def cp(lst):
            return [None if a is None else a.copy() for a in lst]

        return CnnModel(
            self.config,
            cp(self.weights),
            cp(self.biases),
            cp(self.bn_gamma),
            cp(self.bn_beta),
            cp(self.bn_mean),
            cp(self.bn_var),
        )

    def state(self):
        cfg = self.config
        tensors = {}
        for l in range(cfg.layers):
            tensors[f"conv{l}.weight"] = self.weights[l]
            if self.biases[l] is not None:
                tensors[f"conv{l}.bias"] = self.biases[l]
        for l in range(cfg.layers - 1):
            tensors[f"bn{l}.gamma"] = self.bn_gamma[l]
            tensors[f"bn{l}.beta"] = self.bn_beta[l]
            tensors[f"bn{l}.mean"] = self.bn_mean[l]
            tensors[f"bn{l}.var"] = self.bn_var[l]
        return dict(cfg.__dict__), tensors

    @classmethod
    def from_state(cls, config, tensors):
        cfg = CnnConfig(**config)
        L = cfg.layers
        return cls(
            cfg,
            [tensors[f"conv{l}.weight"].copy() for l in range(L)],
            [tensors[f"conv{l}.bias"].copy() if f"conv{l}.bias" in tensors else None for l in range(L)],
            [tensors[f"bn{l}.gamma"].copy() for l in range(L - 1)],
            [tensors[f"bn{l}.beta"].copy() for l in range(L - 1)],
            [tensors[f"bn{l}.mean"].copy() for l in range(L - 1)],
            [tensors[f"bn{l}.var"].copy() for l in range(L - 1)],
        )


def check_cnn_input(x, config):
    if x.ndim != 1:
        raise UsageError("CNN input must be a 1-D sample stream")
    if x.shape[0] == 0 or x.shape[0] % config.group:
        raise UsageError(
            f"input length {x.shape[0]} must be a positive multiple of v_p*n_os={config.group}"
        )


def flatten_output(y):
    """(v_p, n_pass) feature map -> symbol stream interleaved across channels."""
    return np.ascontiguousarray(y.T).reshape(-1)


def cnn_forward(samples, model, mode="infer"):
    """Run the CNN template on a sample stream.

    ``mode="train"`` normalizes with the batch statistics of this input;
    ``mode="infer"`` uses the running statistics, folded into the kernels.
    """
    cfg = model.config
    x = _as_samples(samples)
    check_cnn_input(x, cfg)
    strides = cfg.strides()
    h = x[None, :]
    if mode == "infer":
        for l, (w, b) in enumerate(model.folded()):
            h = kernels.conv1d_forward(h, w, strides[l]) + b[:, None]
            if l < cfg.layers - 1:
                h = np.maximum(h, 0.0)
    elif mode == "train":
        for l, w in enumerate(model.weights):
            h = kernels.conv1d_forward(h, w, strides[l])
            if model.biases[l] is not None:
                h = h + model.biases[l][:, None]
            if l < cfg.layers - 1:
                mu = h.mean(axis=1, keepdims=True)
                var = h.var(axis=1, keepdims=True)
                h = (h - mu) / np.sqrt(var + BN_EPS)
                h = model.bn_gamma[l][:, None] * h + model.bn_beta[l][:, None]
                h = np.maximum(h, 0.0)
    else:
        raise UsageError(f"unknown mode {mode!r}")
    return SymbolSeq(flatten_output(h), PAM2)


def init_model(config, rng=None):
    """Fresh model for any of the three configuration types."""
    config.validate()
    if isinstance(config, FirConfig):
        return FirModel.init(config.taps, config.n_os)
    if isinstance(config, VolterraConfig):
        return VolterraModel.init(config.m1, config.m2, config.m3, config.n_os)
    if isinstance(config, CnnConfig):
        if rng is None:
            raise UsageError("CNN initialization needs an rng")
        return CnnModel.init(config, rng)
    raise ConfigurationError(f"unknown model config {type(config).__name__}")


def forward(samples, model):
    """Inference-mode forward pass of any model family."""
    if isinstance(model, FirModel):
        return fir_forward(samples, model)
    if isinstance(model, VolterraModel):
        return volterra_forward(samples, model)
    if isinstance(model, CnnModel):
        return cnn_forward(samples, model, "infer")
    # quantized models carry their own forward
    return model.forward(samples)


def mac_count(config):
    """MAC per symbol of any configuration (Volterra: naive kernel count + products)."""
    if isinstance(config, FirConfig):
        return Fraction(mac_per_symbol_fir(config.taps))
    if isinstance(config, VolterraConfig):
        return Fraction(mac_per_symbol_volterra(config.m1, config.m2, config.m3).total)
    return mac_per_symbol(config)


# --- complexity ------------------------------------------------------------


def mac_per_symbol(config):
    """Average multiply-accumulates per output symbol of the CNN template."""
    k, c, vp, L, nos = config.kernel, config.channels, config.v_p, config.layers, config.n_os
    return Fraction(k * c, vp) + (L - 2) * Fraction(k * c * c, vp) + Fraction(k * c, nos)


def mac_per_symbol_fir(m):
    return m


@dataclass(frozen=True)
class VolterraMacs:
    """MAC count of an order-3 Volterra equalizer per output symbol.

    ``kernel`` counts one MAC per kernel coefficient. ``products`` counts
    the extra multiplications forming input products, with per-position
    powers cached: ``m2`` for the second order, ``2 * m3`` for the third.
    """

    kernel: int
    products: int

    @property
    def total(self):
        return self.kernel + self.products

    convention = "kernel = M1 + M2^2 + M3^3; products = M2 + 2*M3 (cached per position)"


def mac_per_symbol_volterra(m1, m2, m3):
    return VolterraMacs(m1 + m2 * m2 + m3**3, m2 + 2 * m3)
