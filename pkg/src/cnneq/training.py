"""Reverse-mode gradients, Adam and the repeat-and-report-worst protocol.

Each model family has an adapter that exposes a flat ``{name: array}``
parameter dict, a ``loss_and_grad`` pass (forward with cached
intermediates, then an explicit backward sweep) and inference.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from . import kernels
from .channels import gen_symbols, make_dataset, simulate
from .equalizers import (
    BN_EPS,
    CnnConfig,
    CnnModel,
    FirModel,
    VolterraModel,
    check_cnn_input,
    flatten_output,
    forward,
    init_model,
    volterra_windows,
)
from .errors import TrainingError, UsageError
from .signals import ber, decide, make_rng

log = logging.getLogger(__name__)

BN_MOMENTUM = 0.1
MATH_MODE = "ieee754-binary64, no fast-math, fixed reduction order per backend"

# generator stream keys
STREAM_INIT = 0x1A17
STREAM_TRAIN = 0x7EA1


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 10000
    lr: float = 1e-3
    batch_symbols: int = 2048
    seeds: Sequence[int] = (1, 2, 3)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_seed: int = 0x5EED_E7A1
    eval_symbols: int = 1_000_000
    eval_every: int = 0  # 0: evaluate only at the end
    checkpoint_eval_symbols: int = 100_000
    lr_schedule: str = "constant"  # constant | cosine

    def lr_at(self, it):
        if self.lr_schedule == "constant":
            return self.lr
        if self.lr_schedule == "cosine":
            return 0.5 * self.lr * (1.0 + np.cos(np.pi * it / self.iterations))
        raise UsageError(f"unknown lr_schedule {self.lr_schedule!r}")

    def validate(self):
        if self.iterations < 1:
            raise UsageError("iterations must be >= 1")
        if not self.lr > 0:
            raise UsageError("lr must be > 0")
        if not self.seeds:
            raise UsageError("at least one seed is required")
        if self.batch_symbols < 1:
            raise UsageError("batch_symbols must be >= 1")
        return self


def mse_loss(soft, target):
    """Mean squared error between soft outputs and transmitted symbols."""
    y = np.asarray(getattr(soft, "values", soft), dtype=np.float64)
    t = np.asarray(getattr(target, "values", target), dtype=np.float64)
    if y.shape != t.shape:
        raise UsageError(f"length mismatch: {y.shape} vs {t.shape}")
    return float(np.mean((y - t) ** 2))


# --- adapters ----------------------------------------------------------------


class FirAdapter:
    def __init__(self, model: FirModel):
        self.model = model

    def params(self):
        return {"weights": self.model.weights}

    def loss_and_grad(self, x, target, sl):
        m = self.model
        y = kernels.conv1d_forward(x[None, :], m.weights[None, None, :], m.n_os)[0]
        r = np.zeros_like(y)
        r[sl] = y[sl] - target[sl]
        n = r[sl].size
        loss = float(np.sum(r[sl] ** 2) / n)
        _, gw = kernels.conv1d_backward(
            x[None, :], m.weights[None, None, :], (2.0 / n) * r[None, :], m.n_os
        )
        return loss, {"weights": gw[0, 0]}

    def update_running(self):
        pass


class VolterraAdapter:
    def __init__(self, model: VolterraModel):
        self.model = model

    def params(self):
        m = self.model
        p = {"w0": np.array([m.w0])}
        m1, m2, m3 = m.memory
        if m1:
            p["w1"] = m.w1
        if m2:
            p["w2"] = m.w2
        if m3:
            p["w3"] = m.w3
        return p

    def sync(self, params):
        self.model.w0 = float(params["w0"][0])

    def loss_and_grad(self, x, target, sl):
        m = self.model
        x1, x2, x3 = volterra_windows(x, m)
        t = target[sl]
        n = t.size
        y = np.full(n, m.w0)
        if x1 is not None:
            x1 = x1[sl]
            y += x1 @ m.w1
        if x2 is not None:
            x2 = x2[sl]
            y += np.einsum("na,ab,nb->n", x2, m.w2, x2)
        if x3 is not None:
            x3 = x3[sl]
            m3 = m.memory[2]
            outer3 = np.einsum("na,nb,nc->nabc", x3, x3, x3).reshape(n, -1)
            y += outer3 @ m.w3.reshape(-1)
        r = y - t
        loss = float(np.mean(r**2))
        g = 2.0 * r / n
        grads = {"w0": np.array([g.sum()])}
        if x1 is not None:
            grads["w1"] = g @ x1
        if x2 is not None:
            grads["w2"] = np.einsum("n,na,nb->ab", g, x2, x2)
        if x3 is not None:
            grads["w3"] = (g @ outer3).reshape(m3, m3, m3)
        return loss, grads

    def update_running(self):
        pass


class CnnAdapter:
    """Batch-norm-in-train-mode CNN with a hand-written backward pass."""

    def __init__(self, model: CnnModel):
        self.model = model
        self._batch_stats = None

    def params(self):
        m = self.model
        p = {}
        for l, w in enumerate(m.weights):
            p[f"conv{l}.weight"] = w
            if m.biases[l] is not None:
                p[f"conv{l}.bias"] = m.biases[l]
        for l in range(m.config.layers - 1):
            p[f"bn{l}.gamma"] = m.bn_gamma[l]
            p[f"bn{l}.beta"] = m.bn_beta[l]
        return p

    def loss_and_grad(self, x, target, sl):
        m = self.model
        cfg = m.config
        check_cnn_input(x, cfg)
        strides = cfg.strides()
        hidden = cfg.layers - 1
        acts = [x[None, :]]
        caches = []
        stats = []
        h = acts[0]
        for l, w in enumerate(m.weights):
            z = kernels.conv1d_forward(h, w, strides[l])
            if m.biases[l] is not None:
                z = z + m.biases[l][:, None]
            if l < hidden:
                mu = z.mean(axis=1, keepdims=True)
                var = z.var(axis=1, keepdims=True)
                inv = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (z - mu) * inv
                a = m.bn_gamma[l][:, None] * xhat + m.bn_beta[l][:, None]
                h = np.maximum(a, 0.0)
                caches.append((xhat, inv, a > 0.0))
                stats.append((mu[:, 0], var[:, 0], z.shape[1]))
            else:
                h = z
            acts.append(h)
        self._batch_stats = stats
        y = flatten_output(h)
        r = np.zeros_like(y)
        r[sl] = y[sl] - target[sl]
        n = r[sl].size
        loss = float(np.sum(r[sl] ** 2) / n)
        gy = (2.0 / n) * r
        g = gy.reshape(-1, cfg.v_p).T
        grads = {}
        for l in range(cfg.layers - 1, -1, -1):
            if l < hidden:
                xhat, inv, mask = caches[l]
                ga = g * mask
                grads[f"bn{l}.gamma"] = np.sum(ga * xhat, axis=1)
                grads[f"bn{l}.beta"] = np.sum(ga, axis=1)
                gx = ga * m.bn_gamma[l][:, None]
                cnt = gx.shape[1]
                g = (inv / cnt) * (
                    cnt * gx - gx.sum(axis=1, keepdims=True)
                    - xhat * np.sum(gx * xhat, axis=1, keepdims=True)
                )
            if m.biases[l] is not None:
                grads[f"conv{l}.bias"] = g.sum(axis=1)
            gin, gw = kernels.conv1d_backward(acts[l], m.weights[l], g, strides[l])
            grads[f"conv{l}.weight"] = gw
            g = gin
        return loss, grads

    def update_running(self):
        """Fold the last batch statistics into the running estimates."""
        m = self.model
        for l, (mu, var, cnt) in enumerate(self._batch_stats or ()):
            unbiased = var * cnt / max(cnt - 1, 1)
            m.bn_mean[l] *= 1.0 - BN_MOMENTUM
            m.bn_mean[l] += BN_MOMENTUM * mu
            m.bn_var[l] *= 1.0 - BN_MOMENTUM
            m.bn_var[l] += BN_MOMENTUM * unbiased


def adapter_for(model):
    if isinstance(model, FirModel):
        return FirAdapter(model)
    if isinstance(model, VolterraModel):
        return VolterraAdapter(model)
    if isinstance(model, CnnModel):
        return CnnAdapter(model)
    raise UsageError(f"no trainer for {type(model).__name__}")


def backward(model, inputs, targets, skip=0):
    """Loss and gradients of the MSE w.r.t. every trainable parameter.

    ``skip`` symbols at each end are excluded from the loss.
    """
    x = np.asarray(getattr(inputs, "values", inputs), dtype=np.float64)
    t = np.asarray(getattr(targets, "values", targets), dtype=np.float64)
    sl = slice(skip, t.shape[0] - skip)
    loss, grads = adapter_for(model).loss_and_grad(x, t, sl)
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss", {"loss": loss})
    return loss, grads


# --- Adam ----------------------------------------------------------------------


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place bias-corrected Adam update.

    ``lr`` is a scalar or a ``{name: lr}`` mapping for per-tensor rates.
    """
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        step = lr[name] if isinstance(lr, dict) else lr
        p -= step * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


# --- protocol --------------------------------------------------------------------


def guard_symbols(model):
    """Symbols discarded at each end of a training window."""
    g = max(64, model.receptive_half_width() + 16)
    cfg = model.config
    vp = cfg.v_p if isinstance(cfg, CnnConfig) else 1
    return -(-g // vp) * vp


def draw_window(channel_cfg, n_symbols, rng):
    sym = gen_symbols(n_symbols, rng=rng)
    return sym, simulate(sym, channel_cfg, rng)


def evaluate(model, channel_cfg, n_symbols, seed, split=2):
    """BER of ``model`` on a held-out dataset of ``n_symbols`` symbols."""
    vp = model.config.v_p if isinstance(model.config, CnnConfig) else 1
    n = -(-int(n_symbols) // vp) * vp
    sym, rx = make_dataset(channel_cfg, n, seed, split)
    soft = forward(rx, model)
    skip = model.receptive_half_width()
    return ber(decide(soft), sym, skip, skip)


@dataclass
class TrainResult:
    model: object
    seed: int
    ber: float
    losses: np.ndarray
    trace: List[tuple]  # (iteration, loss, eval BER or nan)
    failed: bool = False
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0


def train(model_config, channel_cfg, train_cfg, seed, model=None, callback=None):
    """Train one model from scratch (or from ``model``) on fresh channel windows.

    Raises :class:`TrainingError` if the loss turns non-finite.
    """
    train_cfg.validate()
    t0 = time.perf_counter()
    if model is None:
        model = init_model(model_config, make_rng(seed, STREAM_INIT))
    adapter = adapter_for(model)
    params = adapter.params()
    state = AdamState()
    data_rng = make_rng(seed, STREAM_TRAIN)
    guard = guard_symbols(model)
    n_win = train_cfg.batch_symbols + 2 * guard
    vp = model.config.v_p if isinstance(model.config, CnnConfig) else 1
    n_win = -(-n_win // vp) * vp
    sl = slice(guard, n_win - guard)
    losses = np.empty(train_cfg.iterations)
    trace = []
    for it in range(train_cfg.iterations):
        sym, rx = draw_window(channel_cfg, n_win, data_rng)
        loss, grads = adapter.loss_and_grad(rx.values, sym.values, sl)
        if not np.isfinite(loss):
            raise TrainingError(
                f"loss became non-finite at iteration {it}",
                {
                    "iteration": it,
                    "loss": loss,
                    "param_norms": {k: float(np.linalg.norm(v)) for k, v in params.items()},
                },
            )
        adam_step(params, grads, state, train_cfg.lr_at(it), train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
        if isinstance(adapter, VolterraAdapter):
            adapter.sync(params)
        adapter.update_running()
        losses[it] = loss
        if train_cfg.eval_every and (it + 1) % train_cfg.eval_every == 0 and it + 1 < train_cfg.iterations:
            b = evaluate(model, channel_cfg, train_cfg.checkpoint_eval_symbols, train_cfg.eval_seed)
            trace.append((it + 1, loss, b))
            if callback:
                callback(it + 1, loss, b)
    final = evaluate(model, channel_cfg, train_cfg.eval_symbols, train_cfg.eval_seed)
    trace.append((train_cfg.iterations, float(losses[-1]), final))
    return TrainResult(model, int(seed), final, losses, trace, wall_time=time.perf_counter() - t0)


@dataclass
class WorstOfN:
    worst_ber: float
    results: List[TrainResult]

    @property
    def bers(self):
        return [r.ber for r in self.results]

    @property
    def worst(self):
        ok = [r for r in self.results if not r.failed]
        return max(ok, key=lambda r: r.ber)

    @property
    def median_ber(self):
        return float(np.median([r.ber for r in self.results if not r.failed]))


def train_worst_of_n(model_config, channel_cfg, train_cfg, seeds=None):
    """Train once per seed and report the highest (worst) final BER.

    Diverged runs are kept in ``results`` with ``failed=True`` but do not
    enter the worst-case figure; if every run diverges a
    :class:`TrainingError` is raised.
    """
    seeds = list(train_cfg.seeds if seeds is None else seeds)
    if not seeds:
        raise UsageError("at least one seed is required")
    results = []
    for s in seeds:
        try:
            results.append(train(model_config, channel_cfg, train_cfg, s))
        except TrainingError as exc:
            log.warning("seed %s diverged: %s", s, exc)
            results.append(
                TrainResult(None, int(s), float("nan"), np.array([]), [], True, exc.diagnostics)
            )
    ok = [r.ber for r in results if not r.failed]
    if not ok:
        raise TrainingError("all training runs diverged", {"seeds": seeds})
    return WorstOfN(max(ok), results)


def write_train_log(path, result, header_lines=()):
    """CSV training log: iteration, loss, eval BER (empty between checkpoints)."""
    evals = {it: b for it, _, b in result.trace}
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["iteration", "loss", "eval_ber"])
        for i, loss in enumerate(result.losses, start=1):
            b = evals.get(i)
            w.writerow([i, repr(float(loss)), "" if b is None else repr(float(b))])
