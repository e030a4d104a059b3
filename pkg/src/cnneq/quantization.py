"""Fixed-point formats, learnable bit widths and the three-phase QAT schedule.

During quantization-aware training every format carries real-valued
integer and fraction widths. A value is fake-quantized by bilinear
interpolation between the four neighbouring integer-width
quantizations, which makes the loss differentiable in both widths.
"""

import csv
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from . import kernels
from .equalizers import CnnConfig, CnnModel, check_cnn_input, flatten_output
from .errors import TrainingError, UsageError
from .signals import PAM2, SymbolSeq, make_rng
from .training import (
    STREAM_INIT,
    STREAM_TRAIN,
    AdamState,
    CnnAdapter,
    TrainConfig,
    adam_step,
    draw_window,
    evaluate,
    guard_symbols,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FixedFormat:
    """Sign flag plus integer and fraction widths (real-valued while training)."""

    signed: bool
    int_bits: float
    frac_bits: float

    @property
    def total(self):
        return int(self.signed) + self.int_bits + self.frac_bits

    @property
    def is_integer(self):
        return float(self.int_bits).is_integer() and float(self.frac_bits).is_integer()

    def range(self):
        """Representable interval of a frozen format."""
        hi = 2.0**self.int_bits - 2.0**-self.frac_bits
        return (-(2.0**self.int_bits) if self.signed else 0.0), hi

    def frozen(self):
        return FixedFormat(self.signed, float(math.ceil(self.int_bits)), float(math.ceil(self.frac_bits)))

    def label(self):
        return f"{'s' if self.signed else 'u'}{self.int_bits:g}.{self.frac_bits:g}"


def _q(x, signed, ib, fb):
    """Quantize at integer widths: round half to even, then saturate."""
    scale = 2.0**fb
    hi = 2.0**ib - 1.0 / scale
    lo = -(2.0**ib) if signed else 0.0
    return np.clip(np.round(x * scale) / scale, lo, hi)


def quantize_value(x, fmt):
    """Round to the ``2**-frac_bits`` grid (ties to even) and saturate."""
    if not fmt.is_integer:
        raise UsageError("quantize_value needs integer widths; freeze the format first")
    out = _q(np.asarray(x, dtype=np.float64), fmt.signed, fmt.int_bits, fmt.frac_bits)
    return float(out) if np.ndim(out) == 0 else out


def fake_quantize(x, fmt, with_grad=False):
    """Differentiable quantization at real-valued widths.

    The result interpolates between the integer widths ``floor(b)`` and
    ``floor(b) + 1`` for the fraction width, then likewise for the
    integer width. With ``with_grad`` the partial derivatives of the
    output w.r.t. ``int_bits`` and ``frac_bits`` are returned too; the
    derivative w.r.t. ``x`` is taken as 1 (straight-through); the
    training loop zeroes it where ``x`` saturates.
    """
    x = np.asarray(x, dtype=np.float64)
    i0, f0 = math.floor(fmt.int_bits), math.floor(fmt.frac_bits)
    a = fmt.frac_bits - f0
    b = fmt.int_bits - i0
    q00 = _q(x, fmt.signed, i0, f0)
    q01 = _q(x, fmt.signed, i0, f0 + 1)
    q10 = _q(x, fmt.signed, i0 + 1, f0)
    q11 = _q(x, fmt.signed, i0 + 1, f0 + 1)
    lo = (1.0 - a) * q00 + a * q01
    hi = (1.0 - a) * q10 + a * q11
    out = (1.0 - b) * lo + b * hi
    if not with_grad:
        return out
    d_int = hi - lo
    d_frac = (1.0 - b) * (q01 - q00) + b * (q11 - q10)
    return out, d_int, d_frac


def _in_range(x, fmt):
    """Mask of entries inside the representable range at real-valued widths."""
    hi = 2.0**fmt.int_bits - 2.0 ** (-fmt.frac_bits)
    lo = -(2.0**fmt.int_bits) if fmt.signed else 0.0
    return (x >= lo) & (x <= hi)


@dataclass(frozen=True)
class QatConfig:
    qlf: float = 0.005
    phases: Sequence[int] = (2000, 10000, 15000)
    init_int_bits: float = 16.0
    init_frac_bits: float = 16.0
    width_lr_factor: float = 10.0
    trace_every: int = 100
    eval_every: int = 1000
    checkpoint_eval_symbols: int = 100_000

    def validate(self):
        p = list(self.phases)
        if len(p) != 3 or not (0 <= p[0] < p[1] < p[2]):
            raise UsageError("phase boundaries must be three strictly increasing counts")
        if self.qlf < 0:
            raise UsageError("qlf must be >= 0")
        return self


def qat_penalty(weight_formats, act_formats):
    """(B_p + B_a) / 2 with per-tensor mean total widths."""
    bp = float(np.mean([f.total for f in weight_formats]))
    ba = float(np.mean([f.total for f in act_formats]))
    return 0.5 * (bp + ba), bp, ba


def qat_loss(soft, target, weight_formats, act_formats, qlf):
    """MSE plus ``qlf`` times the mean-width penalty."""
    y = np.asarray(getattr(soft, "values", soft), dtype=np.float64)
    t = np.asarray(getattr(target, "values", target), dtype=np.float64)
    if y.shape != t.shape:
        raise UsageError(f"length mismatch: {y.shape} vs {t.shape}")
    pen, _, _ = qat_penalty(weight_formats, act_formats)
    return float(np.mean((y - t) ** 2)) + qlf * pen


# --- quantized network ---------------------------------------------------------


def default_formats(config, int_bits=16.0, frac_bits=16.0):
    """One weight format per layer; activation formats for input, hidden outputs, output."""
    L = config.layers
    wf = [FixedFormat(True, int_bits, frac_bits) for _ in range(L)]
    af = [FixedFormat(True, int_bits, frac_bits)]
    af += [FixedFormat(False, int_bits, frac_bits) for _ in range(L - 1)]
    af += [FixedFormat(True, int_bits, frac_bits)]
    return wf, af


@dataclass
class QuantizedCnn:
    """Batch-norm-free CNN with per-layer weight and activation formats.

    Accumulation is exact (wide); only layer inputs/outputs and
    parameters sit on their fixed-point grids.
    """

    config: CnnConfig
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    weight_formats: List[FixedFormat]
    act_formats: List[FixedFormat]

    family = "cnn_quantized"

    def receptive_half_width(self):
        return self.config.receptive_half_width()

    def forward(self, samples):
        return quantized_forward(samples, self)

    def state(self):
        tensors = {}
        for l in range(self.config.layers):
            tensors[f"conv{l}.weight"] = self.weights[l]
            tensors[f"conv{l}.bias"] = self.biases[l]
        return dict(self.config.__dict__), tensors

    def formats(self):
        def enc(f):
            return {"signed": f.signed, "int_bits": f.int_bits, "frac_bits": f.frac_bits}

        return {
            "weights": [enc(f) for f in self.weight_formats],
            "activations": [enc(f) for f in self.act_formats],
        }

    @classmethod
    def from_state(cls, config, tensors, formats):
        cfg = CnnConfig(**config)
        L = cfg.layers
        return cls(
            cfg,
            [tensors[f"conv{l}.weight"].copy() for l in range(L)],
            [tensors[f"conv{l}.bias"].copy() for l in range(L)],
            [FixedFormat(**f) for f in formats["weights"]],
            [FixedFormat(**f) for f in formats["activations"]],
        )


def quantized_forward(samples, qmodel):
    """Bit-true inference of a frozen quantized CNN."""
    cfg = qmodel.config
    x = np.asarray(getattr(samples, "values", samples), dtype=np.float64)
    check_cnn_input(x, cfg)
    strides = cfg.strides()
    af = qmodel.act_formats
    h = quantize_value(x, af[0])[None, :]
    for l in range(cfg.layers):
        z = kernels.conv1d_forward(h, qmodel.weights[l], strides[l]) + qmodel.biases[l][:, None]
        if l < cfg.layers - 1:
            z = np.maximum(z, 0.0)
        h = quantize_value(z, af[l + 1])
    return SymbolSeq(flatten_output(h), PAM2)


class QatNet:
    """Folded CNN trained with fake quantization and learnable widths."""

    def __init__(self, config, weights, biases, weight_formats, act_formats):
        self.config = config
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        self.widths = {}
        for l, f in enumerate(weight_formats):
            self.widths[f"w{l}.int"] = np.array([float(f.int_bits)])
            self.widths[f"w{l}.frac"] = np.array([float(f.frac_bits)])
        for j, f in enumerate(act_formats):
            self.widths[f"a{j}.int"] = np.array([float(f.int_bits)])
            self.widths[f"a{j}.frac"] = np.array([float(f.frac_bits)])
        self.signed = {f"w{l}": True for l in range(config.layers)}
        self.signed.update({f"a{j}": f.signed for j, f in enumerate(act_formats)})
        self.widths_trainable = True

    @classmethod
    def from_cnn(cls, model: CnnModel, int_bits=16.0, frac_bits=16.0):
        folded = model.folded()
        wf, af = default_formats(model.config, int_bits, frac_bits)
        return cls(model.config, [w for w, _ in folded], [b for _, b in folded], wf, af)

    def fmt(self, key):
        return FixedFormat(self.signed[key], self.widths[f"{key}.int"][0], self.widths[f"{key}.frac"][0])

    @property
    def weight_formats(self):
        return [self.fmt(f"w{l}") for l in range(self.config.layers)]

    @property
    def act_formats(self):
        return [self.fmt(f"a{j}") for j in range(self.config.layers + 1)]

    def params(self):
        p = {}
        for l in range(self.config.layers):
            p[f"conv{l}.weight"] = self.weights[l]
            p[f"conv{l}.bias"] = self.biases[l]
        if self.widths_trainable:
            p.update(self.widths)
        return p

    def clamp_widths(self):
        """Keep widths nonnegative with at least one magnitude bit."""
        for key in self.signed:
            i, f = self.widths[f"{key}.int"], self.widths[f"{key}.frac"]
            np.maximum(i, 0.0, out=i)
            np.maximum(f, 0.0, out=f)
            if i[0] + f[0] < 1.0:
                log.warning("width of %s collapsed to %.3f bits; clamped to 1", key, i[0] + f[0])
                f[0] = 1.0 - i[0]

    def freeze_widths(self):
        for v in self.widths.values():
            v[0] = math.ceil(v[0])
        self.widths_trainable = False

    def loss_and_grad(self, x, target, sl, qlf):
        cfg = self.config
        check_cnn_input(x, cfg)
        strides = cfg.strides()
        L = cfg.layers
        want = self.widths_trainable
        grads = {}
        a, ai, af_ = fake_quantize(x[None, :], self.fmt("a0"), True)
        acts = [a]
        act_d = [(ai, af_)]
        wq, wd, bq, bd, masks, clip_masks = [], [], [], [], [], []
        h = a
        for l in range(L):
            w, wi, wf = fake_quantize(self.weights[l], self.fmt(f"w{l}"), True)
            b, bi, bf = fake_quantize(self.biases[l], self.fmt(f"w{l}"), True)
            wq.append(w)
            wd.append((wi, wf))
            bq.append(b)
            bd.append((bi, bf))
            z = kernels.conv1d_forward(h, w, strides[l]) + b[:, None]
            if l < L - 1:
                masks.append(z > 0.0)
                z = np.maximum(z, 0.0)
            clip_masks.append(_in_range(z, self.fmt(f"a{l + 1}")))
            h, hi, hf = fake_quantize(z, self.fmt(f"a{l + 1}"), True)
            acts.append(h)
            act_d.append((hi, hf))
        y = flatten_output(h)
        r = np.zeros_like(y)
        r[sl] = y[sl] - target[sl]
        n = r[sl].size
        mse = float(np.sum(r[sl] ** 2) / n)
        g = ((2.0 / n) * r).reshape(-1, cfg.v_p).T
        wf_all, af_all = self.weight_formats, self.act_formats
        pen, bp, ba = qat_penalty(wf_all, af_all)
        loss = mse + qlf * pen
        for l in range(L - 1, -1, -1):
            di, df = act_d[l + 1]
            if want:
                grads[f"a{l + 1}.int"] = np.array([np.sum(g * di)])
                grads[f"a{l + 1}.frac"] = np.array([np.sum(g * df)])
            g = g * clip_masks[l]
            if l < L - 1:
                g = g * masks[l]
            gin, gw = kernels.conv1d_backward(acts[l], wq[l], g, strides[l])
            gb = g.sum(axis=1)
            fmt = self.fmt(f"w{l}")
            grads[f"conv{l}.weight"] = gw * _in_range(self.weights[l], fmt)
            grads[f"conv{l}.bias"] = gb * _in_range(self.biases[l], fmt)
            if want:
                wi, wf = wd[l]
                bi, bf = bd[l]
                grads[f"w{l}.int"] = np.array([np.sum(gw * wi) + np.sum(gb * bi)])
                grads[f"w{l}.frac"] = np.array([np.sum(gw * wf) + np.sum(gb * bf)])
            g = gin
        if want:
            di, df = act_d[0]
            grads["a0.int"] = np.array([np.sum(g * di)])
            grads["a0.frac"] = np.array([np.sum(g * df)])
            pw = qlf / (2.0 * L)
            pa = qlf / (2.0 * (L + 1))
            for key in self.signed:
                p = pw if key.startswith("w") else pa
                grads[f"{key}.int"] = grads[f"{key}.int"] + p
                grads[f"{key}.frac"] = grads[f"{key}.frac"] + p
        return loss, grads, (mse, bp, ba)

    def forward(self, samples):
        """Fake-quantized inference at the current widths."""
        cfg = self.config
        x = np.asarray(getattr(samples, "values", samples), dtype=np.float64)
        check_cnn_input(x, cfg)
        strides = cfg.strides()
        h = fake_quantize(x[None, :], self.fmt("a0"))
        for l in range(cfg.layers):
            w = fake_quantize(self.weights[l], self.fmt(f"w{l}"))
            b = fake_quantize(self.biases[l], self.fmt(f"w{l}"))
            z = kernels.conv1d_forward(h, w, strides[l]) + b[:, None]
            if l < cfg.layers - 1:
                z = np.maximum(z, 0.0)
            h = fake_quantize(z, self.fmt(f"a{l + 1}"))
        return SymbolSeq(flatten_output(h), PAM2)

    def receptive_half_width(self):
        return self.config.receptive_half_width()


def freeze(net: QatNet) -> QuantizedCnn:
    """Round every width up to an integer and snap parameters to their grids."""
    wf = [f.frozen() for f in net.weight_formats]
    af = [f.frozen() for f in net.act_formats]
    return QuantizedCnn(
        net.config,
        [quantize_value(w, f) for w, f in zip(net.weights, wf)],
        [quantize_value(b, f) for b, f in zip(net.biases, wf)],
        wf,
        af,
    )


def quantize_model(model: CnnModel, weight_formats, act_formats):
    """Post-training quantization of a float model at given integer formats."""
    folded = model.folded()
    return QuantizedCnn(
        model.config,
        [quantize_value(w, f) for (w, _), f in zip(folded, weight_formats)],
        [quantize_value(b, f) for (_, b), f in zip(folded, weight_formats)],
        list(weight_formats),
        list(act_formats),
    )


# --- schedule ----------------------------------------------------------------


@dataclass
class QatResult:
    model: QuantizedCnn
    ber: float
    float_ber: float
    trace: List[dict]
    seed: int
    wall_time: float = 0.0

    @property
    def weight_bits(self):
        return float(np.mean([f.total for f in self.model.weight_formats]))

    @property
    def act_bits(self):
        return float(np.mean([f.total for f in self.model.act_formats]))


def _trace_row(it, phase, formats, loss, eval_ber):
    wf, af = formats
    row = {"iteration": it, "phase": phase, "loss": loss}
    for l, f in enumerate(wf):
        row[f"w{l}_int"] = float(f.int_bits)
        row[f"w{l}_frac"] = float(f.frac_bits)
    for j, f in enumerate(af):
        row[f"a{j}_int"] = float(f.int_bits)
        row[f"a{j}_frac"] = float(f.frac_bits)
    row["mean_bp"] = float(np.mean([f.total for f in wf]))
    row["mean_ba"] = float(np.mean([f.total for f in af]))
    row["ber"] = eval_ber
    return row


def qat_train(config, channel_cfg, qat_cfg, train_cfg=None, seed=1, model=None):
    """Float pre-training, joint weight/width training, then fine-tuning at frozen widths.

    Returns a :class:`QatResult` whose ``trace`` holds one row every
    ``trace_every`` iterations (widths, mean B_p/B_a, eval BER at
    checkpoints).
    """
    qat_cfg.validate()
    train_cfg = train_cfg or TrainConfig()
    t0 = time.perf_counter()
    p1, p2, total = qat_cfg.phases
    if model is None:
        model = CnnModel.init(config, make_rng(seed, STREAM_INIT))
    data_rng = make_rng(seed, STREAM_TRAIN)
    guard = guard_symbols(model)
    vp = config.v_p
    n_win = -(-(train_cfg.batch_symbols + 2 * guard) // vp) * vp
    sl = slice(guard, n_win - guard)
    lr = train_cfg.lr
    trace = []

    def checkpoint(it, phase, formats, loss, target):
        due_eval = qat_cfg.eval_every and it % qat_cfg.eval_every == 0
        if not (due_eval or it % qat_cfg.trace_every == 0):
            return
        b = float("nan")
        if due_eval and it < total:
            b = evaluate(target, channel_cfg, qat_cfg.checkpoint_eval_symbols, train_cfg.eval_seed)
        trace.append(_trace_row(it, phase, formats, loss, b))

    adapter = CnnAdapter(model)
    params = adapter.params()
    state = AdamState()
    fp_formats = default_formats(config, qat_cfg.init_int_bits, qat_cfg.init_frac_bits)
    for it in range(p1):
        sym, rx = draw_window(channel_cfg, n_win, data_rng)
        loss, grads = adapter.loss_and_grad(rx.values, sym.values, sl)
        adam_step(params, grads, state, lr, train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
        adapter.update_running()
        checkpoint(it + 1, 1, fp_formats, loss, model)

    float_ber = evaluate(model, channel_cfg, train_cfg.eval_symbols, train_cfg.eval_seed)
    net = QatNet.from_cnn(model, qat_cfg.init_int_bits, qat_cfg.init_frac_bits)
    state = AdamState()
    for it in range(p1, total):
        if it == p2:
            net.freeze_widths()
        params = net.params()
        rates = {k: lr * qat_cfg.width_lr_factor if k in net.widths else lr for k in params}
        sym, rx = draw_window(channel_cfg, n_win, data_rng)
        loss, grads, _ = net.loss_and_grad(rx.values, sym.values, sl, qat_cfg.qlf if it < p2 else 0.0)
        if not np.isfinite(loss):
            raise TrainingError(f"QAT loss became non-finite at iteration {it}", {"iteration": it})
        adam_step(params, grads, state, rates, train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
        if net.widths_trainable:
            net.clamp_widths()
        checkpoint(it + 1, 2 if it < p2 else 3, (net.weight_formats, net.act_formats), loss, net)

    if p2 >= total:
        net.freeze_widths()
    frozen = freeze(net)
    final = evaluate(frozen, channel_cfg, train_cfg.eval_symbols, train_cfg.eval_seed)
    if trace and trace[-1]["iteration"] == total:
        trace[-1]["ber"] = final
    else:
        trace.append(_trace_row(total, 3, (frozen.weight_formats, frozen.act_formats), float("nan"), final))
    return QatResult(frozen, final, float_ber, trace, int(seed), time.perf_counter() - t0)


def write_width_trace(path, trace, header_lines=()):
    """Width-trace CSV: iteration, phase, per-layer widths, mean B_p/B_a, BER."""
    if not trace:
        raise UsageError("empty trace")
    cols = list(trace[0].keys())
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for row in trace:
            w.writerow(["" if (isinstance(v, float) and math.isnan(v)) else (repr(v) if isinstance(v, float) else v) for v in (row[c] for c in cols)])
