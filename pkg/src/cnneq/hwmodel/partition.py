"""Bit-exact functional model and word-level cycle model of the partitioned pipeline.

The input stream is cut into sub-sequences of ``l_inst`` samples. The
overlap generator widens each one by ``o_act`` samples per side (zeros at
the stream ends), a binary tree of stream splitters hands sub-sequence
``j`` of every round to instance ``j``, the instances run the quantized
CNN, a mirrored merge tree restores the order and the overlap remover
drops the widened borders.
"""

import csv
import math
from dataclasses import dataclass, field
import numpy as np

from .. import kernels
from ..errors import UsageError
from ..signals import PAM2, SymbolSeq
from .dop import cycles_per_word
from .timing import TimingParams, timing


# --- functional model ----------------------------------------------------------


def _check_alignment(params, overlap):
    g = params.v_p * params.n_os
    if params.l_inst % g:
        raise UsageError(f"l_inst={params.l_inst} must be a multiple of v_p*n_os={g}")
    if overlap % g:
        raise UsageError(f"overlap={overlap} must be a multiple of v_p*n_os={g}")


def pad_to_rounds(x, params):
    """Zero-pad ``x`` to a whole number of rounds; returns (padded, flag)."""
    blk = params.l_inst * params.n_i
    rem = x.shape[0] % blk
    if rem == 0 and x.shape[0] > 0:
        return x, False
    return np.concatenate([x, np.zeros(blk - rem if rem else blk)]), True


def overlap_generate(x, params, overlap):
    """Widened sub-sequences, one row per sub-sequence, in stream order."""
    n_sub = x.shape[0] // params.l_inst
    framed = np.pad(x, (overlap, overlap))
    idx = np.arange(n_sub)[:, None] * params.l_inst + np.arange(params.l_inst + 2 * overlap)[None, :]
    return framed[idx]


def split_tree(items, n_i):
    """Route items through log2(n_i) levels of two-way splitters.

    Each splitter sends alternating contiguous halves of its block to
    port 0 and port 1; leaf ``j`` ends up with every item whose index
    within a round of ``n_i`` items is ``j``.
    """
    streams = [list(items)]
    block = n_i
    while block > 1:
        half = block // 2
        nxt = []
        for s in streams:
            p0, p1 = [], []
            for start in range(0, len(s), block):
                p0.extend(s[start : start + half])
                p1.extend(s[start + half : start + block])
            nxt.extend([p0, p1])
        streams = nxt
        block = half
    return streams


def merge_tree(streams, n_i):
    """Inverse of :func:`split_tree`."""
    block = 1
    while len(streams) > 1:
        nxt = []
        for a, b in zip(streams[::2], streams[1::2]):
            out = []
            for start in range(0, max(len(a), len(b)), block):
                out.extend(a[start : start + block])
                out.extend(b[start : start + block])
            nxt.append(out)
        streams = nxt
        block *= 2
    return streams[0]


def functional_partition(samples, qmodel, params, overlap=None):
    """Partitioned quantized inference; returns (symbols, padded flag)."""
    x = np.asarray(getattr(samples, "values", samples), dtype=np.float64)
    params.validate()
    o = params.o_act if overlap is None else overlap
    _check_alignment(params, o)
    x, padded = pad_to_rounds(x, params)
    subs = overlap_generate(x, params, o)
    per_instance = split_tree(range(subs.shape[0]), params.n_i)
    drop = o // params.n_os
    keep = params.l_inst // params.n_os
    outputs = {}
    for inst in per_instance:
        for j in inst:
            y = qmodel.forward(subs[j]).values
            outputs[j] = y[drop : drop + keep]
    order = merge_tree(per_instance, params.n_i)
    return SymbolSeq(np.concatenate([outputs[j] for j in order]), PAM2), padded


def monolithic_reference(samples, qmodel, params, overlap=None):
    """Whole-stream quantized inference framed by the same zero borders."""
    x = np.asarray(getattr(samples, "values", samples), dtype=np.float64)
    o = params.o_act if overlap is None else overlap
    x, _ = pad_to_rounds(x, params)
    y = qmodel.forward(np.pad(x, (o, o))).values
    d = o // params.n_os
    return SymbolSeq(y[d : d + x.shape[0] // params.n_os], PAM2)


# --- cycle model -----------------------------------------------------------------


@dataclass
class CycleReport:
    cycles: int
    latency_cycles: int
    latency: float  # s
    throughput: float  # samples/s, steady state
    emissions: np.ndarray = field(repr=False)  # cycle of every kept output symbol
    round_done: np.ndarray = field(repr=False)


def _ports(arr, words, block, width):
    """One splitter level: blocks alternate between ports, each a rate-limited queue."""
    out = []
    n = arr.shape[0]
    blk_id = np.arange(n) // block
    for port in (0, 1):
        sel = (blk_id % 2) == port
        dep = kernels.queue_departures(arr[sel], width, 1, 1)
        out.append((dep, words[sel]))
    return out


def cycle_simulate(params, rounds, dop_total=None, config=None):
    """Word-level timing of ``rounds`` rounds through the partitioned pipeline.

    A word of ``V_p`` samples enters the splitter tree at ``N_i`` words
    per cycle. Level ``d`` splitter ports move ``N_i / 2**(d+1)`` words
    per cycle with a one-cycle register. Each instance consumes one word
    every ``full_dop / dop`` cycles and emits the ``V_p`` symbols of a
    pass ``L`` cycles after the last sample of its receptive field has
    been consumed. The merge tree mirrors the splitters in symbol units.
    """
    p = params.validate()
    o = p.o_act
    _check_alignment(p, o)
    n_i, v_p, n_os = p.n_i, p.v_p, p.n_os
    w_ol = p.l_ol // v_p
    service = 1 if dop_total is None else cycles_per_word(config, dop_total)
    depth = p.layers
    n_words = rounds * n_i * w_ol
    words = np.arange(n_words, dtype=np.int64)
    arrival = words // n_i

    # splitter tree
    streams = [(arrival, words)]
    levels = int(math.log2(n_i))
    for d in range(levels):
        block = w_ol * n_i >> (d + 1)
        width = n_i >> (d + 1)
        nxt = []
        for arr, ws in streams:
            nxt.extend(_ports(arr, ws, block, width))
        streams = nxt

    # instances
    g = v_p * n_os
    passes = p.l_ol // g
    need = np.minimum(np.arange(passes) * g + p.o_sym, p.l_ol - 1) // v_p
    sym_streams = []
    for arr, ws in streams:
        consumed = kernels.queue_departures(arr, 1, 0, service)
        per_sub = consumed.reshape(-1, w_ol)
        ready = per_sub[:, need] + depth  # (subs, passes)
        sym_streams.append(np.repeat(ready.reshape(-1), v_p))

    # merge tree (symbols)
    sym_per_sub = p.l_ol // n_os
    block = sym_per_sub
    width = v_p * n_i // n_os >> levels
    while len(sym_streams) > 1:
        width *= 2
        nxt = []
        for a, b in zip(sym_streams[::2], sym_streams[1::2]):
            na = a.reshape(-1, block)
            nb = b.reshape(-1, block)
            merged = np.stack([na, nb], axis=1).reshape(-1)
            nxt.append(kernels.queue_departures(merged, width, 1, 1))
        sym_streams = nxt
        block *= 2
    emitted = sym_streams[0].reshape(rounds * n_i, sym_per_sub)

    # overlap removal
    drop = o // n_os
    keep = p.l_inst // n_os
    kept = emitted[:, drop : drop + keep]
    q = np.arange(drop, drop + keep)
    sub = np.arange(rounds * n_i)[:, None]
    top_word = sub * w_ol + (q[None, :] * n_os) // v_p
    lat = kept - top_word // n_i
    lat_cycles = int(lat.max())
    round_done = kept.reshape(rounds, n_i * keep).max(axis=1)
    if rounds >= 3:
        r0, r1 = 1, rounds - 1
        span = float(round_done[r1] - round_done[r0])
        thr = (r1 - r0) * n_i * p.l_inst / span * p.f_clk
    else:
        thr = float("nan")
    return CycleReport(
        int(emitted.max()) + 1,
        lat_cycles,
        lat_cycles / p.f_clk,
        thr,
        kept.reshape(-1),
        round_done,
    )


@dataclass
class HwSimResult:
    symbols: SymbolSeq
    cycles: int
    report: CycleReport
    padded: bool

    def __iter__(self):
        yield self.symbols
        yield self.cycles


def partition_process_merge(samples, qmodel, params, dop=None):
    """Functional output plus cycle count of the partitioned pipeline.

    ``dop`` is a DOP total (``None`` for the full unroll). Unpacks as
    ``(symbols, cycles)``.
    """
    x = np.asarray(getattr(samples, "values", samples), dtype=np.float64)
    if qmodel.config.v_p != params.v_p or qmodel.config.n_os != params.n_os:
        raise UsageError("model and timing parameters disagree on v_p / n_os")
    syms, padded = functional_partition(x, qmodel, params)
    blk = params.l_inst * params.n_i
    rounds = -(-max(x.shape[0], 1) // blk)
    rep = cycle_simulate(params, rounds, dop, qmodel.config)
    return HwSimResult(syms, rep.cycles, rep, padded)


def timing_sweep(base, l_insts, rounds=6):
    """Model vs simulated latency and net throughput over sub-sequence lengths."""
    rows = []
    for l in l_insts:
        p = TimingParams(base.n_i, base.v_p, base.n_os, base.f_clk, l, base.kernel, base.layers, base.o_act_override)
        model = timing(p)
        sim = cycle_simulate(p, rounds)
        rows.append(
            {
                "l_inst": l,
                "model_latency": model.latency,
                "sim_latency": sim.latency,
                "model_t_net": model.t_net,
                "sim_t_net": sim.throughput,
            }
        )
    return rows


def write_timing_sweep(path, rows, header_lines=()):
    cols = ["l_inst", "model_latency", "sim_latency", "model_t_net", "sim_t_net"]
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r["l_inst"]] + [repr(float(r[c])) for c in cols[1:]])
