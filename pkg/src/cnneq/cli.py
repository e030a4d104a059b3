"""Config-driven command line runner.

Every subcommand resolves a YAML config (defaults < ``--config`` file <
``--preset`` < ``--set`` overrides < ``--seed``), validates it against the
bundled JSON schema, writes the resolved document next to its results
and stamps each CSV with tool version, config hash and seeds.
"""

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import re
import sys
import time
from importlib import resources

import jsonschema
import numpy as np
import yaml

from . import __version__
from .channels import channel_descriptor, channel_from_dict, make_dataset, write_dataset, write_dataset_csv
from .checkpoint import dump_checkpoint, load_checkpoint, save_checkpoint
from .equalizers import CnnConfig, CnnModel, FirConfig, VolterraConfig, mac_count
from .errors import CnneqError, ConfigurationError, InfeasibleError, TrainingError, UsageError
from .signals import make_rng

log = logging.getLogger("cnneq")

SUBCOMMANDS = ("simulate", "train", "evaluate", "quantize", "dse", "hwsim", "timing", "lutgen", "dump")

DEFAULTS = {
    "seeds": [1, 2, 3],
    "output": {"dir": None},
    "channel": {"kind": "proakis_b"},
    "model": {"family": "cnn", "v_p": 8, "layers": 3, "kernel": 9, "channels": 5, "n_os": 2, "padding": 10, "bias": False},
    "training": {"iterations": 10000, "lr": 0.001, "batch_symbols": 2048, "eval_symbols": 1000000, "eval_every": 0},
    "quantization": {"qlf": [0.5, 0.05, 0.005, 0.0005], "phases": [2000, 10000, 15000]},
    "dse": {"preset": "desk", "families": ["cnn", "fir", "volterra"], "dsp_avail": 9648, "t_req_baud": 40e9, "f_clk": 200e6},
    "hardware": {
        "n_i": 64, "f_clk": 200e6, "l_inst": 7320, "o_act": None, "t_req": [80e9],
        "l_inst_sweep": [1024, 2048, 4096, 8192], "rounds": 6, "dop": None,
        "stream_samples": 100000, "checkpoint": None,
    },
    "simulate": {"n_symbols": 100000, "split": 0, "csv": False},
    "evaluate": {"checkpoint": None, "n_symbols": 1000000},
}

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_TRAINING = 0, 2, 3, 4


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``2e12``-style floats as numbers."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def yaml_load(text):
    return yaml.load(text, Loader=_Loader)


# --- configuration -------------------------------------------------------------


def load_schema():
    return json.loads(resources.files("cnneq").joinpath("schema/config.schema.json").read_text())


def deep_merge(base, update):
    out = copy.deepcopy(base)
    for k, v in (update or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(cfg, assignment):
    """Apply one ``dotted.key=value`` override; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigurationError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"--set {key}: {p} is not a section")
    node[parts[-1]] = yaml_load(raw)
    return cfg


def validate_config(cfg):
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config error at {path}: {exc.message}") from None
    return cfg


def resolve_config(args):
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            cfg = deep_merge(cfg, yaml_load(fh) or {})
    if getattr(args, "preset", None):
        cfg["dse"]["preset"] = args.preset
    for s in args.set or ():
        apply_override(cfg, s)
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    validate_config(cfg)
    # record every channel field so the resolved document is self-contained
    cfg["channel"] = channel_descriptor(channel_from_dict(cfg["channel"]))
    return validate_config(cfg)


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance(cfg):
    return [
        f"tool cnneq {__version__}",
        f"config_hash {config_hash(cfg)}",
        f"seeds {','.join(str(s) for s in cfg['seeds'])}",
    ]


def output_dir(args, cfg, sub):
    out = args.out or cfg["output"]["dir"]
    if not out:
        out = os.path.join(os.environ.get("CNNEQ_OUT", "runs"), sub)
    os.makedirs(out, exist_ok=True)
    return out


def write_resolved(out, cfg):
    with open(os.path.join(out, "resolved_config.yaml"), "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


def write_walltime(out, entries):
    """Wall-clock timings live in a sidecar so result files stay reproducible."""
    with open(os.path.join(out, "walltime.json"), "w") as fh:
        json.dump(entries, fh, indent=1, sort_keys=True)


def model_config(cfg):
    m = cfg["model"]
    fam = m.get("family", "cnn")
    n_os = m.get("n_os", 2)
    if fam == "cnn":
        return CnnConfig(m["v_p"], m["layers"], m["kernel"], m["channels"], n_os, m.get("padding", 10), m.get("bias", False)).validate()
    if fam == "fir":
        if "taps" not in m:
            raise ConfigurationError("model.taps is required for the fir family")
        return FirConfig(m["taps"], n_os).validate()
    for k in ("m1", "m2", "m3"):
        if k not in m:
            raise ConfigurationError(f"model.{k} is required for the volterra family")
    return VolterraConfig(m["m1"], m["m2"], m["m3"], n_os).validate()


def train_config(cfg):
    from .training import TrainConfig

    t = dict(cfg["training"])
    return TrainConfig(seeds=tuple(cfg["seeds"]), **t).validate()


def _csv_header(fh, cfg):
    for line in provenance(cfg):
        fh.write(f"# {line}\n")


def _r(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


# --- subcommands ---------------------------------------------------------------


def cmd_simulate(args, cfg, out):
    ch = channel_from_dict(cfg["channel"])
    sc = cfg["simulate"]
    wall = {}
    for seed in cfg["seeds"]:
        t0 = time.perf_counter()
        sym, rx = make_dataset(ch, sc["n_symbols"], seed, sc["split"])
        write_dataset(os.path.join(out, f"dataset_seed{seed}.bin"), sym, rx, ch, seed)
        if sc["csv"]:
            write_dataset_csv(os.path.join(out, f"dataset_seed{seed}.csv"), sym, rx)
        wall[f"seed{seed}"] = time.perf_counter() - t0
    return wall


def cmd_train(args, cfg, out):
    from .training import train_worst_of_n, write_train_log

    ch = channel_from_dict(cfg["channel"])
    mc = model_config(cfg)
    tc = train_config(cfg)
    res = train_worst_of_n(mc, ch, tc)
    hdr = provenance(cfg)
    for r in res.results:
        if r.failed:
            continue
        lineage = {"seed": r.seed, "eval_seed": tc.eval_seed, "config_hash": config_hash(cfg)}
        save_checkpoint(os.path.join(out, f"model_seed{r.seed}.ckpt"), r.model, lineage)
        write_train_log(os.path.join(out, f"train_log_seed{r.seed}.csv"), r, hdr)
    with open(os.path.join(out, "summary.csv"), "w") as fh:
        _csv_header(fh, cfg)
        fh.write("model,seed,mac,ber,failed\n")
        for r in res.results:
            fh.write(f"{mc.describe()},{r.seed},{_r(float(mac_count(mc)))},{_r(r.ber)},{int(r.failed)}\n")
        fh.write(f"{mc.describe()},worst,{_r(float(mac_count(mc)))},{_r(res.worst_ber)},0\n")
    print(f"{mc.describe()}: worst-of-{len(res.results)} BER {res.worst_ber:.4g}")
    return {f"seed{r.seed}": r.wall_time for r in res.results}


def cmd_evaluate(args, cfg, out):
    from .training import evaluate

    path = args.checkpoint or cfg["evaluate"]["checkpoint"]
    if not path:
        raise ConfigurationError("evaluate needs a checkpoint (--checkpoint or evaluate.checkpoint)")
    model, header = load_checkpoint(path)
    ch = channel_from_dict(cfg["channel"])
    tc = train_config(cfg)
    t0 = time.perf_counter()
    b = evaluate(model, ch, cfg["evaluate"]["n_symbols"], tc.eval_seed)
    with open(os.path.join(out, "evaluate.csv"), "w") as fh:
        _csv_header(fh, cfg)
        fh.write("checkpoint,family,n_symbols,ber\n")
        fh.write(f"{os.path.basename(path)},{header['family']},{cfg['evaluate']['n_symbols']},{_r(b)}\n")
    print(f"BER {b:.4g}")
    return {"evaluate": time.perf_counter() - t0}


def cmd_quantize(args, cfg, out):
    from .quantization import QatConfig, qat_train, write_width_trace

    ch = channel_from_dict(cfg["channel"])
    mc = model_config(cfg)
    if not isinstance(mc, CnnConfig):
        raise ConfigurationError("quantize supports the cnn family only")
    tc = train_config(cfg)
    q = dict(cfg["quantization"])
    qlfs = q.pop("qlf")
    q["phases"] = tuple(q["phases"])
    hdr = provenance(cfg)
    rows, wall = [], {}
    for seed in cfg["seeds"]:
        for qlf in qlfs:
            qc = QatConfig(qlf=qlf, **q)
            r = qat_train(mc, ch, qc, tc, seed)
            tag = f"qlf{qlf:g}_seed{seed}"
            write_width_trace(os.path.join(out, f"width_trace_{tag}.csv"), r.trace, hdr)
            save_checkpoint(os.path.join(out, f"quantized_{tag}.ckpt"), r.model, {"seed": seed, "qlf": qlf})
            rows.append((qlf, seed, r))
            wall[tag] = r.wall_time
    with open(os.path.join(out, "summary.csv"), "w") as fh:
        _csv_header(fh, cfg)
        fh.write("qlf,seed,ber,mean_weight_bits,mean_act_bits,formats\n")
        for qlf, seed, r in rows:
            fm = " ".join(f.label() for f in r.model.weight_formats + r.model.act_formats)
            fh.write(f"{qlf!r},{seed},{_r(r.ber)},{_r(r.weight_bits)},{_r(r.act_bits)},{fm}\n")
            print(f"QLF {qlf:g} seed {seed}: BER {r.ber:.4g}, weights {r.weight_bits:.2f} b, activations {r.act_bits:.2f} b")
    return wall


def cmd_dse(args, cfg, out):
    from .dse import (
        DesignSpace,
        enumerate_space,
        fronts_by_family,
        mac_budget,
        run_dse,
        write_front,
        write_gnuplot,
        write_points,
    )

    d = cfg["dse"]
    ch = channel_from_dict(cfg["channel"])
    tc = train_config(cfg)
    space = DesignSpace.preset(d["preset"])
    configs = enumerate_space(space, tuple(d["families"]))
    points, wall = run_dse(configs, ch, tc, jobs=args.jobs)
    hdr = provenance(cfg)
    budget = mac_budget(d["dsp_avail"], d["t_req_baud"], d["f_clk"])
    write_points(os.path.join(out, "points.csv"), points, len(tc.seeds), hdr)
    fronts = fronts_by_family(points)
    write_front(os.path.join(out, "front.csv"), fronts, hdr + [f"mac_budget {budget!r}"])
    write_gnuplot(os.path.join(out, "dse.dat"), points, fronts, budget)
    print(f"{len(points)} configurations evaluated; MAC budget {budget:.4g}")
    return {"dse_total_cpu": wall}


def _hw_params(cfg, l_inst=None, model_cfg=None):
    from .hwmodel import TimingParams

    h = cfg["hardware"]
    mc = model_cfg or model_config(cfg)
    if not isinstance(mc, CnnConfig):
        raise ConfigurationError("hardware commands need a cnn model section")
    return TimingParams.for_model(mc, h["n_i"], l_inst or h["l_inst"], h["f_clk"], h["o_act"])


def _hw_model(cfg):
    """Quantized model for hwsim: a checkpoint, or a random CNN on fixed formats."""
    from .quantization import FixedFormat, QuantizedCnn, quantize_model

    path = cfg["hardware"]["checkpoint"]
    if path:
        model, _ = load_checkpoint(path)
        if not isinstance(model, QuantizedCnn):
            raise ConfigurationError("hardware.checkpoint must hold a quantized CNN")
        return model
    mc = model_config(cfg)
    base = CnnModel.init(mc, make_rng(cfg["seeds"][0], 0x4A5D))
    wf = [FixedFormat(True, 1, 10)] * mc.layers
    af = [FixedFormat(True, 3, 8)] + [FixedFormat(False, 3, 8)] * (mc.layers - 1) + [FixedFormat(True, 3, 8)]
    return quantize_model(base, wf, af)


def cmd_hwsim(args, cfg, out):
    from .hwmodel import monolithic_reference, partition_process_merge, timing, timing_sweep, write_timing_sweep

    h = cfg["hardware"]
    q = _hw_model(cfg)
    g = q.config.group
    l_inst = -(-h["l_inst"] // g) * g
    if l_inst != h["l_inst"]:
        log.warning("hwsim: l_inst %d rounded up to %d (multiple of v_p*n_os)", h["l_inst"], l_inst)
    p = _hw_params(cfg, l_inst, model_cfg=q.config)
    ch = channel_from_dict(cfg["channel"])
    t0 = time.perf_counter()
    n_sym = h["stream_samples"] // q.config.n_os
    _, rx = make_dataset(ch, n_sym, cfg["seeds"][0], 3)
    res = partition_process_merge(rx, q, p, h["dop"])
    ref = monolithic_reference(rx, q, p)
    mism = int(np.count_nonzero(res.symbols.values != ref.values))
    model = timing(p)
    with open(os.path.join(out, "hwsim.csv"), "w") as fh:
        _csv_header(fh, cfg)
        fh.write("n_i,l_inst,o_act,dop,symbols,mismatches,cycles,sim_latency,model_latency,sim_t_net,model_t_net,padded\n")
        fh.write(
            f"{p.n_i},{p.l_inst},{p.o_act},{h['dop'] or ''},{len(res.symbols)},{mism},{res.cycles},"
            f"{_r(res.report.latency)},{_r(model.latency)},{_r(res.report.throughput)},{_r(model.t_net)},{int(res.padded)}\n"
        )
    rows = timing_sweep(p, h["l_inst_sweep"], h["rounds"])
    write_timing_sweep(os.path.join(out, "timing_sweep.csv"), rows, provenance(cfg))
    print(f"{len(res.symbols)} symbols, {mism} mismatches vs monolithic, {res.cycles} cycles")
    if mism:
        raise UsageError(f"partitioned output differs from monolithic inference on {mism} symbols")
    return {"hwsim": time.perf_counter() - t0}


def cmd_timing(args, cfg, out):
    from .hwmodel import timing

    p = _hw_params(cfg).validate()
    t = timing(p)
    with open(os.path.join(out, "timing.csv"), "w") as fh:
        _csv_header(fh, cfg)
        fh.write("n_i,v_p,f_clk,l_inst,o_sym,o_act,l_ol,t_init,latency,t_p,t_net,t_max\n")
        fh.write(
            f"{p.n_i},{p.v_p},{_r(p.f_clk)},{p.l_inst},{p.o_sym},{p.o_act},{p.l_ol},"
            f"{_r(t.t_init)},{_r(t.latency)},{_r(t.t_p)},{_r(t.t_net)},{_r(t.t_max)}\n"
        )
    print(f"latency {t.latency * 1e6:.4g} us, T_net {t.t_net / 1e9:.6g} Gsamples/s, T_max {t.t_max / 1e9:.6g} Gsamples/s")
    return {}


def cmd_lutgen(args, cfg, out):
    from .hwmodel import lut_generate, write_lut

    p = _hw_params(cfg)
    table = lut_generate(cfg["hardware"]["t_req"], p)
    write_lut(os.path.join(out, "lut.csv"), table, provenance(cfg))
    bad = [t for t, l in table if l is None]
    for t, l in table:
        print(f"{t:.6g} -> {'infeasible' if l is None else l}")
    if bad and len(bad) == len(table):
        raise InfeasibleError(f"every requested throughput exceeds T_max={p.t_max:.6g}")
    return {}


def cmd_dump(args, cfg, out):
    path = args.checkpoint or cfg["evaluate"]["checkpoint"]
    if not path:
        raise ConfigurationError("dump needs --checkpoint")
    text = dump_checkpoint(path)
    if args.out:
        with open(os.path.join(out, os.path.basename(path) + ".txt"), "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return {}


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "quantize": cmd_quantize,
    "dse": cmd_dse,
    "hwsim": cmd_hwsim,
    "timing": cmd_timing,
    "lutgen": cmd_lutgen,
    "dump": cmd_dump,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="cnneq", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cnneq {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-path override (repeatable)")
    common.add_argument("--out", help="output directory (default: $CNNEQ_OUT/<command> or runs/<command>)")
    common.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent jobs")
    common.add_argument("--preset", choices=("desk", "paper"), help="design-space preset for dse")
    common.add_argument("--checkpoint", help="checkpoint for evaluate/dump")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = output_dir(args, cfg, args.command) if (args.command != "dump" or args.out) else None
        if out:
            write_resolved(out, cfg)
        wall = COMMANDS[args.command](args, cfg, out)
        if out and wall:
            write_walltime(out, wall)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (CnneqError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
