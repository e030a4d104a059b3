"""Seedable channel simulators: Proakis-B and an IM/DD surrogate.

Both simulators return a :class:`SampleSeq` aligned so that sample
``k * n_os`` is the sampling instant of symbol ``k``.
"""

import csv
import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, UsageError
from .signals import PAM2, RNG_ALGORITHM, SampleSeq, SymbolSeq, make_rng

PROAKIS_B_TAPS = (0.407, 0.815, 0.407)
SPEED_OF_LIGHT = 299_792_458.0

SNR_DEFINITION = "mean noiseless received-sample power / noise variance"


@dataclass(frozen=True)
class ProakisBConfig:
    snr_db: float = 20.0
    n_os: int = 2
    rc_rolloff: float = 0.25
    rc_span: int = 16
    pulse: str = "rc"  # "rc" or "identity"

    kind = "proakis_b"

    def validate(self):
        if not (math.isfinite(self.snr_db) or self.snr_db == math.inf):
            raise ConfigurationError(f"snr_db must be finite or +inf, got {self.snr_db}")
        if self.n_os < 1:
            raise ConfigurationError("n_os must be >= 1")
        if not (0.0 < self.rc_rolloff <= 1.0) or not math.isfinite(self.rc_rolloff):
            raise ConfigurationError("rc_rolloff must lie in (0, 1]")
        if self.rc_span < 1:
            raise ConfigurationError("rc_span must be >= 1")
        if self.pulse not in ("rc", "identity"):
            raise ConfigurationError(f"unknown pulse {self.pulse!r}")


@dataclass(frozen=True)
class ImddSurrogateConfig:
    """Surrogate IM/DD link: intensity modulation, dispersion, square law.

    This is not a fiber model; it only reproduces the mechanism by which
    dispersion turns into a nonlinear impairment after direct detection.
    """

    # 300 ps/nm, full roll-off and 30 dB put the link past the linear
    # equalizer's floor while keeping errors countable; 504 ps/nm
    # (16 ps/nm/km over 31.5 km) is the reference link length
    dispersion_ps_per_nm: float = 300.0
    symbol_rate_hz: float = 40e9
    rrc_rolloff: float = 1.0
    rrc_span: int = 16
    snr_db: float = 30.0
    n_os: int = 2
    wavelength_nm: float = 1550.0
    bias: float = 1.1

    kind = "imdd_surrogate"

    def validate(self):
        for name in ("dispersion_ps_per_nm", "symbol_rate_hz", "rrc_rolloff", "wavelength_nm", "bias"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        if not (math.isfinite(self.snr_db) or self.snr_db == math.inf):
            raise ConfigurationError("snr_db must be finite or +inf")
        if self.symbol_rate_hz <= 0:
            raise ConfigurationError("symbol_rate_hz must be > 0")
        if self.n_os < 2:
            raise ConfigurationError("IM/DD surrogate needs n_os >= 2 (square law doubles the bandwidth)")
        if not (0.0 < self.rrc_rolloff <= 1.0):
            raise ConfigurationError("rrc_rolloff must lie in (0, 1]")


def channel_from_dict(d):
    """Build a channel config from a ``{"kind": ..., **fields}`` mapping."""
    d = dict(d)
    kind = d.pop("kind", "proakis_b")
    if kind == "proakis_b":
        cfg = ProakisBConfig(**d)
    elif kind == "imdd_surrogate":
        cfg = ImddSurrogateConfig(**d)
    else:
        raise ConfigurationError(f"unknown channel kind {kind!r}")
    cfg.validate()
    return cfg


def channel_descriptor(cfg):
    return {"kind": cfg.kind, **asdict(cfg)}


def gen_symbols(n, constellation=PAM2, rng=None):
    """``n`` i.i.d. uniform draws from ``constellation``."""
    if rng is None:
        raise UsageError("gen_symbols needs an explicit rng")
    pts = np.asarray(constellation, dtype=np.float64)
    return SymbolSeq(pts[rng.integers(0, pts.size, size=int(n))], constellation)


def raised_cosine(rolloff, span, n_os):
    """Unit-energy raised-cosine pulse sampled at ``n_os`` per symbol."""
    t = np.arange(-span * n_os // 2, span * n_os // 2 + 1) / n_os
    denom = 1.0 - (2.0 * rolloff * t) ** 2
    singular = np.isclose(denom, 0.0)
    h = np.sinc(t) * np.cos(np.pi * rolloff * t) / np.where(singular, 1.0, denom)
    h[singular] = np.pi / 4.0 * np.sinc(1.0 / (2.0 * rolloff))
    return h / np.sqrt(np.sum(h**2))


def root_raised_cosine(rolloff, span, n_os):
    """Unit-energy root-raised-cosine pulse."""
    t = np.arange(-span * n_os // 2, span * n_os // 2 + 1) / n_os
    b = rolloff
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if np.isclose(ti, 0.0):
            h[i] = 1.0 - b + 4.0 * b / np.pi
        elif np.isclose(abs(ti), 1.0 / (4.0 * b)):
            h[i] = (b / np.sqrt(2.0)) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
            )
        else:
            h[i] = (np.sin(np.pi * ti * (1 - b)) + 4 * b * ti * np.cos(np.pi * ti * (1 + b))) / (
                np.pi * ti * (1 - (4 * b * ti) ** 2)
            )
    return h / np.sqrt(np.sum(h**2))


def _upsample(values, n_os):
    up = np.zeros(values.shape[0] * n_os)
    up[::n_os] = values
    return up


def _centered_filter(x, h):
    """Linear convolution with ``h`` cropped so the filter center aligns with x[0]."""
    d = (h.shape[0] - 1) // 2
    return np.convolve(x, h)[d : d + x.shape[0]]


def _add_noise(clean, snr_db, rng):
    if snr_db == math.inf:
        return clean.copy(), 0.0
    power = float(np.mean(clean**2))
    var = power / 10.0 ** (snr_db / 10.0)
    return clean + rng.normal(0.0, math.sqrt(var), clean.shape), var


def simulate_proakis_b(symbols, cfg, rng=None):
    """Pulse-shape ``symbols`` and pass them through the Proakis-B channel.

    The symbol-spaced taps are expanded to sample spacing by inserting
    ``n_os - 1`` zeros between them. White Gaussian noise is scaled
    against the mean power of the noiseless received samples.
    """
    cfg.validate()
    x = np.asarray(symbols.values if isinstance(symbols, SymbolSeq) else symbols, dtype=np.float64)
    if x.size == 0:
        raise UsageError("symbols must be non-empty")
    n_os = cfg.n_os
    shaped = _upsample(x, n_os)
    if cfg.pulse == "rc":
        shaped = _centered_filter(shaped, raised_cosine(cfg.rc_rolloff, cfg.rc_span, n_os))
    taps = np.zeros(2 * n_os + 1)
    taps[::n_os] = PROAKIS_B_TAPS
    clean = _centered_filter(shaped, taps)
    if cfg.snr_db != math.inf and rng is None:
        raise UsageError("a noisy simulation needs an rng")
    rx, var = _add_noise(clean, cfg.snr_db, rng)
    return SampleSeq(rx, n_os, {"snr_definition": SNR_DEFINITION, "noise_variance": var})


def dispersion_transfer(n, cfg):
    """All-pass chromatic-dispersion transfer function on an FFT grid of size n."""
    fs = cfg.symbol_rate_hz * cfg.n_os
    f = np.fft.fftfreq(n, d=1.0 / fs)
    lam = cfg.wavelength_nm * 1e-9
    d_acc = cfg.dispersion_ps_per_nm * 1e-3  # ps/nm -> s/m
    return np.exp(1j * np.pi * lam**2 * d_acc * f**2 / SPEED_OF_LIGHT)


def apply_dispersion(field, cfg):
    """Propagate a baseband optical field through the dispersive all-pass."""
    spec = np.fft.fft(field)
    return np.fft.ifft(spec * dispersion_transfer(field.shape[0], cfg))


def shaped_field(symbols, cfg):
    """Intensity-modulated optical field before propagation."""
    x = np.asarray(symbols.values if isinstance(symbols, SymbolSeq) else symbols, dtype=np.float64)
    h = root_raised_cosine(cfg.rrc_rolloff, cfg.rrc_span, cfg.n_os)
    drive = _centered_filter(_upsample(x, cfg.n_os), h / h[(h.shape[0] - 1) // 2])
    return np.sqrt(np.maximum(drive + cfg.bias, 0.0))


def simulate_imdd_surrogate(symbols, cfg, rng=None):
    """Surrogate IM/DD link: RRC drive, sqrt field, dispersion, square law."""
    cfg.validate()
    if len(symbols) == 0:
        raise UsageError("symbols must be non-empty")
    field = shaped_field(symbols, cfg)
    if cfg.dispersion_ps_per_nm != 0.0:
        field = apply_dispersion(field.astype(np.complex128), cfg)
    intensity = np.abs(field) ** 2
    clean = intensity - intensity.mean()
    if cfg.snr_db != math.inf and rng is None:
        raise UsageError("a noisy simulation needs an rng")
    rx, var = _add_noise(clean, cfg.snr_db, rng)
    return SampleSeq(rx, cfg.n_os, {"snr_definition": SNR_DEFINITION, "noise_variance": var})


def simulate(symbols, cfg, rng=None):
    if isinstance(cfg, ProakisBConfig):
        return simulate_proakis_b(symbols, cfg, rng)
    if isinstance(cfg, ImddSurrogateConfig):
        return simulate_imdd_surrogate(symbols, cfg, rng)
    raise ConfigurationError(f"unsupported channel config {type(cfg).__name__}")


def make_dataset(channel_cfg, n_symbols, seed, split=0):
    """Symbols and received samples for ``(seed, split)``.

    Different ``split`` keys draw from disjoint generator streams, so a
    training split and an evaluation split never share data.
    """
    rng = make_rng(seed, 0xDA7A, split)
    sym = gen_symbols(n_symbols, PAM2, rng)
    rx = simulate(sym, channel_cfg, rng)
    rx.meta.update({"seed": int(seed), "split": int(split), "rng": RNG_ALGORITHM})
    return sym, rx


# --- dataset files --------------------------------------------------------

DATASET_MAGIC = b"CNNEQDS\x00"
DATASET_VERSION = 1


def write_dataset(path, symbols, samples, channel_cfg, seed):
    """Columnar binary dataset: header, float32 samples, float32 symbols."""
    header = {
        "version": DATASET_VERSION,
        "n_os": samples.n_os,
        "constellation": list(symbols.constellation),
        "seed": int(seed),
        "rng": RNG_ALGORITHM,
        "channel": channel_descriptor(channel_cfg),
        "n_samples": len(samples),
        "n_symbols": len(symbols),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<II", DATASET_VERSION, len(blob)))
        fh.write(blob)
        fh.write(samples.values.astype("<f4").tobytes())
        fh.write(symbols.values.astype("<f4").tobytes())


def read_dataset(path):
    with open(path, "rb") as fh:
        if fh.read(8) != DATASET_MAGIC:
            raise UsageError(f"{path}: not a dataset file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != DATASET_VERSION:
            raise UsageError(f"{path}: unsupported dataset version {version}")
        header = json.loads(fh.read(hlen))
        samples = np.frombuffer(fh.read(4 * header["n_samples"]), dtype="<f4").astype(np.float64)
        syms = np.frombuffer(fh.read(4 * header["n_symbols"]), dtype="<f4").astype(np.float64)
    return (
        SymbolSeq(syms, tuple(header["constellation"])),
        SampleSeq(samples, header["n_os"]),
        header,
    )


def write_dataset_csv(path, symbols, samples):
    """Debug export: one row per sample, symbol column filled at symbol instants."""
    n_os = samples.n_os
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "sample", "symbol"])
        for i, v in enumerate(samples.values):
            sym = repr(float(symbols.values[i // n_os])) if i % n_os == 0 else ""
            w.writerow([i, repr(float(v)), sym])
