"""Symbol/sample sequences, hard decisions, BER and deterministic RNGs."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError

PAM2 = (-1.0, 1.0)

RNG_ALGORITHM = "philox4x64-10"


def make_rng(seed, *stream):
    """Counter-based generator for ``seed`` and an optional stream key.

    Distinct ``stream`` tuples yield statistically independent streams
    for the same seed (used for train/eval separation).
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))


def _check_constellation(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 1 or pts.size == 0:
        raise ConfigurationError("constellation must be a non-empty 1-D list of points")
    if pts.size > 1 and not np.all(np.diff(pts) > 0):
        raise ConfigurationError("constellation points must be strictly increasing")
    return pts


@dataclass(frozen=True)
class SymbolSeq:
    """Real symbol amplitudes together with their constellation."""

    values: np.ndarray
    constellation: tuple = PAM2
    bits_per_symbol: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "constellation", tuple(float(c) for c in self.constellation))
        if self.bits_per_symbol < 1:
            raise ConfigurationError("bits_per_symbol must be >= 1")

    def __len__(self):
        return self.values.shape[0]

    def with_values(self, values):
        return SymbolSeq(values, self.constellation, self.bits_per_symbol)


@dataclass(frozen=True)
class SampleSeq:
    """Received (oversampled) waveform samples."""

    values: np.ndarray
    n_os: int = 2
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.n_os < 1:
            raise ConfigurationError("n_os must be >= 1")

    def __len__(self):
        return self.values.shape[0]


def decide(soft):
    """Map every soft value to the nearest constellation point.

    Ties go to the lower-index point (``argmin`` returns the first hit).
    """
    pts = _check_constellation(soft.constellation)
    idx = np.argmin(np.abs(soft.values[:, None] - pts[None, :]), axis=1)
    return soft.with_values(pts[idx])


def _bit_labels(values, constellation):
    pts = np.asarray(constellation)
    idx = np.searchsorted(pts, values)
    idx = np.clip(idx, 0, pts.size - 1)
    if not np.all(pts[idx] == values):
        raise UsageError("ber() expects decided sequences (values on the constellation)")
    # Gray labelling of the point index
    return idx ^ (idx >> 1)


def ber(decided, reference, skip_head=0, skip_tail=0):
    """Bit error rate between two decided sequences.

    ``skip_head``/``skip_tail`` symbols are excluded on each side to drop
    filter transients.
    """
    if len(decided) != len(reference):
        raise UsageError(f"length mismatch: {len(decided)} vs {len(reference)}")
    n = len(decided)
    stop = n - skip_tail
    if skip_head < 0 or skip_tail < 0 or skip_head >= stop:
        raise UsageError("skip regions leave no symbols to compare")
    bps = decided.bits_per_symbol
    a = _bit_labels(decided.values[skip_head:stop], decided.constellation)
    b = _bit_labels(reference.values[skip_head:stop], reference.constellation)
    diff = a ^ b
    errors = sum(int(np.count_nonzero((diff >> bit) & 1)) for bit in range(bps))
    return errors / (diff.size * bps)
