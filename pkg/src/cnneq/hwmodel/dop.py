"""Degree-of-parallelism (loop unrolling) bookkeeping for one CNN instance."""

from dataclasses import dataclass

from ..errors import ConfigurationError


@dataclass(frozen=True)
class DopConfig:
    dop_i: int = 1
    dop_o: int = 1
    dop_k: int = 1

    @property
    def total(self):
        return self.dop_i * self.dop_o * self.dop_k


def divisors(n):
    return [d for d in range(1, n + 1) if n % d == 0]


def validate_dop(dop, in_channels, out_channels, kernel):
    """Check the unroll factors against a conv layer of the given shape."""
    if min(dop.dop_i, dop.dop_o, dop.dop_k) < 1:
        raise ConfigurationError("unroll factors must be >= 1")
    if in_channels % dop.dop_i:
        raise ConfigurationError(f"dop_i={dop.dop_i} does not divide {in_channels} input channels")
    if out_channels % dop.dop_o:
        raise ConfigurationError(f"dop_o={dop.dop_o} does not divide {out_channels} output channels")
    if dop.dop_k not in (1, kernel):
        raise ConfigurationError(f"dop_k must be 1 or K={kernel}, got {dop.dop_k}")
    return dop


def layer_dops(in_channels, out_channels, kernel):
    """Every legal unroll triple for one layer shape."""
    return [
        DopConfig(i, o, k)
        for i in divisors(in_channels)
        for o in divisors(out_channels)
        for k in sorted({1, kernel})
    ]


def dop_enumerate(config):
    """Legal DOP totals of the template's hidden C x C x K layer.

    The hidden layer holds the bulk of the MACs and fixes the
    instance's initiation interval; its full unroll ``C*C*K`` is the
    reference for one word per cycle.
    """
    c, k = config.channels, config.kernel
    return sorted({d.total for d in layer_dops(c, c, k)})


def full_dop(config):
    return config.channels * config.channels * config.kernel


def cycles_per_word(config, dop_total):
    """Initiation interval of an instance at the given DOP total."""
    full = full_dop(config)
    if dop_total < 1 or full % dop_total:
        raise ConfigurationError(f"DOP {dop_total} does not divide the full unroll {full}")
    return full // dop_total
