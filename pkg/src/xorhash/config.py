from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class StageLatencies:
    """Cycles spent in each PE pipeline component."""

    hash: int = 1
    read: int = 1
    xor_tree: int = 2
    resolve: int = 1

    @property
    def t0(self):
        return self.hash + self.read + self.xor_tree + self.resolve

    def validate(self):
        for name in ("hash", "read", "xor_tree", "resolve"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"latencies.{name}", f"must be an integer >= 1, got {v!r}")


def _is_pow2(n):
    return isinstance(n, int) and n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class SimConfig:
    p: int = 16
    k: int = 16
    entries: int = 1024
    slots: int = 4
    key_bits: int = 64
    value_bits: int = 64
    latencies: StageLatencies = field(default_factory=StageLatencies)
    clock_mhz: float = 370.375
    seed: int = 1
    overflow_mode: str = "defer"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not isinstance(self.p, int) or self.p < 1:
            raise ConfigError("p", f"PE count must be >= 1, got {self.p!r}")
        if not isinstance(self.k, int) or not 1 <= self.k <= self.p:
            raise ConfigError("k", f"mutation PE count must satisfy 1 <= k <= p={self.p}, got {self.k!r}")
        if not _is_pow2(self.entries):
            raise ConfigError("entries", f"must be a power of two, got {self.entries!r}")
        if self.entries > 1 << 62:
            raise ConfigError("entries", "too large")
        if not isinstance(self.slots, int) or not 1 <= self.slots <= 8:
            raise ConfigError("slots", f"must be in 1..8, got {self.slots!r}")
        for name in ("key_bits", "value_bits"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(name, f"must be a positive integer, got {v!r}")
        self.latencies.validate()
        if not self.clock_mhz > 0:
            raise ConfigError("clock_mhz", f"must be positive, got {self.clock_mhz!r}")
        if self.overflow_mode not in ("defer", "reject"):
            raise ConfigError("overflow_mode", f"must be 'defer' or 'reject', got {self.overflow_mode!r}")

    @property
    def t0(self):
        return self.latencies.t0

    @property
    def index_bits(self):
        return self.entries.bit_length() - 1

    @property
    def nsq_ratio(self):
        return self.k / self.p

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown simulation field")
        lat = d.pop("latencies", None)
        if isinstance(lat, dict):
            bad = set(lat) - set(StageLatencies.__dataclass_fields__)
            if bad:
                raise ConfigError(f"latencies.{sorted(bad)[0]}", "unknown stage")
            d["latencies"] = StageLatencies(**lat)
        elif lat is not None:
            d["latencies"] = lat
        return cls(**d)
