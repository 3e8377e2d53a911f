"""Target inputs and their declared domains.

An input is either an opaque byte payload or a typed parameter record
(named fields drawn from finite/categorical, integer, or real domains),
optionally paired with a data shape (samples x features).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Union

from .rng import SplitMix64


class InputDomainError(ValueError):
    """Raised when an input does not fit its declared domain."""


@dataclass(frozen=True)
class TargetInput:
    """One concrete program input: a byte payload or a parameter record."""

    data: bytes | None = None
    params: Mapping[str, Any] | None = None
    shape: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if (self.data is None) == (self.params is None):
            raise InputDomainError("exactly one of data/params must be set")
        if self.shape is not None:
            if self.params is None:
                raise InputDomainError("shape applies to parameter records only")
            s, f = self.shape
            if s < 0 or f < 0:
                raise InputDomainError("shape must be nonnegative")

    @property
    def is_bytes(self) -> bool:
        return self.data is not None


def input_size(x: TargetInput, size_field: str = "size") -> int:
    """Size measure: byte length, samples*features, or the declared size field."""
    if x.data is not None:
        return len(x.data)
    if x.shape is not None:
        return x.shape[0] * x.shape[1]
    assert x.params is not None
    if size_field not in x.params:
        raise InputDomainError(f"record has no {size_field!r} field to use as size")
    n = int(x.params[size_field])
    if n < 0:
        raise InputDomainError("size field must be nonnegative")
    return n


@dataclass(frozen=True)
class CategoricalParam:
    name: str
    values: tuple

    def __post_init__(self) -> None:
        if not self.values:
            raise InputDomainError(f"categorical {self.name!r} needs at least one value")

    def contains(self, v: Any) -> bool:
        return v in self.values

    def clamp(self, v: Any) -> Any:
        return v if v in self.values else self.values[0]

    def sample(self, rng: SplitMix64) -> Any:
        return self.values[rng.below(len(self.values))]


@dataclass(frozen=True)
class IntParam:
    name: str
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.hi < self.lo:
            raise InputDomainError(f"int param {self.name!r} has empty range")

    def contains(self, v: Any) -> bool:
        return isinstance(v, int) and not isinstance(v, bool) and self.lo <= v <= self.hi

    def clamp(self, v: Any) -> int:
        return min(max(int(v), self.lo), self.hi)

    def sample(self, rng: SplitMix64) -> int:
        return rng.randint(self.lo, self.hi)


@dataclass(frozen=True)
class RealParam:
    name: str
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.hi < self.lo:
            raise InputDomainError(f"real param {self.name!r} has empty range")

    def contains(self, v: Any) -> bool:
        return isinstance(v, (int, float)) and not isinstance(v, bool) and self.lo <= v <= self.hi

    def clamp(self, v: Any) -> float:
        return min(max(float(v), self.lo), self.hi)

    def sample(self, rng: SplitMix64) -> float:
        return self.lo + rng.random() * (self.hi - self.lo)


ParamSpec = Union[CategoricalParam, IntParam, RealParam]


@dataclass(frozen=True)
class ByteDomain:
    """Byte payloads with length between min_len and max_len inclusive."""

    min_len: int = 0
    max_len: int = 64

    def __post_init__(self) -> None:
        if self.min_len < 0 or self.max_len < self.min_len:
            raise InputDomainError("byte domain needs 0 <= min_len <= max_len")

    def contains(self, x: TargetInput) -> bool:
        return x.is_bytes and self.min_len <= len(x.data) <= self.max_len

    def clamp_data(self, data: bytes) -> bytes:
        if len(data) > self.max_len:
            data = data[: self.max_len]
        if len(data) < self.min_len:
            data = data + b"\x00" * (self.min_len - len(data))
        return data


@dataclass(frozen=True)
class RecordDomain:
    """Typed parameter records, optionally carrying a (samples, features) shape."""

    fields: tuple[ParamSpec, ...]
    size_field: str | None = None
    samples: tuple[int, int] | None = None
    features: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise InputDomainError("duplicate field names in record domain")
        if self.size_field is not None and self.size_field not in names:
            raise InputDomainError(f"size field {self.size_field!r} is not declared")
        for bounds in (self.samples, self.features):
            if bounds is not None and (bounds[0] < 0 or bounds[1] < bounds[0]):
                raise InputDomainError("shape bounds must satisfy 0 <= lo <= hi")

    @property
    def field_map(self) -> dict[str, ParamSpec]:
        return {f.name: f for f in self.fields}

    def contains(self, x: TargetInput) -> bool:
        if x.is_bytes:
            return False
        assert x.params is not None
        fm = self.field_map
        if set(x.params.keys()) != set(fm.keys()):
            return False
        if not all(fm[k].contains(v) for k, v in x.params.items()):
            return False
        if self.samples is not None or self.features is not None:
            if x.shape is None:
                return False
            s, f = x.shape
            if self.samples is not None and not (self.samples[0] <= s <= self.samples[1]):
                return False
            if self.features is not None and not (self.features[0] <= f <= self.features[1]):
                return False
        elif x.shape is not None:
            return False
        return True

    def clamp(self, x: TargetInput) -> TargetInput:
        params = {f.name: f.clamp(x.params[f.name]) if f.name in x.params else f.clamp(0)
                  for f in self.fields}
        shape = None
        if self.samples is not None or self.features is not None:
            s, f = x.shape if x.shape is not None else (0, 0)
            slo, shi = self.samples if self.samples is not None else (s, s)
            flo, fhi = self.features if self.features is not None else (f, f)
            shape = (min(max(s, slo), shi), min(max(f, flo), fhi))
        return TargetInput(params=params, shape=shape)

    def sample(self, rng: SplitMix64) -> TargetInput:
        params = {f.name: f.sample(rng) for f in self.fields}
        shape = None
        if self.samples is not None or self.features is not None:
            slo, shi = self.samples if self.samples is not None else (1, 1)
            flo, fhi = self.features if self.features is not None else (1, 1)
            shape = (rng.randint(slo, shi), rng.randint(flo, fhi))
        return TargetInput(params=params, shape=shape)


InputDomain = Union[ByteDomain, RecordDomain]
