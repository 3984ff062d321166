"""Proportional voltage controller and reference power profiles."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidParameterError

NOMINAL_VOLTAGE = 1.0


@dataclass(frozen=True)
class ControlAction:
    k: float

    def __post_init__(self):
        if self.k < 0:
            raise InvalidParameterError("proportional coefficient k must be >= 0")


@dataclass(frozen=True)
class VoltageLimits:
    v_min: float = 0.9
    v_max: float = 1.1

    def __post_init__(self):
        if not 0 < self.v_min <= 1 <= self.v_max:
            raise InvalidParameterError("voltage limits must satisfy 0 < v_min <= 1 <= v_max")

    def clamp(self, v: float) -> float:
        return min(self.v_max, max(self.v_min, v))


@dataclass(frozen=True)
class ReferenceProfile:
    """Reference power level (RPL) over time: constant, or a single step."""

    kind: str = "constant"
    level_before: float = 1.2
    level_after: float | None = None
    step_time: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "step-down"):
            raise InvalidParameterError(f"unknown profile kind {self.kind!r}")
        if self.level_after is None:
            object.__setattr__(self, "level_after", self.level_before)
        if self.level_before <= 0 or self.level_after <= 0:
            raise InvalidParameterError("reference levels must be positive")
        if self.step_time < 0:
            raise InvalidParameterError("step_time must be >= 0")

    @classmethod
    def constant(cls, level: float) -> "ReferenceProfile":
        return cls("constant", level, level, 0.0)

    @classmethod
    def step_down(cls, before: float, after: float, step_time: float) -> "ReferenceProfile":
        return cls("step-down", before, after, step_time)

    @classmethod
    def parse(cls, text: str) -> "ReferenceProfile":
        """Parse ``constant:<level>`` or ``step:<before>,<after>,<t>``."""
        kind, _, rest = text.partition(":")
        try:
            values = [float(x) for x in rest.split(",")]
        except ValueError:
            raise InvalidParameterError(f"bad profile {text!r}") from None
        if kind == "constant" and len(values) == 1:
            return cls.constant(values[0])
        if kind == "step" and len(values) == 3:
            return cls.step_down(*values)
        raise InvalidParameterError(f"bad profile {text!r}")

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.level_before:g}"
        return f"step:{self.level_before:g},{self.level_after:g},{self.step_time:g}"

    @property
    def levels(self) -> tuple[float, ...]:
        if self.kind == "constant" or self.level_before == self.level_after:
            return (self.level_before,)
        return (self.level_before, self.level_after)


def rpl_at(profile: ReferenceProfile, t: float) -> float:
    if t < 0:
        raise InvalidParameterError("t must be >= 0")
    if profile.kind == "constant" or t < profile.step_time:
        return profile.level_before
    return profile.level_after


def command_voltage(action: ControlAction | float, apl: float, rpl: float, limits: VoltageLimits = VoltageLimits()) -> float:
    """Bus voltage ``clamp(1 + k * (rpl - apl))``."""
    k = action.k if isinstance(action, ControlAction) else action
    return limits.clamp(NOMINAL_VOLTAGE + k * (rpl - apl))


def baseline_voltage() -> float:
    return NOMINAL_VOLTAGE
