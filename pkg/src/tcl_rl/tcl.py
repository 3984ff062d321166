"""Feeder of thermostatically controlled loads (TCLs).

Each load follows a first-order thermal model with a hysteresis thermostat

    dtheta/dt = (theta - theta_a + R * P_elec) / (R * C_eff)
    P_elec    = switch * g0 * v**2

and the feeder's aggregate power at the common bus is the sum of P_elec.
The time integration runs in a numba kernel over all loads at once; the
scalar functions below are the reference semantics for a single load.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numba as nb
import numpy as np

from .errors import InvalidParameterError

N_LOADS = 20

# thermal capacitance of load i, i = 1..20
CAPACITANCES = (
    2.0, 2.2286, 2.4571, 2.6857, 2.9143, 3.1429, 3.3714, 3.6, 3.8286, 4.0571,
    4.2857, 4.5143, 4.7429, 4.9714, 5.2, 5.4286, 5.6571, 5.8857, 6.1143, 6.3429,
)
CAPACITANCE_RANGE = 4.5
INITIAL_THETA = 20.0
SUBSTEPS_PER_SECOND = 100


@dataclass(frozen=True)
class TclParams:
    thermal_resistance_R: float = 200.0
    rated_power_P: float = 0.14
    ambient_theta_a: float = 32.0
    theta_min: float = 19.75
    theta_max: float = 20.25
    capacitance_C: float = 2.0
    conductance_g0: float = 0.14

    def __post_init__(self):
        if not self.theta_min < self.theta_max:
            raise InvalidParameterError("theta_min must be below theta_max")
        if self.capacitance_C <= 0 or self.thermal_resistance_R <= 0:
            raise InvalidParameterError("capacitance and thermal resistance must be positive")
        if self.conductance_g0 < 0:
            raise InvalidParameterError("conductance must be non-negative")


@dataclass
class TclState:
    theta: float
    switch: int
    effective_capacitance: float


@dataclass(frozen=True)
class FeederConfig:
    tcl_params: tuple[TclParams, ...]
    stochastic: bool = False
    capacitance_range: float = CAPACITANCE_RANGE
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.tcl_params) != N_LOADS:
            raise InvalidParameterError(f"feeder needs exactly {N_LOADS} loads")
        if self.capacitance_range < 0:
            raise InvalidParameterError("capacitance_range must be non-negative")

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        """Per-load parameters as float arrays, in load order."""
        p = self.tcl_params
        return {
            "R": np.array([x.thermal_resistance_R for x in p]),
            "theta_a": np.array([x.ambient_theta_a for x in p]),
            "g0": np.array([x.conductance_g0 for x in p]),
            "theta_min": np.array([x.theta_min for x in p]),
            "theta_max": np.array([x.theta_max for x in p]),
            "C": np.array([x.capacitance_C for x in p]),
        }


@dataclass
class FeederState:
    theta: np.ndarray
    switch: np.ndarray
    effective_capacitance: np.ndarray
    time_s: float = 0.0
    bus_voltage_v: float = 1.0

    @property
    def tcl_states(self) -> list[TclState]:
        return [
            TclState(float(t), int(s), float(c))
            for t, s, c in zip(self.theta, self.switch, self.effective_capacitance)
        ]

    def copy(self) -> "FeederState":
        return replace(
            self,
            theta=self.theta.copy(),
            switch=self.switch.copy(),
            effective_capacitance=self.effective_capacitance.copy(),
        )


def default_feeder(stochastic: bool = False, seed: int = 0) -> FeederConfig:
    params = tuple(TclParams(capacitance_C=c) for c in CAPACITANCES)
    return FeederConfig(params, stochastic=stochastic, capacitance_range=CAPACITANCE_RANGE, rng_seed=seed)


def init_states(config: FeederConfig, seed: int | None = None) -> FeederState:
    """Initial feeder state: loads 1-10 on, 11-20 off, all at 20 degC, v = 1.

    In the stochastic case every load gets C_eff = C + u * range with
    u ~ U[0, 1], drawn once here from ``seed`` (``config.rng_seed`` if None).
    """
    c = config.arrays["C"].copy()
    if config.stochastic:
        rng = np.random.default_rng(config.rng_seed if seed is None else seed)
        c = c + rng.random(N_LOADS) * config.capacitance_range
    switch = np.zeros(N_LOADS, dtype=np.int8)
    switch[: N_LOADS // 2] = 1
    return FeederState(
        theta=np.full(N_LOADS, INITIAL_THETA),
        switch=switch,
        effective_capacitance=c,
        time_s=0.0,
        bus_voltage_v=1.0,
    )


def tcl_power(state: TclState, params: TclParams, voltage: float) -> float:
    if voltage < 0:
        raise InvalidParameterError("voltage must be non-negative")
    return state.switch * params.conductance_g0 * voltage * voltage


def thermal_derivative(state: TclState, params: TclParams, voltage: float) -> float:
    if state.effective_capacitance <= 0:
        raise InvalidParameterError("effective capacitance must be positive")
    r = params.thermal_resistance_R
    p = tcl_power(state, params, voltage)
    return (-params.ambient_theta_a + state.theta + r * p) / (r * state.effective_capacitance)


def update_switch(state: TclState, params: TclParams) -> TclState:
    switch = state.switch
    if state.theta < params.theta_min:
        switch = 1
    elif state.theta > params.theta_max:
        switch = 0
    return TclState(state.theta, switch, state.effective_capacitance)


@nb.njit(cache=True)
def _integrate(theta, switch, c_eff, r, theta_a, g0, theta_min, theta_max, v, h, n, exact):
    v2 = v * v
    m = theta.size
    growth = np.empty(m)
    for i in range(m):
        if exact:
            growth[i] = np.exp(h / (r[i] * c_eff[i]))
        else:
            growth[i] = 1.0 + h / (r[i] * c_eff[i])
    for _ in range(n):
        for i in range(m):
            # theta - theta* grows by a fixed factor per sub-step while switch is held
            fixed_point = theta_a[i] - r[i] * switch[i] * g0[i] * v2
            theta[i] = fixed_point + (theta[i] - fixed_point) * growth[i]
            if theta[i] < theta_min[i]:
                switch[i] = 1
            elif theta[i] > theta_max[i]:
                switch[i] = 0


def step_feeder(
    state: FeederState,
    config: FeederConfig,
    voltage: float,
    dt: float = 1.0,
    substeps: int | None = None,
    method: str = "exact",
) -> FeederState:
    """Advance every load by ``dt`` seconds at a fixed bus voltage.

    Fixed-step integration with ``substeps`` equal sub-steps (default 100
    per second); thermostats are checked after each sub-step. ``method`` is
    "exact" (exponential step, exact for the linear ODE while the switch is
    held) or "euler" (explicit Euler).
    """
    if method not in ("exact", "euler"):
        raise InvalidParameterError(f"unknown integration method {method!r}")
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    if substeps is None:
        substeps = max(1, int(round(dt * SUBSTEPS_PER_SECOND)))
    if substeps < 1:
        raise InvalidParameterError("substeps must be >= 1")
    if voltage < 0:
        raise InvalidParameterError("voltage must be non-negative")
    if np.any(state.effective_capacitance <= 0):
        raise InvalidParameterError("effective capacitance must be positive")
    new = state.copy()
    a = config.arrays
    _integrate(
        new.theta, new.switch, new.effective_capacitance,
        a["R"], a["theta_a"], a["g0"], a["theta_min"], a["theta_max"],
        float(voltage), dt / substeps, substeps, method == "exact",
    )
    new.time_s = state.time_s + dt
    new.bus_voltage_v = float(voltage)
    return new


def aggregate_power(state: FeederState, config: FeederConfig, voltage: float | None = None) -> float:
    """Actual power level (APL) at the bus, at ``voltage`` or the state's recorded voltage."""
    v = state.bus_voltage_v if voltage is None else voltage
    return float(np.sum(state.switch * config.arrays["g0"] * v * v))


def closed_form_theta(theta0: float, t: float, params: TclParams, c_eff: float, switch: int, voltage: float = 1.0) -> float:
    """Exact solution of the thermal ODE with the switch held fixed."""
    r = params.thermal_resistance_R
    fixed_point = params.ambient_theta_a - r * switch * params.conductance_g0 * voltage**2
    return fixed_point + (theta0 - fixed_point) * np.exp(t / (r * c_eff))


def closed_form_crossing_time(theta0: float, threshold: float, params: TclParams, c_eff: float, switch: int, voltage: float = 1.0) -> float:
    """Time for the fixed-switch trajectory from ``theta0`` to reach ``threshold``."""
    r = params.thermal_resistance_R
    fixed_point = params.ambient_theta_a - r * switch * params.conductance_g0 * voltage**2
    return r * c_eff * np.log((threshold - fixed_point) / (theta0 - fixed_point))
