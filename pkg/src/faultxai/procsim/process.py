"""Two-unit controlled process: exothermic CSTR with cooling jacket feeding a
cooled separator drum, under four independent PI loops.

Time is in minutes, temperatures in K, flows in m3/min, levels and valve
positions in %.  One recorded sample per ``sample_time``; the ODEs are
integrated with explicit Euler using ``substeps`` steps per sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from ..errors import SimulationError

__all__ = [
    "ARCHETYPES", "STATE_NAMES", "MEASURED", "MANIPULATED", "CHANNELS", "BOUNDARY_NOMINAL", "CHANNEL_UNITS",
    "ProcessParams", "PIController", "ProcessSpec", "FaultScenario", "SimulationResult",
    "steady_state", "default_process_spec", "simulate", "SIM_SCENARIOS", "STEP_SCENARIOS",
]

ARCHETYPES = ("step", "random", "slow_drift", "sticking")

STATE_NAMES = ("reactor_level", "reactor_conc", "reactor_temp", "coolant_outlet_temp",
               "separator_level", "separator_temp")

MEASURED = ("feed_flow", "feed_temp", "reactor_level", "reactor_temp", "reactor_conc",
            "coolant_outlet_temp", "separator_level", "separator_temp")
MANIPULATED = ("coolant_valve", "reactor_outlet_valve", "separator_outlet_valve", "condenser_valve")
CHANNELS = MEASURED + MANIPULATED

# boundary conditions a fault may disturb, with nominal values
BOUNDARY_NOMINAL = {
    "feed_flow": 1.0,             # m3/min
    "feed_temp": 340.0,           # K
    "feed_conc": 2.0,             # kmol/m3
    "coolant_inlet_temp": 330.0,  # K
    "condenser_inlet_temp": 300.0,
    "reaction_rate": 0.1,         # 1/min at the reference temperature
}

CHANNEL_UNITS = {
    "feed_flow": "m3/min", "feed_temp": "K", "reactor_level": "%", "reactor_temp": "K",
    "reactor_conc": "kmol/m3", "coolant_outlet_temp": "K", "separator_level": "%",
    "separator_temp": "K", "coolant_valve": "%", "reactor_outlet_valve": "%",
    "separator_outlet_valve": "%", "condenser_valve": "%",
}


@dataclass(frozen=True)
class ProcessParams:
    reactor_volume_max: float = 20.0      # m3 at 100 % level
    separator_volume_max: float = 10.0
    jacket_volume: float = 2.0
    reference_temp: float = 350.0
    activation_temp: float = 8000.0       # E/R, K
    heat_of_reaction: float = 20.0        # K m3/kmol (per unit rho*cp)
    reactor_ua: float = 2.0               # m3/min (UA / rho*cp)
    coolant_flow_max: float = 4.0 / 3.0   # m3/min at 100 % valve
    reactor_outlet_cv: float = 2.0        # m3/min at 100 % valve, 50 % level
    separator_outlet_cv: float = 2.0
    condenser_capacity: float = 3.0       # m3/min equivalent at 100 % valve


@dataclass(frozen=True)
class PIController:
    """Velocity-form PI loop: ``u += gain*(e - e_prev + dt/reset_time*e)``, ``e = setpoint - meas``.

    A negative gain gives direct action (output rises with the measurement).
    """

    measured: str
    manipulated: str
    gain: float
    reset_time: float
    setpoint: float
    bias: float = 50.0
    low: float = 0.0
    high: float = 100.0


@dataclass(frozen=True)
class ProcessSpec:
    params: ProcessParams = field(default_factory=ProcessParams)
    controllers: tuple[PIController, ...] = ()
    noise_std: Mapping[str, float] = field(default_factory=dict)
    initial_state: Mapping[str, float] = field(default_factory=dict)
    sample_time: float = 1.0
    substeps: int = 10
    duration: int = 500

    def __post_init__(self):
        for c in self.controllers:
            if c.measured not in MEASURED or c.manipulated not in MANIPULATED:
                raise ValueError(f"controller binds unknown channels {c.measured!r} -> {c.manipulated!r}")
            if not (c.low <= c.bias <= c.high):
                raise ValueError(f"controller bias {c.bias} outside [{c.low}, {c.high}]")
        if len({c.manipulated for c in self.controllers}) != len(self.controllers):
            raise ValueError("a manipulated variable is driven by more than one controller")
        for ch in self.noise_std:
            if ch not in MEASURED:
                raise ValueError(f"noise declared for non-measured channel {ch!r}")
        if self.duration < 1 or self.substeps < 1 or self.sample_time <= 0:
            raise ValueError("duration, substeps and sample_time must be positive")

    def without_controllers(self) -> "ProcessSpec":
        return replace(self, controllers=())

    @property
    def setpoints(self) -> dict[str, float]:
        return {c.measured: c.setpoint for c in self.controllers}


@dataclass(frozen=True)
class FaultScenario:
    """A disturbance injected from ``onset_index`` onward.

    ``target`` is a boundary variable (step / random / slow_drift) or a
    manipulated variable (sticking).  ``magnitude`` is the step size, the
    noise std, or the drift slope per sample, in the target's units.
    """

    id: str
    archetype: str
    target: str
    magnitude: float = 0.0
    onset_index: int = 200
    rng_seed: int = 0
    description: str = ""

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise ValueError(f"unknown archetype {self.archetype!r}; expected one of {ARCHETYPES}")
        if self.archetype == "sticking":
            if self.target not in MANIPULATED:
                raise ValueError(f"sticking faults target a manipulated variable, not {self.target!r}")
        elif self.target not in BOUNDARY_NOMINAL:
            raise ValueError(f"unknown fault target {self.target!r}; expected one of {sorted(BOUNDARY_NOMINAL)}")
        if self.archetype in ("step", "slow_drift") and self.magnitude == 0:
            raise ValueError(f"{self.archetype} fault needs a nonzero magnitude")
        if self.archetype == "random" and self.magnitude <= 0:
            raise ValueError("random fault needs a positive noise std")
        if self.onset_index < 0:
            raise ValueError("onset_index must be >= 0")

    def with_seed(self, rng_seed: int) -> "FaultScenario":
        return replace(self, rng_seed=rng_seed)


@dataclass
class SimulationResult:
    data: np.ndarray          # [T, len(CHANNELS)] recorded channels
    states: np.ndarray        # [T, len(STATE_NAMES)] noise-free states at each sample
    channels: tuple[str, ...]
    scenario: FaultScenario | None
    seed: int

    @property
    def onset_index(self) -> int | None:
        return None if self.scenario is None else self.scenario.onset_index

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, self.channels.index(name)]

    def state(self, name: str) -> np.ndarray:
        return self.states[:, STATE_NAMES.index(name)]


def steady_state() -> dict[str, float]:
    """Nominal operating point used as the default initial state and setpoints."""
    return {
        "reactor_level": 50.0,
        "reactor_conc": 1.0,
        "reactor_temp": 350.0,
        "coolant_outlet_temp": 345.0,
        "separator_level": 50.0,
        "separator_temp": 320.0,
    }


def default_process_spec(duration: int = 500) -> ProcessSpec:
    ss = steady_state()
    controllers = (
        PIController("reactor_temp", "coolant_valve", gain=-6.0, reset_time=6.0, setpoint=ss["reactor_temp"]),
        PIController("reactor_level", "reactor_outlet_valve", gain=-0.5, reset_time=20.0,
                     setpoint=ss["reactor_level"]),
        PIController("separator_level", "separator_outlet_valve", gain=-0.5, reset_time=20.0,
                     setpoint=ss["separator_level"]),
        PIController("separator_temp", "condenser_valve", gain=-2.0, reset_time=5.0,
                     setpoint=ss["separator_temp"]),
    )
    noise = {
        "feed_flow": 0.01, "feed_temp": 0.1, "reactor_level": 0.5, "reactor_temp": 0.1,
        "reactor_conc": 0.005, "coolant_outlet_temp": 0.1, "separator_level": 0.5, "separator_temp": 0.1,
    }
    return ProcessSpec(controllers=controllers, noise_std=noise, initial_state=ss, duration=duration)


def _derivatives(x, u, bnd, p: ProcessParams):
    level, conc, temp, tj, slevel, stemp = x
    u_cool, u_rout, u_sout, u_cond = u
    vol = p.reactor_volume_max * level / 100.0
    svol = p.separator_volume_max * slevel / 100.0
    f_in = bnd["feed_flow"]
    f_out = p.reactor_outlet_cv * u_rout / 100.0 * np.sqrt(max(level, 0.0) / 50.0)
    f_prod = p.separator_outlet_cv * u_sout / 100.0 * np.sqrt(max(slevel, 0.0) / 50.0)
    f_cool = p.coolant_flow_max * u_cool / 100.0
    rate = bnd["reaction_rate"] * np.exp(-p.activation_temp * (1.0 / temp - 1.0 / p.reference_temp)) * conc
    q_jacket = p.reactor_ua * (temp - tj)
    d_level = 100.0 * (f_in - f_out) / p.reactor_volume_max
    d_conc = f_in / vol * (bnd["feed_conc"] - conc) - rate
    d_temp = f_in / vol * (bnd["feed_temp"] - temp) + p.heat_of_reaction * rate - q_jacket / vol
    d_tj = f_cool / p.jacket_volume * (bnd["coolant_inlet_temp"] - tj) + q_jacket / p.jacket_volume
    d_slevel = 100.0 * (f_out - f_prod) / p.separator_volume_max
    q_cond = p.condenser_capacity * u_cond / 100.0 * (stemp - bnd["condenser_inlet_temp"])
    d_stemp = f_out / svol * (temp - stemp) - q_cond / svol
    return np.array([d_level, d_conc, d_temp, d_tj, d_slevel, d_stemp])


def _measure(x, bnd) -> dict[str, float]:
    level, conc, temp, tj, slevel, stemp = x
    return {
        "feed_flow": bnd["feed_flow"], "feed_temp": bnd["feed_temp"], "reactor_level": level,
        "reactor_temp": temp, "reactor_conc": conc, "coolant_outlet_temp": tj,
        "separator_level": slevel, "separator_temp": stemp,
    }


def _disturbance(scenario: FaultScenario | None, n: int) -> np.ndarray:
    """Additive offset applied to the scenario's target at each sample."""
    d = np.zeros(n)
    if scenario is None or scenario.archetype == "sticking" or scenario.onset_index >= n:
        return d
    k0 = scenario.onset_index
    if scenario.archetype == "step":
        d[k0:] = scenario.magnitude
    elif scenario.archetype == "slow_drift":
        d[k0:] = scenario.magnitude * np.arange(1, n - k0 + 1)
    elif scenario.archetype == "random":
        rng = np.random.default_rng(scenario.rng_seed)
        d[k0:] = rng.normal(0.0, scenario.magnitude, size=n - k0)
    return d


def simulate(spec: ProcessSpec, scenario: FaultScenario | None = None, seed: int = 0) -> SimulationResult:
    """Run the closed loop for ``spec.duration`` samples.

    Sensor noise comes from ``seed``; fault noise (random archetype) from
    ``scenario.rng_seed``, so samples before onset match a fault-free run
    with the same ``seed`` bit for bit.
    """
    n = spec.duration
    if scenario is not None and scenario.onset_index >= n:
        raise ValueError(f"onset_index {scenario.onset_index} outside run of {n} samples")
    p = spec.params
    init = {**steady_state(), **spec.initial_state}
    x = np.array([init[s] for s in STATE_NAMES], dtype=np.float64)
    u = {m: 50.0 for m in MANIPULATED}
    for c in spec.controllers:
        u[c.manipulated] = c.bias
    e_prev: dict[str, float | None] = {c.manipulated: None for c in spec.controllers}

    rng = np.random.default_rng(seed)
    noise_std = np.array([spec.noise_std.get(ch, 0.0) for ch in MEASURED])
    noise = rng.standard_normal((n, len(MEASURED))) * noise_std
    dist = _disturbance(scenario, n)
    stuck = scenario is not None and scenario.archetype == "sticking"

    data = np.empty((n, len(CHANNELS)))
    states = np.empty((n, len(STATE_NAMES)))
    h = spec.sample_time / spec.substeps
    for k in range(n):
        bnd = dict(BOUNDARY_NOMINAL)
        if scenario is not None and not stuck:
            bnd[scenario.target] += dist[k]
        true_meas = _measure(x, bnd)
        meas = {ch: true_meas[ch] + noise[k, j] for j, ch in enumerate(MEASURED)}
        for c in spec.controllers:
            e = c.setpoint - meas[c.measured]
            prev = e if e_prev[c.manipulated] is None else e_prev[c.manipulated]
            du = c.gain * ((e - prev) + spec.sample_time / c.reset_time * e)
            u[c.manipulated] = min(c.high, max(c.low, u[c.manipulated] + du))
            e_prev[c.manipulated] = e
        if stuck and k >= scenario.onset_index:
            if k == scenario.onset_index:
                frozen = data[k - 1, CHANNELS.index(scenario.target)] if k > 0 else u[scenario.target]
            u[scenario.target] = frozen
        u_vec = np.array([u[m] for m in MANIPULATED])
        data[k, : len(MEASURED)] = [meas[ch] for ch in MEASURED]
        data[k, len(MEASURED) :] = u_vec
        states[k] = x
        for _ in range(spec.substeps):
            x = x + h * _derivatives(x, u_vec, bnd, p)
        if not np.all(np.isfinite(x)):
            bad = [STATE_NAMES[i] for i in np.flatnonzero(~np.isfinite(x))]
            raise SimulationError(k, f"non-finite state {bad} after integrating sample {k}")
        if x[0] <= 0 or x[4] <= 0 or x[2] <= 0:
            raise SimulationError(k, "vessel emptied or temperature collapsed; integration unstable")
    return SimulationResult(data, states, CHANNELS, scenario, seed)


# IDV-style fault library for the built-in process
SIM_SCENARIOS: dict[str, FaultScenario] = {
    s.id: s
    for s in (
        FaultScenario("coolant_inlet_step", "step", "coolant_inlet_temp", 3.0,
                      description="reactor coolant inlet temperature step (IDV4 analogue)"),
        FaultScenario("feed_temp_step", "step", "feed_temp", 3.0,
                      description="feed temperature step (IDV3 analogue)"),
        FaultScenario("condenser_inlet_step", "step", "condenser_inlet_temp", 3.0,
                      description="condenser coolant inlet temperature step (IDV5 analogue)"),
        FaultScenario("feed_loss_step", "step", "feed_flow", -0.15,
                      description="feed supply loss (IDV6 analogue)"),
        FaultScenario("coolant_inlet_random", "random", "coolant_inlet_temp", 2.0,
                      description="random coolant inlet temperature variation (IDV11 analogue)"),
        FaultScenario("kinetics_drift", "slow_drift", "reaction_rate", 2e-4,
                      description="slow drift of reaction kinetics (IDV13 analogue)"),
        FaultScenario("coolant_valve_sticking", "sticking", "coolant_valve",
                      description="reactor coolant valve sticking (IDV14 analogue)"),
    )
}

STEP_SCENARIOS: Sequence[str] = ("coolant_inlet_step", "feed_temp_step", "condenser_inlet_step", "feed_loss_step")
