"""Three-tank system (Torricelli outflows, explicit Euler).

Recorded vector per sample: ``z = [Q1, Q2, h1, h2, h3]`` (cm^3/s, cm).

Mass balances, tank area ``C``::

    C dh1/dt = Q1 - Q13
    C dh2/dt = Q2 + Q32 - Q20
    C dh3/dt = Q13 - Q32
    Q13 = a1 tau sign(h1 - h3) sqrt(2 g |h1 - h3|)
    Q32 = a3 tau sign(h3 - h2) sqrt(2 g |h3 - h2|)
    Q20 = a2 tau sqrt(2 g h2)

Component faults: slots ``leak1..leak3`` (f5..f7) drain ``a_i tau f sqrt(2 g h_i)``
from tank i, and ``f8`` scales the 1->3 pipe flow by ``1 + f8``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import SimulationError
from .faults import ACTUATOR, COMPONENT, OBSERVATION, FaultProfile

log = logging.getLogger(__name__)

C_AREA = 154.0  # cm^2
TAU = 0.5  # cm^2, pipe cross-section
A1, A2, A3 = 0.46, 0.60, 0.45
G = 980.0  # cm/s^2
H_MAX = 62.0
Q_MAX = 150.0
M_Z = 5
CHANNELS = ("Q1", "Q2", "h1", "h2", "h3")

Q_NOMINAL = (30.0, 30.0)
Q_NOISE_STD = 0.05
H_NOISE_STD = 0.02
H0 = (40.0, 20.0, 30.0)
DT = 1.0
BURN_IN = 4000
ONSET = 200


def flows(h1, h2, h3, f8=0.0):
    """Inter-tank and outlet flows ``(Q13, Q32, Q20)``."""
    d13 = h1 - h3
    d32 = h3 - h2
    q13 = A1 * TAU * np.sign(d13) * np.sqrt(2.0 * G * np.abs(d13))
    q13 = q13 + A1 * TAU * f8 * np.sign(d13) * np.sqrt(2.0 * G * np.abs(d13))
    q32 = A3 * TAU * np.sign(d32) * np.sqrt(2.0 * G * np.abs(d32))
    q20 = A2 * TAU * np.sqrt(2.0 * G * np.maximum(h2, 0.0))
    return q13, q32, q20


def tts_derivatives(h, q1, q2, leak=(0.0, 0.0, 0.0), f8=0.0):
    """Level derivatives in cm/s for levels ``h = (h1, h2, h3)``."""
    h1, h2, h3 = h
    q13, q32, q20 = flows(h1, h2, h3, f8)
    dh1 = (q1 - q13) / C_AREA
    dh2 = (q2 + q32 - q20) / C_AREA
    dh3 = (q13 - q32) / C_AREA
    # leaks are flows, so they share the 1/C scaling of the balances
    a = (A1, A2, A3)
    dh = [dh1, dh2, dh3]
    for i in range(3):
        if leak[i]:
            dh[i] = dh[i] - a[i] * TAU * leak[i] * np.sqrt(2.0 * G * max(h[i], 0.0)) / C_AREA
    return tuple(dh)


@dataclass
class TtsState:
    h1: float = H0[0]
    h2: float = H0[1]
    h3: float = H0[2]
    dt: float = DT
    clamped: int = 0
    steps: int = 0

    @property
    def levels(self):
        return (self.h1, self.h2, self.h3)


def tts_step(state, q1, q2, leak=(0.0, 0.0, 0.0), f8=0.0, actuator=(0.0, 0.0), sensor=(0.0, 0.0, 0.0)):
    """One Euler step with commanded inputs ``q1, q2``.

    Actuator faults change the delivered flow, which is also what gets
    recorded; sensor faults only touch the recorded levels.

    Returns ``(y, z)`` with ``y = [h1, h2, h3]`` (true levels after the step)
    and ``z = [Q1, Q2, h1, h2, h3]`` as recorded (without measurement noise).
    """
    q1 = float(np.clip(q1 + actuator[0], 0.0, Q_MAX))
    q2 = float(np.clip(q2 + actuator[1], 0.0, Q_MAX))
    dh = tts_derivatives(state.levels, q1, q2, leak, f8)
    new = []
    hit = False
    for h, d in zip(state.levels, dh):
        v = h + state.dt * d
        if not np.isfinite(v):
            raise SimulationError("three-tank level became non-finite", step=state.steps)
        c = min(max(v, 0.0), H_MAX)
        hit |= c != v
        new.append(c)
    state.h1, state.h2, state.h3 = new
    state.steps += 1
    state.clamped += int(hit)
    y = np.array(new)
    z = np.array([q1, q2, new[0] + sensor[0], new[1] + sensor[1], new[2] + sensor[2]])
    return y, z


# -- fault catalog -----------------------------------------------------------
# Component faults carry their slot name in ``channels``.


def _square(k):
    return 1.0 - np.floor(k / 64.0 - 1.25 * np.floor(k / 80.0))


FAULTS = {
    "F01": FaultProfile(
        "F01",
        ACTUATOR,
        (0, 1),
        lambda k: 0.005 * (k - 200) + 3.0 * _square(k),
        "Q1,Q2 += 0.005(k-200) + 3(1 - floor(k/64 - 5/4 floor(k/80)))",
        ONSET,
    ),
    "F02": FaultProfile("F02", ACTUATOR, (0,), lambda k: np.full_like(k, -20.0), "Q1 -= 20", ONSET),
    "F03": FaultProfile("F03", OBSERVATION, (2,), lambda k: -0.005 * (k - 200), "h1 sensor -0.005(k-200)", ONSET),
    "F04": FaultProfile(
        "F04",
        OBSERVATION,
        (3,),
        lambda k: 0.0003 * (k - 200) + 0.0006 * np.sin((k - 200) / (2 * np.pi)),
        "h2 sensor 0.0003(k-200) + 0.0006 sin((k-200)/2pi)",
        ONSET,
    ),
    "F05": FaultProfile("F05", COMPONENT, ("leak1",), lambda k: 0.005 * (k - 200), "tank 1 leak 0.005(k-200)", ONSET),
    "F06": FaultProfile("F06", COMPONENT, ("leak2",), lambda k: -0.0004 * (k - 200), "tank 2 leak -0.0004(k-200)", ONSET),
    "F07": FaultProfile("F07", COMPONENT, ("leak3",), lambda k: -0.0004 * (k - 200), "tank 3 leak -0.0004(k-200)", ONSET),
    "F08": FaultProfile("F08", COMPONENT, ("f8",), lambda k: np.full_like(k, -0.5), "pipe 1-3 blockage f8=-0.5", ONSET),
}


def fault_profile(fault_id):
    try:
        return FAULTS[fault_id]
    except KeyError:
        raise KeyError(f"unknown three-tank fault {fault_id!r}; known: {sorted(FAULTS)}") from None


def _run(n, q_cmd, h_noise, fault, burn_in, h0, dt):
    state = TtsState(*h0, dt=dt)
    total = burn_in + n
    Z = np.empty((n, M_Z))
    k = np.arange(n, dtype=float)
    mag = fault.magnitude(k) if fault is not None else np.zeros(n)
    for t in range(total):
        i = t - burn_in
        leak = [0.0, 0.0, 0.0]
        f8 = 0.0
        act = [0.0, 0.0]
        sen = [0.0, 0.0, 0.0]
        if fault is not None and i >= 0 and mag[i] != 0.0:
            m = mag[i]
            if fault.location == ACTUATOR:
                for c in fault.channels:
                    act[c] = m
            elif fault.location == OBSERVATION:
                for c in fault.channels:
                    sen[c - 2] = m
            else:
                slot = fault.channels[0]
                if slot == "f8":
                    f8 = m
                else:
                    leak[int(slot[-1]) - 1] = m
        _, z = tts_step(state, q_cmd[t, 0], q_cmd[t, 1], leak, f8, act, sen)
        if i >= 0:
            Z[i] = z
    Z[:, 2:] += h_noise
    frac = state.clamped / max(state.steps, 1)
    if frac > 0.5:
        log.warning("three-tank levels clamped in %.0f%% of steps", 100 * frac)
    return Z


def simulate(
    n,
    rng,
    fault=None,
    burn_in=BURN_IN,
    h0=H0,
    dt=DT,
    q_nominal=Q_NOMINAL,
    q_noise_std=Q_NOISE_STD,
    h_noise_std=H_NOISE_STD,
):
    """Simulate ``n`` recorded samples of the three-tank system.

    Pump commands are the nominal flows plus iid Gaussian fluctuation; level
    sensors add iid Gaussian noise. All random draws happen before
    integration, so a faulty run shares them with the normal run.

    Returns ``(Z, F)``. ``F`` is the observation-space footprint
    ``Z_faulty - Z_normal`` for additive (sensor/actuator) faults and zeros
    for component faults.
    """
    if isinstance(fault, str):
        fault = fault_profile(fault)
    total = burn_in + n
    q_cmd = np.asarray(q_nominal, dtype=float) + rng.normal(size=(total, 2)) * q_noise_std
    h_noise = rng.normal(size=(n, 3)) * h_noise_std
    Z = _run(n, q_cmd, h_noise, fault, burn_in, h0, dt)
    if fault is None or not fault.additive:
        return Z, np.zeros_like(Z)
    Zn = _run(n, q_cmd, h_noise, None, burn_in, h0, dt)
    return Z, Z - Zn
