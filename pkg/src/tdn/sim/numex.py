"""Five-output nonlinear benchmark driven by two unobserved latent states.

Observations::

    z1 = 0.1 x1 + x1 / r + w1
    z2 = 0.1 x1 x2 + x2 / r + w2
    z3 = cos(x1)^3 + 0.1 exp(sin x2) + w3
    z4 = sin(x1)^3 + log(2 + cos x2) + w4
    z5 = r + 0.1 x1^3 - 0.1 x1^4 + sin(0.1 x1 x2) + w5,    r = sqrt(x1^2 + x2^2)

Latent recursions (``'`` marks the previous sample)::

    x1 = sin(x1') + 0.1 exp(cos x1') + v1
    x2 = sin(x2' + x2'^2 + 2 x2'^3) + v2
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import SimulationError
from .faults import LATENT, OBSERVATION, FaultProfile

M_Z = 5
CHANNELS = ("z1", "z2", "z3", "z4", "z5")
W_STD = (0.05, 0.16, 0.02, 0.05, 0.3)
V_STD = (0.01, 0.01)
X0 = (0.1, 0.1)
BURN_IN = 2000
ONSET = 200
R_FLOOR = 1e-6


def observe(x1, x2, w=None):
    """Observation equations; vectorised over arrays of latents."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r = np.sqrt(x1**2 + x2**2)
    rd = np.maximum(r, R_FLOOR)
    z = np.stack(
        [
            0.1 * x1 + x1 / rd,
            0.1 * x1 * x2 + x2 / rd,
            np.cos(x1) ** 3 + 0.1 * np.exp(np.sin(x2)),
            np.sin(x1) ** 3 + np.log(2.0 + np.cos(x2)),
            r + 0.1 * x1**3 - 0.1 * x1**4 + np.sin(0.1 * x1 * x2),
        ],
        axis=-1,
    )
    if w is not None:
        z = z + w
    return z


def latent_step(x1, x2, v1, v2, x1_gain=0.1, x2_feedback=0.0):
    """One latent recursion; the keyword slots are where latent faults act."""
    n1 = np.sin(x1) + x1_gain * np.exp(np.cos(x1)) + v1
    n2 = x2_feedback * x2 + np.sin(x2 + x2**2 + 2.0 * x2**3) + v2
    return n1, n2


@dataclass
class NumexState:
    """Single-trajectory state for step-by-step simulation."""

    x1: float = X0[0]
    x2: float = X0[1]
    w_std: tuple = W_STD
    v_std: tuple = V_STD
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    k: int = 0


def numex_step(state):
    """Advance the latents one sample and emit a noisy observation."""
    v = state.rng.normal(size=2) * np.asarray(state.v_std)
    w = state.rng.normal(size=M_Z) * np.asarray(state.w_std)
    state.x1, state.x2 = latent_step(state.x1, state.x2, v[0], v[1])
    state.k += 1
    if not (np.isfinite(state.x1) and np.isfinite(state.x2)):
        raise SimulationError("numerical example state became non-finite", step=state.k)
    return observe(state.x1, state.x2, w)


# -- fault catalog -----------------------------------------------------------
# Latent faults carry their parameters in ``channels``:
#   ("v1_mean", 0.2), ("x2_feedback", 0.5), ("x1_gain", 0.3)


def _ramp(rate):
    return lambda k: rate * (k - 199)


FAULTS = {
    "F01": FaultProfile("F01", LATENT, (("v1_mean", 0.2),), None, "v1 ~ N(0.2, 0.01)", ONSET),
    "F02": FaultProfile(
        "F02", LATENT, (("x2_feedback", 0.5),), None, "x2 recursion gains 0.5 x2(k-1)", ONSET
    ),
    "F03": FaultProfile(
        "F03", LATENT, (("v1_mean", 0.2), ("x2_feedback", 0.5)), None, "F01 and F02 together", ONSET
    ),
    "F04": FaultProfile("F04", LATENT, (("x1_gain", 0.3),), None, "x1 recursion gain 0.1 -> 0.3", ONSET),
    "F05": FaultProfile("F05", OBSERVATION, (0,), _ramp(0.0018), "z1 += 0.0018(k-199)", ONSET),
    "F06": FaultProfile("F06", OBSERVATION, (1,), _ramp(0.005), "z2 += 0.005(k-199)", ONSET),
    "F07": FaultProfile(
        "F07",
        OBSERVATION,
        (2,),
        lambda k: np.abs(0.4 * np.sin(2 * np.pi * (k - 199) / 300 + np.pi / 22)),
        "z3 += |0.4 sin(2pi(k-199)/300 + pi/22)|",
        ONSET,
    ),
    "F08": FaultProfile("F08", OBSERVATION, (3,), _ramp(0.009), "z4 += 0.009(k-199)", ONSET),
    "F09": FaultProfile(
        "F09",
        OBSERVATION,
        (3,),
        lambda k: 1.8 * np.sin(np.pi * np.mod(k - 199, 300) / 600 + np.pi / 33),
        "z4 += 1.8 sin(pi((k-199) % 300)/600 + pi/33)",
        ONSET,
    ),
    "F10": FaultProfile("F10", OBSERVATION, (4,), _ramp(-0.01), "z5 -= 0.01(k-199)", ONSET),
}


def fault_profile(fault_id):
    try:
        return FAULTS[fault_id]
    except KeyError:
        raise KeyError(f"unknown numerical-example fault {fault_id!r}; known: {sorted(FAULTS)}") from None


def simulate(n, rng, fault=None, burn_in=BURN_IN, x0=X0, w_std=W_STD, v_std=V_STD):
    """Simulate ``n`` recorded samples.

    All noise is drawn up front so that a faulty run and a normal run with the
    same generator state share every noise draw.

    Returns ``(Z, F)`` where ``F`` is the additive ground-truth fault on z
    (zeros for latent faults).
    """
    if isinstance(fault, str):
        fault = fault_profile(fault)
    total = burn_in + n
    v = rng.normal(size=(total, 2)) * np.asarray(v_std, dtype=float)
    w = rng.normal(size=(n, M_Z)) * np.asarray(w_std, dtype=float)

    latent = dict(fault.channels) if fault is not None and fault.location == LATENT else {}
    onset = burn_in + (fault.onset if fault is not None else 0)

    x1 = np.empty(total)
    x2 = np.empty(total)
    a, b = float(x0[0]), float(x0[1])
    for t in range(total):
        active = bool(latent) and t >= onset
        v1 = v[t, 0] + (latent.get("v1_mean", 0.0) if active else 0.0)
        a, b = latent_step(
            a,
            b,
            v1,
            v[t, 1],
            x1_gain=latent.get("x1_gain", 0.1) if active else 0.1,
            x2_feedback=latent.get("x2_feedback", 0.0) if active else 0.0,
        )
        if not (np.isfinite(a) and np.isfinite(b)):
            raise SimulationError("numerical example state became non-finite", step=t)
        x1[t] = a
        x2[t] = b

    Z = observe(x1[burn_in:], x2[burn_in:], w)
    k = np.arange(n)
    if fault is None or not fault.additive:
        return Z, np.zeros((n, M_Z))
    Zf = Z + fault.signal(k, M_Z)
    # recorded as the exact difference so paired normal runs reproduce it bitwise
    return Zf, Zf - Z
