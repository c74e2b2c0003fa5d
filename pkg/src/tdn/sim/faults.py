"""Fault profiles: where a fault enters a simulator and how it evolves in time."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# location tags
OBSERVATION = "observation"  # additive on a recorded channel
ACTUATOR = "actuator"  # additive on an input, both physical and recorded
LATENT = "latent"  # alters latent dynamics, no additive ground truth
COMPONENT = "component"  # physical degradation inside the dynamics


@dataclass(frozen=True)
class FaultProfile:
    """A deterministic test fault.

    ``time_function`` maps the absolute sample index ``k`` (array) to the
    fault magnitude; it is only evaluated for ``k >= onset`` and the profile
    is zero before that. ``channels`` are indices into the recorded vector z
    (for observation/actuator faults) or into the system's own parameter
    slots (latent/component faults).
    """

    fault_id: str
    location: str
    channels: tuple
    time_function: Callable = field(repr=False)
    description: str = ""
    onset: int = 200

    @property
    def additive(self):
        """True when the fault has an exact additive footprint on z."""
        return self.location in (OBSERVATION, ACTUATOR)

    def magnitude(self, k):
        k = np.asarray(k, dtype=float)
        out = np.zeros_like(k)
        active = k >= self.onset
        if np.any(active):
            out[active] = self.time_function(k[active])
        return out

    def signal(self, k, m_z):
        """Additive effect on z, shape ``(len(k), m_z)``; zeros if not additive."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        F = np.zeros((k.size, m_z))
        if self.additive:
            mag = self.magnitude(k)
            for c in self.channels:
                F[:, c] = mag
        return F
