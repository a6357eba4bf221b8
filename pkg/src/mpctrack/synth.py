"""Fully synthetic measurement generation.

Each alive component is detected with its amplitude-dependent detection
probability; detected components emit a measurement with state-dependent
Gaussian noise on distance and angle and a threshold-truncated amplitude
draw. Clutter is a Poisson number of uniform points with Rayleigh amplitudes
truncated at the detection threshold.
"""

import math

import numpy as np

from . import model
from .model import ArrayGeometry, HyperParams, Measurement, wrap_angle
from .scenario import Scenario

_MIN_DETECTION_PROB = 1e-6


def _sample_truncated_amplitude(u: float, scale_sq: float, thresh: float,
                                mode: str, rng: np.random.Generator) -> float:
    """Draw the measured amplitude conditional on exceeding the threshold.

    "exact" draws the Rician modulus, "gauss" the Gaussian approximation;
    both by rejection, which matches the detection-probability model exactly.
    """
    s = math.sqrt(scale_sq)
    for _ in range(10_000_000):
        if mode == "exact":
            z = math.hypot(u + s * rng.standard_normal(),
                           s * rng.standard_normal())
        else:
            z = u + s * rng.standard_normal()
        if z > thresh:
            return z
    raise RuntimeError("amplitude rejection sampling stalled; detection "
                       "probability is effectively zero")


def synth_measurements(scn: Scenario, step: int, params: HyperParams,
                       geom: ArrayGeometry, rng: np.random.Generator) -> list:
    """Generate one step's measurement set: thinned component detections plus
    Poisson clutter, in randomized order."""
    if not (0 <= step < scn.steps):
        raise IndexError(f"step {step} outside scenario")
    thresh = math.sqrt(scn.u_de)
    out = []
    for truth in scn.truth_arrays(step):
        d, phi, u = truth[0], truth[1], truth[2]
        p_d = float(model.detection_prob(u, scn.u_de, geom.n_eff,
                                         params.amp_mode))
        if rng.random() >= p_d:
            continue
        if p_d < _MIN_DETECTION_PROB:
            raise RuntimeError("detected a component with vanishing "
                               "detection probability")
        z_d = d + math.sqrt(float(model.sigma_d_sq(u, geom))) \
            * rng.standard_normal()
        z_phi = float(wrap_angle(phi + math.sqrt(
            float(model.sigma_phi_sq(u, phi, geom))) * rng.standard_normal()))
        z_u = _sample_truncated_amplitude(
            float(u), float(model.amp_scale_sq(u, geom.n_eff)), thresh,
            params.amp_mode, rng)
        out.append(Measurement(float(np.clip(z_d, 0.0, params.d_max)),
                               z_phi, z_u))

    n_clutter = rng.poisson(scn.far_profile[step])
    for _ in range(n_clutter):
        z_u = math.sqrt(scn.u_de + rng.exponential(1.0))
        out.append(Measurement(float(rng.uniform(0.0, params.d_max)),
                               float(rng.uniform(-np.pi, np.pi)), z_u))

    order = rng.permutation(len(out))
    return [out[i] for i in order]
