"""Channel model: domain types, state transitions, measurement likelihoods and
the association pseudo-likelihood factors used by the tracker.

All densities are evaluated in natural (linear) space; log-space variants are
provided where downstream code needs overflow-safe arithmetic. Every function
is vectorized over numpy arrays where it makes sense (particle sets).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.stats import ncx2

TWO_PI = 2.0 * np.pi

# Numerical guards (see module docs): amplitudes below U_FLOOR carry no usable
# dispersion information, so the Fisher-information variances are clamped at
# their value for u = U_FLOOR. A single-element array has zero aperture; the
# angle variance is then capped at SIGMA_PHI_SQ_MAX (a wrapped Gaussian with
# std 2*pi is effectively uniform on the circle).
U_FLOOR = 1e-3
MU_FA_FLOOR = 1e-6
SIGMA_PHI_SQ_MAX = TWO_PI**2


def wrap_angle(phi):
    """Wrap angles (radians) into [-pi, pi). Works on scalars and arrays."""
    return np.mod(np.asarray(phi) + np.pi, TWO_PI) - np.pi


def ang_diff(a, b):
    """Shortest signed angular difference a - b, wrapped into [-pi, pi)."""
    return wrap_angle(np.asarray(a) - np.asarray(b))


def log_sum_exp(a: np.ndarray, axis=None):
    """Overflow-safe log(sum(exp(a))); rows of all -inf stay -inf."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m_safe), axis=axis))
    return out + np.squeeze(m_safe, axis=axis) if axis is not None \
        else float(out + m_safe.reshape(()))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class KinematicState:
    """Single-component kinematic state: distance, angle-of-arrival,
    normalized amplitude, distance velocity and angular velocity."""
    d: float        # meters
    phi: float      # radians, in [-pi, pi)
    u: float        # dimensionless, sqrt of component SNR, >= 0
    v_d: float      # m/s
    v_phi: float    # rad/s

    def as_array(self) -> np.ndarray:
        return np.array([self.d, self.phi, self.u, self.v_d, self.v_phi])

    @staticmethod
    def from_array(x) -> "KinematicState":
        d, phi, u, v_d, v_phi = (float(v) for v in x)
        return KinematicState(d, phi, u, v_d, v_phi)


@dataclass
class AugmentedState:
    """Kinematic state plus the binary existence flag. When r == 0 the
    kinematic content is irrelevant by convention."""
    x: KinematicState
    r: int


@dataclass(frozen=True)
class Measurement:
    """One snapshot-estimator output: distance, AoA and normalized amplitude."""
    z_d: float
    z_phi: float
    z_u: float

    def as_array(self) -> np.ndarray:
        return np.array([self.z_d, self.z_phi, self.z_u])


@dataclass
class ArrayGeometry:
    """Receiver array and signal parameters.

    element_offsets are polar (distance, angle) offsets of each element from
    the array centroid; the centroid must be at the origin.
    """
    element_offsets: list   # [(d_h meters, phi_h radians), ...]
    psi: float              # array orientation, radians
    f_c: float              # carrier frequency, Hz
    beta_bw_sq: float       # mean-square bandwidth, Hz^2
    N_s: int                # samples per element
    T_s: float              # sampling period, seconds
    c: float = 299792458.0  # propagation speed, m/s

    def __post_init__(self):
        if len(self.element_offsets) < 1:
            raise ValueError("array needs at least one element")
        if self.N_s < 1:
            raise ValueError("N_s must be >= 1")
        self._polar = np.asarray(self.element_offsets,
                                 dtype=float).reshape(-1, 2)
        xy = self.element_xy()
        scale = max(1.0, float(np.max(np.abs(xy))) if xy.size else 1.0)
        if np.any(np.abs(xy.mean(axis=0)) > 1e-9 * scale):
            raise ValueError("element centroid must be at the origin")

    @property
    def H(self) -> int:
        return len(self.element_offsets)

    @property
    def n_eff(self) -> int:
        """Total number of complex samples N_s * H."""
        return self.N_s * self.H

    def element_xy(self) -> np.ndarray:
        """Cartesian element positions, shape (H, 2)."""
        off = self._polar
        return np.stack([off[:, 0] * np.cos(off[:, 1]),
                         off[:, 0] * np.sin(off[:, 1])], axis=1)

    def delay_shift(self, phi) -> np.ndarray:
        """Plane-wave delay shift (seconds) of each element for AoA phi.

        Broadcasts over phi; result shape (H,) + shape(phi).
        """
        off = self._polar
        d_h = off[:, 0].reshape(-1, *([1] * np.ndim(phi)))
        phi_h = off[:, 1].reshape(-1, *([1] * np.ndim(phi)))
        return d_h * np.cos(np.asarray(phi) - self.psi - phi_h) / self.c

    @classmethod
    def uniform_rectangular(cls, nx: int, ny: int, spacing: float, *,
                            psi: float, f_c: float, beta_bw_sq: float,
                            N_s: int, T_s: float,
                            c: float = 299792458.0) -> "ArrayGeometry":
        """Uniform rectangular nx-by-ny array centered on its centroid."""
        xs = (np.arange(nx) - (nx - 1) / 2.0) * spacing
        ys = (np.arange(ny) - (ny - 1) / 2.0) * spacing
        offsets = []
        for x in xs:
            for y in ys:
                offsets.append((float(np.hypot(x, y)), float(np.arctan2(y, x))))
        return cls(offsets, psi, f_c, beta_bw_sq, N_s, T_s, c)


@dataclass
class HyperParams:
    """Tracker hyperparameters. Defaults match the standard simulation setup
    (3x3 array at 6 GHz, 46 samples/element, -20 dB input detection
    threshold)."""
    p_s: float = 0.999            # survival probability
    p_de: float = 0.5             # existence threshold for detection
    p_pr: float = 1e-4            # existence threshold for pruning
    mu_n: float = 0.008           # mean number of new components per step
    u_de: float = 4.14            # detection threshold, squared-amplitude units
    d_max: float = 17.0           # maximum distance, meters
    sigma_d: float = 0.002        # distance driving noise, m/s^2
    sigma_phi: float = math.radians(0.17)   # angle driving noise, rad/s^2
    sigma_u_rel: float = 0.02     # relative amplitude driving noise
    sigma_fa: float = 0.15        # false-alarm-rate random-walk std
    sigma_fa_ini: float = 0.5     # false-alarm-rate initialization std
    sigma_v_d: float = 0.01       # new-track distance-velocity prior std, m/s
    sigma_v_phi: float = math.radians(0.6)  # new-track angular-velocity prior std
    delta_t: float = 1.0          # step period, seconds
    J: int = 10000                # particles per belief
    P: int = 5000                 # max DA message-passing iterations
    da_tol: float = 1e-6          # DA convergence tolerance (max-norm)
    amp_mode: str = "gauss"       # amplitude likelihood: "exact" or "gauss"
    u_birth_max: float = 120.0    # amplitude range of the birth prior

    def validate(self) -> list:
        """Return a list of '(field, message)' problems; empty when valid."""
        problems = []
        for name in ("p_s", "p_de", "p_pr"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                problems.append((name, f"must be in [0, 1], got {v}"))
        for name in ("mu_n", "u_de", "d_max", "delta_t"):
            if getattr(self, name) <= 0:
                problems.append((name, "must be positive"))
        for name in ("sigma_d", "sigma_phi", "sigma_u_rel", "sigma_fa",
                     "sigma_fa_ini", "sigma_v_d", "sigma_v_phi", "da_tol"):
            if getattr(self, name) < 0:
                problems.append((name, "must be >= 0"))
        if self.J < 1:
            problems.append(("J", "must be >= 1"))
        if self.P < 1:
            problems.append(("P", "must be >= 1"))
        if self.amp_mode not in ("exact", "gauss"):
            problems.append(("amp_mode", "must be 'exact' or 'gauss'"))
        if self.u_birth_max <= 0:
            problems.append(("u_birth_max", "must be positive"))
        return problems


@dataclass
class FarState:
    """Mean false-alarm rate per snapshot (dimensionless count, > 0)."""
    mu_fa: float


# ---------------------------------------------------------------------------
# State transitions
# ---------------------------------------------------------------------------

def ncv_matrices(delta_t: float):
    """Transition matrix F (5x5) and noise map G (5x3) of the discretized
    white-acceleration model on (d, v_d) and (phi, v_phi) with a random walk
    on u. State order: [d, phi, u, v_d, v_phi]; noise order [eps_d, eps_phi,
    eps_u]."""
    dt = delta_t
    F = np.array([
        [1, 0, 0, dt, 0],
        [0, 1, 0, 0, dt],
        [0, 0, 1, 0, 0],
        [0, 0, 0, 1, 0],
        [0, 0, 0, 0, 1],
    ], dtype=float)
    G = np.array([
        [dt**2 / 2, 0, 0],
        [0, dt**2 / 2, 0],
        [0, 0, 1],
        [dt, 0, 0],
        [0, dt, 0],
    ], dtype=float)
    return F, G


def propagate_kinematics(particles: np.ndarray, params: HyperParams,
                         rng: np.random.Generator) -> np.ndarray:
    """Propagate a (J, 5) particle array one step through the motion model.

    The amplitude driving noise is scaled per particle: sigma_u_rel * u_j.
    Angles are re-wrapped and amplitudes clamped at zero.
    """
    F, G = ncv_matrices(params.delta_t)
    J = particles.shape[0]
    eps = rng.standard_normal((J, 3))
    eps[:, 0] *= params.sigma_d
    eps[:, 1] *= params.sigma_phi
    eps[:, 2] *= params.sigma_u_rel * particles[:, 2]
    out = particles @ F.T + eps @ G.T
    out[:, 1] = wrap_angle(out[:, 1])
    out[:, 2] = np.maximum(out[:, 2], 0.0)
    return out


def transition_sample(x: KinematicState, r: int, params: HyperParams,
                      rng: np.random.Generator) -> AugmentedState:
    """Draw one step of the augmented-state transition.

    A non-existent component stays non-existent; an existing one survives
    with probability p_s and then follows the motion model.
    """
    if r == 0:
        return AugmentedState(x, 0)
    if rng.random() >= params.p_s:
        return AugmentedState(x, 0)
    out = propagate_kinematics(x.as_array()[None, :], params, rng)[0]
    return AugmentedState(KinematicState.from_array(out), 1)


def reflect_positive(mu, floor: float = MU_FA_FLOOR):
    """Reflect values at a positive floor. Unlike clamping, reflection leaves
    no absorbing atom at the boundary, which would otherwise capture the
    whole particle set after a run of zero-clutter snapshots."""
    return floor + np.abs(np.asarray(mu) - floor)


def far_transition_sample(mu_fa: float, sigma_fa: float,
                          rng: np.random.Generator) -> FarState:
    """Gaussian random-walk step of the mean false-alarm rate, reflected at a
    small positive floor."""
    if mu_fa <= 0:
        raise ValueError("mu_fa must be positive")
    return FarState(float(reflect_positive(
        mu_fa + sigma_fa * rng.standard_normal())))


# ---------------------------------------------------------------------------
# Fisher-information measurement variances
# ---------------------------------------------------------------------------

def sigma_d_sq(u, geom: ArrayGeometry):
    """Distance measurement variance c^2 / (8 pi^2 beta_bw^2 u^2), with the
    amplitude clamped at U_FLOOR so the variance stays finite."""
    u_eff = np.maximum(np.abs(u), U_FLOOR)
    return geom.c**2 / (8.0 * np.pi**2 * geom.beta_bw_sq * u_eff**2)


def aperture_sq(phi, geom: ArrayGeometry):
    """Squared array aperture D^2(phi): the summed squared sensitivity of the
    per-element plane-wave path lengths to the arrival angle (meters^2)."""
    off = geom._polar
    d_h = off[:, 0].reshape(-1, *([1] * np.ndim(phi)))
    phi_h = off[:, 1].reshape(-1, *([1] * np.ndim(phi)))
    s = d_h * np.sin(np.asarray(phi) - geom.psi - phi_h)
    return np.sum(s * s, axis=0)


def sigma_phi_sq(u, phi, geom: ArrayGeometry):
    """AoA measurement variance c^2 / (8 pi^2 f_c^2 u^2 D^2(phi)), clamped at
    SIGMA_PHI_SQ_MAX (degenerate geometry carries no angular information)."""
    u_eff = np.maximum(np.abs(u), U_FLOOR)
    d2 = aperture_sq(phi, geom)
    with np.errstate(divide="ignore"):
        raw = np.where(
            d2 > 0.0,
            geom.c**2 / (8.0 * np.pi**2 * geom.f_c**2 * u_eff**2
                         * np.where(d2 > 0.0, d2, 1.0)),
            np.inf,
        )
    return np.minimum(raw, SIGMA_PHI_SQ_MAX)


def amp_scale_sq(u, n_eff):
    """Squared scale of the amplitude measurement: 1/2 plus the contribution
    of estimating the noise variance from n_eff complex samples."""
    u = np.asarray(u, dtype=float)
    return 0.5 + u * u / (4.0 * n_eff)


def crlb_amp_scale_numeric(alpha_re: float, alpha_im: float, s_norm_sq: float,
                           sigma_sq: float, n_eff: float) -> float:
    """Amplitude-scale variance computed from the full Fisher information of
    (Re alpha, Im alpha, sigma^2) and the Jacobian of u; numeric cross-check
    of amp_scale_sq."""
    if sigma_sq <= 0 or s_norm_sq <= 0:
        raise ValueError("singular Fisher information: need sigma_sq > 0 "
                         "and s_norm_sq > 0")
    J = np.diag([2.0 * s_norm_sq / sigma_sq,
                 2.0 * s_norm_sq / sigma_sq,
                 n_eff / sigma_sq**2])
    mod = math.hypot(alpha_re, alpha_im)
    if mod == 0.0:
        # Limit: the (Re, Im) direction cosines square-sum to 1 and the noise
        # term vanishes with |alpha|.
        return 0.5
    s_norm = math.sqrt(s_norm_sq)
    sigma = math.sqrt(sigma_sq)
    t = np.array([alpha_re * s_norm / (mod * sigma),
                  alpha_im * s_norm / (mod * sigma),
                  -mod * s_norm / (2.0 * sigma**3)])
    return float(t @ np.linalg.solve(J, t))


# ---------------------------------------------------------------------------
# Measurement likelihoods
# ---------------------------------------------------------------------------

def lik_distance(z_d, d, u, geom: ArrayGeometry):
    """Gaussian distance likelihood with amplitude-dependent variance."""
    var = sigma_d_sq(u, geom)
    r = np.asarray(z_d) - np.asarray(d)
    return np.exp(-0.5 * r * r / var) / np.sqrt(TWO_PI * var)


def lik_aoa(z_phi, phi, u, geom: ArrayGeometry):
    """Gaussian AoA likelihood on the wrapped angular residual."""
    var = sigma_phi_sq(u, phi, geom)
    r = ang_diff(z_phi, phi)
    return np.exp(-0.5 * r * r / var) / np.sqrt(TWO_PI * var)


def marcum_q1(a, b):
    """First-order Marcum Q function, via the noncentral chi-square survival
    function with 2 degrees of freedom."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return ncx2.sf(b * b, 2, a * a)


def detection_prob(u, u_de: float, n_eff, mode: str = "exact"):
    """Probability that a component of amplitude u produces a measurement
    above the detection threshold.

    "exact" uses the Rician tail (Marcum Q); "gauss" the Gaussian-CDF
    approximation matching the truncated-Gaussian amplitude likelihood.
    """
    u = np.asarray(u, dtype=float)
    s = np.sqrt(amp_scale_sq(u, n_eff))
    if mode == "exact":
        return marcum_q1(u / s, math.sqrt(u_de) / s)
    if mode == "gauss":
        return special.ndtr((u - math.sqrt(u_de)) / s)
    raise ValueError(f"unknown amplitude mode: {mode!r}")


def log_detection_prob(u, u_de: float, n_eff, mode: str = "exact"):
    u = np.asarray(u, dtype=float)
    s = np.sqrt(amp_scale_sq(u, n_eff))
    if mode == "gauss":
        return special.log_ndtr((u - math.sqrt(u_de)) / s)
    return np.log(np.maximum(detection_prob(u, u_de, n_eff, mode), 1e-300))


def log_lik_amplitude(z_u, u, u_de: float, n_eff, mode: str = "gauss"):
    """Log of the truncated amplitude likelihood; -inf below the threshold.

    "exact" is a Rician truncated at sqrt(u_de) and renormalized by the
    detection probability; "gauss" the truncated-Gaussian approximation.
    """
    z = np.asarray(z_u, dtype=float)
    u = np.asarray(u, dtype=float)
    s2 = amp_scale_sq(u, n_eff)
    if mode == "exact":
        # Rician density written with the exponentially scaled Bessel i0e for
        # overflow safety: (z/s2) exp(-(z-u)^2/(2 s2)) i0e(z u / s2).
        core = (np.log(np.maximum(z, 1e-300)) - np.log(s2)
                - 0.5 * (z - u) ** 2 / s2
                + np.log(special.i0e(z * u / s2)))
        out = core - log_detection_prob(u, u_de, n_eff, "exact")
    elif mode == "gauss":
        core = -0.5 * (z - u) ** 2 / s2 - 0.5 * np.log(TWO_PI * s2)
        out = core - log_detection_prob(u, u_de, n_eff, "gauss")
    else:
        raise ValueError(f"unknown amplitude mode: {mode!r}")
    return np.where(z > math.sqrt(u_de), out, -np.inf)


def lik_amplitude(z_u, u, u_de: float, n_eff, mode: str = "gauss"):
    """Truncated amplitude likelihood (see log_lik_amplitude)."""
    return np.exp(log_lik_amplitude(z_u, u, u_de, n_eff, mode))


def log_fa_density(z: Measurement, u_de: float, d_max: float) -> float:
    """Log of the false-alarm measurement density: uniform in distance and
    angle, truncated Rayleigh (scale^2 = 1/2) in amplitude."""
    if z.z_u <= math.sqrt(u_de) or not (0.0 <= z.z_d <= d_max):
        return -np.inf
    # 2 z exp(-z^2) / exp(-u_de), uniform 1/d_max and 1/2pi
    return (math.log(2.0 * z.z_u) - (z.z_u**2 - u_de)
            - math.log(d_max) - math.log(TWO_PI))


def fa_density(z: Measurement, u_de: float, d_max: float) -> float:
    """False-alarm measurement density (see log_fa_density)."""
    return float(np.exp(log_fa_density(z, u_de, d_max)))


def log_lik_matrix(measurements, particles: np.ndarray, params: HyperParams,
                   geom: ArrayGeometry) -> np.ndarray:
    """Log joint measurement likelihoods log f(z_m | x_j) as a (J, M) matrix.

    Particle-dependent variances and the amplitude-likelihood normalizer are
    computed once and broadcast across measurements.
    """
    J = particles.shape[0]
    M = len(measurements)
    if M == 0:
        return np.zeros((J, 0))
    d, phi, u = particles[:, 0], particles[:, 1], particles[:, 2]
    var_d = sigma_d_sq(u, geom)[:, None]
    var_p = sigma_phi_sq(u, phi, geom)[:, None]
    s2 = amp_scale_sq(u, geom.n_eff)[:, None]
    log_norm = (-0.5 * np.log(TWO_PI * var_d) - 0.5 * np.log(TWO_PI * var_p)
                - log_detection_prob(u, params.u_de, geom.n_eff,
                                     params.amp_mode)[:, None])
    zd = np.array([z.z_d for z in measurements])[None, :]
    zp = np.array([z.z_phi for z in measurements])[None, :]
    zu = np.array([z.z_u for z in measurements])[None, :]
    rd = zd - d[:, None]
    rp = ang_diff(zp, phi[:, None])
    ru = zu - u[:, None]
    out = log_norm - 0.5 * rd * rd / var_d - 0.5 * rp * rp / var_p \
        - 0.5 * ru * ru / s2
    if params.amp_mode == "exact":
        out += np.log(np.maximum(zu, 1e-300)) - np.log(s2) \
            + np.log(special.i0e(zu * u[:, None] / s2))
    elif params.amp_mode == "gauss":
        out += -0.5 * np.log(TWO_PI * s2)
    else:
        raise ValueError(f"unknown amplitude mode: {params.amp_mode!r}")
    thresh = math.sqrt(params.u_de)
    out[:, (zu <= thresh).reshape(-1)] = -np.inf
    return out


def log_lik_measurement(z: Measurement, particles: np.ndarray, params: HyperParams,
                        geom: ArrayGeometry) -> np.ndarray:
    """Log joint measurement likelihood log f(z | x_j) for one measurement."""
    return log_lik_matrix([z], particles, params, geom)[:, 0]


# ---------------------------------------------------------------------------
# Association pseudo-likelihood factors
# ---------------------------------------------------------------------------

def far_norm(mu_fa: float, M: int, K: int) -> float:
    """False-alarm-rate normalization constant (exp(-mu) mu^M)^(1/(K+M))."""
    if K + M < 1:
        raise ValueError("far_norm requires K + M >= 1")
    if mu_fa <= 0:
        raise ValueError("mu_fa must be positive")
    return math.exp((-mu_fa + M * math.log(mu_fa)) / (K + M))


def pseudo_g(x: KinematicState, r: int, a: int, mu_fa: float, z_m,
             M: int, K: int, params: HyperParams, geom: ArrayGeometry) -> float:
    """Association factor for a legacy component.

    a = 0 encodes missed detection, a = m >= 1 association with measurement
    z_m. Non-existent components (r = 0) only admit a = 0.
    """
    n = far_norm(mu_fa, M, K)
    if r == 0:
        return n if a == 0 else 0.0
    p_d = float(detection_prob(x.u, params.u_de, geom.n_eff, params.amp_mode))
    if a == 0:
        return n * (1.0 - p_d)
    if z_m is None:
        raise ValueError("a = m requires the measurement z_m")
    log_f = float(log_lik_measurement(z_m, x.as_array()[None, :], params, geom)[0])
    log_fa = log_fa_density(z_m, params.u_de, params.d_max)
    return float(n * p_d / mu_fa * np.exp(log_f - log_fa))


def pseudo_h(x: KinematicState, r: int, b: int, mu_fa: float, z_m: Measurement,
             M: int, K: int, params: HyperParams, geom: ArrayGeometry) -> float:
    """Association factor for a measurement-born (new) component.

    b = 0 encodes "not generated by any legacy component"; b = k >= 1 is
    excluded when the new component exists (the measurement then belongs to
    legacy component k).
    """
    n = far_norm(mu_fa, M, K)
    if r == 0:
        return n
    if b != 0:
        return 0.0
    f_n = 1.0 / (TWO_PI * params.d_max)
    log_f = float(log_lik_measurement(z_m, x.as_array()[None, :], params, geom)[0])
    log_fa = log_fa_density(z_m, params.u_de, params.d_max)
    return float(n * params.mu_n * f_n / mu_fa * np.exp(log_f - log_fa))
