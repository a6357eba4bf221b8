"""Radio-signal forward synthesis and a successive-cancellation snapshot
estimator.

The transmit pulse is a root-raised-cosine, treated as periodic over the
observation window (delays wrap), truncated at +-8 symbol periods. The
snapshot estimator runs a coarse delay-angle matched filter (FFT over a
quarter-sample delay grid, 2 degree angle grid), refines candidates with two
Newton steps on the exact steering vector, estimates the amplitude by least
squares, subtracts, and repeats while the normalized amplitude exceeds the
detection threshold. Feedback summaries from the tracker seed the search.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from .model import ArrayGeometry, Measurement, wrap_angle

PULSE_DURATION = 2e-9     # root-raised-cosine symbol period, seconds
PULSE_ROLLOFF = 0.6
PULSE_TRUNC_SYMBOLS = 8.0  # pulse support is +- this many symbol periods

_SNAP_MAGIC = b"MPCS"
_SNAP_VERSION = 1


def rrc_pulse(t, T: float = PULSE_DURATION, rolloff: float = PULSE_ROLLOFF):
    """Root-raised-cosine pulse, unit peak scale 1/T convention, zero outside
    +-PULSE_TRUNC_SYMBOLS symbol periods."""
    t = np.asarray(t, dtype=float)
    b = rolloff
    x = t / T
    out = np.zeros_like(x)

    near_zero = np.abs(x) < 1e-8
    out[near_zero] = (1.0 + b * (4.0 / np.pi - 1.0)) / T

    if b > 0:
        xs = 1.0 / (4.0 * b)
        near_sing = np.abs(np.abs(x) - xs) < 1e-8
        val = (b / (T * math.sqrt(2.0))) * (
            (1.0 + 2.0 / np.pi) * math.sin(np.pi / (4.0 * b))
            + (1.0 - 2.0 / np.pi) * math.cos(np.pi / (4.0 * b)))
        out[near_sing] = val
    else:
        near_sing = np.zeros_like(near_zero)

    rest = ~(near_zero | near_sing)
    xr = x[rest]
    num = (np.sin(np.pi * xr * (1.0 - b))
           + 4.0 * b * xr * np.cos(np.pi * xr * (1.0 + b)))
    den = np.pi * xr * (1.0 - (4.0 * b * xr) ** 2)
    out[rest] = num / den / T

    out[np.abs(x) > PULSE_TRUNC_SYMBOLS] = 0.0
    return out


def rrc_mean_square_bandwidth(T: float = PULSE_DURATION,
                              rolloff: float = PULSE_ROLLOFF) -> float:
    """Mean-square bandwidth (Hz^2) of the root-raised-cosine pulse: the
    second moment of its raised-cosine energy spectrum."""
    b = rolloff
    return (1.0 / 12.0 + b * b * (0.25 - 2.0 / np.pi**2)) / (T * T)


def default_geometry(N_s: int = 46, T_s: float = 1.25e-9,
                     f_c: float = 6e9) -> ArrayGeometry:
    """3x3 uniform rectangular array with 2 cm spacing and the standard
    pulse's mean-square bandwidth."""
    return ArrayGeometry.uniform_rectangular(
        3, 3, 0.02, psi=0.0, f_c=f_c,
        beta_bw_sq=rrc_mean_square_bandwidth(),
        N_s=N_s, T_s=T_s)


# ---------------------------------------------------------------------------
# Steering vectors and snapshots
# ---------------------------------------------------------------------------

def _sample_times(geom: ArrayGeometry) -> np.ndarray:
    return (np.arange(geom.N_s) - (geom.N_s - 1) / 2.0) * geom.T_s


def _pulse_periodic(t, period: float) -> np.ndarray:
    """Transmit pulse with delays wrapped onto the observation period."""
    tw = np.mod(np.asarray(t) + period / 2.0, period) - period / 2.0
    return rrc_pulse(tw)


def steering_vector(d: float, phi: float, geom: ArrayGeometry) -> np.ndarray:
    """Sampled, element-major stacked signal of a unit-amplitude component at
    distance d and arrival angle phi; shape (N_s * H,)."""
    times = _sample_times(geom)
    period = geom.N_s * geom.T_s
    g = geom.delay_shift(phi).reshape(-1)          # (H,)
    tau = d / geom.c - g                           # per-element delay
    ph = np.exp(2j * np.pi * geom.f_c * g)         # per-element carrier phase
    blocks = _pulse_periodic(times[None, :] - tau[:, None], period) \
        * ph[:, None]
    return blocks.reshape(-1)


@dataclass
class RadioSnapshot:
    """One sampled array observation (element-major stacking) and the noise
    variance used to generate it."""
    samples: np.ndarray  # complex128, (N_s * H,)
    sigma_sq: float


def synth_radio(truth: list, geom: ArrayGeometry, sigma_sq: float,
                rng: np.random.Generator) -> RadioSnapshot:
    """Superimpose components given as (KinematicState, amplitude phase)
    pairs plus circular complex Gaussian noise.

    Each component's amplitude magnitude is set so its normalized amplitude
    (|alpha| ||s|| / sigma) equals the state's u; with zero noise the
    reference scale is 1.
    """
    n = geom.n_eff
    samples = np.zeros(n, dtype=complex)
    sigma_ref = math.sqrt(sigma_sq) if sigma_sq > 0 else 1.0
    for state, phase in truth:
        s = steering_vector(state.d, state.phi, geom)
        norm = np.linalg.norm(s)
        if norm == 0.0:
            continue
        alpha = state.u * sigma_ref / norm * np.exp(1j * phase)
        samples += alpha * s
    if sigma_sq > 0:
        noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        samples += math.sqrt(sigma_sq / 2.0) * noise
    return RadioSnapshot(samples, sigma_sq)


def write_snapshot(path, snap: RadioSnapshot, geom: ArrayGeometry) -> None:
    """Binary dump: little-endian header (magic, version, N_s, H, sigma_sq)
    followed by interleaved (re, im) float64 samples."""
    with open(path, "wb") as f:
        f.write(_SNAP_MAGIC)
        f.write(struct.pack("<III", _SNAP_VERSION, geom.N_s, geom.H))
        f.write(struct.pack("<d", snap.sigma_sq))
        inter = np.empty(2 * snap.samples.size)
        inter[0::2] = snap.samples.real
        inter[1::2] = snap.samples.imag
        f.write(inter.astype("<f8").tobytes())


def read_snapshot(path):
    """Read a snapshot dump; returns (RadioSnapshot, N_s, H)."""
    with open(path, "rb") as f:
        if f.read(4) != _SNAP_MAGIC:
            raise ValueError("not a snapshot file")
        version, n_s, h = struct.unpack("<III", f.read(12))
        if version != _SNAP_VERSION:
            raise ValueError(f"unsupported snapshot version: {version}")
        (sigma_sq,) = struct.unpack("<d", f.read(8))
        inter = np.frombuffer(f.read(), dtype="<f8")
    samples = inter[0::2] + 1j * inter[1::2]
    if samples.size != n_s * h:
        raise ValueError("snapshot payload size mismatch")
    return RadioSnapshot(samples.copy(), sigma_sq), n_s, h


# ---------------------------------------------------------------------------
# Successive-cancellation snapshot estimator
# ---------------------------------------------------------------------------

DELAY_OVERSAMPLE = 4          # coarse grid spacing T_s / 4
ANGLE_GRID_DEG = 2.0
NEWTON_STEPS = 2
MAX_COMPONENTS = 25


def _pulse_harmonics(geom: ArrayGeometry) -> np.ndarray:
    """Fourier-series coefficients of the periodic pulse on the baseband
    harmonics k in [-N_s/2, N_s/2), computed from a fine sampling."""
    period = geom.N_s * geom.T_s
    Q = 16 * geom.N_s
    tq = (np.arange(Q) / Q - 0.5) * period
    p = _pulse_periodic(tq, period)
    spec = np.fft.fft(p) / Q
    # fft of samples p(tq): coefficient k lives at bin k with a phase from
    # the -period/2 start offset.
    k = np.fft.fftfreq(Q, d=1.0 / Q)
    coeff = spec * np.exp(-1j * np.pi * k)  # shift start to t = -T/2
    half = geom.N_s // 2
    ks = np.arange(-half, geom.N_s - half)
    return ks, np.array([coeff[int(kk) % Q] for kk in ks])


class MatchedFilterBank:
    """Precomputed coarse delay-angle correlation machinery for one geometry."""

    def __init__(self, geom: ArrayGeometry):
        self.geom = geom
        self.period = geom.N_s * geom.T_s
        self.L = DELAY_OVERSAMPLE * geom.N_s
        self.ks, self.coeff = _pulse_harmonics(geom)
        self.angles = np.deg2rad(np.arange(-180.0, 180.0, ANGLE_GRID_DEG))
        # Per-angle, per-element phase factors on each harmonic.
        g = np.stack([geom.delay_shift(a) for a in self.angles])  # (A, H)
        self.carrier = np.exp(-2j * np.pi * geom.f_c * g)         # (A, H)
        # e^{-j 2 pi k g / T} for every (A, H, K)
        self.harm_shift = np.exp(
            -2j * np.pi * self.ks[None, None, :] * g[:, :, None] / self.period)
        i0 = (geom.N_s - 1) / 2.0
        self.center_phase = np.exp(2j * np.pi * self.ks * i0 / geom.N_s)
        # Mean sampled pulse energy per element (grid-stage normalization).
        times = _sample_times(geom)
        taus = np.arange(self.L) * geom.T_s / DELAY_OVERSAMPLE
        e = _pulse_periodic(times[None, :] - taus[:, None], self.period)
        self.mean_energy = float(np.mean(np.sum(e * e, axis=1)))

    def coarse_peak(self, samples: np.ndarray):
        """Return (delay, angle, score) of the strongest grid cell; the score
        is |correlation|^2 normalized by the mean steering norm."""
        geom = self.geom
        y = samples.reshape(geom.H, geom.N_s)
        Y = np.fft.fft(y, axis=1)                     # (H, N_s)
        Yk = Y[:, np.mod(self.ks, geom.N_s)]          # harmonics k
        base = np.conj(self.coeff)[None, :] * Yk * self.center_phase[None, :]
        # (A, K): coherent element sum with angle-dependent shifts.
        W = np.einsum("ahk,hk->ak", self.harm_shift * self.carrier[:, :, None],
                      base)
        # Evaluate C(tau) on the fine grid via an L-point inverse transform.
        Wpad = np.zeros((len(self.angles), self.L), dtype=complex)
        Wpad[:, np.mod(self.ks, self.L)] = W
        C = np.fft.ifft(Wpad, axis=1) * self.L
        power = np.abs(C) ** 2 / (geom.H * self.mean_energy)
        ai, qi = np.unravel_index(int(np.argmax(power)), power.shape)
        tau = qi * geom.T_s / DELAY_OVERSAMPLE
        return tau * geom.c, float(self.angles[ai]), float(power[ai, qi])


def _objective(residual: np.ndarray, d: float, phi: float,
               geom: ArrayGeometry):
    s = steering_vector(d, phi, geom)
    nsq = float(np.vdot(s, s).real)
    if nsq <= 0.0:
        return -np.inf, s, nsq, 0j
    corr = complex(np.vdot(s, residual))
    return abs(corr) ** 2 / nsq, s, nsq, corr


def _newton_refine(residual: np.ndarray, d: float, phi: float,
                   geom: ArrayGeometry):
    """Two finite-difference Newton steps on the matched-filter power."""
    hd = geom.c * geom.T_s / 50.0
    hp = math.radians(0.2)
    best, _, _, _ = _objective(residual, d, phi, geom)
    for _ in range(NEWTON_STEPS):
        f0, _, _, _ = _objective(residual, d, phi, geom)
        fdp, _, _, _ = _objective(residual, d + hd, phi, geom)
        fdm, _, _, _ = _objective(residual, d - hd, phi, geom)
        fpp, _, _, _ = _objective(residual, d, phi + hp, geom)
        fpm, _, _, _ = _objective(residual, d, phi - hp, geom)
        fxy, _, _, _ = _objective(residual, d + hd, phi + hp, geom)
        gd = (fdp - fdm) / (2 * hd)
        gp = (fpp - fpm) / (2 * hp)
        hdd = (fdp - 2 * f0 + fdm) / hd**2
        hpp = (fpp - 2 * f0 + fpm) / hp**2
        hdp = (fxy - fdp - fpp + f0) / (hd * hp)
        det = hdd * hpp - hdp * hdp
        if det <= 0 or hdd >= 0:  # not a proper local maximum, keep point
            break
        dd = -(hpp * gd - hdp * gp) / det
        dp = -(-hdp * gd + hdd * gp) / det
        cand_d, cand_p = d + dd, float(wrap_angle(phi + dp))
        f1, _, _, _ = _objective(residual, cand_d, cand_p, geom)
        if f1 <= f0:
            break
        d, phi = cand_d, cand_p
        best = f1
    return d, float(wrap_angle(phi)), best


def snapshot_estimate(snap: RadioSnapshot, prior_tracks, geom: ArrayGeometry,
                      u_de: float, bank: "MatchedFilterBank" = None) -> list:
    """Extract measurement triples by successive cancellation.

    prior_tracks: optional iterable of feedback summaries (objects with .d
    and .phi) used as additional search seeds before the global grid. The
    acceptance test during extraction uses the running residual, while the
    reported amplitudes are normalized by the final noise estimate so they
    are not biased low by components still awaiting subtraction.
    """
    if bank is None:
        bank = MatchedFilterBank(geom)
    n = geom.n_eff
    residual = snap.samples.astype(complex).copy()
    initial_energy = float(np.vdot(residual, residual).real)
    thresh = math.sqrt(u_de)
    seeds = [(t.d, t.phi) for t in (prior_tracks or [])]
    found = []

    for _ in range(MAX_COMPONENTS):
        energy = float(np.vdot(residual, residual).real)
        # Below this the residual is cancellation error, not signal.
        if initial_energy > 0 and energy < 1e-9 * initial_energy:
            break
        cands = []
        d0, p0, _ = bank.coarse_peak(residual)
        cands.append((d0, p0))
        cands.extend(seeds)
        best = None
        for d, phi in cands:
            dr, pr, score = _newton_refine(residual, d, float(phi), geom)
            if best is None or score > best[2]:
                best = (dr, pr, score)
        d, phi, _ = best
        _, s, nsq, corr = _objective(residual, d, phi, geom)
        if nsq <= 0.0:
            break
        alpha = corr / nsq
        new_residual = residual - alpha * s
        sigma_hat_sq = float(np.vdot(new_residual, new_residual).real) / n
        if sigma_hat_sq <= 0.0:
            sigma_hat_sq = np.finfo(float).tiny
        z_u = abs(alpha) * math.sqrt(nsq) / math.sqrt(sigma_hat_sq)
        if z_u <= thresh:
            break
        found.append((d, float(wrap_angle(phi)), abs(alpha) * math.sqrt(nsq)))
        residual = new_residual
        seeds = [sd for sd in seeds
                 if abs(sd[0] - d) > 0.3 or abs(wrap_angle(sd[1] - phi)) > 0.1]

    sigma_final = math.sqrt(max(float(np.vdot(residual, residual).real) / n,
                                np.finfo(float).tiny))
    return [Measurement(float(d), float(phi), float(amp / sigma_final))
            for d, phi, amp in found]


def calibrate_detection_threshold(geom: ArrayGeometry, fa_prob: float = 0.01,
                                  trials: int = 100,
                                  rng: np.random.Generator = None) -> float:
    """Monte-Carlo calibration of the estimator's detection threshold: the
    (1 - fa_prob) quantile of the strongest pure-noise amplitude statistic."""
    if rng is None:
        rng = np.random.default_rng(0)
    bank = MatchedFilterBank(geom)
    n = geom.n_eff
    stats = []
    for _ in range(trials):
        noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) \
            / math.sqrt(2.0)
        residual = noise.astype(complex)
        d0, p0, _ = bank.coarse_peak(residual)
        d, phi, _ = _newton_refine(residual, d0, p0, geom)
        _, s, nsq, corr = _objective(residual, d, phi, geom)
        alpha = corr / nsq
        sigma_hat_sq = float(np.vdot(residual - alpha * s,
                                     residual - alpha * s).real) / n
        stats.append(abs(alpha) ** 2 * nsq / sigma_hat_sq)
    return float(np.quantile(np.array(stats), 1.0 - fa_prob))
