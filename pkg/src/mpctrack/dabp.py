"""Loopy belief propagation for probabilistic data association.

The bipartite association problem couples track-oriented variables a_k (0 =
missed detection, m >= 1 = measurement index) with measurement-oriented
variables b_m (0 = new component or clutter, k >= 1 = legacy index) through
pairwise exclusion constraints. Local evidence enters through two weight
matrices:

  beta[k, m]  -- legacy k associating with measurement m (column 0 = miss),
                 particle- and FAR-integrated, marginalized over existence;
  xi[m, k]    -- measurement m (column 0 = new-or-clutter); the nonzero
                 columns are pure couplings (equal entries), all measurement
                 evidence for legacy associations lives in beta.

Messages are iterated in log space so extreme likelihood ratios cannot
overflow; per-row scaling of the weights therefore never changes the output
marginals.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import model
from .model import ArrayGeometry, HyperParams, Measurement, log_sum_exp

_LOG_TINY = -745.0  # log of the smallest positive double, used as a guard


@dataclass
class AssociationWeights:
    """DA factor weights plus optional per-particle caches used downstream by
    the measurement update (filled by evaluate_weights, ignored by the BP)."""
    beta: np.ndarray                    # (K, M+1), row-scaled
    xi: np.ndarray                      # (M, K+1), row-scaled
    log_beta: Optional[np.ndarray] = None
    log_xi: Optional[np.ndarray] = None
    far_ratio: float = 1.0              # E[n(mu)/mu] / E[n(mu)] under the FAR belief
    det_prob: Optional[list] = None     # per track: (J,) detection probabilities
    log_lratio: Optional[list] = None   # per track: (J, M) log f(z|x)/f_fa(z)
    log_new_mass: Optional[np.ndarray] = None  # (M,) log(far_ratio*mu_n*<f>/f_fa)


@dataclass
class AssociationMarginals:
    """Approximate association marginals and the converged messages."""
    p_a: np.ndarray        # (K, M+1)
    p_b: np.ndarray        # (M, K+1)
    iterations_used: int
    converged: bool
    log_nu: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    log_zeta: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    degenerate_rows: tuple = ()


def evaluate_weights(legacy_beliefs: Sequence, new_proposals: Sequence,
                     measurements: Sequence[Measurement], far_belief,
                     params: HyperParams, geom: ArrayGeometry) -> AssociationWeights:
    """Integrate the association factors over the particle beliefs and the
    false-alarm-rate belief.

    legacy_beliefs: objects with .particles (J, 5), .weights (J,) normalized
    and .p_exist (the predicted existence probability). new_proposals:
    objects with .log_mass, the log importance estimate of
    <f(z|x)>_birth / f_fa(z) for their measurement. far_belief: object with
    .particles (> 0) and .weights.

    Each beta/xi row is shifted to a unit maximum before exponentiating so
    extreme likelihood ratios cannot overflow; downstream marginals are
    scale-invariant per row, so this is lossless.
    """
    K = len(legacy_beliefs)
    M = len(measurements)
    if K + M == 0:
        raise ValueError("nothing to associate: no tracks and no measurements")

    # FAR-integrated normalization factors: nbar = E[n(mu)], ntil = E[n(mu)/mu].
    mu = np.asarray(far_belief.particles, dtype=float)
    fw = np.asarray(far_belief.weights, dtype=float)
    log_n = (-mu + M * np.log(mu)) / (K + M)
    log_w = np.log(np.maximum(fw, 1e-300))
    log_nbar = log_sum_exp(log_n + log_w)
    log_ntil = log_sum_exp(log_n - np.log(mu) + log_w)
    log_t = log_ntil - log_nbar  # log of the 1/mu_fa weighting ratio

    log_fa = np.array([model.log_fa_density(z, params.u_de, params.d_max)
                       for z in measurements])

    log_beta = np.full((K, M + 1), -np.inf)
    det_prob: list = []
    log_lratio: list = []
    for k, tr in enumerate(legacy_beliefs):
        particles = tr.particles
        lw = np.log(np.maximum(tr.weights, 1e-300))
        p_d = model.detection_prob(particles[:, 2], params.u_de, geom.n_eff,
                                   params.amp_mode)
        log_p_d = model.log_detection_prob(particles[:, 2], params.u_de,
                                           geom.n_eff, params.amp_mode)
        llr = model.log_lik_matrix(measurements, particles, params, geom) \
            - log_fa[None, :]
        det_prob.append(p_d)
        log_lratio.append(llr)
        # Column 0 marginalizes existence: non-existence plus missed detection.
        miss = (1.0 - tr.p_exist) \
            + tr.p_exist * float(np.sum(tr.weights * (1.0 - p_d)))
        log_beta[k, 0] = np.log(max(miss, 1e-300))
        if M and tr.p_exist > 0.0:
            log_beta[k, 1:] = (log_t + np.log(tr.p_exist)
                               + log_sum_exp(lw[:, None] + log_p_d[:, None]
                                             + llr, axis=0))

    log_xi = np.zeros((M, K + 1))
    log_new_mass = np.full(M, -np.inf)
    for m, prop in enumerate(new_proposals):
        log_new_mass[m] = log_t + np.log(params.mu_n) + prop.log_mass
        log_xi[m, 0] = np.logaddexp(0.0, log_new_mass[m])

    # Row scaling (recorded implicitly via the log arrays; marginals unaffected).
    if K:
        shift_b = np.max(log_beta, axis=1, keepdims=True)
        shift_b = np.where(np.isfinite(shift_b), shift_b, 0.0)
        log_beta = log_beta - shift_b
    if M:
        shift_x = np.max(log_xi, axis=1, keepdims=True)
        log_xi = log_xi - shift_x

    return AssociationWeights(
        beta=np.exp(log_beta), xi=np.exp(log_xi),
        log_beta=log_beta, log_xi=log_xi,
        far_ratio=float(np.exp(log_t)),
        det_prob=det_prob, log_lratio=log_lratio,
        log_new_mass=log_new_mass,
    )


def _log_weights(w: AssociationWeights):
    if w.log_beta is not None and w.log_xi is not None:
        return np.array(w.log_beta, dtype=float), np.array(w.log_xi, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(w.beta, dtype=float)), \
            np.log(np.asarray(w.xi, dtype=float))


def _fix_degenerate_rows(lw: np.ndarray, tag: str, flagged: list) -> np.ndarray:
    """Replace all-zero weight rows by uniform rows, recording which."""
    bad = ~np.any(np.isfinite(lw), axis=1)
    for i in np.flatnonzero(bad):
        flagged.append((tag, int(i)))
    lw = lw.copy()
    lw[bad, :] = 0.0
    return lw


def _leave_one_out(base: np.ndarray, terms: np.ndarray) -> np.ndarray:
    """Row-wise log( exp(base) + sum_j exp(terms[:, j]) ) with column j
    excluded, computed stably. base: (R,), terms: (R, C) -> (R, C)."""
    stacked = np.concatenate([base[:, None], terms], axis=1)
    c = np.max(stacked, axis=1, keepdims=True)
    c = np.where(np.isfinite(c), c, 0.0)
    expd = np.exp(stacked - c)
    total = expd.sum(axis=1, keepdims=True)
    rest = np.maximum(total - expd[:, 1:], 0.0)
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(rest), _LOG_TINY) + c


def _normalize_rows(logp: np.ndarray) -> np.ndarray:
    out = np.exp(logp - log_sum_exp(logp, axis=1)[:, None])
    return out / out.sum(axis=1, keepdims=True)


def loopy_da(w: AssociationWeights, P: int, tol: float) -> AssociationMarginals:
    """Iterate the bipartite sum-product messages until the maximum absolute
    message change drops below tol or P iterations are reached.

    All messages are updated synchronously from the previous sweep, so the
    result is deterministic for identical inputs. Within each iteration the
    legacy-to-measurement messages (zeta) are refreshed from the previous
    measurement-to-legacy messages (nu), then nu from the new zeta.
    """
    lb, lx = _log_weights(w)
    K = lb.shape[0]
    M = lx.shape[0]
    if lb.shape != (K, M + 1) or lx.shape != (M, K + 1):
        raise ValueError("inconsistent weight shapes")

    flagged: list = []
    lb = _fix_degenerate_rows(lb, "a", flagged)
    lx = _fix_degenerate_rows(lx, "b", flagged)

    if K == 0 or M == 0:
        p_a = _normalize_rows(lb) if K else np.zeros((0, M + 1))
        p_b = _normalize_rows(lx) if M else np.zeros((0, K + 1))
        return AssociationMarginals(p_a, p_b, 0, True,
                                    np.zeros((M, K)), np.zeros((K, M)),
                                    tuple(flagged))

    log_nu = np.zeros((M, K))
    log_zeta = np.zeros((K, M))
    nu = np.ones((M, K))
    converged = False
    iterations = 0
    for iterations in range(1, P + 1):
        # zeta[k, m] = beta[k, m] / (beta[k, 0] + sum_{m' != m} beta[k, m'] nu[m', k])
        log_zeta = lb[:, 1:] - _leave_one_out(lb[:, 0], lb[:, 1:] + log_nu.T)
        # nu[m, k] = xi[m, k] / (xi[m, 0] + sum_{k' != k} xi[m, k'] zeta[k', m])
        log_nu_new = lx[:, 1:] - _leave_one_out(lx[:, 0], lx[:, 1:] + log_zeta.T)
        nu_new = np.exp(log_nu_new)
        delta = float(np.max(np.abs(nu_new - nu))) if nu.size else 0.0
        log_nu, nu = log_nu_new, nu_new
        if delta < tol:
            converged = True
            break

    p_a = _normalize_rows(np.concatenate([lb[:, :1], lb[:, 1:] + log_nu.T], axis=1))
    p_b = _normalize_rows(np.concatenate([lx[:, :1], lx[:, 1:] + log_zeta.T], axis=1))
    for tag, i in flagged:
        if tag == "a":
            p_a[i, :] = 1.0 / (M + 1)
        else:
            p_b[i, :] = 1.0 / (K + 1)
    return AssociationMarginals(p_a, p_b, iterations, converged,
                                log_nu, log_zeta, tuple(flagged))


def exhaustive_da_oracle(w: AssociationWeights) -> AssociationMarginals:
    """Exact association marginals by enumerating every admissible (a, b)
    configuration: each a_k picks a distinct measurement or 0, and b is the
    implied inverse. Only feasible for small instances."""
    beta = np.asarray(w.beta, dtype=float)
    xi = np.asarray(w.xi, dtype=float)
    K = beta.shape[0]
    M = xi.shape[0]
    if K > 8 or M > 8:
        raise ValueError("instance too large for exhaustive enumeration")

    p_a = np.zeros((K, M + 1))
    p_b = np.zeros((M, K + 1))
    assign = np.zeros(K, dtype=int)

    def recurse(k: int, used: int, weight: float):
        if k == K:
            # b is determined by a; unclaimed measurements fall to column 0.
            wght = weight
            for m in range(M):
                if used & (1 << m):
                    continue
                wght *= xi[m, 0]
            if wght == 0.0:
                return
            for kk in range(K):
                p_a[kk, assign[kk]] += wght
            for m in range(M):
                p_b[m, 0 if not (used & (1 << m)) else _owner(m)] += wght
            return
        for a_k in range(M + 1):
            if a_k > 0 and (used & (1 << (a_k - 1))):
                continue
            base = beta[k, a_k]
            if a_k > 0:
                base *= xi[a_k - 1, k + 1]
            if base == 0.0:
                continue
            assign[k] = a_k
            recurse(k + 1, used | (1 << (a_k - 1)) if a_k else used,
                    weight * base)

    def _owner(m: int) -> int:
        for kk in range(K):
            if assign[kk] == m + 1:
                return kk + 1
        raise AssertionError("claimed measurement without owner")

    recurse(0, 0, 1.0)
    tot_a = p_a.sum(axis=1, keepdims=True)
    tot_b = p_b.sum(axis=1, keepdims=True)
    if K and not np.all(tot_a > 0):
        raise ValueError("all configurations have zero weight")
    p_a = p_a / tot_a if K else np.zeros((0, M + 1))
    if M:
        p_b = p_b / tot_b
    else:
        p_b = np.zeros((0, K + 1))
    return AssociationMarginals(p_a, p_b, 0, True)
