"""Lyapunov function, Monte Carlo drift/minorization probes, and the Harris constants.

The constants pipeline works in mpmath.  Quantities such as
alpha = A^(-C A^95) are far below double range but are ordinary mpf
numbers (mpmath exponents are unbounded integers), so every comparison of
the form 1 - x < 1 - y is done on the small complements x, y directly and
never loses relative precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .coupling import m_steps
from .flow import amplitude_of, flow_pair_lifted, kernel_mc_many
from .streams import BLOCK, blocks, parallel_map, stream
from .torus import TWO_PI, in_ball_inf, separation, wrap

LOG_ZERO_THRESHOLD = -1000


@dataclass(frozen=True)
class LyapunovParams:
    p: float = 0.5
    s_star: float = 0.5
    gamma: float = 0.5
    K1: float = 1.0

    def __post_init__(self):
        if not (0 < self.p < 1):
            raise ValueError("p must lie in (0, 1)")
        if not (0 < self.s_star <= 1):
            raise ValueError("s_star must lie in (0, 1]")
        if not (0 < self.gamma < 1):
            raise ValueError("gamma must lie in (0, 1)")
        if not (self.K1 > 0):
            raise ValueError("K1 must be positive")


def lyapunov_v(z, lp):
    """|x - y|_inf^-p below s_star, the constant s_star^-p above."""
    sep = np.asarray(separation(z), dtype=float)
    if np.any(sep == 0):
        raise ValueError("V is undefined on the diagonal")
    out = np.where(sep < lp.s_star, sep ** (-lp.p), lp.s_star ** (-lp.p))
    return float(out) if out.ndim == 0 else out


def beta_norm(values, v, beta):
    """sup |f| / (1 + beta V) over the supplied samples."""
    return float(np.max(np.abs(values) / (1.0 + beta * np.asarray(v))))


# -- drift ---------------------------------------------------------------------

def random_pairs_at(rng, seps):
    """Pairs with prescribed l-inf separations (one coordinate of y - x saturates)."""
    m = len(seps)
    x = rng.uniform(0.0, TWO_PI, (m, 2))
    off = rng.uniform(-1.0, 1.0, (m, 2)) * seps[:, None]
    axis = rng.integers(0, 2, m)
    sign = np.where(rng.uniform(size=m) < 0.5, -1.0, 1.0)
    off[np.arange(m), axis] = sign * seps
    return np.concatenate([x, wrap(x + off)], axis=1)


@dataclass
class DriftReport:
    gamma_hat: float
    K_hat: float
    worst_ratio: float
    offdiag_max: float
    offdiag_bound: float
    offdiag_ok: bool
    near: np.ndarray = field(repr=False, default=None)
    far: np.ndarray = field(repr=False, default=None)
    pv_near: np.ndarray = field(repr=False, default=None)
    pv_far: np.ndarray = field(repr=False, default=None)


def _expect_v(z, lp, A, mc_samples, seed, key):
    """E[V(Phi_2(z))] and max V(Phi_2(z)) over mc_samples shift draws."""
    total = 0.0
    vmax = 0.0
    for b, size in blocks(mc_samples, BLOCK):
        xi = stream(seed, *key, b).uniform(0.0, TWO_PI, (size, 2))
        img = flow_pair_lifted(z, xi, A)
        vals = lyapunov_v(wrap(img), lp)
        total += float(np.sum(vals))
        vmax = max(vmax, float(np.max(vals)))
    return total / mc_samples, vmax


def drift_check(lp, params, z_samples=100, mc_samples=10_000, rng_seed=0,
                workers=None, far_samples=None, min_log_sep=-4.0):
    """Fit P V <= gamma V + K A^(2p) from Monte Carlo means of V after one period.

    ``z_samples`` near-diagonal pairs have log-uniform separation in
    [10^min_log_sep, 1] * A^-2 s_star; gamma_hat is the largest PV/V among
    them.  ``far_samples`` pairs (default: as many) have separation
    >= s_star and feed the almost-sure bound V(Phi_2) <= (1+A)^(2p) s_star^-p.
    K_hat is the smallest K with PV <= gamma_hat V + K A^(2p) on all points.
    """
    if mc_samples < 1000:
        raise ValueError("mc_samples must be >= 1000")
    A = amplitude_of(params)
    far_samples = z_samples if far_samples is None else far_samples
    rng = stream(rng_seed, 0)
    top = lp.s_star / A ** 2
    near_sep = top * 10.0 ** rng.uniform(min_log_sep, 0.0, z_samples)
    near = random_pairs_at(rng, near_sep)
    far_sep = rng.uniform(lp.s_star, math.pi, far_samples)
    far = random_pairs_at(rng, far_sep)
    pts = np.concatenate([near, far])

    res = parallel_map(lambda i: _expect_v(pts[i], lp, A, mc_samples, rng_seed, (1, i)),
                       range(len(pts)), workers)
    pv = np.array([r[0] for r in res])
    vmax = np.array([r[1] for r in res])
    v = lyapunov_v(pts, lp)
    ratios = pv / v
    nz = len(near)
    gamma_hat = float(np.max(ratios[:nz])) if nz else float("nan")
    excess = np.maximum(pv - gamma_hat * v, 0.0) if nz else pv
    K_hat = float(np.max(excess) / A ** (2 * lp.p))
    bound = (1.0 + A) ** (2 * lp.p) * lp.s_star ** (-lp.p)
    off_max = float(np.max(vmax[nz:])) if far_samples else 0.0
    return DriftReport(
        gamma_hat=gamma_hat, K_hat=K_hat, worst_ratio=float(np.max(ratios)),
        offdiag_max=off_max, offdiag_bound=bound, offdiag_ok=off_max <= bound,
        near=near, far=far, pv_near=pv[:nz], pv_far=pv[nz:],
    )


# -- minorization --------------------------------------------------------------

def ball_boundary_points(rng, center, rho, count):
    """Points on the l-inf sphere of radius rho (shrunk by 1e-9 to stay in the open ball)."""
    r = rho * (1.0 - 1e-9)
    u = rng.uniform(-r, r, (count, 4))
    face = rng.integers(0, 4, count)
    u[np.arange(count), face] = np.where(rng.uniform(size=count) < 0.5, -r, r)
    return wrap(np.asarray(center, dtype=float) + u)


def linf_ball_volume(rho):
    """Lebesgue measure of an l-inf ball of radius rho in T^4."""
    return (2.0 * min(rho, math.pi)) ** 4


@dataclass
class MinorizationResult:
    rho_out: list
    inf_prob_estimate: list
    inf_lower: list
    lebesgue_ratio: list
    starts: np.ndarray = field(repr=False, default=None)
    estimates: list = field(repr=False, default=None)


def minorization_mc(center, rho_in, rho_out, n, boundary_samples, mc_samples,
                    params, rng_seed, workers=None):
    """inf over start points in B(center, rho_in) of P^n(z', B(center, rho_out)).

    Start points are the centre plus ``boundary_samples`` points on the
    boundary of the inner ball.  ``rho_out`` may be a list; all radii share
    the same shift draws so estimates are monotone in the radius.
    """
    if rho_in <= 0:
        raise ValueError("rho_in must be positive")
    if mc_samples < 10_000:
        raise ValueError("mc_samples must be >= 1e4")
    radii = [float(r) for r in np.atleast_1d(rho_out)]
    if any(r <= 0 for r in radii):
        raise ValueError("rho_out must be positive")
    center = wrap(np.asarray(center, dtype=float))
    rng = stream(rng_seed, 0)
    starts = np.concatenate([center[None, :],
                             ball_boundary_points(rng, center, rho_in, boundary_samples)])
    events = [(lambda img, r=r: in_ball_inf(center, r, img)) for r in radii]
    est = [kernel_mc_many(s, n, events, mc_samples, rng_seed, params, workers, key=(1, i))
           for i, s in enumerate(starts)]
    inf_p, inf_lo, ratio = [], [], []
    for j, r in enumerate(radii):
        inf_p.append(min(e[j].probability for e in est))
        inf_lo.append(min(e[j].lower for e in est))
        ratio.append(inf_p[-1] / linf_ball_volume(r))
    return MinorizationResult(radii, inf_p, inf_lo, ratio, starts, est)


# -- constants pipeline --------------------------------------------------------

@dataclass
class HarrisConstants:
    A: object
    C: object
    q: object
    lp: LyapunovParams
    dps: int
    log_r1: object
    log_r2: object
    log_c1: object
    log_c2: object
    log_pA: object
    M: int
    R2: object
    gamma_M: object
    gamma_M_zero: bool
    L_M: object
    log_LM: object
    alpha: object
    log_alpha: object
    log_beta: object
    gamma0: object
    ratio: object
    one_minus_ratio: object
    alphabar: object
    log_one_minus_alphabar: object
    log_zeta: object
    log_rate: object
    log_rate_derived: object


def constants_pipeline(A, lp=None, C=3.0, q=3.0, C1=1.0, C2=1.0, C3=1.0, C4=1.0,
                       dps=60, log_alpha_override=None):
    """Every constant of the Harris argument at amplitude A, in mpmath at ``dps`` digits.

    r1 = C1 A^-95, r2 = C2 A^-37, c1 = C3 A^-378, c2 = C4 A^-196 are stored as
    logs.  ``log_alpha_override`` replaces log alpha (for designed-failure runs).
    """
    lp = LyapunovParams() if lp is None else lp
    if not (A > 1):
        raise ValueError("A must exceed 1")
    if not (C >= 1):
        raise ValueError("C must be >= 1")
    if not (0 <= q < math.inf):
        raise ValueError("q must be finite and nonnegative")
    mp = mpmath
    with mp.workdps(dps):
        A_ = mp.mpf(A)
        C_ = mp.mpf(C)
        q_ = mp.mpf(q)
        lnA = mp.log(A_)
        p = mp.mpf(lp.p)
        gamma = mp.mpf(lp.gamma)
        K1 = mp.mpf(lp.K1)
        log_r1 = mp.log(C1) - 95 * lnA
        log_r2 = mp.log(C2) - 37 * lnA
        log_c1 = mp.log(C3) - 378 * lnA
        log_c2 = mp.log(C4) - 196 * lnA
        log_pA = -C_ * A_ ** 2 * lnA
        # r1 ~ A^-95 must be exact to well past the digits of 2 pi / r1
        with mp.workdps(dps + int(95 * math.log10(A)) + 40):
            M = m_steps(A, lp.s_star, mp.mpf(C1) * mp.mpf(A) ** -95)

        A2p = A_ ** (2 * p)
        R2 = 2 * C_ * K1 * A2p / (1 - gamma)
        logg = M * mp.log(gamma)
        gamma_M_zero = bool(logg < LOG_ZERO_THRESHOLD)
        gamma_M = mp.mpf(0) if gamma_M_zero else mp.exp(logg)
        L_M = K1 * A2p * (1 - gamma_M) / (1 - gamma)

        log_alpha = -C_ * A_ ** 95 * lnA if log_alpha_override is None else mp.mpf(log_alpha_override)
        alpha = mp.exp(log_alpha)
        beta = alpha / (2 * L_M)
        gamma0 = mp.mpf(3) / 4
        u = R2 * beta
        # ratio = (2 + u gamma0)/(2 + u) = 1 - u (1 - gamma0)/(2 + u)
        one_minus_ratio = u * (1 - gamma0) / (2 + u)
        ratio = 1 - one_minus_ratio
        one_minus_alphabar = min(alpha / 2, one_minus_ratio)
        alphabar = 1 - one_minus_alphabar
        log_zeta = mp.log(mp.mpf(1) / 16) + mp.log(min(1 / (1 + q_), mp.mpf(1) / 4)) + 2 * log_alpha
        return HarrisConstants(
            A=A_, C=C_, q=q_, lp=lp, dps=dps,
            log_r1=log_r1, log_r2=log_r2, log_c1=log_c1, log_c2=log_c2, log_pA=log_pA,
            M=M, R2=R2, gamma_M=gamma_M, gamma_M_zero=gamma_M_zero,
            L_M=L_M, log_LM=mp.log(L_M), alpha=alpha, log_alpha=log_alpha,
            log_beta=mp.log(beta), gamma0=gamma0, ratio=ratio,
            one_minus_ratio=one_minus_ratio, alphabar=alphabar,
            log_one_minus_alphabar=mp.log(one_minus_alphabar),
            log_zeta=log_zeta, log_rate=-(A_ ** 96),
            log_rate_derived=2 * log_alpha - mp.log(4),
        )


@dataclass
class AuditCheck:
    name: str
    passed: bool
    lhs: object
    rhs: object
    gated: bool = True
    note: str = ""


def inequality_audit(hc):
    """Named checks of the inequalities the rate argument needs.

    Gated checks use the constants exactly as defined (R2 carries the
    factor C).  Informational checks report the alternative reading in which
    L_M / R2 = (1 - gamma^M)/4 regardless of C, and the comparison of the
    derived contraction exponent with the stated rate.
    """
    mp = mpmath
    out = []
    with mp.workdps(hc.dps):
        alpha, gM = hc.alpha, hc.gamma_M
        lm_r2 = hc.L_M / hc.R2
        flag = " (gamma^M treated as 0)" if hc.gamma_M_zero else ""
        out.append(AuditCheck("gamma_M_below_half", gM < mp.mpf(1) / 2, gM, mp.mpf(1) / 2, note=flag))
        lhs = gM + 2 * lm_r2
        out.append(AuditCheck("gamma0_window", lhs < hc.gamma0, lhs, hc.gamma0,
                              note="gamma^M + 2 L_M/R2 < 3/4" + flag))
        lhs = hc.M * mp.log1p(alpha)
        out.append(AuditCheck("one_plus_alpha_pow_M_below_2", lhs < mp.log(2), lhs, mp.log(2),
                              note="M log1p(alpha) < log 2"))
        # 1 - alpha/2 < ratio  <=>  1 - ratio < alpha/2
        out.append(AuditCheck("ratio_above_one_minus_half_alpha",
                              hc.one_minus_ratio < alpha / 2, hc.one_minus_ratio, alpha / 2,
                              note="compared as 1 - ratio < alpha/2"))
        out.append(AuditCheck("ratio_below_one_minus_quarter_alpha",
                              hc.one_minus_ratio > alpha / 4, hc.one_minus_ratio, alpha / 4,
                              note="compared as 1 - ratio > alpha/4"))
        out.append(AuditCheck("alphabar_above_half", hc.alphabar > mp.mpf(1) / 2,
                              hc.alphabar, mp.mpf(1) / 2))
        oma = mp.exp(hc.log_one_minus_alphabar)
        out.append(AuditCheck("alphabar_below_one_minus_quarter_alpha", oma > alpha / 4,
                              oma, alpha / 4, note="compared as 1 - alphabar > alpha/4"))

        # informational
        ident = (1 - gM) / 4
        out.append(AuditCheck("identity_LM_over_R2", mp.almosteq(lm_r2, ident, mp.mpf(10) ** (-hc.dps + 5)),
                              lm_r2, ident, gated=False,
                              note=f"as defined L_M/R2 = (1-gamma^M)/(2C); equal to (1-gamma^M)/4 only for C = 2"))
        a1 = alpha / (1 - gM)
        om_alt = a1 / (1 + a1) / 4
        out.append(AuditCheck("alt_ratio_above_one_minus_half_alpha", om_alt < alpha / 2,
                              om_alt, alpha / 2, gated=False,
                              note="ratio written as 3/4 + 1/(4(1 + alpha/(1-gamma^M)))"))
        out.append(AuditCheck("alt_ratio_below_one_minus_quarter_alpha", om_alt > alpha / 4,
                              om_alt, alpha / 4, gated=False,
                              note="needs gamma^M > alpha; fails when gamma^M is negligible"))
        out.append(AuditCheck("derived_rate_at_least_stated", hc.log_rate_derived >= hc.log_rate,
                              hc.log_rate_derived, hc.log_rate, gated=False,
                              note="log(alpha^2/4) >= -A^96; holds once A > 2 C ln A roughly"))
    return out


def audit_passed(checks):
    return all(c.passed for c in checks if c.gated)


def constants_record(hc, checks=None):
    """JSON-ready dict; mpf values become decimal strings at the pipeline precision."""
    def s(x):
        return mpmath.nstr(x, hc.dps) if isinstance(x, mpmath.mpf) else x

    rec = {
        "A": s(hc.A), "C": s(hc.C), "q": s(hc.q), "dps": hc.dps,
        "lyapunov": {"p": hc.lp.p, "s_star": hc.lp.s_star, "gamma": hc.lp.gamma, "K1": hc.lp.K1},
        "log_domain": ["log_r1", "log_r2", "log_c1", "log_c2", "log_pA", "log_LM", "log_alpha",
                       "log_beta", "log_one_minus_alphabar", "log_zeta", "log_rate",
                       "log_rate_derived"],
    }
    for k in ("log_r1", "log_r2", "log_c1", "log_c2", "log_pA", "R2", "gamma_M", "L_M",
              "log_LM", "alpha", "log_alpha", "log_beta", "gamma0", "ratio", "one_minus_ratio",
              "alphabar", "log_one_minus_alphabar", "log_zeta", "log_rate", "log_rate_derived"):
        rec[k] = s(getattr(hc, k))
    rec["M"] = str(hc.M)
    rec["gamma_M_zero"] = hc.gamma_M_zero
    if checks is not None:
        rec["audit"] = [
            {"name": c.name, "passed": bool(c.passed), "gated": c.gated,
             "lhs": s(c.lhs), "rhs": s(c.rhs), "note": c.note}
            for c in checks
        ]
        rec["audit_passed"] = audit_passed(checks)
    return rec
