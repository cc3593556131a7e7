"""Gaussian model of supervised vs self-supervised class geometry.

Reference class ``G0 = N(0, S)``. Perturbed proxies:

* ``SSL1 = N(0, sigma * S)``
* ``SSL2 = N(0, sigma * I)``
* ``SL   = N(0, S^1/2 D S^1/2)``, ``D = diag(alpha x m, beta x (n-m))``

with SL and SSL matched in covariance determinant ("equal volume"). This
module evaluates the closed-form divergences, checks them against generic and
Monte-Carlo KL, and measures train/test risk gaps against the Pinsker bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError

CASES = ("SSL1", "SSL2", "SL_i1", "SL_i2")
EIG_FLOOR = 1e-12


# -- covariance plumbing ----------------------------------------------------


def _chol(S: np.ndarray, what: str = "covariance") -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DomainError(f"{what} must be square, got shape {S.shape}")
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise DomainError(f"{what} is not symmetric")
    if np.linalg.eigvalsh(S).min() <= 1e-10:
        raise DomainError(f"{what} is not positive definite")
    return np.linalg.cholesky(S)


def sqrtm_spd(S: np.ndarray) -> np.ndarray:
    """Symmetric square root from an eigendecomposition, eigenvalues floored."""
    w, V = np.linalg.eigh(S)
    return (V * np.sqrt(np.maximum(w, EIG_FLOOR))) @ V.T


def logdet_spd(S: np.ndarray) -> float:
    L = _chol(S)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


@dataclass
class GaussianSpec:
    """Zero-mean Gaussian, either explicit or in structured SL/SSL form.

    Structured form: ``kind`` in {"SL", "SSL1", "SSL2"} with ``sigma``,
    ``alpha``, ``beta``, ``m`` and ``base`` (the reference covariance).
    """

    cov: np.ndarray | None = None
    kind: str | None = None
    sigma: float | None = None
    alpha: float | None = None
    beta: float | None = None
    m: int | None = None
    base: np.ndarray | None = None
    mean: np.ndarray | None = None

    @property
    def n(self) -> int:
        ref = self.cov if self.cov is not None else self.base
        return int(np.asarray(ref).shape[0])

    def covariance(self) -> np.ndarray:
        if self.cov is not None:
            return np.asarray(self.cov, dtype=np.float64)
        S = np.asarray(self.base, dtype=np.float64)
        n = S.shape[0]
        if self.kind == "SSL1":
            return self.sigma * S
        if self.kind == "SSL2":
            return self.sigma * np.eye(n)
        if self.kind == "SL":
            if not (1 <= self.m <= n - 1):
                raise DomainError(f"m must lie in [1, n-1], got m={self.m}, n={n}")
            root = sqrtm_spd(S)
            d = np.r_[np.full(self.m, self.alpha), np.full(n - self.m, self.beta)]
            C = root @ np.diag(d) @ root
            return 0.5 * (C + C.T)
        raise DomainError(f"unknown structured kind {self.kind!r}")

    def mean_vector(self) -> np.ndarray:
        return np.zeros(self.n) if self.mean is None else np.asarray(self.mean, dtype=np.float64)


# -- divergences ------------------------------------------------------------


def kl_gaussian(sigma0, sigma1) -> float:
    """KL(N(0, sigma0) || N(0, sigma1)) via Cholesky factors."""
    L0 = _chol(sigma0, "sigma0")
    L1 = _chol(sigma1, "sigma1")
    n = L0.shape[0]
    if L1.shape[0] != n:
        raise DomainError(f"dimension mismatch: {n} vs {L1.shape[0]}")
    # tr(S1^-1 S0) = ||L1^-1 L0||_F^2
    Y = np.linalg.solve(L1, L0)
    trace = float(np.sum(Y * Y))
    logdet = 2.0 * float(np.sum(np.log(np.diag(L1))) - np.sum(np.log(np.diag(L0))))
    return 0.5 * (trace - n + logdet)


def equal_volume_alpha(beta: float, m: int, n: int, sigma: float, det_sigma: float | None = None) -> float:
    """Solve ``alpha^m beta^(n-m) = sigma^n [/ det S]`` for alpha (in log space)."""
    if not (beta > 0 and sigma > 0):
        raise DomainError(f"beta and sigma must be positive, got beta={beta}, sigma={sigma}")
    if not (1 <= m <= n - 1):
        raise DomainError(f"m must lie in [1, n-1], got m={m}, n={n}")
    log_rhs = n * math.log(sigma)
    if det_sigma is not None:
        if not det_sigma > 0:
            raise DomainError(f"det(S) must be positive, got {det_sigma}")
        log_rhs -= math.log(det_sigma)
    log_alpha = (log_rhs - (n - m) * math.log(beta)) / m
    if log_alpha > 700:
        raise OverflowError(f"alpha overflows for beta={beta} (log alpha = {log_alpha:.1f})")
    alpha = math.exp(log_alpha)
    if alpha <= beta:
        warnings.warn(f"alpha={alpha:.6g} <= beta={beta:.6g}: SL model assumes alpha > beta", RuntimeWarning,
                      stacklevel=2)
    return alpha


def volume_residual(spec: GaussianSpec, case: str) -> float:
    """Relative mismatch of ``alpha^m beta^(n-m)`` against its equal-volume target."""
    n, m = spec.n, spec.m
    lhs = m * math.log(spec.alpha) + (n - m) * math.log(spec.beta)
    rhs = n * math.log(spec.sigma)
    if case == "SL_i2":
        rhs -= logdet_spd(spec.base)
    return math.expm1(lhs - rhs)


def kl_closed_forms(spec: GaussianSpec, case: str) -> float:
    """KL(G0 || proxy) from the closed forms; depends only on scalar summaries of S."""
    if case not in CASES:
        raise DomainError(f"unknown case {case!r}; choose from {CASES}")
    n = spec.n
    s = spec.sigma
    if case == "SSL1":
        return 0.5 * (n / s - n + n * math.log(s))
    S = np.asarray(spec.base, dtype=np.float64)
    if case == "SSL2":
        return 0.5 * (float(np.trace(S)) / s - n + n * math.log(s) - logdet_spd(S))
    resid = volume_residual(spec, case)
    if abs(resid) > 1e-9:
        raise PreconditionError(f"equal-volume constraint violated for {case}: relative determinant residual {resid:.3e}")
    m, a, b = spec.m, spec.alpha, spec.beta
    value = m / a + (n - m) / b - n + n * math.log(s)
    if case == "SL_i2":
        value -= logdet_spd(S)
    return 0.5 * value


def proxy_spec(case: str, base, sigma: float, beta: float | None = None, m: int | None = None) -> GaussianSpec:
    """Build the proxy for ``case``, solving alpha from equal volume for SL cases."""
    base = np.asarray(base, dtype=np.float64)
    n = base.shape[0]
    if case == "SSL1":
        return GaussianSpec(kind="SSL1", sigma=sigma, base=base)
    if case == "SSL2":
        return GaussianSpec(kind="SSL2", sigma=sigma, base=base)
    det = None if case == "SL_i1" else math.exp(logdet_spd(base))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        alpha = equal_volume_alpha(beta, m, n, sigma, det)
    return GaussianSpec(kind="SL", sigma=sigma, alpha=alpha, beta=beta, m=m, base=base)


def _logpdf(X: np.ndarray, mean: np.ndarray, L: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    Z = np.linalg.solve(L, (X - mean).T)
    maha = np.sum(Z * Z, axis=0)
    return -0.5 * (maha + n * math.log(2 * math.pi)) - float(np.sum(np.log(np.diag(L))))


def monte_carlo_kl(p: GaussianSpec, q: GaussianSpec, samples: int = 10**6, seed=0, chunk: int = 200_000):
    """Sample estimate of ``E_p[log p - log q]``; returns (mean, standard error)."""
    if samples < 10**4:
        raise DomainError(f"need at least 1e4 samples, got {samples}")
    Lp, Lq = _chol(p.covariance(), "p"), _chol(q.covariance(), "q")
    mp, mq = p.mean_vector(), q.mean_vector()
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        size = min(chunk, samples - done)
        X = mp + rng.standard_normal((size, p.n)) @ Lp.T
        r = _logpdf(X, mp, Lp) - _logpdf(X, mq, Lq)
        total += math.fsum(r)
        total_sq += math.fsum(r * r)
        done += size
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return mean, math.sqrt(var / samples)


def monte_carlo_tv(p: GaussianSpec, q: GaussianSpec, samples: int = 10**5, seed=0):
    """``TV(p, q) = E_p[max(0, 1 - q/p)]``; returns (mean, standard error)."""
    Lp, Lq = _chol(p.covariance(), "p"), _chol(q.covariance(), "q")
    mp, mq = p.mean_vector(), q.mean_vector()
    rng = np.random.default_rng(seed)
    X = mp + rng.standard_normal((samples, p.n)) @ Lp.T
    ratio = np.exp(np.minimum(_logpdf(X, mq, Lq) - _logpdf(X, mp, Lp), 0.0))
    v = 1.0 - ratio
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(samples))


# -- propositions -----------------------------------------------------------


def sl_minus_ssl1(n: int, m: int, sigma: float, beta: float) -> float:
    """KL(G0||SL) - KL(G0||SSL1) under i=1 equal volume."""
    base = np.eye(n)
    sl = kl_closed_forms(proxy_spec("SL_i1", base, sigma, beta, m), "SL_i1")
    ssl = kl_closed_forms(proxy_spec("SSL1", base, sigma), "SSL1")
    return sl - ssl


@dataclass
class PropositionReport:
    case: str
    checked: int = 0
    failures: list = field(default_factory=list)
    beta0: float | None = None
    ratios: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def verify_anisotropy_props(grid, case: str = "i1", base=None, sigma: float = 1.0,
                            betas=(1e-1, 1e-2, 1e-3, 1e-4), scan=None, tol: float = 1e-12) -> PropositionReport:
    """Check the equal-volume divergence orderings.

    ``case="i1"``: ``grid`` is an iterable of ``(n, m, sigma, beta)``; the SL
    divergence must dominate SSL1 everywhere with equality exactly at
    ``beta == sigma``.

    ``case="i2"``: ``grid`` is an iterable of ``m`` values for the given
    ``base`` covariance; an empirical beta0 is located by scanning ``scan``
    (decreasing betas), and the SL/SSL2 ratio must increase along ``betas``.
    """
    rep = PropositionReport(case)
    if case == "i1":
        for n, m, s, b in grid:
            diff = sl_minus_ssl1(n, m, s, b)
            rep.checked += 1
            at_equality = b == s
            if diff < -tol:
                rep.failures.append({"point": (n, m, s, b), "difference": diff, "why": "negative"})
            elif at_equality and abs(diff) > tol:
                rep.failures.append({"point": (n, m, s, b), "difference": diff, "why": "nonzero at beta == sigma"})
            elif not at_equality and abs(diff) <= tol:
                rep.failures.append({"point": (n, m, s, b), "difference": diff, "why": "equality off beta == sigma"})
        return rep
    if case != "i2":
        raise DomainError(f"unknown proposition case {case!r}")
    base = np.asarray(base, dtype=np.float64)
    n = base.shape[0]
    ssl2 = kl_closed_forms(proxy_spec("SSL2", base, sigma), "SSL2")
    scan = np.logspace(1, -6, 141) if scan is None else np.asarray(scan)
    for m in grid:
        dominated = [kl_closed_forms(proxy_spec("SL_i2", base, sigma, b, m), "SL_i2") >= ssl2 for b in scan]
        # beta0: largest scanned beta below which SL dominates at every scanned point.
        beta0 = None
        for i in range(len(scan) - 1, -1, -1):
            if not dominated[i]:
                break
            beta0 = float(scan[i])
        rep.checked += 1
        if beta0 is None:
            rep.failures.append({"m": m, "why": "no beta0 found on scan"})
            continue
        rep.beta0 = beta0 if rep.beta0 is None else min(rep.beta0, beta0)
        ratios = [kl_closed_forms(proxy_spec("SL_i2", base, sigma, b, m), "SL_i2") / ssl2 for b in betas]
        rep.ratios.append(ratios)
        if any(r2 <= r1 for r1, r2 in zip(ratios, ratios[1:])):
            rep.failures.append({"m": m, "why": "ratio not increasing", "ratios": ratios})
    return rep


# -- risk gap ---------------------------------------------------------------


def risk_gap_bound(pi1: float, kl: float) -> float:
    """``pi1 * sqrt(kl / 2)``: Pinsker bound on the train/test risk gap."""
    if not 0 < pi1 <= 1:
        raise DomainError(f"pi1 must lie in (0, 1], got {pi1}")
    if kl < 0:
        raise DomainError(f"KL must be non-negative, got {kl}")
    return pi1 * math.sqrt(kl / 2.0)


@dataclass
class RiskGapSetup:
    """Class 1 differs between train and test; the other classes do not."""

    pi1: float
    test_class1: GaussianSpec
    train_class1: GaussianSpec
    others: list  # GaussianSpec, shared by train and test
    other_priors: list

    def __post_init__(self):
        total = self.pi1 + sum(self.other_priors)
        if not math.isclose(total, 1.0, abs_tol=1e-12):
            raise DomainError(f"class priors sum to {total}, not 1")
        if len(self.others) != len(self.other_priors):
            raise DomainError("one prior per other class is required")


@dataclass
class RiskGapResult:
    risk_train: float
    risk_test: float
    gap: float
    bound: float
    stderr: float
    kl: float

    @property
    def within_bound(self) -> bool:
        return abs(self.gap) <= self.bound + 3.0 * self.stderr


def likelihood_ratio_classifier(setup: RiskGapSetup):
    """Bayes rule for the test distribution (class 1 drawn from the reference)."""
    comps = [setup.test_class1] + list(setup.others)
    priors = np.array([setup.pi1] + list(setup.other_priors))
    chols = [_chol(c.covariance()) for c in comps]
    means = [c.mean_vector() for c in comps]

    def predict(X):
        scores = np.stack([_logpdf(X, mu, L) for mu, L in zip(means, chols)]) + np.log(priors)[:, None]
        return np.argmax(scores, axis=0)

    return predict


def linear_rule(w, b: float, positive_class: int = 0, other_class: int = 1):
    """``h(x) = positive_class if w.x + b >= 0 else other_class``."""
    w = np.asarray(w, dtype=np.float64)

    def predict(X):
        return np.where(X @ w + b >= 0, positive_class, other_class)

    return predict


def _sample_mixture(setup: RiskGapSetup, class1: GaussianSpec, samples: int, rng):
    comps = [class1] + list(setup.others)
    priors = np.array([setup.pi1] + list(setup.other_priors))
    y = rng.choice(len(comps), size=samples, p=priors)
    X = np.empty((samples, class1.n))
    for c, comp in enumerate(comps):
        idx = np.flatnonzero(y == c)
        L = _chol(comp.covariance())
        X[idx] = comp.mean_vector() + rng.standard_normal((idx.size, comp.n)) @ L.T
    return X, y


def empirical_risk_gap(setup: RiskGapSetup, classifier=None, samples: int = 10**5, seed=0) -> RiskGapResult:
    """Monte-Carlo 0-1 risks under train (source) and test (target) mixtures.

    Class labels are 0 for the shifted class and 1.. for the others.
    """
    h = classifier or likelihood_ratio_classifier(setup)
    rng = np.random.default_rng(seed)
    Xs, ys = _sample_mixture(setup, setup.train_class1, samples, rng)
    Xt, yt = _sample_mixture(setup, setup.test_class1, samples, rng)
    rs = float(np.mean(h(Xs) != ys))
    rt = float(np.mean(h(Xt) != yt))
    se = math.sqrt(rs * (1 - rs) / samples + rt * (1 - rt) / samples)
    kl = kl_gaussian(setup.test_class1.covariance(), setup.train_class1.covariance())
    return RiskGapResult(rs, rt, rt - rs, risk_gap_bound(setup.pi1, max(kl, 0.0)), se, kl)


# -- randomised verification harness ---------------------------------------


def random_spd(rng, n: int, low: float = 0.5, high: float = 2.0) -> np.ndarray:
    """Random rotation of a diagonal with eigenvalues in ``[low, high]``."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    S = (Q * rng.uniform(low, high, n)) @ Q.T
    return 0.5 * (S + S.T)


def random_proxy(rng, case: str):
    """Draw (base covariance, proxy spec) for one case of the closed forms."""
    n = int(rng.integers(2, 7))
    base = random_spd(rng, n)
    if case in ("SSL1", "SSL2"):
        return base, proxy_spec(case, base, float(rng.uniform(0.2, 1.0)))
    sigma = float(rng.uniform(0.2, 1.0))
    m = int(rng.integers(1, n))
    beta = float(sigma * rng.uniform(0.1, 1.0))
    return base, proxy_spec(case, base, sigma, beta, m)


def closed_form_vs_generic(case: str, draws: int = 100, seed=0):
    """Largest |closed form - generic KL| over random draws."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        base, spec = random_proxy(rng, case)
        closed = kl_closed_forms(spec, case)
        generic = kl_gaussian(base, spec.covariance())
        worst = max(worst, abs(closed - generic))
    return worst


def i1_grid(points: int = 1000, seed=0):
    """(n, m, sigma, beta) tuples; every tenth point sits on beta == sigma."""
    rng = np.random.default_rng(seed)
    grid = []
    for i in range(points):
        n = int(rng.integers(2, 11))
        m = int(rng.integers(1, n))
        sigma = float(rng.choice([0.1, 0.25, 0.5, 0.75, 0.9]))
        if i % 10 == 0:
            beta = sigma
        else:
            beta = float(sigma * rng.choice([1e-4, 1e-3, 1e-2, 0.1, 0.3, 0.5, 0.7, 0.9]))
        grid.append((n, m, sigma, beta))
    return grid


def risk_gap_experiment(seed, samples: int = 10**5, pi1: float = 0.5):
    """One 2-class, 2-D experiment: SSL1 and equal-volume SL perturbations of class 1.

    Returns a dict with both measured gaps, their bounds and stderr slack.
    """
    rng = np.random.default_rng(seed)
    n, m = 2, 1
    base = random_spd(rng, n)
    sigma = float(rng.uniform(0.3, 0.9))
    beta = float(sigma * rng.uniform(0.05, 0.5))
    g0 = GaussianSpec(cov=base)
    ssl = proxy_spec("SSL1", base, sigma)
    sl = proxy_spec("SL_i1", base, sigma, beta, m)
    angle = rng.uniform(0, 2 * math.pi)
    other = GaussianSpec(cov=np.eye(n), mean=2.0 * np.array([math.cos(angle), math.sin(angle)]))
    out = {"sigma": sigma, "beta": beta, "alpha": sl.alpha, "pi1": pi1}
    for label, spec, case in (("ssl1", ssl, "SSL1"), ("sl", sl, "SL_i1")):
        setup = RiskGapSetup(pi1, g0, GaussianSpec(cov=spec.covariance()), [other], [1.0 - pi1])
        res = empirical_risk_gap(setup, samples=samples, seed=int(rng.integers(2**32)))
        bound = risk_gap_bound(pi1, kl_closed_forms(spec, case))
        out[label] = {"gap": res.gap, "stderr": res.stderr, "bound": bound,
                      "within_bound": bool(abs(res.gap) <= bound + 3.0 * res.stderr)}
    out["ssl_tighter"] = bool(out["ssl1"]["bound"] <= out["sl"]["bound"])
    return out


def theory_report(samples: int = 10**6, risk_samples: int = 10**5, experiments: int = 20, seed: int = 0,
                  draws: int = 100) -> dict:
    checks = {}

    ex_ssl = kl_closed_forms(proxy_spec("SSL1", np.eye(2), 0.5), "SSL1")
    ex_sl = kl_closed_forms(GaussianSpec(kind="SL", sigma=0.5, alpha=2.5, beta=0.1, m=1, base=np.eye(2)), "SL_i1")
    checks["worked_examples"] = {
        "ssl1_n2_sigma0.5": ex_ssl, "sl_i1_n2_sigma0.5_beta0.1": ex_sl,
        "passed": abs(ex_ssl - 0.306853) < 1e-6 and abs(ex_sl - 3.506853) < 1e-6,
    }

    worst = {c: closed_form_vs_generic(c, draws, seed=[seed, i]) for i, c in enumerate(CASES)}
    checks["closed_form_vs_generic"] = {"max_abs_error": worst, "tolerance": 1e-10,
                                         "passed": all(v <= 1e-10 for v in worst.values())}

    rng = np.random.default_rng([seed, 99])
    mc = {}
    for i, case in enumerate(CASES):
        base, spec = random_proxy(rng, case)
        est, se = monte_carlo_kl(GaussianSpec(cov=base), GaussianSpec(cov=spec.covariance()), samples, seed=[seed, i])
        closed = kl_closed_forms(spec, case)
        mc[case] = {"closed_form": float(closed), "estimate": est, "stderr": se,
                    "passed": bool(abs(est - closed) <= 3 * se)}
    checks["monte_carlo_kl"] = {"cases": mc, "samples": samples, "passed": all(v["passed"] for v in mc.values())}

    rep1 = verify_anisotropy_props(i1_grid(1000, seed), "i1")
    checks["anisotropy_i1"] = {"grid_points": rep1.checked, "failures": rep1.failures[:5], "passed": rep1.passed}

    rng = np.random.default_rng([seed, 7])
    i2 = []
    for _ in range(10):
        n = int(rng.integers(2, 6))
        base = random_spd(rng, n)
        rep = verify_anisotropy_props(range(1, n), "i2", base=base, sigma=1.0)
        i2.append({"n": n, "beta0": rep.beta0, "passed": rep.passed, "failures": rep.failures[:3]})
    checks["small_beta_i2"] = {"instances": i2, "passed": all(r["passed"] for r in i2)}

    runs = [risk_gap_experiment([seed, e], risk_samples) for e in range(experiments)]
    checks["risk_gap"] = {
        "experiments": runs,
        "passed": all(r["ssl1"]["within_bound"] and r["sl"]["within_bound"] and r["ssl_tighter"] for r in runs),
    }
    return {"schema": "mers-theory/1", "checks": checks, "passed": all(c["passed"] for c in checks.values())}
