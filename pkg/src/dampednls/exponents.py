"""Exponent algebra: the parameter gate, Strichartz admissible pairs, and the
Sobolev exponents of the nonlinearity estimate, with an empirical check of the
latter.

Exponents are exact :class:`fractions.Fraction` values; infinity is the float
``math.inf``. Float inputs are converted to the nearest fraction with
denominator at most 10**6, so ``4/3`` given as a float is read as ``Fraction(4, 3)``.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError
from .grid import sobolev_norm
from .noise import path_stream
from .observables import v_norm_sq

INF = math.inf


def as_exponent(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "infinity", "oo"):
            return INF
        return Fraction(x.strip())
    if isinstance(x, float):
        if math.isinf(x):
            return INF
        return Fraction(x).limit_denominator(10**6)
    return Fraction(x)


def reciprocal(x):
    return Fraction(0) if x == INF else 1 / x


def conjugate(x):
    """``x'`` with ``1/x + 1/x' = 1``; ``1' = inf`` and ``inf' = 1``."""
    x = as_exponent(x)
    if x != INF and x < 1:
        raise DomainError(f"conjugate exponent needs x >= 1, got {x}")
    if x == 1:
        return INF
    if x == INF:
        return Fraction(1)
    return x / (x - 1)


def fmt(x):
    return "inf" if x == INF else str(x)


# -- parameter gate ----------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    status: str  # "admissible" | "rejected" | "admissible-with-flag"
    reason: str = ""

    @property
    def ok(self):
        return self.status != "rejected"

    def __str__(self):
        return self.status + (f" ({self.reason})" if self.reason else "")


def _below_l_infty_threshold(sigma):
    """Exact test of ``sigma < (1 + sqrt 17) / 4``."""
    t = 4 * sigma - 1
    return t < 0 or t * t < 17


def check_assumptions(d, sigma, alpha):
    """Classify ``(d, sigma, alpha)`` against the well-posedness range.

    Focusing needs ``sigma < 2/d``; defocusing needs ``sigma < 2/(d-2)`` when
    ``d = 3`` and nothing more for ``d <= 2``. For ``d = 3`` a sigma at or above
    ``(1 + sqrt 17)/4`` is flagged as outside the L-infinity regularity regime.
    """
    if d not in (1, 2, 3):
        raise DomainError(f"dimension must be 1, 2 or 3 (the exponent conditions are incompatible for d >= 4), got {d}")
    if alpha not in (1, -1):
        raise DomainError(f"alpha must be +1 or -1, got {alpha}")
    s = as_exponent(sigma)
    if s < 0:
        return Verdict("rejected", "sigma must be >= 0")
    if alpha == 1:
        bound = Fraction(2, d)
        if not s < bound:
            return Verdict("rejected", f"focusing needs sigma < 2/d = {bound}")
    elif d == 3 and not s < 2:
        return Verdict("rejected", "defocusing in d=3 needs sigma < 2/(d-2) = 2")
    if d == 3 and not _below_l_infty_threshold(s):
        return Verdict("admissible-with-flag",
                       "outside L^inf-regularity regime: sigma >= (1+sqrt(17))/4 in d=3")
    return Verdict("admissible")


# -- Strichartz pairs ---------------------------------------------------------


def _r_in_range(d, r):
    if r != INF and r < 2:
        return False
    if d >= 3:
        return r != INF and r <= Fraction(2 * d, d - 2)
    if d == 2:
        return r != INF
    return True


def is_admissible_pair(d, p, r):
    """``2/p + d/r = d/2`` exactly, ``(p, r) != (2, inf)``, and ``r`` in the
    dimension-dependent range."""
    p, r = as_exponent(p), as_exponent(r)
    if (p != INF and p < 1) or (r != INF and r < 1):
        return False
    if p == 2 and r == INF:
        return False
    if 2 * reciprocal(p) + d * reciprocal(r) != Fraction(d, 2):
        return False
    return _r_in_range(d, r)


@dataclass(frozen=True)
class AdmissiblePair:
    d: int
    p: object
    r: object

    def __post_init__(self):
        object.__setattr__(self, "p", as_exponent(self.p))
        object.__setattr__(self, "r", as_exponent(self.r))
        if not is_admissible_pair(self.d, self.p, self.r):
            raise DomainError(f"({fmt(self.p)}, {fmt(self.r)}) is not admissible in d={self.d}")

    @property
    def dual(self):
        return conjugate(self.p), conjugate(self.r)


def pair_for_r(d, r):
    """Time exponent ``p`` completing ``r`` to an admissible pair, or None."""
    r = as_exponent(r)
    rhs = Fraction(d, 2) - d * reciprocal(r)
    if rhs <= 0:
        return None
    p = 2 / rhs
    return p if is_admissible_pair(d, p, r) else None


# -- nonlinearity estimate ------------------------------------------------------


def lemma_c_exponent(d, sigma):
    """Integrability exponent ``p`` for which ``||F(u)||_{H^{1,p}} <~ ||u||_V^{2 sigma+1}``.

    d=2: ``2/(2 sigma+1)`` below sigma=1/2, else 4/3. d=3: ``6/(2 sigma+3)`` for
    sigma in (0, 3/2].
    """
    s = as_exponent(sigma)
    if not s > 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    if d == 2:
        return 2 / (2 * s + 1) if s < Fraction(1, 2) else Fraction(4, 3)
    if d == 3:
        if s > Fraction(3, 2):
            raise DomainError(f"d=3 needs sigma <= 3/2, got {sigma}")
        return 6 / (2 * s + 3)
    raise DomainError(f"nonlinearity exponents are defined for d=2 and d=3, got d={d}")


def nonlinearity_norms(d, sigma):
    """``[(s, p), ...]`` Sobolev norms of ``F(u)`` bounded by ``||u||_V^{2 sigma+1}``."""
    out = [(Fraction(1), lemma_c_exponent(d, sigma))]
    s = as_exponent(sigma)
    if d == 3 and Fraction(1) <= s <= Fraction(3, 2) and (2 - s, Fraction(6, 5)) not in out:
        out.append((2 - s, Fraction(6, 5)))
    return out


def nonlinearity_quotients(grid, fields, sigma, s, p, chunk=64):
    """``||F(u)||_{H^{s,p}} / ||u||_V^{2 sigma + 1}`` per field; nan for zero fields."""
    out = np.empty(len(fields))
    for lo in range(0, len(fields), chunk):
        u = fields[lo : lo + chunk]
        F = np.abs(u) ** (2 * sigma) * u
        num = np.atleast_1d(sobolev_norm(F, float(s), float(p), grid))
        den = np.atleast_1d(v_norm_sq(u, grid)) ** ((2 * sigma + 1) / 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[lo : lo + chunk] = np.where(den > 0, num / den, np.nan)
    return out


@dataclass
class NonlinearityReport:
    d: int
    sigma: float
    norms: list
    fit_max: list
    holdout_max: list
    violations: list
    corpus_size: int
    slack: float
    gate: str = ""
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(v == 0 for v in self.violations)

    def to_dict(self):
        return {
            "d": self.d, "sigma": self.sigma,
            "norms": [f"H^({fmt(s)},{fmt(p)})" for s, p in self.norms],
            "fit_max": self.fit_max, "holdout_max": self.holdout_max,
            "violations": self.violations, "corpus_size": self.corpus_size,
            "slack": self.slack, "gate": self.gate, "passed": self.passed,
        }


def verify_nonlinearity_estimate(grid, sigma, corpus_size, seed=0, slack=0.01, alpha=-1):
    """Fit the estimate's constant as the max quotient over a fit corpus and count
    hold-out fields exceeding it by more than ``slack``.

    Each corpus mixes the two smoothness levels of :mod:`dampednls.corpus`.
    """
    from .corpus import mixed_corpus

    verdict = check_assumptions(grid.d, sigma, alpha)
    if not verdict.ok:
        raise DomainError(f"parameter gate rejected (d={grid.d}, sigma={sigma}): {verdict.reason}")
    fit = mixed_corpus(grid, corpus_size, path_stream(seed, "corpus", 0))
    hold = mixed_corpus(grid, corpus_size, path_stream(seed, "holdout", 0))
    norms = nonlinearity_norms(grid.d, sigma)
    fit_max, hold_max, viol = [], [], []
    for s, p in norms:
        qf = nonlinearity_quotients(grid, fit, sigma, s, p)
        qh = nonlinearity_quotients(grid, hold, sigma, s, p)
        c = float(np.nanmax(qf))
        fit_max.append(c)
        hold_max.append(float(np.nanmax(qh)))
        viol.append(int(np.sum(qh > c * (1 + slack))))
    return NonlinearityReport(grid.d, sigma, norms, fit_max, hold_max, viol, corpus_size, slack,
                              gate=str(verdict))
