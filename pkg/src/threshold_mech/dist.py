"""Cost distributions: uniform and Beta rescaled to a common support.

Provides sampling, CDF / inverse CDF, and the conditional floor mean
mu0(a) = E[p/c | c > a] used to calibrate the participation contribution.
Beta CDF/quantiles go through scipy's regularized incomplete beta function.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import betainc, betaincinv

_MU0_QUAD_TOL = 1e-10


@dataclass(frozen=True)
class CostDistribution:
    """A cost law on [c_low, c_high]: uniform or a rescaled Beta(alpha, beta)."""

    kind: str
    c_low: float
    c_high: float
    alpha: float = float("nan")
    beta: float = float("nan")

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "scaled_beta"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if not 0.0 < self.c_low < self.c_high < float("inf"):
            raise ValueError(
                f"support must satisfy 0 < c_low < c_high, got "
                f"[{self.c_low}, {self.c_high}]"
            )
        if self.kind == "scaled_beta":
            if not (self.alpha > 0.0 and self.beta > 0.0):
                raise ValueError("Beta shapes must be positive")
            if self.alpha < 1.0 or self.beta < 1.0:
                warnings.warn(
                    f"Beta({self.alpha}, {self.beta}) is not log-concave; "
                    "cutoff-equilibrium uniqueness is not guaranteed",
                    stacklevel=2,
                )

    # -- construction ------------------------------------------------------

    @classmethod
    def from_spec(cls, spec: str) -> "CostDistribution":
        """Parse a config string: ``uniform:1,5`` or ``beta:2,5:1,5``."""
        parts = spec.strip().split(":")
        try:
            if parts[0] == "uniform" and len(parts) == 2:
                lo, hi = (float(t) for t in parts[1].split(","))
                return cls("uniform", lo, hi)
            if parts[0] == "beta" and len(parts) == 3:
                a, b = (float(t) for t in parts[1].split(","))
                lo, hi = (float(t) for t in parts[2].split(","))
                return cls("scaled_beta", lo, hi, alpha=a, beta=b)
        except ValueError as exc:
            raise ValueError(f"malformed distribution spec {spec!r}") from exc
        raise ValueError(f"malformed distribution spec {spec!r}")

    def spec(self) -> str:
        if self.kind == "uniform":
            return f"uniform:{self.c_low:g},{self.c_high:g}"
        return f"beta:{self.alpha:g},{self.beta:g}:{self.c_low:g},{self.c_high:g}"

    # -- basic law ---------------------------------------------------------

    @property
    def width(self) -> float:
        return self.c_high - self.c_low

    def _to_unit(self, c):
        return (np.asarray(c, dtype=np.float64) - self.c_low) / self.width

    def pdf(self, c):
        u = self._to_unit(c)
        if self.kind == "uniform":
            out = np.where((u >= 0.0) & (u <= 1.0), 1.0 / self.width, 0.0)
        else:
            from scipy.stats import beta as beta_dist

            out = beta_dist.pdf(u, self.alpha, self.beta) / self.width
        return out if np.ndim(c) else float(out)

    def cdf(self, c):
        u = np.clip(self._to_unit(c), 0.0, 1.0)
        if self.kind == "uniform":
            out = u
        else:
            out = betainc(self.alpha, self.beta, u)
        return out if np.ndim(c) else float(out)

    def inv_cdf(self, q):
        qa = np.asarray(q, dtype=np.float64)
        if np.any(qa < 0.0) or np.any(qa > 1.0):
            raise ValueError("quantile argument must lie in [0, 1]")
        if self.kind == "uniform":
            u = qa
        else:
            u = betaincinv(self.alpha, self.beta, qa)
        out = self.c_low + self.width * u
        return out if np.ndim(q) else float(out)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. draws via inverse-CDF transform of the stream's uniforms."""
        if n < 1:
            raise ValueError(f"sample size must be >= 1, got {n}")
        return self.transform_uniforms(rng.random(n))

    def transform_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Map uniform(0,1) variates to costs (vectorized inverse CDF)."""
        if self.kind == "uniform":
            return self.c_low + self.width * u
        return self.c_low + self.width * betaincinv(self.alpha, self.beta, u)

    # -- conditional floor mean --------------------------------------------

    def floor_mean_tail(self, a: float, p: float) -> float:
        """mu0(a) = E[min(p/c, 1) | c > a].

        The clamp only engages when p exceeds the support's lower end; the
        cutoff analysis assumes p < c_low, so that regime is flagged.
        """
        if p < 0.0:
            raise ValueError(f"subsidy must be >= 0, got {p}")
        if not self.c_low <= a < self.c_high:
            raise ValueError(
                f"cutoff {a} outside [{self.c_low}, {self.c_high})"
            )
        if p == 0.0:
            return 0.0
        if p >= self.c_low:
            warnings.warn(
                "subsidy at or above the lowest cost: floor contributions "
                "clamp at 1 and the cutoff analysis leaves its stated regime",
                stacklevel=2,
            )
        return _mu0(self, a, p)


@functools.lru_cache(maxsize=65536)
def _mu0(dist: CostDistribution, a: float, p: float) -> float:
    hi = dist.c_high
    if dist.kind == "uniform" and p <= a:
        # E[p/c | c > a] has a closed log form under the uniform law.
        return p * (np.log(hi) - np.log(a)) / (hi - a)
    tail = 1.0 - dist.cdf(a)
    if tail <= 0.0:
        raise ValueError(f"degenerate tail beyond cutoff {a}")

    def integrand(c: float) -> float:
        return min(p / c, 1.0) * dist.pdf(c)

    val, _ = integrate.quad(integrand, a, hi, epsabs=_MU0_QUAD_TOL, limit=200)
    return val / tail
