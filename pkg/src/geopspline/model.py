"""Bayesian geodesic P-spline model and its Gibbs sampler.

    y | alpha, beta, tau_eps  ~  N(alpha + B beta, tau_eps^-1 I)
    alpha                     ~  N(0, tau_alpha^-1)
    beta | tau_beta           ~  IGMRF(tau_beta R*),  subject to 1' B beta = 0
    tau_beta, tau_eps         ~  Ga(a, b)

Each sweep updates alpha, beta, tau_beta, tau_eps in that order. The beta
update draws from its Gaussian full conditional with precision
``tau_eps B'B + tau_beta R*`` and then corrects the draw onto the
constraint ``a' beta = 0`` with ``a = B' 1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .gmrf import SymbolicFactor, constrain
from .penalty import StructureMatrix

logger = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    pass


class GammaParams(NamedTuple):
    shape: float
    rate: float


@dataclass
class ModelSpec:
    basis: sp.csr_matrix
    structure: StructureMatrix
    tau_alpha: float = 1e-6
    hyper_a: float = 1.0
    hyper_b: float = 5e-5

    def __post_init__(self):
        self.basis = sp.csr_matrix(self.basis)
        if not self.structure.scaled:
            raise ValueError("the model needs a scaled structure matrix (see scale_structure)")
        if not (self.hyper_a > 0 and self.hyper_b > 0 and self.tau_alpha > 0):
            raise ValueError("tau_alpha, hyper_a and hyper_b must be positive")
        if self.basis.shape[1] != self.structure.K:
            raise ValueError(
                f"basis has {self.basis.shape[1]} columns, structure has {self.structure.K}"
            )

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def K(self) -> int:
        return self.basis.shape[1]

    @property
    def constraint(self) -> np.ndarray:
        """``a = B' 1`` so that ``a' beta = 1' B beta``."""
        return np.asarray(self.basis.sum(axis=0)).ravel()


@dataclass
class PosteriorSamples:
    alpha: np.ndarray
    beta: np.ndarray
    tau_beta: np.ndarray
    tau_eps: np.ndarray
    burnin: int = 0
    seed: int | None = None
    thin: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def G(self) -> int:
        return len(self.alpha)

    @property
    def K(self) -> int:
        return self.beta.shape[1]

    def summary(self) -> dict:
        """Posterior mean and 2.5% / 97.5% quantiles of every parameter."""

        def stats(x):
            lo, hi = np.quantile(x, [0.025, 0.975], axis=0)
            return {"mean": x.mean(axis=0), "q025": lo, "q975": hi}

        return {
            "alpha": stats(self.alpha),
            "beta": stats(self.beta),
            "tau_beta": stats(self.tau_beta),
            "tau_eps": stats(self.tau_eps),
            "sigma_eps": stats(self.tau_eps**-0.5),
        }


# --- full conditionals ----------------------------------------------------


def full_conditional_beta(y, alpha, tau_beta, tau_eps, spec: ModelSpec):
    """Precision ``Q`` and information vector ``b`` of beta | rest (unconstrained)."""
    B = spec.basis
    Q = (tau_eps * (B.T @ B) + tau_beta * spec.structure.R).tocsc()
    b = tau_eps * (B.T @ (np.asarray(y, dtype=float) - alpha))
    return Q, np.asarray(b).ravel()


def full_conditional_alpha(y, beta, tau_eps, spec: ModelSpec) -> tuple[float, float]:
    """Mean and variance of alpha | rest."""
    resid = np.asarray(y, dtype=float) - spec.basis @ np.asarray(beta, dtype=float)
    var = 1.0 / (spec.tau_alpha + len(resid) * tau_eps)
    return var * tau_eps * float(resid.sum()), var


def full_conditional_tau_beta(beta, spec: ModelSpec) -> GammaParams:
    beta = np.asarray(beta, dtype=float)
    quad = float(beta @ (spec.structure.R @ beta))
    return GammaParams(spec.hyper_a + (spec.K - 1) / 2.0, spec.hyper_b + quad / 2.0)


def full_conditional_tau_eps(y, alpha, beta, spec: ModelSpec) -> GammaParams:
    resid = np.asarray(y, dtype=float) - alpha - spec.basis @ np.asarray(beta, dtype=float)
    return GammaParams(spec.hyper_a + len(resid) / 2.0, spec.hyper_b + float(resid @ resid) / 2.0)


# --- sampler ----------------------------------------------------------------


class GibbsSampler:
    """Single-chain Gibbs sampler; owns its random generator.

    ``fixed`` may hold ``tau_beta`` and/or ``tau_eps`` values that are then
    kept constant instead of being resampled.
    """

    def __init__(
        self,
        y,
        spec: ModelSpec,
        seed: int | np.random.SeedSequence | None = 0,
        fixed: dict | None = None,
        init: dict | None = None,
    ):
        self.spec = spec
        self.rng = np.random.default_rng(seed)
        self.fixed = dict(fixed or {})
        unknown = set(self.fixed) - {"tau_beta", "tau_eps"}
        if unknown:
            raise ValueError(f"cannot fix {sorted(unknown)}")

        B = spec.basis
        self._B = B
        self._BT = B.T.tocsr()
        self._R = spec.structure.R
        self.a = spec.constraint
        BtB = (self._BT @ B).tocsc()
        pattern = (abs(BtB) + abs(self._R) + sp.identity(spec.K)).tocsc()
        self._symbolic = SymbolicFactor(pattern)
        self._BtB_vals = self._symbolic.values_of(BtB)
        self._R_vals = self._symbolic.values_of(self._R)
        self.set_data(y)

        init = dict(init or {})
        yv = self.y
        var = float(yv.var()) if len(yv) > 1 else 0.0
        self.alpha = float(init.get("alpha", yv.mean()))
        self.beta = np.asarray(init.get("beta", np.zeros(spec.K)), dtype=float)
        self.tau_beta = float(self.fixed.get("tau_beta", init.get("tau_beta", 1.0)))
        self.tau_eps = float(
            self.fixed.get("tau_eps", init.get("tau_eps", 1.0 / var if var > 0 else 1.0))
        )
        self.iteration = 0

    def set_data(self, y) -> None:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.spec.n,):
            raise ValueError(f"expected {self.spec.n} observations, got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValueError("observations must be finite (drop missing values first)")
        self.y = y
        self._y_sum = float(y.sum())
        self._Bty = self._BT @ y

    def _check(self, name, value):
        if not np.all(np.isfinite(value)):
            raise SamplerError(f"non-finite {name} drawn at iteration {self.iteration}")

    def step(self) -> None:
        spec, rng = self.spec, self.rng
        n = spec.n

        fitted = self._B @ self.beta
        var = 1.0 / (spec.tau_alpha + n * self.tau_eps)
        mean = var * self.tau_eps * (self._y_sum - float(fitted.sum()))
        self.alpha = mean + np.sqrt(var) * rng.standard_normal()
        self._check("alpha", self.alpha)

        values = self.tau_eps * self._BtB_vals + self.tau_beta * self._R_vals
        factor = self._symbolic.factorize(values=values)
        b = self.tau_eps * (self._Bty - self.alpha * self.a)
        x = factor.solve(b) + factor.solve_Lt(rng.standard_normal(spec.K))
        self.beta = constrain(x, self.a, factor)
        self._check("beta", self.beta)
        resid = abs(float(self.a @ self.beta))
        if resid >= 1e-6 * n:
            raise SamplerError(
                f"constraint residual {resid:.3e} too large at iteration {self.iteration}"
            )

        if "tau_beta" not in self.fixed:
            quad = float(self.beta @ (self._R @ self.beta))
            shape = spec.hyper_a + (spec.K - 1) / 2.0
            self.tau_beta = rng.gamma(shape, 1.0 / (spec.hyper_b + quad / 2.0))
            self._check("tau_beta", self.tau_beta)

        if "tau_eps" not in self.fixed:
            r = self.y - self.alpha - self._B @ self.beta
            shape = spec.hyper_a + n / 2.0
            self.tau_eps = rng.gamma(shape, 1.0 / (spec.hyper_b + float(r @ r) / 2.0))
            self._check("tau_eps", self.tau_eps)
        self.iteration += 1

    def run(self, G: int, burnin: int = 0, thin: int = 1, progress=None) -> PosteriorSamples:
        if G < 1:
            raise ValueError(f"number of stored draws must be >= 1, got {G}")
        if burnin < 0 or thin < 1:
            raise ValueError("burnin must be >= 0 and thin >= 1")
        K = self.spec.K
        alpha = np.empty(G)
        beta = np.empty((G, K))
        tau_beta = np.empty(G)
        tau_eps = np.empty(G)
        for _ in range(burnin):
            self.step()
        for g in range(G):
            for _ in range(thin):
                self.step()
            alpha[g], beta[g] = self.alpha, self.beta
            tau_beta[g], tau_eps[g] = self.tau_beta, self.tau_eps
            if progress is not None:
                progress(g)
        return PosteriorSamples(alpha, beta, tau_beta, tau_eps, burnin=burnin, thin=thin)


def gibbs_fit(
    y,
    spec: ModelSpec,
    G: int = 5000,
    burnin: int = 500,
    seed: int = 0,
    thin: int = 1,
    fixed: dict | None = None,
    progress=None,
) -> PosteriorSamples:
    """Run one chain and return the post-burn-in draws.

    ``progress``, if given, is called with the index of each stored draw.
    """
    if G < 1:
        raise ValueError(f"number of stored draws must be >= 1, got {G}")
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("no observations to fit")
    sampler = GibbsSampler(y, spec, seed=seed, fixed=fixed)
    samples = sampler.run(G, burnin, thin, progress)
    samples.seed = seed
    samples.meta.update(
        {
            "K": spec.K,
            "n_obs": spec.n,
            "kappa": spec.structure.kappa,
            "tau_alpha": spec.tau_alpha,
            "hyper_a": spec.hyper_a,
            "hyper_b": spec.hyper_b,
            "seed": seed,
            "burnin": burnin,
            "thin": thin,
        }
    )
    return samples
