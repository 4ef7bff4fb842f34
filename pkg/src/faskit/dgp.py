"""Synthetic data with exact population moments.

Given a :class:`~faskit.fas.PopulationModel`, draws (y, x, Z) such that in
population cov(Z, U) equals alpha exactly, var(U) = var_u, var(V) = var_v,
and corr(eps, V) = rho_uv, where eps is the part of U orthogonal to Z. The
generator is PCG64; replication streams are split with SeedSequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import Dataset
from .errors import InsufficientObservationsError, InvalidVarianceError
from .fas import PopulationModel


class ErrorLaw(str, Enum):
    """Shock law for the structural and first-stage errors.

    GAUSSIAN draws independent standard normal shocks. SCALED_CHI_SQUARE
    draws standardized chi-square(1) shocks and scales both errors by an
    instrument-dependent factor with unit mean square, producing genuine
    conditional heteroskedasticity while keeping every targeted population
    moment exact; under it the errors are uncorrelated with Z but no longer
    fully independent of it.
    """

    GAUSSIAN = "gaussian"
    SCALED_CHI_SQUARE = "scaled-chi-square"


@dataclass(eq=False)
class SimulationConfig:
    """Inputs for one synthetic draw.

    Attributes
    ----------
    model : PopulationModel
    n : int
        Sample size, at least 10.
    seed : int
        Nonnegative seed for the PCG64 stream.
    error_law : ErrorLaw
    rho_uv : float
        Correlation between the structural shock eps and the first-stage
        error V; drives the endogeneity of x.
    """

    model: PopulationModel
    n: int
    seed: int
    error_law: ErrorLaw = ErrorLaw.GAUSSIAN
    rho_uv: float = 0.5

    def __post_init__(self) -> None:
        if self.n < 10:
            raise InsufficientObservationsError(f"n must be at least 10, got {self.n}")
        if not -1.0 <= self.rho_uv <= 1.0:
            raise InvalidVarianceError(f"rho_uv must lie in [-1, 1], got {self.rho_uv}")
        self.error_law = ErrorLaw(self.error_law)


def derive_seed(seed: int, index: int) -> int:
    """Deterministic child seed for replication ``index`` of a study."""
    state = np.random.SeedSequence((seed, index)).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def simulate(config: SimulationConfig) -> Dataset:
    """Draw one dataset from the model.

    Z is multivariate Gaussian with covariance sigma_z (via its Cholesky
    factor). U is built as Z' sigma_z^{-1} alpha + eps with eps orthogonal
    to Z, so cov(Z, U) = alpha holds exactly in population; the variance of
    eps is var_u - alpha' sigma_z^{-1} alpha, which must be positive.

    Raises
    ------
    InvalidVarianceError
        If alpha is too large for var_u, leaving eps a nonpositive variance.
    """
    model = config.model
    model.validate()
    n, k = config.n, model.k_z

    eta = np.linalg.solve(model.sigma_z, model.alpha)
    eps_var = model.var_u - float(model.alpha @ eta)
    if eps_var <= 0.0:
        raise InvalidVarianceError(
            f"alpha' sigma_z^-1 alpha = {model.alpha @ eta:.6g} leaves eps variance "
            f"{eps_var:.6g}; increase var_u or shrink alpha"
        )

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    chol = np.linalg.cholesky(model.sigma_z)
    Z = rng.standard_normal((n, k)) @ chol.T

    if config.error_law == ErrorLaw.GAUSSIAN:
        shock_u = rng.standard_normal(n)
        shock_v = rng.standard_normal(n)
        scale = 1.0
    else:
        shock_u = (rng.standard_normal(n) ** 2 - 1.0) / np.sqrt(2.0)
        shock_v = (rng.standard_normal(n) ** 2 - 1.0) / np.sqrt(2.0)
        row_mean = Z.mean(axis=1)
        mean_var = float(np.ones(k) @ model.sigma_z @ np.ones(k)) / k**2
        scale = np.sqrt((1.0 + row_mean**2) / (1.0 + mean_var))

    rho = config.rho_uv
    eps = np.sqrt(eps_var) * shock_u * scale
    v = np.sqrt(model.var_v) * (rho * shock_u + np.sqrt(1.0 - rho**2) * shock_v) * scale

    u = Z @ eta + eps
    x = Z @ model.pi + v
    y = x * model.beta + Z @ model.gamma + u

    return Dataset(
        y=y,
        x=x,
        Z=Z,
        z_names=[f"Z{i}" for i in range(1, k + 1)],
        intercept=True,
        provenance=(
            f"simulated(seed={config.seed}, n={n}, law={config.error_law.value})"
        ),
    )
