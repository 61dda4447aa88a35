"""
Closed-form evaluation of the gradual-alignment error bounds.

The one-shot bound holds for tau*R < 1. The step-wise bound multiplies a
per-step factor 2/(1 - tau_m*R) once per step; for tau_m*R > 3 that factor is
negative with magnitude below 1, and we evaluate its magnitude.
"""

import cmath
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from errors import ContractError, RegimeError, SingularityError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundParams:
    tau_m: float
    R: float
    E: int
    alpha0: float
    n: int
    c_order: float = 0.0

    def __post_init__(self):
        values = (self.tau_m, self.R, self.alpha0, self.c_order)
        if not all(math.isfinite(v) for v in values):
            raise ContractError(f"bound parameters must be finite: {self}")
        if self.tau_m < 0 or self.R <= 0 or self.E < 0 or self.alpha0 < 0 or self.n < 1 or self.c_order < 0:
            raise ContractError(f"bound parameters out of range: {self}")

    @property
    def product(self) -> float:
        return self.tau_m * self.R


def _sample_term(c_order: float, n: int) -> float:
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    return c_order / math.sqrt(n)


def theorem1_bound(
    tau: float, R: float, source_loss: float, alpha_star: float, n: int, c_order: float = 0.0
) -> float:
    """2/(1 - tau*R) * source_loss + alpha_star + c_order/sqrt(n), for tau*R < 1."""
    if tau * R >= 1:
        raise RegimeError(f"one-shot bound needs tau*R < 1, got {tau * R}")
    return 2.0 / (1.0 - tau * R) * source_loss + alpha_star + _sample_term(c_order, n)


def theorem2_bound(params: BoundParams) -> float:
    """|2/(1 - tau_m*R)|^(E+1) * (alpha0 + c_order/sqrt(n))."""
    denominator = 1.0 - params.product
    if denominator == 0:
        raise SingularityError("step-wise bound is singular at tau_m*R = 1")
    factor = 2.0 / denominator
    if factor < 0:
        logger.debug(
            "Step-wise factor 2/(1 - tau_m*R) = %.6f is negative; using its magnitude", factor
        )
    return abs(factor) ** (params.E + 1) * (params.alpha0 + _sample_term(params.c_order, params.n))


def contraction_factor(tau_m: float, R: float, omega_freq: float) -> float:
    """|2 / ((1 - tau_m*R) - 2*exp(-j*omega))|."""
    denominator = (1.0 - tau_m * R) - 2.0 * cmath.exp(-1j * omega_freq)
    if abs(denominator) < 1e-12:
        raise SingularityError(f"contraction factor is singular at tau_m*R={tau_m * R}, omega={omega_freq}")
    return abs(2.0 / denominator)


def series_converges(tau_m: float, R: float, omega_freq: float = 0.0) -> bool:
    """|2 e^{-j omega} / (1 - tau_m*R)| < 1; independent of omega."""
    denominator = 1.0 - tau_m * R
    if denominator == 0:
        return False
    return abs(2.0 * cmath.exp(-1j * omega_freq) / denominator) < 1.0


def bound_grid(
    products, steps, alpha0: float = 1.0, n: int = 1, c_order: float = 0.0
) -> pd.DataFrame:
    """
    Step-wise bound over a grid of tau_m*R values and step counts, with R = 1.
    Products at the singularity are reported as NaN.
    """
    rows = []
    for product in products:
        for E in steps:
            params = BoundParams(tau_m=float(product), R=1.0, E=int(E), alpha0=alpha0, n=n, c_order=c_order)
            try:
                bound = theorem2_bound(params)
            except SingularityError:
                bound = np.nan
            rows.append(
                {
                    "tau_m_R": float(product),
                    "E": int(E),
                    "bound": bound,
                    "contraction": np.nan if product == 1 else abs(2.0 / (1.0 - product)),
                    "converges": series_converges(float(product), 1.0),
                }
            )
    return pd.DataFrame(rows, columns=["tau_m_R", "E", "bound", "contraction", "converges"])


def one_shot_grid(
    products, source_loss: float, alpha_star: float = 0.0, n: int = 1, c_order: float = 0.0
) -> pd.DataFrame:
    """One-shot bound over tau*R values, with R = 1. Every product must be below 1."""
    rows = [
        {
            "tau_R": float(product),
            "bound": theorem1_bound(float(product), 1.0, source_loss, alpha_star, n, c_order),
        }
        for product in products
    ]
    return pd.DataFrame(rows, columns=["tau_R", "bound"])


def contraction_grid(products, omegas) -> pd.DataFrame:
    """
    contraction_factor over tau_m*R values and frequencies, with R = 1.
    Points where the denominator vanishes are reported as NaN.
    """
    rows = []
    for product in products:
        for omega in omegas:
            try:
                factor = contraction_factor(float(product), 1.0, float(omega))
            except SingularityError:
                factor = np.nan
            rows.append({"tau_m_R": float(product), "omega": float(omega), "contraction": factor})
    return pd.DataFrame(rows, columns=["tau_m_R", "omega", "contraction"])
