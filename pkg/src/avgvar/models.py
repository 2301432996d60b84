"""Model parameters, the pluggable volatility function, and validation.

Two stochastic-volatility models are supported, both priced under the
minimal martingale measure (the asset drift is the risk-free rate; the
volatility driver keeps its objective dynamics):

    OU model:   dS = r S dt + sigma(Y) S dW,   dY = -alpha Y dt + k dW~
    CIR model:  dS = r S dt + sqrt(Z) S dW,    dZ = (b - Z) dt + k sqrt(Z) dW~

with W and W~ independent. The objective drift mu is recorded for
documentation but never used by pricing.

Validation is total: every parameter tuple either yields a validated model
or raises ValidationError listing every violated assumption. Constraints on
the volatility function (lower bound, strictly positive derivative) are
checked on a fixed probe grid [-10, 10] with 1001 points; path simulation
re-asserts them on all visited states.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError

PROBE_GRID = np.linspace(-10.0, 10.0, 1001)


@dataclass(frozen=True)
class VolFunctionSpec:
    """Volatility function sigma with its first two derivatives.

    ``lower_bound_c`` witnesses sigma(x) >= c > 0 and ``growth_scale`` /
    ``growth_power`` witness sigma(x) <= q (1 + |x|^l). The products
    nu = sigma * sigma' and nu' = sigma'^2 + sigma * sigma'' are what the
    density kernels actually consume.
    """

    sigma: Callable
    sigma_prime: Callable
    sigma_second: Callable
    lower_bound_c: float
    growth_scale: float
    growth_power: int
    name: str = "custom"

    def nu(self, x):
        return self.sigma(x) * self.sigma_prime(x)

    def nu_prime(self, x):
        return self.sigma_prime(x) ** 2 + self.sigma(x) * self.sigma_second(x)


@dataclass(frozen=True)
class OUParams:
    alpha: float  # mean-reversion rate, > 0
    k: float      # diffusion coefficient of the driver, > 0
    y0: float     # initial driver state
    s0: float     # initial asset price, > 0
    r: float      # risk-free rate, >= 0
    mu: float     # objective drift; unused under the pricing measure
    T: float      # maturity, > 0


@dataclass(frozen=True)
class CIRParams:
    b: float      # long-run variance level, > 0
    k: float      # vol-of-vol, > 0
    z0: float     # initial variance, > 0
    s0: float
    r: float
    mu: float
    T: float


@dataclass(frozen=True)
class Contract:
    strike: float  # K >= 0


@dataclass(frozen=True)
class ValidatedOUModel:
    params: OUParams
    vol: VolFunctionSpec


@dataclass(frozen=True)
class ValidatedCIRModel:
    params: CIRParams
    density_mode: bool


def reference_vol_family(c, m):
    """The shipped volatility family sigma(x) = c + m (x + sqrt(x^2 + 1)).

    Smooth, bounded below by c (the x + sqrt(x^2+1) term is positive and
    tends to 0 as x -> -inf), strictly increasing, and of linear growth, so
    it satisfies every hypothesis the density formulas need. Closed-form
    derivatives:

        sigma'(x)  = m (1 + x / sqrt(x^2 + 1)) > 0
        sigma''(x) = m / (x^2 + 1)^(3/2)

    Evaluation uses the conjugate form 1 / (sqrt(x^2+1) - x) for x < 0 to
    avoid cancellation far in the left tail.
    """
    if not (c > 0) or not (m > 0):
        raise ValidationError([("E_NONPOSITIVE_PARAMETER",
                                f"reference family needs c > 0 and m > 0, got c={c}, m={m}")])
    c = float(c)
    m = float(m)

    def sigma(x):
        x = np.asarray(x, dtype=float)
        s = np.sqrt(x * x + 1.0)
        bump = np.where(x >= 0, x + s, 1.0 / (s - x))
        return c + m * bump

    def sigma_prime(x):
        x = np.asarray(x, dtype=float)
        s = np.sqrt(x * x + 1.0)
        slope = np.where(x >= 0, (s + x) / s, 1.0 / (s * (s - x)))
        return m * slope

    def sigma_second(x):
        x = np.asarray(x, dtype=float)
        s = np.sqrt(x * x + 1.0)
        return m / s**3

    return VolFunctionSpec(
        sigma=sigma,
        sigma_prime=sigma_prime,
        sigma_second=sigma_second,
        lower_bound_c=c,
        growth_scale=c + 2.0 * m,
        growth_power=1,
        name="reference",
    )


def _check_vol_on_grid(vol, violations):
    """Sample the (A2)-style constraints on the probe grid."""
    x = PROBE_GRID
    try:
        sig = np.asarray(vol.sigma(x), dtype=float)
        sig_p = np.asarray(vol.sigma_prime(x), dtype=float)
        nu = np.asarray(vol.nu(x), dtype=float)
        nu_p = np.asarray(vol.nu_prime(x), dtype=float)
    except Exception as exc:  # a vol spec that cannot be evaluated is invalid
        violations.append(("E_VOL_EVAL", f"volatility function raised on probe grid: {exc!r}"))
        return
    if not (vol.lower_bound_c > 0):
        violations.append(("E_NONPOSITIVE_LOWER_BOUND",
                           f"lower bound c must be > 0, got {vol.lower_bound_c}"))
    elif not np.all(sig >= vol.lower_bound_c * (1.0 - 1e-12)):
        violations.append(("E_SIGMA_BELOW_BOUND",
                           "sigma(x) dips below its declared lower bound on the probe grid"))
    if not np.all(sig_p > 0):
        violations.append(("E_SIGMA_PRIME_NONPOSITIVE",
                           "sigma'(x) must be strictly positive (probe grid violation)"))
    if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(nu_p))):
        violations.append(("E_NU_NOT_FINITE", "nu or nu' is not finite on the probe grid"))


def _check_common(params, violations):
    for name in params.__dataclass_fields__:
        value = getattr(params, name)
        if not math.isfinite(value):
            violations.append(("E_NOT_FINITE", f"{name} must be finite, got {value}"))
    if not (params.s0 > 0):
        violations.append(("E_NONPOSITIVE_SPOT", f"s0 must be > 0, got {params.s0}"))
    if not (params.r >= 0):
        violations.append(("E_NEGATIVE_RATE", f"r must be >= 0, got {params.r}"))
    if not (params.T > 0):
        violations.append(("E_NONPOSITIVE_MATURITY", f"T must be > 0, got {params.T}"))


def validate_ou(params, vol):
    """Validate an OU-volatility model; raises ValidationError on any violation."""
    violations = []
    if not (params.alpha > 0):
        violations.append(("E_NONPOSITIVE_ALPHA", f"alpha must be > 0, got {params.alpha}"))
    if not (params.k > 0):
        violations.append(("E_NONPOSITIVE_K", f"k must be > 0, got {params.k}"))
    _check_common(params, violations)
    _check_vol_on_grid(vol, violations)
    if violations:
        raise ValidationError(violations)
    return ValidatedOUModel(params=params, vol=vol)


def validate_cir(params, density_mode=False):
    """Validate a CIR-volatility model.

    The Feller-type condition k^2 < 2b keeps the variance strictly positive
    and is always required; density mode additionally needs 6 k^2 < b, the
    hypothesis under which the averaged-variance density formula holds.
    """
    violations = []
    if not (params.b > 0):
        violations.append(("E_NONPOSITIVE_B", f"b must be > 0, got {params.b}"))
    if not (params.k > 0):
        violations.append(("E_NONPOSITIVE_K", f"k must be > 0, got {params.k}"))
    # compare against factored square roots: k**2 (and even 2*b) can
    # overflow, and validation must never raise anything but ValidationError
    if params.b > 0 and params.k > 0 \
            and not (params.k < math.sqrt(2.0) * math.sqrt(params.b)):
        violations.append(("E_FELLER", "k^2 >= 2*b"))
    if density_mode and params.b > 0 and params.k > 0 \
            and not (params.k < math.sqrt(params.b) / math.sqrt(6.0)):
        violations.append(("E_DENSITY_CONDITION", "6*k^2 >= b"))
    if not (params.z0 > 0):
        violations.append(("E_NONPOSITIVE_Z0", f"z0 must be > 0, got {params.z0}"))
    _check_common(params, violations)
    if violations:
        raise ValidationError(violations)
    return ValidatedCIRModel(params=params, density_mode=density_mode)


def validate_contract(contract):
    if not (contract.strike >= 0):
        raise ValidationError([("E_NEGATIVE_STRIKE",
                                f"strike must be >= 0, got {contract.strike}")])
    return contract
