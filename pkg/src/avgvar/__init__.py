"""avgvar: Monte Carlo densities of time-averaged variance and option prices
under OU-driven and CIR stochastic volatility.

The averaged variance over [0, T] is the single random input to the
conditional Black-Scholes price when the asset and volatility drivers are
independent. This package estimates its probability density by the
Malliavin (Skorokhod-weight) representation p(x) = E[1{F > x} delta],
cross-checks it against a kernel density estimate, and prices European
calls three mutually consistent ways: quadrature against the density, the
mixing formula, and plain path simulation.
"""

__version__ = "0.1.0"

from .density import (DensityEstimate, auto_grid, kde_density,
                      malliavin_density, survival_from_density,
                      winsorize_weights)
from .ensemble import EnsembleResult, Summary, duality_statistic, run_ensemble, summarize
from .errors import (AvgVarError, EmptyEnsemble, FailureBudgetExceeded,
                     FloorSaturation, GridTooCoarse, InvalidGrid,
                     NonPositiveDenominator, TooFewSamples, ValidationError)
from .models import (CIRParams, Contract, OUParams, ValidatedCIRModel,
                     ValidatedOUModel, VolFunctionSpec, reference_vol_family,
                     validate_cir, validate_contract, validate_ou)
from .paths import (CIRPathBatch, OUPathBatch, TimeGrid, cir_paths_from_increments,
                    ito_prefix_sums, make_grid, ou_paths_from_increments,
                    require_floor_budget, sample_terminal_asset,
                    simulate_cir_paths, simulate_ou_paths)
from .pricing import (PriceEstimate, bs_conditional, martingale_check,
                      price_from_density, price_mixing, price_plain_mc)
from .rng import NoiseStream, refine_increments
from .weights_cir import (CIRKernelBatch, CIRWeightBatch, cir_kernel,
                          skorokhod_weight_cir)
from .weights_ou import (OUWeightBatch, c_of_h, denominator_g, dh_eta_matrix,
                         eta_nodes, skorokhod_weight_ou)

__all__ = [name for name in dir() if not name.startswith("_")]
