"""jdx: small-time expansion coefficients for local jump-diffusion SDEs.

Second-order tail and transition-density expansions, a Monte Carlo
simulation oracle that validates them, and the leading short-maturity term
of out-of-the-money call prices.
"""

from .expansion import (
    DensityCoefficients,
    GeneratorContext,
    TailCoefficients,
    density_a1,
    density_a2,
    dynkin_expand,
    epsilon_invariance,
    generator_apply,
    state_independent_A2,
    tail_A1,
    tail_A2,
    tail_expansion,
)
from .model import (
    ConditionReport,
    JumpFunc,
    ModelSpec,
    Regularity,
    ScalarFunc,
    bar_gamma,
    check_conditions,
    gamma_inverse,
    load_model_file,
    make_preset,
    model_from_dict,
    process_levy_density,
)
from .montecarlo import (
    MCEstimate,
    SimScheme,
    estimate_call_price,
    estimate_density,
    estimate_tail,
    fit_expansion_coeffs,
    simulate_terminal,
    tune_n_steps,
)
from .numint import (
    QuadratureConfig,
    QuadratureResult,
    integrate_adaptive,
    integrate_compensated,
    integrate_levy_tail,
)
from .pricing import (
    PricingModel,
    build_pricing_model,
    martingale_drift,
    otm_leading_from_tails,
    otm_leading_term,
)
from .truncation import (
    TruncationScheme,
    compensated_drift,
    make_truncation,
    split_densities,
    transformed_jump_density,
)

__version__ = "0.1.0"
