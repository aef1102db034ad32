"""Canonical two-regime benchmark designs used across experiments and tests.

Both constructors share the covariate laws (intercept 0.2, slope 0.8, unit
noise sd, for Z and W alike) and the transition coefficients
(alpha_1, alpha_2) = (2, 2), (beta_1, beta_2) = (0.5, -0.5), so regime 1
becomes stickier when lagged Z is high and regime 2 when it is low.
"""

from __future__ import annotations

from .dgp import ArLaw, HmmDgpParams, NoiseCorrelation, RegimeOutcome, TransitionSpec

_STAY_INTERCEPTS = (2.0, 2.0)
_STAY_SLOPES = (0.5, -0.5)
_COVARIATE_LAW = dict(intercept=0.2, slope=0.8, noise_sd=1.0)


def hmm_benchmark(rho: float = 0.0, omega: float = 0.0) -> HmmDgpParams:
    """Regime-regression benchmark: mu = (1, -1), gamma = (0.5, 1), sigma = (1, 1)."""
    return HmmDgpParams(
        outcomes=[RegimeOutcome(mu=1.0, gamma=0.5, sigma=1.0),
                  RegimeOutcome(mu=-1.0, gamma=1.0, sigma=1.0)],
        transition=TransitionSpec.two_state(_STAY_INTERCEPTS, _STAY_SLOPES),
        z_law=ArLaw(**_COVARIATE_LAW),
        w_law=ArLaw(**_COVARIATE_LAW),
        noise=NoiseCorrelation(rho=rho, omega=omega),
    )


def msar_benchmark(rho: float = 0.0, phi: float = 0.9) -> HmmDgpParams:
    """Switching-AR benchmark: mu = (1, -1), phi = 0.9, sigma = (1, 1).

    gamma is zero in both regimes; W is still simulated but does not enter
    the outcome equation, so omega is pinned to 0.
    """
    return HmmDgpParams(
        outcomes=[RegimeOutcome(mu=1.0, gamma=0.0, sigma=1.0),
                  RegimeOutcome(mu=-1.0, gamma=0.0, sigma=1.0)],
        transition=TransitionSpec.two_state(_STAY_INTERCEPTS, _STAY_SLOPES),
        z_law=ArLaw(**_COVARIATE_LAW),
        w_law=ArLaw(**_COVARIATE_LAW),
        noise=NoiseCorrelation(rho=rho, omega=0.0),
        ar_coefficient=phi,
    )
