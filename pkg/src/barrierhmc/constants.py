"""Surrogate numerical constants used by the verification suites.

The structural bounds checked at runtime are asymptotic; the checks need
concrete numbers. Every surrogate lives here so the choices are auditable
in one place, and each test cites the constant it uses.
"""

# Multiplier on sqrt(M1) + M2*sqrt(n) bounding the metric Frobenius norm of
# the curve operator Phi along well-behaved trajectories.
PHI_FROB_SURROGATE = 100.0

# Multiplier on sqrt(M1*log n) + M1^(3/4) n^(1/4) delta + M2 sqrt(n) bounding
# |Phi(t) zeta(t)| with zeta the transported initial velocity.
PHI_ZETA_SURROGATE = 100.0

# Threshold on the trajectory auxiliary function ell(gamma) and the allowed
# tail fraction over sampled curves.
ELL_THRESHOLD = 128.0
ELL_TAIL_BUDGET = 0.02

# Multiplier on r^2 * min(theta/sigma^2, n) bounding the per-phase second
# moment ratio E[Y^2]/E[Y]^2 - 1 of the cooling estimator.
PHASE_VARIANCE_SURROGATE = 10.0

# Multiplier on (sigma^2/s) * theta bounding the empirical thin-shell
# variance of the barrier under the phase target.
THIN_SHELL_SURROGATE = 10.0

# Number of standard errors allowed between a per-phase ratio estimate and
# the exact 1-D Beta-function ratio.
PHASE_RATIO_SE_MULT = 5.0

# Chain rejection-rate ceiling on generated bodies at default step constant.
REJECTION_RATE_CEILING = 0.01
