//! Error budgets of the statistical checks.

/// Sigma margin for comparisons of means and bounds on means.
pub const MEAN_SIGMAS: f64 = 3.0;
/// Per-cell sigma multiple of the multinomial bound on distributions.
pub const DISTRIBUTION_SIGMAS: f64 = 4.0;
/// Significance level of chi-square and Kolmogorov-Smirnov tests.
pub const TEST_LEVEL: f64 = 0.01;
/// Sigma tolerance for learning-curve comparisons.
pub const CURVE_SIGMAS: f64 = 2.0;
/// Largest number of rewarded histories the exact enumerator expands.
pub const HISTORY_LIMIT: u64 = 1_000_000;
