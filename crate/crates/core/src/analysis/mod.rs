//! Closed-form stability bounds and error formulas, with the numerical
//! oracles that check them.

pub mod audit;
pub mod bounds;
pub mod delta;
pub mod moments;
pub mod operator;

pub use audit::{AuditOptions, AuditRecord};
pub use bounds::{
    concentration_bound, gram_diff_upper_bound, gram_inversion_bound, tu_lipschitz_bound,
    BoundReport, TU_LIPSCHITZ_CONSTANT,
};
pub use delta::{delta_l_bound, delta_l_monte_carlo, DeltaEstimate};
pub use moments::{
    exact_gram_mse, expected_gram_mse, gram_mean_covariance, oracle_mle_mse, sign_test_error,
    std_normal_cdf,
};
pub use operator::{
    horizontal_basis, horizontal_project, lx_apply, lx_spectrum, lx_spectrum_analytic,
    OperatorSpectrum,
};
