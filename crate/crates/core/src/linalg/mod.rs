//! Dense linear algebra, multiset quantiles and subset singular values.

pub mod matrix;
pub mod quantile;
pub mod sigma;
pub mod svd;

pub use matrix::{axpy, dot, inf_norm, norm, residual_abs, row_normalize, ROW_NORM_TOL, sq_distance, DenseMatrix};
pub use quantile::{lower_set, order_statistic, quantile, MultisetQuantileSpec};
pub use sigma::{
    binomial, sigma_q_min_exact, sigma_q_min_exact_with_cap, sigma_q_min_sampled, SigmaMode, SigmaQMinResult,
    DEFAULT_ENUMERATION_CAP,
};
pub use svd::{min_gain, singular_extremes, singular_values};
