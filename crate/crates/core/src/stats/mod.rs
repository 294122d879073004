//! Analytic curves, empirical distributions, estimators and hypothesis
//! tests.

pub mod curves;
pub mod empirical;
pub mod estimators;
pub mod hypothesis;

pub use curves::{
    bessel_k0, bessel_k1, bridge_covariance, integrate, k0_cdf, k0_density, p_u_cdf, p_u_density, p_u_mass, phi,
    polar_covariance,
};
pub use empirical::{ks_lattice, linear_fit, loglog_slope, mean_se, variance_se, EmpiricalDistribution};
pub use estimators::{estimate_flat_scaling, estimate_sigma_scaling, FlatRow, FlatScaling, ScalingRow, ScalingSample, SigmaScaling};
pub use hypothesis::{strain_bridge_check, test_d_uniform, test_exchangeability, test_s_clt, Check, TestReport};
