//! Simulation and quasi-maximum-likelihood estimation for a GQARCH
//! volatility model with hyperbolically decaying memory.
//!
//! Returns follow r_t = z_t sigma_t with
//!
//!   sigma2_t = omega^2 + (a + c * Y_t)^2 + gamma * sigma2_{t-1},
//!   Y_t      = sum_{j>=1} j^(d-1) r_{t-j},
//!
//! where z_t are i.i.d. innovations with zero mean and unit variance and
//! theta = (gamma, omega, a, d, c). The slow decay j^(d-1) of the lag
//! weights, d in (0, 1/2), puts long memory into the squared returns.
//!
//! The crate covers the full loop of a simulation study: path generation
//! ([`simulate`]), the Gaussian QML objective with analytic gradients
//! ([`qml`]) under three treatments of the unobserved past, box-constrained
//! estimation ([`estimate`]), sandwich standard errors ([`info_matrices`])
//! and deterministic parallel Monte Carlo ([`run_mc`]).

mod conv;
mod error;
mod rng;

pub mod inference;
pub mod likelihood;
pub mod montecarlo;
pub mod optimizer;
pub mod params;
pub mod simulator;

pub use error::{Error, Result};
pub use inference::{ci_coverage_experiment, info_matrices, CoverageReport, InfoMatrices, Mat5, Vec5};
pub use likelihood::{qml, vol_path, weighted_sums, PastMode, QmlProblem, QmlValue, VolPath};
pub use montecarlo::{
    acf_squares, memory_slope, memory_slope_from_acf, run_mc, McCell, McDesign, McReport,
    MemorySlope,
};
pub use optimizer::{estimate, profile_objective, EstimateResult, OptimOptions, StartStrategy};
pub use params::{
    b2_of, check_feasibility, check_feasibility_with, project_into_box, zeta_real,
    FeasibilityReport, ParamBox, Theta,
};
pub use simulator::{load_series, simulate, write_series, Innovation, SamplePath, SimConfig};
