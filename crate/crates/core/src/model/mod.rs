//! Model specification and its realization against data.

mod design;
pub mod elicit;
pub mod spec;
mod term;

pub use design::{CovariateRows, ModelDesign, Observation, SiteMatrix};
pub use elicit::{elicit_sd_scale, ElicitationSample};
pub use spec::{CovariateSpec, HyperpriorSpec, ModelSpec, ResponseSpec, TermSpec};
pub use term::{
    build_precision, build_term, build_term_seeded, default_omega_grid, reparameterize, CovariateBasis, Hyperprior,
    ResponseBasis, TermDesign, EXP_CLIP, PRECISION_RIDGE, RANK_TOL,
};
