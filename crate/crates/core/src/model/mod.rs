//! Closed-form cavity-EIT model: susceptibilities of the transversely
//! averaged medium and the input-output response of the cavity.

mod cavity;
mod params;
mod susceptibility;

pub use cavity::{cooperativity, intracavity_amplitude, reflectivity, transparency};
pub use params::{
    mirror_budget_to_kappa_ratio, photons_from_rabi, AtomParams, CavityParams, DriveParams,
    LossBudget, DEFAULT_ROUND_TRIP_TIME,
};
pub use susceptibility::{
    chi_eit, chi_switch, chi_two_level, theta, theta_s, Susceptibility, SERIES_THRESHOLD,
};
