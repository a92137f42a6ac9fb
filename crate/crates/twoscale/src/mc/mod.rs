//! Monte Carlo simulation of the two-scale system.

mod estimate;
mod ldp;
mod sim;

pub use estimate::McEstimate;
pub use ldp::{ldp_slope, LdpReport, LdpRow, Region};
pub use sim::{
    estimate_v_eps, sample_mean, simulate, simulate_terminal, v_eps_from_samples, Samples,
    SimConfig,
};
