pub mod config;
pub mod delay_bound;
pub mod numerics;
pub mod outage_bounds;
pub mod phy_mc;
pub mod queue_sim;
pub mod rate_adaptation;
pub mod service_model;
