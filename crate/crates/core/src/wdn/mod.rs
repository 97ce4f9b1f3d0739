//! Water distribution network: nonlinear truth model, identification of
//! the linear control model, and power accounting.

pub mod ident;
pub mod linear;
pub mod truth;

pub use ident::{identify_linear_model, ExcitationPlan, IdentReport};
pub use linear::{grid_power, LinearWdnModel, TankBounds};
pub use truth::{
    hazen_williams_headloss, truth_step, Node, PipeLaw, ToyNetworkSpec, TruthSim,
};
