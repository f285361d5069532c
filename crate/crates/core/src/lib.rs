//! Figures of merit for cavity-coupled single-photon sources at room
//! temperature: efficiency β, indistinguishability I and their product,
//! with plasmonic quenching and phonon-sideband corrections.
//!
//! All rates are angular rates in ps⁻¹ (see [`units::Rate`]).

pub mod error;
pub mod exec;
pub mod fom;
pub mod oracle;
pub mod params;
pub mod psb;
pub mod quad;
pub mod scenario;
pub mod sweep;
pub mod units;

pub use error::{Error, Result};
pub use fom::{evaluate, DecayRates, FomResult, Method, RegimeLabel, Validity};
pub use params::{CavityParams, EmitterParams, QuenchMode, QuenchModel};
pub use scenario::Scenario;
pub use units::Rate;
