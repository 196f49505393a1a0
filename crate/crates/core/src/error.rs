use thiserror::Error;

use crate::barrier::BarrierError;
use crate::control::ControlError;
use crate::network::NetworkError;
use crate::scenario::ScenarioError;
use crate::sim::SimError;
use crate::stl::StlError;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Stl(_) => "stl",
            Error::Barrier(_) => "barrier",
            Error::Network(_) => "network",
            Error::Control(_) => "control",
            Error::Sim(_) => "sim",
            Error::Scenario(_) => "scenario",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
