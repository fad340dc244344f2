use alloc::string::String;

/// Errors raised by the simulation core.
///
/// Variants that concern a single particle carry its index when the caller
/// knows it; [`Error::at_particle`] fills it in on the way up.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("value {value} outside [0, 1]")]
    OutsideUnitInterval { value: f64 },

    #[error("particle {particle:?} stencil leaves the grid at node {node:?}")]
    DomainExit { particle: Option<usize>, node: [i32; 3] },

    #[error("particle {particle} at {position:?} is within {inset} cells of the domain boundary")]
    ParticleOutOfDomain { particle: usize, position: [f64; 3], inset: usize },

    #[error("index {index:?} out of bounds")]
    IndexOutOfBounds { index: [i32; 3] },

    #[error("particle {particle:?} touches inactive node {node:?}")]
    InactiveNode { particle: Option<usize>, node: [i32; 3] },

    #[error("inverted element (det F = {det}) at particle {particle:?}")]
    InvertedElement { particle: Option<usize>, det: f64 },

    #[error("{what} matrix is near-singular (condition {condition:e}) at particle {particle:?}")]
    SingularMatrix { particle: Option<usize>, what: &'static str, condition: f64 },

    #[error("particle {particle:?} gathered zero nodal mass")]
    ZeroGatheredMass { particle: Option<usize> },

    #[error("non-finite {what} at particle {particle:?}")]
    NonFinite { particle: Option<usize>, what: &'static str },
}

impl Error {
    /// Attaches a particle index to particle-scoped errors that lack one.
    pub fn at_particle(self, index: usize) -> Self {
        use Error::*;
        match self {
            DomainExit { particle: None, node } => DomainExit { particle: Some(index), node },
            InactiveNode { particle: None, node } => InactiveNode { particle: Some(index), node },
            InvertedElement { particle: None, det } => InvertedElement { particle: Some(index), det },
            SingularMatrix { particle: None, what, condition } => {
                SingularMatrix { particle: Some(index), what, condition }
            }
            ZeroGatheredMass { particle: None } => ZeroGatheredMass { particle: Some(index) },
            NonFinite { particle: None, what } => NonFinite { particle: Some(index), what },
            other => other,
        }
    }

    /// True for failures of the numerical state (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InvertedElement { .. }
                | Error::SingularMatrix { .. }
                | Error::ZeroGatheredMass { .. }
                | Error::NonFinite { .. }
                | Error::DomainExit { .. }
                | Error::InactiveNode { .. }
                | Error::ParticleOutOfDomain { .. }
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { field, reason: reason.into() }
}
