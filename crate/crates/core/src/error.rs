use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Not enough valid transitions to draw a batch yet. Retry later.
    #[error("replay not ready: {0}")]
    NotReady(String),
    /// All priorities are zero.
    #[error("sum tree holds no priority mass")]
    NoMass,
    /// A gradient or loss became non-finite.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// Serialized bytes could not be decoded.
    #[error("decode error: {0}")]
    Decode(String),
    /// The agent does not implement an optional capability.
    #[error("agent does not support `{0}`")]
    Unsupported(&'static str),
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
