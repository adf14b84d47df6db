use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("block index {index} out of range ({count} blocks)")]
    BlockIndex { index: usize, count: usize },
    #[error("agent index {index} out of range ({count} agents)")]
    AgentIndex { index: usize, count: usize },
    #[error("point is infeasible for block {block}")]
    Infeasible { block: usize },
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("block {block} has no finite bound")]
    Unbounded { block: usize },
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("round {round}, agent {agent}: {source}")]
    Round {
        round: usize,
        agent: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn in_round(self, round: usize, agent: usize) -> Self {
        Error::Round {
            round,
            agent,
            source: Box::new(self),
        }
    }
}
