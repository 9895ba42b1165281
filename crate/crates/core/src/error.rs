use thiserror::Error;

/// Errors raised while building games, solving them, or running experiments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty terminal set")]
    EmptyTerminalSet,
    #[error("graph is disconnected: state {0} is unreachable from state 0")]
    Disconnected(usize),
    #[error("state {0} has no neighbors")]
    IsolatedState(usize),
    #[error("edge references unknown state {0}")]
    UnknownState(usize),
    #[error("asymmetric edge list: {0} -> {1} has no reverse")]
    AsymmetricEdges(usize, usize),
    #[error("payoff defined on wrong domain: {0}")]
    WrongDomain(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("state {0} is terminal")]
    TerminalState(usize),
    #[error("field does not extend the terminal payoff at state {0}")]
    BoundaryMismatch(usize),
    #[error("field length {got} does not match {expected} states")]
    FieldLength { expected: usize, got: usize },
    #[error("exact solver requires zero running payoff (state {0} has f != 0)")]
    NonzeroRunningPayoff(usize),
    #[error("illegal move {from} -> {to} by player {player}")]
    IllegalMove { from: usize, to: usize, player: u8 },
    #[error("strategy has no move at state {0}")]
    NoMove(usize),
    #[error("functional/strategy mismatch: {0}")]
    Mismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sampling spacing {spacing} too coarse for eps {eps} (need spacing <= eps/2)")]
    SpacingTooCoarse { spacing: f64, eps: f64 },
    #[error("empty terminal band")]
    EmptyTerminalBand,
    #[error("region touches the terminal band")]
    RegionTouchesTerminal,
    #[error("gradient too small for a normalized infinity Laplacian ({0:e})")]
    GradientTooSmall(f64),
    #[error("degenerate set: {0}")]
    DegenerateSet(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("schema violation: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, Error>;
