use thiserror::Error;

use crate::carpet::DigitPair;

pub type Result<T, E = CarpetError> = std::result::Result<T, E>;

/// Invariants a [`CarpetSpec`](crate::CarpetSpec) can violate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("n >= m required (got n = {n}, m = {m})")]
    ColumnsBelowRows { n: u32, m: u32 },
    #[error("m >= 2 required (got m = {0})")]
    TooFewRows(u32),
    #[error("n must not exceed 256 (got {0})")]
    TooManyColumns(u32),
    #[error("card(G) >= 2 required (got {0})")]
    TooFewMaps(usize),
    #[error("digit pair {pair} outside {{0..{n}}} x {{0..{m}}}", n = .n - 1, m = .m - 1)]
    DigitOutOfRange { pair: DigitPair, n: u32, m: u32 },
    #[error("digit pair {0} listed twice")]
    DuplicatePair(DigitPair),
    #[error("probability of {pair} must lie in (0, 1), got {value}")]
    ProbabilityOutOfRange { pair: DigitPair, value: String },
    #[error("probabilities sum to {0}, not 1")]
    MassNotOne(String),
}

impl SpecError {
    /// Short machine-readable name of the violated invariant.
    pub fn invariant(&self) -> &'static str {
        match self {
            SpecError::ColumnsBelowRows { .. } => "n_ge_m",
            SpecError::TooFewRows(_) => "m_ge_2",
            SpecError::TooManyColumns(_) => "n_le_256",
            SpecError::TooFewMaps(_) => "card_g_ge_2",
            SpecError::DigitOutOfRange { .. } => "digit_bounds",
            SpecError::DuplicatePair(_) => "distinct_pairs",
            SpecError::ProbabilityOutOfRange { .. } => "p_in_open_unit_interval",
            SpecError::MassNotOne(_) => "mass_sum_one",
        }
    }
}

#[derive(Debug, Error)]
pub enum CarpetError {
    #[error("invalid carpet: {0}")]
    Spec(#[from] SpecError),
    #[error("word has {pairs} pairs but length {len} requires {expected}")]
    PairCount {
        pairs: usize,
        len: usize,
        expected: usize,
    },
    #[error("empty word")]
    EmptyWord,
    #[error("pair {0} is not in G")]
    UnknownPair(DigitPair),
    #[error("row digit {0} is not in G_y")]
    UnknownRow(u8),
    #[error("words of length {0} have no predecessor")]
    NoPredecessor(usize),
    #[error("level k = {k} is below the first admissible level {min}")]
    LevelTooSmall { k: usize, min: usize },
    #[error("partition exceeds the cap of {cap} words")]
    ResourceLimit { cap: usize },
    #[error("column digit {i} is not in G_x({j})")]
    NotInColumn { i: u8, j: u8 },
    #[error("word does not have the shape required for a tail swap: {0}")]
    SwapShape(&'static str),
    #[error("replacement word {0} collides with an existing word")]
    Collision(String),
    #[error("sibling family of {word} has {found} members, expected {expected}")]
    IncompleteFamily {
        word: String,
        found: usize,
        expected: usize,
    },
    #[error("construction invariant violated: {0}")]
    Invariant(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}
