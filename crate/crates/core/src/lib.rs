//! Bedford-McMullen carpet measures: exact stopping-time partitions, the
//! product coding space and its maximal antichains, entropy-to-scale
//! sequences, and Monte Carlo diagnostics for the geometric mean
//! quantization error.

pub mod carpet;
pub mod coding;
pub mod error;
pub mod partition;
pub mod quantizer;
pub mod sum;

pub use carpet::{
    check_separation, derive_params, validate_spec, Carpet, CarpetSpec, DerivedParams, Digit,
    DigitPair, ValidationReport,
};
pub use coding::{
    build_antichain, lambda_mass, verify_maximal_antichain, Antichain, AntichainOptions,
    CodingWord, SequencePoint,
};
pub use error::{CarpetError, Result, SpecError};
pub use partition::{
    enumerate_lambda_k, partition_stats, square_geometry, word_mass, ApproxSquare, CarpetWord,
    EnumOptions, PartitionLambdaK, PartitionStats,
};
pub use quantizer::{
    draw_cloud, lambda_codebook, log_distortion, r_k_diagnostic, Codebook, QuantDiagnostics,
    SampleCloud,
};
