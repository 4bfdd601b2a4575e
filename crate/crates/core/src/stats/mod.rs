//! Two-point angular correlation and Gaussian-mixture outlier detection.

pub mod correlation;
pub mod em;
pub mod paircount;

pub use correlation::{correlation_ls, CorrelationBin, CorrelationEstimate, CORRELATION_CSV_HEADER};
pub use em::{em_fit, model_deviation, outlier_scores, EmConfig, EmMode, KdTreeStats, MixtureModel};
pub use paircount::{cross_count, pair_count, AngularBins, PairCountHistogram, PairCountMode};
