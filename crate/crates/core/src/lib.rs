//! Simulation and estimation of high-frequency inter-trade duration models
//! (Exponential, MSMD, truncated MSMD) and the clock-time return process they
//! subordinate, with goodness-of-fit diagnostics, tick-data ingestion, and
//! market-structure applications (trade-rate/volatility mapping and
//! millisecond lead-lag price-formation analysis).

pub mod durations;
pub mod error;
pub mod inference;
pub mod io;
pub mod market;
pub mod optim;
pub mod seed;
pub mod special;
pub mod stats;
pub mod subordination;
pub mod ticks;

pub use durations::{
    DurationModelParams, DurationSeries, ExpParams, LatentPath, MsmdParams, SeriesOrigin,
    TmsmdParams,
};
pub use error::{Error, Result};
pub use inference::{FitResult, GaussianParams, StateSpace};
pub use subordination::{CompoundSimulation, SupportSet};
