//! Statistically validated co-trading networks for investor transaction logs.
//!
//! The pipeline turns raw trades into daily trading states, validates pairwise
//! state co-occurrences with a hypergeometric test under false discovery rate
//! control, merges the validated links into weighted investor networks,
//! clusters them by minimizing the map equation, and finally tests clusters for
//! persistence, cross-security overlap and attribute over/underexpression.

pub mod error;
pub mod expression;
pub mod fdr;
pub mod hypergeom;
pub mod infomap;
pub mod ingest;
pub mod links;
pub mod network;
pub mod pipeline;
pub mod similarity;
pub mod state;
pub mod synth;

mod seed;

pub use error::{Error, Result};
pub use expression::{AttributeClass, Direction, ExpressionProfile, ExpressionTest};

pub use fdr::{FdrConfig, FdrMode};
pub use hypergeom::{hypergeom_cdf, hypergeom_sf};
pub use infomap::{detect, map_equation, DetectorConfig, Partition};
pub use ingest::{DailyNetVolume, InvestorAttributes, SecurityCalendar, Transaction};
pub use links::{UniverseMode, ValidatedLink, ValidationConfig};
pub use network::{NetworkId, ValidatedNetwork};
pub use similarity::{ClusterRef, OverlapTest, SimilarityMode, SimilarityResult};
pub use state::{EncoderConfig, StateMatrix, TradingState, WindowId};
