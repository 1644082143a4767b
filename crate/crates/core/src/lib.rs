//! Equilibrium bidding, simulation and nonparametric identification for first- and
//! second-price auctions whose observed prices are truncated by a reserve price or
//! an entry cost.

pub mod distributions;
pub mod empirics;
pub mod equilibrium;
pub mod error;
pub mod identification;
pub mod io;
pub mod numerics;
pub mod oracle;
pub mod simulator;
pub mod verify;

pub use distributions::{DistributionSpec, SellerPreferences, Utility, ValueDistribution};
pub use equilibrium::{AuctionDesign, Format, Truncation, TruncationKind};
pub use simulator::{InfoStructure, ObservedDataset, PopulationSpec};
