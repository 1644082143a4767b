//! Run configuration: JSON file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trunc_auction::identification::{route, AnalystView, Estimator, IdentifyOptions};
use trunc_auction::simulator::BidRule;
use trunc_auction::{
    AuctionDesign, DistributionSpec, Format, InfoStructure, ObservedDataset, PopulationSpec, SellerPreferences,
    Truncation, ValueDistribution,
};

/// A configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// `auto` or a fixed estimator id.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorChoice {
    #[default]
    Auto,
    Use(Estimator),
}

impl TryFrom<String> for EstimatorChoice {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EstimatorChoice> for String {
    fn from(c: EstimatorChoice) -> Self {
        match c {
            EstimatorChoice::Auto => "auto".into(),
            EstimatorChoice::Use(e) => e.id().into(),
        }
    }
}

impl std::str::FromStr for EstimatorChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        Estimator::from_id(s).map(Self::Use).ok_or_else(|| format!("unknown estimator {s:?}; expected auto or prop1..prop10"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub distribution: DistributionSpec,
    pub seller: SellerPreferences,
    pub design: AuctionDesign,
    /// One bidder-count law per dataset; two entries give the two-sample estimators.
    pub populations: Vec<PopulationSpec>,
    /// Whether the analyst knows each dataset's bidder count.
    pub n_known: bool,
    pub info: InfoStructure,
    pub bid_rule: BidRule,
    pub l_total: u64,
    pub seed: u64,
    pub estimator: EstimatorChoice,
    pub tuning: IdentifyOptions,
    pub output: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            distribution: DistributionSpec::Uniform { lo: 0.0, hi: 1.0 },
            seller: SellerPreferences::risk_neutral(0.0),
            design: AuctionDesign { format: Format::SecondPrice, truncation: Truncation::Reserve { alpha0: 0.5 } },
            populations: vec![PopulationSpec::fixed(2).expect("fixed population")],
            n_known: true,
            info: InfoStructure::PRICE_ONLY,
            bid_rule: BidRule::Equilibrium,
            l_total: 100_000,
            seed: 1,
            estimator: EstimatorChoice::Auto,
            tuning: IdentifyOptions::default(),
            output: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn value_distribution(&self) -> Result<ValueDistribution, ConfigError> {
        ValueDistribution::new(self.distribution.clone()).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn analyst_view(&self) -> AnalystView {
        let n_varies = self.populations.len() > 1 || self.populations.iter().any(|p| !p.is_degenerate());
        let known_n = if self.n_known { self.populations.iter().map(|p| p.max_n()).collect() } else { Vec::new() };
        AnalystView { n_varies, known_n }
    }

    /// Checks every parameter value.
    pub fn validate(&self) -> Result<(), anyhow::Error> {
        let dist = self.value_distribution()?;
        self.seller.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.design.validate(&dist).map_err(|e| ConfigError(e.to_string()))?;
        if self.populations.is_empty() {
            return Err(ConfigError("at least one population is required".into()).into());
        }
        if self.n_known && self.populations.iter().any(|p| !p.is_degenerate()) {
            return Err(ConfigError("n_known requires each population to have a single bidder count".into()).into());
        }
        let t = &self.tuning;
        if !(t.grid_step_1d > 0.0 && t.grid_step_1d < 1.0 && t.grid_step_2d > 0.0 && t.grid_step_2d < 1.0) {
            return bad("grid steps must lie in (0, 1)").map_err(Into::into);
        }
        if t.bandwidth.is_some_and(|b| !(b > 0.0 && b < 0.5)) {
            return bad("bandwidth must lie in (0, 0.5)").map_err(Into::into);
        }
        if t.mass_eps.is_some_and(|e| !(e >= 0.0)) {
            return bad("mass_eps must be nonnegative").map_err(Into::into);
        }
        if !(t.tail_delta > 0.0 && t.tail_delta < 0.5) {
            return bad("tail_delta must lie in (0, 0.5)").map_err(Into::into);
        }
        if t.folds < 2 {
            return bad("at least two jackknife folds are required").map_err(Into::into);
        }
        Ok(())
    }

    /// Empty datasets carrying the configured observables.
    pub fn dataset_shapes(&self) -> Vec<ObservedDataset> {
        self.populations
            .iter()
            .map(|_| ObservedDataset {
                rows: Vec::new(),
                l_invalid: None,
                info: self.info,
                format: self.design.format,
                truncation_kind: self.design.truncation.kind(),
            })
            .collect()
    }

    /// The configured estimator, or the routed one for `auto`, after checking that
    /// its observables are present in `datasets`.
    pub fn resolve_estimator(&self, datasets: &[ObservedDataset]) -> Result<Estimator, anyhow::Error> {
        let analyst = self.analyst_view();
        let estimator = match self.estimator {
            EstimatorChoice::Use(e) => e,
            EstimatorChoice::Auto => {
                let first = datasets.first().ok_or_else(|| ConfigError("no dataset".into()))?;
                route(first.format, first.truncation_kind, &first.info, &analyst)?
            }
        };
        estimator.check_inputs(datasets, &analyst).map_err(|e| ConfigError(e.to_string()))?;
        Ok(estimator)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    impl RunConfig {
        fn to_json(&self) -> String {
            serde_json::to_string_pretty(self).expect("config serializes")
        }
    }

    #[test]
    fn round_trip_is_idempotent() {
        let mut cfg = RunConfig::default();
        cfg.populations = vec![PopulationSpec::new(vec![(2, 0.5), (3, 0.5)]).unwrap()];
        cfg.estimator = EstimatorChoice::Use(Estimator::TailRatio);
        cfg.tuning.mass_eps = Some(1e-9);
        let once = cfg.to_json();
        let parsed = RunConfig::from_json(&once).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.to_json(), once);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"seed": 9, "design": {"format": "first_price", "truncation": {"kind": "entry_cost", "cost": 0.25}}}"#)
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.l_total, RunConfig::default().l_total);
        assert!(RunConfig::from_json(r#"{"sede": 9}"#).is_err());
        assert!(RunConfig::from_json(r#"{"estimator": "prop11"}"#).is_err());
    }

    #[test]
    fn validation_quotes_requirements() {
        let mut cfg = RunConfig::default();
        cfg.design.format = Format::FirstPrice;
        cfg.estimator = EstimatorChoice::Use(Estimator::InvalidShare);
        cfg.validate().unwrap();
        let err = cfg.resolve_estimator(&cfg.dataset_shapes()).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
        assert!(err.to_string().contains("invalid-auction count"), "{err}");
        cfg.info = InfoStructure::PRICE_ONLY.with_invalid_count();
        assert_eq!(cfg.resolve_estimator(&cfg.dataset_shapes()).unwrap(), Estimator::InvalidShare);
    }

    #[test]
    fn analyst_view_follows_populations() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.analyst_view(), AnalystView { n_varies: false, known_n: vec![2] });
        cfg.populations = vec![PopulationSpec::fixed(3).unwrap(), PopulationSpec::fixed(2).unwrap()];
        assert_eq!(cfg.analyst_view(), AnalystView { n_varies: true, known_n: vec![3, 2] });
        cfg.n_known = false;
        assert!(cfg.analyst_view().known_n.is_empty());
    }
}
