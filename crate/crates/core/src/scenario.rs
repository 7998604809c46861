//! Scenario configuration: strict JSON schema, defaults and range checks.
//!
//! Unknown keys are errors at every nesting level. After parsing, the
//! regime-specific block that matches `regime` is filled with defaults, so a
//! parsed config always serializes to a fully specified document.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goods::{Catalog, Good};
use crate::metrics::BoomBustParams;
use crate::regimes::{FiatRegime, PsiRegime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeKind {
    Fiat,
    Psi,
    BarterOnly,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` = {value} is outside {range}")]
    RangeViolation {
        key: String,
        value: String,
        range: &'static str,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ConfigError {
    /// The config key the error points at, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::MissingField(k) | ConfigError::UnknownKey(k) => Some(k),
            ConfigError::RangeViolation { key, .. } => Some(key),
            _ => None,
        }
    }
}

fn d_agents() -> u32 {
    100
}
fn d_horizon() -> u64 {
    100
}
fn d_sigma() -> f64 {
    0.25
}
fn d_half() -> f64 {
    0.5
}
fn d_firm_share() -> f64 {
    0.2
}
fn d_providers() -> u32 {
    4
}
fn d_base() -> f64 {
    0.1
}
fn d_slope() -> f64 {
    1.0
}
fn d_liquidity_target() -> f64 {
    30.0
}
fn d_rounds() -> u32 {
    4
}
fn d_spend_share() -> f64 {
    0.05
}
fn d_adaptation() -> f64 {
    0.02
}
fn d_eta() -> f64 {
    0.1
}
fn d_min_price() -> f64 {
    1.0
}
fn d_price_scale() -> f64 {
    10.0
}
fn d_rate() -> u64 {
    1
}
fn d_firm_rate() -> u64 {
    2
}
fn d_want() -> u64 {
    6
}
fn d_need() -> u64 {
    2
}
fn d_per_meeting() -> u64 {
    3
}
fn d_stock_target() -> u64 {
    8
}
fn d_stock_cap() -> u64 {
    16
}
fn d_expiry() -> u64 {
    1
}
fn d_m_rate() -> f64 {
    0.05
}
fn d_m_base() -> f64 {
    0.1
}
fn d_credit_limit() -> u64 {
    200
}
fn d_baseline() -> usize {
    400
}
fn d_skip() -> usize {
    100
}
fn d_burn_in() -> usize {
    500
}
fn d_catalog() -> Vec<Good> {
    Catalog::standard().goods().to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleMix {
    /// Share of producers that are firms (firms produce at `firm_rate`).
    #[serde(default = "d_firm_share")]
    pub firm_share: f64,
    /// Public service providers under the PSI regime.
    #[serde(default = "d_providers")]
    pub providers: u32,
}

impl Default for RoleMix {
    fn default() -> Self {
        RoleMix {
            firm_share: d_firm_share(),
            providers: d_providers(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Minimum issuer credibility or good marketability for acceptance.
    #[serde(default = "d_half")]
    pub acceptance: f64,
    /// Base consumption propensity for durables.
    #[serde(default = "d_base")]
    pub propensity_base: f64,
    /// Response of propensity to the perceived-to-real savings ratio.
    #[serde(default = "d_slope")]
    pub propensity_slope: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            acceptance: d_half(),
            propensity_base: d_base(),
            propensity_slope: d_slope(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Price adjustment speed.
    #[serde(default = "d_eta")]
    pub price_eta: f64,
    /// Price floor (minimum tick size).
    #[serde(default = "d_min_price")]
    pub min_price: f64,
    /// Currency units per numéraire unit in the initial posted prices.
    #[serde(default = "d_price_scale")]
    pub price_scale: f64,
    /// Units of specialty produced per tick by households and providers.
    #[serde(default = "d_rate")]
    pub production_rate: u64,
    #[serde(default = "d_firm_rate")]
    pub firm_rate: u64,
    /// Durable units of each non-specialty good an agent wants to hold.
    #[serde(default = "d_want")]
    pub want_level: u64,
    /// Perishable units eaten per tick.
    #[serde(default = "d_need")]
    pub perishable_need: u64,
    #[serde(default = "d_per_meeting")]
    pub max_per_meeting: u64,
    /// Producer stock at which posted prices stop moving.
    #[serde(default = "d_stock_target")]
    pub stock_target: u64,
    /// Producers idle while holding this much of their own good.
    #[serde(default = "d_stock_cap")]
    pub stock_cap: u64,
    /// Ticks a perishable lot survives.
    #[serde(default = "d_expiry")]
    pub perishable_expiry: u64,
    /// Share of currency holdings an agent is willing to spend per tick at
    /// base propensity.
    #[serde(default = "d_spend_share")]
    pub spend_share: f64,
    /// Rate at which the perceived-savings anchor follows its ratio.
    #[serde(default = "d_adaptation")]
    pub distortion_adaptation: f64,
    /// Meetings per round; defaults to agents / 2.
    #[serde(default)]
    pub meetings: Option<u32>,
    /// Real balance, in average-priced goods, beyond which currency loses
    /// marginal value to its holder.
    #[serde(default = "d_liquidity_target")]
    pub liquidity_target: f64,
    /// Random pairing rounds per tick.
    #[serde(default = "d_rounds")]
    pub rounds: u32,
    #[serde(default = "d_m_rate")]
    pub marketability_rate: f64,
    #[serde(default = "d_m_base")]
    pub marketability_baseline: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all market params have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IouParams {
    #[serde(default)]
    pub enabled: bool,
    /// Most of its own IOUs an agent may have outstanding.
    #[serde(default = "d_credit_limit")]
    pub credit_limit: u64,
}

impl Default for IouParams {
    fn default() -> Self {
        IouParams {
            enabled: false,
            credit_limit: d_credit_limit(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsParams {
    #[serde(default)]
    pub boom_bust: BoomBustParams,
    /// Baseline window for boom-bust detection, after `skip`.
    #[serde(default = "d_baseline")]
    pub baseline_window: usize,
    /// Leading frames ignored by boom-bust detection.
    #[serde(default = "d_skip")]
    pub skip: usize,
    /// Leading frames ignored by stability and drift summaries.
    #[serde(default = "d_burn_in")]
    pub burn_in: usize,
}

impl Default for MetricsParams {
    fn default() -> Self {
        MetricsParams {
            boom_bust: BoomBustParams::default(),
            baseline_window: d_baseline(),
            skip: d_skip(),
            burn_in: d_burn_in(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub regime: RegimeKind,
    #[serde(default = "d_agents")]
    pub agents: u32,
    #[serde(default)]
    pub roles: RoleMix,
    #[serde(default = "d_catalog")]
    pub goods: Vec<Good>,
    #[serde(default = "d_horizon")]
    pub horizon: u64,
    pub seed: u64,
    /// σ of the per-agent, per-good lognormal valuation factor.
    #[serde(default = "d_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub market: MarketParams,
    #[serde(default)]
    pub fiat: Option<FiatRegime>,
    #[serde(default)]
    pub psi: Option<PsiRegime>,
    #[serde(default)]
    pub iou: IouParams,
    /// Ticks at which producer specialties are reshuffled.
    #[serde(default)]
    pub reshuffle_at: Vec<u64>,
    #[serde(default)]
    pub metrics: MetricsParams,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl ScenarioConfig {
    /// Minimal config with every default applied.
    pub fn new(regime: RegimeKind, agents: u32, horizon: u64, seed: u64) -> Self {
        let mut cfg: ScenarioConfig = serde_json::from_value(serde_json::json!({
            "regime": regime,
            "agents": agents,
            "horizon": horizon,
            "seed": seed,
        }))
        .expect("minimal config is valid");
        cfg.fill_defaults();
        cfg
    }

    fn fill_defaults(&mut self) {
        match self.regime {
            RegimeKind::Fiat => {
                self.fiat.get_or_insert_with(FiatRegime::default);
            }
            RegimeKind::Psi => {
                self.psi.get_or_insert_with(PsiRegime::default);
            }
            RegimeKind::BarterOnly => {}
        }
    }

    pub fn fiat_params(&self) -> FiatRegime {
        self.fiat.clone().unwrap_or_default()
    }

    pub fn psi_params(&self) -> PsiRegime {
        self.psi.clone().unwrap_or_default()
    }

    pub fn catalog(&self) -> Catalog {
        Catalog::new(self.goods.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut checks = RangeChecks::default();
        checks.closed("noise_sigma", self.noise_sigma, 0.0, 5.0);
        checks.closed("roles.firm_share", self.roles.firm_share, 0.0, 1.0);
        checks.closed("thresholds.acceptance", self.thresholds.acceptance, 0.0, 1.0);
        checks.open("thresholds.propensity_base", self.thresholds.propensity_base, 0.0, 1.0);
        checks.closed("thresholds.propensity_slope", self.thresholds.propensity_slope, 0.0, 100.0);
        let m = &self.market;
        checks.left_open("market.price_eta", m.price_eta, 0.0, 1.0);
        checks.left_open("market.min_price", m.min_price, 0.0, f64::MAX);
        checks.left_open("market.price_scale", m.price_scale, 0.0, f64::MAX);
        checks.left_open("market.spend_share", m.spend_share, 0.0, 1.0);
        checks.closed("market.distortion_adaptation", m.distortion_adaptation, 0.0, 1.0);
        checks.closed("market.marketability_rate", m.marketability_rate, 0.0, 1.0);
        checks.closed("market.marketability_baseline", m.marketability_baseline, 0.0, 1.0);
        checks.left_open("market.liquidity_target", m.liquidity_target, 0.0, f64::MAX);
        checks.positive("market.want_level", m.want_level);
        checks.positive("market.max_per_meeting", m.max_per_meeting);
        checks.positive("market.stock_target", m.stock_target);
        checks.positive("market.perishable_expiry", m.perishable_expiry);
        if m.stock_cap < m.stock_target {
            checks.fail("market.stock_cap", m.stock_cap, ">= market.stock_target");
        }
        checks.closed("metrics.boom_bust.k", self.metrics.boom_bust.k, 0.0, 100.0);
        if let Some(f) = &self.fiat {
            checks.right_open("fiat.tax_rate", f.tax_rate, 0.0, 1.0);
            checks.closed("fiat.reserve_ratio_max", f.reserve_ratio_max, 1.0, f64::MAX);
            checks.closed("fiat.policy_rate", f.policy_rate, 0.0, 1.0);
            checks.left_open("fiat.reserve_fraction", f.reserve_fraction, 0.0, f64::MAX);
            checks.closed("fiat.access_decay", f.access_decay, 0.0, 1.0);
            checks.closed("fiat.government_spend", f.government_spend, 0.0, 1.0);
            if let Some(e) = &f.expansion {
                checks.closed("fiat.expansion.fraction", e.fraction, 0.0, 10.0);
                checks.positive("fiat.expansion.interval", e.interval);
            }
            for s in &f.shocks {
                checks.closed("fiat.shocks.fraction", s.fraction, 0.0, 10.0);
            }
            for a in &f.access_order {
                if a.0 >= self.agents {
                    checks.fail("fiat.access_order", a.0, "the agent id range");
                }
            }
        }
        if let Some(p) = &self.psi {
            checks.closed("psi.vote_threshold", p.vote_threshold, 0.0, 1.0);
            checks.closed("psi.service_demand_rate", p.service_demand_rate, 0.0, 1.0);
            checks.left_open("psi.service_value", p.service_value, 0.0, f64::MAX);
            checks.positive("psi.project_value", p.project_value);
            checks.closed("psi.benefit_ratio", p.benefit_ratio, 0.0, f64::MAX);
        }
        for (i, g) in self.goods.iter().enumerate() {
            checks.left_open(&format!("goods[{i}].base_utility"), g.base_utility, 0.0, f64::MAX);
            checks.closed(&format!("goods[{i}].salability"), g.salability, 0.0, 1.0);
            checks.closed(&format!("goods[{i}].production_cost"), g.production_cost, 0.0, f64::MAX);
        }
        checks.finish()?;
        if self.goods.is_empty() && self.agents > 0 {
            return Err(ConfigError::Invalid("goods catalog is empty".into()));
        }
        if self.regime == RegimeKind::Fiat && self.agents > 0 && self.agents < 4 {
            return Err(ConfigError::Invalid(
                "a fiat world needs a central bank, a bank, a government and one producer".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Default)]
struct RangeChecks {
    first: Option<ConfigError>,
}

impl RangeChecks {
    fn fail(&mut self, key: &str, value: impl ToString, range: &'static str) {
        if self.first.is_none() {
            self.first = Some(ConfigError::RangeViolation {
                key: key.to_string(),
                value: value.to_string(),
                range,
            });
        }
    }

    fn closed(&mut self, key: &str, v: f64, lo: f64, hi: f64) {
        if !(lo..=hi).contains(&v) {
            self.fail(key, v, "its closed range");
        }
    }

    fn open(&mut self, key: &str, v: f64, lo: f64, hi: f64) {
        if !(v > lo && v < hi) {
            self.fail(key, v, "its open range");
        }
    }

    fn left_open(&mut self, key: &str, v: f64, lo: f64, hi: f64) {
        if !(v > lo && v <= hi) {
            self.fail(key, v, "its half-open range");
        }
    }

    fn right_open(&mut self, key: &str, v: f64, lo: f64, hi: f64) {
        if !(v >= lo && v < hi) {
            self.fail(key, v, "[0, 1)");
        }
    }

    fn positive(&mut self, key: &str, v: u64) {
        if v == 0 {
            self.fail(key, v, "positive integers");
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        self.first.map_or(Ok(()), Err)
    }
}

/// Pulls the backtick-quoted name out of a serde message.
fn quoted(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

/// Parses, defaults and validates a JSON scenario.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| {
        use serde_json::error::Category;
        let msg = e.to_string();
        match e.classify() {
            Category::Data if msg.starts_with("missing field") => {
                ConfigError::MissingField(quoted(&msg).unwrap_or(msg))
            }
            Category::Data if msg.starts_with("unknown field") => {
                ConfigError::UnknownKey(quoted(&msg).unwrap_or(msg))
            }
            Category::Data => ConfigError::Invalid(msg),
            _ => ConfigError::Syntax(msg),
        }
    })?;
    cfg.fill_defaults();
    cfg.validate()?;
    Ok(cfg)
}
