//! Institutional rule sets: fiat with fractional reserves and taxation, and
//! public service invoices.
//!
//! The fiat side gates bank credit on the reserve multiple and collects a
//! share of every trade. The PSI side gates issuance on a society vote and a
//! confirmed delivery, and provides the sink that destroys units when they
//! come back to their issuer as payment for an individual service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::Delivery;
use crate::instruments::{
    AgentId, ClassId, GoodId, InstrumentClass, InstrumentKind, Ledger, LedgerError, LedgerEvent,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegimeError {
    #[error("credit would take fiat outstanding to {after}, above the limit {limit}")]
    ReserveLimitExceeded { after: u64, limit: u64 },
    #[error("unknown borrower {0}")]
    UnknownBorrower(AgentId),
    #[error("vote failed: {yes} of {total} in favor")]
    VoteFailed { yes: u32, total: u32 },
    #[error("project {0} already registered")]
    DuplicateSpec(String),
    #[error("project {0} was never requested")]
    NotRequested(String),
    #[error("project {0} already delivered")]
    AlreadyDelivered(String),
    #[error("agreed value must be positive")]
    ZeroValue,
    #[error("no service demand fired for agent {0}")]
    NoServiceDemand(AgentId),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

fn default_policy_rate() -> f64 {
    0.0005
}
fn default_reserve_ratio() -> f64 {
    10.0
}
fn default_tax_rate() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}
fn default_initial_money() -> u64 {
    3000
}
fn default_expansion_interval() -> u64 {
    10
}
fn default_access_decay() -> f64 {
    0.9
}
fn default_government_spend() -> f64 {
    0.5
}
fn default_reserve_fraction() -> f64 {
    0.2
}

/// Scheduled credit expansion: `fraction` of fiat outstanding every
/// `interval` ticks from `start` (inclusive) to `stop` (exclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionSchedule {
    pub fraction: f64,
    #[serde(default = "default_expansion_interval")]
    pub interval: u64,
    #[serde(default)]
    pub start: u64,
    #[serde(default)]
    pub stop: Option<u64>,
}

impl ExpansionSchedule {
    pub fn fires_at(&self, tick: u64) -> bool {
        self.fraction > 0.0
            && self.interval > 0
            && tick >= self.start
            && self.stop.is_none_or(|s| tick < s)
            && (tick - self.start) % self.interval == 0
    }
}

/// One-time expansion of `fraction` of outstanding at `tick`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditShock {
    pub tick: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiatRegime {
    /// Interest per tick on bank credit.
    #[serde(default = "default_policy_rate")]
    pub policy_rate: f64,
    /// Maximum notes-plus-credit to reserves multiple.
    #[serde(default = "default_reserve_ratio")]
    pub reserve_ratio_max: f64,
    /// Share of each trade's value collected by the government.
    #[serde(default = "default_tax_rate")]
    pub tax_rate: f64,
    #[serde(default = "default_true")]
    pub legal_tender: bool,
    /// Ranked recipients of new credit. Empty means bank, government, then
    /// every other agent by id.
    #[serde(default)]
    pub access_order: Vec<AgentId>,
    /// Notes issued to every agent at tick 0.
    #[serde(default = "default_initial_money")]
    pub initial_money: u64,
    /// Initial reserves as a fraction of initial notes.
    #[serde(default = "default_reserve_fraction")]
    pub reserve_fraction: f64,
    /// New credit is split over the access order with weight `decay^rank`.
    #[serde(default = "default_access_decay")]
    pub access_decay: f64,
    /// The central bank adds reserves so scheduled expansion stays within
    /// the reserve multiple.
    #[serde(default = "default_true")]
    pub accommodate: bool,
    /// Share of government holdings spent on producers' goods each tick.
    #[serde(default = "default_government_spend")]
    pub government_spend: f64,
    #[serde(default)]
    pub expansion: Option<ExpansionSchedule>,
    #[serde(default)]
    pub shocks: Vec<CreditShock>,
}

impl Default for FiatRegime {
    fn default() -> Self {
        FiatRegime {
            policy_rate: default_policy_rate(),
            reserve_ratio_max: default_reserve_ratio(),
            tax_rate: default_tax_rate(),
            legal_tender: true,
            access_order: Vec::new(),
            initial_money: default_initial_money(),
            reserve_fraction: default_reserve_fraction(),
            access_decay: default_access_decay(),
            accommodate: true,
            government_spend: default_government_spend(),
            expansion: None,
            shocks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loan {
    pub borrower: AgentId,
    pub principal: u64,
    pub rate: f64,
    /// Interest accrued but not yet paid, in fiat units.
    pub accrued: f64,
    pub opened: u64,
}

/// Live state of a fiat regime.
#[derive(Debug, Clone, PartialEq)]
pub struct FiatState {
    pub params: FiatRegime,
    pub central_bank: AgentId,
    pub bank: AgentId,
    pub government: AgentId,
    pub note_class: ClassId,
    pub credit_class: ClassId,
    /// Reserve value held by the bank.
    pub reserves: f64,
    pub loans: Vec<Loan>,
    pub access_order: Vec<AgentId>,
}

impl FiatState {
    /// Largest fiat outstanding the reserves allow.
    pub fn limit(&self) -> u64 {
        (self.reserves * self.params.reserve_ratio_max).floor() as u64
    }

    pub fn fiat_outstanding(&self, ledger: &Ledger) -> u64 {
        ledger.outstanding(self.note_class).unwrap_or(0)
            + ledger.outstanding(self.credit_class).unwrap_or(0)
    }

    pub fn headroom(&self, ledger: &Ledger) -> u64 {
        self.limit().saturating_sub(self.fiat_outstanding(ledger))
    }
}

/// Grants bank credit within the reserve multiple.
pub fn fiat_expand_credit(
    state: &mut FiatState,
    ledger: &mut Ledger,
    borrower: AgentId,
    amount: u64,
) -> Result<Loan, RegimeError> {
    if borrower.0 >= ledger.agent_count() {
        return Err(RegimeError::UnknownBorrower(borrower));
    }
    let after = state.fiat_outstanding(ledger) + amount;
    let limit = state.limit();
    if after > limit {
        return Err(RegimeError::ReserveLimitExceeded { after, limit });
    }
    // The bank borrows central-bank notes; everyone else borrows bank
    // credit. PSIs are never lent into being.
    let class_id = if borrower == state.bank { state.note_class } else { state.credit_class };
    let class = ledger.class(class_id)?;
    assert!(matches!(class.kind, InstrumentKind::FiatNote | InstrumentKind::FiatCredit));
    ledger.issue_units(class_id, borrower, amount)?;
    let loan = Loan {
        borrower,
        principal: amount,
        rate: state.params.policy_rate,
        accrued: 0.0,
        opened: ledger.tick(),
    };
    state.loans.push(loan.clone());
    Ok(loan)
}

/// How a trade was settled, for tax purposes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Settlement {
    Fiat,
    /// Settled in goods or non-fiat claims; `good` is what the trader holds
    /// and `price` its posted fiat price.
    NonFiat { good: GoodId, price: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaxAssessment {
    /// Fiat units owed to the government.
    pub due: u64,
    /// Goods the trader must convert to fiat first.
    pub converted: Option<Delivery>,
}

/// `tax_rate × trade_value`, rounded half up. Non-fiat trades convert
/// enough goods at the posted price to cover the tax.
pub fn fiat_collect_taxes(trade_value: u64, tax_rate: f64, settlement: Settlement) -> TaxAssessment {
    let due = (tax_rate * trade_value as f64 + 0.5 - 1e-9).floor().max(0.0) as u64;
    let converted = match settlement {
        Settlement::NonFiat { good, price } if due > 0 => {
            let qty = (due as f64 / price - 1e-9).ceil().max(1.0) as u64;
            Some(Delivery::new(good, qty))
        }
        _ => None,
    };
    TaxAssessment { due, converted }
}

fn default_vote_threshold() -> f64 {
    0.5
}
fn default_service_demand_rate() -> f64 {
    0.05
}
fn default_service_value() -> f64 {
    20.0
}
fn default_project_value() -> u64 {
    12000
}
fn default_project_interval() -> u64 {
    10
}
fn default_initial_projects() -> u32 {
    5
}
fn default_delivery_lag() -> u64 {
    5
}
fn default_benefit_ratio() -> f64 {
    1.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiRegime {
    /// Share of the society that must vote yes.
    #[serde(default = "default_vote_threshold")]
    pub vote_threshold: f64,
    /// Per agent per tick probability of needing an individual government
    /// service, paid in PSIs and destroyed.
    #[serde(default = "default_service_demand_rate")]
    pub service_demand_rate: f64,
    /// Numéraire value of one individual service. Its PSI price is this
    /// value at the initial price scale, times the PSI price index.
    #[serde(default = "default_service_value")]
    pub service_value: f64,
    /// PSI units issued per delivered project.
    #[serde(default = "default_project_value")]
    pub project_value: u64,
    /// Ticks between project proposals; 0 disables proposals after the
    /// initial ones.
    #[serde(default = "default_project_interval")]
    pub project_interval: u64,
    /// Projects voted, funded and delivered at tick 0.
    #[serde(default = "default_initial_projects")]
    pub initial_projects: u32,
    /// Last tick at which new projects may be proposed.
    #[serde(default)]
    pub project_stop: Option<u64>,
    /// Ticks between a passed vote and delivery. Inputs worth the agreed
    /// value are bought on the provider's IOUs over this window and consumed
    /// by the delivery.
    #[serde(default = "default_delivery_lag")]
    pub delivery_lag: u64,
    /// Voters weigh the project's benefit share at this multiple of its cost
    /// share before their own valuation noise.
    #[serde(default = "default_benefit_ratio")]
    pub benefit_ratio: f64,
    /// The government issues PSIs as delegate and collects them; otherwise
    /// each provider issues and collects its own.
    #[serde(default)]
    pub government_collects: bool,
}

impl Default for PsiRegime {
    fn default() -> Self {
        PsiRegime {
            vote_threshold: default_vote_threshold(),
            service_demand_rate: default_service_demand_rate(),
            service_value: default_service_value(),
            project_value: default_project_value(),
            project_interval: default_project_interval(),
            initial_projects: default_initial_projects(),
            project_stop: None,
            delivery_lag: default_delivery_lag(),
            benefit_ratio: default_benefit_ratio(),
            government_collects: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectStatus {
    Requested,
    Delivered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub spec: String,
    pub society: u32,
    pub status: ProjectStatus,
    pub agreed_value: u64,
    pub votes_yes: u32,
    pub votes_total: u32,
    pub provider: Option<AgentId>,
    pub class: Option<ClassId>,
    pub requested_tick: u64,
    pub delivered_tick: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectRegistry {
    projects: BTreeMap<String, Project>,
}

impl ProjectRegistry {
    pub fn get(&self, spec: &str) -> Option<&Project> {
        self.projects.get(spec)
    }

    pub fn projects(&self) -> impl Iterator<Item = &Project> {
        self.projects.values()
    }

    pub fn len(&self) -> usize {
        self.projects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projects.is_empty()
    }
}

/// Registers `spec` as requested if the vote clears the threshold.
#[allow(clippy::too_many_arguments)]
pub fn psi_request_project<'r>(
    registry: &'r mut ProjectRegistry,
    society: u32,
    spec: &str,
    agreed_value: u64,
    votes_yes: u32,
    votes_total: u32,
    vote_threshold: f64,
    tick: u64,
) -> Result<&'r Project, RegimeError> {
    if registry.projects.contains_key(spec) {
        return Err(RegimeError::DuplicateSpec(spec.to_string()));
    }
    if agreed_value == 0 {
        return Err(RegimeError::ZeroValue);
    }
    if votes_total == 0 || (votes_yes as f64) < vote_threshold * votes_total as f64 {
        return Err(RegimeError::VoteFailed {
            yes: votes_yes,
            total: votes_total,
        });
    }
    let project = Project {
        spec: spec.to_string(),
        society,
        status: ProjectStatus::Requested,
        agreed_value,
        votes_yes,
        votes_total,
        provider: None,
        class: None,
        requested_tick: tick,
        delivered_tick: None,
    };
    Ok(registry.projects.entry(spec.to_string()).or_insert(project))
}

/// Marks `spec` delivered by `provider` and only then issues its PSIs.
///
/// `issuer` is the party that will accept the units back: the provider
/// itself, or a delegate such as the government.
pub fn psi_deliver_project(
    registry: &mut ProjectRegistry,
    ledger: &mut Ledger,
    provider: AgentId,
    issuer: AgentId,
    spec: &str,
) -> Result<ClassId, RegimeError> {
    let project = registry
        .projects
        .get_mut(spec)
        .ok_or_else(|| RegimeError::NotRequested(spec.to_string()))?;
    if project.status == ProjectStatus::Delivered {
        return Err(RegimeError::AlreadyDelivered(spec.to_string()));
    }
    let class = ledger.register_class(&InstrumentClass::psi(issuer, spec))?;
    project.status = ProjectStatus::Delivered;
    project.provider = Some(provider);
    project.class = Some(class);
    project.delivered_tick = Some(ledger.tick());
    ledger.open_psi_gate(class, project.agreed_value)?;
    ledger.issue_units(class, provider, project.agreed_value)?;
    Ok(class)
}

/// Pays for an individual service with PSIs, destroying them at their
/// issuer.
pub fn psi_pay_government_service(
    ledger: &mut Ledger,
    agent: AgentId,
    class: ClassId,
    amount: u64,
    demand_fired: bool,
) -> Result<LedgerEvent, RegimeError> {
    if !demand_fired {
        return Err(RegimeError::NoServiceDemand(agent));
    }
    let issuer = ledger
        .class(class)?
        .issuer
        .expect("PSI classes always carry an issuer");
    Ok(ledger.redeem_destroy(agent, issuer, class, amount)?)
}
