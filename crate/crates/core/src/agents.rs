//! Economic actors: subjective valuation, the action rule and spending
//! preference.
//!
//! Agents never see the latent [`ObjectiveValues`]. Everything they decide
//! goes through [`subjective_value`], which composes the latent value with
//! the agent's own multiplicative valuation noise. [`decide_action`] and
//! [`spending_order`] take only pre-valued candidates and instrument kinds,
//! so a decision can change only when a subjective valuation changes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goods::{Catalog, Inventory};
use crate::instruments::{AgentId, ClassId, GoodId, InstrumentClass, InstrumentKind, Ledger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Household,
    Firm,
    Bank,
    CentralBank,
    Government,
    PublicProvider,
}

impl Role {
    /// Roles that produce a specialty good every tick.
    pub fn produces(self) -> bool {
        matches!(self, Role::Household | Role::Firm | Role::PublicProvider)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("good {0} is not in the catalog")]
    UnknownGood(GoodId),
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub id: AgentId,
    pub role: Role,
    pub specialty: Option<GoodId>,
    pub inventory: Inventory,
    /// Open contracts on which this agent owes goods.
    pub liabilities: Vec<u64>,
    /// Per-good multiplicative valuation factor.
    pub valuation_noise: Vec<f64>,
    /// Discount applied to future obligations, in (0, 1].
    pub time_preference: f64,
    /// Minimum issuer credibility (or good marketability) this agent
    /// requires before accepting an instrument.
    pub acceptance_threshold: f64,
    pub society: u32,
}

impl Agent {
    pub fn new(id: AgentId, role: Role, goods: usize) -> Self {
        Agent {
            id,
            role,
            specialty: None,
            inventory: Inventory::new(goods),
            liabilities: Vec::new(),
            valuation_noise: vec![1.0; goods],
            time_preference: 1.0,
            acceptance_threshold: 0.5,
            society: 0,
        }
    }
}

/// Latent exchange-ratio values of goods, in numéraire units.
///
/// Readable by metrics and by the valuation path; decision code receives
/// only subjective values.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValues {
    values: Vec<f64>,
    tick: u64,
}

impl ObjectiveValues {
    pub fn from_catalog(catalog: &Catalog) -> Self {
        ObjectiveValues {
            values: catalog.goods().iter().map(|g| g.base_utility).collect(),
            tick: 0,
        }
    }

    /// Panics if any value is not strictly positive.
    pub fn new(values: Vec<f64>, tick: u64) -> Self {
        assert!(
            values.iter().all(|v| *v > 0.0),
            "objective values must be strictly positive"
        );
        ObjectiveValues { values, tick }
    }

    pub fn value(&self, good: GoodId) -> Option<f64> {
        self.values.get(good.index()).copied()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Objective value of a bundle, for metrics.
    pub fn bundle_value(&self, bundle: &[(GoodId, u64)]) -> f64 {
        bundle
            .iter()
            .map(|&(g, q)| q as f64 * self.values.get(g.index()).copied().unwrap_or(0.0))
            .sum()
    }
}

/// Σ qty × objective value × the agent's noise factor for each good.
pub fn subjective_value(
    agent: &Agent,
    bundle: &[(GoodId, u64)],
    objective: &ObjectiveValues,
) -> Result<f64, AgentError> {
    bundle.iter().try_fold(0.0, |acc, &(good, qty)| {
        let latent = objective.value(good).ok_or(AgentError::UnknownGood(good))?;
        let noise = agent
            .valuation_noise
            .get(good.index())
            .copied()
            .ok_or(AgentError::UnknownGood(good))?;
        Ok(acc + qty as f64 * latent * noise)
    })
}

/// Value of one instrument unit, as seen through current posted prices.
pub trait UnitPricing {
    fn unit_value(&self, class: &InstrumentClass) -> f64;
}

/// Subjective value of assets minus subjective cost of liabilities.
///
/// Assets are inventory plus instrument holdings. Liabilities are units of
/// the agent's own classes held by others, discounted by time preference.
pub fn equity(
    agent: &Agent,
    ledger: &Ledger,
    objective: &ObjectiveValues,
    pricing: &impl UnitPricing,
) -> f64 {
    let goods = subjective_value(agent, &agent.inventory.bundle(), objective).unwrap_or(0.0);
    let mut holdings = 0.0;
    for (class_id, units) in ledger.wallet(agent.id) {
        if let Ok(class) = ledger.class(class_id) {
            if class.issuer != Some(agent.id) {
                holdings += units as f64 * pricing.unit_value(class);
            }
        }
    }
    let mut owed = 0.0;
    for (class_id, class) in ledger.classes() {
        if class.issuer != Some(agent.id) {
            continue;
        }
        let outstanding = ledger.outstanding(class_id).unwrap_or(0);
        let held_by_others = outstanding - ledger.balance(agent.id, class_id);
        owed += held_by_others as f64 * pricing.unit_value(class);
    }
    goods + holdings - owed * agent.time_preference
}

/// A state change an agent could make, valued subjectively.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<A> {
    pub action: A,
    /// Projected gain in subjective equity.
    pub interest: f64,
    /// Subjective cost of making the change.
    pub cost: f64,
}

impl<A> Candidate<A> {
    pub fn new(action: A, interest: f64, cost: f64) -> Self {
        Candidate {
            action,
            interest,
            cost,
        }
    }

    pub fn surplus(&self) -> f64 {
        self.interest - self.cost
    }
}

/// The candidate with the largest `interest - cost` among those whose
/// interest strictly exceeds cost. Earlier candidates win ties.
pub fn decide_action<A>(candidates: &[Candidate<A>]) -> Option<&Candidate<A>> {
    let mut best: Option<&Candidate<A>> = None;
    for c in candidates.iter().filter(|c| c.interest > c.cost) {
        if best.is_none_or(|b| c.surplus() > b.surplus()) {
            best = Some(c);
        }
    }
    best
}

/// Regime facts that affect which currency is spent first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpendingContext {
    /// True under a fiat regime that collects taxes in fiat.
    pub fiat_taxation: bool,
}

/// Position of a kind in the spending order; lower is spent first.
pub fn spending_rank(kind: InstrumentKind, ctx: SpendingContext) -> u8 {
    match kind {
        k if k.is_invoice() => 0,
        k if k.is_fiat() && ctx.fiat_taxation => 1,
        InstrumentKind::Iou => 2,
        _ => 3,
    }
}

/// Orders payment options: invoice-type claims first, then (under fiat
/// taxation) the tax currency, then IOUs, then other money. Ties fall back
/// to class id.
pub fn spending_order(options: &[(ClassId, InstrumentKind)], ctx: SpendingContext) -> Vec<ClassId> {
    let mut ranked: Vec<(u8, ClassId)> = options
        .iter()
        .map(|&(id, kind)| (spending_rank(kind, ctx), id))
        .collect();
    ranked.sort_unstable();
    ranked.into_iter().map(|(_, id)| id).collect()
}

/// Groups an agent's holdings by spending rank for quick lookup.
pub fn ranked_wallet(
    ledger: &Ledger,
    agent: AgentId,
    ctx: SpendingContext,
    accept: impl Fn(ClassId, &InstrumentClass) -> bool,
) -> Vec<(ClassId, u64)> {
    let held: BTreeMap<ClassId, u64> = ledger.wallet(agent).collect();
    let options: Vec<(ClassId, InstrumentKind)> = held
        .keys()
        .filter_map(|&id| {
            let class = ledger.class(id).ok()?;
            accept(id, class).then_some((id, class.kind))
        })
        .collect();
    spending_order(&options, ctx)
        .into_iter()
        .map(|id| (id, held[&id]))
        .collect()
}
