//! Two-part exchange, acceptance decisions and marketability.
//!
//! An exchange opens when a provider delivers goods and is complete when
//! the claim created by the first half is honored. Barter and payment with
//! an existing currency close both halves at once; IOU and invoice
//! settlements leave an [`ExchangeContract`] open until its units are
//! returned to the issuer.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Agent;
use crate::instruments::{
    AgentId, Backing, ClassId, GoodId, InstrumentClass, InstrumentKind, Ledger, LedgerError,
};
use crate::regimes::{ProjectRegistry, ProjectStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub good: GoodId,
    pub qty: u64,
}

impl Delivery {
    pub fn new(good: GoodId, qty: u64) -> Self {
        Delivery { good, qty }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Medium {
    Barter,
    Money,
    Iou,
    Invoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContractState {
    Open,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeContract {
    pub id: u64,
    pub first_provider: AgentId,
    pub first_receiver: AgentId,
    pub delivered: Delivery,
    pub medium: Medium,
    /// Instrument class settling the contract, absent for barter.
    pub class: Option<ClassId>,
    /// Units created or paid in the first half.
    pub amount: u64,
    /// Units of `class` still attributable to this contract.
    pub outstanding: u64,
    pub state: ContractState,
    pub open_tick: u64,
    pub close_tick: Option<u64>,
}

/// How the receiver of the first half settles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MediumChoice {
    /// Immediate counter-delivery of goods.
    Barter { counter: Delivery },
    /// Payment in existing instruments the provider accepts.
    Money { payment: Vec<(ClassId, u64)> },
    /// The receiver issues its own IOUs to the provider.
    Iou { amount: u64 },
    /// The provider issues an invoice the receiver is bound to honor.
    Invoice { amount: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcceptReason {
    RequestedService,
    NotRequested,
    NotDelivered,
    NotMember,
    LegalTender,
    Credible,
    LowCredibility,
    Marketable,
    LowMarketability,
    /// Bilateral invoices are contract records, not currency.
    NotCurrency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acceptance {
    pub accepted: bool,
    pub reason: AcceptReason,
}

impl Acceptance {
    fn yes(reason: AcceptReason) -> Self {
        Acceptance {
            accepted: true,
            reason,
        }
    }

    fn no(reason: AcceptReason) -> Self {
        Acceptance {
            accepted: false,
            reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExchangeError {
    #[error("provider lacks the goods to deliver")]
    GoodsUnavailable,
    #[error("medium rejected: {0:?}")]
    MediumRejected(AcceptReason),
    #[error("contract {0} is not open")]
    NotOpen(u64),
    #[error("presenter does not bear the contract's units")]
    WrongBearer,
    #[error("contract {0} already completed")]
    DoubleCompletion(u64),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown good {0}")]
    UnknownGood(GoodId),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Honored and defaulted redemptions per issuer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CredibilityTable {
    record: BTreeMap<AgentId, (u64, u64)>,
}

impl CredibilityTable {
    /// `(honored + 1) / (honored + defaulted + 2)`.
    pub fn credibility(&self, issuer: AgentId) -> f64 {
        let (h, d) = self.record.get(&issuer).copied().unwrap_or((0, 0));
        (h + 1) as f64 / (h + d + 2) as f64
    }

    pub fn honored(&mut self, issuer: AgentId) {
        self.record.entry(issuer).or_default().0 += 1;
    }

    pub fn defaulted(&mut self, issuer: AgentId) {
        self.record.entry(issuer).or_default().1 += 1;
    }

    pub fn record(&self, issuer: AgentId) -> (u64, u64) {
        self.record.get(&issuer).copied().unwrap_or((0, 0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TradeOutcome {
    Accepted(GoodId),
    Refused(GoodId),
    Inactive(GoodId),
}

impl TradeOutcome {
    pub fn good(self) -> GoodId {
        match self {
            TradeOutcome::Accepted(g) | TradeOutcome::Refused(g) | TradeOutcome::Inactive(g) => g,
        }
    }
}

/// Per-good score of how readily the good is accepted in exchange.
///
/// Acceptance pulls the score toward 1 and refusal or inactivity toward the
/// baseline, both as an exponential moving average with rate `rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketabilityTable {
    scores: Vec<f64>,
    rate: f64,
    baseline: f64,
    /// Per good: (accepted, refused, inactive) update counts.
    history: Vec<[u64; 3]>,
}

impl MarketabilityTable {
    pub const DEFAULT_RATE: f64 = 0.05;
    pub const DEFAULT_BASELINE: f64 = 0.1;

    pub fn new(goods: usize, rate: f64, baseline: f64) -> Self {
        MarketabilityTable {
            scores: vec![baseline; goods],
            rate,
            baseline,
            history: vec![[0; 3]; goods],
        }
    }

    pub fn score(&self, good: GoodId) -> Option<f64> {
        self.scores.get(good.index()).copied()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn history(&self, good: GoodId) -> Option<[u64; 3]> {
        self.history.get(good.index()).copied()
    }

    /// Good with the highest score; lowest id wins ties.
    pub fn leader(&self) -> Option<GoodId> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in self.scores.iter().enumerate() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        best.map(|(i, _)| GoodId(i as u32))
    }

    pub fn update(&mut self, outcome: TradeOutcome) -> Result<(), ExchangeError> {
        let good = outcome.good();
        let s = self
            .scores
            .get_mut(good.index())
            .ok_or(ExchangeError::UnknownGood(good))?;
        let (target, slot) = match outcome {
            TradeOutcome::Accepted(_) => (1.0, 0),
            TradeOutcome::Refused(_) => (self.baseline, 1),
            TradeOutcome::Inactive(_) => (self.baseline, 2),
        };
        *s = (*s + self.rate * (target - *s)).clamp(0.0, 1.0);
        self.history[good.index()][slot] += 1;
        Ok(())
    }
}

/// Functional form of [`MarketabilityTable::update`].
pub fn marketability_update(
    mut table: MarketabilityTable,
    outcome: TradeOutcome,
) -> Result<MarketabilityTable, ExchangeError> {
    table.update(outcome)?;
    Ok(table)
}

/// Everything an acceptance decision may depend on besides the agent.
#[derive(Debug, Clone, Copy)]
pub struct AcceptanceContext<'a> {
    /// Fiat notes and credit must be accepted.
    pub legal_tender: bool,
    pub registry: Option<&'a ProjectRegistry>,
    pub credibility: &'a CredibilityTable,
    pub marketability: &'a MarketabilityTable,
}

/// Whether `agent` accepts units of `class` as payment, and why.
pub fn accept_decision(
    agent: &Agent,
    class: &InstrumentClass,
    ctx: &AcceptanceContext<'_>,
) -> Acceptance {
    use AcceptReason::*;
    match class.kind {
        InstrumentKind::Psi => {
            let Some(spec) = class.service_spec() else {
                return Acceptance::no(NotRequested);
            };
            match ctx.registry.and_then(|r| r.get(spec)) {
                None => Acceptance::no(NotRequested),
                Some(p) if p.society != agent.society => Acceptance::no(NotMember),
                Some(p) if p.status == ProjectStatus::Delivered => Acceptance::yes(RequestedService),
                Some(_) => Acceptance::no(NotDelivered),
            }
        }
        InstrumentKind::FiatNote | InstrumentKind::FiatCredit if ctx.legal_tender => {
            Acceptance::yes(LegalTender)
        }
        InstrumentKind::Iou | InstrumentKind::FiatNote | InstrumentKind::FiatCredit => {
            let issuer = class.issuer.expect("registered classes carry an issuer");
            if ctx.credibility.credibility(issuer) >= agent.acceptance_threshold {
                Acceptance::yes(Credible)
            } else {
                Acceptance::no(LowCredibility)
            }
        }
        InstrumentKind::CommodityMoney => {
            let score = match class.backing {
                Backing::Good(g) => ctx.marketability.score(g).unwrap_or(0.0),
                _ => 0.0,
            };
            if score >= agent.acceptance_threshold {
                Acceptance::yes(Marketable)
            } else {
                Acceptance::no(LowMarketability)
            }
        }
        InstrumentKind::Invoice => Acceptance::no(NotCurrency),
    }
}

/// Open contracts plus counters for completed ones.
#[derive(Debug, Clone, Default)]
pub struct ContractBook {
    next_id: u64,
    open: BTreeMap<u64, ExchangeContract>,
    by_class: BTreeMap<ClassId, VecDeque<u64>>,
    completed: u64,
    /// Completed contracts, kept only when `retain_completed` is set.
    history: Vec<ExchangeContract>,
    retain_completed: bool,
}

impl ContractBook {
    pub fn new() -> Self {
        ContractBook::default()
    }

    pub fn retaining() -> Self {
        ContractBook {
            retain_completed: true,
            ..ContractBook::default()
        }
    }

    pub fn open_contracts(&self) -> impl Iterator<Item = &ExchangeContract> {
        self.open.values()
    }

    pub fn get(&self, id: u64) -> Option<&ExchangeContract> {
        self.open.get(&id)
    }

    pub fn completed_count(&self) -> u64 {
        self.completed
    }

    pub fn history(&self) -> &[ExchangeContract] {
        &self.history
    }

    /// Oldest open contract backed by `class`.
    pub fn oldest_open(&self, class: ClassId) -> Option<u64> {
        self.by_class.get(&class).and_then(|q| q.front().copied())
    }

    /// Units attributable to open contracts of `class`.
    pub fn open_units(&self, class: ClassId) -> u64 {
        self.by_class
            .get(&class)
            .map(|q| q.iter().map(|id| self.open[id].outstanding).sum())
            .unwrap_or(0)
    }

    fn file(&mut self, contract: ExchangeContract) {
        if contract.state == ContractState::Open {
            let class = contract.class.expect("open contracts are instrument-backed");
            self.by_class.entry(class).or_default().push_back(contract.id);
            self.open.insert(contract.id, contract);
        } else {
            self.close(contract);
        }
    }

    fn close(&mut self, contract: ExchangeContract) {
        self.completed += 1;
        if self.retain_completed {
            self.history.push(contract);
        }
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }
}

fn agent_index(agents: &[Agent], id: AgentId) -> Result<usize, ExchangeError> {
    if id.index() < agents.len() {
        Ok(id.index())
    } else {
        Err(ExchangeError::UnknownAgent(id))
    }
}

fn move_goods(
    agents: &mut [Agent],
    from: usize,
    to: usize,
    delivery: Delivery,
) -> Result<(), ExchangeError> {
    if agents[from].inventory.qty(delivery.good) < delivery.qty {
        return Err(ExchangeError::GoodsUnavailable);
    }
    let lots = agents[from].inventory.take(delivery.good, delivery.qty);
    agents[to].inventory.put_lots(delivery.good, &lots);
    Ok(())
}

/// First half of an exchange: `provider` delivers to `receiver`, who
/// settles with `medium`.
#[allow(clippy::too_many_arguments)]
pub fn settle_first_half(
    book: &mut ContractBook,
    agents: &mut [Agent],
    ledger: &mut Ledger,
    ctx: &AcceptanceContext<'_>,
    provider: AgentId,
    receiver: AgentId,
    delivered: Delivery,
    medium: MediumChoice,
    tick: u64,
) -> Result<ExchangeContract, ExchangeError> {
    let p = agent_index(agents, provider)?;
    let r = agent_index(agents, receiver)?;
    if agents[p].inventory.qty(delivered.good) < delivered.qty || delivered.qty == 0 {
        return Err(ExchangeError::GoodsUnavailable);
    }
    let mut contract = ExchangeContract {
        id: 0,
        first_provider: provider,
        first_receiver: receiver,
        delivered,
        medium: Medium::Barter,
        class: None,
        amount: 0,
        outstanding: 0,
        state: ContractState::Completed,
        open_tick: tick,
        close_tick: Some(tick),
    };
    match medium {
        MediumChoice::Barter { counter } => {
            if agents[r].inventory.qty(counter.good) < counter.qty {
                return Err(ExchangeError::GoodsUnavailable);
            }
            move_goods(agents, p, r, delivered)?;
            move_goods(agents, r, p, counter)?;
        }
        MediumChoice::Money { payment } => {
            for &(class_id, units) in &payment {
                let class = ledger.class(class_id)?;
                let verdict = accept_decision(&agents[p], class, ctx);
                if !verdict.accepted {
                    return Err(ExchangeError::MediumRejected(verdict.reason));
                }
                if ledger.balance(receiver, class_id) < units {
                    return Err(LedgerError::InsufficientBalance {
                        held: ledger.balance(receiver, class_id),
                        needed: units,
                    }
                    .into());
                }
            }
            for &(class_id, units) in &payment {
                ledger.transfer(receiver, provider, class_id, units)?;
            }
            move_goods(agents, p, r, delivered)?;
            contract.medium = Medium::Money;
            contract.amount = payment.iter().map(|(_, u)| u).sum();
        }
        MediumChoice::Iou { amount } => {
            let backing = agents[r].specialty.unwrap_or(delivered.good);
            let class = InstrumentClass::iou(receiver, backing);
            let verdict = accept_decision(&agents[p], &class, ctx);
            if !verdict.accepted {
                return Err(ExchangeError::MediumRejected(verdict.reason));
            }
            let class_id = ledger.issue(&class, provider, amount)?;
            move_goods(agents, p, r, delivered)?;
            contract.medium = Medium::Iou;
            contract.class = Some(class_id);
            contract.amount = amount;
            contract.outstanding = amount;
            contract.state = ContractState::Open;
            contract.close_tick = None;
        }
        MediumChoice::Invoice { amount } => {
            let class = InstrumentClass::invoice(provider, delivered.good);
            let class_id = ledger.issue(&class, provider, amount)?;
            move_goods(agents, p, r, delivered)?;
            contract.medium = Medium::Invoice;
            contract.class = Some(class_id);
            contract.amount = amount;
            contract.outstanding = amount;
            contract.state = ContractState::Open;
            contract.close_tick = None;
        }
    }
    contract.id = book.take_id();
    if contract.state == ContractState::Open {
        agents[r].liabilities.push(contract.id);
    }
    book.file(contract.clone());
    Ok(contract)
}

/// Second half: `bearer` presents `units` of the contract's class and the
/// debtor (the first receiver) counter-delivers `redemption`. The units are
/// destroyed at their issuer. The contract completes when no units remain
/// attributable to it.
pub fn complete_exchange(
    book: &mut ContractBook,
    agents: &mut [Agent],
    ledger: &mut Ledger,
    contract_id: u64,
    bearer: AgentId,
    units: u64,
    redemption: Delivery,
    tick: u64,
) -> Result<ExchangeContract, ExchangeError> {
    let Some(contract) = book.open.get(&contract_id) else {
        return Err(if contract_id < book.next_id {
            ExchangeError::DoubleCompletion(contract_id)
        } else {
            ExchangeError::NotOpen(contract_id)
        });
    };
    let class_id = contract.class.expect("open contracts are instrument-backed");
    let debtor = contract.first_receiver;
    if units == 0 || units > contract.outstanding || ledger.balance(bearer, class_id) < units {
        return Err(ExchangeError::WrongBearer);
    }
    let issuer = ledger.class(class_id)?.issuer.expect("contract classes have issuers");
    let d = agent_index(agents, debtor)?;
    let b = agent_index(agents, bearer)?;
    if d != b {
        move_goods(agents, d, b, redemption)?;
    } else if agents[d].inventory.qty(redemption.good) < redemption.qty {
        return Err(ExchangeError::GoodsUnavailable);
    }
    ledger.redeem_destroy(bearer, issuer, class_id, units)?;

    let contract = book.open.get_mut(&contract_id).expect("checked above");
    contract.outstanding -= units;
    if contract.outstanding > 0 {
        return Ok(contract.clone());
    }
    let mut done = book.open.remove(&contract_id).expect("checked above");
    done.state = ContractState::Completed;
    done.close_tick = Some(tick);
    if let Some(q) = book.by_class.get_mut(&class_id) {
        q.retain(|&id| id != contract_id);
        if q.is_empty() {
            book.by_class.remove(&class_id);
        }
    }
    agents[d].liabilities.retain(|&id| id != contract_id);
    book.close(done.clone());
    Ok(done)
}
