//! The tick pipeline.
//!
//! [`World::step`] runs a fixed phase order: production, regime events,
//! pairwise meetings, consumption, price update, marketability update and a
//! metrics snapshot. All randomness comes from one seeded stream owned by
//! the world, and every collection iterates in a fixed order, so a given
//! config and seed always produce the same event log.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

use crate::agents::{
    decide_action, spending_rank, subjective_value, Agent, AgentError, Candidate, ObjectiveValues,
    Role, SpendingContext,
};
use crate::exchange::{
    accept_decision, complete_exchange, settle_first_half, AcceptanceContext, ContractBook,
    CredibilityTable, Delivery, ExchangeError, MarketabilityTable, MediumChoice, TradeOutcome,
};
use crate::goods::Catalog;
use crate::instruments::{
    AgentId, ClassGroup, ClassId, GoodId, InstrumentClass, InstrumentKind, Ledger, LedgerError,
    LedgerEvent,
};
use crate::metrics::{distribution_shift, gini, price_index, Basket, GroupStats, MetricsFrame};
use crate::regimes::{
    fiat_collect_taxes, fiat_expand_credit, psi_deliver_project, psi_pay_government_service,
    psi_request_project, FiatRegime, FiatState, ProjectRegistry, PsiRegime, RegimeError, Settlement,
};
use crate::scenario::{ConfigError, RegimeKind, ScenarioConfig};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// `b × (1 + slope × (ratio − 1))`, clamped into (0, 1).
pub fn consumption_propensity(ratio: f64, base: f64, slope: f64) -> f64 {
    (base * (1.0 + slope * (ratio - 1.0))).clamp(1e-3, 0.999)
}

/// Draws `amount` from ranked holdings in order; `None` if they fall short.
fn take_payment(ranked: &[(u8, ClassId, u64)], amount: u64) -> Option<Vec<(ClassId, u64)>> {
    let mut payment = Vec::new();
    let mut due = amount;
    for &(_, class, bal) in ranked {
        if due == 0 {
            break;
        }
        let part = bal.min(due);
        payment.push((class, part));
        due -= part;
    }
    (due == 0).then_some(payment)
}

fn amount_for(qty: u64, price: f64) -> u64 {
    ((qty as f64 * price).round() as u64).max(1)
}

/// A project that passed its vote and is buying inputs until `due`.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingProject {
    pub spec: String,
    pub provider: AgentId,
    pub due: u64,
    /// IOU units issued so far for inputs.
    pub funded: u64,
    pub inputs: Vec<(GoodId, u64)>,
}

#[derive(Debug, Clone)]
pub struct PsiState {
    pub params: PsiRegime,
    pub registry: ProjectRegistry,
    /// Issuer-delegate and collector, when the government collects.
    pub government: Option<AgentId>,
    pub providers: Vec<AgentId>,
    pub pending: Vec<PendingProject>,
    proposed: u64,
}

#[derive(Debug, Clone)]
pub enum RegimeState {
    /// No agents, nothing to run.
    Idle,
    Barter,
    Fiat(FiatState),
    Psi(PsiState),
}

impl RegimeState {
    pub fn registry(&self) -> Option<&ProjectRegistry> {
        match self {
            RegimeState::Psi(p) => Some(&p.registry),
            _ => None,
        }
    }

    pub fn fiat(&self) -> Option<&FiatState> {
        match self {
            RegimeState::Fiat(f) => Some(f),
            _ => None,
        }
    }

    pub fn psi(&self) -> Option<&PsiState> {
        match self {
            RegimeState::Psi(p) => Some(p),
            _ => None,
        }
    }
}

fn acceptance_ctx<'a>(
    regime: &'a RegimeState,
    credibility: &'a CredibilityTable,
    marketability: &'a MarketabilityTable,
) -> AcceptanceContext<'a> {
    AcceptanceContext {
        legal_tender: regime.fiat().is_some_and(|f| f.params.legal_tender),
        registry: regime.registry(),
        credibility,
        marketability,
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    produced: u64,
    consumed: u64,
    expired: u64,
    consumption: f64,
    trades: u64,
    failed: u64,
    outcomes: Vec<TradeOutcome>,
}

/// What a buyer settles with in a meeting.
#[derive(Debug, Clone, PartialEq)]
enum Offer {
    Money { qty: u64, amount: u64 },
    Barter { qty: u64, counter: Delivery },
    Iou { qty: u64, amount: u64 },
}

/// Role per agent id for a config.
pub fn layout(config: &ScenarioConfig) -> Vec<Role> {
    let n = config.agents as usize;
    let mut roles = Vec::with_capacity(n);
    match config.regime {
        RegimeKind::Fiat => roles.extend([Role::CentralBank, Role::Bank, Role::Government]),
        RegimeKind::Psi => {
            if config.psi_params().government_collects {
                roles.push(Role::Government);
            }
            for _ in 0..config.roles.providers {
                roles.push(Role::PublicProvider);
            }
        }
        RegimeKind::BarterOnly => {}
    }
    roles.truncate(n);
    let share = config.roles.firm_share;
    let mut k = 0usize;
    while roles.len() < n {
        let firm = ((k + 1) as f64 * share).floor() > (k as f64 * share).floor();
        roles.push(if firm { Role::Firm } else { Role::Household });
        k += 1;
    }
    roles
}

#[derive(Debug, Clone)]
pub struct World {
    tick: u64,
    config: ScenarioConfig,
    catalog: Catalog,
    objective: ObjectiveValues,
    agents: Vec<Agent>,
    ledger: Ledger,
    regime: RegimeState,
    unit: ClassGroup,
    marketability: MarketabilityTable,
    credibility: CredibilityTable,
    contracts: ContractBook,
    prices: Vec<f64>,
    basket: Basket,
    rng: ChaCha8Rng,
    producers_of: Vec<Vec<usize>>,
    consumption_debt: Vec<f64>,
    anchor: Option<f64>,
    distortion: f64,
    budgets: Vec<u64>,
    /// Durable units each agent's budget could buy this tick, on top of
    /// its fixed want.
    extra_want: Vec<u64>,
    /// Per-agent currency marginal value, fixed at the start of meetings.
    liquidity: Vec<f64>,
    /// Seller-independent acceptance per class for the current tick:
    /// (society, accepted).
    accept_memo: Vec<Option<(u32, bool)>>,
    /// Scratch for `payable`.
    pay_buf: Vec<(u8, ClassId, u64)>,
    /// Groups with at least one class, over the first `groups_indexed` classes.
    groups_present: [bool; ClassGroup::ALL.len()],
    groups_indexed: usize,
    /// IOU classes per issuer, and how many ledger classes have been
    /// indexed so far.
    ious_by_issuer: Vec<Vec<ClassId>>,
    ious_indexed: usize,
    distribution: Vec<f64>,
    events_mark: usize,
    tally: Tally,
    script: Option<VecDeque<Vec<(AgentId, AgentId)>>>,
    frame: MetricsFrame,
}

impl World {
    pub fn new(config: &ScenarioConfig) -> Result<World, WorldError> {
        config.validate()?;
        let catalog = config.catalog();
        let goods = catalog.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let noise = LogNormal::new(0.0, config.noise_sigma)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let roles = layout(config);
        let mut agents = Vec::with_capacity(roles.len());
        let mut producer_rank = 0usize;
        for (i, role) in roles.iter().enumerate() {
            let mut a = Agent::new(AgentId(i as u32), *role, goods);
            a.acceptance_threshold = config.thresholds.acceptance;
            a.valuation_noise = (0..goods).map(|_| noise.sample(&mut rng)).collect();
            a.time_preference = rng.random_range(0.85..=1.0);
            if role.produces() && goods > 0 {
                a.specialty = Some(GoodId((producer_rank % goods) as u32));
                producer_rank += 1;
            }
            agents.push(a);
        }

        let objective = ObjectiveValues::from_catalog(&catalog);
        let prices: Vec<f64> = catalog
            .goods()
            .iter()
            .map(|g| (g.base_utility * config.market.price_scale).max(config.market.min_price))
            .collect();
        let basket = Basket {
            quantities: vec![1.0; goods],
            base_prices: prices.clone(),
        };
        let mut ledger = Ledger::new(agents.len() as u32, catalog.ids());
        let market = &config.market;

        // Endowment: producers hold a target stock of their own good, and
        // everyone holds half the wanted level of each other durable.
        for a in agents.iter_mut() {
            if a.role == Role::CentralBank {
                continue;
            }
            for (g, good) in catalog.goods().iter().enumerate() {
                let id = GoodId(g as u32);
                if a.specialty == Some(id) {
                    a.inventory.add(id, market.stock_target, 0);
                } else if good.durable {
                    a.inventory.add(id, market.want_level / 2, 0);
                }
            }
        }

        let regime = if agents.is_empty() {
            RegimeState::Idle
        } else {
            match config.regime {
                RegimeKind::BarterOnly => RegimeState::Barter,
                RegimeKind::Fiat => RegimeState::Fiat(Self::fiat_setup(
                    config.fiat_params(),
                    &agents,
                    &mut ledger,
                )?),
                RegimeKind::Psi => {
                    let params = config.psi_params();
                    let government = agents.iter().find(|a| a.role == Role::Government).map(|a| a.id);
                    let mut providers: Vec<AgentId> = agents
                        .iter()
                        .filter(|a| a.role == Role::PublicProvider)
                        .map(|a| a.id)
                        .collect();
                    if providers.is_empty() {
                        providers = agents.iter().filter(|a| a.specialty.is_some()).map(|a| a.id).collect();
                    }
                    RegimeState::Psi(PsiState {
                        params,
                        registry: ProjectRegistry::default(),
                        government,
                        providers,
                        pending: Vec::new(),
                        proposed: 0,
                    })
                }
            }
        };
        let unit = match config.regime {
            RegimeKind::Fiat => ClassGroup::Fiat,
            RegimeKind::Psi => ClassGroup::Psi,
            RegimeKind::BarterOnly => ClassGroup::Commodity,
        };

        let n = agents.len();
        let mut world = World {
            tick: 0,
            config: config.clone(),
            marketability: MarketabilityTable::new(
                goods,
                market.marketability_rate,
                market.marketability_baseline,
            ),
            catalog,
            objective,
            agents,
            ledger,
            regime,
            unit,
            credibility: CredibilityTable::default(),
            contracts: ContractBook::new(),
            prices,
            basket,
            rng,
            producers_of: Vec::new(),
            consumption_debt: vec![0.0; n * goods],
            anchor: None,
            distortion: 1.0,
            budgets: vec![0; n],
            extra_want: vec![0; n],
            liquidity: vec![1.0; n],
            accept_memo: Vec::new(),
            pay_buf: Vec::new(),
            groups_present: [false; ClassGroup::ALL.len()],
            groups_indexed: 0,
            ious_by_issuer: vec![Vec::new(); n],
            ious_indexed: 0,
            distribution: Vec::new(),
            events_mark: 0,
            tally: Tally::default(),
            script: None,
            frame: MetricsFrame::empty(0),
        };
        world.index_producers();
        if let RegimeState::Psi(psi) = &world.regime {
            let p = psi.params.clone();
            for _ in 0..p.initial_projects {
                world.propose_project(&p)?;
            }
            if let RegimeState::Psi(psi) = &mut world.regime {
                for project in psi.pending.iter_mut() {
                    project.due = 0;
                }
            }
            world.advance_projects(&p)?;
        }
        world.frame = world.snapshot();
        world.events_mark = world.ledger.events().len();
        Ok(world)
    }

    fn fiat_setup(params: FiatRegime, agents: &[Agent], ledger: &mut Ledger) -> Result<FiatState, WorldError> {
        let find = |role| agents.iter().find(|a| a.role == role).map(|a| a.id).expect("fiat layout");
        let central_bank = find(Role::CentralBank);
        let bank = find(Role::Bank);
        let government = find(Role::Government);
        let note_class = ledger.register_class(&InstrumentClass::fiat_note(central_bank))?;
        let credit_class = ledger.register_class(&InstrumentClass::fiat_credit(bank))?;
        let mut notes = 0u64;
        if params.initial_money > 0 {
            for a in agents.iter().filter(|a| a.id != central_bank) {
                ledger.issue_units(note_class, a.id, params.initial_money)?;
                notes += params.initial_money;
            }
        }
        let access_order = if params.access_order.is_empty() {
            let mut order = vec![bank, government];
            order.extend(agents.iter().filter(|a| a.specialty.is_some()).map(|a| a.id));
            order
        } else {
            params.access_order.clone()
        };
        Ok(FiatState {
            reserves: params.reserve_fraction * notes as f64,
            params,
            central_bank,
            bank,
            government,
            note_class,
            credit_class,
            loans: Vec::new(),
            access_order,
        })
    }

    fn index_producers(&mut self) {
        let mut by_good = vec![Vec::new(); self.catalog.len()];
        for (i, a) in self.agents.iter().enumerate() {
            if let Some(g) = a.specialty {
                by_good[g.index()].push(i);
            }
        }
        self.producers_of = by_good;
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn objective(&self) -> &ObjectiveValues {
        &self.objective
    }

    pub fn regime(&self) -> &RegimeState {
        &self.regime
    }

    pub fn contracts(&self) -> &ContractBook {
        &self.contracts
    }

    pub fn credibility(&self) -> &CredibilityTable {
        &self.credibility
    }

    pub fn marketability(&self) -> &MarketabilityTable {
        &self.marketability
    }

    /// Posted prices per good in the world's unit of account.
    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// The class group that serves as unit of account.
    pub fn unit(&self) -> ClassGroup {
        self.unit
    }

    /// Latest metrics snapshot.
    pub fn frame(&self) -> &MetricsFrame {
        &self.frame
    }

    /// Laspeyres index of posted prices against tick 0.
    pub fn price_index(&self) -> f64 {
        price_index(Some(&self.basket), &self.prices).unwrap_or(1.0)
    }

    pub fn basket_cost(&self) -> f64 {
        self.basket.cost(&self.prices)
    }

    /// Meetings to use instead of random matching, one list per tick. Ticks
    /// past the end of the script have no meetings.
    pub fn script_meetings(&mut self, script: Vec<Vec<(AgentId, AgentId)>>) {
        self.script = Some(script.into());
    }

    /// Ledger events not yet taken.
    pub fn take_events(&mut self) -> Vec<LedgerEvent> {
        self.events_mark = 0;
        self.ledger.take_events()
    }

    /// Meetings skipped because a settlement step failed.
    pub fn failed_meetings(&self) -> u64 {
        self.tally.failed
    }

    /// Numéraire value of unexpired goods held by everyone.
    pub fn real_savings(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| self.objective.bundle_value(&a.inventory.bundle()))
            .sum()
    }

    /// Currency units of `agent`'s own-unit holdings, excluding its own
    /// issues.
    pub fn currency_holdings(&self, agent: AgentId) -> u64 {
        self.ledger
            .wallet(agent)
            .filter(|(c, _)| {
                let class = &self.ledger.class(*c).expect("wallet classes exist");
                class.issuer != Some(agent)
                    && class.kind != InstrumentKind::CommodityMoney
                    && class.kind != InstrumentKind::Invoice
            })
            .map(|(_, b)| b)
            .sum()
    }

    /// Currency holdings deflated by the price index.
    pub fn perceived_savings(&self, agent: AgentId) -> f64 {
        self.currency_holdings(agent) as f64 / self.price_index()
    }

    /// Baskets `agent` could buy with its currency holdings.
    pub fn affordability(&self, agent: AgentId) -> f64 {
        let cost = self.basket_cost();
        if cost > 0.0 {
            self.currency_holdings(agent) as f64 / cost
        } else {
            0.0
        }
    }

    /// Current consumption propensity, the same for every agent.
    pub fn propensity(&self) -> f64 {
        let t = &self.config.thresholds;
        consumption_propensity(self.distortion, t.propensity_base, t.propensity_slope)
    }

    fn spending_ctx(&self) -> SpendingContext {
        SpendingContext {
            fiat_taxation: self.regime.fiat().is_some_and(|f| f.params.tax_rate > 0.0),
        }
    }

    /// Advances one tick and returns the new frame.
    pub fn step(&mut self) -> Result<&MetricsFrame, WorldError> {
        self.tick += 1;
        self.ledger.set_tick(self.tick);
        self.accept_memo.clear();
        self.tally = Tally {
            failed: self.tally.failed,
            ..Tally::default()
        };
        if self.agents.is_empty() {
            self.frame = MetricsFrame::empty(self.tick);
            return Ok(&self.frame);
        }
        self.produce();
        self.regime_events()?;
        self.meetings()?;
        if let RegimeState::Psi(psi) = &self.regime {
            let p = psi.params.clone();
            if p.service_demand_rate > 0.0 {
                self.service_demand(&p)?;
            }
        }
        self.consume();
        self.update_prices();
        self.update_marketability()?;
        self.frame = self.snapshot();
        self.events_mark = self.ledger.events().len();
        Ok(&self.frame)
    }

    fn produce(&mut self) {
        let m = &self.config.market;
        for a in self.agents.iter_mut() {
            let Some(g) = a.specialty else { continue };
            let rate = if a.role == Role::Firm { m.firm_rate } else { m.production_rate };
            let room = m.stock_cap.saturating_sub(a.inventory.qty(g));
            let made = rate.min(room);
            if made > 0 {
                a.inventory.add(g, made, self.tick);
                self.tally.produced += made;
            }
        }
    }

    fn regime_events(&mut self) -> Result<(), WorldError> {
        match self.regime {
            RegimeState::Fiat(_) => self.fiat_events()?,
            RegimeState::Psi(_) => self.psi_events()?,
            _ => {}
        }
        if self.config.reshuffle_at.contains(&self.tick) {
            let producers: Vec<usize> = (0..self.agents.len())
                .filter(|&i| self.agents[i].specialty.is_some())
                .collect();
            let mut specialties: Vec<Option<GoodId>> =
                producers.iter().map(|&i| self.agents[i].specialty).collect();
            specialties.shuffle(&mut self.rng);
            for (&i, s) in producers.iter().zip(specialties) {
                self.agents[i].specialty = s;
            }
            self.index_producers();
        }
        Ok(())
    }

    fn pay_fiat(&mut self, from: AgentId, to: AgentId, due: u64) -> Result<u64, WorldError> {
        let Some(f) = self.regime.fiat() else { return Ok(0) };
        let mut left = due;
        for class in [f.note_class, f.credit_class] {
            let take = self.ledger.balance(from, class).min(left);
            if take > 0 {
                self.ledger.transfer(from, to, class, take)?;
                left -= take;
            }
        }
        Ok(due - left)
    }

    fn fiat_events(&mut self) -> Result<(), WorldError> {
        let RegimeState::Fiat(state) = &mut self.regime else { return Ok(()) };
        let bank = state.bank;
        let mut interest = Vec::new();
        for (i, loan) in state.loans.iter_mut().enumerate() {
            if loan.borrower == bank {
                continue;
            }
            loan.accrued += loan.principal as f64 * loan.rate;
            if loan.accrued >= 1.0 {
                interest.push((i, loan.borrower, loan.accrued.floor() as u64));
            }
        }
        let mut fraction = 0.0;
        if let Some(e) = &state.params.expansion {
            if e.fires_at(self.tick) {
                fraction += e.fraction;
            }
        }
        fraction += state
            .params
            .shocks
            .iter()
            .filter(|s| s.tick == self.tick)
            .map(|s| s.fraction)
            .sum::<f64>();

        for (i, borrower, due) in interest {
            let paid = self.pay_fiat(borrower, bank, due)?;
            if let RegimeState::Fiat(state) = &mut self.regime {
                state.loans[i].accrued -= paid as f64;
            }
        }

        let (spend, government) = match &self.regime {
            RegimeState::Fiat(f) => (f.params.government_spend, f.government),
            _ => return Ok(()),
        };
        let budget = (spend * self.currency_holdings(government) as f64).floor() as u64;
        self.procure(government.index(), budget)?;

        let RegimeState::Fiat(state) = &mut self.regime else { return Ok(()) };
        if fraction <= 0.0 || state.access_order.is_empty() {
            return Ok(());
        }
        let amount = (fraction * state.fiat_outstanding(&self.ledger) as f64).round() as u64;
        let decay = state.params.access_decay;
        let weights: Vec<f64> = (0..state.access_order.len()).map(|r| decay.powi(r as i32)).collect();
        let total: f64 = weights.iter().sum();
        let mut shares: Vec<u64> = weights
            .iter()
            .map(|w| (amount as f64 * w / total).floor() as u64)
            .collect();
        shares[0] += amount - shares.iter().sum::<u64>();
        let order = state.access_order.clone();
        for (borrower, share) in order.into_iter().zip(shares) {
            if share == 0 {
                continue;
            }
            if state.params.accommodate && state.headroom(&self.ledger) < share {
                let after = state.fiat_outstanding(&self.ledger) + share;
                state.reserves = (after as f64 + 0.5) / state.params.reserve_ratio_max;
            }
            match fiat_expand_credit(state, &mut self.ledger, borrower, share) {
                Ok(_) | Err(RegimeError::ReserveLimitExceeded { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    /// `buyer` spends up to `budget` on producers' stock at posted prices,
    /// starting from a random producer.
    fn procure(&mut self, buyer: usize, budget: u64) -> Result<(), WorldError> {
        let sellers: Vec<usize> = (0..self.agents.len())
            .filter(|&s| s != buyer && self.agents[s].specialty.is_some())
            .collect();
        if sellers.is_empty() || budget == 0 {
            return Ok(());
        }
        let start = self.rng.random_range(0..sellers.len());
        let mut left = budget;
        for k in 0..sellers.len() {
            let s = sellers[(start + k) % sellers.len()];
            let good = self.agents[s].specialty.expect("sellers have a specialty");
            let price = self.prices[good.index()];
            let stock = self.agents[s].inventory.qty(good);
            let qty = stock
                .min(self.config.market.max_per_meeting)
                .min((left as f64 / price).floor() as u64);
            if qty == 0 {
                continue;
            }
            let amount = amount_for(qty, price);
            let payable = self.payable(buyer, s);
            let payment = take_payment(&payable, amount);
            self.pay_buf = payable;
            let Some(payment) = payment else {
                break;
            };
            let ctx = acceptance_ctx(&self.regime, &self.credibility, &self.marketability);
            settle_first_half(
                &mut self.contracts,
                &mut self.agents,
                &mut self.ledger,
                &ctx,
                AgentId(s as u32),
                AgentId(buyer as u32),
                Delivery::new(good, qty),
                MediumChoice::Money { payment },
                self.tick,
            )?;
            self.tally.trades += 1;
            left -= amount.min(left);
            if left == 0 {
                break;
            }
        }
        Ok(())
    }

    fn psi_events(&mut self) -> Result<(), WorldError> {
        let RegimeState::Psi(psi) = &self.regime else { return Ok(()) };
        let p = psi.params.clone();
        if p.project_interval > 0
            && self.tick % p.project_interval == 0
            && p.project_stop.is_none_or(|s| self.tick <= s)
        {
            self.propose_project(&p)?;
        }
        self.advance_projects(&p)?;
        Ok(())
    }

    /// Input purchases for every pending project, then deliveries that are
    /// due.
    fn advance_projects(&mut self, p: &PsiRegime) -> Result<(), WorldError> {
        let pending = match &self.regime {
            RegimeState::Psi(psi) => psi.pending.len(),
            _ => 0,
        };
        for i in 0..pending {
            self.buy_project_inputs(i, p)?;
        }
        loop {
            let due = match &mut self.regime {
                RegimeState::Psi(psi) => psi
                    .pending
                    .iter()
                    .position(|d| d.due <= self.tick)
                    .map(|i| psi.pending.remove(i)),
                _ => None,
            };
            let Some(project) = due else { break };
            self.deliver(project)?;
        }
        Ok(())
    }

    fn propose_project(&mut self, p: &PsiRegime) -> Result<(), WorldError> {
        let RegimeState::Psi(psi) = &mut self.regime else { return Ok(()) };
        if psi.providers.is_empty() {
            return Ok(());
        }
        let provider = psi.providers[(psi.proposed as usize) % psi.providers.len()];
        let spec = format!("project-{}", psi.proposed);
        psi.proposed += 1;
        let Some(good) = self.agents[provider.index()].specialty else { return Ok(()) };
        let voters: Vec<&Agent> = self.agents.iter().filter(|a| a.society == 0).collect();
        let share = p.project_value as f64 / voters.len().max(1) as f64;
        let mut yes = 0u32;
        for a in &voters {
            let own_view = a.valuation_noise[good.index()];
            let vote = [Candidate::new((), p.benefit_ratio * share * own_view, share)];
            if decide_action(&vote).is_some() {
                yes += 1;
            }
        }
        match psi_request_project(
            &mut psi.registry,
            0,
            &spec,
            p.project_value,
            yes,
            voters.len() as u32,
            p.vote_threshold,
            self.tick,
        ) {
            Ok(_) => {
                psi.pending.push(PendingProject {
                    spec,
                    provider,
                    due: self.tick + p.delivery_lag,
                    funded: 0,
                    inputs: Vec::new(),
                });
                Ok(())
            }
            Err(RegimeError::VoteFailed { .. }) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    /// Buys a share of the remaining inputs from durable-good producers,
    /// paying with the provider's IOUs.
    fn buy_project_inputs(&mut self, i: usize, p: &PsiRegime) -> Result<(), WorldError> {
        let RegimeState::Psi(psi) = &self.regime else { return Ok(()) };
        let project = psi.pending[i].clone();
        let remaining = p.project_value.saturating_sub(project.funded);
        if remaining == 0 || project.due < self.tick {
            return Ok(());
        }
        let ticks_left = project.due - self.tick + 1;
        let target = remaining.div_ceil(ticks_left);
        let provider = project.provider;
        let suppliers: Vec<usize> = (0..self.agents.len())
            .filter(|&s| {
                s != provider.index()
                    && self.agents[s]
                        .specialty
                        .is_some_and(|g| self.catalog.get(g).is_some_and(|g| g.durable))
            })
            .collect();
        if suppliers.is_empty() {
            return Ok(());
        }
        let start = self.rng.random_range(0..suppliers.len());
        let mut spent = 0u64;
        let mut inputs = Vec::new();
        for k in 0..suppliers.len() {
            if spent >= target {
                break;
            }
            let s = suppliers[(start + k) % suppliers.len()];
            let good = self.agents[s].specialty.expect("suppliers have a specialty");
            let price = self.prices[good.index()];
            let stock = self.agents[s].inventory.qty(good);
            let qty = stock
                .min(self.config.market.max_per_meeting)
                .min(((target - spent) as f64 / price).ceil() as u64);
            if qty == 0 {
                continue;
            }
            let amount = amount_for(qty, price).min(remaining - spent);
            let ctx = acceptance_ctx(&self.regime, &self.credibility, &self.marketability);
            let settled = settle_first_half(
                &mut self.contracts,
                &mut self.agents,
                &mut self.ledger,
                &ctx,
                AgentId(s as u32),
                provider,
                Delivery::new(good, qty),
                MediumChoice::Iou { amount },
                self.tick,
            );
            match settled {
                Ok(_) => {
                    spent += amount;
                    inputs.push((good, qty));
                    self.tally.trades += 1;
                }
                Err(ExchangeError::MediumRejected(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        if let RegimeState::Psi(psi) = &mut self.regime {
            psi.pending[i].funded += spent;
            psi.pending[i].inputs.extend(inputs);
        }
        Ok(())
    }

    fn deliver(&mut self, project: PendingProject) -> Result<(), WorldError> {
        let provider = project.provider;
        let pi = provider.index();
        for &(good, qty) in &project.inputs {
            let used = self.agents[pi].inventory.take(good, qty);
            self.tally.consumed += used.iter().map(|(_, q)| q).sum::<u64>();
        }
        let RegimeState::Psi(psi) = &mut self.regime else { return Ok(()) };
        let issuer = psi.government.unwrap_or(provider);
        let psi_class = psi_deliver_project(&mut psi.registry, &mut self.ledger, provider, issuer, &project.spec)?;

        // The provider settles every IOU it has outstanding in PSIs.
        self.index_ious();
        // Fully retired classes stay retired; drop them from the index.
        let ledger = &self.ledger;
        self.ious_by_issuer[pi].retain(|&c| ledger.outstanding(c).unwrap_or(0) > 0);
        let iou_classes = self.ious_by_issuer[pi].clone();
        let mut settled_any = false;
        for class in iou_classes {
            for h in 0..self.agents.len() {
                let holder = AgentId(h as u32);
                let held = self.ledger.balance(holder, class);
                let pay = held.min(self.ledger.balance(provider, psi_class));
                if pay == 0 || holder == provider {
                    continue;
                }
                self.ledger.transfer(provider, holder, psi_class, pay)?;
                self.retire_iou(class, holder, pay, Delivery::new(GoodId(0), 0))?;
                settled_any = true;
            }
        }
        if settled_any {
            self.credibility.honored(provider);
        }
        Ok(())
    }

    /// Completes open contracts of `class` oldest first with `units`
    /// presented by `bearer`. Goods, if any, travel with the first contract.
    fn retire_iou(&mut self, class: ClassId, bearer: AgentId, units: u64, goods: Delivery) -> Result<(), WorldError> {
        let mut left = units;
        let mut delivery = goods;
        while left > 0 {
            let Some(id) = self.contracts.oldest_open(class) else { break };
            let open = self.contracts.get(id).expect("oldest open exists").outstanding;
            let part = left.min(open);
            complete_exchange(
                &mut self.contracts,
                &mut self.agents,
                &mut self.ledger,
                id,
                bearer,
                part,
                delivery,
                self.tick,
            )?;
            delivery.qty = 0;
            left -= part;
        }
        Ok(())
    }

    fn service_demand(&mut self, p: &PsiRegime) -> Result<(), WorldError> {
        let government = self.regime.psi().and_then(|s| s.government);
        let scale = self.config.market.price_scale;
        let price = ((p.service_value * scale * self.price_index()).round() as u64).max(1);
        for i in 0..self.agents.len() {
            let fired = self.rng.random_bool(p.service_demand_rate);
            let id = AgentId(i as u32);
            if !fired || Some(id) == government {
                continue;
            }
            let held: Vec<(ClassId, u64)> = self
                .ledger
                .wallet(id)
                .filter(|(c, _)| {
                    let class = self.ledger.class(*c).expect("wallet classes exist");
                    class.kind == InstrumentKind::Psi && class.issuer != Some(id)
                })
                .collect();
            let total: u64 = held.iter().map(|(_, b)| b).sum();
            // Whatever is left of the tick's budget goes on services.
            let units = (self.budgets[i].min(total) / price).max(1);
            let cost = units * price;
            if total < cost {
                continue;
            }
            self.budgets[i] = self.budgets[i].saturating_sub(cost);
            let mut left = cost;
            for (class, bal) in held {
                let part = bal.min(left);
                psi_pay_government_service(&mut self.ledger, id, class, part, fired)?;
                left -= part;
                if left == 0 {
                    break;
                }
            }
        }
        Ok(())
    }

    fn want(&self, agent: usize, good: GoodId) -> u64 {
        let a = &self.agents[agent];
        if a.specialty == Some(good) || a.role == Role::CentralBank {
            return 0;
        }
        let m = &self.config.market;
        let level = match self.catalog.get(good) {
            Some(g) if g.durable => m.want_level + self.extra_want[agent],
            Some(_) => m.perishable_need,
            None => 0,
        };
        level.saturating_sub(a.inventory.qty(good))
    }

    /// Units of `good` the agent can part with without cutting into its
    /// own wants.
    fn spare(&self, agent: usize, good: GoodId) -> u64 {
        let a = &self.agents[agent];
        let held = a.inventory.qty(good);
        if a.specialty == Some(good) {
            return held;
        }
        match self.catalog.get(good) {
            Some(g) if g.durable => held.saturating_sub(self.config.market.want_level),
            _ => 0,
        }
    }

    fn meetings(&mut self) -> Result<(), WorldError> {
        let spend = self.config.market.spend_share * self.propensity() / self.config.thresholds.propensity_base;
        for i in 0..self.agents.len() {
            let held = self.currency_holdings(AgentId(i as u32));
            self.budgets[i] = (spend.min(1.0) * held as f64).floor() as u64;
            self.liquidity[i] = self.liquidity_of(i);
        }
        self.accept_memo.clear();
        let durable: Vec<f64> = self
            .catalog
            .goods()
            .iter()
            .zip(&self.prices)
            .filter(|(g, _)| g.durable)
            .map(|(_, p)| *p)
            .collect();
        if !durable.is_empty() {
            let mean = durable.iter().sum::<f64>() / durable.len() as f64;
            for i in 0..self.agents.len() {
                self.extra_want[i] = (self.budgets[i] as f64 / mean).floor() as u64;
            }
        }
        let pairs: Vec<(usize, usize)> = match &mut self.script {
            Some(script) => script
                .pop_front()
                .unwrap_or_default()
                .into_iter()
                .map(|(a, b)| (a.index(), b.index()))
                .collect(),
            None => {
                let mut pairs = Vec::new();
                let mut order: Vec<usize> = (0..self.agents.len()).collect();
                let m = self
                    .config
                    .market
                    .meetings
                    .map_or(order.len() / 2, |m| (m as usize).min(order.len() / 2));
                for _ in 0..self.config.market.rounds {
                    order.shuffle(&mut self.rng);
                    for k in 0..m {
                        let (a, b) = (order[2 * k], order[2 * k + 1]);
                        pairs.push(if self.rng.random_bool(0.5) { (a, b) } else { (b, a) });
                    }
                }
                pairs
            }
        };
        for (a, b) in pairs {
            if a >= self.agents.len() || b >= self.agents.len() || a == b {
                continue;
            }
            self.meet(a, b)?;
        }
        Ok(())
    }

    /// `a` buys from `b`, then `b` from `a`, then each presents the other's
    /// IOUs. A failing settlement skips the rest of the meeting.
    fn meet(&mut self, a: usize, b: usize) -> Result<(), WorldError> {
        let steps = [
            (a, b, false),
            (b, a, false),
            (a, b, true),
            (b, a, true),
        ];
        for (x, y, redeem) in steps {
            let r = if redeem { self.redeem(x, y) } else { self.trade(x, y) };
            match r {
                Ok(()) => {}
                Err(WorldError::Exchange(_) | WorldError::Ledger(_)) => {
                    self.tally.failed += 1;
                    return Ok(());
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// The buyer's holdings the seller accepts, in spending order.
    /// Marginal value of a currency unit relative to its purchasing power:
    /// 1 up to the target real balance, falling as `target / balance` past
    /// it.
    fn liquidity_of(&self, agent: usize) -> f64 {
        let mean = self.prices.iter().sum::<f64>() / self.prices.len().max(1) as f64;
        let held = self.currency_holdings(AgentId(agent as u32)) as f64;
        let balance = held / mean.max(f64::MIN_POSITIVE);
        let target = self.config.market.liquidity_target;
        if balance <= target {
            1.0
        } else {
            target / balance
        }
    }

    /// Classes `buyer` can pay `seller` with, as `(rank, class, balance)` in
    /// spending order. The returned buffer should be handed back through
    /// `self.pay_buf` to keep its allocation.
    fn payable(&mut self, buyer: usize, seller: usize) -> Vec<(u8, ClassId, u64)> {
        let (bid, sid) = (AgentId(buyer as u32), AgentId(seller as u32));
        let society = self.agents[seller].society;
        let legal_tender = self.regime.fiat().is_some_and(|f| f.params.legal_tender);
        let sctx = self.spending_ctx();
        if self.accept_memo.len() < self.ledger.class_count() {
            self.accept_memo.resize(self.ledger.class_count(), None);
        }
        let ctx = acceptance_ctx(&self.regime, &self.credibility, &self.marketability);
        let mut ranked = std::mem::take(&mut self.pay_buf);
        ranked.clear();
        for (id, bal) in self.ledger.wallet(bid) {
            let class = self.ledger.class(id).expect("wallet classes exist");
            if class.issuer == Some(sid) || class.issuer == Some(bid) || class.kind == InstrumentKind::CommodityMoney {
                continue;
            }
            // PSI acceptance depends only on the seller's society, legal
            // tender on nothing about the seller.
            let memoizable = class.kind == InstrumentKind::Psi || (class.kind.is_fiat() && legal_tender);
            let accepted = match self.accept_memo[id.index()] {
                Some((s, ok)) if memoizable && s == society => ok,
                _ => {
                    let ok = accept_decision(&self.agents[seller], class, &ctx).accepted;
                    if memoizable {
                        self.accept_memo[id.index()] = Some((society, ok));
                    }
                    ok
                }
            };
            if accepted {
                ranked.push((spending_rank(class.kind, sctx), id, bal));
            }
        }
        // Wallets iterate in class order, so a stable sort on rank suffices.
        ranked.sort_by_key(|&(r, _, _)| r);
        ranked
    }

    fn trade(&mut self, buyer: usize, seller: usize) -> Result<(), WorldError> {
        // Banks hold their earnings rather than buying goods.
        if matches!(self.agents[buyer].role, Role::Bank | Role::CentralBank) {
            return Ok(());
        }
        let Some(good) = self.agents[seller].specialty else { return Ok(()) };
        let stock = self.agents[seller].inventory.qty(good);
        let max_qty = stock.min(self.want(buyer, good)).min(self.config.market.max_per_meeting);
        if max_qty == 0 {
            return Ok(());
        }
        let price = self.prices[good.index()];
        let index = self.price_index();
        // Currency units per numéraire unit at current prices.
        let unit_value = index * self.config.market.price_scale;
        let mut values = Vec::with_capacity(max_qty as usize);
        for q in 1..=max_qty {
            values.push(subjective_value(&self.agents[buyer], &[(good, q)], &self.objective)?);
        }

        let payable = self.payable(buyer, seller);
        let wallet: u64 = payable.iter().map(|&(_, _, b)| b).sum();
        let spendable = wallet.min(self.budgets[buyer]);
        let liquidity = self.liquidity[buyer];
        let mut candidates = Vec::new();
        for q in 1..=max_qty {
            let amount = amount_for(q, price);
            if amount > spendable {
                break;
            }
            candidates.push(Candidate::new(
                Offer::Money { qty: q, amount },
                values[q as usize - 1],
                amount as f64 / unit_value * liquidity,
            ));
        }
        if candidates.is_empty() && self.regime_is_barter() {
            self.barter_candidates(buyer, seller, good, max_qty, &values, &mut candidates)?;
        }
        if candidates.is_empty() && self.config.iou.enabled && wallet < amount_for(1, price) {
            self.iou_candidates(buyer, seller, max_qty, price, unit_value, &values, &mut candidates)?;
        }
        let Some(choice) = decide_action(&candidates).map(|c| c.action.clone()) else {
            self.pay_buf = payable;
            return Ok(());
        };

        let (bid, sid) = (AgentId(buyer as u32), AgentId(seller as u32));
        let ctx = acceptance_ctx(&self.regime, &self.credibility, &self.marketability);
        let (qty, medium, value) = match choice {
            Offer::Money { qty, amount } => {
                let payment = take_payment(&payable, amount).expect("amount is within the wallet");
                (qty, MediumChoice::Money { payment }, amount)
            }
            Offer::Barter { qty, counter } => (qty, MediumChoice::Barter { counter }, amount_for(qty, price)),
            Offer::Iou { qty, amount } => (qty, MediumChoice::Iou { amount }, amount),
        };
        self.pay_buf = payable;
        settle_first_half(
            &mut self.contracts,
            &mut self.agents,
            &mut self.ledger,
            &ctx,
            sid,
            bid,
            Delivery::new(good, qty),
            medium.clone(),
            self.tick,
        )?;
        self.tally.trades += 1;
        if let MediumChoice::Money { .. } = medium {
            self.budgets[buyer] -= value;
        }
        self.tax(seller, value, &medium)
    }

    fn regime_is_barter(&self) -> bool {
        matches!(self.regime, RegimeState::Barter)
    }

    fn barter_candidates(
        &mut self,
        buyer: usize,
        seller: usize,
        good: GoodId,
        max_qty: u64,
        values: &[f64],
        out: &mut Vec<Candidate<Offer>>,
    ) -> Result<(), WorldError> {
        // Offer the most marketable good the buyer can spare.
        let mut offers: Vec<(GoodId, u64)> = self
            .catalog
            .ids()
            .filter(|&h| h != good)
            .map(|h| (h, self.spare(buyer, h)))
            .filter(|&(_, q)| q > 0)
            .collect();
        offers.sort_by(|x, y| {
            let mx = self.marketability.score(x.0).unwrap_or(0.0);
            let my = self.marketability.score(y.0).unwrap_or(0.0);
            my.total_cmp(&mx).then(x.0.cmp(&y.0))
        });
        let Some(&(h, spare)) = offers.first() else { return Ok(()) };
        let direct = self.want(seller, h) > 0;
        let accepted = direct || {
            let threshold = self.agents[seller].acceptance_threshold;
            let learned = self.marketability.score(h).unwrap_or(0.0) >= threshold;
            let salability = self.catalog.get(h).map_or(0.0, |g| g.salability);
            learned || self.rng.random_bool(salability)
        };
        self.tally.outcomes.push(if accepted {
            TradeOutcome::Accepted(h)
        } else {
            TradeOutcome::Refused(h)
        });
        if !accepted {
            return Ok(());
        }
        let ratio = self.prices[good.index()] / self.prices[h.index()];
        for q in 1..=max_qty {
            let counter_qty = ((q as f64 * ratio).ceil() as u64).max(1);
            if counter_qty > spare {
                break;
            }
            let cost = subjective_value(&self.agents[buyer], &[(h, counter_qty)], &self.objective)?;
            out.push(Candidate::new(
                Offer::Barter {
                    qty: q,
                    counter: Delivery::new(h, counter_qty),
                },
                values[q as usize - 1],
                cost,
            ));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn iou_candidates(
        &self,
        buyer: usize,
        seller: usize,
        max_qty: u64,
        price: f64,
        unit_value: f64,
        values: &[f64],
        out: &mut Vec<Candidate<Offer>>,
    ) -> Result<(), WorldError> {
        let b = &self.agents[buyer];
        let Some(backing) = b.specialty else { return Ok(()) };
        let class = InstrumentClass::iou(b.id, backing);
        let ctx = acceptance_ctx(&self.regime, &self.credibility, &self.marketability);
        if !accept_decision(&self.agents[seller], &class, &ctx).accepted {
            return Ok(());
        }
        let owed: u64 = self
            .ledger
            .classes()
            .filter(|(_, c)| c.kind == InstrumentKind::Iou && c.issuer == Some(b.id))
            .map(|(id, _)| self.ledger.outstanding(id).unwrap_or(0))
            .sum();
        let room = self.config.iou.credit_limit.saturating_sub(owed);
        for q in 1..=max_qty {
            let amount = amount_for(q, price);
            if amount > room {
                break;
            }
            out.push(Candidate::new(
                Offer::Iou { qty: q, amount },
                values[q as usize - 1],
                amount as f64 / unit_value * b.time_preference,
            ));
        }
        Ok(())
    }

    fn tax(&mut self, seller: usize, value: u64, medium: &MediumChoice) -> Result<(), WorldError> {
        let Some(f) = self.regime.fiat() else { return Ok(()) };
        let government = f.government;
        let sid = AgentId(seller as u32);
        if sid == government || f.params.tax_rate <= 0.0 {
            return Ok(());
        }
        let settlement = match medium {
            MediumChoice::Barter { counter } => Settlement::NonFiat {
                good: counter.good,
                price: self.prices[counter.good.index()],
            },
            _ => Settlement::Fiat,
        };
        let assessment = fiat_collect_taxes(value, f.params.tax_rate, settlement);
        match assessment.converted {
            Some(d) => {
                let lots = self.agents[seller].inventory.take(d.good, d.qty);
                self.agents[government.index()].inventory.put_lots(d.good, &lots);
            }
            None => {
                self.pay_fiat(sid, government, assessment.due)?;
            }
        }
        Ok(())
    }

    fn index_ious(&mut self) {
        let count = self.ledger.class_count();
        for (id, class) in self.ledger.classes().skip(self.ious_indexed) {
            if let (InstrumentKind::Iou, Some(issuer)) = (class.kind, class.issuer) {
                self.ious_by_issuer[issuer.index()].push(id);
            }
        }
        self.ious_indexed = count;
    }

    /// `holder` presents IOUs issued by `issuer` for the issuer's good.
    fn redeem(&mut self, holder: usize, issuer: usize) -> Result<(), WorldError> {
        let iid = AgentId(issuer as u32);
        let hid = AgentId(holder as u32);
        let classes: Vec<(ClassId, u64)> = self
            .ledger
            .wallet(hid)
            .filter(|&(c, _)| {
                let class = self.ledger.class(c).expect("wallet classes exist");
                class.kind == InstrumentKind::Iou && class.issuer == Some(iid)
            })
            .collect();
        if classes.is_empty() {
            return Ok(());
        }
        let Some(good) = self.agents[issuer].specialty else { return Ok(()) };
        let want = self.want(holder, good).min(self.config.market.max_per_meeting);
        if want == 0 {
            return Ok(());
        }
        let price = self.prices[good.index()];
        let held: u64 = classes.iter().map(|(_, b)| b).sum();
        let qty = want.min((held as f64 / price).floor() as u64);
        if qty == 0 {
            return Ok(());
        }
        let stock = self.agents[issuer].inventory.qty(good);
        if stock == 0 {
            self.credibility.defaulted(iid);
            return Ok(());
        }
        let qty = qty.min(stock);
        let mut units = amount_for(qty, price).min(held);
        let mut delivery = Delivery::new(good, qty);
        for (class, bal) in classes {
            let part = bal.min(units);
            if part == 0 {
                break;
            }
            self.retire_iou(class, hid, part, delivery)?;
            delivery.qty = 0;
            units -= part;
        }
        self.credibility.honored(iid);
        self.tally.trades += 1;
        Ok(())
    }

    fn consume(&mut self) {
        let propensity = self.propensity();
        let goods = self.catalog.len();
        let need = self.config.market.perishable_need;
        for (i, a) in self.agents.iter_mut().enumerate() {
            if a.role == Role::CentralBank {
                continue;
            }
            for (g, good) in self.catalog.goods().iter().enumerate() {
                let id = GoodId(g as u32);
                if a.specialty == Some(id) {
                    continue;
                }
                let held = a.inventory.qty(id);
                if held == 0 {
                    continue;
                }
                let eat = if good.durable {
                    let debt = &mut self.consumption_debt[i * goods + g];
                    *debt += propensity * held as f64;
                    let whole = (debt.floor() as u64).min(held);
                    *debt -= whole as f64;
                    whole
                } else {
                    held.min(need)
                };
                if eat > 0 {
                    a.inventory.take(id, eat);
                    self.tally.consumed += eat;
                    self.tally.consumption += eat as f64 * good.base_utility;
                }
            }
        }
        let expiry = self.config.market.perishable_expiry;
        if self.tick >= expiry {
            let cutoff = self.tick - expiry;
            for (g, good) in self.catalog.goods().iter().enumerate() {
                if good.durable {
                    continue;
                }
                for a in self.agents.iter_mut() {
                    self.tally.expired += a.inventory.expire(GoodId(g as u32), cutoff);
                }
            }
        }
    }

    /// Multiplicative adjustment toward a target producer stock: half a
    /// tick's output for perishables, `stock_target` per producer for
    /// durables. Prices stay put while the unit currency does not exist yet;
    /// barter prices are exchange ratios and are renormalized to index 1.
    fn update_prices(&mut self) {
        let barter = self.regime_is_barter();
        if !barter && self.ledger.group_outstanding(self.unit) == 0 {
            return;
        }
        let m = &self.config.market;
        for (g, good) in self.catalog.goods().iter().enumerate() {
            let producers = &self.producers_of[g];
            if producers.is_empty() {
                continue;
            }
            let mut stock = 0.0;
            let mut target = 0.0;
            for &i in producers {
                let a = &self.agents[i];
                stock += a.inventory.qty(GoodId(g as u32)) as f64;
                let rate = if a.role == Role::Firm { m.firm_rate } else { m.production_rate };
                target += if good.durable { m.stock_target as f64 } else { rate as f64 * 0.5 };
            }
            if target <= 0.0 {
                continue;
            }
            let excess = ((target - stock) / target).clamp(-1.0, 1.0);
            self.prices[g] = (self.prices[g] * (1.0 + m.price_eta * excess)).max(m.min_price);
        }
        if barter {
            let index = self.price_index();
            for p in self.prices.iter_mut() {
                *p = (*p / index).max(m.min_price);
            }
        }
    }

    fn update_marketability(&mut self) -> Result<(), WorldError> {
        let outcomes = std::mem::take(&mut self.tally.outcomes);
        let mut touched = vec![false; self.catalog.len()];
        for o in &outcomes {
            touched[o.good().index()] = true;
            self.marketability.update(*o)?;
        }
        for (g, t) in touched.into_iter().enumerate() {
            if !t {
                self.marketability.update(TradeOutcome::Inactive(GoodId(g as u32)))?;
            }
        }
        self.tally.outcomes = outcomes;
        Ok(())
    }

    fn snapshot(&mut self) -> MetricsFrame {
        let mut frame = MetricsFrame::empty(self.tick);
        let index = self.price_index();
        let events = &self.ledger.events()[self.events_mark.min(self.ledger.events().len())..];
        let mut moved = [0u64; ClassGroup::ALL.len()];
        for e in events.iter().filter(|e| e.kind == crate::instruments::EventKind::Transfer) {
            if let Ok(class) = self.ledger.class(e.class) {
                let g = ClassGroup::ALL.iter().position(|g| *g == class.kind.group()).expect("known group");
                moved[g] += e.amount * class.denomination;
            }
        }
        for (_, class) in self.ledger.classes().skip(self.groups_indexed) {
            let g = ClassGroup::ALL.iter().position(|g| *g == class.kind.group()).expect("known group");
            self.groups_present[g] = true;
        }
        self.groups_indexed = self.ledger.class_count();
        let present = self.groups_present;
        for (k, group) in ClassGroup::ALL.iter().enumerate() {
            if !present[k] && *group != self.unit {
                continue;
            }
            let outstanding = self.ledger.group_outstanding(*group);
            frame.groups.insert(
                *group,
                GroupStats {
                    outstanding,
                    transfer_value: moved[k],
                    velocity: if outstanding > 0 { moved[k] as f64 / outstanding as f64 } else { 0.0 },
                    price_index: (*group != ClassGroup::Commodity || self.unit == ClassGroup::Commodity)
                        .then_some(index),
                },
            );
        }

        let mut wealth = Vec::with_capacity(self.agents.len());
        let mut perceived = 0.0;
        for a in &self.agents {
            let cash = self.currency_holdings(a.id) as f64;
            perceived += cash / index;
            if a.role == Role::CentralBank {
                continue;
            }
            let stock: f64 = a
                .inventory
                .bundle()
                .iter()
                .map(|&(g, q)| q as f64 * self.prices[g.index()])
                .sum();
            wealth.push(cash + stock);
        }
        frame.gini = gini(&wealth).unwrap_or(0.0);
        frame.real_savings = self.real_savings();

        let raw = if frame.real_savings > 0.0 { perceived / frame.real_savings } else { 0.0 };
        let alpha = self.config.market.distortion_adaptation;
        self.distortion = match self.anchor {
            Some(anchor) if anchor > 0.0 && raw > 0.0 => raw / anchor,
            _ => 1.0,
        };
        self.anchor = Some(match self.anchor {
            Some(anchor) if anchor > 0.0 => anchor + alpha * (raw - anchor),
            _ => raw,
        });
        frame.perceived_real_ratio = self.distortion;

        let distribution: Vec<f64> = if self.ledger.group_outstanding(ClassGroup::Psi) > 0 {
            let held: Vec<f64> = self
                .agents
                .iter()
                .map(|a| self.ledger.group_balance(a.id, ClassGroup::Psi) as f64)
                .collect();
            let total: f64 = held.iter().sum();
            held.iter().map(|h| h / total).collect()
        } else {
            Vec::new()
        };
        if !distribution.is_empty() && distribution.len() == self.distribution.len() {
            frame.distribution_shift = distribution_shift(&self.distribution, &distribution).ok();
        }
        self.distribution = distribution.clone();
        frame.holdings_distribution = distribution;

        frame.consumption = self.tally.consumption;
        frame.produced_units = self.tally.produced;
        frame.consumed_units = self.tally.consumed;
        frame.expired_units = self.tally.expired;
        frame.inventory_units = self.agents.iter().map(|a| a.inventory.total_units()).sum();
        frame.trades = self.tally.trades;
        frame
    }
}
