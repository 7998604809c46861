//! Brute-force ledger model used as an oracle by several test targets.
//!
//! The model keeps its own balance map and per-class counters and predicts
//! the outcome of each operation before the real ledger runs it.
#![allow(dead_code)]

pub mod oracle;
pub mod road;

use std::collections::BTreeMap;

use psisim::instruments::{AgentId, ClassId, GoodId, InstrumentClass, Ledger, LedgerError, LedgerEvent, EventKind};
use psisim::regimes::{psi_deliver_project, psi_request_project, ProjectRegistry};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Issue { class: usize, to: u32, amount: u64 },
    Transfer { from: u32, to: u32, class: usize, amount: u64 },
    Redeem { bearer: u32, presented_to: u32, class: usize, amount: u64 },
}

/// What the model expects an operation to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Ok,
    ZeroAmount,
    SelfTransfer,
    Insufficient,
    WrongIssuer,
    Exhausted,
    Ungated,
}

fn observed(r: &Result<LedgerEvent, LedgerError>) -> Expect {
    match r {
        Ok(_) => Expect::Ok,
        Err(LedgerError::ZeroAmount) => Expect::ZeroAmount,
        Err(LedgerError::SelfTransfer) => Expect::SelfTransfer,
        Err(LedgerError::InsufficientBalance { .. }) => Expect::Insufficient,
        Err(LedgerError::WrongIssuer { .. }) => Expect::WrongIssuer,
        Err(LedgerError::AlreadyExhausted(_)) => Expect::Exhausted,
        Err(LedgerError::UngatedPsiIssue(_)) => Expect::Ungated,
        Err(e) => panic!("unexpected ledger error {e:?}"),
    }
}

#[derive(Debug, Default, Clone)]
pub struct Model {
    pub balances: BTreeMap<(u32, usize), u64>,
    pub issued: Vec<u64>,
    pub destroyed: Vec<u64>,
    pub issuer: Vec<Option<u32>>,
    pub psi: Vec<bool>,
}

impl Model {
    fn bal(&self, agent: u32, class: usize) -> u64 {
        self.balances.get(&(agent, class)).copied().unwrap_or(0)
    }

    fn add(&mut self, agent: u32, class: usize, amount: i128) {
        let b = self.bal(agent, class) as i128 + amount;
        assert!(b >= 0, "model balance went negative");
        if b == 0 {
            self.balances.remove(&(agent, class));
        } else {
            self.balances.insert((agent, class), b as u64);
        }
    }

    pub fn expect(&self, op: Op) -> Expect {
        match op {
            Op::Issue { class, amount, .. } => {
                if amount == 0 {
                    Expect::ZeroAmount
                } else if self.psi[class] {
                    // Gates open only on delivery and are used up by it.
                    Expect::Ungated
                } else {
                    Expect::Ok
                }
            }
            Op::Transfer { from, to, class, amount } => {
                if amount == 0 {
                    Expect::ZeroAmount
                } else if from == to {
                    Expect::SelfTransfer
                } else if self.bal(from, class) < amount {
                    Expect::Insufficient
                } else {
                    Expect::Ok
                }
            }
            Op::Redeem { bearer, presented_to, class, amount } => {
                if amount == 0 {
                    Expect::ZeroAmount
                } else if self.issuer[class] != Some(presented_to) {
                    Expect::WrongIssuer
                } else if self.issued[class] == self.destroyed[class] {
                    Expect::Exhausted
                } else if self.bal(bearer, class) < amount {
                    Expect::Insufficient
                } else {
                    Expect::Ok
                }
            }
        }
    }

    pub fn apply(&mut self, op: Op) {
        match op {
            Op::Issue { class, to, amount } => {
                self.issued[class] += amount;
                self.add(to, class, amount as i128);
            }
            Op::Transfer { from, to, class, amount } => {
                self.add(from, class, -(amount as i128));
                self.add(to, class, amount as i128);
            }
            Op::Redeem { bearer, class, amount, .. } => {
                self.destroyed[class] += amount;
                self.add(bearer, class, -(amount as i128));
            }
        }
    }
}

/// A ledger and its model, driven in lock step.
pub struct Harness {
    pub ledger: Ledger,
    pub model: Model,
    pub classes: Vec<ClassId>,
    pub agents: u32,
}

impl Harness {
    /// One class of every kind: IOUs and invoices from a handful of
    /// issuers, fiat notes and credit, commodity money, and delivered PSIs
    /// whose issuance gates are already spent.
    pub fn new(agents: u32) -> Self {
        assert!(agents >= 4);
        let mut ledger = Ledger::new(agents, [GoodId(0), GoodId(1)]);
        let mut model = Model::default();
        let mut classes = Vec::new();
        let mut templates = Vec::new();
        for i in 0..agents.min(8) {
            templates.push(InstrumentClass::iou(AgentId(i), GoodId(i % 2)));
        }
        for i in 0..agents.min(4) {
            templates.push(InstrumentClass::invoice(AgentId(agents - 1 - i), GoodId(0)));
        }
        templates.push(InstrumentClass::fiat_note(AgentId(0)));
        templates.push(InstrumentClass::fiat_credit(AgentId(1)));
        templates.push(InstrumentClass::commodity(GoodId(1)));
        for t in templates {
            let id = ledger.register_class(&t).unwrap();
            classes.push(id);
            model.issuer.push(t.issuer.map(|a| a.0));
            model.issued.push(0);
            model.destroyed.push(0);
            model.psi.push(false);
        }
        let mut registry = ProjectRegistry::default();
        for (k, value) in [(0u32, 100u64), (1, 250)] {
            let spec = format!("road-{k}");
            let provider = AgentId(2 + k);
            psi_request_project(&mut registry, 0, &spec, value, 3, 4, 0.5, 0).unwrap();
            let id = psi_deliver_project(&mut registry, &mut ledger, provider, provider, &spec).unwrap();
            classes.push(id);
            model.issuer.push(Some(provider.0));
            model.issued.push(value);
            model.destroyed.push(0);
            model.psi.push(true);
            model.balances.insert((provider.0, classes.len() - 1), value);
        }
        Harness { ledger, model, classes, agents }
    }

    pub fn random_op<R: Rng>(&self, rng: &mut R) -> Op {
        let class = rng.random_range(0..self.classes.len());
        let amount = if rng.random_bool(0.02) { 0 } else { rng.random_range(1..=60) };
        let agent = |rng: &mut R| rng.random_range(0..self.agents);
        match rng.random_range(0..10) {
            0..=2 => Op::Issue { class, to: agent(rng), amount },
            3..=7 => {
                // Mostly draw a sender that holds something.
                let from = self.holder(rng, class).unwrap_or_else(|| agent(rng));
                Op::Transfer { from, to: agent(rng), class, amount }
            }
            _ => {
                let bearer = self.holder(rng, class).unwrap_or_else(|| agent(rng));
                let presented_to = match self.model.issuer[class] {
                    Some(i) if rng.random_bool(0.9) => i,
                    _ => agent(rng),
                };
                Op::Redeem { bearer, presented_to, class, amount }
            }
        }
    }

    fn holder<R: Rng>(&self, rng: &mut R, class: usize) -> Option<u32> {
        let holders: Vec<u32> = self
            .model
            .balances
            .keys()
            .filter(|&&(_, c)| c == class)
            .map(|&(a, _)| a)
            .collect();
        (!holders.is_empty()).then(|| holders[rng.random_range(0..holders.len())])
    }

    /// Runs `op` on both sides and returns a description of any mismatch.
    pub fn step(&mut self, op: Op) -> Result<Expect, String> {
        let want = self.model.expect(op);
        let got = match op {
            Op::Issue { class, to, amount } => self.ledger.issue_units(self.classes[class], AgentId(to), amount),
            Op::Transfer { from, to, class, amount } => {
                self.ledger.transfer(AgentId(from), AgentId(to), self.classes[class], amount)
            }
            Op::Redeem { bearer, presented_to, class, amount } => {
                self.ledger
                    .redeem_destroy(AgentId(bearer), AgentId(presented_to), self.classes[class], amount)
            }
        };
        let got = observed(&got);
        if got != want {
            return Err(format!("{op:?}: ledger {got:?}, model {want:?}"));
        }
        if want == Expect::Ok {
            self.model.apply(op);
        }
        self.check_touched(op)?;
        Ok(got)
    }

    fn check_touched(&self, op: Op) -> Result<(), String> {
        let (class, agents) = match op {
            Op::Issue { class, to, .. } => (class, vec![to]),
            Op::Transfer { from, to, class, .. } => (class, vec![from, to]),
            Op::Redeem { bearer, presented_to, class, .. } => (class, vec![bearer, presented_to]),
        };
        let id = self.classes[class];
        for a in agents {
            let (l, m) = (self.ledger.balance(AgentId(a), id), self.model.bal(a, class));
            if l != m {
                return Err(format!("{op:?}: agent {a} holds {l}, model {m}"));
            }
        }
        let batch = self.ledger.batch(id).unwrap();
        if batch.issued != self.model.issued[class] || batch.destroyed != self.model.destroyed[class] {
            return Err(format!("{op:?}: batch {batch:?} disagrees with model"));
        }
        Ok(())
    }

    /// Full comparison: every balance, every class, plus the ledger's own
    /// conservation check.
    pub fn check_all(&self) -> Result<(), String> {
        let v = self.ledger.conservation_violations();
        if !v.is_empty() {
            return Err(format!("conservation violated for {v:?}"));
        }
        for (k, &id) in self.classes.iter().enumerate() {
            let mut sum = 0;
            for a in 0..self.agents {
                let (l, m) = (self.ledger.balance(AgentId(a), id), self.model.bal(a, k));
                if l != m {
                    return Err(format!("class {k} agent {a}: ledger {l}, model {m}"));
                }
                sum += l;
            }
            if sum != self.model.issued[k] - self.model.destroyed[k] {
                return Err(format!("class {k}: balances {sum} != issued - destroyed"));
            }
        }
        Ok(())
    }
}

/// Rebuilds balances from an event log alone. Fails if any event would
/// take a balance below zero or move units of a class beyond what is
/// outstanding at that point.
pub fn replay(events: &[LedgerEvent]) -> Result<BTreeMap<(u32, u32), u64>, String> {
    let mut balances: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut outstanding: BTreeMap<u32, u64> = BTreeMap::new();
    let debit = |b: &mut BTreeMap<(u32, u32), u64>, key: (u32, u32), amount: u64| -> Result<(), String> {
        let held = b.get(&key).copied().unwrap_or(0);
        if held < amount {
            return Err(format!("replay: {key:?} holds {held}, event moves {amount}"));
        }
        if held == amount {
            b.remove(&key);
        } else {
            b.insert(key, held - amount);
        }
        Ok(())
    };
    for e in events {
        let c = e.class.0;
        match e.kind {
            EventKind::Issue => {
                let to = e.to.ok_or("issue without recipient")?.0;
                *balances.entry((to, c)).or_insert(0) += e.amount;
                *outstanding.entry(c).or_insert(0) += e.amount;
            }
            EventKind::Transfer => {
                let (from, to) = (e.from.ok_or("transfer without sender")?.0, e.to.ok_or("transfer without recipient")?.0);
                debit(&mut balances, (from, c), e.amount)?;
                *balances.entry((to, c)).or_insert(0) += e.amount;
            }
            EventKind::Redeem => {
                let from = e.from.ok_or("redeem without bearer")?.0;
                debit(&mut balances, (from, c), e.amount)?;
                let o = outstanding.entry(c).or_insert(0);
                if *o < e.amount {
                    return Err(format!("replay: class {c} destroys {} of {o} outstanding", e.amount));
                }
                *o -= e.amount;
            }
        }
        let held: u64 = balances.iter().filter(|(&(_, k), _)| k == c).map(|(_, b)| b).sum();
        if held != outstanding.get(&c).copied().unwrap_or(0) {
            return Err(format!("replay: class {c} holdings {held} != outstanding"));
        }
    }
    Ok(balances)
}
