//! Claim instruments and the ledger that tracks their lifecycle.
//!
//! Every unit of every instrument class passes through the same three
//! states: issued to a holder, moved between holders, and destroyed when a
//! bearer presents it to the issuer. The ledger keeps integer balances and
//! enforces, after every operation, that the balances of a class sum to
//! `issued - destroyed`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense identifier of an agent inside one world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

/// Index into the goods catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoodId(pub u32);

/// Identifier of a registered instrument class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for GoodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl GoodId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InstrumentKind {
    CommodityMoney,
    Iou,
    Invoice,
    Psi,
    FiatNote,
    FiatCredit,
}

impl InstrumentKind {
    pub fn requires_issuer(self) -> bool {
        !matches!(self, InstrumentKind::CommodityMoney)
    }

    /// Invoice-type claims: goods or services already received.
    pub fn is_invoice(self) -> bool {
        matches!(self, InstrumentKind::Invoice | InstrumentKind::Psi)
    }

    pub fn is_fiat(self) -> bool {
        matches!(self, InstrumentKind::FiatNote | InstrumentKind::FiatCredit)
    }

    /// Aggregation bucket used by price and velocity metrics.
    pub fn group(self) -> ClassGroup {
        match self {
            InstrumentKind::CommodityMoney => ClassGroup::Commodity,
            InstrumentKind::Iou => ClassGroup::Iou,
            InstrumentKind::Invoice => ClassGroup::Invoice,
            InstrumentKind::Psi => ClassGroup::Psi,
            InstrumentKind::FiatNote | InstrumentKind::FiatCredit => ClassGroup::Fiat,
        }
    }
}

/// Currency class-group: the level at which metrics aggregate classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassGroup {
    Commodity,
    Iou,
    Invoice,
    Psi,
    Fiat,
}

impl ClassGroup {
    pub const ALL: [ClassGroup; 5] = [
        ClassGroup::Commodity,
        ClassGroup::Iou,
        ClassGroup::Invoice,
        ClassGroup::Psi,
        ClassGroup::Fiat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassGroup::Commodity => "commodity",
            ClassGroup::Iou => "iou",
            ClassGroup::Invoice => "invoice",
            ClassGroup::Psi => "psi",
            ClassGroup::Fiat => "fiat",
        }
    }
}

/// What a unit can be redeemed for.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Backing {
    Good(GoodId),
    /// A public or private service, named by its specification id.
    Service(String),
    /// Nothing but the issuer's edict (fiat notes and bank credit).
    Edict,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstrumentClass {
    pub kind: InstrumentKind,
    pub issuer: Option<AgentId>,
    pub backing: Backing,
    /// Value-units per instrument unit.
    pub denomination: u64,
}

impl InstrumentClass {
    pub fn commodity(good: GoodId) -> Self {
        InstrumentClass {
            kind: InstrumentKind::CommodityMoney,
            issuer: None,
            backing: Backing::Good(good),
            denomination: 1,
        }
    }

    pub fn iou(issuer: AgentId, good: GoodId) -> Self {
        InstrumentClass {
            kind: InstrumentKind::Iou,
            issuer: Some(issuer),
            backing: Backing::Good(good),
            denomination: 1,
        }
    }

    pub fn invoice(issuer: AgentId, good: GoodId) -> Self {
        InstrumentClass {
            kind: InstrumentKind::Invoice,
            issuer: Some(issuer),
            backing: Backing::Good(good),
            denomination: 1,
        }
    }

    pub fn psi(issuer: AgentId, spec: impl Into<String>) -> Self {
        InstrumentClass {
            kind: InstrumentKind::Psi,
            issuer: Some(issuer),
            backing: Backing::Service(spec.into()),
            denomination: 1,
        }
    }

    pub fn fiat_note(central_bank: AgentId) -> Self {
        InstrumentClass {
            kind: InstrumentKind::FiatNote,
            issuer: Some(central_bank),
            backing: Backing::Edict,
            denomination: 1,
        }
    }

    pub fn fiat_credit(bank: AgentId) -> Self {
        InstrumentClass {
            kind: InstrumentKind::FiatCredit,
            issuer: Some(bank),
            backing: Backing::Edict,
            denomination: 1,
        }
    }

    /// Service specification id for PSI and service-backed classes.
    pub fn service_spec(&self) -> Option<&str> {
        match &self.backing {
            Backing::Service(spec) => Some(spec),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentBatch {
    pub issued: u64,
    pub destroyed: u64,
    /// Tick of first issuance.
    pub issue_tick: u64,
}

impl InstrumentBatch {
    pub fn outstanding(&self) -> u64 {
        self.issued - self.destroyed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Issue,
    Transfer,
    Redeem,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Issue => "issue",
            EventKind::Transfer => "transfer",
            EventKind::Redeem => "redeem",
        }
    }
}

/// One row of the append-only ledger log.
///
/// Issue rows have no `from`; redeem rows carry the bearer in `from` and
/// the issuer the units were presented to in `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub tick: u64,
    pub kind: EventKind,
    pub class: ClassId,
    pub from: Option<AgentId>,
    pub to: Option<AgentId>,
    pub amount: u64,
}

impl LedgerEvent {
    pub const CSV_HEADER: &'static str = "tick,event-kind,class-id,from,to,amount";

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let mut num = itoa::Buffer::new();
        let mut row = [0u8; 128];
        let mut len = 0;
        let mut put = |bytes: &[u8]| {
            row[len..len + bytes.len()].copy_from_slice(bytes);
            len += bytes.len();
        };
        put(num.format(self.tick).as_bytes());
        put(b",");
        put(self.kind.as_str().as_bytes());
        put(b",");
        put(num.format(self.class.0).as_bytes());
        put(b",");
        if let Some(a) = self.from {
            put(num.format(a.0).as_bytes());
        }
        put(b",");
        if let Some(a) = self.to {
            put(num.format(a.0).as_bytes());
        }
        put(b",");
        put(num.format(self.amount).as_bytes());
        put(b"\n");
        out.write_all(&row[..len])
    }
}

/// Writes `events` as CSV with a header row.
pub fn write_events_csv<W: Write>(out: &mut W, events: &[LedgerEvent]) -> io::Result<()> {
    writeln!(out, "{}", LedgerEvent::CSV_HEADER)?;
    for event in events {
        event.write_csv(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("unknown issuer {0}")]
    UnknownIssuer(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown instrument class {0}")]
    UnknownClass(ClassId),
    #[error("commodity money must reference a catalog good")]
    UnknownGood,
    #[error("{0:?} class requires an issuer")]
    MissingIssuer(InstrumentKind),
    #[error("commodity money cannot have an issuer")]
    UnexpectedIssuer,
    #[error("denomination must be positive")]
    ZeroDenomination,
    #[error("PSI class {0} issued without confirmed delivery")]
    UngatedPsiIssue(ClassId),
    #[error("insufficient balance: holds {held}, needs {needed}")]
    InsufficientBalance { held: u64, needed: u64 },
    #[error("self-transfer rejected")]
    SelfTransfer,
    #[error("class {class} must be presented to its issuer")]
    WrongIssuer { class: ClassId },
    #[error("class {0} has no outstanding units")]
    AlreadyExhausted(ClassId),
}

/// Balances, batches and the event log for every instrument class.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    agent_count: u32,
    goods: BTreeSet<GoodId>,
    classes: Vec<InstrumentClass>,
    index: BTreeMap<InstrumentClass, ClassId>,
    batches: Vec<InstrumentBatch>,
    /// Per agent, class → balance. Zero balances are removed.
    balances: Vec<BTreeMap<ClassId, u64>>,
    /// Remaining PSI issuance opened by a confirmed delivery.
    psi_gates: BTreeMap<ClassId, u64>,
    events: Vec<LedgerEvent>,
    tick: u64,
}

impl Ledger {
    pub fn new(agent_count: u32, goods: impl IntoIterator<Item = GoodId>) -> Self {
        Ledger {
            agent_count,
            goods: goods.into_iter().collect(),
            balances: vec![BTreeMap::new(); agent_count as usize],
            ..Ledger::default()
        }
    }

    pub fn agent_count(&self) -> u32 {
        self.agent_count
    }

    pub fn set_tick(&mut self, tick: u64) {
        self.tick = tick;
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    fn check_agent(&self, agent: AgentId) -> Result<(), LedgerError> {
        if agent.0 < self.agent_count {
            Ok(())
        } else {
            Err(LedgerError::UnknownAgent(agent))
        }
    }

    fn validate(&self, class: &InstrumentClass) -> Result<(), LedgerError> {
        if class.denomination == 0 {
            return Err(LedgerError::ZeroDenomination);
        }
        match (class.kind.requires_issuer(), class.issuer) {
            (true, None) => return Err(LedgerError::MissingIssuer(class.kind)),
            (false, Some(_)) => return Err(LedgerError::UnexpectedIssuer),
            (true, Some(issuer)) if issuer.0 >= self.agent_count => {
                return Err(LedgerError::UnknownIssuer(issuer))
            }
            _ => {}
        }
        if class.kind == InstrumentKind::CommodityMoney {
            match class.backing {
                Backing::Good(good) if self.goods.contains(&good) => {}
                _ => return Err(LedgerError::UnknownGood),
            }
        }
        Ok(())
    }

    /// Registers `class`, or returns the id it already has.
    pub fn register_class(&mut self, class: &InstrumentClass) -> Result<ClassId, LedgerError> {
        if let Some(&id) = self.index.get(class) {
            return Ok(id);
        }
        self.validate(class)?;
        let id = ClassId(self.classes.len() as u32);
        self.classes.push(class.clone());
        self.index.insert(class.clone(), id);
        self.batches.push(InstrumentBatch {
            issued: 0,
            destroyed: 0,
            issue_tick: self.tick,
        });
        Ok(id)
    }

    pub fn class_id(&self, class: &InstrumentClass) -> Option<ClassId> {
        self.index.get(class).copied()
    }

    pub fn class(&self, id: ClassId) -> Result<&InstrumentClass, LedgerError> {
        self.classes.get(id.index()).ok_or(LedgerError::UnknownClass(id))
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> impl Iterator<Item = (ClassId, &InstrumentClass)> {
        self.classes
            .iter()
            .enumerate()
            .map(|(i, c)| (ClassId(i as u32), c))
    }

    pub fn batch(&self, id: ClassId) -> Result<&InstrumentBatch, LedgerError> {
        self.batches.get(id.index()).ok_or(LedgerError::UnknownClass(id))
    }

    /// Opens issuance of up to `allowance` units of a PSI class. Only the
    /// regimes module calls this, after a delivery is confirmed.
    pub(crate) fn open_psi_gate(&mut self, id: ClassId, allowance: u64) -> Result<(), LedgerError> {
        self.class(id)?;
        *self.psi_gates.entry(id).or_insert(0) += allowance;
        Ok(())
    }

    /// Registers `class` if needed and issues `amount` new units to
    /// `recipient`.
    pub fn issue(
        &mut self,
        class: &InstrumentClass,
        recipient: AgentId,
        amount: u64,
    ) -> Result<ClassId, LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        self.check_agent(recipient)?;
        let id = self.register_class(class)?;
        self.issue_units(id, recipient, amount)?;
        Ok(id)
    }

    /// Issues units of an already registered class.
    pub fn issue_units(
        &mut self,
        id: ClassId,
        recipient: AgentId,
        amount: u64,
    ) -> Result<LedgerEvent, LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        self.check_agent(recipient)?;
        let kind = self.class(id)?.kind;
        if kind == InstrumentKind::Psi {
            let gate = self.psi_gates.get_mut(&id);
            match gate {
                Some(remaining) if *remaining >= amount => *remaining -= amount,
                _ => return Err(LedgerError::UngatedPsiIssue(id)),
            }
        }
        let batch = &mut self.batches[id.index()];
        if batch.issued == 0 {
            batch.issue_tick = self.tick;
        }
        batch.issued += amount;
        *self.balances[recipient.index()].entry(id).or_insert(0) += amount;
        Ok(self.log(EventKind::Issue, id, None, Some(recipient), amount))
    }

    pub fn transfer(
        &mut self,
        from: AgentId,
        to: AgentId,
        id: ClassId,
        amount: u64,
    ) -> Result<LedgerEvent, LedgerError> {
        self.check_agent(from)?;
        self.check_agent(to)?;
        self.class(id)?;
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        if from == to {
            return Err(LedgerError::SelfTransfer);
        }
        self.debit(from, id, amount)?;
        *self.balances[to.index()].entry(id).or_insert(0) += amount;
        Ok(self.log(EventKind::Transfer, id, Some(from), Some(to), amount))
    }

    /// Destroys `amount` units held by `bearer`, presented to `presented_to`.
    pub fn redeem_destroy(
        &mut self,
        bearer: AgentId,
        presented_to: AgentId,
        id: ClassId,
        amount: u64,
    ) -> Result<LedgerEvent, LedgerError> {
        self.check_agent(bearer)?;
        let class = self.class(id)?;
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        if class.issuer != Some(presented_to) {
            return Err(LedgerError::WrongIssuer { class: id });
        }
        if self.batches[id.index()].outstanding() == 0 {
            return Err(LedgerError::AlreadyExhausted(id));
        }
        self.debit(bearer, id, amount)?;
        self.batches[id.index()].destroyed += amount;
        Ok(self.log(EventKind::Redeem, id, Some(bearer), Some(presented_to), amount))
    }

    fn debit(&mut self, agent: AgentId, id: ClassId, amount: u64) -> Result<(), LedgerError> {
        let wallet = &mut self.balances[agent.index()];
        let held = wallet.get(&id).copied().unwrap_or(0);
        if held < amount {
            return Err(LedgerError::InsufficientBalance {
                held,
                needed: amount,
            });
        }
        if held == amount {
            wallet.remove(&id);
        } else {
            wallet.insert(id, held - amount);
        }
        Ok(())
    }

    fn log(
        &mut self,
        kind: EventKind,
        class: ClassId,
        from: Option<AgentId>,
        to: Option<AgentId>,
        amount: u64,
    ) -> LedgerEvent {
        let event = LedgerEvent {
            tick: self.tick,
            kind,
            class,
            from,
            to,
            amount,
        };
        self.events.push(event);
        event
    }

    pub fn outstanding(&self, id: ClassId) -> Result<u64, LedgerError> {
        Ok(self.batch(id)?.outstanding())
    }

    pub fn balance(&self, agent: AgentId, id: ClassId) -> u64 {
        self.balances
            .get(agent.index())
            .and_then(|w| w.get(&id))
            .copied()
            .unwrap_or(0)
    }

    /// Non-zero holdings of `agent`, ordered by class id.
    pub fn wallet(&self, agent: AgentId) -> impl Iterator<Item = (ClassId, u64)> + '_ {
        self.balances
            .get(agent.index())
            .into_iter()
            .flat_map(|w| w.iter().map(|(&c, &b)| (c, b)))
    }

    /// Total outstanding units across classes of `group`.
    pub fn group_outstanding(&self, group: ClassGroup) -> u64 {
        self.classes
            .iter()
            .zip(&self.batches)
            .filter(|(c, _)| c.kind.group() == group)
            .map(|(_, b)| b.outstanding())
            .sum()
    }

    pub fn group_balance(&self, agent: AgentId, group: ClassGroup) -> u64 {
        self.wallet(agent)
            .filter(|(c, _)| self.classes[c.index()].kind.group() == group)
            .map(|(_, b)| b)
            .sum()
    }

    /// Sum of balances of `id` over all agents.
    pub fn holders_total(&self, id: ClassId) -> u64 {
        self.balances
            .iter()
            .filter_map(|w| w.get(&id))
            .sum()
    }

    /// Checks the conservation identity for every class.
    pub fn conservation_violations(&self) -> Vec<ClassId> {
        let mut totals = vec![0u64; self.classes.len()];
        for wallet in &self.balances {
            for (c, b) in wallet {
                totals[c.index()] += b;
            }
        }
        self.batches
            .iter()
            .enumerate()
            .filter(|(i, b)| b.destroyed > b.issued || totals[*i] != b.outstanding())
            .map(|(i, _)| ClassId(i as u32))
            .collect()
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    /// Drains the in-memory log. The stepper hands drained events to its sink
    /// each tick so long runs do not keep the whole history resident.
    pub fn take_events(&mut self) -> Vec<LedgerEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn write_events_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        write_events_csv(out, &self.events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger() -> Ledger {
        Ledger::new(4, [GoodId(0), GoodId(1)])
    }

    const A: AgentId = AgentId(0);
    const B: AgentId = AgentId(1);
    const C: AgentId = AgentId(2);

    fn gated_psi(l: &mut Ledger, issuer: AgentId, value: u64) -> ClassId {
        let id = l.register_class(&InstrumentClass::psi(issuer, "road")).unwrap();
        l.open_psi_gate(id, value).unwrap();
        id
    }

    #[test]
    fn psi_issue_to_contractor() {
        let mut l = ledger();
        let road = gated_psi(&mut l, A, 100);
        l.issue(&InstrumentClass::psi(A, "road"), A, 100).unwrap();
        assert_eq!(l.balance(A, road), 100);
        assert_eq!(l.outstanding(road).unwrap(), 100);
    }

    #[test]
    fn zero_issue_rejected() {
        let mut l = ledger();
        let err = l.issue(&InstrumentClass::iou(A, GoodId(0)), A, 0).unwrap_err();
        assert_eq!(err, LedgerError::ZeroAmount);
    }

    #[test]
    fn ungated_psi_rejected() {
        let mut l = ledger();
        let err = l.issue(&InstrumentClass::psi(A, "bridge"), A, 5).unwrap_err();
        assert!(matches!(err, LedgerError::UngatedPsiIssue(_)));
        // The gate is an allowance, not a switch.
        let id = gated_psi(&mut l, A, 10);
        l.issue_units(id, A, 10).unwrap();
        assert!(matches!(l.issue_units(id, A, 1), Err(LedgerError::UngatedPsiIssue(_))));
    }

    #[test]
    fn class_invariants() {
        let mut l = ledger();
        let unknown_issuer = InstrumentClass::iou(AgentId(9), GoodId(0));
        assert_eq!(l.issue(&unknown_issuer, A, 1), Err(LedgerError::UnknownIssuer(AgentId(9))));
        assert_eq!(
            l.register_class(&InstrumentClass::commodity(GoodId(7))),
            Err(LedgerError::UnknownGood)
        );
        let mut zero = InstrumentClass::iou(A, GoodId(0));
        zero.denomination = 0;
        assert_eq!(l.register_class(&zero), Err(LedgerError::ZeroDenomination));
        let mut orphan = InstrumentClass::iou(A, GoodId(0));
        orphan.issuer = None;
        assert_eq!(
            l.register_class(&orphan),
            Err(LedgerError::MissingIssuer(InstrumentKind::Iou))
        );
        assert!(l.register_class(&InstrumentClass::commodity(GoodId(1))).is_ok());
    }

    #[test]
    fn transfer_rules() {
        let mut l = ledger();
        let id = l.issue(&InstrumentClass::iou(A, GoodId(0)), B, 30).unwrap();
        assert_eq!(
            l.transfer(B, C, id, 50),
            Err(LedgerError::InsufficientBalance { held: 30, needed: 50 })
        );
        assert_eq!(l.transfer(B, C, id, 0), Err(LedgerError::ZeroAmount));
        assert_eq!(l.transfer(B, B, id, 1), Err(LedgerError::SelfTransfer));
        l.transfer(B, C, id, 30).unwrap();
        assert_eq!(l.balance(C, id), 30);
        assert_eq!(l.holders_total(id), 30);
    }

    #[test]
    fn contractor_spends_in_one_shop() {
        let mut l = ledger();
        let road = gated_psi(&mut l, A, 100);
        l.issue_units(road, A, 100).unwrap();
        l.transfer(A, B, road, 100).unwrap();
        assert_eq!(l.balance(B, road), 100);
        assert_eq!(l.holders_total(road), 100);
    }

    #[test]
    fn redeem_lifecycle() {
        let mut l = ledger();
        let id = l.issue(&InstrumentClass::iou(A, GoodId(0)), B, 100).unwrap();
        l.redeem_destroy(B, A, id, 40).unwrap();
        assert_eq!(l.outstanding(id).unwrap(), 60);
        assert_eq!(
            l.redeem_destroy(B, C, id, 1),
            Err(LedgerError::WrongIssuer { class: id })
        );
        // Hand trace: 100 issued, 40 destroyed, B holds 60; asking for 70 overdraws.
        assert_eq!(
            l.redeem_destroy(B, A, id, 70),
            Err(LedgerError::InsufficientBalance { held: 60, needed: 70 })
        );
        l.redeem_destroy(B, A, id, 60).unwrap();
        assert_eq!(l.outstanding(id).unwrap(), 0);
        assert_eq!(l.redeem_destroy(B, A, id, 1), Err(LedgerError::AlreadyExhausted(id)));
    }

    #[test]
    fn outstanding_cases() {
        let mut l = ledger();
        let id = l.issue(&InstrumentClass::iou(A, GoodId(0)), B, 100).unwrap();
        assert_eq!(l.outstanding(id).unwrap(), 100);
        l.redeem_destroy(B, A, id, 40).unwrap();
        assert_eq!(l.outstanding(id).unwrap(), 60);
        assert_eq!(l.outstanding(ClassId(42)), Err(LedgerError::UnknownClass(ClassId(42))));
    }

    #[test]
    fn csv_rows() {
        let mut l = ledger();
        l.set_tick(3);
        let id = l.issue(&InstrumentClass::iou(A, GoodId(0)), B, 7).unwrap();
        l.transfer(B, C, id, 2).unwrap();
        l.redeem_destroy(C, A, id, 2).unwrap();
        let mut out = Vec::new();
        l.write_events_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "tick,event-kind,class-id,from,to,amount\n\
             3,issue,0,,1,7\n\
             3,transfer,0,1,2,2\n\
             3,redeem,0,2,0,2\n"
        );
    }
}
