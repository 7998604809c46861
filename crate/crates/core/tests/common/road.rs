//! A contractor builds a road worth 100 and pays five shop owners for
//! materials with the road's PSIs.
#![allow(dead_code)]

use psisim::agents::{Agent, Role};
use psisim::exchange::{
    settle_first_half, AcceptanceContext, ContractBook, CredibilityTable, Delivery, MarketabilityTable, MediumChoice,
};
use psisim::instruments::{AgentId, ClassGroup, ClassId, GoodId, Ledger};
use psisim::regimes::{psi_deliver_project, psi_request_project, ProjectRegistry};

pub const ROAD: u64 = 100;
pub const CONTRACTOR: AgentId = AgentId(0);
pub const AGENTS: u32 = 6;
/// What the contractor pays each shop, in PSIs. Sums to the road value.
pub const PAYMENTS: [(u32, u64); 5] = [(1, 17), (2, 23), (3, 30), (4, 11), (5, 19)];

pub struct Road {
    pub ledger: Ledger,
    pub agents: Vec<Agent>,
    pub class: ClassId,
}

impl Road {
    pub fn psi_holdings(&self) -> Vec<u64> {
        (0..AGENTS).map(|a| self.ledger.group_balance(AgentId(a), ClassGroup::Psi)).collect()
    }
}

/// The road delivered and every PSI spent on materials.
pub fn spent() -> Road {
    let mut agents: Vec<Agent> = (0..AGENTS).map(|i| Agent::new(AgentId(i), Role::Household, 2)).collect();
    for a in agents.iter_mut().skip(1) {
        a.specialty = Some(GoodId(1));
        a.inventory.add(GoodId(1), 10, 0);
    }
    let mut ledger = Ledger::new(AGENTS, [GoodId(0), GoodId(1)]);
    let mut registry = ProjectRegistry::default();
    psi_request_project(&mut registry, 0, "road", ROAD, AGENTS, AGENTS, 0.5, 0).unwrap();
    let class = psi_deliver_project(&mut registry, &mut ledger, CONTRACTOR, CONTRACTOR, "road").unwrap();
    let credibility = CredibilityTable::default();
    let marketability = MarketabilityTable::new(2, 0.05, 0.1);
    let ctx = AcceptanceContext {
        legal_tender: false,
        registry: Some(&registry),
        credibility: &credibility,
        marketability: &marketability,
    };
    let mut book = ContractBook::new();
    for (shop, amount) in PAYMENTS {
        settle_first_half(
            &mut book,
            &mut agents,
            &mut ledger,
            &ctx,
            AgentId(shop),
            CONTRACTOR,
            Delivery::new(GoodId(1), 2),
            MediumChoice::Money { payment: vec![(class, amount)] },
            1,
        )
        .unwrap();
    }
    Road { ledger, agents, class }
}
