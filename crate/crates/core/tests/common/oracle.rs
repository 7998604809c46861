//! Three agents, two ticks, traced by hand.
//!
//! Agent 0 provides public works and produces stone, agent 1 produces cloth,
//! agent 2 bakes bread (perishable). Noise is off, the propensity does not
//! react to savings, and every posted price stays an exact binary fraction,
//! so each decision below can be checked by hand.
//!
//! Tick 0, one project worth 60:
//!   * all three vote yes (benefit 1.2 × 20 > cost 20);
//!   * agent 1 is the only durable supplier besides the provider; it sells
//!     3 cloth at 20 for 60 of agent 0's IOUs (class 0);
//!   * delivery issues 60 PSIs (class 1) to agent 0, which settles the IOUs
//!     with them: the PSIs go to agent 1 and the IOUs are destroyed.
//!
//! Tick 1, meetings (1, 2) then (0, 1). Budgets are whole holdings
//! (spend share 1), so only agent 1 has one (60):
//!   * 1 buys bread from 2: need 3, price 10, liquidity 1/4.5, so the
//!     surplus grows with quantity and it takes all 3 for 30;
//!   * 2 buys nothing, its budget was fixed at 0 before the meeting;
//!   * agent 0 holds no currency, and agent 1 cannot pay agent 0 in
//!     agent 0's own PSIs, so the second meeting is empty.
//!   After consumption and expiry: stone 9 vs target 8, cloth 6 vs 8,
//!   bread 1 vs 0.5, so with η = 0.5 prices move to 9.375, 22.5 and 5.
//!
//! Tick 2, meeting (2, 1), both with budget 30:
//!   * 2 buys cloth from 1: wants 4 + 1 extra − 2 held = 3, but only one
//!     unit (23) fits the budget;
//!   * 1 buys bread from 2: stock 2 after production, price 5, takes 2
//!     for 10.
#![allow(dead_code)]

use psisim::dynamics::World;
use psisim::instruments::{AgentId, ClassId, EventKind, LedgerEvent};
use psisim::scenario::{parse_scenario, ScenarioConfig};

pub const SCENARIO: &str = r#"{
  "regime": "Psi",
  "agents": 3,
  "horizon": 2,
  "seed": 7,
  "noise_sigma": 0,
  "roles": { "firm_share": 0, "providers": 1 },
  "goods": [
    { "name": "stone", "durable": true, "base_utility": 10 },
    { "name": "cloth", "durable": true, "base_utility": 20 },
    { "name": "bread", "durable": false, "base_utility": 10 }
  ],
  "thresholds": { "propensity_slope": 0 },
  "market": {
    "price_scale": 1,
    "price_eta": 0.5,
    "want_level": 4,
    "perishable_need": 3,
    "max_per_meeting": 3,
    "stock_target": 8,
    "stock_cap": 16,
    "perishable_expiry": 1,
    "spend_share": 1,
    "liquidity_target": 1
  },
  "psi": {
    "initial_projects": 1,
    "project_value": 60,
    "project_interval": 0,
    "service_demand_rate": 0
  }
}"#;

pub fn config() -> ScenarioConfig {
    parse_scenario(SCENARIO).expect("fixture parses")
}

pub fn meetings() -> Vec<Vec<(AgentId, AgentId)>> {
    vec![
        vec![(AgentId(1), AgentId(2)), (AgentId(0), AgentId(1))],
        vec![(AgentId(2), AgentId(1))],
    ]
}

type Row = (u64, EventKind, u32, Option<u32>, Option<u32>, u64);

const IOU: u32 = 0;
const PSI: u32 = 1;

pub const TRACE: [Row; 7] = [
    (0, EventKind::Issue, IOU, None, Some(1), 60),
    (0, EventKind::Issue, PSI, None, Some(0), 60),
    (0, EventKind::Transfer, PSI, Some(0), Some(1), 60),
    (0, EventKind::Redeem, IOU, Some(1), Some(0), 60),
    (1, EventKind::Transfer, PSI, Some(1), Some(2), 30),
    (2, EventKind::Transfer, PSI, Some(2), Some(1), 23),
    (2, EventKind::Transfer, PSI, Some(1), Some(2), 10),
];

/// PSI holdings per agent after tick 2.
pub const FINAL_PSI: [u64; 3] = [0, 43, 17];

pub fn expected() -> Vec<LedgerEvent> {
    TRACE
        .iter()
        .map(|&(tick, kind, class, from, to, amount)| LedgerEvent {
            tick,
            kind,
            class: ClassId(class),
            from: from.map(AgentId),
            to: to.map(AgentId),
            amount,
        })
        .collect()
}

/// Runs the stepper over the fixture and returns its whole event log.
pub fn run() -> (World, Vec<LedgerEvent>) {
    let mut world = World::new(&config()).expect("fixture world builds");
    world.script_meetings(meetings());
    let mut events = world.take_events();
    for _ in 0..2 {
        world.step().expect("fixture steps");
        events.extend(world.take_events());
    }
    (world, events)
}
