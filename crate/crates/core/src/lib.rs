//! Deterministic agent-based simulation of monetary regimes.
//!
//! A world of producing and trading agents is stepped tick by tick under a
//! fiat, PSI (public service invoice) or barter regime; see
//! [`scenario::RegimeKind`]. Every instrument lives in an integer
//! [`instruments::Ledger`] that conserves units and logs every change.
//!
//! The guide in `book/` walks through the modules with runnable examples.

pub mod agents;
pub mod dynamics;
pub mod exchange;
pub mod goods;
pub mod instruments;
pub mod metrics;
pub mod regimes;
pub mod report;
pub mod run;
pub mod scenario;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ledger.md")]
    mod ledger {}
    #[doc = include_str!("../../../book/src/exchange.md")]
    mod exchange {}
    #[doc = include_str!("../../../book/src/psi.md")]
    mod psi {}
    #[doc = include_str!("../../../book/src/fiat.md")]
    mod fiat {}
    #[doc = include_str!("../../../book/src/world.md")]
    mod world {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
}
