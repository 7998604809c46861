//! Goods catalog and per-agent inventories.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::instruments::GoodId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Good {
    pub name: String,
    #[serde(default)]
    pub durable: bool,
    /// Numéraire cost of producing one unit.
    #[serde(default = "default_production_cost")]
    pub production_cost: f64,
    /// Latent exchange-ratio value of one unit, in numéraire.
    pub base_utility: f64,
    /// Intrinsic probability that a trader accepts this good in indirect
    /// exchange, before any marketability has been learned.
    #[serde(default = "default_salability")]
    pub salability: f64,
}

fn default_production_cost() -> f64 {
    1.0
}

fn default_salability() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    goods: Vec<Good>,
}

impl Catalog {
    pub fn new(goods: Vec<Good>) -> Self {
        Catalog { goods }
    }

    /// Four perishables and durables with distinct intrinsic salability.
    /// Salt is the most salable.
    pub fn standard() -> Self {
        let good = |name: &str, durable, base_utility, salability| Good {
            name: name.to_string(),
            durable,
            production_cost: base_utility * 0.5,
            base_utility,
            salability,
        };
        Catalog::new(vec![
            good("grain", false, 10.0, 0.25),
            good("cloth", true, 20.0, 0.3),
            good("tools", true, 30.0, 0.2),
            good("salt", true, 15.0, 0.6),
        ])
    }

    pub fn len(&self) -> usize {
        self.goods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goods.is_empty()
    }

    pub fn get(&self, id: GoodId) -> Option<&Good> {
        self.goods.get(id.index())
    }

    pub fn contains(&self, id: GoodId) -> bool {
        id.index() < self.goods.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = GoodId> + Clone {
        (0..self.goods.len() as u32).map(GoodId)
    }

    pub fn goods(&self) -> &[Good] {
        &self.goods
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Lot {
    tick: u64,
    qty: u64,
}

/// Goods held by one agent, kept as production lots so perishables can
/// expire oldest-first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Inventory {
    lots: Vec<VecDeque<Lot>>,
    totals: Vec<u64>,
}

impl Inventory {
    pub fn new(goods: usize) -> Self {
        Inventory {
            lots: vec![VecDeque::new(); goods],
            totals: vec![0; goods],
        }
    }

    pub fn qty(&self, good: GoodId) -> u64 {
        self.totals.get(good.index()).copied().unwrap_or(0)
    }

    pub fn total_units(&self) -> u64 {
        self.totals.iter().sum()
    }

    /// Non-empty stock, by good id.
    pub fn bundle(&self) -> Vec<(GoodId, u64)> {
        self.totals
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > 0)
            .map(|(g, &q)| (GoodId(g as u32), q))
            .collect()
    }

    pub fn add(&mut self, good: GoodId, qty: u64, tick: u64) {
        if qty == 0 {
            return;
        }
        let lots = &mut self.lots[good.index()];
        match lots.back_mut() {
            Some(last) if last.tick == tick => last.qty += qty,
            _ => lots.push_back(Lot { tick, qty }),
        }
        self.totals[good.index()] += qty;
    }

    /// Removes up to `qty` units, oldest lots first. Returns the removed
    /// lots as `(production tick, qty)` so transfers keep their age.
    pub fn take(&mut self, good: GoodId, qty: u64) -> Vec<(u64, u64)> {
        let mut left = qty.min(self.qty(good));
        self.totals[good.index()] -= left;
        let lots = &mut self.lots[good.index()];
        let mut taken = Vec::new();
        while left > 0 {
            let front = lots.front_mut().expect("lot totals out of sync");
            let n = front.qty.min(left);
            taken.push((front.tick, n));
            front.qty -= n;
            left -= n;
            if front.qty == 0 {
                lots.pop_front();
            }
        }
        taken
    }

    pub fn put_lots(&mut self, good: GoodId, lots: &[(u64, u64)]) {
        for &(tick, qty) in lots {
            self.insert_lot(good, tick, qty);
        }
    }

    fn insert_lot(&mut self, good: GoodId, tick: u64, qty: u64) {
        if qty == 0 {
            return;
        }
        let lots = &mut self.lots[good.index()];
        let pos = lots.partition_point(|l| l.tick <= tick);
        if pos > 0 && lots[pos - 1].tick == tick {
            lots[pos - 1].qty += qty;
        } else {
            lots.insert(pos, Lot { tick, qty });
        }
        self.totals[good.index()] += qty;
    }

    /// Drops lots of `good` produced at or before `cutoff`.
    pub fn expire(&mut self, good: GoodId, cutoff: u64) -> u64 {
        let lots = &mut self.lots[good.index()];
        let mut expired = 0;
        while let Some(front) = lots.front() {
            if front.tick > cutoff {
                break;
            }
            expired += front.qty;
            lots.pop_front();
        }
        self.totals[good.index()] -= expired;
        expired
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lots_fifo_and_expiry() {
        let g = GoodId(0);
        let mut inv = Inventory::new(1);
        inv.add(g, 3, 1);
        inv.add(g, 2, 2);
        assert_eq!(inv.take(g, 4), vec![(1, 3), (2, 1)]);
        inv.put_lots(g, &[(0, 5)]);
        assert_eq!(inv.qty(g), 6);
        assert_eq!(inv.expire(g, 1), 5);
        assert_eq!(inv.qty(g), 1);
    }
}
