//! Performance/energy Pareto fronts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    /// Higher is better.
    pub performance: f64,
    /// Joules; lower is better.
    pub energy: f64,
    pub label: String,
}

impl TradeoffPoint {
    pub fn new(performance: f64, energy: f64, label: impl Into<String>) -> Self {
        Self {
            performance,
            energy,
            label: label.into(),
        }
    }

    /// At least as good on both axes and strictly better on one.
    pub fn dominates(&self, other: &TradeoffPoint) -> bool {
        self.performance >= other.performance
            && self.energy <= other.energy
            && (self.performance > other.performance || self.energy < other.energy)
    }
}

/// Non-dominated points in ascending energy order (input order among equal
/// energies). Exact duplicates dominate neither each other and are all kept.
pub fn pareto_front(points: &[TradeoffPoint]) -> Result<Vec<TradeoffPoint>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("pareto_front needs at least one point"));
    }
    if let Some(p) = points.iter().find(|p| !p.performance.is_finite() || !p.energy.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite point {:?}", p.label)));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].energy.total_cmp(&points[b].energy));

    let mut front = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        // Group of equal energy.
        let e = points[order[i]].energy;
        let mut j = i;
        while j < order.len() && points[order[j]].energy == e {
            j += 1;
        }
        let group = &order[i..j];
        let top = group.iter().map(|&k| points[k].performance).fold(f64::NEG_INFINITY, f64::max);
        if top > best {
            front.extend(group.iter().filter(|&&k| points[k].performance == top).map(|&k| points[k].clone()));
            best = top;
        }
        i = j;
    }
    Ok(front)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let pts = vec![
            TradeoffPoint::new(0.9, 100.0, "a"),
            TradeoffPoint::new(0.8, 50.0, "b"),
            TradeoffPoint::new(0.85, 120.0, "c"),
        ];
        let front = pareto_front(&pts).unwrap();
        let labels: Vec<&str> = front.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(labels, vec!["b", "a"]);
    }

    #[test]
    fn duplicates_and_singletons() {
        let one = vec![TradeoffPoint::new(0.5, 1.0, "x")];
        assert_eq!(pareto_front(&one).unwrap(), one);
        let twins = vec![TradeoffPoint::new(0.5, 1.0, "x"), TradeoffPoint::new(0.5, 1.0, "y")];
        assert_eq!(pareto_front(&twins).unwrap().len(), 2);
        // Equal performance, more energy: dominated.
        let pts = vec![TradeoffPoint::new(0.5, 1.0, "x"), TradeoffPoint::new(0.5, 2.0, "y")];
        assert_eq!(pareto_front(&pts).unwrap().len(), 1);
        assert!(pareto_front(&[]).is_err());
    }
}
