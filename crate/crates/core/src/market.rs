//! Affine inverse demand and spot-price evaluation.

use thiserror::Error;

use crate::config::{GameMode, PricingSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("empirical price needs at least one node")]
    NoNodes,
}

pub fn inverse_demand(pricing: &PricingSpec, x: f64) -> f64 {
    pricing.p0 + pricing.p1 * x
}

/// Slope of the pricing rule the controller plans against: `p1` for the
/// decentralized game, `2 p1` for the planner (`p(x) + x p'(x)`).
pub fn effective_slope(mode: GameMode, pricing: &PricingSpec) -> f64 {
    match mode {
        GameMode::Mfg => pricing.p1,
        GameMode::Mfc => 2.0 * pricing.p1,
    }
}

/// Mean-field state entering the price at one instant.
#[derive(Debug, Clone, Copy)]
pub struct PriceInput<'a> {
    pub q0: f64,
    pub qbar: &'a [f64],
    pub abar: &'a [f64],
    pub weights: &'a [f64],
}

impl PriceInput<'_> {
    /// `x = -Q0 - w sum_g pi_g (Qbar_g - abar_g)`.
    pub fn aggregate(&self, prosumer_weight: f64) -> f64 {
        let net: f64 = self
            .weights
            .iter()
            .zip(self.qbar.iter().zip(self.abar))
            .map(|(pi, (q, a))| pi * (q - a))
            .sum();
        -self.q0 - prosumer_weight * net
    }
}

pub fn spot_price_mean_field(pricing: &PricingSpec, input: &PriceInput) -> f64 {
    inverse_demand(pricing, input.aggregate(pricing.prosumer_weight))
}

/// Price from a finite population of `(Q^i, alpha^i)` pairs.
pub fn spot_price_empirical(pricing: &PricingSpec, q0: f64, nodes: &[(f64, f64)]) -> Result<f64, MarketError> {
    if nodes.is_empty() {
        return Err(MarketError::NoNodes);
    }
    let net = nodes.iter().map(|(q, a)| q - a).sum::<f64>() / nodes.len() as f64;
    Ok(inverse_demand(pricing, -q0 - pricing.prosumer_weight * net))
}
