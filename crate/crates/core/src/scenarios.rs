//! Scenario files shipped with the crate, embedded at compile time.

use crate::config::{parse_scenario, ScenarioConfig};

pub const PAPER_BASE: &str = include_str!("../scenarios/paper_base.json");
pub const NO_INFLUENCE: &str = include_str!("../scenarios/no_influence.json");
pub const EQUAL_INFLUENCE: &str = include_str!("../scenarios/equal_influence.json");
pub const HIGH_VOLATILITY: &str = include_str!("../scenarios/high_volatility.json");
pub const DEPHASED: &str = include_str!("../scenarios/dephased.json");
pub const TWO_ZONE: &str = include_str!("../scenarios/two_zone.json");
pub const TWO_IDENTICAL: &str = include_str!("../scenarios/two_identical.json");
pub const ZERO: &str = include_str!("../scenarios/zero.json");

fn load(text: &str) -> ScenarioConfig {
    parse_scenario(text).expect("shipped scenario parses")
}

/// One prosumer region, base parameter set, price influence equal to the rest of the world.
pub fn paper_base() -> ScenarioConfig {
    load(PAPER_BASE)
}

/// Prosumers are price takers (`prosumer_weight = 0`).
pub fn no_influence() -> ScenarioConfig {
    load(NO_INFLUENCE)
}

/// Full price influence with `p1` rescaled to keep the no-storage mean price level.
pub fn equal_influence() -> ScenarioConfig {
    load(EQUAL_INFLUENCE)
}

/// `equal_influence` with prosumer volatilities scaled by 2.5.
pub fn high_volatility() -> ScenarioConfig {
    load(HIGH_VOLATILITY)
}

/// Prosumer seasonality in opposition to the rest of the world.
pub fn dephased() -> ScenarioConfig {
    load(DEPHASED)
}

/// Two equal prosumer zones, one in phase and one de-phased.
pub fn two_zone() -> ScenarioConfig {
    load(TWO_ZONE)
}

pub fn two_identical() -> ScenarioConfig {
    load(TWO_IDENTICAL)
}

/// All processes identically zero, `p0 = A1 = B1 = 0`.
pub fn zero() -> ScenarioConfig {
    load(ZERO)
}

pub fn by_name(name: &str) -> Option<ScenarioConfig> {
    let text = match name {
        "paper_base" => PAPER_BASE,
        "no_influence" => NO_INFLUENCE,
        "equal_influence" => EQUAL_INFLUENCE,
        "high_volatility" => HIGH_VOLATILITY,
        "dephased" => DEPHASED,
        "two_zone" => TWO_ZONE,
        "two_identical" => TWO_IDENTICAL,
        "zero" => ZERO,
        _ => return None,
    };
    Some(load(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_shipped_scenarios_validate() {
        for name in [
            "paper_base",
            "no_influence",
            "equal_influence",
            "high_volatility",
            "dephased",
            "two_zone",
            "two_identical",
            "zero",
        ] {
            let cfg = by_name(name).unwrap();
            assert!(cfg.validate().is_empty(), "{name}: {:?}", cfg.validate());
        }
    }
}
