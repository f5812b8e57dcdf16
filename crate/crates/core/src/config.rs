//! Problem instances: parameters, scenario-file parsing and validation.
//!
//! A scenario file is a JSON document with the top-level keys `regions`,
//! `rest_of_world`, `storage_cost`, `pricing`, `grid` and `monte_carlo`.
//! Parsing is done by hand over a [`serde_json::Value`] tree so that every
//! error names the dotted path of the offending key (`pricing.p1`,
//! `regions[1].ou.a`, ...).

use std::fmt;
use std::str::FromStr;

use serde_json::{json, Map, Value};
use thiserror::Error;

/// Tolerance on the population weights summing to one.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed scenario document: {0}")]
    Malformed(String),
    #[error("missing required key `{path}`")]
    Missing { path: String },
    #[error("wrong type at `{path}`: expected {expected}")]
    WrongType { path: String, expected: &'static str },
    #[error("invalid value at `{path}`: {reason}")]
    Invalid { path: String, reason: String },
}

/// Offset plus cosine seasonal profile `m0 + m1 cos(omega t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonalFn {
    pub offset: f64,
    pub amplitude: f64,
    /// Angular frequency in radians per day.
    pub omega: f64,
    pub phase: f64,
}

impl SeasonalFn {
    pub fn constant(level: f64) -> Self {
        Self { offset: level, amplitude: 0.0, omega: 0.0, phase: 0.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (self.omega * t + self.phase).cos()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { offset: self.offset * factor, amplitude: self.amplitude * factor, ..*self }
    }
}

/// Law of an initial condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialLaw {
    Fixed(f64),
    Gaussian { mean: f64, std: f64 },
}

impl InitialLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            InitialLaw::Fixed(v) => v,
            InitialLaw::Gaussian { mean, .. } => mean,
        }
    }

    pub fn std(&self) -> f64 {
        match *self {
            InitialLaw::Fixed(_) => 0.0,
            InitialLaw::Gaussian { std, .. } => std,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.std() == 0.0
    }
}

/// Seasonal Ornstein-Uhlenbeck net production
/// `dQ = -a (Q - mu(t)) dt + sigma dB + sigma_common dB0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OUParams {
    pub a: f64,
    pub sigma: f64,
    pub sigma_common: f64,
    pub seasonal: SeasonalFn,
    /// `None` means start at the seasonal level `mu(0)`.
    pub initial: Option<InitialLaw>,
}

impl OUParams {
    pub fn initial_law(&self) -> InitialLaw {
        self.initial.unwrap_or(InitialLaw::Fixed(self.seasonal.value(0.0)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    /// Population share `pi`.
    pub weight: f64,
    pub ou: OUParams,
    /// Demand-charge coefficient `K`.
    pub demand_charge: f64,
    pub initial_storage: InitialLaw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestOfWorld {
    pub ou: OUParams,
    /// `K0`; only shifts the rest-of-world cost by a control-independent amount.
    pub demand_charge: f64,
}

/// Quadratic storage costs
/// `L_S(s, a) = A2/2 s^2 + A1 s + C/2 a^2` and `g(s) = B2/2 (s - B1/B2)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageCostSpec {
    pub a2: f64,
    pub a1: f64,
    pub c: f64,
    pub b2: f64,
    pub b1: f64,
}

impl StorageCostSpec {
    pub fn running(&self, s: f64, alpha: f64) -> f64 {
        0.5 * self.a2 * s * s + self.a1 * s + 0.5 * self.c * alpha * alpha
    }

    pub fn terminal(&self, s: f64) -> f64 {
        let d = s - self.b1 / self.b2;
        0.5 * self.b2 * d * d
    }

    pub fn terminal_slope(&self, s: f64) -> f64 {
        self.b2 * s - self.b1
    }
}

/// Affine inverse demand `p(x) = p0 + p1 x`.
///
/// `prosumer_weight` is the mass of the prosumer population relative to the
/// rest of the world in the aggregate `x = -Q0 - w sum_g pi_g (Qbar_g - abar_g)`.
/// It defaults to one; zero makes prosumers pure price takers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingSpec {
    pub p0: f64,
    pub p1: f64,
    pub prosumer_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Self {
        Self { horizon, steps }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GameMode {
    /// Decentralized prosumers (mean field Nash equilibrium).
    Mfg,
    /// Central planner (mean field optimal control).
    Mfc,
}

impl GameMode {
    pub fn other(self) -> Self {
        match self {
            GameMode::Mfg => GameMode::Mfc,
            GameMode::Mfc => GameMode::Mfg,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GameMode::Mfg => "mfg",
            GameMode::Mfc => "mfc",
        }
    }
}

impl fmt::Display for GameMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GameMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mfg" => Ok(GameMode::Mfg),
            "mfc" => Ok(GameMode::Mfc),
            other => Err(format!("unknown mode `{other}` (expected mfg or mfc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloSpec {
    pub paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub regions: Vec<RegionSpec>,
    pub rest_of_world: RestOfWorld,
    pub storage: StorageCostSpec,
    pub pricing: PricingSpec,
    pub grid: TimeGrid,
    pub monte_carlo: MonteCarloSpec,
    /// Build the mean-field driver with `C + K` on the own-region term instead of `K`.
    pub paper_literal_b: bool,
}

/// One failed constraint, with the value that broke it.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: String,
    pub value: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated (actual: {})", self.constraint, self.value)
    }
}

impl ScenarioConfig {
    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.weight).collect()
    }

    /// Every exogenous process of the instance, rest of the world first.
    pub fn sources(&self) -> Vec<OUParams> {
        std::iter::once(self.rest_of_world.ou).chain(self.regions.iter().map(|r| r.ou)).collect()
    }

    pub fn with_grid_steps(mut self, steps: usize) -> Self {
        self.grid.steps = steps;
        self
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.monte_carlo.paths = paths;
        self
    }

    /// Sets every volatility (idiosyncratic and common, all regions and the
    /// rest of the world) to zero and pins random initial values at their means.
    pub fn deterministic(mut self) -> Self {
        let pin = |ou: &mut OUParams| {
            ou.sigma = 0.0;
            ou.sigma_common = 0.0;
            ou.initial = ou.initial.map(|law| InitialLaw::Fixed(law.mean()));
        };
        pin(&mut self.rest_of_world.ou);
        for r in &mut self.regions {
            pin(&mut r.ou);
            r.initial_storage = InitialLaw::Fixed(r.initial_storage.mean());
        }
        self
    }

    pub fn is_deterministic(&self) -> bool {
        let noiseless = |ou: &OUParams| {
            ou.sigma == 0.0 && ou.sigma_common == 0.0 && ou.initial_law().is_deterministic()
        };
        noiseless(&self.rest_of_world.ou)
            && self
                .regions
                .iter()
                .all(|r| noiseless(&r.ou) && r.initial_storage.is_deterministic())
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "regions": self.regions.iter().map(region_to_json).collect::<Vec<_>>(),
            "rest_of_world": {
                "ou": ou_to_json(&self.rest_of_world.ou),
                "demand_charge": self.rest_of_world.demand_charge,
            },
            "storage_cost": {
                "a2": self.storage.a2,
                "a1": self.storage.a1,
                "c": self.storage.c,
                "b2": self.storage.b2,
                "b1": self.storage.b1,
            },
            "pricing": {
                "p0": self.pricing.p0,
                "p1": self.pricing.p1,
                "prosumer_weight": self.pricing.prosumer_weight,
            },
            "grid": { "horizon": self.grid.horizon, "steps": self.grid.steps },
            "monte_carlo": { "paths": self.monte_carlo.paths, "seed": self.monte_carlo.seed },
            "paper_literal_b": self.paper_literal_b,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("scenario serializes")
    }
}

fn law_to_json(law: &InitialLaw) -> Value {
    match *law {
        InitialLaw::Fixed(v) => json!({ "value": v }),
        InitialLaw::Gaussian { mean, std } => json!({ "mean": mean, "std": std }),
    }
}

fn ou_to_json(ou: &OUParams) -> Value {
    let mut m = Map::new();
    m.insert("a".into(), json!(ou.a));
    m.insert("sigma".into(), json!(ou.sigma));
    m.insert("sigma_common".into(), json!(ou.sigma_common));
    m.insert(
        "seasonal".into(),
        json!({
            "offset": ou.seasonal.offset,
            "amplitude": ou.seasonal.amplitude,
            "omega": ou.seasonal.omega,
            "phase": ou.seasonal.phase,
        }),
    );
    if let Some(law) = &ou.initial {
        m.insert("initial".into(), law_to_json(law));
    }
    Value::Object(m)
}

fn region_to_json(r: &RegionSpec) -> Value {
    json!({
        "weight": r.weight,
        "ou": ou_to_json(&r.ou),
        "demand_charge": r.demand_charge,
        "initial_storage": law_to_json(&r.initial_storage),
    })
}

/// A JSON value together with its dotted path, for error reporting.
#[derive(Clone, Copy)]
struct Node<'a> {
    value: &'a Value,
    path: &'a str,
}

impl<'a> Node<'a> {
    fn child_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn object(&self) -> Result<&'a Map<String, Value>, ConfigError> {
        self.value
            .as_object()
            .ok_or_else(|| ConfigError::WrongType { path: self.path.to_string(), expected: "object" })
    }

    fn get(&self, key: &str) -> Result<Option<&'a Value>, ConfigError> {
        Ok(self.object()?.get(key))
    }

    fn req_f64(&self, key: &str) -> Result<f64, ConfigError> {
        let path = self.child_path(key);
        match self.get(key)? {
            None => Err(ConfigError::Missing { path }),
            Some(v) => as_f64(v, path),
        }
    }

    fn opt_f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key)? {
            None => Ok(default),
            Some(v) => as_f64(v, self.child_path(key)),
        }
    }

    fn req_u64(&self, key: &str) -> Result<u64, ConfigError> {
        let path = self.child_path(key);
        match self.get(key)? {
            None => Err(ConfigError::Missing { path }),
            Some(v) => v.as_u64().ok_or(ConfigError::WrongType { path, expected: "unsigned integer" }),
        }
    }

    fn opt_bool(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key)? {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or(ConfigError::WrongType {
                path: self.child_path(key),
                expected: "boolean",
            }),
        }
    }
}

fn as_f64(v: &Value, path: String) -> Result<f64, ConfigError> {
    let x = v.as_f64().ok_or(ConfigError::WrongType { path: path.clone(), expected: "number" })?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(ConfigError::Invalid { path, reason: "not finite".into() })
    }
}

fn with_child<T>(
    parent: Node<'_>,
    key: &str,
    f: impl FnOnce(Node<'_>) -> Result<T, ConfigError>,
) -> Result<T, ConfigError> {
    let path = parent.child_path(key);
    let value = parent.get(key)?.ok_or_else(|| ConfigError::Missing { path: path.clone() })?;
    f(Node { value, path: &path })
}

fn with_opt_child<T>(
    parent: Node<'_>,
    key: &str,
    f: impl FnOnce(Node<'_>) -> Result<T, ConfigError>,
) -> Result<Option<T>, ConfigError> {
    let path = parent.child_path(key);
    match parent.get(key)? {
        None => Ok(None),
        Some(value) => f(Node { value, path: &path }).map(Some),
    }
}

fn parse_law(node: Node<'_>) -> Result<InitialLaw, ConfigError> {
    let obj = node.object()?;
    if obj.contains_key("value") {
        Ok(InitialLaw::Fixed(node.req_f64("value")?))
    } else if obj.contains_key("mean") {
        Ok(InitialLaw::Gaussian { mean: node.req_f64("mean")?, std: node.req_f64("std")? })
    } else {
        Err(ConfigError::Missing { path: node.child_path("value") })
    }
}

fn parse_seasonal(node: Node<'_>) -> Result<SeasonalFn, ConfigError> {
    Ok(SeasonalFn {
        offset: node.req_f64("offset")?,
        amplitude: node.opt_f64("amplitude", 0.0)?,
        omega: node.opt_f64("omega", 0.0)?,
        phase: node.opt_f64("phase", 0.0)?,
    })
}

fn parse_ou(node: Node<'_>) -> Result<OUParams, ConfigError> {
    Ok(OUParams {
        a: node.req_f64("a")?,
        sigma: node.opt_f64("sigma", 0.0)?,
        sigma_common: node.opt_f64("sigma_common", 0.0)?,
        seasonal: with_child(node, "seasonal", parse_seasonal)?,
        initial: with_opt_child(node, "initial", parse_law)?,
    })
}

fn parse_region(node: Node<'_>) -> Result<RegionSpec, ConfigError> {
    Ok(RegionSpec {
        weight: node.req_f64("weight")?,
        ou: with_child(node, "ou", parse_ou)?,
        demand_charge: node.req_f64("demand_charge")?,
        initial_storage: with_opt_child(node, "initial_storage", parse_law)?
            .unwrap_or(InitialLaw::Fixed(0.0)),
    })
}

/// Parses a scenario document. Defaults: `rest_of_world.demand_charge = 0`,
/// `pricing.prosumer_weight = 1`, initial production at the seasonal level,
/// initial storage zero, `paper_literal_b = false`.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    let root = Node { value: &root, path: "" };
    root.object()?;

    let regions = with_child(root, "regions", |node| {
        let items = node
            .value
            .as_array()
            .ok_or(ConfigError::WrongType { path: node.path.to_string(), expected: "array" })?;
        items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let path = format!("regions[{i}]");
                parse_region(Node { value: v, path: &path })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let rest_of_world = with_child(root, "rest_of_world", |node| {
        Ok(RestOfWorld {
            ou: with_child(node, "ou", parse_ou)?,
            demand_charge: node.opt_f64("demand_charge", 0.0)?,
        })
    })?;

    let storage = with_child(root, "storage_cost", |node| {
        Ok(StorageCostSpec {
            a2: node.req_f64("a2")?,
            a1: node.req_f64("a1")?,
            c: node.req_f64("c")?,
            b2: node.req_f64("b2")?,
            b1: node.req_f64("b1")?,
        })
    })?;

    let pricing = with_child(root, "pricing", |node| {
        Ok(PricingSpec {
            p0: node.req_f64("p0")?,
            p1: node.req_f64("p1")?,
            prosumer_weight: node.opt_f64("prosumer_weight", 1.0)?,
        })
    })?;

    let grid = with_child(root, "grid", |node| {
        let steps = node.req_u64("steps")?;
        Ok(TimeGrid { horizon: node.req_f64("horizon")?, steps: steps as usize })
    })?;

    let monte_carlo = with_child(root, "monte_carlo", |node| {
        Ok(MonteCarloSpec { paths: node.req_u64("paths")? as usize, seed: node.req_u64("seed")? })
    })?;

    Ok(ScenarioConfig {
        regions,
        rest_of_world,
        storage,
        pricing,
        grid,
        monte_carlo,
        paper_literal_b: root.opt_bool("paper_literal_b", false)?,
    })
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, constraint: String, value: f64| {
        if !ok {
            out.push(Violation { constraint, value: format!("{value}") });
        }
    };

    check(!cfg.regions.is_empty(), "at least one region".into(), cfg.regions.len() as f64);
    let total: f64 = cfg.regions.iter().map(|r| r.weight).sum();
    check((total - 1.0).abs() <= WEIGHT_SUM_TOL, "sum of pi = 1".into(), total);

    let s = &cfg.storage;
    check(s.a2 > 0.0, "A2 > 0".into(), s.a2);
    check(s.c > 0.0, "C > 0".into(), s.c);
    check(s.b2 > 0.0, "B2 > 0".into(), s.b2);
    check(cfg.pricing.p1 > 0.0, "p1 > 0".into(), cfg.pricing.p1);
    check(cfg.pricing.prosumer_weight >= 0.0, "prosumer_weight >= 0".into(), cfg.pricing.prosumer_weight);
    check(cfg.rest_of_world.demand_charge >= 0.0, "K0 >= 0".into(), cfg.rest_of_world.demand_charge);

    check(cfg.grid.horizon > 0.0, "T > 0".into(), cfg.grid.horizon);
    check(cfg.grid.steps >= 2, "grid steps >= 2".into(), cfg.grid.steps as f64);
    check(cfg.monte_carlo.paths >= 1, "monte_carlo.paths >= 1".into(), cfg.monte_carlo.paths as f64);

    let mut check_ou = |name: &str, ou: &OUParams| {
        check(ou.a >= 0.0, format!("{name}: a >= 0"), ou.a);
        check(ou.sigma >= 0.0, format!("{name}: sigma >= 0"), ou.sigma);
        check(ou.sigma_common >= 0.0, format!("{name}: sigma_common >= 0"), ou.sigma_common);
        check(ou.initial_law().std() >= 0.0, format!("{name}: initial std >= 0"), ou.initial_law().std());
    };
    check_ou("rest_of_world", &cfg.rest_of_world.ou);
    for (i, r) in cfg.regions.iter().enumerate() {
        check_ou(&format!("regions[{i}]"), &r.ou);
    }

    let mut check = |ok: bool, constraint: String, value: f64| {
        if !ok {
            out.push(Violation { constraint, value: format!("{value}") });
        }
    };
    // the rest of the world only sees the common noise
    check(
        cfg.rest_of_world.ou.sigma == 0.0,
        "rest_of_world: sigma = 0 (common noise only)".into(),
        cfg.rest_of_world.ou.sigma,
    );
    for (i, r) in cfg.regions.iter().enumerate() {
        check(r.weight > 0.0, format!("regions[{i}]: pi > 0"), r.weight);
        check(r.demand_charge >= 0.0, format!("regions[{i}]: K >= 0"), r.demand_charge);
        check(s.c + r.demand_charge > 0.0, format!("regions[{i}]: C + K > 0"), s.c + r.demand_charge);
        check(
            r.initial_storage.std() >= 0.0,
            format!("regions[{i}]: initial storage std >= 0"),
            r.initial_storage.std(),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn paper_base_parses_and_validates() {
        let cfg = scenarios::paper_base();
        assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
        assert_eq!(cfg.num_regions(), 1);
        assert_eq!(cfg.storage.b1, -0.12 * cfg.storage.b2);
        assert_eq!(cfg.pricing.p0, 5.0);
        assert_eq!(cfg.regions[0].demand_charge, 10.0);
        // Step-1 denominator 1/(C + K + p1) is derivable: 1/20
        let delta = 1.0 / (cfg.storage.c + cfg.regions[0].demand_charge + cfg.pricing.p1);
        assert!((delta - 0.05).abs() < 1e-15);
    }

    #[test]
    fn missing_key_names_path() {
        let mut v = scenarios::paper_base().to_json();
        v["pricing"].as_object_mut().unwrap().remove("p1");
        let err = parse_scenario(&v.to_string()).unwrap_err();
        assert_eq!(err, ConfigError::Missing { path: "pricing.p1".into() });

        let mut v = scenarios::paper_base().to_json();
        v["regions"][0]["ou"].as_object_mut().unwrap().remove("a");
        let err = parse_scenario(&v.to_string()).unwrap_err();
        assert_eq!(err, ConfigError::Missing { path: "regions[0].ou.a".into() });
    }

    #[test]
    fn wrong_type_names_path() {
        let mut v = scenarios::paper_base().to_json();
        v["grid"]["steps"] = json!("many");
        let err = parse_scenario(&v.to_string()).unwrap_err();
        assert!(matches!(err, ConfigError::WrongType { ref path, .. } if path == "grid.steps"));
        assert!(matches!(parse_scenario("{ not json"), Err(ConfigError::Malformed(_))));
    }

    #[test]
    fn two_identical_regions() {
        let cfg = scenarios::two_identical();
        assert_eq!(cfg.num_regions(), 2);
        assert_eq!(cfg.weights(), vec![0.5, 0.5]);
        assert!(cfg.validate().is_empty());
    }

    #[test]
    fn strict_p1_boundary() {
        let mut cfg = scenarios::paper_base();
        cfg.pricing.p1 = 0.0;
        let v = cfg.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].constraint, "p1 > 0");
        assert_eq!(v[0].value, "0");
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut cfg = scenarios::two_identical();
        cfg.regions[0].weight = 0.6;
        cfg.regions[1].weight = 0.5;
        let v = cfg.validate();
        assert!(v.iter().any(|v| v.constraint == "sum of pi = 1"), "{v:?}");
    }

    #[test]
    fn sign_flips_rejected() {
        let base = scenarios::paper_base();
        let flips: [fn(&mut ScenarioConfig); 4] = [
            |c| c.pricing.p1 = -c.pricing.p1,
            |c| c.storage.a2 = -c.storage.a2,
            |c| c.storage.c = -c.storage.c,
            |c| c.storage.b2 = -c.storage.b2,
        ];
        for flip in flips {
            let mut cfg = base.clone();
            flip(&mut cfg);
            assert!(!cfg.validate().is_empty());
        }
    }

    #[test]
    fn defaults_applied() {
        let mut v = scenarios::paper_base().to_json();
        v["rest_of_world"].as_object_mut().unwrap().remove("demand_charge");
        v["pricing"].as_object_mut().unwrap().remove("prosumer_weight");
        v["regions"][0].as_object_mut().unwrap().remove("initial_storage");
        let cfg = parse_scenario(&v.to_string()).unwrap();
        assert_eq!(cfg.rest_of_world.demand_charge, 0.0);
        assert_eq!(cfg.pricing.prosumer_weight, 1.0);
        assert_eq!(cfg.regions[0].initial_storage, InitialLaw::Fixed(0.0));
        assert_eq!(cfg.regions[0].ou.initial_law(), InitialLaw::Fixed(cfg.regions[0].ou.seasonal.value(0.0)));
    }

    #[test]
    fn game_mode_round_trip() {
        for m in [GameMode::Mfg, GameMode::Mfc] {
            assert_eq!(m.as_str().parse::<GameMode>().unwrap(), m);
        }
        assert!("nash".parse::<GameMode>().is_err());
    }
}
