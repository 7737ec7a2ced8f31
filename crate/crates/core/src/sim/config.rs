use crate::enhanced::Techniques;
use crate::error::{Error, Result};
use crate::geometry::Preset;
use crate::kinematics::kmh;
use crate::rdica::{GaParams, SeparationPolicy};
use serde::{Deserialize, Deserializer, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Dica,
    Enhanced,
    Rdica,
    FixedTl,
    ReactiveTl,
}

impl Controller {
    pub const ALL: [Controller; 5] =
        [Controller::Dica, Controller::Enhanced, Controller::Rdica, Controller::FixedTl, Controller::ReactiveTl];

    pub fn name(self) -> &'static str {
        match self {
            Controller::Dica => "dica",
            Controller::Enhanced => "enhanced",
            Controller::Rdica => "rdica",
            Controller::FixedTl => "fixed_tl",
            Controller::ReactiveTl => "reactive_tl",
        }
    }

    pub fn is_signal(self) -> bool {
        matches!(self, Controller::FixedTl | Controller::ReactiveTl)
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Controller {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Controller::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("controller", format!("unknown controller `{s}`")))
    }
}

/// Detector used by the ICA inside rdica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RdicaDetector {
    Exhaustive,
    Enhanced,
}

/// Parse a speed: a bare number is m/s; strings may carry `km/h` or `m/s`.
pub fn parse_speed(s: &str) -> Result<f64> {
    let t = s.trim();
    let (num, factor) = if let Some(x) = t.strip_suffix("km/h").or_else(|| t.strip_suffix("kmh")) {
        (x, 1.0 / 3.6)
    } else if let Some(x) = t.strip_suffix("m/s") {
        (x, 1.0)
    } else {
        (t, 1.0)
    };
    num.trim()
        .parse::<f64>()
        .map(|v| v * factor)
        .map_err(|_| Error::config("v_m", format!("cannot parse speed `{s}`")))
}

fn de_speed<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(s) => parse_speed(&s).map_err(serde::de::Error::custom),
    }
}

fn de_preset<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Preset, D::Error> {
    let s = String::deserialize(d)?;
    Preset::parse(&s).map_err(serde::de::Error::custom)
}

fn ser_preset<S: serde::Serializer>(p: &Preset, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(p.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(deserialize_with = "de_preset", serialize_with = "ser_preset")]
    pub preset: Preset,
    pub h: f64,
    /// Spawning period, seconds.
    pub duration: f64,
    /// Expected vehicles per 10 minutes over all approaches.
    pub volume: f64,
    /// Per-step, per-approach spawn probability; overrides `volume`.
    pub p_v: Option<f64>,
    /// Relative volume of the S, E, N, W approaches.
    pub approach_weights: [f64; 4],
    pub p_l: f64,
    pub p_s: f64,
    pub p_r: f64,
    pub p_ev: f64,
    #[serde(deserialize_with = "de_speed")]
    pub v_m: f64,
    pub comm_region: f64,
    pub controller: Controller,
    pub seed: u64,
    /// Stop spawning after this many vehicles.
    pub spawn_limit: Option<usize>,
    /// Keep running after `duration` until every vehicle has left.
    pub drain: bool,
    /// Upper bound on the drain phase, seconds.
    pub drain_limit: f64,
    /// Run the enhanced pipeline with a single technique.
    pub ablate: Option<String>,
    pub delta_c: f64,
    pub delta_s: f64,
    pub ga_pop: usize,
    pub ga_generations: usize,
    pub ga_no_change: usize,
    pub ga_crossover: f64,
    pub ga_mutation: f64,
    pub strict_priority: bool,
    pub rdica_detector: RdicaDetector,
    /// Green extension of the reactive light, seconds.
    pub ev_extension: f64,
    pub lost_time: f64,
    pub yellow: f64,
    /// Speed below which a vehicle at the line counts as stopped.
    pub stop_speed: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            preset: Preset::ThreeInTwoOut,
            h: 0.05,
            duration: 600.0,
            volume: 300.0,
            p_v: None,
            approach_weights: [1.0; 4],
            p_l: 0.2,
            p_s: 0.6,
            p_r: 0.2,
            p_ev: 0.0,
            v_m: kmh(70.0),
            comm_region: 50.0,
            controller: Controller::Dica,
            seed: 12,
            spawn_limit: None,
            drain: false,
            drain_limit: 3600.0,
            ablate: None,
            delta_c: 2.0,
            delta_s: 1.0,
            ga_pop: 100,
            ga_generations: 100,
            ga_no_change: 10,
            ga_crossover: 0.85,
            ga_mutation: 0.05,
            strict_priority: false,
            rdica_detector: RdicaDetector::Exhaustive,
            ev_extension: 10.0,
            lost_time: 16.0,
            yellow: 3.0,
            stop_speed: 0.1,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| {
            let field = e.message().split('`').nth(1).unwrap_or("config").to_string();
            Error::Config { field, msg: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Spawn probability per step for each approach.
    pub fn spawn_probabilities(&self) -> [f64; 4] {
        let total: f64 = self.approach_weights.iter().sum();
        let base = match self.p_v {
            Some(p) => 4.0 * p,
            None => self.volume * self.h / 600.0,
        };
        let mut out = [0.0; 4];
        for (o, w) in out.iter_mut().zip(self.approach_weights) {
            *o = if total > 0.0 { base * w / total } else { 0.0 };
        }
        out
    }

    /// Arrival rates per approach in veh/h.
    pub fn hourly_rates(&self) -> [f64; 4] {
        self.spawn_probabilities().map(|p| p / self.h * 3600.0)
    }

    pub fn techniques(&self) -> Result<Techniques> {
        match &self.ablate {
            None => Ok(Techniques::all()),
            Some(name) => Techniques::only(name).map_err(|_| Error::config("ablate", format!("unknown technique `{name}`"))),
        }
    }

    pub fn ga_params(&self) -> GaParams {
        GaParams {
            n_pop: self.ga_pop,
            n_max: self.ga_generations,
            n_no_change: self.ga_no_change,
            p_c: self.ga_crossover,
            p_m: self.ga_mutation,
            seed: self.seed,
        }
    }

    pub fn separation(&self) -> SeparationPolicy {
        SeparationPolicy { delta_c: self.delta_c, delta_s: self.delta_s }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::config(name, format!("probability {p} outside [0, 1]")))
            }
        };
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be positive, got {x}")))
            }
        };
        positive("h", self.h)?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::config("duration", format!("must be non-negative, got {}", self.duration)));
        }
        if !(self.volume >= 0.0 && self.volume.is_finite()) {
            return Err(Error::config("volume", format!("must be non-negative, got {}", self.volume)));
        }
        if let Some(p) = self.p_v {
            prob("p_v", p)?;
        }
        if self.approach_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::config("approach_weights", "weights must be non-negative"));
        }
        for (name, p) in [("p_l", self.p_l), ("p_s", self.p_s), ("p_r", self.p_r), ("p_ev", self.p_ev)] {
            prob(name, p)?;
        }
        let sum = self.p_l + self.p_s + self.p_r;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("p_l", format!("p_l + p_s + p_r must equal 1, got {sum}")));
        }
        if self.spawn_probabilities().iter().any(|&p| p > 1.0) {
            return Err(Error::config("volume", "per-step spawn probability exceeds 1"));
        }
        positive("v_m", self.v_m)?;
        if !(self.comm_region > 10.0 && self.comm_region.is_finite()) {
            return Err(Error::config("comm_region", format!("must exceed two vehicle lengths, got {}", self.comm_region)));
        }
        if self.drain_limit < 0.0 {
            return Err(Error::config("drain_limit", "must be non-negative"));
        }
        if self.ablate.is_some() && self.controller != Controller::Enhanced {
            return Err(Error::config("ablate", "only applies to the enhanced controller"));
        }
        self.techniques()?;
        self.separation().validate().map_err(|e| Error::config("delta_c", e.to_string()))?;
        self.ga_params().validate().map_err(|e| Error::config("ga_pop", e.to_string()))?;
        positive("ev_extension", self.ev_extension)?;
        positive("lost_time", self.lost_time)?;
        positive("yellow", self.yellow)?;
        positive("stop_speed", self.stop_speed)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speeds_with_units() {
        assert!((parse_speed("70 km/h").unwrap() - 19.444444444444443).abs() < 1e-12);
        assert_eq!(parse_speed("12 m/s").unwrap(), 12.0);
        assert_eq!(parse_speed("3").unwrap(), 3.0);
        assert!(parse_speed("fast").is_err());
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let cfg = ScenarioConfig::from_toml_str("v_m = \"70 km/h\"\ncontroller = \"enhanced\"\nvolume = 200\n").unwrap();
        assert_eq!(cfg.controller, Controller::Enhanced);
        assert_eq!(ScenarioConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
        let e = ScenarioConfig::from_toml_str("p_l = 0.5\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref field, .. } if field == "p_l"), "{e}");
        let e = ScenarioConfig::from_toml_str("bogus = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref field, .. } if field == "bogus"), "{e}");
    }

    #[test]
    fn spawn_rate_matches_volume() {
        let cfg = ScenarioConfig { volume: 300.0, ..Default::default() };
        let p = cfg.spawn_probabilities();
        let expected: f64 = p.iter().sum::<f64>() * cfg.duration / cfg.h;
        assert!((expected - 300.0).abs() < 1e-9);
    }
}
