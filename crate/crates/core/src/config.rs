//! Scenario documents.
//!
//! A scenario is one TOML file with the sections `timing`, `classes`,
//! `arrival`, `protocol` and an optional `sweep`. Frame and slot lengths are
//! written in milliseconds, the other durations in microseconds and powers in
//! watts. Missing fields take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::GridAxes;
use crate::sim::Variant;
use crate::timing::{ClassConfig, Nanos, TimingConstants};

/// Which protocols a scenario runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantChoice {
    #[default]
    Hybrid,
    Csma,
    Tdma,
    All,
}

impl VariantChoice {
    pub fn variants(self) -> Vec<Variant> {
        match self {
            VariantChoice::Hybrid => vec![Variant::Hybrid],
            VariantChoice::Csma => vec![Variant::Csma],
            VariantChoice::Tdma => vec![Variant::Tdma],
            VariantChoice::All => Variant::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for VariantChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(VariantChoice::All),
            other => Ok(match other.parse::<Variant>()? {
                Variant::Hybrid => VariantChoice::Hybrid,
                Variant::Csma => VariantChoice::Csma,
                Variant::Tdma => VariantChoice::Tdma,
            }),
        }
    }
}

/// Optimizer search lattice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridChoice {
    /// `alpha` in {0.5, ..., 1, 2, ..., 5}, `p_inl` in {0.1, ..., 1}.
    #[default]
    Table,
    /// The table lattice plus `p_inl` down to 1e-4.
    Extended,
}

impl GridChoice {
    pub fn axes(self) -> GridAxes {
        match self {
            GridChoice::Table => GridAxes::default(),
            GridChoice::Extended => GridAxes::extended(),
        }
    }
}

/// Optional sweep axes. An empty axis keeps the scenario's own value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_inl: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k: Vec<u64>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty() && self.p_inl.is_empty() && self.lambda.is_empty() && self.k.is_empty()
    }
}

/// A fully resolved experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub timing: TimingConstants,
    pub classes: ClassConfig,
    pub variant: VariantChoice,
    pub frames: usize,
    pub seeds: Vec<u64>,
    /// CSMA baseline probability; `None` uses `p_inl`.
    pub csma_p: Option<f64>,
    pub grid: GridChoice,
    pub sweep: Option<SweepAxes>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            timing: TimingConstants::default(),
            classes: ClassConfig::default(),
            variant: VariantChoice::default(),
            frames: 200,
            seeds: (1..=10).collect(),
            csma_p: None,
            grid: GridChoice::default(),
            sweep: None,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.timing.validate()?;
        self.classes.validate()?;
        if self.frames == 0 {
            return Err(Error::InvalidConfig("frames must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if let Some(p) = self.csma_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidConfig(format!("csma_p = {p} not in (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn csma_probability(&self) -> f64 {
        self.csma_p.unwrap_or(self.classes.p_inl)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: Document = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let scenario = doc.into_scenario();
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(&Document::from_scenario(self)).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default = "default_name")]
    name: String,
    #[serde(default)]
    timing: TimingDoc,
    #[serde(default)]
    classes: ClassesDoc,
    #[serde(default)]
    arrival: ArrivalDoc,
    #[serde(default)]
    protocol: ProtocolDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepAxes>,
}

fn default_name() -> String {
    Scenario::default().name
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TimingDoc {
    t_frame: f64,
    t_r: f64,
    t_req: f64,
    t_nof: f64,
    t_anc: f64,
    t_ack: f64,
    sifs: f64,
    bifs: f64,
    delta_idle: f64,
    p_tx: f64,
    p_rx: f64,
    p_idle: f64,
}

impl Default for TimingDoc {
    fn default() -> Self {
        TimingDoc::from(&TimingConstants::default())
    }
}

impl From<&TimingConstants> for TimingDoc {
    fn from(tc: &TimingConstants) -> Self {
        Self {
            t_frame: tc.t_frame.as_ms(),
            t_r: tc.t_r.as_ms(),
            t_req: tc.t_req.as_us(),
            t_nof: tc.t_nof.as_us(),
            t_anc: tc.t_anc.as_us(),
            t_ack: tc.t_ack.as_us(),
            sifs: tc.sifs.as_us(),
            bifs: tc.bifs.as_us(),
            delta_idle: tc.delta_idle.as_us(),
            p_tx: tc.p_tx,
            p_rx: tc.p_rx,
            p_idle: tc.p_idle,
        }
    }
}

impl TimingDoc {
    fn to_constants(&self) -> TimingConstants {
        TimingConstants {
            t_frame: Nanos::from_ms_f64(self.t_frame),
            t_r: Nanos::from_ms_f64(self.t_r),
            t_req: Nanos::from_us_f64(self.t_req),
            t_nof: Nanos::from_us_f64(self.t_nof),
            t_anc: Nanos::from_us_f64(self.t_anc),
            t_ack: Nanos::from_us_f64(self.t_ack),
            sifs: Nanos::from_us_f64(self.sifs),
            bifs: Nanos::from_us_f64(self.bifs),
            delta_idle: Nanos::from_us_f64(self.delta_idle),
            p_tx: self.p_tx,
            p_rx: self.p_rx,
            p_idle: self.p_idle,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ClassesDoc {
    sizes: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    block_order: Option<Vec<u32>>,
}

impl Default for ClassesDoc {
    fn default() -> Self {
        Self { sizes: ClassConfig::default().class_sizes, block_order: None }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ArrivalDoc {
    lambda: f64,
}

impl Default for ArrivalDoc {
    fn default() -> Self {
        Self { lambda: ClassConfig::default().lambda }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ProtocolDoc {
    p_inl: f64,
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_escalation: Option<f64>,
    variant: VariantChoice,
    frames: usize,
    seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csma_p: Option<f64>,
    grid: GridChoice,
}

impl Default for ProtocolDoc {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            p_inl: s.classes.p_inl,
            alpha: s.classes.alpha,
            alpha_escalation: None,
            variant: s.variant,
            frames: s.frames,
            seeds: s.seeds,
            csma_p: None,
            grid: s.grid,
        }
    }
}

impl Document {
    fn from_scenario(s: &Scenario) -> Self {
        Self {
            name: s.name.clone(),
            timing: TimingDoc::from(&s.timing),
            classes: ClassesDoc { sizes: s.classes.class_sizes.clone(), block_order: s.classes.block_order.clone() },
            arrival: ArrivalDoc { lambda: s.classes.lambda },
            protocol: ProtocolDoc {
                p_inl: s.classes.p_inl,
                alpha: s.classes.alpha,
                alpha_escalation: s.classes.alpha_escalation,
                variant: s.variant,
                frames: s.frames,
                seeds: s.seeds.clone(),
                csma_p: s.csma_p,
                grid: s.grid,
            },
            sweep: s.sweep.clone(),
        }
    }

    fn into_scenario(self) -> Scenario {
        Scenario {
            name: self.name,
            timing: self.timing.to_constants(),
            classes: ClassConfig {
                class_sizes: self.classes.sizes,
                p_inl: self.protocol.p_inl,
                alpha: self.protocol.alpha,
                alpha_escalation: self.protocol.alpha_escalation,
                lambda: self.arrival.lambda,
                block_order: self.classes.block_order,
            },
            variant: self.protocol.variant,
            frames: self.protocol.frames,
            seeds: self.protocol.seeds,
            csma_p: self.protocol.csma_p,
            grid: self.protocol.grid,
            sweep: self.sweep,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(Scenario::from_toml_str("").unwrap(), Scenario::default());
    }

    #[test]
    fn default_round_trip() {
        let s = Scenario::default();
        let text = s.to_toml_string().unwrap();
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
    }

    #[test]
    fn partial_document() {
        let s = Scenario::from_toml_str(
            "[classes]\nsizes = [1180, 10, 10]\n[arrival]\nlambda = 2.0\n[protocol]\nvariant = \"all\"\nseeds = [3]\n",
        )
        .unwrap();
        assert_eq!(s.classes.class_sizes, vec![1180, 10, 10]);
        assert_eq!(s.classes.lambda, 2.0);
        assert_eq!(s.variant.variants().len(), 3);
        assert_eq!(s.timing, TimingConstants::default());
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(Scenario::from_toml_str("[timing]\nt_frame = \"x\""), Err(Error::Parse(_))));
        assert!(matches!(Scenario::from_toml_str("[timing]\nbogus = 1"), Err(Error::Parse(_))));
        assert!(matches!(Scenario::from_toml_str("[protocol]\nseeds = [1, 1]"), Err(Error::InvalidConfig(_))));
        assert!(Scenario::from_toml_str("[protocol]\np_inl = 0.0").is_err());
    }

    #[test]
    fn variant_choice_parsing() {
        assert_eq!("ALL".parse::<VariantChoice>().unwrap(), VariantChoice::All);
        assert_eq!("tdma".parse::<VariantChoice>().unwrap(), VariantChoice::Tdma);
        assert!("x".parse::<VariantChoice>().is_err());
    }
}
