//! Scenario files: JSON documents describing one sweep.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{LargeScaleProfile, SystemTopology};
use crate::detect::{Constellation, DetectorFamily, DetectorSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Ber,
    Rate,
    Flops,
}

/// Users per class, either listed or split evenly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassSpec {
    List(Vec<usize>),
    Uniform(UniformClasses),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformClasses {
    pub count: usize,
    pub total_users: usize,
}

/// Receive antenna layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase", deny_unknown_fields)]
pub enum AntennaLayout {
    /// `N_B` base-station antennas and `n_heads` heads of `q` antennas.
    Fixed {
        n_b: usize,
        n_heads: usize,
        q: usize,
    },
    /// `n_r` antennas in total, `bs_fraction` of them at the base station
    /// and the rest split evenly over the heads.
    Split {
        n_r: usize,
        n_heads: usize,
        bs_fraction: f64,
    },
    /// As `Split`, with `N_r = rx_per_tx · N_t`.
    Scaled {
        rx_per_tx: usize,
        n_heads: usize,
        bs_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub classes: ClassSpec,
    pub tx_per_user: usize,
    pub antennas: AntennaLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    NR,
    NClasses,
    NUsers,
    TxPerUser,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::NR => "n_r",
            SweepAxis::NClasses => "n_classes",
            SweepAxis::NUsers => "n_users",
            SweepAxis::TxPerUser => "tx_per_user",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Operating point when the axis is not SNR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

/// Monte Carlo sizes per sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trials {
    /// Channel realizations.
    pub realizations: usize,
    /// Symbol vectors per realization (BER only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_realizations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_vectors: Option<usize>,
}

impl Trials {
    /// `(realizations, vectors)` at desk or full scale.
    pub fn scale(&self, full: bool) -> (usize, usize) {
        let vectors = self.vectors.unwrap_or(0);
        if full {
            (
                self.full_realizations.unwrap_or(self.realizations),
                self.full_vectors.unwrap_or(vectors),
            )
        } else {
            (self.realizations, vectors)
        }
    }
}

fn default_signal_power() -> f64 {
    1.0
}

fn is_default_signal_power(v: &f64) -> bool {
    *v == 1.0
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub kind: ScenarioKind,
    pub topology: TopologySpec,
    /// Required for BER and rate sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<LargeScaleProfile>,
    /// `bpsk`, `qpsk` or `16qam`; also fixes `M` in the SNR definition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constellation: Option<String>,
    pub detectors: Vec<DetectorSpec>,
    pub sweep: Sweep,
    pub trials: Trials,
    pub seed: u64,
    /// Fixed `σ_n²` replacing the SNR-derived value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_override: Option<f64>,
    /// `σ_s²`.
    #[serde(
        default = "default_signal_power",
        skip_serializing_if = "is_default_signal_power"
    )]
    pub signal_power: f64,
    /// FLOP ledgers treat decouplers as stored across vectors.
    #[serde(default, skip_serializing_if = "is_false")]
    pub cache_decouplers: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Topology and operating SNR of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub topology: SystemTopology,
    pub snr_db: Option<f64>,
}

fn invalid(message: impl Into<String>) -> Error {
    Error::Validation(message.into())
}

fn as_count(axis: SweepAxis, value: f64) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(invalid(format!(
            "{axis} values must be positive integers, got {value}"
        )))
    }
}

fn split_layout(n_r: usize, n_heads: usize, bs_fraction: f64) -> Result<(usize, usize, usize)> {
    if !(0.0..=1.0).contains(&bs_fraction) {
        return Err(invalid(format!(
            "bs_fraction = {bs_fraction} outside [0, 1]"
        )));
    }
    let n_b = (bs_fraction * n_r as f64).round() as usize;
    let rest = n_r - n_b.min(n_r);
    match n_heads {
        0 if rest == 0 => Ok((n_r, 0, 0)),
        0 => Err(invalid(format!(
            "{rest} antennas left over with no remote heads"
        ))),
        d if rest.is_multiple_of(d) && rest > 0 => Ok((n_b, d, rest / d)),
        d => Err(invalid(format!(
            "{rest} remote antennas cannot be split evenly over {d} heads"
        ))),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn constellation(&self) -> Result<Option<Constellation>> {
        match &self.constellation {
            None => Ok(None),
            Some(name) => Constellation::by_name(name)
                .map(Some)
                .ok_or_else(|| invalid(format!("unknown constellation `{name}`"))),
        }
    }

    /// Checks every invariant, including each sweep point's topology.
    pub fn validate(&self) -> Result<()> {
        if self.detectors.is_empty() {
            return Err(invalid("at least one detector is required"));
        }
        let mut keys = Vec::new();
        for spec in &self.detectors {
            spec.validate()?;
            let key = (spec.label(), spec.mode);
            if keys.contains(&key) {
                return Err(invalid(format!(
                    "detector {} in {} mode listed twice",
                    key.0,
                    key.1.label()
                )));
            }
            keys.push(key);
            if self.kind == ScenarioKind::Rate && spec.family == DetectorFamily::MbSic {
                return Err(invalid("rate sweeps have no bound for mb-sic"));
            }
        }
        if self.sweep.values.is_empty() {
            return Err(invalid("sweep needs at least one value"));
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sweep values must be finite"));
        }
        let needs_snr = self.kind != ScenarioKind::Flops && self.noise_override.is_none();
        match (self.sweep.axis, self.sweep.snr_db) {
            (SweepAxis::SnrDb, Some(_)) => {
                return Err(invalid("sweep.snr_db is only for non-SNR axes"));
            }
            (SweepAxis::SnrDb, None) => {}
            (_, Some(snr)) if !snr.is_finite() => {
                return Err(invalid("sweep.snr_db must be finite"))
            }
            (_, None) if needs_snr => {
                return Err(invalid(format!(
                    "sweep over {} needs sweep.snr_db",
                    self.sweep.axis
                )));
            }
            _ => {}
        }
        if self.trials.realizations == 0 {
            return Err(invalid("trials.realizations must be >= 1"));
        }
        if matches!(self.trials.full_realizations, Some(0))
            || matches!(self.trials.full_vectors, Some(0))
        {
            return Err(invalid("full-scale trial counts must be >= 1"));
        }
        if let Some(sigma) = self.noise_override {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(invalid(format!(
                    "noise_override = {sigma} must be finite and >= 0"
                )));
            }
        }
        if !(self.signal_power >= 0.0 && self.signal_power.is_finite()) {
            return Err(invalid("signal_power must be finite and >= 0"));
        }
        let constellation = self.constellation()?;
        match self.kind {
            ScenarioKind::Ber | ScenarioKind::Rate => {
                let profile = self
                    .profile
                    .as_ref()
                    .ok_or_else(|| invalid("BER and rate sweeps need a profile"))?;
                profile.validate()?;
                if constellation.is_none() {
                    return Err(invalid("BER and rate sweeps need a constellation"));
                }
            }
            ScenarioKind::Flops => {}
        }
        if self.kind == ScenarioKind::Ber && self.trials.vectors.unwrap_or(0) == 0 {
            return Err(invalid("BER sweeps need trials.vectors >= 1"));
        }
        for &value in &self.sweep.values {
            self.point(value)?;
        }
        Ok(())
    }

    /// Resolves the topology and SNR of the point at `value`.
    pub fn point(&self, value: f64) -> Result<SweepPoint> {
        let axis = self.sweep.axis;
        let spec = &self.topology;
        let mut tx = spec.tx_per_user;
        let mut classes = spec.classes.clone();
        let mut layout = spec.antennas.clone();
        let mut snr_db = self.sweep.snr_db;
        match axis {
            SweepAxis::SnrDb => snr_db = Some(value),
            SweepAxis::TxPerUser => tx = as_count(axis, value)?,
            SweepAxis::NClasses | SweepAxis::NUsers => {
                let n = as_count(axis, value)?;
                match &mut classes {
                    ClassSpec::Uniform(u) if axis == SweepAxis::NClasses => u.count = n,
                    ClassSpec::Uniform(u) => u.total_users = n,
                    ClassSpec::List(_) => {
                        return Err(invalid(format!("{axis} sweeps need uniform classes")));
                    }
                }
            }
            SweepAxis::NR => {
                let n = as_count(axis, value)?;
                match &mut layout {
                    AntennaLayout::Split { n_r, .. } => *n_r = n,
                    _ => return Err(invalid("n_r sweeps need the split antenna layout")),
                }
            }
        }
        let users: Vec<usize> = match &classes {
            ClassSpec::List(list) => list.clone(),
            ClassSpec::Uniform(u) => {
                if u.count == 0 || u.total_users % u.count != 0 {
                    return Err(invalid(format!(
                        "{} users cannot be split evenly into {} classes",
                        u.total_users, u.count
                    )));
                }
                vec![u.total_users / u.count; u.count]
            }
        };
        if tx == 0 {
            return Err(invalid("tx_per_user must be >= 1"));
        }
        let n_t: usize = users.iter().sum::<usize>() * tx;
        let (n_b, n_heads, q) = match layout {
            AntennaLayout::Fixed { n_b, n_heads, q } => (n_b, n_heads, q),
            AntennaLayout::Split {
                n_r,
                n_heads,
                bs_fraction,
            } => split_layout(n_r, n_heads, bs_fraction)?,
            AntennaLayout::Scaled {
                rx_per_tx,
                n_heads,
                bs_fraction,
            } => split_layout(rx_per_tx * n_t, n_heads, bs_fraction)?,
        };
        let topology =
            SystemTopology::uniform(&users, tx, n_b, n_heads, q).map_err(|e| match e {
                Error::Dimension(m) => Error::Validation(format!("at {axis} = {value}: {m}")),
                other => other,
            })?;
        Ok(SweepPoint {
            value,
            topology,
            snr_db,
        })
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scenario::from_json(&text)
}
