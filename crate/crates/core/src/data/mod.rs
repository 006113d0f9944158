//! Demonstrations: ingestion, time alignment, EMG conditioning, observation
//! prefixes, and a synthetic generator.

mod csv_io;
pub mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{ChannelLayout, ObservedSample, PartialObservation, Role};

pub use csv_io::{
    load_dataset, load_demonstration, load_demonstrations, read_prediction, write_demonstration,
    write_prediction, PredictedChannel, PredictionTable,
};

/// Default EMG envelope window, in samples.
pub const DEFAULT_EMG_WINDOW: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub role: Role,
    pub values: Vec<f64>,
}

/// A uniformly sampled multichannel recording of one task execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    channels: Vec<Channel>,
    sample_period: f64,
    label: Option<String>,
}

impl Demonstration {
    pub fn new(channels: Vec<Channel>, sample_period: f64, label: Option<String>) -> Result<Self> {
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        let len = channels.first().map_or(0, |c| c.values.len());
        if len < 2 {
            return Err(Error::Schema("a demonstration needs at least two samples".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &channels {
            if c.values.len() != len {
                return Err(Error::Schema(format!(
                    "channel `{}` has {} samples, expected {len}",
                    c.name,
                    c.values.len()
                )));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate channel `{}`", c.name)));
            }
        }
        Ok(Self {
            channels,
            sample_period,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.channels[0].values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    /// `len * sample_period`.
    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.sample_period
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn set_label(&mut self, label: Option<String>) {
        self.label = label;
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|c| c.name.as_str())
    }

    /// Layout built from the channel roles in file order.
    pub fn layout(&self) -> Result<ChannelLayout> {
        let pick = |role| {
            self.channels
                .iter()
                .filter(|c| c.role == role)
                .map(|c| c.name.clone())
                .collect()
        };
        ChannelLayout::new(pick(Role::HumanPose), pick(Role::HumanEmg), pick(Role::Robot))
    }

    /// Applies `f` to every channel with the given role.
    pub fn map_role(&self, role: Role, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Self> {
        let channels = self
            .channels
            .iter()
            .map(|c| {
                Ok(Channel {
                    values: if c.role == role { f(&c.values)? } else { c.values.clone() },
                    ..c.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Demonstration::new(channels, self.sample_period, self.label.clone())
    }
}

/// Linearly interpolates every channel onto `t_norm` evenly spaced samples
/// over the original time span. Returns the aligned demonstration and the
/// original duration.
pub fn resample(demo: &Demonstration, t_norm: usize) -> Result<(Demonstration, f64)> {
    if t_norm < 2 {
        return Err(Error::InvalidParameter(format!("t_norm must be at least 2, got {t_norm}")));
    }
    let len = demo.len();
    let last = (len - 1) as f64;
    let denom = (t_norm - 1) as f64;
    let positions: Vec<(usize, f64)> = (0..t_norm)
        .map(|k| {
            let u = (k * (len - 1)) as f64 / denom;
            let i = (u.floor() as usize).min(len - 1);
            (i, u - i as f64)
        })
        .collect();
    let channels = demo
        .channels
        .iter()
        .map(|c| {
            let values = positions
                .iter()
                .map(|&(i, frac)| {
                    if frac == 0.0 || i + 1 >= len {
                        c.values[i]
                    } else {
                        c.values[i] * (1.0 - frac) + c.values[i + 1] * frac
                    }
                })
                .collect();
            Channel {
                values,
                ..c.clone()
            }
        })
        .collect();
    let period = demo.sample_period * last / denom;
    let aligned = Demonstration::new(channels, period, demo.label.clone())?;
    Ok((aligned, demo.duration()))
}

/// Full-wave rectification followed by a centered moving average; windows
/// shrink at the edges.
pub fn preprocess_emg(raw: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window > raw.len() {
        return Err(Error::InvalidParameter(format!(
            "envelope window must be in 1..={}, got {window}",
            raw.len()
        )));
    }
    let mut prefix = Vec::with_capacity(raw.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in raw {
        acc += v.abs();
        prefix.push(acc);
    }
    let back = (window - 1) / 2;
    let ahead = window / 2;
    Ok((0..raw.len())
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + ahead).min(raw.len() - 1);
            ((prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64).max(0.0)
        })
        .collect())
}

/// Observation-noise variances assigned per human role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationNoise {
    pub pose: f64,
    pub emg: f64,
}

impl ObservationNoise {
    /// Same variance for both roles.
    pub fn uniform(variance: f64) -> Self {
        Self {
            pose: variance,
            emg: variance,
        }
    }

    pub fn for_role(&self, role: Role) -> Option<f64> {
        match role {
            Role::HumanPose => Some(self.pose),
            Role::HumanEmg => Some(self.emg),
            Role::Robot => None,
        }
    }
}

impl Default for ObservationNoise {
    fn default() -> Self {
        Self::uniform(DEFAULT_OBS_NOISE)
    }
}

/// Default recognition-time noise variance per observed channel.
pub const DEFAULT_OBS_NOISE: f64 = 1e-2;

/// Keeps the first `floor(ratio * T)` samples of the human channels.
/// Robot channels are always dropped; EMG channels unless `include_emg`.
pub fn truncate_observation(
    demo: &Demonstration,
    ratio: f64,
    include_emg: bool,
    noise: ObservationNoise,
) -> Result<PartialObservation> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!("ratio must be in [0, 1], got {ratio}")));
    }
    let keep = observed_prefix_len(ratio, demo.len());
    let kept: Vec<&Channel> = demo
        .channels
        .iter()
        .filter(|c| match c.role {
            Role::HumanPose => true,
            Role::HumanEmg => include_emg,
            Role::Robot => false,
        })
        .collect();
    let samples = (0..keep)
        .map(|k| ObservedSample {
            time: k as f64 * demo.sample_period,
            values: kept.iter().map(|c| (c.name.clone(), c.values[k])).collect(),
        })
        .collect();
    let noise_map: BTreeMap<String, f64> = kept
        .iter()
        .filter_map(|c| noise.for_role(c.role).map(|v| (c.name.clone(), v)))
        .collect();
    PartialObservation::new(samples, noise_map, keep as f64 * demo.sample_period)
}

/// `floor(ratio * len)`, tolerant of representation error in `ratio`.
pub fn observed_prefix_len(ratio: f64, len: usize) -> usize {
    ((ratio * len as f64 + 1e-9).floor() as usize).min(len)
}
