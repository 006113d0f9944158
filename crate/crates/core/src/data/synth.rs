//! Synthetic multi-task hand-over data with known generators.
//!
//! Every curve is a weighted sum of a small normalized Gaussian basis. Pose
//! channels come from a shared family that `pose_overlap` pulls toward
//! per-task curves; EMG channels are task-specific envelopes whose levels sit
//! `emg_separation` within-task standard deviations apart; robot channels are
//! fixed linear mixtures of the human latent weights plus a per-task offset.
//!
//! Each demonstration draws from its own ChaCha stream keyed by
//! `(split, task, index)`, so output is bit-identical for a seed and
//! independent of how many demonstrations are requested.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{resample, Channel, Demonstration};
use crate::basis::{uniform_phases, BasisSystem};
use crate::error::{Error, Result};
use crate::interaction::Role;

const GENERATOR_BASIS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_tasks: usize,
    pub p: usize,
    pub e: usize,
    pub j: usize,
    pub t_norm: usize,
    pub demos_per_task: usize,
    pub test_per_task: usize,
    /// 1 makes every task share the same pose generator.
    pub pose_overlap: f64,
    /// Gap between adjacent task EMG levels, in within-task standard deviations.
    pub emg_separation: f64,
    /// Standard deviation of the per-demo duration ratio around 1.
    pub tempo_std: f64,
    /// White measurement noise on every channel.
    pub noise_std: f64,
    /// Per-demo perturbation of pose weights.
    pub pose_spread: f64,
    /// Per-demo EMG level shift.
    pub emg_spread: f64,
    pub sample_period: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_tasks: 3,
            p: 2,
            e: 2,
            j: 2,
            t_norm: 100,
            demos_per_task: 20,
            test_per_task: 10,
            pose_overlap: 1.0,
            emg_separation: 5.0,
            tempo_std: 0.1,
            noise_std: 0.01,
            pose_spread: 0.02,
            emg_spread: 0.1,
            sample_period: 0.01,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_tasks == 0 || self.p == 0 || self.j == 0 {
            return bad("n_tasks, p and j must be positive".into());
        }
        if self.t_norm < GENERATOR_BASIS {
            return bad(format!("t_norm must be at least {GENERATOR_BASIS}"));
        }
        if !(0.0..=1.0).contains(&self.pose_overlap) {
            return bad(format!("pose_overlap must be in [0, 1], got {}", self.pose_overlap));
        }
        for (name, v) in [
            ("emg_separation", self.emg_separation),
            ("tempo_std", self.tempo_std),
            ("noise_std", self.noise_std),
            ("pose_spread", self.pose_spread),
            ("emg_spread", self.emg_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(self.sample_period > 0.0) {
            return bad(format!("sample_period must be positive, got {}", self.sample_period));
        }
        Ok(())
    }

    /// Within-task standard deviation of an EMG sample.
    pub fn emg_within_std(&self) -> f64 {
        self.emg_spread.hypot(self.noise_std)
    }

    pub fn task_names(&self) -> Vec<String> {
        (0..self.n_tasks).map(|k| format!("task{k}")).collect()
    }
}

/// Train and test demonstrations grouped by task, in task order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Vec<(String, Vec<Demonstration>)>,
    pub test: Vec<(String, Vec<Demonstration>)>,
}

struct TaskGenerator {
    pose: Vec<DVector<f64>>,
    emg: Vec<DVector<f64>>,
    robot_offset: Vec<DVector<f64>>,
}

struct Generator {
    spec: SynthSpec,
    basis: BasisSystem,
    tasks: Vec<TaskGenerator>,
    /// `j x (p + e)` mixing of human latent weights into robot weights.
    mixing: DMatrix<f64>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

impl Generator {
    fn new(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let basis = BasisSystem::with_defaults(GENERATOR_BASIS, spec.t_norm)?;
        let n = GENERATOR_BASIS;
        let mut rng = stream(spec.seed, 0);
        let shared: Vec<_> = (0..spec.p).map(|_| normal_vec(&mut rng, n, 1.0)).collect();
        let emg_base: Vec<_> = (0..spec.e)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(0.3..0.8)))
            .collect();
        let ranks: Vec<Vec<usize>> = (0..spec.e)
            .map(|_| {
                let mut r: Vec<usize> = (0..spec.n_tasks).collect();
                r.shuffle(&mut rng);
                r
            })
            .collect();
        let mixing = DMatrix::from_fn(spec.j, spec.p + spec.e, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        let gap = spec.emg_separation * spec.emg_within_std();
        let tasks = (0..spec.n_tasks)
            .map(|k| {
                let pose = shared
                    .iter()
                    .map(|s| {
                        let own = normal_vec(&mut rng, n, 1.0);
                        s + (own - s) * (1.0 - spec.pose_overlap)
                    })
                    .collect();
                let emg = emg_base
                    .iter()
                    .zip(&ranks)
                    .map(|(b, r)| b.add_scalar(gap * r[k] as f64))
                    .collect();
                let robot_offset = (0..spec.j).map(|_| normal_vec(&mut rng, n, 1.0)).collect();
                TaskGenerator {
                    pose,
                    emg,
                    robot_offset,
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            basis,
            tasks,
            mixing,
        })
    }

    fn demo(&self, split: u64, task: usize, index: usize) -> Result<Demonstration> {
        let spec = &self.spec;
        let id = 1 + ((split << 48) | ((task as u64) << 24) | index as u64);
        let mut rng = stream(spec.seed, id);
        let gen = &self.tasks[task];
        let n = GENERATOR_BASIS;

        let pose: Vec<DVector<f64>> = gen
            .pose
            .iter()
            .map(|m| m + normal_vec(&mut rng, n, spec.pose_spread))
            .collect();
        let emg: Vec<DVector<f64>> = gen
            .emg
            .iter()
            .map(|m| m.add_scalar(spec.emg_spread * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let human: Vec<&DVector<f64>> = pose.iter().chain(&emg).collect();
        let robot: Vec<DVector<f64>> = (0..spec.j)
            .map(|r| {
                let mut w = gen.robot_offset[r].clone();
                for (i, h) in human.iter().enumerate() {
                    w += *h * self.mixing[(r, i)];
                }
                w
            })
            .collect();

        let alpha = if spec.tempo_std > 0.0 {
            Normal::new(1.0, spec.tempo_std)
                .expect("validated std")
                .sample(&mut rng)
                .clamp(0.5, 2.0)
        } else {
            1.0
        };
        let len = ((alpha * spec.t_norm as f64).round() as usize).max(2);
        let psi = self.basis.matrix_unchecked(&uniform_phases(len));
        let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("validated std");
        let mut curve = |w: &DVector<f64>| -> Vec<f64> {
            (&psi * w)
                .iter()
                .map(|v| if spec.noise_std > 0.0 { v + noise.sample(&mut rng) } else { *v })
                .collect()
        };
        let mut channels = Vec::with_capacity(spec.p + spec.e + spec.j);
        for (i, w) in pose.iter().enumerate() {
            channels.push(Channel {
                name: format!("pose{i}"),
                role: Role::HumanPose,
                values: curve(w),
            });
        }
        for (i, w) in emg.iter().enumerate() {
            channels.push(Channel {
                name: format!("emg{i}"),
                role: Role::HumanEmg,
                values: curve(w),
            });
        }
        for (i, w) in robot.iter().enumerate() {
            channels.push(Channel {
                name: format!("joint{i}"),
                role: Role::Robot,
                values: curve(w),
            });
        }
        Demonstration::new(channels, spec.sample_period, Some(format!("task{task}")))
    }

    fn split(&self, split: u64, per_task: usize) -> Result<Vec<(String, Vec<Demonstration>)>> {
        (0..self.spec.n_tasks)
            .map(|k| {
                let demos = (0..per_task).map(|i| self.demo(split, k, i)).collect::<Result<Vec<_>>>()?;
                Ok((format!("task{k}"), demos))
            })
            .collect()
    }
}

/// Generates `demos_per_task` training and `test_per_task` test
/// demonstrations for every task.
pub fn synth_dataset(spec: &SynthSpec) -> Result<SynthDataset> {
    let gen = Generator::new(spec)?;
    Ok(SynthDataset {
        train: gen.split(0, spec.demos_per_task)?,
        test: gen.split(1, spec.test_per_task)?,
    })
}

/// Realized separation statistics of a labelled set, measured on
/// demonstrations resampled to `t_norm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthStats {
    /// RMS over timesteps, pose channels and task pairs of the mean gap in
    /// pooled within-task standard deviations.
    pub pose_gap_rms: f64,
    /// Largest per-timestep pose mean gap, same units.
    pub pose_gap_max: f64,
    /// Mean, min and max over timesteps and EMG channels of the smallest
    /// gap between task means, in pooled within-task standard deviations.
    pub emg_separation_mean: f64,
    pub emg_separation_min: f64,
    pub emg_separation_max: f64,
}

pub fn generator_stats(tasks: &[(String, Vec<Demonstration>)], t_norm: usize) -> Result<SynthStats> {
    let aligned: Vec<Vec<Demonstration>> = tasks
        .iter()
        .map(|(_, demos)| demos.iter().map(|d| resample(d, t_norm).map(|r| r.0)).collect())
        .collect::<Result<_>>()?;
    let first = aligned
        .iter()
        .find_map(|d| d.first())
        .ok_or_else(|| Error::InvalidParameter("no demonstrations to measure".into()))?;
    let (mut pose_sq, mut pose_max, mut pose_count) = (0.0, 0.0f64, 0usize);
    let mut emg_ratios = Vec::new();
    for ch in first.channels().iter().filter(|c| c.role.is_human()) {
        for t in 0..t_norm {
            let mut means = Vec::with_capacity(aligned.len());
            let (mut ss, mut dof) = (0.0, 0usize);
            for demos in &aligned {
                let vals: Vec<f64> = demos
                    .iter()
                    .map(|d| d.channel(&ch.name).map(|c| c.values[t]))
                    .collect::<Option<_>>()
                    .ok_or_else(|| Error::Schema(format!("channel `{}` missing", ch.name)))?;
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                ss += vals.iter().map(|v| (v - m).powi(2)).sum::<f64>();
                dof += vals.len().saturating_sub(1);
                means.push(m);
            }
            let pooled = (ss / dof.max(1) as f64).sqrt();
            match ch.role {
                Role::HumanPose => {
                    for a in 0..means.len() {
                        for b in a + 1..means.len() {
                            let gap = ((means[a] - means[b]) / pooled).abs();
                            pose_sq += gap * gap;
                            pose_max = pose_max.max(gap);
                            pose_count += 1;
                        }
                    }
                }
                Role::HumanEmg if means.len() > 1 => {
                    means.sort_by(f64::total_cmp);
                    let min_gap = means.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                    emg_ratios.push(min_gap / pooled);
                }
                _ => {}
            }
        }
    }
    let (mean, min, max) = if emg_ratios.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            emg_ratios.iter().sum::<f64>() / emg_ratios.len() as f64,
            emg_ratios.iter().copied().fold(f64::INFINITY, f64::min),
            emg_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    Ok(SynthStats {
        pose_gap_rms: if pose_count > 0 { (pose_sq / pose_count as f64).sqrt() } else { f64::NAN },
        pose_gap_max: if pose_count > 0 { pose_max } else { f64::NAN },
        emg_separation_mean: mean,
        emg_separation_min: min,
        emg_separation_max: max,
    })
}
