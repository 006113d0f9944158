//! Multi-task recognition: a library of task models, per-task phase
//! estimation and likelihood, and the task posterior.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{self, preprocess_emg, Demonstration, ObservationNoise};
use crate::error::{Error, Result};
use crate::interaction::{
    train_interaction, ChannelLayout, InteractionModel, ModelDocument, PartialObservation, Prediction, Role,
    TrainConfig,
};
use crate::phase::{estimate_phase, fit_phase_prior};

pub const LIBRARY_FORMAT_VERSION: u32 = 1;

/// Resamples raw demonstrations, fits the scaling prior, and trains the
/// joint weight distribution of one task.
pub fn train_task(demos: &[Demonstration], layout: &ChannelLayout, config: &TrainConfig) -> Result<InteractionModel> {
    if demos.is_empty() {
        return Err(Error::InvalidParameter("no demonstrations".into()));
    }
    let t_norm = config.basis.t_norm();
    let period = demos.iter().map(Demonstration::sample_period).sum::<f64>() / demos.len() as f64;
    let mut aligned = Vec::with_capacity(demos.len());
    let mut durations = Vec::with_capacity(demos.len());
    for d in demos {
        let (a, duration) = data::resample(d, t_norm)?;
        aligned.push(a);
        durations.push(duration);
    }
    let prior = fit_phase_prior(&durations, t_norm as f64 * period, config.sigma_alpha_floor)?;
    train_interaction(&aligned, layout, config, prior, period)
}

/// Log marginal likelihood of the observation under one task at a fixed
/// scaling. This is the same quantity that enters the phase posterior.
pub fn task_log_likelihood(model: &InteractionModel, obs: &PartialObservation, alpha_star: f64) -> Result<f64> {
    model.log_marginal_likelihood(obs, alpha_star)
}

/// Named task models in insertion order with their prior probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLibrary {
    tasks: Vec<(String, InteractionModel)>,
    priors: Vec<f64>,
    /// Envelope window applied to EMG channels before training and
    /// observation; `None` passes raw values through.
    emg_window: Option<usize>,
}

impl TaskLibrary {
    /// Builds a library; `priors` default to uniform and are renormalized.
    pub fn new(
        tasks: Vec<(String, InteractionModel)>,
        priors: Option<Vec<f64>>,
        emg_window: Option<usize>,
    ) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::InvalidParameter("a task library needs at least one task".into()));
        }
        let mut names = BTreeSet::new();
        for (name, _) in &tasks {
            if !names.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate task `{name}`")));
            }
        }
        let human = |m: &InteractionModel| -> Vec<(String, Role)> {
            m.layout
                .names()
                .iter()
                .zip(m.layout.roles())
                .filter(|(_, r)| r.is_human())
                .map(|(n, r)| (n.clone(), *r))
                .collect()
        };
        let reference = human(&tasks[0].1);
        if let Some((name, _)) = tasks.iter().find(|(_, m)| human(m) != reference) {
            return Err(Error::Schema(format!(
                "task `{name}` has a different human channel layout from `{}`",
                tasks[0].0
            )));
        }
        let raw = priors.unwrap_or_else(|| vec![1.0; tasks.len()]);
        if raw.len() != tasks.len() {
            return Err(Error::InvalidParameter(format!(
                "{} priors for {} tasks",
                raw.len(),
                tasks.len()
            )));
        }
        if let Some(p) = raw.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter(format!("task priors must be positive, got {p}")));
        }
        let total: f64 = raw.iter().sum();
        let priors = raw.iter().map(|p| p / total).collect();
        Ok(Self {
            tasks,
            priors,
            emg_window,
        })
    }

    /// Trains one model per task from raw demonstrations, restricted to
    /// `layout` (pass a layout without EMG for the pose-only baseline).
    pub fn train(
        tasks: &[(String, Vec<Demonstration>)],
        layout: &ChannelLayout,
        config: &TrainConfig,
        emg_window: Option<usize>,
    ) -> Result<Self> {
        let models = tasks
            .iter()
            .map(|(name, demos)| {
                if demos.is_empty() {
                    return Err(Error::InvalidParameter(format!("no demonstrations for task `{name}`")));
                }
                let prepared = match emg_window {
                    Some(w) if layout.e() > 0 => demos
                        .iter()
                        .map(|d| d.map_role(Role::HumanEmg, |v| preprocess_emg(v, w.min(v.len()))))
                        .collect::<Result<Vec<_>>>()?,
                    _ => demos.clone(),
                };
                Ok((name.clone(), train_task(&prepared, layout, config)?))
            })
            .collect::<Result<Vec<_>>>()?;
        TaskLibrary::new(models, None, emg_window)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[(String, InteractionModel)] {
        &self.tasks
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn emg_window(&self) -> Option<usize> {
        self.emg_window
    }

    pub fn task(&self, name: &str) -> Option<&InteractionModel> {
        self.tasks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Human layout shared by all tasks.
    pub fn layout(&self) -> &ChannelLayout {
        &self.tasks[0].1.layout
    }

    pub fn includes_emg(&self) -> bool {
        self.layout().e() > 0
    }

    /// Copy with replaced priors (renormalized).
    pub fn with_priors(&self, priors: Vec<f64>) -> Result<Self> {
        TaskLibrary::new(self.tasks.clone(), Some(priors), self.emg_window)
    }

    /// Builds the observation the library expects from an episode prefix:
    /// EMG is kept only when the models carry EMG channels, and the envelope
    /// is computed on the visible prefix only.
    pub fn observe(&self, episode: &Demonstration, ratio: f64, noise: ObservationNoise) -> Result<PartialObservation> {
        let obs = data::truncate_observation(episode, ratio, self.includes_emg(), noise)?;
        let Some(window) = self.emg_window.filter(|_| self.includes_emg()) else {
            return Ok(obs);
        };
        if obs.samples().is_empty() {
            return Ok(obs);
        }
        let mut samples = obs.samples().to_vec();
        for name in self.layout().names_with_role(Role::HumanEmg) {
            let raw: Vec<f64> = samples.iter().filter_map(|s| s.values.get(name).copied()).collect();
            if raw.len() != samples.len() {
                continue;
            }
            let env = preprocess_emg(&raw, window.min(raw.len()))?;
            for (s, v) in samples.iter_mut().zip(env) {
                s.values.insert(name.to_string(), v);
            }
        }
        PartialObservation::new(samples, obs.noise().clone(), obs.raw_duration_so_far())
    }

    fn check_channels(&self, obs: &PartialObservation) -> Result<()> {
        let human: BTreeSet<&str> = self.layout().human_names().collect();
        let unknown: Vec<&str> = obs.channel_names().into_iter().filter(|n| !human.contains(n)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(format!(
                "observed channels {:?} are not human channels of the library (expected a subset of {:?})",
                unknown, human
            )))
        }
    }

    /// Per task: MAP scaling, likelihood at that scaling, and the normalized
    /// task posterior.
    pub fn recognize(&self, obs: &PartialObservation, grid_points: usize) -> Result<RecognitionResult> {
        self.check_channels(obs)?;
        let mut scores = Vec::with_capacity(self.tasks.len());
        for ((name, model), &prior) in self.tasks.iter().zip(&self.priors) {
            let phase = estimate_phase(model, obs, grid_points)?;
            let log_likelihood = task_log_likelihood(model, obs, phase.alpha_star)?;
            scores.push(TaskScore {
                task: name.clone(),
                prior,
                alpha_star: phase.alpha_star,
                log_likelihood,
                posterior: 0.0,
            });
        }
        let log_joint: Vec<f64> = scores.iter().map(|s| s.log_likelihood + s.prior.ln()).collect();
        let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_joint.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        for (s, w) in scores.iter_mut().zip(&weights) {
            s.posterior = w / total;
        }
        let mut chosen = 0;
        for (k, l) in log_joint.iter().enumerate() {
            if *l > log_joint[chosen] {
                chosen = k;
            }
        }
        Ok(RecognitionResult { chosen, scores })
    }

    /// Conditions the chosen task on the observation at its MAP scaling and
    /// reads out the trajectory on `t_out` samples.
    pub fn predict_for_task(
        &self,
        obs: &PartialObservation,
        result: &RecognitionResult,
        t_out: usize,
    ) -> Result<Prediction> {
        let score = result.chosen_score();
        let model = self
            .task(&score.task)
            .ok_or_else(|| Error::Schema(format!("task `{}` is not in the library", score.task)))?;
        let posterior = model.condition(obs, score.alpha_star)?;
        model.predict_trajectory(&posterior, t_out)
    }

    pub fn to_document(&self) -> LibraryDocument {
        LibraryDocument {
            format_version: LIBRARY_FORMAT_VERSION,
            emg_window: self.emg_window,
            tasks: self
                .tasks
                .iter()
                .zip(&self.priors)
                .map(|((name, model), &prior)| TaskEntry {
                    name: name.clone(),
                    prior,
                    model: model.to_document(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: LibraryDocument) -> Result<Self> {
        if doc.format_version != LIBRARY_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported library format version {} (expected {LIBRARY_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let mut tasks = Vec::with_capacity(doc.tasks.len());
        let mut priors = Vec::with_capacity(doc.tasks.len());
        for entry in doc.tasks {
            priors.push(entry.prior);
            tasks.push((entry.name, InteractionModel::from_document(entry.model)?));
        }
        let mut lib = TaskLibrary::new(tasks, Some(priors.clone()), doc.emg_window)?;
        // keep stored priors bit-exact when they already sum to one
        if (priors.iter().sum::<f64>() - 1.0).abs() <= 1e-12 {
            lib.priors = priors;
        }
        Ok(lib)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        TaskLibrary::from_document(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TaskLibrary::from_json(&text)
    }
}

/// Serialized task library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryDocument {
    pub format_version: u32,
    pub emg_window: Option<usize>,
    pub tasks: Vec<TaskEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub name: String,
    pub prior: f64,
    pub model: ModelDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: String,
    pub prior: f64,
    pub alpha_star: f64,
    pub log_likelihood: f64,
    pub posterior: f64,
}

/// Outcome of recognition; scores are in library order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionResult {
    pub chosen: usize,
    pub scores: Vec<TaskScore>,
}

impl RecognitionResult {
    pub fn chosen_task(&self) -> &str {
        &self.scores[self.chosen].task
    }

    pub fn chosen_score(&self) -> &TaskScore {
        &self.scores[self.chosen]
    }

    pub fn posterior(&self, task: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.task == task).map(|s| s.posterior)
    }

    pub fn max_posterior(&self) -> f64 {
        self.scores[self.chosen].posterior
    }
}
