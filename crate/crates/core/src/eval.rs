//! With/without-EMG recognition benchmark over a grid of training-set sizes
//! and observation ratios.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Demonstration, ObservationNoise};
use crate::error::{Error, Result};
use crate::interaction::TrainConfig;
use crate::phase::DEFAULT_ALPHA_GRID;
use crate::recognition::TaskLibrary;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// One training-set size and observation ratio; every task is scored in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub demos_per_task: usize,
    pub ratio: f64,
}

impl EvalCell {
    pub fn new(demos_per_task: usize, ratio: f64) -> Self {
        Self { demos_per_task, ratio }
    }

    /// The four reference configurations: 20, 15 and 10 demonstrations at
    /// 10% and 10 demonstrations at 20%.
    pub fn reference_grid() -> Vec<EvalCell> {
        vec![
            EvalCell::new(20, 0.1),
            EvalCell::new(15, 0.1),
            EvalCell::new(10, 0.1),
            EvalCell::new(10, 0.2),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub cells: Vec<EvalCell>,
    /// Test episodes scored per task and cell.
    pub trials_per_task: usize,
    pub alpha_grid: usize,
    pub obs_noise: ObservationNoise,
    pub train: TrainConfig,
    pub emg_window: Option<usize>,
}

impl EvalConfig {
    pub fn new(train: TrainConfig) -> Self {
        Self {
            cells: EvalCell::reference_grid(),
            trials_per_task: 10,
            alpha_grid: DEFAULT_ALPHA_GRID,
            obs_noise: ObservationNoise::default(),
            train,
            emg_window: Some(crate::data::DEFAULT_EMG_WINDOW),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::InvalidParameter("evaluation grid has no cells".into()));
        }
        for c in &self.cells {
            if c.demos_per_task == 0 || !(0.0..=1.0).contains(&c.ratio) {
                return Err(Error::InvalidParameter(format!(
                    "invalid grid cell: {} demonstrations at ratio {}",
                    c.demos_per_task, c.ratio
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub demos_per_task: usize,
    pub ratio: f64,
    pub include_emg: bool,
    pub task: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub demos_per_task: usize,
    pub ratio: f64,
    pub include_emg: bool,
    pub episode: usize,
    pub true_task: String,
    pub chosen_task: String,
    pub posterior: f64,
    pub alpha_star: f64,
}

/// Paired comparison of per-cell accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cells: usize,
    pub mean_without: Option<f64>,
    pub mean_with: Option<f64>,
    /// Cells where the with-EMG accuracy is at least the baseline.
    pub wins: usize,
    /// `(mean_with - mean_without) / mean_without`, from unrounded means.
    pub relative_improvement: Option<f64>,
}

/// Means and win count over paired cells. Means are rounded to three
/// decimals, the precision at which accuracies are reported.
pub fn aggregate(without: &[f64], with: &[f64]) -> Result<Aggregate> {
    if without.len() != with.len() {
        return Err(Error::InvalidParameter(format!(
            "paired accuracies differ in length: {} vs {}",
            without.len(),
            with.len()
        )));
    }
    let n = without.len();
    let round3 = |x: f64| (x * 1000.0).round() / 1000.0;
    let mean = |v: &[f64]| (n > 0).then(|| v.iter().sum::<f64>() / n as f64);
    let (mean_without, mean_with) = (mean(without), mean(with));
    let relative_improvement = match (mean_without, mean_with) {
        (Some(a), Some(b)) if a > 0.0 => Some((b - a) / a),
        _ => None,
    };
    Ok(Aggregate {
        cells: n,
        mean_without: mean_without.map(round3),
        mean_with: mean_with.map(round3),
        wins: without.iter().zip(with).filter(|(a, b)| b >= a).count(),
        relative_improvement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub seed: Option<u64>,
    pub config: EvalConfig,
    /// Sorted by `(demos_per_task, ratio, include_emg, task)`.
    pub entries: Vec<AccuracyEntry>,
    pub trials: Vec<TrialRecord>,
    pub summary: Aggregate,
}

impl EvalReport {
    pub fn accuracy(&self, demos_per_task: usize, ratio: f64, include_emg: bool, task: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| {
                e.demos_per_task == demos_per_task && e.ratio == ratio && e.include_emg == include_emg && e.task == task
            })
            .map(|e| e.accuracy)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: EvalReport = serde_json::from_str(text)?;
        if report.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported report format version {}",
                report.format_version
            )));
        }
        Ok(report)
    }
}

type Key = (usize, u64, bool, String);

fn key(cell: &EvalCell, include_emg: bool, task: &str) -> Key {
    // Ratios are in [0, 1], so their bit patterns sort like the values.
    (cell.demos_per_task, cell.ratio.to_bits(), include_emg, task.to_string())
}

/// Trains a with-EMG and a pose-only library for every distinct training-set
/// size, then scores the first `trials_per_task` test episodes of every task
/// in every cell under both conditions.
pub fn run_eval(
    train: &[(String, Vec<Demonstration>)],
    test: &[(String, Vec<Demonstration>)],
    config: &EvalConfig,
    seed: Option<u64>,
) -> Result<EvalReport> {
    config.validate()?;
    let layout = train
        .iter()
        .find_map(|(_, d)| d.first())
        .ok_or_else(|| Error::InvalidParameter("no training demonstrations".into()))?
        .layout()?;
    let baseline = layout.without_emg();
    let test_of = |task: &str| -> Result<&[Demonstration]> {
        let episodes = test
            .iter()
            .find(|(name, _)| name == task)
            .map(|(_, d)| d.as_slice())
            .unwrap_or(&[]);
        if episodes.len() < config.trials_per_task {
            return Err(Error::InvalidParameter(format!(
                "task `{task}` has {} test episodes, {} requested",
                episodes.len(),
                config.trials_per_task
            )));
        }
        Ok(&episodes[..config.trials_per_task])
    };

    let mut libraries: BTreeMap<usize, [TaskLibrary; 2]> = BTreeMap::new();
    for cell in &config.cells {
        let d = cell.demos_per_task;
        if libraries.contains_key(&d) {
            continue;
        }
        let subset = train
            .iter()
            .map(|(name, demos)| {
                if demos.len() < d {
                    return Err(Error::InvalidParameter(format!(
                        "task `{name}` has {} training demonstrations, {d} requested",
                        demos.len()
                    )));
                }
                Ok((name.clone(), demos[..d].to_vec()))
            })
            .collect::<Result<Vec<_>>>()?;
        let without = TaskLibrary::train(&subset, &baseline, &config.train, config.emg_window)?;
        let with = TaskLibrary::train(&subset, &layout, &config.train, config.emg_window)?;
        libraries.insert(d, [without, with]);
    }

    let mut jobs = Vec::new();
    for cell in &config.cells {
        for include_emg in [false, true] {
            for (task, _) in train {
                for (i, ep) in test_of(task)?.iter().enumerate() {
                    jobs.push((*cell, include_emg, task.as_str(), i, ep));
                }
            }
        }
    }
    let trials = jobs
        .par_iter()
        .map(|&(cell, include_emg, task, episode, ep)| {
            let library = &libraries[&cell.demos_per_task][include_emg as usize];
            let obs = library.observe(ep, cell.ratio, config.obs_noise)?;
            let result = library.recognize(&obs, config.alpha_grid)?;
            let chosen = result.chosen_score();
            Ok(TrialRecord {
                demos_per_task: cell.demos_per_task,
                ratio: cell.ratio,
                include_emg,
                episode,
                true_task: task.to_string(),
                chosen_task: chosen.task.clone(),
                posterior: chosen.posterior,
                alpha_star: chosen.alpha_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tally: BTreeMap<Key, (EvalCell, usize, usize)> = BTreeMap::new();
    for t in &trials {
        let cell = EvalCell::new(t.demos_per_task, t.ratio);
        let slot = tally.entry(key(&cell, t.include_emg, &t.true_task)).or_insert((cell, 0, 0));
        slot.1 += usize::from(t.chosen_task == t.true_task);
        slot.2 += 1;
    }
    let entries: Vec<AccuracyEntry> = tally
        .into_iter()
        .map(|((_, _, include_emg, task), (cell, correct, total))| AccuracyEntry {
            demos_per_task: cell.demos_per_task,
            ratio: cell.ratio,
            include_emg,
            task,
            correct,
            total,
            accuracy: correct as f64 / total as f64,
        })
        .collect();

    let (mut without, mut with) = (Vec::new(), Vec::new());
    for e in entries.iter().filter(|e| !e.include_emg) {
        if let Some(w) = entries
            .iter()
            .find(|o| o.include_emg && o.demos_per_task == e.demos_per_task && o.ratio == e.ratio && o.task == e.task)
        {
            without.push(e.accuracy);
            with.push(w.accuracy);
        }
    }

    Ok(EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        seed,
        config: config.clone(),
        entries,
        trials,
        summary: aggregate(&without, &with)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_tables_aggregate() {
        let without = [0.90, 0.60, 0.10, 0.60, 0.60, 0.10, 0.00, 0.00, 0.80, 0.30, 1.00, 0.90];
        let with = [1.00, 1.00, 0.70, 1.00, 0.90, 0.70, 0.50, 0.80, 0.70, 1.00, 1.00, 1.00];
        let agg = aggregate(&without, &with).unwrap();
        assert_eq!(agg.mean_without, Some(0.492));
        assert_eq!(agg.mean_with, Some(0.858));
        assert_eq!((agg.wins, agg.cells), (11, 12));
        // 10.3 / 5.9 - 1
        assert!((agg.relative_improvement.unwrap() - 0.746).abs() < 5e-4);
    }

    #[test]
    fn ties_count_as_wins() {
        let agg = aggregate(&[1.0, 0.5], &[1.0, 0.4]).unwrap();
        assert_eq!(agg.wins, 1);
    }

    #[test]
    fn empty_and_mismatched() {
        let agg = aggregate(&[], &[]).unwrap();
        assert_eq!((agg.cells, agg.mean_with, agg.wins), (0, None, 0));
        assert!(aggregate(&[0.1], &[]).is_err());
    }
}
