//! Aligned tables for people, one JSON object per line for machines.

use anyhow::Result;
use ipromp::data::synth::{SynthSpec, SynthStats};
use ipromp::{Demonstration, EvalReport, RecognitionResult, TaskLibrary};
use serde_json::{json, Value};

use crate::Format;

pub struct Printer {
    format: Format,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

impl Printer {
    pub fn new(format: Format) -> Self {
        Self { format }
    }

    fn record(&self, value: Value) -> Result<()> {
        println!("{}", serde_json::to_string(&value)?);
        Ok(())
    }

    pub fn note(&self, message: &str) -> Result<()> {
        match self.format {
            Format::Table => {
                println!("{message}");
                Ok(())
            }
            Format::JsonLines => self.record(json!({ "message": message })),
        }
    }

    pub fn training(&self, tasks: &[(String, Vec<Demonstration>)], library: &TaskLibrary) -> Result<()> {
        if self.format == Format::Table {
            println!("{:<16} {:>6} {:>9} {:>12}", "task", "demos", "mu_alpha", "sigma_alpha");
        }
        for ((name, demos), (_, model)) in tasks.iter().zip(library.tasks()) {
            let prior = model.phase_prior;
            match self.format {
                Format::Table => println!(
                    "{:<16} {:>6} {:>9.4} {:>12.4}",
                    name,
                    demos.len(),
                    prior.mu_alpha,
                    prior.sigma_alpha
                ),
                Format::JsonLines => self.record(json!({
                    "task": name,
                    "demos": demos.len(),
                    "mu_alpha": prior.mu_alpha,
                    "sigma_alpha": prior.sigma_alpha,
                }))?,
            }
        }
        Ok(())
    }

    pub fn recognition(&self, result: &RecognitionResult) -> Result<()> {
        match self.format {
            Format::Table => {
                println!(
                    "{:<16} {:>8} {:>8} {:>14} {:>10}",
                    "task", "prior", "alpha*", "log-lik", "posterior"
                );
                for s in &result.scores {
                    println!(
                        "{:<16} {:>8.4} {:>8.4} {:>14.4} {:>10.6}",
                        s.task, s.prior, s.alpha_star, s.log_likelihood, s.posterior
                    );
                }
                println!("chosen: {}", result.chosen_task());
            }
            Format::JsonLines => {
                for (k, s) in result.scores.iter().enumerate() {
                    self.record(json!({
                        "task": s.task,
                        "prior": s.prior,
                        "alpha_star": s.alpha_star,
                        "log_likelihood": s.log_likelihood,
                        "posterior": s.posterior,
                        "chosen": k == result.chosen,
                    }))?;
                }
            }
        }
        Ok(())
    }

    pub fn synth(&self, spec: &SynthSpec, stats: &SynthStats) -> Result<()> {
        let train = spec.n_tasks * spec.demos_per_task;
        let test = spec.n_tasks * spec.test_per_task;
        match self.format {
            Format::Table => {
                println!("train files            {train}");
                println!("test files             {test}");
                println!("pose gap (rms / max)   {:.4} / {:.4}", stats.pose_gap_rms, stats.pose_gap_max);
                println!(
                    "EMG separation         {:.3} (min {:.3}, max {:.3}, requested {:.3})",
                    stats.emg_separation_mean, stats.emg_separation_min, stats.emg_separation_max, spec.emg_separation
                );
                Ok(())
            }
            Format::JsonLines => self.record(json!({
                "train_files": train,
                "test_files": test,
                "seed": spec.seed,
                "stats": stats,
            })),
        }
    }

    pub fn eval(&self, report: &EvalReport) -> Result<()> {
        let s = &report.summary;
        match self.format {
            Format::Table => {
                println!(
                    "{:>6} {:>6} {:<16} {:>8} {:>8}",
                    "demos", "ratio", "task", "without", "with"
                );
                for e in report.entries.iter().filter(|e| !e.include_emg) {
                    let with = report.accuracy(e.demos_per_task, e.ratio, true, &e.task);
                    println!(
                        "{:>6} {:>6.2} {:<16} {:>8.3} {:>8}",
                        e.demos_per_task,
                        e.ratio,
                        e.task,
                        e.accuracy,
                        fmt_opt(with)
                    );
                }
                println!(
                    "{:>6} {:>6} {:<16} {:>8} {:>8}",
                    "",
                    "",
                    "mean",
                    fmt_opt(s.mean_without),
                    fmt_opt(s.mean_with)
                );
                println!("with EMG >= without in {}/{} cells", s.wins, s.cells);
                Ok(())
            }
            Format::JsonLines => {
                for e in &report.entries {
                    self.record(serde_json::to_value(e)?)?;
                }
                self.record(json!({ "summary": s, "seed": report.seed }))
            }
        }
    }
}
