mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use ipromp::basis::{DEFAULT_N_BASIS, DEFAULT_RIDGE};
use ipromp::data::synth::{generator_stats, synth_dataset, SynthSpec};
use ipromp::data::{load_dataset, load_demonstration, write_demonstration, write_prediction, DEFAULT_EMG_WINDOW};
use ipromp::phase::{DEFAULT_ALPHA_GRID, DEFAULT_SIGMA_ALPHA_FLOOR};
use ipromp::promp::DEFAULT_SIGMA_Y;
use ipromp::{
    run_eval, BasisSystem, Demonstration, EvalCell, EvalConfig, ObservationNoise, PartialObservation,
    RecognitionResult, TaskLibrary, TrainConfig,
};

use output::Printer;

#[derive(Parser)]
#[command(name = "ipromp", version, about = "Train, recognize and evaluate interaction primitives")]
struct Cli {
    /// Output style on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    JsonLines,
}

#[derive(Subcommand)]
enum Command {
    /// Train a task library from `<root>/<task>/<demo>.csv`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train on pose and robot channels only.
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        include_emg: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Recognize the task of an observed episode prefix.
    Recognize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[command(flatten)]
        observe: ObserveArgs,
    },
    /// Recognize, then write the predicted trajectory of the chosen task.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output samples; defaults to the model's nominal length.
        #[arg(long)]
        t_out: Option<usize>,
        #[command(flatten)]
        observe: ObserveArgs,
    },
    /// Write a synthetic dataset to `<out>/{train,test}/<task>/`.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        t_norm: usize,
        #[arg(long, default_value_t = 20)]
        demos_per_task: usize,
        #[arg(long, default_value_t = 10)]
        test_per_task: usize,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Compare recognition with and without EMG over a grid of training-set
    /// sizes and observation ratios.
    Eval {
        /// Dataset root with `train/` and `test/`; synthesized when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Grid cells as `demos:ratio`.
        #[arg(long, value_delimiter = ',', value_parser = parse_cell, conflicts_with_all = ["demos", "ratios"])]
        cells: Vec<EvalCell>,
        /// Training-set sizes, crossed with `--ratios`.
        #[arg(long, value_delimiter = ',', requires = "ratios")]
        demos: Vec<usize>,
        #[arg(long, value_delimiter = ',', requires = "demos")]
        ratios: Vec<f64>,
        /// Test episodes per task and cell.
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Also write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-2)]
        obs_noise_pose: f64,
        #[arg(long, default_value_t = 1e-2)]
        obs_noise_emg: f64,
        #[arg(long, default_value_t = DEFAULT_ALPHA_GRID)]
        alpha_grid: usize,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = DEFAULT_N_BASIS)]
    basis_n: usize,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    /// Observation-noise variance stored in the model.
    #[arg(long, default_value_t = DEFAULT_SIGMA_Y)]
    sigma_y: f64,
    #[arg(long, default_value_t = 100)]
    t_norm: usize,
    #[arg(long, default_value_t = DEFAULT_SIGMA_ALPHA_FLOOR)]
    sigma_alpha_floor: f64,
    /// Moving-average window of the EMG envelope, in samples.
    #[arg(long, default_value_t = DEFAULT_EMG_WINDOW, conflicts_with = "emg_raw")]
    emg_window: usize,
    /// Use raw EMG samples instead of the envelope.
    #[arg(long)]
    emg_raw: bool,
}

impl ModelArgs {
    fn train_config(&self) -> Result<TrainConfig> {
        let basis = BasisSystem::with_defaults(self.basis_n, self.t_norm)?;
        Ok(TrainConfig {
            ridge: self.ridge,
            sigma_y: self.sigma_y,
            sigma_alpha_floor: self.sigma_alpha_floor,
            ..TrainConfig::new(basis)
        })
    }

    fn emg_window(&self) -> Option<usize> {
        (!self.emg_raw).then_some(self.emg_window)
    }
}

#[derive(Args)]
struct ObserveArgs {
    /// Visible fraction of the episode.
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA_GRID)]
    alpha_grid: usize,
    /// Observation-noise variance for pose channels.
    #[arg(long, default_value_t = 1e-2)]
    obs_noise_pose: f64,
    /// Observation-noise variance for EMG channels.
    #[arg(long, default_value_t = 1e-2)]
    obs_noise_emg: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    n_tasks: usize,
    #[arg(long, default_value_t = 2)]
    pose_channels: usize,
    #[arg(long, default_value_t = 2)]
    emg_channels: usize,
    #[arg(long, default_value_t = 2)]
    robot_channels: usize,
    #[arg(long, default_value_t = 1.0)]
    pose_overlap: f64,
    #[arg(long, default_value_t = 5.0)]
    emg_separation: f64,
    #[arg(long, default_value_t = 0.1)]
    tempo_std: f64,
    #[arg(long, default_value_t = 0.01)]
    noise_std: f64,
    #[arg(long, default_value_t = 0.02)]
    pose_spread: f64,
    #[arg(long, default_value_t = 0.1)]
    emg_spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SynthArgs {
    fn spec(&self, t_norm: usize, demos_per_task: usize, test_per_task: usize) -> SynthSpec {
        SynthSpec {
            n_tasks: self.n_tasks,
            p: self.pose_channels,
            e: self.emg_channels,
            j: self.robot_channels,
            t_norm,
            demos_per_task,
            test_per_task,
            pose_overlap: self.pose_overlap,
            emg_separation: self.emg_separation,
            tempo_std: self.tempo_std,
            noise_std: self.noise_std,
            pose_spread: self.pose_spread,
            emg_spread: self.emg_spread,
            seed: self.seed,
            ..SynthSpec::default()
        }
    }
}

fn parse_cell(s: &str) -> Result<EvalCell, String> {
    let (d, r) = s.split_once(':').ok_or_else(|| format!("expected `demos:ratio`, got `{s}`"))?;
    let demos = d.trim().parse().map_err(|e| format!("bad demo count `{d}`: {e}"))?;
    let ratio = r.trim().parse().map_err(|e| format!("bad ratio `{r}`: {e}"))?;
    Ok(EvalCell::new(demos, ratio))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let printer = Printer::new(cli.format);
    match run(cli.command, &printer) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, out: &Printer) -> Result<()> {
    match command {
        Command::Train {
            data,
            out: path,
            include_emg,
            model,
        } => cmd_train(&data, &path, include_emg, &model, out),
        Command::Recognize { model, obs, observe } => {
            let (_, _, result) = recognize(&model, &obs, &observe)?;
            out.recognition(&result)
        }
        Command::Infer {
            model,
            obs,
            out: path,
            t_out,
            observe,
        } => {
            let (library, observation, result) = recognize(&model, &obs, &observe)?;
            out.recognition(&result)?;
            let t_out = t_out.unwrap_or_else(|| library.tasks()[result.chosen].1.basis.t_norm());
            let prediction = library.predict_for_task(&observation, &result, t_out)?;
            write_prediction(&path, &prediction)?;
            out.note(&format!("wrote {} ({} samples)", path.display(), t_out))
        }
        Command::Synth {
            out: root,
            t_norm,
            demos_per_task,
            test_per_task,
            synth,
        } => cmd_synth(&root, &synth.spec(t_norm, demos_per_task, test_per_task), out),
        Command::Eval {
            data,
            cells,
            demos,
            ratios,
            trials,
            report,
            obs_noise_pose,
            obs_noise_emg,
            alpha_grid,
            model,
            synth,
        } => {
            let cells = if !demos.is_empty() {
                demos
                    .iter()
                    .flat_map(|&d| ratios.iter().map(move |&r| EvalCell::new(d, r)))
                    .collect()
            } else if !cells.is_empty() {
                cells
            } else {
                EvalCell::reference_grid()
            };
            let config = EvalConfig {
                cells,
                trials_per_task: trials,
                alpha_grid,
                obs_noise: ObservationNoise {
                    pose: obs_noise_pose,
                    emg: obs_noise_emg,
                },
                emg_window: model.emg_window(),
                train: model.train_config()?,
            };
            let (train, test, seed) = match &data {
                Some(root) => (load_split(&root.join("train"))?, load_split(&root.join("test"))?, None),
                None => {
                    let max_demos = config.cells.iter().map(|c| c.demos_per_task).max().unwrap_or(0);
                    let ds = synth_dataset(&synth.spec(model.t_norm, max_demos, trials))?;
                    (ds.train, ds.test, Some(synth.seed))
                }
            };
            let result = run_eval(&train, &test, &config, seed)?;
            if let Some(path) = report {
                std::fs::write(&path, result.to_json()?).with_context(|| format!("writing {}", path.display()))?;
            }
            out.eval(&result)
        }
    }
}

fn load_split(dir: &Path) -> Result<Vec<(String, Vec<Demonstration>)>> {
    let tasks: Vec<_> = load_dataset(dir)?.into_iter().collect();
    if tasks.is_empty() {
        bail!("no task directories under {}", dir.display());
    }
    Ok(tasks)
}

fn cmd_train(data: &Path, path: &Path, include_emg: bool, model: &ModelArgs, out: &Printer) -> Result<()> {
    let tasks = load_split(data)?;
    for (name, demos) in &tasks {
        if demos.is_empty() {
            bail!("no demonstrations in {}", data.join(name).display());
        }
    }
    let layout = tasks[0].1[0].layout()?;
    let layout = if include_emg { layout } else { layout.without_emg() };
    let library = TaskLibrary::train(&tasks, &layout, &model.train_config()?, model.emg_window())?;
    library.save(path)?;
    out.training(&tasks, &library)?;
    out.note(&format!(
        "wrote {} ({} tasks; {} pose, {} EMG, {} robot channels)",
        path.display(),
        library.len(),
        layout.p(),
        layout.e(),
        layout.j()
    ))
}

fn recognize(
    model: &Path,
    obs: &Path,
    args: &ObserveArgs,
) -> Result<(TaskLibrary, PartialObservation, RecognitionResult)> {
    let library = TaskLibrary::load(model)?;
    let episode = load_demonstration(obs)?;
    let noise = ObservationNoise {
        pose: args.obs_noise_pose,
        emg: args.obs_noise_emg,
    };
    let observation = library.observe(&episode, args.ratio, noise)?;
    let result = library
        .recognize(&observation, args.alpha_grid)
        .with_context(|| format!("recognizing {}", obs.display()))?;
    Ok((library, observation, result))
}

fn cmd_synth(root: &Path, spec: &SynthSpec, out: &Printer) -> Result<()> {
    let ds = synth_dataset(spec)?;
    for (split, tasks) in [("train", &ds.train), ("test", &ds.test)] {
        for (task, demos) in tasks {
            for (i, demo) in demos.iter().enumerate() {
                write_demonstration(root.join(split).join(task).join(format!("demo_{i:03}.csv")), demo)?;
            }
        }
    }
    let stats = generator_stats(&ds.train, spec.t_norm)?;
    out.synth(spec, &stats)
}
