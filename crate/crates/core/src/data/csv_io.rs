use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Channel, Demonstration};
use crate::error::{Error, Result};
use crate::interaction::{Prediction, Role};

const PREDICTED: &str = "predicted";
const PREDICTED_STD: &str = "predicted_std";

/// Header fields and numeric rows of a CSV table whose first column is `time`.
struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Some((i, _)) = text.lines().enumerate().find(|(_, l)| l.trim().is_empty()) {
        return Err(Error::Schema(format!("{}: blank line at line {}", path.display(), i + 1)));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema(format!("{}: line 1: unreadable header: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.first().map(String::as_str) != Some("time") {
        return Err(Error::Schema(format!(
            "{}: line 1: first column must be `time`",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => Error::Schema(format!(
                "{}: line {}: {len} fields, expected {expected_len}",
                path.display(),
                pos.as_ref().map_or(0, |p| p.line())
            )),
            _ => Error::Schema(format!("{}: {e}", path.display())),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let values = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row: line,
                    column: col + 1,
                    message: format!("`{cell}` is not a finite number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(values);
    }
    for (i, pair) in rows.windows(2).enumerate() {
        if !(pair[1][0] > pair[0][0]) {
            return Err(Error::Schema(format!(
                "{}: line {}: time must be strictly increasing",
                path.display(),
                i + 3
            )));
        }
    }
    Ok(Table { headers, rows })
}

fn parse_role_header(path: &Path, header: &str) -> Result<(Role, String)> {
    let bad = || {
        Error::Schema(format!(
            "{}: line 1: header `{header}` must be `role:name` with role in human_pose, human_emg, robot",
            path.display()
        ))
    };
    let (role, name) = header.split_once(':').ok_or_else(bad)?;
    let role = Role::parse(role).ok_or_else(bad)?;
    if name.is_empty() {
        return Err(bad());
    }
    Ok((role, name.to_string()))
}

fn sample_period(path: &Path, times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Schema(format!("{}: need at least two samples", path.display())));
    }
    Ok((times[times.len() - 1] - times[0]) / (times.len() - 1) as f64)
}

/// Reads one demonstration CSV: a `time` column followed by `role:name`
/// columns.
pub fn load_demonstration(path: impl AsRef<Path>) -> Result<Demonstration> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let channels = table.headers[1..]
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let (role, name) = parse_role_header(path, h)?;
            Ok(Channel {
                name,
                role,
                values: table.rows.iter().map(|r| r[i + 1]).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if channels.is_empty() {
        return Err(Error::Schema(format!("{}: line 1: no data channels", path.display())));
    }
    let times: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let period = sample_period(path, &times)?;
    Demonstration::new(channels, period, None).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Every `*.csv` in `dir`, in file-name order.
pub fn load_demonstrations(dir: impl AsRef<Path>) -> Result<Vec<Demonstration>> {
    csv_files(dir.as_ref())?.iter().map(load_demonstration).collect()
}

/// `<root>/<task_label>/<demo_id>.csv`, labelled by directory name.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<Demonstration>>> {
    let root = root.as_ref();
    let mut tasks = BTreeMap::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if !path.is_dir() {
            continue;
        }
        let label = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Schema(format!("non UTF-8 task directory {}", path.display())))?
            .to_string();
        let mut demos = load_demonstrations(&path)?;
        for d in &mut demos {
            d.set_label(Some(label.clone()));
        }
        tasks.insert(label, demos);
    }
    Ok(tasks)
}

fn create_file(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_rows(path: &Path, headers: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let file = create_file(path)?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", headers.join(",")).map_err(io)?;
    for row in rows {
        let line = row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Writes a demonstration with times `k * sample_period`.
pub fn write_demonstration(path: impl AsRef<Path>, demo: &Demonstration) -> Result<()> {
    let headers: Vec<String> = std::iter::once("time".to_string())
        .chain(demo.channels().iter().map(|c| format!("{}:{}", c.role, c.name)))
        .collect();
    let period = demo.sample_period();
    write_rows(
        path.as_ref(),
        &headers,
        (0..demo.len()).map(|k| {
            std::iter::once(k as f64 * period)
                .chain(demo.channels().iter().map(|c| c.values[k]))
                .collect()
        }),
    )
}

/// Writes a prediction: `predicted:<role>:<name>` mean columns followed by
/// `predicted_std:<role>:<name>` standard-deviation columns.
pub fn write_prediction(path: impl AsRef<Path>, prediction: &Prediction) -> Result<()> {
    let layout = &prediction.layout;
    let named = |prefix: &str| {
        layout
            .names()
            .iter()
            .zip(layout.roles())
            .map(|(n, r)| format!("{prefix}:{r}:{n}"))
            .collect::<Vec<_>>()
    };
    let headers: Vec<String> = std::iter::once("time".to_string())
        .chain(named(PREDICTED))
        .chain(named(PREDICTED_STD))
        .collect();
    let c = layout.len();
    write_rows(
        path.as_ref(),
        &headers,
        (0..prediction.times.len()).map(|t| {
            std::iter::once(prediction.times[t])
                .chain((0..c).map(|ch| prediction.mean[(t, ch)]))
                .chain((0..c).map(|ch| prediction.variance[(t, ch)].sqrt()))
                .collect()
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedChannel {
    pub name: String,
    pub role: Role,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// A prediction CSV read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub times: Vec<f64>,
    pub channels: Vec<PredictedChannel>,
}

pub fn read_prediction(path: impl AsRef<Path>) -> Result<PredictionTable> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let mut channels: Vec<PredictedChannel> = Vec::new();
    let mut std_columns: BTreeMap<String, usize> = BTreeMap::new();
    for (i, h) in table.headers.iter().enumerate().skip(1) {
        let (prefix, rest) = h
            .split_once(':')
            .ok_or_else(|| Error::Schema(format!("{}: line 1: bad header `{h}`", path.display())))?;
        let (role, name) = parse_role_header(path, rest)?;
        let column = table.rows.iter().map(|r| r[i]).collect();
        match prefix {
            PREDICTED => channels.push(PredictedChannel {
                name,
                role,
                mean: column,
                std: Vec::new(),
            }),
            PREDICTED_STD => {
                std_columns.insert(name, i);
            }
            _ => {
                return Err(Error::Schema(format!(
                    "{}: line 1: unexpected header prefix `{prefix}`",
                    path.display()
                )))
            }
        }
    }
    for ch in &mut channels {
        let i = std_columns
            .remove(&ch.name)
            .ok_or_else(|| Error::Schema(format!("{}: missing std column for `{}`", path.display(), ch.name)))?;
        ch.std = table.rows.iter().map(|r| r[i]).collect();
    }
    if let Some(extra) = std_columns.keys().next() {
        return Err(Error::Schema(format!("{}: std column `{extra}` has no mean column", path.display())));
    }
    Ok(PredictionTable {
        times: table.rows.iter().map(|r| r[0]).collect(),
        channels,
    })
}
