//! Dataset loaders and output writers.

use std::fs;
use std::path::{Path, PathBuf};

use coad_core::checkpoint;
use coad_core::data::{parse_ucr, RawSeries};
use coad_core::model::CoadModel;
use coad_core::score::ScoreSeries;
use coad_core::synth::{labels_to_text, values_to_text};
use coad_core::train::EpochReport;
use serde::Serialize;

use crate::error::{Context, Failure, Outcome};

/// Sidecar with one 0/1 label per line, overriding filename labels.
pub fn labels_path(data: &Path) -> PathBuf {
    data.with_extension("labels")
}

pub fn read_labels(path: &Path) -> Outcome<Vec<u8>> {
    let text = fs::read_to_string(path).context(format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match line.trim() {
            "" => {}
            "0" => out.push(0),
            "1" => out.push(1),
            other => {
                return Err(Failure::data(format!(
                    "{}:{}: label `{other}` is not 0 or 1",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Series name: file stem.
pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// One value per line; split and anomaly range come from the file name. A
/// `.labels` sidecar, when present, replaces the filename labels.
pub fn load_ucr(path: &Path) -> Outcome<RawSeries> {
    let text = fs::read_to_string(path).context(format!("reading {}", path.display()))?;
    let mut series = parse_ucr(&file_name(path), &text).context(format!("loading {}", path.display()))?;
    let sidecar = labels_path(path);
    if sidecar.exists() {
        series.labels = Some(read_labels(&sidecar)?);
        series.validate().context(format!("applying {}", sidecar.display()))?;
    }
    Ok(series)
}

/// CSV with a header row. `split` defaults to half the series.
pub fn load_csv(path: &Path, value_col: &str, label_col: &str, split: Option<usize>) -> Outcome<RawSeries> {
    let mut reader = csv::Reader::from_path(path).context(format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Failure::data(format!("{}: no column `{name}` in header", path.display())))
    };
    let (vi, li) = (column(value_col)?, column(label_col)?);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let v: f64 = field(vi)
            .parse()
            .map_err(|_| Failure::data(format!("{}:{line}: bad value `{}`", path.display(), field(vi))))?;
        let l: f64 = field(li)
            .parse()
            .map_err(|_| Failure::data(format!("{}:{line}: bad label `{}`", path.display(), field(li))))?;
        values.push(v);
        labels.push(u8::from(l != 0.0));
    }
    let split = split.unwrap_or(values.len() / 2);
    RawSeries::new(stem(path), values, Some(labels), split).context(format!("loading {}", path.display()))
}

/// Dispatches on extension: `.csv` files use the `value`/`label` columns,
/// anything else is read as a UCR text file.
pub fn load_series(path: &Path, split: Option<usize>) -> Outcome<RawSeries> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let mut series = if is_csv {
        load_csv(path, "value", "label", split)?
    } else {
        load_ucr(path)?
    };
    if let Some(s) = split {
        series.split = s;
        series.validate().context(format!("split override for {}", path.display()))?;
    }
    Ok(series)
}

/// One dataset path per line; `#` starts a comment. Relative paths resolve
/// against the manifest's directory.
pub fn read_manifest(path: &Path) -> Outcome<Vec<PathBuf>> {
    let text = fs::read_to_string(path).context(format!("reading manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let entries: Vec<PathBuf> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let p = PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect();
    if entries.is_empty() {
        return Err(Failure::data(format!("manifest {} lists no datasets", path.display())));
    }
    Ok(entries)
}

pub fn write_text(path: &Path, text: &str) -> Outcome<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).context(format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).context(format!("writing {}", path.display()))
}

/// Writes `<dir>/<file_name>` plus a `.labels` sidecar when labels are given.
pub fn write_ucr(dir: &Path, file_name: &str, values: &[f64], labels: Option<&[u8]>) -> Outcome<PathBuf> {
    let path = dir.join(file_name);
    write_text(&path, &values_to_text(values))?;
    if let Some(l) = labels {
        write_text(&labels_path(&path), &labels_to_text(l))?;
    }
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path).context(format!("reading {}", path.display()))?;
    serde_json::from_str(&text).context(format!("parsing {}", path.display()))
}

pub fn write_checkpoint(path: &Path, model: &CoadModel) -> Outcome<()> {
    let bytes = checkpoint::encode(model)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).context(format!("writing {}", path.display()))
}

pub fn read_checkpoint(path: &Path) -> Outcome<CoadModel> {
    let bytes = fs::read(path).context(format!("reading checkpoint {}", path.display()))?;
    checkpoint::decode(&bytes).context(format!("decoding {}", path.display()))
}

/// Scores CSV `index,score,smoothed`; `index` is the position in the full
/// series, starting at `offset`.
pub fn write_scores(path: &Path, offset: usize, scores: &ScoreSeries) -> Outcome<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "score", "smoothed"])?;
    for (i, (s, m)) in scores.scores.iter().zip(&scores.smoothed).enumerate() {
        w.write_record([(offset + i).to_string(), s.to_string(), m.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::data(e.to_string()))?;
    write_text(path, &String::from_utf8_lossy(&bytes))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreFile {
    pub index: Vec<usize>,
    pub score: Vec<f64>,
    pub smoothed: Vec<f64>,
}

pub fn read_scores(path: &Path) -> Outcome<ScoreFile> {
    #[derive(serde::Deserialize)]
    struct Row {
        index: usize,
        score: f64,
        smoothed: f64,
    }
    let mut reader = csv::Reader::from_path(path).context(format!("opening {}", path.display()))?;
    let mut out = ScoreFile::default();
    for row in reader.deserialize() {
        let r: Row = row.context(format!("parsing {}", path.display()))?;
        out.index.push(r.index);
        out.score.push(r.score);
        out.smoothed.push(r.smoothed);
    }
    if out.index.is_empty() {
        return Err(Failure::data(format!("{} has no score rows", path.display())));
    }
    Ok(out)
}

/// Training log `epoch,bce,mse,total,seconds`.
pub struct TrainLog {
    writer: csv::Writer<fs::File>,
}

impl TrainLog {
    pub fn create(path: &Path) -> Outcome<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut writer = csv::Writer::from_path(path).context(format!("creating {}", path.display()))?;
        writer.write_record(["epoch", "bce", "mse", "total", "seconds"])?;
        Ok(Self { writer })
    }

    pub fn append(&mut self, r: &EpochReport, seconds: f64) -> Outcome<()> {
        self.writer.write_record([
            r.epoch.to_string(),
            r.loss.bce.to_string(),
            r.loss.mse.to_string(),
            r.loss.total.to_string(),
            format!("{seconds:.3}"),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Outcome<()> {
        self.writer.flush()?;
        Ok(())
    }
}
