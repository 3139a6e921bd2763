//! File formats: binary matrices with text sidecars, dataset bundles,
//! results CSV and model CSV.
//!
//! Matrix files are bit-exact: magic `PHLB`, three little-endian u32 values
//! (version = 1, rows, cols), then `rows * cols` little-endian f64 values in
//! row-major order. Sidecar metadata is UTF-8 `key:value` text.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::harness::{FoldScore, SweepResult};
use crate::labeling::{
    DatasetMeta, LabeledDataset, ProjectionKind, SourceDescriptor,
};
use crate::source::LeadField;
use crate::spoc::SpocModel;
use crate::timeseries::{EpochSet, TimeSeriesMatrix};

pub const MATRIX_MAGIC: &[u8; 4] = b"PHLB";
pub const MATRIX_VERSION: u32 = 1;

pub const RESULTS_HEADER: &str = "config_id,n_epochs,xi,rel_power,fold,rho,alpha_rad,seed";

/// Writes a vector as a 1 x n matrix file.
pub fn write_row_vector(path: &Path, values: &[f64]) -> Result<()> {
    let m = Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("shape");
    write_matrix(path, &m)
}

/// Writes a vector as an n x 1 matrix file.
pub fn write_column_vector(path: &Path, values: &[f64]) -> Result<()> {
    let m = Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("shape");
    write_matrix(path, &m)
}

pub fn write_matrix(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&MATRIX_VERSION.to_le_bytes())?;
    w.write_all(&(matrix.nrows() as u32).to_le_bytes())?;
    w.write_all(&(matrix.ncols() as u32).to_le_bytes())?;
    for row in matrix.rows() {
        for &v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::FileFormat {
            context: format!("{}: bad magic {magic:?}", path.display()),
        });
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != MATRIX_VERSION {
        return Err(Error::FileFormat {
            context: format!("{}: unsupported version {version}", path.display()),
        });
    }
    r.read_exact(&mut word)?;
    let rows = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u32::from_le_bytes(word) as usize;
    let mut values = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 8];
    for _ in 0..rows * cols {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::FileFormat {
        context: format!("{}: {e}", path.display()),
    })
}

pub fn write_sidecar(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (key, value) in entries {
        writeln!(w, "{key}:{value}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Vec<(String, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(|| Error::FileFormat {
            context: format!("{}: sidecar line without ':': {line}", path.display()),
        })?;
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

fn sidecar_get<'a>(entries: &'a [(String, String)], key: &str, path: &Path) -> Result<&'a str> {
    entries
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::FileFormat {
            context: format!("{}: missing key {key}", path.display()),
        })
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str, path: &Path) -> Result<T> {
    value.parse().map_err(|_| Error::FileFormat {
        context: format!("{}: cannot parse {key} = {value}", path.display()),
    })
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(ext);
    PathBuf::from(name)
}

/// Writes `<prefix>.phlb` and `<prefix>.meta` for a recording.
pub fn write_recording(prefix: &Path, x: &TimeSeriesMatrix) -> Result<()> {
    write_matrix(&with_extension(prefix, ".phlb"), x.data())?;
    write_sidecar(
        &with_extension(prefix, ".meta"),
        &[
            ("sample_rate_hz", x.sample_rate_hz().to_string()),
            ("channels", x.channel_labels().join(",")),
        ],
    )
}

pub fn read_recording(prefix: &Path) -> Result<TimeSeriesMatrix> {
    let data = read_matrix(&with_extension(prefix, ".phlb"))?;
    let meta_path = with_extension(prefix, ".meta");
    let meta = read_sidecar(&meta_path)?;
    let rate: f64 = parse_num(
        sidecar_get(&meta, "sample_rate_hz", &meta_path)?,
        "sample_rate_hz",
        &meta_path,
    )?;
    let labels: Vec<String> = sidecar_get(&meta, "channels", &meta_path)?
        .split(',')
        .map(str::to_string)
        .collect();
    TimeSeriesMatrix::new(data, rate, Some(labels))
}

/// Writes `<prefix>.phlb` and `<prefix>.meta` for a lead field.
pub fn write_lead_field(prefix: &Path, lf: &LeadField) -> Result<()> {
    write_matrix(&with_extension(prefix, ".phlb"), lf.matrix())?;
    write_sidecar(
        &with_extension(prefix, ".meta"),
        &[
            ("channels", lf.channel_labels().join(",")),
            ("n_sources", lf.n_sources().to_string()),
        ],
    )
}

pub fn read_lead_field(prefix: &Path) -> Result<LeadField> {
    let a = read_matrix(&with_extension(prefix, ".phlb"))?;
    let meta_path = with_extension(prefix, ".meta");
    let meta = read_sidecar(&meta_path)?;
    let labels: Vec<String> = sidecar_get(&meta, "channels", &meta_path)?
        .split(',')
        .map(str::to_string)
        .collect();
    let n_sources: usize = parse_num(
        sidecar_get(&meta, "n_sources", &meta_path)?,
        "n_sources",
        &meta_path,
    )?;
    if n_sources != a.ncols() {
        return Err(Error::FileFormat {
            context: format!(
                "{}: n_sources {} does not match matrix with {} columns",
                meta_path.display(),
                n_sources,
                a.ncols()
            ),
        });
    }
    LeadField::new(a, Some(labels))
}

/// Writes a dataset bundle: epochs matrix (`N_e * N_c` rows of length `L`,
/// epoch-major), a labels CSV and a metadata sidecar. A ground-truth pattern,
/// when present, lands in `<prefix>.pattern.phlb`.
pub fn write_dataset(prefix: &Path, dataset: &LabeledDataset) -> Result<()> {
    let epochs = dataset.epochs();
    let (n_e, n_c, len) = epochs.data().dim();
    let flat = epochs
        .data()
        .to_shape((n_e * n_c, len))
        .map_err(|e| Error::ShapeMismatch {
            context: e.to_string(),
        })?
        .to_owned();
    write_matrix(&with_extension(prefix, ".epochs.phlb"), &flat)?;

    let mut entries = vec![
        ("n_epochs", n_e.to_string()),
        ("n_channels", n_c.to_string()),
        ("window_s", epochs.window_s().to_string()),
        ("sample_rate_hz", epochs.sample_rate_hz().to_string()),
        ("band_low_hz", dataset.band().0.to_string()),
        ("band_high_hz", dataset.band().1.to_string()),
        ("projection", dataset.source().projection.to_string()),
        ("source_index", dataset.source().source_index.to_string()),
        ("relative_power", dataset.source().relative_power.to_string()),
    ];
    if dataset.ground_truth_pattern().is_some() {
        entries.push(("ground_truth_pattern", "1".to_string()));
    }
    write_sidecar(&with_extension(prefix, ".epochs.meta"), &entries)?;

    if let Some(pattern) = dataset.ground_truth_pattern() {
        let column = Array2::from_shape_vec((pattern.len(), 1), pattern.to_vec()).unwrap();
        write_matrix(&with_extension(prefix, ".pattern.phlb"), &column)?;
    }

    let mut w = BufWriter::new(File::create(with_extension(prefix, ".labels.csv"))?);
    writeln!(w, "epoch_index,label,good,start_sample")?;
    for (i, ((&label, &good), &start)) in dataset
        .labels()
        .iter()
        .zip(dataset.good_mask())
        .zip(epochs.epoch_starts())
        .enumerate()
    {
        writeln!(w, "{i},{label},{},{start}", u8::from(good))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(prefix: &Path) -> Result<LabeledDataset> {
    let flat = read_matrix(&with_extension(prefix, ".epochs.phlb"))?;
    let meta_path = with_extension(prefix, ".epochs.meta");
    let meta = read_sidecar(&meta_path)?;
    let n_e: usize = parse_num(sidecar_get(&meta, "n_epochs", &meta_path)?, "n_epochs", &meta_path)?;
    let n_c: usize = parse_num(
        sidecar_get(&meta, "n_channels", &meta_path)?,
        "n_channels",
        &meta_path,
    )?;
    let window_s: f64 = parse_num(sidecar_get(&meta, "window_s", &meta_path)?, "window_s", &meta_path)?;
    let rate: f64 = parse_num(
        sidecar_get(&meta, "sample_rate_hz", &meta_path)?,
        "sample_rate_hz",
        &meta_path,
    )?;
    let band = (
        parse_num(sidecar_get(&meta, "band_low_hz", &meta_path)?, "band_low_hz", &meta_path)?,
        parse_num(sidecar_get(&meta, "band_high_hz", &meta_path)?, "band_high_hz", &meta_path)?,
    );
    let projection = match sidecar_get(&meta, "projection", &meta_path)? {
        "anatomical" => ProjectionKind::Anatomical,
        "data-driven" => ProjectionKind::DataDriven,
        other => {
            return Err(Error::FileFormat {
                context: format!("{}: unknown projection {other}", meta_path.display()),
            })
        }
    };
    let source_index: usize = parse_num(
        sidecar_get(&meta, "source_index", &meta_path)?,
        "source_index",
        &meta_path,
    )?;
    let relative_power: f64 = parse_num(
        sidecar_get(&meta, "relative_power", &meta_path)?,
        "relative_power",
        &meta_path,
    )?;

    let len = flat.ncols();
    if flat.nrows() != n_e * n_c {
        return Err(Error::FileFormat {
            context: format!(
                "{}: {} rows for {} epochs x {} channels",
                meta_path.display(),
                flat.nrows(),
                n_e,
                n_c
            ),
        });
    }
    let blocks = flat
        .into_shape_with_order((n_e, n_c, len))
        .map_err(|e| Error::FileFormat {
            context: e.to_string(),
        })?;

    let labels_path = with_extension(prefix, ".labels.csv");
    let reader = BufReader::new(File::open(&labels_path)?);
    let mut labels = Vec::with_capacity(n_e);
    let mut good_mask = Vec::with_capacity(n_e);
    let mut starts = Vec::with_capacity(n_e);
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line_no == 0 {
            if line.trim() != "epoch_index,label,good,start_sample" {
                return Err(Error::FileFormat {
                    context: format!("{}: unexpected header {line}", labels_path.display()),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::FileFormat {
                context: format!("{}: bad row {line}", labels_path.display()),
            });
        }
        labels.push(parse_num(fields[1], "label", &labels_path)?);
        let good: u8 = parse_num(fields[2], "good", &labels_path)?;
        good_mask.push(good != 0);
        starts.push(parse_num(fields[3], "start_sample", &labels_path)?);
    }

    let pattern_path = with_extension(prefix, ".pattern.phlb");
    let ground_truth_pattern = if pattern_path.exists() {
        let column = read_matrix(&pattern_path)?;
        Some(column.column(0).to_owned())
    } else {
        None
    };

    let epochs = EpochSet::from_blocks(blocks, window_s, rate, Some(starts))?;
    LabeledDataset::new(
        epochs,
        labels,
        Some(good_mask),
        DatasetMeta {
            band,
            source: SourceDescriptor {
                projection,
                source_index,
                relative_power,
            },
            ground_truth_pattern,
            label_mode: Default::default(),
        },
    )
}

/// Streams sweep rows to a CSV file, one row per fold.
pub struct ResultsWriter {
    writer: BufWriter<File>,
}

impl ResultsWriter {
    /// Creates the file and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut writer = BufWriter::new(File::create(path)?);
        writeln!(writer, "{RESULTS_HEADER}")?;
        writer.flush()?;
        Ok(Self { writer })
    }

    /// Opens an existing results file for appending (resume).
    pub fn append_to(path: &Path) -> Result<Self> {
        let writer = BufWriter::new(OpenOptions::new().append(true).open(path)?);
        Ok(Self { writer })
    }

    pub fn write_result(&mut self, result: &SweepResult) -> Result<()> {
        for fold in &result.folds {
            let alpha = fold.alpha_rad.unwrap_or(f64::NAN);
            writeln!(
                self.writer,
                "{},{},{},{},{},{},{},{}",
                result.config_id,
                result.n_epochs,
                result.xi,
                result.rel_power,
                fold.fold,
                fold.rho,
                alpha,
                result.seed
            )?;
        }
        self.writer.flush()?;
        Ok(())
    }
}

/// One parsed row of a results CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub config_id: usize,
    pub n_epochs: usize,
    pub xi: f64,
    pub rel_power: f64,
    pub fold: usize,
    pub rho: f64,
    pub alpha_rad: f64,
    pub seed: u64,
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line_no == 0 {
            if line.trim() != RESULTS_HEADER {
                return Err(Error::FileFormat {
                    context: format!("{}: unexpected header {line}", path.display()),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::FileFormat {
                context: format!("{}: bad row {line}", path.display()),
            });
        }
        rows.push(ResultRow {
            config_id: parse_num(fields[0], "config_id", path)?,
            n_epochs: parse_num(fields[1], "n_epochs", path)?,
            xi: parse_num(fields[2], "xi", path)?,
            rel_power: parse_num(fields[3], "rel_power", path)?,
            fold: parse_num(fields[4], "fold", path)?,
            rho: parse_num(fields[5], "rho", path)?,
            alpha_rad: parse_num(fields[6], "alpha_rad", path)?,
            seed: parse_num(fields[7], "seed", path)?,
        });
    }
    Ok(rows)
}

/// Regroups per-fold CSV rows into per-configuration results.
pub fn results_from_rows(rows: &[ResultRow]) -> Vec<SweepResult> {
    let mut ids: Vec<usize> = rows.iter().map(|r| r.config_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.config_id == id).collect();
            let folds: Vec<FoldScore> = group
                .iter()
                .map(|r| FoldScore {
                    fold: r.fold,
                    rho: r.rho,
                    alpha_rad: r.alpha_rad.is_finite().then_some(r.alpha_rad),
                })
                .collect();
            let mean_rho = folds.iter().map(|f| f.rho).sum::<f64>() / folds.len() as f64;
            let alphas: Vec<f64> = folds.iter().filter_map(|f| f.alpha_rad).collect();
            let mean_alpha_rad = if alphas.is_empty() {
                f64::NAN
            } else {
                alphas.iter().sum::<f64>() / alphas.len() as f64
            };
            let first = group[0];
            SweepResult {
                config_id: id,
                n_epochs: first.n_epochs,
                xi: first.xi,
                rel_power: first.rel_power,
                seed: first.seed,
                mean_rho,
                mean_alpha_rad,
                folds,
            }
        })
        .collect()
}

/// Serializes a trained model: filter, pattern, eigenvalue and band as
/// `name,index,value` rows.
pub fn write_model(path: &Path, model: &SpocModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "name,index,value")?;
    for (i, v) in model.w.iter().enumerate() {
        writeln!(w, "w,{i},{v}")?;
    }
    for (i, v) in model.pattern.iter().enumerate() {
        writeln!(w, "pattern,{i},{v}")?;
    }
    writeln!(w, "eigenvalue,0,{}", model.eigenvalue)?;
    writeln!(w, "band_low_hz,0,{}", model.band.0)?;
    writeln!(w, "band_high_hz,0,{}", model.band.1)?;
    w.flush()?;
    Ok(())
}

/// Model fields recoverable from a model CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRecord {
    pub w: Vec<f64>,
    pub pattern: Vec<f64>,
    pub eigenvalue: f64,
    pub band: (f64, f64),
}

pub fn read_model(path: &Path) -> Result<ModelRecord> {
    let reader = BufReader::new(File::open(path)?);
    let mut w = Vec::new();
    let mut pattern = Vec::new();
    let mut eigenvalue = None;
    let mut band_low = None;
    let mut band_high = None;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line_no == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::FileFormat {
                context: format!("{}: bad row {line}", path.display()),
            });
        }
        let value: f64 = parse_num(fields[2], fields[0], path)?;
        match fields[0] {
            "w" => w.push(value),
            "pattern" => pattern.push(value),
            "eigenvalue" => eigenvalue = Some(value),
            "band_low_hz" => band_low = Some(value),
            "band_high_hz" => band_high = Some(value),
            other => {
                return Err(Error::FileFormat {
                    context: format!("{}: unknown field {other}", path.display()),
                })
            }
        }
    }
    match (eigenvalue, band_low, band_high) {
        (Some(eigenvalue), Some(low), Some(high)) if !w.is_empty() => Ok(ModelRecord {
            w,
            pattern,
            eigenvalue,
            band: (low, high),
        }),
        _ => Err(Error::FileFormat {
            context: format!("{}: incomplete model", path.display()),
        }),
    }
}

/// Epoch blocks flattened back out of a dataset file, for callers that need
/// raw arrays.
pub fn epochs_to_blocks(flat: &Array2<f64>, n_e: usize, n_c: usize) -> Result<Array3<f64>> {
    let len = flat.ncols();
    flat.to_owned()
        .into_shape_with_order((n_e, n_c, len))
        .map_err(|e| Error::FileFormat {
            context: e.to_string(),
        })
}
