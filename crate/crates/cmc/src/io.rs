//! On-disk formats.
//!
//! * observations: CSV with header `v,i,j,y` (source, row, local column,
//!   value), values in shortest round-trip scientific notation;
//! * layout sidecar: JSON `{d_u, d_vs, families}`;
//! * dense arrays: little-endian `f64` in column-major order (`<stem>.bin`)
//!   described by a JSON header (`<stem>.json`);
//! * factors: `u.bin`, `sigma.bin`, `v.bin` described by `factors.json`;
//! * fit reports: JSON `{config, ...trace}`;
//! * metric records: JSON lines.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use cmc_core::data::{BlockLayout, CollectiveMatrix, Observation, ObservationSet};
use cmc_core::expfam::ExpFamilyModel;
use cmc_core::lowrank::ThinFactors;
use cmc_core::solver::{FitResult, SolverConfig};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const LAYOUT_FILE: &str = "layout.json";
pub const TRUTH_STEM: &str = "truth";
pub const FIT_FILE: &str = "fit.json";
pub const FACTORS_FILE: &str = "factors.json";

const DTYPE: &str = "f64-le";
const ORDER: &str = "column-major";

/// Layout sidecar of an observation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub d_u: usize,
    pub d_vs: Vec<usize>,
    pub families: Vec<ExpFamilyModel>,
}

impl LayoutFile {
    pub fn of(obs: &ObservationSet) -> Self {
        LayoutFile {
            d_u: obs.layout().rows(),
            d_vs: obs.layout().source_cols().to_vec(),
            families: obs.families().to_vec(),
        }
    }

    pub fn layout(&self) -> Result<BlockLayout> {
        Ok(BlockLayout::new(self.d_u, self.d_vs.clone())?)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, to_json(value).as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_observations_csv<W: Write>(out: W, obs: &ObservationSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(format!("writing observations: {e}"));
    w.write_record(["v", "i", "j", "y"]).map_err(err)?;
    for e in obs.entries() {
        w.write_record([
            e.source.to_string(),
            e.row.to_string(),
            e.col.to_string(),
            format_f64(e.value),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing observations: {e}")))
}

/// Parses an observation CSV. `path` is only used in error messages.
pub fn read_observations_csv<R: Read>(
    input: R,
    path: &Path,
    layout: &BlockLayout,
    families: Vec<ExpFamilyModel>,
) -> Result<ObservationSet> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = r.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["v", "i", "j", "y"] {
        return Err(parse_err(1, format!("expected header v,i,j,y, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut entries = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", record.len())));
        }
        let index = |k: usize, name: &str| -> Result<usize> {
            record[k]
                .parse::<usize>()
                .map_err(|_| parse_err(line, format!("{name} is not a non-negative integer: {:?}", &record[k])))
        };
        let (v, i, j) = (index(0, "v")?, index(1, "i")?, index(2, "j")?);
        let y: f64 = record[3]
            .parse()
            .map_err(|_| parse_err(line, format!("y is not a number: {:?}", &record[3])))?;
        if v >= layout.sources() || i >= layout.rows() || j >= layout.cols(v) {
            return Err(parse_err(line, format!("entry ({v}, {i}, {j}) lies outside the layout")));
        }
        if !y.is_finite() {
            return Err(parse_err(line, format!("non-finite value {y}")));
        }
        if let Some(f) = families.get(v) {
            f.check_observation(y).map_err(|e| parse_err(line, e.to_string()))?;
        }
        entries.push(Observation {
            source: v,
            row: i,
            col: j,
            value: y,
        });
    }
    Ok(ObservationSet::new(layout.clone(), families, entries)?)
}

/// Writes `observations.csv` and `layout.json` into `dir`.
pub fn save_observations(dir: &Path, obs: &ObservationSet) -> Result<()> {
    let mut csv_bytes = Vec::new();
    write_observations_csv(&mut csv_bytes, obs)?;
    write_file(&dir.join(OBSERVATIONS_FILE), &csv_bytes)?;
    write_json(&dir.join(LAYOUT_FILE), &LayoutFile::of(obs))
}

/// Reads `observations.csv` with its `layout.json` sidecar from `dir`.
pub fn load_observations(dir: &Path) -> Result<ObservationSet> {
    let sidecar: LayoutFile = read_json(&dir.join(LAYOUT_FILE))?;
    let layout = sidecar.layout()?;
    let path = dir.join(OBSERVATIONS_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    read_observations_csv(BufReader::new(file), &path, &layout, sidecar.families)
}

/// Shape header of a binary array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub order: String,
}

pub fn matrix_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    m.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect()
}

/// Writes `<stem>.bin` and returns its header.
pub fn write_array(dir: &Path, stem: &str, m: &DMatrix<f64>) -> Result<ArrayHeader> {
    let file = format!("{stem}.bin");
    write_file(&dir.join(&file), &matrix_bytes(m))?;
    Ok(ArrayHeader {
        file,
        rows: m.nrows(),
        cols: m.ncols(),
        dtype: DTYPE.to_string(),
        order: ORDER.to_string(),
    })
}

pub fn read_array(dir: &Path, header: &ArrayHeader) -> Result<DMatrix<f64>> {
    if header.dtype != DTYPE || header.order != ORDER {
        return Err(Error::Data(format!(
            "unsupported array encoding {}/{} in {}",
            header.dtype, header.order, header.file
        )));
    }
    let path = dir.join(&header.file);
    let bytes = read_file(&path)?;
    if bytes.len() != 8 * header.rows * header.cols {
        return Err(Error::Data(format!(
            "{}: expected {} bytes for a {}x{} array, found {}",
            path.display(),
            8 * header.rows * header.cols,
            header.rows,
            header.cols,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DMatrix::from_vec(header.rows, header.cols, values))
}

/// Writes `<stem>.bin` and its header `<stem>.json`.
pub fn save_matrix(dir: &Path, stem: &str, m: &DMatrix<f64>) -> Result<()> {
    let header = write_array(dir, stem, m)?;
    write_json(&dir.join(format!("{stem}.json")), &header)
}

pub fn load_matrix(dir: &Path, stem: &str) -> Result<DMatrix<f64>> {
    let header: ArrayHeader = read_json(&dir.join(format!("{stem}.json")))?;
    read_array(dir, &header)
}

/// Ground truth as `truth.bin` / `truth.json`.
pub fn save_truth(dir: &Path, truth: &CollectiveMatrix) -> Result<()> {
    save_matrix(dir, TRUTH_STEM, truth.matrix())
}

pub fn load_truth(dir: &Path, layout: &BlockLayout) -> Result<CollectiveMatrix> {
    Ok(CollectiveMatrix::from_matrix(layout.clone(), load_matrix(dir, TRUTH_STEM)?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorsHeader {
    pub u: ArrayHeader,
    pub sigma: ArrayHeader,
    pub v: ArrayHeader,
}

pub fn save_factors(dir: &Path, f: &ThinFactors) -> Result<()> {
    let sigma = DMatrix::from_column_slice(f.sigma.len(), 1, &f.sigma);
    let header = FactorsHeader {
        u: write_array(dir, "u", &f.u)?,
        sigma: write_array(dir, "sigma", &sigma)?,
        v: write_array(dir, "v", &f.v)?,
    };
    write_json(&dir.join(FACTORS_FILE), &header)
}

pub fn load_factors(dir: &Path) -> Result<ThinFactors> {
    let header: FactorsHeader = read_json(&dir.join(FACTORS_FILE))?;
    let u = read_array(dir, &header.u)?;
    let sigma = read_array(dir, &header.sigma)?;
    let v = read_array(dir, &header.v)?;
    if sigma.ncols() > 1 || u.ncols() != sigma.nrows() || v.ncols() != sigma.nrows() {
        return Err(Error::Data("factor shapes are inconsistent".to_string()));
    }
    Ok(ThinFactors {
        u,
        sigma: sigma.as_slice().to_vec(),
        v,
    })
}

/// Serialized fit: the configuration next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub config: SolverConfig,
    #[serde(flatten)]
    pub result: FitResult,
}

/// Writes `fit.json` and the factor files into `dir`.
pub fn save_fit(dir: &Path, config: &SolverConfig, result: &FitResult) -> Result<()> {
    save_factors(dir, &result.factors)?;
    write_json(
        &dir.join(FIT_FILE),
        &FitReport {
            config: config.clone(),
            result: result.clone(),
        },
    )
}

pub fn load_fit(dir: &Path) -> Result<FitReport> {
    let mut report: FitReport = read_json(&dir.join(FIT_FILE))?;
    report.result.factors = load_factors(dir)?;
    Ok(report)
}

pub fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("serializable value"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_file(path, jsonl(items).as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: PathBuf::from(path),
            line: k as u64 + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
