//! Datasets, the synthetic bi-linear generator and CSV input/output.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{EklError, Result};

/// Inputs `x` (`n × d`, one sample per row) and outputs `y` (`p × n`, one
/// sample per column).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.ncols() {
            return Err(EklError::Dimension(format!(
                "{} input rows but {} output columns",
                x.nrows(),
                y.ncols()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(EklError::Data("dataset contains non-finite values".into()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.y.nrows()
    }

    /// Samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_columns(idx),
        }
    }

    /// First `n_train` samples and the rest.
    pub fn split_at(&self, n_train: usize) -> Result<(Dataset, Dataset)> {
        if n_train > self.len() {
            return Err(EklError::InvalidParameter(format!(
                "cannot take {n_train} training samples from {}",
                self.len()
            )));
        }
        let train: Vec<usize> = (0..n_train).collect();
        let test: Vec<usize> = (n_train..self.len()).collect();
        Ok((self.subset(&train), self.subset(&test)))
    }

    /// Random split with `n_train` training samples, deterministic per seed.
    pub fn random_split(&self, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if n_train > self.len() {
            return Err(EklError::InvalidParameter(format!(
                "cannot take {n_train} training samples from {}",
                self.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perm = rand::seq::index::sample(&mut rng, self.len(), self.len()).into_vec();
        Ok((self.subset(&perm[..n_train]), self.subset(&perm[n_train..])))
    }
}

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `Y = T C A + C K + ε` with `K = X Xᵀ` (linear kernel on the rows of `X`).
///
/// `T` (`p × p`), `C` (`p × n`), `A` (`n × n`), `X` (`n × d`) and `ε` are
/// drawn in that order from a ChaCha8 stream, each filled column-major with
/// standard normals (`ε` scaled by `noise_sigma`).
pub fn gen_bilinear(n: usize, p: usize, d: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || p == 0 || d == 0 {
        return Err(EklError::InvalidParameter("n, p and d must be positive".into()));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(EklError::InvalidParameter(format!("noise sigma must be non-negative, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = randn(&mut rng, p, p);
    let c = randn(&mut rng, p, n);
    let a = randn(&mut rng, n, n);
    let x = randn(&mut rng, n, d);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| EklError::InvalidParameter(e.to_string()))?;
    let eps = DMatrix::from_fn(p, n, |_, _| noise.sample(&mut rng));
    let k = &x * x.transpose();
    let y = &t * &c * &a + &c * k + eps;
    Dataset::new(x, y)
}

/// Which CSV columns hold the outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layout {
    /// The last `p` columns.
    Tail,
    /// Explicit output column indices; every other column is an input.
    Columns(Vec<usize>),
}

/// Load a numeric comma-separated file with one sample per row.
pub fn load_csv(path: impl AsRef<Path>, p: usize, layout: &Layout, has_header: bool) -> Result<Dataset> {
    let rows = read_rows(path.as_ref(), has_header)?;
    let width = rows.first().map_or(0, Vec::len);
    let outputs: Vec<usize> = match layout {
        Layout::Tail => {
            if p == 0 || p >= width {
                return Err(EklError::Data(format!(
                    "need at least one input and {p} outputs, file has {width} columns"
                )));
            }
            (width - p..width).collect()
        }
        Layout::Columns(cols) => {
            if cols.len() != p || cols.iter().any(|&c| c >= width) {
                return Err(EklError::Data(format!(
                    "output columns {cols:?} do not fit {p} outputs in {width} columns"
                )));
            }
            cols.clone()
        }
    };
    let inputs: Vec<usize> = (0..width).filter(|c| !outputs.contains(c)).collect();
    if inputs.is_empty() {
        return Err(EklError::Data("no input columns left".into()));
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, inputs.len(), |i, j| rows[i][inputs[j]]);
    let y = DMatrix::from_fn(p, n, |s, i| rows[i][outputs[s]]);
    Dataset::new(x, y)
}

/// Rows of a purely numeric CSV file as `f64`; rejects ragged or non-finite data.
pub fn read_rows(path: &Path, has_header: bool) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    EklError::Data(format!("record {}: cannot parse {field:?}", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EklError::Data(format!("record {}: non-finite value", line + 1)));
        }
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(EklError::Data(format!(
                    "record {} has {} fields, expected {first}",
                    line + 1,
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(EklError::Data("file holds no records".into()));
    }
    Ok(rows)
}

/// Matrix from a numeric CSV file, one CSV row per matrix row.
pub fn read_matrix(path: impl AsRef<Path>, has_header: bool) -> Result<DMatrix<f64>> {
    let rows = read_rows(path.as_ref(), has_header)?;
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Write a matrix as CSV, one matrix row per line, with round-trip float formatting.
pub fn write_matrix<W: Write>(out: W, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    if let Some(h) = header {
        writer.write_record(h)?;
    }
    for i in 0..m.nrows() {
        writer.write_record(m.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    writer.flush()?;
    Ok(())
}

/// Atomically write `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: impl AsRef<Path>, contents: impl FnOnce(&mut std::fs::File) -> Result<()>) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    contents(tmp.as_file_mut())?;
    tmp.as_file_mut().sync_all()?;
    tmp.persist(path).map_err(|e| EklError::Io(e.error))?;
    Ok(())
}

/// Save in the [`Layout::Tail`] format: inputs then outputs, one sample per row.
pub fn save_csv(path: impl AsRef<Path>, ds: &Dataset, header: bool) -> Result<()> {
    let (n, d, p) = (ds.len(), ds.input_dim(), ds.outputs());
    let mut joined = DMatrix::zeros(n, d + p);
    joined.view_mut((0, 0), (n, d)).copy_from(&ds.x);
    joined.view_mut((0, d), (n, p)).copy_from(&ds.y.transpose());
    let names: Vec<String> = (0..d)
        .map(|j| format!("x{j}"))
        .chain((0..p).map(|s| format!("y{s}")))
        .collect();
    write_atomic(path, |f| write_matrix(f, &joined, header.then_some(names.as_slice())))
}
