//! Dataset ingestion and artifact emission: IDX image/label files, synthetic
//! generators, split handling, CSV metrics, and PGM grids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Signals split into train/valid/test blocks with optional integer labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Matrix,
    pub valid: Matrix,
    pub test: Matrix,
    pub train_labels: Option<Vec<u32>>,
    pub valid_labels: Option<Vec<u32>>,
    pub test_labels: Option<Vec<u32>>,
}

impl Dataset {
    pub fn new(train: Matrix, valid: Matrix, test: Matrix) -> Self {
        assert_eq!(train.cols(), valid.cols(), "split widths must agree");
        assert_eq!(train.cols(), test.cols(), "split widths must agree");
        Self {
            train,
            valid,
            test,
            train_labels: None,
            valid_labels: None,
            test_labels: None,
        }
    }

    /// Signal dimension n.
    pub fn dim(&self) -> usize {
        self.train.cols()
    }

    pub fn with_labels(
        mut self,
        train: Vec<u32>,
        valid: Vec<u32>,
        test: Vec<u32>,
    ) -> Result<Self> {
        for (labels, rows, name) in [
            (&train, self.train.rows(), "train"),
            (&valid, self.valid.rows(), "valid"),
            (&test, self.test.rows(), "test"),
        ] {
            if labels.len() != rows {
                return Err(Error::Validation(format!(
                    "{name} labels: {} entries for {rows} rows",
                    labels.len()
                )));
            }
        }
        self.train_labels = Some(train);
        self.valid_labels = Some(valid);
        self.test_labels = Some(test);
        Ok(self)
    }
}

/// Split fractions for partitioning one source file in row order.
#[derive(Debug, Clone, Copy)]
pub struct SplitFractions {
    pub valid: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(valid: f64, test: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&valid) || !(0.0..1.0).contains(&test) || valid + test >= 1.0 {
            return Err(Error::Validation(format!(
                "split fractions valid={valid}, test={test} must be in [0,1) and sum below 1"
            )));
        }
        Ok(Self { valid, test })
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { valid: 0.1, test: 0.1 }
    }
}

/// Partitions rows (in file order) into train/valid/test. The three blocks
/// are disjoint and cover every row: valid and test counts are rounded, train
/// takes the remainder.
pub fn split_rows(
    images: Matrix,
    labels: Option<Vec<u32>>,
    fractions: SplitFractions,
) -> Result<Dataset> {
    let n = images.rows();
    let n_valid = (n as f64 * fractions.valid).round() as usize;
    let n_test = (n as f64 * fractions.test).round() as usize;
    if n_valid + n_test > n {
        return Err(Error::Validation(format!(
            "splits ({n_valid} valid + {n_test} test) exceed {n} rows"
        )));
    }
    split_rows_by_counts(images, labels, n - n_valid - n_test, n_valid, n_test)
}

/// Partitions rows (in file order) by exact counts, which must cover the
/// source exhaustively.
pub fn split_rows_by_counts(
    images: Matrix,
    labels: Option<Vec<u32>>,
    n_train: usize,
    n_valid: usize,
    n_test: usize,
) -> Result<Dataset> {
    let n = images.rows();
    if n_train + n_valid + n_test != n {
        return Err(Error::Validation(format!(
            "split counts {n_train}+{n_valid}+{n_test} must cover all {n} rows"
        )));
    }
    let train = images.slice_rows(0, n_train);
    let valid = images.slice_rows(n_train, n_valid);
    let test = images.slice_rows(n_train + n_valid, n_test);
    let mut ds = Dataset::new(train, valid, test);
    if let Some(labels) = labels {
        if labels.len() != n {
            return Err(Error::Validation(format!(
                "{} labels for {n} images",
                labels.len()
            )));
        }
        ds = ds.with_labels(
            labels[..n_train].to_vec(),
            labels[n_train..n_train + n_valid].to_vec(),
            labels[n_train + n_valid..].to_vec(),
        )?;
    }
    Ok(ds)
}

fn read_u32_be(reader: &mut impl Read, offset: &mut usize, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(|_| {
        Error::Format(format!(
            "{}: truncated while reading a big-endian u32 at offset {}",
            path.display(),
            offset
        ))
    })?;
    *offset += 4;
    Ok(u32::from_be_bytes(buf))
}

/// Loads a big-endian IDX image file (magic 0x00000803) as an `N x (rows*cols)`
/// matrix with every byte scaled to `[0, 1]` by division by 255.
pub fn load_idx_images(path: &Path) -> Result<Matrix> {
    let file = File::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut offset = 0usize;
    let magic = read_u32_be(&mut reader, &mut offset, path)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:#010x} at offset 0, expected {IDX_IMAGE_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut reader, &mut offset, path)? as usize;
    let rows = read_u32_be(&mut reader, &mut offset, path)? as usize;
    let cols = read_u32_be(&mut reader, &mut offset, path)? as usize;
    let expected = count * rows * cols;
    let mut bytes = Vec::with_capacity(expected);
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} pixel bytes after offset {offset}, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let data = bytes.iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::from_vec(count, rows * cols, data)
}

/// Writes images (already quantized to bytes) in the IDX layout read back by
/// [`load_idx_images`].
pub fn save_idx_images(path: &Path, count: usize, rows: usize, cols: usize, bytes: &[u8]) -> Result<()> {
    if bytes.len() != count * rows * cols {
        return Err(Error::Validation(format!(
            "{} bytes for {count} images of {rows}x{cols}",
            bytes.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&IDX_IMAGE_MAGIC.to_be_bytes())?;
    w.write_all(&(count as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

/// Loads a big-endian IDX label file (magic 0x00000801).
pub fn load_idx_labels(path: &Path) -> Result<Vec<u32>> {
    let file = File::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut offset = 0usize;
    let magic = read_u32_be(&mut reader, &mut offset, path)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:#010x} at offset 0, expected {IDX_LABEL_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut reader, &mut offset, path)? as usize;
    let mut bytes = Vec::with_capacity(count);
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != count {
        return Err(Error::Format(format!(
            "{}: expected {count} label bytes after offset {offset}, found {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes.iter().map(|&b| b as u32).collect())
}

pub fn save_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&IDX_LABEL_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    w.flush()?;
    Ok(())
}

/// Parameters of the two-component Gaussian mixture used by the
/// dimensionality-reduction comparison: two clusters stretched along
/// orthogonal directions.
#[derive(Debug, Clone, Copy)]
pub struct MixtureParams {
    pub mean_a: [f64; 2],
    pub mean_b: [f64; 2],
    pub std_long: f64,
    pub std_short: f64,
}

impl Default for MixtureParams {
    fn default() -> Self {
        Self {
            mean_a: [-2.0, 2.0],
            mean_b: [2.0, -2.0],
            std_long: 2.0,
            std_short: 0.2,
        }
    }
}

/// Equiweighted mixture of two axis-stretched Gaussians in 2-D. Per point:
/// one fair-coin draw selects the component, then two normal draws.
/// Component A stretches along x, component B along y.
pub fn make_two_gaussian_mixture(n: usize, params: MixtureParams, rng: &mut Rng) -> Matrix {
    let mut out = Matrix::zeros(n, 2);
    for i in 0..n {
        let heads = rng.below(2) == 0;
        let row = out.row_mut(i);
        if heads {
            row[0] = params.mean_a[0] + params.std_long * rng.standard_normal();
            row[1] = params.mean_a[1] + params.std_short * rng.standard_normal();
        } else {
            row[0] = params.mean_b[0] + params.std_short * rng.standard_normal();
            row[1] = params.mean_b[1] + params.std_long * rng.standard_normal();
        }
    }
    out
}

/// Zero-mean 2-D Gaussian cloud with axis standard deviations `stds` rotated
/// by `angle` radians. Its top principal direction is the rotated long axis.
pub fn make_gaussian_cloud(n: usize, stds: [f64; 2], angle: f64, rng: &mut Rng) -> Matrix {
    let (sin, cos) = angle.sin_cos();
    let mut out = Matrix::zeros(n, 2);
    for i in 0..n {
        let a = stds[0] * rng.standard_normal();
        let b = stds[1] * rng.standard_normal();
        let row = out.row_mut(i);
        row[0] = cos * a - sin * b;
        row[1] = sin * a + cos * b;
    }
    out
}

/// Planted sparse signals: each row has exactly `k_sparse` nonzero
/// coordinates (chosen without replacement) set to `+-Uniform[1, 2]`.
pub fn make_sparse_signals(n: usize, dim: usize, k_sparse: usize, rng: &mut Rng) -> Result<Matrix> {
    if k_sparse > dim {
        return Err(Error::Validation(format!(
            "k_sparse {k_sparse} exceeds dimension {dim}"
        )));
    }
    let mut out = Matrix::zeros(n, dim);
    let mut coords: Vec<usize> = (0..dim).collect();
    for i in 0..n {
        rng.shuffle(&mut coords);
        for &c in coords.iter().take(k_sparse) {
            let magnitude = rng.uniform_in(1.0, 2.0);
            let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
            out.set(i, c, sign * magnitude);
        }
    }
    Ok(out)
}

/// Synthetic structured desk images: a single Gaussian bump per image with a
/// random center and amplitude, quantized to bytes. The label is the quadrant
/// of the bump center (0..4), which gives classification probes something
/// learnable. Returns `(images in [0,1], labels)`.
pub fn make_blob_images(count: usize, side: usize, rng: &mut Rng) -> (Matrix, Vec<u32>) {
    let mut images = Matrix::zeros(count, side * side);
    let mut labels = Vec::with_capacity(count);
    let width = side as f64 * 0.15;
    for i in 0..count {
        let cx = rng.uniform_in(1.5, side as f64 - 2.5);
        let cy = rng.uniform_in(1.5, side as f64 - 2.5);
        let amp = rng.uniform_in(0.6, 1.0);
        let half = (side as f64 - 1.0) / 2.0;
        let quadrant = (cx > half) as u32 + 2 * (cy > half) as u32;
        labels.push(quadrant);
        let row = images.row_mut(i);
        for py in 0..side {
            for px in 0..side {
                let d2 = (px as f64 - cx).powi(2) + (py as f64 - cy).powi(2);
                let v = amp * (-d2 / (2.0 * width * width)).exp();
                // quantize like the IDX byte path so in-memory data and
                // files round-trip identically
                row[py * side + px] = (v * 255.0).round().clamp(0.0, 255.0) / 255.0;
            }
        }
    }
    (images, labels)
}

/// Quantizes unit-range values to bytes for IDX emission.
pub fn quantize_unit(values: &[f64]) -> Result<Vec<u8>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !(0.0..=1.0).contains(&v) {
                Err(Error::Validation(format!(
                    "value {v} at index {i} is outside [0,1]; refusing to clamp"
                )))
            } else {
                Ok((v * 255.0).round() as u8)
            }
        })
        .collect()
}

/// Formats a float with 9 significant digits for CSV emission.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes a CSV file with one header row. Creates parent directories.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

/// Appends rows to a CSV, writing the header first if the file is new.
pub fn append_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let fresh = !path.exists();
    let mut w = BufWriter::new(File::options().create(true).append(true).open(path)?);
    if fresh {
        writeln!(w, "{header}")?;
    }
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a training report as CSV: epoch, train_loss, valid_loss, frob_w.
pub fn write_train_report_csv(path: &Path, report: &crate::train::TrainReport) -> Result<()> {
    let rows: Vec<String> = report
        .epochs
        .iter()
        .map(|e| {
            format!(
                "{},{},{},{}",
                e.epoch,
                fmt_float(e.train_loss),
                fmt_float(e.valid_loss),
                fmt_float(e.frob_w)
            )
        })
        .collect();
    write_csv(path, "epoch,train_loss,valid_loss,frob_w", &rows)
}

/// Writes matrix rows as CSV with columns `c0..c{n-1}`.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let header = (0..m.cols()).map(|j| format!("c{j}")).collect::<Vec<_>>().join(",");
    let rows: Vec<String> = (0..m.rows())
        .map(|i| m.row(i).iter().map(|&v| fmt_float(v)).collect::<Vec<_>>().join(","))
        .collect();
    write_csv(path, &header, &rows)
}

/// Tiles unit-range images (each a row of `side*side` values) into a binary
/// PGM (P5) grid with 1-pixel separators.
pub fn write_pgm_grid(
    path: &Path,
    images: &[&[f64]],
    side: usize,
    grid_cols: usize,
) -> Result<()> {
    if images.is_empty() || grid_cols == 0 {
        return Err(Error::Validation("empty PGM grid".into()));
    }
    for (i, img) in images.iter().enumerate() {
        if img.len() != side * side {
            return Err(Error::Validation(format!(
                "image {i} has {} values, expected {}",
                img.len(),
                side * side
            )));
        }
    }
    let grid_rows = images.len().div_ceil(grid_cols);
    let width = grid_cols * side + grid_cols - 1;
    let height = grid_rows * side + grid_rows - 1;
    let mut pixels = vec![64u8; width * height]; // separator gray
    for (idx, img) in images.iter().enumerate() {
        let gx = (idx % grid_cols) * (side + 1);
        let gy = (idx / grid_cols) * (side + 1);
        for py in 0..side {
            for px in 0..side {
                let v = img[py * side + px].clamp(0.0, 1.0);
                pixels[(gy + py) * width + gx + px] = (v * 255.0).round() as u8;
            }
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(&pixels)?;
    w.flush()?;
    Ok(())
}
