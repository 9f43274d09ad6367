//! Observations, response scaling and deterministic splits.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

impl Dataset {
    /// Builds a dataset with generated names `x1..xn` and target `y`.
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, y, names, "y".to_string())
    }

    pub fn with_names(x: Matrix, y: Vec<f64>, feature_names: Vec<String>, target_name: String) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::shape(format!("{} responses", x.nrows()), y.len()));
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::shape(format!("{} feature names", x.ncols()), feature_names.len()));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::TooFewObservations { have: x.nrows(), need: 1 });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("observations"));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("responses"));
        }
        Ok(Dataset { x, y, feature_names, target_name })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Rows picked by index, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }

    pub fn with_targets(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::with_names(self.x.clone(), y, self.feature_names.clone(), self.target_name.clone())
    }
}

/// Reads a numeric CSV file. Without a header, columns are named `x1..xn` and
/// the last column is the target unless `target` names one of them.
pub fn load_csv(path: impl AsRef<Path>, target: Option<&str>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let NumericTable { mut header, ncols, nrows, values } = read_numeric_csv(path, has_header)?;
    let tcol = match target {
        Some(name) => header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))?,
        None if ncols > 0 => ncols - 1,
        None => return Err(Error::MissingColumn("<last column>".to_string())),
    };
    if ncols < 2 {
        return Err(Error::shape("at least one feature column besides the target", ncols));
    }

    let mut x = Vec::with_capacity(nrows * (ncols - 1));
    let mut y = Vec::with_capacity(nrows);
    for row in values.chunks_exact(ncols) {
        for (c, &v) in row.iter().enumerate() {
            if c == tcol {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    let target_name = header.remove(tcol);
    Dataset::with_names(Matrix::from_vec(nrows, ncols - 1, x)?, y, header, target_name)
}

/// Reads a numeric CSV file in which every column is a feature.
pub fn load_csv_features(path: impl AsRef<Path>, has_header: bool) -> Result<Matrix> {
    let t = read_numeric_csv(path.as_ref(), has_header)?;
    Matrix::from_vec(t.nrows, t.ncols, t.values)
}

struct NumericTable {
    header: Vec<String>,
    ncols: usize,
    nrows: usize,
    values: Vec<f64>,
}

fn read_numeric_csv(path: &Path, has_header: bool) -> Result<NumericTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let mut header: Vec<String> = if has_header {
        reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };

    let mut values: Vec<f64> = Vec::new();
    let mut ncols = if has_header { Some(header.len()) } else { None };
    let mut nrows = 0usize;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(r + 1, |p| p.line() as usize);
        match ncols {
            Some(c) if c != rec.len() => {
                return Err(Error::Parse {
                    row: line,
                    col: rec.len().min(c) + 1,
                    msg: format!("expected {c} fields, found {}", rec.len()),
                })
            }
            None => ncols = Some(rec.len()),
            _ => {}
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                col: c + 1,
                msg: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row: line, col: c + 1, msg: format!("`{cell}` is not finite") });
            }
            values.push(v);
        }
        nrows += 1;
    }
    let ncols = ncols.unwrap_or(0);
    if !has_header {
        header = (1..=ncols).map(|j| format!("x{j}")).collect();
    }
    Ok(NumericTable { header, ncols, nrows, values })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { row: line, col: 0, msg: format!("{other:?}") },
    }
}

/// Writes features then target as a CSV file with a header row.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(&ds.target_name);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (row, y) in ds.x.rows().zip(&ds.y) {
        let rec: Vec<String> = row.iter().chain(std::iter::once(y)).map(|v| format!("{v:?}")).collect();
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Loads an IDX image/label pair. Pixels are divided by 255.
pub fn load_mnist_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (ipath, lpath) = (images.as_ref(), labels.as_ref());
    let ib = fs::read(ipath).map_err(|e| Error::io(ipath, e))?;
    let lb = fs::read(lpath).map_err(|e| Error::io(lpath, e))?;

    let magic = read_be_u32(&ib, 0).unwrap_or(0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic { path: ipath.to_path_buf(), expected: IDX_IMAGES_MAGIC, found: magic });
    }
    let magic = read_be_u32(&lb, 0).unwrap_or(0);
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic { path: lpath.to_path_buf(), expected: IDX_LABELS_MAGIC, found: magic });
    }
    let header = |b: &[u8], at: usize, path: &Path| {
        read_be_u32(b, at).map(|v| v as usize).ok_or_else(|| {
            Error::Parse { row: 0, col: at, msg: format!("{} ends inside the header", path.display()) }
        })
    };
    let count = header(&ib, 4, ipath)?;
    let rows = header(&ib, 8, ipath)?;
    let cols = header(&ib, 12, ipath)?;
    let nlabels = header(&lb, 4, lpath)?;
    let pixels = rows * cols;

    let available_images = (ib.len() - 16) / pixels.max(1);
    let available_labels = lb.len() - 8;
    if count != nlabels || available_images < count || available_labels < nlabels {
        return Err(Error::CountMismatch {
            images: count.min(available_images),
            labels: nlabels.min(available_labels),
        });
    }

    let x: Vec<f64> = ib[16..16 + count * pixels].iter().map(|&p| f64::from(p) / 255.0).collect();
    let y: Vec<f64> = lb[8..8 + count].iter().map(|&l| f64::from(l)).collect();
    let names = (0..pixels).map(|j| format!("px{j}")).collect();
    Dataset::with_names(Matrix::from_vec(count, pixels, x)?, y, names, "label".to_string())
}

/// Affine response map `[y_min, y_max] -> [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormParams {
    pub y_min: f64,
    pub y_max: f64,
    pub lo: f64,
    pub hi: f64,
}

impl NormParams {
    pub fn new(y_min: f64, y_max: f64, lo: f64, hi: f64) -> Result<Self> {
        check_range(lo, hi)?;
        if !(y_max > y_min) {
            return Err(Error::ConstantTarget(y_min));
        }
        Ok(NormParams { y_min, y_max, lo, hi })
    }

    /// d(scaled)/d(original)
    pub fn scale(&self) -> f64 {
        (self.hi - self.lo) / (self.y_max - self.y_min)
    }

    pub fn normalize(&self, y: f64) -> f64 {
        self.lo + (y - self.y_min) * self.scale()
    }

    pub fn denormalize(&self, s: f64) -> f64 {
        self.y_min + (s - self.lo) / self.scale()
    }
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::InvalidArgument(format!("normalization range must satisfy 0 < lo < hi < 1, got [{lo}, {hi}]")));
    }
    Ok(())
}

pub fn normalize_targets(y: &[f64], lo: f64, hi: f64) -> Result<(Vec<f64>, NormParams)> {
    check_range(lo, hi)?;
    if y.is_empty() {
        return Err(Error::TooFewObservations { have: 0, need: 1 });
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("responses"));
    }
    let (mn, mx) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let p = NormParams::new(mn, mx, lo, hi)?;
    let scaled = y
        .iter()
        .map(|&v| {
            // pin the endpoints so both are attained exactly
            if v == mn {
                lo
            } else if v == mx {
                hi
            } else {
                p.normalize(v)
            }
        })
        .collect();
    Ok((scaled, p))
}

/// Shuffles by `seed` and returns `(train, test)` with `⌈m·(1−f)⌉` training rows.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.len(), test_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

pub fn split_indices(m: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if m < 2 {
        return Err(Error::TooFewObservations { have: m, need: 2 });
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let exact = m as f64 * (1.0 - test_fraction);
    // absorb representation error such as 10 × 0.7 = 7.000000000000001
    let n_train = ((exact - 1e-9 * m as f64).ceil() as usize).clamp(1, m);
    let mut perm = SeededRng::new(seed).permutation(m);
    let test = perm.split_off(n_train);
    Ok((perm, test))
}

/// Optional input scaling applied before fitting and stored with the model.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureTransform {
    Identity,
    /// Per-column min-max map onto [0, 1].
    MinMax { min: Vec<f64>, max: Vec<f64> },
    /// Every column multiplied by a constant, e.g. 1/255 for pixel bytes.
    Scale(f64),
}

impl FeatureTransform {
    pub fn fit_min_max(x: &Matrix) -> FeatureTransform {
        let n = x.ncols();
        let mut min = vec![f64::INFINITY; n];
        let mut max = vec![f64::NEG_INFINITY; n];
        for row in x.rows() {
            for j in 0..n {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        FeatureTransform::MinMax { min, max }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            FeatureTransform::Identity => Ok(x.clone()),
            FeatureTransform::Scale(s) => Ok(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * s)),
            FeatureTransform::MinMax { min, max } => {
                if min.len() != x.ncols() {
                    return Err(Error::shape(format!("{} features", min.len()), x.ncols()));
                }
                Ok(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
                    let w = max[j] - min[j];
                    // constant columns map to zero
                    if w > 0.0 {
                        (x[(i, j)] - min[j]) / w
                    } else {
                        0.0
                    }
                }))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents).unwrap();
        f
    }

    #[test]
    fn csv_with_header() {
        let f = write_tmp(b"a,b,t\n1,2,3\n4,5,6\n7,8,9\n");
        let ds = load_csv(f.path(), Some("t"), true).unwrap();
        assert_eq!(ds.x, Matrix::from_rows(&[[1.0, 2.0], [4.0, 5.0], [7.0, 8.0]]).unwrap());
        assert_eq!(ds.y, vec![3.0, 6.0, 9.0]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.target_name, "t");
    }

    #[test]
    fn csv_features_keep_every_column() {
        let f = write_tmp(b"a,b\n1,2\n3,4\n");
        let x = load_csv_features(f.path(), true).unwrap();
        assert_eq!(x, Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
    }

    #[test]
    fn csv_target_in_middle() {
        let f = write_tmp(b"a,t,b\n1,3,2\n");
        let ds = load_csv(f.path(), Some("t"), true).unwrap();
        assert_eq!(ds.x.row(0), &[1.0, 2.0]);
        assert_eq!(ds.y, vec![3.0]);
    }

    #[test]
    fn csv_headerless_uses_last_column() {
        let f = write_tmp(b"1,2,3\n4,5,6\n7,8,9\n");
        let ds = load_csv(f.path(), None, false).unwrap();
        assert_eq!((ds.x.nrows(), ds.x.ncols()), (3, 2));
        assert_eq!(ds.y, vec![3.0, 6.0, 9.0]);
    }

    #[test]
    fn csv_bad_cell_reports_position() {
        let f = write_tmp(b"a,b,t\n1,2,3\n4,oops,6\n");
        match load_csv(f.path(), Some("t"), true) {
            Err(Error::Parse { row, col, msg }) => {
                assert_eq!((row, col), (3, 2));
                assert!(msg.contains("oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_missing_target() {
        let f = write_tmp(b"a,b\n1,2\n");
        assert!(matches!(load_csv(f.path(), Some("t"), true), Err(Error::MissingColumn(c)) if c == "t"));
    }

    #[test]
    fn csv_missing_file_names_path() {
        let err = load_csv("/nonexistent/data.csv", None, true).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/data.csv"));
    }

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::new(Matrix::from_rows(&[[0.1, 1.0 / 3.0], [2.5, -1e-300]]).unwrap(), vec![1.0, 2.0]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_csv(&ds, f.path()).unwrap();
        assert_eq!(load_csv(f.path(), Some("y"), true).unwrap(), ds);
    }

    fn idx_pair(n: usize, rows: u32, cols: u32) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&(n as u32).to_be_bytes());
        img.extend_from_slice(&rows.to_be_bytes());
        img.extend_from_slice(&cols.to_be_bytes());
        for k in 0..n * (rows * cols) as usize {
            img.push((k % 256) as u8);
        }
        let mut lab = Vec::new();
        lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(n as u32).to_be_bytes());
        for k in 0..n {
            lab.push((k % 10) as u8);
        }
        (img, lab)
    }

    #[test]
    fn idx_parses_and_scales() {
        let (img, lab) = idx_pair(3, 2, 2);
        let (fi, fl) = (write_tmp(&img), write_tmp(&lab));
        let ds = load_mnist_idx(fi.path(), fl.path()).unwrap();
        assert_eq!((ds.x.nrows(), ds.x.ncols()), (3, 4));
        assert_eq!(ds.x[(1, 1)], 5.0 / 255.0);
        assert_eq!(ds.y, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn idx_bad_magic_and_truncation() {
        let (img, lab) = idx_pair(3, 2, 2);
        let swapped = (write_tmp(&lab), write_tmp(&img));
        assert!(matches!(load_mnist_idx(swapped.0.path(), swapped.1.path()), Err(Error::BadMagic { .. })));

        let truncated = write_tmp(&img[..img.len() - 1]);
        let fl = write_tmp(&lab);
        assert!(matches!(
            load_mnist_idx(truncated.path(), fl.path()),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));

        let (_, lab4) = idx_pair(4, 2, 2);
        let (fi, fl4) = (write_tmp(&img), write_tmp(&lab4));
        assert!(matches!(load_mnist_idx(fi.path(), fl4.path()), Err(Error::CountMismatch { .. })));

        let stub = write_tmp(&img[..6]);
        assert!(load_mnist_idx(stub.path(), fl.path()).is_err());
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let (s, p) = normalize_targets(&[0.0, 5.0, 10.0], 0.1, 0.9).unwrap();
        assert_eq!(s[0], 0.1);
        assert!((s[1] - 0.5).abs() < 1e-15);
        assert_eq!(s[2], 0.9);
        assert!((p.denormalize(s[1]) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn normalize_binary_labels() {
        let (s, _) = normalize_targets(&[0.0, 1.0], 0.01, 0.99).unwrap();
        assert_eq!(s, vec![0.01, 0.99]);
    }

    #[test]
    fn normalize_rejects_constant_and_bad_range() {
        assert!(matches!(normalize_targets(&[2.0, 2.0], 0.1, 0.9), Err(Error::ConstantTarget(_))));
        assert!(matches!(normalize_targets(&[1.0, 2.0], 0.9, 0.1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let x = Matrix::from_fn(10, 1, |i, _| i as f64);
        let ds = Dataset::new(x, (0..10).map(f64::from).collect()).unwrap();
        let (tr, te) = split(&ds, 0.3, 5).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        let mut all: Vec<f64> = tr.y.iter().chain(&te.y).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());
        let (tr2, te2) = split(&ds, 0.3, 5).unwrap();
        assert_eq!((tr, te), (tr2, te2));
    }

    #[test]
    fn split_half_of_two_thousand() {
        let (tr, te) = split_indices(2000, 0.5, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (1000, 1000));
    }

    #[test]
    fn min_max_transform() {
        let x = Matrix::from_rows(&[[0.0, 5.0], [10.0, 5.0]]).unwrap();
        let t = FeatureTransform::fit_min_max(&x);
        let z = t.apply(&Matrix::from_rows(&[[5.0, 5.0]]).unwrap()).unwrap();
        assert_eq!(z.row(0), &[0.5, 0.0]);
    }
}
