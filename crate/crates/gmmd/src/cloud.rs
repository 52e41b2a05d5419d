//! Point clouds: dense `n x d` coordinate matrices with CSV (de)serialization.
//!
//! A cloud is the empirical support of a uniform measure: row `i` is the
//! coordinate vector of sample `i`. All entries are finite by construction and
//! the matrix is stored in standard (row-major) layout so rows can be viewed
//! as contiguous slices in hot loops.
//!
//! The CSV format has a header `x0,x1[,x2,...]` followed by one row per
//! point. Floats are written in scientific notation with 17 significant
//! digits, which is enough for an exact `f64` round trip.

use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{GmmdError, Result};
use crate::fsio;

/// An `n x d` matrix of sample coordinates; every entry is finite, `n >= 1`,
/// `d >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    data: Array2<f64>,
}

impl PointCloud {
    /// Validates and wraps a coordinate matrix.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(GmmdError::EmptyInput("point cloud has no rows"));
        }
        if data.ncols() == 0 {
            return Err(GmmdError::EmptyInput("point cloud has no columns"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GmmdError::NonFinite {
                context: "point cloud coordinates".to_string(),
            });
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        Ok(Self { data })
    }

    /// Builds a cloud from row vectors; rows must be non-empty and rectangular.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(GmmdError::EmptyInput("point cloud has no rows"));
        }
        let dim = rows[0].len();
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(GmmdError::SizeMismatch {
                    left: dim,
                    right: row.len(),
                    context: "point cloud rows must have equal length",
                });
            }
            flat.extend_from_slice(row);
        }
        let data = Array2::from_shape_vec((rows.len(), dim), flat).expect("shape checked above");
        Self::new(data)
    }

    /// Number of points.
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Coordinates of point `i` as a contiguous slice.
    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.data.ncols();
        &self.as_flat()[i * d..(i + 1) * d]
    }

    /// The whole matrix in row-major order.
    #[inline]
    pub fn as_flat(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("constructor guarantees standard layout")
    }

    /// Read-only matrix view.
    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    /// The underlying matrix.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.data
    }

    /// A new cloud made of the given rows (indices may repeat).
    pub fn gather(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(GmmdError::EmptyInput("gather index list"));
        }
        let d = self.dim();
        let mut flat = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            flat.extend_from_slice(self.point(i));
        }
        let data =
            Array2::from_shape_vec((indices.len(), d), flat).expect("lengths are consistent");
        Ok(Self { data })
    }
}

/// Formats a finite `f64` with 17 significant digits (round-trip exact).
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a cloud as CSV (`x0,x1,...` header, one row per point). The write
/// is atomic.
pub fn save_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let d = cloud.dim();
    let mut out = String::new();
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        out.push('x');
        out.push_str(&j.to_string());
    }
    out.push('\n');
    for i in 0..cloud.n() {
        let row = cloud.point(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_f64(*v));
        }
        out.push('\n');
    }
    fsio::write_atomic(path, out.as_bytes())
}

/// Reads a cloud written by [`save_cloud`] (or any CSV with the same layout).
/// Malformed contents are reported with 1-based line numbers.
pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let text = fsio::read_to_string(path)?;
    let parse_err = |line: usize, message: String| GmmdError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "file is empty".to_string()))?;
    let names: Vec<&str> = header.split(',').collect();
    let dim = names.len();
    for (j, name) in names.iter().enumerate() {
        let expected = format!("x{j}");
        if name.trim() != expected {
            return Err(parse_err(
                1,
                format!("bad header column {j}: expected `{expected}`, found `{name}`"),
            ));
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim {
            return Err(parse_err(
                line_no,
                format!("expected {dim} fields, found {}", fields.len()),
            ));
        }
        let mut row = Vec::with_capacity(dim);
        for field in fields {
            let v: f64 = field.trim().parse().map_err(|_| {
                parse_err(line_no, format!("cannot parse `{}` as a number", field.trim()))
            })?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value `{v}`")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".to_string()));
    }
    PointCloud::from_rows(&rows)
}

// ============================================================================
// Tests
// ============================================================================
