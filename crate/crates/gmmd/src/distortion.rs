//! Pairwise metric-distortion penalties for a candidate map pair.
//!
//! Given clouds `X` (with metric `d_X`) and `Y` (with metric `d_Y`), mapped
//! images `FX = f(X)` and `GY = g(Y)`, the first-order (p = 1) distortions
//! are V-statistics over sample pairs:
//!
//! ```text
//! delta_x  = (1/n^2) sum_ij |d_X(x_i, x_j)  - d_Y(f x_i, f x_j)|
//! delta_y  = (1/m^2) sum_ij |d_X(g y_i, g y_j) - d_Y(y_i, y_j)|
//! delta_xy = (1/nm)  sum_ij |d_X(x_i, g y_j) - d_Y(f x_i, y_j)|
//! ```
//!
//! `delta_x`/`delta_y` measure how far each map is from an isometry;
//! `delta_xy` couples the two directions and enforces cycle consistency.
//! Gradients flow only through mapped points; the absolute value uses
//! subgradient 0 at zero arguments, and metric gradients are zero at
//! coincident points.

use ndarray::Array2;

use crate::cloud::PointCloud;
use crate::error::{GmmdError, Result};
use crate::kernels::{eval_with, grad_first_with, kernel_eval_for, Metric};

/// The three distortion terms and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionBreakdown {
    pub delta_x: f64,
    pub delta_y: f64,
    pub delta_xy: f64,
    pub total: f64,
}

#[inline]
fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_rows(left: &PointCloud, right: &PointCloud, context: &'static str) -> Result<()> {
    if left.n() != right.n() {
        return Err(GmmdError::SizeMismatch {
            left: left.n(),
            right: right.n(),
            context,
        });
    }
    Ok(())
}

fn check_dims(left: &PointCloud, right: &PointCloud, context: &'static str) -> Result<()> {
    if left.dim() != right.dim() {
        return Err(GmmdError::DimensionMismatch {
            expected: left.dim(),
            found: right.dim(),
            context,
        });
    }
    Ok(())
}

/// Distortion of `f` alone: compares `d_X` on `X` pairs with `d_Y` on mapped
/// pairs. `x` and `fx` must be row-aligned.
pub fn delta_x(dx: &Metric, dy: &Metric, x: &PointCloud, fx: &PointCloud) -> Result<f64> {
    check_rows(x, fx, "delta_x: x vs f(x)")?;
    let ev_x = kernel_eval_for(dx);
    let ev_y = kernel_eval_for(dy);
    let n = x.n();
    let mut sum = 0.0;
    for i in 0..n {
        let xi = x.point(i);
        let fi = fx.point(i);
        for j in 0..n {
            let du = eval_with(dx, ev_x.as_ref(), xi, x.point(j))
                - eval_with(dy, ev_y.as_ref(), fi, fx.point(j));
            sum += du.abs();
        }
    }
    Ok(sum / (n as f64 * n as f64))
}

/// Distortion of `g` alone: compares `d_X` on mapped pairs with `d_Y` on `Y`
/// pairs. `y` and `gy` must be row-aligned.
pub fn delta_y(dx: &Metric, dy: &Metric, y: &PointCloud, gy: &PointCloud) -> Result<f64> {
    check_rows(y, gy, "delta_y: y vs g(y)")?;
    let ev_x = kernel_eval_for(dx);
    let ev_y = kernel_eval_for(dy);
    let m = y.n();
    let mut sum = 0.0;
    for i in 0..m {
        let yi = y.point(i);
        let gi = gy.point(i);
        for j in 0..m {
            let du = eval_with(dx, ev_x.as_ref(), gi, gy.point(j))
                - eval_with(dy, ev_y.as_ref(), yi, y.point(j));
            sum += du.abs();
        }
    }
    Ok(sum / (m as f64 * m as f64))
}

/// Cross-space distortion coupling both maps: compares `d_X(x_i, g y_j)`
/// against `d_Y(f x_i, y_j)` over all cross pairs.
pub fn delta_xy(
    dx: &Metric,
    dy: &Metric,
    x: &PointCloud,
    y: &PointCloud,
    fx: &PointCloud,
    gy: &PointCloud,
) -> Result<f64> {
    check_rows(x, fx, "delta_xy: x vs f(x)")?;
    check_rows(y, gy, "delta_xy: y vs g(y)")?;
    check_dims(x, gy, "delta_xy: g(y) must live in the X space")?;
    check_dims(y, fx, "delta_xy: f(x) must live in the Y space")?;
    let ev_x = kernel_eval_for(dx);
    let ev_y = kernel_eval_for(dy);
    let n = x.n();
    let m = y.n();
    let mut sum = 0.0;
    for i in 0..n {
        let xi = x.point(i);
        let fi = fx.point(i);
        for j in 0..m {
            let du = eval_with(dx, ev_x.as_ref(), xi, gy.point(j))
                - eval_with(dy, ev_y.as_ref(), fi, y.point(j));
            sum += du.abs();
        }
    }
    Ok(sum / (n as f64 * m as f64))
}

/// All three distortion terms and their sum.
pub fn delta_total(
    dx: &Metric,
    dy: &Metric,
    x: &PointCloud,
    y: &PointCloud,
    fx: &PointCloud,
    gy: &PointCloud,
) -> Result<DistortionBreakdown> {
    let dxv = delta_x(dx, dy, x, fx)?;
    let dyv = delta_y(dx, dy, y, gy)?;
    let dxyv = delta_xy(dx, dy, x, y, fx, gy)?;
    Ok(DistortionBreakdown {
        delta_x: dxv,
        delta_y: dyv,
        delta_xy: dxyv,
        total: dxv + dyv + dxyv,
    })
}

/// Gradients of the total distortion with respect to the rows of `fx` and
/// `gy` (the mapped points); returns `(grad_fx, grad_gy)`.
pub fn delta_grads_wrt_mapped(
    dx: &Metric,
    dy: &Metric,
    x: &PointCloud,
    y: &PointCloud,
    fx: &PointCloud,
    gy: &PointCloud,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (_, gfx, ggy) = delta_total_with_grads(dx, dy, x, y, fx, gy)?;
    Ok((gfx, ggy))
}

/// Fused evaluation of the distortion breakdown and both mapped-point
/// gradients, sharing the per-pair distance computations.
pub(crate) fn delta_total_with_grads(
    dx: &Metric,
    dy: &Metric,
    x: &PointCloud,
    y: &PointCloud,
    fx: &PointCloud,
    gy: &PointCloud,
) -> Result<(DistortionBreakdown, Array2<f64>, Array2<f64>)> {
    check_rows(x, fx, "distortion: x vs f(x)")?;
    check_rows(y, gy, "distortion: y vs g(y)")?;
    check_dims(x, gy, "distortion: g(y) must live in the X space")?;
    check_dims(y, fx, "distortion: f(x) must live in the Y space")?;

    let ev_x = kernel_eval_for(dx);
    let ev_y = kernel_eval_for(dy);
    let n = x.n();
    let m = y.n();
    let dim_y_space = fx.dim();
    let dim_x_space = gy.dim();
    let inv_nn = 1.0 / (n as f64 * n as f64);
    let inv_mm = 1.0 / (m as f64 * m as f64);
    let inv_nm = 1.0 / (n as f64 * m as f64);

    let mut grad_fx = Array2::zeros((n, dim_y_space));
    let mut grad_gy = Array2::zeros((m, dim_x_space));
    let mut scratch_y = vec![0.0; dim_y_space];
    let mut scratch_x = vec![0.0; dim_x_space];

    // delta_x over X-side pairs. Each |..| term depends on two fx rows; by
    // symmetry of both metrics the (i, j) and (j, i) terms contribute equally
    // to row i, so the ordered loop applies a factor 2 to the first slot.
    let mut sum_x = 0.0;
    for i in 0..n {
        let xi = x.point(i);
        let fi = fx.point(i);
        for j in 0..n {
            let dxy_pair = eval_with(dy, ev_y.as_ref(), fi, fx.point(j));
            let u = eval_with(dx, ev_x.as_ref(), xi, x.point(j)) - dxy_pair;
            sum_x += u.abs();
            let s = sign(u);
            if s != 0.0 {
                grad_first_with(dy, ev_y.as_ref(), fi, fx.point(j), &mut scratch_y);
                let coeff = -2.0 * s * inv_nn;
                for c in 0..dim_y_space {
                    grad_fx[[i, c]] += coeff * scratch_y[c];
                }
            }
        }
    }

    // delta_y over Y-side pairs; same symmetric doubling through
    // d_X(g y_i, g y_j).
    let mut sum_y = 0.0;
    for i in 0..m {
        let yi = y.point(i);
        let gi = gy.point(i);
        for j in 0..m {
            let u = eval_with(dx, ev_x.as_ref(), gi, gy.point(j))
                - eval_with(dy, ev_y.as_ref(), yi, y.point(j));
            sum_y += u.abs();
            let s = sign(u);
            if s != 0.0 {
                grad_first_with(dx, ev_x.as_ref(), gi, gy.point(j), &mut scratch_x);
                let coeff = 2.0 * s * inv_mm;
                for c in 0..dim_x_space {
                    grad_gy[[i, c]] += coeff * scratch_x[c];
                }
            }
        }
    }

    // delta_xy over cross pairs; both maps receive gradient.
    let mut sum_xy = 0.0;
    for i in 0..n {
        let xi = x.point(i);
        let fi = fx.point(i);
        for j in 0..m {
            let u = eval_with(dx, ev_x.as_ref(), xi, gy.point(j))
                - eval_with(dy, ev_y.as_ref(), fi, y.point(j));
            sum_xy += u.abs();
            let s = sign(u);
            if s != 0.0 {
                grad_first_with(dx, ev_x.as_ref(), gy.point(j), xi, &mut scratch_x);
                let coeff_g = s * inv_nm;
                for c in 0..dim_x_space {
                    grad_gy[[j, c]] += coeff_g * scratch_x[c];
                }
                grad_first_with(dy, ev_y.as_ref(), fi, y.point(j), &mut scratch_y);
                let coeff_f = -s * inv_nm;
                for c in 0..dim_y_space {
                    grad_fx[[i, c]] += coeff_f * scratch_y[c];
                }
            }
        }
    }

    let delta_x = sum_x * inv_nn;
    let delta_y = sum_y * inv_mm;
    let delta_xy = sum_xy * inv_nm;
    Ok((
        DistortionBreakdown {
            delta_x,
            delta_y,
            delta_xy,
            total: delta_x + delta_y + delta_xy,
        },
        grad_fx,
        grad_gy,
    ))
}

// ============================================================================
// Tests
// ============================================================================
