//! Maximum mean discrepancy (MMD) as a biased V-statistic, with gradients.
//!
//! For clouds `A = {a_1..a_n}` and `B = {b_1..b_m}` and a kernel `k`,
//!
//! ```text
//! mmd^2(A, B) = (1/n^2) sum_ij k(a_i, a_j)
//!             + (1/m^2) sum_ij k(b_i, b_j)
//!             - (2/nm)  sum_ij k(a_i, b_j)
//! ```
//!
//! clamped at zero before the square root so rounding noise cannot produce a
//! NaN. Sums run in fixed row-major order for bit-reproducible results.
//!
//! The unsquared MMD enters the training objective; its gradient divides the
//! squared-MMD gradient by `2 * mmd`, which degenerates as `mmd -> 0`, so
//! gradients are defined as zero below [`MMD_GRAD_GUARD`].

use ndarray::Array2;

use crate::cloud::PointCloud;
use crate::error::{GmmdError, Result};
use crate::kernels::{sqdist, KernelEval, KernelSpec};

/// Below this unsquared MMD the gradient of the square root is treated as
/// zero instead of dividing by a vanishing value.
pub const MMD_GRAD_GUARD: f64 = 1e-8;

fn check_dims(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(GmmdError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
            context: "mmd clouds",
        });
    }
    Ok(())
}

/// Fused computation of the clamped squared MMD and (optionally) its
/// gradient with respect to the rows of `a`.
fn mmd_core(
    spec: &KernelSpec,
    a: &PointCloud,
    b: &PointCloud,
    want_grad: bool,
) -> (f64, Option<Array2<f64>>) {
    let ev = KernelEval::new(spec);
    let n = a.n();
    let m = b.n();
    let d = a.dim();

    // grad_self[i] accumulates sum_j w(s_ij) (a_i - a_j); grad_cross[i] the
    // analogue against b. They are scaled into the final gradient afterwards.
    let mut grad_self = if want_grad {
        vec![0.0; n * d]
    } else {
        Vec::new()
    };
    let mut grad_cross = if want_grad {
        vec![0.0; n * d]
    } else {
        Vec::new()
    };

    let mut s_aa = 0.0;
    for i in 0..n {
        let ai = a.point(i);
        if want_grad {
            let gi = &mut grad_self[i * d..(i + 1) * d];
            for j in 0..n {
                let aj = a.point(j);
                let (k, w) = ev.k_and_weight(sqdist(ai, aj));
                s_aa += k;
                for c in 0..d {
                    gi[c] += w * (ai[c] - aj[c]);
                }
            }
        } else {
            for j in 0..n {
                s_aa += ev.k_of_sqdist(sqdist(ai, a.point(j)));
            }
        }
    }

    let mut s_bb = 0.0;
    for i in 0..m {
        let bi = b.point(i);
        for j in 0..m {
            s_bb += ev.k_of_sqdist(sqdist(bi, b.point(j)));
        }
    }

    let mut s_ab = 0.0;
    for i in 0..n {
        let ai = a.point(i);
        if want_grad {
            let gi = &mut grad_cross[i * d..(i + 1) * d];
            for j in 0..m {
                let bj = b.point(j);
                let (k, w) = ev.k_and_weight(sqdist(ai, bj));
                s_ab += k;
                for c in 0..d {
                    gi[c] += w * (ai[c] - bj[c]);
                }
            }
        } else {
            for j in 0..m {
                s_ab += ev.k_of_sqdist(sqdist(ai, b.point(j)));
            }
        }
    }

    let inv_nn = 1.0 / (n as f64 * n as f64);
    let inv_mm = 1.0 / (m as f64 * m as f64);
    let inv_nm = 1.0 / (n as f64 * m as f64);
    let mmd_sq = (s_aa * inv_nn + s_bb * inv_mm - 2.0 * (s_ab * inv_nm)).max(0.0);

    let grad = if want_grad {
        let mut g = Array2::zeros((n, d));
        for i in 0..n {
            for c in 0..d {
                g[[i, c]] = -2.0 * inv_nn * grad_self[i * d + c]
                    + 2.0 * inv_nm * grad_cross[i * d + c];
            }
        }
        Some(g)
    } else {
        None
    };
    (mmd_sq, grad)
}

/// Clamped biased (V-statistic) squared MMD.
pub fn mmd_squared_biased(spec: &KernelSpec, a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_dims(a, b)?;
    Ok(mmd_core(spec, a, b, false).0)
}

/// Unsquared biased MMD, `sqrt` of [`mmd_squared_biased`].
pub fn mmd(spec: &KernelSpec, a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(mmd_squared_biased(spec, a, b)?.sqrt())
}

/// Gradient of the squared MMD with respect to each row of `a`:
///
/// ```text
/// d mmd^2 / d a_i = -(2/n^2) sum_j w_ij (a_i - a_j)
///                 +  (2/nm)  sum_j w_ij (a_i - b_j)
/// ```
///
/// with `w` from the mixture-kernel derivative. (Clamping is inactive for the
/// gradient: the raw squared-MMD derivative is returned.)
pub fn mmd_squared_grad_wrt_points(
    spec: &KernelSpec,
    a: &PointCloud,
    b: &PointCloud,
) -> Result<Array2<f64>> {
    check_dims(a, b)?;
    Ok(mmd_core(spec, a, b, true).1.expect("gradient requested"))
}

/// Gradient of the unsquared MMD with respect to each row of `a`, i.e. the
/// squared gradient divided by `2 * mmd`, or the zero matrix when
/// `mmd < MMD_GRAD_GUARD`.
pub fn mmd_grad_wrt_points(
    spec: &KernelSpec,
    a: &PointCloud,
    b: &PointCloud,
) -> Result<Array2<f64>> {
    check_dims(a, b)?;
    let (value, grad) = mmd_with_grad(spec, a, b)?;
    let _ = value;
    Ok(grad)
}

/// Unsquared MMD together with its (guarded) gradient wrt the rows of `a`,
/// sharing one pass over the data.
pub(crate) fn mmd_with_grad(
    spec: &KernelSpec,
    a: &PointCloud,
    b: &PointCloud,
) -> Result<(f64, Array2<f64>)> {
    check_dims(a, b)?;
    let (mmd_sq, grad_sq) = mmd_core(spec, a, b, true);
    let value = mmd_sq.sqrt();
    let mut grad = grad_sq.expect("gradient requested");
    if value < MMD_GRAD_GUARD {
        grad.fill(0.0);
    } else {
        let scale = 1.0 / (2.0 * value);
        grad.mapv_inplace(|v| v * scale);
    }
    Ok((value, grad))
}

/// Squared MMD together with its gradient wrt the rows of `a` (one pass).
pub(crate) fn mmd_squared_with_grad(
    spec: &KernelSpec,
    a: &PointCloud,
    b: &PointCloud,
) -> Result<(f64, Array2<f64>)> {
    check_dims(a, b)?;
    let (mmd_sq, grad_sq) = mmd_core(spec, a, b, true);
    Ok((mmd_sq, grad_sq.expect("gradient requested")))
}

// ============================================================================
// Tests
// ============================================================================
