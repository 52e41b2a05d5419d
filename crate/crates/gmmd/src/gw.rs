//! Entropic Gromov-Wasserstein coupling between two metric-measure spaces
//! given only their pairwise distance matrices.
//!
//! The squared-loss GW cost of a coupling `pi` between `(C_X, p)` and
//! `(C_Y, q)` is
//!
//! ```text
//! GW(pi) = sum_{i,k,j,l} (C_X[i,k] - C_Y[j,l])^2 pi[i,j] pi[k,l]
//! ```
//!
//! minimized over couplings with marginals `p` and `q`. The solver is the
//! standard projected scheme: starting from the product coupling, each outer
//! iteration linearizes the cost at the current coupling,
//!
//! ```text
//! M[i,j] = (C_X.^2 p)[i] + (C_Y.^2 q)[j] - 2 (C_X pi C_Y^T)[i,j],
//! ```
//!
//! and replaces the coupling by the entropic optimal transport plan for cost
//! `M` (Sinkhorn with regularization `epsilon`). Sinkhorn runs entirely in
//! the log domain with warm-started dual potentials, so very small `epsilon`
//! values stay finite.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{GmmdError, Result};

// ============================================================================
// Configuration
// ============================================================================

/// Solver parameters for [`entropic_gw`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GwConfig {
    /// Entropic regularization strength.
    pub epsilon: f64,
    /// Maximum outer (linearize + project) iterations.
    pub max_outer: usize,
    /// Maximum Sinkhorn iterations per projection.
    pub max_sinkhorn: usize,
    /// Sinkhorn stops when the L1 marginal violation drops below this.
    pub sinkhorn_tol: f64,
    /// Outer loop stops when the L1 change of the coupling drops below this.
    pub outer_tol: f64,
}

impl Default for GwConfig {
    fn default() -> Self {
        Self {
            epsilon: 5e-4,
            max_outer: 50,
            max_sinkhorn: 1000,
            sinkhorn_tol: 1e-9,
            outer_tol: 1e-8,
        }
    }
}

impl GwConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(GmmdError::InvalidParameter {
                name: "epsilon",
                message: format!("must be finite and positive, got {}", self.epsilon),
            });
        }
        for (name, v) in [
            ("sinkhorn_tol", self.sinkhorn_tol),
            ("outer_tol", self.outer_tol),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(GmmdError::InvalidParameter {
                    name,
                    message: format!("must be finite and positive, got {v}"),
                });
            }
        }
        for (name, v) in [("max_outer", self.max_outer), ("max_sinkhorn", self.max_sinkhorn)] {
            if v == 0 {
                return Err(GmmdError::InvalidParameter {
                    name,
                    message: "must be at least 1".to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Solver result: the coupling, the unregularized GW cost after each outer
/// iteration (`cost == *history.last()`), and convergence information.
#[derive(Debug, Clone)]
pub struct GwOutput {
    pub coupling: Array2<f64>,
    pub cost: f64,
    pub history: Vec<f64>,
    pub outer_iterations: usize,
    /// Whether the coupling change dropped below `outer_tol`.
    pub converged: bool,
}

// ============================================================================
// Validation helpers
// ============================================================================

fn check_cost_matrix(c: &Array2<f64>, context: &'static str) -> Result<()> {
    if c.nrows() == 0 {
        return Err(GmmdError::EmptyInput(context));
    }
    if c.nrows() != c.ncols() {
        return Err(GmmdError::SizeMismatch {
            left: c.nrows(),
            right: c.ncols(),
            context,
        });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(GmmdError::NonFinite {
            context: format!("{context}: non-finite entry"),
        });
    }
    Ok(())
}

fn check_weights(w: &[f64], n: usize, context: &'static str) -> Result<()> {
    if w.len() != n {
        return Err(GmmdError::SizeMismatch {
            left: w.len(),
            right: n,
            context,
        });
    }
    if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(GmmdError::InvalidParameter {
            name: "weights",
            message: format!("{context}: entries must be finite and positive"),
        });
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(GmmdError::InvalidParameter {
            name: "weights",
            message: format!("{context}: entries sum to {sum}, expected 1"),
        });
    }
    Ok(())
}

/// Uniform probability vector of length `n`.
pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

// ============================================================================
// Log-domain Sinkhorn
// ============================================================================

fn log_sum_exp(vals: &[f64]) -> f64 {
    let mut mx = f64::NEG_INFINITY;
    for &v in vals {
        if v > mx {
            mx = v;
        }
    }
    if !mx.is_finite() {
        return mx;
    }
    let mut s = 0.0;
    for &v in vals {
        s += (v - mx).exp();
    }
    mx + s.ln()
}

/// Entropic optimal transport by log-domain Sinkhorn with externally owned
/// dual potentials (scaled by `1/epsilon`), enabling warm starts across
/// repeated calls. Returns the coupling and whether the marginal tolerance
/// was reached.
#[allow(clippy::too_many_arguments)] // problem data + solver knobs + warm-start state
pub(crate) fn sinkhorn_log_warm(
    cost: &Array2<f64>,
    p: &[f64],
    q: &[f64],
    epsilon: f64,
    max_iters: usize,
    tol: f64,
    alpha: &mut [f64],
    beta: &mut [f64],
) -> Result<(Array2<f64>, bool)> {
    let (n, m) = cost.dim();
    // Fixed log-kernel A = -cost / epsilon; a transposed copy keeps the
    // column update cache-friendly.
    let a = cost.mapv(|v| -v / epsilon);
    let at = a.t().as_standard_layout().into_owned();
    let log_p: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let log_q: Vec<f64> = q.iter().map(|v| v.ln()).collect();

    let mut row_scratch = vec![0.0; m];
    let mut col_scratch = vec![0.0; n];
    let mut converged = false;
    for it in 0..max_iters {
        // Row potentials make row marginals exact in exact arithmetic.
        for i in 0..n {
            let row = a.row(i);
            let row = row.as_slice().expect("standard layout");
            for j in 0..m {
                row_scratch[j] = row[j] + beta[j];
            }
            alpha[i] = log_p[i] - log_sum_exp(&row_scratch);
        }
        // Column potentials re-fix the columns, perturbing the rows.
        for j in 0..m {
            let col = at.row(j);
            let col = col.as_slice().expect("standard layout");
            for i in 0..n {
                col_scratch[i] = col[i] + alpha[i];
            }
            beta[j] = log_q[j] - log_sum_exp(&col_scratch);
        }
        // Columns are exact after the beta update, so the total marginal
        // violation is the row-side violation; check periodically.
        if it % 5 == 4 || it == max_iters - 1 {
            let mut err = 0.0;
            for i in 0..n {
                let row = a.row(i);
                let row = row.as_slice().expect("standard layout");
                for j in 0..m {
                    row_scratch[j] = row[j] + beta[j];
                }
                let row_sum = (alpha[i] + log_sum_exp(&row_scratch)).exp();
                err += (row_sum - p[i]).abs();
            }
            if err <= tol {
                converged = true;
                break;
            }
        }
    }

    let mut pi = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            pi[[i, j]] = (a[[i, j]] + alpha[i] + beta[j]).exp();
        }
    }
    if pi.iter().any(|v| !v.is_finite()) {
        return Err(GmmdError::NonFinite {
            context: "sinkhorn produced a non-finite coupling".to_string(),
        });
    }
    Ok((pi, converged))
}

/// Rounds a nonnegative matrix onto the transport polytope with marginals
/// `p`, `q`: overweight rows and columns are scaled down, then the remaining
/// mass deficit is restored as a nonnegative rank-one patch. Afterwards both
/// marginals hold to machine precision; a well-converged Sinkhorn iterate
/// moves only by its (tiny) residual violation.
fn round_to_marginals(pi: &mut Array2<f64>, p: &[f64], q: &[f64]) {
    let (n, m) = pi.dim();
    for (i, &target) in p.iter().enumerate().take(n) {
        let row_sum: f64 = pi.row(i).sum();
        if row_sum > target {
            let scale = target / row_sum;
            pi.row_mut(i).mapv_inplace(|v| v * scale);
        }
    }
    for (j, &target) in q.iter().enumerate().take(m) {
        let col_sum: f64 = pi.column(j).sum();
        if col_sum > target {
            let scale = target / col_sum;
            pi.column_mut(j).mapv_inplace(|v| v * scale);
        }
    }
    let r = pi.sum_axis(Axis(1));
    let c = pi.sum_axis(Axis(0));
    let err_r: Vec<f64> = (0..n).map(|i| (p[i] - r[i]).max(0.0)).collect();
    let err_c: Vec<f64> = (0..m).map(|j| (q[j] - c[j]).max(0.0)).collect();
    let total: f64 = err_r.iter().sum();
    if total > 0.0 {
        let inv = 1.0 / total;
        for i in 0..n {
            if err_r[i] == 0.0 {
                continue;
            }
            for j in 0..m {
                pi[[i, j]] += err_r[i] * err_c[j] * inv;
            }
        }
    }
}

/// Entropic optimal transport plan for a cost matrix and marginals `p`, `q`.
/// The result is rounded onto the transport polytope, so its marginals match
/// `p` and `q` even when the iteration budget truncates convergence.
pub fn sinkhorn(
    cost: &Array2<f64>,
    p: &[f64],
    q: &[f64],
    epsilon: f64,
    max_iters: usize,
    tol: f64,
) -> Result<Array2<f64>> {
    if cost.nrows() == 0 || cost.ncols() == 0 {
        return Err(GmmdError::EmptyInput("sinkhorn cost matrix"));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(GmmdError::NonFinite {
            context: "sinkhorn cost matrix".to_string(),
        });
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(GmmdError::InvalidParameter {
            name: "epsilon",
            message: format!("must be finite and positive, got {epsilon}"),
        });
    }
    check_weights(p, cost.nrows(), "sinkhorn row weights")?;
    check_weights(q, cost.ncols(), "sinkhorn column weights")?;
    let mut alpha = vec![0.0; cost.nrows()];
    let mut beta = vec![0.0; cost.ncols()];
    let (mut pi, _) =
        sinkhorn_log_warm(cost, p, q, epsilon, max_iters, tol, &mut alpha, &mut beta)?;
    round_to_marginals(&mut pi, p, q);
    Ok(pi)
}

// ============================================================================
// Gromov-Wasserstein
// ============================================================================

/// Squared-loss GW cost of an arbitrary nonnegative coupling, evaluated with
/// the coupling's own marginals:
/// `r' (C_X.^2) r + c' (C_Y.^2) c - 2 <pi, C_X pi C_Y^T>`.
pub fn gw_cost(cx: &Array2<f64>, cy: &Array2<f64>, coupling: &Array2<f64>) -> Result<f64> {
    check_cost_matrix(cx, "gw_cost C_X")?;
    check_cost_matrix(cy, "gw_cost C_Y")?;
    if coupling.nrows() != cx.nrows() || coupling.ncols() != cy.nrows() {
        return Err(GmmdError::SizeMismatch {
            left: coupling.nrows() * coupling.ncols(),
            right: cx.nrows() * cy.nrows(),
            context: "gw_cost coupling shape",
        });
    }
    if coupling.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(GmmdError::NonFinite {
            context: "gw_cost coupling must be finite and non-negative".to_string(),
        });
    }
    let r = coupling.sum_axis(Axis(1));
    let c = coupling.sum_axis(Axis(0));
    let cx2 = cx.mapv(|v| v * v);
    let cy2 = cy.mapv(|v| v * v);
    let t1 = r.dot(&cx2.dot(&r));
    let t2 = c.dot(&cy2.dot(&c));
    let cross = cx.dot(coupling).dot(&cy.t());
    let t3 = (coupling * &cross).sum();
    Ok((t1 + t2 - 2.0 * t3).max(0.0))
}

/// Minimizes the entropically regularized GW cost between `(cx, p)` and
/// `(cy, q)` by repeated linearization and Sinkhorn projection, starting from
/// the product coupling. Dual potentials are warm-started across outer
/// iterations.
pub fn entropic_gw(
    cx: &Array2<f64>,
    cy: &Array2<f64>,
    p: &[f64],
    q: &[f64],
    cfg: &GwConfig,
) -> Result<GwOutput> {
    cfg.validate()?;
    check_cost_matrix(cx, "entropic_gw C_X")?;
    check_cost_matrix(cy, "entropic_gw C_Y")?;
    let n = cx.nrows();
    let m = cy.nrows();
    check_weights(p, n, "entropic_gw row weights")?;
    check_weights(q, m, "entropic_gw column weights")?;

    let p_arr = Array1::from_vec(p.to_vec());
    let q_arr = Array1::from_vec(q.to_vec());
    let cx2 = cx.mapv(|v| v * v);
    let cy2 = cy.mapv(|v| v * v);
    // Marginal-weighted squared-distance profiles; constant across the outer
    // loop because every iterate has (near-)fixed marginals.
    let const_x = cx2.dot(&p_arr);
    let const_y = cy2.dot(&q_arr);

    let mut pi = Array2::from_shape_fn((n, m), |(i, j)| p[i] * q[j]);
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; m];
    let mut history = Vec::new();
    let mut converged = false;
    let mut outer_iterations = 0;

    for _outer in 0..cfg.max_outer {
        let cross = cx.dot(&pi).dot(&cy.t());
        let mut m_cost = cross;
        for i in 0..n {
            for j in 0..m {
                m_cost[[i, j]] = const_x[i] + const_y[j] - 2.0 * m_cost[[i, j]];
            }
        }
        if m_cost.iter().any(|v| !v.is_finite()) {
            return Err(GmmdError::NonFinite {
                context: "entropic_gw linearized cost".to_string(),
            });
        }
        let (mut new_pi, _) = sinkhorn_log_warm(
            &m_cost,
            p,
            q,
            cfg.epsilon,
            cfg.max_sinkhorn,
            cfg.sinkhorn_tol,
            &mut alpha,
            &mut beta,
        )?;
        // Every iterate the scheme linearizes around (and the final answer)
        // sits exactly on the transport polytope.
        round_to_marginals(&mut new_pi, p, q);
        let change: f64 = new_pi
            .iter()
            .zip(pi.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        pi = new_pi;
        history.push(gw_cost(cx, cy, &pi)?);
        outer_iterations += 1;
        if change <= cfg.outer_tol {
            converged = true;
            break;
        }
    }

    let cost = *history.last().expect("at least one outer iteration");
    Ok(GwOutput {
        coupling: pi,
        cost,
        history,
        outer_iterations,
        converged,
    })
}

/// [`entropic_gw`] with uniform weights on both sides.
pub fn entropic_gw_uniform(cx: &Array2<f64>, cy: &Array2<f64>, cfg: &GwConfig) -> Result<GwOutput> {
    entropic_gw(cx, cy, &uniform_weights(cx.nrows()), &uniform_weights(cy.nrows()), cfg)
}

// ============================================================================
// Barycentric maps
// ============================================================================

/// Turns a coupling into explicit point maps: row `i` of the first cloud is
/// the coupling-weighted average of the `y` points (`sum_j pi[i,j] y_j`
/// normalized by the row marginal), and symmetrically for the second.
pub fn barycentric_maps(
    coupling: &Array2<f64>,
    x: &PointCloud,
    y: &PointCloud,
) -> Result<(PointCloud, PointCloud)> {
    if coupling.nrows() != x.n() || coupling.ncols() != y.n() {
        return Err(GmmdError::SizeMismatch {
            left: coupling.nrows() * coupling.ncols(),
            right: x.n() * y.n(),
            context: "barycentric coupling shape",
        });
    }
    if coupling.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(GmmdError::NonFinite {
            context: "barycentric coupling must be finite and non-negative".to_string(),
        });
    }
    let r = coupling.sum_axis(Axis(1));
    let c = coupling.sum_axis(Axis(0));
    for (i, &v) in r.iter().enumerate() {
        if v == 0.0 {
            return Err(GmmdError::ZeroMarginal { axis: "row", index: i });
        }
    }
    for (j, &v) in c.iter().enumerate() {
        if v == 0.0 {
            return Err(GmmdError::ZeroMarginal {
                axis: "column",
                index: j,
            });
        }
    }
    let mut fx = coupling.dot(y.matrix());
    for (i, mut row) in fx.axis_iter_mut(Axis(0)).enumerate() {
        row.mapv_inplace(|v| v / r[i]);
    }
    let mut gy = coupling.t().dot(x.matrix());
    for (j, mut row) in gy.axis_iter_mut(Axis(0)).enumerate() {
        row.mapv_inplace(|v| v / c[j]);
    }
    Ok((PointCloud::new(fx)?, PointCloud::new(gy)?))
}

// ============================================================================
// Tests
// ============================================================================
