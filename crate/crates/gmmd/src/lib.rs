//! Cycle-consistent correspondence learning between point clouds.
//!
//! This crate learns a pair of maps `f : X -> Y` and `g : Y -> X` between two
//! empirical metric-measure spaces (point clouds with uniform weights) by
//! minimizing a kernel-based objective: maximum mean discrepancies keep the
//! pushforwards `f#P` and `g#Q` close to the target measures, while pairwise
//! metric-distortion penalties keep the maps close to isometries and
//! cycle-consistent. An entropic Gromov-Wasserstein solver with barycentric
//! projection maps is included as a baseline for the same task.
//!
//! Module map:
//! - [`cloud`]: point clouds and their CSV format;
//! - [`kernels`]: Gaussian-mixture kernels, induced metrics, median-heuristic
//!   bandwidths;
//! - [`mmd`]: biased-V-statistic maximum mean discrepancy and gradients;
//! - [`distortion`]: pairwise metric-distortion penalties and gradients;
//! - [`nnmap`]: map models (identity / affine / ReLU MLP) with hand-rolled
//!   backpropagation and Adam;
//! - [`train`]: the joint objective and the minibatch training loop;
//! - [`gw`]: log-domain Sinkhorn and entropic Gromov-Wasserstein with
//!   barycentric projection maps;
//! - [`shapes`]: synthetic 2-D/3-D fixtures and isometric transforms;
//! - [`eval`]: full-dataset evaluation rows, sweeps, and convergence probes;
//! - [`cli`]: the `gmmd` command-line tool.

pub mod cli;
pub mod cloud;
pub mod distortion;
pub mod error;
pub mod eval;
pub mod gw;
pub mod kernels;
pub mod mmd;
pub mod nnmap;
pub mod shapes;
pub mod train;

pub(crate) mod fsio;

pub use cloud::{load_cloud, save_cloud, PointCloud};
pub use error::{GmmdError, Result};
