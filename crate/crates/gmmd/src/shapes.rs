//! Synthetic point-cloud fixtures and planted isometries for experiments:
//! a heart-shaped closed curve, evenly spaced circles, and exactly isometric
//! maps (rotations, scalings, and a seeded 2D -> 3D embedding) that give
//! known-ground-truth test problems.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::PointCloud;
use crate::error::{GmmdError, Result};
use crate::nnmap::{DenseLayer, MapModel};

/// Point of the heart curve at parameter `t`:
/// `x = 16 sin^3 t, y = 13 cos t - 5 cos 2t - 2 cos 3t - cos 4t`, both
/// divided by 17 so the shape has diameter about 1.9 and fits in the unit
/// ball.
pub fn heart_point(t: f64) -> [f64; 2] {
    let s = t.sin();
    let x = 16.0 * s * s * s;
    let y = 13.0 * t.cos() - 5.0 * (2.0 * t).cos() - 2.0 * (3.0 * t).cos() - (4.0 * t).cos();
    [x / 17.0, y / 17.0]
}

/// Samples `n` heart-curve points at uniform parameters, optionally adding
/// isotropic Gaussian coordinate noise with standard deviation `noise_sd`
/// (exactly on-curve when `noise_sd == 0`). Fully determined by `seed`.
pub fn sample_heart(n: usize, seed: u64, noise_sd: f64) -> Result<PointCloud> {
    if n == 0 {
        return Err(GmmdError::EmptyInput("heart sample size"));
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(GmmdError::InvalidParameter {
            name: "noise_sd",
            message: format!("must be finite and non-negative, got {noise_sd}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).expect("validated above"))
    } else {
        None
    };
    let mut flat = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let t = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        let [mut x, mut y] = heart_point(t);
        if let Some(d) = &normal {
            x += d.sample(&mut rng);
            y += d.sample(&mut rng);
        }
        flat.push(x);
        flat.push(y);
    }
    PointCloud::new(Array2::from_shape_vec((n, 2), flat).expect("shape is consistent"))
}

/// `n` points evenly spaced on the unit circle, starting at angle zero.
pub fn unit_circle(n: usize) -> Result<PointCloud> {
    if n == 0 {
        return Err(GmmdError::EmptyInput("circle sample size"));
    }
    let mut flat = Vec::with_capacity(2 * n);
    for i in 0..n {
        let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        flat.push(t.cos());
        flat.push(t.sin());
    }
    PointCloud::new(Array2::from_shape_vec((n, 2), flat).expect("shape is consistent"))
}

/// Planar rotation by `theta` as an affine map model.
pub fn rotate(theta: f64) -> Result<MapModel> {
    if !theta.is_finite() {
        return Err(GmmdError::InvalidParameter {
            name: "theta",
            message: format!("must be finite, got {theta}"),
        });
    }
    let (s, c) = theta.sin_cos();
    Ok(MapModel::Affine {
        layer: DenseLayer {
            weight: ndarray::array![[c, -s], [s, c]],
            bias: Array1::zeros(2),
        },
    })
}

/// Uniform scaling of `dim`-dimensional space by a positive factor.
pub fn scaling(dim: usize, factor: f64) -> Result<MapModel> {
    if dim == 0 {
        return Err(GmmdError::EmptyInput("scaling dimension"));
    }
    if !factor.is_finite() || factor <= 0.0 {
        return Err(GmmdError::InvalidParameter {
            name: "factor",
            message: format!("must be finite and positive, got {factor}"),
        });
    }
    let mut weight = Array2::zeros((dim, dim));
    for i in 0..dim {
        weight[[i, i]] = factor;
    }
    Ok(MapModel::Affine {
        layer: DenseLayer {
            weight,
            bias: Array1::zeros(dim),
        },
    })
}

/// Seeded isometric embedding of the plane into 3D: a random orthonormal
/// pair of directions (Gram-Schmidt on uniform draws) plus a random
/// translation, so pairwise distances are preserved exactly.
pub fn embed_3d(seed: u64) -> MapModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw3 = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        [
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        ]
    };
    // Rejection keeps the construction well-conditioned; with uniform draws
    // the retry probability is negligible but not zero.
    let (u1, u2) = loop {
        let v1 = draw3(&mut rng);
        let v2 = draw3(&mut rng);
        let n1 = (v1[0] * v1[0] + v1[1] * v1[1] + v1[2] * v1[2]).sqrt();
        if n1 < 1e-6 {
            continue;
        }
        let u1 = [v1[0] / n1, v1[1] / n1, v1[2] / n1];
        let proj = v2[0] * u1[0] + v2[1] * u1[1] + v2[2] * u1[2];
        let w = [
            v2[0] - proj * u1[0],
            v2[1] - proj * u1[1],
            v2[2] - proj * u1[2],
        ];
        let n2 = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if n2 < 1e-6 {
            continue;
        }
        break (u1, [w[0] / n2, w[1] / n2, w[2] / n2]);
    };
    let t = draw3(&mut rng);
    // Columns of the weight are the images of the plane's basis vectors.
    let weight = ndarray::array![[u1[0], u2[0]], [u1[1], u2[1]], [u1[2], u2[2]]];
    MapModel::Affine {
        layer: DenseLayer {
            weight,
            bias: Array1::from_vec(t.to_vec()),
        },
    }
}

/// Largest pairwise Euclidean distance in the cloud.
pub fn diameter(cloud: &PointCloud) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..cloud.n() {
        let pi = cloud.point(i);
        for j in (i + 1)..cloud.n() {
            let pj = cloud.point(j);
            let mut sq = 0.0;
            for d in 0..pi.len() {
                let diff = pi[d] - pj[d];
                sq += diff * diff;
            }
            best = best.max(sq);
        }
    }
    best.sqrt()
}

// ============================================================================
// Tests
// ============================================================================

#[cfg(test)]
mod tests {
    use super::*;

    fn pairwise(c: &PointCloud) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..c.n() {
            for j in (i + 1)..c.n() {
                let (a, b) = (c.point(i), c.point(j));
                let sq: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
                out.push(sq.sqrt());
            }
        }
        out
    }

    #[test]
    fn heart_curve_hits_the_bottom_tip() {
        // t = pi: sin is ~0, the cosine series sums to -17, so the point is
        // the tip (0, -1) after the 1/17 scaling.
        let [x, y] = heart_point(std::f64::consts::PI);
        assert!(x.abs() < 1e-15);
        assert!((y - (-1.0)).abs() < 1e-14);
        // t = 0 sits at the top notch (0, 5/17).
        let [x0, y0] = heart_point(0.0);
        assert_eq!(x0, 0.0);
        assert!((y0 - 5.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn heart_sampling_is_seed_deterministic() {
        let a = sample_heart(50, 9, 0.05).unwrap();
        let b = sample_heart(50, 9, 0.05).unwrap();
        assert_eq!(a, b);
        let c = sample_heart(50, 10, 0.05).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_samples_follow_the_parameter_stream_exactly() {
        // Replays the generator's random stream independently and evaluates
        // the curve formula in-test; every sampled point must match bitwise.
        use rand::{Rng, SeedableRng};
        let cloud = sample_heart(25, 123, 0.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        for i in 0..25 {
            let t = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let s = t.sin();
            let x = 16.0 * s * s * s / 17.0;
            let y = (13.0 * t.cos()
                - 5.0 * (2.0 * t).cos()
                - 2.0 * (3.0 * t).cos()
                - (4.0 * t).cos())
                / 17.0;
            assert_eq!(cloud.point(i)[0].to_bits(), x.to_bits(), "x[{i}]");
            assert_eq!(cloud.point(i)[1].to_bits(), y.to_bits(), "y[{i}]");
        }
    }

    #[test]
    fn heart_diameter_is_near_two() {
        let cloud = sample_heart(4000, 0, 0.0).unwrap();
        let d = diameter(&cloud);
        assert!((1.8..=2.2).contains(&d), "diameter {d}");
    }

    #[test]
    fn unit_circle_has_unit_radii_and_even_spacing() {
        let c = unit_circle(12).unwrap();
        for i in 0..12 {
            let p = c.point(i);
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((r - 1.0).abs() < 1e-15);
        }
        // Consecutive gap = chord of angle 2 pi / 12.
        let expected = 2.0 * (std::f64::consts::PI / 12.0).sin();
        for i in 0..12 {
            let (a, b) = (c.point(i), c.point((i + 1) % 12));
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!((d - expected).abs() < 1e-12);
        }
        // Even count puts antipodal pairs in the sample: diameter exactly 2.
        assert!((diameter(&c) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_rotation_is_the_identity_map() {
        let cloud = sample_heart(20, 1, 0.0).unwrap();
        let out = rotate(0.0).unwrap().map_cloud(&cloud).unwrap();
        assert_eq!(out, cloud);
    }

    #[test]
    fn rotation_preserves_pairwise_distances() {
        let cloud = sample_heart(40, 2, 0.02).unwrap();
        let rotated = rotate(1.234).unwrap().map_cloud(&cloud).unwrap();
        for (a, b) in pairwise(&cloud).iter().zip(pairwise(&rotated).iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn scaling_multiplies_pairwise_distances() {
        let cloud = unit_circle(15).unwrap();
        let scaled = scaling(2, 2.5).unwrap().map_cloud(&cloud).unwrap();
        for (a, b) in pairwise(&cloud).iter().zip(pairwise(&scaled).iter()) {
            assert!((2.5 * a - b).abs() <= 1e-12);
        }
        assert!(scaling(2, 0.0).is_err());
        assert!(scaling(0, 1.0).is_err());
    }

    #[test]
    fn embedding_is_an_exact_isometry_into_3d() {
        let cloud = sample_heart(60, 3, 0.0).unwrap();
        let embed = embed_3d(7);
        let lifted = embed.map_cloud(&cloud).unwrap();
        assert_eq!(lifted.dim(), 3);
        for (a, b) in pairwise(&cloud).iter().zip(pairwise(&lifted).iter()) {
            assert!((a - b).abs() <= 1e-12);
        }

        // Orthonormal columns.
        let MapModel::Affine { layer } = &embed else {
            panic!("expected affine")
        };
        let w = &layer.weight;
        let col = |k: usize| [w[[0, k]], w[[1, k]], w[[2, k]]];
        let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        assert!((dot(col(0), col(0)) - 1.0).abs() < 1e-12);
        assert!((dot(col(1), col(1)) - 1.0).abs() < 1e-12);
        assert!(dot(col(0), col(1)).abs() < 1e-12);

        assert_eq!(embed_3d(7), embed);
        assert_ne!(embed_3d(8), embed);
    }

    #[test]
    fn generated_fixture_survives_a_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lifted.csv");
        let cloud = embed_3d(3)
            .map_cloud(&sample_heart(200, 0, 0.01).unwrap())
            .unwrap();
        crate::cloud::save_cloud(&cloud, &path).unwrap();
        assert_eq!(crate::cloud::load_cloud(&path).unwrap(), cloud);
    }
}
