//! Point-to-plane ICP.

use std::num::NonZero;

use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{exp_se3, Pose, Twist};

type Tree = ImmutableKdTree<f64, u32, 3, 32>;

/// Per-iteration shrink of the correspondence gate.
const GATE_DECAY: f64 = 0.85;

/// Registration parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Converged once the update twist norm falls below this.
    pub tolerance: f64,
    /// Neighbors used for each normal estimate.
    pub normal_neighbors: usize,
    /// Correspondence gate on the first iteration, meters.
    pub max_correspondence: f64,
    /// Floor of the adaptive gate, meters.
    pub min_correspondence: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iterations: 50,
            tolerance: 1e-6,
            normal_neighbors: 20,
            max_correspondence: 1.0,
            min_correspondence: 0.05,
        }
    }
}

/// Result of a registration.
#[derive(Clone, Debug, PartialEq)]
pub struct Registration {
    /// Maps source points into the target frame.
    pub pose: Pose,
    /// Mean absolute point-to-plane residual of the final inliers, meters.
    pub fitness: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inliers: usize,
}

/// Unit normals from the smallest principal axis of each point's neighborhood.
pub fn estimate_normals(points: &[Vector3<f64>], k: usize) -> Vec<Vector3<f64>> {
    let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree = Tree::new_from_slice(&raw);
    normals_with_tree(&tree, points, k)
}

fn normals_with_tree(tree: &Tree, points: &[Vector3<f64>], k: usize) -> Vec<Vector3<f64>> {
    let k = NonZero::new(k.clamp(3, points.len().max(3))).expect("k >= 3");
    points
        .iter()
        .map(|p| {
            let nn = tree.nearest_n::<SquaredEuclidean>(&[p.x, p.y, p.z], k);
            let mean = nn.iter().map(|n| points[n.item as usize]).sum::<Vector3<f64>>() / nn.len() as f64;
            let cov = nn.iter().fold(Matrix3::zeros(), |c, n| {
                let d = points[n.item as usize] - mean;
                c + d * d.transpose()
            });
            let eig = SymmetricEigen::new(cov);
            let i = eig.eigenvalues.imin();
            eig.eigenvectors.column(i).into_owned()
        })
        .collect()
}

/// A target cloud with its search tree and normals.
pub struct Target<'a> {
    points: &'a [Vector3<f64>],
    normals: Vec<Vector3<f64>>,
    tree: Tree,
}

impl<'a> Target<'a> {
    pub fn new(points: &'a [Vector3<f64>], normal_neighbors: usize) -> Self {
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = Tree::new_from_slice(&raw);
        let normals = normals_with_tree(&tree, points, normal_neighbors);
        Target {
            points,
            normals,
            tree,
        }
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }
}

/// Aligns `src` to `dst` starting from `init`, minimizing the sum of squared
/// point-to-plane distances. Each step linearizes a left perturbation
/// `exp(delta) * T`, for which a residual `n . (q - d)` has Jacobian
/// `[(q x n)^T, n^T]`.
///
/// Fails with [`Error::NonConvergence`] carrying the last iterate when the
/// iteration cap is reached.
pub fn register_clouds(src: &[Vector3<f64>], dst: &[Vector3<f64>], init: &Pose, config: &IcpConfig) -> Result<Registration> {
    if src.is_empty() || dst.len() < 3 {
        return Err(Error::config("registration needs a nonempty source and at least 3 target points"));
    }
    let target = Target::new(dst, config.normal_neighbors);
    register_to_target(src, &target, init, config)
}

/// [`register_clouds`] against a prepared target.
pub fn register_to_target(src: &[Vector3<f64>], target: &Target<'_>, init: &Pose, config: &IcpConfig) -> Result<Registration> {
    if src.is_empty() {
        return Err(Error::config("registration needs a nonempty source"));
    }
    let mut pose = *init;
    let mut gate = config.max_correspondence;
    let mut last = Registration {
        pose,
        fitness: f64::INFINITY,
        iterations: 0,
        converged: false,
        inliers: 0,
    };
    for iter in 1..=config.max_iterations {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        let mut abs_sum = 0.0;
        let mut inliers = 0usize;
        for p in src {
            let q = pose.transform_point(p);
            let nn = target.tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
            let d = nn.distance.sqrt();
            if d > gate {
                continue;
            }
            let i = nn.item as usize;
            let n = target.normals[i];
            let r = n.dot(&(q - target.points[i]));
            let c = q.cross(&n);
            let j = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
            let w = 1.0 / (1.0 + (3.0 * r / gate).powi(2));
            h += j * j.transpose() * w;
            g += j * (r * w);
            abs_sum += r.abs();
            inliers += 1;
        }
        if inliers < 6 {
            return Err(Error::NonConvergence {
                last: Box::new(last),
            });
        }
        let delta = h
            .cholesky()
            .map(|c| -c.solve(&g))
            .or_else(|| h.try_inverse().map(|hi| -(hi * g)))
            .ok_or_else(|| Error::Domain("degenerate registration geometry".into()))?;
        pose = exp_se3(&Twist::from_vector(&delta)).compose(&pose);
        last = Registration {
            pose,
            fitness: abs_sum / inliers as f64,
            iterations: iter,
            converged: false,
            inliers,
        };
        if delta.norm() < config.tolerance {
            last.converged = true;
            last.pose = pose.orthonormalized();
            return Ok(last);
        }
        gate = (gate * GATE_DECAY).max(config.min_correspondence);
    }
    last.pose = last.pose.orthonormalized();
    Err(Error::NonConvergence {
        last: Box::new(last),
    })
}
