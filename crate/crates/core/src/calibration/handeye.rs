//! Hand-eye calibration `A X = X B` on SE(3) and its residual metric.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::se3::{log_se3, so3_log, Pose};

/// Rotation axes closer than this to (anti)parallel count as parallel.
pub const PARALLEL_AXIS_TOLERANCE: f64 = std::f64::consts::PI / 180.0;

/// Solves `A_i X = X B_i` in the least-squares sense.
///
/// With `alpha = log(R_A)` and `beta = log(R_B)`, `alpha = R_X beta`; the
/// rotation maximizing `sum alpha . (R_X beta)` comes from the SVD of
/// `sum beta alpha^T` with a determinant correction, which also handles the
/// rank-2 case of exactly two independent motions. The translation then
/// solves the stacked `(R_A - I) t_X = R_X t_B - t_A`.
pub fn hand_eye_solve(pairs: &[(Pose, Pose)]) -> Result<Pose> {
    if pairs.len() < 2 {
        return Err(Error::Unobservable(format!(
            "need at least 2 motion pairs, got {}",
            pairs.len()
        )));
    }
    let mut alphas = Vec::with_capacity(pairs.len());
    let mut betas = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        alphas.push(so3_log(a.rotation())?);
        betas.push(so3_log(b.rotation())?);
    }
    check_axes(&betas)?;

    let m = betas
        .iter()
        .zip(&alphas)
        .fold(Matrix3::zeros(), |m, (b, a)| m + b * a.transpose());
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rx = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();

    let n = pairs.len();
    let mut lhs = DMatrix::<f64>::zeros(3 * n, 3);
    let mut rhs = DVector::<f64>::zeros(3 * n);
    for (i, (a, b)) in pairs.iter().enumerate() {
        let c = a.rotation() - Matrix3::identity();
        lhs.view_mut((3 * i, 0), (3, 3)).copy_from(&c);
        let r = rx * b.translation() - a.translation();
        rhs.rows_mut(3 * i, 3).copy_from(&r);
    }
    let t = lhs
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Unobservable(e.to_string()))?;
    Ok(Pose::new_projected(rx, Vector3::new(t[0], t[1], t[2])))
}

/// Fails unless two rotation axes differ by more than the parallel tolerance.
fn check_axes(logs: &[Vector3<f64>]) -> Result<()> {
    let axes: Vec<Vector3<f64>> = logs
        .iter()
        .filter(|w| w.norm() > 1e-9)
        .map(|w| w.normalize())
        .collect();
    let spread = axes
        .iter()
        .enumerate()
        .flat_map(|(i, a)| axes[i + 1..].iter().map(move |b| a.cross(b).norm().asin()))
        .fold(0.0f64, f64::max);
    if spread < PARALLEL_AXIS_TOLERANCE {
        return Err(Error::Unobservable(format!(
            "rotation axes are parallel within {:.3} deg",
            spread.to_degrees()
        )));
    }
    Ok(())
}

/// `|| log(A) - log(X B X^-1) ||` over the six twist coordinates.
pub fn calib_error(a: &Pose, b: &Pose, x: &Pose) -> Result<f64> {
    let la = log_se3(a)?;
    let lb = log_se3(&x.conjugate(b))?;
    Ok((la.to_vector() - lb.to_vector()).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{exp_se3, Twist};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64, max_t: f64) -> Pose {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let lin = Vector3::new(
            rng.random_range(-max_t..max_t),
            rng.random_range(-max_t..max_t),
            rng.random_range(-max_t..max_t),
        );
        exp_se3(&Twist::new(axis * rng.random_range(0.05..max_angle), lin))
    }

    fn pose_gap(a: &Pose, b: &Pose) -> (f64, f64) {
        let d = a.inverse() * *b;
        (d.rotation_angle(), d.translation().norm())
    }

    #[test]
    fn recovers_extrinsic_from_forward_generated_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let x = random_pose(&mut rng, 3.0, 1.0);
            let pairs: Vec<(Pose, Pose)> = (0..5)
                .map(|_| {
                    let b = random_pose(&mut rng, 1.0, 0.5);
                    (x.conjugate(&b), b)
                })
                .collect();
            let est = hand_eye_solve(&pairs).unwrap();
            let (r, t) = pose_gap(&est, &x);
            assert!(r < 1e-8 && t < 1e-8, "{r} {t}");
        }
    }

    #[test]
    fn two_pairs_suffice_and_one_does_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_pose(&mut rng, 2.0, 0.3);
        let b1 = exp_se3(&Twist::new(Vector3::new(0.2, 0.0, 0.0), Vector3::new(0.1, 0.0, 0.0)));
        let b2 = exp_se3(&Twist::new(Vector3::new(0.0, 0.3, 0.1), Vector3::new(0.0, 0.05, 0.1)));
        let pairs = vec![(x.conjugate(&b1), b1), (x.conjugate(&b2), b2)];
        let (r, t) = pose_gap(&hand_eye_solve(&pairs).unwrap(), &x);
        assert!(r < 1e-8 && t < 1e-8);
        assert!(matches!(hand_eye_solve(&pairs[..1]), Err(Error::Unobservable(_))));
    }

    #[test]
    fn parallel_axes_are_unobservable() {
        let x = Pose::from_translation(Vector3::new(0.1, 0.2, 0.3));
        let pairs: Vec<(Pose, Pose)> = [0.1, 0.2, -0.3]
            .iter()
            .map(|&a| {
                let b = exp_se3(&Twist::new(Vector3::new(0.0, 0.003 * a, a), Vector3::new(a, 0.0, 0.0)));
                (x.conjugate(&b), b)
            })
            .collect();
        assert!(matches!(hand_eye_solve(&pairs), Err(Error::Unobservable(_))));
    }

    #[test]
    fn identity_extrinsic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<(Pose, Pose)> = (0..4)
            .map(|_| {
                let b = random_pose(&mut rng, 1.0, 0.5);
                (b, b)
            })
            .collect();
        let (r, t) = pose_gap(&hand_eye_solve(&pairs).unwrap(), &Pose::identity());
        assert!(r < 1e-10 && t < 1e-10);
    }

    #[test]
    fn solver_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_pose(&mut rng, 2.0, 0.5);
        // Noisy pairs so the solution is a genuine least-squares estimate.
        let pairs: Vec<(Pose, Pose)> = (0..6)
            .map(|_| {
                let b = random_pose(&mut rng, 1.0, 0.5);
                let jitter = random_pose(&mut rng, 0.06, 0.01);
                (jitter * x.conjugate(&b), b)
            })
            .collect();
        let est = hand_eye_solve(&pairs).unwrap();
        let g = random_pose(&mut rng, 2.5, 1.0);
        let moved: Vec<(Pose, Pose)> = pairs.iter().map(|(a, b)| (g.conjugate(a), *b)).collect();
        let est2 = hand_eye_solve(&moved).unwrap();
        let (r, _) = pose_gap(&est2, &(g * est));
        assert!(r < 1e-9, "{r}");
        let (_, t) = pose_gap(&est2, &(g * est));
        assert!(t < 1e-9, "{t}");
    }

    #[test]
    fn error_is_zero_exactly_on_the_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let x = random_pose(&mut rng, 2.0, 0.5);
            let b = random_pose(&mut rng, 1.5, 0.5);
            assert!(calib_error(&x.conjugate(&b), &b, &x).unwrap() < 1e-10);
            let off = random_pose(&mut rng, 0.1, 0.05);
            assert!(calib_error(&(off * x.conjugate(&b)), &b, &x).unwrap() > 1e-10);
        }
        let i = Pose::identity();
        assert_eq!(calib_error(&i, &i, &i).unwrap(), 0.0);
    }

    #[test]
    fn error_matches_first_order_expansion() {
        // To first order err(exp(d) A) is the directional derivative of log at A
        // along d, taken here by central differences.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_pose(&mut rng, 1.0, 0.3);
        let b = random_pose(&mut rng, 1.0, 0.3);
        let a = x.conjugate(&b);
        let d = Twist::new(Vector3::new(0.3, -0.5, 0.2), Vector3::new(-0.1, 0.4, 0.7)).scaled(1e-4);
        let err = calib_error(&(exp_se3(&d) * a), &b, &x).unwrap();
        let h = 1e-6;
        let plus = log_se3(&(exp_se3(&d.scaled(h / 1e-4)) * a)).unwrap().to_vector();
        let minus = log_se3(&(exp_se3(&d.scaled(-h / 1e-4)) * a)).unwrap().to_vector();
        let slope = (plus - minus) / (2.0 * h) * 1e-4;
        assert!((err - slope.norm()).abs() < 1e-7, "{err} vs {}", slope.norm());
    }
}
