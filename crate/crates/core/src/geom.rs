//! Coordinate-free primitives on SO(3) and S².
//!
//! Rotations are plain `Matrix3<f64>` values whose columns are the body axes
//! expressed in the inertial frame; unit vectors are `Vector3<f64>` with unit
//! norm. Functions here are pure and allocation free.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on `|S + S^T|` accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-9;

/// Lower clamp applied to `|y_j|` before raising it to a negative power.
pub const SIGNED_POWER_FLOOR: f64 = 1e-6;

pub fn e1() -> Vec3 {
    Vec3::x()
}

pub fn e2() -> Vec3 {
    Vec3::y()
}

/// Unit vector along gravity; the inertial third axis points down.
pub fn e3() -> Vec3 {
    Vec3::z()
}

/// Skew matrix such that `hat(v) * y == v.cross(&y)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Fails if `s` is not skew within [`SKEW_TOL`].
pub fn vee(s: &Mat3) -> Result<Vec3> {
    let asym = (s + s.transpose()).norm();
    if asym > SKEW_TOL {
        return Err(Error::NotSkew(asym));
    }
    Ok(vee_unchecked(s))
}

/// Reads the axial vector of the skew part of `s` without validation.
pub fn vee_unchecked(s: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (s[(2, 1)] - s[(1, 2)]),
        0.5 * (s[(0, 2)] - s[(2, 0)]),
        0.5 * (s[(1, 0)] - s[(0, 1)]),
    )
}

/// Orthogonal projector onto the plane normal to the unit vector `q`.
pub fn normal_projector(q: &Vec3) -> Mat3 {
    Mat3::identity() - q * q.transpose()
}

/// Attitude tracking errors of `r` with respect to `r_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeErrors {
    pub e_r: Vec3,
    pub e_omega: Vec3,
    /// Configuration error `½ tr(I - R_dᵀ R)`, in `[0, 2]`.
    pub psi: f64,
}

pub fn attitude_errors(r: &Mat3, r_d: &Mat3, omega: &Vec3, omega_d: &Vec3) -> AttitudeErrors {
    let rd_t_r = r_d.transpose() * r;
    let e_r = 0.5 * vee_unchecked(&(rd_t_r - rd_t_r.transpose()));
    let e_omega = omega - r.transpose() * r_d * omega_d;
    let psi = 0.5 * (3.0 - rd_t_r.trace());
    AttitudeErrors { e_r, e_omega, psi }
}

/// Direction tracking errors of a link `q` with respect to `q_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkErrors {
    pub e_q: Vec3,
    pub e_omega: Vec3,
    /// `1 - q . q_d`, in `[0, 2]`.
    pub psi: f64,
}

/// Requires `omega` to be tangent at `q` (|q . omega| < 1e-9).
pub fn link_errors(q: &Vec3, q_d: &Vec3, omega: &Vec3, omega_d: &Vec3) -> Result<LinkErrors> {
    let dot = q.dot(omega);
    if dot.abs() > 1e-9 {
        return Err(Error::ConstraintViolation(dot.abs()));
    }
    Ok(link_errors_unchecked(q, q_d, omega, omega_d))
}

pub(crate) fn link_errors_unchecked(q: &Vec3, q_d: &Vec3, omega: &Vec3, omega_d: &Vec3) -> LinkErrors {
    let q_hat = hat(q);
    LinkErrors {
        e_q: q_d.cross(q),
        e_omega: omega + q_hat * q_hat * omega_d,
        psi: 1.0 - q.dot(q_d),
    }
}

fn check_exponent(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::BadExponent(r))
    }
}

/// Component-wise `|y_j|^r sgn(y_j)` for `0 < r < 1`.
pub fn signed_power(r: f64, y: &Vec3) -> Result<Vec3> {
    check_exponent(r)?;
    Ok(y.map(|c| c.abs().powf(r) * c.signum()))
}

/// `diag_j(max(|y_j|, SIGNED_POWER_FLOOR)^(r-1))`, the clamped derivative
/// weight of [`signed_power`].
pub fn signed_power_gain(r: f64, y: &Vec3) -> Result<Mat3> {
    check_exponent(r)?;
    Ok(Mat3::from_diagonal(
        &y.map(|c| c.abs().max(SIGNED_POWER_FLOOR).powf(r - 1.0)),
    ))
}

/// `E(R, R_c) = ½ (tr(Rᵀ R_c) I - Rᵀ R_c)`, so that `ė_R = E e_Ω`.
pub fn transport_matrix(r: &Mat3, r_c: &Mat3) -> Mat3 {
    let rt_rc = r.transpose() * r_c;
    0.5 * (Mat3::identity() * rt_rc.trace() - rt_rc)
}

/// Exponential map `exp(hat(phi))` by Rodrigues' formula.
pub fn exp_so3(phi: &Vec3) -> Mat3 {
    let angle_sq = phi.norm_squared();
    let k = hat(phi);
    let (a, b) = if angle_sq < 1e-8 {
        // Taylor series of sin(x)/x and (1 - cos x)/x^2
        (
            1.0 - angle_sq / 6.0 + angle_sq * angle_sq / 120.0,
            0.5 - angle_sq / 24.0 + angle_sq * angle_sq / 720.0,
        )
    } else {
        let angle = angle_sq.sqrt();
        (angle.sin() / angle, (1.0 - angle.cos()) / angle_sq)
    };
    Mat3::identity() + a * k + b * k * k
}

/// Rotation by `angle` about the unit `axis`.
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    exp_so3(&(axis.normalize() * angle))
}

/// Nearest rotation in the Frobenius norm (orthogonal polar factor), computed
/// by the scaled Newton iteration `X <- ½(γX + X^{-T}/γ)`.
pub fn orthonormalize(m: &Mat3) -> Result<Mat3> {
    let det = m.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::Degenerate);
    }
    let mut x = *m;
    for _ in 0..100 {
        let inv = x.try_inverse().ok_or(Error::Degenerate)?;
        let inv_t = inv.transpose();
        // Frobenius scaling speeds up the first iterations on badly scaled input
        let gamma = (inv.norm() / x.norm()).sqrt();
        let next = 0.5 * (x * gamma + inv_t / gamma);
        let delta = (next - x).norm();
        x = next;
        if delta < 1e-15 {
            break;
        }
    }
    // Polish with unscaled steps; each squares the residual.
    for _ in 0..2 {
        let inv_t = x.try_inverse().ok_or(Error::Degenerate)?.transpose();
        x = 0.5 * (x + inv_t);
    }
    Ok(x)
}

/// `|RᵀR - I|_F`, used as the orthogonality residual throughout.
pub fn orthogonality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).norm()
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    orthogonality_error(r) < tol && (r.determinant() - 1.0).abs() < tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    fn unit() -> impl Strategy<Value = Vec3> {
        vec3().prop_filter("nonzero", |v| v.norm() > 1e-3).prop_map(|v| v.normalize())
    }

    fn rotation() -> impl Strategy<Value = Mat3> {
        (unit(), 0.0..PI).prop_map(|(a, t)| axis_angle(&a, t))
    }

    #[test]
    fn hat_basics() {
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        assert_eq!(hat(&e1()) * e2(), e3());
    }

    #[test]
    fn vee_roundtrip_and_rejects_asymmetry() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
        assert_eq!(vee(&Mat3::zeros()).unwrap(), Vec3::zeros());
        let mut s = hat(&v);
        s[(0, 1)] += 1e-6;
        assert!(matches!(vee(&s), Err(Error::NotSkew(_))));
    }

    #[test]
    fn attitude_errors_quarter_turn() {
        let r = axis_angle(&e3(), PI / 2.0);
        let err = attitude_errors(&r, &Mat3::identity(), &Vec3::zeros(), &Vec3::zeros());
        assert_relative_eq!(err.e_r, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
        assert_relative_eq!(err.psi, 1.0, epsilon = 1e-15);
        let aligned = attitude_errors(&r, &r, &e1(), &(r.transpose() * r * e1()));
        assert_eq!(aligned.psi, 0.0);
        assert!(aligned.e_r.norm() < 1e-16);
        assert!(aligned.e_omega.norm() < 1e-16);
    }

    #[test]
    fn link_errors_examples() {
        let z = Vec3::zeros();
        let err = link_errors(&e3(), &e3(), &z, &z).unwrap();
        assert_eq!((err.e_q, err.e_omega, err.psi), (z, z, 0.0));
        let err = link_errors(&e3(), &e1(), &z, &z).unwrap();
        assert_eq!(err.e_q, Vec3::new(0.0, -1.0, 0.0));
        assert_eq!(err.psi, 1.0);
        assert!(matches!(
            link_errors(&e3(), &e1(), &e3(), &z),
            Err(Error::ConstraintViolation(_))
        ));
    }

    #[test]
    fn signed_power_examples() {
        let y = signed_power(0.5, &Vec3::new(4.0, 0.0, -9.0)).unwrap();
        assert_eq!(y, Vec3::new(2.0, 0.0, -3.0));
        assert_eq!(signed_power(0.3, &Vec3::zeros()).unwrap(), Vec3::zeros());
        assert_eq!(signed_power(0.7, &Vec3::repeat(1.0)).unwrap(), Vec3::repeat(1.0));
        assert!(matches!(signed_power(1.0, &y), Err(Error::BadExponent(_))));
        assert!(matches!(signed_power(0.0, &y), Err(Error::BadExponent(_))));
        let g = signed_power_gain(0.5, &Vec3::new(4.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(g[(0, 0)], 0.5);
        assert_relative_eq!(g[(1, 1)], 1e3, max_relative = 1e-12);
    }

    #[test]
    fn transport_matrix_cases() {
        let i = Mat3::identity();
        assert_eq!(transport_matrix(&i, &i), i);
        let rc = axis_angle(&e3(), PI);
        let rt_rc = rc; // R = I
        let expected = 0.5 * (Mat3::identity() * rt_rc.trace() - rt_rc);
        assert_relative_eq!(transport_matrix(&i, &rc), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, Mat3::from_diagonal(&Vec3::new(0.0, 0.0, -1.0)), epsilon = 1e-15);
    }

    #[test]
    fn transport_matrix_matches_finite_difference() {
        let rc = axis_angle(&Vec3::new(0.3, -0.2, 0.9), 1.1);
        let r = axis_angle(&Vec3::new(-0.5, 0.4, 0.1), 0.7);
        let omega = Vec3::new(0.4, -0.8, 0.3);
        let e0 = attitude_errors(&r, &rc, &omega, &Vec3::zeros());
        let dt = 1e-6;
        let r1 = r * exp_so3(&(omega * dt));
        let e1 = attitude_errors(&r1, &rc, &omega, &Vec3::zeros());
        let fd = (e1.e_r - e0.e_r) / dt;
        let analytic = transport_matrix(&r, &rc) * e0.e_omega;
        assert!((fd - analytic).norm() < 1e-5, "{fd} vs {analytic}");
    }

    #[test]
    fn orthonormalize_fixed_point_and_perturbation() {
        let r = axis_angle(&Vec3::new(1.0, 2.0, -0.5), 0.8);
        assert!((orthonormalize(&r).unwrap() - r).norm() < 1e-14);
        let m = Mat3::identity() + 1e-8 * hat(&Vec3::new(1.0, -1.0, 0.5).normalize());
        let out = orthonormalize(&m).unwrap();
        assert!((out - Mat3::identity()).amax() < 1e-8);
        assert!(orthogonality_error(&out) < 1e-12);
        assert_eq!(orthonormalize(&Mat3::zeros()), Err(Error::Degenerate));
        assert_eq!(
            orthonormalize(&Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))),
            Err(Error::Degenerate)
        );
    }

    #[test]
    fn orthonormalize_matches_svd_polar_factor() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 200 {
            let m = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            if m.determinant() < 1e-3 {
                continue;
            }
            let r = orthonormalize(&m).unwrap();
            let svd = m.svd(true, true);
            let polar = svd.u.unwrap() * svd.v_t.unwrap();
            assert!(orthogonality_error(&r) < 1e-12);
            assert!((r - polar).norm() < 1e-10, "{r} vs {polar}");
            checked += 1;
        }
    }

    #[test]
    fn exp_small_angle_is_continuous() {
        let phi = Vec3::new(1e-5, -2e-5, 3e-5);
        let big = exp_so3(&(phi * 1e3));
        assert!(is_rotation(&big, 1e-14));
        let small = exp_so3(&phi);
        let x = phi.norm();
        let k = hat(&phi);
        let reference = Mat3::identity() + x.sin() / x * k + (1.0 - x.cos()) / (x * x) * k * k;
        assert!((small - reference).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn hat_is_cross_product(v in vec3(), y in vec3()) {
            let lhs = hat(&v) * y;
            let rhs = Vec3::new(v.y * y.z - v.z * y.y, v.z * y.x - v.x * y.z, v.x * y.y - v.y * y.x);
            prop_assert!((lhs - rhs).norm() <= 1e-15 * (1.0 + v.norm() * y.norm()) * 10.0);
            prop_assert_eq!(hat(&v).transpose(), -hat(&v));
        }

        #[test]
        fn projector_identities(q in unit(), v in vec3()) {
            let p = normal_projector(&q);
            prop_assert!((p + hat(&q) * hat(&q)).norm() < 1e-14);
            prop_assert!((q * q.dot(&v) + p * v - v).norm() < 1e-13);
        }

        #[test]
        fn attitude_psi_sandwich(r in rotation(), rd in rotation()) {
            let err = attitude_errors(&r, &rd, &Vec3::zeros(), &Vec3::zeros());
            prop_assert!(0.5 * err.e_r.norm_squared() <= err.psi + 1e-12);
            if err.psi < 1.9 {
                let psi_bound = 0.5 * (err.psi + 2.0);
                prop_assert!(err.psi <= err.e_r.norm_squared() / (2.0 - psi_bound) + 1e-12);
            }
        }

        #[test]
        fn attitude_zero_iff_aligned(r in rotation(), rd in rotation()) {
            let err = attitude_errors(&r, &rd, &Vec3::zeros(), &Vec3::zeros());
            if err.psi < 1e-12 {
                prop_assert!((r - rd).norm() < 1e-5);
            }
            if (r - rd).norm() > 1e-3 {
                prop_assert!(err.psi > 0.0 && err.e_r.norm() > 0.0);
            }
        }

        #[test]
        fn link_psi_sandwich(q in unit(), qd in unit()) {
            let err = link_errors_unchecked(&q, &qd, &Vec3::zeros(), &Vec3::zeros());
            prop_assert!(0.5 * err.e_q.norm_squared() <= err.psi + 1e-12);
        }

        #[test]
        fn signed_power_is_odd(r in 0.05..0.95f64, y in vec3()) {
            let a = signed_power(r, &y).unwrap();
            let b = signed_power(r, &(-y)).unwrap();
            prop_assert_eq!(a, -b);
        }
    }
}
