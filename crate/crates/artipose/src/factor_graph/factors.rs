//! Residuals and analytic Jacobians of the three factor types, plus the
//! Huber reweighting applied to the absolute-position factors.

use nalgebra::{Matrix3, RowVector3, Vector3};

use super::{BaselineObservation, ClasFix, ClasStatus, FactorError};
use crate::geodesy::EnuPosition;

/// Antenna pairs closer than this are treated as degenerate for the length
/// factor (unit-direction Jacobian undefined).
pub const MIN_BASELINE_SEPARATION: f64 = 1e-6;

/// Absolute-position residual, `x_i - b_i`. The Jacobian with respect to
/// `x_i` is the identity. Rejects observations with status `none`.
pub fn clas_residual(x: EnuPosition, fix: &ClasFix) -> Result<Vector3<f64>, FactorError> {
    if fix.status == ClasStatus::None {
        return Err(FactorError::ExcludedStatus(fix.antenna));
    }
    Ok(x - fix.position)
}

/// Relative-position residual, `(x_from - x_to) - b_m`. The Jacobians are
/// `+I` with respect to `x_from` and `-I` with respect to `x_to`. Rejects
/// observations without an ambiguity-fixed solution.
pub fn mvrtk_residual(
    x_from: EnuPosition,
    x_to: EnuPosition,
    obs: &BaselineObservation,
) -> Result<Vector3<f64>, FactorError> {
    if !obs.fixed {
        return Err(FactorError::NotFixed(obs.from, obs.to));
    }
    Ok((x_from - x_to) - obs.baseline)
}

/// Length residual, `||xb - xa|| - length`. Errors when the antennas are
/// nearly coincident, where the Jacobian is singular.
pub fn baseline_length_residual(
    xa: EnuPosition,
    xb: EnuPosition,
    length: f64,
) -> Result<f64, FactorError> {
    let separation = (xb - xa).norm();
    if separation < MIN_BASELINE_SEPARATION {
        return Err(FactorError::DegenerateGeometry {
            separation,
            min: MIN_BASELINE_SEPARATION,
        });
    }
    Ok(separation - length)
}

/// Jacobian rows of the length residual with respect to `xa` and `xb`:
/// `(-u, +u)` where `u` is the unit direction from `xa` to `xb`.
pub fn baseline_length_jacobian(
    xa: EnuPosition,
    xb: EnuPosition,
) -> Result<(RowVector3<f64>, RowVector3<f64>), FactorError> {
    let d = xb - xa;
    let separation = d.norm();
    if separation < MIN_BASELINE_SEPARATION {
        return Err(FactorError::DegenerateGeometry {
            separation,
            min: MIN_BASELINE_SEPARATION,
        });
    }
    let u = (d / separation).transpose();
    Ok((-u, u))
}

/// Information-weighted (whitened) residual norm, `sqrt(e' * omega * e)`.
pub fn whitened_norm(e: &Vector3<f64>, omega: &Matrix3<f64>) -> f64 {
    (e.transpose() * omega * e)[(0, 0)].max(0.0).sqrt()
}

/// IRLS weight of the Huber kernel on a whitened residual norm: 1 inside
/// the quadratic region, `delta / norm` beyond it.
pub fn huber_weight(whitened_residual_norm: f64, delta: f64) -> f64 {
    if whitened_residual_norm <= delta {
        1.0
    } else {
        delta / whitened_residual_norm
    }
}

/// Huber cost of a whitened residual norm: quadratic inside the threshold,
/// linear beyond it.
pub fn huber_cost(whitened_residual_norm: f64, delta: f64) -> f64 {
    let s = whitened_residual_norm;
    if s <= delta {
        s * s
    } else {
        2.0 * delta * s - delta * delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor_graph::{AntennaId, Covariance3};
    use approx::assert_relative_eq;

    fn fix(antenna: u8, position: [f64; 3], status: ClasStatus) -> ClasFix {
        ClasFix {
            antenna: AntennaId::new(antenna).unwrap(),
            position: EnuPosition::new(position[0], position[1], position[2]),
            status,
            covariance: Covariance3::isotropic(1e-4),
        }
    }

    #[test]
    fn clas_residual_componentwise() {
        let b = fix(1, [1.0, 2.0, 3.0], ClasStatus::Fix);
        let e = clas_residual(EnuPosition::new(1.0, 2.0, 3.0), &b).unwrap();
        assert_eq!(e, Vector3::zeros());

        let b = fix(1, [0.0, 0.0, 0.0], ClasStatus::Float);
        let e = clas_residual(EnuPosition::new(1.0, 0.0, 0.0), &b).unwrap();
        assert_eq!(e, Vector3::new(1.0, 0.0, 0.0));

        let b = fix(2, [2.4, -1.2, 0.5], ClasStatus::Fix);
        let e = clas_residual(EnuPosition::new(2.5, -1.0, 0.3), &b).unwrap();
        assert_relative_eq!(e, Vector3::new(0.1, 0.2, -0.2), epsilon = 1e-12);
    }

    #[test]
    fn clas_residual_rejects_status_none() {
        let b = fix(3, [0.0, 0.0, 0.0], ClasStatus::None);
        assert_eq!(
            clas_residual(EnuPosition::default(), &b),
            Err(FactorError::ExcludedStatus(AntennaId::new(3).unwrap()))
        );
    }

    fn baseline(from: u8, to: u8, b: [f64; 3], fixed: bool) -> BaselineObservation {
        BaselineObservation {
            from: AntennaId::new(from).unwrap(),
            to: AntennaId::new(to).unwrap(),
            baseline: Vector3::new(b[0], b[1], b[2]),
            fixed,
            covariance: Covariance3::isotropic(9e-6),
        }
    }

    #[test]
    fn mvrtk_residual_sign_convention() {
        let obs = baseline(1, 2, [2.8, 0.0, 0.0], true);
        let e = mvrtk_residual(
            EnuPosition::new(2.8, 0.0, 0.0),
            EnuPosition::new(0.0, 0.0, 0.0),
            &obs,
        )
        .unwrap();
        assert_eq!(e, Vector3::zeros());

        let obs = baseline(1, 2, [1.0, 0.0, 0.0], true);
        let e = mvrtk_residual(EnuPosition::default(), EnuPosition::default(), &obs).unwrap();
        assert_eq!(e, Vector3::new(-1.0, 0.0, 0.0));

        let e = mvrtk_residual(
            EnuPosition::new(1.0, 1.0, 0.0),
            EnuPosition::new(0.0, 0.0, 0.0),
            &obs,
        )
        .unwrap();
        assert_eq!(e, Vector3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn mvrtk_residual_rejects_unfixed() {
        let obs = baseline(1, 2, [1.0, 0.0, 0.0], false);
        assert!(matches!(
            mvrtk_residual(EnuPosition::default(), EnuPosition::default(), &obs),
            Err(FactorError::NotFixed(_, _))
        ));
    }

    #[test]
    fn length_residual_examples() {
        let zero = EnuPosition::default();
        assert_relative_eq!(
            baseline_length_residual(zero, EnuPosition::new(2.8, 0.0, 0.0), 2.8).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            baseline_length_residual(zero, EnuPosition::new(3.0, 4.0, 0.0), 5.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            baseline_length_residual(zero, EnuPosition::new(1.0, 0.0, 0.0), 2.0).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn length_residual_degenerate_geometry() {
        let a = EnuPosition::new(1.0, 1.0, 1.0);
        let b = EnuPosition::new(1.0, 1.0, 1.0 + 1e-9);
        assert!(matches!(
            baseline_length_residual(a, b, 2.8),
            Err(FactorError::DegenerateGeometry { .. })
        ));
        assert!(baseline_length_jacobian(a, b).is_err());
    }

    #[test]
    fn length_jacobian_is_unit_direction() {
        let a = EnuPosition::new(0.0, 0.0, 0.0);
        let b = EnuPosition::new(3.0, 4.0, 0.0);
        let (ja, jb) = baseline_length_jacobian(a, b).unwrap();
        assert_relative_eq!(jb, RowVector3::new(0.6, 0.8, 0.0), epsilon = 1e-15);
        assert_relative_eq!(ja, -RowVector3::new(0.6, 0.8, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn huber_weight_regions() {
        assert_eq!(huber_weight(0.5, 1.345), 1.0);
        assert_eq!(huber_weight(1.345, 1.345), 1.0);
        assert_relative_eq!(huber_weight(13.45, 1.345), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn huber_cost_continuous_at_threshold() {
        let delta = 1.345;
        let inside = huber_cost(delta - 1e-12, delta);
        let outside = huber_cost(delta + 1e-12, delta);
        assert_relative_eq!(inside, outside, epsilon = 1e-9);
        assert_relative_eq!(huber_cost(0.5, delta), 0.25, epsilon = 1e-15);
    }
}
