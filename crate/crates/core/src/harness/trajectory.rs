use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::arm::ArmModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Sine,
}

/// Spatial sine laid along a straight workspace chord.
///
/// The along-chord coordinate runs out and back with a raised-cosine time
/// law, `s(t) = (cycles * spatial_period / 4) (1 - cos(2 pi t / duration))`,
/// so the path covers `cycles` wavelengths in total and ends where it
/// started. The transverse offset is `amplitude * sin(2 pi s / spatial_period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    /// m
    pub amplitude: f64,
    /// Spatial wavelength along the chord, m.
    pub spatial_period: f64,
    pub cycles: f64,
    /// s
    pub duration: f64,
    /// Chord direction in task coordinates (zero-padded to the task size).
    pub chord: Vec<f64>,
    /// Transverse direction in task coordinates.
    pub transverse: Vec<f64>,
    /// Start point; the settled rest position of the arm when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Sine,
            amplitude: 0.150,
            spatial_period: 0.200,
            cycles: 2.0,
            duration: 60.0,
            chord: vec![0.0, 1.0],
            transverse: vec![1.0, 0.0],
            offset: None,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        field: field.to_string(),
        message: message.into(),
    }
}

fn unit(v: &[f64], dims: usize, field: &str) -> Result<DVector<f64>> {
    if v.len() > dims && v[dims..].iter().any(|x| *x != 0.0) {
        return Err(invalid(field, format!("has more than {dims} non-zero components")));
    }
    let mut out = DVector::zeros(dims);
    for (i, x) in v.iter().take(dims).enumerate() {
        out[i] = *x;
    }
    let n = out.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(invalid(field, "must be a non-zero direction"));
    }
    Ok(out / n)
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("spatial_period", self.spatial_period),
            ("cycles", self.cycles),
            ("duration", self.duration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Number of samples for step `dt`, both endpoints included.
    pub fn samples(&self, dt: f64) -> usize {
        (self.duration / dt).round() as usize + 1
    }

    /// Along-chord and transverse displacement at time `t`.
    pub fn displacement(&self, t: f64) -> (f64, f64) {
        let s = self.cycles * self.spatial_period / 4.0 * (1.0 - (2.0 * PI * t / self.duration).cos());
        (s, self.amplitude * (2.0 * PI * s / self.spatial_period).sin())
    }
}

/// Sample the desired task path starting at `offset`.
pub fn generate_trajectory(
    spec: &TrajectorySpec,
    dt: f64,
    offset: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    spec.validate()?;
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    let dims = offset.len();
    let chord = unit(&spec.chord, dims, "chord")?;
    let transverse = unit(&spec.transverse, dims, "transverse")?;
    if chord.dot(&transverse).abs() > 1e-9 {
        return Err(invalid("transverse", "must be orthogonal to chord"));
    }
    let n = spec.samples(dt);
    Ok((0..n)
        .map(|i| {
            let (s, w) = spec.displacement(i as f64 * dt);
            offset + &chord * s + &transverse * w
        })
        .collect())
}

/// Desired joint path for a sampled task path, from warm-started IK.
pub fn reachable_joint_path(
    arm: &ArmModel,
    points: &[DVector<f64>],
    seed: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let mut q = seed.clone();
    let mut out = Vec::with_capacity(points.len());
    for (index, p) in points.iter().enumerate() {
        q = arm
            .inverse_kinematics(p, &q)
            .ok_or_else(|| Error::Unreachable {
                index,
                point: p.iter().copied().collect(),
            })?;
        out.push(q.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn sampled_path_examples() {
        let spec = TrajectorySpec::default();
        let offset = v(&[0.45, -0.09]);
        let path = generate_trajectory(&spec, 1e-3, &offset).unwrap();
        assert_eq!(path.len(), 60_001);
        assert_eq!(path[0], offset);
        assert!((path.last().unwrap() - &offset).norm() < 1e-12);
        assert!((spec.displacement(30.0).0 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn quarter_wavelength_hits_amplitude() {
        let spec = TrajectorySpec::default();
        // s(t) = 0.05 -> 1 - cos(w t) = 0.5 -> w t = pi / 3
        let t = spec.duration / 6.0;
        let (s, w) = spec.displacement(t);
        assert!((s - 0.05).abs() < 1e-12);
        assert!((w - 0.15).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = TrajectorySpec {
            amplitude: 0.0,
            ..TrajectorySpec::default()
        };
        assert!(generate_trajectory(&bad, 1e-3, &v(&[0.0, 0.0])).is_err());
        let skew = TrajectorySpec {
            transverse: vec![1.0, 1.0],
            ..TrajectorySpec::default()
        };
        assert!(generate_trajectory(&skew, 1e-3, &v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn unreachable_sample_is_reported() {
        let arm = crate::arm::preset("planar2x4").unwrap();
        let pts = vec![v(&[0.45, 0.0]), v(&[0.9, 0.0])];
        let err = reachable_joint_path(&arm, &pts, &v(&arm.q_ref)).unwrap_err();
        assert!(matches!(err, Error::Unreachable { index: 1, .. }));
    }
}
