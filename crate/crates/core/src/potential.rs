//! Trap + Coulomb potential in reduced units: energy, forces and analytic Hessian.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Pairs closer than this (reduced length) are treated as coincident.
pub const COINCIDENCE_THRESHOLD: f64 = 1e-9;

fn coincident(i: usize, j: usize, d: f64) -> Error {
    Error::CoincidentIons { i, j, distance: d }
}

pub fn trap_energy(positions: &[Vec3], curvature: &[f64; 3]) -> f64 {
    positions
        .iter()
        .map(|r| 0.5 * (curvature[0] * r.x * r.x + curvature[1] * r.y * r.y + curvature[2] * r.z * r.z))
        .sum()
}

pub fn coulomb_energy(positions: &[Vec3]) -> Result<f64> {
    let mut e = 0.0;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let d = (positions[i] - positions[j]).norm();
            if d < COINCIDENCE_THRESHOLD {
                return Err(coincident(i, j, d));
            }
            e += 1.0 / d;
        }
    }
    Ok(e)
}

pub fn potential_energy(positions: &[Vec3], curvature: &[f64; 3]) -> Result<f64> {
    Ok(trap_energy(positions, curvature) + coulomb_energy(positions)?)
}

/// Adds pairwise Coulomb forces into `forces`. Each pair contributes `+f` and `-f`.
pub fn add_coulomb_forces(positions: &[Vec3], forces: &mut [Vec3]) -> Result<()> {
    let n = positions.len();
    for i in 0..n {
        let ri = positions[i];
        let mut fi = Vec3::zeros();
        for j in (i + 1)..n {
            let r = ri - positions[j];
            let d2 = r.norm_squared();
            let d = d2.sqrt();
            if d < COINCIDENCE_THRESHOLD {
                return Err(coincident(i, j, d));
            }
            let f = r / (d2 * d);
            fi += f;
            forces[j] -= f;
        }
        forces[i] += fi;
    }
    Ok(())
}

pub fn add_trap_forces(positions: &[Vec3], curvature: &[f64; 3], forces: &mut [Vec3]) {
    for (f, r) in forces.iter_mut().zip(positions) {
        f.x -= curvature[0] * r.x;
        f.y -= curvature[1] * r.y;
        f.z -= curvature[2] * r.z;
    }
}

/// Total force (negative gradient) for the given instantaneous curvature.
pub fn forces(positions: &[Vec3], curvature: &[f64; 3]) -> Result<Vec<Vec3>> {
    let mut f = vec![Vec3::zeros(); positions.len()];
    add_coulomb_forces(positions, &mut f)?;
    add_trap_forces(positions, curvature, &mut f);
    Ok(f)
}

/// Energy and gradient in one pass.
pub fn energy_gradient(positions: &[Vec3], curvature: &[f64; 3]) -> Result<(f64, Vec<Vec3>)> {
    let n = positions.len();
    let mut grad = vec![Vec3::zeros(); n];
    let mut e = trap_energy(positions, curvature);
    for i in 0..n {
        let ri = positions[i];
        let mut gi = Vec3::zeros();
        for j in (i + 1)..n {
            let r = ri - positions[j];
            let d2 = r.norm_squared();
            let d = d2.sqrt();
            if d < COINCIDENCE_THRESHOLD {
                return Err(coincident(i, j, d));
            }
            e += 1.0 / d;
            let g = r / (d2 * d);
            gi -= g;
            grad[j] += g;
        }
        grad[i] += gi;
    }
    for (g, r) in grad.iter_mut().zip(positions) {
        g.x += curvature[0] * r.x;
        g.y += curvature[1] * r.y;
        g.z += curvature[2] * r.z;
    }
    Ok((e, grad))
}

/// Analytic `3N x 3N` Hessian, ordered ion-major (`3 i + axis`).
pub fn hessian(positions: &[Vec3], curvature: &[f64; 3]) -> Result<DMatrix<f64>> {
    let n = positions.len();
    let mut h = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for axis in 0..3 {
            h[(3 * i + axis, 3 * i + axis)] = curvature[axis];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let r = positions[i] - positions[j];
            let d2 = r.norm_squared();
            let d = d2.sqrt();
            if d < COINCIDENCE_THRESHOLD {
                return Err(coincident(i, j, d));
            }
            // d^2 (1/r) / dr_a dr_b = (3 r_a r_b - r^2 delta_ab) / r^5
            let block: Matrix3<f64> = (r * r.transpose() * 3.0 - Matrix3::identity() * d2) / (d2 * d2 * d);
            for a in 0..3 {
                for b in 0..3 {
                    let v = block[(a, b)];
                    h[(3 * i + a, 3 * i + b)] += v;
                    h[(3 * j + a, 3 * j + b)] += v;
                    h[(3 * i + a, 3 * j + b)] -= v;
                    h[(3 * j + a, 3 * i + b)] -= v;
                }
            }
        }
    }
    Ok(h)
}

pub fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|r| [r.x, r.y, r.z]).collect()
}

pub fn unflatten(v: &[f64]) -> Vec<Vec3> {
    v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

pub fn gradient_norm(grad: &[Vec3]) -> f64 {
    grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coulomb_forces_balance() {
        let p = vec![
            Vec3::new(0.1, 0.3, -0.2),
            Vec3::new(1.3, -0.4, 0.5),
            Vec3::new(-2.1, 0.7, 0.1),
            Vec3::new(0.4, 2.2, -1.3),
            Vec3::new(-0.9, -1.1, 0.8),
        ];
        let mut f = vec![Vec3::zeros(); p.len()];
        add_coulomb_forces(&p, &mut f).unwrap();
        let total: Vec3 = f.iter().sum();
        assert!(total.norm() < 1e-12);
    }

    #[test]
    fn coincident_pair_detected() {
        let p = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1e-12)];
        assert!(matches!(coulomb_energy(&p), Err(Error::CoincidentIons { i: 0, j: 1, .. })));
    }

    #[test]
    fn gradient_matches_forces() {
        let p = vec![Vec3::new(0.1, 0.3, -0.2), Vec3::new(1.3, -0.4, 0.5), Vec3::new(-2.1, 0.7, 0.1)];
        let c = [1.0, 9.0, 10.0];
        let (_, g) = energy_gradient(&p, &c).unwrap();
        let f = forces(&p, &c).unwrap();
        for (a, b) in g.iter().zip(&f) {
            assert!((a + b).norm() < 1e-14);
        }
    }
}
