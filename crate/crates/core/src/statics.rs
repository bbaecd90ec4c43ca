//! Equilibrium configurations, structural classification and kink detection.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ScaledTrap, TrapConfig, UnitScale};
use crate::potential::{self, energy_gradient, gradient_norm, Vec3};

/// Convergence target for the gradient 2-norm (reduced units).
pub const GRADIENT_TOLERANCE: f64 = 1e-10;
/// Hessian eigenvalues below this mark a saddle.
pub const NEGATIVE_CURVATURE_TOLERANCE: f64 = -1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumConfig {
    pub positions: Vec<Vec3>,
    pub potential_energy: f64,
    pub gradient_norm: f64,
    /// Lowest Hessian eigenvalue, certifying a local minimum.
    pub min_curvature: f64,
    pub trap: ScaledTrap,
}

impl EquilibriumConfig {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Ion indices sorted by axial coordinate.
    pub fn axial_order(&self) -> Vec<usize> {
        axial_order(&self.positions)
    }
}

pub fn axial_order(positions: &[Vec3]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..positions.len()).collect();
    idx.sort_by(|&a, &b| positions[a].x.total_cmp(&positions[b].x));
    idx
}

/// Knobs for [`relax_with`]. The defaults are tuned for crystals of up to ~70 ions.
#[derive(Debug, Clone, Copy)]
pub struct RelaxOptions {
    /// Viscous damping rate of the pre-conditioning dynamics.
    pub damping: f64,
    pub dt: f64,
    /// Maximum reduced time spent in the damped phase.
    pub damped_time: f64,
    /// Gradient norm at which the damped phase hands over to L-BFGS.
    pub handover_gradient: f64,
    pub max_iterations: usize,
    /// Largest displacement of any single ion per quasi-Newton step.
    pub max_step: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            damping: 2.0,
            dt: 0.02,
            damped_time: 400.0,
            handover_gradient: 1e-3,
            max_iterations: 20_000,
            max_step: 0.05,
        }
    }
}

/// Relax to a local minimum of the secular (pseudopotential) energy. For `FullRf`
/// traps the time-averaged harmonic curvature is used.
pub fn relax(initial_positions: &[Vec3], trap: &TrapConfig) -> Result<EquilibriumConfig> {
    relax_scaled(initial_positions, &trap.scaled().to_harmonic(), &RelaxOptions::default())
}

pub fn relax_with(initial_positions: &[Vec3], trap: &TrapConfig, opts: &RelaxOptions) -> Result<EquilibriumConfig> {
    relax_scaled(initial_positions, &trap.scaled().to_harmonic(), opts)
}

pub fn relax_scaled(initial_positions: &[Vec3], trap: &ScaledTrap, opts: &RelaxOptions) -> Result<EquilibriumConfig> {
    if initial_positions.is_empty() {
        return Err(Error::InvalidParameter("relax needs at least one ion".into()));
    }
    let curv = trap.curvature;
    let mut x = initial_positions.to_vec();
    damped_descent(&mut x, &curv, opts)?;
    let mut iterations = 0;
    for attempt in 0..6 {
        iterations += lbfgs(&mut x, &curv, opts, &|_| {})?;
        newton_polish(&mut x, &curv)?;
        let (energy, grad) = energy_gradient(&x, &curv)?;
        let gnorm = gradient_norm(&grad);
        let h = potential::hessian(&x, &curv)?;
        let eig = SymmetricEigen::new(h);
        let (kmin, &lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        if lmin < NEGATIVE_CURVATURE_TOLERANCE && attempt < 5 {
            // Saddle: push off along the unstable direction and try again.
            let v = eig.eigenvectors.column(kmin);
            let sign = canonical_sign(v.as_slice());
            for (i, r) in x.iter_mut().enumerate() {
                for a in 0..3 {
                    r[a] += 0.02 * sign * v[3 * i + a];
                }
            }
            continue;
        }
        if gnorm >= GRADIENT_TOLERANCE {
            return Err(Error::NoConvergence { iterations, gradient_norm: gnorm });
        }
        if lmin < NEGATIVE_CURVATURE_TOLERANCE {
            return Err(Error::NegativeCurvature { eigenvalue: lmin });
        }
        return Ok(EquilibriumConfig {
            positions: x,
            potential_energy: energy,
            gradient_norm: gnorm,
            min_curvature: lmin,
            trap: *trap,
        });
    }
    unreachable!("loop returns on the last attempt")
}

/// Sign that makes the lexicographically first significant component positive.
pub(crate) fn canonical_sign(v: &[f64]) -> f64 {
    let max = v.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    for c in v {
        if c.abs() > 1e-6 * max {
            return c.signum();
        }
    }
    1.0
}

/// Velocity-Verlet with viscous damping until the gradient is small.
fn damped_descent(x: &mut [Vec3], curv: &[f64; 3], opts: &RelaxOptions) -> Result<()> {
    let n = x.len();
    let mut v = vec![Vec3::zeros(); n];
    let mut f = potential::forces(x, curv)?;
    let steps = (opts.damped_time / opts.dt).ceil() as usize;
    let decay = (-0.5 * opts.damping * opts.dt).exp();
    for step in 0..steps {
        for i in 0..n {
            v[i] = v[i] * decay + f[i] * (0.5 * opts.dt);
            x[i] += v[i] * opts.dt;
        }
        f = potential::forces(x, curv)?;
        for i in 0..n {
            v[i] = (v[i] + f[i] * (0.5 * opts.dt)) * decay;
        }
        if step % 50 == 0 && gradient_norm(&f) < opts.handover_gradient {
            break;
        }
    }
    Ok(())
}

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.dot(q)).sum()
}

/// Minimize the energy over the affine subspace through `x` onto which `project`
/// maps gradients (a linear projector). Returns the final projected gradient norm.
pub fn minimize_projected(x: &mut Vec<Vec3>, curv: &[f64; 3], opts: &RelaxOptions, project: &dyn Fn(&mut [Vec3])) -> Result<f64> {
    lbfgs(x, curv, opts, project)?;
    let (_, mut g) = energy_gradient(x, curv)?;
    project(&mut g);
    Ok(gradient_norm(&g))
}

/// Limited-memory BFGS with Armijo backtracking. Stops once the energy can no
/// longer resolve further progress; the Newton polish takes over from there.
fn lbfgs(x: &mut Vec<Vec3>, curv: &[f64; 3], opts: &RelaxOptions, project: &dyn Fn(&mut [Vec3])) -> Result<usize> {
    const MEMORY: usize = 12;
    let (mut e, mut g) = energy_gradient(x, curv)?;
    project(&mut g);
    let mut hist: VecDeque<(Vec<Vec3>, Vec<Vec3>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        if gradient_norm(&g) < 1e-7 {
            break;
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= yi * a;
            }
            alphas.push(a);
        }
        let gamma = hist.back().map_or(0.01, |(s, y, _)| dot(s, y) / dot(y, y));
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += si * (a - b);
            }
        }
        let mut dir: Vec<Vec3> = q.iter().map(|d| -d).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            hist.clear();
            dir = g.iter().map(|d| -d * 0.01).collect();
            slope = dot(&g, &dir);
        }
        let longest = dir.iter().fold(0.0_f64, |m, d| m.max(d.norm()));
        let mut step = if longest > opts.max_step { opts.max_step / longest } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<Vec3> = x.iter().zip(&dir).map(|(p, d)| p + d * step).collect();
            if let Ok((et, mut gt)) = energy_gradient(&trial, curv) {
                if et <= e + 1e-4 * step * slope {
                    project(&mut gt);
                    accepted = Some((trial, et, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, en, gn)) = accepted else { break };
        let s: Vec<Vec3> = xn.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<Vec3> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 {
            if hist.len() == MEMORY {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let progress = e - en;
        *x = xn;
        e = en;
        g = gn;
        if progress.abs() <= 1e-15 * e.abs().max(1.0) && gradient_norm(&g) < 1e-4 {
            break;
        }
    }
    Ok(it)
}

/// Full Newton steps on the analytic Hessian, used once the quadratic model is
/// accurate. Steps along non-positive curvature are skipped.
fn newton_polish(x: &mut [Vec3], curv: &[f64; 3]) -> Result<()> {
    for _ in 0..30 {
        let (_, g) = energy_gradient(x, curv)?;
        if gradient_norm(&g) < 0.05 * GRADIENT_TOLERANCE {
            break;
        }
        let h = potential::hessian(x, curv)?;
        let gv = DVector::from_vec(potential::flatten(&g));
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&gv),
            None => {
                let eig = SymmetricEigen::new(h);
                let coeffs = eig.eigenvectors.transpose() * &gv;
                let scaled = DVector::from_iterator(
                    coeffs.len(),
                    coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| if *l > 1e-10 { c / l } else { 0.0 }),
                );
                &eig.eigenvectors * scaled
            }
        };
        let longest = step.as_slice().chunks_exact(3).map(|c| (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()).fold(0.0, f64::max);
        let scale = if longest > 0.05 { 0.05 / longest } else { 1.0 };
        for (i, r) in x.iter_mut().enumerate() {
            for a in 0..3 {
                r[a] -= scale * step[3 * i + a];
            }
        }
    }
    Ok(())
}

/// Deterministic starting guess: an axial chain with a small alternating transverse
/// offset and a tiny out-of-plane jitter.
pub fn chain_guess(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = if n > 1 { (1.5 * n as f64 * (n as f64).ln().max(1.0)).cbrt() } else { 0.0 };
    (0..n)
        .map(|i| {
            let x = if n > 1 { -half + 2.0 * half * i as f64 / (n - 1) as f64 } else { 0.0 };
            let y = if i % 2 == 0 { 0.05 } else { -0.05 };
            let z = 1e-3 * (rng.random::<f64>() - 0.5);
            Vec3::new(x, y, z)
        })
        .collect()
}

/// Relaxed defect-free ground-state candidate for `n` ions.
pub fn ground_state(n: usize, trap: &TrapConfig) -> Result<EquilibriumConfig> {
    relax(&chain_guess(n, 0x5eed), trap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructureKind {
    Linear,
    Zigzag,
    ThreeD,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureClass {
    pub kind: StructureKind,
    /// Largest distance from the principal (zigzag) plane.
    pub max_out_of_plane: f64,
    /// Largest radial distance from the trap axis.
    pub transverse_amplitude: f64,
}

/// Classification thresholds in reduced length units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub linear: f64,
    pub plane: f64,
}

impl Thresholds {
    /// 0.05 um transverse and 0.1 um out-of-plane.
    pub fn default_for(units: &UnitScale) -> Self {
        Thresholds { linear: units.length_to_scaled(0.05e-6), plane: units.length_to_scaled(0.1e-6) }
    }
}

/// Transverse coordinates rotated onto the principal axes of their second moment:
/// `(in_plane, out_of_plane)` per ion, in the original ion order.
pub fn principal_plane(positions: &[Vec3]) -> Vec<(f64, f64)> {
    let mut m = Matrix2::<f64>::zeros();
    for r in positions {
        m[(0, 0)] += r.y * r.y;
        m[(0, 1)] += r.y * r.z;
        m[(1, 1)] += r.z * r.z;
    }
    m[(1, 0)] = m[(0, 1)];
    let eig = SymmetricEigen::new(m);
    let major = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let mut u = eig.eigenvectors.column(major).into_owned();
    if m[(0, 1)].abs() < 1e-300 {
        // Already aligned; keep the lab axes to avoid gratuitous sign flips.
        u = if m[(0, 0)] >= m[(1, 1)] { nalgebra::Vector2::new(1.0, 0.0) } else { nalgebra::Vector2::new(0.0, 1.0) };
    }
    if u[0] < 0.0 || (u[0] == 0.0 && u[1] < 0.0) {
        u = -u;
    }
    let w = nalgebra::Vector2::new(-u[1], u[0]);
    positions
        .iter()
        .map(|r| {
            let t = nalgebra::Vector2::new(r.y, r.z);
            (t.dot(&u), t.dot(&w))
        })
        .collect()
}

pub fn classify(config: &EquilibriumConfig, thresholds: &Thresholds) -> StructureClass {
    classify_positions(&config.positions, thresholds)
}

pub fn classify_positions(positions: &[Vec3], thresholds: &Thresholds) -> StructureClass {
    let aligned = principal_plane(positions);
    let transverse_amplitude = positions.iter().map(|r| r.y.hypot(r.z)).fold(0.0, f64::max);
    let max_out_of_plane = aligned.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let kind = if transverse_amplitude < thresholds.linear {
        StructureKind::Linear
    } else if max_out_of_plane >= thresholds.plane {
        StructureKind::ThreeD
    } else {
        let order = axial_order(positions);
        let signs: Vec<i8> = order
            .iter()
            .enumerate()
            .filter(|(_, &i)| aligned[i].0.abs() >= thresholds.linear)
            .map(|(k, &i)| staggered_sign(aligned[i].0, k))
            .collect();
        let flips = signs.windows(2).filter(|w| w[0] != w[1]).count();
        if flips <= 2 {
            StructureKind::Zigzag
        } else {
            StructureKind::Complex
        }
    };
    StructureClass { kind, max_out_of_plane, transverse_amplitude }
}

#[inline]
fn staggered_sign(y: f64, k: usize) -> i8 {
    let s = if y >= 0.0 { 1 } else { -1 };
    if k.is_multiple_of(2) {
        s
    } else {
        -s
    }
}

/// One sign flip of the zigzag alternation signature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flip {
    /// Signature change `(s_after - s_before) / 2`.
    pub charge: i8,
    /// Interpolated axial coordinate of the flip, reduced length.
    pub axial_position: f64,
    /// Same position in lattice units, measured from the central ion index.
    pub lattice_position: f64,
    /// Ions (original indices) bracketing the flip.
    pub core_ions: [usize; 2],
    /// Axial distance between the core ions.
    pub local_spacing: f64,
    pub core_out_of_plane: f64,
}

/// All flips of the alternation signature `s_i = sign(y_i) (-1)^i` over axially
/// ordered ions, with `y` measured in the principal plane about the transverse
/// center of mass. Ions whose in-plane offset is below `sign_fraction` of the largest
/// one carry no defined sign and are skipped.
pub fn signature_flips(positions: &[Vec3], sign_fraction: f64) -> Vec<Flip> {
    let n = positions.len();
    if n < 2 {
        return Vec::new();
    }
    // Offsets are taken about the transverse center of mass, so a rigid
    // displacement of the crystal cannot create or remove flips.
    let (cy, cz) = positions.iter().fold((0.0, 0.0), |(y, z), r| (y + r.y, z + r.z));
    let shift = Vec3::new(0.0, cy / n as f64, cz / n as f64);
    let centered: Vec<Vec3> = positions.iter().map(|r| r - shift).collect();
    let aligned = principal_plane(&centered);
    let order = axial_order(positions);
    let ys: Vec<f64> = order.iter().map(|&i| aligned[i].0).collect();
    let amp = ys.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
    if amp < LINEAR_FLOOR {
        return Vec::new();
    }
    let cutoff = sign_fraction * amp;
    let defined: Vec<usize> = (0..n).filter(|&k| ys[k].abs() >= cutoff).collect();
    let center = 0.5 * (n as f64 - 1.0);
    let mut flips = Vec::new();
    for w in defined.windows(2) {
        let (a, b) = (w[0], w[1]);
        let sa = staggered_sign(ys[a], a);
        let sb = staggered_sign(ys[b], b);
        if sa == sb {
            continue;
        }
        // Zero crossing of the staggered offset (-1)^k y_k between a and b.
        let phi = |k: usize| if k.is_multiple_of(2) { ys[k] } else { -ys[k] };
        let mut k = a;
        let mut best = a;
        let mut found = false;
        while k < b {
            if phi(k) == 0.0 || phi(k).signum() != phi(k + 1).signum() {
                best = k;
                found = true;
                break;
            }
            k += 1;
        }
        if !found {
            best = (a + b) / 2;
        }
        let (p0, p1) = (phi(best), phi(best + 1));
        let t = if p0 != p1 { (p0 / (p0 - p1)).clamp(0.0, 1.0) } else { 0.5 };
        let (i0, i1) = (order[best], order[best + 1]);
        let x0 = positions[i0].x;
        let x1 = positions[i1].x;
        flips.push(Flip {
            charge: ((sb - sa) / 2),
            axial_position: x0 + t * (x1 - x0),
            lattice_position: best as f64 + t - center,
            core_ions: [i0, i1],
            local_spacing: x1 - x0,
            core_out_of_plane: aligned[i0].1.abs().max(aligned[i1].1.abs()),
        });
    }
    flips
}

/// Transverse offsets below this (reduced length, ~0.04 nm) are relaxation noise
/// of a linear chain and carry no zigzag signature.
pub const LINEAR_FLOOR: f64 = 1e-9;

/// Default relative cut for ions carrying a defined zigzag sign.
pub const SIGN_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinkDescriptor {
    pub present: bool,
    pub topological_charge: i8,
    /// Reduced length; zero when absent.
    pub axial_position: f64,
    /// Lattice units from the central ion index.
    pub lattice_position: f64,
    pub core_out_of_plane_amplitude: f64,
    pub core_ion_indices: Option<[usize; 2]>,
    pub local_spacing: f64,
}

impl KinkDescriptor {
    pub fn absent() -> Self {
        KinkDescriptor {
            present: false,
            topological_charge: 0,
            axial_position: 0.0,
            lattice_position: 0.0,
            core_out_of_plane_amplitude: 0.0,
            core_ion_indices: None,
            local_spacing: 0.0,
        }
    }

    fn from_flip(f: &Flip) -> Self {
        KinkDescriptor {
            present: true,
            topological_charge: f.charge,
            axial_position: f.axial_position,
            lattice_position: f.lattice_position,
            core_out_of_plane_amplitude: f.core_out_of_plane,
            core_ion_indices: Some(f.core_ions),
            local_spacing: f.local_spacing,
        }
    }
}

/// Single-kink descriptor. Several flips are reported as `AmbiguousStructure`;
/// use [`signature_flips`] to inspect them.
pub fn detect_kink(config: &EquilibriumConfig) -> Result<KinkDescriptor> {
    detect_kink_positions(&config.positions)
}

pub fn detect_kink_positions(positions: &[Vec3]) -> Result<KinkDescriptor> {
    let flips = signature_flips(positions, SIGN_FRACTION);
    match flips.len() {
        0 => Ok(KinkDescriptor::absent()),
        1 => Ok(KinkDescriptor::from_flip(&flips[0])),
        k => Err(Error::AmbiguousStructure { flips: k }),
    }
}

/// Mirror the zigzag for all ions axially beyond bond `bond` (between the ions at
/// sorted positions `bond` and `bond + 1`), reflecting the in-plane offset.
pub fn flip_beyond_bond(positions: &[Vec3], bond: usize) -> Vec<Vec3> {
    let aligned = principal_plane(positions);
    let order = axial_order(positions);
    // In-plane unit vector in the (y, z) plane.
    let (mut uy, mut uz) = (0.0, 0.0);
    for (r, a) in positions.iter().zip(&aligned) {
        uy += r.y * a.0;
        uz += r.z * a.0;
    }
    let norm = uy.hypot(uz);
    let (uy, uz) = if norm > 0.0 { (uy / norm, uz / norm) } else { (1.0, 0.0) };
    let mut out = positions.to_vec();
    for &i in order.iter().skip(bond + 1) {
        let c = aligned[i].0;
        out[i].y -= 2.0 * c * uy;
        out[i].z -= 2.0 * c * uz;
    }
    out
}

/// Relaxed configuration with a kink seeded at `bond` of a relaxed zigzag.
pub fn kink_config(zigzag: &EquilibriumConfig, bond: usize) -> Result<EquilibriumConfig> {
    let seeded = flip_beyond_bond(&zigzag.positions, bond);
    // A small out-of-plane nudge lets the kink core leave the plane if it wants to.
    let order = axial_order(&seeded);
    let mut start = seeded;
    for (k, &i) in order.iter().enumerate() {
        let d = k as f64 - bond as f64 - 0.5;
        start[i].z += 0.01 * (-d * d / 4.0).exp();
    }
    relax_scaled(&start, &zigzag.trap, &RelaxOptions::default())
}

/// Centered kink for `n` ions: zigzag ground state with the central bond flipped.
pub fn centered_kink(n: usize, trap: &TrapConfig) -> Result<EquilibriumConfig> {
    let zz = ground_state(n, trap)?;
    kink_config(&zz, n / 2 - 1)
}

/// Uniformly random perturbation helper for tests and restarts.
pub fn jitter(positions: &[Vec3], amplitude: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positions
        .iter()
        .map(|r| r + Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * amplitude)
        .collect()
}

/// Hessian of the secular potential at a configuration.
pub fn secular_hessian(config: &EquilibriumConfig) -> Result<DMatrix<f64>> {
    potential::hessian(&config.positions, &config.trap.curvature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_trap, SpeciesConfig, TrapKind, DEFAULT_OMEGA_X, DEFAULT_RF_FREQUENCY};
    use std::f64::consts::TAU;

    fn trap(ratio: f64) -> TrapConfig {
        make_trap(DEFAULT_RF_FREQUENCY, DEFAULT_OMEGA_X, TAU * 610e3, ratio * TAU * 610e3, TrapKind::Harmonic).unwrap()
    }

    fn zigzag(n: usize, amp: f64) -> Vec<Vec3> {
        (0..n).map(|k| Vec3::new(k as f64, if k % 2 == 0 { amp } else { -amp }, 0.0)).collect()
    }

    const LOOSE: Thresholds = Thresholds { linear: 0.01, plane: 0.01 };

    #[test]
    fn two_ions_sit_at_the_analytic_separation() {
        let eq = relax(&chain_guess(2, 3), &trap(1.05)).unwrap();
        let d = (eq.positions[0] - eq.positions[1]).norm();
        assert!((d - 2f64.cbrt()).abs() < 1e-9);
        assert!(eq.gradient_norm < GRADIENT_TOLERANCE);
        assert!(eq.min_curvature > 0.0);
        // SI oracle: d^3 = 2 q^2 / (4 pi eps0 m omega_x^2).
        let s = SpeciesConfig::magnesium24();
        let units = UnitScale::new(&s, DEFAULT_OMEGA_X);
        let d_si = (2.0 * s.charge * s.charge / (4.0 * std::f64::consts::PI * crate::model::EPSILON_0 * s.mass * DEFAULT_OMEGA_X.powi(2))).cbrt();
        assert!((units.length_to_si(d) / d_si - 1.0).abs() < 1e-9);
    }

    #[test]
    fn three_ions_match_the_analytic_chain() {
        let eq = relax(&chain_guess(3, 3), &trap(1.05)).unwrap();
        let xs: Vec<f64> = eq.axial_order().iter().map(|&i| eq.positions[i].x).collect();
        let a = 1.25f64.cbrt();
        for (x, e) in xs.iter().zip([-a, 0.0, a]) {
            assert!((x - e).abs() < 1e-9, "{x} vs {e}");
        }
        assert_eq!(classify(&eq, &LOOSE).kind, StructureKind::Linear);
    }

    #[test]
    fn synthetic_structures_are_classified() {
        let line: Vec<Vec3> = (0..10).map(|k| Vec3::new(k as f64, 1e-4, 0.0)).collect();
        assert_eq!(classify_positions(&line, &LOOSE).kind, StructureKind::Linear);
        assert_eq!(classify_positions(&zigzag(10, 0.2), &LOOSE).kind, StructureKind::Zigzag);
        let helix: Vec<Vec3> = (0..10).map(|k| {
            let a = k as f64 * 2.0;
            Vec3::new(k as f64, 0.2 * a.cos(), 0.2 * a.sin())
        }).collect();
        assert_eq!(classify_positions(&helix, &LOOSE).kind, StructureKind::ThreeD);
        let mut scrambled = zigzag(10, 0.2);
        for k in [2, 5, 8] {
            scrambled[k].y = -scrambled[k].y;
        }
        assert_eq!(classify_positions(&scrambled, &LOOSE).kind, StructureKind::Complex);
    }

    #[test]
    fn principal_plane_undoes_a_rotation() {
        let theta: f64 = 0.7;
        let (c, s) = (theta.cos(), theta.sin());
        let rotated: Vec<Vec3> = zigzag(8, 0.2).iter().map(|r| Vec3::new(r.x, c * r.y, s * r.y)).collect();
        for (a, r) in principal_plane(&rotated).iter().zip(zigzag(8, 0.2)) {
            assert!(a.1.abs() < 1e-12);
            assert!((a.0.abs() - r.y.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn flips_locate_single_and_multiple_kinks() {
        let zz = zigzag(10, 0.2);
        assert!(signature_flips(&zz, SIGN_FRACTION).is_empty());
        assert!(!detect_kink_positions(&zz).unwrap().present);
        let one = flip_beyond_bond(&zz, 4);
        let d = detect_kink_positions(&one).unwrap();
        assert!(d.present);
        assert_eq!(d.topological_charge.abs(), 1);
        assert!(d.lattice_position.abs() < 1e-12);
        assert!((d.axial_position - 4.5).abs() < 1e-12);
        assert_eq!(d.core_ion_indices, Some([4, 5]));
        let two = flip_beyond_bond(&one, 7);
        let flips = signature_flips(&two, SIGN_FRACTION);
        assert_eq!(flips.len(), 2);
        assert_eq!(flips[0].charge + flips[1].charge, 0);
        assert!(matches!(detect_kink_positions(&two), Err(Error::AmbiguousStructure { flips: 2 })));
    }

    #[test]
    fn flipping_preserves_axial_and_radial_coordinates() {
        let theta: f64 = 0.3;
        let zz: Vec<Vec3> = zigzag(9, 0.15).iter().map(|r| Vec3::new(r.x, theta.cos() * r.y, theta.sin() * r.y + 1e-3)).collect();
        let flipped = flip_beyond_bond(&zz, 3);
        for (a, b) in zz.iter().zip(&flipped) {
            assert_eq!(a.x, b.x);
            assert!((a.y.hypot(a.z) - b.y.hypot(b.z)).abs() < 2e-3);
        }
        assert_eq!(signature_flips(&flipped, SIGN_FRACTION).len(), 1);
    }

    #[test]
    fn centered_kink_relaxes_to_a_single_central_defect() {
        let t = trap(1.05);
        let zz = ground_state(50, &t).unwrap();
        assert_eq!(classify(&zz, &Thresholds::default_for(&UnitScale::for_trap(&SpeciesConfig::magnesium24(), &t))).kind, StructureKind::Zigzag);
        assert!(!detect_kink(&zz).unwrap().present);
        let kink = centered_kink(50, &t).unwrap();
        let d = detect_kink(&kink).unwrap();
        assert!(d.present);
        assert!(d.lattice_position.abs() < 1.0);
        assert!(kink.potential_energy > zz.potential_energy);
        assert!(kink.min_curvature > NEGATIVE_CURVATURE_TOLERANCE);
    }
}
