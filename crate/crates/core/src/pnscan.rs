//! Effective Peierls-Nabarro potential of a kink from overdamped descents, and its
//! scaling with the number of ions.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CoolingParams, Integrator, SystemState};
use crate::error::{Error, Result, Side};
use crate::model::{ScaledTrap, UnitScale};
use crate::potential::{self, Vec3};
use crate::statics::{self, axial_order, EquilibriumConfig, KinkDescriptor, SIGN_FRACTION};

/// Parameters of the overdamped descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentParams {
    /// Viscous damping rate.
    pub gamma: f64,
    pub dt: f64,
    /// Reduced time between recorded samples.
    pub sample_interval: f64,
    /// Give up after this much reduced time.
    pub max_time: f64,
    /// The initial transient ends the first time the kinetic energy (reduced) is
    /// below this.
    pub settle_kinetic: f64,
    /// Largest kinetic energy allowed along the kept path, as a fraction of the
    /// potential energy released between its ends.
    pub kinetic_fraction: f64,
    /// Stop once the gradient norm falls below this with the kink centered.
    pub stop_gradient: f64,
}

impl Default for DescentParams {
    fn default() -> Self {
        DescentParams {
            gamma: 16.0,
            dt: 0.02,
            sample_interval: 0.5,
            max_time: 40_000.0,
            settle_kinetic: 2e-5,
            kinetic_fraction: 1e-3,
            stop_gradient: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub time: f64,
    /// Reduced length.
    pub kink_position: f64,
    /// Lattice units from the central ion index.
    pub lattice_position: f64,
    pub potential_energy: f64,
    pub kinetic_energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KinkPath {
    pub samples: Vec<PathSample>,
    /// Final configuration (kink at the center).
    pub final_positions: Vec<Vec3>,
    pub params: DescentParams,
    /// Number of leading samples discarded as settling transient.
    pub trimmed: usize,
}

impl KinkPath {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn final_sample(&self) -> Option<&PathSample> {
        self.samples.last()
    }

    /// Copy with all positions negated (mirror image about the trap center).
    pub fn mirrored(&self) -> KinkPath {
        let mut m = self.clone();
        for s in &mut m.samples {
            s.kink_position = -s.kink_position;
            s.lattice_position = -s.lattice_position;
        }
        for r in &mut m.final_positions {
            r.x = -r.x;
        }
        m
    }
}

/// Bond index at the crystal center (between sorted ions `n/2 - 1` and `n/2`).
/// A descent ends at the center when the kink rests within this many lattice
/// spacings of the middle ion index. With an odd ion number the symmetric kink
/// can be a saddle flanked by two minima less than a spacing away.
pub const CENTER_TOLERANCE: f64 = 1.0;

pub fn center_bond(n: usize) -> usize {
    n / 2 - 1
}

/// Flip the zigzag beyond `bond`, then minimize the energy with the transverse
/// coordinates of the two ions bracketing the bond held equal, which pins the
/// sign flip at the bond midpoint. The result lies on the adiabatic path of the
/// kink. Fails with `KinkNotFormed` if no single kink remains within one lattice
/// spacing of the bond.
pub fn seed_offcenter_kink(zigzag: &EquilibriumConfig, bond: usize) -> Result<Vec<Vec3>> {
    let n = zigzag.len();
    if n < 4 || bond + 1 >= n {
        return Err(Error::KinkNotFormed { bond });
    }
    let mut pos = statics::flip_beyond_bond(&zigzag.positions, bond);
    let order = axial_order(&pos);
    let (a, b) = (order[bond], order[bond + 1]);
    for (k, &i) in order.iter().enumerate() {
        let d = k as f64 - bond as f64 - 0.5;
        pos[i].z += 0.01 * (-d * d / 4.0).exp();
    }
    let mean = 0.5 * (pos[a].y + pos[b].y);
    pos[a].y = mean;
    pos[b].y = mean;
    let project = move |g: &mut [Vec3]| {
        let m = 0.5 * (g[a].y + g[b].y);
        g[a].y = m;
        g[b].y = m;
    };
    let opts = statics::RelaxOptions::default();
    statics::minimize_projected(&mut pos, &zigzag.trap.to_harmonic().curvature, &opts, &project)?;
    let flips = statics::signature_flips(&pos, SIGN_FRACTION);
    let target = bond as f64 + 0.5 - 0.5 * (n as f64 - 1.0);
    match flips.as_slice() {
        [f] if (f.lattice_position - target).abs() <= 1.0 => Ok(pos),
        _ => Err(Error::KinkNotFormed { bond }),
    }
}

fn sample_of(state: &SystemState, curv: &[f64; 3], kink: &KinkDescriptor) -> Result<PathSample> {
    Ok(PathSample {
        time: state.time,
        kink_position: kink.axial_position,
        lattice_position: kink.lattice_position,
        potential_energy: potential::potential_energy(&state.positions, curv)?,
        kinetic_energy: state.kinetic_energy(),
    })
}

/// Overdamped dynamics from a configuration holding one kink until the kink rests
/// at the center, recording `(kink position, potential energy)` along the way.
pub fn adiabatic_descent(positions: &[Vec3], trap: &ScaledTrap, params: &DescentParams) -> Result<KinkPath> {
    let harmonic = trap.to_harmonic();
    let curv = harmonic.curvature;
    let n = positions.len();
    let mut integ = Integrator::new(SystemState::at_rest(positions.to_vec()), &harmonic, params.dt)?;
    let cooling = CoolingParams::ViscousDamping { gamma: params.gamma };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let every = (params.sample_interval / params.dt).round().max(1.0) as usize;
    let max_steps = (params.max_time / params.dt).ceil() as usize;

    let first = statics::detect_kink_positions(positions)?;
    if !first.present {
        return Err(Error::KinkNotFormed { bond: n / 2 });
    }
    let mut samples = vec![sample_of(&integ.state, &curv, &first)?];
    let mut last_side = side_of(first.axial_position);
    let mut settled = samples[0].kinetic_energy < params.settle_kinetic;
    let mut trimmed = 0;
    for step in 1..=max_steps {
        integ.step(&cooling, &mut rng)?;
        if step % every != 0 {
            continue;
        }
        let state = &integ.state;
        let kink = match statics::detect_kink_positions(&state.positions) {
            Ok(k) if k.present => k,
            // Flip gone or split: the kink left through an end.
            _ => return Err(Error::KinkEscaped { side: last_side }),
        };
        last_side = side_of(kink.axial_position);
        let sample = sample_of(state, &curv, &kink)?;
        if !settled && sample.kinetic_energy < params.settle_kinetic {
            settled = true;
            trimmed = samples.len();
        }
        samples.push(sample);
        let grad = potential::gradient_norm(&potential::forces(&state.positions, &curv)?);
        if settled && grad < params.stop_gradient {
            if kink.lattice_position.abs() > CENTER_TOLERANCE {
                return Err(Error::KinkStuck { position: kink.lattice_position });
            }
            let final_positions = state.positions.clone();
            let mut kept: Vec<PathSample> = samples.split_off(trimmed.min(samples.len().saturating_sub(1)));
            check_overdamped(&kept, params.kinetic_fraction)?;
            monotone_toward_center(&mut kept);
            return Ok(KinkPath { samples: kept, final_positions, params: *params, trimmed });
        }
    }
    Err(Error::NoConvergence { iterations: max_steps, gradient_norm: f64::NAN })
}

fn check_overdamped(samples: &[PathSample], fraction: f64) -> Result<()> {
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else { return Ok(()) };
    let released = (first.potential_energy - last.potential_energy).max(0.0);
    let limit = fraction * released;
    let kinetic = samples.iter().map(|s| s.kinetic_energy).fold(0.0, f64::max);
    // A kink starting at rest in the center releases nothing and never moves.
    if kinetic > limit && kinetic > 1e-14 {
        return Err(Error::NotOverdamped { kinetic, limit });
    }
    Ok(())
}

fn side_of(x: f64) -> Side {
    if x < 0.0 {
        Side::Left
    } else {
        Side::Right
    }
}

/// Drop samples that move away from the center relative to the closest one so far.
fn monotone_toward_center(samples: &mut Vec<PathSample>) {
    let mut best = f64::INFINITY;
    samples.retain(|s| {
        let d = s.kink_position.abs();
        if d <= best + 1e-12 {
            best = best.min(d);
            true
        } else {
            false
        }
    });
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PnProfile {
    pub n_ions: usize,
    /// Uniform grid of kink positions, reduced length, symmetric about zero.
    pub positions: Vec<f64>,
    /// Energy relative to the centered kink, reduced units.
    pub energies: Vec<f64>,
    /// Raw merged samples `(position, energy)` before interpolation.
    pub raw: Vec<(f64, f64)>,
    pub barrier_height: f64,
    /// Largest `|E(x) - E(-x)|` over the grid.
    pub asymmetry: f64,
    /// Largest rise of an interior sample over its outer neighbour.
    pub ripple: f64,
}

/// Interpolate `(position, energy)` samples sorted by position.
fn interp(samples: &[(f64, f64)], x: f64) -> f64 {
    match samples.binary_search_by(|s| s.0.total_cmp(&x)) {
        Ok(k) => samples[k].1,
        Err(0) => samples[0].1,
        Err(k) if k >= samples.len() => samples[samples.len() - 1].1,
        Err(k) => {
            let (x0, e0) = samples[k - 1];
            let (x1, e1) = samples[k];
            e0 + (e1 - e0) * (x - x0) / (x1 - x0)
        }
    }
}

/// Merge a descent from the left and one from the right into a profile zeroed at
/// the centered kink.
pub fn pn_profile(path_left: &KinkPath, path_right: &KinkPath, n_ions: usize, grid_points: usize) -> Result<PnProfile> {
    let reached = |p: &KinkPath| p.final_sample().is_some_and(|s| s.lattice_position.abs() <= CENTER_TOLERANCE);
    if !reached(path_left) || !reached(path_right) {
        return Err(Error::InsufficientOverlap);
    }
    let e_center = 0.5 * (path_left.final_sample().unwrap().potential_energy + path_right.final_sample().unwrap().potential_energy);
    let mut left: Vec<(f64, f64)> = path_left.samples.iter().map(|s| (s.kink_position, s.potential_energy - e_center)).collect();
    let mut right: Vec<(f64, f64)> = path_right.samples.iter().map(|s| (s.kink_position, s.potential_energy - e_center)).collect();
    // Orient both halves so that positions grow outward from zero.
    left.iter_mut().for_each(|s| s.0 = -s.0);
    for half in [&mut left, &mut right] {
        half.sort_by(|a, b| a.0.total_cmp(&b.0));
        half.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);
        if half.first().is_some_and(|s| s.0 > 0.0) {
            half.insert(0, (0.0, 0.0));
        }
    }
    let reach = left.last().map_or(0.0, |s| s.0).min(right.last().map_or(0.0, |s| s.0));
    if reach <= 0.0 {
        return Err(Error::InsufficientOverlap);
    }
    let half_points = grid_points.max(3) / 2;
    let mut positions = Vec::with_capacity(2 * half_points + 1);
    let mut energies = Vec::with_capacity(2 * half_points + 1);
    let mut asymmetry: f64 = 0.0;
    for k in -(half_points as i64)..=(half_points as i64) {
        let x = reach * k as f64 / half_points as f64;
        let e = if x < 0.0 { interp(&left, -x) } else { interp(&right, x) };
        asymmetry = asymmetry.max((interp(&left, x.abs()) - interp(&right, x.abs())).abs());
        positions.push(x);
        energies.push(e);
    }
    let mut raw: Vec<(f64, f64)> = left.iter().map(|&(x, e)| (-x, e)).chain(right.iter().copied()).collect();
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max_e = raw.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let min_e = raw.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let ripple = profile_ripple(&raw);
    Ok(PnProfile { n_ions, positions, energies, raw, barrier_height: max_e - min_e, asymmetry, ripple })
}

/// Largest amount by which a sample exceeds the next sample further from the
/// center; zero for a profile rising monotonically outward.
fn profile_ripple(raw: &[(f64, f64)]) -> f64 {
    let mut ripple: f64 = 0.0;
    for w in raw.windows(2) {
        let (inner, outer) = if w[0].0.abs() < w[1].0.abs() { (w[0], w[1]) } else { (w[1], w[0]) };
        if (w[0].0 < 0.0) == (w[1].0 < 0.0) || w[0].0 == 0.0 || w[1].0 == 0.0 {
            ripple = ripple.max(inner.1 - outer.1);
        }
    }
    ripple
}

/// Settings for locating the outermost starting bond of a descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnScanParams {
    pub descent: DescentParams,
    pub grid_points: usize,
}

impl Default for PnScanParams {
    fn default() -> Self {
        PnScanParams { descent: DescentParams::default(), grid_points: 81 }
    }
}

/// Outcome of scanning one ion number.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PnScan {
    pub n_ions: usize,
    pub profile: PnProfile,
    /// Starting bond of the left descent (sorted-ion bond index).
    pub start_bond: usize,
    pub left: KinkPath,
    pub right: KinkPath,
}

/// Descend from the outermost bond on the left whose kink still slides to the
/// center, mirror-paired with the corresponding bond on the right.
pub fn scan_ion_number(zigzag: &EquilibriumConfig, params: &PnScanParams) -> Result<PnScan> {
    let n = zigzag.len();
    let center = center_bond(n);
    let mut last_err = Error::KinkNotFormed { bond: 0 };
    for bond in 0..center {
        let seeded = match seed_offcenter_kink(zigzag, bond) {
            Ok(p) => p,
            Err(e) => {
                last_err = e;
                continue;
            }
        };
        let left = match adiabatic_descent(&seeded, &zigzag.trap, &params.descent) {
            Ok(p) => p,
            Err(e @ (Error::KinkEscaped { .. } | Error::KinkStuck { .. } | Error::KinkNotFormed { .. } | Error::NotOverdamped { .. })) => {
                last_err = e;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mirror_bond = n - 2 - bond;
        let right_seed = seed_offcenter_kink(zigzag, mirror_bond)?;
        let right = adiabatic_descent(&right_seed, &zigzag.trap, &params.descent)?;
        let profile = pn_profile(&left, &right, n, params.grid_points)?;
        return Ok(PnScan { n_ions: n, profile, start_bond: bond, left, right });
    }
    Err(last_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
}

impl QuadraticFit {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

/// Least-squares `a x^2 + b x + c`; `None` with fewer than three points.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Option<QuadraticFit> {
    if points.len() < 3 {
        return None;
    }
    // Center x for conditioning.
    let xm = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for &(x, y) in points {
        let u = x - xm;
        let row = nalgebra::Vector3::new(u * u, u, 1.0);
        ata += row * row.transpose();
        aty += row * y;
    }
    let sol = ata.lu().solve(&aty)?;
    let (p, q, r) = (sol[0], sol[1], sol[2]);
    // Back to the original variable.
    let a = p;
    let b = q - 2.0 * p * xm;
    let c = p * xm * xm - q * xm + r;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - ym).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|&(x, y)| (y - ((a * x + b) * x + c)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(QuadraticFit { a, b, c, r_squared })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarrierSweep {
    /// `(N, barrier)` in reduced energy units.
    pub barriers: Vec<(usize, f64)>,
    /// Ion numbers whose scan failed, with the reason.
    pub failures: Vec<(usize, String)>,
    pub fit: Option<QuadraticFit>,
}

/// Barrier height for each ion number, run in parallel, plus a quadratic fit.
pub fn barrier_sweep(ion_numbers: &[usize], trap: &ScaledTrap, params: &PnScanParams) -> BarrierSweep {
    let results: Vec<(usize, Result<f64>)> = ion_numbers
        .par_iter()
        .map(|&n| {
            let r = statics::relax_scaled(&statics::chain_guess(n, 0x5eed), trap, &statics::RelaxOptions::default())
                .and_then(|zz| scan_ion_number(&zz, params))
                .map(|s| s.profile.barrier_height);
            (n, r)
        })
        .collect();
    let mut barriers = Vec::new();
    let mut failures = Vec::new();
    for (n, r) in results {
        match r {
            Ok(b) => barriers.push((n, b)),
            Err(e) => failures.push((n, e.to_string())),
        }
    }
    let pts: Vec<(f64, f64)> = barriers.iter().map(|&(n, b)| (n as f64, b)).collect();
    BarrierSweep { fit: fit_quadratic(&pts), barriers, failures }
}

/// CSV `kink_position_um,energy_over_kB_TD` on the profile grid.
pub fn write_profile_csv<W: Write>(profile: &PnProfile, units: &UnitScale, mut out: W) -> Result<()> {
    let kt = units.doppler_energy();
    writeln!(out, "kink_position_um,energy_over_kB_TD")?;
    for (x, e) in profile.positions.iter().zip(&profile.energies) {
        writeln!(out, "{:.6},{:.9}", units.length_to_si(*x) * 1e6, e / kt)?;
    }
    Ok(())
}

/// CSV `N,barrier_over_kB_TD` of the successful ion numbers.
pub fn write_sweep_csv<W: Write>(sweep: &BarrierSweep, units: &UnitScale, mut out: W) -> Result<()> {
    let kt = units.doppler_energy();
    writeln!(out, "N,barrier_over_kB_TD")?;
    for &(n, b) in &sweep.barriers {
        writeln!(out, "{n},{:.9}", b / kt)?;
    }
    Ok(())
}

/// Quadratic `a N^2 + b N + c` of the barrier in units of `k_B T_D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFitRecord {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
    #[serde(rename = "excluded_N")]
    pub excluded_n: Vec<usize>,
}

impl SweepFitRecord {
    pub fn new(sweep: &BarrierSweep, units: &UnitScale) -> Option<Self> {
        let kt = units.doppler_energy();
        let fit = sweep.fit?;
        Some(SweepFitRecord {
            a: fit.a / kt,
            b: fit.b / kt,
            c: fit.c / kt,
            r_squared: fit.r_squared,
            excluded_n: sweep.failures.iter().map(|f| f.0).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(points: &[(f64, f64)]) -> KinkPath {
        KinkPath {
            samples: points
                .iter()
                .map(|&(x, e)| PathSample { time: 0.0, kink_position: x, lattice_position: x / 0.2, potential_energy: e, kinetic_energy: 0.0 })
                .collect(),
            final_positions: Vec::new(),
            params: DescentParams::default(),
            trimmed: 0,
        }
    }

    #[test]
    fn quadratic_fit_is_exact_on_a_parabola() {
        let pts: Vec<(f64, f64)> = (40..=56).map(|n| (n as f64, 0.5 * (n * n) as f64 - 3.0 * n as f64 + 7.0)).collect();
        let fit = fit_quadratic(&pts).unwrap();
        assert!((fit.a - 0.5).abs() < 1e-9 && (fit.b + 3.0).abs() < 1e-6 && (fit.c - 7.0).abs() < 1e-4);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_quadratic(&pts[..2]).is_none());
    }

    #[test]
    fn symmetric_paths_give_zero_asymmetry() {
        let right: Vec<(f64, f64)> = (0..=20).rev().map(|k| (0.05 * k as f64, 2.0 * (0.05 * k as f64).powi(2) + 1.0)).collect();
        let left: Vec<(f64, f64)> = right.iter().map(|&(x, e)| (-x, e)).collect();
        let p = pn_profile(&path(&left), &path(&right), 44, 41).unwrap();
        assert_eq!(p.positions.len(), 41);
        assert!(p.asymmetry < 1e-12);
        assert!((p.barrier_height - 2.0).abs() < 1e-12);
        assert!(p.ripple < 1e-12);
        assert!(p.energies[20].abs() < 1e-12);
    }

    #[test]
    fn descent_not_reaching_center_is_rejected() {
        let far = path(&[(-1.0, 2.0), (-0.8, 1.0)]);
        let near = path(&[(1.0, 2.0), (0.0, 0.0)]);
        assert!(matches!(pn_profile(&far, &near, 44, 21), Err(Error::InsufficientOverlap)));
    }

    #[test]
    fn mirrored_path_flips_positions() {
        let p = path(&[(-0.6, 1.0), (-0.1, 0.1)]).mirrored();
        assert_eq!(p.samples[0].kink_position, 0.6);
        assert_eq!(p.samples[1].lattice_position, 0.5);
    }

    #[test]
    fn monotone_filter_drops_backtracking() {
        let mut s = path(&[(-1.0, 3.0), (-0.5, 2.0), (-0.7, 2.5), (-0.2, 1.0)]).samples;
        monotone_toward_center(&mut s);
        let xs: Vec<f64> = s.iter().map(|p| p.kink_position).collect();
        assert_eq!(xs, vec![-1.0, -0.5, -0.2]);
    }

    #[test]
    fn overdamping_is_relative_to_released_energy() {
        let mut p = path(&[(-1.0, 10.0), (0.0, 0.0)]).samples;
        p[0].kinetic_energy = 5e-3;
        assert!(check_overdamped(&p, 1e-3).is_ok());
        p[0].kinetic_energy = 2e-2;
        assert!(matches!(check_overdamped(&p, 1e-3), Err(Error::NotOverdamped { .. })));
    }

    #[test]
    fn profile_csv_layout() {
        let right: Vec<(f64, f64)> = (0..=4).rev().map(|k| (0.1 * k as f64, (0.1 * k as f64).powi(2))).collect();
        let left: Vec<(f64, f64)> = right.iter().map(|&(x, e)| (-x, e)).collect();
        let p = pn_profile(&path(&left), &path(&right), 44, 5).unwrap();
        let units = UnitScale::new(&crate::model::SpeciesConfig::magnesium24(), crate::model::DEFAULT_OMEGA_X);
        let mut buf = Vec::new();
        write_profile_csv(&p, &units, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kink_position_um,energy_over_kB_TD");
        assert_eq!(lines.len(), 6);
        assert!(lines[3].starts_with("0.000000,0.0"));
    }
}
