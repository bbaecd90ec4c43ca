//! Crystallization of a hot cloud under laser cooling and the resulting kink
//! statistics versus ion number.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CoolingParams, Integrator, SystemState};
use crate::error::{Error, Result};
use crate::model::{ScaledLaser, ScaledTrap};
use crate::potential::Vec3;
use crate::statics::{self, Flip, RelaxOptions, StructureClass, StructureKind, Thresholds, SIGN_FRACTION};

/// Closest approach allowed between two ions of a freshly drawn cloud, as a
/// fraction of the mean axial spacing of the cold chain.
const MIN_SEPARATION_FRACTION: f64 = 0.25;

/// Half-length of the cold linear chain of `n` ions in an axial curvature `kx`,
/// found by Newton iteration on the one-dimensional equilibrium.
pub fn chain_half_length(n: usize, kx: f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let guess = (3.0 * nf * nf.ln().max(1.0) / kx).cbrt();
    let mut x: Vec<f64> = (0..n).map(|k| guess * (2.0 * k as f64 / (nf - 1.0) - 1.0)).collect();
    for _ in 0..100 {
        let mut g = DVector::<f64>::zeros(n);
        let mut h = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            g[i] += kx * x[i];
            h[(i, i)] += kx;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = x[i] - x[j];
                let ad = d.abs();
                g[i] -= d.signum() / (ad * ad);
                let c = 2.0 / (ad * ad * ad);
                h[(i, i)] += c;
                h[(i, j)] -= c;
            }
        }
        let Some(step) = h.cholesky().map(|c| c.solve(&g)) else { break };
        let longest = step.amax();
        let scale = if longest > 0.1 * guess { 0.1 * guess / longest } else { 1.0 };
        for i in 0..n {
            x[i] -= scale * step[i];
        }
        if longest < 1e-12 {
            break;
        }
    }
    0.5 * (x[n - 1] - x[0])
}

/// Semi-axes of the ellipsoid a cloud at thermal energy `kt` is drawn from: the
/// cold chain length plus the thermal excursion axially, the thermal excursion
/// radially.
pub fn cloud_semi_axes(n: usize, kt: f64, trap: &ScaledTrap) -> [f64; 3] {
    let c = trap.to_harmonic().curvature;
    let thermal = |k: f64| (3.0 * kt / k).sqrt();
    [chain_half_length(n, c[0]) + thermal(c[0]), thermal(c[1]), thermal(c[2])]
}

/// Hot cloud: positions uniform in the ellipsoid of [`cloud_semi_axes`] with a
/// minimum pair separation, velocities Maxwell-Boltzmann at `kt`.
pub fn random_cloud<R: Rng + ?Sized>(n: usize, kt: f64, trap: &ScaledTrap, rng: &mut R) -> Result<SystemState> {
    if !(kt > 0.0) || !kt.is_finite() {
        return Err(Error::InvalidParameter(format!("cloud temperature must be positive, got {kt}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("cloud needs at least one ion".into()));
    }
    let axes = cloud_semi_axes(n, kt, trap);
    let spacing = if n > 1 { 2.0 * chain_half_length(n, trap.to_harmonic().curvature[0]) / (n as f64 - 1.0) } else { 1.0 };
    let mut min_sep = MIN_SEPARATION_FRACTION * spacing;
    let mut positions: Vec<Vec3> = Vec::with_capacity(n);
    let mut rejected = 0usize;
    while positions.len() < n {
        let u = loop {
            let u = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if u.norm_squared() <= 1.0 {
                break u;
            }
        };
        let r = Vec3::new(u.x * axes[0], u.y * axes[1], u.z * axes[2]);
        if positions.iter().all(|p| (p - r).norm() >= min_sep) {
            positions.push(r);
        } else {
            rejected += 1;
            if rejected > 10_000 {
                // Tight ellipsoid: relax the exclusion rather than loop forever.
                min_sep *= 0.8;
                rejected = 0;
            }
        }
    }
    let normal = Normal::new(0.0, kt.sqrt()).expect("positive width");
    let velocities = (0..n).map(|_| Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng))).collect();
    SystemState::new(positions, velocities, 0.0)
}

/// Cooling protocol of one quench. Times in units of `1/omega_x`, temperatures in
/// units of the Doppler limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchSchedule {
    pub initial_temperature: f64,
    /// Viscous damping rises linearly from zero to `final_gamma` over this time.
    pub ramp_time: f64,
    pub final_gamma: f64,
    /// Doppler cooling after the ramp.
    pub settle_time: f64,
    /// Extra Doppler time granted if the crystal is not yet stationary.
    pub extra_time: f64,
    /// Photon recoil kicks during Doppler cooling.
    pub recoil: bool,
    pub crystal_temperature: f64,
    /// The structure class must not change over this window.
    pub stationary_window: f64,
    /// Time between structure checks.
    pub check_interval: f64,
    pub dt: f64,
}

impl Default for QuenchSchedule {
    fn default() -> Self {
        QuenchSchedule {
            initial_temperature: 50.0,
            ramp_time: 2000.0,
            final_gamma: 0.03,
            settle_time: 500.0,
            extra_time: 500.0,
            recoil: false,
            crystal_temperature: 2.0,
            stationary_window: 50.0,
            check_interval: 2.0,
            dt: 0.005,
        }
    }
}

impl QuenchSchedule {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_temperature", self.initial_temperature),
            ("ramp_time", self.ramp_time),
            ("dt", self.dt),
            ("check_interval", self.check_interval),
            ("crystal_temperature", self.crystal_temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("quench.{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("final_gamma", self.final_gamma),
            ("settle_time", self.settle_time),
            ("extra_time", self.extra_time),
            ("stationary_window", self.stationary_window),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("quench.{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Everything a quench needs besides the ion number and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchSetup {
    pub trap: ScaledTrap,
    pub laser: ScaledLaser,
    /// `k_B T_D` in reduced energy units.
    pub doppler_energy: f64,
    pub thresholds: Thresholds,
    pub schedule: QuenchSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub time: f64,
    /// Kinetic temperature over the Doppler limit.
    pub temperature: f64,
    pub kind: StructureKind,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub n_ions: usize,
    pub seed: u64,
    pub crystallized: bool,
    pub class: Option<StructureClass>,
    /// Signature flips of the relaxed final crystal.
    pub multiplicity: usize,
    pub kinks: Vec<Flip>,
    /// Relaxed final crystal, empty unless crystallized.
    pub final_positions: Vec<Vec3>,
    /// Potential energy of the relaxed crystal (reduced units).
    pub final_energy: Option<f64>,
    /// Largest multiplicity seen once the cloud had ordered.
    pub max_multiplicity: usize,
    pub final_temperature: f64,
    pub simulated_time: f64,
    pub history: Vec<HistoryPoint>,
}

fn temperature(state: &SystemState, kt_d: f64) -> f64 {
    state.kinetic_energy() / (1.5 * state.len() as f64) / kt_d
}

fn stationary(history: &[HistoryPoint], window: f64) -> bool {
    let Some(last) = history.last() else { return false };
    if last.time < window {
        return false;
    }
    history.iter().rev().take_while(|h| h.time >= last.time - window - 1e-9).all(|h| h.kind == last.kind)
}

/// Cool a random cloud of `n` ions and report the structure it freezes into.
/// A trial that never meets the temperature and stationarity criterion is
/// returned with `crystallized = false` rather than as an error.
pub fn quench_trial(n: usize, setup: &QuenchSetup, seed: u64) -> Result<TrialOutcome> {
    let sch = &setup.schedule;
    sch.validate()?;
    let kt_d = setup.doppler_energy;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let harmonic = setup.trap.to_harmonic();
    let cloud = random_cloud(n, sch.initial_temperature * kt_d, &harmonic, &mut rng)?;
    let mut integ = Integrator::new(cloud, &harmonic, sch.dt)?;
    let doppler = CoolingParams::DopplerScattering { laser: setup.laser, recoil: sch.recoil };
    let ramp_steps = (sch.ramp_time / sch.dt).round() as usize;
    let settle_steps = (sch.settle_time / sch.dt).round() as usize;
    let extra_steps = (sch.extra_time / sch.dt).round() as usize;
    let check_every = ((sch.check_interval / sch.dt).round() as usize).max(1);
    let mut history = Vec::new();
    let mut ordered = false;
    let mut max_multiplicity = 0;
    let mut crystallized = false;
    let total = ramp_steps + settle_steps + extra_steps;
    for step in 1..=total {
        let cooling = if step <= ramp_steps {
            CoolingParams::ViscousDamping { gamma: sch.final_gamma * step as f64 / ramp_steps as f64 }
        } else {
            doppler
        };
        integ.step(&cooling, &mut rng)?;
        if step % check_every != 0 {
            continue;
        }
        let state = &integ.state;
        let class = statics::classify_positions(&state.positions, &setup.thresholds);
        let multiplicity = if class.kind == StructureKind::Linear { 0 } else { statics::signature_flips(&state.positions, SIGN_FRACTION).len() };
        let t = temperature(state, kt_d);
        if !ordered && t < sch.crystal_temperature && matches!(class.kind, StructureKind::Zigzag | StructureKind::ThreeD) {
            ordered = true;
        }
        if ordered {
            max_multiplicity = max_multiplicity.max(multiplicity);
        }
        history.push(HistoryPoint { time: state.time, temperature: t, kind: class.kind, multiplicity });
        if step >= ramp_steps + settle_steps && t < sch.crystal_temperature && stationary(&history, sch.stationary_window) {
            crystallized = true;
            break;
        }
    }
    let state = integ.into_state();
    let final_temperature = temperature(&state, kt_d);
    let simulated_time = state.time;
    if !crystallized {
        return Ok(TrialOutcome {
            n_ions: n,
            seed,
            crystallized,
            class: None,
            multiplicity: 0,
            kinks: Vec::new(),
            final_positions: Vec::new(),
            final_energy: None,
            max_multiplicity,
            final_temperature,
            simulated_time,
            history,
        });
    }
    let relaxed = statics::relax_scaled(&state.positions, &harmonic, &RelaxOptions::default())?;
    let class = statics::classify(&relaxed, &setup.thresholds);
    // A linear chain has no transverse signature to flip.
    let kinks = if class.kind == StructureKind::Linear { Vec::new() } else { statics::signature_flips(&relaxed.positions, SIGN_FRACTION) };
    let max_multiplicity = max_multiplicity.max(kinks.len());
    Ok(TrialOutcome {
        n_ions: n,
        seed,
        crystallized,
        class: Some(class),
        multiplicity: kinks.len(),
        kinks,
        final_energy: Some(relaxed.potential_energy),
        final_positions: relaxed.positions,
        max_multiplicity,
        final_temperature,
        simulated_time,
        history,
    })
}

/// Per-trial seed: the base seed mixed with a hash of `(n, trial)`.
pub fn trial_seed(base_seed: u64, n: usize, trial: usize) -> u64 {
    base_seed ^ splitmix64(((n as u64) << 32) ^ trial as u64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceRow {
    pub n_ions: usize,
    pub trials: usize,
    pub zigzag: usize,
    pub one_kink: usize,
    pub multi_kink: usize,
    pub failed: usize,
}

impl OccurrenceRow {
    fn fraction(&self, count: usize) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            count as f64 / self.trials as f64
        }
    }

    pub fn p_zigzag(&self) -> f64 {
        self.fraction(self.zigzag)
    }

    pub fn p_one_kink(&self) -> f64 {
        self.fraction(self.one_kink)
    }

    pub fn p_multi(&self) -> f64 {
        self.fraction(self.multi_kink)
    }

    pub fn p_failed(&self) -> f64 {
        self.fraction(self.failed)
    }

    /// One-sigma binomial error of a fraction over all trials.
    pub fn sigma(&self, p: f64) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            (p * (1.0 - p) / self.trials as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccurrenceTable {
    pub rows: Vec<OccurrenceRow>,
}

impl OccurrenceTable {
    pub fn from_outcomes(ion_numbers: &[usize], outcomes: &[TrialOutcome]) -> Self {
        let rows = ion_numbers
            .iter()
            .map(|&n| {
                let mut row = OccurrenceRow { n_ions: n, trials: 0, zigzag: 0, one_kink: 0, multi_kink: 0, failed: 0 };
                for o in outcomes.iter().filter(|o| o.n_ions == n) {
                    row.trials += 1;
                    match (o.crystallized, o.multiplicity) {
                        (false, _) => row.failed += 1,
                        (true, 0) => row.zigzag += 1,
                        (true, 1) => row.one_kink += 1,
                        (true, _) => row.multi_kink += 1,
                    }
                }
                row
            })
            .collect();
        OccurrenceTable { rows }
    }

    /// `N,trials,p_zigzag,p_one_kink,p_multi,p_failed,sigma_one_kink`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "N,trials,p_zigzag,p_one_kink,p_multi,p_failed,sigma_one_kink")?;
        for r in &self.rows {
            let p1 = r.p_one_kink();
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.n_ions,
                r.trials,
                r.p_zigzag(),
                p1,
                r.p_multi(),
                r.p_failed(),
                r.sigma(p1)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrialLogLine {
    n_ions: usize,
    seed: u64,
    outcome: &'static str,
    multiplicity: usize,
    max_multiplicity: usize,
    kink_positions: Vec<f64>,
    kink_lattice_positions: Vec<f64>,
    final_temperature: f64,
}

/// One JSON object per trial: seed, outcome, kink positions (reduced length).
pub fn write_trial_log<W: Write>(outcomes: &[TrialOutcome], mut out: W) -> Result<()> {
    for o in outcomes {
        let outcome = match (o.crystallized, o.multiplicity) {
            (false, _) => "failed",
            (true, 0) => "zigzag",
            (true, 1) => "one_kink",
            (true, _) => "multi_kink",
        };
        let line = TrialLogLine {
            n_ions: o.n_ions,
            seed: o.seed,
            outcome,
            multiplicity: o.multiplicity,
            max_multiplicity: o.max_multiplicity,
            kink_positions: o.kinks.iter().map(|k| k.axial_position).collect(),
            kink_lattice_positions: o.kinks.iter().map(|k| k.lattice_position).collect(),
            final_temperature: o.final_temperature,
        };
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Run `trials_per_n` quenches for every ion number in parallel. Trials that
/// error out are recorded as failed.
pub fn kink_statistics(
    ion_numbers: &[usize],
    trials_per_n: usize,
    base_seed: u64,
    setup: &QuenchSetup,
) -> Result<(OccurrenceTable, Vec<TrialOutcome>)> {
    if trials_per_n == 0 {
        return Err(Error::InvalidParameter("trials_per_n must be at least 1".into()));
    }
    setup.schedule.validate()?;
    let jobs: Vec<(usize, usize)> = ion_numbers.iter().flat_map(|&n| (0..trials_per_n).map(move |t| (n, t))).collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(n, t)| {
            let seed = trial_seed(base_seed, n, t);
            quench_trial(n, setup, seed).unwrap_or_else(|_| TrialOutcome {
                n_ions: n,
                seed,
                crystallized: false,
                class: None,
                multiplicity: 0,
                kinks: Vec::new(),
                final_positions: Vec::new(),
                final_energy: None,
                max_multiplicity: 0,
                final_temperature: f64::NAN,
                simulated_time: 0.0,
                history: Vec::new(),
            })
        })
        .collect();
    Ok((OccurrenceTable::from_outcomes(ion_numbers, &outcomes), outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LaserConfig, SpeciesConfig, UnitScale, DEFAULT_OMEGA_X};

    fn trap() -> ScaledTrap {
        ScaledTrap::harmonic(10.9, 11.4)
    }

    fn setup() -> QuenchSetup {
        let species = SpeciesConfig::magnesium24();
        let units = UnitScale::new(&species, DEFAULT_OMEGA_X);
        QuenchSetup {
            trap: trap(),
            laser: ScaledLaser::new(&LaserConfig::default_for(&species), &species, &units),
            doppler_energy: units.doppler_energy(),
            thresholds: Thresholds::default_for(&units),
            schedule: QuenchSchedule::default(),
        }
    }

    fn outcome(n: usize, crystallized: bool, multiplicity: usize) -> TrialOutcome {
        TrialOutcome {
            n_ions: n,
            seed: 0,
            crystallized,
            class: None,
            multiplicity,
            kinks: Vec::new(),
            final_positions: Vec::new(),
            final_energy: None,
            max_multiplicity: multiplicity,
            final_temperature: 1.0,
            simulated_time: 0.0,
            history: Vec::new(),
        }
    }

    #[test]
    fn chain_length_matches_small_crystals() {
        assert!((chain_half_length(2, 1.0) - 0.5 * 2f64.cbrt()).abs() < 1e-12);
        assert!((chain_half_length(3, 1.0) - 1.25f64.cbrt()).abs() < 1e-12);
        // Scaling x -> x k^(-1/3) under a stiffer trap.
        assert!((chain_half_length(10, 8.0) - 0.5 * chain_half_length(10, 1.0)).abs() < 1e-10);
    }

    #[test]
    fn cloud_is_inside_its_ellipsoid_and_reproducible() {
        let kt = 0.1;
        let axes = cloud_semi_axes(20, kt, &trap());
        let a = random_cloud(20, kt, &trap(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = random_cloud(20, kt, &trap(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        for r in &a.positions {
            let s = (r.x / axes[0]).powi(2) + (r.y / axes[1]).powi(2) + (r.z / axes[2]).powi(2);
            assert!(s <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn cold_single_ion_sits_near_the_origin() {
        let s = random_cloud(1, 1e-12, &trap(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(s.positions[0].norm() < 1e-5);
        assert!(s.velocities[0].norm() < 1e-5);
    }

    #[test]
    fn cloud_velocities_obey_equipartition() {
        let kt = 0.3;
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws = 10_000;
        let mean: f64 = (0..draws).map(|_| random_cloud(n, kt, &trap(), &mut rng).unwrap().kinetic_energy()).sum::<f64>() / draws as f64;
        let expected = 1.5 * n as f64 * kt;
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn invalid_schedules_are_config_errors() {
        let bad = QuenchSchedule { dt: 0.0, ..QuenchSchedule::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = QuenchSchedule { final_gamma: -1.0, ..QuenchSchedule::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        assert!(QuenchSchedule::default().validate().is_ok());
    }

    #[test]
    fn occurrence_counts_and_errors() {
        let outcomes = vec![outcome(30, true, 0), outcome(30, true, 1), outcome(30, true, 2), outcome(30, false, 0), outcome(44, true, 1)];
        let t = OccurrenceTable::from_outcomes(&[30, 44], &outcomes);
        let r = &t.rows[0];
        assert_eq!((r.trials, r.zigzag, r.one_kink, r.multi_kink, r.failed), (4, 1, 1, 1, 1));
        assert!((r.p_zigzag() + r.p_one_kink() + r.p_multi() + r.p_failed() - 1.0).abs() < 1e-12);
        assert!((r.sigma(0.25) - (0.25f64 * 0.75 / 4.0).sqrt()).abs() < 1e-15);
        let single = &t.rows[1];
        assert_eq!(single.p_one_kink(), 1.0);
        assert_eq!(single.sigma(single.p_one_kink()), 0.0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("N,trials,p_zigzag,p_one_kink,p_multi,p_failed,sigma_one_kink"));
        assert_eq!(text.lines().nth(2), Some("44,1,0.000000,1.000000,0.000000,0.000000,0.000000"));
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..50).flat_map(|n| (0..50).map(move |t| trial_seed(9, n, t))).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 2500);
    }

    #[test]
    fn small_quench_is_deterministic_and_crystallizes() {
        let s = setup();
        let a = quench_trial(4, &s, 17).unwrap();
        let b = quench_trial(4, &s, 17).unwrap();
        assert!(a.crystallized);
        assert_eq!(a.class.unwrap().kind, StructureKind::Linear);
        assert_eq!(a.multiplicity, 0);
        assert!(a.final_temperature < s.schedule.crystal_temperature);
        assert_eq!(a.final_positions, b.final_positions);
        assert_eq!(a.history.len(), b.history.len());
        let mut log = Vec::new();
        write_trial_log(&[a], &mut log).unwrap();
        let line: serde_json::Value = serde_json::from_slice(&log).unwrap();
        assert_eq!(line["outcome"], "zigzag");
        assert_eq!(line["seed"], 17);
    }
}
