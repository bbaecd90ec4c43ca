//! Forces, velocity-Verlet integration and laser-cooling models for N ions.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ScaledLaser, ScaledTrap, UnitScale};
use crate::potential::{self, Vec3, COINCIDENCE_THRESHOLD};

/// Minimum number of integration steps per RF period.
pub const STEPS_PER_RF_PERIOD: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub time: f64,
}

impl SystemState {
    pub fn new(positions: Vec<Vec3>, velocities: Vec<Vec3>, time: f64) -> Result<Self> {
        let s = SystemState { positions, velocities, time };
        s.validate()?;
        Ok(s)
    }

    pub fn at_rest(positions: Vec<Vec3>) -> Self {
        let n = positions.len();
        SystemState { positions, velocities: vec![Vec3::zeros(); n], time: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::InvalidParameter("state needs at least one ion".into()));
        }
        if self.positions.len() != self.velocities.len() {
            return Err(Error::InvalidParameter("positions and velocities differ in length".into()));
        }
        for i in 0..self.positions.len() {
            for j in (i + 1)..self.positions.len() {
                let d = (self.positions[i] - self.positions[j]).norm();
                if d <= COINCIDENCE_THRESHOLD {
                    return Err(Error::CoincidentIons { i, j, distance: d });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.velocities.iter().map(|v| v.norm_squared()).sum::<f64>()
    }

    /// Kinetic temperature `2 E_kin / (3 N)` in reduced energy units.
    pub fn kinetic_temperature(&self) -> f64 {
        2.0 * self.kinetic_energy() / (3.0 * self.len() as f64)
    }

    fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|v| v.iter().all(|c| c.is_finite()))
    }
}

/// Potential plus kinetic energy using the trap curvature at time `state.time`.
pub fn total_energy(state: &SystemState, trap: &ScaledTrap) -> Result<f64> {
    let curv = trap.curvature_at(state.time);
    Ok(potential::potential_energy(&state.positions, &curv)? + state.kinetic_energy())
}

/// Trap plus Coulomb force on every ion at time `t`.
pub fn total_force(state: &SystemState, trap: &ScaledTrap, t: f64) -> Result<Vec<Vec3>> {
    potential::forces(&state.positions, &trap.curvature_at(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoolingParams {
    None,
    /// Force `-gamma m v` on every ion.
    ViscousDamping { gamma: f64 },
    /// Saturated two-level radiation pressure along the beam.
    DopplerScattering { laser: ScaledLaser, recoil: bool },
}

impl CoolingParams {
    pub fn validate(&self) -> Result<()> {
        match self {
            CoolingParams::ViscousDamping { gamma } if !(*gamma >= 0.0) => {
                Err(Error::InvalidParameter(format!("damping rate must be >= 0, got {gamma}")))
            }
            CoolingParams::DopplerScattering { laser, .. } if !(laser.saturation >= 0.0) => {
                Err(Error::InvalidParameter("saturation must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

#[inline]
fn project(d: &[f64; 3], v: &Vec3) -> f64 {
    d[0] * v.x + d[1] * v.y + d[2] * v.z
}

/// Deterministic cooling force on each ion. Stochastic recoil is handled
/// separately by [`recoil_kicks`].
pub fn cooling_force(velocities: &[Vec3], params: &CoolingParams) -> Vec<Vec3> {
    match params {
        CoolingParams::None => vec![Vec3::zeros(); velocities.len()],
        CoolingParams::ViscousDamping { gamma } => velocities.iter().map(|v| -v * *gamma).collect(),
        CoolingParams::DopplerScattering { laser, .. } => {
            let dir = Vec3::from(laser.direction);
            velocities
                .iter()
                .map(|v| dir * (laser.recoil * laser.scattering_rate(project(&laser.direction, v))))
                .collect()
        }
    }
}

/// Velocity damping coefficient of the Doppler force about `v = 0`, i.e.
/// `-dF/dv` along the beam (positive for red detuning).
pub fn doppler_damping_coefficient(laser: &ScaledLaser) -> f64 {
    let s = laser.saturation;
    let delta = 2.0 * laser.detuning / laser.linewidth;
    let denom = 1.0 + s + delta * delta;
    -2.0 * laser.recoil * laser.wavenumber * s * delta / (denom * denom)
}

/// Momentum kicks from photon scattering over an interval `dt`: shot noise of the
/// absorbed momentum along the beam plus one recoil of `hbar k` in a uniformly
/// random direction per emitted photon.
pub fn recoil_kicks<R: Rng + ?Sized>(velocities: &[Vec3], laser: &ScaledLaser, dt: f64, rng: &mut R) -> Vec<Vec3> {
    let dir = Vec3::from(laser.direction);
    velocities
        .iter()
        .map(|v| {
            let mean = laser.scattering_rate(project(&laser.direction, v)) * dt;
            if mean <= 0.0 {
                return Vec3::zeros();
            }
            let count = Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0) as u64;
            let mut kick = dir * ((count as f64 - mean) * laser.recoil);
            for _ in 0..count {
                kick += random_unit(rng) * laser.recoil;
            }
            kick
        })
        .collect()
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Largest admissible time step for a trap: a fiftieth of the RF period when the
/// drive is resolved explicitly, unbounded otherwise.
pub fn max_timestep(trap: &ScaledTrap) -> f64 {
    match &trap.rf {
        Some(rf) => rf.period() / STEPS_PER_RF_PERIOD,
        None => f64::INFINITY,
    }
}

fn check_timestep(trap: &ScaledTrap, dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let max = max_timestep(trap);
    if dt > max * (1.0 + 1e-12) {
        return Err(Error::TimestepTooLarge { dt, max });
    }
    Ok(())
}

/// One plain velocity-Verlet step without cooling.
pub fn step_verlet(state: &SystemState, trap: &ScaledTrap, dt: f64) -> Result<SystemState> {
    check_timestep(trap, dt)?;
    let mut s = state.clone();
    let f = total_force(&s, trap, s.time)?;
    verlet_core(&mut s, f, trap, dt, &CoolingParams::None)?;
    Ok(s)
}

/// Advances `state` by `dt`, returning the force at the new position.
fn verlet_core(state: &mut SystemState, force: Vec<Vec3>, trap: &ScaledTrap, dt: f64, cooling: &CoolingParams) -> Result<Vec<Vec3>> {
    let half = 0.5 * dt;
    match cooling {
        CoolingParams::ViscousDamping { gamma } => {
            let decay = (-0.5 * gamma * dt).exp();
            for (v, f) in state.velocities.iter_mut().zip(&force) {
                *v = *v * decay + f * half;
            }
        }
        CoolingParams::DopplerScattering { .. } => {
            let c = cooling_force(&state.velocities, cooling);
            for ((v, f), c) in state.velocities.iter_mut().zip(&force).zip(&c) {
                *v += (f + c) * half;
            }
        }
        CoolingParams::None => {
            for (v, f) in state.velocities.iter_mut().zip(&force) {
                *v += f * half;
            }
        }
    }
    for (x, v) in state.positions.iter_mut().zip(&state.velocities) {
        *x += v * dt;
    }
    state.time += dt;
    let new_force = total_force(state, trap, state.time)?;
    match cooling {
        CoolingParams::ViscousDamping { gamma } => {
            let decay = (-0.5 * gamma * dt).exp();
            for (v, f) in state.velocities.iter_mut().zip(&new_force) {
                *v = (*v + f * half) * decay;
            }
        }
        CoolingParams::DopplerScattering { .. } => {
            let c = cooling_force(&state.velocities, cooling);
            for ((v, f), c) in state.velocities.iter_mut().zip(&new_force).zip(&c) {
                *v += (f + c) * half;
            }
        }
        CoolingParams::None => {
            for (v, f) in state.velocities.iter_mut().zip(&new_force) {
                *v += f * half;
            }
        }
    }
    Ok(new_force)
}

/// Stateful integrator that caches the force between steps and lets the cooling
/// model change from step to step.
pub struct Integrator<'a> {
    pub state: SystemState,
    trap: &'a ScaledTrap,
    dt: f64,
    force: Vec<Vec3>,
}

impl<'a> Integrator<'a> {
    pub fn new(state: SystemState, trap: &'a ScaledTrap, dt: f64) -> Result<Self> {
        check_timestep(trap, dt)?;
        state.validate()?;
        let force = total_force(&state, trap, state.time)?;
        Ok(Integrator { state, trap, dt, force })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step<R: Rng + ?Sized>(&mut self, cooling: &CoolingParams, rng: &mut R) -> Result<()> {
        let force = std::mem::take(&mut self.force);
        self.force = verlet_core(&mut self.state, force, self.trap, self.dt, cooling)?;
        if let CoolingParams::DopplerScattering { laser, recoil: true } = cooling {
            let kicks = recoil_kicks(&self.state.velocities, laser, self.dt, rng);
            for (v, k) in self.state.velocities.iter_mut().zip(kicks) {
                *v += k;
            }
        }
        if !self.state.is_finite() {
            return Err(Error::NonFinite { time: self.state.time });
        }
        Ok(())
    }

    pub fn into_state(self) -> SystemState {
        self.state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<SystemState>,
    pub dt: f64,
    pub stride: usize,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        match (self.snapshots.first(), self.snapshots.last()) {
            (Some(a), Some(b)) => b.time - a.time,
            _ => 0.0,
        }
    }

    pub fn sample_interval(&self) -> f64 {
        self.dt * self.stride as f64
    }

    /// Concatenate another trajectory recorded with the same sampling.
    pub fn extend(&mut self, other: &Trajectory) {
        self.snapshots.extend(other.snapshots.iter().cloned());
    }

    /// CSV rows `step,time,ion_index,x,y,z,vx,vy,vz` in SI units.
    pub fn write_csv<W: Write>(&self, units: &UnitScale, mut out: W) -> Result<()> {
        writeln!(out, "step,time,ion_index,x,y,z,vx,vy,vz")?;
        let l = units.length;
        let v = units.velocity();
        for (k, s) in self.snapshots.iter().enumerate() {
            let step = k * self.stride;
            let t = s.time * units.time;
            for (i, (r, u)) in s.positions.iter().zip(&s.velocities).enumerate() {
                writeln!(
                    out,
                    "{step},{t:.12e},{i},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                    r.x * l,
                    r.y * l,
                    r.z * l,
                    u.x * v,
                    u.y * v,
                    u.z * v
                )?;
            }
        }
        Ok(())
    }
}

/// Integrates for `duration`, recording every `stride` steps. Deterministic given
/// the inputs and the RNG state.
pub fn simulate<R: Rng + ?Sized>(
    state: &SystemState,
    trap: &ScaledTrap,
    cooling: &CoolingParams,
    duration: f64,
    dt: f64,
    stride: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    cooling.validate()?;
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    if !(duration >= 0.0) {
        return Err(Error::InvalidParameter(format!("duration must be >= 0, got {duration}")));
    }
    let mut integ = Integrator::new(state.clone(), trap, dt)?;
    let steps = (duration / dt).round() as usize;
    let mut snapshots = Vec::with_capacity(steps / stride + 1);
    snapshots.push(integ.state.clone());
    for k in 1..=steps {
        integ.step(cooling, rng)?;
        if k % stride == 0 {
            snapshots.push(integ.state.clone());
        }
    }
    Ok(Trajectory { snapshots, dt, stride, seed: None })
}

pub fn simulate_seeded(
    state: &SystemState,
    trap: &ScaledTrap,
    cooling: &CoolingParams,
    duration: f64,
    dt: f64,
    stride: usize,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = simulate(state, trap, cooling, duration, dt, stride, &mut rng)?;
    traj.seed = Some(seed);
    Ok(traj)
}

/// Positions averaged over whole RF periods, starting from `state`, with no
/// cooling. For a harmonic trap the average is taken over one axial period.
pub fn period_averaged_positions(state: &SystemState, trap: &ScaledTrap, dt: f64, periods: usize) -> Result<Vec<Vec3>> {
    let period = trap.rf.map_or(std::f64::consts::TAU, |rf| rf.period());
    let steps_per_period = (period / dt).round().max(1.0) as usize;
    let dt = period / steps_per_period as f64;
    let mut integ = Integrator::new(state.clone(), trap, dt)?;
    let mut acc = vec![Vec3::zeros(); state.len()];
    let total = steps_per_period * periods.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..total {
        integ.step(&CoolingParams::None, &mut rng)?;
        for (a, r) in acc.iter_mut().zip(&integ.state.positions) {
            *a += r;
        }
    }
    Ok(acc.into_iter().map(|a| a / total as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LaserConfig, SpeciesConfig, DEFAULT_OMEGA_X};

    fn laser() -> ScaledLaser {
        let sp = SpeciesConfig::magnesium24();
        let units = UnitScale::new(&sp, DEFAULT_OMEGA_X);
        ScaledLaser::new(&LaserConfig::default_for(&sp), &sp, &units)
    }

    #[test]
    fn single_ion_at_origin_feels_no_force() {
        let s = SystemState::at_rest(vec![Vec3::zeros()]);
        let f = total_force(&s, &ScaledTrap::harmonic(10.0, 10.5), 0.0).unwrap();
        assert_eq!(f[0], Vec3::zeros());
    }

    #[test]
    fn viscous_force_at_rest_is_zero() {
        let f = cooling_force(&[Vec3::zeros(); 3], &CoolingParams::ViscousDamping { gamma: 0.7 });
        assert!(f.iter().all(|v| *v == Vec3::zeros()));
        let f = cooling_force(&[Vec3::new(1.0, -2.0, 0.5)], &CoolingParams::ViscousDamping { gamma: 0.5 });
        assert_eq!(f[0], Vec3::new(-0.5, 1.0, -0.25));
    }

    #[test]
    fn doppler_force_at_rest() {
        let l = laser();
        let f = cooling_force(&[Vec3::zeros()], &CoolingParams::DopplerScattering { laser: l, recoil: false });
        let expected = l.recoil * l.linewidth / 2.0 * 0.2 / (1.0 + 0.2 + 4.0);
        assert!((f[0].norm() / expected - 1.0).abs() < 1e-12);
        let dir = Vec3::from(l.direction);
        assert!((f[0].normalize() - dir).norm() < 1e-12);
    }

    #[test]
    fn doppler_damping_matches_finite_difference() {
        let l = laser();
        let p = CoolingParams::DopplerScattering { laser: l, recoil: false };
        let dir = Vec3::from(l.direction);
        let h = 1e-5;
        let fp = cooling_force(&[dir * h], &p)[0].dot(&dir);
        let fm = cooling_force(&[-dir * h], &p)[0].dot(&dir);
        let slope = -(fp - fm) / (2.0 * h);
        let beta = doppler_damping_coefficient(&l);
        assert!(beta > 0.0);
        assert!((slope / beta - 1.0).abs() < 1e-6, "{slope} vs {beta}");
    }

    #[test]
    fn zero_duration_keeps_initial_snapshot() {
        let s = SystemState::at_rest(vec![Vec3::new(0.3, 0.0, 0.0)]);
        let t = simulate_seeded(&s, &ScaledTrap::harmonic(5.0, 6.0), &CoolingParams::None, 0.0, 0.01, 1, 1).unwrap();
        assert_eq!(t.snapshots.len(), 1);
        assert_eq!(t.snapshots[0], s);
    }

    #[test]
    fn timestep_cap_in_rf_mode() {
        use crate::model::{TrapConfig, TrapKind};
        let trap = TrapConfig::with_ratio(std::f64::consts::TAU * 610e3, 1.05, TrapKind::FullRf).unwrap();
        let s = SystemState::at_rest(vec![Vec3::new(0.1, 0.0, 0.0)]);
        let err = step_verlet(&s, trap.scaled(), 0.01).unwrap_err();
        assert!(matches!(err, Error::TimestepTooLarge { .. }));
        assert!(step_verlet(&s, trap.scaled(), trap.rf_period_scaled() / 60.0).is_ok());
    }

    #[test]
    fn coincident_state_rejected() {
        let e = SystemState::new(vec![Vec3::zeros(), Vec3::zeros()], vec![Vec3::zeros(); 2], 0.0).unwrap_err();
        assert!(matches!(e, Error::CoincidentIons { .. }));
    }
}
