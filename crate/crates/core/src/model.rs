//! Physical constants, species/trap/laser configuration and the reduced unit system.
//!
//! Everything downstream works in reduced units: ion mass `m = 1`, axial secular
//! frequency `omega_x = 1` and Coulomb constant `q^2 / (4 pi eps0) = 1`. The length
//! unit is therefore `l^3 = q^2 / (4 pi eps0 m omega_x^2)`, the time unit `1/omega_x`
//! and the energy unit `m omega_x^2 l^2`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const AMU: f64 = 1.660_539_066_60e-27;

/// Largest radial Mathieu parameter accepted for an RF-driven trap.
pub const MAX_Q_RADIAL: f64 = 0.9;

/// Number of RK4 substeps per RF period in the Floquet monodromy integration.
const FLOQUET_STEPS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciesConfig {
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
    /// m
    pub transition_wavelength: f64,
    /// rad/s
    pub natural_linewidth: f64,
}

impl SpeciesConfig {
    pub fn new(mass: f64, charge: f64, transition_wavelength: f64, natural_linewidth: f64) -> Result<Self> {
        let s = SpeciesConfig { mass, charge, transition_wavelength, natural_linewidth };
        s.validate()?;
        Ok(s)
    }

    /// Singly charged magnesium-24 driven on the 280 nm S1/2 - P3/2 line.
    pub fn magnesium24() -> Self {
        SpeciesConfig {
            mass: 24.0 * AMU,
            charge: ELEMENTARY_CHARGE,
            transition_wavelength: 280e-9,
            natural_linewidth: TAU * 42e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {}", self.mass)));
        }
        if self.charge == 0.0 || !self.charge.is_finite() {
            return Err(Error::InvalidParameter("charge must be non-zero".into()));
        }
        if !(self.natural_linewidth > 0.0) {
            return Err(Error::InvalidParameter("natural linewidth must be positive".into()));
        }
        if !(self.transition_wavelength > 0.0) {
            return Err(Error::InvalidParameter("transition wavelength must be positive".into()));
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.transition_wavelength
    }
}

impl Default for SpeciesConfig {
    fn default() -> Self {
        Self::magnesium24()
    }
}

/// Doppler cooling limit `hbar Gamma / (2 k_B)`, reached at detuning `Gamma / 2`.
pub fn doppler_limit(species: &SpeciesConfig) -> f64 {
    HBAR * species.natural_linewidth / (2.0 * K_B)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapKind {
    /// Ideal RF quadrupole plus static axial confinement, integrated in time.
    FullRf,
    /// Time-averaged (pseudopotential) harmonic confinement.
    Harmonic,
}

/// RF drive coefficients in reduced units. The force per unit mass along axis `i`
/// is `-(static_curvature[i] + rf_sign[i] * amplitude * cos(omega * t)) * r[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfDrive {
    pub omega: f64,
    pub amplitude: f64,
    pub static_curvature: [f64; 3],
}

impl RfDrive {
    pub const RF_SIGN: [f64; 3] = [0.0, 1.0, -1.0];

    /// Instantaneous curvature of the trap potential along each axis.
    #[inline]
    pub fn curvature_at(&self, t: f64) -> [f64; 3] {
        let c = self.amplitude * (self.omega * t).cos();
        [
            self.static_curvature[0],
            self.static_curvature[1] + c,
            self.static_curvature[2] - c,
        ]
    }

    /// Mathieu parameter `q = 2 A / Omega^2` of the radial motion.
    pub fn mathieu_q(&self) -> f64 {
        2.0 * self.amplitude / (self.omega * self.omega)
    }

    /// Mathieu parameter `a = 4 kappa / Omega^2` along an axis.
    pub fn mathieu_a(&self, axis: usize) -> f64 {
        4.0 * self.static_curvature[axis] / (self.omega * self.omega)
    }

    pub fn period(&self) -> f64 {
        TAU / self.omega
    }
}

/// Trap description in reduced units (`omega_x = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledTrap {
    /// Secular curvatures `(omega_i / omega_x)^2`.
    pub curvature: [f64; 3],
    pub rf: Option<RfDrive>,
}

impl ScaledTrap {
    pub fn harmonic(omega_y: f64, omega_z: f64) -> Self {
        ScaledTrap { curvature: [1.0, omega_y * omega_y, omega_z * omega_z], rf: None }
    }

    pub fn secular_frequencies(&self) -> [f64; 3] {
        self.curvature.map(f64::sqrt)
    }

    /// Curvature acting at time `t`; constant for harmonic traps.
    #[inline]
    pub fn curvature_at(&self, t: f64) -> [f64; 3] {
        match &self.rf {
            Some(rf) => rf.curvature_at(t),
            None => self.curvature,
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        self.rf.is_some()
    }

    /// The same trap with the RF drive replaced by its pseudopotential.
    pub fn to_harmonic(&self) -> Self {
        ScaledTrap { curvature: self.curvature, rf: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// rad/s
    pub rf_frequency: f64,
    /// rad/s
    pub omega_x: f64,
    /// rad/s
    pub omega_y: f64,
    /// rad/s
    pub omega_z: f64,
    pub kind: TrapKind,
    scaled: ScaledTrap,
}

/// Lowest-order estimate `2 sqrt(2) omega / Omega_rf` of the radial Mathieu `q`.
pub fn q_radial_estimate(omega_radial: f64, rf_frequency: f64) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * omega_radial / rf_frequency
}

/// Validate frequencies and build a trap. In `FullRf` mode the RF amplitude and the
/// static quadrupole coefficients are calibrated by single-ion Floquet analysis so
/// that the secular frequencies of the driven motion match the request.
pub fn make_trap(rf_frequency: f64, omega_x: f64, omega_y: f64, omega_z: f64, kind: TrapKind) -> Result<TrapConfig> {
    for (name, v) in [("rf_frequency", rf_frequency), ("omega_x", omega_x), ("omega_y", omega_y), ("omega_z", omega_z)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    let radial_min = omega_y.min(omega_z);
    if omega_x >= radial_min {
        return Err(Error::OrderingViolation { axial: omega_x, radial: radial_min });
    }
    let wy = omega_y / omega_x;
    let wz = omega_z / omega_x;
    let scaled = match kind {
        TrapKind::Harmonic => ScaledTrap::harmonic(wy, wz),
        TrapKind::FullRf => {
            let q = q_radial_estimate(omega_y.max(omega_z), rf_frequency);
            if q >= MAX_Q_RADIAL {
                return Err(Error::StabilityViolation { q, limit: MAX_Q_RADIAL });
            }
            let rf = calibrate_rf(rf_frequency / omega_x, wy, wz)?;
            ScaledTrap { curvature: [1.0, wy * wy, wz * wz], rf: Some(rf) }
        }
    };
    Ok(TrapConfig { rf_frequency, omega_x, omega_y, omega_z, kind, scaled })
}

impl TrapConfig {
    /// Trap at the default experimental operating point with the given anisotropy.
    pub fn with_ratio(omega_y: f64, ratio: f64, kind: TrapKind) -> Result<Self> {
        make_trap(DEFAULT_RF_FREQUENCY, DEFAULT_OMEGA_X, omega_y, ratio * omega_y, kind)
    }

    pub fn scaled(&self) -> &ScaledTrap {
        &self.scaled
    }

    pub fn anisotropy(&self) -> f64 {
        self.omega_z / self.omega_y
    }

    /// Same frequencies, other model kind.
    pub fn with_kind(&self, kind: TrapKind) -> Result<Self> {
        make_trap(self.rf_frequency, self.omega_x, self.omega_y, self.omega_z, kind)
    }

    /// RF period in reduced time units.
    pub fn rf_period_scaled(&self) -> f64 {
        TAU * self.omega_x / self.rf_frequency
    }
}

pub const DEFAULT_RF_FREQUENCY: f64 = TAU * 6.22e6;
pub const DEFAULT_OMEGA_X: f64 = TAU * 56e3;

/// Monodromy trace of `u'' = -(kappa + amp cos(omega t)) u` over one drive period.
fn monodromy_half_trace(kappa: f64, amp: f64, omega: f64) -> f64 {
    let period = TAU / omega;
    let h = period / FLOQUET_STEPS as f64;
    let accel = |t: f64, u: f64| -(kappa + amp * (omega * t).cos()) * u;
    // Columns of the fundamental matrix: (u, v) starting at (1,0) and (0,1).
    let mut cols = [[1.0_f64, 0.0], [0.0, 1.0]];
    for col in cols.iter_mut() {
        let (mut u, mut v) = (col[0], col[1]);
        for k in 0..FLOQUET_STEPS {
            let t = k as f64 * h;
            let k1u = v;
            let k1v = accel(t, u);
            let k2u = v + 0.5 * h * k1v;
            let k2v = accel(t + 0.5 * h, u + 0.5 * h * k1u);
            let k3u = v + 0.5 * h * k2v;
            let k3v = accel(t + 0.5 * h, u + 0.5 * h * k2u);
            let k4u = v + h * k3v;
            let k4v = accel(t + h, u + h * k3u);
            u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        *col = [u, v];
    }
    0.5 * (cols[0][0] + cols[1][1])
}

/// Secular frequency of the driven single-ion motion from its Floquet exponent,
/// or `None` outside the first stability region.
pub fn floquet_secular_frequency(kappa: f64, amp: f64, omega: f64) -> Option<f64> {
    let half_trace = monodromy_half_trace(kappa, amp, omega);
    if half_trace.abs() >= 1.0 {
        return None;
    }
    Some(half_trace.acos() * omega / TAU)
}

/// Static curvature needed along one axis for the target secular frequency.
fn solve_static_curvature(target: f64, amp: f64, omega: f64) -> Result<f64> {
    let guess = target * target - amp * amp / (2.0 * omega * omega);
    // Secular frequency rises with kappa; outside the first stability region the
    // side of the guess decides the sign.
    let above = |kappa: f64| match floquet_secular_frequency(kappa, amp, omega) {
        Some(w) => w > target,
        None => kappa > guess,
    };
    let mut span = 0.05 * target * target + 1e-3;
    let (mut lo, mut hi) = (guess - span, guess + span);
    let mut tries = 0;
    while above(lo) || !above(hi) {
        tries += 1;
        if tries > 30 {
            return Err(Error::StabilityViolation { q: 2.0 * amp / (omega * omega), limit: MAX_Q_RADIAL });
        }
        span *= 2.0;
        lo = guess - span;
        hi = guess + span;
    }
    while hi - lo > 1e-15 * (1.0 + guess.abs()) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Find the RF amplitude and static curvatures (obeying Laplace's equation, with the
/// axial curvature fixed to 1) reproducing the radial secular frequencies.
fn calibrate_rf(omega_rf: f64, wy: f64, wz: f64) -> Result<RfDrive> {
    let residual = |amp: f64| -> Result<(f64, f64, f64)> {
        let ky = solve_static_curvature(wy, amp, omega_rf)?;
        let kz = solve_static_curvature(wz, amp, omega_rf)?;
        Ok((ky + kz + 1.0, ky, kz))
    };
    let a0 = omega_rf * (wy * wy + wz * wz + 1.0).sqrt();
    let (mut lo, mut hi) = (0.9 * a0, 1.1 * a0);
    let (mut rlo, mut rhi) = (residual(lo)?.0, residual(hi)?.0);
    // Residual decreases with amplitude.
    let mut guard = 0;
    while !(rlo > 0.0 && rhi < 0.0) {
        guard += 1;
        if guard > 40 {
            return Err(Error::StabilityViolation { q: 2.0 * hi / (omega_rf * omega_rf), limit: MAX_Q_RADIAL });
        }
        if rlo <= 0.0 {
            lo *= 0.95;
            rlo = residual(lo)?.0;
        }
        if rhi >= 0.0 {
            hi *= 1.05;
            rhi = residual(hi)?.0;
        }
    }
    // Regula falsi (Illinois) on a smooth monotone residual.
    let mut side = 0i8;
    let mut best = (lo, 0.0, 0.0);
    for _ in 0..100 {
        let amp = (lo * rhi - hi * rlo) / (rhi - rlo);
        let (r, ky, kz) = residual(amp)?;
        best = (amp, ky, kz);
        if r.abs() < 1e-13 || (hi - lo) < 1e-14 * amp {
            break;
        }
        if r > 0.0 {
            lo = amp;
            rlo = r;
            if side == 1 {
                rhi *= 0.5;
            }
            side = 1;
        } else {
            hi = amp;
            rhi = r;
            if side == -1 {
                rlo *= 0.5;
            }
            side = -1;
        }
    }
    let (amplitude, ky, kz) = best;
    Ok(RfDrive { omega: omega_rf, amplitude, static_curvature: [1.0, ky, kz] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserConfig {
    /// rad/s; negative means red detuned
    pub detuning: f64,
    pub saturation: f64,
    pub beam_direction: [f64; 3],
    /// 1/m
    pub wavenumber: f64,
}

impl LaserConfig {
    pub fn new(detuning: f64, saturation: f64, beam_direction: [f64; 3], wavenumber: f64) -> Result<Self> {
        let norm = beam_direction.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(saturation >= 0.0) {
            return Err(Error::InvalidParameter(format!("saturation must be >= 0, got {saturation}")));
        }
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("beam direction must be non-zero".into()));
        }
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("beam direction must be a unit vector, |d| = {norm}")));
        }
        Ok(LaserConfig { detuning, saturation, beam_direction, wavenumber })
    }

    /// Red detuning of one linewidth at `s = 0.2`, beam tilted 5 degrees from the
    /// axis inside the crystal plane.
    pub fn default_for(species: &SpeciesConfig) -> Self {
        let tilt = 5.0_f64.to_radians();
        LaserConfig {
            detuning: -species.natural_linewidth,
            saturation: 0.2,
            beam_direction: [tilt.cos(), tilt.sin(), 0.0],
            wavenumber: species.wavenumber(),
        }
    }
}

/// Conversion factors between SI and reduced units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScale {
    /// m
    pub length: f64,
    /// s
    pub time: f64,
    /// J
    pub energy: f64,
    /// kg
    pub mass: f64,
    /// Doppler limit, K
    pub temperature_reference: f64,
}

impl UnitScale {
    pub fn new(species: &SpeciesConfig, omega_x: f64) -> Self {
        let coulomb = species.charge * species.charge / (4.0 * PI * EPSILON_0);
        let length = (coulomb / (species.mass * omega_x * omega_x)).cbrt();
        UnitScale {
            length,
            time: 1.0 / omega_x,
            energy: species.mass * omega_x * omega_x * length * length,
            mass: species.mass,
            temperature_reference: doppler_limit(species),
        }
    }

    pub fn for_trap(species: &SpeciesConfig, trap: &TrapConfig) -> Self {
        Self::new(species, trap.omega_x)
    }

    pub fn velocity(&self) -> f64 {
        self.length / self.time
    }

    pub fn momentum(&self) -> f64 {
        self.mass * self.velocity()
    }

    /// Reduced action unit; `hbar` in reduced units is `HBAR / action()`.
    pub fn action(&self) -> f64 {
        self.energy * self.time
    }

    /// `k_B T` in reduced energy units.
    pub fn thermal_energy(&self, temperature: f64) -> f64 {
        K_B * temperature / self.energy
    }

    /// `k_B T_D` in reduced energy units.
    pub fn doppler_energy(&self) -> f64 {
        self.thermal_energy(self.temperature_reference)
    }

    /// Temperature corresponding to a reduced thermal energy.
    pub fn temperature_of(&self, thermal_energy: f64) -> f64 {
        thermal_energy * self.energy / K_B
    }

    pub fn length_to_scaled(&self, meters: f64) -> f64 {
        meters / self.length
    }

    pub fn length_to_si(&self, scaled: f64) -> f64 {
        scaled * self.length
    }

    pub fn frequency_to_hz(&self, scaled_angular: f64) -> f64 {
        scaled_angular / (self.time * TAU)
    }
}

/// Laser parameters converted to reduced units for the scattering model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledLaser {
    pub linewidth: f64,
    pub detuning: f64,
    pub saturation: f64,
    /// unit vector
    pub direction: [f64; 3],
    pub wavenumber: f64,
    /// recoil momentum `hbar k`
    pub recoil: f64,
}

impl ScaledLaser {
    pub fn new(laser: &LaserConfig, species: &SpeciesConfig, units: &UnitScale) -> Self {
        ScaledLaser {
            linewidth: species.natural_linewidth * units.time,
            detuning: laser.detuning * units.time,
            saturation: laser.saturation,
            direction: laser.beam_direction,
            wavenumber: laser.wavenumber * units.length,
            recoil: HBAR * laser.wavenumber / units.momentum(),
        }
    }

    /// Photon scattering rate for an ion moving with velocity projection `v_par`
    /// along the beam.
    #[inline]
    pub fn scattering_rate(&self, v_par: f64) -> f64 {
        let detune = 2.0 * (self.detuning - self.wavenumber * v_par) / self.linewidth;
        0.5 * self.linewidth * self.saturation / (1.0 + self.saturation + detune * detune)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doppler_limit_magnesium() {
        let t = doppler_limit(&SpeciesConfig::magnesium24());
        assert!((t - 1.0e-3).abs() < 0.05e-3, "T_D = {t}");
    }

    #[test]
    fn doppler_limit_formula() {
        let mut s = SpeciesConfig::magnesium24();
        s.natural_linewidth = TAU * 20e6;
        let expected = 1.054_571_817e-34 * TAU * 20e6 / (2.0 * 1.380_649e-23);
        assert!((doppler_limit(&s) - expected).abs() < 1e-18);
        s.natural_linewidth = 0.0;
        assert_eq!(doppler_limit(&s), 0.0);
    }

    #[test]
    fn default_trap_anisotropy() {
        let t = make_trap(TAU * 6.22e6, TAU * 56e3, TAU * 320e3, TAU * 336e3, TrapKind::Harmonic).unwrap();
        assert!((t.anisotropy() - 1.05).abs() < 1e-12);
    }

    #[test]
    fn degenerate_frequencies_rejected() {
        let w = TAU * 100e3;
        let e = make_trap(TAU * 6e6, w, w, w, TrapKind::Harmonic).unwrap_err();
        assert!(matches!(e, Error::OrderingViolation { .. }));
    }

    #[test]
    fn unstable_drive_rejected() {
        let e = make_trap(TAU * 1e6, TAU * 56e3, TAU * 330e3, TAU * 340e3, TrapKind::FullRf).unwrap_err();
        assert!(matches!(e, Error::StabilityViolation { .. }));
    }

    #[test]
    fn rf_calibration_matches_secular_frequencies() {
        let t = make_trap(TAU * 6.22e6, TAU * 56e3, TAU * 630e3, TAU * 661.5e3, TrapKind::FullRf).unwrap();
        let rf = t.scaled().rf.unwrap();
        let wy = floquet_secular_frequency(rf.static_curvature[1], rf.amplitude, rf.omega).unwrap();
        let wz = floquet_secular_frequency(rf.static_curvature[2], -rf.amplitude, rf.omega).unwrap();
        assert!((wy / (630.0 / 56.0) - 1.0).abs() < 1e-6, "wy = {wy}");
        assert!((wz / (661.5 / 56.0) - 1.0).abs() < 1e-6, "wz = {wz}");
        assert!((rf.static_curvature.iter().sum::<f64>()).abs() < 1e-10);
        // Lowest-order Mathieu relation holds to the expected O(q^2) accuracy.
        let q_est = q_radial_estimate(t.omega_y, t.rf_frequency);
        assert!((rf.mathieu_q() / q_est - 1.0).abs() < 0.05, "{} vs {q_est}", rf.mathieu_q());
    }

    #[test]
    fn length_unit_magnesium() {
        let u = UnitScale::new(&SpeciesConfig::magnesium24(), DEFAULT_OMEGA_X);
        let coulomb = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * PI * EPSILON_0);
        let expected = (coulomb / (24.0 * AMU * DEFAULT_OMEGA_X.powi(2))).cbrt();
        assert!((u.length / expected - 1.0).abs() < 1e-14);
        // Inter-ion distances in the crystals are tens of micrometres.
        assert!(u.length > 20e-6 && u.length < 60e-6, "l = {}", u.length);
        assert!((u.length_to_scaled(u.length) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn laser_validation() {
        assert!(LaserConfig::new(-1.0, -0.1, [1.0, 0.0, 0.0], 1.0).is_err());
        assert!(LaserConfig::new(-1.0, 0.2, [1.0, 1.0, 0.0], 1.0).is_err());
        assert!(LaserConfig::new(-1.0, 0.2, [0.6, 0.8, 0.0], 1.0).is_ok());
    }
}
