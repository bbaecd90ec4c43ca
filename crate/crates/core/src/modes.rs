//! Linearized spectrum of a crystal, mode localization, thermal sampling, and the
//! scans probing the kink's localized mode.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::{CoolingParams, Integrator, SystemState};
use crate::error::{Error, Result};
use crate::model::{make_trap, TrapConfig, TrapKind, UnitScale};
use crate::potential::{self, Vec3};
use crate::statics::{self, EquilibriumConfig, KinkDescriptor, NEGATIVE_CURVATURE_TOLERANCE};

/// Analytic Hessian of the secular potential. With unit mass it is already the
/// mass-weighted Hessian.
pub fn hessian(config: &EquilibriumConfig) -> Result<DMatrix<f64>> {
    potential::hessian(&config.positions, &config.trap.curvature)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSpectrum {
    /// Angular frequencies in units of `omega_x`, ascending.
    pub frequencies: Vec<f64>,
    /// Eigenvalues of the Hessian, same order.
    pub eigenvalues: Vec<f64>,
    /// Column `m` is mode `m`, ion-major layout (`3 i + axis`).
    pub eigenvectors: DMatrix<f64>,
    pub n_ions: usize,
}

impl ModeSpectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Displacement of ion `i` in mode `m`.
    pub fn ion_component(&self, m: usize, i: usize) -> Vec3 {
        let c = self.eigenvectors.column(m);
        Vec3::new(c[3 * i], c[3 * i + 1], c[3 * i + 2])
    }

    /// Per-ion weights `|e_i|^2` of mode `m`, summing to one.
    pub fn ion_weights(&self, m: usize) -> Vec<f64> {
        (0..self.n_ions).map(|i| self.ion_component(m, i).norm_squared()).collect()
    }

    /// Ion-level inverse participation ratio, in `[1/N, 1]`.
    pub fn ipr(&self, m: usize) -> f64 {
        self.ion_weights(m).iter().map(|w| w * w).sum()
    }

    pub fn localization(&self, m: usize) -> ModeLocalization {
        let weights = self.ion_weights(m);
        let ipr = weights.iter().map(|w| w * w).sum();
        let mut idx: Vec<usize> = (0..self.n_ions).collect();
        idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
        ModeLocalization { ipr, dominant_ions: idx.into_iter().take(3).collect(), weights }
    }

    /// `sum_m omega_m^2`, equal to the trace of the Hessian.
    pub fn frequency_square_sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Index of the lowest mode whose weight on `ions` exceeds `min_weight`.
    pub fn lowest_mode_on(&self, ions: &[usize], min_weight: f64) -> Option<usize> {
        (0..self.len()).find(|&m| {
            let w = self.ion_weights(m);
            ions.iter().map(|&i| w[i]).sum::<f64>() > min_weight
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeLocalization {
    pub ipr: f64,
    /// The three ions carrying most of the mode, strongest first.
    pub dominant_ions: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Eigenvalues below this (but above the saddle tolerance) are clamped to zero.
const ZERO_EIGENVALUE: f64 = 1e-12;

/// Mass-weighted eigendecomposition at an equilibrium.
pub fn normal_modes(config: &EquilibriumConfig) -> Result<ModeSpectrum> {
    spectrum_from_hessian(hessian(config)?, config.len())
}

pub fn spectrum_from_hessian(h: DMatrix<f64>, n_ions: usize) -> Result<ModeSpectrum> {
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if let Some(&first) = order.first() {
        let lmin = eig.eigenvalues[first];
        if lmin < NEGATIVE_CURVATURE_TOLERANCE {
            return Err(Error::NegativeCurvature { eigenvalue: lmin });
        }
    }
    let dim = order.len();
    let mut vectors = DMatrix::zeros(dim, dim);
    let mut eigenvalues = Vec::with_capacity(dim);
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        if largest_component_sign(v.as_slice()) < 0.0 {
            v = -v;
        }
        vectors.set_column(col, &v);
        eigenvalues.push(eig.eigenvalues[k]);
    }
    let frequencies = eigenvalues.iter().map(|&l| if l > ZERO_EIGENVALUE { l.sqrt() } else { 0.0 }).collect();
    Ok(ModeSpectrum { frequencies, eigenvalues, eigenvectors: vectors, n_ions })
}

/// Sign of the largest-magnitude component, ties broken by lowest index.
fn largest_component_sign(v: &[f64]) -> f64 {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for &c in v {
        if c.abs() > best.abs() * (1.0 + 1e-9) {
            best = c;
            sign = c.signum();
        }
    }
    sign
}

/// Spectrum as CSV: `mode_index,frequency_hz,ipr,top1,top2,top3`.
pub fn write_spectrum_csv<W: Write>(spectrum: &ModeSpectrum, units: &UnitScale, mut out: W) -> Result<()> {
    writeln!(out, "mode_index,frequency_hz,ipr,top1,top2,top3")?;
    for m in 0..spectrum.len() {
        let loc = spectrum.localization(m);
        let top: Vec<String> = loc.dominant_ions.iter().map(|i| i.to_string()).collect();
        writeln!(out, "{},{:.9e},{:.9e},{}", m, units.frequency_to_hz(spectrum.frequencies[m]), loc.ipr, top.join(","))?;
    }
    Ok(())
}

/// Share of a mode that must sit on the kink core (the two core ions and their
/// axial neighbours) for it to count as the localized mode.
pub const LOCALIZED_WEIGHT: f64 = 0.3;

/// The two core ions of a kink together with their outer axial neighbours.
pub fn core_window(config: &EquilibriumConfig, kink: &KinkDescriptor) -> Vec<usize> {
    let Some(core) = kink.core_ion_indices else { return Vec::new() };
    let order = config.axial_order();
    let rank = |ion: usize| order.iter().position(|&i| i == ion).expect("core ion in config");
    let (lo, hi) = {
        let (a, b) = (rank(core[0]), rank(core[1]));
        (a.min(b), a.max(b))
    };
    (lo.saturating_sub(1)..=(hi + 1).min(order.len() - 1)).map(|k| order[k]).collect()
}

/// Lowest mode carrying at least `LOCALIZED_WEIGHT` on the kink core.
pub fn localized_mode(spectrum: &ModeSpectrum, config: &EquilibriumConfig, kink: &KinkDescriptor) -> Option<usize> {
    let window = core_window(config, kink);
    if window.is_empty() {
        return None;
    }
    spectrum.lowest_mode_on(&window, LOCALIZED_WEIGHT)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunePoint {
    /// `omega_z / omega_y`.
    pub ratio: f64,
    /// Localized-mode frequency in units of `omega_x`, absent if the point failed.
    pub omega_low: Option<f64>,
    pub mode_index: Option<usize>,
    pub ipr: Option<f64>,
    pub error: Option<String>,
}

fn tune_point(n: usize, base: &TrapConfig, ratio: f64) -> Result<(f64, usize, f64)> {
    let trap = make_trap(base.rf_frequency, base.omega_x, base.omega_y, ratio * base.omega_y, TrapKind::Harmonic)?;
    let kink = statics::centered_kink(n, &trap).map_err(|e| match e {
        Error::AmbiguousStructure { .. } | Error::KinkNotFormed { .. } => Error::KinkLost { control: ratio },
        other => other,
    })?;
    let desc = match statics::detect_kink(&kink) {
        Ok(d) if d.present => d,
        _ => return Err(Error::KinkLost { control: ratio }),
    };
    let spectrum = normal_modes(&kink)?;
    let m = localized_mode(&spectrum, &kink, &desc).ok_or(Error::KinkLost { control: ratio })?;
    Ok((spectrum.frequencies[m], m, spectrum.ipr(m)))
}

/// Re-relax the centered kink of `n` ions at each `omega_z / omega_y` ratio
/// (keeping `omega_y` and `omega_x` of `base`) and report its localized-mode
/// frequency. Failures are recorded per point.
pub fn tune_scan(n: usize, base: &TrapConfig, ratios: &[f64]) -> Vec<TunePoint> {
    ratios
        .par_iter()
        .map(|&ratio| match tune_point(n, base, ratio) {
            Ok((w, m, ipr)) => TunePoint { ratio, omega_low: Some(w), mode_index: Some(m), ipr: Some(ipr), error: None },
            Err(e) => TunePoint { ratio, omega_low: None, mode_index: None, ipr: None, error: Some(e.to_string()) },
        })
        .collect()
}

/// Scan table as CSV: `ratio,omega_low_hz` (empty frequency for failed points).
pub fn write_tune_csv<W: Write>(points: &[TunePoint], units: &UnitScale, mut out: W) -> Result<()> {
    writeln!(out, "ratio,omega_low_hz")?;
    for p in points {
        match p.omega_low {
            Some(w) => writeln!(out, "{:.6},{:.9e}", p.ratio, units.frequency_to_hz(w))?,
            None => writeln!(out, "{:.6},", p.ratio)?,
        }
    }
    Ok(())
}

/// Thermal state with every mode holding energy `kt` (reduced units): amplitude
/// `sqrt(2 kt) / omega_m` and a uniformly random phase.
pub fn thermal_sample<R: Rng + ?Sized>(config: &EquilibriumConfig, spectrum: &ModeSpectrum, kt: f64, rng: &mut R) -> Result<SystemState> {
    let all: Vec<usize> = (0..spectrum.len()).collect();
    excite_modes(config, spectrum, &all, kt, rng)
}

/// As [`thermal_sample`] but only the listed modes are excited.
pub fn excite_modes<R: Rng + ?Sized>(
    config: &EquilibriumConfig,
    spectrum: &ModeSpectrum,
    modes: &[usize],
    kt: f64,
    rng: &mut R,
) -> Result<SystemState> {
    if !(kt >= 0.0) || !kt.is_finite() {
        return Err(Error::InvalidParameter(format!("thermal energy must be non-negative, got {kt}")));
    }
    let n = config.len();
    let mut positions = config.positions.clone();
    let mut velocities = vec![Vec3::zeros(); n];
    for &m in modes {
        if m >= spectrum.len() {
            return Err(Error::InvalidParameter(format!("mode {m} out of range")));
        }
        let w = spectrum.frequencies[m];
        if w <= 0.0 {
            return Err(Error::ZeroFrequencyMode { index: m });
        }
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        let amp = (2.0 * kt).sqrt() / w;
        let (q, p) = (amp * phase.cos(), -amp * w * phase.sin());
        for i in 0..n {
            let e = spectrum.ion_component(m, i);
            positions[i] += e * q;
            velocities[i] += e * p;
        }
    }
    SystemState::new(positions, velocities, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnharmonicParams {
    pub dt: f64,
    /// Length of the record in periods of the linearized frequency.
    pub periods: f64,
    /// Integration steps between recorded samples.
    pub stride: usize,
}

impl Default for AnharmonicParams {
    fn default() -> Self {
        AnharmonicParams { dt: 0.005, periods: 60.0, stride: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnharmonicPoint {
    /// Initial displacement along the normalized eigenvector (reduced length).
    pub amplitude: f64,
    /// Dominant frequency, units of `omega_x`; absent when the orbit was unstable.
    pub frequency: Option<f64>,
    /// `frequency / linear - 1`.
    pub relative_shift: Option<f64>,
    pub error: Option<String>,
}

fn hann(k: usize, len: usize) -> f64 {
    0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / (len - 1) as f64).cos()
}

/// Magnitude of the Hann-windowed transform of `x` at angular frequency `w`.
fn windowed_dtft(x: &[f64], dt: f64, w: f64) -> f64 {
    let len = x.len();
    let (mut re, mut im) = (0.0, 0.0);
    for (k, &v) in x.iter().enumerate() {
        let a = w * dt * k as f64;
        let h = hann(k, len) * v;
        re += h * a.cos();
        im -= h * a.sin();
    }
    re.hypot(im)
}

/// Angular frequency of the highest peak of the Hann-windowed spectrum of `x`
/// (sample spacing `dt`), refined between the neighbouring FFT bins.
pub fn dominant_frequency(x: &[f64], dt: f64) -> Option<f64> {
    let len = x.len();
    if len < 8 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / len as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let padded = (4 * len).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..padded)
        .map(|k| if k < len { Complex::new(centered[k] * hann(k, len), 0.0) } else { Complex::new(0.0, 0.0) })
        .collect();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(padded);
    fft.process(&mut buf);
    let peak = (1..padded / 2).max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))?;
    let bin = std::f64::consts::TAU / (padded as f64 * dt);
    let (mut lo, mut hi) = ((peak as f64 - 1.0) * bin, (peak as f64 + 1.0) * bin);
    // Golden-section search for the maximum of the continuous spectrum.
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (windowed_dtft(&centered, dt, a), windowed_dtft(&centered, dt, b));
    for _ in 0..80 {
        if fa > fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = windowed_dtft(&centered, dt, a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = windowed_dtft(&centered, dt, b);
        }
        if hi - lo < 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Velocity Verlet maps a harmonic frequency `w` to `(2/dt) asin(w dt/2)`; invert it.
fn undo_verlet_dispersion(measured: f64, dt: f64) -> f64 {
    (2.0 / dt) * (0.5 * measured * dt).sin()
}

/// Release the crystal from rest displaced by `amplitude` along mode `mode`,
/// integrate without damping and take the dominant frequency of the modal
/// coordinate. Fails with `OrbitUnstable` if the motion leaves the basin.
pub fn anharmonic_frequency(config: &EquilibriumConfig, spectrum: &ModeSpectrum, mode: usize, amplitude: f64, params: &AnharmonicParams) -> Result<f64> {
    if mode >= spectrum.len() {
        return Err(Error::InvalidParameter(format!("mode {mode} out of range")));
    }
    let w0 = spectrum.frequencies[mode];
    if w0 <= 0.0 {
        return Err(Error::ZeroFrequencyMode { index: mode });
    }
    let n = config.len();
    let e: Vec<Vec3> = (0..n).map(|i| spectrum.ion_component(mode, i)).collect();
    let start: Vec<Vec3> = config.positions.iter().zip(&e).map(|(r, d)| r + d * amplitude).collect();
    let harmonic = config.trap.to_harmonic();
    let mut integ = Integrator::new(SystemState::at_rest(start), &harmonic, params.dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let total = (params.periods * std::f64::consts::TAU / w0 / params.dt).ceil() as usize;
    let initial_kink = statics::detect_kink_positions(&config.positions).ok().filter(|k| k.present);
    // The energy stays put; an orbit that wanders this far has left the basin.
    let excursion_limit = 4.0 * amplitude.abs() + 0.5;
    let mut signal = Vec::with_capacity(total / params.stride + 1);
    for step in 0..=total {
        if step > 0 {
            integ.step(&CoolingParams::None, &mut rng)?;
        }
        if step % params.stride != 0 {
            continue;
        }
        let x = &integ.state.positions;
        let q: f64 = x.iter().zip(&config.positions).zip(&e).map(|((r, r0), d)| (r - r0).dot(d)).sum();
        let far = x.iter().zip(&config.positions).any(|(r, r0)| (r - r0).norm() > excursion_limit);
        if far {
            return Err(Error::OrbitUnstable { amplitude });
        }
        if let Some(k0) = &initial_kink {
            if step % (50 * params.stride) == 0 {
                match statics::detect_kink_positions(x) {
                    Ok(k) if k.present && (k.lattice_position - k0.lattice_position).abs() < 1.0 => {}
                    _ => return Err(Error::OrbitUnstable { amplitude }),
                }
            }
        }
        signal.push(q);
    }
    let sample_dt = params.dt * params.stride as f64;
    let measured = dominant_frequency(&signal, sample_dt).ok_or(Error::OrbitUnstable { amplitude })?;
    Ok(undo_verlet_dispersion(measured, params.dt))
}

/// Effective frequency of one mode over a grid of excitation amplitudes.
pub fn anharmonic_scan(
    config: &EquilibriumConfig,
    spectrum: &ModeSpectrum,
    mode: usize,
    amplitudes: &[f64],
    params: &AnharmonicParams,
) -> Vec<AnharmonicPoint> {
    let linear = spectrum.frequencies.get(mode).copied().unwrap_or(0.0);
    amplitudes
        .par_iter()
        .map(|&amplitude| match anharmonic_frequency(config, spectrum, mode, amplitude, params) {
            Ok(w) => AnharmonicPoint { amplitude, frequency: Some(w), relative_shift: Some(w / linear - 1.0), error: None },
            Err(e) => AnharmonicPoint { amplitude, frequency: None, relative_shift: None, error: Some(e.to_string()) },
        })
        .collect()
}

/// Scan table as CSV: `amplitude_m,frequency_hz` (empty frequency when unstable).
pub fn write_anharmonic_csv<W: Write>(points: &[AnharmonicPoint], units: &UnitScale, mut out: W) -> Result<()> {
    writeln!(out, "amplitude_m,frequency_hz")?;
    for p in points {
        match p.frequency {
            Some(w) => writeln!(out, "{:.9e},{:.9e}", units.length_to_si(p.amplitude), units.frequency_to_hz(w))?,
            None => writeln!(out, "{:.9e},", units.length_to_si(p.amplitude))?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScaledTrap;
    use crate::statics::{relax_scaled, RelaxOptions};

    fn two_ions(wy: f64, wz: f64) -> EquilibriumConfig {
        let trap = ScaledTrap::harmonic(wy, wz);
        relax_scaled(&[Vec3::new(-0.6, 0.0, 0.0), Vec3::new(0.7, 0.0, 0.0)], &trap, &RelaxOptions::default()).unwrap()
    }

    #[test]
    fn two_ion_spectrum_is_analytic() {
        let (wy, wz) = (5.0, 6.0);
        let sp = normal_modes(&two_ions(wy, wz)).unwrap();
        let mut expected = [1.0, 3f64.sqrt(), wy, (wy * wy - 1.0).sqrt(), wz, (wz * wz - 1.0).sqrt()];
        expected.sort_by(f64::total_cmp);
        for (w, e) in sp.frequencies.iter().zip(expected) {
            assert!((w - e).abs() < 1e-8, "{w} vs {e}");
        }
        assert!((sp.frequency_square_sum() - expected.iter().map(|w| w * w).sum::<f64>()).abs() < 1e-8);
    }

    #[test]
    fn weights_are_normalized_and_ipr_bounded() {
        let sp = normal_modes(&two_ions(5.0, 6.0)).unwrap();
        for m in 0..sp.len() {
            let w: f64 = sp.ion_weights(m).iter().sum();
            assert!((w - 1.0).abs() < 1e-12);
            let ipr = sp.ipr(m);
            assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&ipr));
        }
    }

    #[test]
    fn zero_temperature_sample_is_the_equilibrium() {
        let eq = two_ions(5.0, 6.0);
        let sp = normal_modes(&eq).unwrap();
        let s = thermal_sample(&eq, &sp, 0.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(s.positions, eq.positions);
        assert_eq!(s.kinetic_energy(), 0.0);
    }

    #[test]
    fn thermal_samples_obey_equipartition() {
        let trap = ScaledTrap::harmonic(4.0, 4.5);
        let eq = relax_scaled(&statics::chain_guess(4, 3), &trap, &RelaxOptions::default()).unwrap();
        let sp = normal_modes(&eq).unwrap();
        let kt = 2e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let mean: f64 = (0..draws).map(|_| thermal_sample(&eq, &sp, kt, &mut rng).unwrap().kinetic_energy()).sum::<f64>() / draws as f64;
        let expected = 1.5 * eq.len() as f64 * kt;
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn single_mode_excitation_moves_along_its_vector() {
        let eq = two_ions(5.0, 6.0);
        let sp = normal_modes(&eq).unwrap();
        let s = excite_modes(&eq, &sp, &[2], 1e-3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let energy = s.kinetic_energy() + 0.5 * sp.eigenvalues[2] * {
            let q: f64 = (0..2).map(|i| (s.positions[i] - eq.positions[i]).dot(&sp.ion_component(2, i))).sum();
            q * q
        };
        assert!((energy / 1e-3 - 1.0).abs() < 1e-9);
        assert!(matches!(excite_modes(&eq, &sp, &[6], 1e-3, &mut ChaCha8Rng::seed_from_u64(1)), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn dominant_frequency_of_a_sinusoid() {
        let dt = 0.02;
        let w = 1.2345;
        let x: Vec<f64> = (0..3000).map(|k| (w * dt * k as f64 + 0.3).sin() + 0.2).collect();
        let got = dominant_frequency(&x, dt).unwrap();
        assert!((got - w).abs() < 1e-6, "{got}");
        assert!(dominant_frequency(&x[..4], dt).is_none());
    }

    #[test]
    fn small_amplitude_frequency_is_linear() {
        let eq = two_ions(5.0, 6.0);
        let sp = normal_modes(&eq).unwrap();
        let breathing = sp.frequencies.iter().position(|w| (w - 3f64.sqrt()).abs() < 1e-6).unwrap();
        let w = anharmonic_frequency(&eq, &sp, breathing, 1e-5, &AnharmonicParams::default()).unwrap();
        assert!((w / sp.frequencies[breathing] - 1.0).abs() < 1e-4, "{w}");
    }

    #[test]
    fn tune_csv_leaves_failed_points_empty() {
        let units = UnitScale::new(&crate::model::SpeciesConfig::magnesium24(), crate::model::DEFAULT_OMEGA_X);
        let pts = vec![
            TunePoint { ratio: 1.0, omega_low: None, mode_index: None, ipr: None, error: Some("lost".into()) },
            TunePoint { ratio: 1.05, omega_low: Some(0.5), mode_index: Some(0), ipr: Some(0.2), error: None },
        ];
        let mut buf = Vec::new();
        write_tune_csv(&pts, &units, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some("1.000000,"));
        assert!(text.lines().nth(2).unwrap().starts_with("1.050000,2.8"));
    }
}
