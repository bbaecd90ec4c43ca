//! Run configuration: TOML sections with SI values, dotted-path overrides and
//! conversion into the reduced-unit types of the library.

use std::f64::consts::TAU;

use ionkink::dynamics::max_timestep;
use ionkink::imaging::CameraConfig;
use ionkink::model::{make_trap, LaserConfig, ScaledLaser, SpeciesConfig, TrapConfig, TrapKind, UnitScale};
use ionkink::pnscan::{DescentParams, PnScanParams};
use ionkink::quenchlab::{QuenchSchedule, QuenchSetup};
use ionkink::statics::Thresholds;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Ground,
    Kink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Excitation {
    All,
    Localized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub n_ions: usize,
    pub structure: Structure,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 1, n_ions: 50, structure: Structure::Kink }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeciesSection {
    pub mass_kg: f64,
    pub charge_c: f64,
    pub wavelength_m: f64,
    pub linewidth_hz: f64,
}

impl Default for SpeciesSection {
    fn default() -> Self {
        let s = SpeciesConfig::magnesium24();
        SpeciesSection { mass_kg: s.mass, charge_c: s.charge, wavelength_m: s.transition_wavelength, linewidth_hz: s.natural_linewidth / TAU }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapSection {
    pub kind: TrapKind,
    pub rf_hz: f64,
    pub axial_hz: f64,
    pub radial_y_hz: f64,
    /// `omega_z / omega_y`
    pub anisotropy: f64,
}

impl Default for TrapSection {
    fn default() -> Self {
        TrapSection { kind: TrapKind::Harmonic, rf_hz: 6.22e6, axial_hz: 56e3, radial_y_hz: 610e3, anisotropy: 1.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaserSection {
    /// Negative is red detuned.
    pub detuning_hz: f64,
    pub saturation: f64,
    /// Beam angle from the trap axis inside the xy-plane.
    pub tilt_deg: f64,
}

impl Default for LaserSection {
    fn default() -> Self {
        LaserSection { detuning_hz: -42e6, saturation: 0.2, tilt_deg: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationSection {
    pub dt_s: f64,
    /// Snapshots kept every this many steps.
    pub stride: usize,
}

impl Default for IntegrationSection {
    fn default() -> Self {
        IntegrationSection { dt_s: 0.01 / (TAU * 56e3), stride: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuenchSection {
    pub ion_numbers: Vec<usize>,
    pub trials: usize,
    pub initial_temperature_td: f64,
    pub ramp_time_s: f64,
    pub final_damping_per_s: f64,
    pub settle_time_s: f64,
    pub extra_time_s: f64,
    pub recoil: bool,
    pub crystal_temperature_td: f64,
    pub stationary_window_s: f64,
    pub check_interval_s: f64,
    pub dt_s: f64,
}

impl Default for QuenchSection {
    fn default() -> Self {
        let s = QuenchSchedule::default();
        let t = 1.0 / (TAU * 56e3);
        QuenchSection {
            ion_numbers: vec![30, 44, 50, 54],
            trials: 100,
            initial_temperature_td: s.initial_temperature,
            ramp_time_s: s.ramp_time * t,
            final_damping_per_s: s.final_gamma / t,
            settle_time_s: s.settle_time * t,
            extra_time_s: s.extra_time * t,
            recoil: s.recoil,
            crystal_temperature_td: s.crystal_temperature,
            stationary_window_s: s.stationary_window * t,
            check_interval_s: s.check_interval * t,
            dt_s: s.dt * t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PnSection {
    pub n_min: usize,
    pub n_max: usize,
    pub damping_per_s: f64,
    pub grid_points: usize,
}

impl Default for PnSection {
    fn default() -> Self {
        PnSection { n_min: 40, n_max: 56, damping_per_s: DescentParams::default().gamma * TAU * 56e3, grid_points: 81 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub ratio_step: f64,
}

impl Default for TuneSection {
    fn default() -> Self {
        TuneSection { ratio_min: 1.01, ratio_max: 1.10, ratio_step: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub pixel_size_m: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub exposure_s: f64,
    pub psf_sigma_m: f64,
    pub tilt_rad: [f64; 2],
}

impl Default for CameraSection {
    fn default() -> Self {
        let c = CameraConfig::default();
        CameraSection {
            pixel_size_m: c.pixel_size,
            width_px: c.width,
            height_px: c.height,
            exposure_s: c.exposure,
            psf_sigma_m: c.psf_sigma,
            tilt_rad: c.tilt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub temperature_td: f64,
    pub excitation: Excitation,
    /// Independent thermal samples the exposure is split into.
    pub segments: usize,
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection { temperature_td: 1.0, excitation: Excitation::All, segments: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub species: SpeciesSection,
    pub trap: TrapSection,
    pub laser: LaserSection,
    pub integration: IntegrationSection,
    pub quench: QuenchSection,
    pub pn: PnSection,
    pub tune: TuneSection,
    pub camera: CameraSection,
    pub render: RenderSection,
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `section.key=value` overrides to a parsed document.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (path, raw) = item.split_once('=').ok_or_else(|| CliError::Config(format!("override `{item}` is not of the form key=value")))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(CliError::Config(format!("bad override path `{path}`")));
        }
        let mut table = &mut *doc;
        for k in &keys[..keys.len() - 1] {
            let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("`{k}` in `{path}` is not a section")))?;
        }
        table.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    }
    Ok(())
}

impl Config {
    pub fn load(text: Option<&str>, overrides: &[String]) -> Result<Config, CliError> {
        let mut doc: toml::Table = match text {
            Some(t) => t.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        apply_overrides(&mut doc, overrides)?;
        let cfg: Config = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.run.n_ions < 2 {
            return bad(format!("run.n_ions must be >= 2, got {}", self.run.n_ions));
        }
        if self.quench.trials == 0 || self.quench.ion_numbers.iter().any(|&n| n < 2) {
            return bad("quench needs trials >= 1 and ion numbers >= 2".into());
        }
        if self.pn.n_min < 4 || self.pn.n_max < self.pn.n_min {
            return bad(format!("pn range {}..{} is empty or too small", self.pn.n_min, self.pn.n_max));
        }
        if !(self.tune.ratio_step > 0.0) || self.tune.ratio_max < self.tune.ratio_min {
            return bad("tune needs ratio_step > 0 and ratio_max >= ratio_min".into());
        }
        if self.integration.stride == 0 || !(self.integration.dt_s > 0.0) {
            return bad("integration needs dt_s > 0 and stride >= 1".into());
        }
        if !(self.render.temperature_td >= 0.0) || self.render.segments == 0 {
            return bad("render needs temperature_td >= 0 and segments >= 1".into());
        }
        if !(self.pn.damping_per_s > 0.0) {
            return bad("pn.damping_per_s must be positive".into());
        }
        self.camera().validate()?;
        self.schedule().validate()?;
        self.species()?;
        Ok(())
    }

    pub fn species(&self) -> Result<SpeciesConfig, CliError> {
        let s = &self.species;
        Ok(SpeciesConfig::new(s.mass_kg, s.charge_c, s.wavelength_m, s.linewidth_hz * TAU)?)
    }

    pub fn trap(&self) -> Result<TrapConfig, CliError> {
        self.trap_with_ratio(self.trap.anisotropy)
    }

    pub fn trap_with_ratio(&self, ratio: f64) -> Result<TrapConfig, CliError> {
        let t = &self.trap;
        Ok(make_trap(t.rf_hz * TAU, t.axial_hz * TAU, t.radial_y_hz * TAU, ratio * t.radial_y_hz * TAU, t.kind)?)
    }

    pub fn units(&self) -> Result<UnitScale, CliError> {
        Ok(UnitScale::new(&self.species()?, self.trap.axial_hz * TAU))
    }

    pub fn laser(&self) -> Result<ScaledLaser, CliError> {
        let species = self.species()?;
        let tilt = self.laser.tilt_deg.to_radians();
        let laser = LaserConfig::new(self.laser.detuning_hz * TAU, self.laser.saturation, [tilt.cos(), tilt.sin(), 0.0], species.wavenumber())?;
        Ok(ScaledLaser::new(&laser, &species, &self.units()?))
    }

    fn time_unit(&self) -> f64 {
        1.0 / (self.trap.axial_hz * TAU)
    }

    pub fn schedule(&self) -> QuenchSchedule {
        let q = &self.quench;
        let t = self.time_unit();
        QuenchSchedule {
            initial_temperature: q.initial_temperature_td,
            ramp_time: q.ramp_time_s / t,
            final_gamma: q.final_damping_per_s * t,
            settle_time: q.settle_time_s / t,
            extra_time: q.extra_time_s / t,
            recoil: q.recoil,
            crystal_temperature: q.crystal_temperature_td,
            stationary_window: q.stationary_window_s / t,
            check_interval: q.check_interval_s / t,
            dt: q.dt_s / t,
        }
    }

    pub fn quench_setup(&self) -> Result<QuenchSetup, CliError> {
        let trap = self.trap()?;
        let units = self.units()?;
        Ok(QuenchSetup {
            trap: *trap.scaled(),
            laser: self.laser()?,
            doppler_energy: units.doppler_energy(),
            thresholds: Thresholds::default_for(&units),
            schedule: self.schedule(),
        })
    }

    pub fn pn_params(&self) -> PnScanParams {
        let descent = DescentParams { gamma: self.pn.damping_per_s * self.time_unit(), ..DescentParams::default() };
        PnScanParams { descent, grid_points: self.pn.grid_points }
    }

    pub fn camera(&self) -> CameraConfig {
        let c = &self.camera;
        CameraConfig {
            pixel_size: c.pixel_size_m,
            width: c.width_px,
            height: c.height_px,
            exposure: c.exposure_s,
            psf_sigma: c.psf_sigma_m,
            tilt: c.tilt_rad,
        }
    }

    /// Integration step in reduced units, capped for an RF-driven trap.
    pub fn dt(&self, trap: &TrapConfig) -> f64 {
        (self.integration.dt_s / self.time_unit()).min(max_timestep(trap.scaled()))
    }

    pub fn tune_ratios(&self) -> Vec<f64> {
        let t = &self.tune;
        let steps = ((t.ratio_max - t.ratio_min) / t.ratio_step + 1e-9).floor() as usize;
        (0..=steps).map(|k| t.ratio_min + k as f64 * t.ratio_step).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = Config::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(Config::load(Some(&text), &[]).unwrap(), cfg);
    }

    #[test]
    fn dotted_overrides() {
        let cfg = Config::load(None, &["trap.anisotropy=1.1".into(), "run.structure=ground".into(), "quench.ion_numbers=[30, 31]".into()]).unwrap();
        assert_eq!(cfg.trap.anisotropy, 1.1);
        assert_eq!(cfg.run.structure, Structure::Ground);
        assert_eq!(cfg.quench.ion_numbers, vec![30, 31]);
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        assert!(matches!(Config::load(None, &["trap.omega=3".into()]), Err(CliError::Config(_))));
        assert!(matches!(Config::load(Some("[bogus]\nx = 1\n"), &[]), Err(CliError::Config(_))));
        assert!(matches!(Config::load(None, &["novalue".into()]), Err(CliError::Config(_))));
    }

    #[test]
    fn schedule_converts_back_to_reduced_units() {
        let s = Config::default().schedule();
        let d = QuenchSchedule::default();
        assert!((s.ramp_time - d.ramp_time).abs() < 1e-9);
        assert!((s.final_gamma - d.final_gamma).abs() < 1e-12);
        assert!((s.dt - d.dt).abs() < 1e-12);
    }

    #[test]
    fn tune_grid_includes_endpoints() {
        let r = Config::default().tune_ratios();
        assert_eq!(r.len(), 19);
        assert!((r[18] - 1.10).abs() < 1e-12);
    }
}
