//! One function per subcommand. Each writes its artifacts through [`Outputs`].

use std::fs;
use std::path::{Path, PathBuf};

use ionkink::dynamics::CoolingParams;
use ionkink::imaging::{blur_metric, render_segments, BlurOptions};
use ionkink::modes::{excite_modes, localized_mode, normal_modes, thermal_sample, tune_scan, write_spectrum_csv, write_tune_csv};
use ionkink::pnscan::{barrier_sweep, scan_ion_number, write_profile_csv, write_sweep_csv, SweepFitRecord};
use ionkink::quenchlab::{kink_statistics, write_trial_log};
use ionkink::statics::{self, centered_kink, classify, detect_kink, ground_state, EquilibriumConfig, StructureKind, Thresholds, SIGN_FRACTION};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{Config, Excitation, Structure};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Collects the files written by a command together with their digests.
pub struct Outputs {
    dir: PathBuf,
    pub records: Vec<OutputRecord>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), records: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        self.records.push(OutputRecord { file: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(ionkink::Error::from)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn structure(cfg: &Config) -> Result<EquilibriumConfig, CliError> {
    let trap = cfg.trap()?;
    Ok(match cfg.run.structure {
        Structure::Ground => ground_state(cfg.run.n_ions, &trap)?,
        Structure::Kink => centered_kink(cfg.run.n_ions, &trap)?,
    })
}

pub fn relax(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let units = cfg.units()?;
    let eq = structure(cfg)?;
    let mut csv = String::from("ion_index,x_m,y_m,z_m\n");
    for i in eq.axial_order() {
        let r = eq.positions[i] * units.length;
        csv.push_str(&format!("{i},{:.12e},{:.12e},{:.12e}\n", r.x, r.y, r.z));
    }
    out.write("positions.csv", csv.as_bytes())?;
    let class = classify(&eq, &Thresholds::default_for(&units));
    let flips = if class.kind == StructureKind::Linear { Vec::new() } else { statics::signature_flips(&eq.positions, SIGN_FRACTION) };
    out.write_json(
        "summary.json",
        &json!({
            "n_ions": eq.len(),
            "structure": cfg.run.structure,
            "class": class.kind,
            "max_out_of_plane_m": units.length_to_si(class.max_out_of_plane),
            "transverse_amplitude_m": units.length_to_si(class.transverse_amplitude),
            "potential_energy_over_kB_TD": eq.potential_energy / units.doppler_energy(),
            "kink_multiplicity": flips.len(),
            "kink_positions_m": flips.iter().map(|f| units.length_to_si(f.axial_position)).collect::<Vec<_>>(),
        }),
    )
}

pub fn modes(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let units = cfg.units()?;
    let eq = structure(cfg)?;
    let spectrum = normal_modes(&eq)?;
    let mut csv = Vec::new();
    write_spectrum_csv(&spectrum, &units, &mut csv)?;
    out.write("spectrum.csv", &csv)?;
    let localized = match detect_kink(&eq) {
        Ok(d) if d.present => localized_mode(&spectrum, &eq, &d),
        _ => None,
    };
    out.write_json(
        "summary.json",
        &json!({
            "n_ions": eq.len(),
            "structure": cfg.run.structure,
            "lowest_hz": units.frequency_to_hz(spectrum.frequencies[0]),
            "localized_mode": localized,
            "localized_hz": localized.map(|m| units.frequency_to_hz(spectrum.frequencies[m])),
            "localized_ipr": localized.map(|m| spectrum.ipr(m)),
        }),
    )
}

pub fn quench(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let setup = cfg.quench_setup()?;
    let (table, outcomes) = kink_statistics(&cfg.quench.ion_numbers, cfg.quench.trials, cfg.run.seed, &setup)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    out.write("occurrence.csv", &csv)?;
    let mut log = Vec::new();
    write_trial_log(&outcomes, &mut log)?;
    out.write("trials.jsonl", &log)
}

pub fn pn(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let units = cfg.units()?;
    let kt = units.doppler_energy();
    let zz = ground_state(cfg.run.n_ions, &cfg.trap()?)?;
    let scan = scan_ion_number(&zz, &cfg.pn_params())?;
    let mut csv = Vec::new();
    write_profile_csv(&scan.profile, &units, &mut csv)?;
    out.write("profile.csv", &csv)?;
    out.write_json(
        "summary.json",
        &json!({
            "n_ions": scan.n_ions,
            "barrier_over_kB_TD": scan.profile.barrier_height / kt,
            "asymmetry_over_kB_TD": scan.profile.asymmetry / kt,
            "ripple_over_kB_TD": scan.profile.ripple / kt,
            "start_bond": scan.start_bond,
        }),
    )
}

pub fn sweep(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let units = cfg.units()?;
    let trap = cfg.trap()?;
    let ns: Vec<usize> = (cfg.pn.n_min..=cfg.pn.n_max).collect();
    let result = barrier_sweep(&ns, trap.scaled(), &cfg.pn_params());
    let mut csv = Vec::new();
    write_sweep_csv(&result, &units, &mut csv)?;
    out.write("sweep.csv", &csv)?;
    let record = SweepFitRecord::new(&result, &units)
        .ok_or_else(|| ionkink::Error::InvalidParameter(format!("fewer than three barriers to fit; failures: {:?}", result.failures)))?;
    out.write_json("fit.json", &record)
}

pub fn render(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let units = cfg.units()?;
    let trap = cfg.trap()?;
    let laser = cfg.laser()?;
    let camera = cfg.camera();
    let eq = structure(cfg)?;
    let spectrum = normal_modes(&eq)?;
    let kt = cfg.render.temperature_td * units.doppler_energy();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let excited = match cfg.render.excitation {
        Excitation::All => None,
        Excitation::Localized => {
            let desc = detect_kink(&eq)?;
            Some(localized_mode(&spectrum, &eq, &desc).ok_or(ionkink::Error::KinkLost { control: cfg.trap.anisotropy })?)
        }
    };
    let starts = (0..cfg.render.segments)
        .map(|_| match excited {
            None => thermal_sample(&eq, &spectrum, kt, &mut rng),
            Some(m) => excite_modes(&eq, &spectrum, &[m], kt, &mut rng),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dt = cfg.dt(&trap);
    let frame = render_segments(&starts, trap.scaled(), &CoolingParams::None, dt, cfg.integration.stride, cfg.run.seed, &camera, &units, &laser)?;
    let mut pgm = Vec::new();
    frame.write_pgm(&mut pgm)?;
    out.write("frame.pgm", &pgm)?;
    out.write_json("frame.json", &frame.sidecar())?;
    let reference: Vec<[f64; 2]> = eq.positions.iter().map(|r| camera.project(&(r * units.length))).collect();
    let blur = blur_metric(&frame, &reference, &BlurOptions::default())?;
    let mut csv = String::from("ion_index,u_um,v_um,blur_um\n");
    for i in eq.axial_order() {
        csv.push_str(&format!("{i},{:.6},{:.6},{:.6}\n", reference[i][0] * 1e6, reference[i][1] * 1e6, blur[i] * 1e6));
    }
    out.write("blur.csv", csv.as_bytes())
}

pub fn tune(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let units = cfg.units()?;
    let points = tune_scan(cfg.run.n_ions, &cfg.trap()?, &cfg.tune_ratios());
    let mut csv = Vec::new();
    write_tune_csv(&points, &units, &mut csv)?;
    out.write("tune.csv", &csv)
}
