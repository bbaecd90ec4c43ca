//! Synthetic fluorescence frames rendered from ion trajectories, with spot
//! spread measurement and centroid recovery.
//!
//! Image coordinates: `u` runs along the trap axis, `v` along the radial `y`
//! axis. Pixel `(row, col)` has its centre at
//! `u = (col + 0.5 - width/2) p`, `v = (height/2 - row - 0.5) p`, so row 0 is
//! the top of the frame.

use std::io::{Read, Write};

use nalgebra::{Matrix5, Rotation3, Vector3, Vector5};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{CoolingParams, Integrator, SystemState, Trajectory};
use crate::error::{Error, Result};
use crate::model::{ScaledLaser, ScaledTrap, UnitScale};
use crate::potential::Vec3;

/// PSF contributions are dropped beyond this many widths.
const PSF_CUTOFF: f64 = 4.0;
/// Snapshots accumulated per work unit; fixed so sums do not depend on the
/// thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    /// Pixel pitch referred to the object plane, m.
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
    /// s
    pub exposure: f64,
    /// Gaussian PSF standard deviation, m.
    pub psf_sigma: f64,
    /// Rotations of the crystal about the x and y axes before projecting onto
    /// the xy-plane, rad.
    pub tilt: [f64; 2],
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig { pixel_size: 0.8e-6, width: 800, height: 64, exposure: 0.2, psf_sigma: 1.0e-6, tilt: [0.0, 0.0] }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("pixel_size", self.pixel_size), ("psf_sigma", self.psf_sigma), ("exposure", self.exposure)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("camera.{name} must be positive, got {v}")));
            }
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera frame must have at least one pixel".into()));
        }
        if !self.tilt.iter().all(|t| t.is_finite()) {
            return Err(Error::Config("camera.tilt must be finite".into()));
        }
        Ok(())
    }

    fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::y_axis(), self.tilt[1]) * Rotation3::from_axis_angle(&Vector3::x_axis(), self.tilt[0])
    }

    /// Image-plane coordinates `(u, v)` in metres of a position given in metres.
    pub fn project(&self, r: &Vec3) -> [f64; 2] {
        let p = self.rotation() * r;
        [p.x, p.y]
    }

    /// Continuous pixel coordinates `(col, row)` of an image-plane point.
    pub fn to_pixel(&self, uv: [f64; 2]) -> [f64; 2] {
        [uv[0] / self.pixel_size + self.width as f64 / 2.0 - 0.5, self.height as f64 / 2.0 - 0.5 - uv[1] / self.pixel_size]
    }

    pub fn to_image_plane(&self, px: [f64; 2]) -> [f64; 2] {
        [(px[0] + 0.5 - self.width as f64 / 2.0) * self.pixel_size, (self.height as f64 / 2.0 - 0.5 - px[1]) * self.pixel_size]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Snapshots accumulated.
    pub snapshots: usize,
    /// Sum of the per-ion weights deposited, in photons per unit reduced time.
    pub total_weight: f64,
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFrame {
    pub camera: CameraConfig,
    /// Row-major, origin top-left.
    pub pixels: Vec<f64>,
    pub normalization: Normalization,
}

impl ImageFrame {
    pub fn empty(camera: &CameraConfig) -> Self {
        ImageFrame {
            camera: *camera,
            pixels: vec![0.0; camera.width * camera.height],
            normalization: Normalization { snapshots: 0, total_weight: 0.0, peak: 0.0 },
        }
    }

    pub fn width(&self) -> usize {
        self.camera.width
    }

    pub fn height(&self) -> usize {
        self.camera.height
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.camera.width + col]
    }

    pub fn total(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Pixel-wise sum with another frame from the same camera.
    pub fn add(&mut self, other: &ImageFrame) -> Result<()> {
        if self.camera.width != other.camera.width || self.camera.height != other.camera.height {
            return Err(Error::InvalidParameter("frames have different sizes".into()));
        }
        for (a, b) in self.pixels.iter_mut().zip(&other.pixels) {
            *a += b;
        }
        self.normalization.snapshots += other.normalization.snapshots;
        self.normalization.total_weight += other.normalization.total_weight;
        self.refresh_peak();
        Ok(())
    }

    fn refresh_peak(&mut self) {
        self.normalization.peak = self.pixels.iter().cloned().fold(0.0, f64::max);
    }

    /// Adds one Gaussian spot of integrated weight `weight` centred at `uv`.
    pub fn deposit(&mut self, uv: [f64; 2], weight: f64) {
        let cam = self.camera;
        let s = cam.psf_sigma / cam.pixel_size;
        let [c0, r0] = cam.to_pixel(uv);
        let reach = PSF_CUTOFF * s;
        let col_lo = (c0 - reach).ceil().max(0.0);
        let col_hi = (c0 + reach).floor().min(cam.width as f64 - 1.0);
        let row_lo = (r0 - reach).ceil().max(0.0);
        let row_hi = (r0 + reach).floor().min(cam.height as f64 - 1.0);
        if col_lo > col_hi || row_lo > row_hi {
            return;
        }
        let norm = weight / (std::f64::consts::TAU * s * s);
        let inv = 0.5 / (s * s);
        for row in row_lo as usize..=row_hi as usize {
            let dr = row as f64 - r0;
            for col in col_lo as usize..=col_hi as usize {
                let dc = col as f64 - c0;
                self.pixels[row * cam.width + col] += norm * (-(dr * dr + dc * dc) * inv).exp();
            }
        }
    }

    /// Binary 16-bit portable graymap scaled so the brightest pixel is 65535.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        let peak = self.pixels.iter().cloned().fold(0.0, f64::max);
        let scale = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
        write!(out, "P5\n{} {}\n65535\n", self.camera.width, self.camera.height)?;
        let mut buf = Vec::with_capacity(self.pixels.len() * 2);
        for p in &self.pixels {
            let q = (p * scale).round().clamp(0.0, 65535.0) as u16;
            buf.extend_from_slice(&q.to_be_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    /// Metadata written next to the graymap.
    pub fn sidecar(&self) -> FrameSidecar {
        let peak = self.pixels.iter().cloned().fold(0.0, f64::max);
        FrameSidecar {
            camera: self.camera,
            normalization: self.normalization.clone(),
            pgm_scale: if peak > 0.0 { 65535.0 / peak } else { 0.0 },
            pixel_order: "row-major, origin top-left".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSidecar {
    pub camera: CameraConfig,
    pub normalization: Normalization,
    /// Graymap value per unit of frame intensity.
    pub pgm_scale: f64,
    pub pixel_order: String,
}

/// Reads a 16-bit binary graymap back into intensities divided by `scale`.
pub fn read_pgm<R: Read>(mut input: R, camera: &CameraConfig, scale: f64) -> Result<ImageFrame> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::InvalidParameter("truncated graymap header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let bad = || Error::InvalidParameter("unsupported graymap header".into());
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(bad());
    }
    let w: usize = fields[1].parse().map_err(|_| bad())?;
    let h: usize = fields[2].parse().map_err(|_| bad())?;
    if w != camera.width || h != camera.height || bytes.len() < pos + 2 * w * h {
        return Err(bad());
    }
    let inv = if scale > 0.0 { 1.0 / scale } else { 0.0 };
    let pixels = bytes[pos..pos + 2 * w * h].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * inv).collect();
    let mut frame = ImageFrame { camera: *camera, pixels, normalization: Normalization { snapshots: 0, total_weight: 0.0, peak: 0.0 } };
    frame.refresh_peak();
    Ok(frame)
}

/// Frame of a static configuration given in reduced units, every ion with unit
/// weight.
pub fn render_positions(positions: &[Vec3], camera: &CameraConfig, units: &UnitScale) -> Result<ImageFrame> {
    camera.validate()?;
    let mut frame = ImageFrame::empty(camera);
    for r in positions {
        frame.deposit(camera.project(&(r * units.length)), 1.0);
    }
    frame.normalization.snapshots = 1;
    frame.normalization.total_weight = positions.len() as f64;
    frame.refresh_peak();
    Ok(frame)
}

/// Integrates the fluorescence of the first `camera.exposure` seconds of a
/// trajectory. Each ion of each snapshot is weighted by its instantaneous
/// scattering rate.
pub fn render_frame(trajectory: &Trajectory, camera: &CameraConfig, units: &UnitScale, laser: &ScaledLaser) -> Result<ImageFrame> {
    camera.validate()?;
    let covered = trajectory.duration() * units.time;
    if trajectory.snapshots.is_empty() || covered < camera.exposure * (1.0 - 1e-9) {
        return Err(Error::ExposureUnderrun { covered, required: camera.exposure });
    }
    let t0 = trajectory.snapshots[0].time;
    let t_end = t0 + camera.exposure / units.time;
    let tol = 1e-9 * trajectory.sample_interval().max(1e-300);
    let used: Vec<_> = trajectory.snapshots.iter().take_while(|s| s.time <= t_end + tol).collect();
    let dir = Vec3::from(laser.direction);
    let partials: Vec<ImageFrame> = used
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut frame = ImageFrame::empty(camera);
            for snap in chunk {
                for (r, v) in snap.positions.iter().zip(&snap.velocities) {
                    let w = laser.scattering_rate(dir.dot(v));
                    frame.deposit(camera.project(&(r * units.length)), w);
                    frame.normalization.total_weight += w;
                }
            }
            frame.normalization.snapshots = chunk.len();
            frame
        })
        .collect();
    let mut frame = ImageFrame::empty(camera);
    for p in &partials {
        frame.add(p)?;
    }
    Ok(frame)
}

/// Same frame as [`render_frame`] over a trajectory simulated from `start`, but
/// snapshots are deposited as they are produced instead of being stored. Use this
/// for long exposures.
#[allow(clippy::too_many_arguments)]
pub fn render_simulation(
    start: &SystemState,
    trap: &ScaledTrap,
    cooling: &CoolingParams,
    dt: f64,
    stride: usize,
    seed: u64,
    camera: &CameraConfig,
    units: &UnitScale,
    laser: &ScaledLaser,
) -> Result<ImageFrame> {
    camera.validate()?;
    cooling.validate()?;
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut integ = Integrator::new(start.clone(), trap, dt)?;
    let t0 = start.time;
    let t_end = t0 + camera.exposure / units.time;
    let tol = 1e-9 * dt * stride as f64;
    let dir = Vec3::from(laser.direction);
    let mut frame = ImageFrame::empty(camera);
    let mut partial = ImageFrame::empty(camera);
    loop {
        let snap = &integ.state;
        if snap.time > t_end + tol {
            break;
        }
        for (r, v) in snap.positions.iter().zip(&snap.velocities) {
            let w = laser.scattering_rate(dir.dot(v));
            partial.deposit(camera.project(&(r * units.length)), w);
            partial.normalization.total_weight += w;
        }
        partial.normalization.snapshots += 1;
        if partial.normalization.snapshots == CHUNK {
            frame.add(&partial)?;
            partial = ImageFrame::empty(camera);
        }
        if snap.time >= t_end - tol {
            break;
        }
        for _ in 0..stride {
            integ.step(cooling, &mut rng)?;
        }
    }
    if partial.normalization.snapshots > 0 {
        frame.add(&partial)?;
    }
    Ok(frame)
}

/// Long exposure of a laser-cooled crystal, modelled as `starts.len()` equal
/// segments of free evolution, each from its own thermal sample, so that mode
/// energies are re-drawn as the cooling would re-thermalize them. Segment `k`
/// uses seed `seed + k`; frames are summed in segment order.
#[allow(clippy::too_many_arguments)]
pub fn render_segments(
    starts: &[SystemState],
    trap: &ScaledTrap,
    cooling: &CoolingParams,
    dt: f64,
    stride: usize,
    seed: u64,
    camera: &CameraConfig,
    units: &UnitScale,
    laser: &ScaledLaser,
) -> Result<ImageFrame> {
    if starts.is_empty() {
        return Err(Error::InvalidParameter("need at least one segment".into()));
    }
    let segment = CameraConfig { exposure: camera.exposure / starts.len() as f64, ..*camera };
    let frames: Vec<Result<ImageFrame>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, s)| render_simulation(s, trap, cooling, dt, stride, seed.wrapping_add(k as u64), &segment, units, laser))
        .collect();
    let mut frame = ImageFrame::empty(camera);
    for f in frames {
        frame.add(&f?)?;
    }
    Ok(frame)
}

/// Assignment window of one ion: the axial interval between the midpoints to
/// its axial neighbours and a radial band around the reference position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotRegion {
    pub u_range: [f64; 2],
    pub v_range: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlurOptions {
    /// Half-height of the radial band, m.
    pub radial_window: f64,
    /// Axial distance between neighbours below which their regions are
    /// considered to collide, in PSF widths.
    pub min_separation: f64,
}

impl Default for BlurOptions {
    fn default() -> Self {
        BlurOptions { radial_window: 12e-6, min_separation: 2.0 }
    }
}

pub fn spot_regions(reference: &[[f64; 2]], camera: &CameraConfig, opts: &BlurOptions) -> Result<Vec<SpotRegion>> {
    let mut order: Vec<usize> = (0..reference.len()).collect();
    order.sort_by(|&a, &b| reference[a][0].total_cmp(&reference[b][0]));
    let min_gap = opts.min_separation * camera.psf_sigma;
    let mut regions = vec![SpotRegion { u_range: [f64::NEG_INFINITY, f64::INFINITY], v_range: [0.0; 2] }; reference.len()];
    for (k, &i) in order.iter().enumerate() {
        let v = reference[i][1];
        regions[i].v_range = [v - opts.radial_window, v + opts.radial_window];
        if k + 1 < order.len() {
            let j = order[k + 1];
            let gap = reference[j][0] - reference[i][0];
            if gap < min_gap {
                return Err(Error::OverlappingSpots { i: i.min(j), j: i.max(j) });
            }
            let mid = 0.5 * (reference[i][0] + reference[j][0]);
            regions[i].u_range[1] = mid;
            regions[j].u_range[0] = mid;
        }
    }
    Ok(regions)
}

/// Background level: median of the outermost pixel ring.
pub fn border_background(frame: &ImageFrame) -> f64 {
    let (w, h) = (frame.width(), frame.height());
    let mut ring: Vec<f64> = Vec::new();
    for col in 0..w {
        ring.push(frame.at(0, col));
        if h > 1 {
            ring.push(frame.at(h - 1, col));
        }
    }
    for row in 1..h.saturating_sub(1) {
        ring.push(frame.at(row, 0));
        if w > 1 {
            ring.push(frame.at(row, w - 1));
        }
    }
    ring.sort_by(f64::total_cmp);
    ring[ring.len() / 2]
}

/// RMS spread along the radial image axis of the light assigned to each ion,
/// in metres. `reference` holds image-plane coordinates from
/// [`CameraConfig::project`].
pub fn blur_metric(frame: &ImageFrame, reference: &[[f64; 2]], opts: &BlurOptions) -> Result<Vec<f64>> {
    let cam = &frame.camera;
    let regions = spot_regions(reference, cam, opts)?;
    let bg = border_background(frame);
    let mut spreads = Vec::with_capacity(reference.len());
    for region in &regions {
        let mut sum = 0.0;
        let mut first = 0.0;
        let mut second = 0.0;
        let [c_lo, r_hi] = cam.to_pixel([region.u_range[0].max(-1e3), region.v_range[0]]);
        let [c_hi, r_lo] = cam.to_pixel([region.u_range[1].min(1e3), region.v_range[1]]);
        let col_lo = c_lo.floor().max(0.0) as usize;
        let col_hi = (c_hi.ceil().max(0.0) as usize).min(cam.width - 1);
        let row_lo = r_lo.floor().max(0.0) as usize;
        let row_hi = (r_hi.ceil().max(0.0) as usize).min(cam.height - 1);
        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                let [u, v] = cam.to_image_plane([col as f64, row as f64]);
                if u < region.u_range[0] || u >= region.u_range[1] || v < region.v_range[0] || v > region.v_range[1] {
                    continue;
                }
                let w = (frame.at(row, col) - bg).max(0.0);
                sum += w;
                first += w * v;
                second += w * v * v;
            }
        }
        if sum <= 0.0 {
            spreads.push(0.0);
            continue;
        }
        let mean = first / sum;
        spreads.push((second / sum - mean * mean).max(0.0).sqrt());
    }
    Ok(spreads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Maxima dimmer than this fraction of the brightest pixel are ignored.
    pub threshold: f64,
    /// Half-width of the fit window, pixels.
    pub window: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { threshold: 0.2, window: 3 }
    }
}

/// Fitted spot centres in image-plane coordinates (metres), sorted along the
/// axis.
pub fn extract_positions(frame: &ImageFrame, expected_count: usize) -> Result<Vec<[f64; 2]>> {
    extract_positions_with(frame, expected_count, &ExtractOptions::default())
}

pub fn extract_positions_with(frame: &ImageFrame, expected_count: usize, opts: &ExtractOptions) -> Result<Vec<[f64; 2]>> {
    if expected_count == 0 {
        return Err(Error::InvalidParameter("expected_count must be >= 1".into()));
    }
    let (w, h) = (frame.width(), frame.height());
    let bg = border_background(frame);
    let peak = frame.pixels.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - bg;
    let mut maxima = Vec::new();
    if peak > 0.0 {
        let cut = bg + opts.threshold * peak;
        for row in 0..h {
            for col in 0..w {
                let p = frame.at(row, col);
                if p <= cut {
                    continue;
                }
                let mut is_max = true;
                'nb: for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (r, c) = (row as i64 + dr, col as i64 + dc);
                        if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                            continue;
                        }
                        let q = frame.at(r as usize, c as usize);
                        // ties broken towards the first pixel in scan order
                        if q > p || (q == p && (dr < 0 || (dr == 0 && dc < 0))) {
                            is_max = false;
                            break 'nb;
                        }
                    }
                }
                if is_max {
                    maxima.push((row, col));
                }
            }
        }
    }
    if maxima.len() != expected_count {
        return Err(Error::CountMismatch { expected: expected_count, found: maxima.len() });
    }
    let mut out: Vec<[f64; 2]> = maxima.iter().map(|&(r, c)| frame.camera.to_image_plane(fit_gaussian(frame, r, c, opts.window, bg))).collect();
    out.sort_by(|a, b| a[0].total_cmp(&b[0]));
    Ok(out)
}

/// Levenberg-Marquardt fit of `b + A exp(-((c-c0)^2 + (r-r0)^2) / 2s^2)` to the
/// window around a maximum. Returns `(c0, r0)`, or the intensity centroid if
/// the fit does not behave.
fn fit_gaussian(frame: &ImageFrame, row: usize, col: usize, half: usize, bg: f64) -> [f64; 2] {
    let (w, h) = (frame.width(), frame.height());
    let r_lo = row.saturating_sub(half);
    let r_hi = (row + half).min(h - 1);
    let c_lo = col.saturating_sub(half);
    let c_hi = (col + half).min(w - 1);
    let mut pts = Vec::new();
    let (mut sw, mut sc, mut sr) = (0.0, 0.0, 0.0);
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            let z = frame.at(r, c);
            pts.push((c as f64, r as f64, z));
            let wz = (z - bg).max(0.0);
            sw += wz;
            sc += wz * c as f64;
            sr += wz * r as f64;
        }
    }
    let centroid = if sw > 0.0 { [sc / sw, sr / sw] } else { [col as f64, row as f64] };
    let s_guess = frame.camera.psf_sigma / frame.camera.pixel_size;
    let mut p = Vector5::new(frame.at(row, col) - bg, centroid[0], centroid[1], s_guess, bg);
    let residuals = |p: &Vector5<f64>| -> f64 {
        pts.iter()
            .map(|&(c, r, z)| {
                let e = (-((c - p[1]).powi(2) + (r - p[2]).powi(2)) / (2.0 * p[3] * p[3])).exp();
                (p[4] + p[0] * e - z).powi(2)
            })
            .sum()
    };
    let mut cost = residuals(&p);
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let mut jtj = Matrix5::zeros();
        let mut jtr = Vector5::zeros();
        for &(c, r, z) in &pts {
            let (dc, dr) = (c - p[1], r - p[2]);
            let s2 = p[3] * p[3];
            let e = (-(dc * dc + dr * dr) / (2.0 * s2)).exp();
            let res = p[4] + p[0] * e - z;
            let jac = Vector5::new(e, p[0] * e * dc / s2, p[0] * e * dr / s2, p[0] * e * (dc * dc + dr * dr) / (s2 * p[3]), 1.0);
            jtj += jac * jac.transpose();
            jtr += jac * res;
        }
        let mut damped = jtj;
        for k in 0..5 {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let Some(step) = damped.lu().solve(&(-jtr)) else { break };
        let trial = p + step;
        let trial_cost = residuals(&trial);
        if trial_cost.is_finite() && trial_cost < cost && trial[3] > 0.0 {
            let done = step.fixed_rows::<2>(1).norm() < 1e-10;
            p = trial;
            cost = trial_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e8 {
                break;
            }
        }
    }
    let inside = |x: f64, lo: usize, hi: usize| x >= lo as f64 - 0.5 && x <= hi as f64 + 0.5;
    if p[0] > 0.0 && inside(p[1], c_lo, c_hi) && inside(p[2], r_lo, r_hi) {
        [p[1], p[2]]
    } else {
        centroid
    }
}
