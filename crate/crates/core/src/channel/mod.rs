//! Frequency-domain MIMO-OFDM channels built from path sets.
//!
//! Antenna elements are ordered row-major: element `k` sits at row
//! `p = k / cols`, column `q = k % cols`. Subcarrier `k` has baseband
//! frequency `(k - N/2) * subcarrier_spacing` (integer division).

mod matrix;
mod ofdm;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::rng;
use crate::scene::{PathSet, SPEED_OF_LIGHT};

pub use matrix::CMatrix;
pub use ofdm::{centered_dft, observe_with_cp, qpsk_symbols};

/// Uniform planar array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Meters.
    pub element_spacing: f64,
}

impl ArrayGeometry {
    pub fn new(rows: usize, cols: usize, element_spacing: f64) -> Result<Self> {
        let g = Self { rows, cols, element_spacing };
        g.validate()?;
        Ok(g)
    }

    /// Array with half-wavelength spacing at `carrier_freq`.
    pub fn half_wavelength(rows: usize, cols: usize, carrier_freq: f64) -> Result<Self> {
        Self::new(rows, cols, wavelength(carrier_freq) / 2.0)
    }

    pub fn num_elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            bail!(Config, "array needs at least one row and one column");
        }
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            bail!(Config, "element spacing must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    /// Hz.
    pub carrier_freq: f64,
    /// Hz.
    pub subcarrier_spacing: f64,
    pub num_subcarriers: usize,
    /// Samples.
    pub cp_length: usize,
}

impl OfdmConfig {
    /// Total bandwidth, `num_subcarriers * subcarrier_spacing`.
    pub fn bandwidth(&self) -> f64 {
        self.num_subcarriers as f64 * self.subcarrier_spacing
    }

    /// Duration of one time-domain sample, `1 / bandwidth`.
    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth()
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.carrier_freq)
    }

    /// Baseband frequency of subcarrier `k`.
    pub fn subcarrier_freq(&self, k: usize) -> f64 {
        (k as f64 - (self.num_subcarriers / 2) as f64) * self.subcarrier_spacing
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_freq > 0.0 && self.carrier_freq.is_finite()) {
            bail!(Config, "carrier frequency must be positive");
        }
        if !(self.subcarrier_spacing > 0.0 && self.subcarrier_spacing.is_finite()) {
            bail!(Config, "subcarrier spacing must be positive");
        }
        if self.num_subcarriers == 0 {
            bail!(Config, "need at least one subcarrier");
        }
        if self.cp_length >= self.num_subcarriers {
            bail!(Config, "cp_length {} must be below num_subcarriers {}", self.cp_length, self.num_subcarriers);
        }
        Ok(())
    }
}

pub fn wavelength(freq: f64) -> f64 {
    SPEED_OF_LIGHT / freq
}

/// Channel over (antenna elements × subcarriers).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelGrid {
    pub values: CMatrix,
    pub geometry: ArrayGeometry,
    pub ofdm: OfdmConfig,
}

impl ChannelGrid {
    pub fn new(values: CMatrix, geometry: ArrayGeometry, ofdm: OfdmConfig) -> Result<Self> {
        if values.rows() != geometry.num_elements() || values.cols() != ofdm.num_subcarriers {
            bail!(
                Usage,
                "grid shape {}x{} does not match {} elements x {} subcarriers",
                values.rows(),
                values.cols(),
                geometry.num_elements(),
                ofdm.num_subcarriers
            );
        }
        if !values.is_finite() {
            bail!(Domain, "channel grid has non-finite entries");
        }
        Ok(Self { values, geometry, ofdm })
    }

    pub fn antennas(&self) -> usize {
        self.values.rows()
    }

    pub fn subcarriers(&self) -> usize {
        self.values.cols()
    }
}

/// Time-domain taps per antenna element, tap `l` at delay `l / bandwidth`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseResponse {
    pub taps: CMatrix,
    pub geometry: ArrayGeometry,
}

impl ImpulseResponse {
    pub fn num_taps(&self) -> usize {
        self.taps.cols()
    }
}

/// Unit-modulus UPA response towards (`az`, `el`).
///
/// Element at row `p`, column `q` has phase
/// `2π/λ · spacing · (p·sin(el) + q·cos(el)·sin(az))`.
pub fn steering_vector(geom: &ArrayGeometry, az: f64, el: f64, wavelength: f64) -> Result<Vec<Complex64>> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        bail!(Domain, "wavelength must be positive, got {wavelength}");
    }
    let k = 2.0 * PI / wavelength * geom.element_spacing;
    let vertical = el.sin();
    let horizontal = el.cos() * az.sin();
    let mut out = Vec::with_capacity(geom.num_elements());
    for p in 0..geom.rows {
        for q in 0..geom.cols {
            let phase = k * (p as f64 * vertical + q as f64 * horizontal);
            out.push(Complex64::from_polar(1.0, phase));
        }
    }
    Ok(out)
}

/// Frequency response of `paths` on the array and subcarrier grid.
pub fn synth_freq_response(paths: &PathSet, geom: &ArrayGeometry, ofdm: &OfdmConfig) -> Result<ChannelGrid> {
    if paths.is_empty() {
        bail!(Domain, "empty path set has no channel");
    }
    geom.validate()?;
    ofdm.validate()?;
    let n_ant = geom.num_elements();
    let n_sc = ofdm.num_subcarriers;
    let lambda = ofdm.wavelength();
    let mut values = CMatrix::zeros(n_ant, n_sc);
    let mut phasor = vec![Complex64::new(0.0, 0.0); n_sc];
    for path in paths.iter() {
        let a = steering_vector(geom, path.aoa_az, path.aoa_el, lambda)?;
        for (k, ph) in phasor.iter_mut().enumerate() {
            *ph = path.complex_gain * Complex64::from_polar(1.0, -2.0 * PI * ofdm.subcarrier_freq(k) * path.delay);
        }
        for (m, am) in a.iter().enumerate() {
            for (v, ph) in values.row_mut(m).iter_mut().zip(&phasor) {
                *v += am * ph;
            }
        }
    }
    ChannelGrid::new(values, *geom, *ofdm)
}

/// Tap-domain response: each path lands on tap `round(delay · bandwidth)`.
pub fn impulse_response(paths: &PathSet, geom: &ArrayGeometry, ofdm: &OfdmConfig) -> Result<ImpulseResponse> {
    if paths.is_empty() {
        bail!(Domain, "empty path set has no channel");
    }
    geom.validate()?;
    ofdm.validate()?;
    let bw = ofdm.bandwidth();
    let mut indices = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let idx = (p.delay * bw).round();
        if !(p.delay >= 0.0) || idx >= ofdm.num_subcarriers as f64 {
            bail!(
                Domain,
                "path {i} delay {:e} s exceeds the symbol duration {:e} s",
                p.delay,
                ofdm.num_subcarriers as f64 / bw
            );
        }
        indices.push(idx as usize);
    }
    let num_taps = indices.iter().copied().max().unwrap_or(0) + 1;
    let lambda = ofdm.wavelength();
    let mut taps = CMatrix::zeros(geom.num_elements(), num_taps);
    for (p, &l) in paths.iter().zip(&indices) {
        let a = steering_vector(geom, p.aoa_az, p.aoa_el, lambda)?;
        for (m, am) in a.iter().enumerate() {
            taps[(m, l)] += am * p.complex_gain;
        }
    }
    Ok(ImpulseResponse { taps, geometry: *geom })
}

/// Adds circularly-symmetric complex Gaussian noise at `snr_db` relative to
/// the mean entry power. `snr_db = +∞` returns the input unchanged.
pub fn add_noise(grid: &ChannelGrid, snr_db: f64, seed: u64) -> Result<ChannelGrid> {
    let values = add_noise_matrix(&grid.values, snr_db, seed)?;
    Ok(ChannelGrid { values, geometry: grid.geometry, ofdm: grid.ofdm })
}

/// [`add_noise`] on a bare matrix.
pub fn add_noise_matrix(values: &CMatrix, snr_db: f64, seed: u64) -> Result<CMatrix> {
    if !values.is_finite() {
        bail!(Domain, "cannot add noise to a non-finite grid");
    }
    if snr_db.is_nan() {
        bail!(Domain, "snr_db is NaN");
    }
    if snr_db == f64::INFINITY || values.is_empty() {
        return Ok(values.clone());
    }
    let signal = values.mean_power();
    let variance = signal / 10.0.powf(snr_db / 10.0);
    let sigma = (variance / 2.0).sqrt();
    let mut rng = rng::stream(seed, "channel.noise");
    let mut out = values.clone();
    for v in out.as_mut_slice() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *v += Complex64::new(sigma * re, sigma * im);
    }
    if !out.is_finite() {
        bail!(Domain, "noise at {snr_db} dB produced non-finite entries");
    }
    Ok(out)
}

/// Normalized mean square error between two complex matrices of equal shape.
pub fn nmse(estimate: &CMatrix, truth: &CMatrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        bail!(Usage, "nmse shape mismatch {:?} vs {:?}", estimate.shape(), truth.shape());
    }
    let denom = truth.frobenius_sq();
    if denom == 0.0 {
        bail!(Domain, "nmse against a zero-norm reference");
    }
    let num: f64 = estimate
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(num / denom)
}
