//! Quick numerical self-checks of an installed build: analytic gradients
//! against central differences, the tap-domain response against a direct
//! DFT, and the cyclic-prefix dichotomy of the OFDM probe.

use chanex_core::channel::{centered_dft, impulse_response, nmse, observe_with_cp, synth_freq_response};
use chanex_core::channel::{ArrayGeometry, CMatrix, ImpulseResponse, OfdmConfig};
use chanex_core::nn::{backward, forward, LayerSpec, NetworkSpec, ParamStore, Tensor};
use chanex_core::rng;
use chanex_core::scene::{Path, PathSet};
use num_complex::Complex64;
use rand::Rng;

use crate::error::Result;

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const DFT_TOLERANCE: f64 = 1e-6;
pub const CP_EXACT_TOLERANCE: f64 = 1e-10;
pub const CP_DISTORTION_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst value observed against its bound.
    pub detail: String,
}

/// One small network per layer type, named after it.
pub fn gradient_networks() -> Vec<(&'static str, NetworkSpec)> {
    let inner = NetworkSpec::new(vec![6], vec![LayerSpec::dense(6, 6), LayerSpec::Relu]);
    vec![
        ("dense", NetworkSpec::new(vec![6], vec![LayerSpec::dense(6, 4)])),
        ("conv2d", NetworkSpec::new(vec![2, 3, 5], vec![LayerSpec::conv(2, 3, [3, 3], [1, 1])])),
        ("relu", NetworkSpec::new(vec![6], vec![LayerSpec::dense(6, 5), LayerSpec::Relu, LayerSpec::dense(5, 3)])),
        (
            "ode_block",
            NetworkSpec::new(vec![6], vec![LayerSpec::OdeBlock { inner: Box::new(inner), steps: 3, step_size: 0.3 }]),
        ),
        (
            "concat",
            NetworkSpec::new(
                vec![7],
                vec![
                    LayerSpec::Concat {
                        branch_a: Box::new(NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 2)])),
                        branch_b: Box::new(NetworkSpec::new(vec![4], vec![LayerSpec::dense(4, 3), LayerSpec::Relu])),
                    },
                    LayerSpec::dense(5, 2),
                ],
            ),
        ),
    ]
}

/// Largest relative error between backprop and central differences over
/// `coords` random parameter coordinates plus every input coordinate, for
/// the loss `Σ w·out` with random weights `w`.
pub fn gradient_error(spec: &NetworkSpec, seed: u64, coords: usize) -> Result<f64> {
    let mut rng = rng::stream(seed, "selftest.gradient");
    let params = ParamStore::init(spec, seed)?;
    let input_len = spec.input_len();
    let input = Tensor::new(spec.input_shape.clone(), (0..input_len).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let out_shape = spec.output_shape()?;
    let out_len: usize = out_shape.iter().product();
    let weights = Tensor::new(out_shape, (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let loss = |p: &ParamStore, x: &Tensor| -> Result<f64> {
        let (out, _) = forward(spec, p, x)?;
        Ok(out.data().iter().zip(weights.data()).map(|(o, w)| o * w).sum())
    };
    let (_, tape) = forward(spec, &params, &input)?;
    let grads = backward(spec, &params, &tape, &weights)?;
    let h = 1e-6;
    let rel = |analytic: f64, numeric: f64| (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
    let mut worst: f64 = 0.0;
    let sizes: Vec<usize> = params.tensors().iter().map(Tensor::len).collect();
    let total: usize = sizes.iter().sum();
    for _ in 0..coords.min(total) {
        let mut flat = rng.random_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        let mut plus = params.clone();
        plus.tensors_mut()[t].data_mut()[flat] += h;
        let mut minus = params.clone();
        minus.tensors_mut()[t].data_mut()[flat] -= h;
        let numeric = (loss(&plus, &input)? - loss(&minus, &input)?) / (2.0 * h);
        worst = worst.max(rel(grads.params.tensors()[t].data()[flat], numeric));
    }
    for i in 0..input_len {
        let mut plus = input.clone();
        plus.data_mut()[i] += h;
        let mut minus = input.clone();
        minus.data_mut()[i] -= h;
        let numeric = (loss(&params, &plus)? - loss(&params, &minus)?) / (2.0 * h);
        worst = worst.max(rel(grads.input.data()[i], numeric));
    }
    Ok(worst)
}

/// Random multipath with delays on the sample grid of `ofdm`.
pub fn random_paths(seed: u64, ofdm: &OfdmConfig, max_tap: usize) -> PathSet {
    let mut rng = rng::stream(seed, "selftest.paths");
    let count = rng.random_range(1..=6);
    let paths = (0..count)
        .map(|i| Path {
            scatterer: (i > 0).then_some(i),
            complex_gain: Complex64::from_polar(rng.random_range(0.1..1.0), rng.random_range(-3.14..3.14)),
            delay: rng.random_range(0..=max_tap) as f64 / ofdm.bandwidth(),
            aod_az: 0.0,
            aod_el: 0.0,
            aoa_az: rng.random_range(-1.5..1.5),
            aoa_el: rng.random_range(-0.5..0.5),
        })
        .collect();
    PathSet { paths }
}

/// Relative error between the synthesized frequency response and the
/// centered DFT of the impulse response.
pub fn dft_error(paths: &PathSet, geom: &ArrayGeometry, ofdm: &OfdmConfig) -> Result<f64> {
    let grid = synth_freq_response(paths, geom, ofdm)?;
    let ir = impulse_response(paths, geom, ofdm)?;
    let mut oracle = CMatrix::zeros(geom.num_elements(), ofdm.num_subcarriers);
    for m in 0..geom.num_elements() {
        oracle.row_mut(m).copy_from_slice(&centered_dft(ir.taps.row(m), ofdm.num_subcarriers));
    }
    Ok(nmse(&grid.values, &oracle)?)
}

/// Taps with `spread + 1` decaying entries on each of `antennas` rows.
pub fn decaying_response(spread: usize, antennas: usize) -> ImpulseResponse {
    let taps = CMatrix::from_fn(antennas, spread + 1, |m, l| {
        Complex64::from_polar(1.0 / (1.0 + l as f64), 0.7 * l as f64 + m as f64)
    });
    ImpulseResponse { taps, geometry: ArrayGeometry::new(1, antennas, 0.0025).expect("valid geometry") }
}

/// NMSE of the CP-probed estimate against the true response.
pub fn cp_error(ir: &ImpulseResponse, ofdm: &OfdmConfig, seed: u64) -> Result<f64> {
    let obs = observe_with_cp(ir, ofdm, seed)?;
    let mut truth = CMatrix::zeros(ir.taps.rows(), ofdm.num_subcarriers);
    for m in 0..ir.taps.rows() {
        truth.row_mut(m).copy_from_slice(&centered_dft(ir.taps.row(m), ofdm.num_subcarriers));
    }
    Ok(nmse(&obs.values, &truth)?)
}

pub fn run_all() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (name, spec) in gradient_networks() {
        let mut worst: f64 = 0.0;
        for seed in 1..=3 {
            worst = worst.max(gradient_error(&spec, seed, 20)?);
        }
        checks.push(Check {
            name: format!("gradient {name}"),
            passed: worst <= GRADIENT_TOLERANCE,
            detail: format!("max rel err {worst:.2e} (<= {GRADIENT_TOLERANCE:e})"),
        });
    }

    let ofdm = OfdmConfig { carrier_freq: 28e9, subcarrier_spacing: 120e3, num_subcarriers: 64, cp_length: 8 };
    let geom = ArrayGeometry::half_wavelength(2, 4, ofdm.carrier_freq)?;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        worst = worst.max(dft_error(&random_paths(seed, &ofdm, 20), &geom, &ofdm)?);
    }
    checks.push(Check {
        name: "tap response matches DFT".into(),
        passed: worst <= DFT_TOLERANCE,
        detail: format!("max nmse {worst:.2e} (<= {DFT_TOLERANCE:e})"),
    });

    let exact = cp_error(&decaying_response(ofdm.cp_length, 3), &ofdm, 1)?;
    checks.push(Check {
        name: "spread within CP is exact".into(),
        passed: exact <= CP_EXACT_TOLERANCE,
        detail: format!("nmse {exact:.2e} (<= {CP_EXACT_TOLERANCE:e})"),
    });
    let leaky = cp_error(&decaying_response(ofdm.cp_length + 4, 3), &ofdm, 1)?;
    checks.push(Check {
        name: "spread beyond CP distorts".into(),
        passed: leaky >= CP_DISTORTION_FLOOR,
        detail: format!("nmse {leaky:.2e} (>= {CP_DISTORTION_FLOOR:e})"),
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all().unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
