//! Time-domain OFDM probing used to observe a channel through a cyclic
//! prefix that may be shorter than its delay spread.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

// Unused whenever std is linked and supplies the inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use num_complex::Complex64;
use rand::Rng;

use super::{ChannelGrid, CMatrix, ImpulseResponse, OfdmConfig};
use crate::error::{bail, Result};
use crate::rng;

/// `H[k] = Σ_l h[l] · exp(-i·2π·(k - N/2)·l / N)` for `k` in `0..n`.
pub fn centered_dft(taps: &[Complex64], n: usize) -> Vec<Complex64> {
    let table = twiddles(n);
    let center = n / 2;
    (0..n)
        .map(|k| {
            let f = (k + n - center) % n;
            taps.iter()
                .enumerate()
                .map(|(l, h)| h * table[(f * (l % n)) % n])
                .sum()
        })
        .collect()
}

/// `exp(-i·2π·j/n)` for `j` in `0..n`.
fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n).map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / n as f64)).collect()
}

/// Unit-power QPSK symbols drawn from `seed`.
pub fn qpsk_symbols(n: usize, seed: u64, tag: &str) -> Vec<Complex64> {
    let mut rng = rng::stream(seed, tag);
    (0..n)
        .map(|_| {
            let re = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            Complex64::new(re, im)
        })
        .collect()
}

/// Unitary centered OFDM modulation of one symbol.
fn modulate(freq: &[Complex64], table: &[Complex64]) -> Vec<Complex64> {
    let n = freq.len();
    let center = n / 2;
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|t| {
            let s: Complex64 = freq
                .iter()
                .enumerate()
                .map(|(k, x)| {
                    let f = (k + n - center) % n;
                    // exp(+i·2π·f·t/N) is the conjugate of the forward twiddle.
                    x * table[(f * t) % n].conj()
                })
                .sum();
            s * scale
        })
        .collect()
}

fn demodulate(time: &[Complex64], table: &[Complex64]) -> Vec<Complex64> {
    let n = time.len();
    let center = n / 2;
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            let f = (k + n - center) % n;
            let s: Complex64 = time.iter().enumerate().map(|(t, y)| y * table[(f * t) % n]).sum();
            s * scale
        })
        .collect()
}

/// Channel as seen by a least-squares estimator on the second of two
/// back-to-back OFDM symbols.
///
/// Both symbols carry unit-power QPSK drawn from `data_seed`; the second is
/// the known probe. The transmit stream `[CP, sym1, CP, sym2]` is linearly
/// convolved with each antenna's taps, the probe's CP is stripped and the
/// result demodulated. With `num_taps - 1 <= cp_length` this reproduces the
/// centered DFT of the taps; longer responses leak the first symbol and the
/// probe's own tail into the estimate.
pub fn observe_with_cp(ir: &ImpulseResponse, ofdm: &OfdmConfig, data_seed: u64) -> Result<ChannelGrid> {
    ofdm.validate()?;
    if !ir.taps.is_finite() {
        bail!(Domain, "impulse response has non-finite taps");
    }
    let n = ofdm.num_subcarriers;
    let cp = ofdm.cp_length;
    let table = twiddles(n);
    let data = qpsk_symbols(n, data_seed, "ofdm.probe.data");
    let probe = qpsk_symbols(n, data_seed, "ofdm.probe.pilot");

    let sym_len = n + cp;
    let mut stream = Vec::with_capacity(2 * sym_len);
    for freq in [&data, &probe] {
        let time = modulate(freq, &table);
        stream.extend_from_slice(&time[n - cp..]);
        stream.extend_from_slice(&time);
    }

    let probe_start = sym_len + cp;
    let mut out = CMatrix::zeros(ir.taps.rows(), n);
    let mut received = vec![Complex64::new(0.0, 0.0); n];
    for m in 0..ir.taps.rows() {
        let h = ir.taps.row(m);
        for (t, y) in received.iter_mut().enumerate() {
            let idx = probe_start + t;
            *y = h
                .iter()
                .enumerate()
                .take(idx + 1)
                .map(|(l, hl)| hl * stream[idx - l])
                .sum();
        }
        let spectrum = demodulate(&received, &table);
        for (k, (y, x)) in spectrum.iter().zip(&probe).enumerate() {
            out[(m, k)] = y / x;
        }
    }
    ChannelGrid::new(out, ir.geometry, *ofdm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{nmse, ArrayGeometry};

    fn cfg(n: usize, cp: usize) -> OfdmConfig {
        OfdmConfig { carrier_freq: 60e9, subcarrier_spacing: 60e3, num_subcarriers: n, cp_length: cp }
    }

    fn ir(taps: Vec<Vec<Complex64>>) -> ImpulseResponse {
        let rows = taps.len();
        let cols = taps[0].len();
        let flat = taps.into_iter().flatten().collect();
        ImpulseResponse {
            taps: CMatrix::from_vec(rows, cols, flat).unwrap(),
            geometry: ArrayGeometry::new(1, rows, 0.0025).unwrap(),
        }
    }

    fn decaying_taps(len: usize, antennas: usize) -> ImpulseResponse {
        ir((0..antennas)
            .map(|m| {
                (0..len)
                    .map(|l| Complex64::from_polar(1.0 / (1.0 + l as f64), 0.7 * l as f64 + m as f64))
                    .collect()
            })
            .collect())
    }

    fn truth(ir: &ImpulseResponse, n: usize) -> CMatrix {
        let mut out = CMatrix::zeros(ir.taps.rows(), n);
        for m in 0..ir.taps.rows() {
            out.row_mut(m).copy_from_slice(&centered_dft(ir.taps.row(m), n));
        }
        out
    }

    #[test]
    fn sufficient_cp_recovers_true_response() {
        let c = cfg(64, 8);
        let taps = decaying_taps(9, 3);
        let obs = observe_with_cp(&taps, &c, 5).unwrap();
        let err = nmse(&obs.values, &truth(&taps, 64)).unwrap();
        assert!(err <= 1e-10, "nmse {err}");
    }

    #[test]
    fn short_cp_distorts() {
        let c = cfg(64, 8);
        let taps = decaying_taps(8 + 4 + 1, 2);
        let obs = observe_with_cp(&taps, &c, 5).unwrap();
        let err = nmse(&obs.values, &truth(&taps, 64)).unwrap();
        assert!(err > 1e-4, "nmse {err}");
    }

    #[test]
    fn observation_is_deterministic() {
        let c = cfg(32, 2);
        let taps = decaying_taps(10, 2);
        assert_eq!(observe_with_cp(&taps, &c, 9).unwrap(), observe_with_cp(&taps, &c, 9).unwrap());
    }

    #[test]
    fn modulation_round_trips() {
        let table = twiddles(16);
        let x = qpsk_symbols(16, 1, "t");
        let back = demodulate(&modulate(&x, &table), &table);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
