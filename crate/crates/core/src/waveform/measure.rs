use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{fft_forward, SymbolFrame, Waveform};
use crate::budget::db;
use crate::error::{invalid, Error, Result};

/// Frequency interval `[lo_hz, hi_hz]` relative to the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Band {
    pub fn new(lo_hz: f64, hi_hz: f64) -> Self {
        Self { lo_hz, hi_hz }
    }

    /// The whole Nyquist interval of `sample_rate_hz`.
    pub fn full(sample_rate_hz: f64) -> Self {
        Self::new(-sample_rate_hz / 2.0, sample_rate_hz / 2.0)
    }

    pub fn width_hz(&self) -> f64 {
        self.hi_hz - self.lo_hz
    }

    fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        let ny = sample_rate_hz / 2.0;
        let ok = self.lo_hz.is_finite()
            && self.hi_hz.is_finite()
            && self.lo_hz <= self.hi_hz
            && self.lo_hz >= -ny
            && self.hi_hz <= ny;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidBand {
                lo: self.lo_hz,
                hi: self.hi_hz,
                sample_rate: sample_rate_hz,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformStats {
    pub avg_power_dbm: f64,
    pub papr_db: f64,
    /// Width of the centred band holding 99% of the power.
    pub occupied_bw_hz: f64,
}

/// Unnormalized DFT of the whole waveform.
pub fn spectrum(wf: &Waveform) -> Vec<Complex64> {
    let mut buf = wf.samples.clone();
    fft_forward(&mut buf);
    buf
}

fn bin_freq(k: usize, n: usize, fs: f64) -> f64 {
    let k = if k <= (n - 1) / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    };
    k * fs / n as f64
}

/// Channel power of a precomputed [`spectrum`] over `band`, in dBm.
///
/// By Parseval, `Σ_k |Y_k|² / N²` over all bins equals the mean-square of
/// the samples, so the full band reproduces `avg_power_dbm` exactly.
pub fn band_power_from_spectrum(
    spec: &[Complex64],
    sample_rate_hz: f64,
    power_scale_mw: f64,
    band: Band,
) -> Result<f64> {
    band.validate(sample_rate_hz)?;
    let n = spec.len();
    if n == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = spec
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = bin_freq(*k, n, sample_rate_hz);
            f >= band.lo_hz && f <= band.hi_hz
        })
        .map(|(_, y)| y.norm_sqr())
        .sum();
    Ok(db(sum / (n as f64 * n as f64) * power_scale_mw))
}

/// Integrated periodogram power inside `band`, in dBm. A band containing no
/// frequency bins yields `-inf`.
pub fn measure_channel_power(wf: &Waveform, band: Band) -> Result<f64> {
    band.validate(wf.sample_rate_hz)?;
    band_power_from_spectrum(&spectrum(wf), wf.sample_rate_hz, wf.power_scale_mw, band)
}

/// Peak-to-average power ratio at `percentile` of the instantaneous power
/// distribution (100 gives the absolute peak).
pub fn measure_papr(wf: &Waveform, percentile: f64) -> Result<f64> {
    if wf.is_empty() {
        return Err(Error::Empty("waveform"));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(invalid(
            "percentile",
            format!("must lie in (0, 100], got {percentile}"),
        ));
    }
    let mut p: Vec<f64> = wf.samples.iter().map(|s| s.norm_sqr()).collect();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    if mean == 0.0 {
        return Err(Error::ZeroPowerReference);
    }
    let idx = ((percentile / 100.0 * p.len() as f64).ceil() as usize).clamp(1, p.len()) - 1;
    let (_, v, _) = p.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(db(*v / mean).max(0.0))
}

/// Width of the band centred on DC that holds `fraction` of the power.
pub fn measure_occupied_bw(wf: &Waveform, fraction: f64) -> Result<f64> {
    if wf.is_empty() {
        return Err(Error::Empty("waveform"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("fraction", "must lie in (0, 1]"));
    }
    let spec = spectrum(wf);
    let n = spec.len();
    let total: f64 = spec.iter().map(|y| y.norm_sqr()).sum();
    if total == 0.0 {
        return Err(Error::ZeroPowerReference);
    }
    // Grow a symmetric window bin by bin until it holds the fraction.
    let mut acc = spec[0].norm_sqr();
    let mut half = 0usize;
    while acc < fraction * total && half < n / 2 {
        half += 1;
        acc += spec[half].norm_sqr();
        if n - half != half {
            acc += spec[n - half].norm_sqr();
        }
    }
    Ok((2 * half + 1) as f64 * wf.sample_rate_hz / n as f64)
}

/// Average power, PAPR at `papr_percentile`, and 99% occupied bandwidth.
pub fn stats(wf: &Waveform, papr_percentile: f64) -> Result<WaveformStats> {
    Ok(WaveformStats {
        avg_power_dbm: wf.avg_power_dbm(),
        papr_db: measure_papr(wf, papr_percentile)?,
        occupied_bw_hz: measure_occupied_bw(wf, 0.99)?,
    })
}

/// RMS error vector magnitude in percent:
/// `100·√(Σ|rx − ref|² / Σ|ref|²)`.
pub fn measure_evm(rx: &SymbolFrame, reference: &SymbolFrame) -> Result<f64> {
    if rx.n_symbols != reference.n_symbols
        || rx.n_active != reference.n_active
        || rx.symbols.len() != reference.symbols.len()
    {
        return Err(Error::LengthMismatch {
            expected: reference.symbols.len(),
            actual: rx.symbols.len(),
        });
    }
    let den: f64 = reference.symbols.iter().map(|r| r.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::ZeroPowerReference);
    }
    let num: f64 = rx
        .symbols
        .iter()
        .zip(&reference.symbols)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(100.0 * (num / den).sqrt())
}
