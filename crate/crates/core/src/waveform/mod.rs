//! OFDM 64-QAM complex-baseband waveforms and their measurements.
//!
//! A [`Waveform`] stores dimensionless samples together with a power scale:
//! the physical power in mW of a sample `s` is `|s|² · power_scale_mw`. Blocks
//! that need absolute levels (amplifier intercepts, ADC full scale, thermal
//! noise) convert through that scale, so the dBm bookkeeping is exact and
//! independent of any impedance convention.
//!
//! OFDM synthesis uses `x[n] = (1/√N_act) Σ_k X_k e^{j2πkn/M}` over an
//! oversampled IFFT of length `M = fft_size · oversampling_factor`, which
//! gives unit mean power for unit-power symbols; demodulation is the exact
//! inverse.

mod fft;
mod measure;

pub use fft::{fft_forward, fft_inverse};
pub use measure::{
    band_power_from_spectrum, measure_channel_power, measure_evm, measure_occupied_bw,
    measure_papr, spectrum, stats, Band, WaveformStats,
};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::budget::{db, lin};
use crate::error::{invalid, Error, Result};

/// OFDM numerology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfdmConfig {
    pub scs_hz: f64,
    pub occupied_bw_hz: f64,
    /// Subcarriers per symbol before oversampling; power of two.
    pub fft_size: usize,
    /// Even count, split evenly around a nulled DC subcarrier.
    pub n_active_subcarriers: usize,
    pub cp_fraction: f64,
    pub n_symbols: usize,
    /// Sample rate over `fft_size · scs_hz`; power of two.
    pub oversampling_factor: usize,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            scs_hz: 120e3,
            occupied_bw_hz: 400e6,
            fft_size: 4096,
            n_active_subcarriers: 3332,
            cp_fraction: 1.0 / 16.0,
            n_symbols: 14,
            oversampling_factor: 2,
        }
    }
}

/// How far `n_active · scs` may sit from `occupied_bw_hz`, in subcarriers.
/// The default numerology is 1.33 subcarriers short of 400 MHz.
pub const BW_TOLERANCE_SUBCARRIERS: f64 = 2.0;

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scs_hz > 0.0 && self.scs_hz.is_finite()) {
            return Err(invalid("scs_hz", "must be positive"));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < 4 {
            return Err(invalid(
                "fft_size",
                format!("must be a power of two >= 4, got {}", self.fft_size),
            ));
        }
        if !self.oversampling_factor.is_power_of_two() {
            return Err(invalid(
                "oversampling_factor",
                format!("must be a power of two, got {}", self.oversampling_factor),
            ));
        }
        let n = self.n_active_subcarriers;
        if n == 0 || !n.is_multiple_of(2) || n + 2 > self.fft_size {
            return Err(invalid(
                "n_active_subcarriers",
                format!(
                    "must be even, non-zero and leave DC plus a guard in {} bins, got {n}",
                    self.fft_size
                ),
            ));
        }
        if !(0.0..1.0).contains(&self.cp_fraction) {
            return Err(invalid("cp_fraction", "must lie in [0, 1)"));
        }
        let mismatch = (n as f64 * self.scs_hz - self.occupied_bw_hz).abs() / self.scs_hz;
        if !(mismatch <= BW_TOLERANCE_SUBCARRIERS) {
            return Err(invalid(
                "occupied_bw_hz",
                format!(
                    "{} active subcarriers at {} Hz span {} Hz, too far from {} Hz",
                    n,
                    self.scs_hz,
                    n as f64 * self.scs_hz,
                    self.occupied_bw_hz
                ),
            ));
        }
        Ok(())
    }

    /// IFFT length after oversampling.
    pub fn ifft_len(&self) -> usize {
        self.fft_size * self.oversampling_factor
    }

    pub fn cp_len(&self) -> usize {
        (self.cp_fraction * self.ifft_len() as f64).round() as usize
    }

    pub fn symbol_len(&self) -> usize {
        self.ifft_len() + self.cp_len()
    }

    pub fn frame_len(&self) -> usize {
        self.symbol_len() * self.n_symbols
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.ifft_len() as f64 * self.scs_hz
    }

    /// Bandwidth actually occupied by the active subcarriers.
    pub fn active_bw_hz(&self) -> f64 {
        self.n_active_subcarriers as f64 * self.scs_hz
    }

    /// Measurement band of the channel: all active subcarriers including
    /// half a spacing on each outer edge.
    pub fn channel_band(&self) -> Band {
        let edge = (self.n_active_subcarriers as f64 / 2.0 + 0.5) * self.scs_hz;
        Band::new(-edge, edge)
    }

    /// Signed subcarrier index of each active position: `-N/2..-1, 1..N/2`.
    pub fn subcarrier_indices(&self) -> Vec<i64> {
        let h = (self.n_active_subcarriers / 2) as i64;
        (-h..0).chain(1..=h).collect()
    }

    /// IFFT bin of each active position.
    pub fn active_bins(&self) -> Vec<usize> {
        let m = self.ifft_len() as i64;
        self.subcarrier_indices()
            .into_iter()
            .map(|k| k.rem_euclid(m) as usize)
            .collect()
    }
}

/// Complex baseband samples with an absolute power scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    /// Physical power in mW of a sample with `|s|² = 1`.
    pub power_scale_mw: f64,
}

impl Waveform {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64, power_scale_mw: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(invalid("sample_rate_hz", "must be positive"));
        }
        if !(power_scale_mw > 0.0 && power_scale_mw.is_finite()) {
            return Err(invalid("power_scale_mw", "must be positive"));
        }
        if samples
            .iter()
            .any(|s| !s.re.is_finite() || !s.im.is_finite())
        {
            return Err(Error::NonFinite("waveform sample"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            power_scale_mw,
        })
    }

    /// Samples in mW^½ units (scale 1 mW).
    pub fn from_mw_samples(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        Self::new(samples, sample_rate_hz, 1.0)
    }

    pub fn zeros(len: usize, sample_rate_hz: f64) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); len],
            sample_rate_hz,
            power_scale_mw: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean `|s|²` in sample units.
    pub fn mean_square(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Average power in dBm; `-inf` for an all-zero or empty waveform.
    pub fn avg_power_dbm(&self) -> f64 {
        db(self.mean_square() * self.power_scale_mw)
    }

    /// Same physical signal expressed with a different power scale.
    pub fn rescaled(&self, power_scale_mw: f64) -> Waveform {
        let k = (self.power_scale_mw / power_scale_mw).sqrt();
        Waveform {
            samples: self.samples.iter().map(|s| s * k).collect(),
            sample_rate_hz: self.sample_rate_hz,
            power_scale_mw,
        }
    }

    /// Samples as physical amplitudes (scale 1 mW).
    pub fn to_mw(&self) -> Waveform {
        self.rescaled(1.0)
    }

    /// Scales the signal so its average power equals `power_dbm`, keeping
    /// the samples and changing only the scale.
    pub fn with_power_dbm(mut self, power_dbm: f64) -> Result<Waveform> {
        let ms = self.mean_square();
        if ms <= 0.0 {
            return Err(Error::ZeroPowerReference);
        }
        if !power_dbm.is_finite() {
            return Err(Error::NonFinite("power_dbm"));
        }
        self.power_scale_mw = lin(power_dbm) / ms;
        Ok(self)
    }

    pub(crate) fn check_compatible(&self, other: &Waveform) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::SampleRateMismatch(
                self.sample_rate_hz,
                other.sample_rate_hz,
            ));
        }
        Ok(())
    }

    /// Sample-wise sum, expressed in `self`'s power scale.
    pub fn add(&self, other: &Waveform) -> Result<Waveform> {
        self.check_compatible(other)?;
        let k = (other.power_scale_mw / self.power_scale_mw).sqrt();
        Ok(Waveform {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b * k)
                .collect(),
            sample_rate_hz: self.sample_rate_hz,
            power_scale_mw: self.power_scale_mw,
        })
    }

    /// Sample-wise difference `self − other` in `self`'s power scale.
    pub fn sub(&self, other: &Waveform) -> Result<Waveform> {
        self.check_compatible(other)?;
        let k = (other.power_scale_mw / self.power_scale_mw).sqrt();
        Ok(Waveform {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b * k)
                .collect(),
            sample_rate_hz: self.sample_rate_hz,
            power_scale_mw: self.power_scale_mw,
        })
    }

    /// Multiplies every sample by a complex constant.
    pub fn scaled(&self, g: Complex64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * g).collect(),
            sample_rate_hz: self.sample_rate_hz,
            power_scale_mw: self.power_scale_mw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constellation {
    Qam64,
}

/// 64-QAM rail levels normalized to unit average symbol power.
pub fn qam64_levels() -> [f64; 8] {
    let k = 42f64.sqrt().recip();
    [-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0].map(|v| v * k)
}

/// Constellation points of one frame, row-major
/// `n_symbols × n_active_subcarriers`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub symbols: Vec<Complex64>,
    pub n_symbols: usize,
    pub n_active: usize,
    pub constellation: Constellation,
}

impl SymbolFrame {
    pub fn row(&self, symbol: usize) -> &[Complex64] {
        &self.symbols[symbol * self.n_active..(symbol + 1) * self.n_active]
    }
}

/// Draws a random 64-QAM frame and synthesizes its OFDM waveform at
/// `power_dbm` average power. Deterministic per seed.
pub fn generate_frame(
    cfg: &OfdmConfig,
    seed: u64,
    power_dbm: f64,
) -> Result<(SymbolFrame, Waveform)> {
    cfg.validate()?;
    if !power_dbm.is_finite() {
        return Err(Error::NonFinite("power_dbm"));
    }
    let levels = qam64_levels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_act = cfg.n_active_subcarriers;
    let symbols: Vec<Complex64> = (0..cfg.n_symbols * n_act)
        .map(|_| {
            Complex64::new(
                levels[rng.random_range(0..8)],
                levels[rng.random_range(0..8)],
            )
        })
        .collect();
    let frame = SymbolFrame {
        symbols,
        n_symbols: cfg.n_symbols,
        n_active: n_act,
        constellation: Constellation::Qam64,
    };
    let samples = modulate(cfg, &frame);
    let wf = Waveform::new(samples, cfg.sample_rate_hz(), 1.0)?;
    let wf = if wf.is_empty() {
        Waveform {
            power_scale_mw: lin(power_dbm),
            ..wf
        }
    } else {
        wf.with_power_dbm(power_dbm)?
    };
    Ok((frame, wf))
}

/// OFDM synthesis of an arbitrary symbol grid (unit-nominal samples).
pub fn modulate(cfg: &OfdmConfig, frame: &SymbolFrame) -> Vec<Complex64> {
    let m = cfg.ifft_len();
    let cp = cfg.cp_len();
    let bins = cfg.active_bins();
    let norm = (frame.n_active as f64).sqrt().recip();
    let mut out = Vec::with_capacity(cfg.frame_len());
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for s in 0..frame.n_symbols {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (&bin, &x) in bins.iter().zip(frame.row(s)) {
            buf[bin] = x * norm;
        }
        // Unnormalized inverse transform: Σ X_k e^{+j2πkn/M}.
        fft_inverse(&mut buf);
        out.extend_from_slice(&buf[m - cp..]);
        out.extend_from_slice(&buf);
    }
    out
}

/// Strips the cyclic prefix, transforms each symbol and extracts the active
/// subcarriers, dividing by `reference_gain` (flat-channel equalizer).
///
/// The gain is relative to the waveform's raw samples, so a waveform that
/// only had its power scale changed demodulates with unit gain.
pub fn demodulate_frame(
    wf: &Waveform,
    cfg: &OfdmConfig,
    reference_gain: Complex64,
) -> Result<SymbolFrame> {
    cfg.validate()?;
    if wf.len() != cfg.frame_len() {
        return Err(Error::LengthMismatch {
            expected: cfg.frame_len(),
            actual: wf.len(),
        });
    }
    if reference_gain.norm_sqr() == 0.0
        || !reference_gain.re.is_finite()
        || !reference_gain.im.is_finite()
    {
        return Err(invalid("reference_gain", "must be finite and non-zero"));
    }
    let m = cfg.ifft_len();
    let cp = cfg.cp_len();
    let l = cfg.symbol_len();
    let bins = cfg.active_bins();
    let k = (cfg.n_active_subcarriers as f64).sqrt() / m as f64 / reference_gain;
    let mut symbols = Vec::with_capacity(cfg.n_symbols * cfg.n_active_subcarriers);
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for s in 0..cfg.n_symbols {
        buf.copy_from_slice(&wf.samples[s * l + cp..(s + 1) * l]);
        fft_forward(&mut buf);
        symbols.extend(bins.iter().map(|&b| buf[b] * k));
    }
    Ok(SymbolFrame {
        symbols,
        n_symbols: cfg.n_symbols,
        n_active: cfg.n_active_subcarriers,
        constellation: Constellation::Qam64,
    })
}

/// Least-squares complex gain mapping `reference` onto `rx`.
pub fn ls_gain(rx: &SymbolFrame, reference: &SymbolFrame) -> Result<Complex64> {
    if rx.symbols.len() != reference.symbols.len() {
        return Err(Error::LengthMismatch {
            expected: reference.symbols.len(),
            actual: rx.symbols.len(),
        });
    }
    let num: Complex64 = reference
        .symbols
        .iter()
        .zip(&rx.symbols)
        .map(|(r, y)| r.conj() * y)
        .sum();
    let den: f64 = reference.symbols.iter().map(|r| r.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::ZeroPowerReference);
    }
    Ok(num / den)
}

/// Divides every point by `g`.
pub fn equalize(frame: &SymbolFrame, g: Complex64) -> SymbolFrame {
    SymbolFrame {
        symbols: frame.symbols.iter().map(|s| s / g).collect(),
        ..frame.clone()
    }
}

/// Single complex tone `√P·e^{j2πft}`.
pub fn tone(sample_rate_hz: f64, freq_hz: f64, len: usize, power_dbm: f64) -> Result<Waveform> {
    let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz;
    let samples = (0..len)
        .map(|n| Complex64::from_polar(1.0, w * n as f64))
        .collect();
    Waveform::new(samples, sample_rate_hz, lin(power_dbm))
}

/// Two equal-power tones; `power_per_tone_dbm` is the power of each.
pub fn two_tone(
    sample_rate_hz: f64,
    f1_hz: f64,
    f2_hz: f64,
    len: usize,
    power_per_tone_dbm: f64,
) -> Result<Waveform> {
    let a = tone(sample_rate_hz, f1_hz, len, power_per_tone_dbm)?;
    let b = tone(sample_rate_hz, f2_hz, len, power_per_tone_dbm)?;
    a.add(&b)
}

/// Constellation dump: `symbol_index,subcarrier_index,I_ref,Q_ref,I_rx,Q_rx`.
pub fn constellation_csv(
    cfg: &OfdmConfig,
    reference: &SymbolFrame,
    rx: &SymbolFrame,
) -> Result<String> {
    if reference.symbols.len() != rx.symbols.len() || reference.n_active != cfg.n_active_subcarriers
    {
        return Err(Error::LengthMismatch {
            expected: reference.symbols.len(),
            actual: rx.symbols.len(),
        });
    }
    use std::fmt::Write;
    let idx = cfg.subcarrier_indices();
    let mut out = String::from("symbol_index,subcarrier_index,I_ref,Q_ref,I_rx,Q_rx\n");
    for (i, (r, y)) in reference.symbols.iter().zip(&rx.symbols).enumerate() {
        let s = i / reference.n_active;
        let k = idx[i % reference.n_active];
        writeln!(
            out,
            "{s},{k},{:.6},{:.6},{:.6},{:.6}",
            r.re, r.im, y.re, y.im
        )
        .unwrap();
    }
    Ok(out)
}
