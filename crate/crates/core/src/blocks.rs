//! Memoryless behavioural RF blocks acting on [`Waveform`]s.
//!
//! Levels are absolute: an amplifier's intercept or compression point is
//! converted into sample units through the waveform's power scale, so the
//! same [`AmpSpec`] behaves identically whatever scale a waveform carries.
//!
//! The cubic model is written in complex-envelope form,
//! `y = a₁·(x − x|x|²/P₃)`, where `P₃` is the per-tone input intercept power.
//! With this normalization a two-tone test gives IM3 at exactly
//! `3·P − 2·IIP3` input-referred.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::budget::{db, lin, sentinel, THERMAL_NOISE_DBM_PER_HZ};
use crate::error::{invalid, Error, Result};
use crate::waveform::{fft_forward, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmpModel {
    Linear,
    /// Third-order polynomial with the given input intercept.
    Polynomial {
        iip3_dbm: f64,
    },
    /// Rapp envelope limiter with output 1 dB compression point
    /// `op1db_dbm` and knee smoothness `p`.
    Saturating {
        op1db_dbm: f64,
        smoothness: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmpSpec {
    pub gain_db: f64,
    pub model: AmpModel,
}

impl AmpSpec {
    pub fn linear(gain_db: f64) -> Self {
        Self {
            gain_db,
            model: AmpModel::Linear,
        }
    }

    pub fn polynomial(gain_db: f64, iip3_dbm: f64) -> Self {
        Self {
            gain_db,
            model: AmpModel::Polynomial { iip3_dbm },
        }
    }

    pub fn saturating(gain_db: f64, op1db_dbm: f64, smoothness: f64) -> Self {
        Self {
            gain_db,
            model: AmpModel::Saturating {
                op1db_dbm,
                smoothness,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gain_db.is_finite() {
            return Err(invalid("gain_db", "must be finite"));
        }
        match self.model {
            AmpModel::Linear => {}
            AmpModel::Polynomial { iip3_dbm } => {
                if !iip3_dbm.is_finite() {
                    return Err(invalid("iip3_dbm", "must be finite"));
                }
            }
            AmpModel::Saturating {
                op1db_dbm,
                smoothness,
            } => {
                if !op1db_dbm.is_finite() {
                    return Err(invalid("op1db_dbm", "must be finite"));
                }
                if !(smoothness > 0.0 && smoothness.is_finite()) {
                    return Err(invalid("smoothness", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// The same amplifier with its nonlinearity removed.
    pub fn linearized(&self) -> Self {
        Self::linear(self.gain_db)
    }

    /// Input power at which a single tone is compressed by 1 dB, if the
    /// model compresses at all.
    pub fn input_p1db_dbm(&self) -> Option<f64> {
        match self.model {
            AmpModel::Linear => None,
            // |1 − P/P₃| = 10^(−1/20)
            AmpModel::Polynomial { iip3_dbm } => Some(iip3_dbm + db(1.0 - 10f64.powf(-0.05))),
            AmpModel::Saturating { op1db_dbm, .. } => Some(op1db_dbm - self.gain_db + 1.0),
        }
    }
}

/// Rapp saturation amplitude (mW^½) that places the output 1 dB compression
/// point at `op1db_dbm`.
pub fn rapp_saturation_amplitude(op1db_dbm: f64, p: f64) -> f64 {
    lin(op1db_dbm).sqrt() * 10f64.powf(0.05) / (10f64.powf(0.1 * p) - 1.0).powf(1.0 / (2.0 * p))
}

fn finish(wf: &Waveform, samples: Vec<Complex64>) -> Result<Waveform> {
    if samples
        .iter()
        .any(|s| !s.re.is_finite() || !s.im.is_finite())
    {
        return Err(Error::NonFinite("amplifier output"));
    }
    Ok(Waveform {
        samples,
        sample_rate_hz: wf.sample_rate_hz,
        power_scale_mw: wf.power_scale_mw,
    })
}

/// `y = a₁·(x − x|x|²/P₃)` with `a₁ = 10^(gain/20)` and `P₃` the intercept in
/// sample units. The power scale is preserved.
pub fn polynomial_amp(wf: &Waveform, spec: &AmpSpec) -> Result<Waveform> {
    spec.validate()?;
    let AmpModel::Polynomial { iip3_dbm } = spec.model else {
        return Err(Error::UnsupportedModel(
            "polynomial_amp needs a polynomial spec",
        ));
    };
    let a1 = 10f64.powf(spec.gain_db / 20.0);
    let inv_p3 = wf.power_scale_mw / lin(iip3_dbm);
    let out = wf
        .samples
        .iter()
        .map(|&x| a1 * (x - x * (x.norm_sqr() * inv_p3)))
        .collect();
    finish(wf, out)
}

/// Rapp envelope model `y = g·x / (1 + (|g·x|/A_sat)^{2p})^{1/(2p)}`.
pub fn saturating_amp(wf: &Waveform, spec: &AmpSpec) -> Result<Waveform> {
    spec.validate()?;
    let AmpModel::Saturating {
        op1db_dbm,
        smoothness: p,
    } = spec.model
    else {
        return Err(Error::UnsupportedModel(
            "saturating_amp needs a saturating spec",
        ));
    };
    let g = 10f64.powf(spec.gain_db / 20.0);
    let a_sat = rapp_saturation_amplitude(op1db_dbm, p) / wf.power_scale_mw.sqrt();
    let two_p = 2.0 * p;
    let out = wf
        .samples
        .iter()
        .map(|&x| {
            let v = x * g;
            let r = v.norm() / a_sat;
            v / (1.0 + r.powf(two_p)).powf(1.0 / two_p)
        })
        .collect();
    finish(wf, out)
}

/// Runs whichever model `spec` describes.
pub fn apply_amp(wf: &Waveform, spec: &AmpSpec) -> Result<Waveform> {
    match spec.model {
        AmpModel::Linear => {
            spec.validate()?;
            Ok(wf.scaled(Complex64::new(10f64.powf(spec.gain_db / 20.0), 0.0)))
        }
        AmpModel::Polynomial { .. } => polynomial_amp(wf, spec),
        AmpModel::Saturating { .. } => saturating_amp(wf, spec),
    }
}

/// Reduces power by exactly `loss_db`.
pub fn attenuate(wf: &Waveform, loss_db: f64) -> Waveform {
    wf.scaled(Complex64::new(10f64.powf(-loss_db / 20.0), 0.0))
}

/// Thermal noise power in `bw_hz` for noise figure `nf_db`.
pub fn thermal_noise_dbm(nf_db: f64, bw_hz: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + db(bw_hz) + nf_db
}

/// White circular Gaussian noise whose power inside any `bw_hz` slice is
/// `−174 + 10·log10(bw_hz) + nf_db` dBm, i.e. a flat density over the whole
/// sample rate. Deterministic per seed.
pub fn noise_waveform(
    len: usize,
    sample_rate_hz: f64,
    power_scale_mw: f64,
    nf_db: f64,
    bw_hz: f64,
    seed: u64,
) -> Result<Waveform> {
    if !(bw_hz > 0.0 && bw_hz <= sample_rate_hz) {
        return Err(invalid(
            "bw_hz",
            format!("must lie in (0, {sample_rate_hz}], got {bw_hz}"),
        ));
    }
    if !nf_db.is_finite() {
        return Err(invalid("nf_db", "must be finite"));
    }
    let total_mw = lin(thermal_noise_dbm(nf_db, bw_hz)) * sample_rate_hz / bw_hz;
    let sigma = (total_mw / power_scale_mw / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * sigma, im * sigma)
        })
        .collect();
    Waveform::new(samples, sample_rate_hz, power_scale_mw)
}

pub fn add_awgn(wf: &Waveform, nf_db: f64, bw_hz: f64, seed: u64) -> Result<Waveform> {
    let n = noise_waveform(
        wf.len(),
        wf.sample_rate_hz,
        wf.power_scale_mw,
        nf_db,
        bw_hz,
        seed,
    )?;
    wf.add(&n)
}

/// Which copy of the transmit signal a canceller subtracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceTap {
    /// The actual PA output, distortion included (analog cancellers).
    PaOutput,
    /// The ideal digital transmit waveform (digital canceller).
    IdealTxDigital,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CancellerSpec {
    /// Suppression of the reference-correlated component; `inf` cancels it
    /// completely.
    #[serde(with = "sentinel")]
    pub depth_db: f64,
    pub reference: ReferenceTap,
}

impl CancellerSpec {
    pub fn new(depth_db: f64, reference: ReferenceTap) -> Self {
        Self {
            depth_db,
            reference,
        }
    }

    /// Fraction of the projected component removed: `1 − 10^(−depth/20)`.
    pub fn removal_factor(&self) -> Result<f64> {
        if self.depth_db.is_nan() || self.depth_db < 0.0 {
            return Err(invalid(
                "depth_db",
                format!("must be >= 0, got {}", self.depth_db),
            ));
        }
        Ok(1.0 - 10f64.powf(-self.depth_db / 20.0))
    }
}

/// Least-squares coefficient `⟨ref, sig⟩ / ⟨ref, ref⟩` projecting `signal` onto
/// `reference`, in the signal's sample units per reference sample unit.
pub fn ls_coefficient(signal: &Waveform, reference: &Waveform) -> Result<Complex64> {
    signal.check_compatible(reference)?;
    let num: Complex64 = reference
        .samples
        .iter()
        .zip(&signal.samples)
        .map(|(r, s)| r.conj() * s)
        .sum();
    let den: f64 = reference.samples.iter().map(|r| r.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::ZeroPowerReference);
    }
    Ok(num / den)
}

/// Subtracts `removal · k · reference` from `signal`.
pub fn cancel_with_coefficient(
    signal: &Waveform,
    reference: &Waveform,
    spec: &CancellerSpec,
    k: Complex64,
) -> Result<Waveform> {
    signal.check_compatible(reference)?;
    let c = k * spec.removal_factor()?;
    Ok(Waveform {
        samples: signal
            .samples
            .iter()
            .zip(&reference.samples)
            .map(|(s, r)| s - c * r)
            .collect(),
        sample_rate_hz: signal.sample_rate_hz,
        power_scale_mw: signal.power_scale_mw,
    })
}

/// Suppresses the component of `signal` correlated with `reference` by
/// `depth_db`; the orthogonal remainder passes unchanged.
pub fn cancel(signal: &Waveform, reference: &Waveform, spec: &CancellerSpec) -> Result<Waveform> {
    let k = ls_coefficient(signal, reference)?;
    cancel_with_coefficient(signal, reference, spec, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcSpec {
    pub enob_bits: f64,
    /// Power of a complex tone whose I and Q rails just reach full scale.
    pub full_scale_dbm: f64,
}

impl AdcSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.enob_bits >= 1.0) {
            return Err(invalid(
                "enob_bits",
                format!("must be >= 1, got {}", self.enob_bits),
            ));
        }
        if !self.full_scale_dbm.is_finite() {
            return Err(invalid("full_scale_dbm", "must be finite"));
        }
        Ok(())
    }
}

/// Uniform mid-rise quantizer on I and Q: `2^ENOB` levels across
/// `±A_fs`, clipping beyond.
pub fn quantize(wf: &Waveform, spec: &AdcSpec) -> Result<Waveform> {
    spec.validate()?;
    let a = (lin(spec.full_scale_dbm) / wf.power_scale_mw).sqrt();
    let step = 2.0 * a / 2f64.powf(spec.enob_bits);
    let top = a - step / 2.0;
    let q = |v: f64| (step * ((v / step).floor() + 0.5)).clamp(-top, top);
    Ok(Waveform {
        samples: wf
            .samples
            .iter()
            .map(|s| Complex64::new(q(s.re), q(s.im)))
            .collect(),
        sample_rate_hz: wf.sample_rate_hz,
        power_scale_mw: wf.power_scale_mw,
    })
}

/// Two-tone probe level used by [`measure_two_tone_iip3`]: 30 dB under the
/// intercept for the cubic model, 8 dB under input P1dB for the limiter.
pub fn default_probe_dbm(spec: &AmpSpec) -> Result<f64> {
    match spec.model {
        AmpModel::Linear => Err(Error::UnsupportedModel("linear amplifier has no intercept")),
        AmpModel::Polynomial { iip3_dbm } => Ok(iip3_dbm - 30.0),
        AmpModel::Saturating { .. } => Ok(spec.input_p1db_dbm().unwrap() - 8.0),
    }
}

/// Extrapolated input IP3 from a two-tone test at the default probe level.
pub fn measure_two_tone_iip3(spec: &AmpSpec) -> Result<f64> {
    measure_two_tone_iip3_at(spec, default_probe_dbm(spec)?)
}

/// Two-tone IIP3 measurement with `probe_dbm` per tone:
/// `IIP3 = P_in + (P_fund − P_IM3)/2`, all at the output.
///
/// Probes whose combined power reaches the input 1 dB compression point are
/// rejected, since the intercept extrapolation is meaningless there.
pub fn measure_two_tone_iip3_at(spec: &AmpSpec, probe_dbm: f64) -> Result<f64> {
    spec.validate()?;
    let limit = spec
        .input_p1db_dbm()
        .ok_or(Error::UnsupportedModel("linear amplifier has no intercept"))?
        - 3.0;
    if !(probe_dbm <= limit) {
        return Err(Error::Saturation {
            p_in_dbm: probe_dbm,
            limit_dbm: limit,
        });
    }
    const N: usize = 4096;
    const K1: usize = 100;
    const K2: usize = 110;
    let fs = N as f64;
    let x = crate::waveform::two_tone(fs, K1 as f64, K2 as f64, N, probe_dbm)?;
    let y = apply_amp(&x, spec)?;
    let mut spec_bins = y.samples.clone();
    fft_forward(&mut spec_bins);
    let bin_dbm = |k: usize| db(spec_bins[k].norm_sqr() / (N * N) as f64 * y.power_scale_mw);
    let fund = bin_dbm(K1);
    let im3 = bin_dbm(2 * K1 - K2);
    if im3 == f64::NEG_INFINITY {
        return Err(Error::NonFinite("IM3 tone power"));
    }
    Ok(probe_dbm + (fund - im3) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{measure_channel_power, tone, two_tone, Band};

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn tone_bin_dbm(wf: &Waveform, k: usize) -> f64 {
        let mut s = wf.samples.clone();
        fft_forward(&mut s);
        let n = s.len() as f64;
        db(s[k].norm_sqr() / (n * n) * wf.power_scale_mw)
    }

    #[test]
    fn cubic_two_tone_law() {
        let n = 4096;
        let x = two_tone(n as f64, 100.0, 110.0, n, -30.0).unwrap();
        let y = polynomial_amp(&x, &AmpSpec::polynomial(20.0, -7.0)).unwrap();
        // input-referred IM3 at 2f1 − f2
        close(tone_bin_dbm(&y, 90) - 20.0, -76.0, 0.1);
    }

    #[test]
    fn cubic_slope_is_three() {
        let n = 4096;
        let spec = AmpSpec::polynomial(0.0, 0.0);
        let im3 = |p: f64| {
            let x = two_tone(n as f64, 100.0, 110.0, n, p).unwrap();
            tone_bin_dbm(&polynomial_amp(&x, &spec).unwrap(), 90)
        };
        close((im3(-30.0) - im3(-40.0)) / 10.0, 3.0, 0.05);
    }

    #[test]
    fn weak_nonlinearity_limit() {
        let x = tone(1000.0, 10.0, 1000, -37.0).unwrap();
        let y = polynomial_amp(&x, &AmpSpec::polynomial(20.0, -7.0)).unwrap();
        assert!((y.avg_power_dbm() - x.avg_power_dbm() - 20.0).abs() < 0.05);
    }

    #[test]
    fn power_scale_does_not_change_behaviour() {
        let x = tone(1000.0, 10.0, 1000, -10.0).unwrap();
        let spec = AmpSpec::polynomial(10.0, -3.0);
        let a = polynomial_amp(&x, &spec).unwrap();
        let b = polynomial_amp(&x.rescaled(1e-6), &spec).unwrap();
        close(a.avg_power_dbm(), b.avg_power_dbm(), 1e-9);
        let spec = AmpSpec::saturating(13.5, 15.0, 2.0);
        let a = saturating_amp(&x, &spec).unwrap();
        let b = saturating_amp(&x.rescaled(1e3), &spec).unwrap();
        close(a.avg_power_dbm(), b.avg_power_dbm(), 1e-9);
    }

    #[test]
    fn rapp_compression_point() {
        for p in [1.0, 2.0, 3.0] {
            let spec = AmpSpec::saturating(13.5, 15.0, p);
            let pin = 15.0 - 13.5 + 1.0;
            let x = tone(1000.0, 10.0, 100, pin).unwrap();
            let y = saturating_amp(&x, &spec).unwrap();
            close(y.avg_power_dbm(), 15.0, 1e-9);
            let small = tone(1000.0, 10.0, 100, pin - 20.0).unwrap();
            let ys = saturating_amp(&small, &spec).unwrap();
            close(ys.avg_power_dbm() - small.avg_power_dbm(), 13.5, 0.05);
        }
    }

    #[test]
    fn model_mismatch_rejected() {
        let x = tone(10.0, 1.0, 10, 0.0).unwrap();
        assert!(matches!(
            polynomial_amp(&x, &AmpSpec::saturating(1.0, 1.0, 2.0)),
            Err(Error::UnsupportedModel(_))
        ));
        assert!(saturating_amp(&x, &AmpSpec::polynomial(1.0, 1.0)).is_err());
        assert!(AmpSpec::saturating(1.0, 1.0, 0.0).validate().is_err());
    }

    #[test]
    fn awgn_calibration() {
        let fs = 983.04e6;
        let n = noise_waveform(1 << 17, fs, 1.0, 8.0, 400e6, 11).unwrap();
        let p = measure_channel_power(&n, Band::new(-200e6, 200e6)).unwrap();
        close(p, -79.98, 0.1);
        close(thermal_noise_dbm(0.0, 1.0), -174.0, 1e-12);
        assert!(noise_waveform(10, fs, 1.0, 8.0, 2.0 * fs, 1).is_err());
    }

    #[test]
    fn awgn_seeds_are_independent() {
        let a = noise_waveform(1 << 16, 1.0, 1.0, 0.0, 1.0, 1).unwrap();
        let b = noise_waveform(1 << 16, 1.0, 1.0, 0.0, 1.0, 2).unwrap();
        let a2 = noise_waveform(1 << 16, 1.0, 1.0, 0.0, 1.0, 1).unwrap();
        assert_eq!(a, a2);
        let rho =
            ls_coefficient(&a, &b).unwrap().norm() * (b.mean_square() / a.mean_square()).sqrt();
        assert!(rho < 0.01, "{rho}");
    }

    #[test]
    fn attenuation_composes() {
        let x = tone(10.0, 1.0, 64, 12.0).unwrap();
        close(attenuate(&x, 4.0).avg_power_dbm(), 8.0, 1e-9);
        close(
            attenuate(&attenuate(&x, 1.5), 2.5).avg_power_dbm(),
            attenuate(&x, 4.0).avg_power_dbm(),
            1e-9,
        );
        assert_eq!(attenuate(&x, 0.0), x);
    }

    #[test]
    fn canceller_depth() {
        let si = noise_waveform(1 << 14, 1.0, 1.0, 0.0, 1.0, 3).unwrap();
        let other = noise_waveform(1 << 14, 1.0, 1.0, -30.0, 1.0, 4).unwrap();
        let pa = si.scaled(Complex64::from_polar(2.0, 0.7));
        let mix = pa.add(&other).unwrap();
        let out = cancel(&pa, &si, &CancellerSpec::new(40.0, ReferenceTap::PaOutput)).unwrap();
        close(out.avg_power_dbm(), pa.avg_power_dbm() - 40.0, 1e-6);
        let full = cancel(
            &mix,
            &si,
            &CancellerSpec::new(f64::INFINITY, ReferenceTap::PaOutput),
        )
        .unwrap();
        let k = ls_coefficient(&mix, &si).unwrap();
        let expect = mix.sub(&si.scaled(k)).unwrap();
        assert_eq!(full, expect);
        let same = cancel(&mix, &si, &CancellerSpec::new(0.0, ReferenceTap::PaOutput)).unwrap();
        assert_eq!(same, mix);
        assert!(cancel(
            &mix,
            &Waveform::zeros(mix.len(), 1.0),
            &CancellerSpec::new(3.0, ReferenceTap::PaOutput)
        )
        .is_err());
        assert!(cancel(
            &mix,
            &Waveform::zeros(3, 1.0),
            &CancellerSpec::new(3.0, ReferenceTap::PaOutput)
        )
        .is_err());
    }

    #[test]
    fn quantizer_sqnr() {
        for enob in [6.0, 8.0, 10.0] {
            let x = tone(1.0, 0.123456, 1 << 15, 0.0).unwrap();
            let y = quantize(
                &x,
                &AdcSpec {
                    enob_bits: enob,
                    full_scale_dbm: 0.0,
                },
            )
            .unwrap();
            let e = y.sub(&x).unwrap();
            close(
                x.avg_power_dbm() - e.avg_power_dbm(),
                6.02 * enob + 1.76,
                0.5,
            );
        }
    }

    #[test]
    fn fine_quantizer_is_transparent_and_idempotent() {
        let x = tone(1.0, 0.1, 1000, -10.0).unwrap();
        let y = quantize(
            &x,
            &AdcSpec {
                enob_bits: 24.0,
                full_scale_dbm: 0.0,
            },
        )
        .unwrap();
        for (a, b) in x.samples.iter().zip(&y.samples) {
            assert!((a - b).norm() <= 1e-6 * a.norm());
        }
        let spec = AdcSpec {
            enob_bits: 6.0,
            full_scale_dbm: 0.0,
        };
        let q1 = quantize(&x, &spec).unwrap();
        assert_eq!(quantize(&q1, &spec).unwrap(), q1);
    }

    #[test]
    fn iip3_probe_recovers_intercept() {
        for iip3 in [-7.0, -15.0, -20.0, 0.0, 5.0] {
            close(
                measure_two_tone_iip3(&AmpSpec::polynomial(20.0, iip3)).unwrap(),
                iip3,
                0.1,
            );
        }
    }

    #[test]
    fn iip3_rule_of_thumb_for_limiter() {
        let spec = AmpSpec::saturating(13.5, 15.0, 3.0);
        let p1 = spec.input_p1db_dbm().unwrap();
        close(measure_two_tone_iip3(&spec).unwrap(), p1 + 9.6, 2.0);
    }

    #[test]
    fn iip3_probe_into_compression_rejected() {
        let spec = AmpSpec::polynomial(20.0, -7.0);
        assert!(matches!(
            measure_two_tone_iip3_at(&spec, -10.0),
            Err(Error::Saturation { .. })
        ));
        assert!(measure_two_tone_iip3(&AmpSpec::linear(3.0)).is_err());
    }
}
