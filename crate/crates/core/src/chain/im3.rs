use serde::{Deserialize, Serialize};

use crate::blocks::{apply_amp, AmpModel, AmpSpec};
use crate::budget::im3_input_referred_dbm;
use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::waveform::{
    generate_frame, measure_channel_power, two_tone, Band, OfdmConfig, Waveform,
};

/// Source driving the matched amplifier pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Im3Probe {
    /// OFDM frame; the residual is measured over the channel band and
    /// `p_in` is the average frame power.
    #[default]
    Ofdm,
    /// Two equal CW tones; `p_in` is the power of each tone and the residual
    /// is read at the lower IM3 frequency `2f₁ − f₂`.
    TwoTone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionPoint {
    pub p_in_dbm: f64,
    /// Input-referred residual of the nonlinear minus the linear amplifier.
    pub im3_sim_dbm: f64,
    /// `3·p_in − 2·IIP3`.
    pub im3_pred_dbm: f64,
    /// Drive too close to compression; excluded from the fit.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionCurve {
    pub probe: Im3Probe,
    pub iip3_dbm: f64,
    pub points: Vec<CorrectionPoint>,
    /// Mean of `sim − pred` over the unsaturated points.
    pub offset_db: f64,
    /// Least-squares slope of `sim` against `p_in` over the unsaturated
    /// points; `None` with fewer than two.
    pub slope_db_per_db: Option<f64>,
}

impl CorrectionCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p_in_dbm,im3_sim_dbm,im3_pred_dbm\n");
        for p in &self.points {
            s.push_str(&format!(
                "{:.4},{:.4},{:.4}\n",
                p.p_in_dbm, p.im3_sim_dbm, p.im3_pred_dbm
            ));
        }
        s
    }
}

/// Average drive that keeps the OFDM peaks (≈10 dB above average) under the
/// input compression point.
const OFDM_PEAK_ALLOWANCE_DB: f64 = 10.0;

/// Passes the probe through the cubic amplifier and through an ideal
/// amplifier of identical gain, subtracts the outputs, and compares the
/// input-referred residual with the two-tone law.
pub fn run_im3_correction_experiment(
    cfg: &OfdmConfig,
    amp: &AmpSpec,
    sweep_dbm: &[f64],
    seed: u64,
    probe: Im3Probe,
    exec: Execution,
) -> Result<CorrectionCurve> {
    amp.validate()?;
    let AmpModel::Polynomial { iip3_dbm } = amp.model else {
        return Err(Error::UnsupportedModel(
            "the correction experiment needs a polynomial amplifier",
        ));
    };
    if sweep_dbm.is_empty() {
        return Err(Error::Empty("input power sweep"));
    }
    if sweep_dbm.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("sweep power"));
    }
    cfg.validate()?;
    let p1db_in = amp.input_p1db_dbm().expect("polynomial model compresses");

    let (base, band, limit) = match probe {
        Im3Probe::Ofdm => {
            if cfg.n_symbols == 0 {
                return Err(invalid(
                    "n_symbols",
                    "the OFDM probe needs at least one symbol",
                ));
            }
            let (_, wf) = generate_frame(cfg, seed, 0.0)?;
            (wf, cfg.channel_band(), p1db_in - OFDM_PEAK_ALLOWANCE_DB)
        }
        Im3Probe::TwoTone => {
            let n = cfg.ifft_len();
            let fs = cfg.sample_rate_hz();
            let df = fs / n as f64;
            let wf = two_tone(fs, 100.0 * df, 110.0 * df, n, 0.0)?;
            // Lower IM3 product sits exactly on bin 90.
            (wf, Band::new(89.5 * df, 90.5 * df), p1db_in - 3.0)
        }
    };

    let gain = amp.gain_db;
    let lin_amp = amp.linearized();
    let points: Vec<Result<CorrectionPoint>> = map_indexed(sweep_dbm.len(), exec, |i| {
        let p_in = sweep_dbm[i];
        let x = Waveform {
            power_scale_mw: base.power_scale_mw * 10f64.powf(p_in / 10.0),
            ..base.clone()
        };
        let residual = apply_amp(&x, amp)?.sub(&apply_amp(&x, &lin_amp)?)?;
        Ok(CorrectionPoint {
            p_in_dbm: p_in,
            im3_sim_dbm: measure_channel_power(&residual, band)? - gain,
            im3_pred_dbm: im3_input_referred_dbm(p_in, iip3_dbm, 0.0),
            saturated: p_in > limit,
        })
    });
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;

    let fit: Vec<&CorrectionPoint> = points.iter().filter(|p| !p.saturated).collect();
    if fit.is_empty() {
        return Err(Error::Saturation {
            p_in_dbm: sweep_dbm.iter().cloned().fold(f64::INFINITY, f64::min),
            limit_dbm: limit,
        });
    }
    let n = fit.len() as f64;
    let offset_db = fit
        .iter()
        .map(|p| p.im3_sim_dbm - p.im3_pred_dbm)
        .sum::<f64>()
        / n;
    let slope_db_per_db = if fit.len() >= 2 {
        let mx = fit.iter().map(|p| p.p_in_dbm).sum::<f64>() / n;
        let my = fit.iter().map(|p| p.im3_sim_dbm).sum::<f64>() / n;
        let sxx: f64 = fit.iter().map(|p| (p.p_in_dbm - mx).powi(2)).sum();
        let sxy: f64 = fit
            .iter()
            .map(|p| (p.p_in_dbm - mx) * (p.im3_sim_dbm - my))
            .sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };

    Ok(CorrectionCurve {
        probe,
        iip3_dbm,
        points,
        offset_db,
        slope_db_per_db,
    })
}
