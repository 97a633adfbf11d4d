use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CancellerMode, ChainConfig};
use crate::blocks::{
    apply_amp, attenuate, cancel_with_coefficient, ls_coefficient, noise_waveform, quantize,
    rapp_saturation_amplitude, AdcSpec, AmpModel, AmpSpec, CancellerSpec, ReferenceTap,
};
use crate::budget::{
    db, lin, node_power_track, path_gain_db, sentinel, solve_downlink, Component, Node,
    NodePowerTable, NodePowers, NodeRow, PlanOverrides, StageAllocation, SystemParams,
    TrackOptions, ADC_HEADROOM_DB,
};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::waveform::{
    band_power_from_spectrum, constellation_csv, demodulate_frame, equalize, fft_forward,
    generate_frame, ls_gain, measure_evm, Band, SymbolFrame, Waveform,
};

/// Whether a stage allocation meets the total-SIC requirement, and where the
/// residual SI ends up relative to what the budget permits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureStatus {
    pub allocation_total_db: f64,
    pub required_total_db: f64,
    /// `allocation − required`; negative when the allocation falls short.
    pub margin_db: f64,
    pub closes: bool,
    /// Input-referred residual SI the budget allows: `P_RX − SNR_SI`.
    pub permitted_residual_si_dbm: f64,
    /// Input-referred residual SI implied by the allocation.
    #[serde(with = "sentinel")]
    pub analytic_residual_si_dbm: f64,
    /// Input-referred simulated residual SI after the last canceller.
    #[serde(with = "sentinel::option", default)]
    pub measured_residual_si_dbm: Option<f64>,
    /// Receiver noise floor at the LNA input.
    pub noise_floor_dbm: f64,
}

/// Analytic closure status of `alloc` against the budget solved with
/// `overrides`.
pub fn closure_status(
    params: &SystemParams,
    alloc: &StageAllocation,
    overrides: &PlanOverrides,
) -> Result<ClosureStatus> {
    let plan = solve_downlink(params, overrides)?;
    let total = alloc.total_db();
    let margin = total - plan.sic_total_db;
    Ok(ClosureStatus {
        allocation_total_db: total,
        required_total_db: plan.sic_total_db,
        margin_db: margin,
        closes: margin >= -1e-9,
        permitted_residual_si_dbm: plan.p_rx_ue_dbm - plan.snr_si_db,
        analytic_residual_si_dbm: params.p_pa_out_ue_dbm() - total,
        measured_residual_si_dbm: None,
        noise_floor_dbm: crate::budget::noise_floor_dbm(params.bw_dl_hz, params.nf_ue_db)?,
    })
}

/// EVMs of one Monte-Carlo frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub index: usize,
    pub evm_tx_percent: f64,
    pub evm_link_percent: f64,
}

/// Equalized constellations of the first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellations {
    pub reference: SymbolFrame,
    pub tx: SymbolFrame,
    pub link: SymbolFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSimReport {
    /// RMS over frames of the BS transmitter EVM.
    pub evm_tx_percent: f64,
    /// RMS over frames of the EVM after the full UE receive chain.
    pub evm_link_percent: f64,
    pub frames: Vec<FrameResult>,
    pub adc_full_scale_dbm: f64,
    /// Simulated in-band component powers, averaged over frames.
    pub measured: NodePowerTable,
    /// The analytic track for the same configuration.
    pub analytic: NodePowerTable,
    pub closure: ClosureStatus,
    #[serde(skip)]
    pub constellations: Option<Constellations>,
}

impl LinkSimReport {
    /// Constellation CSVs `(tx, link)` of the first frame.
    pub fn constellation_csvs(&self, cfg: &ChainConfig) -> Result<Option<(String, String)>> {
        let Some(c) = &self.constellations else {
            return Ok(None);
        };
        Ok(Some((
            constellation_csv(&cfg.ofdm, &c.reference, &c.tx)?,
            constellation_csv(&cfg.ofdm, &c.reference, &c.link)?,
        )))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for random stream `stream` of frame `index` under
/// `base`. The base is hashed before the index is added so that runs with
/// neighbouring base seeds do not share frames.
fn frame_seed(base: u64, index: usize, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base).wrapping_add(index as u64)) ^ stream)
}

const STREAM_BS: u64 = 1;
const STREAM_UE: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Output power (mW) of the memoryless envelope model for input power `p`.
fn envelope_out_mw(spec: &AmpSpec, p: f64) -> f64 {
    let g2 = lin(spec.gain_db);
    match spec.model {
        AmpModel::Linear => g2 * p,
        AmpModel::Polynomial { iip3_dbm } => g2 * p * (1.0 - p / lin(iip3_dbm)).powi(2),
        AmpModel::Saturating {
            op1db_dbm,
            smoothness,
        } => {
            let a2 = rapp_saturation_amplitude(op1db_dbm, smoothness).powi(2);
            g2 * p / (1.0 + (g2 * p / a2).powf(smoothness)).powf(1.0 / smoothness)
        }
    }
}

/// Rescales `x` so that `spec` delivers `target_dbm` average output, and
/// returns `(input, output)`.
fn drive_to(x: &Waveform, spec: &AmpSpec, target_dbm: f64) -> Result<(Waveform, Waveform)> {
    let p_in: Vec<f64> = x
        .samples
        .iter()
        .map(|s| s.norm_sqr() * x.power_scale_mw)
        .collect();
    let x_dbm = x.avg_power_dbm();
    // Output power for an input shifted by `shift_db`.
    let out_dbm = |shift_db: f64| {
        let k = lin(shift_db);
        db(p_in
            .iter()
            .map(|&p| envelope_out_mw(spec, p * k))
            .sum::<f64>()
            / p_in.len() as f64)
    };
    let centre = target_dbm - spec.gain_db - x_dbm;
    let (mut lo, mut hi) = (centre - 40.0, centre + 30.0);
    if out_dbm(hi) < target_dbm {
        return Err(Error::Saturation {
            p_in_dbm: x_dbm + hi,
            limit_dbm: target_dbm,
        });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if out_dbm(mid) < target_dbm {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    let input = Waveform {
        power_scale_mw: x.power_scale_mw * lin(0.5 * (lo + hi)),
        ..x.clone()
    };
    let output = apply_amp(&input, spec)?;
    Ok((input, output))
}

/// Shared per-run constants.
struct Setup<'a> {
    cfg: &'a ChainConfig,
    band: Band,
    bs_pa: AmpSpec,
    ue_pa: AmpSpec,
    lna: AmpSpec,
    mixer: AmpSpec,
    bbamp: AmpSpec,
    adc: AdcSpec,
    downlink_loss_db: f64,
    sic: [CancellerSpec; 3],
    si_present: bool,
}

struct FrameOutput {
    result: FrameResult,
    /// Linear in-band power (mW), `[node][component]`.
    powers_mw: Vec<[f64; 5]>,
    constellations: Option<Constellations>,
}

fn in_band_mw(setup: &Setup, wf: &Waveform) -> Result<f64> {
    let mut buf = wf.samples.clone();
    fft_forward(&mut buf);
    Ok(lin(band_power_from_spectrum(
        &buf,
        wf.sample_rate_hz,
        wf.power_scale_mw,
        setup.band,
    )?))
}

/// Component waveforms (mW scale) at one plane.
#[derive(Clone)]
struct Parts {
    desired: Waveform,
    si_linear: Waveform,
    pa_im3: Waveform,
    noise: Waveform,
}

impl Parts {
    fn map(&self, f: impl Fn(&Waveform) -> Waveform) -> Parts {
        Parts {
            desired: f(&self.desired),
            si_linear: f(&self.si_linear),
            pa_im3: f(&self.pa_im3),
            noise: f(&self.noise),
        }
    }

    fn sum(&self) -> Result<Waveform> {
        self.desired
            .add(&self.si_linear)?
            .add(&self.pa_im3)?
            .add(&self.noise)
    }
}

fn gain(wf: &Waveform, g_db: f64) -> Waveform {
    attenuate(wf, -g_db)
}

fn simulate_frame(setup: &Setup, index: usize, keep_constellations: bool) -> Result<FrameOutput> {
    let cfg = setup.cfg;
    let p = &cfg.params;
    let mc = cfg.monte_carlo;
    let len = cfg.ofdm.frame_len();
    let fs = cfg.ofdm.sample_rate_hz();
    let one = Complex64::new(1.0, 0.0);

    // Base station transmitter.
    let (sym_bs, xb) = generate_frame(&cfg.ofdm, frame_seed(mc.base_seed, index, STREAM_BS), 0.0)?;
    let (_, yb) = drive_to(&xb, &setup.bs_pa, p.p_tx_bs_dbm)?;
    let rx_tx = demodulate_frame(&yb, &cfg.ofdm, one)?;
    let tx_eq = equalize(&rx_tx, ls_gain(&rx_tx, &sym_bs)?);
    let evm_tx = measure_evm(&tx_eq, &sym_bs)?;
    let desired = attenuate(&yb.to_mw(), setup.downlink_loss_db);

    // UE transmitter, split into its linear image and PA distortion.
    let zeros = Waveform::zeros(len, fs);
    let (x_ref, y_ref, si_pa_lin, si_pa_im3) = if setup.si_present {
        let (_, xu) = generate_frame(&cfg.ofdm, frame_seed(mc.base_seed, index, STREAM_UE), 0.0)?;
        let (xu_in, yu) = drive_to(&xu, &setup.ue_pa, p.p_pa_out_ue_dbm())?;
        let x_ref = xu_in.to_mw();
        let y_ref = yu.to_mw();
        if cfg.link.pa_nonlinear {
            let k = ls_coefficient(&y_ref, &x_ref)?;
            let lin_part = x_ref.scaled(k);
            let im3 = y_ref.sub(&lin_part)?;
            (x_ref, y_ref, lin_part, im3)
        } else {
            (x_ref, y_ref.clone(), y_ref, zeros.clone())
        }
    } else {
        (zeros.clone(), zeros.clone(), zeros.clone(), zeros.clone())
    };

    let noise = noise_waveform(
        len,
        fs,
        1.0,
        p.nf_ue_db,
        p.bw_dl_hz,
        frame_seed(mc.base_seed, index, STREAM_NOISE),
    )?;
    let mut parts = Parts {
        desired,
        si_linear: attenuate(&si_pa_lin, cfg.allocation.sic1_db),
        pa_im3: attenuate(&si_pa_im3, cfg.allocation.sic1_db),
        noise,
    };

    let [c2, c3, c4] = setup.sic;
    // Canceller coefficients fitted on the SI alone through the linearized
    // receiver, then frozen.
    let calibrated = if setup.si_present && cfg.link.canceller_mode == CancellerMode::Calibrated {
        let s = gain(&parts.si_linear.add(&parts.pa_im3)?, p.g_lna_db);
        let k2 = ls_coefficient(&s, &y_ref)?;
        let s = cancel_with_coefficient(&s, &y_ref, &c2, k2)?;
        let s = gain(&s, p.g_mixer_db + p.g_bbamp_db);
        let k3 = ls_coefficient(&s, &y_ref)?;
        let s = cancel_with_coefficient(&s, &y_ref, &c3, k3)?;
        let k4 = ls_coefficient(&s, &x_ref)?;
        Some([k2, k3, k4])
    } else {
        None
    };
    let coefficient =
        |stage: usize, signal: &Waveform, reference: &Waveform| -> Result<Complex64> {
            match calibrated {
                Some(k) => Ok(k[stage]),
                None => ls_coefficient(signal, reference),
            }
        };

    let mut node_powers: Vec<[f64; 5]> = Vec::with_capacity(Node::ALL.len());
    let rx_nl = cfg.link.rx_nonlinear;
    let mut record = |parts: &Parts, full: Option<&Waveform>, with_noise: bool| -> Result<()> {
        let mut row = [0.0; 5];
        row[0] = in_band_mw(setup, &parts.desired)?;
        row[1] = in_band_mw(setup, &parts.si_linear)?;
        row[2] = in_band_mw(setup, &parts.pa_im3)?;
        row[3] = match full {
            Some(r) if rx_nl => in_band_mw(setup, &r.sub(&parts.sum()?)?)?,
            _ => 0.0,
        };
        row[4] = if with_noise {
            in_band_mw(setup, &parts.noise)?
        } else {
            0.0
        };
        node_powers.push(row);
        Ok(())
    };

    // Antenna / LNA input.
    record(&parts, None, false)?;
    record(&parts, None, true)?;
    let r0 = parts.sum()?;

    let r1 = apply_amp(&r0, &setup.lna)?;
    parts = parts.map(|w| gain(w, p.g_lna_db));
    record(&parts, Some(&r1), true)?;

    let (r2, parts2) = if setup.si_present {
        let k2 = coefficient(0, &r1, &y_ref)?;
        let r2 = cancel_with_coefficient(&r1, &y_ref, &c2, k2)?;
        let mut q = parts.clone();
        q.si_linear = cancel_with_coefficient(&q.si_linear, &si_pa_lin, &c2, k2)?;
        q.pa_im3 = cancel_with_coefficient(&q.pa_im3, &si_pa_im3, &c2, k2)?;
        (r2, q)
    } else {
        (r1, parts)
    };
    parts = parts2;
    record(&parts, Some(&r2), true)?;

    let r3 = apply_amp(&r2, &setup.mixer)?;
    parts = parts.map(|w| gain(w, p.g_mixer_db));
    record(&parts, Some(&r3), true)?;

    let r4 = apply_amp(&r3, &setup.bbamp)?;
    parts = parts.map(|w| gain(w, p.g_bbamp_db));
    record(&parts, Some(&r4), true)?;

    let (r5, parts5) = if setup.si_present {
        let k3 = coefficient(1, &r4, &y_ref)?;
        let r5 = cancel_with_coefficient(&r4, &y_ref, &c3, k3)?;
        let mut q = parts.clone();
        q.si_linear = cancel_with_coefficient(&q.si_linear, &si_pa_lin, &c3, k3)?;
        q.pa_im3 = cancel_with_coefficient(&q.pa_im3, &si_pa_im3, &c3, k3)?;
        (r5, q)
    } else {
        (r4, parts)
    };
    parts = parts5;
    record(&parts, Some(&r5), true)?;

    let r6 = quantize(&r5, &setup.adc)?;
    parts.noise = parts.noise.add(&r6.sub(&r5)?)?;
    record(&parts, Some(&r6), true)?;

    let r7 = if setup.si_present {
        let k4 = coefficient(2, &r6, &x_ref)?;
        parts.si_linear = cancel_with_coefficient(&parts.si_linear, &x_ref, &c4, k4)?;
        cancel_with_coefficient(&r6, &x_ref, &c4, k4)?
    } else {
        r6
    };
    record(&parts, Some(&r7), true)?;

    let rx = demodulate_frame(&r7, &cfg.ofdm, one)?;
    let link_eq = equalize(&rx, ls_gain(&rx, &sym_bs)?);
    let evm_link = measure_evm(&link_eq, &sym_bs)?;

    Ok(FrameOutput {
        result: FrameResult {
            index,
            evm_tx_percent: evm_tx,
            evm_link_percent: evm_link,
        },
        powers_mw: node_powers,
        constellations: keep_constellations.then_some(Constellations {
            reference: sym_bs,
            tx: tx_eq,
            link: link_eq,
        }),
    })
}

/// [`run_full_link_with`] under the default execution policy.
pub fn run_full_link(cfg: &ChainConfig) -> Result<LinkSimReport> {
    run_full_link_with(cfg, Execution::default())
}

/// Simulates `n_frames` independent frames of the full-duplex link:
///
/// BS PA → downlink loss → UE antenna; UE PA → SIC₁ leak → (plus desired
/// signal and receiver noise) → LNA → SIC₂ → mixer → BB amp → SIC₃ → ADC → SIC₄ →
/// OFDM demodulation and EVM against the BS symbols.
///
/// Node powers are obtained by carrying each source component through the
/// linearized chain alongside the real one; the receiver-IM3 row is the
/// difference between the real signal and the sum of the components, and
/// quantization error is counted as noise.
pub fn run_full_link_with(cfg: &ChainConfig, exec: Execution) -> Result<LinkSimReport> {
    cfg.validate()?;
    let p = &cfg.params;
    let si_present = p.p_pa_out_ue_dbm() > f64::NEG_INFINITY;
    let band = cfg.ofdm.channel_band();

    let mut track_params = p.clone();
    if !cfg.link.pa_nonlinear {
        track_params.p_oim3_pa_dbm = f64::NEG_INFINITY;
    }
    let mut opts = TrackOptions {
        rx_nonlinear: cfg.link.rx_nonlinear,
        adc_full_scale_dbm: cfg.link.adc_full_scale_dbm,
        adc_sample_rate_hz: cfg.ofdm.sample_rate_hz(),
        measurement_bw_hz: Some(band.width_hz()),
    };
    let full_scale = match cfg.link.adc_full_scale_dbm {
        Some(v) => v,
        None => {
            let t = node_power_track(&track_params, &cfg.allocation, &opts)?;
            t.get(Node::PostSic3)
                .expect("track has every node")
                .strongest_dbm()
                + ADC_HEADROOM_DB
        }
    };
    opts.adc_full_scale_dbm = Some(full_scale);
    let analytic = node_power_track(&track_params, &cfg.allocation, &opts)?;

    let bs_pa = if cfg.link.pa_nonlinear {
        cfg.link.bs_pa
    } else {
        cfg.link.bs_pa.linearized()
    };
    let ue_pa = if cfg.link.pa_nonlinear {
        cfg.ue_pa()
    } else {
        cfg.ue_pa().linearized()
    };
    let a = &cfg.allocation;
    let setup = Setup {
        cfg,
        band,
        bs_pa,
        ue_pa,
        lna: cfg.lna(),
        mixer: cfg.mixer(),
        bbamp: cfg.bbamp(),
        adc: AdcSpec {
            enob_bits: p.enob_bits,
            full_scale_dbm: full_scale,
        },
        downlink_loss_db: cfg.downlink_loss_db()?,
        sic: [
            CancellerSpec::new(a.sic2_db, ReferenceTap::PaOutput),
            CancellerSpec::new(a.sic3_db, ReferenceTap::PaOutput),
            CancellerSpec::new(a.sic4_db, ReferenceTap::IdealTxDigital),
        ],
        si_present,
    };

    let outputs = map_indexed(cfg.monte_carlo.n_frames, exec, |i| {
        simulate_frame(&setup, i, i == 0)
    });
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;

    // Fixed-order reductions keep reports bit-identical across policies.
    let n = outputs.len() as f64;
    let rms = |f: &dyn Fn(&FrameResult) -> f64| {
        (outputs.iter().map(|o| f(&o.result).powi(2)).sum::<f64>() / n).sqrt()
    };
    let evm_tx_percent = rms(&|r| r.evm_tx_percent);
    let evm_link_percent = rms(&|r| r.evm_link_percent);

    let mut rows = Vec::with_capacity(Node::ALL.len());
    for (j, node) in Node::ALL.into_iter().enumerate() {
        let mut powers = NodePowers::ABSENT;
        for (ci, c) in Component::ALL.into_iter().enumerate() {
            let mean = outputs.iter().map(|o| o.powers_mw[j][ci]).sum::<f64>() / n;
            *powers.get_mut(c) = db(mean);
        }
        rows.push(NodeRow { node, powers });
    }
    let measured = NodePowerTable { rows };

    let mut closure = closure_status(p, &cfg.allocation, &cfg.overrides)?;
    let last = measured.get(Node::PostSic4).expect("track has every node");
    closure.measured_residual_si_dbm = Some(last.si_linear - path_gain_db(p, Node::PostSic4));

    let mut outputs = outputs;
    let constellations = outputs.first_mut().and_then(|o| o.constellations.take());
    Ok(LinkSimReport {
        evm_tx_percent,
        evm_link_percent,
        frames: outputs.iter().map(|o| o.result).collect(),
        adc_full_scale_dbm: full_scale,
        measured,
        analytic,
        closure,
        constellations,
    })
}

/// Simulated per-node component powers for `cfg`.
pub fn measure_node_powers(cfg: &ChainConfig) -> Result<NodePowerTable> {
    Ok(run_full_link(cfg)?.measured)
}
