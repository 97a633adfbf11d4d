use serde::{Deserialize, Serialize};
use std::fmt;

use super::params::SystemParams;
use super::solve::SicPlan;
use super::{friis_received_power_dbm, im3_input_referred_dbm, noise_floor_dbm, power_sum_dbm};
use crate::error::{invalid, Result};

/// Observation planes along the UE receive chain, in signal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Receive port of the duplexer: desired signal plus the SI leaking
    /// through the duplexer. No receiver noise yet.
    Antenna,
    /// LNA input, with the receiver's lumped input noise.
    PostSic1,
    PostLna,
    PostSic2,
    PostMixer,
    PostBbamp,
    PostSic3,
    PostAdc,
    PostSic4,
}

impl Node {
    pub const ALL: [Node; 9] = [
        Node::Antenna,
        Node::PostSic1,
        Node::PostLna,
        Node::PostSic2,
        Node::PostMixer,
        Node::PostBbamp,
        Node::PostSic3,
        Node::PostAdc,
        Node::PostSic4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Node::Antenna => "antenna",
            Node::PostSic1 => "post_sic1",
            Node::PostLna => "post_lna",
            Node::PostSic2 => "post_sic2",
            Node::PostMixer => "post_mixer",
            Node::PostBbamp => "post_bbamp",
            Node::PostSic3 => "post_sic3",
            Node::PostAdc => "post_adc",
            Node::PostSic4 => "post_sic4",
        }
    }

    pub fn from_name(s: &str) -> Option<Node> {
        Node::ALL.into_iter().find(|n| n.name() == s)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Signal components tracked at every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Desired,
    /// The linear (undistorted) part of the UE transmit signal.
    SiLinear,
    /// Distortion produced by the UE PA.
    PaIm3,
    /// Distortion produced by the receiver's own nonlinear stages.
    RxIm3,
    Noise,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::Desired,
        Component::SiLinear,
        Component::PaIm3,
        Component::RxIm3,
        Component::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Desired => "desired",
            Component::SiLinear => "si_linear",
            Component::PaIm3 => "pa_im3",
            Component::RxIm3 => "rx_im3",
            Component::Noise => "noise",
        }
    }
}

/// In-band channel power of each component at one node, in dBm. Absent
/// components are `-inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePowers {
    #[serde(with = "super::sentinel")]
    pub desired: f64,
    #[serde(with = "super::sentinel")]
    pub si_linear: f64,
    #[serde(with = "super::sentinel")]
    pub pa_im3: f64,
    #[serde(with = "super::sentinel")]
    pub rx_im3: f64,
    #[serde(with = "super::sentinel")]
    pub noise: f64,
}

impl NodePowers {
    pub const ABSENT: NodePowers = NodePowers {
        desired: f64::NEG_INFINITY,
        si_linear: f64::NEG_INFINITY,
        pa_im3: f64::NEG_INFINITY,
        rx_im3: f64::NEG_INFINITY,
        noise: f64::NEG_INFINITY,
    };

    pub fn get(&self, c: Component) -> f64 {
        match c {
            Component::Desired => self.desired,
            Component::SiLinear => self.si_linear,
            Component::PaIm3 => self.pa_im3,
            Component::RxIm3 => self.rx_im3,
            Component::Noise => self.noise,
        }
    }

    pub fn get_mut(&mut self, c: Component) -> &mut f64 {
        match c {
            Component::Desired => &mut self.desired,
            Component::SiLinear => &mut self.si_linear,
            Component::PaIm3 => &mut self.pa_im3,
            Component::RxIm3 => &mut self.rx_im3,
            Component::Noise => &mut self.noise,
        }
    }

    /// Power sum of all components.
    pub fn total_dbm(&self) -> f64 {
        power_sum_dbm(&Component::ALL.map(|c| self.get(c))).unwrap_or(f64::NEG_INFINITY)
    }

    /// The strongest single component.
    pub fn strongest_dbm(&self) -> f64 {
        Component::ALL
            .iter()
            .map(|&c| self.get(c))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn gain(&mut self, g_db: f64) {
        for c in Component::ALL {
            *self.get_mut(c) += g_db;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub node: Node,
    pub powers: NodePowers,
}

/// Per-node, per-component power track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePowerTable {
    pub rows: Vec<NodeRow>,
}

impl NodePowerTable {
    pub fn get(&self, node: Node) -> Option<&NodePowers> {
        self.rows.iter().find(|r| r.node == node).map(|r| &r.powers)
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.rows.iter().map(|r| r.node)
    }

    /// CSV with one row per node and one column per component; `-inf` is
    /// written literally.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node");
        for c in Component::ALL {
            out.push(',');
            out.push_str(c.name());
            out.push_str("_dbm");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(r.node.name());
            for c in Component::ALL {
                out.push(',');
                out.push_str(&fmt_dbm(r.powers.get(c)));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn fmt_dbm(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".to_owned()
    } else {
        format!("{v:.4}")
    }
}

/// Cancellation depth of each stage, in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageAllocation {
    pub sic1_db: f64,
    pub sic2_db: f64,
    pub sic3_db: f64,
    pub sic4_db: f64,
}

impl StageAllocation {
    /// The allocation used for the published link simulation.
    pub const LINK_FIGURE: StageAllocation = StageAllocation {
        sic1_db: 40.0,
        sic2_db: 28.0,
        sic3_db: 16.0,
        sic4_db: 10.0,
    };

    pub fn total_db(&self) -> f64 {
        self.sic1_db + self.sic2_db + self.sic3_db + self.sic4_db
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.sic1_db, self.sic2_db, self.sic3_db, self.sic4_db]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.as_array().into_iter().enumerate() {
            if d.is_nan() || d < 0.0 {
                return Err(invalid(
                    ["sic1_db", "sic2_db", "sic3_db", "sic4_db"][i],
                    format!("cancellation depth must be >= 0, got {d}"),
                ));
            }
        }
        Ok(())
    }
}

impl From<&SicPlan> for StageAllocation {
    fn from(p: &SicPlan) -> Self {
        Self {
            sic1_db: p.sic1_db,
            sic2_db: p.sic2_db,
            sic3_db: p.sic3_db,
            sic4_db: p.sic4_db,
        }
    }
}

/// Knobs of the analytic track that are not part of the scalar budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOptions {
    /// Include receiver IM3 generation (otherwise every RX stage is linear).
    pub rx_nonlinear: bool,
    /// ADC full scale as the power of a full-scale complex tone. `None`
    /// places it 12.04 dB (4× RMS) above the strongest component arriving
    /// at the ADC.
    pub adc_full_scale_dbm: Option<f64>,
    /// ADC sampling rate; quantization noise spreads uniformly over it.
    pub adc_sample_rate_hz: f64,
    /// Noise bandwidth used for in-band noise and quantization noise;
    /// `None` means `bw_dl_hz`.
    pub measurement_bw_hz: Option<f64>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            rx_nonlinear: true,
            adc_full_scale_dbm: None,
            adc_sample_rate_hz: 983.04e6,
            measurement_bw_hz: None,
        }
    }
}

/// Headroom of the ADC full scale over the strongest expected component:
/// 4× RMS amplitude.
pub const ADC_HEADROOM_DB: f64 = 12.041_199_826_559_248;

/// Quantization noise of a uniform mid-rise I/Q quantizer relative to the
/// full-scale complex tone power: `−1.76 − 6.02·ENOB` dB.
pub fn quantization_noise_dbc(enob_bits: f64) -> f64 {
    // Δ²/6 over A² with Δ = 2A/2ⁿ.
    10.0 * (2.0f64 / 3.0).log10() - 20.0 * 2f64.log10() * enob_bits
}

/// Analytic node-power track through the UE receive chain.
///
/// Gains add to every component; SIC₁–SIC₃ attenuate both the linear SI and
/// the PA distortion (they are fed from the actual PA output); SIC₄ uses the
/// ideal digital transmit waveform and reaches the linear SI only. Receiver
/// IM3 is injected at each nonlinear stage from the total power at its input
/// via the corrected two-tone law, and quantization noise is added at the ADC.
pub fn node_power_track(
    params: &SystemParams,
    alloc: &StageAllocation,
    opts: &TrackOptions,
) -> Result<NodePowerTable> {
    params.validate()?;
    alloc.validate()?;
    if !(opts.adc_sample_rate_hz > 0.0) {
        return Err(invalid("adc_sample_rate_hz", "must be positive"));
    }
    let bw = opts.measurement_bw_hz.unwrap_or(params.bw_dl_hz);
    let corr = params.im3_correction_db;
    let mut rows = Vec::with_capacity(Node::ALL.len());
    let mut push = |node: Node, p: NodePowers| rows.push(NodeRow { node, powers: p });

    let pa_out = params.p_pa_out_ue_dbm();
    let pa_im3 = if pa_out == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        params.p_oim3_pa_dbm
    };
    let mut p = NodePowers {
        desired: friis_received_power_dbm(
            params.p_tx_bs_dbm,
            params.g_bs_dbi,
            params.path_loss_db()?,
            params.g_ue_dbi,
        ),
        si_linear: pa_out - alloc.sic1_db,
        pa_im3: pa_im3 - alloc.sic1_db,
        rx_im3: f64::NEG_INFINITY,
        noise: f64::NEG_INFINITY,
    };
    push(Node::Antenna, p);

    p.noise = noise_floor_dbm(bw, params.nf_ue_db)?;
    push(Node::PostSic1, p);

    let nonlinear_stage = |p: &mut NodePowers, gain_db: f64, iip3_dbm: f64| {
        let generated = if opts.rx_nonlinear {
            im3_input_referred_dbm(p.total_dbm(), iip3_dbm, corr)
        } else {
            f64::NEG_INFINITY
        };
        p.rx_im3 = power_sum_dbm(&[p.rx_im3, generated]).unwrap_or(f64::NEG_INFINITY);
        p.gain(gain_db);
    };

    nonlinear_stage(&mut p, params.g_lna_db, params.iip3_lna_dbm);
    push(Node::PostLna, p);

    p.si_linear -= alloc.sic2_db;
    p.pa_im3 -= alloc.sic2_db;
    push(Node::PostSic2, p);

    nonlinear_stage(&mut p, params.g_mixer_db, params.iip3_mixer_dbm);
    push(Node::PostMixer, p);

    nonlinear_stage(&mut p, params.g_bbamp_db, params.iip3_bbamp_dbm);
    push(Node::PostBbamp, p);

    p.si_linear -= alloc.sic3_db;
    p.pa_im3 -= alloc.sic3_db;
    push(Node::PostSic3, p);

    let full_scale = opts
        .adc_full_scale_dbm
        .unwrap_or(p.strongest_dbm() + ADC_HEADROOM_DB);
    let q_noise = full_scale
        + quantization_noise_dbc(params.enob_bits)
        + 10.0 * (bw / opts.adc_sample_rate_hz).min(1.0).log10();
    p.noise = power_sum_dbm(&[p.noise, q_noise])?;
    push(Node::PostAdc, p);

    p.si_linear -= alloc.sic4_db;
    push(Node::PostSic4, p);

    Ok(NodePowerTable { rows })
}

/// Total gain from the receiver input to `node`.
pub fn path_gain_db(params: &SystemParams, node: Node) -> f64 {
    match node {
        Node::Antenna | Node::PostSic1 => 0.0,
        Node::PostLna | Node::PostSic2 => params.g_lna_db,
        Node::PostMixer => params.g_lna_db + params.g_mixer_db,
        Node::PostBbamp | Node::PostSic3 | Node::PostAdc | Node::PostSic4 => {
            params.g_lna_db + params.g_mixer_db + params.g_bbamp_db
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::{solve_downlink, PlanOverrides};

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn link_figure_antenna_levels() {
        let p = SystemParams::default();
        let t =
            node_power_track(&p, &StageAllocation::LINK_FIGURE, &TrackOptions::default()).unwrap();
        let a = t.get(Node::Antenna).unwrap();
        close(a.si_linear, p.p_pa_out_ue_dbm() - 40.0, 1e-12);
        close(a.desired, -46.0, 1e-12);
        assert_eq!(a.noise, f64::NEG_INFINITY);
        assert_eq!(a.rx_im3, f64::NEG_INFINITY);
        let s1 = t.get(Node::PostSic1).unwrap();
        close(s1.noise, -79.98, 0.01);
    }

    #[test]
    fn gain_only_propagation_keeps_offset() {
        let p = SystemParams::default();
        let zero = StageAllocation {
            sic1_db: 0.0,
            sic2_db: 0.0,
            sic3_db: 0.0,
            sic4_db: 0.0,
        };
        let opts = TrackOptions {
            rx_nonlinear: false,
            ..Default::default()
        };
        let t = node_power_track(&p, &zero, &opts).unwrap();
        for r in &t.rows {
            close(
                r.powers.si_linear - r.powers.desired,
                p.p_pa_out_ue_dbm() + 46.0,
                1e-9,
            );
            assert_eq!(r.powers.rx_im3, f64::NEG_INFINITY);
        }
    }

    #[test]
    fn closure_of_the_reference_plan() {
        let p = SystemParams::default();
        let plan = solve_downlink(&p, &PlanOverrides::reference()).unwrap();
        let alloc = StageAllocation::from(&plan);
        let t = node_power_track(&p, &alloc, &TrackOptions::default()).unwrap();
        let last = t.get(Node::PostSic4).unwrap();
        let input_referred = last.si_linear - path_gain_db(&p, Node::PostSic4);
        close(input_referred, p.p_pa_out_ue_dbm() - alloc.total_db(), 1e-9);
        assert!(input_referred <= plan.p_rx_ue_dbm - plan.snr_si_db + 0.5);
    }

    #[test]
    fn sic4_leaves_pa_im3() {
        let p = SystemParams::default();
        let t =
            node_power_track(&p, &StageAllocation::LINK_FIGURE, &TrackOptions::default()).unwrap();
        let a = t.get(Node::PostAdc).unwrap();
        let b = t.get(Node::PostSic4).unwrap();
        close(a.si_linear - b.si_linear, 10.0, 1e-12);
        assert_eq!(a.pa_im3, b.pa_im3);
    }

    #[test]
    fn quantization_noise_formula() {
        close(quantization_noise_dbc(8.0), -1.76 - 6.02 * 8.0, 0.02);
    }

    #[test]
    fn negative_depth_rejected() {
        let a = StageAllocation {
            sic2_db: -1.0,
            ..StageAllocation::LINK_FIGURE
        };
        assert!(node_power_track(&SystemParams::default(), &a, &TrackOptions::default()).is_err());
    }

    #[test]
    fn csv_shape() {
        let t = node_power_track(
            &SystemParams::default(),
            &StageAllocation::LINK_FIGURE,
            &TrackOptions::default(),
        )
        .unwrap();
        let csv = t.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(
            lines[0],
            "node,desired_dbm,si_linear_dbm,pa_im3_dbm,rx_im3_dbm,noise_dbm"
        );
        assert!(lines[1].starts_with("antenna,") && lines[1].ends_with(",-inf,-inf"));
    }
}
