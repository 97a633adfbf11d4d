use serde::{Deserialize, Serialize};

use super::free_space_path_loss_db;
use crate::error::{invalid, Result};

/// How the UE receiver's SNR target is split between noise, LNA IM3 and
/// residual SI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RxSplit {
    /// Solve noise + IM3 + SI jointly so the three-term combination meets
    /// the receiver target exactly, with the SI term pinned to
    /// `si_neglect_factor` of the other two.
    #[default]
    Joint,
    /// Size the IM3 share with the SI term dropped, then size SI from it.
    /// Overshoots the receiver target by the SI share.
    NeglectSi,
}

/// Which IM3 law the rest-of-receiver linearity criterion compares against
/// when sizing SIC₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Im3Reference {
    /// Plain two-tone `3P − 2·IIP3`; yields the `+margin/3 = +6 dB` constant.
    #[default]
    TwoTone,
    /// Two-tone law plus `im3_correction_db`; yields `+(margin − correction)/3`.
    Corrected,
}

/// Scalar description of the full-duplex link and the UE front end.
///
/// Every physical field name carries its unit. [`Default`] holds the
/// reference design: 400 MHz OFDM 64-QAM at 90 m, 20 dBi antennas,
/// 15 dBm BS transmit power, 8 dB noise figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    pub p_tx_bs_dbm: f64,
    /// Power the UE delivers to its antenna. `-inf` means the UE does not
    /// transmit (no self-interference).
    #[serde(with = "super::sentinel")]
    pub p_tx_ue_dbm: f64,
    pub g_bs_dbi: f64,
    pub g_ue_dbi: f64,
    /// Free-space path loss. When absent it is computed from `distance_m`
    /// and `carrier_hz`.
    pub l_fs_db: Option<f64>,
    pub distance_m: f64,
    pub carrier_hz: f64,
    pub nf_bs_db: f64,
    pub nf_ue_db: f64,
    pub bw_dl_hz: f64,
    pub bw_ul_hz: f64,
    pub snr_link_db: f64,
    pub snr_tx_ue_db: f64,
    pub snr_tx_bs_db: f64,
    /// Noise share of the downlink receiver budget. When absent it is
    /// derived from the received power and the UE noise floor.
    pub snr_noise_dl_db: Option<f64>,
    pub ebd_tx_insertion_loss_db: f64,

    pub g_lna_db: f64,
    pub iip3_lna_dbm: f64,
    /// Input IP3 of everything after the LNA, used by the SIC₂ criterion.
    pub iip3_rrx_dbm: f64,
    pub g_mixer_db: f64,
    pub iip3_mixer_dbm: f64,
    pub g_bbamp_db: f64,
    pub iip3_bbamp_dbm: f64,

    pub op1db_pa_ue_dbm: f64,
    pub pa_gain_db: f64,
    /// IM3 channel power at the UE PA output.
    #[serde(with = "super::sentinel")]
    pub p_oim3_pa_dbm: f64,

    pub enob_bits: f64,
    /// Added to the two-tone IM3 law for OFDM drive.
    pub im3_correction_db: f64,
    pub margin_noise_db: f64,
    pub margin_rrx_db: f64,
    pub margin_pa_im3_db: f64,
    pub si_neglect_factor: f64,

    pub rx_split: RxSplit,
    pub sic2_im3_reference: Im3Reference,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            p_tx_bs_dbm: 15.0,
            p_tx_ue_dbm: 8.0,
            g_bs_dbi: 20.0,
            g_ue_dbi: 20.0,
            l_fs_db: Some(101.0),
            distance_m: 90.0,
            carrier_hz: 28e9,
            nf_bs_db: 8.0,
            nf_ue_db: 8.0,
            bw_dl_hz: 400e6,
            bw_ul_hz: 400e6,
            snr_link_db: 21.0,
            snr_tx_ue_db: 24.0,
            snr_tx_bs_db: 30.0,
            snr_noise_dl_db: Some(28.0),
            ebd_tx_insertion_loss_db: 4.0,
            g_lna_db: 20.0,
            iip3_lna_dbm: -7.0,
            iip3_rrx_dbm: -15.0,
            g_mixer_db: 0.0,
            iip3_mixer_dbm: 0.0,
            g_bbamp_db: 20.0,
            iip3_bbamp_dbm: 5.0,
            op1db_pa_ue_dbm: 15.0,
            pa_gain_db: 13.5,
            p_oim3_pa_dbm: 0.0,
            enob_bits: 8.0,
            im3_correction_db: 8.0,
            margin_noise_db: 3.0,
            margin_rrx_db: 18.0,
            margin_pa_im3_db: 10.0,
            si_neglect_factor: 0.01,
            rx_split: RxSplit::Joint,
            sic2_im3_reference: Im3Reference::TwoTone,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        for (name, bw) in [("bw_dl_hz", self.bw_dl_hz), ("bw_ul_hz", self.bw_ul_hz)] {
            if !(bw > 0.0 && bw.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {bw}")));
            }
        }
        if !(self.enob_bits >= 1.0) {
            return Err(invalid(
                "enob_bits",
                format!("must be >= 1, got {}", self.enob_bits),
            ));
        }
        if !(self.si_neglect_factor > 0.0 && self.si_neglect_factor < 1.0) {
            return Err(invalid(
                "si_neglect_factor",
                format!("must lie in (0, 1), got {}", self.si_neglect_factor),
            ));
        }
        if let Some(l) = self.l_fs_db {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid("l_fs_db", format!("must be positive, got {l}")));
            }
        }
        let finite = [
            ("p_tx_bs_dbm", self.p_tx_bs_dbm),
            ("g_bs_dbi", self.g_bs_dbi),
            ("g_ue_dbi", self.g_ue_dbi),
            ("nf_bs_db", self.nf_bs_db),
            ("nf_ue_db", self.nf_ue_db),
            ("snr_link_db", self.snr_link_db),
            ("snr_tx_ue_db", self.snr_tx_ue_db),
            ("snr_tx_bs_db", self.snr_tx_bs_db),
            ("ebd_tx_insertion_loss_db", self.ebd_tx_insertion_loss_db),
            ("g_lna_db", self.g_lna_db),
            ("iip3_lna_dbm", self.iip3_lna_dbm),
            ("iip3_rrx_dbm", self.iip3_rrx_dbm),
            ("g_mixer_db", self.g_mixer_db),
            ("iip3_mixer_dbm", self.iip3_mixer_dbm),
            ("g_bbamp_db", self.g_bbamp_db),
            ("iip3_bbamp_dbm", self.iip3_bbamp_dbm),
            ("op1db_pa_ue_dbm", self.op1db_pa_ue_dbm),
            ("pa_gain_db", self.pa_gain_db),
            ("im3_correction_db", self.im3_correction_db),
            ("margin_noise_db", self.margin_noise_db),
            ("margin_rrx_db", self.margin_rrx_db),
            ("margin_pa_im3_db", self.margin_pa_im3_db),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.p_tx_ue_dbm.is_nan() || self.p_tx_ue_dbm == f64::INFINITY {
            return Err(invalid("p_tx_ue_dbm", "must be finite or -inf"));
        }
        if self.p_oim3_pa_dbm.is_nan() || self.p_oim3_pa_dbm == f64::INFINITY {
            return Err(invalid("p_oim3_pa_dbm", "must be finite or -inf"));
        }
        if self.l_fs_db.is_none() {
            free_space_path_loss_db(self.distance_m, self.carrier_hz)?;
        }
        Ok(())
    }

    /// Configured path loss, or the free-space loss at `distance_m`/`carrier_hz`.
    pub fn path_loss_db(&self) -> Result<f64> {
        match self.l_fs_db {
            Some(l) => Ok(l),
            None => free_space_path_loss_db(self.distance_m, self.carrier_hz),
        }
    }

    /// UE PA output power: antenna power plus the duplexer's TX-path loss.
    pub fn p_pa_out_ue_dbm(&self) -> f64 {
        self.p_tx_ue_dbm + self.ebd_tx_insertion_loss_db
    }

    pub fn oip3_lna_dbm(&self) -> f64 {
        self.g_lna_db + self.iip3_lna_dbm
    }

    /// Additive constant of the SIC₂ criterion, derived from the
    /// rest-of-receiver margin.
    pub fn sic2_additive_db(&self) -> f64 {
        match self.sic2_im3_reference {
            Im3Reference::TwoTone => self.margin_rrx_db / 3.0,
            Im3Reference::Corrected => (self.margin_rrx_db - self.im3_correction_db) / 3.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SystemParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut p = SystemParams::default();
        p.bw_dl_hz = 0.0;
        assert!(p.validate().is_err());

        let mut p = SystemParams::default();
        p.enob_bits = 0.5;
        assert!(p.validate().is_err());

        let mut p = SystemParams::default();
        p.si_neglect_factor = 1.0;
        assert!(p.validate().is_err());

        let mut p = SystemParams::default();
        p.l_fs_db = Some(-3.0);
        assert!(p.validate().is_err());

        let mut p = SystemParams::default();
        p.g_lna_db = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn silent_ue_is_valid() {
        let p = SystemParams {
            p_tx_ue_dbm: f64::NEG_INFINITY,
            ..Default::default()
        };
        p.validate().unwrap();
        assert_eq!(p.p_pa_out_ue_dbm(), f64::NEG_INFINITY);
    }

    #[test]
    fn path_loss_fallback() {
        let p = SystemParams {
            l_fs_db: None,
            ..Default::default()
        };
        assert!((p.path_loss_db().unwrap() - 100.5).abs() < 0.2);
    }

    #[test]
    fn sic2_constants() {
        let mut p = SystemParams::default();
        assert!((p.sic2_additive_db() - 6.0).abs() < 1e-12);
        p.sic2_im3_reference = Im3Reference::Corrected;
        assert!((p.sic2_additive_db() - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<SystemParams>(r#"{"nf_bs": 8}"#).unwrap_err();
        assert!(err.to_string().contains("nf_bs"), "{err}");
    }
}
