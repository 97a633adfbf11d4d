use serde::{Deserialize, Serialize};

use super::params::{RxSplit, SystemParams};
use super::{
    adc_dynamic_range_check, friis_received_power_dbm, im3_input_referred_dbm,
    min_received_power_dbm, noise_floor_dbm, power_sum_dbm, required_component_snr,
    sic1_requirement_db, sic2_requirement_db, sic3_requirement_db, sic4_requirement_db,
    sic_total_db, snr_si_requirement_db,
};
use crate::error::{Error, Result};

/// Uplink sensitivity chain: what the UE must transmit for the BS to close
/// the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UplinkReport {
    pub snr_rx_bs_db: f64,
    pub snr_noise_db: f64,
    pub p_rx_bs_min_dbm: f64,
    pub p_tx_ue_min_dbm: f64,
    pub p_pa_out_ue_min_dbm: f64,
}

pub fn solve_uplink(params: &SystemParams) -> Result<UplinkReport> {
    params.validate()?;
    let snr_rx_bs_db = required_component_snr(params.snr_link_db, params.snr_tx_ue_db)
        .map_err(|e| at_step("snr_rx_bs", e))?;
    let snr_noise_db = snr_rx_bs_db + params.margin_noise_db;
    let p_rx_bs_min_dbm = min_received_power_dbm(params.bw_ul_hz, params.nf_bs_db, snr_noise_db)?;
    let l_fs = params.path_loss_db()?;
    // Friis solved for the transmit power.
    let p_tx_ue_min_dbm = p_rx_bs_min_dbm - params.g_ue_dbi + l_fs - params.g_bs_dbi;
    Ok(UplinkReport {
        snr_rx_bs_db,
        snr_noise_db,
        p_rx_bs_min_dbm,
        p_tx_ue_min_dbm,
        p_pa_out_ue_min_dbm: p_tx_ue_min_dbm + params.ebd_tx_insertion_loss_db,
    })
}

/// Values pinned by the caller instead of being derived. Any field left
/// `None` is computed; a pinned value feeds every later step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanOverrides {
    #[serde(with = "super::sentinel::option")]
    pub snr_rx_ue_db: Option<f64>,
    #[serde(with = "super::sentinel::option")]
    pub snr_noise_db: Option<f64>,
    #[serde(with = "super::sentinel::option")]
    pub snr_im3_lna_db: Option<f64>,
    #[serde(with = "super::sentinel::option")]
    pub snr_si_db: Option<f64>,
    #[serde(with = "super::sentinel::option")]
    pub p_rx_ue_dbm: Option<f64>,
    #[serde(with = "super::sentinel::option")]
    pub p_pa_out_ue_dbm: Option<f64>,
    #[serde(with = "super::sentinel::option")]
    pub p_im3_lna_plus_noise_dbm: Option<f64>,
    #[serde(with = "super::sentinel::option")]
    pub sic_total_db: Option<f64>,
    #[serde(with = "super::sentinel::option")]
    pub sic1_db: Option<f64>,
    #[serde(with = "super::sentinel::option")]
    pub sic2_db: Option<f64>,
    #[serde(with = "super::sentinel::option")]
    pub sic3_db: Option<f64>,
}

impl PlanOverrides {
    pub const KEYS: [&'static str; 11] = [
        "snr_rx_ue_db",
        "snr_noise_db",
        "snr_im3_lna_db",
        "snr_si_db",
        "p_rx_ue_dbm",
        "p_pa_out_ue_dbm",
        "p_im3_lna_plus_noise_dbm",
        "sic_total_db",
        "sic1_db",
        "sic2_db",
        "sic3_db",
    ];

    /// The rounded intermediates of the published design, which make the
    /// solver land on the published SIC figures.
    pub fn reference() -> Self {
        Self {
            snr_noise_db: Some(28.0),
            snr_im3_lna_db: Some(23.0),
            snr_si_db: Some(44.0),
            p_im3_lna_plus_noise_dbm: Some(-73.0),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    fn slot(&mut self, key: &str) -> Option<&mut Option<f64>> {
        Some(match key {
            "snr_rx_ue_db" => &mut self.snr_rx_ue_db,
            "snr_noise_db" => &mut self.snr_noise_db,
            "snr_im3_lna_db" => &mut self.snr_im3_lna_db,
            "snr_si_db" => &mut self.snr_si_db,
            "p_rx_ue_dbm" => &mut self.p_rx_ue_dbm,
            "p_pa_out_ue_dbm" => &mut self.p_pa_out_ue_dbm,
            "p_im3_lna_plus_noise_dbm" => &mut self.p_im3_lna_plus_noise_dbm,
            "sic_total_db" => &mut self.sic_total_db,
            "sic1_db" => &mut self.sic1_db,
            "sic2_db" => &mut self.sic2_db,
            "sic3_db" => &mut self.sic3_db,
            _ => return None,
        })
    }

    /// Pins `key` to `value`. Returns `false` for an unknown key.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        match self.slot(key) {
            Some(s) => {
                *s = Some(value);
                true
            }
            None => false,
        }
    }

    pub fn is_key(key: &str) -> bool {
        Self::KEYS.contains(&key)
    }
}

/// One comparison between a solver output and a published design figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    /// Identifier of the known discrepancy this quantity belongs to, if any.
    pub id: Option<String>,
    pub quantity: String,
    pub published: f64,
    pub computed: f64,
    pub deviation_db: f64,
    /// `|deviation| > 0.5 dB`.
    pub flagged: bool,
}

/// Published figures the plan is checked against:
/// `(quantity, published value, discrepancy id)`.
pub const REFERENCE_FIGURES: [(&str, f64, Option<&str>); 11] = [
    ("snr_rx_ue_db", 21.6, None),
    ("snr_noise_db", 28.0, Some("RQ-1")),
    ("snr_im3_lna_db", 23.0, None),
    ("snr_si_db", 44.0, Some("RQ-2")),
    ("p_rx_ue_dbm", -46.0, None),
    ("p_pa_out_ue_dbm", 12.0, None),
    ("sic_total_db", 102.0, Some("RQ-2")),
    ("sic1_db", 42.0, None),
    ("sic2_db", 25.0, Some("RQ-3")),
    ("sic3_db", 16.0, Some("RQ-4")),
    ("sic4_db", 17.0, Some("RQ-5")),
];

const FLAG_THRESHOLD_DB: f64 = 0.5;

/// Derived SIC allocation for the downlink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SicPlan {
    pub snr_rx_ue_db: f64,
    pub snr_noise_db: f64,
    pub snr_im3_lna_db: f64,
    pub snr_si_db: f64,
    pub p_rx_ue_dbm: f64,
    #[serde(with = "super::sentinel")]
    pub p_pa_out_ue_dbm: f64,
    #[serde(with = "super::sentinel")]
    pub p_im3_lna_plus_noise_dbm: f64,
    pub sic_total_db: f64,
    pub sic1_db: f64,
    pub sic2_db: f64,
    pub sic3_db: f64,
    pub sic4_db: f64,
    pub adc_dr_db: f64,
    pub adc_feasible: bool,
    /// Names of the quantities that were pinned rather than derived.
    pub overridden: Vec<String>,
    pub reference_checks: Vec<ReferenceCheck>,
}

impl SicPlan {
    /// Cancellation the ADC must carry: total minus the analog stages.
    pub fn adc_residual_db(&self) -> f64 {
        self.sic_total_db - (self.sic1_db + self.sic2_db + self.sic3_db)
    }

    pub fn is_feasible(&self) -> bool {
        self.adc_feasible
    }

    fn value(&self, quantity: &str) -> Option<f64> {
        Some(match quantity {
            "snr_rx_ue_db" => self.snr_rx_ue_db,
            "snr_noise_db" => self.snr_noise_db,
            "snr_im3_lna_db" => self.snr_im3_lna_db,
            "snr_si_db" => self.snr_si_db,
            "p_rx_ue_dbm" => self.p_rx_ue_dbm,
            "p_pa_out_ue_dbm" => self.p_pa_out_ue_dbm,
            "sic_total_db" => self.sic_total_db,
            "sic1_db" => self.sic1_db,
            "sic2_db" => self.sic2_db,
            "sic3_db" => self.sic3_db,
            "sic4_db" => self.sic4_db,
            _ => return None,
        })
    }
}

fn at_step(step: &'static str, e: Error) -> Error {
    match e {
        Error::Infeasible { detail, .. } => Error::Infeasible { step, detail },
        other => other,
    }
}

fn check(id: Option<&str>, quantity: &str, published: f64, computed: f64) -> ReferenceCheck {
    let deviation_db = computed - published;
    ReferenceCheck {
        id: id.map(str::to_owned),
        quantity: quantity.to_owned(),
        published,
        computed,
        deviation_db,
        flagged: !(deviation_db.abs() <= FLAG_THRESHOLD_DB),
    }
}

/// Runs the downlink derivation chain: receiver SNR target → noise / LNA-IM3
/// / SI shares → total SIC → per-stage requirements → ADC check.
///
/// Any quantity present in `overrides` replaces the derived value and feeds
/// the later steps. Steps without a solution fail with
/// [`Error::Infeasible`] naming the step.
pub fn solve_downlink(params: &SystemParams, overrides: &PlanOverrides) -> Result<SicPlan> {
    params.validate()?;
    let o = overrides;
    let mut overridden = Vec::new();
    let mut pick =
        |name: &str, pinned: Option<f64>, derive: &mut dyn FnMut() -> Result<f64>| match pinned {
            Some(v) => {
                overridden.push(name.to_owned());
                Ok(v)
            }
            None => derive(),
        };

    let snr_rx_ue_db = pick("snr_rx_ue_db", o.snr_rx_ue_db, &mut || {
        required_component_snr(params.snr_link_db, params.snr_tx_bs_db)
            .map_err(|e| at_step("snr_rx_ue", e))
    })?;

    let l_fs = params.path_loss_db()?;
    let p_rx_ue_dbm = pick("p_rx_ue_dbm", o.p_rx_ue_dbm, &mut || {
        Ok(friis_received_power_dbm(
            params.p_tx_bs_dbm,
            params.g_bs_dbi,
            l_fs,
            params.g_ue_dbi,
        ))
    })?;

    let floor_dl = noise_floor_dbm(params.bw_dl_hz, params.nf_ue_db)?;
    let snr_noise_from_floor = p_rx_ue_dbm - floor_dl;
    let snr_noise_db = pick("snr_noise_db", o.snr_noise_db, &mut || {
        Ok(params.snr_noise_dl_db.unwrap_or(snr_noise_from_floor))
    })?;

    let snr_im3_lna_db = pick("snr_im3_lna_db", o.snr_im3_lna_db, &mut || {
        // Joint: noise+IM3 must combine to the target raised by the SI share,
        // so that adding SI (factor f of the rest) lands exactly on target.
        let target = match params.rx_split {
            RxSplit::Joint => snr_rx_ue_db + 10.0 * (1.0 + params.si_neglect_factor).log10(),
            RxSplit::NeglectSi => snr_rx_ue_db,
        };
        required_component_snr(target, snr_noise_db).map_err(|e| at_step("snr_im3_lna", e))
    })?;

    let snr_si_db = pick("snr_si_db", o.snr_si_db, &mut || {
        snr_si_requirement_db(snr_noise_db, snr_im3_lna_db, params.si_neglect_factor)
    })?;

    let p_pa_out_ue_dbm = pick("p_pa_out_ue_dbm", o.p_pa_out_ue_dbm, &mut || {
        Ok(params.p_pa_out_ue_dbm())
    })?;

    let (dr, _) = adc_dynamic_range_check(params.enob_bits, 0.0, 0.0, 0.0, 0.0)?;
    let silent = p_pa_out_ue_dbm == f64::NEG_INFINITY;

    let (sic_total, sic1, sic2, sic3, p_im3_lna_plus_noise_dbm);
    if silent {
        // Nothing transmitted, nothing to cancel.
        sic_total = 0.0;
        sic1 = 0.0;
        sic2 = 0.0;
        sic3 = 0.0;
        p_im3_lna_plus_noise_dbm = floor_dl;
    } else {
        sic_total = pick("sic_total_db", o.sic_total_db, &mut || {
            Ok(sic_total_db(p_pa_out_ue_dbm, p_rx_ue_dbm, snr_si_db))
        })?;
        sic1 = pick("sic1_db", o.sic1_db, &mut || {
            Ok(sic1_requirement_db(
                p_pa_out_ue_dbm,
                p_rx_ue_dbm,
                snr_im3_lna_db,
                params.iip3_lna_dbm,
                params.im3_correction_db,
            ))
        })?;
        sic2 = pick("sic2_db", o.sic2_db, &mut || {
            Ok(sic2_requirement_db(
                params.oip3_lna_dbm(),
                params.iip3_rrx_dbm,
                params.sic2_additive_db(),
            ))
        })?;
        p_im3_lna_plus_noise_dbm = pick(
            "p_im3_lna_plus_noise_dbm",
            o.p_im3_lna_plus_noise_dbm,
            &mut || {
                let im3 = im3_input_referred_dbm(
                    p_pa_out_ue_dbm - sic1,
                    params.iip3_lna_dbm,
                    params.im3_correction_db,
                );
                power_sum_dbm(&[floor_dl, im3])
            },
        )?;
        sic3 = pick("sic3_db", o.sic3_db, &mut || {
            // A PA with no distortion needs no analog cancellation.
            Ok(sic3_requirement_db(
                params.p_oim3_pa_dbm,
                p_im3_lna_plus_noise_dbm,
                sic1,
                sic2,
                params.margin_pa_im3_db,
            )
            .max(0.0))
        })?;
    }
    let (adc_dr_db, adc_feasible) = if silent {
        (dr, true)
    } else {
        adc_dynamic_range_check(params.enob_bits, sic_total, sic1, sic2, sic3)?
    };
    let sic4 = sic4_requirement_db(sic_total, sic1, sic2, sic3);

    let mut plan = SicPlan {
        snr_rx_ue_db,
        snr_noise_db,
        snr_im3_lna_db,
        snr_si_db,
        p_rx_ue_dbm,
        p_pa_out_ue_dbm,
        p_im3_lna_plus_noise_dbm,
        sic_total_db: sic_total,
        sic1_db: sic1,
        sic2_db: sic2,
        sic3_db: sic3,
        sic4_db: sic4,
        adc_dr_db,
        adc_feasible,
        overridden,
        reference_checks: Vec::new(),
    };

    let mut checks: Vec<ReferenceCheck> = REFERENCE_FIGURES
        .iter()
        .filter_map(|&(q, published, id)| plan.value(q).map(|v| check(id, q, published, v)))
        .collect();
    // The noise share implied by the received power and noise floor alone.
    checks.push(check(
        Some("RQ-1"),
        "snr_noise_from_noise_floor_db",
        28.0,
        snr_noise_from_floor,
    ));
    // SIC₂ with the additive constant re-derived from the margin and the
    // OFDM correction instead of the plain two-tone law.
    if !silent {
        let derived = sic2_requirement_db(
            params.oip3_lna_dbm(),
            params.iip3_rrx_dbm,
            (params.margin_rrx_db - params.im3_correction_db) / 3.0,
        );
        checks.push(check(
            Some("RQ-3"),
            "sic2_derived_constant_db",
            25.0,
            derived,
        ));
    }
    plan.reference_checks = checks;

    Ok(plan)
}
