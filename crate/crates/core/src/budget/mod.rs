//! Closed-form link budget and SIC allocation.
//!
//! Everything here is scalar dB/dBm arithmetic. Absent signals are carried as
//! `f64::NEG_INFINITY` dBm (the "-inf sentinel") and flow through the sums
//! below without special casing: a −∞ term contributes zero linear power.

mod params;
pub mod sentinel;
mod solve;
mod track;

pub use params::{Im3Reference, RxSplit, SystemParams};
pub use solve::{
    solve_downlink, solve_uplink, PlanOverrides, ReferenceCheck, SicPlan, UplinkReport,
    REFERENCE_FIGURES,
};
pub use track::{
    node_power_track, path_gain_db, quantization_noise_dbc, Component, Node, NodePowerTable,
    NodePowers, NodeRow, StageAllocation, TrackOptions, ADC_HEADROOM_DB,
};

use crate::error::{invalid, Error, Result};

/// Thermal noise density at 290 K.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// `10^(x/10)`. `-inf` maps to 0; NaN and `+inf` are rejected.
pub fn db_to_linear(x_db: f64) -> Result<f64> {
    if x_db.is_nan() || x_db == f64::INFINITY {
        return Err(Error::NonFinite("dB value"));
    }
    Ok(lin(x_db))
}

/// `10·log10(x)`. Zero maps to `-inf`; negative, NaN and infinite inputs are
/// rejected.
pub fn linear_to_db(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("linear value"));
    }
    if x < 0.0 {
        return Err(invalid("x", format!("negative power ratio {x}")));
    }
    Ok(db(x))
}

#[inline]
pub(crate) fn lin(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

#[inline]
pub(crate) fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Incoherent power sum of dBm terms.
pub fn power_sum_dbm(terms: &[f64]) -> Result<f64> {
    if terms.is_empty() {
        return Err(Error::Empty("power_sum_dbm terms"));
    }
    if terms.iter().any(|t| t.is_nan() || *t == f64::INFINITY) {
        return Err(Error::NonFinite("power term"));
    }
    Ok(db(terms.iter().map(|&t| lin(t)).sum()))
}

/// Reciprocal-sum combination of independent SNR contributions,
/// `1 / Σ 1/SNRᵢ`, in dB. An infinite SNR contributes nothing.
pub fn combine_snr(snrs_db: &[f64]) -> Result<f64> {
    if snrs_db.is_empty() {
        return Err(Error::Empty("combine_snr inputs"));
    }
    if snrs_db.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("SNR"));
    }
    let inv: f64 = snrs_db.iter().map(|&s| lin(-s)).sum();
    Ok(-db(inv))
}

/// The SNR a second contributor must have so that, combined with
/// `snr_known_db`, the total equals `snr_total_db`.
pub fn required_component_snr(snr_total_db: f64, snr_known_db: f64) -> Result<f64> {
    if !snr_total_db.is_finite() || snr_known_db.is_nan() {
        return Err(Error::NonFinite("SNR"));
    }
    let slack = lin(-snr_total_db) - lin(-snr_known_db);
    if slack <= 0.0 {
        return Err(Error::Infeasible {
            step: "required_component_snr",
            detail: format!(
                "known contributor {snr_known_db:.3} dB already fails the {snr_total_db:.3} dB total"
            ),
        });
    }
    Ok(-db(slack))
}

/// `−174 dBm/Hz + 10·log10(BW) + NF`.
pub fn noise_floor_dbm(bw_hz: f64, nf_db: f64) -> Result<f64> {
    if !(bw_hz > 0.0) || !bw_hz.is_finite() {
        return Err(invalid("bw_hz", format!("must be positive, got {bw_hz}")));
    }
    Ok(THERMAL_NOISE_DBM_PER_HZ + db(bw_hz) + nf_db)
}

/// Receiver sensitivity: noise floor plus the SNR the noise alone must leave.
pub fn min_received_power_dbm(bw_hz: f64, nf_db: f64, snr_noise_db: f64) -> Result<f64> {
    Ok(noise_floor_dbm(bw_hz, nf_db)? + snr_noise_db)
}

pub fn friis_received_power_dbm(p_tx_dbm: f64, g_tx_dbi: f64, l_fs_db: f64, g_rx_dbi: f64) -> f64 {
    p_tx_dbm + g_tx_dbi - l_fs_db + g_rx_dbi
}

/// `20·log10(4π·d·f/c)`.
pub fn free_space_path_loss_db(distance_m: f64, carrier_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(invalid("distance_m", "must be positive"));
    }
    if !(carrier_hz > 0.0) {
        return Err(invalid("carrier_hz", "must be positive"));
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance_m * carrier_hz / SPEED_OF_LIGHT_M_S).log10())
}

/// Input-referred IM3 power from the two-tone law `3·P − 2·IIP3`, plus an
/// additive correction for modulated (high-PAPR) drive.
pub fn im3_input_referred_dbm(p_in_dbm: f64, iip3_dbm: f64, correction_db: f64) -> f64 {
    3.0 * p_in_dbm - 2.0 * iip3_dbm + correction_db
}

/// SNR against residual SI such that its reciprocal is `neglect_factor` times
/// the noise-plus-IM3 reciprocal sum.
pub fn snr_si_requirement_db(
    snr_noise_db: f64,
    snr_im3_db: f64,
    neglect_factor: f64,
) -> Result<f64> {
    if !(neglect_factor > 0.0 && neglect_factor <= 1.0) {
        return Err(invalid(
            "si_neglect_factor",
            format!("must lie in (0, 1], got {neglect_factor}"),
        ));
    }
    Ok(-db(neglect_factor * (lin(-snr_noise_db) + lin(-snr_im3_db))))
}

/// Total cancellation needed to push the PA output down to the permitted
/// residual `p_rx_ue − snr_si`.
pub fn sic_total_db(p_pa_out_ue_dbm: f64, p_rx_ue_dbm: f64, snr_si_db: f64) -> f64 {
    p_pa_out_ue_dbm - (p_rx_ue_dbm - snr_si_db)
}

/// Isolation that keeps the LNA's (corrected) IM3 at `snr_im3_db` below the
/// desired signal.
pub fn sic1_requirement_db(
    p_pa_out_ue_dbm: f64,
    p_rx_ue_dbm: f64,
    snr_im3_db: f64,
    iip3_lna_dbm: f64,
    correction_db: f64,
) -> f64 {
    p_pa_out_ue_dbm - (p_rx_ue_dbm - snr_im3_db + 2.0 * iip3_lna_dbm - correction_db) / 3.0
}

/// RF cancellation that keeps the rest-of-receiver IM3 below the LNA's.
pub fn sic2_requirement_db(oip3_lna_dbm: f64, iip3_rrx_dbm: f64, additive_term_db: f64) -> f64 {
    2.0 / 3.0 * (oip3_lna_dbm - iip3_rrx_dbm) + additive_term_db
}

/// Analog cancellation that buries the PA's own distortion `margin_db` below
/// the receiver's noise-plus-IM3 floor.
pub fn sic3_requirement_db(
    p_oim3_pa_dbm: f64,
    p_im3_lna_plus_noise_dbm: f64,
    sic1_db: f64,
    sic2_db: f64,
    margin_db: f64,
) -> f64 {
    p_oim3_pa_dbm - p_im3_lna_plus_noise_dbm - sic1_db - sic2_db + margin_db
}

/// ADC dynamic range `6·(ENOB − 2)` and whether it covers the cancellation
/// still owed after the analog stages.
pub fn adc_dynamic_range_check(
    enob_bits: f64,
    sic_total_db: f64,
    sic1_db: f64,
    sic2_db: f64,
    sic3_db: f64,
) -> Result<(f64, bool)> {
    if !(enob_bits >= 1.0) {
        return Err(invalid(
            "enob_bits",
            format!("must be >= 1, got {enob_bits}"),
        ));
    }
    let dr = 6.0 * (enob_bits - 2.0);
    let residual = sic_total_db - (sic1_db + sic2_db + sic3_db);
    Ok((dr, dr > residual))
}

/// Digital cancellation still owed after the analog stages, floored at 0 dB.
pub fn sic4_requirement_db(sic_total_db: f64, sic1_db: f64, sic2_db: f64, sic3_db: f64) -> f64 {
    (sic_total_db - (sic1_db + sic2_db + sic3_db)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn db_conversions() {
        close(db_to_linear(0.0).unwrap(), 1.0, 0.0);
        close(db_to_linear(10.0).unwrap(), 10.0, 1e-12);
        close(db_to_linear(3.0103).unwrap(), 2.0, 1e-4);
        assert_eq!(db_to_linear(f64::NEG_INFINITY).unwrap(), 0.0);
        assert!(db_to_linear(f64::NAN).is_err());
        assert!(db_to_linear(f64::INFINITY).is_err());
        assert_eq!(linear_to_db(0.0).unwrap(), f64::NEG_INFINITY);
        assert!(linear_to_db(-1.0).is_err());
        assert!(linear_to_db(f64::INFINITY).is_err());
    }

    #[test]
    fn power_sums() {
        close(power_sum_dbm(&[-80.0, -80.0]).unwrap(), -76.99, 0.01);
        // 10·log10(1e-8 + 10^-6.9)
        close(power_sum_dbm(&[-80.0, -69.0]).unwrap(), -68.67, 0.02);
        close(power_sum_dbm(&[-100.0]).unwrap(), -100.0, 1e-12);
        close(
            power_sum_dbm(&[-42.0, f64::NEG_INFINITY]).unwrap(),
            -42.0,
            1e-12,
        );
        assert!(power_sum_dbm(&[]).is_err());
    }

    #[test]
    fn snr_combination() {
        close(combine_snr(&[24.0, 24.0]).unwrap(), 20.99, 0.05);
        close(combine_snr(&[30.0, 21.58]).unwrap(), 21.0, 0.05);
        close(combine_snr(&[17.3]).unwrap(), 17.3, 1e-12);
        close(combine_snr(&[17.3, f64::INFINITY]).unwrap(), 17.3, 1e-12);
        assert!(combine_snr(&[]).is_err());
    }

    #[test]
    fn required_component() {
        close(required_component_snr(21.0, 24.0).unwrap(), 24.02, 0.05);
        let x = required_component_snr(21.58, 28.0).unwrap();
        close(x, 22.73, 0.1);
        close(combine_snr(&[28.0, x]).unwrap(), 21.58, 1e-9);
        assert!(matches!(
            required_component_snr(21.0, 21.0),
            Err(Error::Infeasible { .. })
        ));
        assert!(required_component_snr(21.0, 20.0).is_err());
    }

    #[test]
    fn noise_and_sensitivity() {
        close(noise_floor_dbm(400e6, 8.0).unwrap(), -79.98, 0.05);
        close(noise_floor_dbm(1.0, 0.0).unwrap(), -174.0, 1e-12);
        close(noise_floor_dbm(400e6, 0.0).unwrap(), -87.98, 0.05);
        assert!(noise_floor_dbm(0.0, 8.0).is_err());
        close(
            min_received_power_dbm(400e6, 8.0, 27.0).unwrap(),
            -52.98,
            0.05,
        );
        close(
            min_received_power_dbm(400e6, 8.0, 0.0).unwrap(),
            -79.98,
            0.05,
        );
        close(
            min_received_power_dbm(100e6, 5.0, 20.0).unwrap(),
            -69.0,
            0.1,
        );
    }

    #[test]
    fn link_equations() {
        close(
            friis_received_power_dbm(8.0, 20.0, 101.0, 20.0),
            -53.0,
            1e-12,
        );
        close(
            friis_received_power_dbm(15.0, 20.0, 101.0, 20.0),
            -46.0,
            1e-12,
        );
        close(friis_received_power_dbm(0.0, 0.0, 0.0, 0.0), 0.0, 0.0);

        close(free_space_path_loss_db(90.0, 28e9).unwrap(), 100.5, 0.2);
        let unit = SPEED_OF_LIGHT_M_S / (4.0 * std::f64::consts::PI);
        close(free_space_path_loss_db(1.0, unit).unwrap(), 0.0, 1e-12);
        close(free_space_path_loss_db(180.0, 28e9).unwrap(), 106.5, 0.2);
        assert!(free_space_path_loss_db(0.0, 28e9).is_err());
    }

    #[test]
    fn im3_law() {
        close(im3_input_referred_dbm(-30.0, -7.0, 0.0), -76.0, 1e-12);
        close(im3_input_referred_dbm(-30.0, -7.0, 8.0), -68.0, 1e-12);
    }

    #[test]
    fn si_requirement() {
        close(snr_si_requirement_db(28.0, 23.0, 0.01).unwrap(), 41.8, 0.1);
        close(snr_si_requirement_db(300.0, 23.0, 0.01).unwrap(), 43.0, 0.1);
        close(
            snr_si_requirement_db(28.0, 23.0, 1.0).unwrap(),
            combine_snr(&[28.0, 23.0]).unwrap(),
            1e-12,
        );
        assert!(snr_si_requirement_db(28.0, 23.0, 0.0).is_err());
    }

    #[test]
    fn sic_stages() {
        close(sic_total_db(12.0, -46.0, 44.0), 102.0, 1e-12);
        close(sic_total_db(12.0, -46.0, 41.8), 99.8, 1e-12);
        close(sic_total_db(0.0, 0.0, 0.0), 0.0, 0.0);

        close(
            sic1_requirement_db(12.0, -46.0, 23.0, -7.0, 8.0),
            42.33,
            0.05,
        );
        close(sic1_requirement_db(0.0, 0.0, 0.0, 0.0, 0.0), 0.0, 0.0);
        close(
            sic1_requirement_db(12.0, -46.0, 23.0, -4.0, 8.0),
            40.33,
            0.05,
        );

        close(sic2_requirement_db(13.0, -15.0, 6.0), 24.67, 0.005);
        close(sic2_requirement_db(0.0, 0.0, 6.0), 6.0, 0.0);
        close(sic2_requirement_db(13.0, -15.0, 10.0 / 3.0), 22.0, 0.05);

        close(
            sic3_requirement_db(0.0, -73.0, 42.33, 24.67, 10.0),
            16.0,
            1e-9,
        );
        let floor = power_sum_dbm(&[-80.0, -69.0]).unwrap();
        close(
            sic3_requirement_db(0.0, floor, 42.33, 24.67, 10.0),
            11.7,
            0.2,
        );
        close(sic3_requirement_db(0.0, 0.0, 0.0, 0.0, 0.0), 0.0, 0.0);

        close(sic4_requirement_db(102.0, 42.0, 25.0, 16.0), 19.0, 1e-12);
        close(sic4_requirement_db(102.0, 102.0, 0.0, 0.0), 0.0, 0.0);
        close(sic4_requirement_db(102.0, 42.33, 24.67, 16.0), 19.0, 0.05);
        assert_eq!(sic4_requirement_db(50.0, 40.0, 20.0, 10.0), 0.0);
    }

    #[test]
    fn adc_check() {
        assert_eq!(
            adc_dynamic_range_check(8.0, 102.0, 42.0, 25.0, 16.0).unwrap(),
            (36.0, true)
        );
        assert_eq!(
            adc_dynamic_range_check(5.0, 102.0, 42.0, 25.0, 16.0).unwrap(),
            (18.0, false)
        );
        assert_eq!(
            adc_dynamic_range_check(2.0, 50.0, 40.0, 20.0, 10.0).unwrap(),
            (0.0, true)
        );
        assert!(adc_dynamic_range_check(0.5, 0.0, 0.0, 0.0, 0.0).is_err());
    }
}
