use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use fdsic_core::budget::{
    node_power_track, solve_downlink, solve_uplink, Component, SicPlan, StageAllocation,
    TrackOptions, UplinkReport,
};
use fdsic_core::chain::{
    compare_with_budget, run_full_link_with, run_im3_correction_experiment, CorrectionCurve,
    LinkSimReport,
};
use fdsic_core::exec::Execution;

use crate::output::{emit, fmt_db, table, to_json, write_atomic};
use crate::scenario::Scenario;

/// `println!` into a report buffer.
macro_rules! outln {
    ($buf:expr, $($arg:tt)*) => {{
        $buf.push_str(&format!($($arg)*));
        $buf.push('\n');
    }};
}

/// Successful completion, split by the feasibility verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Serialize)]
pub struct BudgetReport {
    pub uplink: UplinkReport,
    pub plan: SicPlan,
    pub feasible: bool,
}

pub fn budget(scenario: &Scenario, format: Format, out: Option<&Path>) -> Result<Outcome> {
    let uplink = solve_uplink(&scenario.params)?;
    let plan = solve_downlink(&scenario.params, &scenario.overrides)?;
    let feasible = plan.is_feasible();
    let report = BudgetReport {
        uplink,
        plan,
        feasible,
    };

    emit(&match format {
        Format::Json => to_json(&report)?,
        Format::Table => budget_table(&report),
    });

    if let Some(dir) = out {
        write_atomic(dir, "budget.json", &to_json(&report)?)?;
        let track = node_power_track(
            &scenario.params,
            &StageAllocation::from(&report.plan),
            &TrackOptions::default(),
        )?;
        write_atomic(dir, "node_track.csv", &track.to_csv())?;
    }
    Ok(if feasible {
        Outcome::Ok
    } else {
        Outcome::Infeasible
    })
}

fn budget_table(r: &BudgetReport) -> String {
    let u = &r.uplink;
    let mut s = String::from("Uplink\n");
    s += &table(
        &["quantity", "value"],
        &[
            ("snr_rx_bs_db", u.snr_rx_bs_db),
            ("snr_noise_db", u.snr_noise_db),
            ("p_rx_bs_min_dbm", u.p_rx_bs_min_dbm),
            ("p_tx_ue_min_dbm", u.p_tx_ue_min_dbm),
            ("p_pa_out_ue_min_dbm", u.p_pa_out_ue_min_dbm),
        ]
        .map(|(k, v)| vec![k.to_owned(), fmt_db(v)]),
    );

    let p = &r.plan;
    let pinned = if p.overridden.is_empty() {
        "none".to_owned()
    } else {
        p.overridden.join(", ")
    };
    s += &format!("\nDownlink SIC plan (pinned: {pinned})\n");
    let rows: Vec<Vec<String>> = [
        ("snr_rx_ue_db", p.snr_rx_ue_db),
        ("snr_noise_db", p.snr_noise_db),
        ("snr_im3_lna_db", p.snr_im3_lna_db),
        ("snr_si_db", p.snr_si_db),
        ("p_rx_ue_dbm", p.p_rx_ue_dbm),
        ("p_pa_out_ue_dbm", p.p_pa_out_ue_dbm),
        ("p_im3_lna_plus_noise_dbm", p.p_im3_lna_plus_noise_dbm),
        ("sic_total_db", p.sic_total_db),
        ("sic1_db", p.sic1_db),
        ("sic2_db", p.sic2_db),
        ("sic3_db", p.sic3_db),
        ("sic4_db", p.sic4_db),
    ]
    .iter()
    .map(|&(k, v)| {
        let check = p.reference_checks.iter().find(|c| c.quantity == k);
        let mut row = vec![k.to_owned(), fmt_db(v)];
        match check {
            Some(c) => {
                row.push(fmt_db(c.published));
                row.push(format!("{:+.2}", c.deviation_db));
                row.push(flag(c.flagged, c.id.as_deref()));
            }
            None => row.extend(["".into(), "".into(), "".into()]),
        }
        row
    })
    .collect();
    s += &table(
        &["quantity", "value", "published", "deviation", "flag"],
        &rows,
    );

    let extra: Vec<Vec<String>> = p
        .reference_checks
        .iter()
        .filter(|c| !rows.iter().any(|r| r[0] == c.quantity))
        .map(|c| {
            vec![
                c.quantity.clone(),
                fmt_db(c.computed),
                fmt_db(c.published),
                format!("{:+.2}", c.deviation_db),
                flag(c.flagged, c.id.as_deref()),
            ]
        })
        .collect();
    if !extra.is_empty() {
        s += "\nConsistency checks\n";
        s += &table(
            &["quantity", "value", "published", "deviation", "flag"],
            &extra,
        );
    }

    s += &format!(
        "\nADC dynamic range {} dB {} residual {} dB: {}\n",
        fmt_db(p.adc_dr_db),
        if p.adc_feasible { ">" } else { "<=" },
        fmt_db(p.adc_residual_db()),
        if p.adc_feasible {
            "feasible"
        } else {
            "INFEASIBLE"
        }
    );
    s
}

fn flag(flagged: bool, id: Option<&str>) -> String {
    match (flagged, id) {
        (false, _) => String::new(),
        (true, Some(id)) => format!("! {id}"),
        (true, None) => "!".into(),
    }
}

pub fn simulate(scenario: &Scenario, out: &Path, exec: Execution) -> Result<Outcome> {
    let cfg = scenario.chain_config();
    let report: LinkSimReport = run_full_link_with(&cfg, exec)?;

    let mut written: Vec<PathBuf> = vec![
        write_atomic(out, "report.json", &to_json(&report)?)?,
        write_atomic(out, "node_powers.csv", &report.measured.to_csv())?,
        write_atomic(out, "node_powers_analytic.csv", &report.analytic.to_csv())?,
    ];
    if let Some((tx, link)) = report.constellation_csvs(&cfg)? {
        written.push(write_atomic(out, "constellation_tx.csv", &tx)?);
        written.push(write_atomic(out, "constellation_link.csv", &link)?);
    }

    let c = &report.closure;
    let mut text = String::new();
    outln!(
        text,
        "frames {}  base seed {}",
        cfg.monte_carlo.n_frames,
        cfg.monte_carlo.base_seed
    );
    outln!(text, "EVM_tx   {:6.2} %", report.evm_tx_percent);
    outln!(text, "EVM_link {:6.2} %", report.evm_link_percent);
    outln!(
        text,
        "ADC full scale {} dBm",
        fmt_db(report.adc_full_scale_dbm)
    );
    outln!(
        text,
        "SIC allocation {} dB vs required {} dB: {}",
        fmt_db(c.allocation_total_db),
        fmt_db(c.required_total_db),
        if c.closes {
            format!("closes with {} dB margin", fmt_db(c.margin_db))
        } else {
            format!("short by {} dB", fmt_db(-c.margin_db))
        }
    );
    if let Some(m) = c.measured_residual_si_dbm {
        outln!(
            text,
            "residual SI (input-referred) {} dBm measured, {} dBm permitted, noise floor {} dBm",
            fmt_db(m),
            fmt_db(c.permitted_residual_si_dbm),
            fmt_db(c.noise_floor_dbm)
        );
    }

    let cmp = compare_with_budget(&report.measured, &report.analytic, f64::INFINITY)?;
    let rows: Vec<Vec<String>> = report
        .measured
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.node.name().to_owned()];
            for comp in Component::ALL {
                let dev = cmp
                    .cells
                    .iter()
                    .find(|c| c.node == r.node && c.component == comp)
                    .map(|c| c.deviation_db)
                    .unwrap_or(0.0);
                row.push(format!("{} ({})", fmt_db(r.powers.get(comp)), fmt_db(dev)));
            }
            row
        })
        .collect();
    outln!(
        text,
        "\nmeasured in-band power, dBm (|deviation| from the analytic track, dB)"
    );
    let header: Vec<&str> = std::iter::once("node")
        .chain(Component::ALL.iter().map(|c| c.name()))
        .collect();
    text.push_str(&table(&header, &rows));
    print_written(&mut text, out, &written);
    emit(&text);
    Ok(Outcome::Ok)
}

pub fn im3_sweep(scenario: &Scenario, out: &Path, exec: Execution) -> Result<Outcome> {
    let sweep = &scenario.im3_sweep;
    let points = sweep.points()?;
    let curve: CorrectionCurve = run_im3_correction_experiment(
        &scenario.ofdm,
        &sweep.amp,
        &points,
        sweep.seed,
        sweep.probe,
        exec,
    )
    .context("IM3 sweep")?;

    let written = vec![
        write_atomic(out, "im3_curve.csv", &curve.to_csv())?,
        write_atomic(out, "im3_curve.json", &to_json(&curve)?)?,
    ];

    let mut text = String::new();
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| {
            vec![
                fmt_db(p.p_in_dbm),
                fmt_db(p.im3_sim_dbm),
                fmt_db(p.im3_pred_dbm),
                fmt_db(p.im3_sim_dbm - p.im3_pred_dbm),
                if p.saturated {
                    "saturated".into()
                } else {
                    String::new()
                },
            ]
        })
        .collect();
    text.push_str(&table(
        &[
            "p_in_dbm",
            "im3_sim_dbm",
            "im3_pred_dbm",
            "offset_db",
            "note",
        ],
        &rows,
    ));
    let fitted = curve.points.iter().filter(|p| !p.saturated).count();
    match curve.slope_db_per_db {
        Some(slope) => outln!(
            text,
            "offset {:.2} dB, slope {:.3} dB/dB over {fitted} points",
            curve.offset_db,
            slope
        ),
        None => outln!(
            text,
            "offset {:.2} dB from a single point (no slope fit)",
            curve.offset_db
        ),
    }
    if fitted < curve.points.len() {
        outln!(
            text,
            "{} point(s) too close to compression were excluded from the fit",
            curve.points.len() - fitted
        );
    }
    print_written(&mut text, out, &written);
    emit(&text);
    Ok(Outcome::Ok)
}

fn print_written(text: &mut String, out: &Path, files: &[PathBuf]) {
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    outln!(text, "\nwrote {} to {}", names.join(", "), out.display());
}
