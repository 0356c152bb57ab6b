//! Tidy CSV tables plus a JSON copy of the whole report.

use std::fs;
use std::io;
use std::path::Path;

use super::metrics::{MetricsReport, SECONDS_PER_HOUR};

pub const DELIVERIES_CSV: &str = "deliveries.csv";
pub const CDF_ALL_CSV: &str = "cdf_all.csv";
pub const CDF_1HOP_CSV: &str = "cdf_1hop.csv";
pub const RATIOS_CSV: &str = "ratios.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const REPORT_JSON: &str = "report.json";

/// `(metric, value)` rows of the summary block.
pub fn summary_rows(report: &MetricsReport) -> Vec<(String, String)> {
    let t = &report.totals;
    let mut rows = vec![
        ("unique_messages".to_owned(), t.unique_messages.to_string()),
        ("disseminated_copies".to_owned(), t.disseminated_copies.to_string()),
        ("transferred_copies".to_owned(), t.transferred_copies.to_string()),
        ("dropped_copies".to_owned(), t.dropped_copies.to_string()),
        ("subscriptions".to_owned(), t.subscriptions.to_string()),
        ("one_hop_fraction".to_owned(), report.one_hop_fraction.to_string()),
        (
            "eligible_subscriptions".to_owned(),
            report.ratio_summary.eligible_subscriptions.to_string(),
        ),
    ];
    for c in &report.delay_checkpoints {
        rows.push((format!("cdf_all_at_{}h", c.hours), c.all.to_string()));
        rows.push((format!("cdf_1hop_at_{}h", c.hours), c.one_hop.to_string()));
    }
    for s in &report.ratio_summary.thresholds {
        rows.push((format!("ratio_all_above_{:.2}", s.threshold), s.all.to_string()));
        rows.push((format!("ratio_1hop_above_{:.2}", s.threshold), s.one_hop.to_string()));
    }
    rows.push(("revoked_users".to_owned(), report.crl.len().to_string()));
    rows
}

fn csv_error(err: csv::Error) -> io::Error {
    io::Error::other(err)
}

fn write_table<R: AsRef<[u8]>>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<R>>,
) -> io::Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer.write_record(header).map_err(csv_error)?;
    for row in rows {
        writer.write_record(&row).map_err(csv_error)?;
    }
    writer.flush()
}

/// Writes every table and `report.json` into `dir`, creating it if needed.
pub fn write_report(dir: &Path, report: &MetricsReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_table(
        &dir.join(DELIVERIES_CSV),
        &["author", "number", "receiver", "created_at", "delivered_at", "delay", "hops"],
        report.deliveries.iter().map(|d| {
            vec![
                d.message.author.to_string(),
                d.message.number.to_string(),
                d.receiver.to_string(),
                d.created_at.to_string(),
                d.delivered_at.to_string(),
                d.delay().to_string(),
                d.hops.to_string(),
            ]
        }),
    )?;
    for (name, cdf) in [(CDF_ALL_CSV, &report.delay_cdf_all), (CDF_1HOP_CSV, &report.delay_cdf_1hop)] {
        write_table(
            &dir.join(name),
            &["delay_seconds", "delay_hours", "fraction"],
            cdf.iter().map(|p| {
                vec![
                    p.delay.to_string(),
                    (p.delay as f64 / SECONDS_PER_HOUR as f64).to_string(),
                    p.fraction.to_string(),
                ]
            }),
        )?;
    }
    write_table(
        &dir.join(RATIOS_CSV),
        &["follower", "followee", "ratio_all", "ratio_1hop"],
        report.delivery_ratio_per_subscription.iter().map(|r| {
            vec![
                r.follower.to_string(),
                r.followee.to_string(),
                r.all.to_string(),
                r.one_hop.to_string(),
            ]
        }),
    )?;
    write_table(
        &dir.join(SUMMARY_CSV),
        &["metric", "value"],
        summary_rows(report).into_iter().map(|(k, v)| vec![k, v]),
    )?;
    fs::write(
        dir.join(REPORT_JSON),
        serde_json::to_string_pretty(report).expect("report serializes"),
    )
}

pub fn read_report(path: &Path) -> io::Result<MetricsReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
