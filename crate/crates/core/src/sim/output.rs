//! Run outputs: `timeseries.csv`, `metrics.txt` and per-panel plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::sim::run::{RunLog, StepRecord};

/// Header of `timeseries.csv` for `n` quadrotors.
pub fn timeseries_header(n: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "x0_x", "x0_y", "x0_z", "ex0_x", "ex0_y", "ex0_z", "psi0"]
        .into_iter()
        .map(String::from)
        .collect();
    let per_quad = |cols: &mut Vec<String>, name: &str| cols.extend((1..=n).map(|i| format!("{name}_{i}")));
    per_quad(&mut cols, "psi_q");
    per_quad(&mut cols, "psi");
    per_quad(&mut cols, "tension");
    per_quad(&mut cols, "f");
    for i in 1..=n {
        cols.extend(["x", "y", "z"].map(|c| format!("M_{i}_{c}")));
    }
    cols.extend(["theta_x0_norm", "theta_r0_norm", "theta_xi_max_norm"].map(String::from));
    cols
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        write!(out, "{v}").expect("writing to a String cannot fail");
    }
    out.push('\n');
}

fn timeseries_row(r: &StepRecord) -> Vec<f64> {
    let mut row = vec![r.t];
    row.extend(r.position.iter());
    row.extend(r.position_error.iter());
    row.push(r.psi0_trace);
    row.extend(&r.link_psi);
    row.extend(&r.quad_psi);
    row.extend(&r.tension);
    row.extend(&r.thrust);
    for m in &r.moment {
        row.extend(m.iter());
    }
    row.extend(r.estimate_norms);
    row
}

/// Renders a table with header `cols` and one row per record.
fn table(log: &RunLog, cols: &[String], row: impl Fn(&StepRecord) -> Vec<f64>) -> String {
    let mut out = cols.join(",");
    out.push('\n');
    for r in &log.records {
        push_row(&mut out, row(r));
    }
    out
}

pub fn timeseries_csv(log: &RunLog) -> String {
    table(log, &timeseries_header(log.n), timeseries_row)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Earliest time after which `‖e_x0‖` stays below `tol`.
fn settling_time(log: &RunLog, tol: f64) -> Option<f64> {
    let last_bad = log.records.iter().rposition(|r| r.position_error.norm() >= tol);
    match last_bad {
        None => log.records.first().map(|r| r.t),
        Some(k) => log.records.get(k + 1).map(|r| r.t),
    }
}

pub fn metrics_text(log: &RunLog) -> String {
    let mut out = String::new();
    let Some(last) = log.last() else {
        return out;
    };
    let t_final = last.t;
    let window = log.window(t_final - 2.0);
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let manifold = log.worst_manifold();
    let mut kv = |k: &str, v: f64| writeln!(out, "{k}={v}").expect("writing to a String cannot fail");
    kv("t_final", t_final);
    kv("steps", log.records.len() as f64);
    kv("position_error_final", last.position_error.norm());
    kv("position_error_mean_last2s", mean(window.iter().map(|r| r.position_error.norm())));
    kv("psi0_final", last.psi0_trace);
    kv("psi0_frob_final", last.psi0_frob);
    kv("psi0_mean_last2s", mean(window.iter().map(|r| r.psi0_trace)));
    kv("psi_q_max_final", max(&last.link_psi));
    kv("psi_q_max_mean_last2s", mean(window.iter().map(|r| max(&r.link_psi))));
    kv("psi_quad_max_final", max(&last.quad_psi));
    kv("tension_max", log.records.iter().map(|r| max(&r.tension)).fold(0.0, f64::max));
    kv("estimate_norm_max", log.records.iter().map(|r| max(&r.estimate_norms)).fold(0.0, f64::max));
    kv("lyapunov_initial", log.records[0].lyapunov);
    kv("lyapunov_final", last.lyapunov);
    kv("settling_time_position_0.05", settling_time(log, 0.05).unwrap_or(f64::NAN));
    kv("orthogonality_max", manifold.orthogonality);
    kv("unit_norm_max", manifold.unit_norm);
    kv("tangency_max", manifold.tangency);
    out
}

/// Plot data keyed by file name, one table per panel.
pub fn plot_tables(log: &RunLog) -> Vec<(&'static str, String)> {
    let n = log.n;
    let cols = |fixed: &[&str], per_quad: &[&str]| -> Vec<String> {
        let mut c: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
        for name in per_quad {
            c.extend((1..=n).map(|i| format!("{name}_{i}")));
        }
        c
    };
    let norm_max = |v: &[nalgebra::Vector3<f64>]| -> Vec<f64> { v.iter().map(|m| m.norm()).collect() };
    vec![
        (
            "a_position.csv",
            table(log, &cols(&["t", "x0_x", "x0_y", "x0_z", "x0d_x", "x0d_y", "x0d_z"], &[]), |r| {
                let d = r.position - r.position_error;
                vec![r.t, r.position.x, r.position.y, r.position.z, d.x, d.y, d.z]
            }),
        ),
        (
            "b_payload_attitude.csv",
            table(log, &cols(&["t", "psi0_frob", "psi0_trace"], &[]), |r| {
                vec![r.t, r.psi0_frob, r.psi0_trace]
            }),
        ),
        (
            "c_link_direction.csv",
            table(log, &cols(&["t"], &["psi_q"]), |r| [vec![r.t], r.link_psi.clone()].concat()),
        ),
        (
            "d_quad_attitude.csv",
            table(log, &cols(&["t"], &["psi"]), |r| [vec![r.t], r.quad_psi.clone()].concat()),
        ),
        (
            "e_tension.csv",
            table(log, &cols(&["t"], &["tension"]), |r| [vec![r.t], r.tension.clone()].concat()),
        ),
        (
            "f_inputs.csv",
            table(log, &cols(&["t"], &["f", "M_norm"]), |r| {
                [vec![r.t], r.thrust.clone(), norm_max(&r.moment)].concat()
            }),
        ),
        (
            "lyapunov.csv",
            table(log, &cols(&["t", "V"], &[]), |r| vec![r.t, r.lyapunov]),
        ),
    ]
}

/// Writes `timeseries.csv`, `metrics.txt` and `plotdata/` under `dir`.
pub fn write_outputs(log: &RunLog, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let plot_dir = dir.join("plotdata");
    fs::create_dir_all(&plot_dir)?;
    fs::write(dir.join("timeseries.csv"), timeseries_csv(log))?;
    fs::write(dir.join("metrics.txt"), metrics_text(log))?;
    for (name, body) in plot_tables(log) {
        fs::write(plot_dir.join(name), body)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::preset;
    use crate::sim::run::run;

    fn short_log() -> RunLog {
        let mut sc = preset("figure8").unwrap();
        sc.t_final = 0.05;
        run(&sc).unwrap()
    }

    fn parse(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
        let mut lines = text.lines();
        let header = lines.next().unwrap().split(',').map(String::from).collect();
        let rows = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        (header, rows)
    }

    #[test]
    fn timeseries_column_count() {
        let log = short_log();
        let n = log.n;
        let (header, rows) = parse(&timeseries_csv(&log));
        let expected = 1 + 3 + 3 + 1 + n + n + n + n + 3 * n + 3;
        assert_eq!(header.len(), expected);
        assert!(rows.iter().all(|r| r.len() == expected));
        assert_eq!(rows.len(), log.records.len());
    }

    #[test]
    fn metrics_report_final_attitude_error() {
        let log = short_log();
        let text = metrics_text(&log);
        let line = text.lines().find(|l| l.starts_with("psi0_final=")).unwrap();
        let v: f64 = line["psi0_final=".len()..].parse().unwrap();
        assert_eq!(v, log.last().unwrap().psi0_trace);
    }

    #[test]
    fn tension_panel_matches_timeseries() {
        let log = short_log();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&log, dir.path()).unwrap();
        let (ts_header, ts) = parse(&fs::read_to_string(dir.path().join("timeseries.csv")).unwrap());
        let (e_header, e) = parse(&fs::read_to_string(dir.path().join("plotdata/e_tension.csv")).unwrap());
        for i in 1..=log.n {
            let name = format!("tension_{i}");
            let a = ts_header.iter().position(|h| *h == name).unwrap();
            let b = e_header.iter().position(|h| *h == name).unwrap();
            for (r1, r2) in ts.iter().zip(&e) {
                assert_eq!(r1[a], r2[b]);
                assert_eq!(r1[0], r2[0]);
            }
        }
        assert!(dir.path().join("metrics.txt").exists());
    }
}
