//! Output-file builders: audit headers, CSV bodies, plot scripts.
//!
//! Every artifact this crate writes starts with a `#`-comment audit header
//! embedding the resolved run configuration and seed, so a file is
//! self-describing and its run can be replayed bitwise from the header
//! alone. Floats are formatted with the shortest round-trip representation,
//! so parsing a written value recovers the original bit pattern.
//!
//! Plot scripts use a small, gnuplot-compatible line-plot grammar (see the
//! project README): `set` directives plus one `plot` line whose series read
//! columns from the CSVs written alongside.

use crate::config::RunConfig;
use crate::continuation::BifurcationCurve;
use crate::error::{Error, Result};
use crate::mde::{MomentState, ResponseCurve};
use crate::orbit::FixedPointResult;
use crate::stochastic::Trajectory;
use crate::syncstat::Histogram2D;
use std::fmt::Write as _;

/// Comment header carried at the top of every output file: the command,
/// the effective seed, and the full resolved configuration.
pub fn audit_header(command: &str, cfg: &RunConfig) -> Result<String> {
    let resolved = cfg.resolved()?;
    let mut out = String::new();
    writeln!(out, "# noisesync {command}").unwrap();
    writeln!(out, "# seed = {}", resolved.sim.seed).unwrap();
    writeln!(out, "# resolved config (replayable as a config file):").unwrap();
    for line in resolved.to_toml()?.lines() {
        writeln!(out, "#   {line}").unwrap();
    }
    Ok(out)
}

/// `t,x1,x2,u` rows.
pub fn trajectory_csv(header: &str, tr: &Trajectory) -> String {
    let mut out = String::with_capacity(header.len() + 32 * tr.len());
    out.push_str(header);
    out.push_str("t,x1,x2,u\n");
    for i in 0..tr.len() {
        writeln!(out, "{},{},{},{}", tr.t[i], tr.x1[i], tr.x2[i], tr.u[i]).unwrap();
    }
    out
}

/// `t,error` rows for a paired run's synchronization error series.
pub fn error_series_csv(header: &str, t: &[f64], e: &[f64]) -> Result<String> {
    if t.len() != e.len() {
        return Err(Error::GridMismatch("time and error series lengths differ"));
    }
    let mut out = String::with_capacity(header.len() + 16 * t.len());
    out.push_str(header);
    out.push_str("t,error\n");
    for (ti, ei) in t.iter().zip(e) {
        writeln!(out, "{ti},{ei}").unwrap();
    }
    Ok(out)
}

/// One mean-convergence-time measurement at a parameter point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MctRow {
    pub omega: f64,
    pub c: f64,
    pub mean_t: f64,
    pub saturated: bool,
    pub k_reps: usize,
    pub grid_m: usize,
    pub epsilon: f64,
}

/// `omega,c,mean_T,saturated,K,M,epsilon` rows.
pub fn mct_csv(header: &str, rows: &[MctRow]) -> String {
    let mut out = String::from(header);
    out.push_str("omega,c,mean_T,saturated,K,M,epsilon\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.omega, r.c, r.mean_t, r.saturated, r.k_reps, r.grid_m, r.epsilon
        )
        .unwrap();
    }
    out
}

/// `omega,direction,ptp_m1,ptp_msq,ptp_s22` rows, one block per curve.
pub fn sweep_csv(header: &str, curves: &[&ResponseCurve]) -> String {
    let mut out = String::from(header);
    out.push_str("omega,direction,ptp_m1,ptp_msq,ptp_s22\n");
    for curve in curves {
        for pt in &curve.points {
            writeln!(
                out,
                "{},{},{},{},{}",
                pt.omega,
                curve.direction.as_str(),
                pt.ptp_m1,
                pt.ptp_msq,
                pt.ptp_s22
            )
            .unwrap();
        }
    }
    out
}

/// `c,omega_star,m1,m2,s11,s12,s22,res_fp,res_P1` rows.
pub fn curve_csv(header: &str, curve: &BifurcationCurve) -> String {
    let mut out = String::from(header);
    out.push_str("c,omega_star,m1,m2,s11,s12,s22,res_fp,res_P1\n");
    for pt in &curve.points {
        let q = &pt.q_bar;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            pt.c, pt.omega_star, q.m1, q.m2, q.s11, q.s12, q.s22, pt.residual_fp, pt.residual_p1
        )
        .unwrap();
    }
    out
}

/// One gain-comparison sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainsRow {
    pub m1: f64,
    pub s11: f64,
    pub alpha0: f64,
    pub alpha0_oracle: f64,
    pub alpha1: f64,
    pub alpha1_fd: f64,
}

/// `m1,s11,alpha0,alpha0_oracle,alpha1,alpha1_fd` rows.
pub fn gains_csv(header: &str, rows: &[GainsRow]) -> String {
    let mut out = String::from(header);
    out.push_str("m1,s11,alpha0,alpha0_oracle,alpha1,alpha1_fd\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.m1, r.s11, r.alpha0, r.alpha0_oracle, r.alpha1, r.alpha1_fd
        )
        .unwrap();
    }
    out
}

/// `iter,m1,m2,s11,s12,s22` rows of stroboscopic-section iterates.
pub fn poincare_csv(header: &str, points: &[MomentState]) -> String {
    let mut out = String::from(header);
    out.push_str("iter,m1,m2,s11,s12,s22\n");
    for (i, q) in points.iter().enumerate() {
        writeln!(out, "{i},{},{},{},{},{}", q.m1, q.m2, q.s11, q.s12, q.s22).unwrap();
    }
    out
}

/// Structured `key = value` report for a converged fixed point.
pub fn fixed_point_report(header: &str, fp: &FixedPointResult) -> String {
    let mut out = String::from(header);
    writeln!(out, "m = {}", fp.m).unwrap();
    writeln!(out, "residual = {}", fp.residual).unwrap();
    writeln!(out, "stable = {}", fp.stable).unwrap();
    let q = &fp.q_bar;
    writeln!(out, "q_bar.m1 = {}", q.m1).unwrap();
    writeln!(out, "q_bar.m2 = {}", q.m2).unwrap();
    writeln!(out, "q_bar.s11 = {}", q.s11).unwrap();
    writeln!(out, "q_bar.s12 = {}", q.s12).unwrap();
    writeln!(out, "q_bar.s22 = {}", q.s22).unwrap();
    for (i, s) in fp.multipliers.iter().enumerate() {
        writeln!(out, "multiplier_{i} = {} {} {}", s.re, s.im, s.norm()).unwrap();
    }
    out
}

fn join_floats(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Histogram file: edge and accounting metadata as comments, then the
/// row-major count matrix (one line per x1 bin, columns are x2 bins).
pub fn histogram_file(header: &str, h: &Histogram2D) -> String {
    let mut out = String::from(header);
    writeln!(out, "# x1_edges = {}", join_floats(&h.x1_edges)).unwrap();
    writeln!(out, "# x2_edges = {}", join_floats(&h.x2_edges)).unwrap();
    writeln!(out, "# normalization = {}", h.normalization).unwrap();
    writeln!(out, "# out_of_range = {}", h.out_of_range).unwrap();
    let (rows, cols) = h.n_bins();
    for i in 0..rows {
        let line = (0..cols)
            .map(|j| h.counts[i * cols + j].to_string())
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Script plotting a sweep CSV: peak-to-peak mean-square response against
/// frequency, forward and backward branches as separate series.
pub fn sweep_plot_script(header: &str, csv_name: &str) -> String {
    let mut out = String::from(header);
    out.push_str("set datafile separator \",\"\n");
    out.push_str("set title \"frequency response sweep\"\n");
    out.push_str("set xlabel \"omega\"\n");
    out.push_str("set ylabel \"peak-to-peak mean square\"\n");
    writeln!(
        out,
        "plot \"{csv_name}\" using 1:(strcol(2) eq \"forward\" ? $4 : 1/0) with linespoints title \"forward\", \\\n     \"{csv_name}\" using 1:(strcol(2) eq \"backward\" ? $4 : 1/0) with linespoints title \"backward\""
    )
    .unwrap();
    out
}

/// Script overlaying the fold curve on mean-convergence-time markers:
/// parameter points with saturated/slow times versus fast ones on either
/// side of the curve.
pub fn overlay_plot_script(header: &str, curve_csv: &str, mct_csv: &str) -> String {
    let mut out = String::from(header);
    out.push_str("set datafile separator \",\"\n");
    out.push_str("set title \"fold set and convergence-time classification\"\n");
    out.push_str("set xlabel \"omega\"\n");
    out.push_str("set ylabel \"c\"\n");
    writeln!(
        out,
        "plot \"{curve_csv}\" using 2:1 with lines title \"fold set\", \\\n     \"{mct_csv}\" using 1:($3 < 1000 ? $2 : 1/0) with points pointtype 6 title \"fast (<T> < 1e3)\", \\\n     \"{mct_csv}\" using 1:($3 >= 1000 ? $2 : 1/0) with points pointtype 7 title \"slow (<T> >= 1e3)\""
    )
    .unwrap();
    out
}
