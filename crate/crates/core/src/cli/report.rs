//! CSV tables and plot-data files.
//!
//! CSV values are fractions printed with 6 significant digits (or percents
//! with `--percent`). Plot-data files carry one named series of `(x, y)`
//! points per line in a figure, with `null` for missing values.

use std::path::Path;

use serde::Serialize;

use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::metrics::{to_f64, DecompositionReport, IGapResult};

/// Formats `x` with 6 significant digits, without trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if !(-5..15).contains(&exp) {
        return sci;
    }
    // Round through the scientific form so large values also keep 6 digits.
    let rounded: f64 = sci.parse().unwrap_or(x);
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{rounded:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Scale applied at the formatting layer only.
#[derive(Debug, Clone, Copy)]
pub struct Scale(pub f64);

impl Scale {
    pub fn new(percent: bool) -> Self {
        Scale(if percent { 100.0 } else { 1.0 })
    }

    pub fn apply(self, x: f64) -> f64 {
        x * self.0
    }

    pub fn cell(self, x: f64) -> String {
        fmt_sig(self.apply(x))
    }

    pub fn opt_cell(self, x: Option<f64>) -> String {
        x.map(|v| self.cell(v)).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory csv");
        for r in &self.rows {
            w.write_record(r).expect("in-memory csv");
        }
        w.into_inner().expect("in-memory csv")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotData {
    pub series: Vec<Series>,
    pub x_label: String,
    pub y_label: String,
}

impl PlotData {
    pub fn to_json(&self) -> Vec<u8> {
        let mut s = serde_json::to_string_pretty(self).expect("plot data serializes");
        s.push('\n');
        s.into_bytes()
    }
}

/// A rendered artifact: file name relative to the output directory plus
/// its bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn csv(stem: &str, table: &Table) -> Self {
        Self {
            file_name: format!("{stem}.csv"),
            bytes: table.to_csv(),
        }
    }

    pub fn plot(stem: &str, plot: &PlotData) -> Self {
        Self {
            file_name: format!("{stem}.json"),
            bytes: plot.to_json(),
        }
    }
}

/// Writes every artifact atomically. Nothing is written unless all
/// artifacts were rendered, since rendering happens before this call.
pub fn emit(artifacts: &[Artifact], out_dir: &Path) -> Result<()> {
    if artifacts.is_empty() {
        return Err(Error::EmptySet("no results to emit".into()));
    }
    for a in artifacts {
        write_atomic(&out_dir.join(&a.file_name), &a.bytes)?;
    }
    Ok(())
}

pub const DECOMPOSE_HEADER: &[&str] = &[
    "checkpoint_id",
    "seed",
    "step",
    "source",
    "target",
    "e_train",
    "g_inter",
    "g_intra",
    "e",
    "transfer_gap",
];

pub fn decompose_table(reports: &[DecompositionReport], scale: Scale) -> Table {
    let mut t = Table::new(DECOMPOSE_HEADER);
    for r in reports {
        t.push(vec![
            r.checkpoint_id.clone(),
            r.seed.to_string(),
            r.step.to_string(),
            r.source_language.clone(),
            r.target_language.clone(),
            scale.cell(to_f64(r.e_train)),
            scale.cell(to_f64(r.g_inter)),
            scale.cell(to_f64(r.g_intra)),
            scale.cell(to_f64(r.e)),
            scale.opt_cell(r.transfer_gap.map(to_f64)),
        ]);
    }
    t
}

/// Component curves against training step, averaged over seeds at each step:
/// one series per (model, direction, component).
pub fn decompose_plot(model: &str, reports: &[DecompositionReport], scale: Scale) -> PlotData {
    use std::collections::BTreeMap;
    let mut by_direction: BTreeMap<(String, String), BTreeMap<u64, Vec<&DecompositionReport>>> = BTreeMap::new();
    for r in reports {
        by_direction
            .entry((r.source_language.clone(), r.target_language.clone()))
            .or_default()
            .entry(r.step)
            .or_default()
            .push(r);
    }
    type Component = fn(&DecompositionReport) -> f64;
    let components: [(&str, Component); 3] = [
        ("g_inter", |r| to_f64(r.g_inter)),
        ("g_intra", |r| to_f64(r.g_intra)),
        ("e_train", |r| to_f64(r.e_train)),
    ];
    let mut series = Vec::new();
    for ((s, t), steps) in &by_direction {
        for (name, f) in components {
            let points = steps
                .iter()
                .map(|(step, rs)| {
                    let mean = rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
                    (*step as f64, Some(scale.apply(mean)))
                })
                .collect();
            series.push(Series {
                name: format!("{model} {s}-{t} {name}"),
                points,
            });
        }
    }
    PlotData {
        series,
        x_label: "step".into(),
        y_label: "error".into(),
    }
}

pub const GAP_HEADER: &[&str] = &["checkpoint_id", "seed", "step", "source", "target", "transfer_gap"];

/// One row per checkpoint and direction.
pub struct GapRow {
    pub checkpoint_id: String,
    pub seed: i64,
    pub step: u64,
    pub source: String,
    pub target: String,
    pub gap: f64,
}

pub fn gap_table(rows: &[GapRow], scale: Scale) -> Table {
    let mut t = Table::new(GAP_HEADER);
    for r in rows {
        t.push(vec![
            r.checkpoint_id.clone(),
            r.seed.to_string(),
            r.step.to_string(),
            r.source.clone(),
            r.target.clone(),
            scale.cell(r.gap),
        ]);
    }
    t
}

pub fn gap_plot(model: &str, rows: &[GapRow], scale: Scale) -> PlotData {
    use std::collections::BTreeMap;
    let mut by_direction: BTreeMap<(String, String), Vec<&GapRow>> = BTreeMap::new();
    for r in rows {
        by_direction.entry((r.source.clone(), r.target.clone())).or_default().push(r);
    }
    let series = by_direction
        .into_iter()
        .map(|((s, t), mut rs)| {
            rs.sort_by(|a, b| (a.step, a.seed, &a.checkpoint_id).cmp(&(b.step, b.seed, &b.checkpoint_id)));
            Series {
                name: format!("{model} {s}-{t}"),
                points: rs.iter().map(|r| (r.step as f64, Some(scale.apply(r.gap)))).collect(),
            }
        })
        .collect();
    PlotData {
        series,
        x_label: "step".into(),
        y_label: "transfer_gap".into(),
    }
}

pub const IGAP_HEADER: &[&str] = &[
    "source",
    "target",
    "seed",
    "e_prime",
    "epsilon",
    "igap",
    "witness",
    "qualifying_count",
];

/// IGap results for one direction, optionally tied to one seed.
pub struct IGapRows {
    pub source: String,
    pub target: String,
    pub seed: Option<i64>,
    pub results: Vec<IGapResult>,
}

pub fn igap_table(groups: &[IGapRows], scale: Scale) -> Table {
    let mut t = Table::new(IGAP_HEADER);
    for g in groups {
        for r in &g.results {
            t.push(vec![
                g.source.clone(),
                g.target.clone(),
                g.seed.map(|s| s.to_string()).unwrap_or_default(),
                fmt_sig(r.e_prime),
                fmt_sig(r.epsilon),
                scale.opt_cell(r.value_f64()),
                r.witness.clone().unwrap_or_default(),
                r.qualifying_count.to_string(),
            ]);
        }
    }
    t
}

/// One series per (model, direction[, seed]) with x = e' and y = IGap.
pub fn igap_plot(model: &str, groups: &[IGapRows], scale: Scale) -> PlotData {
    let series = groups
        .iter()
        .map(|g| {
            let mut name = format!("{model} {}-{}", g.source, g.target);
            if let Some(seed) = g.seed {
                name.push_str(&format!(" seed{seed}"));
            }
            Series {
                name,
                points: g
                    .results
                    .iter()
                    .map(|r| (r.e_prime, r.value_f64().map(|v| scale.apply(v))))
                    .collect(),
            }
        })
        .collect();
    PlotData {
        series,
        x_label: "e_prime".into(),
        y_label: "igap".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(0.25), "0.25");
        assert_eq!(fmt_sig(0.15), "0.15");
        assert_eq!(fmt_sig(2.0 / 3.0), "0.666667");
        assert_eq!(fmt_sig(-1.0 / 3.0), "-0.333333");
        assert_eq!(fmt_sig(21.1), "21.1");
        assert_eq!(fmt_sig(100.0), "100");
        assert_eq!(fmt_sig(123456789.0), "123457000");
        assert_eq!(fmt_sig(0.000123456789), "0.000123457");
        assert_eq!(fmt_sig(1e-7), "1.00000e-7");
    }

    #[test]
    fn csv_quotes_awkward_ids() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["x,y".into(), "1".into()]);
        assert_eq!(String::from_utf8(t.to_csv()).unwrap(), "a,b\n\"x,y\",1\n");
    }

    #[test]
    fn plot_json_encodes_holes_as_null() {
        let p = PlotData {
            series: vec![Series {
                name: "s".into(),
                points: vec![(0.2, None), (0.0, Some(0.5))],
            }],
            x_label: "x".into(),
            y_label: "y".into(),
        };
        let v: serde_json::Value = serde_json::from_slice(&p.to_json()).unwrap();
        assert_eq!(v["series"][0]["points"][0][1], serde_json::Value::Null);
        assert_eq!(v["series"][0]["points"][1][1], 0.5);
    }
}
