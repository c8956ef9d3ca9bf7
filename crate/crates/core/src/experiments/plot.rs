//! Static SVG emission: one utility-vs-epsilon chart per clipping value,
//! one line per variant with a shaded interquartile band, plus an
//! aggregated CSV of the plotted numbers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::experiments::sweep::{ResultRow, RowStatus};
use crate::metrics::quantile;
use crate::optimizer::Variant;

/// Median and interquartile range of a metric at one epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub epsilon: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub n: usize,
}

/// Groups ok rows by (clip, variant) and aggregates pck_at_01 over seeds
/// per epsilon. Strategies are aggregated together; filter rows upstream
/// when a single strategy is wanted.
pub fn aggregate_series(rows: &[ResultRow]) -> BTreeMap<String, Vec<(Variant, Vec<SeriesPoint>)>> {
    let mut by_clip: BTreeMap<String, BTreeMap<&'static str, BTreeMap<u64, Vec<f64>>>> =
        BTreeMap::new();
    for row in rows.iter().filter(|r| r.status == RowStatus::Ok) {
        by_clip
            .entry(format!("{}", row.clip_norm))
            .or_default()
            .entry(row.variant.name())
            .or_default()
            .entry(row.epsilon_target.to_bits())
            .or_default()
            .push(row.pck_at_01);
    }

    let mut out = BTreeMap::new();
    for (clip, variants) in by_clip {
        let mut series = Vec::new();
        for variant in Variant::all() {
            if let Some(by_eps) = variants.get(variant.name()) {
                let mut points: Vec<SeriesPoint> = by_eps
                    .iter()
                    .map(|(&bits, vals)| SeriesPoint {
                        epsilon: f64::from_bits(bits),
                        median: quantile(vals, 0.5),
                        q25: quantile(vals, 0.25),
                        q75: quantile(vals, 0.75),
                        n: vals.len(),
                    })
                    .collect();
                points.sort_by(|a, b| a.epsilon.partial_cmp(&b.epsilon).unwrap());
                series.push((variant, points));
            }
        }
        out.insert(clip, series);
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;

const PALETTE: [&str; 5] = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#aa3377"];

fn color_for(variant: Variant) -> &'static str {
    match variant {
        Variant::Sgd => PALETTE[0],
        Variant::DpSgd => PALETTE[1],
        Variant::ProjDpSgd => PALETTE[2],
        Variant::Fdp => PALETTE[3],
        Variant::FeatureProjective => PALETTE[4],
    }
}

/// Emits one SVG per clipping value plus `plot_aggregate.csv`. Returns the
/// paths written. Clip groups with no plottable rows are skipped.
pub fn emit_plots(rows: &[ResultRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let grouped = aggregate_series(rows);
    let mut written = Vec::new();

    let agg_path = out_dir.join("plot_aggregate.csv");
    let mut agg = BufWriter::new(File::create(&agg_path)?);
    writeln!(agg, "clip_norm,variant,epsilon,n,median_pck_at_01,q25,q75")?;

    for (clip, series) in &grouped {
        for (variant, points) in series {
            for p in points {
                writeln!(
                    agg,
                    "{clip},{variant},{},{},{:.16e},{:.16e},{:.16e}",
                    p.epsilon, p.n, p.median, p.q25, p.q75
                )?;
            }
        }
        if series.iter().all(|(_, pts)| pts.is_empty()) {
            continue;
        }
        let path = out_dir.join(format!("pck_vs_epsilon_C{clip}.svg"));
        let svg = render_chart(clip, series);
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    agg.flush()?;
    written.push(agg_path);
    Ok(written)
}

fn render_chart(clip: &str, series: &[(Variant, Vec<SeriesPoint>)]) -> String {
    let eps_min = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.epsilon))
        .fold(f64::INFINITY, f64::min);
    let eps_max = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.epsilon))
        .fold(f64::NEG_INFINITY, f64::max);
    let span = if eps_max > eps_min { eps_max - eps_min } else { 1.0 };

    let x = |e: f64| MARGIN_L + (e - eps_min) / span * (WIDTH - MARGIN_L - MARGIN_R);
    let y = |v: f64| HEIGHT - MARGIN_B - v.clamp(0.0, 1.0) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">PCK@0.1*diag vs epsilon (C = {clip})</text>\n",
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0
    ));

    // Axes.
    s.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    s.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B
    ));
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{v:.1}</text>\n",
            MARGIN_L - 6.0,
            y(v) + 4.0
        ));
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            MARGIN_L,
            y(v),
            WIDTH - MARGIN_R,
            y(v)
        ));
    }
    let mut eps_ticks: Vec<f64> =
        series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.epsilon)).collect();
    eps_ticks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eps_ticks.dedup();
    for e in &eps_ticks {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{e}</text>\n",
            x(*e),
            HEIGHT - MARGIN_B + 18.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">epsilon</text>\n",
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    ));

    for (idx, (variant, points)) in series.iter().enumerate() {
        if points.is_empty() {
            continue;
        }
        let color = color_for(*variant);
        // Interquartile band.
        if points.len() > 1 {
            let mut band = String::from("<path d=\"");
            for (i, p) in points.iter().enumerate() {
                let cmd = if i == 0 { 'M' } else { 'L' };
                band.push_str(&format!("{cmd}{:.2},{:.2} ", x(p.epsilon), y(p.q75)));
            }
            for p in points.iter().rev() {
                band.push_str(&format!("L{:.2},{:.2} ", x(p.epsilon), y(p.q25)));
            }
            band.push_str(&format!("Z\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"));
            s.push_str(&band);
        }
        // Median line.
        let mut line = String::from("<polyline points=\"");
        for p in points {
            line.push_str(&format!("{:.2},{:.2} ", x(p.epsilon), y(p.median)));
        }
        line.push_str(&format!("\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n"));
        s.push_str(&line);
        // Data points carry their values for downstream checks.
        for p in points {
            s.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\" data-variant=\"{variant}\" data-epsilon=\"{}\" data-median=\"{:.16e}\"/>\n",
                x(p.epsilon),
                y(p.median),
                p.epsilon,
                p.median
            ));
        }
        // Legend.
        let ly = MARGIN_T + 16.0 * idx as f64;
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"3\" fill=\"{color}\"/>\n",
            WIDTH - MARGIN_R + 12.0,
            ly
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{variant}</text>\n",
            WIDTH - MARGIN_R + 30.0,
            ly + 5.0
        ));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::Strategy;

    fn row(variant: Variant, eps: f64, clip: f64, seed: u64, pck: f64) -> ResultRow {
        ResultRow {
            variant,
            epsilon_target: eps,
            epsilon_accounted: eps * 0.99,
            clip_norm: clip,
            sigma: 1.0,
            seed,
            strategy: Strategy::FinetuneFrozen,
            final_loss: 1.0,
            pck_at_05: pck,
            pck_at_01: pck,
            wall_time_s: 0.0,
            status: RowStatus::Ok,
        }
    }

    #[test]
    fn chart_structure_two_variants_four_epsilons() {
        let mut rows = Vec::new();
        for &eps in &[0.2, 0.4, 0.6, 0.8] {
            for seed in 0..3 {
                rows.push(row(Variant::Sgd, eps, 0.1, seed, 0.9));
                rows.push(row(Variant::DpSgd, eps, 0.1, seed, 0.4 + eps / 4.0));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let written = emit_plots(&rows, dir.path()).unwrap();
        let svg_paths: Vec<_> =
            written.iter().filter(|p| p.extension().is_some_and(|e| e == "svg")).collect();
        assert_eq!(svg_paths.len(), 1);
        let svg = std::fs::read_to_string(svg_paths[0]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 8);
    }

    #[test]
    fn aggregate_medians_match_independent_recomputation() {
        let vals = [0.1, 0.5, 0.3, 0.9, 0.2];
        let rows: Vec<ResultRow> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| row(Variant::DpSgd, 0.8, 0.01, i as u64, v))
            .collect();
        let grouped = aggregate_series(&rows);
        let series = &grouped["0.01"];
        let (_, points) = series.iter().find(|(v, _)| *v == Variant::DpSgd).unwrap();
        // Independent recomputation: sort and take the middle element.
        let mut sorted = vals.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(points[0].median, sorted[2]);
        assert_eq!(points[0].n, 5);
    }

    #[test]
    fn infeasible_rows_are_excluded() {
        let mut r = row(Variant::DpSgd, 0.8, 0.1, 0, 0.5);
        r.status = RowStatus::Infeasible;
        let grouped = aggregate_series(&[r]);
        assert!(grouped.is_empty());
    }

    #[test]
    fn empty_variant_subset_skips_file() {
        let rows = vec![row(Variant::Sgd, 0.8, 0.1, 0, 0.9)];
        let dir = tempfile::tempdir().unwrap();
        let written = emit_plots(&rows, dir.path()).unwrap();
        // One SVG for C = 0.1 plus the aggregate CSV; no file for other C.
        assert_eq!(written.len(), 2);
    }
}
