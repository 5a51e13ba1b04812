//! Result emission: CSV tables, JSON, static HTML report with inline SVG
//! charts, and the published reference rows.
//!
//! Output files are deterministic byte-for-byte for a fixed seed: rows are
//! sorted and floats printed with fixed precision. Reference rows copied
//! from the published tables carry `source=paper` and are never merged into
//! computed cells.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::harness::{MaskSweepOutput, ResultTable, StatsRow, SweepRow, TableCell};

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.4}")
    }
}

pub fn write_table_csv(path: &Path, table: &ResultTable) -> Result<()> {
    let mut out = String::from("dataset,victim,mode,budget_rate,mean,std,n,source\n");
    for c in &table.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            table.dataset,
            c.victim,
            c.mode,
            fmt_f(c.budget_rate),
            fmt_f(c.mean),
            fmt_f(c.std),
            c.n,
            c.source
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_table_json(path: &Path, table: &ResultTable) -> Result<()> {
    let json = serde_json::to_string_pretty(table)?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn write_beta_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("beta,mode,budget_rate,mean,std,n\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f(r.beta),
            r.mode,
            fmt_f(r.budget_rate),
            fmt_f(r.mean),
            fmt_f(r.std),
            r.n
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_mask_sweep_csv(path: &Path, sweep: &MaskSweepOutput) -> Result<()> {
    let mut out = String::from("masking_rate,model,beta,mean,std,n\n");
    for r in &sweep.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f(r.masking_rate),
            r.model,
            r.beta.map_or("".to_string(), fmt_f),
            fmt_f(r.mean),
            fmt_f(r.std),
            r.n
        )
        .unwrap();
    }
    for (rate, beta) in &sweep.best_beta {
        writeln!(out, "{},best-beta,{},,,", fmt_f(*rate), fmt_f(*beta)).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_stats_csv(path: &Path, stats: &[StatsRow]) -> Result<()> {
    let mut out = String::from(
        "attacked_model,mode,budget_rate,total_flips,frac_direct_target,\
         frac_indirect_neighbor_out_link,frac_other\n",
    );
    for s in stats {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.attacked_model,
            s.mode,
            fmt_f(s.budget_rate),
            s.total_flips,
            fmt_f(s.frac_direct_target),
            fmt_f(s.frac_indirect_neighbor_out_link),
            fmt_f(s.frac_other)
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reference rows copied from the published result tables (accuracy %,
/// mean ± std). They cover models outside this artifact's scope (directed
/// spectral baselines and defense methods) plus the published numbers for
/// the models built here, and render alongside computed rows for
/// comparison. `mode` strings follow the computed-table convention; rows
/// the publication leaves blank (no adaptive gradient path) are omitted.
pub fn paper_reference_cells(dataset: &str) -> Vec<TableCell> {
    // (victim, clean_total ±, clean_target ±,
    //  [25t, 25a, 50t, 50a, 100t, 100a] with None for blank cells)
    type Row = (
        &'static str,
        (f64, f64),
        (f64, f64),
        [Option<(f64, f64)>; 6],
    );
    let rows: &[Row] = match dataset {
        "cora_ml" => &[
            ("mlp", (64.6, 2.2), (73.5, 7.4),
             [Some((73.5, 7.4)), Some((73.5, 7.4)), Some((73.5, 7.4)),
              Some((73.5, 7.4)), Some((73.5, 7.4)), Some((73.5, 7.4))]),
            ("dgcn", (75.0, 3.1), (89.5, 7.6),
             [Some((76.5, 13.0)), None, Some((54.5, 7.9)), None, Some((38.0, 14.2)), None]),
            ("digcn", (75.5, 2.2), (85.0, 7.4),
             [Some((50.0, 6.7)), None, Some((40.5, 9.1)), None, Some((29.0, 6.2)), None]),
            ("directed-magnet", (57.1, 5.2), (69.5, 10.4),
             [Some((65.0, 9.7)), None, Some((59.5, 10.6)), None, Some((54.0, 7.0)), None]),
            ("undirected-magnet", (79.6, 2.1), (88.5, 3.2),
             [Some((70.5, 10.6)), None, Some((55.5, 6.9)), None, Some((35.5, 6.1)), None]),
            ("jaccard-gcn", (81.0, 1.6), (90.5, 6.5),
             [Some((69.5, 7.9)), Some((65.5, 7.9)), Some((44.0, 6.2)),
              Some((34.0, 7.0)), Some((21.0, 7.0)), Some((8.0, 4.6))]),
            ("rgcn", (81.4, 1.5), (88.0, 6.0),
             [Some((72.5, 8.4)), Some((66.0, 7.7)), Some((44.0, 8.9)),
              Some((36.0, 5.4)), Some((17.5, 8.7)), Some((7.0, 4.6))]),
            ("grand", (81.2, 0.9), (85.5, 6.1),
             [Some((74.0, 7.0)), Some((65.0, 7.4)), Some((64.0, 9.2)),
              Some((51.0, 8.6)), Some((45.0, 7.1)), Some((24.0, 7.7))]),
            ("elasticgnn", (79.0, 0.7), (89.0, 6.2),
             [Some((86.0, 5.4)), None, Some((74.0, 5.8)), None, Some((50.0, 9.7)), None]),
            ("gcn", (81.8, 1.5), (89.5, 6.1),
             [Some((66.0, 9.7)), Some((66.0, 9.7)), Some((40.5, 8.5)),
              Some((40.5, 8.5)), Some((12.0, 6.4)), Some((12.0, 6.4))]),
            ("bbrw-gcn", (80.5, 1.3), (90.0, 5.5),
             [Some((89.5, 6.1)), Some((89.0, 6.2)), Some((86.0, 5.4)),
              Some((85.0, 6.3)), Some((85.0, 7.1)), Some((75.0, 10.2))]),
            ("appnp", (82.5, 1.6), (90.5, 4.7),
             [Some((81.5, 9.5)), Some((80.5, 10.4)), Some((66.5, 8.7)),
              Some((68.0, 12.1)), Some((44.0, 9.2)), Some((46.0, 7.3))]),
            ("bbrw-appnp", (82.5, 1.2), (91.0, 4.9),
             [Some((89.0, 5.4)), Some((87.5, 5.6)), Some((85.0, 7.1)),
              Some((83.0, 6.4)), Some((83.5, 6.3)), Some((69.0, 9.7))]),
            ("gcn-soft-median", (81.6, 1.3), (91.5, 5.5),
             [Some((86.0, 7.0)), Some((83.0, 7.1)), Some((75.0, 8.4)),
              Some((73.0, 7.1)), Some((48.5, 11.4)), Some((47.5, 9.3))]),
            ("bbrw-gcn-soft-median", (82.4, 1.3), (92.0, 4.6),
             [Some((91.5, 5.0)), Some((92.0, 4.6)), Some((89.5, 6.9)),
              Some((88.0, 5.1)), Some((87.0, 8.4)), Some((84.5, 8.8))]),
            ("gcn-rwout", (75.9, 1.7), (86.5, 6.3),
             [Some((86.5, 6.3)), Some((52.0, 8.1)), Some((86.5, 6.3)),
              Some((28.0, 4.6)), Some((86.5, 6.3)), Some((10.5, 5.7))]),
            ("gcn-rwin", (70.8, 2.8), (78.0, 5.1),
             [Some((27.0, 5.1)), Some((19.0, 7.7)), Some((12.0, 7.8)),
              Some((0.0, 0.0)), Some((3.0, 3.3)), Some((0.0, 0.0))]),
            ("appnp-rwout", (75.0, 1.6), (85.5, 6.5),
             [Some((85.5, 6.5)), Some((30.0, 7.7)), Some((85.5, 6.5)),
              Some((15.0, 3.9)), Some((85.0, 6.3)), Some((11.5, 3.2))]),
            ("appnp-rwin", (72.2, 2.4), (78.5, 5.9),
             [Some((30.0, 7.4)), Some((18.5, 5.0)), Some((17.5, 6.8)),
              Some((2.0, 2.4)), Some((9.5, 5.2)), Some((0.0, 0.0))]),
        ],
        "citeseer" => &[
            ("mlp", (55.4, 2.2), (49.0, 9.4),
             [Some((49.0, 9.4)), Some((49.0, 9.4)), Some((49.0, 9.4)),
              Some((49.0, 9.4)), Some((49.0, 9.4)), Some((49.0, 9.4))]),
            ("dgcn", (62.5, 2.3), (64.0, 7.0),
             [Some((54.0, 8.3)), None, Some((34.5, 10.6)), None, Some((27.0, 10.1)), None]),
            ("digcn", (60.7, 2.4), (66.0, 8.6),
             [Some((41.5, 10.5)), None, Some((29.5, 8.2)), None, Some((21.5, 5.9)), None]),
            ("directed-magnet", (45.3, 5.5), (42.5, 9.3),
             [Some((42.5, 11.5)), None, Some((35.0, 12.0)), None, Some((35.0, 7.7)), None]),
            ("undirected-magnet", (66.9, 1.6), (68.0, 6.0),
             [Some((51.5, 11.2)), None, Some((29.0, 10.2)), None, Some((17.0, 7.1)), None]),
            ("jaccard-gcn", (66.2, 1.4), (57.0, 7.1),
             [Some((45.5, 7.9)), Some((38.5, 9.5)), Some((23.0, 7.8)),
              Some((11.5, 5.5)), Some((20.0, 10.2)), Some((6.5, 5.0))]),
            ("rgcn", (64.2, 2.0), (61.5, 7.1),
             [Some((34.5, 9.1)), Some((34.0, 10.2)), Some((9.5, 4.2)),
              Some((7.0, 5.6)), Some((6.5, 4.5)), Some((4.5, 3.5))]),
            ("grand", (68.1, 1.2), (67.5, 6.0),
             [Some((56.5, 6.3)), Some((56.0, 8.9)), Some((43.0, 5.1)),
              Some((42.5, 9.0)), Some((37.5, 8.1)), Some((27.5, 6.8))]),
            ("elasticgnn", (60.0, 2.6), (59.0, 8.6),
             [Some((54.0, 6.6)), None, Some((27.5, 6.8)), None, Some((13.5, 9.0)), None]),
            ("gcn", (66.2, 1.4), (59.0, 5.4),
             [Some((36.5, 9.5)), Some((36.5, 9.5)), Some((10.5, 5.7)),
              Some((10.5, 5.7)), Some((4.5, 4.2)), Some((4.5, 4.2))]),
            ("bbrw-gcn", (65.3, 1.4), (61.5, 7.4),
             [Some((50.0, 7.7)), Some((43.0, 10.3)), Some((31.5, 6.3)),
              Some((27.0, 14.4)), Some((26.0, 8.0)), Some((20.5, 9.6))]),
            ("appnp", (68.5, 1.4), (72.0, 6.0),
             [Some((53.5, 9.5)), Some((51.0, 6.2)), Some((16.0, 10.7)),
              Some((13.5, 9.8)), Some((9.0, 4.4)), Some((8.5, 9.0))]),
            ("bbrw-appnp", (68.3, 1.8), (69.0, 4.4),
             [Some((66.0, 8.3)), Some((59.0, 9.7)), Some((55.0, 8.1)),
              Some((26.5, 8.4)), Some((43.5, 6.3)), Some((14.5, 6.1))]),
            ("gcn-soft-median", (66.6, 1.7), (61.5, 5.9),
             [Some((56.0, 8.3)), Some((56.0, 8.3)), Some((34.5, 10.8)),
              Some((35.0, 10.7)), Some((26.5, 9.8)), Some((26.0, 9.0))]),
            ("bbrw-gcn-soft-median", (65.7, 2.0), (59.5, 7.2),
             [Some((58.5, 7.8)), Some((58.5, 7.8)), Some((53.0, 7.5)),
              Some((48.0, 7.0)), Some((49.0, 7.7)), Some((48.0, 8.1))]),
        ],
        _ => &[],
    };

    let budgets = [0.25, 0.25, 0.5, 0.5, 1.0, 1.0];
    let modes = ["transfer", "adaptive", "transfer", "adaptive", "transfer", "adaptive"];
    let mut cells = Vec::new();
    for (victim, total, target, robust) in rows {
        let mut push = |mode: &str, budget: f64, (mean, std): (f64, f64)| {
            cells.push(TableCell {
                victim: victim.to_string(),
                mode: mode.to_string(),
                budget_rate: budget,
                mean,
                std,
                n: 10,
                source: "paper".to_string(),
            });
        };
        push("clean-total", 0.0, *total);
        push("clean-target", 0.0, *target);
        for k in 0..6 {
            if let Some(v) = robust[k] {
                push(modes[k], budgets[k], v);
            }
        }
    }
    cells
}

/// Published masking-rate ablation (adaptive, 50% budget, Cora-ML):
/// (rate, backbone acc ±, bbrw acc ±, best beta).
pub fn paper_masking_reference() -> Vec<(f64, (f64, f64), (f64, f64), f64)> {
    vec![
        (0.5, (73.0, 7.1), (86.5, 5.9), 0.7),
        (0.6, (73.0, 7.1), (87.0, 5.1), 0.7),
        (0.7, (73.0, 7.1), (87.5, 5.6), 0.7),
        (0.8, (73.0, 7.1), (87.5, 5.6), 0.7),
        (0.9, (73.0, 7.1), (87.5, 4.6), 0.7),
        (1.0, (73.0, 7.1), (89.0, 4.9), 0.8),
    ]
}

/// Published adversary-behavior fractions: attacking GCN spends 96.32% of
/// the budget on direct target flips; attacking GCN-RWin 80.34%; adaptively
/// attacking GCN-RWout spends 65.55% on indirect out-link flips.
pub fn paper_adversary_fractions() -> Vec<(&'static str, &'static str, f64)> {
    vec![
        ("gcn", "direct-target", 0.9632),
        ("gcn-rwin", "direct-target", 0.8034),
        ("gcn-rwout", "indirect-neighbor-out-link", 0.6555),
    ]
}

fn svg_line_chart(
    series: &[(String, Vec<(f64, f64)>)],
    x_label: &str,
    y_label: &str,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, pts) in series {
        for &(x, _) in pts {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
    }
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    let (y_min, y_max) = (0.0, 100.0);
    let sx = |x: f64| PAD + (x - x_min) / (x_max - x_min) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y_min) / (y_max - y_min) * (H - 2.0 * PAD);
    let mut svg = format!(
        "<svg viewBox=\"0 0 {W} {H}\" width=\"{W}\" height=\"{H}\" \
         xmlns=\"http://www.w3.org/2000/svg\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    );
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = sy(y_min + frac * (y_max - y_min));
        writeln!(
            svg,
            "<line x1=\"{PAD}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\
             <text x=\"4\" y=\"{:.1}\" font-size=\"11\">{:.0}</text>",
            W - PAD,
            y + 4.0,
            y_min + frac * (y_max - y_min)
        )
        .unwrap();
    }
    for (si, (name, pts)) in series.iter().enumerate() {
        let color = colors[si % colors.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y.clamp(y_min, y_max))))
            .collect();
        writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        )
        .unwrap();
        for &(x, y) in pts {
            writeln!(
                svg,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.5\" fill=\"{color}\"/>",
                sx(x),
                sy(y.clamp(y_min, y_max))
            )
            .unwrap();
        }
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"{color}\">{name}</text>",
            W - PAD + 4.0,
            sy(pts.last().map_or(0.0, |p| p.1.clamp(y_min, y_max))),
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{x_label}</text>\
         <text x=\"6\" y=\"14\" font-size=\"12\">{y_label}</text></svg>",
        W / 2.0 - 20.0,
        H - 8.0
    )
    .unwrap();
    svg
}

fn html_table(cells: &[TableCell]) -> String {
    let mut out = String::from(
        "<table><tr><th>victim</th><th>mode</th><th>budget</th>\
         <th>accuracy</th><th>n</th><th>source</th></tr>\n",
    );
    for c in cells {
        writeln!(
            out,
            "<tr><td>{}</td><td>{}</td><td>{:.0}%</td><td>{:.1} &plusmn; {:.1}</td>\
             <td>{}</td><td>{}</td></tr>",
            c.victim,
            c.mode,
            c.budget_rate * 100.0,
            c.mean,
            c.std,
            c.n,
            c.source
        )
        .unwrap();
    }
    out.push_str("</table>\n");
    out
}

/// Self-contained static HTML report (tables + inline SVG charts).
pub fn write_report_html(
    path: &Path,
    table: &ResultTable,
    stats: &[StatsRow],
    beta_rows: &[SweepRow],
    mask_sweep: Option<&MaskSweepOutput>,
) -> Result<()> {
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\
         <title>Directed robustness report</title>\n<style>\
         body{font-family:sans-serif;margin:2em;} table{border-collapse:collapse;}\
         td,th{border:1px solid #999;padding:3px 8px;font-size:13px;}\
         h2{margin-top:1.6em;}</style></head><body>\n",
    );
    writeln!(html, "<h1>Results: {}</h1>", table.dataset).unwrap();
    writeln!(
        html,
        "<p>Accuracy is percent over sampled targets (mean &plusmn; sample std across splits). \
         Rows labeled <code>paper</code> are published reference numbers, not reproduced here. \
         The &plusmn; convention follows the published tables; reported spreads are emitted as \
         sample standard deviations.</p>"
    )
    .unwrap();

    writeln!(html, "<h2>Computed results</h2>").unwrap();
    html.push_str(&html_table(&table.cells));

    let reference = paper_reference_cells(&table.dataset);
    if !reference.is_empty() {
        writeln!(html, "<h2>Published reference rows</h2>").unwrap();
        html.push_str(&html_table(&reference));
    }

    if !beta_rows.is_empty() {
        writeln!(html, "<h2>Ablation: trust weight beta</h2>").unwrap();
        for mode in ["transfer", "adaptive"] {
            let mut series = Vec::new();
            let mut budgets: Vec<f64> = beta_rows
                .iter()
                .filter(|r| r.mode == mode)
                .map(|r| r.budget_rate)
                .collect();
            budgets.sort_by(|a, b| a.partial_cmp(b).unwrap());
            budgets.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            for &budget in &budgets {
                let pts: Vec<(f64, f64)> = beta_rows
                    .iter()
                    .filter(|r| r.mode == mode && (r.budget_rate - budget).abs() < 1e-9)
                    .map(|r| (r.beta, r.mean))
                    .collect();
                if !pts.is_empty() {
                    series.push((format!("{:.0}%", budget * 100.0), pts));
                }
            }
            if !series.is_empty() {
                writeln!(html, "<h3>{mode}</h3>").unwrap();
                html.push_str(&svg_line_chart(&series, "beta", "accuracy %"));
            }
        }
    }

    if let Some(mask) = mask_sweep {
        if !mask.rows.is_empty() {
            writeln!(html, "<h2>Ablation: masking rate</h2>").unwrap();
            let mut series = Vec::new();
            let backbone: Vec<(f64, f64)> = mask
                .rows
                .iter()
                .filter(|r| r.beta.is_none())
                .map(|r| (r.masking_rate, r.mean))
                .collect();
            if !backbone.is_empty() {
                series.push(("backbone".to_string(), backbone));
            }
            let best: Vec<(f64, f64)> = mask
                .best_beta
                .iter()
                .map(|&(rate, beta)| {
                    let acc = mask
                        .rows
                        .iter()
                        .find(|r| {
                            (r.masking_rate - rate).abs() < 1e-9 && r.beta == Some(beta)
                        })
                        .map_or(0.0, |r| r.mean);
                    (rate, acc)
                })
                .collect();
            if !best.is_empty() {
                series.push(("bbrw (best beta)".to_string(), best));
            }
            html.push_str(&svg_line_chart(&series, "masking rate", "accuracy %"));
            writeln!(html, "<p>Best beta per rate: ").unwrap();
            for (rate, beta) in &mask.best_beta {
                write!(html, "{:.0}%&rarr;{beta:.1} ", rate * 100.0).unwrap();
            }
            writeln!(html, "</p>").unwrap();
        }
    }

    if !stats.is_empty() {
        writeln!(html, "<h2>Adversarial link distributions</h2>").unwrap();
        html.push_str(
            "<table><tr><th>attacked model</th><th>mode</th><th>budget</th>\
             <th>direct target</th><th>indirect out-link</th><th>other</th>\
             <th>flips</th></tr>\n",
        );
        for s in stats {
            writeln!(
                html,
                "<tr><td>{}</td><td>{}</td><td>{:.0}%</td><td>{:.1}%</td>\
                 <td>{:.1}%</td><td>{:.1}%</td><td>{}</td></tr>",
                s.attacked_model,
                s.mode,
                s.budget_rate * 100.0,
                s.frac_direct_target * 100.0,
                s.frac_indirect_neighbor_out_link * 100.0,
                s.frac_other * 100.0,
                s.total_flips
            )
            .unwrap();
        }
        html.push_str("</table>\n");
    }

    html.push_str("</body></html>\n");
    fs::write(path, html)?;
    Ok(())
}

/// Serialize attack runs as one JSON record per line.
pub fn write_runs_jsonl(path: &Path, runs: &[crate::attack::AttackRun]) -> Result<()> {
    let mut out = String::new();
    for run in runs {
        writeln!(out, "{}", serde_json::to_string(run)?).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_rows_are_labeled_and_complete() {
        let cells = paper_reference_cells("cora_ml");
        assert!(cells.iter().all(|c| c.source == "paper"));
        // GCN clean total 81.8 ± 1.5 from the published table.
        let gcn = cells
            .iter()
            .find(|c| c.victim == "gcn" && c.mode == "clean-total")
            .unwrap();
        assert_eq!(gcn.mean, 81.8);
        assert_eq!(gcn.std, 1.5);
        // RWout transfer row is constant 86.5 across budgets.
        for budget in [0.25, 0.5, 1.0] {
            let c = cells
                .iter()
                .find(|c| {
                    c.victim == "gcn-rwout"
                        && c.mode == "transfer"
                        && (c.budget_rate - budget).abs() < 1e-9
                })
                .unwrap();
            assert_eq!(c.mean, 86.5);
        }
        // Directed baselines have no adaptive cells.
        assert!(!cells
            .iter()
            .any(|c| c.victim == "dgcn" && c.mode == "adaptive"));
        assert!(!paper_reference_cells("citeseer").is_empty());
        assert!(paper_reference_cells("unknown").is_empty());
    }

    #[test]
    fn emitted_files_are_deterministic() {
        use crate::harness::ResultTable;
        let table = ResultTable {
            dataset: "toy".to_string(),
            cells: vec![TableCell {
                victim: "gcn".to_string(),
                mode: "transfer".to_string(),
                budget_rate: 0.5,
                mean: 40.5,
                std: 8.5,
                n: 10,
                source: "computed".to_string(),
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_table_csv(&p1, &table).unwrap();
        write_table_csv(&p2, &table).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        let text = fs::read_to_string(&p1).unwrap();
        assert!(text.contains("gcn,transfer,0.5000,40.5000,8.5000,10,computed"));
    }
}
