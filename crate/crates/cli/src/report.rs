//! CSV reports. RFC 4180: CRLF line ends, fields quoted only when they
//! contain a comma, quote, or line break. Floats print with six decimals so
//! identical runs produce identical bytes on any locale.

use std::path::Path;

use fifthspace::vae::LossBreakdown;

use crate::pipeline::{Piece, PieceEval};
use crate::CliError;

fn field(s: &str) -> String {
    if s.contains([',', '"', '\r', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn row(cells: &[String]) -> String {
    let mut line = cells
        .iter()
        .map(|c| field(c))
        .collect::<Vec<_>>()
        .join(",");
    line.push_str("\r\n");
    line
}

fn mean_std(values: &[f64]) -> String {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    format!("{}\u{b1}{}", num(mean), num(var.sqrt()))
}

/// Per-piece latent metrics plus a final aggregate row (mean and population
/// std over pieces). Rows sort by piece id.
pub fn metrics_csv(evals: &[PieceEval]) -> String {
    let mut evals: Vec<&PieceEval> = evals.iter().collect();
    evals.sort_by(|a, b| a.report.piece_id.cmp(&b.report.piece_id));
    let mut out = String::from("piece_id,davies_bouldin,dunn,tau,accuracy,mse,kl\r\n");
    let mut cols: [Vec<f64>; 6] = Default::default();
    for e in &evals {
        let values = [
            e.report.davies_bouldin,
            e.report.dunn,
            e.report.tau,
            e.recon.accuracy,
            e.recon.mse,
            e.recon.kl_div,
        ];
        for (col, v) in cols.iter_mut().zip(values) {
            col.push(v);
        }
        let mut cells = vec![e.report.piece_id.clone()];
        cells.extend(values.iter().map(|&v| num(v)));
        out.push_str(&row(&cells));
    }
    if !evals.is_empty() {
        let mut cells = vec!["aggregate".to_string()];
        cells.extend(cols.iter().map(|c| mean_std(c)));
        out.push_str(&row(&cells));
    }
    out
}

/// Every 2-D point the scatter plots draw, with provenance.
pub fn points_csv(evals: &[PieceEval]) -> String {
    let mut evals: Vec<&PieceEval> = evals.iter().collect();
    evals.sort_by(|a, b| a.report.piece_id.cmp(&b.report.piece_id));
    let mut out = String::from("piece_id,transposition,segment_index,key,camelot,x,y\r\n");
    for e in &evals {
        for p in &e.points {
            out.push_str(&row(&[
                p.piece_id.clone(),
                p.transposition.to_string(),
                p.segment_index.to_string(),
                p.key.name(),
                p.key.camelot_label(),
                num(p.xy.0),
                num(p.xy.1),
            ]));
        }
    }
    out
}

/// Per-epoch training losses, epochs numbered from 1.
pub fn history_csv(history: &[LossBreakdown]) -> String {
    let mut out = String::from("epoch,reconstruction,kl,total\r\n");
    for (i, h) in history.iter().enumerate() {
        out.push_str(&row(&[
            (i + 1).to_string(),
            num(h.reconstruction),
            num(h.kl),
            num(h.total),
        ]));
    }
    out
}

/// Corpus inventory: one row per parsed piece.
pub fn manifest_csv(pieces: &[Piece], segment_length: usize) -> String {
    let mut out = String::from("piece_id,key,camelot,steps,segments\r\n");
    for p in pieces {
        let segments = fifthspace::score::segment(&p.grid, segment_length, &p.id).len();
        out.push_str(&row(&[
            p.id.clone(),
            p.grid.key.name(),
            p.grid.key.camelot_label(),
            p.grid.steps.len().to_string(),
            segments.to_string(),
        ]));
    }
    out
}

/// Writes `text` at `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::PointRecord;
    use fifthspace::latent::LatentReport;
    use fifthspace::vae::ReconMetrics;
    use fifthspace::KeyLabel;

    fn eval(id: &str, db: f64, dunn: f64, tau: f64) -> PieceEval {
        PieceEval {
            report: LatentReport {
                piece_id: id.into(),
                davies_bouldin: db,
                davies_bouldin_degenerate: false,
                dunn,
                tau,
                centroid_angles: Default::default(),
                explained_variance: [0.8, 0.1],
            },
            recon: ReconMetrics {
                accuracy: 90.0,
                mse: 0.01,
                kl_div: 1.5,
            },
            points: vec![PointRecord {
                piece_id: id.into(),
                transposition: -5,
                segment_index: 0,
                key: KeyLabel::major(7),
                xy: (1.25, -0.5),
            }],
        }
    }

    #[test]
    fn quoting_follows_rfc_4180() {
        assert_eq!(field("plain"), "plain");
        assert_eq!(field("a,b"), "\"a,b\"");
        assert_eq!(field("say \"hi\""), "\"say \"\"hi\"\"\"");
        assert_eq!(field("two\nlines"), "\"two\nlines\"");
    }

    #[test]
    fn metrics_rows_sort_and_aggregate() {
        let evals = vec![eval("b", 1.0, 2.0, 0.5), eval("a", 3.0, 4.0, 0.7)];
        let text = metrics_csv(&evals);
        let lines: Vec<&str> = text.split("\r\n").collect();
        assert_eq!(lines[0], "piece_id,davies_bouldin,dunn,tau,accuracy,mse,kl");
        assert!(lines[1].starts_with("a,3.000000,4.000000,0.700000"));
        assert!(lines[2].starts_with("b,1.000000,2.000000,0.500000"));
        // mean(1,3)=2, std=1; mean(0.5,0.7)=0.6, std=0.1
        assert!(lines[3].starts_with("aggregate,2.000000\u{b1}1.000000,3.000000\u{b1}1.000000,0.600000\u{b1}0.100000"));
        assert_eq!(lines.last(), Some(&""));
    }

    #[test]
    fn points_carry_camelot_labels() {
        let text = points_csv(&[eval("a", 1.0, 2.0, 0.5)]);
        assert!(text.contains("a,-5,0,G major,9B,1.250000,-0.500000\r\n"));
    }

    #[test]
    fn non_finite_values_have_stable_spellings() {
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(f64::NEG_INFINITY), "-inf");
        assert_eq!(num(f64::NAN), "nan");
    }
}
