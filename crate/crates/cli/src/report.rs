//! Markdown report: coverage tables (mean ± std, median) by sub-model and
//! CP method, plus prediction-set sizes at the first and last timestep.

use std::fmt::Write;

use romcp::conformal::{CpMethod, UqTarget};
use romcp::metrics::{SummaryRow, WidthKind, WidthRow};

use crate::config::RunConfig;
use crate::stages::EvaluationRecord;

pub fn target_label(t: UqTarget) -> &'static str {
    match t {
        UqTarget::Reconstruction => "Reconstruction",
        UqTarget::LatentDynamics => "Latent dynamics",
        UqTarget::EndToEnd => "End-to-end",
    }
}

pub fn method_label(m: CpMethod) -> &'static str {
    match m {
        CpMethod::Vanilla => "Vanilla",
        CpMethod::Split => "Split",
        CpMethod::CvPlus { .. } => "CV+",
    }
}

/// Nominal coverage `100 (1 - alpha)` without trailing zeros.
pub fn level_label(alpha: f64) -> String {
    let s = format!("{:.4}", 100.0 * (1.0 - alpha));
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn header(out: &mut String, alphas: &[f64], first: &[&str]) {
    let mut cols: Vec<String> = first.iter().map(|s| s.to_string()).collect();
    cols.extend(alphas.iter().map(|a| format!("1-α = {}%", level_label(*a))));
    let _ = writeln!(out, "| {} |", cols.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(cols.len()));
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

pub fn render_report(cfg: &RunConfig, record: &EvaluationRecord, summary: &[SummaryRow], widths: &[WidthRow]) -> String {
    let methods = cfg.methods();
    let alphas = &cfg.cp.alphas;
    let find = |m: CpMethod, t: UqTarget, a: f64| {
        summary
            .iter()
            .find(|r| r.method == m.to_string() && r.target == t.to_string() && r.alpha == a)
    };

    let mut out = String::new();
    let _ = writeln!(out, "# Conformal coverage report\n");
    let _ = writeln!(
        out,
        "Produced by {} from configuration digest `{}` (seed {}).",
        record.provenance.tool, record.provenance.config_digest, cfg.seed
    );
    let _ = writeln!(
        out,
        "Coverage statistics are taken over all timesteps and output coordinates \
         (bins for distribution outputs, one ellipsoid per step for latent outputs).\n"
    );

    let _ = writeln!(out, "## Empirical coverage, mean ± std (%)\n");
    header(&mut out, alphas, &["Sub-model", "CP method"]);
    for &t in &cfg.cp.targets {
        for &m in &methods {
            let cells: Vec<String> = alphas
                .iter()
                .map(|&a| find(m, t, a).map_or("n/a".into(), |r| format!("{:.2} ± {:.2}", 100.0 * r.mean, 100.0 * r.std)))
                .collect();
            let _ = writeln!(out, "| {} | {} | {} |", target_label(t), method_label(m), cells.join(" | "));
        }
    }

    let _ = writeln!(out, "\n## Empirical coverage, median (%)\n");
    header(&mut out, alphas, &["Sub-model", "CP method"]);
    for &t in &cfg.cp.targets {
        for &m in &methods {
            let cells: Vec<String> = alphas
                .iter()
                .map(|&a| find(m, t, a).map_or("n/a".into(), |r| format!("{:.2}", 100.0 * r.median)))
                .collect();
            let _ = writeln!(out, "| {} | {} | {} |", target_label(t), method_label(m), cells.join(" | "));
        }
    }

    let (t_first, t_last) = (cfg.dataset.time_grid.time(0), cfg.dataset.time_grid.t_end());
    let _ = writeln!(out, "\n## Prediction-set size at t = {t_first} s and t = {t_last} s\n");
    header(&mut out, alphas, &["Sub-model", "CP method", "Size"]);
    for &t in &cfg.cp.targets {
        let kind = if t.uses_ellipsoid() {
            WidthKind::EllipsoidVolume
        } else {
            WidthKind::BandIntegral
        };
        for &m in &methods {
            let cells: Vec<String> = alphas
                .iter()
                .map(|&a| {
                    let at = |time: f64| {
                        widths
                            .iter()
                            .find(|w| {
                                w.method == m.to_string()
                                    && w.target == t.to_string()
                                    && w.alpha == a
                                    && w.width_kind == kind.as_str()
                                    && w.timestep_s == time
                            })
                            .map(|w| w.width)
                    };
                    match (at(t_first), at(t_last)) {
                        (Some(a), Some(b)) => format!("{} → {}", sci(a), sci(b)),
                        _ => "n/a".into(),
                    }
                })
                .collect();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                target_label(t),
                method_label(m),
                kind,
                cells.join(" | ")
            );
        }
    }

    let _ = writeln!(out, "\n## Width vs. time\n");
    for &m in &methods {
        let _ = writeln!(out, "- {}: `evaluation/widths_{m}.svg`", method_label(m));
    }
    out
}
