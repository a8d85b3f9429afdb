//! Text renderings of analysis and evaluation results.

use std::collections::BTreeMap;
use std::fmt::Write;

use care_core::classify::ClassifierMetrics;
use care_core::eval::GenEvalRow;
use care_core::telemetry::{AnalysisReport, RateSummary};
use care_core::Strategy;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
    Tsv,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn rates_line(label: &str, r: &RateSummary) -> String {
    format!(
        "{label:<8} assistance {}  panel_open {}  click_through {}  unmodified {}\n",
        opt(r.assistance_rate),
        opt(r.panel_open_fraction),
        opt(r.click_through_rate),
        opt(r.unmodified_fraction)
    )
}

pub fn analysis_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    out.push_str("session                          msgs  sugg  click  unmod  assist  panel   ctr     unmod%\n");
    for s in &report.sessions {
        let _ = writeln!(
            out,
            "{:<32} {:>4}  {:>4}  {:>5}  {:>5}  {:.4}  {:.4}  {:.4}  {:.4}{}",
            s.session_id,
            s.counselor_messages,
            s.suggestion_turns,
            s.clicked_turns,
            s.unmodified_turns,
            s.assistance_rate,
            s.panel_open_fraction,
            s.click_through_rate,
            s.unmodified_fraction,
            if s.no_opportunity { "  (no counselor messages)" } else { "" }
        );
    }
    let a = &report.aggregate;
    let _ = writeln!(out, "\nsessions: {}", a.sessions);
    out.push_str(&rates_line("median", &a.median));
    out.push_str(&rates_line("pooled", &a.pooled));
    let _ = writeln!(
        out,
        "lcs ratio (median)  vs suggestion {}  vs sent {}",
        opt(a.median_lcs_ratio_vs_suggestion),
        opt(a.median_lcs_ratio_vs_sent)
    );
    let _ = writeln!(
        out,
        "message length (median chars)  with {} (n={})  without {} (n={})",
        opt(a.median_length_with),
        a.n_with,
        opt(a.median_length_without),
        a.n_without
    );
    match &a.mann_whitney {
        Some(m) => {
            let _ = writeln!(
                out,
                "mann-whitney U = {}  p = {:.4} ({})",
                m.u,
                m.p,
                if m.exact { "exact" } else { "normal approx." }
            );
        }
        None => out.push_str("mann-whitney: not enough data\n"),
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classifier: BTreeMap<Strategy, ClassifierMetrics>,
    pub generation: Vec<GenEvalRow>,
}

pub fn classifier_tsv(metrics: &BTreeMap<Strategy, ClassifierMetrics>) -> String {
    let mut out = String::from("strategy\tn\taccuracy\tprecision\trecall\tf1\n");
    for (s, m) in metrics {
        let _ = writeln!(out, "{s}\t{}\t{}\t{}\t{}\t{}", m.n, m.accuracy, m.precision, m.recall, m.f1);
    }
    out
}

pub fn generation_tsv(rows: &[GenEvalRow]) -> String {
    let mut out = String::from("strategy\tn\tavg_words\trouge1\trouge2\trougeL\tbleu\tpositive_rate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.label(),
            r.n,
            r.avg_words,
            r.rouge1,
            r.rouge2,
            r.rouge_l,
            r.bleu,
            r.positive_rate
        );
    }
    out
}

pub fn eval_text(report: &EvalReport) -> String {
    let mut out = String::from("classifier\nstrategy                   n  accuracy  precision  recall  f1\n");
    for (s, m) in &report.classifier {
        let _ = writeln!(
            out,
            "{:<24} {:>4}  {:.4}    {:.4}     {:.4}  {:.4}",
            s.as_str(),
            m.n,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1
        );
    }
    out.push_str("\ngeneration\nstrategy                   n  words  rouge1  rouge2  rougeL  bleu    positive\n");
    for r in &report.generation {
        let _ = writeln!(
            out,
            "{:<24} {:>4}  {:>5.1}  {:.4}  {:.4}  {:.4}  {:.4}  {:.4}",
            r.label(),
            r.n,
            r.avg_words,
            r.rouge1,
            r.rouge2,
            r.rouge_l,
            r.bleu,
            r.positive_rate
        );
    }
    out
}

pub fn eval_tsv(report: &EvalReport) -> String {
    format!("{}\n{}", classifier_tsv(&report.classifier), generation_tsv(&report.generation))
}
