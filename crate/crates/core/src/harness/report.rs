//! Rendering of a [`MetricsTable`] as markdown, CSV or JSON.
//!
//! Output depends only on the table, so equal tables give equal bytes.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use super::metrics::{MetricsTable, Rate};
use crate::provers::ApproachGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown report format `{s}` (expected markdown, csv or json)")),
        }
    }
}

pub fn emit_report(metrics: &MetricsTable, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => markdown(metrics),
        ReportFormat::Csv => csv(metrics),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(metrics).expect("metrics serialize");
            s.push('\n');
            s
        }
    }
}

pub fn percent(rate: Rate) -> String {
    match rate.value() {
        Some(v) => format!("{:.1}%", 100.0 * v),
        None => "n/a".to_string(),
    }
}

fn markdown(m: &MetricsTable) -> String {
    let ks: BTreeSet<usize> = m.provers.iter().filter_map(|p| p.k).collect();
    let k_header = match ks.iter().collect::<Vec<_>>().as_slice() {
        [k] => format!("Pass@{k}"),
        _ => "Pass@k".to_string(),
    };
    let mut out = String::new();
    out.push_str("# Prover performance\n\n");
    let _ = writeln!(out, "| Approach | Pass@1 | {k_header} |");
    out.push_str("| --- | ---: | ---: |\n");

    let mut groups: Vec<Option<ApproachGroup>> = ApproachGroup::ALL.iter().copied().map(Some).collect();
    groups.push(None);
    for g in groups {
        let rows: Vec<_> = m.provers.iter().filter(|p| p.group == g).collect();
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(out, "| **{}** | | |", g.map_or("Other", |g| g.heading()));
        for p in rows {
            let at_k = match (p.k, p.pass_at_k) {
                (Some(k), Some(r)) if ks.len() > 1 => format!("{} (k={k})", percent(r)),
                (_, Some(r)) => percent(r),
                _ => "n/a".to_string(),
            };
            let _ = writeln!(out, "| {} | {} | {} |", p.id, percent(p.pass_at_1), at_k);
        }
    }
    let combined = Rate {
        solved: m.combined_count,
        total: m.total_tasks,
    };
    let _ = writeln!(
        out,
        "| **Combined** | {} ({}/{}) | |",
        percent(combined),
        m.combined_count,
        m.total_tasks
    );

    let categories: BTreeSet<&str> = m.categories.iter().map(|c| c.category.as_str()).collect();
    if !categories.is_empty() {
        out.push_str("\n## Success rate by repository category\n\n| Prover |");
        for c in &categories {
            let _ = write!(out, " {c} |");
        }
        out.push_str("\n| --- |");
        out.push_str(&" ---: |".repeat(categories.len()));
        out.push('\n');
        for p in &m.provers {
            let _ = write!(out, "| {} |", p.id);
            for c in &categories {
                let cell = m
                    .categories
                    .iter()
                    .find(|x| x.prover == p.id && x.category == *c)
                    .map_or("n/a".to_string(), |x| format!("{} ({}/{})", percent(x.rate), x.rate.solved, x.rate.total));
                let _ = write!(out, " {cell} |");
            }
            out.push('\n');
        }
    }

    if !m.intersections.is_empty() {
        out.push_str("\n## Tasks solved by exactly these provers\n\n| Provers | Tasks |\n| --- | ---: |\n");
        let mut rows: Vec<_> = m.intersections.iter().collect();
        rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.provers.cmp(&b.provers)));
        for i in rows {
            let _ = writeln!(out, "| {} | {} |", i.provers.join(", "), i.count);
        }
    }

    if m.provers.iter().any(|p| p.tokens.runs > 0) {
        out.push_str("\n## Tokens per solved task\n\n| Prover | Solved runs | Median | P90 | Max |\n| --- | ---: | ---: | ---: | ---: |\n");
        for p in m.provers.iter().filter(|p| p.tokens.runs > 0) {
            let t = &p.tokens;
            let _ = writeln!(out, "| {} | {} | {} | {} | {} |", p.id, t.runs, t.p50, t.p90, t.max);
        }
    }
    out
}

/// Long-format dump: one `section,prover,key,value` row per number.
fn csv(m: &MetricsTable) -> String {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    let mut row = |section: &str, prover: &str, key: &str, value: String| {
        w.write_record([section, prover, key, value.as_str()]).expect("in-memory write");
    };
    row("section", "prover", "key", "value".into());
    row("summary", "", "total_tasks", m.total_tasks.to_string());
    row("summary", "", "combined_count", m.combined_count.to_string());
    for p in &m.provers {
        let id = p.id.as_str();
        let group = p.group.map_or(String::new(), |g| {
            serde_json::to_value(g).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
        });
        row("prover", id, "group", group);
        row("prover", id, "tasks", p.tasks.to_string());
        row("prover", id, "solved_count", p.solved_count.to_string());
        row("prover", id, "pass_at_1_solved", p.pass_at_1.solved.to_string());
        row("prover", id, "pass_at_1_total", p.pass_at_1.total.to_string());
        if let (Some(k), Some(r)) = (p.k, p.pass_at_k) {
            row("prover", id, "k", k.to_string());
            row("prover", id, "pass_at_k_solved", r.solved.to_string());
            row("prover", id, "pass_at_k_total", r.total.to_string());
        }
        row("prover", id, "tokens_runs", p.tokens.runs.to_string());
        row("prover", id, "tokens_p50", p.tokens.p50.to_string());
        row("prover", id, "tokens_p90", p.tokens.p90.to_string());
        row("prover", id, "tokens_max", p.tokens.max.to_string());
        row("prover", id, "tokens_total", p.tokens.total.to_string());
    }
    for c in &m.categories {
        row("category_solved", &c.prover, &c.category, c.rate.solved.to_string());
        row("category_total", &c.prover, &c.category, c.rate.total.to_string());
    }
    for i in &m.intersections {
        row("intersection", "", &i.provers.join("|"), i.count.to_string());
    }
    String::from_utf8(w.into_inner().expect("flush to Vec")).expect("csv is utf-8")
}
