//! Grouped metric tables with best / second-best highlighting.
//!
//! Highlighting is per column (and per target when split by target), on values
//! rounded to 4 decimals. Ranks are dense: every row equal to the best value is
//! marked best, and every row equal to the next distinct value is marked second.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{EvalError, ItemScores, Modality};
use crate::labels::Author;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Controllability,
    Cmss,
    Relevance,
    Perplexity,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Controllability,
        Metric::Cmss,
        Metric::Relevance,
        Metric::Perplexity,
    ];

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Perplexity)
    }

    pub fn is_cosine(self) -> bool {
        matches!(self, Metric::Cmss | Metric::Relevance)
    }

    pub fn header(self) -> &'static str {
        match self {
            Metric::Controllability => "Controllability ↑",
            Metric::Cmss => "CMSS ↑",
            Metric::Relevance => "Relevance ↑",
            Metric::Perplexity => "Perplexity ↓",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Metric::Controllability => "controllability",
            Metric::Cmss => "cmss",
            Metric::Relevance => "relevance",
            Metric::Perplexity => "perplexity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub controllability: f64,
    pub cmss: f64,
    pub relevance: f64,
    pub perplexity: f64,
}

impl MetricValues {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Controllability => self.controllability,
            Metric::Cmss => self.cmss,
            Metric::Relevance => self.relevance,
            Metric::Perplexity => self.perplexity,
        }
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            controllability: f(self.controllability),
            cmss: f(self.cmss),
            relevance: f(self.relevance),
            perplexity: f(self.perplexity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub modality: Modality,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Author>,
    pub n: usize,
    pub values: MetricValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    Best,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMark {
    pub row: usize,
    pub metric: Metric,
    pub mark: Mark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub by_target: bool,
    /// Display cosine metrics clamped to [0, 1].
    pub clamp_cosines: bool,
    pub rows: Vec<ReportRow>,
    pub marks: Vec<CellMark>,
}

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

impl MetricReport {
    /// Rounds every value to 4 decimals and computes highlighting. Row order is
    /// kept as given.
    pub fn from_rows(rows: Vec<ReportRow>, by_target: bool, clamp_cosines: bool) -> Self {
        let rows: Vec<ReportRow> = rows
            .into_iter()
            .map(|r| ReportRow {
                values: r.values.map(round4),
                ..r
            })
            .collect();
        let mut marks = Vec::new();
        let targets: BTreeSet<Option<Author>> = rows.iter().map(|r| r.target).collect();
        for target in targets {
            let column: Vec<usize> = (0..rows.len())
                .filter(|&i| !by_target || rows[i].target == target)
                .collect();
            for metric in Metric::ALL {
                let key = |i: usize| {
                    let v = rows[i].values.get(metric);
                    if metric.higher_is_better() {
                        -v
                    } else {
                        v
                    }
                };
                let mut distinct: Vec<f64> = column.iter().map(|&i| key(i)).collect();
                distinct.sort_by(f64::total_cmp);
                distinct.dedup();
                for &i in &column {
                    let mark = if Some(&key(i)) == distinct.first() {
                        Some(Mark::Best)
                    } else if Some(&key(i)) == distinct.get(1) {
                        Some(Mark::Second)
                    } else {
                        None
                    };
                    if let Some(mark) = mark {
                        marks.push(CellMark { row: i, metric, mark });
                    }
                }
            }
            if !by_target {
                break;
            }
        }
        marks.sort_by_key(|m| (m.row, m.metric));
        Self {
            by_target,
            clamp_cosines,
            rows,
            marks,
        }
    }

    pub fn mark(&self, row: usize, metric: Metric) -> Option<Mark> {
        self.marks
            .iter()
            .find(|m| m.row == row && m.metric == metric)
            .map(|m| m.mark)
    }

    pub fn row(&self, model: &str, modality: Modality, target: Option<Author>) -> Option<usize> {
        self.rows
            .iter()
            .position(|r| r.model == model && r.modality == modality && r.target == target)
    }

    fn display(&self, metric: Metric, v: f64) -> String {
        let v = if self.clamp_cosines && metric.is_cosine() {
            v.clamp(0.0, 1.0)
        } else {
            v
        };
        format!("{v:.4}")
    }

    fn cell(&self, row: usize, metric: Metric) -> String {
        let text = self.display(metric, self.rows[row].values.get(metric));
        match self.mark(row, metric) {
            Some(Mark::Best) => format!("**{text}**"),
            Some(Mark::Second) => format!("<u>{text}</u>"),
            None => text,
        }
    }

    fn targets(&self) -> Vec<Option<Author>> {
        let set: BTreeSet<Option<Author>> = self.rows.iter().map(|r| r.target).collect();
        set.into_iter().collect()
    }

    /// (modality, model) line keys in first-appearance order.
    fn lines(&self) -> Vec<(Modality, String)> {
        let mut out: Vec<(Modality, String)> = Vec::new();
        for r in &self.rows {
            let k = (r.modality, r.model.clone());
            if !out.contains(&k) {
                out.push(k);
            }
        }
        out
    }

    /// Markdown table: bold marks the best value per column, `<u>` the second
    /// best. Modality is printed on the first line of each modality block.
    pub fn render_text(&self) -> String {
        let targets = if self.by_target { self.targets() } else { vec![None] };
        let mut header = vec!["MODALITY".to_string(), "MODEL".to_string()];
        for m in Metric::ALL {
            for t in &targets {
                header.push(match t {
                    Some(a) if self.by_target => format!("{} {}", m.header(), a.target_tag()),
                    _ => m.header().to_string(),
                });
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        let mut last_modality = None;
        for (modality, model) in self.lines() {
            let mut cells = vec![
                if last_modality == Some(modality) {
                    String::new()
                } else {
                    modality.to_string()
                },
                model.clone(),
            ];
            last_modality = Some(modality);
            for m in Metric::ALL {
                for t in &targets {
                    let idx = self.rows.iter().position(|r| {
                        r.modality == modality && r.model == model && (!self.by_target || r.target == *t)
                    });
                    cells.push(idx.map(|i| self.cell(i, m)).unwrap_or_else(|| "-".into()));
                }
            }
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        out
    }

    /// One CSV line per row with a mark column (`best`, `second` or empty) per metric.
    pub fn render_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["modality".to_string(), "model".into(), "target".into(), "n".into()];
        for m in Metric::ALL {
            header.push(m.key().to_string());
            header.push(format!("{}_mark", m.key()));
        }
        w.write_record(&header).expect("in-memory csv");
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec = vec![
                r.modality.as_str().to_string(),
                r.model.clone(),
                r.target.map(|t| t.target_tag()).unwrap_or("").to_string(),
                r.n.to_string(),
            ];
            for m in Metric::ALL {
                let mark = match self.mark(i, m) {
                    Some(Mark::Best) => "best",
                    Some(Mark::Second) => "second",
                    None => "",
                };
                rec.push(self.display(m, r.values.get(m)));
                rec.push(mark.to_string());
            }
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 fields")
    }
}

fn mean_sorted(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Aggregates per-item scores into rows keyed by (modality, model) and, when
/// `by_target`, the target. Rows are ordered by modality, then model first
/// appearance, then target.
pub fn build_report(
    scores: &[ItemScores],
    by_target: bool,
    clamp_cosines: bool,
) -> Result<MetricReport, EvalError> {
    type Key = (Modality, String, Option<Author>);
    let mut groups: Vec<(Key, Vec<&ItemScores>)> = Vec::new();
    for s in scores {
        let missing = |tag| EvalError::MissingTag {
            sample_id: s.sample_id.clone(),
            tag,
        };
        let model = s.model.clone().ok_or_else(|| missing("model"))?;
        let modality = s.modality.ok_or_else(|| missing("modality"))?;
        let target = if by_target {
            Some(s.target.ok_or_else(|| missing("target"))?)
        } else {
            None
        };
        let key = (modality, model, target);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(s),
            None => groups.push((key, vec![s])),
        }
    }
    let model_order: Vec<String> = groups.iter().map(|((_, m, _), _)| m.clone()).collect();
    groups.sort_by_key(|((modality, model, target), _)| {
        (
            *modality,
            model_order.iter().position(|m| m == model).unwrap_or(usize::MAX),
            *target,
        )
    });
    let rows = groups
        .into_iter()
        .map(|((modality, model, target), items)| {
            let n = items.len();
            let matched = items.iter().filter(|s| s.stance_matched).count();
            ReportRow {
                modality,
                model,
                target,
                n,
                values: MetricValues {
                    controllability: matched as f64 / n as f64,
                    cmss: mean_sorted(items.iter().map(|s| s.cmss).collect()),
                    relevance: mean_sorted(items.iter().map(|s| s.relevance).collect()),
                    perplexity: mean_sorted(items.iter().map(|s| s.perplexity).collect()),
                },
            }
        })
        .collect();
    Ok(MetricReport::from_rows(rows, by_target, clamp_cosines))
}
