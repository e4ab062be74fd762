//! Aggregation of trial codings into a results table and per-model
//! breakdowns, as plain text and JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::{code_trial, CascadeClass, CodingError, GroundTruth, MetricCoding, PROCEDURES};
use crate::stats::{cohens_h, fisher_exact, mann_whitney_u, ContingencyTable};
use crate::transcript::{read_dir, TranscriptError, TranscriptHeader};

/// Significance level for reporting effect sizes.
pub const ALPHA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct CodedTrial {
    pub name: String,
    pub header: TranscriptHeader,
    pub coding: MetricCoding,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}: no transcripts found")]
    Empty(String),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("{file}: {source}")]
    Coding {
        file: String,
        #[source]
        source: CodingError,
    },
    #[error("{file}: fixture version {found} does not match {expected}")]
    Fixture {
        file: String,
        found: String,
        expected: String,
    },
}

/// Reads and codes every transcript in `dir`, in file-name order.
pub fn code_dir(dir: &Path, gt: &GroundTruth) -> Result<Vec<CodedTrial>, EvalError> {
    let trials = read_dir(dir)?;
    if trials.is_empty() {
        return Err(EvalError::Empty(dir.display().to_string()));
    }
    trials
        .into_iter()
        .map(|(name, t)| {
            if t.header.fixture_version != gt.fixture.version {
                return Err(EvalError::Fixture {
                    file: name,
                    found: t.header.fixture_version.clone(),
                    expected: gt.fixture.version.clone(),
                });
            }
            let coding = code_trial(&t, gt).map_err(|source| EvalError::Coding {
                file: name.clone(),
                source,
            })?;
            Ok(CodedTrial {
                name,
                header: t.header,
                coding,
            })
        })
        .collect()
}

/// Table column a trial belongs to.
pub fn group_of(h: &TranscriptHeader) -> String {
    match (&h.agent[..], &h.condition) {
        ("ontoagent", _) => "Ref. OA".into(),
        (_, Some(c)) => c.to_uppercase(),
        (a, None) => a.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Binary,
    Count,
}

#[derive(Clone, Copy, Debug)]
struct Metric {
    key: &'static str,
    label: &'static str,
    study: &'static str,
    kind: MetricKind,
    value: fn(&MetricCoding) -> f64,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

const METRICS: [Metric; 8] = [
    Metric {
        key: "premature_action",
        label: "Premature action",
        study: "Study 1: Metacognitive monitoring",
        kind: MetricKind::Binary,
        value: |c| flag(c.premature_action),
    },
    Metric {
        key: "hallucinated_features",
        label: "Hallucinated features",
        study: "Study 1: Metacognitive monitoring",
        kind: MetricKind::Binary,
        value: |c| flag(c.hallucinated_features),
    },
    Metric {
        key: "domain_first",
        label: "Domain-first diagnosis",
        study: "Study 2: Diagnostic reasoning",
        kind: MetricKind::Binary,
        value: |c| flag(c.domain_first),
    },
    Metric {
        key: "hallucinated_facts",
        label: "Hallucinated facts (mean)",
        study: "Study 2: Diagnostic reasoning",
        kind: MetricKind::Count,
        value: |c| c.hallucinated_facts as f64,
    },
    Metric {
        key: "expressed_uncertainty",
        label: "Expressed uncertainty",
        study: "Study 2: Diagnostic reasoning",
        kind: MetricKind::Binary,
        value: |c| flag(c.expressed_uncertainty),
    },
    Metric {
        key: "correct_action",
        label: "Correct action (SEARCH)",
        study: "Study 3: Action consequence",
        kind: MetricKind::Binary,
        value: |c| flag(c.correct_action),
    },
    Metric {
        key: "cascade_failure",
        label: "Cascade failure",
        study: "Study 3: Action consequence",
        kind: MetricKind::Binary,
        value: |c| flag(c.cascade.is_some()),
    },
    Metric {
        key: "task_completed",
        label: "Task completed",
        study: "Overall",
        kind: MetricKind::Binary,
        value: |c| flag(c.task_completed),
    },
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    /// Trials with the outcome (binary) or the summed count.
    pub total: f64,
    /// Proportion (binary) or mean (count).
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub key: String,
    pub label: String,
    pub study: String,
    pub kind: MetricKind,
    /// Group name to cell, for every group present.
    pub cells: BTreeMap<String, Cell>,
    /// IK against KE; absent when either group is missing or too small.
    pub p: Option<f64>,
    /// Reported only when `p` is below [`ALPHA`] on a binary metric.
    pub h: Option<f64>,
    pub u: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub invoked: usize,
    /// Among the trials that retrieved the procedure.
    pub followed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub model: String,
    pub condition: String,
    pub n: usize,
    pub premature: usize,
    pub domain_first: usize,
    pub uncertainty: usize,
    pub wrong_action: usize,
    pub cascades: BTreeMap<String, usize>,
    pub retrieval: BTreeMap<String, Retrieval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub groups: Vec<(String, usize)>,
    pub rows: Vec<MetricRow>,
    pub breakdowns: Vec<Breakdown>,
    pub notes: Vec<String>,
}

/// Groups in column order: reference first, then IK, KE, then the rest.
fn ordered_groups(trials: &[CodedTrial]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in trials {
        *counts.entry(group_of(&t.header)).or_default() += 1;
    }
    let rank = |g: &str| match g {
        "Ref. OA" => 0,
        "IK" => 1,
        "KE" => 2,
        _ => 3,
    };
    let mut groups: Vec<(String, usize)> = counts.into_iter().collect();
    groups.sort_by(|a, b| rank(&a.0).cmp(&rank(&b.0)).then(a.0.cmp(&b.0)));
    groups
}

pub fn aggregate_report(trials: &[CodedTrial]) -> Report {
    let groups = ordered_groups(trials);
    let mut notes = vec![
        "Hallucinated facts counts only claims checkable against the scenario ground truth (service log, object locations and features).".to_string(),
        "p compares IK with KE: Fisher's exact (two-sided) for binary metrics, Mann-Whitney U for counts.".to_string(),
    ];
    let size = |g: &str| groups.iter().find(|(n, _)| n == g).map(|(_, n)| *n);
    let (ik, ke) = (size("IK"), size("KE"));
    let compare = matches!((ik, ke), (Some(a), Some(b)) if a >= 2 && b >= 2);
    match (ik, ke) {
        (Some(a), Some(b)) if !compare => notes.push(format!("small n (IK n={a}, KE n={b}): p omitted.")),
        (Some(a), Some(b)) if a != b => notes.push(format!("group sizes differ: IK n={a}, KE n={b}.")),
        (Some(_), None) | (None, Some(_)) => notes.push("only one LLM condition present: p omitted.".into()),
        _ => {}
    }
    for (g, n) in &groups {
        if *n == 1 {
            notes.push(format!("{g} has a single trial: percentages are 0 or 100."));
        }
    }

    let values = |g: &str, m: &Metric| -> Vec<f64> {
        trials
            .iter()
            .filter(|t| group_of(&t.header) == g)
            .map(|t| (m.value)(&t.coding))
            .collect()
    };
    let rows = METRICS
        .iter()
        .map(|m| {
            let cells: BTreeMap<String, Cell> = groups
                .iter()
                .map(|(g, n)| {
                    let total: f64 = values(g, m).iter().sum();
                    (
                        g.clone(),
                        Cell {
                            n: *n,
                            total,
                            value: total / *n as f64,
                        },
                    )
                })
                .collect();
            let (mut p, mut h, mut u) = (None, None, None);
            if compare {
                let (a, b) = (values("IK", m), values("KE", m));
                match m.kind {
                    MetricKind::Binary => {
                        let (xa, xb) = (a.iter().sum::<f64>() as u64, b.iter().sum::<f64>() as u64);
                        let pv = fisher_exact(ContingencyTable::from_counts(xa, a.len() as u64, xb, b.len() as u64));
                        p = Some(pv);
                        if pv < ALPHA {
                            let pa = xa as f64 / a.len() as f64;
                            let pb = xb as f64 / b.len() as f64;
                            h = cohens_h(pa, pb).ok().map(f64::abs);
                        }
                    }
                    MetricKind::Count => {
                        if let Ok(r) = mann_whitney_u(&a, &b) {
                            p = Some(r.p);
                            u = Some(r.u);
                        }
                    }
                }
            }
            MetricRow {
                key: m.key.into(),
                label: m.label.into(),
                study: m.study.into(),
                kind: m.kind,
                cells,
                p,
                h,
                u,
            }
        })
        .collect();

    let mut by_model: BTreeMap<(String, String), Vec<&MetricCoding>> = BTreeMap::new();
    for t in trials {
        if t.header.agent == "ontoagent" {
            continue;
        }
        let model = t.header.model.clone().unwrap_or_else(|| t.header.agent.clone());
        let condition = t.header.condition.clone().unwrap_or_default().to_uppercase();
        by_model.entry((model, condition)).or_default().push(&t.coding);
    }
    let breakdowns = by_model
        .into_iter()
        .map(|((model, condition), cs)| {
            let count = |f: &dyn Fn(&MetricCoding) -> bool| cs.iter().filter(|c| f(c)).count();
            let cascades = CascadeClass::ALL
                .iter()
                .map(|k| (k.as_str().to_string(), count(&|c| c.cascade == Some(*k))))
                .collect();
            let retrieval = PROCEDURES
                .iter()
                .map(|p| {
                    let invoked = count(&|c| c.fetchplan_invoked.get(*p) == Some(&true));
                    let followed = count(&|c| c.procedure_followed.get(*p) == Some(&Some(true)));
                    (p.to_string(), Retrieval { invoked, followed })
                })
                .collect();
            Breakdown {
                model,
                condition,
                n: cs.len(),
                premature: count(&|c| c.premature_action),
                domain_first: count(&|c| c.domain_first),
                uncertainty: count(&|c| c.expressed_uncertainty),
                wrong_action: count(&|c| !c.correct_action),
                cascades,
                retrieval,
            }
        })
        .collect();

    Report {
        groups,
        rows,
        breakdowns,
        notes,
    }
}

fn pct(x: f64) -> String {
    format!("{:.0}%", x * 100.0)
}

fn pct_of(k: usize, n: usize) -> String {
    if n == 0 {
        "-".into()
    } else {
        pct(k as f64 / n as f64)
    }
}

/// `<.001`, or three decimals without the leading zero.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<.001".into()
    } else {
        let s = format!("{p:.3}");
        s.strip_prefix('0').map(str::to_string).unwrap_or(s)
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.groups.iter().map(|(g, n)| format!("{g} (n={n})")).collect();
        let width = 28;
        let col = header.iter().map(|h| h.len()).max().unwrap_or(6).max(8) + 2;
        let _ = write!(out, "{:<width$}", "Metric");
        for h in &header {
            let _ = write!(out, "{h:>col$}");
        }
        let _ = writeln!(out, "{:>10}{:>8}", "p", "|h|");
        let rule = "-".repeat(width + col * header.len() + 18);
        let _ = writeln!(out, "{rule}");
        let mut study = "";
        for r in &self.rows {
            if r.study != study {
                study = &r.study;
                let _ = writeln!(out, "{study}");
            }
            let _ = write!(out, "  {:<w$}", r.label, w = width - 2);
            for (g, _) in &self.groups {
                let c = &r.cells[g];
                let v = match r.kind {
                    MetricKind::Binary => pct(c.value),
                    MetricKind::Count => format!("{:.1}", c.value),
                };
                let _ = write!(out, "{v:>col$}");
            }
            let p = r.p.map(format_p).unwrap_or_else(|| "-".into());
            let p = if r.kind == MetricKind::Count && r.p.is_some() {
                format!("{p}*")
            } else {
                p
            };
            let h = r.h.map(|h| format!("{h:.2}")).unwrap_or_default();
            let _ = writeln!(out, "{p:>10}{h:>8}");
        }
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(out, "* Mann-Whitney U; others Fisher's exact.");
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        if !self.breakdowns.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "Per-model breakdown");
            let _ = writeln!(
                out,
                "{:<18}{:>5}{:>4}{:>11}{:>14}{:>13}{:>8}{:>7}{:>9}{:>9}{:>7}{:>13}{:>13}",
                "model",
                "cond",
                "n",
                "premature",
                "domain-first",
                "uncertainty",
                "wrong",
                "loop",
                "success",
                "circling",
                "stall",
                "FETCH-OBJ",
                "DIAGNOSE"
            );
            for b in &self.breakdowns {
                let share = |k: &str| {
                    let total: usize = b.cascades.values().sum();
                    pct_of(b.cascades[k], total)
                };
                let gap = |p: &str| {
                    let r = &b.retrieval[p];
                    format!("{}/{}", pct_of(r.invoked, b.n), pct_of(r.followed, r.invoked))
                };
                let _ = writeln!(
                    out,
                    "{:<18}{:>5}{:>4}{:>11}{:>14}{:>13}{:>8}{:>7}{:>9}{:>9}{:>7}{:>13}{:>13}",
                    b.model,
                    b.condition,
                    b.n,
                    pct_of(b.premature, b.n),
                    pct_of(b.domain_first, b.n),
                    pct_of(b.uncertainty, b.n),
                    pct_of(b.wrong_action, b.n),
                    share("loop"),
                    share("hallucinated-success"),
                    share("backtrack-circling"),
                    share("stall"),
                    gap("FETCH-OBJECT"),
                    gap("DIAGNOSE"),
                );
            }
            let _ = writeln!(
                out,
                "cascade columns are shares of cascade trials; procedure columns are retrieved/followed-when-retrieved."
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(agent: &str, condition: Option<&str>, premature: bool) -> CodedTrial {
        CodedTrial {
            name: "t".into(),
            header: TranscriptHeader {
                agent: agent.into(),
                model: condition.map(|_| "m".to_string()),
                condition: condition.map(str::to_string),
                seed: 0,
                fixture_version: "v".into(),
                latency: 1,
                budget: 600,
            },
            coding: MetricCoding {
                premature_action: premature,
                hallucinated_features: false,
                domain_first: true,
                hallucinated_facts: 0,
                expressed_uncertainty: false,
                correct_action: true,
                cascade: None,
                task_completed: true,
                fetchplan_invoked: BTreeMap::new(),
                procedure_followed: BTreeMap::new(),
            },
        }
    }

    #[test]
    fn single_trial_groups_omit_p() {
        let r = aggregate_report(&[trial("llm", Some("ik"), true), trial("llm", Some("ke"), false)]);
        let row = &r.rows[0];
        assert_eq!(row.cells["IK"].value, 1.0);
        assert_eq!(row.cells["KE"].value, 0.0);
        assert!(row.p.is_none());
        assert!(r.notes.iter().any(|n| n.contains("small n")));
    }

    #[test]
    fn reference_column_comes_first() {
        let r = aggregate_report(&[trial("llm", Some("ke"), false), trial("ontoagent", None, false)]);
        assert_eq!(r.groups[0].0, "Ref. OA");
        assert!(r.to_text().contains("Ref. OA (n=1)"));
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(0.0001), "<.001");
        assert_eq!(format_p(0.00213), ".002");
        assert_eq!(format_p(1.0), "1.000");
    }
}
