//! Aggregation across seeds and the summary files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::run::{CellMeta, CLEAN};
use crate::attacks::{AttackReport, Score};
use crate::error::{CadeError, Result};

/// One victim's score in one cell of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRow {
    pub label: String,
    pub mode: String,
    pub substitute: String,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub victim: String,
    pub score: Score,
}

/// Mean and spread of one (cell, victim) over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub mode: String,
    pub substitute: String,
    pub epsilon: Option<f64>,
    pub victim: String,
    pub metric: &'static str,
    pub seeds: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single seed.
    pub std: Option<f64>,
    pub clean_mean: f64,
    pub clean_std: Option<f64>,
}

impl SummaryRow {
    /// Examples were crafted on the victim being scored.
    pub fn whitebox(&self) -> bool {
        self.substitute == self.victim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub per_seed: Vec<SeedRow>,
    pub rows: Vec<SummaryRow>,
}

fn mean_std(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = (v.len() > 1).then(|| (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (m, s)
}

fn metric_name(s: &Score) -> &'static str {
    match s {
        Score::Rmse { .. } => "rmse",
        Score::Asr { .. } => "asr",
    }
}

fn same_cell(a: &SeedRow, b: &SeedRow) -> bool {
    a.label == b.label
        && a.mode == b.mode
        && a.substitute == b.substitute
        && a.epsilon == b.epsilon
        && a.victim == b.victim
}

impl Summary {
    pub fn from_reports(name: &str, reports: &[AttackReport]) -> Result<Self> {
        let mut per_seed = Vec::new();
        for r in reports {
            let meta: CellMeta = serde_json::from_str(&r.config)
                .map_err(|e| CadeError::Parse(format!("cell header: {e}")))?;
            for (victim, score) in r.scores() {
                per_seed.push(SeedRow {
                    label: meta.label.clone(),
                    mode: meta.mode.clone(),
                    substitute: r.substitute.clone(),
                    epsilon: meta.epsilon,
                    seed: meta.seed,
                    victim,
                    score,
                });
            }
        }
        // Groups in order of first appearance.
        let mut groups: Vec<Vec<&SeedRow>> = Vec::new();
        for row in &per_seed {
            match groups.iter_mut().find(|g| same_cell(g[0], row)) {
                Some(g) => g.push(row),
                None => groups.push(vec![row]),
            }
        }
        let rows = groups
            .iter()
            .map(|g| {
                let head: Vec<f64> = g.iter().map(|r| r.score.headline()).collect();
                let base: Vec<f64> = g.iter().map(|r| r.score.baseline()).collect();
                let (mean, std) = mean_std(&head);
                let (clean_mean, clean_std) = mean_std(&base);
                SummaryRow {
                    label: g[0].label.clone(),
                    mode: g[0].mode.clone(),
                    substitute: g[0].substitute.clone(),
                    epsilon: g[0].epsilon,
                    victim: g[0].victim.clone(),
                    metric: metric_name(&g[0].score),
                    seeds: g.len(),
                    mean,
                    std,
                    clean_mean,
                    clean_std,
                }
            })
            .collect();
        Ok(Self {
            name: name.to_string(),
            per_seed,
            rows,
        })
    }

    /// Row for a (label, mode, substitute, epsilon, victim) cell.
    pub fn find(&self, label: &str, mode: &str, substitute: &str, epsilon: Option<f64>, victim: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| {
            r.label == label && r.mode == mode && r.substitute == substitute && r.epsilon == epsilon && r.victim == victim
        })
    }

    /// Clean metric of a victim.
    pub fn clean(&self, victim: &str) -> Option<&SummaryRow> {
        self.find(CLEAN, CLEAN, super::config::NO_SUBSTITUTE, None, victim)
    }

    pub fn victims(&self) -> Vec<String> {
        let mut v: Vec<String> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.victim) {
                v.push(r.victim.clone());
            }
        }
        v
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            "label", "mode", "substitute", "epsilon", "victim", "metric", "seeds", "mean", "std", "clean_mean",
            "clean_std", "whitebox",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.mode.clone(),
                r.substitute.clone(),
                opt(r.epsilon),
                r.victim.clone(),
                r.metric.to_string(),
                r.seeds.to_string(),
                r.mean.to_string(),
                opt(r.std),
                r.clean_mean.to_string(),
                opt(r.clean_std),
                r.whitebox().to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn sweep_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epsilon", "label", "mode", "substitute", "seed", "victim", "metric", "clean", "value"])
            .expect("in-memory write");
        for r in &self.per_seed {
            w.write_record([
                r.epsilon.map(|e| e.to_string()).unwrap_or_default(),
                r.label.clone(),
                r.mode.clone(),
                r.substitute.clone(),
                r.seed.to_string(),
                r.victim.clone(),
                metric_name(&r.score).to_string(),
                r.score.baseline().to_string(),
                r.score.headline().to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// One table with a column per victim; `*` marks white-box cells.
    pub fn to_markdown(&self) -> String {
        let victims = self.victims();
        let seeds = self.rows.iter().map(|r| r.seeds).max().unwrap_or(0);
        let metric = self.rows.first().map_or("rmse", |r| r.metric);
        let cell = |m: f64, s: Option<f64>| match s {
            Some(s) => format!("{m:.4} ± {s:.4}"),
            None => format!("{m:.4}"),
        };
        let mut out = String::new();
        let _ = writeln!(out, "# {}\n", self.name);
        let what = if metric == "asr" {
            "ASR (%) of the adversarial examples; the clean row holds clean accuracy (%)"
        } else {
            "RMSE on the adversarial examples; the clean row holds clean RMSE"
        };
        let spread = if seeds > 1 { format!("mean ± std over {seeds} seeds") } else { "one seed".into() };
        let _ = writeln!(out, "{what}, {spread}. `*` marks white-box cells.\n");
        let _ = write!(out, "| attack | mode | substitute | epsilon |");
        for v in &victims {
            let _ = write!(out, " {v} |");
        }
        let _ = write!(out, "\n|---|---|---|---|");
        out.push_str(&"---|".repeat(victims.len()));
        out.push('\n');
        let mut seen: Vec<(&str, &str, &str, Option<f64>)> = Vec::new();
        for r in &self.rows {
            let key = (r.label.as_str(), r.mode.as_str(), r.substitute.as_str(), r.epsilon);
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let eps = r.epsilon.map(|e| e.to_string()).unwrap_or_else(|| "-".into());
            let _ = write!(out, "| {} | {} | {} | {eps} |", r.label, r.mode, r.substitute);
            for v in &victims {
                let text = match self.find(key.0, key.1, key.2, key.3, v) {
                    Some(row) if row.label == CLEAN => cell(row.clean_mean, row.clean_std),
                    Some(row) => {
                        let star = if row.whitebox() { "*" } else { "" };
                        format!("{}{star}", cell(row.mean, row.std))
                    }
                    None => "-".into(),
                };
                let _ = write!(out, " {text} |");
            }
            out.push('\n');
        }
        out
    }
}

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_MD: &str = "summary.md";
pub const SWEEP_CSV: &str = "sweep.csv";

pub(crate) fn write_summaries(summary: &Summary, dir: &Path) -> Result<()> {
    fs::write(dir.join(SUMMARY_CSV), summary.summary_csv())?;
    fs::write(dir.join(SUMMARY_MD), summary.to_markdown())?;
    fs::write(dir.join(SWEEP_CSV), summary.sweep_csv())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Task;

    fn report(label: &str, mode: &str, sub: &str, eps: Option<f64>, seed: u64, adv: f64) -> AttackReport {
        use crate::attacks::{ExampleRow, VictimScores};
        let meta = CellMeta {
            label: label.into(),
            mode: mode.into(),
            epsilon: eps,
            seed,
            attack: None,
        };
        AttackReport::new(
            serde_json::to_string(&meta).unwrap(),
            sub,
            Task::Regression,
            vec!["a".into()],
            vec![ExampleRow { index: 0, x: vec![0.0], x_adv: vec![0.0], target: 0.0 }],
            vec![VictimScores { victim: "V".into(), clean: vec![1.0], adversarial: vec![adv] }],
        )
    }

    #[test]
    fn seeds_aggregate_with_sample_std() {
        let reps = [
            report(CLEAN, CLEAN, "none", None, 0, 1.0),
            report("C1", "whitebox", "V", Some(0.1), 0, 2.0),
            report(CLEAN, CLEAN, "none", None, 1, 1.0),
            report("C1", "whitebox", "V", Some(0.1), 1, 4.0),
        ];
        let s = Summary::from_reports("t", &reps).unwrap();
        assert_eq!(s.rows.len(), 2);
        let r = s.find("C1", "whitebox", "V", Some(0.1), "V").unwrap();
        assert_eq!((r.seeds, r.mean, r.std), (2, 3.0, Some(2f64.sqrt())));
        assert_eq!(r.clean_std, Some(0.0));
        let md = s.to_markdown();
        assert!(md.contains("3.0000 ± 1.4142*"), "{md}");
        assert!(md.contains("mean ± std over 2 seeds"));
    }

    #[test]
    fn one_seed_omits_std() {
        let reps = [report(CLEAN, CLEAN, "none", None, 0, 1.0), report("C1", "random", "none", Some(0.1), 0, 2.5)];
        let s = Summary::from_reports("t", &reps).unwrap();
        let md = s.to_markdown();
        assert!(!md.contains('±'));
        assert!(md.contains("| C1 | random | none | 0.1 | 2.5000 |"), "{md}");
        assert!(s.summary_csv().lines().nth(2).unwrap().contains("2.5,,1,,false"));
    }
}
