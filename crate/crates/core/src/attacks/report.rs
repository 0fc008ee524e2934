//! Scoring adversarial examples and the per-example report format.
//!
//! A report CSV starts with `#` lines echoing the attack config, the
//! substitute model and the task, then one row per (example, victim):
//!
//! ```text
//! example,victim,<feature>...,adv_<feature>...,target,clean_pred,adv_pred,outcome
//! ```
//!
//! `outcome` is the squared error for regression, and for classification
//! `1`/`0` for flipped/held on correctly classified rows or `na` otherwise.
//! Aggregates are always recomputed from these rows.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CadeError, Result};
use crate::matrix::Matrix;
use crate::models::{Model, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRow {
    pub index: usize,
    pub x: Vec<f64>,
    pub x_adv: Vec<f64>,
    /// Real target, or the class index as a float.
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VictimScores {
    pub victim: String,
    pub clean: Vec<f64>,
    pub adversarial: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "lowercase")]
pub enum Score {
    Rmse { clean: f64, adversarial: f64 },
    /// Percentages.
    Asr { clean_accuracy: f64, asr: f64 },
}

impl Score {
    /// The headline number: adversarial RMSE or ASR.
    pub fn headline(&self) -> f64 {
        match *self {
            Score::Rmse { adversarial, .. } => adversarial,
            Score::Asr { asr, .. } => asr,
        }
    }

    /// The clean counterpart: clean RMSE or clean accuracy.
    pub fn baseline(&self) -> f64 {
        match *self {
            Score::Rmse { clean, .. } => clean,
            Score::Asr { clean_accuracy, .. } => clean_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    /// Echo of the attack config.
    pub config: String,
    /// Model the examples were crafted on, or `none`.
    pub substitute: String,
    pub task: Task,
    pub columns: Vec<String>,
    pub examples: Vec<ExampleRow>,
    pub victims: Vec<VictimScores>,
}

fn predict(model: &Model, x: &[f64], task: Task) -> f64 {
    match task {
        Task::Regression => model.predict_value(x),
        Task::Classification { .. } => model.predict_class(x) as f64,
    }
}

/// Score the same adversarial examples on every victim.
pub fn evaluate(
    victims: &[(&str, &Model)],
    clean: &Matrix,
    adversarial: &Matrix,
    targets: &[f64],
    task: Task,
) -> Result<(Vec<VictimScores>, Vec<ExampleRow>)> {
    if clean.rows() != adversarial.rows()
        || clean.cols() != adversarial.cols()
        || clean.rows() != targets.len()
    {
        return Err(CadeError::Shape("clean, adversarial and targets are misaligned".into()));
    }
    let examples = (0..clean.rows())
        .map(|i| ExampleRow {
            index: i,
            x: clean.row(i).to_vec(),
            x_adv: adversarial.row(i).to_vec(),
            target: targets[i],
        })
        .collect();
    let mut scores = Vec::new();
    for &(name, m) in victims {
        if m.input_dim() != clean.cols() {
            return Err(CadeError::Shape(format!("victim {name} expects {} features", m.input_dim())));
        }
        scores.push(VictimScores {
            victim: name.to_string(),
            clean: clean.iter_rows().map(|r| predict(m, r, task)).collect(),
            adversarial: adversarial.iter_rows().map(|r| predict(m, r, task)).collect(),
        });
    }
    Ok((scores, examples))
}

fn score_of(task: Task, targets: &[f64], clean: &[f64], adv: &[f64]) -> Score {
    let n = targets.len() as f64;
    match task {
        Task::Regression => {
            let rmse = |p: &[f64]| {
                (p.iter().zip(targets).map(|(a, t)| (a - t).powi(2)).sum::<f64>() / n).sqrt()
            };
            Score::Rmse {
                clean: rmse(clean),
                adversarial: rmse(adv),
            }
        }
        Task::Classification { .. } => {
            let correct: Vec<usize> = (0..targets.len()).filter(|&i| clean[i] == targets[i]).collect();
            let flipped = correct.iter().filter(|&&i| adv[i] != targets[i]).count();
            let asr = if correct.is_empty() {
                0.0
            } else {
                100.0 * flipped as f64 / correct.len() as f64
            };
            Score::Asr {
                clean_accuracy: 100.0 * correct.len() as f64 / n,
                asr,
            }
        }
    }
}

impl AttackReport {
    pub fn new(
        config: String,
        substitute: &str,
        task: Task,
        columns: Vec<String>,
        examples: Vec<ExampleRow>,
        victims: Vec<VictimScores>,
    ) -> Self {
        Self {
            config,
            substitute: substitute.to_string(),
            task,
            columns,
            examples,
            victims,
        }
    }

    pub fn targets(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.target).collect()
    }

    /// Aggregate for every victim, in report order.
    pub fn scores(&self) -> Vec<(String, Score)> {
        let t = self.targets();
        self.victims
            .iter()
            .map(|v| (v.victim.clone(), score_of(self.task, &t, &v.clean, &v.adversarial)))
            .collect()
    }

    pub fn score(&self, victim: &str) -> Option<Score> {
        self.scores().into_iter().find(|(v, _)| v == victim).map(|(_, s)| s)
    }

    fn outcome(&self, target: f64, clean: f64, adv: f64) -> String {
        match self.task {
            Task::Regression => ((adv - target).powi(2)).to_string(),
            Task::Classification { .. } if clean != target => "na".into(),
            Task::Classification { .. } => u8::from(adv != target).to_string(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let task = serde_json::to_string(&self.task).expect("task serializes");
        writeln!(out, "# config: {}", self.config)?;
        writeln!(out, "# substitute: {}", self.substitute)?;
        writeln!(out, "# task: {task}")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["example".to_string(), "victim".to_string()];
        header.extend(self.columns.iter().cloned());
        header.extend(self.columns.iter().map(|c| format!("adv_{c}")));
        header.extend(["target", "clean_pred", "adv_pred", "outcome"].map(String::from));
        w.write_record(&header)?;
        for v in &self.victims {
            for (k, e) in self.examples.iter().enumerate() {
                let mut rec = vec![e.index.to_string(), v.victim.clone()];
                rec.extend(e.x.iter().map(f64::to_string));
                rec.extend(e.x_adv.iter().map(f64::to_string));
                rec.push(e.target.to_string());
                rec.push(v.clean[k].to_string());
                rec.push(v.adversarial[k].to_string());
                rec.push(self.outcome(e.target, v.clean[k], v.adversarial[k]));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut meta = Vec::new();
        for key in ["config", "substitute", "task"] {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            let prefix = format!("# {key}: ");
            let value = line
                .trim_end_matches(['\n', '\r'])
                .strip_prefix(&prefix)
                .ok_or_else(|| CadeError::Parse(format!("missing report header {key:?}")))?;
            meta.push(value.to_string());
        }
        let task: Task = serde_json::from_str(&meta[2]).map_err(|e| CadeError::Parse(e.to_string()))?;
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header.len() < 6 || !(header.len() - 6).is_multiple_of(2) || header[0] != "example" {
            return Err(CadeError::Parse("unexpected report header".into()));
        }
        let p = (header.len() - 6) / 2;
        let columns = header[2..2 + p].to_vec();
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| CadeError::Parse(format!("bad number {s:?}")))
        };
        let mut examples: Vec<ExampleRow> = Vec::new();
        let mut victims: Vec<VictimScores> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let index: usize = rec[0].parse().map_err(|_| CadeError::Parse("bad example index".into()))?;
            let victim = &rec[1];
            let x = (0..p).map(|k| num(&rec[2 + k])).collect::<Result<Vec<_>>>()?;
            let x_adv = (0..p).map(|k| num(&rec[2 + p + k])).collect::<Result<Vec<_>>>()?;
            let target = num(&rec[2 + 2 * p])?;
            let clean = num(&rec[3 + 2 * p])?;
            let adv = num(&rec[4 + 2 * p])?;
            if victims.last().map(|v| v.victim.as_str()) != Some(victim) {
                victims.push(VictimScores {
                    victim: victim.to_string(),
                    clean: Vec::new(),
                    adversarial: Vec::new(),
                });
            }
            let k = victims.last().map_or(0, |v| v.clean.len());
            if victims.len() == 1 {
                examples.push(ExampleRow { index, x, x_adv, target });
            } else if examples.get(k).map(|e| e.index) != Some(index) {
                return Err(CadeError::Parse(format!("victim {victim} rows out of step")));
            }
            let v = victims.last_mut().unwrap();
            v.clean.push(clean);
            v.adversarial.push(adv);
        }
        if victims.iter().any(|v| v.clean.len() != examples.len()) {
            return Err(CadeError::Parse("victims scored on different example counts".into()));
        }
        Ok(Self {
            config: meta[0].clone(),
            substitute: meta[1].clone(),
            task,
            columns,
            examples,
            victims,
        })
    }

    /// One line per victim: clean and adversarial metric.
    pub fn to_markdown(&self) -> String {
        let mut s = format!("Attack: `{}`\n\nSubstitute: {}\n\n", self.config, self.substitute);
        match self.task {
            Task::Regression => s.push_str("| victim | clean RMSE | adversarial RMSE |\n|---|---|---|\n"),
            Task::Classification { .. } => {
                s.push_str("| victim | clean accuracy (%) | ASR (%) |\n|---|---|---|\n")
            }
        }
        for (v, sc) in self.scores() {
            s.push_str(&format!("| {v} | {:.4} | {:.4} |\n", sc.baseline(), sc.headline()));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearModel;

    fn victims() -> Vec<(String, Model)> {
        vec![
            ("a".into(), Model::Linear(LinearModel::new(vec![1.0, 0.5], None).unwrap())),
            ("b".into(), Model::Linear(LinearModel::new(vec![-0.3, 2.0], Some(0.1)).unwrap())),
        ]
    }

    #[test]
    fn unchanged_examples_score_clean() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![0.0, 0.25]]).unwrap();
        let t = [1.0, 0.3, -0.2];
        let vs = victims();
        let refs: Vec<(&str, &Model)> = vs.iter().map(|(n, m)| (n.as_str(), m)).collect();
        let (scores, ex) = evaluate(&refs, &x, &x, &t, Task::Regression).unwrap();
        let rep = AttackReport::new("{}".into(), "none", Task::Regression, vec!["p".into(), "q".into()], ex, scores);
        for (_, s) in rep.scores() {
            let Score::Rmse { clean, adversarial } = s else { panic!() };
            assert_eq!(clean, adversarial);
        }
        assert!(evaluate(&refs, &x, &x, &t[..2], Task::Regression).is_err());
    }

    #[test]
    fn asr_counts_flips_among_correct() {
        let task = Task::Classification { n_classes: 3 };
        let rep = AttackReport::new(
            "{}".into(),
            "none",
            task,
            vec!["f".into()],
            (0..4)
                .map(|i| ExampleRow { index: i, x: vec![0.0], x_adv: vec![0.0], target: 1.0 })
                .collect(),
            vec![
                VictimScores {
                    victim: "all".into(),
                    clean: vec![1.0; 4],
                    adversarial: vec![0.0, 2.0, 0.0, 2.0],
                },
                VictimScores {
                    victim: "half".into(),
                    clean: vec![1.0, 1.0, 0.0, 0.0],
                    adversarial: vec![0.0, 1.0, 1.0, 2.0],
                },
            ],
        );
        assert_eq!(rep.score("all"), Some(Score::Asr { clean_accuracy: 100.0, asr: 100.0 }));
        assert_eq!(rep.score("half"), Some(Score::Asr { clean_accuracy: 50.0, asr: 50.0 }));
    }

    #[test]
    fn csv_round_trip_reproduces_bytes_and_aggregates() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.1, -1.0 / 3.0]]).unwrap();
        let xa = Matrix::from_rows(&[vec![1.1, 2.0], vec![0.1, 1e-300]]).unwrap();
        let t = [0.7, -2.0];
        let vs = victims();
        let refs: Vec<(&str, &Model)> = vs.iter().map(|(n, m)| (n.as_str(), m)).collect();
        let (scores, ex) = evaluate(&refs, &x, &xa, &t, Task::Regression).unwrap();
        let rep = AttackReport::new(
            "{\"mode\":\"pgd\"}".into(),
            "a",
            Task::Regression,
            vec!["p".into(), "q".into()],
            ex,
            scores,
        );
        let text = rep.to_csv_string();
        let back = AttackReport::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, rep);
        assert_eq!(back.to_csv_string(), text);
        assert_eq!(back.scores(), rep.scores());
        assert!(rep.to_markdown().contains("| a |"));
    }
}
