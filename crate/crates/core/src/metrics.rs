//! Classification evaluation: confusion matrix accumulation, per-class
//! precision / recall / F1 with supports, weighted averages, and text /
//! markdown / CSV report rendering.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Square count matrix; rows index the true class, columns the predicted
/// class, so `counts[t][p]` is the number of examples of class `t` predicted
/// as class `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let n = class_names.len();
        ConfusionMatrix {
            class_names,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_counts(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = class_names.len();
        if counts.len() != n || counts.iter().any(|row| row.len() != n) {
            return Err(Error::Config(format!(
                "confusion matrix must be {n}x{n} to match {n} class names"
            )));
        }
        Ok(ConfusionMatrix {
            class_names,
            counts,
        })
    }

    /// Tallies aligned label sequences into a matrix.
    pub fn from_pairs(
        class_names: Vec<String>,
        true_labels: &[usize],
        predicted_labels: &[usize],
    ) -> Result<Self> {
        if true_labels.len() != predicted_labels.len() {
            return Err(Error::Config(format!(
                "label sequences differ in length: {} true vs {} predicted",
                true_labels.len(),
                predicted_labels.len()
            )));
        }
        let mut matrix = ConfusionMatrix::new(class_names);
        for (&t, &p) in true_labels.iter().zip(predicted_labels) {
            matrix.record(t, p)?;
        }
        Ok(matrix)
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) -> Result<()> {
        let n = self.class_names.len();
        if true_class >= n {
            return Err(Error::Index {
                op: "confusion.record true_class",
                index: true_class,
                size: n,
            });
        }
        if predicted >= n {
            return Err(Error::Index {
                op: "confusion.record predicted",
                index: predicted,
                size: n,
            });
        }
        self.counts[true_class][predicted] += 1;
        Ok(())
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Number of examples whose true class is `c` (row sum).
    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// Number of examples predicted as `c` (column sum).
    pub fn predicted_total(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correct predictions over total: the matrix trace divided by the sum
    /// of all cells. Undefined when the matrix holds no examples.
    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::UndefinedMetric { metric: "accuracy" });
        }
        let trace: u64 = (0..self.num_classes()).map(|c| self.counts[c][c]).sum();
        Ok(trace as f64 / total as f64)
    }

    /// CSV with a leading `true\predicted` header naming every class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (t, row) in self.counts.iter().enumerate() {
            out.push_str(&self.class_names[t]);
            for &c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("confusion matrix CSV is empty".to_string()))?;
        let class_names: Vec<String> = header.split(',').skip(1).map(|s| s.to_string()).collect();
        if class_names.is_empty() {
            return Err(Error::Config(
                "confusion matrix CSV header names no classes".to_string(),
            ));
        }
        let mut counts = Vec::with_capacity(class_names.len());
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let row_name = fields.next().unwrap_or("");
            if row_name != class_names.get(i).map(String::as_str).unwrap_or("") {
                return Err(Error::Config(format!(
                    "confusion matrix CSV row {i} is labeled {row_name:?}, expected {:?}",
                    class_names.get(i)
                )));
            }
            let row: Vec<u64> = fields
                .map(|f| {
                    f.trim().parse::<u64>().map_err(|e| {
                        Error::Config(format!("confusion matrix CSV row {i}: bad count {f:?}: {e}"))
                    })
                })
                .collect::<Result<_>>()?;
            counts.push(row);
        }
        ConfusionMatrix::from_counts(class_names, counts)
    }
}

/// Precision, recall, and F1 for one class, plus its support (number of true
/// examples). When a denominator is zero the metric is reported as 0 and the
/// corresponding flag is set so callers can surface a warning.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub no_predictions: bool,
    pub no_examples: bool,
}

/// Support-weighted averages across classes.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedAverages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub total_support: u64,
}

/// Full evaluation summary derived from one confusion matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub weighted: WeightedAverages,
}

pub fn per_class_metrics(matrix: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..matrix.num_classes())
        .map(|c| {
            let tp = matrix.count(c, c);
            let predicted = matrix.predicted_total(c);
            let support = matrix.support(c);
            let no_predictions = predicted == 0;
            let no_examples = support == 0;
            let precision = if no_predictions {
                0.0
            } else {
                tp as f64 / predicted as f64
            };
            let recall = if no_examples {
                0.0
            } else {
                tp as f64 / support as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                name: matrix.class_names()[c].clone(),
                precision,
                recall,
                f1,
                support,
                no_predictions,
                no_examples,
            }
        })
        .collect()
}

/// Precision, recall, and F1 for one class id.
pub fn precision_recall_f1(matrix: &ConfusionMatrix, c: usize) -> Result<(f64, f64, f64)> {
    if c >= matrix.num_classes() {
        return Err(Error::Index {
            op: "precision_recall_f1",
            index: c,
            size: matrix.num_classes(),
        });
    }
    let m = &per_class_metrics(matrix)[c];
    Ok((m.precision, m.recall, m.f1))
}

pub fn weighted_averages(per_class: &[ClassMetrics]) -> Result<WeightedAverages> {
    let total_support: u64 = per_class.iter().map(|m| m.support).sum();
    if total_support == 0 {
        return Err(Error::UndefinedMetric {
            metric: "weighted average",
        });
    }
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut f1 = 0.0;
    for m in per_class {
        let w = m.support as f64 / total_support as f64;
        precision += w * m.precision;
        recall += w * m.recall;
        f1 += w * m.f1;
    }
    Ok(WeightedAverages {
        precision,
        recall,
        f1,
        total_support,
    })
}

pub fn evaluate(matrix: &ConfusionMatrix) -> Result<EvaluationReport> {
    let per_class = per_class_metrics(matrix);
    let weighted = weighted_averages(&per_class)?;
    Ok(EvaluationReport {
        per_class,
        accuracy: matrix.accuracy()?,
        weighted,
    })
}

/// Output format for [`render_report`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown report format {other:?}; expected text, markdown, or csv"
            ))),
        }
    }
}

impl std::fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReportFormat::Text => "text",
            ReportFormat::Markdown => "markdown",
            ReportFormat::Csv => "csv",
        })
    }
}

/// Renders the per-class table plus accuracy and weighted-average rows.
/// Metrics are printed with two decimals; supports are exact counts.
pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(report),
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_text(report: &EvaluationReport) -> String {
    let name_width = report
        .per_class
        .iter()
        .map(|m| m.name.chars().count())
        .chain(["weighted avg".chars().count()])
        .max()
        .unwrap_or(8);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_width$}  {:>9}  {:>6}  {:>8}  {:>7}",
        "class", "precision", "recall", "f1-score", "support"
    );
    for m in &report.per_class {
        let _ = writeln!(
            out,
            "{:<name_width$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}",
            m.name, m.precision, m.recall, m.f1, m.support
        );
    }
    let total = report.weighted.total_support;
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<name_width$}  {:>9}  {:>6}  {:>8.2}  {:>7}",
        "accuracy", "", "", report.accuracy, total
    );
    let _ = writeln!(
        out,
        "{:<name_width$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}",
        "weighted avg",
        report.weighted.precision,
        report.weighted.recall,
        report.weighted.f1,
        total
    );
    let warnings: Vec<&ClassMetrics> = report
        .per_class
        .iter()
        .filter(|m| m.no_predictions || m.no_examples)
        .collect();
    if !warnings.is_empty() {
        let _ = writeln!(out);
        for m in warnings {
            if m.no_examples {
                let _ = writeln!(out, "warning: class {:?} has no true examples", m.name);
            }
            if m.no_predictions {
                let _ = writeln!(out, "warning: class {:?} was never predicted", m.name);
            }
        }
    }
    out
}

fn render_markdown(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str("| class | precision | recall | f1-score | support |\n");
    out.push_str("|---|---:|---:|---:|---:|\n");
    for m in &report.per_class {
        let _ = writeln!(
            out,
            "| {} | {:.2} | {:.2} | {:.2} | {} |",
            m.name, m.precision, m.recall, m.f1, m.support
        );
    }
    let total = report.weighted.total_support;
    let _ = writeln!(out, "| accuracy |  |  | {:.2} | {} |", report.accuracy, total);
    let _ = writeln!(
        out,
        "| weighted avg | {:.2} | {:.2} | {:.2} | {} |",
        report.weighted.precision, report.weighted.recall, report.weighted.f1, total
    );
    out
}

fn render_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("class,precision,recall,f1,support\n");
    for m in &report.per_class {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{}",
            m.name, m.precision, m.recall, m.f1, m.support
        );
    }
    let total = report.weighted.total_support;
    let _ = writeln!(out, "accuracy,,,{:.6},{}", report.accuracy, total);
    let _ = writeln!(
        out,
        "weighted avg,{:.6},{:.6},{:.6},{}",
        report.weighted.precision, report.weighted.recall, report.weighted.f1, total
    );
    out
}
