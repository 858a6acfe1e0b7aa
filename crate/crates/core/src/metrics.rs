//! Confusion matrices, per-class precision/recall/F1 reports and ROC AUC.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    labels: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(counts: Vec<Vec<u64>>, labels: Vec<String>) -> Result<Self> {
        let k = counts.len();
        if k == 0 {
            return Err(Error::Argument(
                "confusion matrix needs at least one class".into(),
            ));
        }
        if let Some(row) = counts.iter().find(|r| r.len() != k) {
            return Err(Error::dim("ConfusionMatrix::new", "columns", k, row.len()));
        }
        if labels.len() != k {
            return Err(Error::dim(
                "ConfusionMatrix::new",
                "labels",
                k,
                labels.len(),
            ));
        }
        Ok(Self { counts, labels })
    }

    /// Matrix labelled `"0"`, `"1"`, ...
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let labels = (0..counts.len()).map(|i| i.to_string()).collect();
        Self::new(counts, labels)
    }

    pub fn with_labels(self, labels: Vec<String>) -> Result<Self> {
        Self::new(self.counts, labels)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::dim(
            "confusion",
            "label count",
            truth.len(),
            predicted.len(),
        ));
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (i, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
        if t >= classes || p >= classes {
            return Err(Error::Argument(format!(
                "sample {i}: label ({t}, {p}) out of range for {classes} classes"
            )));
        }
        counts[t][p] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRow {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AverageRow {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassRow>,
    pub accuracy: f64,
    pub macro_avg: AverageRow,
    pub weighted_avg: AverageRow,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn report(matrix: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix has no samples".into()));
    }
    let classes: Vec<ClassRow> = (0..matrix.classes())
        .map(|c| {
            let tp = matrix.get(c, c);
            let precision = ratio(tp, matrix.col_sum(c));
            let recall = ratio(tp, matrix.row_sum(c));
            ClassRow {
                label: matrix.labels()[c].clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: matrix.row_sum(c),
            }
        })
        .collect();
    let k = classes.len() as f64;
    let macro_avg = AverageRow {
        precision: classes.iter().map(|r| r.precision).sum::<f64>() / k,
        recall: classes.iter().map(|r| r.recall).sum::<f64>() / k,
        f1: classes.iter().map(|r| r.f1).sum::<f64>() / k,
        support: total,
    };
    let weighted = |f: fn(&ClassRow) -> f64| {
        classes.iter().map(|r| f(r) * r.support as f64).sum::<f64>() / total as f64
    };
    let weighted_avg = AverageRow {
        precision: weighted(|r| r.precision),
        recall: weighted(|r| r.recall),
        f1: weighted(|r| r.f1),
        support: total,
    };
    Ok(ClassificationReport {
        accuracy: ratio(matrix.trace(), total),
        classes,
        macro_avg,
        weighted_avg,
    })
}

/// Rounds half away from zero to two decimals, for display.
pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

impl ClassificationReport {
    pub fn total(&self) -> u64 {
        self.macro_avg.support
    }

    /// Aligned text table: one row per class, then accuracy and the averages.
    pub fn to_table(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|r| r.label.len())
            .chain(["weighted avg".len()])
            .max()
            .unwrap();
        let mut out = String::new();
        writeln!(
            out,
            "{:>width$}  {:>9}  {:>9}  {:>9}  {:>9}",
            "", "precision", "recall", "f1-score", "support"
        )
        .unwrap();
        out.push('\n');
        for r in &self.classes {
            writeln!(
                out,
                "{:>width$}  {:>9.2}  {:>9.2}  {:>9.2}  {:>9}",
                r.label,
                round2(r.precision),
                round2(r.recall),
                round2(r.f1),
                r.support
            )
            .unwrap();
        }
        out.push('\n');
        writeln!(
            out,
            "{:>width$}  {:>9}  {:>9}  {:>9.2}  {:>9}",
            "accuracy",
            "",
            "",
            round2(self.accuracy),
            self.total()
        )
        .unwrap();
        for (name, a) in [
            ("macro avg", &self.macro_avg),
            ("weighted avg", &self.weighted_avg),
        ] {
            writeln!(
                out,
                "{:>width$}  {:>9.2}  {:>9.2}  {:>9.2}  {:>9}",
                name,
                round2(a.precision),
                round2(a.recall),
                round2(a.f1),
                a.support
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredSample {
    pub label: bool,
    pub score: f64,
}

/// Mann-Whitney estimate of P(score of a positive > score of a negative),
/// ties counted as one half, from tie-averaged ranks.
pub fn roc_auc(samples: &[ScoredSample]) -> Result<f64> {
    if let Some(i) = samples.iter().position(|s| s.score.is_nan()) {
        return Err(Error::Argument(format!("sample {i} has a NaN score")));
    }
    let positives = samples.iter().filter(|s| s.label).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc(format!(
            "need both classes, got {positives} positive and {negatives} negative samples"
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].score.total_cmp(&samples[b].score));
    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let score = samples[order[start]].score;
        let mut end = start;
        while end < order.len() && samples[order[end]].score == score {
            end += 1;
        }
        // ranks start..end (0-based) share their mean, 1-based
        let rank = (start + end + 1) as f64 / 2.0;
        let tied_positives = order[start..end]
            .iter()
            .filter(|&&i| samples[i].label)
            .count();
        positive_rank_sum += rank * tied_positives as f64;
        start = end;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub threshold: f64,
    pub matrix: ConfusionMatrix,
    pub report: ClassificationReport,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
}

impl Evaluation {
    pub fn to_text(&self) -> String {
        let mut out = self.report.to_table();
        out.push('\n');
        writeln!(out, "accuracy   {:.2}%", 100.0 * self.report.accuracy).unwrap();
        writeln!(out, "threshold  {}", self.threshold).unwrap();
        match self.auc {
            Some(a) => writeln!(out, "roc auc    {:.2} ({a:.6})", round2(a)).unwrap(),
            None => writeln!(out, "roc auc    undefined (single class)").unwrap(),
        }
        writeln!(out, "confusion matrix (rows true, columns predicted)").unwrap();
        for (label, row) in self.matrix.labels().iter().zip(self.matrix.counts()) {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(out, "  {label}: {}", cells.join(" ")).unwrap();
        }
        out
    }

    pub fn relabel(mut self, labels: Vec<String>) -> Result<Self> {
        self.matrix = self.matrix.with_labels(labels)?;
        self.report = report(&self.matrix)?;
        Ok(self)
    }
}

/// Predicts positive when `score >= threshold`, then builds the confusion
/// matrix, report and AUC.
pub fn evaluate_samples(samples: &[ScoredSample], threshold: f64) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no scored samples".into()));
    }
    if !threshold.is_finite() {
        return Err(Error::Argument(format!(
            "threshold {threshold} must be finite"
        )));
    }
    let truth: Vec<usize> = samples.iter().map(|s| s.label as usize).collect();
    let predicted: Vec<usize> = samples
        .iter()
        .map(|s| (s.score >= threshold) as usize)
        .collect();
    let matrix = confusion(&truth, &predicted, 2)?;
    let auc = match roc_auc(samples) {
        Ok(a) => Some(a),
        Err(Error::UndefinedAuc(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        threshold,
        report: report(&matrix)?,
        matrix,
        auc,
    })
}

/// Reads `label,score` rows (labels 0/1, scores in [0, 1]).
pub fn read_scored_csv(path: &Path) -> Result<Vec<ScoredSample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parse = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| parse(1, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(Error::EmptyInput(format!("{} is empty", path.display())));
    }
    if header.iter().collect::<Vec<_>>() != ["label", "score"] {
        return Err(parse(
            1,
            format!(
                "expected header `label,score`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let label = match &record[0] {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse(
                    line,
                    format!("label must be 0 or 1, found {other:?}"),
                ))
            }
        };
        let score: f64 = record[1]
            .parse()
            .map_err(|_| parse(line, format!("score {:?} is not a number", &record[1])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(parse(line, format!("score {score} outside [0, 1]")));
        }
        samples.push(ScoredSample { label, score });
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} has no data rows",
            path.display()
        )));
    }
    Ok(samples)
}

pub fn evaluate_csv(path: &Path, threshold: f64) -> Result<Evaluation> {
    evaluate_samples(&read_scored_csv(path)?, threshold)
}
