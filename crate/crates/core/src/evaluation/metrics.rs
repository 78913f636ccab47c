//! Scoring predictions and arrangements.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probing::Arrangement;
use crate::ratings::{RatingClass, RatingScale};

/// Counts of (truth class, predicted class) after rounding. Mergeable, so
/// runs can be pooled before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    /// `counts[truth][predicted]`, indexed by [`RatingClass::index`].
    pub counts: [[usize; 3]; 3],
}

impl Confusion {
    pub fn record(&mut self, scale: RatingScale, predicted: f64, truth: f64) {
        let t = scale.round(truth).index();
        let p = scale.round(predicted).index();
        self.counts[t][p] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for t in 0..3 {
            for p in 0..3 {
                self.counts[t][p] += other.counts[t][p];
            }
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn report(&self, scale: RatingScale) -> Result<ClassificationReport> {
        if self.total() == 0 {
            return Err(Error::Config("no predictions to score".into()));
        }
        let mut classes = Vec::new();
        let mut present_f = Vec::new();
        for &class in scale.classes() {
            let c = class.index();
            let tp = self.counts[c][c];
            let support: usize = self.counts[c].iter().sum();
            let predicted: usize = (0..3).map(|t| self.counts[t][c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f_score = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            if support > 0 {
                present_f.push(f_score);
            }
            classes.push(ClassScore { class, precision, recall, f_score, support });
        }
        let macro_f = present_f.iter().sum::<f64>() / present_f.len() as f64;
        Ok(ClassificationReport { scale, classes, macro_f, confusion: *self })
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: RatingClass,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Ground-truth count of this class.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub scale: RatingScale,
    pub classes: Vec<ClassScore>,
    /// Unweighted mean F-score over classes that occur in the ground truth.
    pub macro_f: f64,
    pub confusion: Confusion,
}

impl ClassificationReport {
    pub fn class(&self, class: RatingClass) -> Option<&ClassScore> {
        self.classes.iter().find(|c| c.class == class)
    }
}

fn check_lengths(predictions: &[f64], truth: &[f64]) -> Result<()> {
    if predictions.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} ground-truth ratings",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Config("empty ground truth".into()));
    }
    Ok(())
}

/// Per-class precision, recall and F-score with predictions rounded to the
/// nearest class on `scale`.
pub fn classification_report(predictions: &[f64], truth: &[f64], scale: RatingScale) -> Result<ClassificationReport> {
    check_lengths(predictions, truth)?;
    let mut confusion = Confusion::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion.record(scale, p, t);
    }
    confusion.report(scale)
}

/// Running sums for prediction-error statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub abs_sum: f64,
    pub sq_sum: f64,
    /// Rounded absolute error of 0, 0.5 and 1.
    pub buckets: [usize; 3],
}

impl ErrorStats {
    pub fn record(&mut self, scale: RatingScale, predicted: f64, truth: f64) {
        let e = truth - predicted;
        self.count += 1;
        self.abs_sum += e.abs();
        self.sq_sum += e * e;
        let rounded = (scale.round(predicted).value() - truth).abs();
        let bucket = if rounded < 0.25 {
            0
        } else if rounded < 0.75 {
            1
        } else {
            2
        };
        self.buckets[bucket] += 1;
    }

    pub fn merge(&mut self, other: &ErrorStats) {
        self.count += other.count;
        self.abs_sum += other.abs_sum;
        self.sq_sum += other.sq_sum;
        for b in 0..3 {
            self.buckets[b] += other.buckets[b];
        }
    }

    pub fn report(&self) -> Result<ErrorReport> {
        if self.count == 0 {
            return Err(Error::Config("no predictions to score".into()));
        }
        let n = self.count as f64;
        Ok(ErrorReport {
            mean_abs_error: self.abs_sum / n,
            rmse: (self.sq_sum / n).sqrt(),
            histogram: self.buckets.map(|b| b as f64 / n),
            count: self.count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Mean of `|r - prediction|` on raw predictions.
    pub mean_abs_error: f64,
    pub rmse: f64,
    /// Fractions of rounded absolute error 0, 0.5 and 1.
    pub histogram: [f64; 3],
    pub count: usize,
}

/// Mean absolute error and the distribution of rounded errors.
pub fn mean_error_report(predictions: &[f64], truth: &[f64], scale: RatingScale) -> Result<ErrorReport> {
    check_lengths(predictions, truth)?;
    let mut stats = ErrorStats::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        stats.record(scale, p, t);
    }
    stats.report()
}

fn groups(arrangement: &Arrangement) -> BTreeSet<BTreeSet<usize>> {
    arrangement.containers.iter().filter(|c| !c.is_empty()).map(|c| c.iter().copied().collect()).collect()
}

fn check_same_objects(a: &Arrangement, b: &Arrangement) -> Result<()> {
    a.validate(None)?;
    b.validate(None)?;
    if a.placed() != b.placed() {
        return Err(Error::Arrangement("arrangements place different objects".into()));
    }
    Ok(())
}

/// Same groups, ignoring container order and empty containers.
pub fn arrangement_success(computed: &Arrangement, truth: &Arrangement) -> Result<bool> {
    check_same_objects(computed, truth)?;
    Ok(groups(computed) == groups(truth))
}

/// Fewest objects that must change container to turn `computed` into
/// `truth`: everything outside the best one-to-one matching of computed
/// groups to true containers.
pub fn misplaced_objects(computed: &Arrangement, truth: &Arrangement) -> Result<usize> {
    check_same_objects(computed, truth)?;
    let rows: Vec<BTreeSet<usize>> = groups(computed).into_iter().collect();
    let cols: Vec<BTreeSet<usize>> = groups(truth).into_iter().collect();
    let (rows, cols) = if rows.len() >= cols.len() { (rows, cols) } else { (cols, rows) };
    if cols.len() > 16 {
        return Err(Error::Config("matching supports at most 16 containers".into()));
    }
    let overlap: Vec<Vec<usize>> =
        rows.iter().map(|r| cols.iter().map(|c| r.intersection(c).count()).collect()).collect();
    // best[mask]: largest matched overlap using the columns in `mask`
    let full = 1usize << cols.len();
    let mut best = vec![0usize; full];
    for row in &overlap {
        let previous = best.clone();
        for mask in 0..full {
            for (c, &w) in row.iter().enumerate() {
                if mask & (1 << c) == 0 {
                    let next = mask | (1 << c);
                    best[next] = best[next].max(previous[mask] + w);
                }
            }
        }
    }
    let matched = best.into_iter().max().unwrap_or(0);
    Ok(computed.placed().len() - matched)
}

/// Misplaced objects divided by the number of objects that were to be
/// placed, capped at 1.
pub fn edit_distance(computed: &Arrangement, truth: &Arrangement, moved: usize) -> Result<f64> {
    if moved == 0 {
        return Err(Error::Config("number of moved objects must be positive".into()));
    }
    let misplaced = misplaced_objects(computed, truth)?;
    Ok((misplaced as f64 / moved as f64).min(1.0))
}
