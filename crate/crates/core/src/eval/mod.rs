//! Classification metrics and comparative analyses.
//!
//! Positive class is `INCLUSIVE` throughout, matching the convention that
//! recall measures how well a model finds inclusive labels. `UNDETERMINED`
//! predictions are scored as wrong for the true class so denominators always
//! equal sample counts.

pub mod svg;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::TargetPosition;
use crate::label::{GoldLabel, Prediction};

/// Binary confusion matrix with `INCLUSIVE` as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Gold-INCLUSIVE count.
    pub fn support_positive(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Gold-NONINCLUSIVE count.
    pub fn support_negative(&self) -> u64 {
        self.tn + self.fp
    }
}

/// Tally (gold, predicted) pairs. `UNDETERMINED` counts as a wrong
/// prediction: a false negative when gold is INCLUSIVE, a false positive
/// when gold is NONINCLUSIVE.
pub fn confusion(pairs: &[(GoldLabel, Prediction)]) -> Result<ConfusionMatrix> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("prediction pairs"));
    }
    let mut cm = ConfusionMatrix::default();
    for &(gold, predicted) in pairs {
        match (gold, predicted) {
            (GoldLabel::Inclusive, Prediction::Inclusive) => cm.tp += 1,
            (GoldLabel::Inclusive, _) => cm.fn_ += 1,
            (GoldLabel::NonInclusive, Prediction::NonInclusive) => cm.tn += 1,
            (GoldLabel::NonInclusive, _) => cm.fp += 1,
        }
    }
    Ok(cm)
}

/// The six derived metrics. Any 0/0 ratio is reported as 0 and listed in
/// `degenerate` rather than aborting a report over a single-class slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    if cm.total() == 0 {
        return Err(Error::EmptyInput("confusion matrix"));
    }
    let mut degenerate = Vec::new();
    let mut ratio = |name: &str, num: u64, den: u64| {
        if den == 0 {
            degenerate.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let recall = ratio("recall", cm.tp, cm.tp + cm.fn_);
    let specificity = ratio("specificity", cm.tn, cm.tn + cm.fp);
    let precision = ratio("precision", cm.tp, cm.tp + cm.fp);
    let accuracy = (cm.tp + cm.tn) as f64 / cm.total() as f64;
    let balanced_accuracy = (recall + specificity) / 2.0;
    let f1 = if precision + recall == 0.0 {
        degenerate.push("f1".to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        recall,
        specificity,
        accuracy,
        balanced_accuracy,
        precision,
        f1,
        degenerate,
    })
}

/// Metrics for one (model, prompt) pair, as reported in the per-model table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_id: String,
    pub prompt_id: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub support_positive: u64,
    pub support_negative: u64,
}

impl MetricsReport {
    pub fn from_confusion(
        model_id: impl Into<String>,
        prompt_id: impl Into<String>,
        cm: &ConfusionMatrix,
    ) -> Result<Self> {
        Ok(MetricsReport {
            model_id: model_id.into(),
            prompt_id: prompt_id.into(),
            metrics: metrics(cm)?,
            support_positive: cm.support_positive(),
            support_negative: cm.support_negative(),
        })
    }
}

/// Accuracy matrix keyed by model row and prompt column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAccuracyTable {
    pub models: Vec<String>,
    pub prompts: Vec<String>,
    /// (model, prompt) → accuracy; absent cells stay absent.
    pub cells: BTreeMap<(String, String), f64>,
}

/// Build the model × prompt accuracy comparison table.
pub fn prompt_accuracy_table(reports: &[MetricsReport]) -> Result<PromptAccuracyTable> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("metrics reports"));
    }
    let mut cells = BTreeMap::new();
    for report in reports {
        let key = (report.model_id.clone(), report.prompt_id.clone());
        if cells.insert(key, report.metrics.accuracy).is_some() {
            return Err(Error::DuplicateReport {
                model: report.model_id.clone(),
                prompt: report.prompt_id.clone(),
            });
        }
    }
    let mut models: Vec<String> = cells.keys().map(|(m, _)| m.clone()).collect();
    models.sort();
    models.dedup();
    let mut prompts: Vec<String> = cells.keys().map(|(_, p)| p.clone()).collect();
    prompts.sort();
    prompts.dedup();
    Ok(PromptAccuracyTable {
        models,
        prompts,
        cells,
    })
}

impl PromptAccuracyTable {
    /// Emit as CSV: one model per row, one prompt per column, empty string
    /// for absent cells. Byte-deterministic for identical inputs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for prompt in &self.prompts {
            out.push(',');
            out.push_str(prompt);
        }
        out.push('\n');
        for model in &self.models {
            out.push_str(model);
            for prompt in &self.prompts {
                out.push(',');
                if let Some(acc) = self.cells.get(&(model.clone(), prompt.clone())) {
                    out.push_str(&format_metric(*acc));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Pick the best prompt for one model by accuracy; ties break to the
/// lexicographically smallest prompt id so selection is deterministic.
pub fn best_prompt(reports: &[MetricsReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("metrics reports"));
    }
    let model = &reports[0].model_id;
    if let Some(stray) = reports.iter().find(|r| &r.model_id != model) {
        return Err(Error::InvalidParameter(format!(
            "best_prompt got reports for `{model}` and `{}`",
            stray.model_id
        )));
    }
    let mut best = &reports[0];
    for report in &reports[1..] {
        let better = report.metrics.accuracy > best.metrics.accuracy
            || (report.metrics.accuracy == best.metrics.accuracy
                && report.prompt_id < best.prompt_id);
        if better {
            best = report;
        }
    }
    Ok(best.prompt_id.clone())
}

/// Predicted-label counts with class ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub inclusive: u64,
    pub noninclusive: u64,
    pub undetermined: u64,
    /// INCLUSIVE : NONINCLUSIVE ratio, when the denominator is non-zero.
    pub inclusive_to_noninclusive: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn label_distribution(predictions: &[Prediction]) -> Result<LabelDistribution> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    let mut dist = LabelDistribution {
        inclusive: 0,
        noninclusive: 0,
        undetermined: 0,
        inclusive_to_noninclusive: None,
        warning: None,
    };
    for p in predictions {
        match p {
            Prediction::Inclusive => dist.inclusive += 1,
            Prediction::NonInclusive => dist.noninclusive += 1,
            Prediction::Undetermined => dist.undetermined += 1,
        }
    }
    if dist.noninclusive > 0 {
        dist.inclusive_to_noninclusive = Some(dist.inclusive as f64 / dist.noninclusive as f64);
    }
    if dist.undetermined == predictions.len() as u64 {
        dist.warning = Some("every prediction is UNDETERMINED".into());
    }
    Ok(dist)
}

/// One scored sample: everything the bucket analyses need, joined by the
/// caller from samples and normalized predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredSample {
    pub model_id: String,
    pub sample_id: String,
    pub word_count: usize,
    pub target_position: TargetPosition,
    pub gold: GoldLabel,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketDimension {
    Length,
    Position,
}

/// Per-bucket per-model accuracy row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketedAccuracy {
    pub dimension: BucketDimension,
    /// `[20,30)` style bin for length, `start|middle|end` for position.
    pub bucket: String,
    pub model_id: String,
    pub accuracy: f64,
    pub sample_count: u64,
}

/// Accuracy per word-count bin of width `bin_width`. Buckets with no samples
/// are omitted.
pub fn length_analysis(scored: &[ScoredSample], bin_width: usize) -> Result<Vec<BucketedAccuracy>> {
    if bin_width < 1 {
        return Err(Error::InvalidParameter("bin_width must be at least 1".into()));
    }
    // (bin index, model) → (correct, total)
    let mut buckets: BTreeMap<(usize, String), (u64, u64)> = BTreeMap::new();
    for s in scored {
        let bin = s.word_count / bin_width;
        let entry = buckets.entry((bin, s.model_id.clone())).or_insert((0, 0));
        entry.1 += 1;
        if s.prediction.matches(s.gold) {
            entry.0 += 1;
        }
    }
    Ok(buckets
        .into_iter()
        .map(|((bin, model_id), (correct, total))| BucketedAccuracy {
            dimension: BucketDimension::Length,
            bucket: format!("[{},{})", bin * bin_width, (bin + 1) * bin_width),
            model_id,
            accuracy: correct as f64 / total as f64,
            sample_count: total,
        })
        .collect())
}

/// Accuracy per target position. Samples with position `none` are excluded;
/// the second return value reports how many were skipped.
pub fn position_analysis(scored: &[ScoredSample]) -> (Vec<BucketedAccuracy>, u64) {
    let mut excluded = 0u64;
    let mut buckets: BTreeMap<(u8, String), (u64, u64)> = BTreeMap::new();
    for s in scored {
        let order = match s.target_position {
            TargetPosition::Start => 0,
            TargetPosition::Middle => 1,
            TargetPosition::End => 2,
            TargetPosition::None => {
                excluded += 1;
                continue;
            }
        };
        let entry = buckets.entry((order, s.model_id.clone())).or_insert((0, 0));
        entry.1 += 1;
        if s.prediction.matches(s.gold) {
            entry.0 += 1;
        }
    }
    let rows = buckets
        .into_iter()
        .map(|((order, model_id), (correct, total))| BucketedAccuracy {
            dimension: BucketDimension::Position,
            bucket: ["start", "middle", "end"][order as usize].to_string(),
            model_id,
            accuracy: correct as f64 / total as f64,
            sample_count: total,
        })
        .collect();
    (rows, excluded)
}

/// Histogram row: how many samples fall in each word-count bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthHistogramRow {
    pub bucket: String,
    pub bucket_start: usize,
    pub count: u64,
}

pub fn length_histogram(word_counts: &[usize], bin_width: usize) -> Result<Vec<LengthHistogramRow>> {
    if bin_width < 1 {
        return Err(Error::InvalidParameter("bin_width must be at least 1".into()));
    }
    let mut bins: BTreeMap<usize, u64> = BTreeMap::new();
    for &wc in word_counts {
        *bins.entry(wc / bin_width).or_insert(0) += 1;
    }
    Ok(bins
        .into_iter()
        .map(|(bin, count)| LengthHistogramRow {
            bucket: format!("[{},{})", bin * bin_width, (bin + 1) * bin_width),
            bucket_start: bin * bin_width,
            count,
        })
        .collect())
}

/// Fixed-precision metric formatting shared by the CSV emitters, keeping
/// table output byte-deterministic.
pub fn format_metric(value: f64) -> String {
    format!("{value:.4}")
}

/// CSV for the per-model best-prompt metrics table (the six metric columns).
pub fn metrics_reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out =
        String::from("model,prompt,recall,specificity,accuracy,balanced_accuracy,precision,f1,support_positive,support_negative\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.model_id,
            r.prompt_id,
            format_metric(r.metrics.recall),
            format_metric(r.metrics.specificity),
            format_metric(r.metrics.accuracy),
            format_metric(r.metrics.balanced_accuracy),
            format_metric(r.metrics.precision),
            format_metric(r.metrics.f1),
            r.support_positive,
            r.support_negative,
        ));
    }
    out
}

/// CSV for bucketed accuracy rows (length or position analyses).
pub fn buckets_to_csv(rows: &[BucketedAccuracy]) -> String {
    let mut out = String::from("dimension,bucket,model,accuracy,sample_count\n");
    for row in rows {
        let dim = match row.dimension {
            BucketDimension::Length => "length",
            BucketDimension::Position => "position",
        };
        out.push_str(&format!(
            "{dim},{},{},{},{}\n",
            row.bucket,
            row.model_id,
            format_metric(row.accuracy),
            row.sample_count
        ));
    }
    out
}

/// CSV for the length histogram.
pub fn histogram_to_csv(rows: &[LengthHistogramRow]) -> String {
    let mut out = String::from("bucket,bucket_start,count\n");
    for row in rows {
        out.push_str(&format!("{},{},{}\n", row.bucket, row.bucket_start, row.count));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_correct_positive() {
        let cm = confusion(&[(GoldLabel::Inclusive, Prediction::Inclusive)]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(1, 0, 0, 0));
    }

    #[test]
    fn wrong_positive_prediction_is_fp() {
        let cm = confusion(&[(GoldLabel::NonInclusive, Prediction::Inclusive)]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(0, 0, 1, 0));
    }

    #[test]
    fn undetermined_scores_as_wrong_for_the_true_class() {
        let cm = confusion(&[
            (GoldLabel::Inclusive, Prediction::Undetermined),
            (GoldLabel::NonInclusive, Prediction::Undetermined),
        ])
        .unwrap();
        assert_eq!(cm, ConfusionMatrix::new(0, 1, 1, 0));
    }

    #[test]
    fn thousand_pairs_match_independent_tally() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let pairs: Vec<(GoldLabel, Prediction)> = (0..1000)
            .map(|_| {
                let gold = if rng.random_bool(0.5) {
                    GoldLabel::Inclusive
                } else {
                    GoldLabel::NonInclusive
                };
                let pred = match rng.random_range(0..3) {
                    0 => Prediction::Inclusive,
                    1 => Prediction::NonInclusive,
                    _ => Prediction::Undetermined,
                };
                (gold, pred)
            })
            .collect();
        // Independent tally with plain counters.
        let (mut tp, mut fn_, mut fp, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for &(g, p) in &pairs {
            match (g, p) {
                (GoldLabel::Inclusive, Prediction::Inclusive) => tp += 1,
                (GoldLabel::Inclusive, Prediction::NonInclusive)
                | (GoldLabel::Inclusive, Prediction::Undetermined) => fn_ += 1,
                (GoldLabel::NonInclusive, Prediction::NonInclusive) => tn += 1,
                (GoldLabel::NonInclusive, Prediction::Inclusive)
                | (GoldLabel::NonInclusive, Prediction::Undetermined) => fp += 1,
            }
        }
        assert_eq!(confusion(&pairs).unwrap(), ConfusionMatrix::new(tp, fn_, fp, tn));
    }

    /// Build a matrix whose recall and specificity hit the requested
    /// 3-decimal values exactly (supports of 1000 make the rounding exact).
    fn cm_for_recall_specificity(recall: f64, specificity: f64) -> ConfusionMatrix {
        let tp = (recall * 1000.0).round() as u64;
        let tn = (specificity * 1000.0).round() as u64;
        ConfusionMatrix::new(tp, 1000 - tp, 1000 - tn, tn)
    }

    #[test]
    fn bacc_reproduces_published_rows() {
        // (recall, specificity, printed bACC)
        for (recall, specificity, bacc) in [
            (0.990, 0.992, 0.991),
            (0.950, 0.177, 0.563),
            (1.000, 0.023, 0.512),
        ] {
            let m = metrics(&cm_for_recall_specificity(recall, specificity)).unwrap();
            assert!(
                (m.balanced_accuracy - bacc).abs() <= 0.0015,
                "bACC for r={recall} s={specificity}: got {}",
                m.balanced_accuracy
            );
        }
    }

    #[test]
    fn f1_reproduces_published_rows() {
        // Exact-rational construction: precision = p/1000, recall = r/1000.
        let cm_for_precision_recall = |precision: f64, recall: f64| {
            let p = (precision * 1000.0).round() as u64;
            let r = (recall * 1000.0).round() as u64;
            ConfusionMatrix::new(p * r, (1000 - r) * p, (1000 - p) * r, 1000)
        };
        for (precision, recall, f1) in [(0.997, 0.990, 0.993), (0.732, 0.950, 0.827)] {
            let m = metrics(&cm_for_precision_recall(precision, recall)).unwrap();
            assert!((m.precision - precision).abs() < 1e-9);
            assert!((m.recall - recall).abs() < 1e-9);
            assert!(
                (m.f1 - f1).abs() <= 0.0015,
                "F1 for p={precision} r={recall}: got {}",
                m.f1
            );
        }
    }

    #[test]
    fn perfect_classifier_scores_one_everywhere() {
        let m = metrics(&ConfusionMatrix::new(1, 0, 0, 1)).unwrap();
        for value in [m.recall, m.specificity, m.accuracy, m.balanced_accuracy, m.precision, m.f1] {
            assert_eq!(value, 1.0);
        }
        assert!(m.degenerate.is_empty());
    }

    #[test]
    fn degenerate_ratios_flag_instead_of_failing() {
        // No gold positives at all: recall and precision are 0/0.
        let m = metrics(&ConfusionMatrix::new(0, 0, 0, 5)).unwrap();
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.degenerate.contains(&"recall".to_string()));
        assert!(m.degenerate.contains(&"precision".to_string()));
        assert!(m.degenerate.contains(&"f1".to_string()));
        assert!(matches!(
            metrics(&ConfusionMatrix::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    fn report(model: &str, prompt: &str, accuracy: f64) -> MetricsReport {
        MetricsReport {
            model_id: model.into(),
            prompt_id: prompt.into(),
            metrics: Metrics {
                recall: accuracy,
                specificity: accuracy,
                accuracy,
                balanced_accuracy: accuracy,
                precision: accuracy,
                f1: accuracy,
                degenerate: vec![],
            },
            support_positive: 1,
            support_negative: 1,
        }
    }

    #[test]
    fn table_has_model_by_prompt_shape() {
        let mut reports = Vec::new();
        for model in ["m1", "m2", "m3", "m4", "m5", "m6", "m7"] {
            for prompt in ["fsl#0", "zsl#0", "zsl#1", "zslcot#0"] {
                reports.push(report(model, prompt, 0.5));
            }
        }
        let table = prompt_accuracy_table(&reports).unwrap();
        assert_eq!(table.models.len(), 7);
        assert_eq!(table.prompts.len(), 4);
        assert_eq!(table.cells.len(), 28);
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 8); // header + 7 model rows
        assert!(csv.starts_with("model,fsl#0,zsl#0,zsl#1,zslcot#0"));
    }

    #[test]
    fn single_cell_table_works() {
        let table = prompt_accuracy_table(&[report("m", "zsl#0", 1.0)]).unwrap();
        assert_eq!(table.cells.len(), 1);
    }

    #[test]
    fn duplicate_cell_is_a_conflict() {
        let err = prompt_accuracy_table(&[report("m", "zsl#0", 0.5), report("m", "zsl#0", 0.6)])
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateReport { .. }));
    }

    #[test]
    fn best_prompt_picks_published_winners() {
        // phi3_finetuned prompt accuracies.
        let phi3 = vec![
            report("phi3_finetuned", "fsl#0", 0.973),
            report("phi3_finetuned", "zsl#0", 0.976),
            report("phi3_finetuned", "zsl#1", 0.921),
            report("phi3_finetuned", "zslcot#0", 0.991),
        ];
        assert_eq!(best_prompt(&phi3).unwrap(), "zslcot#0");
        // gpt_40_mini prompt accuracies.
        let gpt = vec![
            report("gpt_40_mini", "fsl#0", 0.888),
            report("gpt_40_mini", "zsl#0", 0.810),
            report("gpt_40_mini", "zsl#1", 0.631),
            report("gpt_40_mini", "zslcot#0", 0.820),
        ];
        assert_eq!(best_prompt(&gpt).unwrap(), "fsl#0");
    }

    #[test]
    fn best_prompt_ties_break_lexicographically() {
        let tied = vec![
            report("m", "zsl#0", 0.8),
            report("m", "fsl#0", 0.8),
            report("m", "zslcot#0", 0.8),
            report("m", "zsl#1", 0.8),
        ];
        assert_eq!(best_prompt(&tied).unwrap(), "fsl#0");
    }

    #[test]
    fn best_prompt_is_argmax_invariant_under_monotone_rescale() {
        let base = vec![
            report("m", "fsl#0", 0.61),
            report("m", "zsl#0", 0.55),
            report("m", "zslcot#0", 0.60),
        ];
        let rescaled: Vec<MetricsReport> = base
            .iter()
            .map(|r| report("m", &r.prompt_id, r.metrics.accuracy * 0.5 + 0.2))
            .collect();
        assert_eq!(best_prompt(&base).unwrap(), best_prompt(&rescaled).unwrap());
    }

    #[test]
    fn distribution_counts_and_ratio() {
        let dist = label_distribution(&[
            Prediction::Inclusive,
            Prediction::Inclusive,
            Prediction::NonInclusive,
        ])
        .unwrap();
        assert_eq!(dist.inclusive, 2);
        assert_eq!(dist.noninclusive, 1);
        assert_eq!(dist.undetermined, 0);
        assert_eq!(dist.inclusive_to_noninclusive, Some(2.0));
        assert!(dist.warning.is_none());
    }

    #[test]
    fn all_undetermined_batch_warns() {
        let dist = label_distribution(&[Prediction::Undetermined; 4]).unwrap();
        assert!(dist.warning.is_some());
        assert_eq!(dist.inclusive_to_noninclusive, None);
    }

    fn scored(model: &str, wc: usize, pos: TargetPosition, correct: bool) -> ScoredSample {
        ScoredSample {
            model_id: model.into(),
            sample_id: "s".into(),
            word_count: wc,
            target_position: pos,
            gold: GoldLabel::Inclusive,
            prediction: if correct {
                Prediction::Inclusive
            } else {
                Prediction::NonInclusive
            },
        }
    }

    #[test]
    fn narrow_length_range_lands_in_at_most_two_buckets() {
        let rows: Vec<ScoredSample> = (25..35)
            .map(|wc| scored("m", wc, TargetPosition::Start, true))
            .collect();
        let buckets = length_analysis(&rows, 10).unwrap();
        assert!(buckets.len() <= 2);
        assert!(buckets.iter().all(|b| b.bucket == "[20,30)" || b.bucket == "[30,40)"));
        assert_eq!(buckets.iter().map(|b| b.sample_count).sum::<u64>(), 10);
        assert!(buckets.iter().all(|b| b.accuracy == 1.0));
    }

    #[test]
    fn bin_width_one_gives_per_word_count_buckets() {
        let rows = vec![
            scored("m", 3, TargetPosition::Start, true),
            scored("m", 5, TargetPosition::Start, true),
            scored("m", 5, TargetPosition::Start, false),
        ];
        let buckets = length_analysis(&rows, 1).unwrap();
        assert_eq!(buckets.len(), 2);
        assert_eq!(buckets[1].bucket, "[5,6)");
        assert_eq!(buckets[1].accuracy, 0.5);
    }

    #[test]
    fn position_analysis_excludes_none_and_reports_count() {
        let rows = vec![
            scored("m", 10, TargetPosition::Start, true),
            scored("m", 10, TargetPosition::Middle, false),
            scored("m", 10, TargetPosition::End, true),
            scored("m", 10, TargetPosition::None, true),
        ];
        let (buckets, excluded) = position_analysis(&rows);
        assert_eq!(excluded, 1);
        assert_eq!(buckets.len(), 3);
        assert_eq!(buckets[0].bucket, "start");
        assert_eq!(buckets[1].bucket, "middle");
        assert_eq!(buckets[1].accuracy, 0.0);
    }

    #[test]
    fn histogram_covers_all_counts() {
        let rows = length_histogram(&[5, 15, 15, 238], 10).unwrap();
        assert_eq!(rows.iter().map(|r| r.count).sum::<u64>(), 4);
        assert_eq!(rows.last().unwrap().bucket, "[230,240)");
    }

    proptest! {
        /// bACC = (recall+specificity)/2 and
        /// accuracy = prevalence·recall + (1−prevalence)·specificity
        /// hold exactly for every non-degenerate matrix.
        #[test]
        fn metric_identities(tp in 1u64..500, fn_ in 0u64..500, fp in 0u64..500, tn in 1u64..500) {
            let cm = ConfusionMatrix::new(tp, fn_, fp, tn);
            let m = metrics(&cm).unwrap();
            prop_assert!((m.balanced_accuracy - (m.recall + m.specificity) / 2.0).abs() < 1e-12);
            let prevalence = cm.support_positive() as f64 / cm.total() as f64;
            let identity = prevalence * m.recall + (1.0 - prevalence) * m.specificity;
            prop_assert!((m.accuracy - identity).abs() < 1e-12);
        }

        /// Every scored sample lands in exactly one length bucket and at most
        /// one position bucket.
        #[test]
        fn bucket_partition(word_counts in prop::collection::vec(0usize..260, 1..50),
                            bin_width in 1usize..25) {
            let rows: Vec<ScoredSample> = word_counts
                .iter()
                .enumerate()
                .map(|(i, &wc)| {
                    let pos = match i % 4 {
                        0 => TargetPosition::Start,
                        1 => TargetPosition::Middle,
                        2 => TargetPosition::End,
                        _ => TargetPosition::None,
                    };
                    scored("m", wc, pos, true)
                })
                .collect();
            let length = length_analysis(&rows, bin_width).unwrap();
            prop_assert_eq!(
                length.iter().map(|b| b.sample_count).sum::<u64>(),
                rows.len() as u64
            );
            let (positions, excluded) = position_analysis(&rows);
            prop_assert_eq!(
                positions.iter().map(|b| b.sample_count).sum::<u64>() + excluded,
                rows.len() as u64
            );
        }
    }
}
