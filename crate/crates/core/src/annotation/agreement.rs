use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kappa::{cohen_kappa, KappaInput};
use super::queue::AnnotationRecord;
use super::AnnotationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Stance,
    Topic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Samples with at least two human labels.
    pub items: usize,
    pub kappa: BTreeMap<Dimension, f64>,
    pub average: f64,
}

/// Kappa between the first two annotators of every dually labelled sample.
///
/// Records are grouped by sample in order of appearance; the first two records
/// of each sample form one pair. Third-annotator verdicts are ignored.
pub fn compute_agreement_report(
    records: &[AnnotationRecord],
    dimensions: &[Dimension],
) -> Result<AgreementReport, AnnotationError> {
    let mut by_sample: Vec<(&str, Vec<&AnnotationRecord>)> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        let slot = *index.entry(&r.sample_id).or_insert_with(|| {
            by_sample.push((&r.sample_id, Vec::new()));
            by_sample.len() - 1
        });
        by_sample[slot].1.push(r);
    }
    let dual: Vec<(&AnnotationRecord, &AnnotationRecord)> = by_sample
        .iter()
        .filter(|(_, rs)| rs.len() >= 2)
        .map(|(_, rs)| (rs[0], rs[1]))
        .collect();
    if dual.is_empty() {
        return Err(AnnotationError::NoDualAnnotations);
    }
    let dims: Vec<Dimension> = if dimensions.is_empty() {
        vec![Dimension::Stance]
    } else {
        dimensions.to_vec()
    };
    let mut kappa = BTreeMap::new();
    for d in dims {
        let value = match d {
            Dimension::Stance => {
                cohen_kappa(&dual.iter().map(|(a, b)| (a.stance, b.stance)).collect::<KappaInput<_>>())?
            }
            Dimension::Topic => {
                cohen_kappa(&dual.iter().map(|(a, b)| (a.topic, b.topic)).collect::<KappaInput<_>>())?
            }
        };
        kappa.insert(d, value);
    }
    let average = kappa.values().sum::<f64>() / kappa.len() as f64;
    Ok(AgreementReport {
        items: dual.len(),
        kappa,
        average,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{StanceLabel, TopicCategory};
    use chrono::{TimeZone, Utc};

    fn rec(annotator: &str, sample: usize, stance: StanceLabel, topic: TopicCategory) -> AnnotationRecord {
        AnnotationRecord {
            annotator_id: annotator.into(),
            sample_id: format!("s{sample}"),
            stance,
            topic,
            style: None,
            timestamp: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    use StanceLabel::{Against as A, Favor as F};

    #[test]
    fn always_agreeing_annotators() {
        let mut records = Vec::new();
        for i in 0..20 {
            let s = if i % 3 == 0 { F } else { A };
            records.push(rec("x", i, s, TopicCategory::Other));
            records.push(rec("y", i, s, TopicCategory::Other));
        }
        let r = compute_agreement_report(&records, &[Dimension::Stance, Dimension::Topic]).unwrap();
        assert_eq!(r.kappa[&Dimension::Stance], 1.0);
        // Single topic on both sides is the degenerate p_e = 1 case.
        assert_eq!(r.kappa[&Dimension::Topic], 1.0);
        assert_eq!(r.average, 1.0);
        assert_eq!(r.items, 20);
    }

    #[test]
    fn known_contingency_table() {
        // [[20, 5], [10, 15]] with rows = first annotator.
        let cells = [(F, F, 20), (F, A, 5), (A, F, 10), (A, A, 15)];
        let mut records = Vec::new();
        let mut i = 0;
        for (a, b, count) in cells {
            for _ in 0..count {
                records.push(rec("x", i, a, TopicCategory::Other));
                records.push(rec("y", i, b, TopicCategory::Other));
                // third annotator does not enter the statistic
                if a != b {
                    records.push(rec("z", i, a, TopicCategory::Other));
                }
                i += 1;
            }
        }
        let r = compute_agreement_report(&records, &[Dimension::Stance]).unwrap();
        assert!((r.kappa[&Dimension::Stance] - 0.4).abs() < 1e-12);
        assert_eq!(r.items, 50);
    }

    #[test]
    fn no_dual_annotations() {
        let records = vec![rec("x", 0, F, TopicCategory::Other)];
        assert!(matches!(
            compute_agreement_report(&records, &[]),
            Err(AnnotationError::NoDualAnnotations)
        ));
    }
}
