use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::IntentionClass;

/// Confusion matrix (rows = truth, columns = prediction, both ordered
/// pull, idle, push) with derived accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub confusion: [[u64; 3]; 3],
    pub accuracy: f64,
    /// Mean recall over classes present in the labels.
    pub balanced_accuracy: f64,
    /// Classes with no ground-truth samples, left out of the balanced score.
    pub absent_classes: Vec<IntentionClass>,
}

impl ClassificationMetrics {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn recall(&self, class: IntentionClass) -> Option<f64> {
        let row = &self.confusion[class.index()];
        let n: u64 = row.iter().sum();
        (n > 0).then(|| row[class.index()] as f64 / n as f64)
    }
}

pub fn classification_metrics(predictions: &[IntentionClass], labels: &[IntentionClass]) -> Result<ClassificationMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = [[0u64; 3]; 3];
    for (p, l) in predictions.iter().zip(labels) {
        confusion[l.index()][p.index()] += 1;
    }
    let total = labels.len() as u64;
    let correct: u64 = (0..3).map(|i| confusion[i][i]).sum();
    let accuracy = if total > 0 { correct as f64 / total as f64 } else { 0.0 };
    let mut recalls = Vec::new();
    let mut absent_classes = Vec::new();
    for class in IntentionClass::ALL {
        let row: u64 = confusion[class.index()].iter().sum();
        if row == 0 {
            absent_classes.push(class);
        } else {
            recalls.push(confusion[class.index()][class.index()] as f64 / row as f64);
        }
    }
    let balanced_accuracy = if recalls.is_empty() {
        0.0
    } else {
        recalls.iter().sum::<f64>() / recalls.len() as f64
    };
    Ok(ClassificationMetrics {
        confusion,
        accuracy,
        balanced_accuracy,
        absent_classes,
    })
}
