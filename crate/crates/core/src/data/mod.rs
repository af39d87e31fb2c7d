//! Datasets and result files.

mod idx;
mod report;
mod synth;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use idx::{
    load_idx, load_mnist, parse_idx_images, parse_idx_labels, MnistSplit, IMAGE_MAGIC, LABEL_MAGIC,
};
pub use report::{
    format_float, read_report, read_scores, report_rows, score_rows, write_bench,
    write_file_atomic, write_report, write_scores, BenchRow, Format, ReportRow, ScoreRow,
};
pub use synth::synth_blobs;

/// Inputs of a common shape with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    example_shape: Vec<usize>,
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(
        example_shape: Vec<usize>,
        inputs: Vec<Tensor>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: inputs.len(),
                labels: labels.len(),
            });
        }
        for x in &inputs {
            if x.shape() != example_shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    left: example_shape,
                    right: x.shape().to_vec(),
                });
            }
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::BadLabel { index, label });
        }
        Ok(Self {
            example_shape,
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn example_shape(&self) -> &[usize] {
        &self.example_shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn check_shape(&self, shape: &[usize]) -> Result<()> {
        if self.example_shape != shape {
            return Err(Error::ShapeMismatch {
                left: shape.to_vec(),
                right: self.example_shape.clone(),
            });
        }
        Ok(())
    }

    /// Examples `start..start + count`, clipped to the dataset.
    pub fn slice(&self, start: usize, count: usize) -> Self {
        let start = start.min(self.len());
        let end = start.saturating_add(count).min(self.len());
        Self {
            example_shape: self.example_shape.clone(),
            inputs: self.inputs[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
            classes: self.classes,
        }
    }
}
