use std::str::FromStr;

use super::{softmax, GestureDataset};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::nn::Tensor;

/// How per-step predictions combine into one sequence prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Argmax of the softmax averaged over all steps.
    #[default]
    MeanSoftmax,
    /// Most frequent per-step argmax; ties go to the lower class index.
    MajorityVote,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-softmax" => Ok(Self::MeanSoftmax),
            "majority-vote" => Ok(Self::MajorityVote),
            _ => Err(Error::Validation(format!("unknown aggregation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Fraction of (sequence, step) pairs whose own prediction is correct.
    pub per_frame_acc: f64,
    /// Fraction of sequences whose aggregated prediction is correct.
    pub per_sequence_acc: f64,
    /// `confusion[true][predicted]`, counted per sequence.
    pub confusion: Vec<Vec<usize>>,
    pub sequences: usize,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-step argmax predictions and the aggregated sequence prediction.
pub(crate) fn predict(logits: &Tensor, classes: usize, agg: Aggregation) -> (Vec<usize>, usize) {
    let steps: Vec<usize> = logits.data().chunks(classes).map(argmax).collect();
    let seq = match agg {
        Aggregation::MeanSoftmax => {
            let mut mean = vec![0.0; classes];
            for row in logits.data().chunks(classes) {
                for (m, p) in mean.iter_mut().zip(softmax(row)) {
                    *m += p;
                }
            }
            argmax(&mean)
        }
        Aggregation::MajorityVote => {
            let mut votes = vec![0.0; classes];
            steps.iter().for_each(|&c| votes[c] += 1.0);
            argmax(&votes)
        }
    };
    (steps, seq)
}

/// Metrics from precomputed `T x K` logits and their labels.
pub fn evaluate_logits(
    outputs: &[(Tensor, usize)],
    classes: usize,
    agg: Aggregation,
) -> Evaluation {
    let mut confusion = vec![vec![0; classes]; classes];
    let (mut frame_hits, mut frames, mut seq_hits) = (0usize, 0usize, 0usize);
    for (logits, label) in outputs {
        let (steps, seq) = predict(logits, classes, agg);
        frame_hits += steps.iter().filter(|&&p| p == *label).count();
        frames += steps.len();
        seq_hits += usize::from(seq == *label);
        confusion[*label][seq] += 1;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Evaluation {
        per_frame_acc: ratio(frame_hits, frames),
        per_sequence_acc: ratio(seq_hits, outputs.len()),
        confusion,
        sequences: outputs.len(),
    }
}

pub fn evaluate(net: &Network, ds: &GestureDataset, agg: Aggregation) -> Result<Evaluation> {
    let outputs = ds
        .sequences
        .iter()
        .map(|s| Ok((net.forward_sequence(&s.frames)?, s.label)))
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate_logits(
        &outputs,
        ds.class_count.max(net.config.classes),
        agg,
    ))
}
