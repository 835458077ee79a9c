use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::features::{compute_rfdm, normalize_frame, FeatureFrame};
use crate::radar_io::{frame_stream, SweepRecording};

/// `T` consecutive feature frames with one gesture label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<FeatureFrame>,
    pub label: usize,
    pub user_id: u32,
    pub session_id: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GestureDataset {
    pub sequences: Vec<Sequence>,
    pub class_count: usize,
}

/// Bookkeeping from [`GestureDataset::from_recordings`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DatasetStats {
    pub recordings: usize,
    /// Recordings shorter than `tw * time_steps` sweeps.
    pub dropped_short: usize,
    pub dropped_unlabeled: usize,
    pub frames: usize,
    pub sequences: usize,
}

impl GestureDataset {
    pub fn new(sequences: Vec<Sequence>, class_count: usize) -> Result<Self> {
        if let Some(first) = sequences.first() {
            let (t, shape) = (
                first.frames.len(),
                first.frames.first().map(FeatureFrame::shape),
            );
            for (i, s) in sequences.iter().enumerate() {
                if s.label >= class_count {
                    return Err(Error::Validation(format!(
                        "sequence {i} has label {} but only {class_count} classes",
                        s.label
                    )));
                }
                if s.frames.len() != t || s.frames.first().map(FeatureFrame::shape) != shape {
                    return Err(Error::Validation(format!(
                        "sequence {i} differs in frame count or shape"
                    )));
                }
            }
        }
        Ok(Self {
            sequences,
            class_count,
        })
    }

    /// Frames every recording without overlap, converts each frame to a
    /// normalized RFDM and emits every run of `time_steps` consecutive
    /// frames (sliding by one frame) as a sequence.
    pub fn from_recordings(
        recordings: &[SweepRecording],
        tw: usize,
        time_steps: usize,
        class_count: usize,
    ) -> Result<(Self, DatasetStats)> {
        let mut stats = DatasetStats {
            recordings: recordings.len(),
            ..Default::default()
        };
        let mut sequences = Vec::new();
        for rec in recordings {
            let Some(label) = rec.label else {
                stats.dropped_unlabeled += 1;
                continue;
            };
            if rec.sweeps() < tw * time_steps {
                stats.dropped_short += 1;
                continue;
            }
            let frames = frame_stream(rec, tw, tw)?
                .iter()
                .map(|f| compute_rfdm(f).map(|r| normalize_frame(&r)))
                .collect::<Result<Vec<_>>>()?;
            stats.frames += frames.len();
            for window in frames.windows(time_steps) {
                sequences.push(Sequence {
                    frames: window.to_vec(),
                    label: label as usize,
                    user_id: rec.user_id,
                    session_id: rec.session_id,
                });
            }
        }
        stats.sequences = sequences.len();
        Ok((Self::new(sequences, class_count)?, stats))
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn users(&self) -> Vec<u32> {
        self.sequences
            .iter()
            .map(|s| s.user_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for s in &self.sequences {
            counts[s.label] += 1;
        }
        counts
    }

    pub(crate) fn subset(&self, indices: &[usize]) -> Self {
        Self {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            class_count: self.class_count,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar_io::{synth_recording, SynthTargetSpec};

    fn rec(sweeps: usize, label: Option<u32>) -> SweepRecording {
        let spec = SynthTargetSpec {
            initial_range_m: 0.08,
            ..Default::default()
        };
        let mut r = synth_recording(&spec, sweeps, 16, 160.0, 0).unwrap();
        r.label = label;
        r
    }

    #[test]
    fn sequences_slide_by_one_frame() {
        // 3 s at 160 Hz -> 15 frames -> 11 sequences of 5
        let (ds, stats) = GestureDataset::from_recordings(&[rec(480, Some(1))], 32, 5, 3).unwrap();
        assert_eq!(stats.frames, 15);
        assert_eq!(ds.len(), 11);
        assert_eq!(ds.sequences[1].frames[0], ds.sequences[0].frames[1]);
    }

    #[test]
    fn short_and_unlabeled_recordings_are_counted() {
        let recs = [rec(159, Some(0)), rec(160, Some(0)), rec(200, None)];
        let (ds, stats) = GestureDataset::from_recordings(&recs, 32, 5, 2).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(stats.dropped_short, 1);
        assert_eq!(stats.dropped_unlabeled, 1);
    }

    #[test]
    fn rejects_out_of_range_label() {
        assert!(GestureDataset::from_recordings(&[rec(160, Some(5))], 32, 5, 5).is_err());
    }
}
