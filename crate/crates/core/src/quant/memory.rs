use std::fmt;

use crate::error::{Error, Result};
use crate::model::Network;
use crate::nn::{Layer, Sequential};

/// Fused group of layers whose intermediate results never hit a full buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryBlock {
    pub name: String,
    /// Layer names fused into this block, in execution order.
    pub layers: Vec<String>,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    pub input_bytes: usize,
    pub output_bytes: usize,
    /// Input and output buffers live at the same time.
    pub live_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryPlan {
    pub activation_bits: usize,
    pub blocks: Vec<MemoryBlock>,
    pub peak_bytes: usize,
    /// Index of the first block attaining the peak.
    pub peak_block: usize,
}

fn bytes(shape: &[usize], bits: usize) -> usize {
    (shape.iter().product::<usize>() * bits).div_ceil(8)
}

/// Groups each weighted layer with the ReLU / pooling / flatten layers that
/// follow it; the CNN is planned for one frame, the TCN for the whole window.
fn plan_part(
    seq: &Sequential,
    input: &[usize],
    part: &str,
    bits: usize,
    blocks: &mut Vec<MemoryBlock>,
) -> Result<()> {
    let chain = seq.shape_chain(input)?;
    let mut i = 0;
    while i < seq.layers.len() {
        let start = i;
        i += 1;
        while i < seq.layers.len()
            && matches!(
                seq.layers[i],
                Layer::Relu | Layer::MaxPool2d(_) | Layer::Flatten
            )
        {
            i += 1;
        }
        let (input_shape, output_shape) = (chain[start].clone(), chain[i].clone());
        let (input_bytes, output_bytes) = (bytes(&input_shape, bits), bytes(&output_shape, bits));
        blocks.push(MemoryBlock {
            name: format!(
                "{part} block {}",
                blocks.iter().filter(|b| b.name.starts_with(part)).count() + 1
            ),
            layers: seq.layers[start..i]
                .iter()
                .map(|l| l.spec().kind.to_string())
                .collect(),
            input_shape,
            output_shape,
            input_bytes,
            output_bytes,
            live_bytes: input_bytes + output_bytes,
        });
    }
    Ok(())
}

/// Static activation buffer plan: peak of input + output bytes over fused blocks.
pub fn memory_plan(net: &Network, activation_bits: usize) -> Result<MemoryPlan> {
    if activation_bits == 0 {
        return Err(Error::Validation(
            "activation width must be at least 1 bit".into(),
        ));
    }
    let mut blocks = Vec::new();
    plan_part(
        &net.cnn,
        &net.frame_shape(),
        "cnn",
        activation_bits,
        &mut blocks,
    )?;
    plan_part(
        &net.tcn,
        &[net.config.time_steps, net.feature_width()],
        "tcn",
        activation_bits,
        &mut blocks,
    )?;
    let (peak_block, peak_bytes) =
        blocks
            .iter()
            .map(|b| b.live_bytes)
            .enumerate()
            .fold(
                (0, 0),
                |best, (i, v)| if v > best.1 { (i, v) } else { best },
            );
    Ok(MemoryPlan {
        activation_bits,
        blocks,
        peak_bytes,
        peak_block,
    })
}

impl fmt::Display for MemoryPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims = |s: &[usize]| {
            s.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x")
        };
        writeln!(
            f,
            "{:<12} {:<40} {:>12} {:>12} {:>10} {:>10} {:>10}",
            "block", "layers", "input", "output", "in B", "out B", "live B"
        )?;
        for (i, b) in self.blocks.iter().enumerate() {
            writeln!(
                f,
                "{:<12} {:<40} {:>12} {:>12} {:>10} {:>10} {:>10}{}",
                b.name,
                b.layers.join(" + "),
                dims(&b.input_shape),
                dims(&b.output_shape),
                b.input_bytes,
                b.output_bytes,
                b.live_bytes,
                if i == self.peak_block {
                    "  <- peak"
                } else {
                    ""
                }
            )?;
        }
        write!(
            f,
            "peak: {} bytes ({:.1} KiB, {:.1} Kibit) at {}-bit activations",
            self.peak_bytes,
            self.peak_bytes as f64 / 1024.0,
            (self.peak_bytes * 8) as f64 / 1024.0,
            self.activation_bits
        )
    }
}
