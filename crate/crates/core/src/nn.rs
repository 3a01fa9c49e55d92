//! Forward-only inference for bias-free leaky-ReLU perceptrons.
//!
//! A network is fully described by its [`Arch`] and one flat weight vector.
//! The vector holds the layer matrices `W_1..W_K` back to back, each stored
//! row-major with shape `(widths[k+1], widths[k])`. The leaky ReLU is applied
//! after every layer, including the output layer, and the predicted label is
//! the index of the larger of the two outputs (ties go to label 0).

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::{Error, Result};

pub const DEFAULT_LEAKINESS: f64 = 0.1;

/// Tolerance on the Euclidean norm of a [`WeightVector`].
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArchRepr", into = "ArchRepr")]
pub struct Arch {
    widths: Vec<usize>,
    leakiness: f64,
}

#[derive(Serialize, Deserialize)]
struct ArchRepr {
    layer_widths: Vec<usize>,
    #[serde(default = "default_leakiness")]
    leakiness: f64,
}

fn default_leakiness() -> f64 {
    DEFAULT_LEAKINESS
}

impl TryFrom<ArchRepr> for Arch {
    type Error = Error;

    fn try_from(repr: ArchRepr) -> Result<Self> {
        Arch::new(repr.layer_widths, repr.leakiness)
    }
}

impl From<Arch> for ArchRepr {
    fn from(arch: Arch) -> Self {
        ArchRepr {
            layer_widths: arch.widths,
            leakiness: arch.leakiness,
        }
    }
}

impl Arch {
    pub fn new(widths: Vec<usize>, leakiness: f64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArch(format!(
                "need at least an input and an output layer, got {} widths",
                widths.len()
            )));
        }
        if let Some(pos) = widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidArch(format!("layer {pos} has width 0")));
        }
        if widths[widths.len() - 1] != 2 {
            return Err(Error::InvalidArch(format!(
                "output width must be 2, got {}",
                widths[widths.len() - 1]
            )));
        }
        if !(leakiness > 0.0 && leakiness < 1.0) {
            return Err(Error::InvalidArch(format!(
                "leakiness must lie in (0, 1), got {leakiness}"
            )));
        }
        Ok(Arch { widths, leakiness })
    }

    /// Architecture with the default 10% leakiness.
    pub fn with_widths(widths: &[usize]) -> Result<Self> {
        Arch::new(widths.to_vec(), DEFAULT_LEAKINESS)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn leakiness(&self) -> f64 {
        self.leakiness
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Number of weight matrices.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(0)
    }

    pub fn weight_count(&self) -> usize {
        self.widths.windows(2).map(|p| p[0] * p[1]).sum()
    }

    /// `(offset, rows, cols)` of each layer block inside the flat weight vector.
    pub fn layer_blocks(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.widths.windows(2).scan(0usize, |offset, p| {
            let start = *offset;
            *offset += p[0] * p[1];
            Some((start, p[1], p[0]))
        })
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        write!(f, "[{}]", widths.join(","))
    }
}

pub fn weight_count(arch: &Arch) -> usize {
    arch.weight_count()
}

/// A point on the unit hypersphere of weight space.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Wraps `values`, which must already have unit norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let norm = euclidean_norm(&values);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Precondition(format!("weight vector norm is {norm}, expected 1")));
        }
        Ok(WeightVector(values))
    }

    /// Projects `values` onto the unit sphere.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = euclidean_norm(&values);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Precondition(format!("cannot normalize a vector of norm {norm}")));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(WeightVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        euclidean_norm(&self.0)
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for WeightVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn euclidean_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline(always)]
fn leaky(s: f64, leakiness: f64) -> f64 {
    if s >= 0.0 {
        s
    } else {
        leakiness * s
    }
}

#[inline(always)]
fn argmax2(y0: f64, y1: f64) -> u8 {
    u8::from(y1 > y0)
}

fn check_weights(arch: &Arch, w: &[f64]) -> Result<()> {
    let expected = arch.weight_count();
    if w.len() != expected {
        return Err(Error::Shape { expected, got: w.len() });
    }
    Ok(())
}

fn check_input(arch: &Arch, x: &[f64]) -> Result<()> {
    if x.len() != arch.input_dim() {
        return Err(Error::Shape {
            expected: arch.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Network output for a single input. `w` need not be normalized.
pub fn forward(arch: &Arch, w: &[f64], x: &[f64]) -> Result<[f64; 2]> {
    check_weights(arch, w)?;
    check_input(arch, x)?;
    let mut eval = Evaluator::new(arch);
    Ok(eval.forward_unchecked(w, x))
}

pub fn predict(arch: &Arch, w: &[f64], x: &[f64]) -> Result<u8> {
    let [y0, y1] = forward(arch, w, x)?;
    Ok(argmax2(y0, y1))
}

/// Fraction of samples in `data` that the classifier gets wrong.
pub fn empirical_error(arch: &Arch, w: &[f64], data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_weights(arch, w)?;
    check_input(arch, data.input(0))?;
    let mut eval = Evaluator::new(arch);
    let wrong = data.iter().filter(|(x, y)| eval.predict_unchecked(w, x) != *y).count();
    Ok(wrong as f64 / data.len() as f64)
}

/// Allocation-free single-sample evaluator with reusable scratch space.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    arch: &'a Arch,
    front: Vec<f64>,
    back: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(arch: &'a Arch) -> Self {
        let width = arch.max_width();
        Evaluator {
            arch,
            front: vec![0.0; width],
            back: vec![0.0; width],
        }
    }

    pub fn arch(&self) -> &Arch {
        self.arch
    }

    /// Caller guarantees `w` and `x` have the lengths the architecture expects.
    pub fn forward_unchecked(&mut self, w: &[f64], x: &[f64]) -> [f64; 2] {
        let leak = self.arch.leakiness;
        self.front[..x.len()].copy_from_slice(x);
        for (offset, rows, cols) in self.arch.layer_blocks() {
            let block = &w[offset..offset + rows * cols];
            let input = &self.front[..cols];
            for (out, row) in self.back[..rows].iter_mut().zip(block.chunks_exact(cols)) {
                let mut acc = 0.0;
                for (wi, xi) in row.iter().zip(input) {
                    acc += wi * xi;
                }
                *out = leaky(acc, leak);
            }
            std::mem::swap(&mut self.front, &mut self.back);
        }
        [self.front[0], self.front[1]]
    }

    pub fn predict_unchecked(&mut self, w: &[f64], x: &[f64]) -> u8 {
        let [y0, y1] = self.forward_unchecked(w, x);
        argmax2(y0, y1)
    }

    /// True when every sample of `data` is classified correctly. Stops at the
    /// first mistake; an empty dataset is always fitted.
    pub fn fits(&mut self, w: &[f64], data: &LabeledDataset) -> bool {
        data.iter().all(|(x, y)| self.predict_unchecked(w, x) == y)
    }
}

/// Samples per packed block in [`PackedDataset`].
pub const LANES: usize = 32;

/// A dataset re-laid out feature-major in blocks of [`LANES`] samples so a
/// whole block moves through each layer at once.
#[derive(Debug, Clone)]
pub struct PackedDataset {
    dim: usize,
    len: usize,
    blocks: Vec<f64>,
    labels: Vec<u8>,
}

impl PackedDataset {
    pub fn new(data: &LabeledDataset) -> Self {
        let dim = data.dim();
        let len = data.len();
        let block_count = len.div_ceil(LANES);
        let mut blocks = vec![0.0; block_count * dim * LANES];
        let mut labels = vec![0u8; block_count * LANES];
        for (i, (x, y)) in data.iter().enumerate() {
            let (b, lane) = (i / LANES, i % LANES);
            let base = b * dim * LANES;
            for (f, v) in x.iter().enumerate() {
                blocks[base + f * LANES + lane] = *v;
            }
            labels[i] = y;
        }
        PackedDataset {
            dim,
            len,
            blocks,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn block_count(&self) -> usize {
        self.len.div_ceil(LANES)
    }
}

/// Counts misclassifications over a [`PackedDataset`]. Produces exactly the
/// same predictions as [`Evaluator`] (same summation order per sample).
#[derive(Debug, Clone)]
pub struct BatchEvaluator<'a> {
    arch: &'a Arch,
    front: Vec<f64>,
    back: Vec<f64>,
}

impl<'a> BatchEvaluator<'a> {
    pub fn new(arch: &'a Arch) -> Self {
        let width = arch.max_width();
        BatchEvaluator {
            arch,
            front: vec![0.0; width * LANES],
            back: vec![0.0; width * LANES],
        }
    }

    /// Number of misclassified samples. With `stop_at = Some(k)` counting
    /// ends as soon as `k` errors are seen (the result is then `>= k`).
    pub fn count_errors(&mut self, w: &[f64], data: &PackedDataset, stop_at: Option<usize>) -> usize {
        debug_assert_eq!(data.dim, self.arch.input_dim());
        debug_assert_eq!(w.len(), self.arch.weight_count());
        let leak = self.arch.leakiness;
        let stride = data.dim * LANES;
        let mut errors = 0;
        for b in 0..data.block_count() {
            let input = &data.blocks[b * stride..(b + 1) * stride];
            let mut first = true;
            for (offset, rows, cols) in self.arch.layer_blocks() {
                let block = &w[offset..offset + rows * cols];
                let src: &[f64] = if first { input } else { &self.front[..cols * LANES] };
                for (r, row) in block.chunks_exact(cols).enumerate() {
                    let mut acc = [0.0f64; LANES];
                    for (c, &wc) in row.iter().enumerate() {
                        let x: &[f64; LANES] = src[c * LANES..(c + 1) * LANES].try_into().unwrap();
                        for l in 0..LANES {
                            acc[l] += wc * x[l];
                        }
                    }
                    let out = &mut self.back[r * LANES..(r + 1) * LANES];
                    for l in 0..LANES {
                        out[l] = leaky(acc[l], leak);
                    }
                }
                first = false;
                std::mem::swap(&mut self.front, &mut self.back);
            }
            let valid = (data.len - b * LANES).min(LANES);
            let labels = &data.labels[b * LANES..b * LANES + valid];
            for (l, &y) in labels.iter().enumerate() {
                if argmax2(self.front[l], self.front[LANES + l]) != y {
                    errors += 1;
                }
            }
            if let Some(k) = stop_at {
                if errors >= k {
                    return errors;
                }
            }
        }
        errors
    }

    pub fn error_rate(&mut self, w: &[f64], data: &PackedDataset) -> f64 {
        self.count_errors(w, data, None) as f64 / data.len as f64
    }
}
