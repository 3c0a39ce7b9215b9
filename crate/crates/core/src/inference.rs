//! Forward passes over compiled networks.
//!
//! The dense path is the reference semantics: every layer is a literal
//! matrix-vector product followed by its activation. The structured path
//! reads the same weights but skips everything the construction guarantees
//! to be zero. Both accumulate each row sequentially from zero with the bias
//! added last, so a structured result is bit-identical to the dense one
//! whenever the big-M gates are valid.

use std::borrow::Cow;
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::compiler::{Activation, InputSource, Network, NetworkKind};
use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;
use crate::pwa::EvalResult;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Fp64,
    Fp32,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp64" => Ok(Precision::Fp64),
            "fp32" => Ok(Precision::Fp32),
            _ => Err(Error::InvalidNetwork(format!("unknown precision `{s}` (fp32|fp64)"))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::Fp64 => "fp64",
            Precision::Fp32 => "fp32",
        })
    }
}

/// Scalar type a network can run in.
pub trait Real:
    Copy
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    /// Borrowed when no conversion is needed.
    fn convert(v: &[f64]) -> Cow<'_, [Self]>;
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn convert(v: &[f64]) -> Cow<'_, [Self]> {
        Cow::Borrowed(v)
    }
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn convert(v: &[f64]) -> Cow<'_, [Self]> {
        Cow::Owned(v.iter().map(|&x| x as f32).collect())
    }
}

#[inline]
fn fold_dot<T: Real>(acc: T, w: &[T], x: &[T]) -> T {
    w.iter().zip(x).fold(acc, |s, (&a, &b)| s + a * b)
}

#[inline]
fn activate<T: Real>(act: Activation, z: T) -> T {
    match act {
        Activation::Bsf => {
            if z >= T::ZERO {
                T::ONE
            } else {
                T::ZERO
            }
        }
        Activation::Relu => {
            if z > T::ZERO {
                z
            } else {
                T::ZERO
            }
        }
        Activation::Linear | Activation::HadamardGate => z,
    }
}

fn check_input(net: &Network, x: &[f64]) -> Result<()> {
    check_dim("network input", net.n, x.len())?;
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Index of the exact 1 in a one-hot (or all-zero) vector.
fn one_hot<T: Real>(v: &[T]) -> Option<usize> {
    v.iter().position(|&s| s == T::ONE)
}

struct DenseLayer<'a, T: Real> {
    w: Cow<'a, [T]>,
    b: Cow<'a, [T]>,
    rows: usize,
    cols: usize,
    act: Activation,
    src: InputSource,
}

impl<T: Real> DenseLayer<'_, T> {
    #[inline]
    fn row(&self, r: usize) -> &[T] {
        &self.w[r * self.cols..(r + 1) * self.cols]
    }
}

/// A network with weights converted to the working precision once.
pub struct DenseEngine<'a, T: Real> {
    net: &'a Network,
    layers: Vec<DenseLayer<'a, T>>,
}

impl<'a, T: Real> DenseEngine<'a, T> {
    pub fn new(net: &'a Network) -> Result<Self> {
        net.validate()?;
        let layers = net
            .layers
            .iter()
            .map(|l| DenseLayer {
                w: T::convert(l.weights.as_slice()),
                b: T::convert(&l.bias),
                rows: l.rows(),
                cols: l.cols(),
                act: l.activation,
                src: l.input_source,
            })
            .collect();
        Ok(Self { net, layers })
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    /// Runs every layer, returning all layer outputs.
    pub fn forward_layers(&self, x: &[f64]) -> Result<Vec<Vec<T>>> {
        check_input(self.net, x)?;
        let x: Vec<T> = x.iter().map(|&v| T::from_f64(v)).collect();
        let mut outs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let prev: &[T] = outs.last().map_or(&x, |v| v.as_slice());
            let mut y = Vec::with_capacity(l.rows);
            for r in 0..l.rows {
                let w = l.row(r);
                let v = match l.src {
                    InputSource::Prev => activate(l.act, fold_dot(T::ZERO, w, prev) + l.b[r]),
                    InputSource::Input => activate(l.act, fold_dot(T::ZERO, w, &x) + l.b[r]),
                    InputSource::PrevConcatInput => {
                        let (wp, wx) = w.split_at(prev.len());
                        let acc = fold_dot(fold_dot(T::ZERO, wp, prev), wx, &x);
                        activate(l.act, acc + l.b[r])
                    }
                    InputSource::Selector => {
                        let gate = fold_dot(T::ZERO, w, &outs[2]) + l.b[r];
                        match l.act {
                            Activation::HadamardGate => prev[r] * gate,
                            act => activate(act, gate),
                        }
                    }
                };
                y.push(v);
            }
            outs.push(y);
        }
        Ok(outs)
    }

    pub fn forward(&self, x: &[f64]) -> Result<EvalResult> {
        let outs = self.forward_layers(x)?;
        Ok(self.result_from(&outs))
    }

    fn result_from(&self, outs: &[Vec<T>]) -> EvalResult {
        let out = outs.last().expect("validated network has layers");
        let selected = match self.net.kind {
            NetworkKind::ConstraintChecker => one_hot(&outs[1]),
            _ => one_hot(&outs[2]),
        };
        EvalResult {
            output: out.iter().map(|v| v.to_f64()).collect(),
            region_index: selected.map(|i| self.net.region_order[i]),
        }
    }

    /// Layer-by-layer over the whole batch: each layer is a matrix-matrix
    /// product `X · Wᵀ` with the same per-entry accumulation order as the
    /// single-point path.
    pub fn forward_batch(&self, xs: &Matrix) -> Result<BatchOutput> {
        check_dim("batch columns", self.net.n, xs.cols())?;
        let n_pts = xs.rows();
        if let Some(i) = xs.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i % xs.cols().max(1)));
        }
        let x: Vec<T> = xs.as_slice().iter().map(|&v| T::from_f64(v)).collect();
        let n = self.net.n;
        let mut outs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (prev, pw): (&[T], usize) = match outs.last() {
                Some(v) => (v, v.len() / n_pts.max(1)),
                None => (&x, n),
            };
            let mut y = vec![T::ZERO; n_pts * l.rows];
            for i in 0..n_pts {
                let xi = &x[i * n..(i + 1) * n];
                let pi = &prev[i * pw..(i + 1) * pw];
                let yi = &mut y[i * l.rows..(i + 1) * l.rows];
                for (r, slot) in yi.iter_mut().enumerate() {
                    let w = l.row(r);
                    *slot = match l.src {
                        InputSource::Prev => activate(l.act, fold_dot(T::ZERO, w, pi) + l.b[r]),
                        InputSource::Input => activate(l.act, fold_dot(T::ZERO, w, xi) + l.b[r]),
                        InputSource::PrevConcatInput => {
                            let (wp, wx) = w.split_at(pw);
                            activate(l.act, fold_dot(fold_dot(T::ZERO, wp, pi), wx, xi) + l.b[r])
                        }
                        InputSource::Selector => {
                            let sw = outs[2].len() / n_pts;
                            let si = &outs[2][i * sw..(i + 1) * sw];
                            let gate = fold_dot(T::ZERO, w, si) + l.b[r];
                            match l.act {
                                Activation::HadamardGate => pi[r] * gate,
                                act => activate(act, gate),
                            }
                        }
                    };
                }
            }
            outs.push(y);
        }
        let m = self.layers.last().map_or(0, |l| l.rows);
        let sel_layer = match self.net.kind {
            NetworkKind::ConstraintChecker => 1,
            _ => 2,
        };
        let sw = self.layers[sel_layer].rows;
        let last = outs.last().expect("validated network has layers");
        let outputs = Matrix::from_vec(n_pts, m, last.iter().map(|v| v.to_f64()).collect())?;
        let regions = (0..n_pts)
            .map(|i| one_hot(&outs[sel_layer][i * sw..(i + 1) * sw]).map(|k| self.net.region_order[k]))
            .collect();
        Ok(BatchOutput { outputs, regions })
    }
}

/// Per-layer outputs of one dense forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<Vec<f64>>,
    pub selected_region: Option<usize>,
}

pub fn forward_trace(net: &Network, x: &[f64], prec: Precision) -> Result<ForwardTrace> {
    fn run<T: Real>(net: &Network, x: &[f64]) -> Result<ForwardTrace> {
        let engine = DenseEngine::<T>::new(net)?;
        let outs = engine.forward_layers(x)?;
        let selected_region = engine.result_from(&outs).region_index;
        Ok(ForwardTrace {
            layers: outs
                .into_iter()
                .map(|l| l.into_iter().map(Real::to_f64).collect())
                .collect(),
            selected_region,
        })
    }
    match prec {
        Precision::Fp64 => run::<f64>(net, x),
        Precision::Fp32 => run::<f32>(net, x),
    }
}

/// Reference forward pass.
pub fn forward_dense(net: &Network, x: &[f64], prec: Precision) -> Result<EvalResult> {
    match prec {
        Precision::Fp64 => DenseEngine::<f64>::new(net)?.forward(x),
        Precision::Fp32 => DenseEngine::<f32>::new(net)?.forward(x),
    }
}

/// Gated pair for piece `k`, output row `j`, gathered from layers 4–5.
struct PairPlan<T> {
    gate: [T; 2],
    gain: [Vec<T>; 2],
    bias: [T; 2],
    recombine: [T; 2],
}

/// Affine-bank row for YANN-L, gathered from layers 4–6.
struct BankPlan<T> {
    gain: Vec<T>,
    bias: T,
    gate_weight: T,
    gate_bias: T,
    sum_weight: T,
}

enum Tail<T> {
    Yann(Vec<PairPlan<T>>),
    YannL(Vec<BankPlan<T>>),
    Checker,
}

const CHUNK: usize = 256;

/// Layer 1 with the binary step, from column-major weights. Rows are
/// processed in cache-sized chunks: each chunk runs one axpy sweep per input
/// column, then adds the bias and steps. Per row this is still
/// `((0 + w₀x₀) + w₁x₁ + …) + b`, so results match the dense path bit for bit.
#[inline(always)]
fn step_layer<T: Real>(w1t: &[T], b1: &[T], x: &[T], fired: &mut [u8]) {
    let q = b1.len();
    let mut acc = [T::ZERO; CHUNK];
    for r0 in (0..q).step_by(CHUNK) {
        let len = CHUNK.min(q - r0);
        let acc = &mut acc[..len];
        acc.fill(T::ZERO);
        for (c, &xc) in x.iter().enumerate() {
            let col = &w1t[c * q + r0..c * q + r0 + len];
            for (a, &w) in acc.iter_mut().zip(col) {
                *a = *a + w * xc;
            }
        }
        for ((f, &a), &b) in fired[r0..r0 + len].iter_mut().zip(acc.iter()).zip(&b1[r0..r0 + len]) {
            *f = u8::from(a + b >= T::ZERO);
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn step_layer_avx512<T: Real>(w1t: &[T], b1: &[T], x: &[T], fired: &mut [u8]) {
    step_layer(w1t, b1, x, fired)
}

/// Same kernel compiled for AVX2. Wider vectors only; no FMA contraction,
/// so rounding is unchanged.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn step_layer_avx2<T: Real>(w1t: &[T], b1: &[T], x: &[T], fired: &mut [u8]) {
    step_layer(w1t, b1, x, fired)
}

/// Prepared block-sparse evaluation plan.
///
/// Layer 1 is stored column-major so the `q × n` product runs as `n` axpy
/// sweeps over contiguous memory; the per-row operation order is unchanged.
pub struct StructuredPlan<'a, T: Real> {
    net: &'a Network,
    w1t: Vec<T>,
    b1: Cow<'a, [T]>,
    /// `(start, len, bias)` of each region's block in layer 2.
    blocks: Vec<(usize, usize, T)>,
    /// Number of fired tests that makes each block's indicator exactly 1,
    /// found by evaluating the indicator for every possible count.
    pass_count: Vec<Option<usize>>,
    #[cfg(target_arch = "x86_64")]
    avx2: bool,
    #[cfg(target_arch = "x86_64")]
    avx512: bool,
    tail: Tail<T>,
    out_bias: Vec<T>,
}

impl<'a, T: Real> StructuredPlan<'a, T> {
    pub fn new(net: &'a Network) -> Result<Self> {
        net.validate()?;
        let s = net.structure.as_ref().ok_or(Error::MissingStructure)?;
        let (n, m, p, q) = (net.n, net.m, net.p, net.q);
        let l1 = &net.layers[0];
        let mut w1t = vec![T::ZERO; n * q];
        for r in 0..q {
            for c in 0..n {
                w1t[c * q + r] = T::from_f64(l1.weights[(r, c)]);
            }
        }
        // Layer 2 must be the block-of-ones pattern the plan assumes.
        let l2 = &net.layers[1];
        let mut blocks = Vec::with_capacity(p);
        let mut start = 0;
        for (k, &len) in s.block_sizes.iter().enumerate() {
            let row = l2.weights.row(k);
            let ok = row
                .iter()
                .enumerate()
                .all(|(c, &w)| w == if (start..start + len).contains(&c) { 1.0 } else { 0.0 });
            if !ok {
                return Err(Error::InvalidNetwork(format!(
                    "layer 2 row {k} is not a block indicator"
                )));
            }
            blocks.push((start, len, T::from_f64(l2.bias[k])));
            start += len;
        }
        let mut out_bias = Vec::new();
        let tail = match net.kind {
            NetworkKind::ConstraintChecker => Tail::Checker,
            NetworkKind::Yann => {
                check_selector(net)?;
                let (l4, l5) = (&net.layers[3], &net.layers[4]);
                out_bias = l5.bias.iter().map(|&b| T::from_f64(b)).collect();
                let mut pairs = Vec::with_capacity(m * p);
                for k in 0..p {
                    for j in 0..m {
                        let pos = 2 * (k * m + j);
                        let gather = |r: usize| -> Vec<T> {
                            l4.weights.row(r)[p..].iter().map(|&w| T::from_f64(w)).collect()
                        };
                        pairs.push(PairPlan {
                            gate: [T::from_f64(l4.weights[(pos, k)]), T::from_f64(l4.weights[(pos + 1, k)])],
                            gain: [gather(pos), gather(pos + 1)],
                            bias: [T::from_f64(l4.bias[pos]), T::from_f64(l4.bias[pos + 1])],
                            recombine: [T::from_f64(l5.weights[(j, pos)]), T::from_f64(l5.weights[(j, pos + 1)])],
                        });
                    }
                }
                Tail::Yann(pairs)
            }
            NetworkKind::YannL => {
                check_selector(net)?;
                let (bank, gate, sum) = (&net.layers[3], &net.layers[4], &net.layers[5]);
                out_bias = sum.bias.iter().map(|&b| T::from_f64(b)).collect();
                let mut rows = Vec::with_capacity(m * p);
                for k in 0..p {
                    for j in 0..m {
                        let row = k * m + j;
                        rows.push(BankPlan {
                            gain: bank.weights.row(row).iter().map(|&w| T::from_f64(w)).collect(),
                            bias: T::from_f64(bank.bias[row]),
                            gate_weight: T::from_f64(gate.weights[(row, k)]),
                            gate_bias: T::from_f64(gate.bias[row]),
                            sum_weight: T::from_f64(sum.weights[(j, row)]),
                        });
                    }
                }
                Tail::YannL(rows)
            }
        };
        Ok(Self {
            net,
            w1t,
            b1: T::convert(&l1.bias),
            pass_count: blocks
                .iter()
                .map(|&(_, len, bias)| {
                    (0..=len).find(|&c| activate(Activation::Relu, T::from_f64(c as f64) + bias) == T::ONE)
                })
                .collect(),
            blocks,
            #[cfg(target_arch = "x86_64")]
            avx2: detect_avx2(),
            #[cfg(target_arch = "x86_64")]
            avx512: detect_avx512(),
            tail,
            out_bias,
        })
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    /// First region whose block of layer-1 tests is all ones; `fired`
    /// receives the BSF outputs.
    #[inline]
    fn locate(&self, x: &[T], fired: &mut Vec<u8>) -> Option<usize> {
        let q = self.net.q;
        fired.clear();
        fired.resize(q, 0);
        #[cfg(target_arch = "x86_64")]
        if self.avx512 {
            // SAFETY: set only after runtime detection succeeded.
            unsafe { step_layer_avx512(&self.w1t, &self.b1, x, fired) };
        } else if self.avx2 {
            // SAFETY: as above.
            unsafe { step_layer_avx2(&self.w1t, &self.b1, x, fired) };
        } else {
            step_layer(&self.w1t, &self.b1, x, fired);
        }
        #[cfg(not(target_arch = "x86_64"))]
        step_layer(&self.w1t, &self.b1, x, fired);
        // Layer 2 and the first-one scan. The block sum is an exact integer,
        // so comparing it with the precomputed passing count is the same test
        // as the indicator being 1; the usual all-must-fire case exits at the
        // first test that did not fire.
        self.blocks
            .iter()
            .zip(&self.pass_count)
            .position(|(&(start, len, _), &need)| {
                let block = &fired[start..start + len];
                match need {
                    Some(c) if c == len => block.iter().all(|&f| f == 1),
                    Some(c) => block.iter().filter(|&&f| f == 1).count() == c,
                    None => false,
                }
            })
    }

    #[inline]
    fn indicator(fired: &[u8], bias: T) -> T {
        let count: u32 = fired.iter().map(|&f| u32::from(f)).sum();
        activate(Activation::Relu, T::from_f64(f64::from(count)) + bias)
    }

    /// Allocation-free evaluation: writes the output into `out` and returns
    /// the selected region.
    pub fn forward_into(&self, x: &[f64], scratch: &mut Scratch<T>, out: &mut Vec<f64>) -> Result<Option<usize>> {
        check_input(self.net, x)?;
        let Scratch { x: xt, fired } = scratch;
        xt.clear();
        xt.extend(x.iter().map(|&v| T::from_f64(v)));
        let hit = self.locate(xt, fired);
        self.finish_output(xt, fired, hit, out);
        Ok(hit.map(|k| self.net.region_order[k]))
    }

    fn finish_output(&self, x: &[T], fired: &[u8], hit: Option<usize>, out: &mut Vec<f64>) {
        let m = self.net.m;
        out.clear();
        match &self.tail {
            Tail::Checker => {
                // Every indicator is needed, not just the first.
                out.extend(
                    self.blocks
                        .iter()
                        .map(|&(start, len, bias)| Self::indicator(&fired[start..start + len], bias).to_f64()),
                );
            }
            Tail::Yann(pairs) => {
                for j in 0..m {
                    let mut acc = T::ZERO;
                    if let Some(k) = hit {
                        let pp = &pairs[k * m + j];
                        for s in 0..2 {
                            let z = fold_dot(pp.gate[s], &pp.gain[s], x) + pp.bias[s];
                            acc = acc + pp.recombine[s] * activate(Activation::Relu, z);
                        }
                    }
                    out.push((acc + self.out_bias[j]).to_f64());
                }
            }
            Tail::YannL(rows) => {
                for j in 0..m {
                    let mut acc = T::ZERO;
                    if let Some(k) = hit {
                        let br = &rows[k * m + j];
                        let value = fold_dot(T::ZERO, &br.gain, x) + br.bias;
                        let gate = (T::ZERO + br.gate_weight) + br.gate_bias;
                        acc = acc + br.sum_weight * (value * gate);
                    }
                    out.push((acc + self.out_bias[j]).to_f64());
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<EvalResult> {
        let mut scratch = Scratch::default();
        let mut output = Vec::with_capacity(self.net.m);
        let region_index = self.forward_into(x, &mut scratch, &mut output)?;
        Ok(EvalResult { output, region_index })
    }

    pub fn forward_batch(&self, xs: &Matrix) -> Result<BatchOutput> {
        check_dim("batch columns", self.net.n, xs.cols())?;
        let m = self.net.m;
        let mut outputs = Matrix::zeros(xs.rows(), m);
        let mut regions = Vec::with_capacity(xs.rows());
        let mut scratch = Scratch::default();
        let mut out = Vec::with_capacity(m);
        for i in 0..xs.rows() {
            regions.push(self.forward_into(xs.row(i), &mut scratch, &mut out)?);
            outputs.row_mut(i).copy_from_slice(&out);
        }
        Ok(BatchOutput { outputs, regions })
    }
}

#[cfg(target_arch = "x86_64")]
fn detect_avx2() -> bool {
    std::arch::is_x86_feature_detected!("avx2")
}

#[cfg(target_arch = "x86_64")]
fn detect_avx512() -> bool {
    std::arch::is_x86_feature_detected!("avx512f")
}

/// Reusable buffers for [`StructuredPlan::forward_into`].
#[derive(Debug)]
pub struct Scratch<T> {
    x: Vec<T>,
    fired: Vec<u8>,
}

impl<T> Default for Scratch<T> {
    fn default() -> Self {
        Self {
            x: Vec::new(),
            fired: Vec::new(),
        }
    }
}

fn check_selector(net: &Network) -> Result<()> {
    let l3 = &net.layers[2];
    for i in 0..net.p {
        let row = l3.weights.row(i);
        let ok = row.iter().enumerate().all(|(j, &w)| {
            w == match j.cmp(&i) {
                std::cmp::Ordering::Less => -1.0,
                std::cmp::Ordering::Equal => 1.0,
                std::cmp::Ordering::Greater => 0.0,
            }
        });
        if !ok || l3.bias[i] != 0.0 {
            return Err(Error::InvalidNetwork(format!("layer 3 row {i} is not a first-hit row")));
        }
    }
    Ok(())
}

/// Block-sparse forward pass; equal to [`forward_dense`] whenever the big-M
/// gates are valid.
pub fn forward_structured(net: &Network, x: &[f64], prec: Precision) -> Result<EvalResult> {
    match prec {
        Precision::Fp64 => StructuredPlan::<f64>::new(net)?.forward(x),
        Precision::Fp32 => StructuredPlan::<f32>::new(net)?.forward(x),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    #[default]
    Dense,
    Structured,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutput {
    /// `N × m`.
    pub outputs: Matrix,
    pub regions: Vec<Option<usize>>,
}

pub fn forward_batch(net: &Network, xs: &Matrix, prec: Precision, mode: BatchMode) -> Result<BatchOutput> {
    match (prec, mode) {
        (Precision::Fp64, BatchMode::Dense) => DenseEngine::<f64>::new(net)?.forward_batch(xs),
        (Precision::Fp32, BatchMode::Dense) => DenseEngine::<f32>::new(net)?.forward_batch(xs),
        (Precision::Fp64, BatchMode::Structured) => StructuredPlan::<f64>::new(net)?.forward_batch(xs),
        (Precision::Fp32, BatchMode::Structured) => StructuredPlan::<f32>::new(net)?.forward_batch(xs),
    }
}
