//! Construction of exact networks from a [`PwaFunction`].
//!
//! Every weight is read off the function: nothing is fitted. Compilation is a
//! pure function of its inputs, so identical inputs give bit-identical
//! networks.

mod network;

pub use network::{Activation, InputSource, LayerSpec, Network, NetworkKind, Structure};

use crate::bigm::BigMBound;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pwa::PwaFunction;

/// Layers 1–2: one binary-step neuron per inequality, then one ReLU per
/// region that fires only when all of its inequalities hold.
///
/// The inequality `a·x <= b` becomes the neuron `BSF(−a·x + b)`. Region `s`
/// with `q_s` rows sums its block and subtracts `q_s − 1`; the sum of `q_s`
/// binary values is an exact integer, so the result is exactly 0 or 1.
pub fn build_constraint_layers(f: &PwaFunction) -> Result<(LayerSpec, LayerSpec)> {
    let (n, p, q) = (f.n(), f.p(), f.q());
    let mut w1 = Matrix::zeros(q, n);
    let mut b1 = Vec::with_capacity(q);
    let mut w2 = Matrix::zeros(p, q);
    let mut b2 = Vec::with_capacity(p);
    let mut row = 0;
    for (s, region) in f.regions().iter().enumerate() {
        let qs = region.halfspace_count();
        for (a, b) in region.halfspaces() {
            for (w, &c) in w1.row_mut(row).iter_mut().zip(a) {
                *w = -c;
            }
            b1.push(b);
            w2[(s, row)] = 1.0;
            row += 1;
        }
        b2.push(1.0 - qs as f64);
    }
    Ok((
        LayerSpec::new(w1, b1, Activation::Bsf, InputSource::Prev)?,
        LayerSpec::new(w2, b2, Activation::Relu, InputSource::Prev)?,
    ))
}

/// Layer 3: keeps only the first set bit of a binary vector.
///
/// Row `i` computes `ReLU(d_i − Σ_{l<i} d_l)`, which is 1 exactly when `d_i`
/// is the first 1.
pub fn build_first_hit_layer(p: usize) -> Result<LayerSpec> {
    if p == 0 {
        return Err(Error::InvalidNetwork("selector needs p >= 1".into()));
    }
    let mut w = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..i {
            w[(i, j)] = -1.0;
        }
        w[(i, i)] = 1.0;
    }
    LayerSpec::new(w, vec![0.0; p], Activation::Relu, InputSource::Prev)
}

/// Optional single neuron that outputs 1 iff every entry of a binary vector
/// is 0 (weights all −1, bias 1). Not part of the compiled networks; useful to
/// flag out-of-domain inputs downstream.
pub fn build_all_zero_detector(p: usize) -> Result<LayerSpec> {
    LayerSpec::new(
        Matrix::from_vec(1, p, vec![-1.0; p])?,
        vec![1.0],
        Activation::Relu,
        InputSource::Prev,
    )
}

/// Layers 4–5 with a single gate constant `M`.
pub fn build_gated_affine_layers(f: &PwaFunction, big_m: &BigMBound) -> Result<(LayerSpec, LayerSpec)> {
    build_gated_affine_layers_per_row(f, &vec![big_m.value; f.m()])
}

/// Layers 4–5 with gate constant `gate[j]` for output row `j`.
///
/// Input is `[selector (p); x (n)]`. For piece `k`, row `j` the pair is
/// `ReLU(M·s_k + g·x + r − M)` and `ReLU(M·s_k − g·x − r − M)`; layer 5 takes
/// their difference. With `s_k = 1` the pair reproduces `g·x + r`; with
/// `s_k = 0` both arguments are `<= |g·x + r| − M <= 0`.
pub fn build_gated_affine_layers_per_row(f: &PwaFunction, gate: &[f64]) -> Result<(LayerSpec, LayerSpec)> {
    let (n, m, p) = (f.n(), f.m(), f.p());
    if gate.len() != m {
        return Err(Error::InvalidNetwork(format!(
            "need {m} gate constants, got {}",
            gate.len()
        )));
    }
    if let Some(g) = gate.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Error::InvalidNetwork(format!("gate constant {g} must be finite and positive")));
    }
    let mut w4 = Matrix::zeros(2 * m * p, p + n);
    let mut b4 = Vec::with_capacity(2 * m * p);
    let mut w5 = Matrix::zeros(m, 2 * m * p);
    for (k, region) in f.regions().iter().enumerate() {
        for j in 0..m {
            let big = gate[j];
            let pos = 2 * (k * m + j);
            let g = region.gain().row(j);
            let r = region.offset()[j];
            w4[(pos, k)] = big;
            w4[(pos + 1, k)] = big;
            for i in 0..n {
                w4[(pos, p + i)] = g[i];
                w4[(pos + 1, p + i)] = -g[i];
            }
            b4.push(r - big);
            b4.push(-r - big);
            w5[(j, pos)] = 1.0;
            w5[(j, pos + 1)] = -1.0;
        }
    }
    Ok((
        LayerSpec::new(w4, b4, Activation::Relu, InputSource::PrevConcatInput)?,
        LayerSpec::new(w5, vec![0.0; m], Activation::Linear, InputSource::Prev)?,
    ))
}

fn structure_of(f: &PwaFunction) -> Structure {
    Structure {
        block_sizes: f.regions().iter().map(|r| r.halfspace_count()).collect(),
        offsets: f
            .regions()
            .iter()
            .flat_map(|r| r.offset().iter().copied())
            .collect(),
    }
}

fn selector_stack(f: &PwaFunction) -> Result<Vec<LayerSpec>> {
    let (l1, l2) = build_constraint_layers(f)?;
    Ok(vec![l1, l2, build_first_hit_layer(f.p())?])
}

/// Five-layer network: constraint check, region indicators, first-hit
/// selector, gated ReLU pairs (with the input skipped in), recombination.
pub fn assemble_yann(f: &PwaFunction, big_m: &BigMBound) -> Result<Network> {
    let mut layers = selector_stack(f)?;
    let (l4, l5) = build_gated_affine_layers(f, big_m)?;
    layers.push(l4);
    layers.push(l5);
    finish(f, NetworkKind::Yann, layers, Some(big_m.clone()), None)
}

/// YANN with one gate constant per output row. `big_m` records the largest.
pub fn assemble_yann_per_row(f: &PwaFunction, rows: &[BigMBound]) -> Result<Network> {
    let gate: Vec<f64> = rows.iter().map(|b| b.value).collect();
    let widest = rows
        .iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .cloned()
        .ok_or_else(|| Error::InvalidNetwork("no per-row bounds".into()))?;
    let mut layers = selector_stack(f)?;
    let (l4, l5) = build_gated_affine_layers_per_row(f, &gate)?;
    layers.push(l4);
    layers.push(l5);
    finish(f, NetworkKind::Yann, layers, Some(widest), Some(gate))
}

/// Selector stack, then an affine bank (`m·p` linear neurons on the input),
/// an elementwise gate by the expanded selector, and a summing layer.
pub fn assemble_yann_l(f: &PwaFunction) -> Result<Network> {
    let (n, m, p) = (f.n(), f.m(), f.p());
    let mut bank = Matrix::zeros(m * p, n);
    let mut bank_bias = Vec::with_capacity(m * p);
    let mut expand = Matrix::zeros(m * p, p);
    let mut sum = Matrix::zeros(m, m * p);
    for (k, region) in f.regions().iter().enumerate() {
        for j in 0..m {
            let row = k * m + j;
            bank.row_mut(row).copy_from_slice(region.gain().row(j));
            bank_bias.push(region.offset()[j]);
            expand[(row, k)] = 1.0;
            sum[(j, row)] = 1.0;
        }
    }
    let mut layers = selector_stack(f)?;
    layers.push(LayerSpec::new(bank, bank_bias, Activation::Linear, InputSource::Input)?);
    layers.push(LayerSpec::new(
        expand,
        vec![0.0; m * p],
        Activation::HadamardGate,
        InputSource::Selector,
    )?);
    layers.push(LayerSpec::new(sum, vec![0.0; m], Activation::Linear, InputSource::Prev)?);
    finish(f, NetworkKind::YannL, layers, None, None)
}

/// Two-layer network returning the indicator of every region (affine maps
/// are ignored).
pub fn assemble_checker(f: &PwaFunction) -> Result<Network> {
    let (l1, l2) = build_constraint_layers(f)?;
    let mut net = finish(f, NetworkKind::ConstraintChecker, vec![l1, l2], None, None)?;
    net.m = f.p();
    if let Some(s) = &mut net.structure {
        s.offsets.clear();
    }
    net.validate()?;
    Ok(net)
}

fn finish(
    f: &PwaFunction,
    kind: NetworkKind,
    layers: Vec<LayerSpec>,
    big_m: Option<BigMBound>,
    big_m_rows: Option<Vec<f64>>,
) -> Result<Network> {
    let mut net = Network {
        kind,
        n: f.n(),
        m: f.m(),
        p: f.p(),
        q: f.q(),
        layers,
        big_m,
        big_m_rows,
        region_order: (0..f.p()).collect(),
        structure: Some(structure_of(f)),
        features: f.features().to_vec(),
    };
    if kind == NetworkKind::ConstraintChecker {
        net.m = f.p();
        return Ok(net);
    }
    net.validate()?;
    Ok(net)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputSign {
    Pos,
    Neg,
}

/// Single ReLU neuron for an affine map known to be one-signed on the domain.
/// `Pos` keeps `(g, r)`; `Neg` stores `(−g, −r)` and [`restore_sign`] negates
/// the output back.
pub fn build_single_signed_affine(gain: &[f64], offset: f64, sign: OutputSign) -> Result<LayerSpec> {
    let s = match sign {
        OutputSign::Pos => 1.0,
        OutputSign::Neg => -1.0,
    };
    LayerSpec::new(
        Matrix::from_vec(1, gain.len(), gain.iter().map(|g| s * g).collect())?,
        vec![s * offset],
        Activation::Relu,
        InputSource::Prev,
    )
}

pub fn restore_sign(y: f64, sign: OutputSign) -> f64 {
    match sign {
        OutputSign::Pos => y,
        OutputSign::Neg => -y,
    }
}

/// Structural audit: every weight and bias of a compiled network must be one
/// of the values the construction allows for its position, traced back to `f`.
pub fn audit(net: &Network, f: &PwaFunction) -> Result<()> {
    let reject = |layer: usize, what: String| {
        Err(Error::InvalidNetwork(format!("audit failed at layer {layer}: {what}")))
    };
    let (n, m, p) = (f.n(), f.m(), f.p());
    let (c1, c2) = build_constraint_layers(f)?;
    if net.layers[0] != c1 || net.layers[1] != c2 {
        return reject(1, "constraint layers differ from region inequalities".into());
    }
    if net.kind == NetworkKind::ConstraintChecker {
        return Ok(());
    }
    let sel = &net.layers[2];
    for i in 0..p {
        for j in 0..p {
            let expect = match i.cmp(&j) {
                std::cmp::Ordering::Equal => 1.0,
                std::cmp::Ordering::Greater => -1.0,
                std::cmp::Ordering::Less => 0.0,
            };
            if sel.weights[(i, j)] != expect {
                return reject(3, format!("selector weight ({i},{j})"));
            }
        }
    }
    if sel.bias.iter().any(|&b| b != 0.0) {
        return reject(3, "selector bias must be 0".into());
    }
    match net.kind {
        NetworkKind::Yann => {
            let gate: Vec<f64> = match (&net.big_m_rows, &net.big_m) {
                (Some(rows), _) => rows.clone(),
                (None, Some(b)) => vec![b.value; m],
                (None, None) => return reject(4, "YANN without big-M".into()),
            };
            let (l4, l5) = &(&net.layers[3], &net.layers[4]);
            for (k, region) in f.regions().iter().enumerate() {
                for j in 0..m {
                    let big = gate[j];
                    let pos = 2 * (k * m + j);
                    let g = region.gain().row(j);
                    let r = region.offset()[j];
                    for c in 0..p {
                        let expect = if c == k { big } else { 0.0 };
                        if l4.weights[(pos, c)] != expect || l4.weights[(pos + 1, c)] != expect {
                            return reject(4, format!("gate weight row {pos} col {c}"));
                        }
                    }
                    for i in 0..n {
                        if l4.weights[(pos, p + i)] != g[i] || l4.weights[(pos + 1, p + i)] != -g[i] {
                            return reject(4, format!("gain weight row {pos} col {}", p + i));
                        }
                    }
                    if l4.bias[pos] != r - big || l4.bias[pos + 1] != -r - big {
                        return reject(4, format!("bias row {pos}"));
                    }
                }
            }
            for j in 0..m {
                for c in 0..2 * m * p {
                    let pair = c / 2;
                    let expect = if pair % m == j {
                        if c % 2 == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    } else {
                        0.0
                    };
                    if l5.weights[(j, c)] != expect {
                        return reject(5, format!("recombination weight ({j},{c})"));
                    }
                }
            }
            if l5.bias.iter().any(|&b| b != 0.0) {
                return reject(5, "bias must be 0".into());
            }
        }
        NetworkKind::YannL => {
            let expected = assemble_yann_l(f)?;
            if net.layers[3..] != expected.layers[3..] {
                return reject(4, "bank/gate/sum layers differ from construction".into());
            }
        }
        NetworkKind::ConstraintChecker => unreachable!(),
    }
    Ok(())
}
