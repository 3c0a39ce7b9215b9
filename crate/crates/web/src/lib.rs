//! Browser demo: paint the region map of a 2-D PWA function, evaluate a point
//! with the naive scan and both compiled networks, and run the first-hit
//! selector on a bit string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use yann::bigm::{compute_big_m_exact, resolve_domain};
use yann::compiler::{assemble_yann, assemble_yann_l, build_first_hit_layer, Network};
use yann::generate::generate_vector_pwa;
use yann::inference::{forward_batch, forward_structured, BatchMode, Precision};
use yann::{evaluate_naive, BoxDomain, EvalResult, Matrix, PwaFunction};

#[derive(Serialize)]
struct Point {
    u: Vec<f64>,
    region: Option<usize>,
}

impl From<EvalResult> for Point {
    fn from(r: EvalResult) -> Self {
        Point {
            u: r.output,
            region: r.region_index,
        }
    }
}

#[derive(Serialize)]
struct Evaluation {
    naive: Point,
    yann: Point,
    yann_l: Point,
}

#[derive(Serialize)]
struct Summary {
    n: usize,
    m: usize,
    p: usize,
    q: usize,
    big_m: f64,
    yann_layers: Vec<usize>,
    yann_l_layers: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// A PWA function with its two compiled networks.
#[wasm_bindgen]
pub struct Demo {
    f: PwaFunction,
    yann: Network,
    yann_l: Network,
    domain: BoxDomain,
}

fn msg(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[wasm_bindgen]
impl Demo {
    /// Compiles a PWA function given in the JSON file format.
    #[wasm_bindgen(constructor)]
    pub fn new(pwa_json: &str) -> Result<Demo, String> {
        Self::from_function(PwaFunction::from_json(pwa_json).map_err(msg)?)
    }

    /// Random 2-D, 2-output function on [-1, 1]² with about `p` regions.
    pub fn random(seed: u32, p: usize) -> Result<Demo, String> {
        let dom = BoxDomain::cube(2, -1.0, 1.0).map_err(msg)?;
        Self::from_function(generate_vector_pwa(u64::from(seed), 2, 2, p, &dom).map_err(msg)?)
    }

    fn from_function(f: PwaFunction) -> Result<Demo, String> {
        let big_m = compute_big_m_exact(&f, &resolve_domain(&f, None).map_err(msg)?).map_err(msg)?;
        let yann = assemble_yann(&f, &big_m).map_err(msg)?;
        let yann_l = assemble_yann_l(&f).map_err(msg)?;
        let domain = match f.domain_box() {
            Some(b) => b.clone(),
            None => yann::bigm::union_bounding_box(&f).map_err(msg)?,
        };
        Ok(Demo { f, yann, yann_l, domain })
    }

    /// Sizes, big-M and plotting box as JSON.
    pub fn summary(&self) -> String {
        serde_json::to_string(&Summary {
            n: self.f.n(),
            m: self.f.m(),
            p: self.f.p(),
            q: self.f.q(),
            big_m: self.yann.big_m.as_ref().map_or(f64::NAN, |b| b.value),
            yann_layers: self.yann.layer_sizes(),
            yann_l_layers: self.yann_l.layer_sizes(),
            lo: self.domain.lo.clone(),
            hi: self.domain.hi.clone(),
        })
        .expect("summary serializes")
    }

    /// The function as PWA JSON.
    pub fn pwa_json(&self) -> String {
        self.f.to_json()
    }

    /// Region index selected by YANN for each pixel of a `width × height`
    /// grid, row-major from the top-left corner; -1 outside the domain.
    pub fn region_map(&self, width: usize, height: usize) -> Result<Vec<i32>, String> {
        if self.f.n() != 2 {
            return Err(format!("region maps need a 2-D input, this function has n={}", self.f.n()));
        }
        let (lo, hi) = (&self.domain.lo, &self.domain.hi);
        let mut xs = Matrix::zeros(width * height, 2);
        for r in 0..height {
            for c in 0..width {
                let row = xs.row_mut(r * width + c);
                row[0] = lo[0] + (hi[0] - lo[0]) * (c as f64 + 0.5) / width as f64;
                row[1] = hi[1] - (hi[1] - lo[1]) * (r as f64 + 0.5) / height as f64;
            }
        }
        let out = forward_batch(&self.yann, &xs, Precision::Fp64, BatchMode::Structured).map_err(msg)?;
        Ok(out.regions.iter().map(|r| r.map_or(-1, |k| k as i32)).collect())
    }

    /// Naive, YANN and YANN-L results at `x` as JSON.
    pub fn evaluate(&self, x: Vec<f64>, fp32: bool) -> Result<String, String> {
        let prec = if fp32 { Precision::Fp32 } else { Precision::Fp64 };
        let e = Evaluation {
            naive: evaluate_naive(&self.f, &x).map_err(msg)?.into(),
            yann: forward_structured(&self.yann, &x, prec).map_err(msg)?.into(),
            yann_l: forward_structured(&self.yann_l, &x, prec).map_err(msg)?.into(),
        };
        Ok(serde_json::to_string(&e).expect("evaluation serializes"))
    }
}

/// Runs the first-hit selector layer on a string of `0`/`1` indicators and
/// returns its output as a string of the same length.
#[wasm_bindgen]
pub fn first_hit(bits: &str) -> Result<String, String> {
    let d: Vec<f64> = bits
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0.0),
            '1' => Ok(1.0),
            other => Err(format!("expected 0 or 1, got {other:?}")),
        })
        .collect::<Result<_, _>>()?;
    let layer = build_first_hit_layer(d.len()).map_err(msg)?;
    Ok((0..d.len())
        .map(|r| {
            let z = layer.weights.row(r).iter().zip(&d).fold(0.0, |acc, (w, v)| acc + w * v);
            if layer.activation.apply(z + layer.bias[r]) > 0.5 {
                '1'
            } else {
                '0'
            }
        })
        .collect())
}
