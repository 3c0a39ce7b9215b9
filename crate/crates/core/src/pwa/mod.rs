//! Piecewise-affine functions on polytopic partitions.
//!
//! A [`PwaFunction`] is an ordered list of [`Region`]s. Each region is an
//! H-representation `A x <= b` together with the affine map `K x + r` that is
//! active on it. Region order is part of the function's definition: on shared
//! facets the first region in load order wins.

mod json;
mod validate;

pub use json::{PwaFile, RegionFile};
pub use validate::overlapping_pairs;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matrix::{dot, Matrix};

/// One inequality `coeffs · x <= offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(coeffs: Vec<f64>, offset: f64) -> Self {
        Self { coeffs, offset }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Inclusive test `coeffs · x <= offset + eps`.
    #[inline]
    pub fn satisfied_by(&self, x: &[f64], eps: f64) -> bool {
        dot(&self.coeffs, x) <= self.offset + eps
    }

    pub fn is_degenerate(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

/// Axis-aligned box `lo <= x <= hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim("box bounds", lo.len(), hi.len())?;
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] < hi[i])) {
            return Err(Error::InvalidPwa(format!(
                "box bounds must satisfy lo < hi (axis {i}: lo = {}, hi = {})",
                lo[i], hi[i]
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The same interval `[lo, hi]` on every one of `n` axes.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    /// The box as `2n` halfspaces: `x_i <= hi_i` then `-x_i <= -lo_i` per axis.
    pub fn halfspaces(&self) -> Vec<Halfspace> {
        let n = self.dim();
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut up = vec![0.0; n];
            up[i] = 1.0;
            out.push(Halfspace::new(up, self.hi[i]));
            let mut down = vec![0.0; n];
            down[i] = -1.0;
            out.push(Halfspace::new(down, -self.lo[i]));
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| rng.gen_range(l..=h))
            .collect()
    }
}

/// A polytope with the affine map active on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    a: Matrix,
    b: Vec<f64>,
    gain: Matrix,
    offset: Vec<f64>,
}

impl Region {
    /// `a` is `q_s × n`, `gain` is `m × n`.
    pub fn from_parts(a: Matrix, b: Vec<f64>, gain: Matrix, offset: Vec<f64>) -> Result<Self> {
        if a.rows() == 0 {
            return Err(Error::InvalidPwa("region has no halfspaces".into()));
        }
        check_dim("region bounds", a.rows(), b.len())?;
        check_dim("region gain columns", a.cols(), gain.cols())?;
        check_dim("region offset", gain.rows(), offset.len())?;
        if let Some(i) = (0..a.rows()).find(|&i| a.row(i).iter().all(|&c| c == 0.0)) {
            return Err(Error::InvalidPwa(format!("halfspace row {i} is all zeros")));
        }
        Ok(Self { a, b, gain, offset })
    }

    pub fn new(halfspaces: &[Halfspace], gain: Matrix, offset: Vec<f64>) -> Result<Self> {
        let n = gain.cols();
        let rows: Vec<Vec<f64>> = halfspaces.iter().map(|h| h.coeffs.clone()).collect();
        let a = Matrix::from_rows(&rows, n)?;
        let b = halfspaces.iter().map(|h| h.offset).collect();
        Self::from_parts(a, b, gain, offset)
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.gain.rows()
    }

    pub fn halfspace_count(&self) -> usize {
        self.a.rows()
    }

    pub fn constraints(&self) -> &Matrix {
        &self.a
    }

    pub fn bounds(&self) -> &[f64] {
        &self.b
    }

    pub fn gain(&self) -> &Matrix {
        &self.gain
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn halfspaces(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.a.rows()).map(move |i| (self.a.row(i), self.b[i]))
    }

    pub fn to_halfspaces(&self) -> Vec<Halfspace> {
        self.halfspaces()
            .map(|(a, b)| Halfspace::new(a.to_vec(), b))
            .collect()
    }

    pub fn with_map(&self, gain: Matrix, offset: Vec<f64>) -> Result<Self> {
        Self::from_parts(self.a.clone(), self.b.clone(), gain, offset)
    }

    /// Membership without dimension checks; `eps = 0` is the exact test.
    #[inline]
    pub fn contains_unchecked(&self, x: &[f64], eps: f64) -> bool {
        self.halfspaces().all(|(a, b)| dot(a, x) <= b + eps)
    }

    /// `gain · x + offset`.
    pub fn eval_map(&self, x: &[f64]) -> Vec<f64> {
        (0..self.gain.rows())
            .map(|j| dot(self.gain.row(j), x) + self.offset[j])
            .collect()
    }
}

/// Inclusive, exact membership test.
pub fn contains(region: &Region, x: &[f64]) -> Result<bool> {
    contains_with_tolerance(region, x, 0.0)
}

/// Membership with slack `eps` added to every right-hand side.
pub fn contains_with_tolerance(region: &Region, x: &[f64], eps: f64) -> Result<bool> {
    check_dim("contains input", region.dim(), x.len())?;
    Ok(region.contains_unchecked(x, eps))
}

/// Output of a PWA evaluation, shared by the oracle and every network path.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub output: Vec<f64>,
    pub region_index: Option<usize>,
}

impl EvalResult {
    pub fn outside(m: usize) -> Self {
        Self {
            output: vec![0.0; m],
            region_index: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PwaFunction {
    n: usize,
    m: usize,
    regions: Vec<Region>,
    domain_box: Option<BoxDomain>,
    features: Vec<String>,
}

impl PwaFunction {
    pub fn new(
        n: usize,
        m: usize,
        regions: Vec<Region>,
        domain_box: Option<BoxDomain>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidPwa("n and m must be positive".into()));
        }
        if regions.is_empty() {
            return Err(Error::InvalidPwa("at least one region is required".into()));
        }
        for (k, r) in regions.iter().enumerate() {
            if r.dim() != n || r.output_dim() != m {
                return Err(Error::InvalidPwa(format!(
                    "region {k} has shape n={} m={}, expected n={n} m={m}",
                    r.dim(),
                    r.output_dim()
                )));
            }
        }
        if let Some(b) = &domain_box {
            check_dim("domain box", n, b.dim())?;
        }
        Ok(Self {
            n,
            m,
            regions,
            domain_box,
            features: Vec::new(),
        })
    }

    /// Declares the names of lifted input features (metadata only).
    pub fn with_features(mut self, features: Vec<String>) -> Self {
        self.features = features;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.regions.len()
    }

    /// Total number of halfspaces over all regions.
    pub fn q(&self) -> usize {
        self.regions.iter().map(Region::halfspace_count).sum()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn domain_box(&self) -> Option<&BoxDomain> {
        self.domain_box.as_ref()
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn set_domain_box(&mut self, b: Option<BoxDomain>) -> Result<()> {
        if let Some(b) = &b {
            check_dim("domain box", self.n, b.dim())?;
        }
        self.domain_box = b;
        Ok(())
    }

    /// First region (in load order) containing `x`.
    #[inline]
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.regions.iter().position(|r| r.contains_unchecked(x, 0.0))
    }
}

/// First-hit sequential point location followed by the region's affine map.
/// Outside every region the output is the zero vector and no index is set.
pub fn evaluate_naive(f: &PwaFunction, x: &[f64]) -> Result<EvalResult> {
    check_dim("evaluate input", f.n, x.len())?;
    Ok(match f.locate(x) {
        Some(k) => EvalResult {
            output: f.regions[k].eval_map(x),
            region_index: Some(k),
        },
        None => EvalResult::outside(f.m),
    })
}

/// Like [`evaluate_naive`] but out-of-domain inputs are an error.
pub fn evaluate_naive_strict(f: &PwaFunction, x: &[f64]) -> Result<EvalResult> {
    let res = evaluate_naive(f, x)?;
    if res.region_index.is_none() {
        return Err(Error::OutOfDomain);
    }
    Ok(res)
}
