//! Big-M constants for the gated affine layers.
//!
//! The gate for piece `k` opens only when its selector bit is 1, which
//! requires `M >= |f_k(x)|` for every piece over the whole domain, not just
//! over the piece's own region: a closed gate still sees `±f_k(x) − M` and must
//! clamp it to zero wherever `x` lands.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::lp::{bounding_box, solve_lp, LpProblem, LpResult};
use crate::pwa::{BoxDomain, Halfspace, PwaFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BigMMethod {
    ExactLp,
    IntervalBox,
}

/// `value = margin · tight_value + pad`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BigMBound {
    pub value: f64,
    pub method: BigMMethod,
    pub margin: f64,
    pub pad: f64,
    pub tight_value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginPolicy {
    pub multiplier: f64,
    pub pad: f64,
}

impl Default for MarginPolicy {
    fn default() -> Self {
        Self {
            multiplier: 1.25,
            pad: 1.0,
        }
    }
}

impl MarginPolicy {
    fn apply(&self, method: BigMMethod, tight: f64) -> Result<BigMBound> {
        if !(self.multiplier >= 1.0) || !(self.pad >= 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "margin multiplier must be >= 1 and pad >= 0 (got {} and {})",
                self.multiplier, self.pad
            )));
        }
        let value = self.multiplier * tight + self.pad;
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidNetwork(format!("big-M value {value} is not usable")));
        }
        Ok(BigMBound {
            value,
            method,
            margin: self.multiplier,
            pad: self.pad,
            tight_value: tight,
        })
    }
}

/// Bounding box of the union of all regions (two LPs per region per axis).
pub fn union_bounding_box(f: &PwaFunction) -> Result<BoxDomain> {
    let n = f.n();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for r in f.regions() {
        if let Some(b) = bounding_box(&r.to_halfspaces(), n)? {
            for i in 0..n {
                lo[i] = lo[i].min(b.lo[i]);
                hi[i] = hi[i].max(b.hi[i]);
            }
        }
    }
    if lo.iter().any(|v| !v.is_finite()) {
        return Err(Error::InfeasibleDomain);
    }
    BoxDomain::new(lo, hi)
}

/// Domain used for M: explicit halfspaces, else the function's box, else the
/// bounding box of the union of regions.
pub fn resolve_domain(f: &PwaFunction, explicit: Option<&[Halfspace]>) -> Result<Vec<Halfspace>> {
    if let Some(d) = explicit {
        return Ok(d.to_vec());
    }
    if let Some(b) = f.domain_box() {
        return Ok(b.halfspaces());
    }
    Ok(union_bounding_box(f)?.halfspaces())
}

fn check_domain(domain: &[Halfspace], n: usize) -> Result<()> {
    for h in domain {
        check_dim("big-M domain", n, h.dim())?;
    }
    match bounding_box(domain, n)? {
        Some(_) => Ok(()),
        None => Err(Error::InfeasibleDomain),
    }
}

/// Largest `|gain_row · x + offset|` over the polytope, via two LPs.
fn row_extreme(gain: &[f64], offset: f64, domain: &[Halfspace]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for sign in [1.0, -1.0] {
        let c: Vec<f64> = gain.iter().map(|g| sign * g).collect();
        match solve_lp(&LpProblem::new(c, domain.to_vec())?)? {
            LpResult::Optimal { value, .. } => worst = worst.max((sign * value + offset).abs()),
            LpResult::Unbounded => return Err(Error::UnboundedDomain),
            LpResult::Infeasible => return Err(Error::InfeasibleDomain),
        }
    }
    Ok(worst)
}

fn exact_row_bounds(f: &PwaFunction, domain: &[Halfspace]) -> Result<Vec<f64>> {
    check_domain(domain, f.n())?;
    let mut per_row = vec![0.0_f64; f.m()];
    for r in f.regions() {
        for (j, slot) in per_row.iter_mut().enumerate() {
            *slot = slot.max(row_extreme(r.gain().row(j), r.offset()[j], domain)?);
        }
    }
    Ok(per_row)
}

pub fn compute_big_m_exact(f: &PwaFunction, domain: &[Halfspace]) -> Result<BigMBound> {
    compute_big_m_exact_with(f, domain, MarginPolicy::default())
}

/// Exact bound: max and min of every piece/row over the full domain polytope
/// (`2·m·p` LPs); the constraint set is the domain only, never a region.
pub fn compute_big_m_exact_with(
    f: &PwaFunction,
    domain: &[Halfspace],
    policy: MarginPolicy,
) -> Result<BigMBound> {
    let tight = exact_row_bounds(f, domain)?.into_iter().fold(0.0, f64::max);
    policy.apply(BigMMethod::ExactLp, tight)
}

/// One exact bound per output row.
pub fn compute_big_m_exact_per_row(
    f: &PwaFunction,
    domain: &[Halfspace],
    policy: MarginPolicy,
) -> Result<Vec<BigMBound>> {
    exact_row_bounds(f, domain)?
        .into_iter()
        .map(|t| policy.apply(BigMMethod::ExactLp, t))
        .collect()
}

pub fn compute_big_m_interval(f: &PwaFunction, domain: &BoxDomain) -> Result<BigMBound> {
    compute_big_m_interval_with(f, domain, MarginPolicy::default())
}

/// Interval bound `Σᵢ |gᵢ| · max(|loᵢ|, |hiᵢ|) + |offset|` per piece/row.
/// Never below the exact bound on the same box.
pub fn compute_big_m_interval_with(
    f: &PwaFunction,
    domain: &BoxDomain,
    policy: MarginPolicy,
) -> Result<BigMBound> {
    check_dim("big-M box", f.n(), domain.dim())?;
    let reach: Vec<f64> = domain
        .lo
        .iter()
        .zip(&domain.hi)
        .map(|(l, h)| l.abs().max(h.abs()))
        .collect();
    let mut tight = 0.0_f64;
    for r in f.regions() {
        for j in 0..f.m() {
            let bound: f64 = r
                .gain()
                .row(j)
                .iter()
                .zip(&reach)
                .map(|(g, a)| g.abs() * a)
                .sum::<f64>()
                + r.offset()[j].abs();
            tight = tight.max(bound);
        }
    }
    policy.apply(BigMMethod::IntervalBox, tight)
}
