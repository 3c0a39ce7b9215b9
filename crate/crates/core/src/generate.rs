//! Synthetic PWA functions for testing and benchmarking.
//!
//! The base construction is a max of affine pieces, `f(x) = maxₖ (aₖ·x + bₖ)`,
//! restricted to a box. Region `k` is where piece `k` attains the max, which
//! gives a continuous PWA function with an explicit H-representation and a
//! closed-form oracle (the max itself). Region descriptions are reduced to
//! their facet-defining rows, so `q` grows roughly linearly in `p` (as for
//! critical regions of explicit MPC laws) rather than quadratically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lp::{bounding_box, chebyshev_center, remove_redundant};
use crate::matrix::{dot, Matrix};
use crate::pwa::{BoxDomain, Halfspace, PwaFunction, Region};

/// Retry budget for redrawing a piece that duplicates an earlier one.
const MAX_REDRAWS: usize = 100;

/// Regions whose inscribed ball is smaller than this (relative to the box
/// diameter) have no interior and are dropped.
const MIN_INTERIOR_RADIUS: f64 = 1e-9;

/// Slack allowed when deciding that a row is implied by the others.
const REDUNDANCY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct AffinePiece {
    pub slope: Vec<f64>,
    pub intercept: f64,
}

impl AffinePiece {
    pub fn new(slope: Vec<f64>, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.slope, x) + self.intercept
    }
}

/// A max-of-affines PWA function together with the pieces that define it.
/// `pieces[k]` is the map attached to `function.regions()[k]`.
#[derive(Clone, Debug)]
pub struct MaxAffine {
    pub function: PwaFunction,
    pub pieces: Vec<AffinePiece>,
    /// An interior point of each region (Chebyshev centre).
    pub witnesses: Vec<Vec<f64>>,
}

impl MaxAffine {
    /// Closed-form oracle `maxₖ (aₖ·x + bₖ)`.
    pub fn max_value(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the first piece attaining the max at `x`.
    pub fn argmax(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (k, p) in self.pieces.iter().enumerate() {
            let v = p.eval(x);
            if v > best_val {
                best_val = v;
                best = k;
            }
        }
        best
    }
}

/// Builds the max-affine partition of `domain` for explicit pieces. Pieces
/// whose region has no interior are dropped.
pub fn max_affine_from_pieces(pieces: &[AffinePiece], domain: &BoxDomain) -> Result<MaxAffine> {
    build(pieces, domain, None)
}

/// Random max-affine function with (up to) `p` pieces on `domain`.
///
/// Pieces are tangent planes of a random convex quadratic at random points,
/// with a small random lift on each intercept; lifted-away pieces can lose
/// their region entirely, in which case they are dropped and the returned
/// function has fewer than `p` regions.
pub fn generate_max_affine(seed: u64, n: usize, p: usize, domain: &BoxDomain) -> Result<MaxAffine> {
    if p == 0 || n == 0 {
        return Err(Error::Generator("n and p must be positive".into()));
    }
    if domain.dim() != n {
        return Err(Error::Dimension {
            context: "generator box",
            expected: n,
            got: domain.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width: Vec<f64> = domain.lo.iter().zip(&domain.hi).map(|(l, h)| h - l).collect();
    let mid = domain.center();
    let curvature: Vec<f64> = (0..n)
        .map(|i| rng.gen_range(0.5..1.5) / (0.25 * width[i] * width[i]))
        .collect();
    let tilt: Vec<f64> = (0..n).map(|i| rng.gen_range(-0.5..0.5) * 2.0 / width[i]).collect();
    let lift = rng.gen_range(-0.5..0.5);
    // Typical spacing between tangent points, in normalized units.
    let spacing = (1.0 / p as f64).powf(1.0 / n as f64);
    let jitter = 0.05 * spacing * spacing;

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut pieces = Vec::with_capacity(p);
    for _ in 0..p {
        let mut redraws = 0;
        let c = loop {
            let c = domain.sample(&mut rng);
            let duplicate = centers.iter().any(|o| {
                o.iter()
                    .zip(&c)
                    .zip(&width)
                    .all(|((a, b), w)| (a - b).abs() <= 1e-9 * w)
            });
            if !duplicate {
                break c;
            }
            redraws += 1;
            if redraws > MAX_REDRAWS {
                return Err(Error::Generator("could not draw distinct pieces".into()));
            }
        };
        let d: Vec<f64> = (0..n).map(|i| c[i] - mid[i]).collect();
        let slope: Vec<f64> = (0..n).map(|i| curvature[i] * d[i] + tilt[i]).collect();
        let g: f64 = (0..n).map(|i| 0.5 * curvature[i] * d[i] * d[i]).sum();
        let intercept = g - (0..n).map(|i| curvature[i] * d[i] * c[i]).sum::<f64>()
            + lift
            + rng.gen_range(-jitter..=jitter);
        pieces.push(AffinePiece::new(slope, intercept));
        centers.push(c);
    }
    build(&pieces, domain, Some(&centers))
}

/// Partition from [`generate_max_affine`] with independent random `m × n`
/// gains and offsets per region. Generally discontinuous across facets.
pub fn generate_vector_pwa(
    seed: u64,
    n: usize,
    m: usize,
    p: usize,
    domain: &BoxDomain,
) -> Result<PwaFunction> {
    let base = generate_max_affine(seed, n, p, domain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_9a1a_u64);
    let regions = base
        .function
        .regions()
        .iter()
        .map(|r| {
            let gain: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let offset: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            r.with_map(Matrix::from_vec(m, n, gain)?, offset)
        })
        .collect::<Result<Vec<_>>>()?;
    PwaFunction::new(n, m, regions, base.function.domain_box().cloned())
}

/// Continuous vector-valued PWA on the max-affine partition:
/// `u(x) = w · f(x) + G x + h` with `f` the scalar max-affine function.
pub fn generate_continuous_vector_pwa(
    seed: u64,
    n: usize,
    m: usize,
    p: usize,
    domain: &BoxDomain,
) -> Result<PwaFunction> {
    let base = generate_max_affine(seed, n, p, domain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0_47_1a_u64);
    let w: Vec<f64> = (0..m)
        .map(|_| {
            let v: f64 = rng.gen_range(0.25..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let common: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let shift: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let regions = base
        .function
        .regions()
        .iter()
        .zip(&base.pieces)
        .map(|(r, piece)| {
            let mut gain = Matrix::zeros(m, n);
            for j in 0..m {
                for i in 0..n {
                    gain[(j, i)] = w[j] * piece.slope[i] + common[j * n + i];
                }
            }
            let offset = (0..m).map(|j| w[j] * piece.intercept + shift[j]).collect();
            r.with_map(gain, offset)
        })
        .collect::<Result<Vec<_>>>()?;
    PwaFunction::new(n, m, regions, base.function.domain_box().cloned())
}

/// `(aⱼ − aₖ)·x <= bₖ − bⱼ`: piece `k` is at least piece `j`.
fn dominance_row(pk: &AffinePiece, pj: &AffinePiece) -> Halfspace {
    Halfspace::new(
        pj.slope.iter().zip(&pk.slope).map(|(a, b)| a - b).collect(),
        pk.intercept - pj.intercept,
    )
}

fn interval_max(row: &Halfspace, bbox: &BoxDomain) -> f64 {
    row.coeffs
        .iter()
        .zip(bbox.lo.iter().zip(&bbox.hi))
        .map(|(c, (l, h))| (c * l).max(c * h))
        .sum()
}

/// Facet rows of region `k`, or `None` when it has no interior.
fn region_rows(
    k: usize,
    pieces: &[AffinePiece],
    domain: &BoxDomain,
    hint: Option<&[f64]>,
) -> Result<Option<(Vec<Halfspace>, Vec<f64>)>> {
    let n = domain.dim();
    let mut rows = domain.halfspaces();
    let mut pending: Vec<(usize, Halfspace)> = Vec::with_capacity(pieces.len());
    for (j, pj) in pieces.iter().enumerate() {
        if j == k {
            continue;
        }
        let row = dominance_row(&pieces[k], pj);
        if row.is_degenerate() {
            if row.offset < 0.0 {
                return Ok(None);
            }
            continue;
        }
        pending.push((j, row));
    }

    // Seed with the pieces closest to winning at the hint point.
    if let Some(h) = hint {
        pending.sort_by(|(_, a), (_, b)| {
            let sa = a.offset - dot(&a.coeffs, h);
            let sb = b.offset - dot(&b.coeffs, h);
            sa.total_cmp(&sb)
        });
        let seed = pending.len().min(4 * n + 4);
        rows.extend(pending.drain(..seed).map(|(_, r)| r));
    }

    // Cutting loop: a pending row is settled once the bounding box of the
    // current polytope lies inside its halfspace. Rows only ever shrink the
    // polytope, so settled rows stay implied.
    let batch = (2 * n).max(4);
    let mut first = hint.is_none();
    while !pending.is_empty() {
        let bbox = if first {
            first = false;
            domain.clone()
        } else {
            match bounding_box(&rows, n)? {
                Some(b) => b,
                None => return Ok(None),
            }
        };
        pending.retain(|(_, r)| interval_max(r, &bbox) > r.offset);
        if pending.is_empty() {
            break;
        }
        let c = bbox.center();
        pending.sort_by(|(_, a), (_, b)| {
            let va = dot(&a.coeffs, &c) - a.offset;
            let vb = dot(&b.coeffs, &c) - b.offset;
            vb.total_cmp(&va)
        });
        let take = pending.len().min(batch);
        rows.extend(pending.drain(..take).map(|(_, r)| r));
    }

    let diam = domain
        .lo
        .iter()
        .zip(&domain.hi)
        .map(|(l, h)| (h - l) * (h - l))
        .sum::<f64>()
        .sqrt();
    match chebyshev_center(&rows)? {
        Some((center, radius)) if radius > MIN_INTERIOR_RADIUS * diam => {
            let facets = remove_redundant(&rows, REDUNDANCY_TOL)?;
            Ok(Some((facets, center)))
        }
        _ => Ok(None),
    }
}

fn build(
    pieces: &[AffinePiece],
    domain: &BoxDomain,
    hints: Option<&[Vec<f64>]>,
) -> Result<MaxAffine> {
    let n = domain.dim();
    if pieces.is_empty() {
        return Err(Error::Generator("no pieces".into()));
    }
    if let Some(bad) = pieces.iter().find(|p| p.slope.len() != n) {
        return Err(Error::Dimension {
            context: "affine piece",
            expected: n,
            got: bad.slope.len(),
        });
    }
    let mut regions = Vec::new();
    let mut kept = Vec::new();
    let mut witnesses = Vec::new();
    for k in 0..pieces.len() {
        let hint = hints.map(|h| h[k].as_slice());
        if let Some((rows, center)) = region_rows(k, pieces, domain, hint)? {
            let piece = &pieces[k];
            let gain = Matrix::from_vec(1, n, piece.slope.clone())?;
            regions.push(Region::new(&rows, gain, vec![piece.intercept])?);
            kept.push(piece.clone());
            witnesses.push(center);
        }
    }
    let function = PwaFunction::new(n, 1, regions, Some(domain.clone()))?;
    Ok(MaxAffine {
        function,
        pieces: kept,
        witnesses,
    })
}
