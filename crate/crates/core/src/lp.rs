//! Small dense linear programs: `maximize c·x subject to A x <= b`, `x` free.
//!
//! Two-phase tableau simplex with Bland's anti-cycling rule by default. The
//! problems solved here are tiny (tens of variables, at most a few hundred
//! rows), so a dense tableau rebuilt per solve is the right tool.

use crate::error::{check_dim, Error, Result};
use crate::matrix::dot;
use crate::pwa::{BoxDomain, Halfspace};

/// Primal feasibility tolerance on normalized rows.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Smallest tableau entry accepted as a pivot.
const PIVOT_TOL: f64 = 1e-11;

/// Reduced-cost threshold for an improving column.
const OPTIMALITY_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PivotRule {
    #[default]
    Bland,
    /// Most negative reduced cost. Faster on average, no termination guarantee.
    Dantzig,
}

#[derive(Clone, Debug, Default)]
pub struct SolverOptions {
    pub rule: PivotRule,
    /// Total pivot budget per solve. Defaults to `10 · (columns + rows)` of
    /// the standard-form tableau.
    pub max_iterations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Halfspace>,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>, constraints: Vec<Halfspace>) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::InvalidPwa("LP needs at least one constraint".into()));
        }
        for h in &constraints {
            check_dim("LP constraint", objective.len(), h.dim())?;
        }
        Ok(Self {
            objective,
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpResult {
    Optimal { value: f64, point: Vec<f64> },
    Infeasible,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl LpResult {
    pub fn status(&self) -> LpStatus {
        match self {
            LpResult::Optimal { .. } => LpStatus::Optimal,
            LpResult::Infeasible => LpStatus::Infeasible,
            LpResult::Unbounded => LpStatus::Unbounded,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            LpResult::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn point(&self) -> Option<&[f64]> {
        match self {
            LpResult::Optimal { point, .. } => Some(point),
            _ => None,
        }
    }
}

pub fn solve_lp(prob: &LpProblem) -> Result<LpResult> {
    solve_lp_with(prob, &SolverOptions::default())
}

pub fn solve_lp_with(prob: &LpProblem, opts: &SolverOptions) -> Result<LpResult> {
    let n = prob.dim();
    for h in &prob.constraints {
        check_dim("LP constraint", n, h.dim())?;
    }

    // Row-normalize; all-zero rows are either vacuous or make the LP infeasible.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(prob.constraints.len());
    for h in &prob.constraints {
        let scale = h.coeffs.iter().fold(0.0_f64, |s, c| s.max(c.abs()));
        if scale == 0.0 {
            if h.offset < -FEASIBILITY_TOL {
                return Ok(LpResult::Infeasible);
            }
            continue;
        }
        rows.push((h.coeffs.iter().map(|c| c / scale).collect(), h.offset / scale));
    }

    if rows.is_empty() {
        return Ok(if prob.objective.iter().all(|&c| c == 0.0) {
            LpResult::Optimal {
                value: 0.0,
                point: vec![0.0; n],
            }
        } else {
            LpResult::Unbounded
        });
    }

    let mut t = Tableau::new(n, &rows);
    let limit = opts
        .max_iterations
        .unwrap_or(10 * (t.cols + t.rows));
    let mut budget = Budget { limit, used: 0 };

    if t.art_start < t.cols {
        t.load_phase1_objective();
        t.run(t.cols, opts.rule, &mut budget, 1)?;
        if t.objective_value() < -FEASIBILITY_TOL {
            return Ok(LpResult::Infeasible);
        }
        t.expel_artificials();
    }

    t.load_phase2_objective(&prob.objective);
    if t.run(t.art_start, opts.rule, &mut budget, 2)? == Outcome::Unbounded {
        return Ok(LpResult::Unbounded);
    }

    let point = t.primal(n);
    let value = dot(&prob.objective, &point);
    Ok(LpResult::Optimal { value, point })
}

/// True iff the polytope `{x : h.coeffs · x <= h.offset ∀h}` has no point.
pub fn is_empty(halfspaces: &[Halfspace]) -> Result<bool> {
    let n = halfspaces
        .first()
        .map(Halfspace::dim)
        .ok_or_else(|| Error::InvalidPwa("empty halfspace list".into()))?;
    let prob = LpProblem::new(vec![0.0; n], halfspaces.to_vec())?;
    Ok(solve_lp(&prob)? == LpResult::Infeasible)
}

/// Axis-aligned bounding box via `2n` LPs. `Ok(None)` when the polytope is
/// empty; [`Error::UnboundedDomain`] when some axis is unbounded.
pub fn bounding_box(halfspaces: &[Halfspace], n: usize) -> Result<Option<BoxDomain>> {
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 0..n {
        let mut c = vec![0.0; n];
        for (sign, slot) in [(1.0, &mut hi[i]), (-1.0, &mut lo[i])] {
            c[i] = sign;
            match solve_lp(&LpProblem::new(c.clone(), halfspaces.to_vec())?)? {
                LpResult::Optimal { value, .. } => *slot = sign * value,
                LpResult::Infeasible => return Ok(None),
                LpResult::Unbounded => return Err(Error::UnboundedDomain),
            }
        }
    }
    // Flat (lower-dimensional) polytopes get a hair of width so the box is valid.
    for i in 0..n {
        if hi[i] <= lo[i] {
            let pad = 1e-12 * (1.0 + lo[i].abs());
            lo[i] -= pad;
            hi[i] += pad;
        }
    }
    BoxDomain::new(lo, hi).map(Some)
}

/// Centre and radius of the largest inscribed ball, radius capped at `1e9`.
/// `Ok(None)` when the polytope is empty.
pub fn chebyshev_center(halfspaces: &[Halfspace]) -> Result<Option<(Vec<f64>, f64)>> {
    let n = halfspaces
        .first()
        .map(Halfspace::dim)
        .ok_or_else(|| Error::InvalidPwa("empty halfspace list".into()))?;
    let mut cons: Vec<Halfspace> = halfspaces
        .iter()
        .map(|h| {
            let norm = dot(&h.coeffs, &h.coeffs).sqrt();
            let mut c = h.coeffs.clone();
            c.push(norm);
            Halfspace::new(c, h.offset)
        })
        .collect();
    let mut cap = vec![0.0; n + 1];
    cap[n] = 1.0;
    cons.push(Halfspace::new(cap.clone(), 1e9));
    cap[n] = -1.0;
    cons.push(Halfspace::new(cap, 0.0));
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    match solve_lp(&LpProblem::new(obj, cons)?)? {
        LpResult::Optimal { mut point, .. } => {
            let r = point.pop().unwrap_or(0.0);
            Ok(Some((point, r)))
        }
        LpResult::Infeasible => Ok(None),
        LpResult::Unbounded => Err(Error::UnboundedDomain),
    }
}

/// Drops rows implied by the others (one LP per row, in order). A row is kept
/// when its maximum over the remaining rows exceeds its bound by more than
/// `tol`, or when that maximum is unbounded.
pub fn remove_redundant(halfspaces: &[Halfspace], tol: f64) -> Result<Vec<Halfspace>> {
    let mut kept: Vec<Halfspace> = halfspaces.to_vec();
    let mut i = 0;
    while i < kept.len() {
        if kept.len() == 1 {
            break;
        }
        let candidate = kept.remove(i);
        let prob = LpProblem::new(candidate.coeffs.clone(), kept.clone())?;
        let redundant = match solve_lp(&prob)? {
            LpResult::Optimal { value, .. } => value <= candidate.offset + tol,
            // Removing the row leaves an empty set: the rest already imply it.
            LpResult::Infeasible => true,
            LpResult::Unbounded => false,
        };
        if !redundant {
            kept.insert(i, candidate);
            i += 1;
        }
    }
    Ok(kept)
}

#[derive(PartialEq, Eq, Debug)]
enum Outcome {
    Optimal,
    Unbounded,
}

struct Budget {
    limit: usize,
    used: usize,
}

/// Standard-form tableau. Columns: `x⁺ (n)`, `x⁻ (n)`, slacks (rows),
/// artificials (rows with negative right-hand side). The last row is the
/// objective in reduced-cost form, the last column the right-hand side.
struct Tableau {
    n: usize,
    rows: usize,
    cols: usize,
    art_start: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(n: usize, rows: &[(Vec<f64>, f64)]) -> Self {
        let r = rows.len();
        let n_art = rows.iter().filter(|(_, b)| *b < 0.0).count();
        let art_start = 2 * n + r;
        let cols = art_start + n_art;
        let width = cols + 1;
        let mut data = vec![0.0; (r + 1) * width];
        let mut basis = vec![0; r];
        let mut next_art = art_start;
        for (i, (a, b)) in rows.iter().enumerate() {
            let row = &mut data[i * width..(i + 1) * width];
            let sign = if *b < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                row[j] = sign * a[j];
                row[n + j] = -sign * a[j];
            }
            row[2 * n + i] = sign;
            row[cols] = sign * b;
            if *b < 0.0 {
                row[next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            } else {
                basis[i] = 2 * n + i;
            }
        }
        Self {
            n,
            rows: r,
            cols,
            art_start,
            width,
            data,
            basis,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn objective_value(&self) -> f64 {
        self.at(self.rows, self.cols)
    }

    fn clear_objective(&mut self) {
        let start = self.rows * self.width;
        self.data[start..].iter_mut().for_each(|v| *v = 0.0);
    }

    /// Makes the objective row canonical for the current basis.
    fn price_out(&mut self) {
        let w = self.width;
        let obj = self.rows * w;
        for i in 0..self.rows {
            let d = self.data[obj + self.basis[i]];
            if d != 0.0 {
                for j in 0..w {
                    self.data[obj + j] -= d * self.data[i * w + j];
                }
            }
        }
    }

    fn load_phase1_objective(&mut self) {
        self.clear_objective();
        let obj = self.rows * self.width;
        for j in self.art_start..self.cols {
            // maximize -Σ artificials
            self.data[obj + j] = 1.0;
        }
        self.price_out();
    }

    fn load_phase2_objective(&mut self, c: &[f64]) {
        self.clear_objective();
        let obj = self.rows * self.width;
        for (j, &cj) in c.iter().enumerate() {
            self.data[obj + j] = -cj;
            self.data[obj + self.n + j] = cj;
        }
        self.price_out();
    }

    fn expel_artificials(&mut self) {
        for i in 0..self.rows {
            if self.basis[i] < self.art_start {
                continue;
            }
            if let Some(j) = (0..self.art_start).find(|&j| self.at(i, j).abs() > 1e-9) {
                self.pivot(i, j);
            }
        }
    }

    fn entering(&self, allowed: usize, rule: PivotRule) -> Option<usize> {
        let obj = &self.data[self.rows * self.width..];
        match rule {
            PivotRule::Bland => (0..allowed).find(|&j| obj[j] < -OPTIMALITY_TOL),
            PivotRule::Dantzig => {
                let mut best = None;
                let mut best_val = -OPTIMALITY_TOL;
                for (j, &d) in obj.iter().enumerate().take(allowed) {
                    if d < best_val {
                        best_val = d;
                        best = Some(j);
                    }
                }
                best
            }
        }
    }

    fn leaving(&self, col: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let a = self.at(i, col);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.at(i, self.cols).max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                    if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.data[pr * w + pc];
        for j in 0..w {
            self.data[pr * w + j] *= inv;
        }
        self.data[pr * w + pc] = 1.0;
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[pc];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    fn run(&mut self, allowed: usize, rule: PivotRule, budget: &mut Budget, phase: u8) -> Result<Outcome> {
        loop {
            let Some(col) = self.entering(allowed, rule) else {
                return Ok(Outcome::Optimal);
            };
            let Some(row) = self.leaving(col) else {
                return Ok(Outcome::Unbounded);
            };
            if budget.used >= budget.limit {
                return Err(Error::IterationLimit {
                    limit: budget.limit,
                    rows: self.rows,
                    cols: self.cols,
                    phase,
                });
            }
            budget.used += 1;
            self.pivot(row, col);
        }
    }

    fn primal(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            let v = self.at(i, self.cols);
            if b < n {
                x[b] += v;
            } else if b < 2 * n {
                x[b - n] -= v;
            }
        }
        x
    }
}
