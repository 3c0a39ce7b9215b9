use super::PwaFunction;
use crate::error::Result;
use crate::lp::{solve_lp, LpProblem, LpResult};
use crate::matrix::dot;
use crate::pwa::Halfspace;

/// Depth below which two regions are considered to touch only on facets.
const INTERIOR_TOL: f64 = 1e-9;

/// Pairs `(i, j)`, `i < j`, whose interiors intersect.
///
/// For each pair, maximizes the radius `t <= 1` of a ball contained in both
/// polytopes; a positive optimum means a shared interior point.
pub fn overlapping_pairs(f: &PwaFunction) -> Result<Vec<(usize, usize)>> {
    let n = f.n();
    let lifted: Vec<Vec<Halfspace>> = f
        .regions()
        .iter()
        .map(|r| {
            r.halfspaces()
                .map(|(a, b)| {
                    let mut c = a.to_vec();
                    c.push(dot(a, a).sqrt());
                    Halfspace::new(c, b)
                })
                .collect()
        })
        .collect();
    let mut cap = vec![0.0; n + 1];
    cap[n] = 1.0;
    let cap = Halfspace::new(cap, 1.0);
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;

    let mut out = Vec::new();
    for i in 0..lifted.len() {
        for j in i + 1..lifted.len() {
            let mut cons = lifted[i].clone();
            cons.extend_from_slice(&lifted[j]);
            cons.push(cap.clone());
            if let LpResult::Optimal { value, .. } = solve_lp(&LpProblem::new(obj.clone(), cons)?)? {
                if value > INTERIOR_TOL {
                    out.push((i, j));
                }
            }
        }
    }
    Ok(out)
}
