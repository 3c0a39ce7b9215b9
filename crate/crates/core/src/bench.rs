//! Latency harness: compiled-network inference against the sequential
//! first-hit scan, over an identical input set.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compiler::Network;
use crate::error::{Error, Result};
use crate::inference::{DenseEngine, Precision, Real, Scratch, StructuredPlan};
use crate::lp::chebyshev_center;
use crate::matrix::Matrix;
use crate::pwa::{evaluate_naive, PwaFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Naive,
    DenseForward,
    StructuredForward,
    BatchForward,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 4] = [
        BenchMethod::Naive,
        BenchMethod::DenseForward,
        BenchMethod::StructuredForward,
        BenchMethod::BatchForward,
    ];
}

impl std::str::FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(BenchMethod::Naive),
            "dense" | "dense_forward" => Ok(BenchMethod::DenseForward),
            "structured" | "structured_forward" => Ok(BenchMethod::StructuredForward),
            "batch" | "batch_forward" => Ok(BenchMethod::BatchForward),
            _ => Err(Error::InvalidNetwork(format!(
                "unknown bench method `{s}` (naive|dense|structured|batch)"
            ))),
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMethod::Naive => "naive",
            BenchMethod::DenseForward => "dense",
            BenchMethod::StructuredForward => "structured",
            BenchMethod::BatchForward => "batch",
        })
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub n_points: usize,
    pub methods: Vec<BenchMethod>,
    pub precision: Precision,
    pub seed: u64,
    /// Time only queries inside the last region, where the scan is slowest.
    pub worst_case: bool,
    /// Untimed passes over the input set before measuring.
    pub warmup: usize,
    /// Timed passes; every pass contributes `n_points` samples.
    pub repeats: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            n_points: 1000,
            methods: BenchMethod::ALL.to_vec(),
            precision: Precision::Fp64,
            seed: 0,
            worst_case: false,
            warmup: 1,
            repeats: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: BenchMethod,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    /// Wall time of one pass over all `n_points` inputs.
    pub total_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub n_points: usize,
    pub precision: Precision,
    pub worst_case: bool,
    pub seed: u64,
    /// Largest network-vs-naive output difference over the input set.
    pub max_abs_error: f64,
    pub stats: Vec<MethodStats>,
}

impl BenchReport {
    pub fn stats_for(&self, method: BenchMethod) -> Option<&MethodStats> {
        self.stats.iter().find(|s| s.method == method)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "n={} m={} p={} q={} points={} precision={} set={} max_abs_error={:.3e}",
            self.n,
            self.m,
            self.p,
            self.q,
            self.n_points,
            self.precision,
            if self.worst_case { "last-region" } else { "uniform" },
            self.max_abs_error
        )?;
        writeln!(
            f,
            "{:<12} {:>12} {:>12} {:>12} {:>12}",
            "method", "mean_us", "p50_us", "p99_us", "total_s"
        )?;
        for s in &self.stats {
            writeln!(
                f,
                "{:<12} {:>12.3} {:>12.3} {:>12.3} {:>12.6}",
                s.method.to_string(),
                s.mean_us,
                s.p50_us,
                s.p99_us,
                s.total_s
            )?;
        }
        Ok(())
    }
}

/// `n_points` inputs that the naive evaluator places in some region.
pub fn sample_in_domain(f: &PwaFunction, n_points: usize, seed: u64) -> Result<Matrix> {
    let domain = crate::bigm::union_bounding_box(f)?;
    let domain = f.domain_box().cloned().unwrap_or(domain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_points);
    let budget = 1000 * n_points.max(1);
    for _ in 0..budget {
        if rows.len() == n_points {
            break;
        }
        let x = domain.sample(&mut rng);
        if f.locate(&x).is_some() {
            rows.push(x);
        }
    }
    if rows.len() < n_points {
        return Err(Error::Generator(format!(
            "only {} of {n_points} samples landed in the partition",
            rows.len()
        )));
    }
    Matrix::from_rows(&rows, f.n())
}

/// `n_points` inputs strictly inside the last region: uniform in a cube
/// inscribed in 0.9× its Chebyshev ball.
pub fn sample_last_region(f: &PwaFunction, n_points: usize, seed: u64) -> Result<Matrix> {
    let last = f.p() - 1;
    let (center, radius) = chebyshev_center(&f.regions()[last].to_halfspaces())?
        .ok_or_else(|| Error::Generator("last region has no interior".into()))?;
    let half = 0.9 * radius / (f.n() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_points);
    // An earlier region can claim an interior point only if regions overlap.
    for _ in 0..100 * n_points {
        if rows.len() == n_points {
            break;
        }
        let x: Vec<f64> = center.iter().map(|c| c + rng.gen_range(-half..=half)).collect();
        if f.locate(&x) == Some(last) {
            rows.push(x);
        }
    }
    if rows.len() < n_points {
        return Err(Error::Generator("last region is shadowed by an earlier region".into()));
    }
    Matrix::from_rows(&rows, f.n())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn summarize(method: BenchMethod, mut samples: Vec<f64>, pass_s: f64) -> MethodStats {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.sort_by(f64::total_cmp);
    MethodStats {
        method,
        mean_us: mean * 1e6,
        p50_us: percentile(&samples, 0.5) * 1e6,
        p99_us: percentile(&samples, 0.99) * 1e6,
        total_s: pass_s,
    }
}

/// Per-call timing: each evaluation is timed individually on a monotonic clock.
fn time_per_call(
    xs: &Matrix,
    warmup: usize,
    repeats: usize,
    mut eval: impl FnMut(&[f64]) -> Result<()>,
) -> Result<(Vec<f64>, f64)> {
    for _ in 0..warmup {
        for i in 0..xs.rows() {
            eval(xs.row(i))?;
        }
    }
    let mut samples = Vec::with_capacity(xs.rows() * repeats);
    let mut best_pass = f64::INFINITY;
    for _ in 0..repeats {
        let pass = Instant::now();
        for i in 0..xs.rows() {
            let t = Instant::now();
            eval(xs.row(i))?;
            samples.push(t.elapsed().as_secs_f64());
        }
        best_pass = best_pass.min(pass.elapsed().as_secs_f64());
    }
    Ok((samples, best_pass))
}

struct Outputs {
    values: Matrix,
    regions: Vec<Option<usize>>,
}

fn compare(name: BenchMethod, got: &Outputs, want: &Outputs, tol: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..want.values.rows() {
        for (a, b) in got.values.row(i).iter().zip(want.values.row(i)) {
            let d = (a - b).abs();
            worst = worst.max(d);
            if !(d <= tol * b.abs().max(1.0)) {
                return Err(Error::Mismatch(format!(
                    "{name}: point {i} differs by {d:.3e} ({a} vs {b}); regions {:?} vs {:?}",
                    got.regions[i], want.regions[i]
                )));
            }
        }
    }
    Ok(worst)
}

fn run_typed<T: Real>(f: &PwaFunction, net: &Network, xs: &Matrix, opts: &BenchOptions) -> Result<BenchReport> {
    let (n_pts, m) = (xs.rows(), f.m());
    let dense = DenseEngine::<T>::new(net)?;
    let plan = StructuredPlan::<T>::new(net)?;
    let needs_dense = opts
        .methods
        .iter()
        .any(|m| matches!(m, BenchMethod::DenseForward | BenchMethod::BatchForward));

    // Correct before fast: collect every method's outputs first.
    let mut naive = Outputs {
        values: Matrix::zeros(n_pts, m),
        regions: Vec::with_capacity(n_pts),
    };
    for i in 0..n_pts {
        let r = evaluate_naive(f, xs.row(i))?;
        naive.values.row_mut(i).copy_from_slice(&r.output);
        naive.regions.push(r.region_index);
    }
    let structured = {
        let b = plan.forward_batch(xs)?;
        Outputs {
            values: b.outputs,
            regions: b.regions,
        }
    };
    // Fp64 gates every method against the naive scan. Fp32 gates network
    // paths against each other and reports the Fp32 error separately.
    let gate_tol = 1e-6;
    let max_abs_error = match opts.precision {
        Precision::Fp64 => compare(BenchMethod::StructuredForward, &structured, &naive, gate_tol)?,
        Precision::Fp32 => compare(BenchMethod::StructuredForward, &structured, &naive, f64::INFINITY)?,
    };
    let reference = match opts.precision {
        Precision::Fp64 => &naive,
        Precision::Fp32 => &structured,
    };
    if needs_dense {
        let mut d = Outputs {
            values: Matrix::zeros(n_pts, m),
            regions: Vec::with_capacity(n_pts),
        };
        for i in 0..n_pts {
            let r = dense.forward(xs.row(i))?;
            d.values.row_mut(i).copy_from_slice(&r.output);
            d.regions.push(r.region_index);
        }
        compare(BenchMethod::DenseForward, &d, reference, gate_tol)?;
        let b = dense.forward_batch(xs)?;
        compare(
            BenchMethod::BatchForward,
            &Outputs {
                values: b.outputs,
                regions: b.regions,
            },
            reference,
            gate_tol,
        )?;
    }

    let mut stats = Vec::with_capacity(opts.methods.len());
    for &method in &opts.methods {
        let s = match method {
            BenchMethod::Naive => {
                let (s, pass) = time_per_call(xs, opts.warmup, opts.repeats, |x| {
                    std::hint::black_box(evaluate_naive(f, std::hint::black_box(x))?);
                    Ok(())
                })?;
                summarize(method, s, pass)
            }
            BenchMethod::DenseForward => {
                let (s, pass) = time_per_call(xs, opts.warmup, opts.repeats, |x| {
                    std::hint::black_box(dense.forward(std::hint::black_box(x))?);
                    Ok(())
                })?;
                summarize(method, s, pass)
            }
            BenchMethod::StructuredForward => {
                let mut scratch = Scratch::default();
                let mut out = Vec::with_capacity(m);
                let (s, pass) = time_per_call(xs, opts.warmup, opts.repeats, |x| {
                    std::hint::black_box(plan.forward_into(std::hint::black_box(x), &mut scratch, &mut out)?);
                    Ok(())
                })?;
                summarize(method, s, pass)
            }
            BenchMethod::BatchForward => {
                // One call covers the whole set; per-evaluation latency is
                // the amortized share of each timed pass.
                for _ in 0..opts.warmup {
                    std::hint::black_box(dense.forward_batch(xs)?);
                }
                let mut per_eval = Vec::with_capacity(opts.repeats);
                for _ in 0..opts.repeats {
                    let t = Instant::now();
                    std::hint::black_box(dense.forward_batch(std::hint::black_box(xs))?);
                    per_eval.push(t.elapsed().as_secs_f64());
                }
                let best = per_eval.iter().copied().fold(f64::INFINITY, f64::min);
                let amortized = per_eval.iter().map(|t| t / n_pts as f64).collect();
                summarize(method, amortized, best)
            }
        };
        stats.push(s);
    }
    Ok(BenchReport {
        n: f.n(),
        m,
        p: f.p(),
        q: f.q(),
        n_points: n_pts,
        precision: opts.precision,
        worst_case: opts.worst_case,
        seed: opts.seed,
        max_abs_error,
        stats,
    })
}

/// Samples the input set, checks every method against the naive scan, then
/// times each method over the same inputs.
pub fn run_bench(f: &PwaFunction, net: &Network, opts: &BenchOptions) -> Result<BenchReport> {
    if opts.n_points < 1000 {
        return Err(Error::InvalidNetwork(format!(
            "benchmarks need at least 1000 points, got {}",
            opts.n_points
        )));
    }
    if opts.repeats == 0 || opts.methods.is_empty() {
        return Err(Error::InvalidNetwork("need at least one method and one repeat".into()));
    }
    if net.n != f.n() || net.m != f.m() || net.p != f.p() {
        return Err(Error::InvalidNetwork("network was not compiled from this function".into()));
    }
    let xs = if opts.worst_case {
        sample_last_region(f, opts.n_points, opts.seed)?
    } else {
        sample_in_domain(f, opts.n_points, opts.seed)?
    };
    match opts.precision {
        Precision::Fp64 => run_typed::<f64>(f, net, &xs, opts),
        Precision::Fp32 => run_typed::<f32>(f, net, &xs, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigm::{compute_big_m_exact, resolve_domain};
    use crate::compiler::assemble_yann;
    use crate::generate::generate_max_affine;
    use crate::pwa::BoxDomain;

    fn problem(p: usize) -> (PwaFunction, Network) {
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let f = generate_max_affine(11, 2, p, &dom).unwrap().function;
        let m = compute_big_m_exact(&f, &resolve_domain(&f, None).unwrap()).unwrap();
        let net = assemble_yann(&f, &m).unwrap();
        (f, net)
    }

    #[test]
    fn smoke_all_methods() {
        let (f, net) = problem(9);
        let opts = BenchOptions {
            repeats: 1,
            ..BenchOptions::default()
        };
        let r = run_bench(&f, &net, &opts).unwrap();
        assert_eq!(r.stats.len(), 4);
        for m in BenchMethod::ALL {
            let s = r.stats_for(m).unwrap();
            assert!(s.mean_us > 0.0 && s.p50_us <= s.p99_us);
        }
        assert!(r.max_abs_error <= 1e-9);
        let table = r.to_string();
        assert!(table.contains("structured"));
        let back: BenchReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.p, r.p);
    }

    #[test]
    fn sampling_is_deterministic() {
        let (f, _) = problem(9);
        assert_eq!(sample_in_domain(&f, 1000, 4).unwrap(), sample_in_domain(&f, 1000, 4).unwrap());
        let w = sample_last_region(&f, 1000, 4).unwrap();
        assert_eq!(w, sample_last_region(&f, 1000, 4).unwrap());
        assert!((0..w.rows()).all(|i| f.locate(w.row(i)) == Some(f.p() - 1)));
    }

    #[test]
    fn rejects_small_runs_and_mismatched_nets() {
        let (f, net) = problem(9);
        let small = BenchOptions {
            n_points: 10,
            ..BenchOptions::default()
        };
        assert!(run_bench(&f, &net, &small).is_err());
        let (g, _) = problem(5);
        assert!(run_bench(&g, &net, &BenchOptions::default()).is_err());
    }

    #[test]
    fn broken_network_fails_the_gate() {
        let (f, mut net) = problem(9);
        net.layers[3].bias[0] += 0.5;
        let opts = BenchOptions {
            methods: vec![BenchMethod::StructuredForward],
            repeats: 1,
            ..BenchOptions::default()
        };
        assert!(matches!(run_bench(&f, &net, &opts), Err(Error::Mismatch(_))));
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("structured".parse::<BenchMethod>().unwrap(), BenchMethod::StructuredForward);
        assert!("gpu".parse::<BenchMethod>().is_err());
    }
}
