//! Acceptance gate. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (uncaptured) and then asserts. Tolerances are pinned below.

use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use yann::bench::{run_bench, BenchMethod, BenchOptions};
use yann::bigm::{compute_big_m_exact, compute_big_m_interval, resolve_domain};
use yann::compiler::{
    assemble_checker, assemble_yann, assemble_yann_l, build_first_hit_layer, Activation, LayerSpec,
    Network,
};
use yann::generate::{generate_continuous_vector_pwa, generate_max_affine, generate_vector_pwa};
use yann::inference::{forward_dense, DenseEngine, Precision, Scratch, StructuredPlan};
use yann::matrix::Matrix;
use yann::sim::{simulate, LtiSystem, NaiveController, NetworkController};
use yann::{evaluate_naive, BoxDomain, PwaFunction, Region};

/// Criterion 1: `|YANN − naive| / max(1, |naive|)`.
const EXACT_REL_TOL: f64 = 1e-9;
/// Criterion 2: YANN-L vs YANN, same metric.
const VARIANT_REL_TOL: f64 = 1e-9;
/// Criterion 2: problems at or above this size enter the FP32 ordering check.
const LARGE_P: usize = 500;
/// Criterion 4.
const BIGM_SAMPLES: usize = 100_000;
const BIGM_SLACK: f64 = 0.5;
/// Criterion 6.
const SPEED_P: usize = 2000;
const SPEEDUP: f64 = 2.0;
/// Criterion 7: absolute FP32 error against FP64 naive.
const FP32_ABS_TOL: f64 = 1e-3;
/// Criterion 8: per-step absolute deviation.
const PARITY_TOL: f64 = 1e-9;

const POINTS_PER_PROBLEM: usize = 1000;
const FACET_PAIRS: usize = 100;
const SUITE_SEED: u64 = 20_240_611;

/// Timing-sensitive and memory-heavy checks run one at a time.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u8, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    writeln!(err, "criterion {id}: {verdict}: {detail}").ok();
}

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn abs_err(got: &[f64], want: &[f64]) -> f64 {
    got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    MaxAffine,
    Vector,
    ContinuousVector,
}

struct Problem {
    kind: Kind,
    f: PwaFunction,
    yann: Network,
    yann_l: Network,
    uniform: Vec<Vec<f64>>,
    /// Points within an ulp of a region boundary, plus exact ties.
    facets: Vec<Vec<f64>>,
    /// How many facet points lie in two or more regions at once.
    ties: usize,
}

impl Problem {
    fn continuous(&self) -> bool {
        self.kind != Kind::Vector
    }

    fn points(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.uniform.iter().chain(&self.facets)
    }
}

fn uniform_points(f: &PwaFunction, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dom = f.domain_box().expect("generated functions carry a box");
    let mut pts = Vec::with_capacity(POINTS_PER_PROBLEM);
    while pts.len() < POINTS_PER_PROBLEM {
        let x = dom.sample(rng);
        if f.locate(&x).is_some() {
            pts.push(x);
        }
    }
    pts
}

/// Bisects segments between points of different regions down to adjacent
/// floats, keeping both ends; adds exact ties where a row's boundary is
/// representable (1-D breakpoints) and the domain corners.
fn facet_points(f: &PwaFunction, uniform: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < 2 * FACET_PAIRS && tries < 50 * FACET_PAIRS {
        tries += 1;
        let a = &uniform[rng.gen_range(0..uniform.len())];
        let b = &uniform[rng.gen_range(0..uniform.len())];
        let ra = f.locate(a);
        if ra == f.locate(b) {
            continue;
        }
        let at = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + t * (v - u)).collect() };
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f.locate(&at(mid)) == ra {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(at(lo));
        out.push(at(hi));
    }
    if f.n() == 1 {
        for r in f.regions() {
            for (a, b) in r.halfspaces() {
                let x = b / a[0];
                for v in [x, next_down(x), next_up(x)] {
                    out.push(vec![v]);
                }
            }
        }
    }
    let dom = f.domain_box().unwrap();
    for mask in 0..(1usize << f.n().min(8)) {
        out.push(
            (0..f.n())
                .map(|i| if mask >> i & 1 == 1 { dom.hi[i] } else { dom.lo[i] })
                .collect(),
        );
    }
    out.retain(|x| dom.contains(x) && f.locate(x).is_some());
    out
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        f64::from_bits(1)
    } else if x > 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

fn build_problem(kind: Kind, n: usize, m: usize, p: usize, seed: u64) -> Problem {
    let dom = BoxDomain::cube(n, -1.0, 1.0).unwrap();
    let f = match kind {
        Kind::MaxAffine => generate_max_affine(seed, n, p, &dom).unwrap().function,
        Kind::Vector => generate_vector_pwa(seed, n, m, p, &dom).unwrap(),
        Kind::ContinuousVector => generate_continuous_vector_pwa(seed, n, m, p, &dom).unwrap(),
    };
    let big_m = compute_big_m_exact(&f, &resolve_domain(&f, None).unwrap()).unwrap();
    let yann = assemble_yann(&f, &big_m).unwrap();
    let yann_l = assemble_yann_l(&f).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31));
    let uniform = uniform_points(&f, &mut rng);
    let facets = facet_points(&f, &uniform, &mut rng);
    let ties = facets
        .iter()
        .filter(|x| f.regions().iter().filter(|r| r.contains_unchecked(x, 0.0)).count() >= 2)
        .count();
    Problem {
        kind,
        f,
        yann,
        yann_l,
        uniform,
        facets,
        ties,
    }
}

/// 54 problems over n ∈ {1,2,4,8}, m ∈ {1,2,4}, p ∈ [2, 200], plus three
/// with p >= 500 for the precision ordering.
fn suite() -> &'static [Problem] {
    static SUITE: OnceLock<Vec<Problem>> = OnceLock::new();
    SUITE.get_or_init(|| {
        let sizes: &[(usize, &[usize])] = &[
            (1, &[2, 8, 30, 90, 200]),
            (2, &[3, 12, 45, 120, 200]),
            (4, &[4, 15, 35, 60]),
            (8, &[2, 6, 12, 20]),
        ];
        let mut specs = Vec::new();
        let mut seed = SUITE_SEED;
        for &(n, ps) in sizes {
            for (i, &p) in ps.iter().enumerate() {
                let (mv, mc) = if i % 2 == 0 { (2, 4) } else { (4, 2) };
                for (kind, m) in [(Kind::MaxAffine, 1), (Kind::Vector, mv), (Kind::ContinuousVector, mc)] {
                    seed += 1;
                    specs.push((kind, n, m, p, seed));
                }
            }
        }
        specs.push((Kind::ContinuousVector, 1, 2, 540, SUITE_SEED + 900));
        specs.push((Kind::MaxAffine, 2, 1, 520, SUITE_SEED + 901));
        specs.push((Kind::ContinuousVector, 2, 2, 560, SUITE_SEED + 902));
        specs
            .into_iter()
            .map(|(kind, n, m, p, seed)| build_problem(kind, n, m, p, seed))
            .collect()
    })
}

/// Test-local first-hit scan, written independently of the library.
fn oracle_first_hit(f: &PwaFunction, x: &[f64]) -> Option<usize> {
    f.regions().iter().position(|r| {
        r.halfspaces().all(|(a, b)| {
            let mut s = 0.0;
            for i in 0..a.len() {
                s += a[i] * x[i];
            }
            s <= b
        })
    })
}

#[test]
fn criterion_1_exact_representation() {
    let _g = serial();
    let start = Instant::now();
    let suite = suite();
    let build = start.elapsed();
    let mut worst = 0.0_f64;
    let mut index_mismatch = 0usize;
    let mut oracle_mismatch = 0usize;
    let mut total = 0usize;
    let mut facet_total = 0usize;
    let mut ties = 0usize;
    let mut dims = std::collections::BTreeSet::new();
    let mut outs = std::collections::BTreeSet::new();
    let (mut p_min, mut p_max) = (usize::MAX, 0);
    for pr in suite.iter().filter(|pr| pr.f.p() <= 200) {
        dims.insert(pr.f.n());
        outs.insert(pr.f.m());
        p_min = p_min.min(pr.f.p());
        p_max = p_max.max(pr.f.p());
        let engine = DenseEngine::<f64>::new(&pr.yann).unwrap();
        for x in pr.points() {
            let want = evaluate_naive(&pr.f, x).unwrap();
            let got = engine.forward(x).unwrap();
            worst = worst.max(rel_err(&got.output, &want.output));
            if got.region_index != want.region_index {
                index_mismatch += 1;
            }
            if oracle_first_hit(&pr.f, x) != want.region_index {
                oracle_mismatch += 1;
            }
            total += 1;
        }
        facet_total += pr.facets.len();
        ties += pr.ties;
    }
    let n_problems = suite.iter().filter(|pr| pr.f.p() <= 200).count();
    let elapsed = start.elapsed();
    let pass = n_problems >= 50
        && dims.len() == 4
        && outs.len() == 3
        && worst <= EXACT_REL_TOL
        && index_mismatch == 0
        && oracle_mismatch == 0
        && ties > 0
        && elapsed < Duration::from_secs(120);
    report(
        1,
        pass,
        &format!(
            "{n_problems} problems, n∈{dims:?}, m∈{outs:?}, p∈[{p_min},{p_max}], {total} points \
             ({facet_total} facet, {ties} exact ties); max rel err {worst:.2e} (tol {EXACT_REL_TOL:.0e}); \
             index mismatches {index_mismatch}; build {:.1}s, total {:.1}s",
            build.as_secs_f64(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_variant_equivalence() {
    let _g = serial();
    let suite = suite();
    let mut worst = 0.0_f64;
    let mut index_mismatch = 0;
    for pr in suite {
        let a = DenseEngine::<f64>::new(&pr.yann).unwrap();
        let b = DenseEngine::<f64>::new(&pr.yann_l).unwrap();
        for x in pr.points() {
            let ya = a.forward(x).unwrap();
            let yb = b.forward(x).unwrap();
            worst = worst.max(rel_err(&yb.output, &ya.output));
            if ya.region_index != yb.region_index {
                index_mismatch += 1;
            }
        }
    }
    // FP32 ordering on the large problems. The structured path reproduces the
    // dense arithmetic exactly; a dense spot check confirms it per problem.
    let mut lines = Vec::new();
    let mut wins = 0;
    let mut large = 0;
    let mut spot_ok = true;
    for pr in suite.iter().filter(|pr| pr.f.p() >= LARGE_P) {
        large += 1;
        let sa = StructuredPlan::<f32>::new(&pr.yann).unwrap();
        let sb = StructuredPlan::<f32>::new(&pr.yann_l).unwrap();
        let da = DenseEngine::<f32>::new(&pr.yann).unwrap();
        let db = DenseEngine::<f32>::new(&pr.yann_l).unwrap();
        let (mut ea, mut eb) = (0.0_f64, 0.0_f64);
        for (i, x) in pr.uniform.iter().enumerate() {
            let want = evaluate_naive(&pr.f, x).unwrap().output;
            let ya = sa.forward(x).unwrap();
            let yb = sb.forward(x).unwrap();
            if i < 25 {
                spot_ok &= da.forward(x).unwrap() == ya && db.forward(x).unwrap() == yb;
            }
            ea = ea.max(abs_err(&ya.output, &want));
            eb = eb.max(abs_err(&yb.output, &want));
        }
        if eb < ea {
            wins += 1;
        }
        lines.push(format!("p={} yann {ea:.2e} yann_l {eb:.2e}", pr.f.p()));
    }
    let pass = worst <= VARIANT_REL_TOL && index_mismatch == 0 && large >= 3 && 2 * wins > large && spot_ok;
    report(
        2,
        pass,
        &format!(
            "{} problems: max rel diff {worst:.2e} (tol {VARIANT_REL_TOL:.0e}), index mismatches {index_mismatch}; \
             FP32 max abs err, YANN-L lower on {wins}/{large} problems with p>={LARGE_P}: [{}]",
            suite.len(),
            lines.join("; ")
        ),
    );
    assert!(pass);
}

fn apply(layer: &LayerSpec, x: &[f64]) -> Vec<f64> {
    (0..layer.rows())
        .map(|r| {
            let z = layer.weights.row(r).iter().zip(x).fold(0.0, |s, (w, v)| s + w * v);
            layer.activation.apply(z + layer.bias[r])
        })
        .collect()
}

#[test]
fn criterion_3_selector_exhaustive() {
    let start = Instant::now();
    let mut checked = 0usize;
    let mut cases = [0usize; 3];
    let mut bad = 0usize;
    for s in 1..=12usize {
        let layer = build_first_hit_layer(s).unwrap();
        for bits in 0u32..(1 << s) {
            let d: Vec<f64> = (0..s).map(|i| f64::from(bits >> i & 1)).collect();
            let mut want = vec![0.0; s];
            if let Some(first) = d.iter().position(|&v| v == 1.0) {
                want[first] = 1.0;
            }
            match bits.count_ones() {
                0 => cases[0] += 1,
                1 => cases[1] += 1,
                _ => cases[2] += 1,
            }
            if apply(&layer, &d) != want {
                bad += 1;
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = bad == 0 && cases.iter().all(|&c| c > 0) && elapsed < Duration::from_secs(5);
    report(
        3,
        pass,
        &format!(
            "{checked} binary inputs for s=1..12, mismatches {bad}; all-zero {} / single {} / multiple {}; {:.2}s",
            cases[0],
            cases[1],
            cases[2],
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_big_m_validity() {
    let _g = serial();
    let suite = suite();
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED ^ 4);
    let mut worst_gap = f64::INFINITY;
    let mut interval_below = 0;
    let mut annihilation_bad = 0usize;
    let mut annihilation_checked = 0usize;
    for pr in suite {
        let m_val = pr.yann.big_m.as_ref().unwrap().value;
        let dom = pr.f.domain_box().unwrap();
        let mut peak = 0.0_f64;
        for _ in 0..BIGM_SAMPLES {
            let x = dom.sample(&mut rng);
            for r in pr.f.regions() {
                for v in r.eval_map(&x) {
                    peak = peak.max(v.abs());
                }
            }
        }
        worst_gap = worst_gap.min(m_val - (peak + BIGM_SLACK));
        let interval = compute_big_m_interval(&pr.f, dom).unwrap();
        if interval.tight_value < pr.yann.big_m.as_ref().unwrap().tight_value - 1e-12 {
            interval_below += 1;
        }
        // Gated layers with a zero selector give exactly zero everywhere.
        let (l4, l5) = (&pr.yann.layers[3], &pr.yann.layers[4]);
        for _ in 0..200 {
            let x = dom.sample(&mut rng);
            let mut input = vec![0.0; pr.f.p()];
            input.extend_from_slice(&x);
            let hidden = apply(l4, &input);
            let out = apply(l5, &hidden);
            annihilation_checked += 1;
            if hidden.iter().chain(&out).any(|&v| v != 0.0) {
                annihilation_bad += 1;
            }
        }
    }
    let pass = worst_gap >= 0.0 && annihilation_bad == 0 && interval_below == 0;
    report(
        4,
        pass,
        &format!(
            "{} networks × {BIGM_SAMPLES} samples: min(M − max|f_k| − {BIGM_SLACK}) = {worst_gap:.3}; \
             zero-selector outputs nonzero {annihilation_bad}/{annihilation_checked}; interval below exact {interval_below}",
            suite.len()
        ),
    );
    assert!(pass);
}

/// Integer solutions of `2a² + b² + c² = 80`, scaled by 1/4, are exact
/// dyadic points of `2(x−2)² + y² + z² = 5`.
fn ellipsoid_points() -> Vec<[f64; 3]> {
    let mut pts = Vec::new();
    for a in -7i32..=7 {
        for b in -9i32..=9 {
            for c in -9i32..=9 {
                if 2 * a * a + b * b + c * c == 80 {
                    pts.push([2.0 + a as f64 / 4.0, b as f64 / 4.0, c as f64 / 4.0]);
                }
            }
        }
    }
    pts
}

#[test]
fn criterion_5_ellipsoid_checker() {
    let f = PwaFunction::from_json(
        r#"{ "n": 4, "m": 1, "regions": [
            { "A": [[-2, -1, -1, 8], [2, 1, 1, -8]], "b": [3, -3],
              "K": [[0, 0, 0, 0]], "r": [0] } ] }"#,
    )
    .unwrap();
    let net = assemble_checker(&f).unwrap();
    let weights_ok = net.layers[0].weights.to_rows()
        == vec![vec![2.0, 1.0, 1.0, -8.0], vec![-2.0, -1.0, -1.0, 8.0]]
        && net.layers[0].bias == vec![3.0, -3.0]
        && net.layers[1].weights.to_rows() == vec![vec![1.0, 1.0]]
        && net.layers[1].bias == vec![-1.0]
        && net.layers[0].activation == Activation::Bsf
        && net.layers[1].activation == Activation::Relu;
    let all = ellipsoid_points();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let on: Vec<[f64; 3]> = (0..10).map(|_| all[rng.gen_range(0..all.len())]).collect();
    // Radial scaling by 5/4 about the centre: the quadric evaluates to
    // 5 · 25/16 ≠ 5. The origin evaluates to 8.
    let mut off: Vec<[f64; 3]> = on
        .iter()
        .take(9)
        .map(|p| [2.0 + 1.25 * (p[0] - 2.0), 1.25 * p[1], 1.25 * p[2]])
        .collect();
    off.push([0.0, 0.0, 0.0]);
    let lift = |p: &[f64; 3]| vec![p[0] * p[0], p[1] * p[1], p[2] * p[2], p[0]];
    let quadric = |p: &[f64; 3]| 2.0 * (p[0] - 2.0).powi(2) + p[1] * p[1] + p[2] * p[2];
    let analytic_ok = on.iter().all(|p| quadric(p) == 5.0) && off.iter().all(|p| quadric(p) != 5.0);
    let on_out: Vec<f64> = on
        .iter()
        .map(|p| forward_dense(&net, &lift(p), Precision::Fp64).unwrap().output[0])
        .collect();
    let off_out: Vec<f64> = off
        .iter()
        .map(|p| forward_dense(&net, &lift(p), Precision::Fp64).unwrap().output[0])
        .collect();
    let pass = weights_ok
        && analytic_ok
        && on_out.iter().all(|&v| v == 1.0)
        && off_out.iter().all(|&v| v == 0.0);
    report(
        5,
        pass,
        &format!(
            "weights match {weights_ok}; on-surface outputs {on_out:?}; off-surface outputs {off_out:?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_speed() {
    let _g = serial();
    let start = Instant::now();
    let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
    // The generator drops pieces that own no interior; ask for a few extra.
    let f = generate_max_affine(SUITE_SEED ^ 6, 2, SPEED_P + 20, &dom).unwrap().function;
    let big_m = compute_big_m_exact(&f, &resolve_domain(&f, None).unwrap()).unwrap();
    let net = assemble_yann(&f, &big_m).unwrap();
    let opts = BenchOptions {
        n_points: 1000,
        methods: vec![BenchMethod::Naive, BenchMethod::StructuredForward],
        precision: Precision::Fp64,
        seed: 6,
        worst_case: true,
        warmup: 2,
        repeats: 5,
    };
    let result = run_bench(&f, &net, &opts);
    let elapsed = start.elapsed();
    let (pass, detail) = match result {
        Ok(r) => {
            let naive = r.stats_for(BenchMethod::Naive).unwrap().mean_us;
            let fast = r.stats_for(BenchMethod::StructuredForward).unwrap().mean_us;
            let ratio = naive / fast;
            (
                f.p() >= SPEED_P && ratio >= SPEEDUP && elapsed < Duration::from_secs(180),
                format!(
                    "p={} q={}, last-region queries: naive {naive:.2} µs, structured {fast:.2} µs, \
                     speedup {ratio:.2}× (need {SPEEDUP}×); gate max abs err {:.2e}; {:.1}s",
                    f.p(),
                    f.q(),
                    r.max_abs_error,
                    elapsed.as_secs_f64()
                ),
            )
        }
        Err(e) => (false, format!("correctness gate failed: {e}")),
    };
    report(6, pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_7_fp32() {
    let _g = serial();
    let suite = suite();
    let mut worst_required = 0.0_f64;
    let mut worst_facet_discontinuous = 0.0_f64;
    let mut per_problem = Vec::new();
    for pr in suite {
        let plan = StructuredPlan::<f32>::new(&pr.yann).unwrap();
        let mut scratch = Scratch::default();
        let mut out = Vec::new();
        let mut err = |x: &Vec<f64>| {
            plan.forward_into(x, &mut scratch, &mut out).unwrap();
            abs_err(&out, &evaluate_naive(&pr.f, x).unwrap().output)
        };
        let uniform = pr.uniform.iter().map(&mut err).fold(0.0, f64::max);
        let facet = pr.facets.iter().map(&mut err).fold(0.0, f64::max);
        if pr.continuous() {
            worst_required = worst_required.max(uniform.max(facet));
        } else {
            worst_required = worst_required.max(uniform);
            worst_facet_discontinuous = worst_facet_discontinuous.max(facet);
        }
        per_problem.push(format!("{:.1e}", uniform.max(if pr.continuous() { facet } else { 0.0 })));
    }
    let pass = worst_required <= FP32_ABS_TOL;
    report(
        7,
        pass,
        &format!(
            "FP32 YANN vs FP64 naive, max abs err {worst_required:.2e} (tol {FP32_ABS_TOL:.0e}); \
             discontinuous facet points (reported only) {worst_facet_discontinuous:.2e}; per problem [{}]",
            per_problem.join(" ")
        ),
    );
    assert!(pass);
}

fn slab_law(
    n: usize,
    k: &[f64],
    sat: f64,
    state_box: &BoxDomain,
) -> PwaFunction {
    // u = clip(−k·x, ±sat) as three slabs in the state box.
    let dom = state_box.halfspaces();
    let mut regions = Vec::new();
    let neg: Vec<f64> = k.iter().map(|v| -v).collect();
    let with = |extra: Vec<(Vec<f64>, f64)>, gain: Vec<f64>, offset: f64| {
        let mut rows: Vec<Vec<f64>> = extra.iter().map(|(a, _)| a.clone()).collect();
        let mut rhs: Vec<f64> = extra.iter().map(|(_, b)| *b).collect();
        for h in &dom {
            rows.push(h.coeffs.clone());
            rhs.push(h.offset);
        }
        Region::from_parts(
            Matrix::from_rows(&rows, n).unwrap(),
            rhs,
            Matrix::from_vec(1, n, gain).unwrap(),
            vec![offset],
        )
        .unwrap()
    };
    // −k·x >= sat  ⇔  k·x <= −sat.
    regions.push(with(vec![(k.to_vec(), -sat)], vec![0.0; n], sat));
    regions.push(with(vec![(k.to_vec(), sat), (neg.clone(), sat)], neg.clone(), 0.0));
    regions.push(with(vec![(neg, -sat)], vec![0.0; n], -sat));
    PwaFunction::new(n, 1, regions, Some(state_box.clone())).unwrap()
}

fn parity_run(sys: &LtiSystem, law: &PwaFunction, init: &BoxDomain, seed: u64) -> (f64, usize, usize) {
    let big_m = compute_big_m_exact(law, &resolve_domain(law, None).unwrap()).unwrap();
    let net = assemble_yann(law, &big_m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut settled = 0;
    let mut mismatched_len = 0;
    for _ in 0..100 {
        let x0 = init.sample(&mut rng);
        let a = simulate(sys, &mut NetworkController::new(&net).unwrap(), &x0, 100).unwrap();
        let b = simulate(sys, &mut NaiveController(law), &x0, 100).unwrap();
        if a.states.len() != b.states.len() || a.regions != b.regions {
            mismatched_len += 1;
        }
        worst = worst.max(a.max_deviation(&b));
        let last = a.states.last().unwrap();
        if last.iter().all(|v| v.abs() < 1e-2) {
            settled += 1;
        }
    }
    (worst, settled, mismatched_len)
}

#[test]
fn criterion_8_closed_loop_parity() {
    let di = LtiSystem::new(
        Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]], 2).unwrap(),
        Matrix::from_rows(&[vec![0.0], vec![1.0]], 1).unwrap(),
        Matrix::from_rows(&[vec![1.0, 2.0]], 2).unwrap(),
        Matrix::zeros(1, 1),
    )
    .unwrap();
    let di_box = BoxDomain::cube(2, -10.0, 10.0).unwrap();
    // Unsaturated closed loop A − BK has |λ|² = det = 0.5.
    let di_law = slab_law(2, &[0.1, 0.6], 1.0, &di_box);
    let di_init = BoxDomain::new(vec![-3.0, -1.0], vec![3.0, 1.0]).unwrap();
    let (e1, s1, m1) = parity_run(&di, &di_law, &di_init, 81);

    let cstr = LtiSystem::new(
        Matrix::from_rows(
            &[
                vec![0.9506, 0.0, 0.0, 0.0],
                vec![-0.0484, 0.9943, 0.0, 0.0],
                vec![0.0, 0.0, 0.9909, 0.0],
                vec![0.6970, 0.0678, 0.0, 1.0030],
            ],
            4,
        )
        .unwrap(),
        Matrix::from_rows(&[vec![0.0], vec![0.0], vec![0.0], vec![-0.0007]], 1).unwrap(),
        Matrix::from_rows(&[vec![0.0, 0.0, 0.0, 1.0]], 4).unwrap(),
        Matrix::zeros(1, 1),
    )
    .unwrap();
    let cstr_box = BoxDomain::new(vec![-10.0, -10.0, -10.0, -20.0], vec![10.0, 10.0, 10.0, 20.0]).unwrap();
    // u = clip(1000·T, ±55): the T mode becomes 1.003 − 0.7 = 0.303; the
    // remaining modes are the stable diagonal of the lower-triangular A.
    let cstr_law = slab_law(4, &[0.0, 0.0, 0.0, -1000.0], 55.0, &cstr_box);
    let cstr_init = BoxDomain::new(vec![-0.05, -0.05, -0.05, -0.5], vec![0.05, 0.05, 0.05, 0.5]).unwrap();
    let (e2, s2, m2) = parity_run(&cstr, &cstr_law, &cstr_init, 82);

    let pass = e1 <= PARITY_TOL && e2 <= PARITY_TOL && m1 == 0 && m2 == 0;
    report(
        8,
        pass,
        &format!(
            "100 initial states × 100 steps: double integrator max dev {e1:.2e} ({s1}/100 settled), \
             CSTR max dev {e2:.2e} ({s2}/100 settled); region/length mismatches {}",
            m1 + m2
        ),
    );
    assert!(pass);
}
