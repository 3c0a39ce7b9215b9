//! Closed-loop simulation of discrete-time LTI plants under a PWA controller.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compiler::Network;
use crate::error::{check_dim, Error, Result};
use crate::inference::{DenseEngine, Precision, Scratch, StructuredPlan};
use crate::matrix::{dot, Matrix};
use crate::pwa::{evaluate_naive, BoxDomain, PwaFunction};

/// `x⁺ = A x + B u`, `y = C x + D u`, with optional interval constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub state_box: Option<BoxDomain>,
    pub input_box: Option<BoxDomain>,
    pub output_box: Option<BoxDomain>,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let n = a.rows();
        let bad = |m: String| Err(Error::InvalidSystem(m));
        if a.cols() != n {
            return bad(format!("A must be square, got {}x{}", n, a.cols()));
        }
        if b.rows() != n {
            return bad(format!("B needs {n} rows, got {}", b.rows()));
        }
        if c.cols() != n {
            return bad(format!("C needs {n} columns, got {}", c.cols()));
        }
        if d.rows() != c.rows() || d.cols() != b.cols() {
            return bad(format!(
                "D must be {}x{}, got {}x{}",
                c.rows(),
                b.cols(),
                d.rows(),
                d.cols()
            ));
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            state_box: None,
            input_box: None,
            output_box: None,
        })
    }

    pub fn with_boxes(
        mut self,
        state: Option<BoxDomain>,
        input: Option<BoxDomain>,
        output: Option<BoxDomain>,
    ) -> Result<Self> {
        let check = |b: &Option<BoxDomain>, n: usize, what: &'static str| match b {
            Some(b) => check_dim(what, n, b.dim()),
            None => Ok(()),
        };
        check(&state, self.nx(), "state box")?;
        check(&input, self.nu(), "input box")?;
        check(&output, self.ny(), "output box")?;
        self.state_box = state;
        self.input_box = input;
        self.output_box = output;
        Ok(self)
    }

    pub fn nx(&self) -> usize {
        self.a.rows()
    }

    pub fn nu(&self) -> usize {
        self.b.cols()
    }

    pub fn ny(&self) -> usize {
        self.c.rows()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SystemFile = serde_json::from_str(s)?;
        let mat = |rows: Vec<Vec<f64>>, cols: usize| Matrix::from_rows(&rows, cols);
        let nx = f.A.len();
        let nu = f.B.first().map_or(0, Vec::len);
        let ny = f.C.len();
        let d = match f.D {
            Some(d) => mat(d, nu)?,
            None => Matrix::zeros(ny, nu),
        };
        let boxed = |b: Option<BoxFile>| b.map(|b| BoxDomain::new(b.lo, b.hi)).transpose();
        Self::new(mat(f.A, nx)?, mat(f.B, nu)?, mat(f.C, nx)?, d)?.with_boxes(
            boxed(f.state_box)?,
            boxed(f.input_box)?,
            boxed(f.output_box)?,
        )
    }

    pub fn to_json(&self) -> String {
        let boxed = |b: &Option<BoxDomain>| {
            b.as_ref().map(|b| BoxFile {
                lo: b.lo.clone(),
                hi: b.hi.clone(),
            })
        };
        serde_json::to_string(&SystemFile {
            A: self.a.to_rows(),
            B: self.b.to_rows(),
            C: self.c.to_rows(),
            D: Some(self.d.to_rows()),
            state_box: boxed(&self.state_box),
            input_box: boxed(&self.input_box),
            output_box: boxed(&self.output_box),
        })
        .expect("system serialization")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[allow(non_snake_case)]
#[derive(Serialize, Deserialize)]
struct SystemFile {
    A: Vec<Vec<f64>>,
    B: Vec<Vec<f64>>,
    C: Vec<Vec<f64>>,
    #[serde(default)]
    D: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state_box: Option<BoxFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_box: Option<BoxFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_box: Option<BoxFile>,
}

#[derive(Serialize, Deserialize)]
struct BoxFile {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// One step of the plant. Returns `(x_next, y)`.
pub fn lti_step(sys: &LtiSystem, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim("state", sys.nx(), x.len())?;
    check_dim("input", sys.nu(), u.len())?;
    let affine = |m1: &Matrix, m2: &Matrix| -> Vec<f64> {
        (0..m1.rows())
            .map(|i| dot(m1.row(i), x) + dot(m2.row(i), u))
            .collect()
    };
    Ok((affine(&sys.a, &sys.b), affine(&sys.c, &sys.d)))
}

/// Anything that maps a controller input to a control action.
pub trait Controller {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Returns the action and the active region (`None` = out of domain).
    fn act(&mut self, theta: &[f64]) -> Result<(Vec<f64>, Option<usize>)>;
}

/// The sequential first-hit evaluator as a controller.
pub struct NaiveController<'a>(pub &'a PwaFunction);

impl Controller for NaiveController<'_> {
    fn input_dim(&self) -> usize {
        self.0.n()
    }

    fn output_dim(&self) -> usize {
        self.0.m()
    }

    fn act(&mut self, theta: &[f64]) -> Result<(Vec<f64>, Option<usize>)> {
        let r = evaluate_naive(self.0, theta)?;
        Ok((r.output, r.region_index))
    }
}

/// A compiled network as a controller (dense reference path).
pub struct NetworkController<'a, T: crate::inference::Real>(pub DenseEngine<'a, T>);

impl<'a> NetworkController<'a, f64> {
    pub fn new(net: &'a Network) -> Result<Self> {
        Ok(Self(DenseEngine::new(net)?))
    }
}

impl<T: crate::inference::Real> Controller for NetworkController<'_, T> {
    fn input_dim(&self) -> usize {
        self.0.network().n
    }

    fn output_dim(&self) -> usize {
        self.0.network().m
    }

    fn act(&mut self, theta: &[f64]) -> Result<(Vec<f64>, Option<usize>)> {
        let r = self.0.forward(theta)?;
        Ok((r.output, r.region_index))
    }
}

/// A compiled network as a controller (structured path).
pub struct StructuredController<'a> {
    plan: StructuredPlan<'a, f64>,
    scratch: Scratch<f64>,
}

impl<'a> StructuredController<'a> {
    pub fn new(net: &'a Network) -> Result<Self> {
        Ok(Self {
            plan: StructuredPlan::new(net)?,
            scratch: Scratch::default(),
        })
    }
}

impl Controller for StructuredController<'_> {
    fn input_dim(&self) -> usize {
        self.plan.network().n
    }

    fn output_dim(&self) -> usize {
        self.plan.network().m
    }

    fn act(&mut self, theta: &[f64]) -> Result<(Vec<f64>, Option<usize>)> {
        let mut out = Vec::new();
        let region = self.plan.forward_into(theta, &mut self.scratch, &mut out)?;
        Ok((out, region))
    }
}

/// Builds a controller for `net` at the given precision.
pub fn network_controller(net: &Network, prec: Precision) -> Result<Box<dyn Controller + '_>> {
    Ok(match prec {
        Precision::Fp64 => Box::new(NetworkController(DenseEngine::<f64>::new(net)?)),
        Precision::Fp32 => Box::new(NetworkController(DenseEngine::<f32>::new(net)?)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    State,
    Input,
    Output,
    OutOfDomain,
}

impl ViolationKind {
    fn as_str(self) -> &'static str {
        match self {
            ViolationKind::State => "state",
            ViolationKind::Input => "input",
            ViolationKind::Output => "output",
            ViolationKind::OutOfDomain => "out_of_domain",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    Completed,
    /// The state became non-finite at this step.
    Diverged(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `steps + 1` entries (fewer on divergence).
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub regions: Vec<Option<usize>>,
    pub violations: Vec<(usize, ViolationKind)>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    /// Largest per-step state/input/output deviation from `other`.
    pub fn max_deviation(&self, other: &Trajectory) -> f64 {
        let pairs = [
            (&self.states, &other.states),
            (&self.inputs, &other.inputs),
            (&self.outputs, &other.outputs),
        ];
        let mut worst: f64 = 0.0;
        for (a, b) in pairs {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            for (u, v) in a.iter().zip(b) {
                for (s, t) in u.iter().zip(v) {
                    worst = worst.max((s - t).abs());
                }
            }
        }
        worst
    }

    /// CSV with header `k,x0..,u0..,y0..,flags`; the final state row has
    /// empty input and output fields.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let nx = self.states.first().map_or(0, Vec::len);
        let nu = self.inputs.first().map_or(0, Vec::len);
        let ny = self.outputs.first().map_or(0, Vec::len);
        let mut out = std::io::BufWriter::new(w);
        let mut header = vec!["k".to_string()];
        header.extend((0..nx).map(|i| format!("x{i}")));
        header.extend((0..nu).map(|i| format!("u{i}")));
        header.extend((0..ny).map(|i| format!("y{i}")));
        header.push("flags".into());
        writeln!(out, "{}", header.join(","))?;
        for (k, x) in self.states.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            match (self.inputs.get(k), self.outputs.get(k)) {
                (Some(u), Some(y)) => {
                    row.extend(u.iter().map(|v| v.to_string()));
                    row.extend(y.iter().map(|v| v.to_string()));
                }
                _ => row.extend(std::iter::repeat_n(String::new(), nu + ny)),
            }
            let flags: Vec<&str> = self
                .violations
                .iter()
                .filter(|(s, _)| *s == k)
                .map(|(_, v)| v.as_str())
                .collect();
            row.push(flags.join("|"));
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    /// Abort on the first violation or out-of-domain step.
    pub strict: bool,
    /// Extra controller inputs per step, appended after the state.
    pub extras: Option<Vec<Vec<f64>>>,
}

pub fn simulate(
    sys: &LtiSystem,
    ctrl: &mut dyn Controller,
    x0: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    simulate_with(sys, ctrl, x0, steps, &SimOptions::default())
}

/// Runs `u_k = ctrl(x_k)` then the plant update for `steps` steps.
pub fn simulate_with(
    sys: &LtiSystem,
    ctrl: &mut dyn Controller,
    x0: &[f64],
    steps: usize,
    opts: &SimOptions,
) -> Result<Trajectory> {
    check_dim("initial state", sys.nx(), x0.len())?;
    check_dim("controller output", sys.nu(), ctrl.output_dim())?;
    let n_extra = opts
        .extras
        .as_ref()
        .and_then(|e| e.first())
        .map_or(0, Vec::len);
    check_dim("controller input", sys.nx() + n_extra, ctrl.input_dim())?;
    if let Some(e) = &opts.extras {
        if e.len() < steps {
            return Err(Error::InvalidSystem(format!(
                "need {steps} rows of extra controller inputs, got {}",
                e.len()
            )));
        }
    }
    if let Some(b) = &sys.state_box {
        if !b.contains(x0) {
            return Err(Error::InvalidSystem("initial state outside the state box".into()));
        }
    }
    let mut traj = Trajectory {
        states: vec![x0.to_vec()],
        inputs: Vec::with_capacity(steps),
        outputs: Vec::with_capacity(steps),
        regions: Vec::with_capacity(steps),
        violations: Vec::new(),
        termination: Termination::Completed,
    };
    let mut x = x0.to_vec();
    let mut theta = Vec::with_capacity(ctrl.input_dim());
    for k in 0..steps {
        theta.clear();
        theta.extend_from_slice(&x);
        if let Some(e) = &opts.extras {
            theta.extend_from_slice(&e[k]);
        }
        let (u, region) = ctrl.act(&theta)?;
        let (next, y) = lti_step(sys, &x, &u)?;
        let mut flags = Vec::new();
        if region.is_none() {
            flags.push(ViolationKind::OutOfDomain);
        }
        if k > 0 && sys.state_box.as_ref().is_some_and(|b| !b.contains(&x)) {
            flags.push(ViolationKind::State);
        }
        if sys.input_box.as_ref().is_some_and(|b| !b.contains(&u)) {
            flags.push(ViolationKind::Input);
        }
        if sys.output_box.as_ref().is_some_and(|b| !b.contains(&y)) {
            flags.push(ViolationKind::Output);
        }
        if opts.strict {
            if let Some(v) = flags.first() {
                return Err(Error::StrictViolation {
                    step: k,
                    kind: v.as_str().into(),
                });
            }
        }
        traj.violations.extend(flags.into_iter().map(|f| (k, f)));
        traj.inputs.push(u);
        traj.outputs.push(y);
        traj.regions.push(region);
        if next.iter().any(|v| !v.is_finite()) {
            traj.termination = Termination::Diverged(k + 1);
            break;
        }
        traj.states.push(next.clone());
        x = next;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigm::{compute_big_m_exact, resolve_domain};
    use crate::compiler::assemble_yann;
    use crate::pwa::Region;

    fn double_integrator() -> LtiSystem {
        LtiSystem::new(
            Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]], 2).unwrap(),
            Matrix::from_rows(&[vec![0.0], vec![1.0]], 1).unwrap(),
            Matrix::from_rows(&[vec![1.0, 2.0]], 2).unwrap(),
            Matrix::zeros(1, 1),
        )
        .unwrap()
    }

    /// `u = clip(−k·x, ±sat)` on `[−lim, lim]` as three slabs.
    fn saturated_1d(k: f64, sat: f64, lim: f64) -> PwaFunction {
        let slab = |lo: f64, hi: f64, gain: f64, offset: f64| {
            Region::from_parts(
                Matrix::from_rows(&[vec![1.0], vec![-1.0]], 1).unwrap(),
                vec![hi, -lo],
                Matrix::from_vec(1, 1, vec![gain]).unwrap(),
                vec![offset],
            )
            .unwrap()
        };
        let brk = sat / k;
        let regions = vec![
            slab(-lim, -brk, 0.0, sat),
            slab(-brk, brk, -k, 0.0),
            slab(brk, lim, 0.0, -sat),
        ];
        PwaFunction::new(1, 1, regions, Some(BoxDomain::cube(1, -lim, lim).unwrap())).unwrap()
    }

    #[test]
    fn step_examples() {
        let sys = double_integrator();
        assert_eq!(lti_step(&sys, &[1.0, 0.0], &[0.0]).unwrap().0, vec![1.0, 0.0]);
        let (x, y) = lti_step(&sys, &[0.0, 1.0], &[0.0]).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
        assert_eq!(y, vec![2.0]);
        assert!(lti_step(&sys, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn bad_system_shapes() {
        let sq = Matrix::identity(2);
        assert!(LtiSystem::new(Matrix::zeros(2, 3), Matrix::zeros(2, 1), Matrix::zeros(1, 2), Matrix::zeros(1, 1)).is_err());
        assert!(LtiSystem::new(sq.clone(), Matrix::zeros(3, 1), Matrix::zeros(1, 2), Matrix::zeros(1, 1)).is_err());
        assert!(LtiSystem::new(sq, Matrix::zeros(2, 1), Matrix::zeros(1, 2), Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let sys = double_integrator()
            .with_boxes(
                Some(BoxDomain::cube(2, -10.0, 10.0).unwrap()),
                Some(BoxDomain::cube(1, -1.0, 1.0).unwrap()),
                None,
            )
            .unwrap();
        assert_eq!(LtiSystem::from_json(&sys.to_json()).unwrap(), sys);
        let no_d = LtiSystem::from_json(r#"{"A":[[0.5]],"B":[[1]],"C":[[1]]}"#).unwrap();
        assert_eq!(no_d.d, Matrix::zeros(1, 1));
    }

    #[test]
    fn saturated_law_converges() {
        // x⁺ = 1.2 x + u with u = clip(−0.7 x, ±1): |A + BK| = 0.5 inside the
        // linear slab, and the saturated slabs still pull inward for |x| <= 4.
        let sys = LtiSystem::new(
            Matrix::from_vec(1, 1, vec![1.2]).unwrap(),
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            Matrix::zeros(1, 1),
        )
        .unwrap()
        .with_boxes(
            Some(BoxDomain::cube(1, -4.0, 4.0).unwrap()),
            Some(BoxDomain::cube(1, -1.0, 1.0).unwrap()),
            None,
        )
        .unwrap();
        let f = saturated_1d(0.7, 1.0, 4.0);
        let net = assemble_yann(&f, &compute_big_m_exact(&f, &resolve_domain(&f, None).unwrap()).unwrap()).unwrap();
        let mut ctrl = NetworkController::new(&net).unwrap();
        let t = simulate(&sys, &mut ctrl, &[3.5], 60).unwrap();
        assert_eq!(t.termination, Termination::Completed);
        assert!(t.states.last().unwrap()[0].abs() < 1e-12);
        assert!(t.violations.is_empty(), "{:?}", t.violations);
        let naive = simulate(&sys, &mut NaiveController(&f), &[3.5], 60).unwrap();
        assert!(t.max_deviation(&naive) <= 1e-9);
    }

    #[test]
    fn zero_law_is_open_loop() {
        let sys = double_integrator();
        let f = PwaFunction::new(
            2,
            1,
            vec![Region::new(
                &BoxDomain::cube(2, -10.0, 10.0).unwrap().halfspaces(),
                Matrix::zeros(1, 2),
                vec![0.0],
            )
            .unwrap()],
            None,
        )
        .unwrap();
        let net = assemble_yann(&f, &compute_big_m_exact(&f, &resolve_domain(&f, None).unwrap()).unwrap()).unwrap();
        let t = simulate(&sys, &mut NetworkController::new(&net).unwrap(), &[0.5, 0.25], 5).unwrap();
        let mut x = vec![0.5, 0.25];
        for k in 0..=5 {
            assert_eq!(t.states[k], x);
            x = vec![x[0] + x[1], x[1]];
        }
    }

    #[test]
    fn out_of_domain_fallback_and_strict() {
        let sys = LtiSystem::new(
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        let f = saturated_1d(0.5, 1.0, 4.0);
        let net = assemble_yann(&f, &compute_big_m_exact(&f, &resolve_domain(&f, None).unwrap()).unwrap()).unwrap();
        let t = simulate(&sys, &mut NetworkController::new(&net).unwrap(), &[7.0], 3).unwrap();
        assert!(t.inputs.iter().all(|u| u == &vec![0.0]));
        assert_eq!(
            t.violations,
            (0..3).map(|k| (k, ViolationKind::OutOfDomain)).collect::<Vec<_>>()
        );
        let strict = SimOptions {
            strict: true,
            extras: None,
        };
        assert!(matches!(
            simulate_with(&sys, &mut NetworkController::new(&net).unwrap(), &[7.0], 3, &strict),
            Err(Error::StrictViolation { step: 0, .. })
        ));
    }

    #[test]
    fn divergence_stops_early() {
        let sys = LtiSystem::new(
            Matrix::from_vec(1, 1, vec![1e200]).unwrap(),
            Matrix::from_vec(1, 1, vec![0.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        let f = saturated_1d(0.5, 1.0, 4.0);
        let t = simulate(&sys, &mut NaiveController(&f), &[1.0], 10).unwrap();
        assert_eq!(t.termination, Termination::Diverged(2));
        assert_eq!(t.states.len(), 2);
    }

    #[test]
    fn csv_layout() {
        let sys = double_integrator();
        let f = PwaFunction::new(
            2,
            1,
            vec![Region::new(
                &BoxDomain::cube(2, -10.0, 10.0).unwrap().halfspaces(),
                Matrix::zeros(1, 2),
                vec![0.0],
            )
            .unwrap()],
            None,
        )
        .unwrap();
        let t = simulate(&sys, &mut NaiveController(&f), &[0.0, 1.0], 2).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,x0,x1,u0,y0,flags");
        assert_eq!(lines[1], "0,0,1,0,2,");
        assert_eq!(lines[3], "2,2,1,,,");
    }
}
