//! Runtime verification of the differentiable kernels: forward-mode
//! Jacobians against central differences, exactness of the smooth-trajectory
//! branch on parabolas, and the frame-unit constants.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{jacobian_fd, jacobian_forward, Scalar, VectorFn, DEFAULT_FD_STEP};
use crate::config::SimConfig;
use crate::heatmap::{bilinear_expectation, gaussian_target, hard_argmax, ExpectationOperator, Heatmap};
use crate::losses::{pill_loss, pills_loss, BounceTerm, LossWeights, PillMode};
use crate::physics::{branch_margin, physics_refine_window, to_frame_units, FrameUnitParams, PhysicsWindow};
use crate::vec2::Vec2;

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const EXACTNESS_TOLERANCE: f64 = 1e-9;
const MAX_ATTEMPTS_PER_TRIAL: usize = 1000;

/// Deliberate defects for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Kernels report a wrong tangent while their values stay correct.
    BrokenKernel,
}

#[derive(Debug, Clone, Copy)]
pub struct SelfCheckOptions {
    pub trials: usize,
    pub seed: u64,
    pub fault: Fault,
}

impl Default for SelfCheckOptions {
    fn default() -> Self {
        SelfCheckOptions { trials: 100, seed: 7, fault: Fault::None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.to_string(), passed, detail }
}

/// Adds a term with value zero and tangent `0.5 · dx₀` to every output.
struct Faulty<'a, F> {
    inner: &'a F,
    fault: Fault,
}

impl<F: VectorFn> VectorFn for Faulty<'_, F> {
    fn eval<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut out = self.inner.eval(x);
        if self.fault == Fault::BrokenKernel {
            let ghost = (x[0] - T::cst(x[0].value())) * T::cst(0.5);
            for o in &mut out {
                *o += ghost;
            }
        }
        out
    }
}

fn gradient_error<F: VectorFn>(f: &F, x: &[f64], fault: Fault) -> f64 {
    let fwd = jacobian_forward(&Faulty { inner: f, fault }, x);
    fwd.max_relative_error(&jacobian_fd(f, x, DEFAULT_FD_STEP))
}

fn window_of<T: Scalar>(x: &[T]) -> [Vec2<T>; 3] {
    [Vec2::new(x[0], x[1]), Vec2::new(x[2], x[3]), Vec2::new(x[4], x[5])]
}

fn flat(w: &[Vec2; 3]) -> Vec<f64> {
    w.iter().flat_map(|q| [q.x, q.y]).collect()
}

pub struct WindowFn(pub FrameUnitParams);

impl VectorFn for WindowFn {
    fn eval<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let out = physics_refine_window(&window_of(x), &self.0);
        out.positions.iter().chain(&out.velocities).flat_map(|q| [q.x, q.y]).collect()
    }
}

pub struct OperatorFn {
    pub op: ExpectationOperator,
    pub width: usize,
    pub height: usize,
}

impl VectorFn for OperatorFn {
    fn eval<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let p = self.op.apply(&Heatmap::new(self.width, self.height, x.to_vec()));
        vec![p.x, p.y]
    }
}

pub struct PillFn {
    pub params: FrameUnitParams,
    pub a: f64,
}

impl VectorFn for PillFn {
    fn eval<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        vec![pill_loss(&window_of(x), &self.params, self.a, PillMode::AllFrames)]
    }
}

pub struct PillsFn {
    pub params: FrameUnitParams,
    pub gt: PhysicsWindow,
}

impl VectorFn for PillsFn {
    fn eval<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let pred = physics_refine_window(&window_of(x), &self.params);
        vec![pills_loss(&pred, &self.gt, &LossWeights::default(), BounceTerm::WeightedL1)]
    }
}

/// Runs `probe` until it has accepted `trials` inputs and returns the worst error.
fn sweep(trials: usize, mut probe: impl FnMut() -> Option<f64>) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < trials {
        attempts += 1;
        if attempts > trials.max(1) * MAX_ATTEMPTS_PER_TRIAL {
            return Err(format!("only {accepted} of {trials} probes found admissible"));
        }
        if let Some(e) = probe() {
            worst = worst.max(e);
            accepted += 1;
        }
    }
    Ok(worst)
}

fn gradient_outcome(name: &str, trials: usize, result: Result<f64, String>) -> CheckOutcome {
    match result {
        Ok(err) => outcome(
            name,
            err < GRADIENT_TOLERANCE,
            format!("max relative error {err:.3e} over {trials} probes"),
        ),
        Err(msg) => outcome(name, false, msg),
    }
}

fn jitter(rng: &mut ChaCha8Rng, r: f64) -> Vec2 {
    Vec2::new(rng.random_range(-r..r), rng.random_range(-r..r))
}

/// Physics window probes, half of them on the bounce branch.
pub fn check_physics_gradient(params: &FrameUnitParams, opts: &SelfCheckOptions) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let f = WindowFn(*params);
    let (lo, hi) = (params.bounds.y_min, params.bounds.y_max);
    let span = hi - lo;
    let mut n = 0usize;
    let res = sweep(opts.trials, || {
        let want_bounce = n % 2 == 1;
        let x0 = rng.random_range(lo..hi);
        let y0 = if want_bounce { rng.random_range(hi - 0.3 * span..hi) } else { rng.random_range(lo..hi) };
        let v = Vec2::new(
            rng.random_range(-params.v_max_frame..params.v_max_frame),
            rng.random_range(-5.0..params.v_max_frame),
        );
        let w = [
            Vec2::new(x0, y0),
            Vec2::new(x0 + v.x, y0 + v.y),
            Vec2::new(x0 + 2.0 * v.x, y0 + 2.0 * v.y) + jitter(&mut rng, 1.0),
        ];
        let inside = |q: &Vec2| (lo..=hi).contains(&q.x) && (lo..=hi).contains(&q.y);
        if !w.iter().all(inside) || branch_margin(&w, params) < 1.0 {
            return None;
        }
        if physics_refine_window(&w, params).any_bounce() != want_bounce {
            return None;
        }
        n += 1;
        Some(gradient_error(&f, &flat(&w), opts.fault))
    });
    gradient_outcome("gradient physics_refine_window", opts.trials, res)
}

/// Minimum distance of a probe from the non-smooth set of an operator.
const KINK_CLEARANCE: f64 = 1e-3;

/// Distance from the set where `op` is not differentiable: argmax ties for
/// coarse-to-fine, pixels on the `d = 2` circle for biquadratic and integer
/// centroid coordinates for bicubic, whose weight has a kink at `|d| = 2`.
/// Bilinear is smooth on positive heatmaps.
pub fn smoothness_margin(op: ExpectationOperator, h: &Heatmap) -> f64 {
    match op {
        ExpectationOperator::Bilinear => f64::INFINITY,
        ExpectationOperator::Bicubic => {
            let c = bilinear_expectation(h);
            (c.x - c.x.round()).abs().min((c.y - c.y.round()).abs())
        }
        ExpectationOperator::CoarseToFine => {
            let (c, r) = hard_argmax(h);
            let top = h.get(r, c);
            let second = h
                .values
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != r * h.width + c)
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            top - second
        }
        ExpectationOperator::Biquadratic => {
            let c = bilinear_expectation(h);
            (0..h.height)
                .flat_map(|i| (0..h.width).map(move |j| (i, j)))
                .map(|(i, j)| ((j as f64 - c.x).hypot(i as f64 - c.y) - 2.0).abs())
                .fold(f64::INFINITY, f64::min)
        }
    }
}

/// Each probe is a 16×16 blob with a positive floor and a random sub-pixel center.
pub fn check_operator_gradient(op: ExpectationOperator, opts: &SelfCheckOptions) -> CheckOutcome {
    const N: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (op as u64 + 1) << 8);
    let f = OperatorFn { op, width: N, height: N };
    let res = sweep(opts.trials, || {
        let c = Vec2::new(rng.random_range(5.0..10.0), rng.random_range(5.0..10.0));
        let mut h = gaussian_target(c, N, N, 1.5);
        for v in &mut h.values {
            *v += rng.random_range(0.01..0.05);
        }
        if smoothness_margin(op, &h) < KINK_CLEARANCE {
            return None;
        }
        Some(gradient_error(&f, &h.values, opts.fault))
    });
    gradient_outcome(&format!("gradient {}", op.name()), opts.trials, res)
}

/// PILL probes keep the middle residual away from the kink of |·|.
pub fn check_pill_gradient(params: &FrameUnitParams, opts: &SelfCheckOptions) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(11));
    let a = 2.0;
    let f = PillFn { params: *params, a };
    let res = sweep(opts.trials, || {
        let base = Vec2::new(rng.random_range(30.0..190.0), rng.random_range(30.0..190.0));
        let v = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let img = [0.0, 1.0, 2.0].map(|k: f64| {
            base + v.scale(k) + Vec2::new(0.0, 0.5 * params.g_frame * k * k) + jitter(&mut rng, 2.0)
        });
        if branch_margin(&img, params) < 1.0 {
            return None;
        }
        let d = physics_refine_window(&img, params).positions[1] - img[1];
        if d.x.abs() < 1e-3 || d.y.abs() < 1e-3 {
            return None;
        }
        let x: Vec<f64> = img.iter().flat_map(|q| [q.x / a, q.y / a]).collect();
        Some(gradient_error(&f, &x, opts.fault))
    });
    gradient_outcome("gradient pill_loss", opts.trials, res)
}

/// PILLS probes keep every residual away from the kink of |·|.
pub fn check_pills_gradient(params: &FrameUnitParams, opts: &SelfCheckOptions) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(23));
    let res = sweep(opts.trials, || {
        let base = Vec2::new(rng.random_range(30.0..190.0), rng.random_range(30.0..190.0));
        let v = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let lm = [0.0, 1.0, 2.0].map(|k: f64| base + v.scale(k) + jitter(&mut rng, 2.0));
        if branch_margin(&lm, params) < 1.0 {
            return None;
        }
        let gt = PhysicsWindow {
            positions: lm.map(|q| q + jitter(&mut rng, 3.0)),
            velocities: [v + jitter(&mut rng, 0.5), v, v + jitter(&mut rng, 0.5)],
            bounces: [false, false, rng.random_bool(0.5)],
        };
        let pred = physics_refine_window(&lm, params);
        let near_kink = pred
            .positions
            .iter()
            .zip(&gt.positions)
            .chain(pred.velocities.iter().zip(&gt.velocities))
            .any(|(a, b)| (a.x - b.x).abs() < 1e-3 || (a.y - b.y).abs() < 1e-3);
        if near_kink {
            return None;
        }
        let f = PillsFn { params: *params, gt };
        Some(gradient_error(&f, &flat(&lm), opts.fault))
    });
    gradient_outcome("gradient pills_loss", opts.trials, res)
}

/// Exact parabolas well clear of the walls are fixed points with zero PILL.
pub fn check_parabola_exactness(params: &FrameUnitParams, opts: &SelfCheckOptions) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(37));
    let b = params.bounds;
    let (mut worst_shift, mut worst_pill): (f64, f64) = (0.0, 0.0);
    let res = sweep(opts.trials, || {
        let p0 = Vec2::new(rng.random_range(b.x_min..b.x_max), rng.random_range(b.y_min..b.y_max));
        let v = Vec2::new(
            rng.random_range(-params.v_max_frame..params.v_max_frame),
            rng.random_range(-params.v_max_frame..params.v_max_frame),
        );
        let w = [0.0, 1.0, 2.0].map(|k: f64| p0 + v.scale(k) + Vec2::new(0.0, 0.5 * params.g_frame * k * k));
        let inside = |q: &Vec2| (b.x_min..=b.x_max).contains(&q.x) && (b.y_min..=b.y_max).contains(&q.y);
        if !w.iter().all(inside) || branch_margin(&w, params) < 1.0 {
            return None;
        }
        let out = physics_refine_window(&w, params);
        let shift = out
            .positions
            .iter()
            .zip(&w)
            .map(|(a, q)| (a.x - q.x).abs().max((a.y - q.y).abs()))
            .fold(0.0, f64::max);
        worst_shift = worst_shift.max(shift);
        worst_pill = worst_pill.max(pill_loss(&w, params, 1.0, PillMode::AllFrames));
        Some(shift)
    });
    match res {
        Ok(_) => outcome(
            "parabola fixed point",
            worst_shift < EXACTNESS_TOLERANCE && worst_pill < EXACTNESS_TOLERANCE,
            format!(
                "max shift {worst_shift:.3e} px, max pill {worst_pill:.3e} over {} windows",
                opts.trials
            ),
        ),
        Err(msg) => outcome("parabola fixed point", false, msg),
    }
}

/// Frame-unit constants of the reference configuration.
pub fn check_unit_constants() -> Vec<CheckOutcome> {
    let p = to_frame_units(&SimConfig::default());
    let rows = [
        ("g_frame", p.g_frame, 0.7848),
        ("dy_per_frame", 0.5 * p.g_frame * p.dt * p.dt, 0.3924),
        ("dv_per_frame", p.g_frame * p.dt, 0.7848),
        ("v_max_frame", p.v_max_frame, 22.2),
    ];
    rows.iter()
        .map(|&(name, got, want)| {
            outcome(
                &format!("{name}={want}"),
                (got - want).abs() <= 1e-12,
                format!("computed {got}"),
            )
        })
        .collect()
}

/// Halving pixel size doubles every length in frame units.
pub fn check_unit_scaling(cfg: &SimConfig) -> CheckOutcome {
    let base = to_frame_units(cfg);
    let half = to_frame_units(&SimConfig { scale: cfg.scale / 2.0, ..cfg.clone() });
    let ok = half.g_frame == 2.0 * base.g_frame && half.v_max_frame == 2.0 * base.v_max_frame;
    outcome(
        "unit scaling",
        ok,
        format!("g_frame {} -> {}, v_max_frame {} -> {}", base.g_frame, half.g_frame, base.v_max_frame, half.v_max_frame),
    )
}

pub fn run_selfcheck(cfg: &SimConfig, opts: &SelfCheckOptions) -> Vec<CheckOutcome> {
    let params = to_frame_units(cfg);
    let mut out = check_unit_constants();
    out.push(check_unit_scaling(cfg));
    out.push(check_parabola_exactness(&params, opts));
    out.push(check_physics_gradient(&params, opts));
    for op in ExpectationOperator::ALL {
        out.push(check_operator_gradient(op, opts));
    }
    out.push(check_pill_gradient(&params, opts));
    out.push(check_pills_gradient(&params, opts));
    out
}
