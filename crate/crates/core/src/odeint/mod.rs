//! Direct simulation of the full system and of its polar form, with
//! detection of the crossings of the cylinder `r = delta` around the
//! critical manifold.
//!
//! Trajectories contract by factors like `exp(-1/eps)` before they leave,
//! far below what a Cartesian state can resolve relative to its initial
//! size. The polar integration therefore carries `log r` instead of `r`
//! and evaluates the exact vector field through `Z(x, r cos, r sin) / r`.
//!
//! Exit detection uses a third chart, `(x, u1, u2, log s)` with
//! `z = s u`. An angle pinned near an invariant direction cannot record a
//! transverse component that is `exp(-1/eps)` smaller, while `u` keeps it
//! to full relative precision.

pub mod dopri;

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::polar::{phi_from, radial_rate, reduce_angle, sin_cos};
use crate::system::FastSlowSystem;
pub use dopri::{Control, DenseStep, State, StepStats, Tolerances};

type State3 = State<3>;
type State4 = State<4>;

pub const BLOWUP_RADIUS: f64 = 1e6;
pub const DEFAULT_CYLINDER_RADIUS: f64 = 0.1;
/// Below `r = 1e-300` the polar field switches to its linearisation.
const LINEAR_LOG_R: f64 = -690.775_527_898_213_7;
const EVENT_RTOL: f64 = 1e-10;
/// Absolute tolerance on the direction components of the scaled chart,
/// which leaves them under purely relative control.
const DIRECTION_ATOL: f64 = 1e-300;
const BISECTION_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Entry,
    Exit,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Entry => "entry",
            EventKind::Exit => "exit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitEvent {
    pub kind: EventKind,
    pub t_event: f64,
    pub x_event: f64,
    /// `|r(t_event) - delta|`; zero for an entry synthesised at `t = 0`.
    pub residual: f64,
    pub synthesized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub z1: f64,
    pub z2: f64,
    pub r: f64,
    pub theta: f64,
    pub log_r: f64,
    pub event: Option<EventKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinates {
    Cartesian,
    Polar,
    /// Direction vector and log scale, `z = exp(y[3]) (y[1], y[2])`.
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ReachedXStop,
    BlowUp,
    Exit,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationTrace {
    pub system: String,
    pub coordinates: Coordinates,
    pub eps: f64,
    pub rtol: f64,
    pub atol: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub stop_reason: StopReason,
    pub samples: Vec<Sample>,
}

pub const TRACE_HEADER: [&str; 8] = ["t", "x", "z1", "z2", "r", "theta", "log_r", "event"];

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

impl SimulationTrace {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trace holds the initial sample")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRACE_HEADER)?;
        for s in &self.samples {
            let nums = [s.t, s.x, s.z1, s.z2, s.r, s.theta, s.log_r].map(fmt_num);
            out.write_record(nums.iter().map(String::as_str).chain([s.event.map_or("", EventKind::as_str)]))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn cartesian_sample(t: f64, y: &State3) -> Sample {
    let r = y[1].hypot(y[2]);
    Sample {
        t,
        x: y[0],
        z1: y[1],
        z2: y[2],
        r,
        theta: reduce_angle(y[2].atan2(y[1])),
        log_r: r.ln(),
        event: None,
    }
}

fn polar_sample(t: f64, y: &State3) -> Sample {
    let r = y[2].exp();
    let (s, c) = sin_cos(y[1]);
    Sample { t, x: y[0], z1: r * c, z2: r * s, r, theta: reduce_angle(y[1]), log_r: y[2], event: None }
}

fn scaled_sample(t: f64, y: &State4) -> Sample {
    let scale = y[3].exp();
    let log_r = scaled_log_radius(y);
    Sample {
        t,
        x: y[0],
        z1: scale * y[1],
        z2: scale * y[2],
        r: log_r.exp(),
        theta: reduce_angle(y[2].atan2(y[1])),
        log_r,
        event: None,
    }
}

fn cartesian_log_radius(y: &State3) -> f64 {
    y[1].hypot(y[2]).ln()
}

fn polar_log_radius(y: &State3) -> f64 {
    y[2]
}

fn scaled_log_radius(y: &State4) -> f64 {
    y[3] + y[1].hypot(y[2]).ln()
}

/// How the driver reads samples and radii off a state.
#[derive(Clone, Copy)]
struct Chart<const N: usize> {
    sample: fn(f64, &State<N>) -> Sample,
    log_radius: fn(&State<N>) -> f64,
}

const CARTESIAN: Chart<3> =
    Chart { sample: cartesian_sample, log_radius: cartesian_log_radius };
const POLAR: Chart<3> = Chart { sample: polar_sample, log_radius: polar_log_radius };
const SCALED: Chart<4> = Chart { sample: scaled_sample, log_radius: scaled_log_radius };

/// Right-hand side in `(x, theta, log r)`.
fn polar_field(sys: &FastSlowSystem, eps: f64) -> impl FnMut(f64, &State3) -> State3 + '_ {
    move |_, y| {
        let (x, th, rho) = (y[0], y[1], y[2]);
        if rho < LINEAR_LOG_R {
            let a = sys.jacobian(x, eps);
            return [eps, phi_from(&a, th), radial_rate(&a, th)];
        }
        let r = rho.exp();
        let (s, c) = sin_cos(th);
        let (w1, w2) = sys.rhs(x, r * c, r * s, eps);
        [eps, (c * w2 - s * w1) / r, (c * w1 + s * w2) / r]
    }
}

fn cartesian_field(sys: &FastSlowSystem, eps: f64) -> impl FnMut(f64, &State3) -> State3 + '_ {
    move |_, y| {
        let (w1, w2) = sys.rhs(y[0], y[1], y[2], eps);
        [eps, w1, w2]
    }
}

/// Right-hand side in `(x, u1, u2, log s)`: with `w = Z(s u) / s` and
/// `q = u.w / |u|^2`, `u' = w - q u` and `(log s)' = q`. `|u|` is a first
/// integral.
fn scaled_field(sys: &FastSlowSystem, eps: f64) -> impl FnMut(f64, &State4) -> State4 + '_ {
    move |_, y| {
        let (x, u1, u2, sigma) = (y[0], y[1], y[2], y[3]);
        let (w1, w2) = if sigma < LINEAR_LOG_R {
            let a = sys.jacobian(x, eps);
            (a.f1 * u1 + a.f2 * u2, a.g1 * u1 + a.g2 * u2)
        } else {
            let s = sigma.exp();
            let (w1, w2) = sys.rhs(x, s * u1, s * u2, eps);
            (w1 / s, w2 / s)
        };
        let q = (u1 * w1 + u2 * w2) / (u1 * u1 + u2 * u2);
        [eps, w1 - q * u1, w2 - q * u2, q]
    }
}

/// Cylinder crossing bookkeeping for the driver.
struct Detector {
    delta: f64,
    ln_delta: f64,
    entry: Option<ExitEvent>,
    exit: Option<ExitEvent>,
}

impl Detector {
    fn refine<const N: usize>(&self, step: &DenseStep<N>, chart: Chart<N>, kind: EventKind) -> ExitEvent {
        let g = |t: f64| (chart.log_radius)(&step.eval(t)) - self.ln_delta;
        let (mut a, mut b) = (step.t0, step.t1());
        let ga = g(a);
        let mut t = b;
        for _ in 0..BISECTION_CAP {
            t = 0.5 * (a + b);
            let gt = g(t);
            if (gt.exp() - 1.0).abs() * self.delta <= EVENT_RTOL * (1.0 + self.delta) && gt.is_finite() {
                break;
            }
            if gt.signum() == ga.signum() && gt != 0.0 {
                a = t;
            } else {
                b = t;
            }
            if b - a <= f64::EPSILON * t.abs() {
                break;
            }
        }
        let y = step.eval(t);
        let residual = ((chart.log_radius)(&y).exp() - self.delta).abs();
        ExitEvent { kind, t_event: t, x_event: y[0], residual, synthesized: false }
    }
}

enum Output<'a> {
    Steps,
    Times(&'a [f64]),
}

struct Run {
    samples: Vec<Sample>,
    stats: StepStats,
    stop: StopReason,
}

#[allow(clippy::too_many_arguments)]
fn drive<const N: usize, F: FnMut(f64, &State<N>) -> State<N>>(
    f: F,
    chart: Chart<N>,
    y0: State<N>,
    t_end: f64,
    rtol: f64,
    atol: State<N>,
    output: Output,
    mut detector: Option<&mut Detector>,
) -> Result<Run> {
    let sample = chart.sample;
    let log_radius = chart.log_radius;
    let mut samples = Vec::new();
    let mut next_time = 0;
    match output {
        Output::Steps => samples.push(sample(0.0, &y0)),
        Output::Times(ts) => {
            while next_time < ts.len() && ts[next_time] <= 0.0 {
                samples.push(sample(ts[next_time], &y0));
                next_time += 1;
            }
        }
    }
    if let Some(d) = detector.as_deref_mut() {
        if log_radius(&y0) <= d.ln_delta {
            d.entry = Some(ExitEvent {
                kind: EventKind::Entry,
                t_event: 0.0,
                x_event: y0[0],
                residual: 0.0,
                synthesized: true,
            });
            if let Some(s) = samples.first_mut() {
                s.event = Some(EventKind::Entry);
            }
        }
    }
    let mut stop = StopReason::ReachedXStop;
    let stats = dopri::integrate_weighted(f, 0.0, y0, t_end, rtol, atol, |step| {
        if let Some(d) = detector.as_deref_mut() {
            let g0 = log_radius(&step.y0) - d.ln_delta;
            let g1 = log_radius(&step.y1) - d.ln_delta;
            if d.entry.is_none() && g0 > 0.0 && g1 <= 0.0 {
                let ev = d.refine(step, chart, EventKind::Entry);
                samples.push(Sample { event: Some(EventKind::Entry), ..sample(ev.t_event, &step.eval(ev.t_event)) });
                d.entry = Some(ev);
            } else if d.entry.is_some() && g0 <= 0.0 && g1 > 0.0 {
                let ev = d.refine(step, chart, EventKind::Exit);
                samples.push(Sample { event: Some(EventKind::Exit), ..sample(ev.t_event, &step.eval(ev.t_event)) });
                d.exit = Some(ev);
                stop = StopReason::Exit;
                return Control::Stop;
            }
        }
        match output {
            Output::Steps => samples.push(sample(step.t1(), &step.y1)),
            Output::Times(ts) => {
                while next_time < ts.len() && ts[next_time] <= step.t1() {
                    let t = ts[next_time];
                    samples.push(sample(t, &step.eval(t)));
                    next_time += 1;
                }
            }
        }
        if log_radius(&step.y1) > BLOWUP_RADIUS.ln() {
            stop = StopReason::BlowUp;
            return Control::Stop;
        }
        Control::Continue
    })?;
    Ok(Run { samples, stats, stop })
}

fn check_run(sys: &FastSlowSystem, x0: f64, eps: f64, x_stop: f64, tol: Tolerances) -> Result<f64> {
    tol.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let dom = sys.domain();
    if !dom.contains(x0) {
        return Err(Error::InvalidInput(format!("x0 = {x0} lies outside [{}, {}]", dom.lo, dom.hi)));
    }
    if !(x_stop > x0 && x_stop <= dom.hi) {
        return Err(Error::InvalidInput(format!("x_stop = {x_stop} must lie in ({x0}, {}]", dom.hi)));
    }
    Ok((x_stop - x0) / eps)
}

fn check_times(times: &[f64]) -> Result<f64> {
    let ok = !times.is_empty() && times[0] >= 0.0 && times.windows(2).all(|w| w[0] < w[1]);
    if !ok {
        return Err(Error::InvalidInput("output times must be nonnegative and strictly increasing".into()));
    }
    Ok(*times.last().unwrap())
}

fn trace(sys: &FastSlowSystem, coords: Coordinates, eps: f64, tol: Tolerances, run: Run) -> SimulationTrace {
    SimulationTrace {
        system: sys.name().to_string(),
        coordinates: coords,
        eps,
        rtol: tol.rtol,
        atol: tol.atol,
        accepted: run.stats.accepted,
        rejected: run.stats.rejected,
        stop_reason: run.stop,
        samples: run.samples,
    }
}

fn polar_init(init: [f64; 3]) -> Result<State3> {
    let [x0, theta0, r0] = init;
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidInput(format!("polar integration needs r0 > 0, got {r0}")));
    }
    Ok([x0, theta0, r0.ln()])
}

/// Integrates the full system from `init = (x0, z1, z2)` until `x = x_stop`
/// or `r > 1e6`, sampling every accepted step.
pub fn integrate_full(
    sys: &FastSlowSystem,
    init: [f64; 3],
    eps: f64,
    x_stop: f64,
    tol: Tolerances,
) -> Result<SimulationTrace> {
    let t_end = check_run(sys, init[0], eps, x_stop, tol)?;
    let run = drive(cartesian_field(sys, eps), CARTESIAN, init, t_end, tol.rtol, [tol.atol; 3], Output::Steps, None)?;
    Ok(trace(sys, Coordinates::Cartesian, eps, tol, run))
}

/// As [`integrate_full`], sampling at the given fast times instead.
pub fn integrate_full_at(
    sys: &FastSlowSystem,
    init: [f64; 3],
    eps: f64,
    times: &[f64],
    tol: Tolerances,
) -> Result<SimulationTrace> {
    let t_end = check_times(times)?;
    check_run(sys, init[0], eps, init[0] + eps * t_end, tol)?;
    let run = drive(cartesian_field(sys, eps), CARTESIAN, init, t_end, tol.rtol, [tol.atol; 3], Output::Times(times), None)?;
    Ok(trace(sys, Coordinates::Cartesian, eps, tol, run))
}

/// Integrates the polar form from `init = (x0, theta0, r0)`; the angle is
/// carried unwrapped and reported modulo `pi`.
pub fn integrate_polar(
    sys: &FastSlowSystem,
    init: [f64; 3],
    eps: f64,
    x_stop: f64,
    tol: Tolerances,
) -> Result<SimulationTrace> {
    let t_end = check_run(sys, init[0], eps, x_stop, tol)?;
    let y0 = polar_init(init)?;
    let run = drive(polar_field(sys, eps), POLAR, y0, t_end, tol.rtol, [tol.atol; 3], Output::Steps, None)?;
    Ok(trace(sys, Coordinates::Polar, eps, tol, run))
}

pub fn integrate_polar_at(
    sys: &FastSlowSystem,
    init: [f64; 3],
    eps: f64,
    times: &[f64],
    tol: Tolerances,
) -> Result<SimulationTrace> {
    let t_end = check_times(times)?;
    check_run(sys, init[0], eps, init[0] + eps * t_end, tol)?;
    let y0 = polar_init(init)?;
    let run = drive(polar_field(sys, eps), POLAR, y0, t_end, tol.rtol, [tol.atol; 3], Output::Times(times), None)?;
    Ok(trace(sys, Coordinates::Polar, eps, tol, run))
}

#[derive(Debug, Clone)]
pub struct ExitDetection {
    pub entry: ExitEvent,
    pub exit: ExitEvent,
    pub trace: SimulationTrace,
}

/// Simulates from `init = (x0, z1, z2)` and returns the first entry into
/// the cylinder of radius `cylinder_radius` and the first exit after it.
pub fn detect_exit(
    sys: &FastSlowSystem,
    init: [f64; 3],
    eps: f64,
    cylinder_radius: f64,
    tol: Tolerances,
) -> Result<ExitDetection> {
    if !(cylinder_radius > 0.0 && cylinder_radius.is_finite()) {
        return Err(Error::InvalidInput(format!("cylinder radius must be positive, got {cylinder_radius}")));
    }
    let [x0, z1, z2] = init;
    let r0 = z1.hypot(z2);
    let t_end = check_run(sys, x0, eps, sys.domain().hi, tol)?;
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidInput(format!("initial point must lie off the manifold, got r0 = {r0}")));
    }
    let y0 = [x0, z1 / r0, z2 / r0, r0.ln()];
    let atol = [tol.atol, DIRECTION_ATOL, DIRECTION_ATOL, tol.atol];
    let mut det = Detector { delta: cylinder_radius, ln_delta: cylinder_radius.ln(), entry: None, exit: None };
    let run = drive(scaled_field(sys, eps), SCALED, y0, t_end, tol.rtol, atol, Output::Steps, Some(&mut det))?;
    let trace = trace(sys, Coordinates::Scaled, eps, tol, run);
    match (det.entry, det.exit) {
        (Some(entry), Some(exit)) => Ok(ExitDetection { entry, exit, trace }),
        _ => Err(Error::NoExitObserved { x_reached: trace.last().x, trace: Box::new(trace) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{make_builtin, BuiltinName};
    use std::f64::consts::FRAC_PI_2;

    fn builtin(n: BuiltinName) -> FastSlowSystem {
        make_builtin(n, None).unwrap()
    }

    #[test]
    fn manifold_is_preserved() {
        for n in BuiltinName::ALL {
            let t = integrate_full(&builtin(n), [-2.0, 0.0, 0.0], 0.01, 0.0, Tolerances::default()).unwrap();
            assert!(t.samples.iter().all(|s| s.z1 == 0.0 && s.z2 == 0.0));
            assert_eq!(t.stop_reason, StopReason::ReachedXStop);
            assert!((t.last().x - 0.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_way_matches_closed_form() {
        let sys = builtin(BuiltinName::OneWayCoupled);
        let tol = Tolerances { rtol: 1e-10, atol: 1e-300 };
        let t = integrate_full(&sys, [-2.0, 1.0, 0.0], 0.01, 1.5, tol).unwrap();
        let worst = t
            .samples
            .iter()
            .map(|s| (s.z1 / ((s.x * s.x - 4.0) / 0.02).exp() - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-7, "{worst}");
    }

    #[test]
    fn invariant_line_stays_put() {
        let sys = builtin(BuiltinName::OneWayCoupled);
        let t = integrate_polar(&sys, [-2.0, -FRAC_PI_2, 0.01], 0.01, 2.0, Tolerances::default()).unwrap();
        assert!(t.samples.iter().all(|s| (s.theta + FRAC_PI_2).abs() < 1e-12));
    }

    #[test]
    fn attracting_branch_pulls_angle() {
        let sys = builtin(BuiltinName::EpsCoupled);
        let t = integrate_polar(&sys, [-2.0, -FRAC_PI_2 + 0.1, 0.05], 0.01, -1.5, Tolerances::default()).unwrap();
        let end = t.last();
        assert!(crate::polar::angle_diff(end.theta, -FRAC_PI_2).abs() < 0.05, "{}", end.theta);
    }

    #[test]
    fn exit_of_one_way_system() {
        let sys = builtin(BuiltinName::OneWayCoupled);
        let d = detect_exit(&sys, [-2.0, 1.0, 1.0], 0.01, 0.1, Tolerances::default()).unwrap();
        assert!(!d.entry.synthesized && d.entry.t_event < d.exit.t_event);
        assert!((d.exit.x_event - 2.0).abs() < 0.05, "{}", d.exit.x_event);
        assert!(d.exit.residual <= 1e-10 * 1.1);
    }

    #[test]
    fn entry_synthesised_inside() {
        let sys = builtin(BuiltinName::EpsCoupled);
        let d = detect_exit(&sys, [-2.0, 0.01, 0.0], 0.01, 0.1, Tolerances::default()).unwrap();
        assert!(d.entry.synthesized);
        assert_eq!(d.entry.t_event, 0.0);
    }

    #[test]
    fn missing_exit_keeps_trace() {
        let sys = builtin(BuiltinName::OneWayCoupled);
        // r grows by about exp(600) before x = 4, not enough to reach 0.5
        match detect_exit(&sys, [-2.0, 1e-300, 0.0], 0.01, 0.5, Tolerances::default()) {
            Err(Error::NoExitObserved { trace, .. }) => assert!(!trace.samples.is_empty()),
            Ok(d) => panic!("unexpected exit at {}", d.exit.x_event),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn csv_layout() {
        let sys = builtin(BuiltinName::EpsCoupled);
        let d = detect_exit(&sys, [-2.0, 1.0, 1.0], 0.05, 0.1, Tolerances::default()).unwrap();
        let mut buf = Vec::new();
        d.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x,z1,z2,r,theta,log_r,event");
        assert_eq!(text.lines().filter(|l| l.ends_with(",entry")).count(), 1);
        assert!(text.trim_end().ends_with(",exit"));
    }
}
