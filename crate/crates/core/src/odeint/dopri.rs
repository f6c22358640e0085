//! Dormand–Prince 5(4) with PI step-size control and the classical
//! fourth-order continuous extension.

use crate::error::{Error, Result};

pub type State<const N: usize> = [f64; N];

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const BETA: f64 = 0.04;
const SAFE: f64 = 0.9;
const FAC1: f64 = 0.2;
const FAC2: f64 = 10.0;
const UNDERFLOW: f64 = 1e-14;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-9, atol: 1e-12 }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.rtol.is_finite() && self.atol.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tolerances must be positive (rtol = {}, atol = {})",
                self.rtol, self.atol
            )));
        }
        Ok(())
    }
}

/// One accepted step with its dense-output coefficients.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub y0: State<N>,
    pub y1: State<N>,
    rcont: [State<N>; 4],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Interpolated state at `t` in `[t0, t0 + h]`.
    pub fn eval(&self, t: f64) -> State<N> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [r2, r3, r4, r5] = &self.rcont;
        std::array::from_fn(|i| self.y0[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i]))))
    }
}

pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn axpy<const N: usize>(y: &State<N>, h: f64, terms: &[(f64, &State<N>)]) -> State<N> {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn initial_step<const N: usize, F: FnMut(f64, &State<N>) -> State<N>>(
    f: &mut F,
    t: f64,
    y: &State<N>,
    f0: &State<N>,
    rtol: f64,
    atol: &State<N>,
    hmax: f64,
) -> f64 {
    let sk: State<N> = std::array::from_fn(|i| atol[i] + rtol * y[i].abs());
    let norm = |v: &State<N>| (v.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / N as f64).sqrt();
    let dnf = norm(f0).powi(2);
    let dny = norm(y).powi(2);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
    h = h.min(hmax);
    let y1 = axpy(y, h, &[(1.0, f0)]);
    let f1 = f(t + h, &y1);
    let diff: State<N> = std::array::from_fn(|i| f1[i] - f0[i]);
    let der2 = norm(&diff) / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
    let h = (100.0 * h).min(h1).min(hmax);
    // overflowing norms (tiny atol against large derivatives) end up here
    if h.is_finite() && h > 1e-10 * hmax { h } else { 1e-10 * hmax }
}

/// Integrates `y' = f(t, y)` from `t0` towards `t_end`, handing every
/// accepted step to `observe`, which may stop the integration early.
pub fn integrate<const N: usize, F, O>(
    f: F,
    t0: f64,
    y0: State<N>,
    t_end: f64,
    tol: Tolerances,
    observe: O,
) -> Result<StepStats>
where
    F: FnMut(f64, &State<N>) -> State<N>,
    O: FnMut(&DenseStep<N>) -> Control,
{
    tol.validate()?;
    integrate_weighted(f, t0, y0, t_end, tol.rtol, [tol.atol; N], observe)
}

/// As [`integrate`] with a separate absolute tolerance per component.
pub fn integrate_weighted<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    y0: State<N>,
    t_end: f64,
    rtol: f64,
    atol: State<N>,
    mut observe: O,
) -> Result<StepStats>
where
    F: FnMut(f64, &State<N>) -> State<N>,
    O: FnMut(&DenseStep<N>) -> Control,
{
    if !(rtol > 0.0 && rtol.is_finite() && atol.iter().all(|a| *a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidInput(format!("tolerances must be positive (rtol = {rtol}, atol = {atol:?})")));
    }
    let span = t_end - t0;
    if !(span > 0.0) {
        return Err(Error::InvalidInput(format!("empty integration interval [{t0}, {t_end}]")));
    }
    let expo1 = 0.2 - BETA * 0.75;
    let mut stats = StepStats::default();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    let mut h = initial_step(&mut f, t, &y, &k1, rtol, &atol, span);
    stats.evaluations += 1;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h < UNDERFLOW * span {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let y2 = axpy(&y, h, &[(A21, &k1)]);
        let k2 = f(t + C2 * h, &y2);
        let y3 = axpy(&y, h, &[(A31, &k1), (A32, &k2)]);
        let k3 = f(t + C3 * h, &y3);
        let y4 = axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = f(t + C4 * h, &y4);
        let y5 = axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = f(t + C5 * h, &y5);
        let y6 = axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = f(t + h, &y6);
        let ynew = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t_new = if last { t_end } else { t + h };
        let k7 = f(t_new, &ynew);
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = atol[i] + rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sk).powi(2);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() {
            stats.rejected += 1;
            last_rejected = true;
            h *= FAC1;
            continue;
        }

        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            let fac = (fac11 / facold.powf(BETA)) / SAFE;
            let fac = fac.clamp(1.0 / FAC2, 1.0 / FAC1);
            let mut hnew = h / fac;
            facold = err.max(1e-4);
            stats.accepted += 1;

            let ydiff: State<N> = std::array::from_fn(|i| ynew[i] - y[i]);
            let bspl: State<N> = std::array::from_fn(|i| h * k1[i] - ydiff[i]);
            let r4: State<N> = std::array::from_fn(|i| ydiff[i] - h * k7[i] - bspl[i]);
            let r5: State<N> = std::array::from_fn(|i| {
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            });
            let step = DenseStep { t0: t, h, y0: y, y1: ynew, rcont: [ydiff, bspl, r4, r5] };
            let control = observe(&step);

            k1 = k7;
            y = ynew;
            t = t_new;
            if last || matches!(control, Control::Stop) {
                return Ok(stats);
            }
            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;
            h = hnew;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h /= (fac11 / SAFE).min(1.0 / FAC1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let tol = Tolerances { rtol: 1e-10, atol: 1e-14 };
        let mut end = [0.0; 3];
        integrate(|_, y| [1.0, -y[1], y[2]], 0.0, [0.0, 1.0, 1.0], 5.0, tol, |s| {
            end = s.y1;
            Control::Continue
        })
        .unwrap();
        assert!((end[0] - 5.0).abs() < 1e-12);
        assert!((end[1] / (-5f64).exp() - 1.0).abs() < 1e-8);
        assert!((end[2] / 5f64.exp() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dense_output_tracks_solution() {
        let tol = Tolerances { rtol: 1e-10, atol: 1e-12 };
        let mut worst = 0.0f64;
        integrate(|_, y| [y[1], -y[0], 0.0], 0.0, [0.0, 1.0, 0.0], 10.0, tol, |s| {
            for j in 1..8 {
                let t = s.t0 + s.h * j as f64 / 8.0;
                worst = worst.max((s.eval(t)[0] - t.sin()).abs());
            }
            Control::Continue
        })
        .unwrap();
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn observer_can_stop() {
        let mut n = 0;
        let stats = integrate(|_, _| [1.0, 0.0, 0.0], 0.0, [0.0; 3], 1e6, Tolerances::default(), |_| {
            n += 1;
            if n == 3 { Control::Stop } else { Control::Continue }
        })
        .unwrap();
        assert_eq!(stats.accepted, 3);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let tol = Tolerances { rtol: 0.0, atol: 1e-12 };
        let r = integrate(|_, _| [0.0; 3], 0.0, [0.0; 3], 1.0, tol, |_| Control::Continue);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn finite_time_blowup_underflows() {
        let r = integrate(|_, y| [1.0, y[1] * y[1], 0.0], 0.0, [0.0, 1.0, 0.0], 2.0, Tolerances::default(), |_| {
            Control::Continue
        });
        assert!(matches!(r, Err(Error::StepSizeUnderflow { .. })));
    }
}
