//! Adaptive integration of the Langford flow, its variational equations and
//! crossings of the section `x = 0, y > 0`.
//!
//! The stepper is the Dormand-Prince 5(4) pair with a PI step-size
//! controller and the usual free 4th-order continuous extension. Backward
//! time runs are integrated as forward runs of the reversed field.

use std::fmt::Write as _;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::model::{eval_field, eval_jacobian, ModelParams};

const MIN_STEP: f64 = 1e-13;
const MAX_STEPS: usize = 5_000_000;

/// Minimum elapsed time before a section crossing is accepted.
pub const CROSSING_GUARD: f64 = 1e-3;
/// Default time budget for finding a section crossing.
pub const CROSSING_BUDGET: f64 = 200.0;

/// Right-hand side of an autonomous system `y' = F(y)` of dimension `D`.
pub trait System<const D: usize> {
    fn eval(&self, y: &[f64; D]) -> [f64; D];
}

/// The Langford field, optionally time reversed.
#[derive(Debug, Clone, Copy)]
pub struct LangfordField {
    pub params: ModelParams,
    pub sign: f64,
}

impl System<3> for LangfordField {
    #[inline]
    fn eval(&self, y: &[f64; 3]) -> [f64; 3] {
        let f = eval_field(y, &self.params);
        [self.sign * f[0], self.sign * f[1], self.sign * f[2]]
    }
}

/// State, fundamental matrix (row-major) and accumulated `trace Df`.
#[derive(Debug, Clone, Copy)]
pub struct VariationalField {
    pub params: ModelParams,
    pub sign: f64,
}

pub const VAR_DIM: usize = 13;

impl System<VAR_DIM> for VariationalField {
    #[inline]
    fn eval(&self, y: &[f64; VAR_DIM]) -> [f64; VAR_DIM] {
        let x = [y[0], y[1], y[2]];
        let f = eval_field(&x, &self.params);
        let j = eval_jacobian(&x, &self.params);
        let mut out = [0.0; VAR_DIM];
        out[0] = self.sign * f[0];
        out[1] = self.sign * f[1];
        out[2] = self.sign * f[2];
        for r in 0..3 {
            for c in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += j[(r, k)] * y[3 + 3 * k + c];
                }
                out[3 + 3 * r + c] = self.sign * s;
            }
        }
        out[12] = self.sign * j.trace();
        out
    }
}

// Dormand-Prince 5(4) tableau. The field is autonomous, so the nodes c_i
// are not needed.
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
// Dense output coefficients.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Result of one attempted step.
struct Step<const D: usize> {
    y_new: [f64; D],
    k7: [f64; D],
    err: f64,
    /// Continuous extension coefficients.
    rcont: [[f64; D]; 5],
}

#[inline]
fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for i in 0..D {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

/// One Dormand-Prince step from `y` with `k1 = F(y)`.
fn dopri_step<const D: usize, S: System<D>>(
    sys: &S,
    y: &[f64; D],
    k1: &[f64; D],
    h: f64,
    tol: f64,
) -> Step<D> {
    let k2 = sys.eval(&axpy(y, h, &[(A21, k1)]));
    let k3 = sys.eval(&axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = sys.eval(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = sys.eval(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = sys.eval(&axpy(
        y,
        h,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    ));
    let y_new = axpy(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = sys.eval(&y_new);
    let mut err2 = 0.0;
    let mut rcont = [[0.0; D]; 5];
    for i in 0..D {
        let e = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = tol + tol * y[i].abs().max(y_new[i].abs());
        err2 += (e / sc) * (e / sc);
        let dy = y_new[i] - y[i];
        let bspl = h * k1[i] - dy;
        rcont[0][i] = y[i];
        rcont[1][i] = dy;
        rcont[2][i] = bspl;
        rcont[3][i] = dy - h * k7[i] - bspl;
        rcont[4][i] = h
            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Step {
        y_new,
        k7,
        err: (err2 / D as f64).sqrt(),
        rcont,
    }
}

/// Evaluates the continuous extension at fraction `s` of the step.
#[inline]
fn dense_eval<const D: usize>(rcont: &[[f64; D]; 5], s: f64) -> [f64; D] {
    let s1 = 1.0 - s;
    let mut out = [0.0; D];
    for i in 0..D {
        out[i] = rcont[0][i]
            + s * (rcont[1][i] + s1 * (rcont[2][i] + s * (rcont[3][i] + s1 * rcont[4][i])));
    }
    out
}

/// Observer decision after each accepted step.
enum Control<const D: usize> {
    Continue,
    /// Stop the run, reporting the given time and state.
    Stop(f64, [f64; D]),
}

/// Accepted step data passed to observers.
struct Accepted<'a, const D: usize> {
    t0: f64,
    h: f64,
    y0: &'a [f64; D],
    y1: &'a [f64; D],
    rcont: &'a [[f64; D]; 5],
}

/// Counters reported by a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-14..=1e-3).contains(&tol) {
        return Err(Error::Tolerance(tol));
    }
    Ok(())
}

/// Core adaptive loop over `[0, t_end]` (t_end > 0), calling `observe` after
/// every accepted step. Returns the final time, state and counters.
fn run<const D: usize, S: System<D>>(
    sys: &S,
    y0: [f64; D],
    t_end: f64,
    tol: f64,
    mut observe: impl FnMut(&S, &Accepted<'_, D>) -> Result<Control<D>>,
) -> Result<(f64, [f64; D], StepStats)> {
    let mut stats = StepStats::default();
    let mut t = 0.0;
    let mut y = y0;
    if t_end <= 0.0 {
        return Ok((t, y, stats));
    }
    let mut k1 = sys.eval(&y);
    let mut h = initial_step(sys, &y, &k1, tol).min(t_end);
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    const BETA: f64 = 0.04;
    const EXPO: f64 = 0.2 - BETA * 0.75;
    for _ in 0..MAX_STEPS {
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let step = dopri_step(sys, &y, &k1, h, tol);
        if !step.y_new.iter().all(|v| v.is_finite()) {
            h *= 0.25;
            last_rejected = true;
            stats.rejected += 1;
            if h.abs() < MIN_STEP {
                return Err(Error::StepUnderflow {
                    t,
                    state: y.to_vec(),
                });
            }
            continue;
        }
        let err = step.err;
        if err <= 1.0 {
            stats.accepted += 1;
            let acc = Accepted {
                t0: t,
                h,
                y0: &y,
                y1: &step.y_new,
                rcont: &step.rcont,
            };
            if let Control::Stop(ts, ys) = observe(sys, &acc)? {
                return Ok((ts, ys, stats));
            }
            let fac = err.max(1e-10).powf(EXPO) / err_old.powf(BETA);
            let mut h_new = h / (fac / 0.9).clamp(0.1, 5.0);
            if last_rejected {
                h_new = h_new.min(h);
            }
            err_old = err.max(1e-4);
            t = if last { t_end } else { t + h };
            y = step.y_new;
            k1 = step.k7;
            if last {
                return Ok((t, y, stats));
            }
            h = h_new;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h /= (err.powf(0.2) / 0.9).min(10.0);
            last_rejected = true;
        }
        if h < MIN_STEP {
            return Err(Error::StepUnderflow {
                t,
                state: y.to_vec(),
            });
        }
    }
    Err(Error::StepUnderflow {
        t,
        state: y.to_vec(),
    })
}

fn initial_step<const D: usize, S: System<D>>(sys: &S, y: &[f64; D], f0: &[f64; D], tol: f64) -> f64 {
    let sc = |i: usize| tol + tol * y[i].abs();
    let d0 = (0..D).map(|i| (y[i] / sc(i)).powi(2)).sum::<f64>().sqrt() / (D as f64).sqrt();
    let d1 = (0..D).map(|i| (f0[i] / sc(i)).powi(2)).sum::<f64>().sqrt() / (D as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y, h0, &[(1.0, f0)]);
    let f1 = sys.eval(&y1);
    let d2 = (0..D)
        .map(|i| ((f1[i] - f0[i]) / sc(i)).powi(2))
        .sum::<f64>()
        .sqrt()
        / (D as f64).sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).max(MIN_STEP * 10.0)
}

/// A sampled orbit with the times and states of every accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 3]>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> [f64; 3] {
        *self.states.last().expect("trajectory is never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    /// CSV export with header `t,x,y,z`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,z\n");
        for (t, s) in self.times.iter().zip(&self.states) {
            let _ = writeln!(out, "{t:e},{:e},{:e},{:e}", s[0], s[1], s[2]);
        }
        out
    }
}

/// Integrates the flow from `x0` for time `t_final` (negative for backward
/// time), recording every accepted step.
pub fn integrate(x0: [f64; 3], t_final: f64, params: &ModelParams, tol: f64) -> Result<Trajectory> {
    check_tol(tol)?;
    let sign = if t_final < 0.0 { -1.0 } else { 1.0 };
    let field = LangfordField {
        params: *params,
        sign,
    };
    let mut times = vec![0.0];
    let mut states = vec![x0];
    let (_, _, stats) = run(&field, x0, t_final.abs(), tol, |_, acc| {
        times.push(sign * (acc.t0 + acc.h));
        states.push(*acc.y1);
        Ok(Control::Continue)
    })?;
    // The clipped last step lands on |t_final| up to rounding; pin it.
    if let Some(t) = times.last_mut() {
        if states.len() > 1 {
            *t = t_final;
        }
    }
    Ok(Trajectory {
        times,
        states,
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
    })
}

/// Final state of the flow map only.
pub fn flow_map(x0: [f64; 3], t: f64, params: &ModelParams, tol: f64) -> Result<[f64; 3]> {
    check_tol(tol)?;
    let sign = if t < 0.0 { -1.0 } else { 1.0 };
    let field = LangfordField {
        params: *params,
        sign,
    };
    let (_, y, _) = run(&field, x0, t.abs(), tol, |_, _| Ok(Control::Continue))?;
    Ok(y)
}

/// State and fundamental matrix `M(t)` with `M(0) = I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalState {
    pub x: [f64; 3],
    pub m: Matrix3<f64>,
    /// `integral of trace Df` along the orbit; `det M = exp(trace_integral)`.
    pub trace_integral: f64,
}

fn variational_initial(x0: [f64; 3]) -> [f64; VAR_DIM] {
    let mut y = [0.0; VAR_DIM];
    y[..3].copy_from_slice(&x0);
    y[3] = 1.0;
    y[7] = 1.0;
    y[11] = 1.0;
    y
}

fn unpack_variational(y: &[f64; VAR_DIM]) -> VariationalState {
    VariationalState {
        x: [y[0], y[1], y[2]],
        m: Matrix3::from_row_slice(&y[3..12]),
        trace_integral: y[12],
    }
}

/// Integrates `x' = f(x)` together with `M' = Df(x) M`.
pub fn integrate_variational(
    x0: [f64; 3],
    t_final: f64,
    params: &ModelParams,
    tol: f64,
) -> Result<VariationalState> {
    check_tol(tol)?;
    let sign = if t_final < 0.0 { -1.0 } else { 1.0 };
    let field = VariationalField {
        params: *params,
        sign,
    };
    let (_, y, _) = run(&field, variational_initial(x0), t_final.abs(), tol, |_, _| {
        Ok(Control::Continue)
    })?;
    // For the reversed field the trace slot holds -int(trace) over |t|,
    // which equals int_0^t trace ds for t < 0.
    Ok(unpack_variational(&y))
}

/// Time direction for section crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDirection {
    Forward,
    Backward,
}

impl TimeDirection {
    pub fn sign(self) -> f64 {
        match self {
            TimeDirection::Forward => 1.0,
            TimeDirection::Backward => -1.0,
        }
    }
}

/// A located section crossing. `time` is signed model time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing<const D: usize> {
    pub state: [f64; D],
    pub time: f64,
}

/// On `x = 0, y > 0` the field has `x' = -delta y < 0`, so forward orbits
/// cross the half plane with `x` decreasing and backward orbits (reversed
/// field) with `x` increasing.
fn crossing_observer<const D: usize, S: System<D>>(
    dir: TimeDirection,
) -> impl FnMut(&S, &Accepted<'_, D>) -> Result<Control<D>> {
    let want_up = dir == TimeDirection::Backward;
    move |sys: &S, acc: &Accepted<'_, D>| {
        let (a, b) = (acc.y0[0], acc.y1[0]);
        let t1 = acc.t0 + acc.h;
        if t1 <= CROSSING_GUARD {
            return Ok(Control::Continue);
        }
        let sign_change = if want_up {
            a < 0.0 && b >= 0.0
        } else {
            a > 0.0 && b <= 0.0
        };
        if !sign_change {
            return Ok(Control::Continue);
        }
        let Some(s) = locate_root(sys, acc) else {
            return Ok(Control::Continue);
        };
        let tc = acc.t0 + s * acc.h;
        if tc <= CROSSING_GUARD {
            return Ok(Control::Continue);
        }
        let state = refine_crossing(sys, acc, s);
        if state[1] <= 0.0 {
            return Ok(Control::Continue);
        }
        Ok(Control::Stop(tc, state))
    }
}

/// Root of the first component on the dense output, as a step fraction.
/// Newton iteration with a bisection fallback.
fn locate_root<const D: usize, S: System<D>>(sys: &S, acc: &Accepted<'_, D>) -> Option<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let x_lo = acc.y0[0];
    let mut s = x_lo / (x_lo - acc.y1[0]);
    if !s.is_finite() {
        s = 0.5;
    }
    for _ in 0..60 {
        let y = dense_eval(acc.rcont, s);
        let v = y[0];
        if v.abs() < 1e-15 {
            return Some(s);
        }
        if (v > 0.0) == (x_lo > 0.0) {
            lo = s;
        } else {
            hi = s;
        }
        let dv = sys.eval(&y)[0] * acc.h;
        let mut s_new = s - v / dv;
        if !(s_new > lo && s_new < hi) || !s_new.is_finite() {
            s_new = 0.5 * (lo + hi);
        }
        if (s_new - s).abs() < 1e-16 {
            return Some(s_new);
        }
        s = s_new;
    }
    Some(s)
}

/// Replaces the interpolated crossing by a direct sub-step from the step
/// start, with Newton corrections of the sub-step length until `|x| < 1e-12`.
fn refine_crossing<const D: usize, S: System<D>>(
    sys: &S,
    acc: &Accepted<'_, D>,
    s0: f64,
) -> [f64; D] {
    let k1 = sys.eval(acc.y0);
    let mut h = s0 * acc.h;
    let mut y = dopri_step(sys, acc.y0, &k1, h, 1.0).y_new;
    for _ in 0..8 {
        let v = y[0];
        if v.abs() < 1e-13 {
            break;
        }
        let dv = sys.eval(&y)[0];
        if dv == 0.0 {
            break;
        }
        h -= v / dv;
        y = dopri_step(sys, acc.y0, &k1, h, 1.0).y_new;
    }
    y
}

fn crossing_generic<const D: usize, S: System<D>>(
    sys: &S,
    y0: [f64; D],
    dir: TimeDirection,
    tol: f64,
    budget: f64,
) -> Result<Crossing<D>> {
    check_tol(tol)?;
    let mut found = None;
    let mut obs = crossing_observer::<D, S>(dir);
    let (t, y, _) = run(sys, y0, budget, tol, |s, acc| {
        let c = obs(s, acc)?;
        if let Control::Stop(t, y) = c {
            found = Some((t, y));
        }
        Ok(c)
    })?;
    match found {
        Some(_) => Ok(Crossing {
            state: y,
            time: dir.sign() * t,
        }),
        None => Err(Error::NoCrossing { budget }),
    }
}

/// First crossing of the section `x = 0, y > 0` after the re-detection
/// guard, in the given time direction.
pub fn section_crossing(
    x0: [f64; 3],
    params: &ModelParams,
    tol: f64,
    dir: TimeDirection,
    budget: f64,
) -> Result<Crossing<3>> {
    let field = LangfordField {
        params: *params,
        sign: dir.sign(),
    };
    crossing_generic(&field, x0, dir, tol, budget)
}

/// Forward crossing with the default time budget.
pub fn next_section_crossing(x0: [f64; 3], params: &ModelParams, tol: f64) -> Result<([f64; 3], f64)> {
    let c = section_crossing(x0, params, tol, TimeDirection::Forward, CROSSING_BUDGET)?;
    Ok((c.state, c.time))
}

/// Section crossing carrying the fundamental matrix of the flow up to the
/// crossing time.
pub fn section_crossing_variational(
    x0: [f64; 3],
    params: &ModelParams,
    tol: f64,
    dir: TimeDirection,
    budget: f64,
) -> Result<(VariationalState, f64)> {
    let field = VariationalField {
        params: *params,
        sign: dir.sign(),
    };
    let c = crossing_generic(&field, variational_initial(x0), dir, tol, budget)?;
    Ok((unpack_variational(&c.state), c.time))
}
