//! Dormand–Prince 5(4) integration with dense output, blow-up detection and
//! the variational flow used for Poincaré-map Jacobians.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::PlanarField;

/// Norm of `(u, u')` above which a solution is declared to blow up.
pub const ESCAPE_THRESHOLD: f64 = 1e8;

const UNDERFLOW_FRAC: f64 = 1e-14;
const MAX_STEPS: usize = 20_000_000;

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

/// Continuous-extension coefficients of one step.
pub type DenseCoeffs<const N: usize> = [[f64; N]; 5];

fn interpolate<const N: usize>(c: &DenseCoeffs<N>, theta: f64) -> [f64; N] {
    let s = 1.0 - theta;
    std::array::from_fn(|i| c[0][i] + theta * (c[1][i] + s * (c[2][i] + theta * (c[3][i] + s * c[4][i]))))
}

/// Dense solution of an `N`-dimensional system.
#[derive(Clone, Debug)]
pub struct Solution<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; N]>,
    pub dense: Vec<DenseCoeffs<N>>,
    /// Set when the planar components left the escape ball; the solution
    /// stops at the last state inside it.
    pub escaped: bool,
}

impl<const N: usize> Solution<N> {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("solution has at least one node")
    }

    pub fn last(&self) -> [f64; N] {
        *self.states.last().expect("solution has at least one node")
    }

    /// Dense evaluation; clamps outside `[start, end]`. Stored nodes are
    /// returned verbatim.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0];
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1];
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        if self.times[i] == t {
            return self.states[i];
        }
        let theta = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        interpolate(&self.dense[i], theta)
    }
}

pub(crate) struct Options {
    pub tol: f64,
    /// Escape threshold on the norm of components 0 and 1.
    pub escape: Option<f64>,
    /// Component whose sign changes are located and stepped onto exactly.
    pub switch: Option<usize>,
}

struct Step<const N: usize> {
    y: [f64; N],
    k7: [f64; N],
    err: f64,
    dense: DenseCoeffs<N>,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn dp_step<const N: usize, F>(rhs: &F, t: f64, y: &[f64; N], k1: &[f64; N], h: f64, tol: f64) -> Step<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k2 = rhs(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = rhs(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = rhs(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = rhs(t + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = rhs(t + h, &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y1 = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = rhs(t + h, &y1);

    let mut acc = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = tol * (1.0 + y[i].abs().max(y1[i].abs()));
        acc += (e / sc).powi(2);
    }
    let err = (acc / N as f64).sqrt();

    let mut dense = [[0.0; N]; 5];
    for i in 0..N {
        let ydiff = y1[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        dense[0][i] = y[i];
        dense[1][i] = ydiff;
        dense[2][i] = bspl;
        dense[3][i] = ydiff - h * k7[i] - bspl;
        dense[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Step { y: y1, k7, err: if err.is_finite() { err } else { f64::INFINITY }, dense }
}

fn planar_norm<const N: usize>(y: &[f64; N]) -> f64 {
    if N >= 2 {
        y[0].hypot(y[1])
    } else {
        y[0].abs()
    }
}

/// Integrates `y' = rhs(t, y)` over `[t0, t1]`, landing exactly on every
/// breakpoint and restarting the stage sequence there.
pub(crate) fn solve<const N: usize, F>(
    rhs: &F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    breaks: &[f64],
    opts: &Options,
) -> Result<Solution<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut sol = Solution { times: vec![t0], states: vec![y0], dense: Vec::new(), escaped: false };
    if !(t1 > t0) {
        return Ok(sol);
    }
    if !(opts.tol > 0.0) {
        return Err(Error::BadParams(format!("integration tolerance must be positive, got {}", opts.tol)));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationFailure("non-finite initial state".into()));
    }
    let span = t1 - t0;
    let h_min = UNDERFLOW_FRAC * span;
    let mut stops: Vec<f64> = breaks.iter().copied().filter(|&b| b > t0 && b < t1).collect();
    stops.sort_by(|a, b| a.total_cmp(b));
    stops.dedup();
    stops.push(t1);

    let mut t = t0;
    let mut y = y0;
    let mut h = (1e-3 * span).max(h_min * 10.0);
    let mut steps = 0usize;
    for &stop in &stops {
        if stop - t <= h_min {
            continue;
        }
        let mut k1 = rhs(t, &y);
        let mut rejected = false;
        while t < stop {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::IntegrationFailure(format!("step budget exhausted at t = {t}")));
            }
            let mut last = false;
            if t + h >= stop || stop - (t + h) < 1e-3 * h {
                h = stop - t;
                last = true;
            }
            let mut step = dp_step(rhs, t, &y, &k1, h, opts.tol);
            if step.err > 1.0 {
                let fac = (0.9 * step.err.powf(-0.2)).clamp(0.2, 1.0);
                h *= fac;
                rejected = true;
                if h < h_min {
                    return Err(Error::StepUnderflow { time: t, step: h });
                }
                continue;
            }
            let err = step.err;
            if let Some(c) = opts.switch {
                if y[c] * step.y[c] < 0.0 {
                    // Bisect the crossing on the continuous extension, then
                    // retake the step so that it ends on the switching line.
                    let (mut lo, mut hi) = (0.0, 1.0);
                    let s0 = y[c].signum();
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if interpolate(&step.dense, mid)[c] * s0 > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let theta = hi;
                    if theta > 1e-6 && theta < 1.0 - 1e-6 {
                        h *= theta;
                        last = false;
                        step = dp_step(rhs, t, &y, &k1, h, opts.tol);
                    }
                }
            }
            if let Some(esc) = opts.escape {
                if !(planar_norm(&step.y) < esc) {
                    sol.escaped = true;
                    return Ok(sol);
                }
            }
            let t_new = if last { stop } else { t + h };
            sol.times.push(t_new);
            sol.states.push(step.y);
            sol.dense.push(step.dense);
            t = t_new;
            y = step.y;
            k1 = step.k7;
            let mut fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            if rejected {
                fac = fac.min(1.0);
            }
            rejected = false;
            if !last {
                h *= fac;
            } else {
                h = (h * fac).max(h_min * 10.0);
            }
        }
        t = stop;
    }
    Ok(sol)
}

/// Dense trajectory of the planar system `(u, u')`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
    /// Time of the last state inside the escape ball, if the solution blew up.
    pub blow_up: Option<f64>,
    pub dense: Vec<DenseCoeffs<2>>,
}

impl From<Solution<2>> for Trajectory {
    fn from(s: Solution<2>) -> Self {
        let blow_up = s.escaped.then(|| s.end());
        Self { times: s.times, states: s.states, blow_up, dense: s.dense }
    }
}

impl Trajectory {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one node")
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn last(&self) -> [f64; 2] {
        *self.states.last().expect("trajectory has at least one node")
    }

    /// Dense evaluation on `[start, end]` (clamped outside).
    pub fn eval(&self, t: f64) -> [f64; 2] {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0];
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1];
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        if self.times[i] == t {
            return self.states[i];
        }
        let theta = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        interpolate(&self.dense[i], theta)
    }

    /// Evaluation of the periodic continuation with period `span()`.
    pub fn eval_periodic(&self, t: f64) -> [f64; 2] {
        let span = self.span();
        if span <= 0.0 {
            return self.states[0];
        }
        let s = (t - self.start()).rem_euclid(span);
        self.eval(self.start() + s)
    }

    pub fn min_u(&self) -> f64 {
        let mut m = f64::INFINITY;
        for (i, c) in self.dense.iter().enumerate() {
            m = m.min(self.states[i][0]);
            for j in 1..8 {
                m = m.min(interpolate(c, j as f64 / 8.0)[0]);
            }
        }
        m.min(self.last()[0])
    }

    /// Maximum of `u` over `[lo, hi]` on the periodic continuation: a dense
    /// scan followed by golden-section refinement.
    pub fn max_u_periodic(&self, lo: f64, hi: f64) -> f64 {
        const SAMPLES: usize = 2000;
        let dt = (hi - lo) / SAMPLES as f64;
        let u = |t: f64| self.eval_periodic(t)[0];
        let (mut best, mut at) = (f64::NEG_INFINITY, lo);
        for i in 0..=SAMPLES {
            let t = lo + i as f64 * dt;
            let v = u(t);
            if v > best {
                best = v;
                at = t;
            }
        }
        let (mut a, mut b) = ((at - dt).max(lo), (at + dt).min(hi));
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let x1 = b - r * (b - a);
            let x2 = a + r * (b - a);
            if u(x1) < u(x2) {
                a = x1;
            } else {
                b = x2;
            }
        }
        best.max(u(0.5 * (a + b)))
    }

    /// Fixed-stride samples `(t, u, u')`: `floor(span/stride) + 1` rows
    /// starting at `start`, optionally using the periodic continuation.
    pub fn samples(&self, start: f64, span: f64, stride: f64, periodic: bool) -> Vec<[f64; 3]> {
        let rows = (span / stride + 1e-9).floor() as usize + 1;
        (0..rows)
            .map(|i| {
                let t = start + i as f64 * stride;
                let y = if periodic { self.eval_periodic(t) } else { self.eval(t) };
                [t, y[0], y[1]]
            })
            .collect()
    }

    /// Writes `t,u,up` rows with 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W, start: f64, span: f64, stride: f64, periodic: bool) -> std::io::Result<()> {
        writeln!(out, "t,u,up")?;
        for [t, u, up] in self.samples(start, span, stride, periodic) {
            writeln!(out, "{t:.11e},{u:.11e},{up:.11e}")?;
        }
        Ok(())
    }
}

/// Linear field `u'' + c u' + p(t) u = 0` with `T`-periodic `p`.
pub struct LinearField<P: Fn(f64) -> f64 + Sync> {
    pub coeff: P,
    pub friction: f64,
    pub period: f64,
    /// Kinks of `p` within one period `[0, T)`.
    pub kinks: Vec<f64>,
}

impl<P: Fn(f64) -> f64 + Sync> LinearField<P> {
    pub fn new(coeff: P, period: f64) -> Self {
        Self { coeff, friction: 0.0, period, kinks: Vec::new() }
    }
}

impl<P: Fn(f64) -> f64 + Sync> PlanarField for LinearField<P> {
    fn period(&self) -> f64 {
        self.period
    }

    fn accel(&self, t: f64, u: f64, up: f64) -> f64 {
        -self.friction * up - (self.coeff)(t) * u
    }

    fn accel_jacobian(&self, t: f64, _u: f64, _up: f64) -> (f64, f64) {
        (-(self.coeff)(t), -self.friction)
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if self.kinks.is_empty() {
            return out;
        }
        let first = (t0 / self.period).floor() as i64;
        let last = (t1 / self.period).ceil() as i64;
        for l in first..=last {
            for &k in &self.kinks {
                let t = k + l as f64 * self.period;
                if t > t0 && t < t1 {
                    out.push(t);
                }
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }
}

fn planar_rhs<F: PlanarField + ?Sized>(field: &F) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
    move |t, y| [y[1], field.accel(t, y[0], y[1])]
}

fn planar_options<F: PlanarField + ?Sized>(field: &F, tol: f64) -> Options {
    Options { tol, escape: Some(ESCAPE_THRESHOLD), switch: field.switches_at_zero().then_some(0) }
}

/// Integrates the planar system, returning the trajectory up to the escape
/// time if the solution blows up.
pub fn integrate_until_escape<F: PlanarField + ?Sized>(field: &F, y0: [f64; 2], t0: f64, t1: f64, tol: f64) -> Result<Trajectory> {
    let breaks = field.breakpoints(t0, t1);
    let sol = solve(&planar_rhs(field), t0, t1, y0, &breaks, &planar_options(field, tol))?;
    Ok(sol.into())
}

/// Integrates `(u, u')` over `[t0, t1]`; blow-up is an error.
pub fn integrate<F: PlanarField + ?Sized>(field: &F, y0: [f64; 2], t0: f64, t1: f64, tol: f64) -> Result<Trajectory> {
    let traj = integrate_until_escape(field, y0, t0, t1, tol)?;
    match traj.blow_up {
        Some(time) => Err(Error::BlowUp { time }),
        None => Ok(traj),
    }
}

/// Fundamental matrix of the variational equation and its invariants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonodromyData {
    /// Row-major `∂y(t1)/∂y(t0)`.
    pub m: [[f64; 2]; 2],
    pub trace: f64,
    /// Product of per-segment determinants (better conditioned than the
    /// determinant of the product when the flow is strongly hyperbolic).
    pub det: f64,
}

fn mat_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]))
}

/// Flow map `y(t0) ↦ y(t1)` and its Jacobian from the augmented
/// six-dimensional variational system, restarted at each breakpoint.
pub fn flow_with_jacobian<F: PlanarField + ?Sized>(
    field: &F,
    y0: [f64; 2],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<([f64; 2], MonodromyData)> {
    let rhs = |t: f64, z: &[f64; 6]| -> [f64; 6] {
        let (ju, jp) = field.accel_jacobian(t, z[0], z[1]);
        [
            z[1],
            field.accel(t, z[0], z[1]),
            z[3],
            ju * z[2] + jp * z[3],
            z[5],
            ju * z[4] + jp * z[5],
        ]
    };
    let opts = Options { tol, escape: Some(ESCAPE_THRESHOLD), switch: field.switches_at_zero().then_some(0) };
    let mut knots = vec![t0];
    knots.extend(field.breakpoints(t0, t1));
    knots.push(t1);
    knots.dedup();

    let mut y = y0;
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    let mut det = 1.0;
    for w in knots.windows(2) {
        if !(w[1] > w[0]) {
            continue;
        }
        let z0 = [y[0], y[1], 1.0, 0.0, 0.0, 1.0];
        let sol = solve(&rhs, w[0], w[1], z0, &[], &opts)?;
        if sol.escaped {
            return Err(Error::BlowUp { time: sol.end() });
        }
        let z = sol.last();
        let seg = [[z[2], z[4]], [z[3], z[5]]];
        det *= seg[0][0] * seg[1][1] - seg[0][1] * seg[1][0];
        m = mat_mul(&seg, &m);
        y = [z[0], z[1]];
    }
    Ok((y, MonodromyData { m, trace: m[0][0] + m[1][1], det }))
}

/// `k`-th iterate of the Poincaré map based at `t0`, with its Jacobian.
pub fn poincare_map<F: PlanarField + ?Sized>(field: &F, t0: f64, y0: [f64; 2], k: u32, tol: f64) -> Result<([f64; 2], MonodromyData)> {
    flow_with_jacobian(field, y0, t0, t0 + k as f64 * field.period(), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{ExtendedField, Nonlinearity};
    use crate::weights::WeightSpec;
    use std::f64::consts::PI;

    fn linear(q: f64, period: f64) -> LinearField<impl Fn(f64) -> f64 + Sync> {
        LinearField::new(move |_| q, period)
    }

    #[test]
    fn harmonic_oscillator_returns() {
        let f = linear(1.0, 2.0 * PI);
        let tr = integrate(&f, [1.0, 0.0], 0.0, 2.0 * PI, 1e-10).unwrap();
        let y = tr.last();
        assert!((y[0] - 1.0).abs() < 1e-8 && y[1].abs() < 1e-8, "{y:?}");
        for i in 0..50 {
            let t = 2.0 * PI * i as f64 / 50.0;
            assert!((tr.eval(t)[0] - t.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn empty_interval() {
        let f = linear(1.0, 1.0);
        let tr = integrate(&f, [0.3, -0.2], 1.5, 1.5, 1e-10).unwrap();
        assert_eq!(tr.states, vec![[0.3, -0.2]]);
    }

    #[test]
    fn dense_output_hits_nodes_exactly() {
        let f = ExtendedField::new(Nonlinearity::Power { p: 3.0 }, WeightSpec::sin(1.0, 2.0, 3.0).unwrap());
        let tr = integrate(&f, [0.4, 0.1], 0.0, 1.0, 1e-9).unwrap();
        for (t, y) in tr.times.iter().zip(&tr.states) {
            assert_eq!(tr.eval(*t), *y);
        }
    }

    #[test]
    fn quadratic_blow_up_time() {
        // u'' = u², u(0) = 1, u'(0) = 2: energy u'²/2 − u³/3 = 5/3.
        let f = ExtendedField::new(Nonlinearity::Power { p: 2.0 }, WeightSpec::constant(1.0, -1.0).unwrap());
        let err = integrate(&f, [1.0, 2.0], 0.0, 10.0, 1e-10).unwrap_err();
        let Error::BlowUp { time } = err else { panic!("expected blow-up, got {err}") };
        // Oracle: time for the planar norm to reach the escape threshold,
        // from the energy integral (substitute u = 1/v² to tame the tail).
        let speed = |u: f64| (2.0 * u.powi(3) / 3.0 + 10.0 / 3.0).sqrt();
        let mut u_esc = 1.0f64;
        let (mut a, mut b) = (1.0, 1e8);
        for _ in 0..200 {
            u_esc = 0.5 * (a + b);
            if u_esc.hypot(speed(u_esc)) < ESCAPE_THRESHOLD {
                a = u_esc;
            } else {
                b = u_esc;
            }
        }
        let v_end = u_esc.powf(-0.5);
        let t_esc = crate::quadrature::integrate(|v: f64| 2.0 / (v.powi(3) * speed(1.0 / (v * v))), v_end, 1.0, 1e-13);
        assert!(time <= t_esc + 1e-9, "{time} vs {t_esc}");
        assert!(t_esc - time < 1e-4, "{time} vs {t_esc}");
    }

    #[test]
    fn free_particle_map() {
        let f = linear(0.0, 2.0);
        let (y, md) = poincare_map(&f, 0.0, [0.5, 0.25], 1, 1e-10).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] - 0.25).abs() < 1e-12);
        let want = [[1.0, 2.0], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((md.m[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn harmonic_monodromy_is_identity() {
        let f = linear(1.0, 2.0 * PI);
        let (_, md) = poincare_map(&f, 0.0, [0.7, 0.1], 1, 1e-11).unwrap();
        assert!((md.det - 1.0).abs() < 1e-8);
        assert!((md.trace - 2.0).abs() < 1e-8);
        assert!((md.m[0][1]).abs() < 1e-8 && (md.m[1][0]).abs() < 1e-8);
    }

    #[test]
    fn liouville_with_friction() {
        let w = WeightSpec::sin(2.0 * PI, 1.0, 6.0).unwrap();
        let f = ExtendedField::new(Nonlinearity::Polymix { coeffs: vec![100.0, 100.0] }, w).with_friction(0.5);
        let (_, md) = poincare_map(&f, 0.0, [0.004, 0.0], 1, 1e-10).unwrap();
        let want = (-0.5 * 2.0 * PI).exp();
        assert!((md.det - want).abs() < 1e-6 * want, "{} vs {want}", md.det);
    }

    #[test]
    fn switching_crosses_zero_cleanly() {
        // Below zero the sign extension gives u'' = u.
        let f = ExtendedField::new(Nonlinearity::Power { p: 2.0 }, WeightSpec::constant(1.0, 1.0).unwrap());
        let tr = integrate(&f, [0.0, -1.0], 0.0, 1.0, 1e-11).unwrap();
        let y = tr.last();
        assert!((y[0] + 1f64.sinh()).abs() < 1e-9 && (y[1] + 1f64.cosh()).abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn csv_rows_and_values() {
        let f = linear(1.0, 2.0 * PI);
        let tr = integrate(&f, [1.0, 0.0], 0.0, 2.0 * PI, 1e-11).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, 0.0, 2.0 * PI, 0.1, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,u,up");
        assert_eq!(lines.len() - 1, (2.0 * PI / 0.1).floor() as usize + 1);
        for l in &lines[1..] {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            assert!((v[1] - v[0].cos()).abs() < 1e-8);
        }
    }
}
