//! Principal eigenvalue of the periodic Hill problem `v'' + (λ + Q(t))v = 0`
//! and weighted Dirichlet eigenvalues `φ'' + λ q(t) φ = 0` on one hump.

use serde::{Deserialize, Serialize};

use crate::dynamics::{flow_with_jacobian, solve, LinearField, MonodromyData, Options};
use crate::error::{Error, Result};
use crate::nonlinearity::{ExtendedField, PlanarField};
use crate::periodic::{shifted_distance, PeriodicOrbit};
use crate::weights::{decompose_humps, WeightSpec, DEFAULT_SIGN_TOL};

/// Integration tolerance for the linear problems.
pub const SPECTRAL_TOL: f64 = 1e-12;
/// Bracket expansion limit `|λ| ≤ 10⁶`.
pub const LAMBDA_LIMIT: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HillResult {
    pub lambda0: f64,
    pub bracket: (f64, f64),
    pub discriminant_at_lambda0: f64,
    pub iterations: usize,
}

/// Brent's root finder on a sign-changing bracket.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> (f64, usize) {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return (a, 0);
    }
    if fb == 0.0 {
        return (b, 0);
    }
    assert!(fa.signum() != fb.signum(), "brent needs a sign change");
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for it in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return (b, it);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                (s * (2.0 * m * q0 * (q0 - r) - (b - a) * (r - 1.0)), (q0 - 1.0) * (r - 1.0) * (s - 1.0))
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    (b, max_iter)
}

/// Prüfer angle `θ' = cos²θ + p(t) sin²θ` for `v = r sin θ`, `v' = r cos θ`.
fn prufer_angle<P: Fn(f64) -> f64>(p: P, theta0: f64, t0: f64, t1: f64, kinks: &[f64]) -> Result<f64> {
    let rhs = |t: f64, y: &[f64; 1]| {
        let (s, c) = y[0].sin_cos();
        [c * c + p(t) * s * s]
    };
    let opts = Options { tol: SPECTRAL_TOL, escape: None, switch: None };
    Ok(solve(&rhs, t0, t1, [theta0], kinks, &opts)?.last()[0])
}

/// The periodic Hill problem for a `T`-periodic coefficient `Q`.
pub struct HillProblem<'a> {
    pub coeff: &'a (dyn Fn(f64) -> f64 + Sync),
    pub period: f64,
    /// Kinks of `Q` inside `(0, T)`.
    pub kinks: Vec<f64>,
}

impl<'a> HillProblem<'a> {
    pub fn new(coeff: &'a (dyn Fn(f64) -> f64 + Sync), period: f64) -> Self {
        Self { coeff, period, kinks: Vec::new() }
    }

    pub fn monodromy(&self, lambda: f64) -> Result<MonodromyData> {
        let field = LinearField { coeff: |t: f64| lambda + (self.coeff)(t), friction: 0.0, period: self.period, kinks: self.kinks.clone() };
        let (_, md) = flow_with_jacobian(&field, [0.0, 0.0], 0.0, self.period, SPECTRAL_TOL)
            .map_err(|e| Error::IntegrationFailure(format!("Hill monodromy at λ = {lambda}: {e}")))?;
        Ok(md)
    }

    /// Trace of the monodromy matrix.
    pub fn discriminant(&self, lambda: f64) -> Result<f64> {
        let tr = self.monodromy(lambda)?.trace;
        Ok(if tr.is_nan() { f64::INFINITY } else { tr })
    }

    /// `λ < λ₀`: the discriminant exceeds 2 and the Floquet solution of the
    /// larger multiplier has no zero.
    pub fn below_principal(&self, lambda: f64) -> Result<bool> {
        let md = self.monodromy(lambda)?;
        let [[a, b], [c, d]] = md.m;
        let disc = a + d;
        if !disc.is_finite() {
            // Overflowed growth: λ + Q is very negative, no oscillation.
            return Ok(true);
        }
        if disc <= 2.0 {
            return Ok(false);
        }
        let rho = 0.5 * (disc + (disc * disc - 4.0 * md.det).max(0.0).sqrt());
        let (x, y) = if (rho - a).abs() + b.abs() >= (rho - d).abs() + c.abs() { (b, rho - a) } else { (rho - d, c) };
        let (x, y) = if x < 0.0 || (x == 0.0 && y < 0.0) { (-x, -y) } else { (x, y) };
        if x == 0.0 {
            return Ok(false);
        }
        let theta0 = x.atan2(y);
        let theta1 = prufer_angle(|t| lambda + (self.coeff)(t), theta0, 0.0, self.period, &self.kinks)?;
        Ok(theta1 < std::f64::consts::PI)
    }

    fn sampled_range(&self) -> (f64, f64) {
        let n = 4000;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for i in 0..n {
            let v = (self.coeff)(self.period * (i as f64 + 0.5) / n as f64);
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        (hi, sum / n as f64)
    }

    /// Smallest periodic eigenvalue, to `1e−9` in `λ`.
    pub fn principal_eigenvalue(&self) -> Result<HillResult> {
        let (qmax, qmean) = self.sampled_range();
        let mut lo = -qmax - 1.0;
        let mut hi = -qmean;
        let mut step = 1.0;
        while !self.below_principal(lo)? {
            lo -= step;
            step *= 2.0;
            if lo < -LAMBDA_LIMIT {
                return Err(Error::BracketFailure(format!("discriminant stays below 2 down to λ = {lo}")));
            }
        }
        step = 1.0;
        while self.below_principal(hi)? {
            hi += step;
            step *= 2.0;
            if hi > LAMBDA_LIMIT {
                return Err(Error::BracketFailure(format!("no periodic eigenvalue below λ = {hi}")));
            }
        }
        let mut iterations = 0;
        let mut d_hi = self.discriminant(hi)?;
        // `disc(hi) < 2` alone does not place `hi` below `λ₁`: the starting
        // bound can sit several bands up, so narrow on the predicate first.
        while (!(d_hi < 2.0) || hi - lo > 1e-6 * (1.0 + hi.abs())) && hi - lo > 1e-12 * (1.0 + hi.abs()) {
            let mid = 0.5 * (lo + hi);
            if self.below_principal(mid)? {
                lo = mid;
            } else {
                hi = mid;
                d_hi = self.discriminant(hi)?;
            }
            iterations += 1;
        }
        let bracket = (lo, hi);
        if !(d_hi < 2.0) {
            return Ok(HillResult { lambda0: hi, bracket, discriminant_at_lambda0: d_hi, iterations });
        }
        let mut failure = None;
        let (root, it) = brent(
            |l| match self.discriminant(l) {
                Ok(d) => d - 2.0,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            lo,
            hi,
            1e-12,
            200,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(HillResult { lambda0: root, bracket, discriminant_at_lambda0: self.discriminant(root)?, iterations: iterations + it })
    }
}

/// Trace of the monodromy matrix of `v'' + (λ + Q(t))v = 0` over one period.
pub fn hill_discriminant(coeff: &(dyn Fn(f64) -> f64 + Sync), period: f64, lambda: f64) -> Result<f64> {
    HillProblem::new(coeff, period).discriminant(lambda)
}

pub fn principal_eigenvalue(coeff: &(dyn Fn(f64) -> f64 + Sync), period: f64) -> Result<HillResult> {
    HillProblem::new(coeff, period).principal_eigenvalue()
}

/// `λ₀(∂_s f(t, u(t)))` along a `T`-periodic orbit and whether it is
/// negative.
pub fn verify_morse(orbit: &PeriodicOrbit, field: &ExtendedField) -> Result<(f64, bool)> {
    let period = field.weight.period;
    if orbit.order_k > 1 && shifted_distance(orbit, orbit, period) > 1e-6 {
        return Err(Error::BadParams("linearization index needs a T-periodic orbit".into()));
    }
    let coeff = |t: f64| field.d_forcing(t, orbit.u(t));
    let mut problem = HillProblem::new(&coeff, period);
    problem.kinks = field.breakpoints(0.0, period);
    let res = problem.principal_eigenvalue()?;
    Ok((res.lambda0, res.lambda0 < 0.0))
}

/// Smallest `λ > 0` such that `φ'' + λ q φ = 0`, `φ(lo) = 0`, `φ'(lo) = 1`
/// has `φ(hi) = 0`, for `q ≥ 0` on `[lo, hi]`.
pub fn dirichlet_eigenvalue_on(q: &dyn Fn(f64) -> f64, lo: f64, hi: f64, kinks: &[f64]) -> Result<f64> {
    if !(hi > lo) {
        return Err(Error::BadParams(format!("empty interval [{lo}, {hi}]")));
    }
    let pi = std::f64::consts::PI;
    let excess = |lambda: f64| -> Result<f64> { Ok(prufer_angle(|t| lambda * q(t), 0.0, lo, hi, kinks)? - pi) };
    let (mut a, mut b) = (0.0, 1.0);
    while excess(b)? < 0.0 {
        a = b;
        b *= 2.0;
        if b > 1e12 {
            return Err(Error::BracketFailure("no Dirichlet eigenvalue below 1e12".into()));
        }
    }
    for _ in 0..20 {
        let mid = 0.5 * (a + b);
        if excess(mid)? < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mut failure = None;
    let (root, _) = brent(
        |l| match excess(l) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        a,
        b,
        1e-13 * b,
        200,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(root),
    }
}

/// `λ₁ⁱ` on the positive hump `I⁺_i` (1-based).
pub fn dirichlet_eigenvalue(w: &WeightSpec, hump_index: usize) -> Result<f64> {
    let part = decompose_humps(w, DEFAULT_SIGN_TOL)?;
    if hump_index == 0 || hump_index > part.m() {
        return Err(Error::BadParams(format!("hump index {hump_index} outside 1..={}", part.m())));
    }
    let h = part.positive(hump_index);
    let kinks: Vec<f64> = w.nodes().into_iter().filter(|&t| t > h.lo && t < h.hi).collect();
    dirichlet_eigenvalue_on(&|t| w.eval(t), h.lo, h.hi, &kinks)
}
