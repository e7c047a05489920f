//! The T-periodic sign-changing weight `q(t) = a⁺(t) − μ a⁻(t)` and its hump
//! structure.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature;

/// Default tolerance (in t) for locating hump boundaries.
pub const DEFAULT_SIGN_TOL: f64 = 1e-10;

const SAMPLES_PER_PERIOD: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightBase {
    /// `a(t) = sin(2π · freq · t / T)`.
    Sin { freq: f64 },
    /// Breakpoints `(t, a(t))` on `[0, T]`, linearly interpolated.
    Table { points: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub period: f64,
    pub mu: f64,
    pub base: WeightBase,
}

impl WeightSpec {
    pub fn sin(period: f64, freq: f64, mu: f64) -> Result<Self> {
        if !(freq > 0.0) || freq.fract() != 0.0 {
            return Err(Error::BadParams(format!(
                "sin weight needs a positive integer number of cycles per period, got {freq}"
            )));
        }
        Self::new(period, mu, WeightBase::Sin { freq })
    }

    pub fn table(period: f64, points: Vec<(f64, f64)>, mu: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::BadParams("weight table needs at least two breakpoints".into()));
        }
        if points[0].0 != 0.0 || (points[points.len() - 1].0 - period).abs() > 1e-12 * period {
            return Err(Error::BadParams("weight table must start at t = 0 and end at t = T".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::BadParams("weight table times must be strictly increasing".into()));
        }
        let (a0, an) = (points[0].1, points[points.len() - 1].1);
        let scale = points.iter().fold(0.0f64, |s, p| s.max(p.1.abs())).max(1.0);
        if (a0 - an).abs() > 1e-12 * scale {
            return Err(Error::BadParams(format!("weight table is not periodic: a(0) = {a0}, a(T) = {an}")));
        }
        Self::new(period, mu, WeightBase::Table { points })
    }

    /// A constant weight, stored as a two-point table.
    pub fn constant(period: f64, value: f64) -> Result<Self> {
        Self::table(period, vec![(0.0, value), (period, value)], 1.0)
    }

    fn new(period: f64, mu: f64, base: WeightBase) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::BadParams(format!("period must be positive, got {period}")));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::BadParams(format!("mu must be positive, got {mu}")));
        }
        Ok(Self { period, mu, base })
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.period, mu, self.base.clone())
    }

    fn reduce(&self, t: f64) -> f64 {
        let r = t.rem_euclid(self.period);
        if r >= self.period {
            0.0
        } else {
            r
        }
    }

    /// The sign-changing base function `a(t)`.
    pub fn base_value(&self, t: f64) -> f64 {
        let t = self.reduce(t);
        match &self.base {
            WeightBase::Sin { freq } => (2.0 * PI * freq * t / self.period).sin(),
            WeightBase::Table { points } => {
                let i = points.partition_point(|p| p.0 <= t);
                if i == 0 {
                    return points[0].1;
                }
                if i >= points.len() {
                    return points[points.len() - 1].1;
                }
                let (t0, a0) = points[i - 1];
                let (t1, a1) = points[i];
                a0 + (a1 - a0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn a_plus(&self, t: f64) -> f64 {
        self.base_value(t).max(0.0)
    }

    pub fn a_minus(&self, t: f64) -> f64 {
        (-self.base_value(t)).max(0.0)
    }

    /// `q(t) = a⁺(t) − μ a⁻(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        let a = self.base_value(t);
        if a >= 0.0 {
            a
        } else {
            self.mu * a
        }
    }

    /// Points in `[0, T]` where `q` is not smooth (table nodes); empty for
    /// the sinusoid, whose kinks are the hump boundaries.
    pub fn nodes(&self) -> Vec<f64> {
        match &self.base {
            WeightBase::Sin { .. } => Vec::new(),
            WeightBase::Table { points } => points.iter().map(|p| p.0).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        let n = SAMPLES_PER_PERIOD;
        let mut m = (0..n)
            .map(|i| self.eval(self.period * i as f64 / n as f64).abs())
            .fold(0.0f64, f64::max);
        for t in self.nodes() {
            m = m.max(self.eval(t).abs());
        }
        m
    }

    /// Exact integrals of `(a⁺, a⁻)` over one period for table weights.
    fn table_parts(points: &[(f64, f64)]) -> (f64, f64) {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for w in points.windows(2) {
            let ((t0, a0), (t1, a1)) = (w[0], w[1]);
            let dt = t1 - t0;
            if a0 >= 0.0 && a1 >= 0.0 {
                pos += 0.5 * (a0 + a1) * dt;
            } else if a0 <= 0.0 && a1 <= 0.0 {
                neg -= 0.5 * (a0 + a1) * dt;
            } else {
                let s = a0 / (a0 - a1) * dt;
                let (p, n) = if a0 > 0.0 {
                    (0.5 * a0 * s, -0.5 * a1 * (dt - s))
                } else {
                    (0.5 * a1 * (dt - s), -0.5 * a0 * s)
                };
                pos += p;
                neg += n;
            }
        }
        (pos, neg)
    }

    /// `(∫₀ᵀ a⁺, ∫₀ᵀ a⁻)`.
    pub fn part_integrals(&self) -> (f64, f64) {
        match &self.base {
            WeightBase::Table { points } => Self::table_parts(points),
            WeightBase::Sin { .. } => {
                let breaks = self.kinks(1);
                let pos = quadrature::integrate_with_breaks(|t| self.a_plus(t), 0.0, self.period, &breaks, 1e-14);
                let neg = quadrature::integrate_with_breaks(|t| self.a_minus(t), 0.0, self.period, &breaks, 1e-14);
                (pos, neg)
            }
        }
    }

    /// Zeros of `a` and table nodes on `[0, kT]`.
    fn kinks(&self, k: usize) -> Vec<f64> {
        let mut per_period = self.nodes();
        if let WeightBase::Sin { freq } = self.base {
            let n = (2.0 * freq).round() as usize;
            per_period.extend((0..=n).map(|j| self.period * j as f64 / (2.0 * freq)));
        }
        (0..k)
            .flat_map(|l| per_period.iter().map(move |&t| t + l as f64 * self.period))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }
}

/// A closed interval `I^±_i + ℓT` on which the weight has constant sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedInterval {
    pub lo: f64,
    pub hi: f64,
    pub sign: Sign,
    /// 1-based hump index `i`.
    pub index: usize,
    /// Period shift `ℓ`.
    pub shift: usize,
}

impl SignedInterval {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// `J^±_{i,ℓ} = I^±_i + ℓT`.
    pub fn shifted(&self, shift: usize, period: f64) -> Self {
        let d = (shift as f64 - self.shift as f64) * period;
        Self {
            lo: self.lo + d,
            hi: self.hi + d,
            shift,
            ..*self
        }
    }
}

/// Alternating hump decomposition `I⁺_1, I⁻_1, …, I⁺_m, I⁻_m` of one period.
///
/// The intervals cover `[σ₁, σ₁ + T]`, where `σ₁ ∈ [0, T)` is the left end of
/// the first positive hump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumpPartition {
    pub period: f64,
    pub intervals: Vec<SignedInterval>,
}

impl HumpPartition {
    pub fn m(&self) -> usize {
        self.intervals.len() / 2
    }

    /// `I⁺_i`, 1-based.
    pub fn positive(&self, i: usize) -> &SignedInterval {
        &self.intervals[2 * (i - 1)]
    }

    /// `I⁻_i`, 1-based.
    pub fn negative(&self, i: usize) -> &SignedInterval {
        &self.intervals[2 * (i - 1) + 1]
    }

    pub fn positives(&self) -> impl Iterator<Item = &SignedInterval> {
        self.intervals.iter().filter(|s| s.sign == Sign::Positive)
    }

    /// The `km` positive humps `J⁺_{i,ℓ}` ordered by `j = i + ℓm`.
    pub fn positive_humps(&self, k: usize) -> Vec<SignedInterval> {
        (0..k)
            .flat_map(|l| self.positives().map(move |h| h.shifted(l, self.period)))
            .collect()
    }

    /// All interval endpoints in `[t0, t1]`, shifted periodically.
    pub fn boundaries_in(&self, t0: f64, t1: f64) -> Vec<f64> {
        let base: Vec<f64> = self.intervals.iter().map(|s| s.lo).collect();
        let first = ((t0 - base[0]) / self.period).floor() as i64 - 1;
        let last = ((t1 - base[0]) / self.period).ceil() as i64 + 1;
        let mut out = Vec::new();
        for l in first..=last {
            for &b in &base {
                let t = b + l as f64 * self.period;
                if t > t0 && t < t1 {
                    out.push(t);
                }
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }

    /// Default Poincaré section: the middle of the first negative hump.
    pub fn section_time(&self) -> f64 {
        self.negative(1).midpoint()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Class {
    Neg,
    NonNeg,
}

/// Locates the positive and negative humps of `w` on one period.
///
/// Zero plateaus adjacent to a positive region are absorbed into the positive
/// hump, so that the weight is nonzero on a left neighbourhood of every
/// positive hump's start and a right neighbourhood of its end.
pub fn decompose_humps(w: &WeightSpec, sign_tol: f64) -> Result<HumpPartition> {
    let period = w.period;
    let mut ts: Vec<f64> = (0..SAMPLES_PER_PERIOD)
        .map(|i| period * i as f64 / SAMPLES_PER_PERIOD as f64)
        .collect();
    ts.extend(w.nodes().into_iter().filter(|&t| t < period));
    ts.sort_by(|a, b| a.total_cmp(b));
    ts.dedup();
    let vals: Vec<f64> = ts.iter().map(|&t| w.base_value(t)).collect();
    let scale = vals.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::NoSignChange);
    }
    let ztol = 1e-13 * scale;
    let label: Vec<i8> = vals
        .iter()
        .map(|&a| if a > ztol { 1 } else if a < -ztol { -1 } else { 0 })
        .collect();
    if !label.contains(&1) || !label.contains(&-1) {
        return Err(Error::NoSignChange);
    }
    let n = ts.len();
    // Zero samples take the class of their nearest nonzero neighbours: negative
    // only when both sides are negative.
    let nearest = |i: usize, step: isize| -> i8 {
        let mut j = i as isize;
        loop {
            j = (j + step).rem_euclid(n as isize);
            if label[j as usize] != 0 {
                return label[j as usize];
            }
        }
    };
    let class: Vec<Class> = (0..n)
        .map(|i| match label[i] {
            -1 => Class::Neg,
            1 => Class::NonNeg,
            _ if nearest(i, -1) == -1 && nearest(i, 1) == -1 => Class::Neg,
            _ => Class::NonNeg,
        })
        .collect();

    let mut starts = Vec::new(); // N → P: σ
    let mut ends = Vec::new(); // P → N: τ
    for i in 0..n {
        let j = (i + 1) % n;
        if class[i] == class[j] {
            continue;
        }
        let ta = ts[i];
        let tb = if j == 0 { period } else { ts[j] };
        let left_neg = class[i] == Class::Neg;
        let b = bisect_boundary(|t| w.base_value(t) < -ztol, ta, tb, left_neg, sign_tol);
        let mut b = b.rem_euclid(period);
        if b > period - 10.0 * sign_tol || b < 10.0 * sign_tol {
            b = 0.0;
        }
        if left_neg {
            starts.push(b);
        } else {
            ends.push(b);
        }
    }
    if starts.is_empty() || starts.len() != ends.len() {
        return Err(Error::NoSignChange);
    }
    starts.sort_by(|a, b| a.total_cmp(b));
    ends.sort_by(|a, b| a.total_cmp(b));
    let sigma1 = starts[0];
    let unwrap = |t: f64| if t < sigma1 { t + period } else { t };
    let mut starts: Vec<f64> = starts.into_iter().map(unwrap).collect();
    let mut ends: Vec<f64> = ends.into_iter().map(unwrap).collect();
    starts.sort_by(|a, b| a.total_cmp(b));
    ends.sort_by(|a, b| a.total_cmp(b));
    let m = starts.len();
    let mut intervals = Vec::with_capacity(2 * m);
    for i in 0..m {
        let next = if i + 1 < m { starts[i + 1] } else { sigma1 + period };
        if !(starts[i] < ends[i] && ends[i] < next) {
            return Err(Error::BadParams("weight humps do not alternate".into()));
        }
        intervals.push(SignedInterval { lo: starts[i], hi: ends[i], sign: Sign::Positive, index: i + 1, shift: 0 });
        intervals.push(SignedInterval { lo: ends[i], hi: next, sign: Sign::Negative, index: i + 1, shift: 0 });
    }
    Ok(HumpPartition { period, intervals })
}

/// Bisection for the switch of `neg` between `ta` and `tb`.
fn bisect_boundary<F: Fn(f64) -> bool>(neg: F, mut ta: f64, mut tb: f64, left_neg: bool, tol: f64) -> f64 {
    while tb - ta > tol {
        let mid = 0.5 * (ta + tb);
        if neg(mid) == left_neg {
            ta = mid;
        } else {
            tb = mid;
        }
    }
    0.5 * (ta + tb)
}

/// `∫₀^{kT} q(t) dt`.
pub fn mean_value(w: &WeightSpec, k: usize) -> f64 {
    match &w.base {
        WeightBase::Table { points } => {
            let (pos, neg) = WeightSpec::table_parts(points);
            k as f64 * (pos - w.mu * neg)
        }
        WeightBase::Sin { .. } => {
            let breaks = w.kinks(k);
            quadrature::integrate_with_breaks(|t| w.eval(t), 0.0, k as f64 * w.period, &breaks, 1e-13 * k as f64)
        }
    }
}

/// `μ^# = ∫ a⁺ / ∫ a⁻`.
pub fn mu_sharp(w: &WeightSpec) -> Result<f64> {
    let (pos, neg) = w.part_integrals();
    if neg <= 0.0 {
        return Err(Error::DefiniteWeight);
    }
    Ok(pos / neg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let w = WeightSpec::sin(2.0 * PI, 1.0, 6.0).unwrap();
        assert!((w.eval(PI / 2.0) - 1.0).abs() < 1e-15);
        assert!((w.eval(1.5 * PI) + 6.0).abs() < 1e-14);
        let w = WeightSpec::sin(1.0, 3.0, 10.0).unwrap();
        assert!((w.eval(1.0 / 12.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eval_is_periodic() {
        let w = WeightSpec::sin(1.0, 3.0, 10.0).unwrap();
        for i in 0..50 {
            let t = 0.0137 * i as f64;
            assert!((w.eval(t) - w.eval(t + 1.0)).abs() < 1e-12);
            assert!((w.eval(t) - w.eval(t + 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn fig1_humps() {
        let w = WeightSpec::sin(1.0, 3.0, 10.0).unwrap();
        let p = decompose_humps(&w, DEFAULT_SIGN_TOL).unwrap();
        assert_eq!(p.m(), 3);
        let expect = [(0.0, 1.0 / 6.0), (1.0 / 3.0, 0.5), (2.0 / 3.0, 5.0 / 6.0)];
        for (h, (lo, hi)) in p.positives().zip(expect) {
            assert!((h.lo - lo).abs() < 1e-9 && (h.hi - hi).abs() < 1e-9, "{h:?}");
        }
        assert!((p.section_time() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn sine_single_hump() {
        let w = WeightSpec::sin(2.0 * PI, 1.0, 1.0).unwrap();
        let p = decompose_humps(&w, DEFAULT_SIGN_TOL).unwrap();
        assert_eq!(p.m(), 1);
        assert_eq!(p.positive(1).lo, 0.0);
        assert!((p.positive(1).hi - PI).abs() < 1e-9);
        assert!((p.negative(1).hi - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn definite_weight_rejected() {
        let w = WeightSpec::constant(1.0, 1.0).unwrap();
        assert!(matches!(decompose_humps(&w, DEFAULT_SIGN_TOL), Err(Error::NoSignChange)));
        assert!(matches!(mu_sharp(&w), Err(Error::DefiniteWeight)));
    }

    #[test]
    fn wrapped_hump_and_plateau() {
        // Positive around t = 0 (wrapping), zero plateau on [0.5, 0.6].
        let pts = vec![(0.0, 1.0), (0.2, 0.0), (0.4, -1.0), (0.5, 0.0), (0.6, 0.0), (0.8, 1.0), (1.0, 1.0)];
        let w = WeightSpec::table(1.0, pts, 2.0).unwrap();
        let p = decompose_humps(&w, DEFAULT_SIGN_TOL).unwrap();
        assert_eq!(p.m(), 1);
        let pos = p.positive(1);
        assert!((pos.lo - 0.5).abs() < 1e-9, "{pos:?}");
        assert!((pos.hi - 1.2).abs() < 1e-9, "{pos:?}");
        assert!((p.negative(1).hi - 1.5).abs() < 1e-9);
    }

    #[test]
    fn parts_vanish_on_opposite_humps() {
        let w = WeightSpec::sin(1.0, 3.0, 10.0).unwrap();
        let p = decompose_humps(&w, DEFAULT_SIGN_TOL).unwrap();
        for h in &p.intervals {
            for j in 1..20 {
                let t = h.lo + h.len() * j as f64 / 20.0;
                match h.sign {
                    Sign::Positive => assert_eq!(w.a_minus(t), 0.0),
                    Sign::Negative => assert_eq!(w.a_plus(t), 0.0),
                }
            }
        }
    }

    #[test]
    fn mean_value_examples() {
        let w = WeightSpec::sin(2.0 * PI, 1.0, 1.0).unwrap();
        assert!(mean_value(&w, 1).abs() < 1e-10);
        let w = WeightSpec::sin(1.0, 3.0, 10.0).unwrap();
        assert!((mean_value(&w, 1) - (1.0 - 10.0) / PI).abs() < 1e-10);
        let w = WeightSpec::sin(2.0 * PI, 1.0, 6.0).unwrap();
        assert!((mean_value(&w, 3) + 30.0).abs() < 1e-8);
    }

    #[test]
    fn mu_sharp_symmetric() {
        assert!((mu_sharp(&WeightSpec::sin(2.0 * PI, 1.0, 3.0).unwrap()).unwrap() - 1.0).abs() < 1e-12);
        assert!((mu_sharp(&WeightSpec::sin(1.0, 3.0, 10.0).unwrap()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        assert!(WeightSpec::sin(1.0, 2.5, 1.0).is_err());
        assert!(WeightSpec::sin(-1.0, 1.0, 1.0).is_err());
        assert!(WeightSpec::sin(1.0, 1.0, 0.0).is_err());
        assert!(WeightSpec::table(1.0, vec![(0.0, 1.0), (1.0, 0.0)], 1.0).is_err());
    }
}
