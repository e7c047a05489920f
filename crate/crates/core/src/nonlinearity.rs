//! Nonlinearities `g`, their hypothesis checks, and the extended vector fields
//! `f` (sign extension) and `h` (truncation) built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{decompose_humps, HumpPartition, WeightSpec, DEFAULT_SIGN_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Nonlinearity {
    /// `g(s) = s^p`, `p > 1`.
    Power { p: f64 },
    /// `g(s) = Σ_j c_j s^(j+2)`.
    Polymix { coeffs: Vec<f64> },
    /// `g(s) = scale · s · arctan(s)`.
    Atan { scale: f64 },
    /// Natural cubic spline through `(s, g)` nodes starting at `(0, 0)`;
    /// linear beyond the last node.
    Table { spline: CubicSpline },
}

impl Nonlinearity {
    /// Builds a preset from its config tag and parameter list.
    pub fn from_params(kind: &str, params: &[f64]) -> Result<Self> {
        let bad = |msg: &str| -> Result<Self> { Err(Error::BadParams(format!("{kind}: {msg}"))) };
        match kind {
            "power" => match params {
                [p] if *p > 1.0 && p.is_finite() => Ok(Self::Power { p: *p }),
                _ => bad("expects a single exponent p > 1"),
            },
            "polymix" => {
                if params.is_empty() || params.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
                    return bad("expects nonnegative coefficients for s^2, s^3, ...");
                }
                if params.iter().all(|&c| c == 0.0) {
                    return bad("at least one coefficient must be positive");
                }
                Ok(Self::Polymix { coeffs: params.to_vec() })
            }
            "atan" => match params {
                [s] if *s > 0.0 && s.is_finite() => Ok(Self::Atan { scale: *s }),
                _ => bad("expects a single positive scale"),
            },
            "table" => {
                if params.len() < 4 || params.len() % 2 != 0 {
                    return bad("expects flattened (s, g) pairs, at least two nodes");
                }
                let nodes: Vec<(f64, f64)> = params.chunks(2).map(|c| (c[0], c[1])).collect();
                if nodes[0] != (0.0, 0.0) {
                    return bad("first node must be (0, 0)");
                }
                if nodes.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return bad("nodes must have increasing s");
                }
                if nodes[1..].iter().any(|n| !(n.1 > 0.0)) {
                    return bad("g must be positive for s > 0");
                }
                Ok(Self::Table { spline: CubicSpline::natural(&nodes) })
            }
            other => Err(Error::BadParams(format!("unknown nonlinearity kind '{other}'"))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Power { .. } => "power",
            Self::Polymix { .. } => "polymix",
            Self::Atan { .. } => "atan",
            Self::Table { .. } => "table",
        }
    }

    /// `g(s)`; arguments below zero are clamped to zero.
    pub fn g(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match self {
            Self::Power { p } => s.powf(*p),
            Self::Polymix { coeffs } => {
                let mut acc = 0.0;
                for &c in coeffs.iter().rev() {
                    acc = acc * s + c;
                }
                acc * s * s
            }
            Self::Atan { scale } => scale * s * s.atan(),
            Self::Table { spline } => spline.value(s),
        }
    }

    pub fn dg(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match self {
            Self::Power { p } => {
                if s == 0.0 {
                    0.0
                } else {
                    p * s.powf(p - 1.0)
                }
            }
            Self::Polymix { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| (j + 2) as f64 * c * s.powi(j as i32 + 1))
                .sum(),
            Self::Atan { scale } => scale * (s.atan() + s / (1.0 + s * s)),
            Self::Table { spline } => spline.derivative(s),
        }
    }

    pub fn d2g(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match self {
            Self::Power { p } => p * (p - 1.0) * s.powf(p - 2.0),
            Self::Polymix { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| ((j + 2) * (j + 1)) as f64 * c * s.powi(j as i32))
                .sum(),
            Self::Atan { scale } => {
                let d = 1.0 + s * s;
                2.0 * scale / (d * d)
            }
            Self::Table { spline } => spline.second_derivative(s),
        }
    }
}

/// Natural cubic spline with linear extrapolation past the last node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(nodes: &[(f64, f64)]) -> Self {
        let n = nodes.len();
        let xs: Vec<f64> = nodes.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = nodes.iter().map(|p| p.1).collect();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the interior second derivatives.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut sup = vec![0.0; k];
            for i in 0..k {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                sup[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
            }
            for i in 1..k {
                let sub = xs[i + 1] - xs[i];
                let w = sub / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - sup[i] * m[i + 2]) / diag[i];
            }
        }
        Self { xs, ys, m }
    }

    fn segment(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&v| v <= x);
        i.clamp(1, self.xs.len() - 1) - 1
    }

    fn end_slope(&self) -> f64 {
        let n = self.xs.len();
        let h = self.xs[n - 1] - self.xs[n - 2];
        (self.ys[n - 1] - self.ys[n - 2]) / h + h * (self.m[n - 2] + 2.0 * self.m[n - 1]) / 6.0
    }

    pub fn value(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x > self.xs[n - 1] {
            return self.ys[n - 1] + self.end_slope() * (x - self.xs[n - 1]);
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x > self.xs[n - 1] {
            return self.end_slope();
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let b = (x - self.xs[i]) / h;
        (1.0 - b) * self.m[i] + b * self.m[i + 1]
    }
}

/// Sampled hypothesis checks on `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `g(0) = 0` and `g(s) > 0` on the grid.
    pub positivity: bool,
    /// Forward difference estimate of `g'(0)`.
    pub dg_zero_estimate: f64,
    pub superlinear_at_zero: bool,
    /// `g(s)/s` keeps growing over the last two decades of the grid.
    pub superlinear_at_infinity: bool,
    /// `g'' > 0` on the grid.
    pub convex: bool,
    /// `min g(s)/s` over the top decade of the grid, to compare against the
    /// Dirichlet eigenvalues of the positive humps.
    pub liminf_ratio: f64,
    pub grid_points: usize,
}

/// Geometric sampling grid on `(lo, hi)`.
#[derive(Clone, Copy, Debug)]
pub struct SampleGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for SampleGrid {
    fn default() -> Self {
        Self { lo: 1e-8, hi: 1e4, points: 241 }
    }
}

impl SampleGrid {
    pub fn nodes(&self) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..self.points)
            .map(|i| (a + (b - a) * i as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

pub fn check_hypotheses(n: &Nonlinearity, grid: SampleGrid) -> HypothesisReport {
    let s = grid.nodes();
    let positivity = n.g(0.0) == 0.0 && s.iter().all(|&x| n.g(x) > 0.0);
    let h = 1e-12;
    let dg_zero_estimate = (n.g(h) - n.g(0.0)) / h;
    let ratio = |x: f64| n.g(x) / x;
    let top = grid.hi;
    let mid = grid.hi / 100.0;
    let growing = s.windows(2).filter(|w| w[0] >= mid).all(|w| ratio(w[1]) >= ratio(w[0]));
    let superlinear_at_infinity = growing && ratio(top) >= 1.5 * ratio(mid);
    let liminf_ratio = s.iter().filter(|&&x| x >= top / 10.0).map(|&x| ratio(x)).fold(f64::INFINITY, f64::min);
    HypothesisReport {
        positivity,
        dg_zero_estimate,
        superlinear_at_zero: dg_zero_estimate.abs() < 1e-6,
        superlinear_at_infinity,
        convex: s.iter().all(|&x| n.d2g(x) > 0.0),
        liminf_ratio,
        grid_points: s.len(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Extension {
    /// `f(t, s) = −s` for `s ≤ 0`.
    Sign,
    /// `h(t, s)`: zero below 0, affine above `r`.
    Truncated { r: f64 },
}

/// Scalar second-order field `u'' = accel(t, u, u')` integrated by
/// [`crate::dynamics`].
pub trait PlanarField: Sync {
    /// Period of the time dependence.
    fn period(&self) -> f64;

    fn accel(&self, t: f64, u: f64, up: f64) -> f64;

    /// `(∂accel/∂u, ∂accel/∂u')`.
    fn accel_jacobian(&self, t: f64, u: f64, up: f64) -> (f64, f64);

    /// Times in `(t0, t1)` where the coefficients lose smoothness.
    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }

    /// Whether `u = 0` is a switching surface (steps restart at crossings).
    fn switches_at_zero(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug)]
pub struct ExtendedField {
    pub nonlinearity: Nonlinearity,
    pub weight: WeightSpec,
    pub extension: Extension,
    pub friction: f64,
    partition: Option<HumpPartition>,
}

impl ExtendedField {
    pub fn new(nonlinearity: Nonlinearity, weight: WeightSpec) -> Self {
        let partition = decompose_humps(&weight, DEFAULT_SIGN_TOL).ok();
        Self { nonlinearity, weight, extension: Extension::Sign, friction: 0.0, partition }
    }

    pub fn truncated(mut self, r: f64) -> Self {
        self.extension = Extension::Truncated { r };
        self
    }

    pub fn untruncated(mut self) -> Self {
        self.extension = Extension::Sign;
        self
    }

    pub fn with_friction(mut self, c: f64) -> Self {
        self.friction = c;
        self
    }

    pub fn partition(&self) -> Option<&HumpPartition> {
        self.partition.as_ref()
    }

    /// `f(t, s)` or `h(t, s)` depending on the extension.
    pub fn forcing(&self, t: f64, s: f64) -> f64 {
        let q = self.weight.eval(t);
        match self.extension {
            Extension::Sign => {
                if s <= 0.0 {
                    -s
                } else {
                    q * self.nonlinearity.g(s)
                }
            }
            Extension::Truncated { r } => {
                if s < 0.0 {
                    0.0
                } else if s <= r {
                    q * self.nonlinearity.g(s)
                } else {
                    q * (self.nonlinearity.g(r) + self.nonlinearity.dg(r) * (s - r))
                }
            }
        }
    }

    /// `∂_s` of [`Self::forcing`], using the right limit at `s = 0`.
    pub fn d_forcing(&self, t: f64, s: f64) -> f64 {
        let q = self.weight.eval(t);
        match self.extension {
            Extension::Sign => {
                if s < 0.0 {
                    -1.0
                } else {
                    q * self.nonlinearity.dg(s)
                }
            }
            Extension::Truncated { r } => {
                if s < 0.0 {
                    0.0
                } else {
                    q * self.nonlinearity.dg(s.min(r))
                }
            }
        }
    }

    /// Planar vector field `(u', −c u' − f(t, u))`.
    pub fn field_eval(&self, t: f64, s: f64, sp: f64) -> (f64, f64) {
        (sp, self.accel(t, s, sp))
    }
}

impl PlanarField for ExtendedField {
    fn period(&self) -> f64 {
        self.weight.period
    }

    fn accel(&self, t: f64, u: f64, up: f64) -> f64 {
        -self.friction * up - self.forcing(t, u)
    }

    fn accel_jacobian(&self, t: f64, u: f64, _up: f64) -> (f64, f64) {
        (-self.d_forcing(t, u), -self.friction)
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = match &self.partition {
            Some(p) => p.boundaries_in(t0, t1),
            None => Vec::new(),
        };
        let nodes = self.weight.nodes();
        if !nodes.is_empty() {
            let period = self.weight.period;
            let first = (t0 / period).floor() as i64;
            let last = (t1 / period).ceil() as i64;
            for l in first..=last {
                for &n in &nodes {
                    let t = n + l as f64 * period;
                    if t > t0 && t < t1 {
                        out.push(t);
                    }
                }
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * (1.0 + b.abs()));
        out
    }

    fn switches_at_zero(&self) -> bool {
        matches!(self.extension, Extension::Sign)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn preset_values() {
        let p = Nonlinearity::from_params("power", &[2.0]).unwrap();
        assert_eq!(p.g(3.0), 9.0);
        let m = Nonlinearity::from_params("polymix", &[100.0, 100.0]).unwrap();
        assert_eq!(m.g(1.0), 200.0);
        let a = Nonlinearity::from_params("atan", &[400.0]).unwrap();
        assert!((a.g(1.0) - 100.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn bad_params() {
        assert!(Nonlinearity::from_params("power", &[1.0]).is_err());
        assert!(Nonlinearity::from_params("polymix", &[-1.0, 2.0]).is_err());
        assert!(Nonlinearity::from_params("atan", &[0.0]).is_err());
        assert!(Nonlinearity::from_params("table", &[0.0, 0.0, 1.0]).is_err());
        assert!(Nonlinearity::from_params("cosh", &[1.0]).is_err());
    }

    #[test]
    fn hypothesis_examples() {
        let r = check_hypotheses(&Nonlinearity::Power { p: 2.0 }, SampleGrid::default());
        assert!(r.positivity && r.superlinear_at_zero && r.superlinear_at_infinity && r.convex);

        let r = check_hypotheses(&Nonlinearity::Atan { scale: 400.0 }, SampleGrid::default());
        assert!(r.positivity && r.superlinear_at_zero && r.convex);
        assert!(!r.superlinear_at_infinity);
        assert!((r.liminf_ratio - 200.0 * PI).abs() < 0.5, "{}", r.liminf_ratio);

        let m = Nonlinearity::Polymix { coeffs: vec![100.0, 100.0] };
        assert!(check_hypotheses(&m, SampleGrid::default()).convex);
        assert!((m.d2g(0.5) - (200.0 + 600.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let presets = [
            Nonlinearity::Power { p: 2.5 },
            Nonlinearity::Polymix { coeffs: vec![100.0, 100.0] },
            Nonlinearity::Atan { scale: 400.0 },
        ];
        for n in &presets {
            for s in (SampleGrid { lo: 1e-3, hi: 1e3, points: 61 }).nodes() {
                let h = 1e-5 * s;
                let fd1 = (n.g(s + h) - n.g(s - h)) / (2.0 * h);
                let fd2 = (n.dg(s + h) - n.dg(s - h)) / (2.0 * h);
                assert!((fd1 - n.dg(s)).abs() <= 1e-6 * n.dg(s).abs(), "{n:?} g' at {s}");
                // Cancellation floor: rounding in g' is amplified by 1/h.
                let floor = 1e-15 * n.dg(s).abs() / h;
                assert!((fd2 - n.d2g(s)).abs() <= 1e-6 * n.d2g(s).abs() + floor, "{n:?} g'' at {s}");
            }
        }
    }

    #[test]
    fn spline_interpolates_and_extends_linearly() {
        let nodes: Vec<f64> = (0..=10).flat_map(|i| { let s = i as f64 * 0.5; [s, s * s * s] }).collect();
        let n = Nonlinearity::from_params("table", &nodes).unwrap();
        for i in 0..=10 {
            let s = i as f64 * 0.5;
            assert!((n.g(s) - s * s * s).abs() < 1e-12);
        }
        let slope = n.dg(5.0);
        assert!((n.g(6.0) - (125.0 + slope)).abs() < 1e-9);
        assert_eq!(n.d2g(7.0), 0.0);
    }

    fn unit_field(n: Nonlinearity, q: f64) -> ExtendedField {
        ExtendedField::new(n, WeightSpec::constant(1.0, q).unwrap())
    }

    #[test]
    fn field_examples() {
        let f = unit_field(Nonlinearity::Power { p: 2.0 }, 1.0);
        assert_eq!(f.forcing(0.3, -2.0), 2.0);
        assert_eq!(f.field_eval(0.3, -2.0, 0.0), (0.0, -2.0));

        let h = unit_field(Nonlinearity::Power { p: 2.0 }, 1.0).truncated(1.0);
        assert_eq!(h.field_eval(0.0, 3.0, 0.0).1, -5.0);

        let c = unit_field(Nonlinearity::Power { p: 2.0 }, 1.0).with_friction(1.0);
        assert_eq!(c.field_eval(0.0, 0.0, 2.0).1, -2.0);
    }

    #[test]
    fn extensions_are_continuous() {
        let w = WeightSpec::sin(1.0, 3.0, 10.0).unwrap();
        let f = ExtendedField::new(Nonlinearity::Atan { scale: 400.0 }, w.clone());
        let h = f.clone().truncated(2.0);
        for i in 0..40 {
            let t = i as f64 / 40.0;
            let e = 1e-14;
            assert!((f.forcing(t, -e) - f.forcing(t, e)).abs() < 1e-12);
            assert!((h.forcing(t, -e) - h.forcing(t, e)).abs() < 1e-12);
            // Adjacent floats on either side of R.
            let above = f64::from_bits(2.0f64.to_bits() + 1);
            let below = f64::from_bits(2.0f64.to_bits() - 1);
            let scale = h.forcing(t, 2.0).abs().max(1.0);
            assert!((h.forcing(t, below) - h.forcing(t, above)).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn truncation_has_linear_growth() {
        let w = WeightSpec::sin(2.0 * PI, 1.0, 6.0).unwrap();
        let n = Nonlinearity::Polymix { coeffs: vec![100.0, 100.0] };
        let r = 0.5;
        let h = ExtendedField::new(n.clone(), w.clone()).truncated(r);
        let qmax = w.max_abs();
        let b = qmax * n.dg(r);
        let a = qmax * (n.g(r) + n.dg(r) * r);
        for i in 0..200 {
            let s = -50.0 + i as f64;
            for j in 0..16 {
                let t = j as f64 * 0.4;
                assert!(h.forcing(t, s).abs() <= a + b * s.abs() + 1e-9);
            }
        }
    }
}
