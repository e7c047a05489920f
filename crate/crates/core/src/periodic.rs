//! kT-periodic solutions: relaxation seeds, Newton shooting on the Poincaré
//! map, hump-string classification, periodicity classes and minimality.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{canonical_block_rotation, divisors};
use nalgebra::{DMatrix, DVector};

use crate::dynamics::{flow_with_jacobian, integrate, poincare_map, MonodromyData, Trajectory};
use crate::error::{Error, Result};
use crate::nonlinearity::{ExtendedField, PlanarField};
use crate::quadrature::integrate_with_breaks;
use crate::weights::HumpPartition;

/// Newton stops and reports a singular matrix below this `|det(M − I)|`.
pub const SINGULAR_DET: f64 = 1e-12;
/// Maximum number of step halvings in the damped Newton iteration.
pub const MAX_HALVINGS: usize = 20;
/// Orbits whose maximum stays below this are treated as the trivial solution.
pub const TRIVIAL_AMPLITUDE: f64 = 1e-8;
/// Converged states within this many Newton tolerances of the origin are
/// indistinguishable from the trivial solution.
pub const TRIVIAL_FACTOR: f64 = 1e3;

/// `{0,1}^{km}` code of which positive humps carry a large maximum; bit `j`
/// (zero-based `ℓm + i − 1`) belongs to `J⁺_{i,ℓ}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HumpString {
    pub bits: Vec<u8>,
}

impl HumpString {
    pub fn new(bits: Vec<u8>) -> Self {
        assert!(bits.iter().all(|&b| b <= 1), "hump strings are binary");
        Self { bits }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let bits: Option<Vec<u8>> = s
            .chars()
            .filter(|c| !matches!(c, '(' | ')' | ',' | ' '))
            .map(|c| c.to_digit(2).map(|d| d as u8))
            .collect();
        bits.filter(|b| !b.is_empty()).map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Compact form, e.g. `101`.
    pub fn compact(&self) -> String {
        self.bits.iter().map(|b| char::from(b'0' + b)).collect()
    }

    /// Least rotation by whole periods (`m` bits each) and the number of
    /// periods rotated.
    pub fn canonical(&self, m: usize) -> (HumpString, usize) {
        let (bits, shift) = canonical_block_rotation(&self.bits, m);
        (HumpString { bits }, shift)
    }

    /// All nonzero strings of length `n`, in lexicographic order.
    pub fn all_nonzero(n: usize) -> Vec<HumpString> {
        assert!(n < 24, "too many strings to enumerate");
        (1u32..(1 << n))
            .map(|v| HumpString::new((0..n).map(|j| ((v >> (n - 1 - j)) & 1) as u8).collect()))
            .collect()
    }
}

impl fmt::Display for HumpString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.bits.iter().map(|b| b.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Clone, Debug)]
pub struct PeriodicOrbit {
    /// State `(u, u')` at the section time.
    pub y0: [f64; 2],
    pub section: f64,
    pub order_k: u32,
    /// `|P_{kT}(y0) − y0|`.
    pub residual: f64,
    pub iterations: usize,
    pub string: HumpString,
    pub minimal: bool,
    pub class_id: usize,
    pub max_per_hump: Vec<f64>,
    pub monodromy: MonodromyData,
    /// One period `[section, section + kT]`, re-integrated at a tighter
    /// tolerance.
    pub trajectory: Trajectory,
}

impl PeriodicOrbit {
    pub fn period(&self) -> f64 {
        self.trajectory.span()
    }

    /// `u(t)` on the periodic continuation.
    pub fn u(&self, t: f64) -> f64 {
        self.trajectory.eval_periodic(t)[0]
    }
}

// ---------------------------------------------------------------------------
// Periodic finite-difference relaxation used to build shooting seeds.

fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    if b[0] == 0.0 {
        return None;
    }
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        if m.abs() < 1e-300 {
            return None;
        }
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Cyclic tridiagonal solve (Sherman–Morrison on top of Thomas). `a[0]` is
/// the corner coefficient of `x[n−1]` in row 0, `c[n−1]` that of `x[0]` in
/// row `n−1`.
pub(crate) fn solve_cyclic(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    assert!(n >= 3);
    let gamma = if b[0] != 0.0 { -b[0] } else { 1.0 };
    let mut bb = b.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= a[0] * c[n - 1] / gamma;
    let x = thomas(a, &bb, c, d)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c[n - 1];
    let z = thomas(a, &bb, c, &u)?;
    let denom = 1.0 + z[0] + a[0] * z[n - 1] / gamma;
    if denom == 0.0 {
        return None;
    }
    let fact = (x[0] + a[0] * x[n - 1] / gamma) / denom;
    let out: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Solves the periodic Numerov discretization of `u'' + f(t, u) = 0` on
/// `n` equispaced nodes `t0 + i·span/n` by Newton's method.
pub fn relax(field: &ExtendedField, t0: f64, span: f64, init: Vec<f64>) -> Option<Vec<f64>> {
    let n = init.len();
    let h = span / n as f64;
    let w = h * h / 12.0;
    let ts: Vec<f64> = (0..n).map(|i| t0 + i as f64 * h).collect();
    let residual = |u: &[f64]| -> (Vec<f64>, f64) {
        let f: Vec<f64> = ts.iter().zip(u).map(|(&t, &s)| field.forcing(t, s)).collect();
        let r: Vec<f64> = (0..n)
            .map(|i| {
                let (p, q) = ((i + n - 1) % n, (i + 1) % n);
                u[q] - 2.0 * u[i] + u[p] + w * (f[q] + 10.0 * f[i] + f[p])
            })
            .collect();
        let norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (r, norm)
    };
    let mut u = init;
    let (mut r, mut norm) = residual(&u);
    for _ in 0..100 {
        let df: Vec<f64> = ts.iter().zip(&u).map(|(&t, &s)| field.d_forcing(t, s)).collect();
        let a: Vec<f64> = (0..n).map(|i| 1.0 + w * df[(i + n - 1) % n]).collect();
        let b: Vec<f64> = (0..n).map(|i| -2.0 + 10.0 * w * df[i]).collect();
        let c: Vec<f64> = (0..n).map(|i| 1.0 + w * df[(i + 1) % n]).collect();
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let du = solve_cyclic(&a, &b, &c, &rhs)?;
        let scale = 1.0 + u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut lam = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(x, d)| x + lam * d).collect();
            let (tr, tn) = residual(&trial);
            if tn.is_finite() && (tn < norm || lam < 1e-3) {
                u = trial;
                r = tr;
                norm = tn;
                break;
            }
            lam *= 0.5;
            if lam < 1e-3 {
                return None;
            }
        }
        let step = du.iter().fold(0.0f64, |m, v| m.max(v.abs())) * lam;
        if step < 1e-12 * scale {
            return Some(u);
        }
    }
    None
}

/// Glued bump profile on the relaxation grid: amplitude `A` on humps with
/// bit 1, `εA` on bits 0, and a small floor `0.1·εA` elsewhere.
fn bump_profile(humps: &[crate::weights::SignedInterval], bits: &HumpString, ts: &[f64], span: f64, amp: f64, eps: f64) -> Vec<f64> {
    ts.iter()
        .map(|&t| {
            let mut v = 0.1 * eps * amp;
            for (h, &b) in humps.iter().zip(&bits.bits) {
                let tau = h.lo + (t - h.lo).rem_euclid(span);
                if tau <= h.hi {
                    let s = (std::f64::consts::PI * (tau - h.lo) / h.len()).sin();
                    v += s * if b == 1 { amp } else { eps * amp };
                }
            }
            v
        })
        .collect()
}

/// Amplitudes and small-bump ratios swept by [`seed_guesses`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSweep {
    pub amplitudes: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Relaxation nodes per positive hump and period.
    pub nodes_per_hump: usize,
}

impl Default for SeedSweep {
    fn default() -> Self {
        Self {
            amplitudes: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0, 3.0, 10.0],
            ratios: vec![0.02, 0.1],
            nodes_per_hump: 200,
        }
    }
}

fn section_of(field: &ExtendedField) -> Result<(&HumpPartition, f64)> {
    let p = field.partition().ok_or(Error::NoSignChange)?;
    Ok((p, p.section_time()))
}

/// Initial data for multiple shooting: states at increasing node times,
/// the first of which is the section time.
#[derive(Clone, Debug, PartialEq)]
pub struct ShootingSeed {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
}

impl ShootingSeed {
    pub fn y0(&self) -> [f64; 2] {
        self.states[0]
    }
}

/// Shooting nodes: the section time followed by every hump boundary of the
/// window `[section, section + kT)`.
pub fn shooting_nodes(part: &HumpPartition, section: f64, span: f64) -> Vec<f64> {
    let mut nodes = vec![section];
    nodes.extend(part.boundaries_in(section, section + span));
    nodes
}

/// Relaxed glued-bump profiles for string `bits`, sampled at the shooting
/// nodes.
pub fn relaxed_profiles(field: &ExtendedField, k: u32, bits: &HumpString, sweep: &SeedSweep) -> Result<Vec<ShootingSeed>> {
    let (part, ts0) = section_of(field)?;
    let m = part.m();
    if bits.len() != k as usize * m {
        return Err(Error::BadParams(format!("string {bits} has length {} but k·m = {}", bits.len(), k as usize * m)));
    }
    let span = k as f64 * field.weight.period;
    let n = (sweep.nodes_per_hump * m).max(300) * k as usize;
    let h = span / n as f64;
    let ts: Vec<f64> = (0..n).map(|i| ts0 + i as f64 * h).collect();
    let humps = part.positive_humps(k as usize);
    let mut idx: Vec<usize> = shooting_nodes(part, ts0, span)
        .iter()
        .map(|&t| (((t - ts0) / h).round() as usize).min(n - 1))
        .collect();
    idx.dedup();
    let mut out = Vec::new();
    for &amp in &sweep.amplitudes {
        for &eps in &sweep.ratios {
            let init = bump_profile(&humps, bits, &ts, span, amp, eps);
            let Some(u) = relax(field, ts0, span, init) else { continue };
            let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            if !(lo > 0.0) || hi < TRIVIAL_AMPLITUDE {
                continue;
            }
            let at = |i: isize| u[i.rem_euclid(n as isize) as usize];
            let states = idx
                .iter()
                .map(|&i| {
                    let i = i as isize;
                    let up = (at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)) / (12.0 * h);
                    [u[i as usize], up]
                })
                .collect();
            out.push(ShootingSeed { times: idx.iter().map(|&i| ts[i]).collect(), states });
        }
    }
    Ok(out)
}

/// Relaxed seeds `(u, u')` at the section time for string `bits`.
pub fn relaxed_seeds(field: &ExtendedField, k: u32, bits: &HumpString, sweep: &SeedSweep) -> Result<Vec<[f64; 2]>> {
    Ok(relaxed_profiles(field, k, bits, sweep)?.iter().map(ShootingSeed::y0).collect())
}

/// String-independent fallback seeds: `(A, 0)` and `(A, ±ωA)` over a
/// geometric amplitude range.
pub fn grid_seeds(period: f64, amplitudes: &[f64]) -> Vec<[f64; 2]> {
    let omega = 2.0 * std::f64::consts::PI / period;
    amplitudes
        .iter()
        .flat_map(|&a| [[a, 0.0], [a, omega * a], [a, -omega * a]])
        .collect()
}

/// Seeds for the orbit coded by `bits`: relaxed glued-bump profiles first,
/// then the raw constant and grid guesses.
pub fn seed_guesses(field: &ExtendedField, k: u32, bits: &HumpString, sweep: &SeedSweep) -> Result<Vec<[f64; 2]>> {
    if bits.is_zero() {
        return Err(Error::BadParams("the zero string codes the trivial solution".into()));
    }
    let mut out = relaxed_seeds(field, k, bits, sweep)?;
    out.extend(grid_seeds(k as f64 * field.weight.period, &sweep.amplitudes));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Newton shooting.

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub integration_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 40, integration_tol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonResult {
    pub y0: [f64; 2],
    pub residual: f64,
    pub iterations: usize,
    pub monodromy: MonodromyData,
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn newton_step(p: [f64; 2], y: [f64; 2], md: &MonodromyData) -> Result<[f64; 2]> {
    let a = [[md.m[0][0] - 1.0, md.m[0][1]], [md.m[1][0], md.m[1][1] - 1.0]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !(det.abs() >= SINGULAR_DET) {
        return Err(Error::SingularJacobian { det });
    }
    let f = [p[0] - y[0], p[1] - y[1]];
    Ok([-(a[1][1] * f[0] - a[0][1] * f[1]) / det, -(-a[1][0] * f[0] + a[0][0] * f[1]) / det])
}

/// Damped Newton on `y ↦ P_{kT}(y) − y` with the Poincaré map based at `t0`.
pub fn newton_fixed_point<F: PlanarField + ?Sized>(field: &F, t0: f64, y0: [f64; 2], k: u32, opts: &NewtonOptions) -> Result<NewtonResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::BadParams("Newton tolerance must be positive".into()));
    }
    let eval = |y: [f64; 2]| poincare_map(field, t0, y, k, opts.integration_tol);
    let mut y = y0;
    let (mut p, mut md) = eval(y)?;
    let mut res = norm2([p[0] - y[0], p[1] - y[1]]);
    let mut it = 0;
    while it < opts.max_iter {
        if res < opts.tol {
            break;
        }
        let dy = newton_step(p, y, &md)?;
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = [y[0] + lam * dy[0], y[1] + lam * dy[1]];
            if let Ok((tp, tmd)) = eval(trial) {
                let tres = norm2([tp[0] - trial[0], tp[1] - trial[1]]);
                if tres < res {
                    (y, p, md, res) = (trial, tp, tmd, tres);
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        it += 1;
        if !accepted {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
    }
    if res >= opts.tol {
        return Err(Error::NoConvergence { iterations: it, residual: res });
    }
    // Polish: full steps while the residual keeps dropping.
    for _ in 0..3 {
        let Ok(dy) = newton_step(p, y, &md) else { break };
        let trial = [y[0] + dy[0], y[1] + dy[1]];
        match eval(trial) {
            Ok((tp, tmd)) => {
                let tres = norm2([tp[0] - trial[0], tp[1] - trial[1]]);
                if tres < res {
                    (y, p, md, res) = (trial, tp, tmd, tres);
                    it += 1;
                } else {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    Ok(NewtonResult { y0: y, residual: res, iterations: it, monodromy: md })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Segment mismatches `φ(τ_{i+1}; τ_i, y_i) − y_{i+1}` (cyclic) and the
/// segment Jacobians.
fn shooting_residual<F: PlanarField + ?Sized>(
    field: &F,
    times: &[f64],
    span: f64,
    states: &[[f64; 2]],
    tol: f64,
) -> Result<(Vec<f64>, Vec<MonodromyData>)> {
    let s = times.len();
    let mut res = Vec::with_capacity(2 * s);
    let mut jac = Vec::with_capacity(s);
    for i in 0..s {
        let t1 = if i + 1 < s { times[i + 1] } else { times[0] + span };
        let (phi, md) = flow_with_jacobian(field, states[i], times[i], t1, tol)?;
        let next = states[(i + 1) % s];
        res.extend([phi[0] - next[0], phi[1] - next[1]]);
        jac.push(md);
    }
    Ok((res, jac))
}

/// Damped Newton on the cyclic multiple-shooting system. Returns the
/// refined node states once the largest mismatch drops below `tol` or stops
/// improving.
pub fn multiple_shooting<F: PlanarField + ?Sized>(field: &F, seed: &ShootingSeed, k: u32, opts: &NewtonOptions) -> Result<ShootingSeed> {
    let s = seed.times.len();
    let span = k as f64 * field.period();
    let tol = opts.integration_tol;
    let mut states = seed.states.clone();
    let (mut res, mut jac) = shooting_residual(field, &seed.times, span, &states, tol)?;
    let mut norm = max_abs(&res);
    for it in 0..opts.max_iter {
        if norm < 1e-2 * opts.tol {
            break;
        }
        let mut a = DMatrix::<f64>::zeros(2 * s, 2 * s);
        for (i, md) in jac.iter().enumerate() {
            let j = (i + 1) % s;
            for r in 0..2 {
                for c in 0..2 {
                    a[(2 * i + r, 2 * i + c)] += md.m[r][c];
                }
                a[(2 * i + r, 2 * j + r)] -= 1.0;
            }
        }
        let b = DVector::from_iterator(2 * s, res.iter().map(|v| -v));
        let Some(dy) = a.lu().solve(&b) else {
            return Err(Error::SingularJacobian { det: 0.0 });
        };
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<[f64; 2]> = states
                .iter()
                .enumerate()
                .map(|(i, y)| [y[0] + lam * dy[2 * i], y[1] + lam * dy[2 * i + 1]])
                .collect();
            if let Ok((tr, tj)) = shooting_residual(field, &seed.times, span, &trial, tol) {
                let tn = max_abs(&tr);
                if tn < norm {
                    (states, res, jac, norm) = (trial, tr, tj, tn);
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            if norm < opts.tol {
                break;
            }
            return Err(Error::NoConvergence { iterations: it + 1, residual: norm });
        }
    }
    if !(norm < opts.tol) {
        return Err(Error::NoConvergence { iterations: opts.max_iter, residual: norm });
    }
    Ok(ShootingSeed { times: seed.times.clone(), states })
}

/// Shooting seed from a single initial state, by integrating through the
/// nodes.
pub fn seed_from_state(field: &ExtendedField, y0: [f64; 2], k: u32) -> Result<ShootingSeed> {
    let (part, ts) = section_of(field)?;
    let span = k as f64 * field.weight.period;
    let times = shooting_nodes(part, ts, span);
    let tr = integrate(field, y0, ts, ts + span, 1e-8)?;
    let states = times.iter().map(|&t| tr.eval(t)).collect();
    Ok(ShootingSeed { times, states })
}

/// Multiple shooting from the seed's node states, then single-shooting
/// Newton on `P_{kT}` at the section time, a tighter re-integration and the
/// hump maxima of the resulting orbit. The string is left empty until
/// thresholds are known (see [`classify_string`]).
pub fn newton_shoot_seed(field: &ExtendedField, seed: &ShootingSeed, k: u32, opts: &NewtonOptions) -> Result<PeriodicOrbit> {
    let (part, ts) = section_of(field)?;
    if seed.times.first() != Some(&ts) {
        return Err(Error::BadParams("shooting seed must start at the section time".into()));
    }
    let refined = if seed.times.len() > 1 { multiple_shooting(field, seed, k, opts)? } else { seed.clone() };
    let nr = newton_fixed_point(field, ts, refined.y0(), k, opts)?;
    let span = k as f64 * field.weight.period;
    let trajectory = integrate(field, nr.y0, ts, ts + span, opts.integration_tol * 0.1)?;
    let max_per_hump = part
        .positive_humps(k as usize)
        .iter()
        .map(|h| trajectory.max_u_periodic(h.lo, h.hi))
        .collect();
    Ok(PeriodicOrbit {
        y0: nr.y0,
        section: ts,
        order_k: k,
        residual: nr.residual,
        iterations: nr.iterations,
        string: HumpString::new(Vec::new()),
        minimal: true,
        class_id: 0,
        max_per_hump,
        monodromy: nr.monodromy,
        trajectory,
    })
}

/// [`newton_shoot_seed`] from a single state at the section time.
pub fn newton_shoot(field: &ExtendedField, y0: [f64; 2], k: u32, opts: &NewtonOptions) -> Result<PeriodicOrbit> {
    let seed = seed_from_state(field, y0, k)?;
    newton_shoot_seed(field, &seed, k, opts)
}

// ---------------------------------------------------------------------------
// Classification.

/// Thresholds `(r, R)` from a pool of hump maxima: `r` is the geometric
/// midpoint of the widest logarithmic gap, `R` twice the largest maximum.
/// With a single cluster (no gap wider than a factor 1.5) every hump is
/// large and `r` is half the smallest maximum.
pub fn gap_thresholds(maxima: &[f64]) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = maxima.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let big_r = 2.0 * v[v.len() - 1];
    let best = v
        .windows(2)
        .map(|w| ((w[1] / w[0]).ln(), (w[0] * w[1]).sqrt()))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((gap, mid)) if gap > 1.5f64.ln() => Some((mid, big_r)),
        _ => Some((0.5 * v[0], big_r)),
    }
}

/// String of an orbit from its per-hump maxima.
pub fn classify_maxima(maxima: &[f64], r: f64, big_r: f64, band: f64) -> Result<HumpString> {
    let mut bits = Vec::with_capacity(maxima.len());
    for (j, &mx) in maxima.iter().enumerate() {
        if mx > big_r {
            return Err(Error::ExceedsR { hump: j + 1, max: mx, big_r });
        }
        if mx >= r * (1.0 - band) && mx <= r * (1.0 + band) {
            return Err(Error::AmbiguousClassification { hump: j + 1, max: mx, r });
        }
        bits.push(u8::from(mx > r));
    }
    Ok(HumpString::new(bits))
}

pub fn classify_string(orbit: &PeriodicOrbit, r: f64, big_r: f64, band: f64) -> Result<HumpString> {
    classify_maxima(&orbit.max_per_hump, r, big_r, band)
}

fn sample_count(orbit: &PeriodicOrbit) -> usize {
    1000 * orbit.order_k as usize
}

/// `max_t |u(t) − v(t + shift)|` on a uniform grid over one orbit period.
pub fn shifted_distance(u: &PeriodicOrbit, v: &PeriodicOrbit, shift: f64) -> f64 {
    let n = sample_count(u).max(sample_count(v));
    let span = u.period();
    (0..n)
        .map(|i| {
            let t = u.section + span * i as f64 / n as f64;
            (u.u(t) - v.u(t + shift)).abs()
        })
        .fold(0.0, f64::max)
}

/// True when no proper divisor `ℓ` of `k` is a period multiple:
/// `max_t |u(t) − u(t + ℓT)| > threshold` for each of them.
pub fn minimal_order(orbit: &PeriodicOrbit, base_period: f64, threshold: f64) -> bool {
    let k = orbit.order_k as u64;
    divisors(k)
        .into_iter()
        .filter(|&l| l < k)
        .all(|l| shifted_distance(orbit, orbit, l as f64 * base_period) > threshold)
}

/// Distance between periodicity classes: `min_ℓ max_t |u(t) − v(t + ℓT)|`
/// and the minimizing `ℓ`.
pub fn class_distance(u: &PeriodicOrbit, v: &PeriodicOrbit, base_period: f64) -> (f64, usize) {
    (0..u.order_k as usize)
        .map(|l| (shifted_distance(u, v, l as f64 * base_period), l))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("order is at least one")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicityClass {
    pub id: usize,
    /// Least block rotation of the members' strings.
    pub canonical: HumpString,
    /// Indices into the orbit list.
    pub members: Vec<usize>,
    /// Period shift `ℓ` taking the representative to each member.
    pub shifts: Vec<usize>,
    pub minimal: bool,
}

/// Groups orbits (sharing `k`) into periodicity classes and writes the class
/// ids back into the orbits. Classes are numbered by canonical string, then
/// by the representative's initial state.
pub fn dedup_classes(orbits: &mut [PeriodicOrbit], base_period: f64, m: usize, tol: f64) -> Vec<PeriodicityClass> {
    let mut reps: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
    for i in 0..orbits.len() {
        let mut placed = false;
        for (rep, members) in reps.iter_mut() {
            let (d, l) = class_distance(&orbits[*rep], &orbits[i], base_period);
            if d < tol {
                members.push((i, l));
                placed = true;
                break;
            }
        }
        if !placed {
            reps.push((i, vec![(i, 0)]));
        }
    }
    let mut classes: Vec<PeriodicityClass> = reps
        .into_iter()
        .map(|(rep, members)| {
            let canonical = if orbits[rep].string.is_empty() {
                HumpString::new(Vec::new())
            } else {
                orbits[rep].string.canonical(m).0
            };
            PeriodicityClass {
                id: 0,
                canonical,
                minimal: orbits[rep].minimal,
                shifts: members.iter().map(|x| x.1).collect(),
                members: members.into_iter().map(|x| x.0).collect(),
            }
        })
        .collect();
    classes.sort_by(|a, b| {
        a.canonical.cmp(&b.canonical).then_with(|| {
            let (ya, yb) = (orbits[a.members[0]].y0, orbits[b.members[0]].y0);
            ya[0].total_cmp(&yb[0]).then(ya[1].total_cmp(&yb[1]))
        })
    });
    for (id, c) in classes.iter_mut().enumerate() {
        c.id = id;
        for &i in &c.members {
            orbits[i].class_id = id;
        }
    }
    classes
}

// ---------------------------------------------------------------------------
// Necessary conditions.

fn orbit_breaks(orbit: &PeriodicOrbit, field: &ExtendedField) -> Vec<f64> {
    let (t0, t1) = (orbit.trajectory.start(), orbit.trajectory.end());
    let mut b = orbit.trajectory.times.clone();
    b.extend(field.breakpoints(t0, t1));
    b
}

/// `|∫₀^{kT} q g(u)|` and `|k∫₀ᵀ q + ∫₀^{kT} (u'/g(u))² g'(u)|` along the
/// stored trajectory.
pub fn necessary_condition_residuals(orbit: &PeriodicOrbit, field: &ExtendedField) -> (f64, f64) {
    let tr = &orbit.trajectory;
    let (t0, t1) = (tr.start(), tr.end());
    let breaks = orbit_breaks(orbit, field);
    let w = &field.weight;
    let n = &field.nonlinearity;
    let first = integrate_with_breaks(|t| w.eval(t) * n.g(tr.eval(t)[0]), t0, t1, &breaks, 1e-12);
    let kq = integrate_with_breaks(|t| w.eval(t), t0, t1, &field.breakpoints(t0, t1), 1e-13);
    let second = integrate_with_breaks(
        |t| {
            let [u, up] = tr.eval(t);
            let g = n.g(u);
            (up / g).powi(2) * n.dg(u)
        },
        t0,
        t1,
        &breaks,
        1e-12,
    );
    (first.abs(), (kq + second).abs())
}

// ---------------------------------------------------------------------------
// Search.

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchOptions {
    pub k: u32,
    pub integration_tol: f64,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub dedup_tol: f64,
    pub band: f64,
    pub r_override: Option<f64>,
    pub big_r_override: Option<f64>,
    pub sweep: SeedSweep,
    /// Strings to target; all nonzero strings of length km when empty.
    pub strings: Vec<HumpString>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            k: 1,
            integration_tol: 1e-10,
            newton_tol: 1e-9,
            max_iter: 40,
            dedup_tol: 1e-6,
            band: 0.05,
            r_override: None,
            big_r_override: None,
            sweep: SeedSweep::default(),
            strings: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Rejection {
    pub y0: [f64; 2],
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct SearchReport {
    pub k: u32,
    pub m: usize,
    pub r: f64,
    pub big_r: f64,
    pub orbits: Vec<PeriodicOrbit>,
    pub classes: Vec<PeriodicityClass>,
    pub rejected: Vec<Rejection>,
    pub seeds_tried: usize,
    pub newton_failures: usize,
    /// Truncation level of the fallback sweep, if it ran.
    pub truncation: Option<f64>,
}

fn close(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).abs() <= 1e-7 * (1.0 + b[0].abs()) && (a[1] - b[1]).abs() <= 1e-7 * (1.0 + b[1].abs())
}

fn dedup_seeds(mut seeds: Vec<ShootingSeed>) -> Vec<ShootingSeed> {
    let key = |s: &ShootingSeed| s.y0();
    seeds.sort_by(|a, b| key(a)[0].total_cmp(&key(b)[0]).then(key(a)[1].total_cmp(&key(b)[1])));
    let mut out: Vec<ShootingSeed> = Vec::new();
    for s in seeds {
        if !out.iter().any(|o| o.states.len() == s.states.len() && o.states.iter().zip(&s.states).all(|(a, b)| close(*a, *b))) {
            out.push(s);
        }
    }
    out
}

fn is_valid_orbit(o: &PeriodicOrbit, newton_tol: f64) -> std::result::Result<(), String> {
    let max = o.max_per_hump.iter().copied().fold(0.0, f64::max).max(o.trajectory.states.iter().map(|s| s[0]).fold(0.0, f64::max));
    if max < TRIVIAL_AMPLITUDE.max(TRIVIAL_FACTOR * newton_tol) {
        return Err("trivial solution".into());
    }
    let min = o.trajectory.min_u();
    if !(min > 0.0) {
        return Err(format!("not positive (min u = {min:e})"));
    }
    Ok(())
}

fn solve_seeds(field: &ExtendedField, seeds: &[ShootingSeed], k: u32, opts: &NewtonOptions) -> Vec<std::result::Result<PeriodicOrbit, ([f64; 2], String)>> {
    seeds
        .par_iter()
        .map(|s| {
            let o = newton_shoot_seed(field, s, k, opts).map_err(|e| (s.y0(), e.to_string()))?;
            is_valid_orbit(&o, opts.tol).map_err(|e| (o.y0, e))?;
            Ok(o)
        })
        .collect()
}

/// Keeps one orbit per solution (`ℓ = 0` distance below `tol`), preferring
/// the smaller residual.
fn unique_orbits(mut orbits: Vec<PeriodicOrbit>, tol: f64) -> Vec<PeriodicOrbit> {
    orbits.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    let mut out: Vec<PeriodicOrbit> = Vec::new();
    for o in orbits {
        let dup = out.iter().any(|p| (p.y0[0] - o.y0[0]).abs() < tol && (p.y0[1] - o.y0[1]).abs() < 1e3 * tol && shifted_distance(p, &o, 0.0) < tol);
        if !dup {
            out.push(o);
        }
    }
    out
}

/// Multi-seed search for kT-periodic positive solutions of the field.
///
/// Phase one shoots from relaxed glued-bump seeds for every target string.
/// If some target string is still missing, a string-independent grid is
/// solved on the truncated field and its solutions are re-verified on the
/// original one.
pub fn search(field: &ExtendedField, opts: &SearchOptions) -> Result<SearchReport> {
    let (part, _) = section_of(field)?;
    let m = part.m();
    let k = opts.k;
    if k == 0 {
        return Err(Error::BadParams("order k must be at least 1".into()));
    }
    let km = k as usize * m;
    let targets = if opts.strings.is_empty() { HumpString::all_nonzero(km) } else { opts.strings.clone() };
    let nopts = NewtonOptions { tol: opts.newton_tol, max_iter: opts.max_iter, integration_tol: opts.integration_tol };

    let seed_lists: Vec<Vec<ShootingSeed>> = targets
        .par_iter()
        .map(|s| relaxed_profiles(field, k, s, &opts.sweep))
        .collect::<Result<_>>()?;
    let seeds = dedup_seeds(seed_lists.concat());
    let mut tried = seeds.len();
    let mut failures = 0;
    let mut rejected = Vec::new();
    let mut found = Vec::new();
    for r in solve_seeds(field, &seeds, k, &nopts) {
        match r {
            Ok(o) => found.push(o),
            Err((y0, reason)) => {
                failures += 1;
                rejected.push(Rejection { y0, reason });
            }
        }
    }
    let mut orbits = unique_orbits(found, opts.dedup_tol);

    let thresholds = |orbits: &[PeriodicOrbit]| -> Option<(f64, f64)> {
        let pool: Vec<f64> = orbits.iter().flat_map(|o| o.max_per_hump.iter().copied()).collect();
        let (r, big_r) = gap_thresholds(&pool)?;
        Some((opts.r_override.unwrap_or(r), opts.big_r_override.unwrap_or(big_r)))
    };
    let missing = |orbits: &[PeriodicOrbit]| -> bool {
        let Some((r, big_r)) = thresholds(orbits) else { return true };
        let have: Vec<HumpString> = orbits.iter().filter_map(|o| classify_string(o, r, big_r, opts.band).ok()).collect();
        targets.iter().any(|t| !have.contains(t))
    };

    let mut truncation = None;
    if missing(&orbits) {
        let largest = orbits.iter().flat_map(|o| o.max_per_hump.iter().copied()).fold(0.0, f64::max);
        let big = if largest > 0.0 { 10.0 * largest } else { 10.0 * opts.sweep.amplitudes.iter().copied().fold(1.0, f64::max) };
        truncation = Some(big);
        let h_field = field.clone().truncated(big);
        let grid: Vec<ShootingSeed> = grid_seeds(k as f64 * field.weight.period, &opts.sweep.amplitudes)
            .into_iter()
            .filter_map(|y| seed_from_state(&h_field, y, k).ok())
            .collect();
        tried += grid.len();
        let candidates: Vec<ShootingSeed> = solve_seeds(&h_field, &grid, k, &nopts)
            .into_iter()
            .filter_map(|r| r.ok())
            .filter_map(|o| seed_from_state(field, o.y0, k).ok())
            .collect();
        for r in solve_seeds(field, &candidates, k, &nopts) {
            match r {
                Ok(o) => orbits.push(o),
                Err((y0, reason)) => {
                    failures += 1;
                    rejected.push(Rejection { y0, reason });
                }
            }
        }
        orbits = unique_orbits(orbits, opts.dedup_tol);
    }

    let (r, big_r) = thresholds(&orbits).unwrap_or((f64::NAN, f64::NAN));
    let mut kept = Vec::new();
    for mut o in orbits {
        match classify_string(&o, r, big_r, opts.band) {
            Ok(s) if !s.is_zero() => {
                o.string = s;
                kept.push(o);
            }
            Ok(_) => rejected.push(Rejection { y0: o.y0, reason: "all humps below r".into() }),
            Err(e) => rejected.push(Rejection { y0: o.y0, reason: e.to_string() }),
        }
    }
    kept.sort_by(|a, b| a.string.cmp(&b.string).then(a.y0[0].total_cmp(&b.y0[0])).then(a.y0[1].total_cmp(&b.y0[1])));
    let period = field.weight.period;
    for o in kept.iter_mut() {
        o.minimal = minimal_order(o, period, 10.0 * opts.newton_tol);
    }
    let classes = dedup_classes(&mut kept, period, m, opts.dedup_tol);
    rejected.sort_by(|a, b| a.y0[0].total_cmp(&b.y0[0]).then(a.y0[1].total_cmp(&b.y0[1])));
    Ok(SearchReport { k, m, r, big_r, orbits: kept, classes, rejected, seeds_tried: tried, newton_failures: failures, truncation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LinearField;
    use crate::nonlinearity::Nonlinearity;
    use crate::weights::WeightSpec;

    #[test]
    fn cyclic_solver_matches_dense() {
        let n = 7;
        let a: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| -3.0 + 0.05 * i as f64).collect();
        let c: Vec<f64> = (0..n).map(|i| 0.7 - 0.02 * i as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let d: Vec<f64> = (0..n).map(|i| a[i] * x[(i + n - 1) % n] + b[i] * x[i] + c[i] * x[(i + 1) % n]).collect();
        let got = solve_cyclic(&a, &b, &c, &d).unwrap();
        for i in 0..n {
            assert!((got[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_fixed_point_needs_no_iterations() {
        let f = LinearField::new(|_| 1.0, 2.0 * std::f64::consts::PI);
        let r = newton_fixed_point(&f, 0.0, [1.0, 0.0], 1, &NewtonOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.residual < 1e-9);
    }

    #[test]
    fn strings_and_thresholds() {
        assert_eq!(HumpString::all_nonzero(2).iter().map(|s| s.compact()).collect::<Vec<_>>(), ["01", "10", "11"]);
        assert_eq!(HumpString::parse("(1,0)").unwrap().bits, vec![1, 0]);
        assert_eq!(HumpString::new(vec![1, 0]).to_string(), "(1,0)");
        let (r, big_r) = gap_thresholds(&[0.06, 0.05, 0.5, 0.49]).unwrap();
        assert!((r - (0.06f64 * 0.49).sqrt()).abs() < 1e-12);
        assert_eq!(big_r, 1.0);
        let s = classify_maxima(&[0.5, 0.06, 0.49], r, big_r, 0.05).unwrap();
        assert_eq!(s.bits, vec![1, 0, 1]);
        assert!(matches!(classify_maxima(&[r], r, big_r, 0.05), Err(Error::AmbiguousClassification { .. })));
        assert!(matches!(classify_maxima(&[3.0], r, big_r, 0.05), Err(Error::ExceedsR { .. })));
    }

    #[test]
    fn constant_orbit_is_all_ones() {
        let (r, big_r) = gap_thresholds(&[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(classify_maxima(&[0.3, 0.3, 0.3], r, big_r, 0.05).unwrap().bits, vec![1, 1, 1]);
    }

    #[test]
    fn fig2_relaxed_seeds_exist() {
        let w = WeightSpec::sin(2.0 * std::f64::consts::PI, 1.0, 6.0).unwrap();
        let f = ExtendedField::new(Nonlinearity::Polymix { coeffs: vec![100.0, 100.0] }, w);
        let s = HumpString::new(vec![1, 0]);
        let seeds = seed_guesses(&f, 2, &s, &SeedSweep::default()).unwrap();
        assert!(seeds.len() >= 8);
        assert!(!relaxed_seeds(&f, 2, &s, &SeedSweep::default()).unwrap().is_empty());
    }
}
