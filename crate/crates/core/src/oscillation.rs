//! Zeros and phase-plane winding of the difference between a subharmonic
//! and a reference `T`-periodic solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::periodic::PeriodicOrbit;

/// Differences below this everywhere mean the two orbits coincide.
pub const DEGENERATE_MAX: f64 = 1e-8;
/// Local minima of `|d|` below this without a sign change are tangencies.
pub const TANGENCY_TOL: f64 = 1e-9;
/// Phase-plane radius treated as passing through the origin.
pub const ORIGIN_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub reference_class_id: usize,
    pub zero_count: usize,
    pub winding_turns: f64,
    /// `zero_count / 2` when the count is even.
    pub j_index: Option<usize>,
    pub zeros: Vec<f64>,
    pub tangencies: Vec<f64>,
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if f(x1) < f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Sign-change zeros of `d` on `[t0, t0 + span)` for a `span`-periodic `d`,
/// plus flagged tangencies (local minima of `|d|` below [`TANGENCY_TOL`]
/// without a sign change).
pub fn zeros_of<D: Fn(f64) -> f64>(d: D, t0: f64, span: f64, samples: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let dt = span / samples as f64;
    let at = |i: usize| t0 + i as f64 * dt;
    let vals: Vec<f64> = (0..samples).map(|i| d(at(i))).collect();
    let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max < DEGENERATE_MAX {
        return Err(Error::DegenerateDifference { max_abs: max });
    }
    let v = |i: usize| vals[i % samples];
    let mut zeros = Vec::new();
    let mut tangencies = Vec::new();
    for i in 0..samples {
        let (a, b) = (v(i), v(i + 1));
        if a == 0.0 {
            let prev = v(i + samples - 1);
            if prev * b < 0.0 {
                zeros.push(at(i));
            } else {
                tangencies.push(at(i));
            }
            continue;
        }
        if a * b < 0.0 {
            let (mut lo, mut hi) = (at(i), at(i + 1));
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if d(mid) * a > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            zeros.push(0.5 * (lo + hi));
            continue;
        }
        let prev = v(i + samples - 1);
        if b != 0.0 && prev * a > 0.0 && a.abs() <= prev.abs() && a.abs() <= b.abs() {
            let (t, m) = golden_min(|t| d(t).abs(), at(i) - dt, at(i + 1));
            if m < TANGENCY_TOL {
                tangencies.push(t);
            }
        }
    }
    Ok((zeros, tangencies))
}

fn wrap_angle(x: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    x - tau * (x / tau).round()
}

fn swept<A: Fn(f64) -> Result<f64>>(angle: &A, a: f64, b: f64, pa: f64, pb: f64, depth: u32) -> Result<f64> {
    let inc = wrap_angle(pb - pa);
    if inc.abs() > 0.5 && depth < 60 {
        let mid = 0.5 * (a + b);
        let pm = angle(mid)?;
        return Ok(swept(angle, a, mid, pa, pm, depth + 1)? + swept(angle, mid, b, pm, pb, depth + 1)?);
    }
    Ok(inc)
}

/// Clockwise turns of `(d, d')` about the origin over `[t0, t1]`.
pub fn winding_of<P: Fn(f64) -> (f64, f64)>(phase: P, t0: f64, t1: f64, samples: usize) -> Result<f64> {
    let angle = |t: f64| -> Result<f64> {
        let (d, dp) = phase(t);
        if d.hypot(dp) < ORIGIN_TOL {
            return Err(Error::OriginHit { time: t });
        }
        Ok(dp.atan2(d))
    };
    let dt = (t1 - t0) / samples as f64;
    let mut total = 0.0;
    let mut pa = angle(t0)?;
    for i in 0..samples {
        let (a, b) = (t0 + i as f64 * dt, t0 + (i + 1) as f64 * dt);
        let pb = angle(b)?;
        total += swept(&angle, a, b, pa, pb, 0)?;
        pa = pb;
    }
    Ok(-total / (2.0 * std::f64::consts::PI))
}

fn samples_for(orbit: &PeriodicOrbit) -> usize {
    10_000 * orbit.order_k as usize
}

/// Zeros of `u − u*` over one period of `orbit`.
pub fn count_zeros_diff(orbit: &PeriodicOrbit, reference: &PeriodicOrbit) -> Result<OscillationReport> {
    let span = orbit.period();
    let t0 = orbit.section;
    let (zeros, tangencies) = zeros_of(|t| orbit.u(t) - reference.u(t), t0, span, samples_for(orbit))?;
    let winding_turns = winding(orbit, reference)?;
    let zero_count = zeros.len();
    Ok(OscillationReport {
        reference_class_id: reference.class_id,
        zero_count,
        winding_turns,
        j_index: (zero_count % 2 == 0).then_some(zero_count / 2),
        zeros,
        tangencies,
    })
}

/// Turns of `(u − u*, u' − u*')` about the origin over one period of
/// `orbit`, clockwise positive.
pub fn winding(orbit: &PeriodicOrbit, reference: &PeriodicOrbit) -> Result<f64> {
    let phase = |t: f64| {
        let a = orbit.trajectory.eval_periodic(t);
        let b = reference.trajectory.eval_periodic(t);
        (a[0] - b[0], a[1] - b[1])
    };
    winding_of(phase, orbit.section, orbit.section + orbit.period(), samples_for(orbit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sine_windings() {
        let w = winding_of(|t| (t.sin(), t.cos()), 0.0, 2.0 * PI, 100).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
        let w = winding_of(|t| ((3.0 * t).sin(), 3.0 * (3.0 * t).cos()), 0.0, 2.0 * PI, 7).unwrap();
        assert!((w - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sine_zeros() {
        let (z, tang) = zeros_of(|t| (3.0 * t + 0.1).sin(), 0.0, 2.0 * PI, 1000).unwrap();
        assert_eq!(z.len(), 6);
        assert!(tang.is_empty());
        for x in z {
            assert!((3.0 * x + 0.1).sin().abs() < 1e-12);
        }
    }

    #[test]
    fn tangency_is_flagged_not_counted() {
        let (z, tang) = zeros_of(|t| (t - 1.0).powi(2) * (t - 4.0).powi(2) + 1e-11, 0.0, 2.0 * PI, 1000).unwrap();
        assert!(z.is_empty());
        assert_eq!(tang.len(), 2);
        assert!((tang[0] - 1.0).abs() < 1e-4 && (tang[1] - 4.0).abs() < 1e-4, "{tang:?}");
    }

    #[test]
    fn degenerate_and_origin() {
        assert!(matches!(zeros_of(|_| 0.0, 0.0, 1.0, 10), Err(Error::DegenerateDifference { .. })));
        assert!(matches!(winding_of(|t| (t - 0.5, 0.0), 0.0, 1.0, 10), Err(Error::OriginHit { .. })));
    }
}
