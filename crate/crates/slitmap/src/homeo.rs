//! Orientation-preserving circle homeomorphisms as monotone piecewise-linear
//! lifts.
//!
//! A degree-one circle map is stored through node angles `t_i` and lift
//! values `u_i`: both strictly increasing, with the lift gaining exactly
//! `2*pi` over one revolution. Evaluation interpolates the lift linearly,
//! which keeps every operation here (inversion, composition, convex
//! interpolation toward the identity) exactly monotone, so the circle-map
//! algebra cannot silently produce a fold even at finite resolution.

use alloc::vec;
use alloc::vec::Vec;

use crate::num::wrap_angle;

const TAU: f64 = core::f64::consts::TAU;

/// Errors from circle-map construction.
#[derive(Clone, Debug, PartialEq)]
pub enum HomeoError {
    /// The samples do not describe a monotone degree-one circle map.
    NotMonotone,
    /// Fewer than two distinct nodes.
    TooFewNodes,
}

impl core::fmt::Display for HomeoError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            HomeoError::NotMonotone => write!(f, "samples are not monotone on the circle"),
            HomeoError::TooFewNodes => write!(f, "need at least two distinct sample nodes"),
        }
    }
}

impl core::error::Error for HomeoError {}

/// An orientation-preserving homeomorphism of the unit circle.
#[derive(Clone, Debug)]
pub struct CircleHomeo {
    /// Strictly increasing node angles; `ts[0]` is in `[0, 2*pi)` and the
    /// spread `ts.last() - ts[0]` is below `2*pi`.
    ts: Vec<f64>,
    /// Strictly increasing lift values at the nodes.
    us: Vec<f64>,
}

impl CircleHomeo {
    /// Builds the map from `(angle, image angle)` samples.
    ///
    /// Angles may be in any order and any branch; images are taken modulo
    /// `2*pi`. Fails if the samples, read counterclockwise, do not wind
    /// monotonically once around the circle.
    pub fn from_samples(samples: &[(f64, f64)]) -> Result<Self, HomeoError> {
        if samples.len() < 2 {
            return Err(HomeoError::TooFewNodes);
        }
        let mut pairs: Vec<(f64, f64)> = samples
            .iter()
            .map(|&(t, u)| (wrap_angle(t), u))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pairs.dedup_by(|a, b| libm::fabs(a.0 - b.0) < 1e-14);
        if pairs.len() < 2 {
            return Err(HomeoError::TooFewNodes);
        }
        let ts: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut us = Vec::with_capacity(ts.len());
        us.push(wrap_angle(pairs[0].1));
        for w in pairs.windows(2) {
            let jump = wrap_angle(w[1].1 - w[0].1);
            let prev = *us.last().unwrap();
            us.push(prev + jump);
        }
        // The closing jump must complete exactly one revolution; any fold in
        // the data breaks this by a multiple of 2*pi.
        let closing = wrap_angle(pairs[0].1 - pairs.last().unwrap().1);
        let total = us.last().unwrap() - us[0] + closing;
        if libm::fabs(total - TAU) > 1e-9 {
            return Err(HomeoError::NotMonotone);
        }
        for w in us.windows(2) {
            if w[1] <= w[0] {
                return Err(HomeoError::NotMonotone);
            }
        }
        Ok(CircleHomeo { ts, us })
    }

    /// The identity map.
    pub fn identity() -> Self {
        CircleHomeo { ts: vec![0.0, core::f64::consts::PI], us: vec![0.0, core::f64::consts::PI] }
    }

    /// Rigid rotation by `angle`.
    pub fn rotation(angle: f64) -> Self {
        let a = wrap_angle(angle);
        CircleHomeo {
            ts: vec![0.0, core::f64::consts::PI],
            us: vec![a, a + core::f64::consts::PI],
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.ts
    }

    /// Lift value at angle `t` (continuous, strictly increasing, gains
    /// `2*pi` per revolution of `t`).
    pub fn eval_lift(&self, t: f64) -> f64 {
        let n = self.ts.len();
        let t0 = self.ts[0];
        // Reduce t into [t0, t0 + 2*pi) and remember how many turns that took.
        let turns = libm::floor((t - t0) / TAU);
        let tr = t - turns * TAU;
        let u = if tr >= *self.ts.last().unwrap() {
            // Closing segment back to ts[0] + 2*pi.
            let a = *self.ts.last().unwrap();
            let b = t0 + TAU;
            let ua = *self.us.last().unwrap();
            let ub = self.us[0] + TAU;
            ua + (tr - a) / (b - a) * (ub - ua)
        } else {
            let mut lo = 0usize;
            let mut hi = n - 1;
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if self.ts[mid] <= tr {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let (a, b) = (self.ts[lo], self.ts[hi]);
            let (ua, ub) = (self.us[lo], self.us[hi]);
            ua + (tr - a) / (b - a) * (ub - ua)
        };
        u + turns * TAU
    }

    /// Image angle in `[0, 2*pi)`.
    pub fn eval(&self, t: f64) -> f64 {
        wrap_angle(self.eval_lift(t))
    }

    /// The inverse homeomorphism.
    pub fn inverse(&self) -> Self {
        // Swap node and value roles. Shifting both lists by the same whole
        // number of turns keeps the degree-one relation v(x - 2*pi) =
        // v(x) - 2*pi while bringing the first node into [0, 2*pi).
        let shift = libm::floor(self.us[0] / TAU) * TAU;
        let ts: Vec<f64> = self.us.iter().map(|&u| u - shift).collect();
        let us: Vec<f64> = self.ts.iter().map(|&t| t - shift).collect();
        CircleHomeo { ts, us }
    }

    /// Composition `self(other(t))`, exact on the union of breakpoints.
    pub fn compose(&self, other: &CircleHomeo) -> Self {
        let inv = other.inverse();
        let mut ts: Vec<f64> = other.ts.clone();
        for &t in &self.ts {
            ts.push(wrap_angle(inv.eval_lift(t)));
        }
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup_by(|a, b| libm::fabs(*a - *b) < 1e-13);
        let samples: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| (t, self.eval_lift(other.eval_lift(t))))
            .collect();
        CircleHomeo::from_samples(&samples).expect("composition of monotone maps is monotone")
    }

    /// Largest lift deviation `sup |self - other|` between two maps (exact
    /// for the stored piecewise-linear representatives).
    pub fn sup_lift_distance(&self, other: &CircleHomeo) -> f64 {
        // The difference of two PL functions is PL; its extrema sit at the
        // union of breakpoints. Compare with the branch-consistent lift
        // difference wrapped to (-pi, pi] plus full turns, which for nearby
        // maps is just the plain difference.
        let mut sup = 0.0f64;
        let mut probe = |t: f64| {
            let d = self.eval_lift(t) - other.eval_lift(t);
            // Degree-one lifts of nearby maps differ by less than 2*pi; take
            // the representative nearest zero to be branch-independent.
            let d = d - libm::round(d / TAU) * TAU;
            sup = sup.max(libm::fabs(d));
        };
        for &t in &self.ts {
            probe(t);
        }
        for &t in &other.ts {
            probe(t);
        }
        sup
    }

    /// Deviation from the identity, `sup |u(t) - t|` over the circle.
    pub fn max_deviation_from_identity(&self) -> f64 {
        self.sup_lift_distance(&CircleHomeo::identity())
    }

    /// Convex interpolation toward the identity: at `s = 0` the identity, at
    /// `s = 1` this map. Every intermediate map is again a homeomorphism.
    pub fn interpolate_from_identity(&self, s: f64) -> Self {
        let ts = self.ts.clone();
        let us: Vec<f64> = self
            .ts
            .iter()
            .zip(&self.us)
            .map(|(&t, &u)| {
                let d = u - t;
                let d = d - libm::round(d / TAU) * TAU;
                t + s * d
            })
            .collect();
        // Monotonicity is preserved by convexity; renormalize through the
        // constructor to keep invariants checked.
        let samples: Vec<(f64, f64)> = ts.iter().zip(&us).map(|(&t, &u)| (t, u)).collect();
        CircleHomeo::from_samples(&samples).expect("convex interpolant stays monotone")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn smooth_homeo() -> CircleHomeo {
        // t + 0.3 sin t is strictly increasing, degree one.
        let samples: Vec<(f64, f64)> = (0..256)
            .map(|k| {
                let t = TAU * k as f64 / 256.0;
                (t, t + 0.3 * libm::sin(t))
            })
            .collect();
        CircleHomeo::from_samples(&samples).unwrap()
    }

    #[test]
    fn evaluation_interpolates_the_generating_function() {
        let h = smooth_homeo();
        for k in 0..100 {
            let t = 0.0617 * k as f64;
            let expect = wrap_angle(t + 0.3 * libm::sin(t));
            let got = h.eval(t);
            let diff = libm::fabs(crate::num::wrap_signed(got - expect));
            assert!(diff < 1e-4, "t={t} diff={diff}");
        }
    }

    #[test]
    fn lift_gains_a_full_turn_per_revolution() {
        let h = smooth_homeo();
        for t in [0.0, 0.5, 4.0] {
            let d = h.eval_lift(t + TAU) - h.eval_lift(t);
            assert!((d - TAU).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trips_to_identity() {
        let h = smooth_homeo();
        let inv = h.inverse();
        for k in 0..60 {
            let t = 0.1 * k as f64;
            let back = inv.eval_lift(h.eval_lift(t));
            let diff = crate::num::wrap_signed(back - t);
            assert!(libm::fabs(diff) < 1e-12, "t={t} diff={diff}");
        }
    }

    #[test]
    fn composition_matches_pointwise_evaluation() {
        let h = smooth_homeo();
        let r = CircleHomeo::rotation(1.2);
        let c = h.compose(&r);
        for k in 0..60 {
            let t = 0.11 * k as f64;
            let direct = h.eval(r.eval(t));
            let composed = c.eval(t);
            assert!(libm::fabs(crate::num::wrap_signed(direct - composed)) < 1e-12);
        }
    }

    #[test]
    fn folded_samples_are_rejected() {
        // A genuine fold: the image angle goes forward, back, then forward.
        let samples = [
            (0.0, 0.0),
            (1.0, 1.4),
            (2.0, 0.9),
            (3.0, 3.0),
            (4.0, 4.0),
            (5.0, 5.0),
        ];
        assert_eq!(
            CircleHomeo::from_samples(&samples).err(),
            Some(HomeoError::NotMonotone)
        );
    }

    #[test]
    fn rotation_has_constant_identity_deviation() {
        let r = CircleHomeo::rotation(0.7);
        assert!((r.max_deviation_from_identity() - 0.7).abs() < 1e-12);
        let r = CircleHomeo::rotation(-0.7 + TAU);
        assert!((r.max_deviation_from_identity() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn interpolation_shrinks_deviation_linearly() {
        let h = smooth_homeo();
        let mid = h.interpolate_from_identity(0.5);
        let full = h.max_deviation_from_identity();
        let half = mid.max_deviation_from_identity();
        assert!((half - 0.5 * full).abs() < 1e-10);
        let zero = h.interpolate_from_identity(0.0);
        assert!(zero.max_deviation_from_identity() < 1e-12);
    }

    #[test]
    fn inverse_of_rotation_is_the_opposite_rotation() {
        let r = CircleHomeo::rotation(PI / 3.0);
        let inv = r.inverse();
        for k in 0..20 {
            let t = 0.3 * k as f64;
            let expect = wrap_angle(t - PI / 3.0);
            assert!(libm::fabs(crate::num::wrap_signed(inv.eval(t) - expect)) < 1e-12);
        }
    }
}
