//! Sampled time series with linear interpolation, used to evaluate delayed
//! quantities (loss probability, departure rate, mean window) and the
//! forward round-trip map.

use crate::scalar::Scalar;

/// Monotone-in-time samples; lookups clamp at both ends and interpolate
/// linearly in between.
#[derive(Clone, Debug)]
pub(crate) struct History<S: Scalar> {
    t: Vec<S>,
    v: Vec<S>,
}

impl<S: Scalar> History<S> {
    pub fn with_seed(t0: S, v0: S) -> Self {
        History {
            t: vec![t0],
            v: vec![v0],
        }
    }

    pub fn push(&mut self, t: S, v: S) {
        debug_assert!(
            *self.t.last().expect("history is never empty") <= t,
            "history pushes must be time-ordered"
        );
        self.t.push(t);
        self.v.push(v);
    }

    pub fn at(&self, t: S) -> S {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.v[0];
        }
        if t >= self.t[n - 1] {
            return self.v[n - 1];
        }
        // First index with sample time > t; the invariants above guarantee
        // 1 <= hi <= n-1.
        let hi = self.t.partition_point(|&x| x <= t);
        let (t0, t1) = (self.t[hi - 1], self.t[hi]);
        let (v0, v1) = (self.v[hi - 1], self.v[hi]);
        if t1 == t0 {
            return v1;
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

/// Maps a packet's arrival time at the flow source to the round trip it
/// experienced, built forward as the simulation schedules departures.
#[derive(Clone, Debug)]
pub(crate) struct ForwardRttMap<S: Scalar> {
    inner: History<S>,
}

impl<S: Scalar> ForwardRttMap<S> {
    pub fn with_seed(arrival: S, rtt: S) -> Self {
        ForwardRttMap {
            inner: History::with_seed(arrival, rtt),
        }
    }

    /// Record that feedback departing now arrives at `arrival` after `rtt`.
    /// Arrivals are monotone because the queue cannot drain faster than
    /// time advances; ties (queue pinned at empty) are skipped.
    pub fn push_arrival(&mut self, arrival: S, rtt: S) {
        if arrival > *self.inner.t.last().expect("seeded") {
            self.inner.push(arrival, rtt);
        }
    }

    pub fn rtt_at(&self, t: S) -> S {
        self.inner.at(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_clamps() {
        let mut h: History<f64> = History::with_seed(0.0, 1.0);
        h.push(1.0, 3.0);
        h.push(2.0, 3.0);
        assert_eq!(h.at(-5.0), 1.0);
        assert_eq!(h.at(0.0), 1.0);
        assert!((h.at(0.5) - 2.0).abs() < 1e-15);
        assert_eq!(h.at(1.5), 3.0);
        assert_eq!(h.at(99.0), 3.0);
    }

    #[test]
    fn forward_map_skips_stalled_arrivals() {
        let mut f: ForwardRttMap<f64> = ForwardRttMap::with_seed(0.0, 0.010);
        f.push_arrival(0.5, 0.012);
        f.push_arrival(0.5, 0.013); // same arrival: dropped
        f.push_arrival(0.4, 0.014); // regression: dropped
        f.push_arrival(0.6, 0.014);
        assert!((f.rtt_at(0.5) - 0.012).abs() < 1e-15);
        assert!((f.rtt_at(0.55) - 0.013).abs() < 1e-15);
    }
}
