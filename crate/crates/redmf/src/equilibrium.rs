//! Network equilibrium: the standing queue where the per-flow demand implied
//! by the steady-state window distribution exactly matches the bottleneck
//! share at the loss probability the queue itself induces.
//!
//! At a fixed point with loss probability k, round-trip time R = T + q, and
//! per-user capacity C, throughput balance requires
//!
//! ```text
//! F(k) = C * (T + q) / (1 - k),        k = f(q)
//! ```
//!
//! where F(k) is the mean window of the steady-state distribution and f is
//! the queue-law (RED ramp). The left side falls in k while the right side
//! rises in q, so the residual F(k(q)) - C(T+q)/(1-k(q)) is strictly
//! decreasing and has at most one root on the ramp.

use crate::model::{LossModel, NetworkParams, RedConfig, WindowDistribution};
use crate::scalar::Scalar;
use crate::steady::{default_n_max, solve_steady};
use crate::{Error, Result};

/// Converged operating point and its window distribution.
#[derive(Clone, Debug)]
pub struct EquilibriumState<S: Scalar> {
    /// Loss probability.
    pub k_e: S,
    /// Standing queueing delay (seconds).
    pub q_e: S,
    /// Round-trip time T + q_e (seconds).
    pub r_e: S,
    /// Mean window (packets).
    pub f_e: S,
    /// Second moment of the window (packets^2).
    pub f2_e: S,
    /// Probability mass pinned at the window cap.
    pub m_e: S,
    /// Arrival rate into the router, per user (packets/s).
    pub b_i_e: S,
    /// Departure rate, per user (packets/s); equals C when congested.
    pub b_o_e: S,
    /// Window advance factor 1/R (1/s).
    pub a_e: S,
    /// Steady-state window distribution on a uniform grid.
    pub dist: WindowDistribution<S>,
}

/// What the solver found.
#[derive(Clone, Debug)]
pub enum EquilibriumOutcome<S: Scalar> {
    /// A root on the RED ramp; the network operates at this point.
    Congested(EquilibriumState<S>),
    /// Demand at zero loss fits below the ramp: windows sit at the cap and
    /// the queue settles at or below min_th with no drops.
    NoCongestion { queue: S },
    /// Even at max_th the capped-window demand still exceeds capacity; the
    /// operating point falls off the ramp (gentle-RED / drop-all region).
    RampSaturated { residual_at_max: S },
}

fn red_of<S: Scalar>(loss: &LossModel<S>) -> Result<&RedConfig<S>> {
    match loss {
        LossModel::Red { config, .. } => Ok(config),
        other => Err(Error::InvalidParameter(format!(
            "equilibrium solver requires loss_model = red, got {other:?}"
        ))),
    }
}

fn mean_window_at<S: Scalar>(k: S, w_max: S) -> Result<S> {
    if k <= S::zero() {
        // No losses: every window climbs to the cap.
        return Ok(w_max);
    }
    let st = solve_steady(k, w_max, default_n_max(w_max))?;
    Ok(st.mean())
}

/// Demand-minus-supply residual at queueing delay `q` on the RED ramp.
///
/// Positive residual means flows want more than the link provides, so the
/// queue grows; the function is strictly decreasing in `q`.
pub fn residual<S: Scalar>(params: &NetworkParams<S>, red: &RedConfig<S>, q: S) -> Result<S> {
    params.validate()?;
    red.validate()?;
    if !(q > red.min_th && q <= red.max_th) {
        return Err(Error::InvalidParameter(format!(
            "residual is defined on the ramp (min_th, max_th]; got q = {q}"
        )));
    }
    let k = red.drop_probability(q);
    let f = mean_window_at(k, params.w_max)?;
    let c = params.capacity_per_user;
    Ok(f - c * (params.prop_delay + q) / (S::one() - k))
}

/// Locate the operating point for a RED-controlled bottleneck.
///
/// Bisects the residual on (min_th, max_th] to |residual| < 1e-9 * C * T and
/// verifies en route that the residual samples are monotone decreasing.
pub fn solve_equilibrium<S: Scalar>(
    params: &NetworkParams<S>,
    loss: &LossModel<S>,
) -> Result<EquilibriumOutcome<S>> {
    params.validate()?;
    loss.validate()?;
    let red = red_of(loss)?;
    let c = params.capacity_per_user;
    let t = params.prop_delay;
    let tol = S::of(1e-9) * c * t;

    // Demand gap with all windows at the cap and the queue at the ramp foot.
    // Non-positive gap: the uncontrolled fixed point sits at or below min_th.
    if params.w_max - c * (t + red.min_th) <= S::zero() {
        let queue = (params.w_max / c - t).max(S::zero());
        return Ok(EquilibriumOutcome::NoCongestion { queue });
    }

    let res_hi = residual(params, red, red.max_th)?;
    if res_hi > S::zero() {
        return Ok(EquilibriumOutcome::RampSaturated {
            residual_at_max: res_hi,
        });
    }

    let mut lo = red.min_th;
    let mut hi = red.max_th;
    // (q, residual) samples for the monotonicity check, in evaluation order.
    let mut samples: Vec<(S, S)> = vec![(hi, res_hi)];
    let mut root = None;
    for _ in 0..200 {
        let mid = (lo + hi) * S::of(0.5);
        if !(mid > lo && mid < hi) {
            break; // interval exhausted at this precision
        }
        let res = residual(params, red, mid)?;
        samples.push((mid, res));
        if res.abs() < tol {
            root = Some(mid);
            break;
        }
        if res > S::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite residual samples"));
    for pair in samples.windows(2) {
        // Strictly decreasing up to solver tolerance; a violation means the
        // demand curve is not behaving and the root is unreliable.
        if pair[1].1 > pair[0].1 + tol {
            return Err(Error::Numeric(format!(
                "equilibrium residual is not monotone: r({}) = {} but r({}) = {}",
                pair[0].0, pair[0].1, pair[1].0, pair[1].1
            )));
        }
    }
    let q_e = root.ok_or_else(|| {
        Error::Numeric("equilibrium bisection did not meet tolerance in 200 iterations".into())
    })?;

    let k_e = red.drop_probability(q_e);
    let st = solve_steady(k_e, params.w_max, default_n_max(params.w_max))?;
    let r_e = t + q_e;
    let state = EquilibriumState {
        k_e,
        q_e,
        r_e,
        f_e: st.mean(),
        f2_e: st.second_moment(),
        m_e: st.mass_at_cap(),
        b_i_e: c / (S::one() - k_e),
        b_o_e: c,
        a_e: S::one() / r_e,
        dist: st.to_distribution(default_grid_cells(params.w_max))?,
    };
    Ok(EquilibriumOutcome::Congested(state))
}

/// Grid size used for equilibrium distributions: power of two, at least 16
/// cells per unit window and compatible with the series interval structure.
pub fn default_grid_cells<S: Scalar>(w_max: S) -> usize {
    let min_cells = 1usize << (default_n_max(w_max) + 1);
    let mut cells = 1024usize;
    while cells < min_cells {
        cells *= 2;
    }
    cells
}

impl<S: Scalar> EquilibriumState<S> {
    /// Verify the defining equalities of an operating point against the
    /// scenario that produced it:
    ///
    /// 1. departures run at capacity: b_o = C;
    /// 2. round trip = propagation + queueing: r = T + q;
    /// 3. arrivals balance: b_i = F/r = C/(1-k) (to 1e-6 relative);
    /// 4. window advance factor a = 1/r;
    /// 5. second moment matches the loss-rate identity F2 = 2(1-M)/k
    ///    (to 1e-4 relative);
    ///
    /// plus consistency of k with the queue law.
    pub fn check(&self, params: &NetworkParams<S>, red: &RedConfig<S>) -> Result<()> {
        let rel = |a: S, b: S| ((a - b) / b).abs();
        let tight = S::of(1e-9);
        let c = params.capacity_per_user;
        if rel(self.b_o_e, c) > tight {
            return Err(Error::Numeric(format!(
                "b_o = {} != capacity {}",
                self.b_o_e, c
            )));
        }
        if rel(self.r_e, params.prop_delay + self.q_e) > tight {
            return Err(Error::Numeric("r != T + q".into()));
        }
        let b_from_window = self.f_e / self.r_e;
        let b_from_loss = c / (S::one() - self.k_e);
        if rel(self.b_i_e, b_from_window) > S::of(1e-6)
            || rel(self.b_i_e, b_from_loss) > S::of(1e-6)
        {
            return Err(Error::Numeric(format!(
                "arrival balance broken: b_i = {}, F/r = {}, C/(1-k) = {}",
                self.b_i_e, b_from_window, b_from_loss
            )));
        }
        if rel(self.a_e, S::one() / self.r_e) > tight {
            return Err(Error::Numeric("a != 1/r".into()));
        }
        let f2_identity = S::of(2.0) * (S::one() - self.m_e) / self.k_e;
        if rel(self.f2_e, f2_identity) > S::of(1e-4) {
            return Err(Error::Numeric(format!(
                "second moment {} != 2(1-M)/k = {}",
                self.f2_e, f2_identity
            )));
        }
        if rel(self.k_e, red.drop_probability(self.q_e)) > tight {
            return Err(Error::Numeric("k != ramp(q)".into()));
        }
        Ok(())
    }
}

/// Closed-form mean-window approximation F ~ 1.31/sqrt(k), capped at w_max.
///
/// Valid for small k where the cap mass is negligible; callers should expect
/// a few percent of error for k around 1e-2.
pub fn sqrt_formula<S: Scalar>(k: S, w_max: S) -> S {
    if k <= S::zero() {
        return w_max;
    }
    (S::of(1.31) / k.sqrt()).min(w_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LossModel, RedAveraging};

    fn isp(n_users: u32) -> (NetworkParams<f64>, LossModel<f64>) {
        let params = NetworkParams::from_wire(1e9, 1024.0, 40.0, 0.010, 0.002, n_users, 64.0)
            .unwrap();
        let loss = LossModel::Red {
            config: RedConfig {
                min_th: 0.4e-3,
                max_th: 2.0e-3,
                p_max: 0.005,
                w_q: 1.0,
            },
            averaging: RedAveraging::Instantaneous,
        };
        (params, loss)
    }

    #[test]
    fn reference_point_n50() {
        let (params, loss) = isp(50);
        let state = match solve_equilibrium(&params, &loss).unwrap() {
            EquilibriumOutcome::Congested(s) => s,
            other => panic!("expected congested equilibrium, got {other:?}"),
        };
        assert!((state.q_e - 1.188839894e-3).abs() < 1e-9);
        assert!((state.k_e - 2.465124669e-3).abs() < 1e-9);
        assert!((state.f_e - 26.354534634).abs() < 1e-5);
        assert!((state.m_e - 3.806125936e-3).abs() < 1e-8);
        assert!((state.f2_e - 808.230014928).abs() < 1e-3);
        assert!((state.r_e - 1.118883989e-2).abs() < 1e-9);
        let red = match &loss {
            LossModel::Red { config, .. } => config.clone(),
            _ => unreachable!(),
        };
        state.check(&params, &red).unwrap();
    }

    #[test]
    fn light_load_has_no_congestion() {
        let (params, loss) = isp(19);
        match solve_equilibrium(&params, &loss).unwrap() {
            EquilibriumOutcome::NoCongestion { queue } => {
                // 19 users: W/C = 64/6182.7 = 10.35 ms > T, standing queue
                // just above zero but at or below min_th.
                assert!(queue >= 0.0 && queue <= 0.4e-3, "queue = {queue}");
            }
            other => panic!("expected no congestion, got {other:?}"),
        }
        let (params, loss) = isp(20);
        assert!(matches!(
            solve_equilibrium(&params, &loss).unwrap(),
            EquilibriumOutcome::Congested(_)
        ));
    }

    #[test]
    fn heavy_load_saturates_ramp() {
        let (params, loss) = isp(100);
        match solve_equilibrium(&params, &loss).unwrap() {
            EquilibriumOutcome::RampSaturated { residual_at_max } => {
                assert!(residual_at_max > 0.0);
            }
            other => panic!("expected ramp saturation, got {other:?}"),
        }
    }

    #[test]
    fn residual_signs_bracket_the_root() {
        let (params, loss) = isp(50);
        let red = red_of(&loss).unwrap();
        let just_above = residual(&params, red, 0.45e-3).unwrap();
        let at_max = residual(&params, red, 2.0e-3).unwrap();
        assert!(just_above > 0.0);
        assert!(at_max < 0.0);
        // Out-of-ramp arguments are rejected.
        assert!(residual(&params, red, 0.4e-3).is_err());
        assert!(residual(&params, red, 2.1e-3).is_err());
    }

    #[test]
    fn sqrt_law_caps_and_decays() {
        assert_eq!(sqrt_formula(0.0f64, 64.0), 64.0);
        assert_eq!(sqrt_formula(1e-6f64, 64.0), 64.0); // 1310 capped
        let f = sqrt_formula(0.01f64, 64.0);
        assert!((f - 13.1).abs() < 1e-12);
    }
}
