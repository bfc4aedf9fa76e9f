//! Operating-point solver checks: pinned reference solutions, the defining
//! balance equalities across a range of ramp slopes, and scale invariance.

use proptest::prelude::*;
use redmf::equilibrium::{residual, solve_equilibrium, EquilibriumOutcome};
use redmf::model::{LossModel, NetworkParams, RedAveraging, RedConfig};

fn isp(n_users: u32, p_max: f64) -> (NetworkParams<f64>, RedConfig<f64>) {
    let params =
        NetworkParams::from_wire(1e9, 1024.0, 40.0, 0.010, 0.002, n_users, 64.0).unwrap();
    let red = RedConfig {
        min_th: 0.4e-3,
        max_th: 2.0e-3,
        p_max,
        w_q: 1.0,
    };
    (params, red)
}

fn congested(params: &NetworkParams<f64>, red: &RedConfig<f64>) -> redmf::EquilibriumState64 {
    let loss = LossModel::Red {
        config: red.clone(),
        averaging: RedAveraging::Instantaneous,
    };
    match solve_equilibrium(params, &loss).unwrap() {
        EquilibriumOutcome::Congested(state) => state,
        other => panic!("expected a congested operating point, got {other:?}"),
    }
}

#[test]
fn steeper_ramp_settles_at_shorter_queue() {
    let (params, red) = isp(50, 0.0075);
    let state = congested(&params, &red);
    assert!((state.q_e - 9.492919438e-4).abs() < 1e-9, "q_e = {}", state.q_e);
    assert!((state.k_e - 2.574805987e-3).abs() < 1e-9, "k_e = {}", state.k_e);
    assert!((state.f_e - 25.793132).abs() < 1e-5, "f_e = {}", state.f_e);
    assert!((state.m_e - 2.979642e-3).abs() < 1e-8, "m_e = {}", state.m_e);
    state.check(&params, &red).unwrap();
}

#[test]
fn gentler_ramp_settles_at_longer_queue() {
    let (params, red) = isp(50, 0.003);
    let state = congested(&params, &red);
    assert!((state.q_e - 1.618407771e-3).abs() < 1e-9, "q_e = {}", state.q_e);
    state.check(&params, &red).unwrap();

    // Sanity of the ordering across the three pinned slopes.
    let q_mid = congested(&isp(50, 0.005).0, &isp(50, 0.005).1).q_e;
    assert!(state.q_e > q_mid && q_mid > 9.492919438e-4);
}

#[test]
fn balance_equalities_hold_across_ramp_slopes() {
    for p_max in [0.003, 0.004, 0.005, 0.0075, 0.01] {
        let (params, red) = isp(50, p_max);
        let state = congested(&params, &red);
        state.check(&params, &red).unwrap();
        // The gridded distribution carried along agrees with the scalars.
        assert!((state.dist.total_mass() - 1.0).abs() < 1e-9);
        assert!((state.dist.mean() - state.f_e).abs() < 0.01);
        assert!((state.dist.atom() - state.m_e).abs() < 1e-9);
    }
}

#[test]
fn equilibrium_is_scale_invariant_in_bandwidth_delay() {
    // Multiplying capacity by s and dividing every time constant by s leaves
    // the dimensionless operating point (k, F, M) unchanged and divides the
    // queueing delay by s.
    let (params, red) = isp(50, 0.005);
    let base = congested(&params, &red);
    for s in [2.0, 4.0, 10.0] {
        let scaled_params = NetworkParams::from_wire(
            1e9 * s,
            1024.0,
            40.0,
            0.010 / s,
            0.002 / s,
            50,
            64.0,
        )
        .unwrap();
        let scaled_red = RedConfig {
            min_th: 0.4e-3 / s,
            max_th: 2.0e-3 / s,
            p_max: 0.005,
            w_q: 1.0,
        };
        let state = congested(&scaled_params, &scaled_red);
        assert!(
            (state.q_e * s - base.q_e).abs() < 1e-9 * base.q_e.max(1.0),
            "s = {s}: q_e {} vs {}",
            state.q_e * s,
            base.q_e
        );
        assert!((state.k_e - base.k_e).abs() < 1e-9);
        assert!((state.f_e - base.f_e).abs() < 1e-6);
        assert!((state.m_e - base.m_e).abs() < 1e-9);
        assert!((state.r_e * s - base.r_e).abs() < 1e-9);
        state.check(&scaled_params, &scaled_red).unwrap();
    }
}

#[test]
fn more_users_means_more_loss_and_smaller_windows() {
    let mut prev_k = 0.0;
    let mut prev_f = f64::INFINITY;
    // 75 users is close to the top of the ramp at this slope; beyond that the
    // solver reports RampSaturated rather than a root.
    for n in [25u32, 35, 50, 65, 75] {
        let (params, red) = isp(n, 0.005);
        let state = congested(&params, &red);
        assert!(state.k_e > prev_k, "k_e not increasing at n = {n}");
        assert!(state.f_e < prev_f, "f_e not decreasing at n = {n}");
        prev_k = state.k_e;
        prev_f = state.f_e;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn residual_is_strictly_decreasing_on_the_ramp(
        n_users in 20u32..90,
        p_max in 0.002f64..0.012,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let (params, red) = isp(n_users, p_max);
        let span = red.max_th - red.min_th;
        // Two distinct interior points, ordered.
        let q1 = red.min_th + span * (0.05 + 0.40 * a);
        let q2 = q1 + span * (0.05 + 0.45 * b);
        let r1 = residual(&params, &red, q1).unwrap();
        let r2 = residual(&params, &red, q2.min(red.max_th)).unwrap();
        prop_assert!(
            r1 > r2,
            "residual not decreasing: r({q1}) = {r1}, r({q2}) = {r2}"
        );
    }
}
