//! Property tests: the closed-form density satisfies its defining balance
//! law at random points, normalization and moments behave monotonically,
//! and the scenario format round-trips.

use proptest::prelude::*;
use redmf::model::{LossModel, RedAveraging, RedConfig};
use redmf::scenario::{emit_scenario, parse_scenario, RunControls, Scenario};
use redmf::steady::{build_series, default_n_max, solve_steady};

const W: f64 = 64.0;

fn loss_k() -> impl Strategy<Value = f64> {
    // Log-uniform over the regime the model targets.
    (5e-4f64..2e-2).prop_map(|x| x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Between breakpoints the density obeys
    /// p'(w) = k (4 w p(2w) [w < W/2] - w p(w)); checked with central
    /// differences at random interior points.
    #[test]
    fn density_satisfies_balance_law(
        k in loss_k(),
        n in 0usize..=5,
        pos in 0.06f64..0.94,
    ) {
        let series = build_series(k, W, default_n_max(W)).unwrap();
        let hi = W / (1u64 << n) as f64;
        let lo = hi * 0.5;
        let w = lo + pos * (hi - lo);
        let h = w * 3e-6;
        let above = series.eval_density(w + h).unwrap();
        let below = series.eval_density(w - h).unwrap();
        let deriv = (above - below) / (2.0 * h);
        let p = series.eval_density(w).unwrap();
        let doubling = if n >= 1 {
            4.0 * w * series.eval_density(2.0 * w).unwrap()
        } else {
            0.0
        };
        let rhs = k * (doubling - w * p);
        // In deep intervals at small k the density is a near-total
        // cancellation of its series terms, so roundoff noise rides on the
        // term envelope, not the value. Compare against the flux scale the
        // law actually balances: k w times that envelope.
        let theta = k * W * W * 0.5;
        let envelope = k * W * (theta - k * w * w * 0.5).exp();
        let scale = k * w * envelope + deriv.abs();
        prop_assert!(
            (deriv - rhs).abs() <= 1e-4 * scale,
            "k={k} w={w}: p'={deriv} vs rhs={rhs} (scale {scale})"
        );
    }

    #[test]
    fn density_is_nonnegative(
        k in loss_k(),
        frac in 1e-4f64..=1.0,
    ) {
        let series = build_series(k, W, default_n_max(W)).unwrap();
        let w = frac * W;
        let p = series.eval_density(w).unwrap();
        prop_assert!(p >= -1e-12, "p({w}) = {p} at k = {k}");
        prop_assert!(p.is_finite());
    }

    /// More loss pins less mass at the cap and shrinks the mean.
    #[test]
    fn cap_mass_and_mean_fall_with_loss(
        k in 5e-4f64..1e-2,
        bump in 1.1f64..4.0,
    ) {
        let lo = solve_steady(k, W, default_n_max(W)).unwrap();
        let hi = solve_steady(k * bump, W, default_n_max(W)).unwrap();
        prop_assert!(hi.mass_at_cap() < lo.mass_at_cap());
        prop_assert!(hi.mean() < lo.mean());
    }

    /// Windowed means glue: [a,m] and [m,b] add to [a,b] in mass-weighted
    /// form (they are integrals).
    #[test]
    fn partial_means_are_additive(
        k in loss_k(),
        a in 0.02f64..0.3,
        b in 0.5f64..0.98,
        split in 0.2f64..0.8,
    ) {
        let st = solve_steady(k, W, default_n_max(W)).unwrap();
        let (lo, hi) = (a * W, b * W);
        let mid = lo + split * (hi - lo);
        let left = st.partial_window_mean(lo, mid).unwrap();
        let right = st.partial_window_mean(mid, hi).unwrap();
        let whole = st.partial_window_mean(lo, hi).unwrap();
        prop_assert!(
            (left + right - whole).abs() <= 1e-9 * whole.abs().max(1e-30),
            "{left} + {right} != {whole}"
        );
    }

    /// Gridding the closed form preserves total mass to near roundoff and
    /// the mean to O(dw^2).
    #[test]
    fn gridded_distribution_keeps_mass_and_mean(
        k in loss_k(),
        cells_pow in 8u32..=11,
    ) {
        let st = solve_steady(k, W, default_n_max(W)).unwrap();
        let dist = st.to_distribution(1usize << cells_pow).unwrap();
        prop_assert!((dist.total_mass() - 1.0).abs() < 1e-9);
        let dw = dist.dw();
        let rel = ((dist.mean() - st.mean()) / st.mean()).abs();
        prop_assert!(rel < 0.5 * dw * dw, "mean gap {rel} at dw = {dw}");
    }

    /// The drop law ramps monotonically between its endpoints.
    #[test]
    fn red_ramp_is_monotone(
        q1 in 0.0f64..3e-3,
        q2 in 0.0f64..3e-3,
    ) {
        let red = RedConfig { min_th: 0.4e-3, max_th: 2e-3, p_max: 0.005, w_q: 1.0 };
        let (qa, qb) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(red.drop_probability(qa) <= red.drop_probability(qb));
    }

    #[test]
    fn scenario_text_round_trips(
        capacity in 1e8f64..1e10,
        packet in 200.0f64..1500.0,
        overhead in 20.0f64..80.0,
        prop_delay in 1e-3f64..0.2,
        buffer in 1e-4f64..1e-2,
        n_users in 1u32..500,
        w_max in 8.0f64..256.0,
        which in 0u8..3,
        p_max in 1e-3f64..0.05,
        w_q in 0.001f64..=1.0,
        k in 1e-4f64..0.1,
    ) {
        let loss = match which {
            0 => LossModel::Red {
                config: RedConfig {
                    min_th: buffer * 0.2,
                    max_th: buffer,
                    p_max,
                    w_q,
                },
                averaging: if w_q < 1.0 { RedAveraging::Ewma } else { RedAveraging::Instantaneous },
            },
            1 => LossModel::DropTail,
            _ => LossModel::ConstantLoss { k },
        };
        let sc: Scenario<f64> = Scenario::new(
            capacity, packet, overhead, prop_delay, buffer, n_users, w_max,
            loss, RunControls::default(),
        ).unwrap();
        let text = emit_scenario(&sc);
        let back: Scenario<f64> = parse_scenario(&text).unwrap();
        prop_assert_eq!(sc, back);
    }
}

/// The 1.31/sqrt(k) law against the exact mean, within 5% in its regime.
#[test]
fn sqrt_law_tracks_exact_mean_within_five_percent() {
    for &k in &[0.002f64, 0.005, 0.01] {
        let st = solve_steady(k, W, default_n_max(W)).unwrap();
        let approx = redmf::equilibrium::sqrt_formula(k, W);
        let rel = ((approx - st.mean()) / st.mean()).abs();
        assert!(rel < 0.05, "k={k}: sqrt law {approx} vs exact {} ({rel:.3})", st.mean());
    }
}
