//! Local stability of the congested equilibrium and RED tuning bounds.
//!
//! Linearizing the delayed feedback loop (queue -> loss -> window advance ->
//! arrival rate -> queue) around a congested equilibrium and expanding the
//! delay terms to first order in the round trip R yields a quadratic
//! characteristic polynomial
//!
//! ```text
//! a phi^2 + b phi + c = 0
//! ```
//!
//! whose root signs decide stability of the operating point. Several
//! closed-form sufficient conditions on the ramp slope epsilon = p_max /
//! (max_th - min_th) follow from sign analysis of the coefficients; they are
//! exposed as separate verdicts together with the explicit roots.
//!
//! The closed-form conditions treat the mass pinned at the window cap as a
//! small correction. Just past the congestion onset, where most flows sit at
//! the cap (m_e above roughly one half), that term flips the constant
//! coefficient negative and the equilibrium acquires a slow real escape mode
//! that the slope and universal bounds fail to see; time-domain integration
//! confirms the drift (the queue wanders below min_th over hundreds of
//! seconds). In that regime the explicit roots are authoritative, not the
//! closed-form verdicts.

use num_complex::Complex;

use crate::equilibrium::EquilibriumState;
use crate::model::{NetworkParams, RedConfig, WindowDistribution};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Square of the mean-window constant in F ~ 1.31/sqrt(k).
pub const ALPHA_SQ: f64 = 1.7161;

/// Coefficients of the characteristic quadratic, plus the two intermediate
/// quantities they are built from.
#[derive(Clone, Copy, Debug)]
pub struct LinearizedCoefficients<S: Scalar> {
    /// Queue-to-rate gain y = (1-k) / (C + eps F).
    pub y: S,
    /// Damping ratio u = eps y (1-M) / k; u < 1 keeps the leading
    /// coefficient positive.
    pub u: S,
    /// Leading coefficient a = R^2 (1 - u).
    pub a: S,
    /// First-order coefficient b = R (kF + u + kW - kWu + MW).
    pub b: S,
    /// Constant coefficient c = k^2 WF + kWu + RMkW - MW eps y.
    pub c: S,
}

/// Compute the linearized coefficients at a congested equilibrium for ramp
/// slope `epsilon`. Errors if the equilibrium carries no loss (k = 0), where
/// the expansion is undefined.
pub fn linearized_coefficients<S: Scalar>(
    params: &NetworkParams<S>,
    epsilon: S,
    eq: &EquilibriumState<S>,
) -> Result<LinearizedCoefficients<S>> {
    let (k, f, f2, m) = (eq.k_e, eq.f_e, eq.f2_e, eq.m_e);
    let _ = f2;
    if k <= S::zero() {
        return Err(Error::InvalidParameter(
            "linearization requires a congested equilibrium with k > 0".into(),
        ));
    }
    if epsilon < S::zero() {
        return Err(Error::InvalidParameter("epsilon must be >= 0".into()));
    }
    let c_cap = params.capacity_per_user;
    let w = params.w_max;
    let r = eq.r_e;
    let one = S::one();
    let y = (one - k) / (c_cap + epsilon * f);
    let u = epsilon * y * (one - m) / k;
    let a = r * r * (one - u);
    let b = r * (k * f + u + k * w - k * w * u + m * w);
    let c = k * k * w * f + k * w * u + r * m * k * w - m * w * epsilon * y;
    Ok(LinearizedCoefficients { y, u, a, b, c })
}

/// Roots of the characteristic polynomial.
#[derive(Clone, Copy, Debug)]
pub enum CharacteristicRoots<S: Scalar> {
    /// a != 0: both quadratic roots (complex-conjugate pair when the
    /// discriminant is negative).
    Quadratic(Complex<S>, Complex<S>),
    /// a = 0 exactly: the polynomial degenerates to b phi + c.
    Linear(S),
}

impl<S: Scalar> CharacteristicRoots<S> {
    pub fn all(&self) -> Vec<Complex<S>> {
        match *self {
            CharacteristicRoots::Quadratic(r1, r2) => vec![r1, r2],
            CharacteristicRoots::Linear(r) => vec![Complex::new(r, S::zero())],
        }
    }

    pub fn max_real(&self) -> S {
        match *self {
            CharacteristicRoots::Quadratic(r1, r2) => r1.re.max(r2.re),
            CharacteristicRoots::Linear(r) => r,
        }
    }

    /// All roots strictly in the left half plane.
    pub fn stable(&self) -> bool {
        self.max_real() < S::zero()
    }
}

/// Explicit roots of a phi^2 + b phi + c with real coefficients.
pub fn characteristic_roots<S: Scalar>(a: S, b: S, c: S) -> Result<CharacteristicRoots<S>> {
    if a == S::zero() {
        if b == S::zero() {
            return Err(Error::Numeric(
                "degenerate characteristic polynomial (a = b = 0)".into(),
            ));
        }
        return Ok(CharacteristicRoots::Linear(-c / b));
    }
    let two_a = S::of(2.0) * a;
    let disc = b * b - S::of(4.0) * a * c;
    if disc >= S::zero() {
        let sq = disc.sqrt();
        let r1 = (-b + sq) / two_a;
        let r2 = (-b - sq) / two_a;
        Ok(CharacteristicRoots::Quadratic(
            Complex::new(r1, S::zero()),
            Complex::new(r2, S::zero()),
        ))
    } else {
        let re = -b / two_a;
        let im = (-disc).sqrt() / two_a;
        Ok(CharacteristicRoots::Quadratic(
            Complex::new(re, im),
            Complex::new(re, -im),
        ))
    }
}

/// Closed-form stability verdicts, each independent of the others.
///
/// The slope, uncapped, and universal bounds are sufficient conditions only
/// while the cap mass m_e stays well below one half; in the cap-dominated
/// onset regime they can certify an equilibrium whose explicit roots include
/// a slow positive one. Trust `roots_negative` when they disagree.
#[derive(Clone, Copy, Debug)]
pub struct Verdicts {
    /// epsilon < k C / (1 - M): sufficient for stability away from the
    /// congestion onset.
    pub sufficient_slope_bound: bool,
    /// u < 1: the weaker necessary-side condition (positive leading
    /// coefficient of the quadratic).
    pub weak_damping: bool,
    /// epsilon < k C / (1 - 1.31 sqrt(k) - k): the cap-free closed form.
    /// None when k lies outside its validity region (denominator <= 0).
    pub uncapped_bound: Option<bool>,
    /// epsilon < alpha^2 / ((T + q_max) W): scenario-independent bound.
    pub universal_bound: bool,
    /// max Re(root) < 0 for the explicit roots.
    pub roots_negative: bool,
}

/// The epsilon thresholds behind the verdicts, for reporting.
#[derive(Clone, Copy, Debug)]
pub struct Thresholds<S: Scalar> {
    pub eps_slope_bound: S,
    pub eps_uncapped: Option<S>,
    pub eps_universal: S,
    /// p_max that saturates the universal bound for this scenario's ramp.
    pub p_max_universal: S,
}

/// Full stability analysis at one operating point.
#[derive(Clone, Debug)]
pub struct StabilityReport<S: Scalar> {
    /// Ramp slope the analysis was run at (1/s).
    pub epsilon: S,
    pub coefficients: LinearizedCoefficients<S>,
    pub roots: CharacteristicRoots<S>,
    /// Window-amplitude factor x(phi) for each root, in `roots.all()` order.
    pub x: Vec<Complex<S>>,
    /// |phi| R estimate (b / 2a) R for the slow root; the first-order delay
    /// expansion behind the closed forms is trustworthy when this is small.
    pub small_phi: S,
    /// small_phi < 0.1.
    pub small_phi_ok: bool,
    pub verdicts: Verdicts,
    pub thresholds: Thresholds<S>,
}

fn x_amplitude<S: Scalar>(
    phi: Complex<S>,
    r: S,
    k: S,
    f: S,
    m: S,
    epsilon: S,
    y: S,
) -> Complex<S> {
    let rphi = phi * r;
    let gain = (S::one() - m) * epsilon / k * y;
    let one = Complex::new(S::one(), S::zero());
    -(rphi + Complex::from(k * f) + (one - rphi) * gain)
}

/// Critical loss probability beyond which the cap-free bound's denominator
/// 1 - 1.31 sqrt(k) - k is non-positive.
pub fn uncapped_validity_limit<S: Scalar>() -> S {
    let alpha = S::of(1.31);
    let x = ((alpha * alpha + S::of(4.0)).sqrt() - alpha) * S::of(0.5);
    x * x
}

/// Cap-free slope threshold k C / (1 - 1.31 sqrt(k) - k). Errors when k is
/// outside (0, ~0.292) where the denominator changes sign.
pub fn uncapped_slope_threshold<S: Scalar>(k: S, capacity_per_user: S) -> Result<S> {
    if k <= S::zero() || k >= uncapped_validity_limit() {
        return Err(Error::InvalidParameter(format!(
            "cap-free threshold is valid for 0 < k < {}; got k = {k}",
            uncapped_validity_limit::<S>()
        )));
    }
    let denom = S::one() - S::of(1.31) * k.sqrt() - k;
    Ok(k * capacity_per_user / denom)
}

/// Analyze stability at `eq` using the ramp slope of `red`.
pub fn analyze_stability<S: Scalar>(
    params: &NetworkParams<S>,
    red: &RedConfig<S>,
    eq: &EquilibriumState<S>,
) -> Result<StabilityReport<S>> {
    analyze_with_epsilon(params, red, eq, red.slope())
}

/// Analyze stability at `eq` with an explicit slope override; `red` still
/// supplies min_th for the tuning-side threshold report.
pub fn analyze_with_epsilon<S: Scalar>(
    params: &NetworkParams<S>,
    red: &RedConfig<S>,
    eq: &EquilibriumState<S>,
    epsilon: S,
) -> Result<StabilityReport<S>> {
    params.validate()?;
    red.validate()?;
    let coefficients = linearized_coefficients(params, epsilon, eq)?;
    let LinearizedCoefficients { y, u, a, b, c } = coefficients;
    let roots = characteristic_roots(a, b, c)?;
    let x = roots
        .all()
        .into_iter()
        .map(|phi| x_amplitude(phi, eq.r_e, eq.k_e, eq.f_e, eq.m_e, epsilon, y))
        .collect();

    let small_phi = if a == S::zero() {
        S::infinity()
    } else {
        (b / (S::of(2.0) * a)).abs() * eq.r_e
    };

    let one = S::one();
    let eps_slope_bound = eq.k_e * params.capacity_per_user / (one - eq.m_e);
    let eps_uncapped = uncapped_slope_threshold(eq.k_e, params.capacity_per_user).ok();
    let tuning = tune_red(
        params.prop_delay,
        params.buffer_delay,
        red.min_th,
        params.w_max,
    )?;
    let thresholds = Thresholds {
        eps_slope_bound,
        eps_uncapped,
        eps_universal: tuning.epsilon_bound,
        p_max_universal: tuning.p_max_bound,
    };
    let verdicts = Verdicts {
        sufficient_slope_bound: epsilon < eps_slope_bound,
        weak_damping: u < one,
        uncapped_bound: eps_uncapped.map(|th| epsilon < th),
        universal_bound: epsilon < tuning.epsilon_bound,
        roots_negative: roots.stable(),
    };
    Ok(StabilityReport {
        epsilon,
        coefficients,
        roots,
        x,
        small_phi,
        small_phi_ok: small_phi < S::of(0.1),
        verdicts,
        thresholds,
    })
}

/// RED parameters guaranteed stable for every load level.
#[derive(Clone, Copy, Debug)]
pub struct TuningResult<S: Scalar> {
    /// q_max / T.
    pub beta: S,
    /// min_th / T.
    pub gamma: S,
    /// Largest safe p_max: (beta - gamma) / (beta + 1) * alpha^2 / w_max.
    pub p_max_bound: S,
    /// Largest safe ramp slope: alpha^2 / ((T + q_max) w_max).
    pub epsilon_bound: S,
    /// The constant alpha^2 = 1.7161 used in both bounds.
    pub alpha_sq: S,
}

/// Load-independent RED tuning: the p_max (equivalently slope) below which
/// the linearized loop is stable for any number of flows, given propagation
/// delay `t`, buffer ceiling `q_max`, ramp foot `min_th`, and window cap.
///
/// The guarantee inherits the closed-form bounds' blind spot: loads barely
/// past the congestion onset (cap mass above roughly one half) can still
/// carry a slow escape mode. Check the explicit roots there.
pub fn tune_red<S: Scalar>(t: S, q_max: S, min_th: S, w_max: S) -> Result<TuningResult<S>> {
    if !(t > S::zero()) || !(q_max > S::zero()) || !(w_max > S::zero()) {
        return Err(Error::InvalidParameter(
            "tuning requires positive propagation delay, buffer, and window cap".into(),
        ));
    }
    if min_th < S::zero() || min_th > q_max {
        return Err(Error::InvalidParameter(
            "tuning requires 0 <= min_th <= q_max".into(),
        ));
    }
    let alpha_sq = S::of(ALPHA_SQ);
    let beta = q_max / t;
    let gamma = min_th / t;
    let p_max_bound = (beta - gamma) / (beta + S::one()) * alpha_sq / w_max;
    let epsilon_bound = alpha_sq / ((t + q_max) * w_max);
    Ok(TuningResult {
        beta,
        gamma,
        p_max_bound,
        epsilon_bound,
        alpha_sq,
    })
}

/// Relative growth rate of the mean window per unit advance factor implied
/// by a window distribution under loss probability `k`:
///
/// ```text
/// s = 1 - M - (k/2) F2
/// ```
///
/// Zero at the matching steady state, negative when halving outweighs
/// additive growth (e.g. all mass at the cap).
pub fn second_moment_dynamics_check<S: Scalar>(dist: &WindowDistribution<S>, k: S) -> S {
    S::one() - dist.atom() - k * dist.second_moment() * S::of(0.5)
}
