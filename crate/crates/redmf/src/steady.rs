//! Closed-form fixed-point window distribution for a constant loss
//! probability k.
//!
//! On each dyadic interval `[w_max/2^(n+1), w_max/2^n)` the density is a
//! finite Gaussian series `p(w) = sum_i a_i^n exp(-4^i k w^2/2)`. The
//! diagonal coefficients follow a recursion seeded at the cap's atom, the
//! off-diagonal ones are fixed multiples of shallower diagonals, and the
//! overall scale is set by normalizing total mass (grid + atom) to 1.
//!
//! Coefficients are stored in scaled form `s_i^n = a_i^n / (k w_max e^theta)`
//! with `theta = k w_max^2/2`, so every evaluated quantity pairs `e^theta`
//! with a matching negative exponent before exponentiating and the only
//! hard range limit is `theta` itself exceeding the scalar's exponent range.

use crate::math::{erf, erfcx};
use crate::model::WindowDistribution;
use crate::scalar::Scalar;
use crate::{Error, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Deepest interval index worth resolving: smallest n with
/// `w_max/2^(n+1) < 1` packet (windows below one packet hold no mass worth
/// modeling), capped at 24 to keep `4^i` exact in f64.
pub fn default_n_max<S: Scalar>(w_max: S) -> usize {
    let mut n = 1usize;
    while n < 24 && w_max * S::of(0.5).powi(n as i32 + 1) >= S::one() {
        n += 1;
    }
    n
}

/// Piecewise-Gaussian series coefficients, built with unit mass at the cap
/// (M = 1) before normalization.
#[derive(Clone, Debug)]
pub struct SeriesCoefficients<S: Scalar> {
    k: S,
    w_max: S,
    n_max: usize,
    theta: S,
    /// Scaled diagonal entries s_0^n for n = 0..=n_max.
    s0: Vec<S>,
    /// Ladder factors c_i = 4^i / prod_{l=1..i} (1 - 4^l); c_0 = 1.
    ladder: Vec<S>,
}

/// Build the series for loss probability `k` on `(0, w_max]` with `n_max`
/// dyadic intervals, using unit mass at the cap.
pub fn build_series<S: Scalar>(k: S, w_max: S, n_max: usize) -> Result<SeriesCoefficients<S>> {
    if !(k > S::zero() && k < S::one()) {
        return Err(Error::InvalidParameter(
            "loss probability k must lie in (0, 1)".into(),
        ));
    }
    if !(w_max > S::one()) || !w_max.is_finite() {
        return Err(Error::InvalidParameter("w_max must be finite and > 1".into()));
    }
    if n_max == 0 || n_max > 24 {
        return Err(Error::InvalidParameter(
            "series depth n_max must be in 1..=24".into(),
        ));
    }
    let theta = k * w_max * w_max * S::of(0.5);
    // The normalization integral is carried in linear scale (the pairing
    // keeps precision, not range), so e^theta must be representable.
    if theta > S::max_value().ln() - S::of(5.0) {
        return Err(Error::Numeric(format!(
            "exponent k*w_max^2/2 = {theta} exceeds the scalar exponent range; \
             the series scale e^theta overflows, so use a wider float type or reduce k*w_max^2",
        )));
    }

    // Diagonal recursion in scaled form: s_0^0 = 1,
    // s_0^n = s_0^(n-1) + q_n * exp(theta*(4^-n - 1)),
    // q_n = 4^(n(n-1)/2) / prod_{i=1..n} (4^i - 1).
    let mut s0 = Vec::with_capacity(n_max + 1);
    s0.push(S::one());
    let mut q = S::one();
    for n in 1..=n_max {
        let four_n = S::of(4.0).powi(n as i32);
        q = q * S::of(4.0).powi(n as i32 - 1) / (four_n - S::one());
        let bump = q * (theta * (four_n.recip() - S::one())).exp();
        s0.push(s0[n - 1] + bump);
    }

    // Off-diagonal ladder: c_i = c_(i-1) * 4 / (1 - 4^i); signs alternate.
    let mut ladder = Vec::with_capacity(n_max + 1);
    ladder.push(S::one());
    for i in 1..=n_max {
        let four_i = S::of(4.0).powi(i as i32);
        ladder.push(ladder[i - 1] * S::of(4.0) / (S::one() - four_i));
    }

    Ok(SeriesCoefficients {
        k,
        w_max,
        n_max,
        theta,
        s0,
        ladder,
    })
}

impl<S: Scalar> SeriesCoefficients<S> {
    pub fn k(&self) -> S {
        self.k
    }

    pub fn w_max(&self) -> S {
        self.w_max
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Lower edge of dyadic interval n: w_max / 2^(n+1).
    pub fn interval_lower_edge(&self, n: usize) -> S {
        self.w_max * S::of(0.5).powi(n as i32 + 1)
    }

    /// Scaled coefficient s_i^n = a_i^n / (k w_max e^theta).
    fn scaled(&self, n: usize, i: usize) -> S {
        if i == 0 {
            self.s0[n]
        } else {
            self.ladder[i] * self.s0[n - i]
        }
    }

    /// Raw coefficient a_i^n (unit-mass scale). Errors when e^theta is not
    /// representable; all density and integral paths stay in paired form
    /// and never need this.
    pub fn coefficient(&self, n: usize, i: usize) -> Result<S> {
        if n > self.n_max || i > n {
            return Err(Error::InvalidParameter(format!(
                "coefficient index (n={n}, i={i}) outside triangle n <= {}",
                self.n_max
            )));
        }
        let scale = self.k * self.w_max * self.theta.exp();
        if !scale.is_finite() {
            return Err(Error::Numeric(
                "coefficient scale k*w_max*e^theta overflows; evaluate densities instead \
                 (they pair exponents internally)"
                    .into(),
            ));
        }
        Ok(self.scaled(n, i) * scale)
    }

    /// Index of the dyadic interval containing `w`, right-continuous at the
    /// breakpoints (w = w_max/2^(n+1) belongs to interval n). Below the
    /// deepest edge the deepest interval's series is extrapolated.
    fn interval_of(&self, w: S) -> usize {
        for n in 0..self.n_max {
            if w >= self.interval_lower_edge(n) {
                return n;
            }
        }
        self.n_max
    }

    /// Density at `w` for the unit-mass (M = 1) series.
    ///
    /// `log_scale` shifts the result by `e^log_scale`; pass `ln M` to get
    /// the normalized density without ever forming the huge unit scale.
    fn density_scaled(&self, w: S, log_scale: S) -> S {
        let n = self.interval_of(w);
        let half_kw2 = self.k * w * w * S::of(0.5);
        let mut acc = S::zero();
        for i in 0..=n {
            let e4 = S::of(4.0).powi(i as i32);
            acc += self.scaled(n, i) * (self.theta + log_scale - e4 * half_kw2).exp();
        }
        self.k * self.w_max * acc
    }

    /// Unit-mass density at `w`; errors outside `(0, w_max]`.
    pub fn eval_density(&self, w: S) -> Result<S> {
        if !(w > S::zero()) || w > self.w_max {
            return Err(Error::InvalidParameter(format!(
                "density argument w = {w} outside (0, w_max]"
            )));
        }
        Ok(self.density_scaled(w, S::zero()))
    }

    /// integral of exp(theta + log_scale - e4*k*w^2/2) over [a, b],
    /// evaluated with exponent pairing so the huge and tiny factors meet
    /// before exponentiation.
    fn gauss_integral(&self, e4: S, a: S, b: S, log_scale: S) -> S {
        let c = e4 * self.k * S::of(0.5);
        let sc = c.sqrt();
        let (sa, sb) = (sc * a, sc * b);
        let pref = S::of(0.5 * SQRT_PI) / sc;
        let l = self.theta + log_scale;
        if sa >= S::of(2.0) {
            // erf(sb) - erf(sa) = e^(-sa^2) erfcx(sa) - e^(-sb^2) erfcx(sb):
            // fold the Gaussian factors into L to avoid cancellation.
            pref * ((l - sa * sa).exp() * erfcx(sa) - (l - sb * sb).exp() * erfcx(sb))
        } else {
            pref * l.exp() * (erf(sb) - erf(sa))
        }
    }

    /// integral of w * exp(theta + log_scale - e4*k*w^2/2) over [a, b].
    fn gauss_integral_w(&self, e4: S, a: S, b: S, log_scale: S) -> S {
        let c = e4 * self.k * S::of(0.5);
        let l = self.theta + log_scale;
        // (e^(L-ca^2) - e^(L-cb^2)) / 2c without cancellation via expm1.
        let la = l - c * a * a;
        let gap = -c * (b * b - a * a);
        la.exp() * (-gap.exp_m1()) / (S::of(2.0) * c)
    }

    /// integral of w^2 * exp(theta + log_scale - e4*k*w^2/2) over [a, b].
    fn gauss_integral_w2(&self, e4: S, a: S, b: S, log_scale: S) -> S {
        let c = e4 * self.k * S::of(0.5);
        let l = self.theta + log_scale;
        let boundary = (a * (l - c * a * a).exp() - b * (l - c * b * b).exp())
            / (S::of(2.0) * c);
        boundary + self.gauss_integral(e4, a, b, log_scale) / (S::of(2.0) * c)
    }

    /// Sum the interval-n series against one of the Gaussian primitives
    /// over [a, b] in that interval; `moment` is 0, 1, or 2.
    fn interval_quadrature(&self, n: usize, a: S, b: S, log_scale: S, moment: u8) -> S {
        let mut acc = S::zero();
        for i in 0..=n {
            let e4 = S::of(4.0).powi(i as i32);
            let piece = match moment {
                0 => self.gauss_integral(e4, a, b, log_scale),
                1 => self.gauss_integral_w(e4, a, b, log_scale),
                _ => self.gauss_integral_w2(e4, a, b, log_scale),
            };
            acc += self.scaled(n, i) * piece;
        }
        self.k * self.w_max * acc
    }

    /// integral of w^moment * p(w) over [lo, hi] (scaled by e^log_scale),
    /// split at the dyadic breakpoints. Below the deepest edge the deepest
    /// series is extrapolated.
    fn moment_integral(&self, lo: S, hi: S, log_scale: S, moment: u8) -> S {
        let mut acc = S::zero();
        for n in 0..=self.n_max {
            let upper = if n == 0 {
                self.w_max
            } else {
                self.interval_lower_edge(n - 1)
            };
            let lower = self.interval_lower_edge(n);
            let a = lo.max(lower);
            let b = hi.min(upper);
            if b > a {
                acc += self.interval_quadrature(n, a, b, log_scale, moment);
            }
        }
        let deep = self.interval_lower_edge(self.n_max);
        let b = hi.min(deep);
        if b > lo {
            acc += self.interval_quadrature(self.n_max, lo, b, log_scale, moment);
        }
        acc
    }

    /// I(k) = integral of the unit-mass density over (0, w_max].
    pub fn unit_integral(&self) -> S {
        self.moment_integral(S::zero(), self.w_max, S::zero(), 0)
    }

    /// Normalize into a steady state: M = 1/(1 + I(k)).
    pub fn normalize(self) -> Result<SteadyState<S>> {
        SteadyState::new(self)
    }
}

/// Taylor-law estimate of the cap mass: `M ≈ exp(-k w_max^2 / 2)`, the
/// leading behavior of log M as k -> 0.
pub fn taylor_mass<S: Scalar>(k: S, w_max: S) -> S {
    (-k * w_max * w_max * S::of(0.5)).exp()
}

/// Normalized fixed-point distribution: series plus cap mass.
#[derive(Clone, Debug)]
pub struct SteadyState<S: Scalar> {
    series: SeriesCoefficients<S>,
    mass_at_cap: S,
    log_mass: S,
}

/// Build and normalize the fixed-point distribution in one call.
pub fn solve_steady<S: Scalar>(k: S, w_max: S, n_max: usize) -> Result<SteadyState<S>> {
    build_series(k, w_max, n_max)?.normalize()
}

impl<S: Scalar> SteadyState<S> {
    fn new(series: SeriesCoefficients<S>) -> Result<Self> {
        let unit = series.unit_integral();
        if !unit.is_finite() || unit < S::zero() {
            return Err(Error::Numeric(format!(
                "normalization integral I(k) = {unit:e} is not a finite nonnegative value"
            )));
        }
        let mass_at_cap = (S::one() + unit).recip();
        // Truncation check: mass the deepest interval's extrapolation puts
        // below its own lower edge, relative to the whole. A shallow n_max
        // mis-models everything below w_max/2^(n_max+1); this catches it.
        let deep = series.interval_lower_edge(series.n_max);
        let tail = series.moment_integral(S::zero(), deep, S::zero(), 0)
            * S::of(2.0)
            / (S::one() + unit);
        if tail.abs() > S::of(1e-3) {
            return Err(Error::Numeric(format!(
                "series truncation residual {:.1e} above tolerance; increase n_max \
                 (default for this w_max is {})",
                tail.abs(),
                default_n_max(series.w_max)
            )));
        }
        let log_mass = -(S::one() + unit).ln();
        Ok(SteadyState {
            series,
            mass_at_cap,
            log_mass,
        })
    }

    pub fn series(&self) -> &SeriesCoefficients<S> {
        &self.series
    }

    pub fn k(&self) -> S {
        self.series.k
    }

    pub fn w_max(&self) -> S {
        self.series.w_max
    }

    /// M: probability mass pinned at the cap.
    pub fn mass_at_cap(&self) -> S {
        self.mass_at_cap
    }

    /// Normalized density at `w`; errors outside `(0, w_max]`.
    pub fn density(&self, w: S) -> Result<S> {
        if !(w > S::zero()) || w > self.series.w_max {
            return Err(Error::InvalidParameter(format!(
                "density argument w = {w} outside (0, w_max]"
            )));
        }
        Ok(self.series.density_scaled(w, self.log_mass))
    }

    /// Mean window F = integral of w p dw + w_max M, from the closed-form
    /// Gaussian primitives (no grid).
    pub fn mean(&self) -> S {
        self.series
            .moment_integral(S::zero(), self.series.w_max, self.log_mass, 1)
            + self.series.w_max * self.mass_at_cap
    }

    /// Second moment F2 = integral of w^2 p dw + w_max^2 M, closed form.
    pub fn second_moment(&self) -> S {
        self.series
            .moment_integral(S::zero(), self.series.w_max, self.log_mass, 2)
            + self.series.w_max * self.series.w_max * self.mass_at_cap
    }

    /// integral of w p(w) dw over [lo, hi] of the normalized density
    /// (atom not included).
    pub fn partial_window_mean(&self, lo: S, hi: S) -> Result<S> {
        if !(lo >= S::zero()) || hi < lo {
            return Err(Error::InvalidParameter(
                "partial mean needs 0 <= lo <= hi".into(),
            ));
        }
        let hi = hi.min(self.series.w_max);
        Ok(self.series.moment_integral(lo, hi, self.log_mass, 1))
    }

    /// Sample onto a finite-volume grid: each cell holds its exact average
    /// density (Gaussian primitives per cell), the atom keeps M.
    ///
    /// `cells` must be a power of two with at least 2^(n_max+1) cells so the
    /// dyadic breakpoints land on cell edges and no cell straddles a jump.
    pub fn to_distribution(&self, cells: usize) -> Result<WindowDistribution<S>> {
        if !cells.is_power_of_two() || cells < (1usize << (self.series.n_max + 1)) {
            return Err(Error::InvalidParameter(format!(
                "grid cells must be a power of two >= 2^(n_max+1) = {}",
                1usize << (self.series.n_max + 1)
            )));
        }
        let dw = self.series.w_max / S::of(cells as f64);
        let mut p = Vec::with_capacity(cells);
        for j in 0..cells {
            let a = dw * S::of(j as f64);
            let b = dw * S::of(j as f64 + 1.0);
            // Left edge decides the interval; alignment guarantees the cell
            // does not cross a breakpoint, and right-continuity of
            // interval_of puts an edge-aligned cell in the shallower
            // interval it opens.
            let n = self.series.interval_of(a);
            let avg = self.series.interval_quadrature(n, a, b, self.log_mass, 0) / dw;
            p.push(avg);
        }
        let dist = WindowDistribution::from_parts(self.series.w_max, p, self.mass_at_cap)?;
        let err = (dist.total_mass() - S::one()).abs();
        if err > S::of(1e-8) {
            return Err(Error::Numeric(format!(
                "normalized grid mass deviates from 1 by {err:e}"
            )));
        }
        Ok(dist)
    }
}
