//! Shared domain types: router/flow parameters, RED configuration, loss
//! models, unit conversion, and the window distribution container.

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Bottleneck and flow population parameters.
///
/// `capacity_per_user` is the router capacity divided by the number of
/// flows, in packets per second. Queue sizes are kept in seconds
/// throughout; packet counts are a display conversion only.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<S: Scalar> {
    /// C: capacity per flow, packets/second.
    pub capacity_per_user: S,
    /// T: two-way propagation delay, seconds.
    pub prop_delay: S,
    /// N: number of flows.
    pub n_users: u32,
    /// W_max: window cap, packets.
    pub w_max: S,
    /// Q_max: buffer size expressed as queuing delay, seconds.
    pub buffer_delay: S,
    /// On-the-wire bytes per packet (payload + overhead); unit conversion only.
    pub packet_bytes: S,
}

impl<S: Scalar> NetworkParams<S> {
    /// Build from line-rate terms: capacity in bits/s shared by `n_users`
    /// flows of `payload_bytes + overhead_bytes` packets.
    pub fn from_wire(
        capacity_bps: S,
        payload_bytes: S,
        overhead_bytes: S,
        prop_delay: S,
        buffer_delay: S,
        n_users: u32,
        w_max: S,
    ) -> Result<Self> {
        let packet_bytes = payload_bytes + overhead_bytes;
        if packet_bytes <= S::zero() || capacity_bps <= S::zero() {
            return Err(Error::InvalidParameter(
                "capacity and packet size must be positive".into(),
            ));
        }
        if n_users == 0 {
            return Err(Error::InvalidParameter("n_users must be at least 1".into()));
        }
        let aggregate = capacity_bps / (S::of(8.0) * packet_bytes);
        let params = NetworkParams {
            capacity_per_user: aggregate / S::of(n_users as f64),
            prop_delay,
            n_users,
            w_max,
            buffer_delay,
            packet_bytes,
        };
        params.validate()?;
        Ok(params)
    }

    /// Total router capacity N·C in packets/second.
    pub fn aggregate_capacity(&self) -> S {
        self.capacity_per_user * S::of(self.n_users as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            (self.capacity_per_user, "capacity_per_user"),
            (self.prop_delay, "prop_delay"),
            (self.w_max, "w_max"),
            (self.packet_bytes, "packet_bytes"),
        ];
        for (v, name) in pos {
            if !(v > S::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and strictly positive"
                )));
            }
        }
        if self.n_users == 0 {
            return Err(Error::InvalidParameter("n_users must be at least 1".into()));
        }
        if self.w_max < S::of(2.0) {
            return Err(Error::InvalidParameter(
                "w_max must be at least 2 packets (halving needs room below the cap)".into(),
            ));
        }
        if self.buffer_delay < S::zero() || !self.buffer_delay.is_finite() {
            return Err(Error::InvalidParameter(
                "buffer_delay must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Units understood by [`convert_queue`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unit {
    Packets,
    Seconds,
    /// Line rate; only convertible to itself (kept so callers can route all
    /// display conversions through one function and get a typed error for
    /// nonsensical pairs).
    BitsPerSec,
}

/// Convert a queue size between packets and seconds using the aggregate
/// drain rate N·C. Same-unit conversion is the identity.
pub fn convert_queue<S: Scalar>(
    params: &NetworkParams<S>,
    value: S,
    from: Unit,
    to: Unit,
) -> Result<S> {
    if from == to {
        return Ok(value);
    }
    let rate = params.aggregate_capacity();
    match (from, to) {
        (Unit::Seconds, Unit::Packets) => Ok(value * rate),
        (Unit::Packets, Unit::Seconds) => Ok(value / rate),
        _ => Err(Error::InvalidParameter(format!(
            "incompatible unit pair {from:?} -> {to:?}"
        ))),
    }
}

/// RED drop-function configuration. Thresholds are queuing delays in
/// seconds (matching the queue state), not packet counts.
#[derive(Clone, Debug, PartialEq)]
pub struct RedConfig<S: Scalar> {
    pub min_th: S,
    pub max_th: S,
    pub p_max: S,
    /// EWMA averaging weight in (0, 1]; 1 means the instantaneous queue.
    pub w_q: S,
}

impl<S: Scalar> RedConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_th >= S::zero() && self.min_th.is_finite()) {
            return Err(Error::InvalidParameter("red.min_th_s must be >= 0".into()));
        }
        if !(self.max_th > self.min_th) || !self.max_th.is_finite() {
            return Err(Error::InvalidParameter(
                "red.max_th_s must exceed red.min_th_s".into(),
            ));
        }
        if !(self.p_max > S::zero() && self.p_max <= S::one()) {
            return Err(Error::InvalidParameter("red.p_max must be in (0, 1]".into()));
        }
        if !(self.w_q > S::zero() && self.w_q <= S::one()) {
            return Err(Error::InvalidParameter("red.w_q must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// Ramp slope epsilon = p_max / (max_th - min_th), probability per second.
    pub fn slope(&self) -> S {
        self.p_max / (self.max_th - self.min_th)
    }

    /// Drop probability as a total function of the queue:
    /// 0 up to min_th, linear ramp reaching p_max at max_th, 1 above.
    pub fn drop_probability(&self, q: S) -> S {
        if q <= self.min_th {
            S::zero()
        } else if q <= self.max_th {
            self.slope() * (q - self.min_th)
        } else {
            S::one()
        }
    }
}

/// How RED samples the queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RedAveraging {
    /// Drop probability reads the instantaneous queue (w_q = 1).
    Instantaneous,
    /// Drop probability reads the EWMA-averaged queue (w_q < 1).
    Ewma,
}

/// Router loss policy.
#[derive(Clone, Debug, PartialEq)]
pub enum LossModel<S: Scalar> {
    Red {
        config: RedConfig<S>,
        averaging: RedAveraging,
    },
    /// FIFO drop on full buffer; the buffer size lives in
    /// [`NetworkParams::buffer_delay`].
    DropTail,
    /// Fixed loss probability; for fixed-point studies and the oracle.
    ConstantLoss { k: S },
}

impl<S: Scalar> LossModel<S> {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossModel::Red { config, .. } => config.validate(),
            LossModel::DropTail => Ok(()),
            LossModel::ConstantLoss { k } => {
                if *k >= S::zero() && *k < S::one() && k.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(
                        "constant loss probability must be in [0, 1)".into(),
                    ))
                }
            }
        }
    }
}

/// Window-size distribution: cell-averaged density on a uniform grid over
/// `[0, w_max)` plus an atomic mass at `w_max`.
///
/// Storing cell averages (finite-volume convention) makes the grid mass
/// `sum(p)·dw + m` exact at construction and lets the simulator conserve it
/// to rounding; pointwise values are recovered to O(dw²) at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowDistribution<S: Scalar> {
    w_max: S,
    p: Vec<S>,
    m: S,
}

impl<S: Scalar> WindowDistribution<S> {
    pub fn from_parts(w_max: S, p: Vec<S>, m: S) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidParameter(
                "distribution grid must have at least one cell".into(),
            ));
        }
        if !(w_max > S::zero()) {
            return Err(Error::InvalidParameter("w_max must be positive".into()));
        }
        Ok(WindowDistribution { w_max, p, m })
    }

    /// All mass at the cap: the degenerate M = 1 distribution.
    pub fn degenerate_at_cap(cells: usize, w_max: S) -> Self {
        WindowDistribution {
            w_max,
            p: vec![S::zero(); cells],
            m: S::one(),
        }
    }

    pub fn w_max(&self) -> S {
        self.w_max
    }

    pub fn cells(&self) -> usize {
        self.p.len()
    }

    pub fn dw(&self) -> S {
        self.w_max / S::of(self.p.len() as f64)
    }

    pub fn cell_center(&self, j: usize) -> S {
        (S::of(j as f64) + S::of(0.5)) * self.dw()
    }

    /// Index of the cell containing `w` (clamped to the grid).
    pub fn cell_of(&self, w: S) -> usize {
        let j = (w / self.dw()).floor().as_f64() as isize;
        j.clamp(0, self.p.len() as isize - 1) as usize
    }

    pub fn density(&self) -> &[S] {
        &self.p
    }

    pub fn atom(&self) -> S {
        self.m
    }

    /// Integral of the density over the grid (excludes the atom).
    pub fn grid_mass(&self) -> S {
        self.p.iter().sum::<S>() * self.dw()
    }

    pub fn total_mass(&self) -> S {
        self.grid_mass() + self.m
    }

    /// Mean window: midpoint quadrature on the grid plus the atom.
    pub fn mean(&self) -> S {
        let dw = self.dw();
        let mut acc = S::zero();
        for (j, &pj) in self.p.iter().enumerate() {
            acc += self.cell_center_with(dw, j) * pj;
        }
        acc * dw + self.w_max * self.m
    }

    /// Second moment: midpoint quadrature on the grid plus the atom.
    pub fn second_moment(&self) -> S {
        let dw = self.dw();
        let mut acc = S::zero();
        for (j, &pj) in self.p.iter().enumerate() {
            let w = self.cell_center_with(dw, j);
            acc += w * w * pj;
        }
        acc * dw + self.w_max * self.w_max * self.m
    }

    fn cell_center_with(&self, dw: S, j: usize) -> S {
        (S::of(j as f64) + S::of(0.5)) * dw
    }

    /// Check nonnegativity (to `-neg_tol`), atom range, finiteness, and
    /// total mass within `mass_tol` of 1.
    pub fn validate(&self, mass_tol: S) -> Result<()> {
        let neg_tol = S::of(-1e-12);
        for (j, &pj) in self.p.iter().enumerate() {
            if !pj.is_finite() {
                return Err(Error::Numeric(format!("density cell {j} is not finite")));
            }
            if pj < neg_tol {
                return Err(Error::Numeric(format!(
                    "density cell {j} is negative: {pj:e}"
                )));
            }
        }
        if !(self.m >= neg_tol && self.m <= S::one() + S::of(1e-9)) {
            return Err(Error::Numeric(format!(
                "atom mass out of [0,1]: {:e}",
                self.m
            )));
        }
        let total = self.total_mass();
        if (total - S::one()).abs() > mass_tol {
            return Err(Error::Numeric(format!(
                "total mass {total} deviates from 1 beyond {mass_tol:e}"
            )));
        }
        Ok(())
    }
}
