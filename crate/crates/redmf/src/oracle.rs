//! Independent per-flow Monte Carlo cross-check for the steady-state
//! window distribution.
//!
//! Simulates the per-packet window chain directly: with probability k the
//! window halves (never below one packet), otherwise it grows by 1/w, capped
//! at w_max. Packet events at window w occur at a rate proportional to w, so
//! the time spent per event is proportional to 1/w; histogramming with
//! weight 1/w converts the event-chain occupancy into the time-stationary
//! window distribution the fluid model describes.
//!
//! Accumulation runs in f64 regardless of the requested scalar type and is
//! bit-reproducible for a given seed: flows use independent, fixed RNG
//! streams and are merged in flow order whatever the thread schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::WindowDistribution;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Histogram cells with fewer hits than this are flagged as unreliable.
const MIN_CELL_HITS: u64 = 25;

/// Monte Carlo estimate of the stationary window distribution.
#[derive(Clone, Debug)]
pub struct OracleResult<S: Scalar> {
    /// Time-weighted window histogram, normalized to total mass 1.
    pub histogram: WindowDistribution<S>,
    /// Time-average window.
    pub mean: S,
    /// Time-average squared window.
    pub second_moment: S,
    /// Fraction of time at the cap.
    pub mass_at_cap: S,
    /// Post-burn-in events actually accumulated.
    pub events: u64,
    /// Cells hit at least once but fewer than 25 times: their density
    /// estimates carry large relative error.
    pub insufficient_cells: Vec<usize>,
}

/// Burn-in long enough to forget the initial window: the chain needs about
/// w_max events to climb the whole range once.
pub fn default_burn_in(w_max: f64) -> u64 {
    (1000.0 * w_max).ceil() as u64
}

struct FlowAccum {
    hist_w: Vec<f64>,
    hits: Vec<u64>,
    atom_w: f64,
    s0: f64,
    s1: f64,
    s2: f64,
}

fn simulate_flow(
    k: f64,
    w_max: f64,
    cells: usize,
    events: u64,
    burn_in: u64,
    seed: u64,
    stream: u64,
) -> FlowAccum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let dw = w_max / cells as f64;
    let mut acc = FlowAccum {
        hist_w: vec![0.0; cells],
        hits: vec![0; cells],
        atom_w: 0.0,
        s0: 0.0,
        s1: 0.0,
        s2: 0.0,
    };
    let mut w = 1.0f64;
    for _ in 0..burn_in {
        if rng.gen::<f64>() < k {
            w = (w * 0.5).max(1.0);
        } else {
            w = (w + 1.0 / w).min(w_max);
        }
    }
    for _ in 0..events {
        let tau = 1.0 / w; // time spent at this window per packet event
        acc.s0 += tau;
        acc.s1 += 1.0;
        acc.s2 += w;
        if w == w_max {
            acc.atom_w += tau;
        } else {
            let j = ((w / dw) as usize).min(cells - 1);
            acc.hist_w[j] += tau;
            acc.hits[j] += 1;
        }
        if rng.gen::<f64>() < k {
            w = (w * 0.5).max(1.0);
        } else {
            w = (w + 1.0 / w).min(w_max);
        }
    }
    acc
}

/// Run the per-flow chain and histogram the stationary distribution.
///
/// `n_events` is the total post-burn-in event budget, split evenly across
/// flows (earlier flows absorb the remainder). Each flow burns in
/// `burn_in_per_flow` events first. Identical arguments give identical
/// results, independent of thread count.
pub fn run_oracle<S: Scalar>(
    k: S,
    w_max: S,
    cells: usize,
    n_flows: u32,
    n_events: u64,
    burn_in_per_flow: u64,
    seed: u64,
) -> Result<OracleResult<S>> {
    let kf = k.as_f64();
    let wf = w_max.as_f64();
    if !(0.0..1.0).contains(&kf) {
        return Err(Error::InvalidParameter(format!(
            "loss probability must lie in [0, 1); got {kf}"
        )));
    }
    if !(wf >= 2.0) {
        return Err(Error::InvalidParameter("w_max must be at least 2".into()));
    }
    if cells < 2 {
        return Err(Error::InvalidParameter(
            "histogram needs at least 2 cells".into(),
        ));
    }
    if n_flows == 0 || n_events == 0 {
        return Err(Error::InvalidParameter(
            "need at least one flow and one event".into(),
        ));
    }

    let base = n_events / n_flows as u64;
    let rem = n_events % n_flows as u64;
    let flows: Vec<FlowAccum> = (0..n_flows)
        .into_par_iter()
        .map(|i| {
            let events = base + if (i as u64) < rem { 1 } else { 0 };
            simulate_flow(kf, wf, cells, events, burn_in_per_flow, seed, i as u64)
        })
        .collect();

    let mut hist_w = vec![0.0f64; cells];
    let mut hits = vec![0u64; cells];
    let mut atom_w = 0.0;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for fa in &flows {
        for j in 0..cells {
            hist_w[j] += fa.hist_w[j];
            hits[j] += fa.hits[j];
        }
        atom_w += fa.atom_w;
        s0 += fa.s0;
        s1 += fa.s1;
        s2 += fa.s2;
    }
    if !(s0 > 0.0) {
        return Err(Error::Numeric("oracle accumulated zero weight".into()));
    }

    let dw = wf / cells as f64;
    let p: Vec<S> = hist_w.iter().map(|&h| S::of(h / (s0 * dw))).collect();
    let histogram = WindowDistribution::from_parts(w_max, p, S::of(atom_w / s0))?;
    let insufficient_cells = hits
        .iter()
        .enumerate()
        .filter(|(_, &h)| h > 0 && h < MIN_CELL_HITS)
        .map(|(j, _)| j)
        .collect();
    Ok(OracleResult {
        histogram,
        mean: S::of(s1 / s0),
        second_moment: S::of(s2 / s0),
        mass_at_cap: S::of(atom_w / s0),
        events: n_events,
        insufficient_cells,
    })
}

/// Total variation distance between two distributions on the same grid:
/// half the integrated absolute density gap plus half the atom gap.
pub fn tv_distance<S: Scalar>(
    a: &WindowDistribution<S>,
    b: &WindowDistribution<S>,
) -> Result<S> {
    if a.cells() != b.cells() || a.w_max() != b.w_max() {
        return Err(Error::InvalidParameter(format!(
            "grids differ: {} cells over {} vs {} cells over {}",
            a.cells(),
            a.w_max(),
            b.cells(),
            b.w_max()
        )));
    }
    let dw = a.dw();
    let mut acc = S::zero();
    for (pa, pb) in a.density().iter().zip(b.density()) {
        acc += (*pa - *pb).abs();
    }
    Ok((acc * dw + (a.atom() - b.atom()).abs()) * S::of(0.5))
}
