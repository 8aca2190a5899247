//! Pathwise coupled simulations: the monotone comparison pair, superprocess
//! domination, and samples of the upper-measure approximants.
//!
//! Both constructions realize the upper path as `lower + increment`, where
//! the increment solves the generalized equation with coefficients read from
//! the current lower field (annihilation `β = 2u` for the monotone pair,
//! immigration `α = u²` for the superprocess dominator) and an independent
//! noise stream. Since the increment is clipped at zero every step, the order
//! `lower ≤ upper` holds cell-for-cell with zero tolerance at all times.

use crate::field::{Field, GridSpec, Profile};
use crate::integrator::{
    resolve_steps, Boundary, Coefficients, ObsRow, Schedule, SimState, StepError, StepParams,
    Trajectory,
};
use crate::rng::NoiseStream;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("initial fields are not ordered: u0 exceeds v0 at cell {cell}")]
    NotDominated { cell: usize },
    #[error("coupled fields must share one grid")]
    GridMismatch,
    #[error("the coupling construction requires gamma = 1, got {0}")]
    GammaNotOne(f64),
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Monotone,
    Superprocess,
}

/// Two ordered trajectories sharing grid, time step and coupling scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPair {
    pub kind: PairKind,
    pub lower: Trajectory,
    pub upper: Trajectory,
    /// Smallest sampled value of `upper − lower` over all (t, x);
    /// non-negative by construction.
    pub min_gap: f64,
    pub lower_stream: NoiseStream,
    pub upper_stream: NoiseStream,
}

/// `v0 − u0`, requiring `u0 ≤ v0` cell-for-cell on a shared grid.
fn ordered_difference(u0: &Field, v0: &Field) -> Result<Field, CouplingError> {
    if u0.n_cells() != v0.n_cells() || u0.dx() != v0.dx() || u0.origin() != v0.origin() {
        return Err(CouplingError::GridMismatch);
    }
    let mut values = Vec::with_capacity(u0.n_cells());
    for (cell, (&a, &b)) in u0.values().iter().zip(v0.values()).enumerate() {
        if a > b {
            return Err(CouplingError::NotDominated { cell });
        }
        values.push(b - a);
    }
    Ok(Field::from_clipped(u0.dx(), u0.origin(), values))
}

/// Observables of the sum of two coupled states.
fn observe_sum(a: &SimState, b: &SimState) -> ObsRow {
    let union = match (a.window(), b.window()) {
        (Some((alo, ahi)), Some((blo, bhi))) => Some((alo.min(blo), ahi.max(bhi))),
        (w, None) | (None, w) => w,
    };
    let t = a.time();
    let Some((lo, hi)) = union else {
        return ObsRow {
            t,
            mass: 0.0,
            r0: f64::NEG_INFINITY,
            l0: f64::INFINITY,
            r1: f64::NEG_INFINITY,
        };
    };
    let value = |j: usize| a.values()[j] + b.values()[j];
    let mut mass = 0.0;
    let mut first = None;
    let mut last = None;
    let mut peak = f64::NEG_INFINITY;
    for j in lo..=hi {
        let v = value(j);
        mass += v;
        if v > 0.0 {
            first.get_or_insert(j);
            last = Some(j);
            peak = peak.max(a.x(j) + v.ln());
        }
    }
    let (Some(first), Some(last)) = (first, last) else {
        return ObsRow {
            t,
            mass: 0.0,
            r0: f64::NEG_INFINITY,
            l0: f64::INFINITY,
            r1: f64::NEG_INFINITY,
        };
    };
    let mut sum = 0.0;
    for j in first..=last {
        let v = value(j);
        if v > 0.0 {
            sum += (a.x(j) + v.ln() - peak).exp();
        }
    }
    ObsRow {
        t,
        mass: mass * a.dx(),
        r0: a.x(last),
        l0: a.x(first),
        r1: peak + sum.ln() + a.dx().ln(),
    }
}

fn combined_field(a: &SimState, b: &SimState) -> Field {
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| x + y)
        .collect();
    Field::from_clipped(a.dx(), a.x(0), values)
}

fn min_increment(w: &SimState) -> f64 {
    w.values().iter().cloned().fold(f64::INFINITY, f64::min)
}

enum IncrementRole {
    /// Annihilation `β = 2u`, γ = 1: upper solves the core equation.
    MonotoneIncrement,
    /// Immigration `α = u²`, γ = 0: upper solves the superprocess equation.
    SuperprocessExcess,
}

#[allow(clippy::too_many_arguments)]
fn run_pair(
    u0: &Field,
    w0: &Field,
    kind: PairKind,
    role: IncrementRole,
    c: &Coefficients,
    p: &StepParams,
    horizon: f64,
    schedule: &Schedule,
    seed: u64,
    replicate: u32,
) -> Result<CoupledPair, CouplingError> {
    if c.gamma != 1.0 {
        return Err(CouplingError::GammaNotOne(c.gamma));
    }
    let stream_u = NoiseStream::new(seed, replicate, 0);
    let stream_w = NoiseStream::new(seed, replicate, 1);
    let mut u = SimState::new(u0, p, stream_u);
    let mut w = SimState::new(w0, p, stream_w);

    let n_steps = resolve_steps(horizon, p.dt());
    let stride = if schedule.sample_dt.is_finite() {
        ((schedule.sample_dt / p.dt()).round() as u32).max(1)
    } else {
        u32::MAX
    };
    let mut snapshot_steps: Vec<u32> = schedule
        .snapshot_times
        .iter()
        .map(|&t| resolve_steps(t, p.dt()))
        .collect();
    snapshot_steps.sort_unstable();
    snapshot_steps.dedup();

    let mut lower_rows = Vec::new();
    let mut upper_rows = Vec::new();
    let mut lower_snaps = Vec::new();
    let mut upper_snaps = Vec::new();
    let mut min_gap = f64::INFINITY;
    let mut cursor = 0usize;

    let mut sample = |u: &SimState, w: &SimState, cursor: &mut usize| {
        lower_rows.push(u.observe());
        upper_rows.push(observe_sum(u, w));
        min_gap = min_gap.min(min_increment(w));
        while *cursor < snapshot_steps.len() && snapshot_steps[*cursor] <= u.step_index() {
            lower_snaps.push((u.time(), u.field()));
            upper_snaps.push((u.time(), combined_field(u, w)));
            *cursor += 1;
        }
    };

    sample(&u, &w, &mut cursor);
    for step in 1..=n_steps {
        // The increment advances first so its coefficients read the lower
        // field at the current time (explicit interleaving).
        match role {
            IncrementRole::MonotoneIncrement => {
                w.advance(
                    c.theta,
                    1.0,
                    c.noise_on,
                    |_| 0.0,
                    |j| 2.0 * u.values()[j],
                    None,
                );
            }
            IncrementRole::SuperprocessExcess => {
                let extra = u.window();
                w.advance(
                    c.theta,
                    0.0,
                    c.noise_on,
                    |j| {
                        let v = u.values()[j];
                        v * v
                    },
                    |_| 0.0,
                    extra,
                );
            }
        }
        u.advance_static(c);
        if step % stride == 0 || step == n_steps {
            sample(&u, &w, &mut cursor);
        }
    }

    let lower = Trajectory {
        rows: lower_rows,
        snapshots: lower_snaps,
        extinction_time: u.extinction_time(),
    };
    let upper_extinction = match (u.extinction_time(), w.extinction_time()) {
        (Some(a), Some(b)) => Some(a.max(b)),
        _ => None,
    };
    let upper = Trajectory {
        rows: upper_rows,
        snapshots: upper_snaps,
        extinction_time: upper_extinction,
    };
    Ok(CoupledPair {
        kind,
        lower,
        upper,
        min_gap,
        lower_stream: stream_u,
        upper_stream: stream_w,
    })
}

/// Coupled pair `u ≤ v` from ordered initial data: `u` solves the core
/// equation, the increment `v − u` evolves with annihilation rate `2u` and
/// independent noise.
#[allow(clippy::too_many_arguments)]
pub fn monotone_pair(
    u0: &Field,
    v0: &Field,
    c: &Coefficients,
    p: &StepParams,
    horizon: f64,
    schedule: &Schedule,
    seed: u64,
    replicate: u32,
) -> Result<CoupledPair, CouplingError> {
    let w0 = ordered_difference(u0, v0)?;
    run_pair(
        u0,
        &w0,
        PairKind::Monotone,
        IncrementRole::MonotoneIncrement,
        c,
        p,
        horizon,
        schedule,
        seed,
        replicate,
    )
}

/// Coupled pair `u ≤ ū` where `ū` solves the pure branching (superprocess)
/// equation: the excess starts at zero and receives immigration `u²`.
#[allow(clippy::too_many_arguments)]
pub fn superprocess_pair(
    u0: &Field,
    c: &Coefficients,
    p: &StepParams,
    horizon: f64,
    schedule: &Schedule,
    seed: u64,
    replicate: u32,
) -> Result<CoupledPair, CouplingError> {
    let w0 = Field::from_clipped(u0.dx(), u0.origin(), vec![0.0; u0.n_cells()]);
    run_pair(
        u0,
        &w0,
        PairKind::Superprocess,
        IncrementRole::SuperprocessExcess,
        c,
        p,
        horizon,
        schedule,
        seed,
        replicate,
    )
}

/// Level-N approximant families for the upper measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperKind {
    /// ψ_N ≡ N everywhere: approximates the full upper measure.
    Full,
    /// ζ_N: N on the left half-line, ramp to zero at the origin.
    Left,
    /// ξ_N: mirror image of ζ_N.
    Right,
}

impl UpperKind {
    pub fn profile(&self, level: f64) -> Profile {
        match self {
            UpperKind::Full => Profile::ConstantPsiN { level },
            UpperKind::Left => Profile::HalfLineZetaN { level },
            UpperKind::Right => Profile::MirroredXiN { level },
        }
    }

    /// Plateau sides are held at the boundary to mimic infinite extent.
    pub fn boundary(&self) -> (Boundary, Boundary) {
        match self {
            UpperKind::Full => (Boundary::Held, Boundary::Held),
            UpperKind::Left => (Boundary::Held, Boundary::Absorbing),
            UpperKind::Right => (Boundary::Absorbing, Boundary::Held),
        }
    }
}

/// Simulate one field started from the level-N approximant profile up to
/// time T. Its law approximates the corresponding upper measure from below
/// in N.
#[allow(clippy::too_many_arguments)]
pub fn upper_measure_sample(
    t_end: f64,
    level: f64,
    kind: UpperKind,
    c: &Coefficients,
    p: &StepParams,
    grid: &GridSpec,
    seed: u64,
    replicate: u32,
) -> Result<Field, CouplingError> {
    let u0 = Field::materialize(&kind.profile(level), grid)
        .expect("approximant profiles have no compact support to violate");
    let p = StepParams::new(p.dt(), p.dx(), kind.boundary())?;
    let stream = NoiseStream::new(seed, replicate, 0);
    let (field, _) = crate::integrator::simulate_final(&u0, c, &p, t_end, stream)?;
    Ok(field)
}
