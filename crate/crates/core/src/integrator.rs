//! Explicit time stepping for the generalized branching-noise equation
//!
//! ```text
//! ∂_t u = ∂_xx u + α + θ u − β u − γ u² + u^{1/2} dW
//! ```
//!
//! on a uniform grid. Each step first applies the deterministic part
//! explicitly,
//!
//! ```text
//! v_j = u_j + dt [ (u_{j-1} − 2 u_j + u_{j+1})/dx² + α_j + θ u_j − β_j u_j − γ u_j² ],
//! ```
//!
//! then replaces the cell mass `m = v_j dx` by a sample of the exact
//! transition of the branching diffusion `dm = m^{1/2} dW` over `dt`: a
//! Poisson(2m/dt) number of exponential clusters of mean `dt/2`
//! (equivalently, `m + sqrt(m dt) ξ_j` plus higher cumulants; the Gaussian
//! form is used verbatim once `2m/dt ≥ 50`, where the two laws agree to
//! within the clip probability ~3e-7). In `u` units the Gaussian regime is
//! the familiar cell-average discretization `sqrt(u_j) ξ_j sqrt(dt/dx)` of
//! space-time white noise.
//!
//! Sampling the exact small-mass transition instead of clipping a Gaussian
//! matters: clipping `max(·, 0)` adds `E[(−v)⁺] ≈ sqrt(m dt / 2π)` of mass
//! per noise-dominated cell per step, which inflates the total-mass
//! martingale by an O(1) factor per unit time and lets the support spread at
//! lattice speed. The branching transition is unbiased, reaches exact zero
//! with the correct probability `e^{−2m/dt}`, and is additive over
//! independent cells, which is what the pathwise couplings rely on.
//!
//! Stepping is restricted to one cell beyond the support window, which can
//! only grow, so cost tracks the support rather than the domain.

use crate::field::Field;
use crate::rng::NoiseStream;
use std::io::{self, Write};
use thiserror::Error;

/// Values at or below this are flushed to exact zero after the deterministic
/// part of a step.
///
/// Without a flush level the discrete heat stencil drags subnormal-sized
/// values across one cell per step, so in noiseless runs the strict-positivity
/// front would travel at `dx/dt` instead of tracking the solution. Flushing
/// pins the numerical front to a fixed level set of the profile tail; the
/// level is chosen so that the tail down to the flush level establishes
/// within t ≈ 1 and the front marker then translates at the wave speed. The
/// mass removed per step is below any tolerance used here. Noisy runs are
/// barely affected: the branching transition kills cells this small with
/// probability `1 − 2m/dt ≈ 1` in a single step anyway.
pub const FLUSH_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("unstable step: dt = {dt} exceeds dx²/2 = {limit}")]
    Unstable { dt: f64, limit: f64 },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("coefficient {name} must be non-negative, got {value}")]
    NegativeCoefficient { name: &'static str, value: f64 },
    #[error("noise slice has {got} draws, active range needs {expected}")]
    NoiseLength { expected: usize, got: usize },
    #[error("coefficient field does not match the state grid")]
    CoefficientGridMismatch,
}

/// Per-side boundary handling. `Absorbing` reads a zero ghost value;
/// `Held` pins the edge cell to its initial value and uses it as the ghost,
/// mimicking a profile that continues as a constant plateau outside the
/// domain (kink and half-line initial data).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Boundary {
    Absorbing,
    Held,
}

/// Grid/time discretization shared by every field in a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    dt: f64,
    dx: f64,
    boundary: (Boundary, Boundary),
}

impl StepParams {
    pub fn new(dt: f64, dx: f64, boundary: (Boundary, Boundary)) -> Result<Self, StepError> {
        if dx.is_nan() || dx <= 0.0 {
            return Err(StepError::NonPositive {
                name: "dx",
                value: dx,
            });
        }
        if dt.is_nan() || dt <= 0.0 {
            return Err(StepError::NonPositive {
                name: "dt",
                value: dt,
            });
        }
        let limit = dx * dx / 2.0;
        if dt > limit {
            return Err(StepError::Unstable { dt, limit });
        }
        Ok(Self { dt, dx, boundary })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn boundary(&self) -> (Boundary, Boundary) {
        self.boundary
    }
}

/// Static coefficients of the generalized equation. The couplings drive the
/// time-dependent immigration/annihilation variants internally.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub theta: f64,
    pub alpha: Option<Field>,
    pub beta: Option<Field>,
    pub gamma: f64,
    pub noise_on: bool,
}

impl Coefficients {
    /// Core equation: θ drift, unit overcrowding, branching noise on.
    pub fn core(theta: f64) -> Self {
        Self {
            theta,
            alpha: None,
            beta: None,
            gamma: 1.0,
            noise_on: true,
        }
    }

    /// Deterministic KPP equation (noise off).
    pub fn deterministic_kpp(theta: f64) -> Self {
        Self {
            noise_on: false,
            ..Self::core(theta)
        }
    }

    /// Pure branching with drift θ: γ = 0, no immigration or annihilation.
    pub fn superprocess_mode(&self) -> Self {
        Self {
            theta: self.theta,
            alpha: None,
            beta: None,
            gamma: 0.0,
            noise_on: self.noise_on,
        }
    }

    fn validate(&self) -> Result<(), StepError> {
        if self.theta < 0.0 {
            return Err(StepError::NegativeCoefficient {
                name: "theta",
                value: self.theta,
            });
        }
        if self.gamma < 0.0 {
            return Err(StepError::NegativeCoefficient {
                name: "gamma",
                value: self.gamma,
            });
        }
        Ok(())
    }
}

/// Sampling plan for a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Spacing of scalar-observable samples; `INFINITY` samples only the
    /// initial and final instants.
    pub sample_dt: f64,
    /// Times at which full field snapshots are stored (snapped to steps).
    pub snapshot_times: Vec<f64>,
}

impl Schedule {
    pub fn every(sample_dt: f64) -> Self {
        Self {
            sample_dt,
            snapshot_times: Vec::new(),
        }
    }

    pub fn endpoints_only() -> Self {
        Self::every(f64::INFINITY)
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }
}

/// One sampled row of scalar observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsRow {
    pub t: f64,
    pub mass: f64,
    pub r0: f64,
    pub l0: f64,
    pub r1: f64,
}

/// Time-indexed record of a single simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<ObsRow>,
    pub snapshots: Vec<(f64, Field)>,
    pub extinction_time: Option<f64>,
}

impl Trajectory {
    /// CSV `t,mass,R0,L0,R1`; infinite sentinels render as `-inf` / `inf`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,mass,R0,L0,R1")?;
        for row in &self.rows {
            writeln!(w, "{},{},{},{},{}", row.t, row.mass, row.r0, row.l0, row.r1)?;
        }
        Ok(())
    }
}

enum NoiseSource<'a> {
    Off,
    Stream,
    Draws(&'a [f64]),
}

/// Exact one-step transition of the cell-mass branching diffusion
/// `dm = m^{1/2} dW`: Laplace transform `exp(−λm / (1 + λ dt/2))`, realized
/// as a Poisson(2m/dt) sum of Exp(dt/2) clusters. Zero offspring means the
/// cell dies, with the exact probability `e^{−2m/dt}`.
fn branch_mass(m: f64, dt: f64, stream: &NoiseStream, step: u32, cell: u32) -> f64 {
    let lambda = 2.0 * m / dt;
    if lambda >= 50.0 {
        // Bulk regime: the transition is normal to within O(λ^{-1/2}) and
        // the clip below fires with probability ~3e-7.
        let z = stream.normal(step, cell);
        (m + (m * dt).sqrt() * z).max(0.0)
    } else {
        let mut rng = stream.cell_rng(step, cell);
        let n = poisson_by_inversion(lambda, rng.uniform());
        if n == 0 {
            0.0
        } else if n < 30 {
            let mut sum = 0.0;
            for _ in 0..n {
                sum -= rng.uniform().ln();
            }
            0.5 * dt * sum
        } else {
            // Gamma(n) for n ≥ 30 is normal to better accuracy than the
            // Poisson tail that produced it.
            let nf = f64::from(n);
            (0.5 * dt * (nf + nf.sqrt() * rng.normal())).max(0.0)
        }
    }
}

/// Sequential-search Poisson inversion; one uniform, bounded work for the
/// λ < 50 range it is used in.
fn poisson_by_inversion(lambda: f64, u: f64) -> u32 {
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut k = 0u32;
    while u > cdf && k < 500 {
        k += 1;
        p *= lambda / f64::from(k);
        cdf += p;
    }
    k
}

#[inline]
fn flush(v: f64) -> f64 {
    if v > FLUSH_FLOOR {
        v
    } else {
        0.0
    }
}

/// Mutable simulation state. Public operations wrap this; the estimator and
/// coupling passes drive it directly to avoid storing snapshots.
pub(crate) struct SimState {
    dx: f64,
    dt: f64,
    origin: f64,
    n: usize,
    boundary: (Boundary, Boundary),
    held: (f64, f64),
    values: Vec<f64>,
    scratch: Vec<f64>,
    /// Support window; never shrinks while the field is alive.
    window: Option<(usize, usize)>,
    step_index: u32,
    noise: NoiseStream,
    extinction_step: Option<u32>,
}

impl SimState {
    pub(crate) fn new(u0: &Field, p: &StepParams, noise: NoiseStream) -> Self {
        let n = u0.n_cells();
        let values = u0.values().to_vec();
        let held = (values[0], values[n - 1]);
        let window = u0.window();
        Self {
            dx: p.dx,
            dt: p.dt,
            origin: u0.origin(),
            n,
            boundary: p.boundary,
            held,
            values,
            scratch: vec![0.0; n],
            window,
            step_index: 0,
            noise,
            extinction_step: if window.is_none() { Some(0) } else { None },
        }
    }

    pub(crate) fn time(&self) -> f64 {
        f64::from(self.step_index) * self.dt
    }

    pub(crate) fn step_index(&self) -> u32 {
        self.step_index
    }

    pub(crate) fn dx(&self) -> f64 {
        self.dx
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn window(&self) -> Option<(usize, usize)> {
        self.window
    }

    pub(crate) fn x(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.dx
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.window.is_none()
    }

    pub(crate) fn extinction_time(&self) -> Option<f64> {
        self.extinction_step.map(|s| f64::from(s) * self.dt)
    }

    pub(crate) fn field(&self) -> Field {
        Field::from_clipped(self.dx, self.origin, self.values.clone())
    }

    pub(crate) fn mass(&self) -> f64 {
        match self.window {
            Some((lo, hi)) => self.dx * self.values[lo..=hi].iter().sum::<f64>(),
            None => 0.0,
        }
    }

    fn minimal_window(&self) -> Option<(usize, usize)> {
        let (lo, hi) = self.window?;
        let first = self.values[lo..=hi].iter().position(|&v| v > 0.0)?;
        let last = self.values[lo..=hi].iter().rposition(|&v| v > 0.0)?;
        Some((lo + first, lo + last))
    }

    /// Rightmost strictly positive cell coordinate, `-∞` when extinct.
    pub(crate) fn r0(&self) -> f64 {
        match self.minimal_window() {
            Some((_, hi)) => self.x(hi),
            None => f64::NEG_INFINITY,
        }
    }

    /// Index of the rightmost strictly positive cell.
    pub(crate) fn front_index(&self) -> Option<usize> {
        self.minimal_window().map(|(_, hi)| hi)
    }

    pub(crate) fn observe(&self) -> ObsRow {
        let t = self.time();
        match self.minimal_window() {
            Some((lo, hi)) => ObsRow {
                t,
                mass: self.mass(),
                r0: self.x(hi),
                l0: self.x(lo),
                r1: self.r1(lo, hi),
            },
            None => ObsRow {
                t,
                mass: 0.0,
                r0: f64::NEG_INFINITY,
                l0: f64::INFINITY,
                r1: f64::NEG_INFINITY,
            },
        }
    }

    /// `ln dx Σ e^{x_j} u_j` in log space (fronts far right stay finite).
    fn r1(&self, lo: usize, hi: usize) -> f64 {
        let mut peak = f64::NEG_INFINITY;
        for j in lo..=hi {
            let v = self.values[j];
            if v > 0.0 {
                peak = peak.max(self.x(j) + v.ln());
            }
        }
        if peak == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let mut sum = 0.0;
        for j in lo..=hi {
            let v = self.values[j];
            if v > 0.0 {
                sum += (self.x(j) + v.ln() - peak).exp();
            }
        }
        peak + sum.ln() + self.dx.ln()
    }

    /// Advance one step. `alpha` and `beta` are per-cell rates for this step;
    /// `extra_active` widens the update range to cover an immigration source
    /// that is positive where this field is still zero.
    pub(crate) fn advance<A, B>(
        &mut self,
        theta: f64,
        gamma: f64,
        noise_on: bool,
        alpha: A,
        beta: B,
        extra_active: Option<(usize, usize)>,
    ) where
        A: Fn(usize) -> f64,
        B: Fn(usize) -> f64,
    {
        let own = self
            .window
            .map(|(lo, hi)| (lo.saturating_sub(1), (hi + 1).min(self.n - 1)));
        let active = match (own, extra_active) {
            (Some((a, b)), Some((c, d))) => (a.min(c), b.max(d.min(self.n - 1))),
            (Some(w), None) => w,
            (None, Some((c, d))) => (c, d.min(self.n - 1)),
            (None, None) => {
                self.step_index += 1;
                return;
            }
        };
        let source = if noise_on {
            NoiseSource::Stream
        } else {
            NoiseSource::Off
        };
        self.kernel(theta, gamma, alpha, beta, active, source);
    }

    /// Shared update kernel; window bookkeeping keeps the support hull
    /// non-shrinking so stale scratch cells outside it are provably zero.
    fn kernel<A, B>(
        &mut self,
        theta: f64,
        gamma: f64,
        alpha: A,
        beta: B,
        active: (usize, usize),
        source: NoiseSource<'_>,
    ) where
        A: Fn(usize) -> f64,
        B: Fn(usize) -> f64,
    {
        let (alo, ahi) = active;
        let inv_dx2 = 1.0 / (self.dx * self.dx);
        let noise_scale = (self.dt / self.dx).sqrt();
        let stream = self.noise;
        let step = self.step_index;
        let mut first_pos = usize::MAX;
        let mut last_pos = 0usize;
        let mut any_pos = false;

        for j in alo..=ahi {
            let u = self.values[j];
            let left = if j == 0 {
                match self.boundary.0 {
                    Boundary::Absorbing => 0.0,
                    Boundary::Held => self.held.0,
                }
            } else {
                self.values[j - 1]
            };
            let right = if j == self.n - 1 {
                match self.boundary.1 {
                    Boundary::Absorbing => 0.0,
                    Boundary::Held => self.held.1,
                }
            } else {
                self.values[j + 1]
            };
            let laplacian = (left - 2.0 * u + right) * inv_dx2;
            let drift = laplacian + alpha(j) + (theta - beta(j)) * u - gamma * u * u;
            let drifted = u + self.dt * drift;
            let v = match source {
                NoiseSource::Off => flush(drifted),
                NoiseSource::Stream => {
                    let v_det = flush(drifted);
                    if v_det > 0.0 {
                        branch_mass(v_det * self.dx, self.dt, &stream, step, j as u32) / self.dx
                    } else {
                        0.0
                    }
                }
                NoiseSource::Draws(d) => {
                    flush(drifted + u.max(0.0).sqrt() * d[j - alo] * noise_scale)
                }
            };
            self.scratch[j] = v;
            if v > 0.0 {
                any_pos = true;
                first_pos = first_pos.min(j);
                last_pos = last_pos.max(j);
            }
        }

        // Held sides pin the edge cell to its initial value.
        if self.boundary.0 == Boundary::Held && alo == 0 {
            self.scratch[0] = self.held.0;
            if self.held.0 > 0.0 {
                any_pos = true;
                first_pos = 0;
            }
        }
        if self.boundary.1 == Boundary::Held && ahi == self.n - 1 {
            self.scratch[self.n - 1] = self.held.1;
            if self.held.1 > 0.0 {
                any_pos = true;
                last_pos = self.n - 1;
            }
        }

        std::mem::swap(&mut self.values, &mut self.scratch);
        self.step_index += 1;

        if any_pos {
            self.window = Some(match self.window {
                Some((lo, hi)) => (lo.min(first_pos), hi.max(last_pos)),
                None => (first_pos, last_pos),
            });
        } else {
            self.window = None;
            if self.extinction_step.is_none() {
                self.extinction_step = Some(self.step_index);
            }
        }
    }

    /// Plain advance under static coefficients.
    pub(crate) fn advance_static(&mut self, c: &Coefficients) {
        let alpha = c.alpha.as_ref().map(|f| f.values());
        let beta = c.beta.as_ref().map(|f| f.values());
        let extra = c.alpha.as_ref().and_then(|f| f.window());
        self.advance(
            c.theta,
            c.gamma,
            c.noise_on,
            |j| alpha.map_or(0.0, |a| a[j]),
            |j| beta.map_or(0.0, |b| b[j]),
            extra,
        );
    }
}

fn check_static_grids(u0: &Field, c: &Coefficients) -> Result<(), StepError> {
    for f in [&c.alpha, &c.beta].into_iter().flatten() {
        if f.n_cells() != u0.n_cells() || f.dx() != u0.dx() || f.origin() != u0.origin() {
            return Err(StepError::CoefficientGridMismatch);
        }
    }
    Ok(())
}

/// Single explicit step with caller-supplied standard normal draws, one per
/// active cell (support window widened by one, clamped to the domain). The
/// noise enters as the Gaussian cell-average form
/// `sqrt(max(u_j, 0)) ξ_j sqrt(dt/dx)` followed by clipping at zero;
/// full simulations use the exact branching transition instead, which this
/// form approximates for cells holding many noise quanta.
pub fn step(
    u: &Field,
    c: &Coefficients,
    p: &StepParams,
    noise: &[f64],
) -> Result<Field, StepError> {
    c.validate()?;
    check_static_grids(u, c)?;
    let Some((lo, hi)) = u.window() else {
        if !noise.is_empty() {
            return Err(StepError::NoiseLength {
                expected: 0,
                got: noise.len(),
            });
        }
        return Ok(u.clone());
    };
    let alo = lo.saturating_sub(1);
    let ahi = (hi + 1).min(u.n_cells() - 1);
    let expected = ahi - alo + 1;
    if c.noise_on && noise.len() != expected {
        return Err(StepError::NoiseLength {
            expected,
            got: noise.len(),
        });
    }
    let alpha = c.alpha.as_ref().map(|f| f.values().to_vec());
    let beta = c.beta.as_ref().map(|f| f.values().to_vec());
    let mut state = SimState::new(u, p, NoiseStream::new(0, 0, 0));
    let source = if c.noise_on {
        NoiseSource::Draws(noise)
    } else {
        NoiseSource::Off
    };
    state.kernel(
        c.theta,
        c.gamma,
        |j| alpha.as_ref().map_or(0.0, |a| a[j]),
        |j| beta.as_ref().map_or(0.0, |b| b[j]),
        (alo, ahi),
        source,
    );
    Ok(state.field())
}

pub(crate) fn resolve_steps(horizon: f64, dt: f64) -> u32 {
    (horizon / dt).round() as u32
}

fn sample_stride(schedule: &Schedule, dt: f64) -> u32 {
    if schedule.sample_dt.is_finite() {
        ((schedule.sample_dt / dt).round() as u32).max(1)
    } else {
        u32::MAX
    }
}

/// Run a full simulation, invoking `on_sample` at every scheduled instant
/// (including t = 0 and the final step). Returns the extinction time, if any.
pub(crate) fn simulate_each_sample<F>(
    u0: &Field,
    c: &Coefficients,
    p: &StepParams,
    horizon: f64,
    schedule: &Schedule,
    stream: NoiseStream,
    mut on_sample: F,
) -> Result<Option<f64>, StepError>
where
    F: FnMut(&SimState),
{
    c.validate()?;
    check_static_grids(u0, c)?;
    let n_steps = resolve_steps(horizon, p.dt);
    let stride = sample_stride(schedule, p.dt);
    let mut state = SimState::new(u0, p, stream);
    on_sample(&state);
    for step in 1..=n_steps {
        if state.is_zero() {
            // Zero is absorbing: stop stepping, but keep reporting the
            // scheduled instants so samplers see the zero tail.
            state.step_index = step;
        } else {
            state.advance_static(c);
        }
        if step % stride == 0 || step == n_steps {
            on_sample(&state);
        }
    }
    Ok(state.extinction_time())
}

/// Simulate and collect scalar observables (and any requested snapshots)
/// into a `Trajectory`.
pub fn simulate(
    u0: &Field,
    c: &Coefficients,
    p: &StepParams,
    horizon: f64,
    schedule: &Schedule,
    stream: NoiseStream,
) -> Result<Trajectory, StepError> {
    let mut snapshot_steps: Vec<u32> = schedule
        .snapshot_times
        .iter()
        .map(|&t| resolve_steps(t, p.dt))
        .collect();
    snapshot_steps.sort_unstable();
    snapshot_steps.dedup();

    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut cursor = 0usize;
    let extinction_time = simulate_each_sample(u0, c, p, horizon, schedule, stream, |state| {
        rows.push(state.observe());
        while cursor < snapshot_steps.len() && snapshot_steps[cursor] <= state.step_index {
            snapshots.push((state.time(), state.field()));
            cursor += 1;
        }
    })?;
    Ok(Trajectory {
        rows,
        snapshots,
        extinction_time,
    })
}

/// Simulate without sampling and return the final field and extinction time.
pub fn simulate_final(
    u0: &Field,
    c: &Coefficients,
    p: &StepParams,
    horizon: f64,
    stream: NoiseStream,
) -> Result<(Field, Option<f64>), StepError> {
    c.validate()?;
    check_static_grids(u0, c)?;
    let n_steps = resolve_steps(horizon, p.dt);
    let mut state = SimState::new(u0, p, stream);
    for _ in 1..=n_steps {
        if state.is_zero() {
            break;
        }
        state.advance_static(c);
    }
    Ok((state.field(), state.extinction_time()))
}
