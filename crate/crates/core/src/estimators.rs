//! Monte Carlo functionals over replicate ensembles: Laplace functionals and
//! duality gaps, extinction probabilities with the exact pure-branching
//! comparator, survival-conditioned front-shifted profiles, wave speed,
//! recurrence fractions and growth diagnostics.

use crate::ensemble::run_replicates;
use crate::field::Field;
use crate::integrator::{
    simulate, simulate_each_sample, simulate_final, Coefficients, Schedule, StepError, StepParams,
    Trajectory,
};
use crate::rng::NoiseStream;
use serde::Serialize;
use std::io::{self, Write};
use thiserror::Error;

/// 95% normal quantile used for confidence half-widths.
pub const Z95: f64 = 1.96;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("no replicate survived to the conditioning horizon")]
    NoSurvivors,
    #[error("path went extinct inside the fit window")]
    ExtinctionInsideFitWindow,
    #[error("need at least two samples in the fit window")]
    TooFewSamples,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// A Monte Carlo scalar: mean, 95% half-width, replicate counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub n: u32,
    pub n_conditioned: Option<u32>,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self, EstimatorError> {
        if samples.is_empty() {
            return Err(EstimatorError::EmptyEnsemble);
        }
        let n = samples.len() as u32;
        let mean = samples.iter().sum::<f64>() / f64::from(n);
        let half_width = if n >= 2 {
            let var =
                samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / f64::from(n - 1);
            Z95 * (var / f64::from(n)).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            mean,
            half_width,
            n,
            n_conditioned: None,
        })
    }

    /// Indicator-mean estimate. At the boundary `p ∈ {0, 1}` the normal
    /// half-width collapses to zero, so the Wilson interval supplies it.
    pub fn indicator(successes: u32, n: u32) -> Result<Self, EstimatorError> {
        if n == 0 {
            return Err(EstimatorError::EmptyEnsemble);
        }
        let p = f64::from(successes) / f64::from(n);
        let half_width = if successes == 0 || successes == n {
            Z95 * Z95 / (f64::from(n) + Z95 * Z95)
        } else {
            Z95 * (p * (1.0 - p) / f64::from(n)).sqrt()
        };
        Ok(Self {
            mean: p,
            half_width,
            n,
            n_conditioned: None,
        })
    }

    pub fn with_conditioned(mut self, n_conditioned: u32) -> Self {
        self.n_conditioned = Some(n_conditioned);
        self
    }

    pub fn standard_error(&self) -> f64 {
        self.half_width / Z95
    }
}

/// CSV `name,mean,half_width,n,n_conditioned` (empty cell when not
/// conditioned).
pub fn write_estimates_csv<W: Write>(w: &mut W, rows: &[(&str, Estimate)]) -> io::Result<()> {
    writeln!(w, "name,mean,half_width,n,n_conditioned")?;
    for (name, e) in rows {
        let cond = e.n_conditioned.map_or(String::new(), |c| c.to_string());
        writeln!(w, "{name},{},{},{},{cond}", e.mean, e.half_width, e.n)?;
    }
    Ok(())
}

/// Sample mean and CI of `exp(−2 ⟨u, g⟩)` over an ensemble of fields.
pub fn laplace(ensemble: &[Field], g: &Field) -> Result<Estimate, EstimatorError> {
    if ensemble.is_empty() {
        return Err(EstimatorError::EmptyEnsemble);
    }
    let samples: Vec<f64> = ensemble
        .iter()
        .map(|u| (-2.0 * u.inner_product_field(g)).exp())
        .collect();
    Estimate::from_samples(&samples)
}

/// Both sides of the self-duality identity: the Laplace functional of `u_t`
/// tested against `v0`, and of `v_t` tested against `u0`, from independent
/// ensembles. Their confidence intervals should overlap.
#[allow(clippy::too_many_arguments)]
pub fn self_duality_gap(
    u0: &Field,
    v0: &Field,
    t: f64,
    c: &Coefficients,
    p: &StepParams,
    reps: u32,
    seed: u64,
    parallelism: usize,
) -> Result<(Estimate, Estimate), EstimatorError> {
    if reps == 0 {
        return Err(EstimatorError::EmptyEnsemble);
    }
    if let Some((lo, hi)) = v0.window() {
        if lo == 0 || hi == v0.n_cells() - 1 {
            return Err(EstimatorError::InvalidParameter(
                "v0 must be compactly supported inside the domain",
            ));
        }
    }
    let forward: Vec<f64> = run_replicates(reps, parallelism, |rep| {
        let (u_t, _) =
            simulate_final(u0, c, p, t, NoiseStream::new(seed, rep, 0)).expect("validated params");
        (-2.0 * u_t.inner_product_field(v0)).exp()
    });
    let backward: Vec<f64> = run_replicates(reps, parallelism, |rep| {
        let (v_t, _) =
            simulate_final(v0, c, p, t, NoiseStream::new(seed, rep, 1)).expect("validated params");
        (-2.0 * v_t.inner_product_field(u0)).exp()
    });
    Ok((
        Estimate::from_samples(&forward)?,
        Estimate::from_samples(&backward)?,
    ))
}

/// Extinction times of `reps` independent paths run to `horizon`
/// (`None` = still alive at the horizon).
pub fn extinction_times(
    u0: &Field,
    c: &Coefficients,
    p: &StepParams,
    horizon: f64,
    reps: u32,
    seed: u64,
    parallelism: usize,
) -> Result<Vec<Option<f64>>, EstimatorError> {
    if reps == 0 {
        return Err(EstimatorError::EmptyEnsemble);
    }
    Ok(run_replicates(reps, parallelism, |rep| {
        let (_, ext) = simulate_final(u0, c, p, horizon, NoiseStream::new(seed, rep, 0))
            .expect("validated params");
        ext
    }))
}

/// Fraction of recorded extinction times at or before `t`.
pub fn extinction_prob_from_times(
    times: &[Option<f64>],
    t: f64,
) -> Result<Estimate, EstimatorError> {
    let n = times.len() as u32;
    let hits = times.iter().filter(|e| e.is_some_and(|te| te <= t)).count() as u32;
    Estimate::indicator(hits, n)
}

/// Monte Carlo `P(τ ≤ t)`.
pub fn extinction_prob(
    u0: &Field,
    c: &Coefficients,
    p: &StepParams,
    t: f64,
    reps: u32,
    seed: u64,
    parallelism: usize,
) -> Result<Estimate, EstimatorError> {
    let times = extinction_times(u0, c, p, t, reps, seed, parallelism)?;
    extinction_prob_from_times(&times, t)
}

/// Closed-form extinction probability of the pure branching dominator:
/// `exp(−2 θ m / (1 − e^{−θ t}))` for initial mass `m`.
pub fn superprocess_extinction_exact(theta: f64, mass: f64, t: f64) -> Result<f64, EstimatorError> {
    if theta.is_nan() || theta <= 0.0 {
        return Err(EstimatorError::InvalidParameter("theta must be positive"));
    }
    if t.is_nan() || t <= 0.0 {
        return Err(EstimatorError::InvalidParameter("t must be positive"));
    }
    if mass < 0.0 {
        return Err(EstimatorError::InvalidParameter("mass must be >= 0"));
    }
    Ok((-2.0 * theta * mass / (1.0 - (-theta * t).exp())).exp())
}

/// Survival-conditioned sub-ensemble of trajectories.
#[derive(Debug)]
pub struct ConditionedEnsemble {
    pub survivors: Vec<Trajectory>,
    /// Survival fraction with `n_conditioned` = survivor count.
    pub survival: Estimate,
}

/// Run `reps` paths from `g0` and keep those alive at `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_ensemble(
    g0: &Field,
    c: &Coefficients,
    p: &StepParams,
    horizon: f64,
    schedule: &Schedule,
    reps: u32,
    seed: u64,
    parallelism: usize,
) -> Result<ConditionedEnsemble, EstimatorError> {
    if reps == 0 {
        return Err(EstimatorError::EmptyEnsemble);
    }
    let runs: Vec<Trajectory> = run_replicates(reps, parallelism, |rep| {
        simulate(g0, c, p, horizon, schedule, NoiseStream::new(seed, rep, 0))
            .expect("validated params")
    });
    let survivors: Vec<Trajectory> = runs
        .into_iter()
        .filter(|t| t.extinction_time.is_none())
        .collect();
    if survivors.is_empty() {
        return Err(EstimatorError::NoSurvivors);
    }
    let n_surv = survivors.len() as u32;
    let survival = Estimate::indicator(n_surv, reps)?.with_conditioned(n_surv);
    Ok(ConditionedEnsemble {
        survivors,
        survival,
    })
}

/// Survival-conditioned, front-shifted, time-averaged profile: the sampled
/// surrogate of `T^{-1} ∫_0^T u_s(· + R0(s)) ds` with the ensemble mean and
/// per-cell standard error.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileAverage {
    pub dx: f64,
    /// Offsets from the front, `k dx` for `k` in `-left..=right`.
    pub offsets: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub t_avg: f64,
    pub horizon: f64,
    pub n: u32,
    pub n_conditioned: u32,
}

impl ProfileAverage {
    /// Mean profile as a field with the front cell at x = 0.
    pub fn mean_field(&self) -> Field {
        Field::from_clipped(self.dx, self.offsets[0], self.mean.clone())
    }

    /// CSV `x,mean,stderr`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "x,mean,stderr")?;
        for ((x, m), s) in self.offsets.iter().zip(&self.mean).zip(&self.stderr) {
            writeln!(w, "{x},{m},{s}")?;
        }
        Ok(())
    }

    /// JSON sidecar with the averaging parameters and replicate counts.
    pub fn manifest_json(&self) -> String {
        serde_json::json!({
            "dx": self.dx,
            "t_avg": self.t_avg,
            "horizon": self.horizon,
            "n": self.n,
            "n_conditioned": self.n_conditioned,
        })
        .to_string()
    }
}

/// Accumulate the front-shifted time average for each surviving replicate,
/// then average across survivors.
///
/// Conditioning on survival uses `{τ > horizon}` with `horizon ≥ t_avg`; the
/// time average runs over scheduled samples in `[0, t_avg]`.
#[allow(clippy::too_many_arguments)]
pub fn nu_t_profile(
    g0: &Field,
    c: &Coefficients,
    p: &StepParams,
    t_avg: f64,
    horizon: f64,
    schedule: &Schedule,
    reps: u32,
    seed: u64,
    parallelism: usize,
    cells_left: usize,
    cells_right: usize,
) -> Result<ProfileAverage, EstimatorError> {
    if reps == 0 {
        return Err(EstimatorError::EmptyEnsemble);
    }
    if horizon < t_avg {
        return Err(EstimatorError::InvalidParameter("horizon must be >= t_avg"));
    }
    let width = cells_left + cells_right + 1;
    let t_cut = t_avg + 0.5 * p.dt();

    let per_rep: Vec<Option<Vec<f64>>> = run_replicates(reps, parallelism, |rep| {
        let mut acc = vec![0.0f64; width];
        let mut count = 0u32;
        let ext = simulate_each_sample(
            g0,
            c,
            p,
            horizon,
            schedule,
            NoiseStream::new(seed, rep, 0),
            |state| {
                if state.time() > t_cut {
                    return;
                }
                let Some(front) = state.front_index() else {
                    return;
                };
                count += 1;
                let n = state.values().len();
                for (k, slot) in acc.iter_mut().enumerate() {
                    let j = front as isize + k as isize - cells_left as isize;
                    if j >= 0 && (j as usize) < n {
                        *slot += state.values()[j as usize];
                    }
                }
            },
        )
        .expect("validated params");
        if ext.is_none() && count > 0 {
            for slot in &mut acc {
                *slot /= f64::from(count);
            }
            Some(acc)
        } else {
            None
        }
    });

    let profiles: Vec<Vec<f64>> = per_rep.into_iter().flatten().collect();
    if profiles.is_empty() {
        return Err(EstimatorError::NoSurvivors);
    }
    let n_surv = profiles.len() as u32;
    let mut mean = vec![0.0f64; width];
    for prof in &profiles {
        for (m, v) in mean.iter_mut().zip(prof) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= f64::from(n_surv);
    }
    let mut stderr = vec![0.0f64; width];
    if n_surv >= 2 {
        for prof in &profiles {
            for ((s, v), m) in stderr.iter_mut().zip(prof).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut stderr {
            *s = (*s / f64::from(n_surv - 1) / f64::from(n_surv)).sqrt();
        }
    }
    let offsets = (0..width)
        .map(|k| (k as isize - cells_left as isize) as f64 * p.dx())
        .collect();
    Ok(ProfileAverage {
        dx: p.dx(),
        offsets,
        mean,
        stderr,
        t_avg,
        horizon,
        n: reps,
        n_conditioned: n_surv,
    })
}

/// Least-squares slope of `R0(t)` over samples with `t` in the window.
pub fn wave_speed(traj: &Trajectory, window: (f64, f64)) -> Result<f64, EstimatorError> {
    let pts: Vec<(f64, f64)> = traj
        .rows
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .map(|r| (r.t, r.r0))
        .collect();
    if pts.iter().any(|(_, r0)| !r0.is_finite()) {
        return Err(EstimatorError::ExtinctionInsideFitWindow);
    }
    if pts.len() < 2 {
        return Err(EstimatorError::TooFewSamples);
    }
    Ok(lsq_slope(&pts))
}

fn lsq_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let tbar = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - tbar) * (p.1 - ybar)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - tbar) * (p.0 - tbar)).sum();
    num / den
}

/// Among survivors, the fraction whose support charges the open interval `b`
/// at some sampled time `t ≥ revisit_start`.
#[allow(clippy::too_many_arguments)]
pub fn recurrence_fraction(
    g0: &Field,
    b: (f64, f64),
    c: &Coefficients,
    p: &StepParams,
    horizon: f64,
    revisit_start: f64,
    schedule: &Schedule,
    reps: u32,
    seed: u64,
    parallelism: usize,
) -> Result<Estimate, EstimatorError> {
    if reps == 0 {
        return Err(EstimatorError::EmptyEnsemble);
    }
    if b.0 >= b.1 {
        return Err(EstimatorError::InvalidParameter(
            "interval must satisfy b_lo < b_hi",
        ));
    }
    if revisit_start > horizon {
        return Err(EstimatorError::InvalidParameter(
            "revisit_start must be <= horizon",
        ));
    }
    let t_start = revisit_start - 0.5 * p.dt();

    let outcomes: Vec<Option<bool>> = run_replicates(reps, parallelism, |rep| {
        let mut hit = false;
        let ext = simulate_each_sample(
            g0,
            c,
            p,
            horizon,
            schedule,
            NoiseStream::new(seed, rep, 0),
            |state| {
                if hit || state.time() < t_start {
                    return;
                }
                if let Some((lo, hi)) = state.window() {
                    for j in lo..=hi {
                        let x = state.x(j);
                        if x > b.0 && x < b.1 && state.values()[j] > 0.0 {
                            hit = true;
                            return;
                        }
                    }
                }
            },
        )
        .expect("validated params");
        ext.is_none().then_some(hit)
    });

    let survivors: Vec<bool> = outcomes.into_iter().flatten().collect();
    if survivors.is_empty() {
        return Err(EstimatorError::NoSurvivors);
    }
    let hits = survivors.iter().filter(|&&h| h).count() as u32;
    let n_surv = survivors.len() as u32;
    Ok(Estimate::indicator(hits, n_surv)?.with_conditioned(n_surv))
}

/// Per-sample `(t, ⟨u_t, 1⟩, R0(t) − L0(t))`; the span is `-∞` after
/// extinction.
pub fn mass_and_span(traj: &Trajectory) -> Vec<(f64, f64, f64)> {
    traj.rows
        .iter()
        .map(|r| {
            let span = if r.r0.is_finite() {
                r.r0 - r.l0
            } else {
                f64::NEG_INFINITY
            };
            (r.t, r.mass, span)
        })
        .collect()
}

/// Table of `Ê[0 ∨ R0(u_T)]` for the left-upper approximant over a grid of
/// horizons, with a log-log slope of the means.
#[derive(Debug, Clone, Serialize)]
pub struct FrontScalingTable {
    pub rows: Vec<(f64, Estimate)>,
    pub loglog_slope: f64,
}

impl FrontScalingTable {
    /// CSV `T,mean,half_width,n`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "T,mean,half_width,n")?;
        for (t, e) in &self.rows {
            writeln!(w, "{t},{},{},{}", e.mean, e.half_width, e.n)?;
        }
        Ok(())
    }
}

/// Sample `0 ∨ R0` of the left-upper approximant (started from ζ_N, held on
/// the left) at each horizon in `t_grid ⊂ (0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn front_scaling_probe(
    theta: f64,
    t_grid: &[f64],
    level: f64,
    p: &StepParams,
    grid: &crate::field::GridSpec,
    reps: u32,
    seed: u64,
    parallelism: usize,
) -> Result<FrontScalingTable, EstimatorError> {
    if reps == 0 {
        return Err(EstimatorError::EmptyEnsemble);
    }
    if t_grid.is_empty() || t_grid.iter().any(|&t| t <= 0.0 || t > 1.0) {
        return Err(EstimatorError::InvalidParameter(
            "horizons must lie in (0, 1]",
        ));
    }
    let kind = crate::couplings::UpperKind::Left;
    let u0 = Field::materialize(&kind.profile(level), grid)?;
    let p = StepParams::new(p.dt(), p.dx(), kind.boundary())?;
    let c = Coefficients::core(theta);

    let mut targets: Vec<u32> = t_grid
        .iter()
        .map(|&t| crate::integrator::resolve_steps(t, p.dt()))
        .collect();
    let horizon = *t_grid
        .iter()
        .max_by(|a, b| a.partial_cmp(b).unwrap())
        .unwrap();
    let order = {
        let mut idx: Vec<usize> = (0..targets.len()).collect();
        idx.sort_by_key(|&i| targets[i]);
        idx
    };
    targets.sort_unstable();

    let samples: Vec<Vec<f64>> = run_replicates(reps, parallelism, |rep| {
        let mut vals = vec![0.0f64; targets.len()];
        let mut cursor = 0usize;
        simulate_each_sample(
            &u0,
            &c,
            &p,
            horizon,
            &Schedule::every(p.dt()),
            NoiseStream::new(seed, rep, 0),
            |state| {
                while cursor < targets.len() && targets[cursor] <= state.step_index() {
                    vals[cursor] = state.r0().max(0.0);
                    cursor += 1;
                }
            },
        )
        .expect("validated params");
        vals
    });

    let mut rows = Vec::with_capacity(targets.len());
    for (pos, &orig) in order.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s[pos]).collect();
        rows.push((t_grid[orig], Estimate::from_samples(&col)?));
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, e)| e.mean > 0.0)
        .map(|(t, e)| (t.ln(), e.mean.ln()))
        .collect();
    let loglog_slope = if fit.len() >= 2 {
        lsq_slope(&fit)
    } else {
        f64::NAN
    };
    Ok(FrontScalingTable { rows, loglog_slope })
}

impl From<crate::field::FieldError> for EstimatorError {
    fn from(_: crate::field::FieldError) -> Self {
        EstimatorError::InvalidParameter("field construction failed")
    }
}
