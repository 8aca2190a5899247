//! Subcommand runners. Each writes its CSVs plus a `manifest.json` that
//! echoes the full config and seed, which is everything needed to reproduce
//! the CSVs byte-for-byte at any parallelism width.

use crate::config::{ConfigError, RunConfig};
use kpp_core::{
    conditioned_ensemble, extinction_prob, front_scaling_probe, monotone_pair, nu_t_profile,
    recurrence_fraction, run_replicates, self_duality_gap, simulate, superprocess_extinction_exact,
    superprocess_pair, upper_measure_sample, wave_speed, write_estimates_csv, CoupledPair,
    CouplingError, Estimate, EstimatorError, Field, NoiseStream, PairKind, StepError, UpperKind,
};
use serde::Serialize;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    NoSurvivors,
    Failure(String),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::NoSurvivors => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::NoSurvivors => write!(
                f,
                "no replicate survived the conditioning horizon; raise theta, mass or reps"
            ),
            RunError::Failure(m) => write!(f, "{m}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<EstimatorError> for RunError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::NoSurvivors => RunError::NoSurvivors,
            other => RunError::Failure(other.to_string()),
        }
    }
}

impl From<StepError> for RunError {
    fn from(e: StepError) -> Self {
        RunError::Failure(e.to_string())
    }
}

impl From<CouplingError> for RunError {
    fn from(e: CouplingError) -> Self {
        RunError::Failure(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    version: &'static str,
    subcommand: &'a str,
    config: &'a RunConfig,
    master_seed: u64,
    replicates: u32,
    /// Stream ids consumed per replicate (coupled runs use two).
    streams_per_replicate: Vec<u32>,
    wallclock_seconds: f64,
    files: Vec<String>,
}

struct Emitter {
    dir: PathBuf,
    files: Vec<String>,
}

impl Emitter {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), RunError> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_csv<F>(&mut self, name: &str, f: F) -> Result<(), RunError>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn finish(
        mut self,
        subcommand: &str,
        cfg: &RunConfig,
        streams: Vec<u32>,
        started: Instant,
    ) -> Result<(), RunError> {
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config: cfg,
            master_seed: cfg.mc.seed,
            replicates: cfg.mc.reps,
            streams_per_replicate: streams,
            wallclock_seconds: started.elapsed().as_secs_f64(),
            files: self.files.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        self.write("manifest.json", json.as_bytes())?;
        Ok(())
    }
}

fn field_csv(field: &Field) -> std::io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    field.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn run(cmd: &str, cfg: &RunConfig, out_dir: &Path) -> Result<(), RunError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut em = Emitter::new(out_dir)?;
    let streams = match cmd {
        "couple" | "duality" => vec![0, 1],
        _ => vec![0],
    };
    match cmd {
        "simulate" => cmd_simulate(cfg, &mut em)?,
        "duality" => cmd_duality(cfg, &mut em)?,
        "extinction" => cmd_extinction(cfg, &mut em)?,
        "wave" => cmd_wave(cfg, &mut em)?,
        "recurrence" => cmd_recurrence(cfg, &mut em)?,
        "upper" => cmd_upper(cfg, &mut em)?,
        "couple" => cmd_couple(cfg, &mut em)?,
        other => {
            return Err(RunError::Config(ConfigError(format!(
                "unknown subcommand `{other}`"
            ))))
        }
    }
    em.finish(cmd, cfg, streams, started)
}

fn cmd_simulate(cfg: &RunConfig, em: &mut Emitter) -> Result<(), RunError> {
    let u0 = cfg.initial_field()?;
    let p = cfg.step_params()?;
    let traj = simulate(
        &u0,
        &cfg.coefficients(),
        &p,
        cfg.physical.horizon,
        &cfg.schedule(),
        NoiseStream::new(cfg.mc.seed, 0, 0),
    )?;
    em.write_csv("trajectory.csv", |buf| traj.write_csv(buf))?;
    for (i, (t, snap)) in traj.snapshots.iter().enumerate() {
        em.write(&format!("field_{i}.csv"), &field_csv(snap)?)?;
        em.write(
            &format!("field_{i}.json"),
            format!("{{\"t\":{t},\"meta\":{}}}", snap.sidecar_json()).as_bytes(),
        )?;
    }
    println!(
        "simulate: horizon {}, extinction {:?}",
        cfg.physical.horizon, traj.extinction_time
    );
    Ok(())
}

fn cmd_duality(cfg: &RunConfig, em: &mut Emitter) -> Result<(), RunError> {
    let u0 = cfg.initial_field()?;
    let v0 = cfg.extra_field()?;
    let p = cfg.step_params()?;
    let (fwd, bwd) = self_duality_gap(
        &u0,
        &v0,
        cfg.physical.t,
        &cfg.coefficients(),
        &p,
        cfg.mc.reps,
        cfg.mc.seed,
        cfg.mc.parallelism,
    )?;
    em.write_csv("estimates.csv", |buf| {
        write_estimates_csv(buf, &[("laplace_forward", fwd), ("laplace_backward", bwd)])
    })?;
    let gap = (fwd.mean - bwd.mean).abs();
    let tol = 3.0 * (fwd.standard_error() + bwd.standard_error());
    println!(
        "duality: forward {:.5}±{:.5} backward {:.5}±{:.5} gap {:.5} (3σ budget {:.5})",
        fwd.mean, fwd.half_width, bwd.mean, bwd.half_width, gap, tol
    );
    Ok(())
}

fn cmd_extinction(cfg: &RunConfig, em: &mut Emitter) -> Result<(), RunError> {
    let u0 = cfg.initial_field()?;
    let p = cfg.step_params()?;
    let c = cfg.coefficients();
    let est = extinction_prob(
        &u0,
        &c,
        &p,
        cfg.physical.t,
        cfg.mc.reps,
        cfg.mc.seed,
        cfg.mc.parallelism,
    )?;
    // The closed form is the pure-branching value: exact when gamma = 0,
    // a lower bound on extinction otherwise.
    let exact = superprocess_extinction_exact(cfg.physical.theta, u0.total_mass(), cfg.physical.t)
        .map_err(RunError::from)?;
    let exact_row = Estimate {
        mean: exact,
        half_width: 0.0,
        n: 0,
        n_conditioned: None,
    };
    em.write_csv("estimates.csv", |buf| {
        write_estimates_csv(
            buf,
            &[("extinction_mc", est), ("superprocess_exact", exact_row)],
        )
    })?;
    println!(
        "extinction: p̂ {:.5}±{:.5} vs pure-branching exact {:.5}",
        est.mean, est.half_width, exact
    );
    Ok(())
}

fn cmd_wave(cfg: &RunConfig, em: &mut Emitter) -> Result<(), RunError> {
    let g0 = cfg.initial_field()?;
    let p = cfg.step_params()?;
    let c = cfg.coefficients();
    let cells_left = (15.0 / cfg.numerics.dx).round() as usize;
    let cells_right = (2.0 / cfg.numerics.dx).round() as usize;
    let profile = nu_t_profile(
        &g0,
        &c,
        &p,
        cfg.physical.t,
        cfg.physical.horizon,
        &cfg.schedule(),
        cfg.mc.reps,
        cfg.mc.seed,
        cfg.mc.parallelism,
        cells_left,
        cells_right,
    )?;
    em.write_csv("profile.csv", |buf| profile.write_csv(buf))?;
    em.write("profile.json", profile.manifest_json().as_bytes())?;

    let ensemble = conditioned_ensemble(
        &g0,
        &c,
        &p,
        cfg.physical.horizon,
        &cfg.schedule(),
        cfg.mc.reps,
        cfg.mc.seed,
        cfg.mc.parallelism,
    )?;
    let window = (cfg.physical.fit_lo, cfg.physical.fit_hi);
    let speeds: Vec<f64> = ensemble
        .survivors
        .iter()
        .map(|t| wave_speed(t, window))
        .collect::<Result<_, _>>()?;
    let mut speed_csv = Vec::new();
    writeln!(speed_csv, "replicate,speed")?;
    for (i, s) in speeds.iter().enumerate() {
        writeln!(speed_csv, "{i},{s}")?;
    }
    em.write("speeds.csv", &speed_csv)?;
    let mean_speed =
        Estimate::from_samples(&speeds)?.with_conditioned(ensemble.survivors.len() as u32);
    em.write_csv("estimates.csv", |buf| {
        write_estimates_csv(
            buf,
            &[
                ("survival_fraction", ensemble.survival),
                ("wave_speed", mean_speed),
            ],
        )
    })?;
    println!(
        "wave: {} survivors, ν_T front at {:.3}, mean speed {:.3}±{:.3} (cap 2√θ = {:.3})",
        profile.n_conditioned,
        kpp_core::right_marker(&profile.mean_field()),
        mean_speed.mean,
        mean_speed.half_width,
        2.0 * cfg.physical.theta.sqrt()
    );
    Ok(())
}

fn cmd_recurrence(cfg: &RunConfig, em: &mut Emitter) -> Result<(), RunError> {
    let g0 = cfg.initial_field()?;
    let p = cfg.step_params()?;
    let est = recurrence_fraction(
        &g0,
        (cfg.physical.b_lo, cfg.physical.b_hi),
        &cfg.coefficients(),
        &p,
        cfg.physical.horizon,
        cfg.physical.revisit_start,
        &cfg.schedule(),
        cfg.mc.reps,
        cfg.mc.seed,
        cfg.mc.parallelism,
    )?;
    em.write_csv("estimates.csv", |buf| {
        write_estimates_csv(buf, &[("recurrence_fraction", est)])
    })?;
    println!(
        "recurrence: fraction {:.4}±{:.4} over {} survivors",
        est.mean,
        est.half_width,
        est.n_conditioned.unwrap_or(0)
    );
    Ok(())
}

fn upper_kind(cfg: &RunConfig) -> Result<UpperKind, RunError> {
    match cfg.physical.kind.as_str() {
        "full" => Ok(UpperKind::Full),
        "left" => Ok(UpperKind::Left),
        "right" => Ok(UpperKind::Right),
        other => Err(RunError::Config(ConfigError(format!(
            "physical.kind: unknown upper kind `{other}`"
        )))),
    }
}

fn cmd_upper(cfg: &RunConfig, em: &mut Emitter) -> Result<(), RunError> {
    let p = cfg.step_params()?;
    let grid = cfg.grid();
    let phi = cfg.extra_field()?;
    let kind = upper_kind(cfg)?;
    let c = cfg.coefficients();
    let theta = cfg.physical.theta;
    let t_end = cfg.physical.t;
    let bound = theta * phi.total_mass() / (1.0 - (-theta * t_end).exp());

    let mut rows: Vec<(String, Estimate)> = Vec::new();
    for &level in &cfg.physical.levels {
        let samples: Vec<f64> = run_replicates(cfg.mc.reps, cfg.mc.parallelism, |rep| {
            let f = upper_measure_sample(t_end, level, kind, &c, &p, &grid, cfg.mc.seed, rep)
                .expect("validated params");
            f.inner_product_field(&phi)
        });
        rows.push((
            format!("moment_N{level}"),
            Estimate::from_samples(&samples)?,
        ));
    }
    rows.push((
        "moment_bound".to_string(),
        Estimate {
            mean: bound,
            half_width: 0.0,
            n: 0,
            n_conditioned: None,
        },
    ));

    let table = front_scaling_probe(
        theta,
        &cfg.physical.t_grid,
        cfg.physical.level,
        &p,
        &grid,
        cfg.mc.reps,
        cfg.mc.seed,
        cfg.mc.parallelism,
    )?;
    em.write_csv("scaling.csv", |buf| table.write_csv(buf))?;
    rows.push((
        "scaling_loglog_slope".to_string(),
        Estimate {
            mean: table.loglog_slope,
            half_width: 0.0,
            n: 0,
            n_conditioned: None,
        },
    ));
    let named: Vec<(&str, Estimate)> = rows.iter().map(|(n, e)| (n.as_str(), *e)).collect();
    em.write_csv("estimates.csv", |buf| write_estimates_csv(buf, &named))?;
    for (name, e) in &rows {
        println!("upper: {name} = {:.4}±{:.4}", e.mean, e.half_width);
    }
    Ok(())
}

fn pair_for_rep(cfg: &RunConfig, rep: u32) -> Result<CoupledPair, RunError> {
    let u0 = cfg.initial_field()?;
    let p = cfg.step_params()?;
    let c = cfg.coefficients();
    match cfg.physical.kind.as_str() {
        "monotone" => {
            let extra = cfg.extra_field()?;
            let v0 = Field::from_values(
                u0.dx(),
                u0.origin(),
                u0.values()
                    .iter()
                    .zip(extra.values())
                    .map(|(a, b)| a + b)
                    .collect(),
            )
            .map_err(|e| RunError::Failure(e.to_string()))?;
            Ok(monotone_pair(
                &u0,
                &v0,
                &c,
                &p,
                cfg.physical.horizon,
                &cfg.schedule(),
                cfg.mc.seed,
                rep,
            )?)
        }
        "superprocess" => Ok(superprocess_pair(
            &u0,
            &c,
            &p,
            cfg.physical.horizon,
            &cfg.schedule(),
            cfg.mc.seed,
            rep,
        )?),
        other => Err(RunError::Config(ConfigError(format!(
            "physical.kind: unknown coupling `{other}`"
        )))),
    }
}

#[derive(Serialize)]
struct PairManifest {
    kind: PairKind,
    master_seed: u64,
    replicates: u32,
    lower_stream: u32,
    upper_stream: u32,
    /// Smallest sampled value of upper − lower over every replicate.
    min_gap: f64,
}

fn cmd_couple(cfg: &RunConfig, em: &mut Emitter) -> Result<(), RunError> {
    let gaps: Vec<Result<f64, String>> = run_replicates(cfg.mc.reps, cfg.mc.parallelism, |rep| {
        pair_for_rep(cfg, rep)
            .map(|p| p.min_gap)
            .map_err(|e| e.to_string())
    });
    let mut min_gap = f64::INFINITY;
    for g in gaps {
        min_gap = min_gap.min(g.map_err(RunError::Failure)?);
    }
    let first = pair_for_rep(cfg, 0)?;
    em.write_csv("lower.csv", |buf| first.lower.write_csv(buf))?;
    em.write_csv("upper.csv", |buf| first.upper.write_csv(buf))?;
    let manifest = PairManifest {
        kind: first.kind,
        master_seed: cfg.mc.seed,
        replicates: cfg.mc.reps,
        lower_stream: first.lower_stream.stream(),
        upper_stream: first.upper_stream.stream(),
        min_gap,
    };
    em.write(
        "pair.json",
        serde_json::to_string_pretty(&manifest)
            .expect("pair manifest serializes")
            .as_bytes(),
    )?;
    println!(
        "couple: {} replicates, min (upper − lower) over all samples = {min_gap}",
        cfg.mc.reps
    );
    Ok(())
}
