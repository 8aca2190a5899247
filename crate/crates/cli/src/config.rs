//! Run configuration: flat `key = value` sections in TOML, merged over
//! per-subcommand defaults. The merged config is echoed losslessly into the
//! run manifest, which together with the master seed reproduces every CSV
//! byte-for-byte.

use kpp_core::{Boundary, Field, GridSpec, Profile, Schedule, StepParams};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, msg: &str) -> ConfigError {
    ConfigError(format!("{field}: {msg}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physical {
    pub theta: f64,
    /// Overcrowding rate: 1 for the core equation, 0 for pure branching.
    pub gamma: f64,
    /// Branching noise on/off.
    pub noise: bool,
    /// bump | kink | psi | zeta | xi | gaussian | zero
    pub profile: String,
    pub center: f64,
    pub width: f64,
    pub height: f64,
    /// Rescale the materialized profile to this mass (compact profiles only).
    pub mass: Option<f64>,
    /// Level N of the psi/zeta/xi approximant profiles.
    pub level: f64,
    /// Variance parameter of the gaussian profile.
    pub t0: f64,
    pub horizon: f64,
    /// Duality / extinction time, and the averaging horizon T of `wave`.
    pub t: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub revisit_start: f64,
    /// Fit window for wave-speed slopes.
    pub fit_lo: f64,
    pub fit_hi: f64,
    /// Approximant levels for `upper`.
    pub levels: Vec<f64>,
    /// Horizon grid of the front-scaling probe, inside (0, 1].
    pub t_grid: Vec<f64>,
    /// monotone | superprocess (couple); full | left | right (upper).
    pub kind: String,
    /// Secondary bump: the duality test function, the increment added to u0
    /// in monotone coupling, and the moment test function of `upper`.
    pub extra_center: f64,
    pub extra_width: f64,
    pub extra_height: f64,
    pub extra_mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub dx: f64,
    pub dt: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    /// absorbing | held
    pub boundary_left: String,
    pub boundary_right: String,
    pub sample_dt: f64,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarlo {
    pub reps: u32,
    pub seed: u64,
    /// Worker threads; 0 uses all cores. Results are identical at any width.
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physical: Physical,
    pub numerics: Numerics,
    pub mc: MonteCarlo,
    pub output: Output,
}

impl RunConfig {
    /// Built-in defaults, specialized per subcommand.
    pub fn defaults_for(cmd: &str) -> RunConfig {
        let mut cfg = RunConfig {
            physical: Physical {
                theta: 1.0,
                gamma: 1.0,
                noise: true,
                profile: "bump".into(),
                center: 0.0,
                width: 2.0,
                height: 1.0,
                mass: Some(1.0),
                level: 10.0,
                t0: 0.25,
                horizon: 1.0,
                t: 1.0,
                b_lo: -1.0,
                b_hi: 1.0,
                revisit_start: 0.0,
                fit_lo: 10.0,
                fit_hi: 40.0,
                levels: vec![10.0, 20.0],
                t_grid: vec![0.0625, 0.125, 0.25, 0.5, 1.0],
                kind: "monotone".into(),
                extra_center: 0.0,
                extra_width: 2.0,
                extra_height: 1.0,
                extra_mass: Some(1.0),
            },
            numerics: Numerics {
                dx: 0.1,
                dt: 0.004,
                x_lo: -12.0,
                x_hi: 12.0,
                boundary_left: "absorbing".into(),
                boundary_right: "absorbing".into(),
                sample_dt: 0.1,
                snapshot_times: vec![],
            },
            mc: MonteCarlo {
                reps: 400,
                seed: 1,
                parallelism: 0,
            },
            output: Output { dir: "out".into() },
        };
        match cmd {
            "simulate" => {
                cfg.mc.reps = 1;
                cfg.physical.horizon = 2.0;
            }
            "duality" => {
                cfg.physical.profile = "kink".into();
                cfg.physical.mass = None;
                cfg.physical.t = 0.5;
                cfg.numerics.boundary_left = "held".into();
                cfg.numerics.x_lo = -10.0;
                cfg.numerics.x_hi = 10.0;
                cfg.mc.reps = 4000;
            }
            "extinction" => {
                cfg.physical.gamma = 0.0;
                cfg.mc.reps = 4000;
            }
            "wave" => {
                cfg.physical.theta = 5.0;
                cfg.physical.profile = "bump".into();
                cfg.physical.center = -5.0;
                cfg.physical.width = 14.0;
                cfg.physical.height = 4.7;
                cfg.physical.mass = None;
                cfg.physical.t = 20.0;
                cfg.physical.horizon = 40.0;
                cfg.physical.fit_lo = 10.0;
                cfg.physical.fit_hi = 40.0;
                cfg.numerics.dx = 0.2;
                cfg.numerics.dt = 0.01;
                cfg.numerics.x_lo = -160.0;
                cfg.numerics.x_hi = 160.0;
                cfg.mc.reps = 128;
            }
            "recurrence" => {
                cfg.physical.theta = 5.0;
                cfg.physical.center = 8.0;
                cfg.physical.mass = Some(2.0);
                cfg.physical.horizon = 40.0;
                cfg.numerics.dx = 0.2;
                cfg.numerics.dt = 0.01;
                cfg.numerics.x_lo = -200.0;
                cfg.numerics.x_hi = 200.0;
                cfg.mc.reps = 128;
            }
            "upper" => {
                cfg.physical.kind = "full".into();
                cfg.physical.t = 1.0;
                cfg.numerics.x_lo = -10.0;
                cfg.numerics.x_hi = 10.0;
                cfg.mc.reps = 1000;
            }
            "couple" => {
                cfg.physical.horizon = 2.0;
                cfg.physical.extra_center = 4.0;
                cfg.physical.extra_mass = None;
                cfg.mc.reps = 500;
            }
            _ => {}
        }
        cfg
    }

    /// The secondary bump (duality test function, coupling increment,
    /// moment test function).
    pub fn extra_field(&self) -> Result<Field, ConfigError> {
        let p = &self.physical;
        let profile = Profile::Bump {
            center: p.extra_center,
            width: p.extra_width,
            height: p.extra_height,
        };
        let field = Field::materialize(&profile, &self.grid())
            .map_err(|e| err("physical.extra_center", &e.to_string()))?;
        match p.extra_mass {
            Some(m) if m > 0.0 => field
                .scaled_to_mass(m)
                .map_err(|e| err("physical.extra_mass", &e.to_string())),
            Some(_) => Err(err("physical.extra_mass", "must be positive when set")),
            None => Ok(field),
        }
    }

    pub fn coefficients(&self) -> kpp_core::Coefficients {
        kpp_core::Coefficients {
            theta: self.physical.theta,
            alpha: None,
            beta: None,
            gamma: self.physical.gamma,
            noise_on: self.physical.noise,
        }
    }

    /// Defaults overlaid with a TOML config file.
    pub fn load(cmd: &str, path: Option<&Path>) -> Result<RunConfig, ConfigError> {
        let defaults = Self::defaults_for(cmd);
        let Some(path) = path else {
            return Ok(defaults);
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let over: toml::Value = text
            .parse()
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut base =
            toml::Value::try_from(&defaults).expect("defaults serialize to a toml table");
        merge(&mut base, over);
        base.try_into()
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.numerics.dx, self.numerics.x_lo, self.numerics.x_hi)
    }

    fn boundary(name: &str, field: &str) -> Result<Boundary, ConfigError> {
        match name {
            "absorbing" => Ok(Boundary::Absorbing),
            "held" => Ok(Boundary::Held),
            other => Err(err(field, &format!("unknown boundary `{other}`"))),
        }
    }

    pub fn step_params(&self) -> Result<StepParams, ConfigError> {
        let left = Self::boundary(&self.numerics.boundary_left, "numerics.boundary_left")?;
        let right = Self::boundary(&self.numerics.boundary_right, "numerics.boundary_right")?;
        StepParams::new(self.numerics.dt, self.numerics.dx, (left, right))
            .map_err(|e| err("numerics.dt", &e.to_string()))
    }

    pub fn schedule(&self) -> Schedule {
        Schedule::every(self.numerics.sample_dt)
            .with_snapshots(self.numerics.snapshot_times.clone())
    }

    pub fn profile(&self) -> Result<Profile, ConfigError> {
        let p = &self.physical;
        Ok(match p.profile.as_str() {
            "bump" => Profile::Bump {
                center: p.center,
                width: p.width,
                height: p.height,
            },
            "zero" => Profile::Bump {
                center: p.center,
                width: p.width,
                height: 0.0,
            },
            "kink" => Profile::KinkF0,
            "psi" => Profile::ConstantPsiN { level: p.level },
            "zeta" => Profile::HalfLineZetaN { level: p.level },
            "xi" => Profile::MirroredXiN { level: p.level },
            "gaussian" => Profile::GaussianKernel { t0: p.t0 },
            other => {
                return Err(err(
                    "physical.profile",
                    &format!("unknown profile `{other}`"),
                ))
            }
        })
    }

    /// Materialize the configured initial condition, applying the optional
    /// mass rescale (ignored for the explicit zero profile).
    pub fn initial_field(&self) -> Result<Field, ConfigError> {
        let profile = self.profile()?;
        let field = Field::materialize(&profile, &self.grid())
            .map_err(|e| err("physical.profile", &e.to_string()))?;
        if self.physical.profile == "zero" {
            return Ok(field);
        }
        match self.physical.mass {
            Some(m) if m > 0.0 => field
                .scaled_to_mass(m)
                .map_err(|e| err("physical.mass", &e.to_string())),
            Some(_) => Err(err("physical.mass", "must be positive when set")),
            None => Ok(field),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.mc.reps < 1 {
            return Err(err("mc.reps", "must be at least 1"));
        }
        if self.physical.theta < 0.0 {
            return Err(err("physical.theta", "must be non-negative"));
        }
        if self.physical.gamma < 0.0 {
            return Err(err("physical.gamma", "must be non-negative"));
        }
        if self.numerics.x_hi.is_nan() || self.numerics.x_hi <= self.numerics.x_lo {
            return Err(err("numerics.x_hi", "domain must satisfy x_lo < x_hi"));
        }
        if self.physical.horizon < 0.0 {
            return Err(err("physical.horizon", "must be non-negative"));
        }
        if self.physical.horizon / self.numerics.dt > 5e7 {
            return Err(err(
                "physical.horizon",
                "exceeds 5e7 time steps at this dt",
            ));
        }
        if self.physical.b_lo >= self.physical.b_hi {
            return Err(err("physical.b_lo", "interval must satisfy b_lo < b_hi"));
        }
        self.step_params()?;
        self.initial_field()?;
        Ok(())
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
