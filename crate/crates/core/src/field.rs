//! Grid fields: non-negative functions on a uniform lattice with a tracked
//! support window, quadrature and the canonical initial profiles.

use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("grid spacing must be positive, got {0}")]
    NonPositiveDx(f64),
    #[error("domain [{x_lo}, {x_hi}] does not cover the profile support [{lo}, {hi}]")]
    ExtentTooSmall {
        x_lo: f64,
        x_hi: f64,
        lo: f64,
        hi: f64,
    },
    #[error("cell {index} holds a negative or non-finite value {value}")]
    InvalidValue { index: usize, value: f64 },
    #[error("cannot rescale an identically zero field to positive mass")]
    ZeroMass,
}

/// Uniform grid extent used to materialize profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dx: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl GridSpec {
    pub fn new(dx: f64, x_lo: f64, x_hi: f64) -> Self {
        Self { dx, x_lo, x_hi }
    }

    pub fn n_cells(&self) -> usize {
        ((self.x_hi - self.x_lo) / self.dx).round() as usize + 1
    }
}

/// Named closed-form initial conditions.
///
/// `KinkF0` is the left-plateau kink `1 ∧ (−x ∨ 0)`; the half-line profiles
/// ramp down to zero over a single cell so they stay continuous on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    KinkF0,
    Bump {
        center: f64,
        width: f64,
        height: f64,
    },
    ConstantPsiN {
        level: f64,
    },
    HalfLineZetaN {
        level: f64,
    },
    MirroredXiN {
        level: f64,
    },
    GaussianKernel {
        t0: f64,
    },
}

impl Profile {
    /// Point evaluation. `dx` fixes the one-cell ramp of the half-line
    /// profiles; the other profiles ignore it.
    pub fn eval(&self, x: f64, dx: f64) -> f64 {
        match *self {
            Profile::KinkF0 => (-x).clamp(0.0, 1.0),
            Profile::Bump {
                center,
                width,
                height,
            } => {
                let s = 2.0 * (x - center) / width;
                if s.abs() < 1.0 {
                    height * (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
            Profile::ConstantPsiN { level } => level,
            Profile::HalfLineZetaN { level } => {
                if x >= 0.0 {
                    0.0
                } else if x <= -dx {
                    level
                } else {
                    level * (-x) / dx
                }
            }
            Profile::MirroredXiN { level } => Profile::HalfLineZetaN { level }.eval(-x, dx),
            Profile::GaussianKernel { t0 } => {
                (4.0 * std::f64::consts::PI * t0).powf(-0.5) * (-x * x / (4.0 * t0)).exp()
            }
        }
    }

    /// Support interval of a compactly supported profile, if it has one.
    fn compact_support(&self) -> Option<(f64, f64)> {
        match *self {
            Profile::Bump {
                center,
                width,
                height,
            } if height > 0.0 => Some((center - width / 2.0, center + width / 2.0)),
            _ => None,
        }
    }
}

/// A non-negative function sampled at cell centers `x_j = origin + j dx`,
/// with all strictly positive cells inside `window`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    dx: f64,
    origin: f64,
    values: Vec<f64>,
    window: Option<(usize, usize)>,
}

/// JSON sidecar accompanying a field CSV.
#[derive(Debug, Serialize, Deserialize)]
struct FieldMeta {
    dx: f64,
    origin: f64,
    window: Option<(usize, usize)>,
}

fn scan_window(values: &[f64]) -> Option<(usize, usize)> {
    let lo = values.iter().position(|&v| v > 0.0)?;
    let hi = values.iter().rposition(|&v| v > 0.0)?;
    Some((lo, hi))
}

impl Field {
    /// Build a field from raw cell values, validating non-negativity and
    /// computing the minimal window.
    pub fn from_values(dx: f64, origin: f64, values: Vec<f64>) -> Result<Self, FieldError> {
        if dx <= 0.0 || !dx.is_finite() {
            return Err(FieldError::NonPositiveDx(dx));
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(FieldError::InvalidValue { index, value });
            }
        }
        let window = scan_window(&values);
        Ok(Self {
            dx,
            origin,
            values,
            window,
        })
    }

    /// Internal constructor for values already known to be valid (clipped
    /// integrator output).
    pub(crate) fn from_clipped(dx: f64, origin: f64, values: Vec<f64>) -> Self {
        let window = scan_window(&values);
        Self {
            dx,
            origin,
            values,
            window,
        }
    }

    /// Sample a profile over a grid extent.
    pub fn materialize(profile: &Profile, grid: &GridSpec) -> Result<Self, FieldError> {
        if grid.dx <= 0.0 || !grid.dx.is_finite() {
            return Err(FieldError::NonPositiveDx(grid.dx));
        }
        if let Some((lo, hi)) = profile.compact_support() {
            if lo < grid.x_lo || hi > grid.x_hi {
                return Err(FieldError::ExtentTooSmall {
                    x_lo: grid.x_lo,
                    x_hi: grid.x_hi,
                    lo,
                    hi,
                });
            }
        }
        let n = grid.n_cells();
        let values = (0..n)
            .map(|j| profile.eval(grid.x_lo + j as f64 * grid.dx, grid.dx))
            .collect();
        Self::from_values(grid.dx, grid.x_lo, values)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    /// Coordinate of cell `j`.
    pub fn x(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.dx
    }

    pub fn window(&self) -> Option<(usize, usize)> {
        self.window
    }

    pub fn is_zero(&self) -> bool {
        self.window.is_none()
    }

    /// Rectangle-rule mass `dx Σ_j f_j`.
    pub fn total_mass(&self) -> f64 {
        self.inner_product(|_| 1.0)
    }

    /// Rectangle-rule pairing `dx Σ_j f_j g(x_j)`.
    pub fn inner_product<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let Some((lo, hi)) = self.window else {
            return 0.0;
        };
        let mut sum = 0.0;
        for j in lo..=hi {
            sum += self.values[j] * g(self.x(j));
        }
        self.dx * sum
    }

    /// Pairing of two fields sharing the same lattice.
    pub fn inner_product_field(&self, g: &Field) -> f64 {
        assert!(
            self.same_lattice(g),
            "inner_product_field requires fields on the same lattice"
        );
        let (Some((alo, ahi)), Some((blo, bhi))) = (self.window, g.window) else {
            return 0.0;
        };
        let offset = ((g.origin - self.origin) / self.dx).round() as isize;
        // Overlap in self-indices.
        let lo = (alo as isize).max(blo as isize + offset);
        let hi = (ahi as isize).min(bhi as isize + offset);
        let mut sum = 0.0;
        let mut j = lo;
        while j <= hi {
            sum += self.values[j as usize] * g.values[(j - offset) as usize];
            j += 1;
        }
        self.dx * sum
    }

    fn same_lattice(&self, other: &Field) -> bool {
        self.dx == other.dx && ((other.origin - self.origin) / self.dx).fract().abs() < 1e-9
    }

    /// Translated field `h(x) = f(x + a)`, with `a` snapped to the lattice.
    pub fn shift(&self, a: f64) -> Field {
        let snapped = (a / self.dx).round() * self.dx;
        Field {
            dx: self.dx,
            origin: self.origin - snapped,
            values: self.values.clone(),
            window: self.window,
        }
    }

    /// `sup_j f_j e^{−λ|x_j|}` for λ > 0.
    pub fn weighted_sup_norm(&self, lambda: f64) -> f64 {
        assert!(lambda > 0.0, "weighted sup norm needs lambda > 0");
        let Some((lo, hi)) = self.window else {
            return 0.0;
        };
        (lo..=hi)
            .map(|j| self.values[j] * (-lambda * self.x(j).abs()).exp())
            .fold(0.0, f64::max)
    }

    /// Rescale so that `total_mass` equals `target` exactly up to rounding.
    pub fn scaled_to_mass(&self, target: f64) -> Result<Field, FieldError> {
        let mass = self.total_mass();
        if mass <= 0.0 {
            return Err(FieldError::ZeroMass);
        }
        let factor = target / mass;
        let values = self.values.iter().map(|v| v * factor).collect();
        Field::from_values(self.dx, self.origin, values)
    }

    /// Pointwise `self ≤ other` on a shared lattice (both zero outside their
    /// windows, so only stored cells need comparing).
    pub fn pointwise_le(&self, other: &Field) -> bool {
        assert!(
            self.same_lattice(other) && self.n_cells() == other.n_cells(),
            "pointwise_le requires identical grids"
        );
        let offset = ((other.origin - self.origin) / self.dx).round() as isize;
        self.values.iter().enumerate().all(|(j, &v)| {
            let k = j as isize - offset;
            let o = if k >= 0 && (k as usize) < other.values.len() {
                other.values[k as usize]
            } else {
                0.0
            };
            v <= o
        })
    }

    /// Indices of cells with coordinates in the open interval `(lo, hi)`.
    pub fn cells_in_open_interval(&self, lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_cells()).filter(move |&j| {
            let x = self.x(j);
            x > lo && x < hi
        })
    }

    /// CSV rows `x,value` for cells inside the window.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "x,value")?;
        if let Some((lo, hi)) = self.window {
            for j in lo..=hi {
                writeln!(w, "{},{}", self.x(j), self.values[j])?;
            }
        }
        Ok(())
    }

    /// JSON sidecar `{dx, origin, window}`.
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&FieldMeta {
            dx: self.dx,
            origin: self.origin,
            window: self.window,
        })
        .expect("field metadata serializes")
    }
}
