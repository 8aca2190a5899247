//! Wavefront markers: the support edges R0/L0, the exponential-moment marker
//! R1, and the truncated / smoothed marker family used to localize the front
//! of a field on a bounded interval.
//!
//! Sentinels follow the extinction conventions: a zero field has
//! `right_marker = -∞`, `left_marker = +∞`, `exp_marker = -∞`.

use crate::field::Field;

/// Rightmost strictly positive cell coordinate; `-∞` for the zero field.
pub fn right_marker(f: &Field) -> f64 {
    match f.window() {
        Some((_, hi)) => f.x(hi),
        None => f64::NEG_INFINITY,
    }
}

/// Leftmost strictly positive cell coordinate; `+∞` for the zero field.
pub fn left_marker(f: &Field) -> f64 {
    match f.window() {
        Some((lo, _)) => f.x(lo),
        None => f64::INFINITY,
    }
}

/// `ln ∫ e^x f(x) dx` by rectangle rule, evaluated in log space so fronts far
/// to the right do not overflow.
pub fn exp_marker(f: &Field) -> f64 {
    let Some((lo, hi)) = f.window() else {
        return f64::NEG_INFINITY;
    };
    let mut peak = f64::NEG_INFINITY;
    for j in lo..=hi {
        let v = f.values()[j];
        if v > 0.0 {
            peak = peak.max(f.x(j) + v.ln());
        }
    }
    let mut sum = 0.0;
    for j in lo..=hi {
        let v = f.values()[j];
        if v > 0.0 {
            sum += (f.x(j) + v.ln() - peak).exp();
        }
    }
    peak + sum.ln() + f.dx().ln()
}

fn clamped_index_range(f: &Field, n_halfwidth: f64) -> Option<(usize, usize)> {
    let lo = ((-n_halfwidth - f.origin()) / f.dx() - 1e-9)
        .ceil()
        .max(0.0);
    let hi = ((n_halfwidth - f.origin()) / f.dx() + 1e-9).floor();
    let last = (f.n_cells() - 1) as f64;
    if hi < lo.max(0.0) || lo > last {
        return None;
    }
    Some((lo as usize, hi.min(last) as usize))
}

/// Truncated marker: the rightmost grid point `x` in `[-N, N]` with a
/// positive cell and tail mass `⟨f, 1(x < · ≤ N)⟩ ≥ m`; `-N` when no grid
/// point qualifies.
pub fn truncated_marker(f: &Field, m: f64, n_halfwidth: f64) -> f64 {
    assert!(n_halfwidth > 0.0 && m >= 0.0);
    let Some((jlo, jhi)) = clamped_index_range(f, n_halfwidth) else {
        return -n_halfwidth;
    };
    let mut tail = 0.0;
    for j in (jlo..=jhi).rev() {
        let v = f.values()[j];
        if v > 0.0 && tail >= m {
            return f.x(j);
        }
        tail += v * f.dx();
    }
    -n_halfwidth
}

/// Mollifier for the continuous marker: a fixed smooth bump supported on
/// `(-1, 0)` with unit integral, rescaled to width `m0`.
#[derive(Debug, Clone)]
pub struct SmoothingKernel {
    m0: f64,
    nodes: usize,
    norm: f64,
}

fn raw_bump(x: f64) -> f64 {
    // Supported on (-1, 0); s = 2x + 1 maps it onto the unit bump.
    let s = 2.0 * x + 1.0;
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

impl SmoothingKernel {
    pub fn new(m0: f64) -> Self {
        Self::with_nodes(m0, 64)
    }

    pub fn with_nodes(m0: f64, nodes: usize) -> Self {
        assert!(m0 > 0.0 && nodes > 0);
        // Normalizing constant from a fine midpoint rule; the bump is smooth
        // with all derivatives vanishing at the support ends, so midpoint
        // converges beyond machine precision long before 200k nodes.
        let fine = 200_000;
        let h = 1.0 / fine as f64;
        let integral: f64 = (0..fine)
            .map(|i| raw_bump(-1.0 + (i as f64 + 0.5) * h) * h)
            .sum();
        Self {
            m0,
            nodes,
            norm: 1.0 / integral,
        }
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    /// `Φ_{m0}(x) = (1/m0) Φ(x/m0)`.
    pub fn phi_scaled(&self, x: f64) -> f64 {
        self.norm * raw_bump(x / self.m0) / self.m0
    }

    /// Fine-quadrature integral of `Φ_{m0}`; equals 1 within 1e-8.
    pub fn integral(&self) -> f64 {
        let fine = 200_000;
        let h = self.m0 / fine as f64;
        (0..fine)
            .map(|i| self.phi_scaled(-self.m0 + (i as f64 + 0.5) * h) * h)
            .sum()
    }
}

/// Smoothed marker `∫_0^{m0} Φ_{m0}(-m) R^{m,N}(f) dm` by midpoint
/// quadrature, robust to the finitely many jumps of `m ↦ R^{m,N}`.
pub fn smoothed_marker(f: &Field, kernel: &SmoothingKernel, n_halfwidth: f64) -> f64 {
    let m0 = kernel.m0;
    let h = m0 / kernel.nodes as f64;
    let mut weights = Vec::with_capacity(kernel.nodes);
    let mut total = 0.0;
    for i in 0..kernel.nodes {
        let m = (i as f64 + 0.5) * h;
        let w = kernel.phi_scaled(-m) * h;
        weights.push((m, w));
        total += w;
    }
    let mut value = 0.0;
    for &(m, w) in &weights {
        value += w / total * truncated_marker(f, m, n_halfwidth);
    }
    // The exact integral is a convex average of R^{m,N} over m in (0, m0),
    // pinned between the m = m0 and m = 0 markers; clamp away the residual
    // floating-point rounding so the sandwich holds with zero tolerance.
    let lower = truncated_marker(f, m0, n_halfwidth);
    let upper = truncated_marker(f, 0.0, n_halfwidth);
    value.clamp(lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Field, GridSpec, Profile};

    fn indicator_0_2() -> Field {
        // 1 on [0, 2] sampled at dx = 0.1, inside a wider domain.
        let dx = 0.1;
        let grid = GridSpec::new(dx, -6.0, 6.0);
        let n = grid.n_cells();
        let values = (0..n)
            .map(|j| {
                let x = grid.x_lo + j as f64 * dx;
                if (0.0..=2.0 + 1e-12).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Field::from_values(dx, grid.x_lo, values).unwrap()
    }

    #[test]
    fn support_markers() {
        let zero = Field::from_values(0.5, 0.0, vec![0.0; 4]).unwrap();
        assert_eq!(right_marker(&zero), f64::NEG_INFINITY);
        assert_eq!(left_marker(&zero), f64::INFINITY);

        let spike = Field::from_values(0.5, -7.5, vec![1.0]).unwrap();
        assert_eq!(right_marker(&spike), -7.5);
        assert_eq!(left_marker(&spike), -7.5);

        let bump = Field::materialize(
            &Profile::Bump {
                center: 0.5,
                width: 3.0,
                height: 1.0,
            },
            &GridSpec::new(0.1, -4.0, 4.0),
        )
        .unwrap();
        assert!((right_marker(&bump) - 2.0).abs() <= 0.1 + 1e-9);
        assert!((left_marker(&bump) + 1.0).abs() <= 0.1 + 1e-9);
    }

    #[test]
    fn mirrored_field_swaps_markers() {
        let f = Field::from_values(0.5, -1.0, vec![0.0, 2.0, 3.0, 0.0, 1.0, 0.0]).unwrap();
        let mirrored_values: Vec<f64> = f.values().iter().rev().cloned().collect();
        let mirrored = Field::from_values(0.5, -f.x(f.n_cells() - 1), mirrored_values).unwrap();
        assert!((left_marker(&mirrored) + right_marker(&f)).abs() < 1e-12);
    }

    #[test]
    fn exp_marker_examples() {
        let dx = 1e-4;
        let ind = Field::materialize(
            &Profile::ConstantPsiN { level: 1.0 },
            &GridSpec::new(dx, 0.0, 1.0),
        )
        .unwrap();
        let exact = (std::f64::consts::E - 1.0).ln();
        assert!((exp_marker(&ind) - exact).abs() < 1e-3);

        let zero = Field::from_values(0.1, 0.0, vec![0.0; 3]).unwrap();
        assert_eq!(exp_marker(&zero), f64::NEG_INFINITY);
    }

    #[test]
    fn exp_marker_shift_property() {
        let f = Field::materialize(
            &Profile::Bump {
                center: 0.0,
                width: 2.0,
                height: 1.0,
            },
            &GridSpec::new(0.1, -4.0, 4.0),
        )
        .unwrap();
        let a = 1.5;
        let shifted = f.shift(-a);
        assert!((exp_marker(&shifted) - exp_marker(&f) - a).abs() < 1e-10);
    }

    #[test]
    fn exp_marker_far_front_does_not_overflow() {
        let f = Field::from_values(0.1, 400.0, vec![2.0, 1.0, 0.5]).unwrap();
        let r1 = exp_marker(&f);
        assert!(r1.is_finite() && r1 > 399.0);
    }

    #[test]
    fn truncated_marker_examples() {
        let f = indicator_0_2();
        let m_half = truncated_marker(&f, 0.5, 5.0);
        assert!((m_half - 1.5).abs() < 1e-9, "got {m_half}");
        assert_eq!(truncated_marker(&f, 3.0, 5.0), -5.0);
        let m_zero = truncated_marker(&f, 0.0, 5.0);
        assert!((m_zero - right_marker(&f)).abs() < 1e-12);
    }

    #[test]
    fn truncated_marker_threshold_monotone() {
        let f = indicator_0_2();
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let m = 0.1 * k as f64;
            let r = truncated_marker(&f, m, 5.0);
            assert!(r <= prev + 1e-12);
            prev = r;
        }
    }

    #[test]
    fn kernel_integrates_to_one() {
        for m0 in [0.2, 0.1, 0.05] {
            let k = SmoothingKernel::new(m0);
            assert!((k.integral() - 1.0).abs() < 1e-8, "m0 {m0}");
        }
    }

    #[test]
    fn smoothed_marker_examples() {
        let zero = Field::from_values(0.1, -3.0, vec![0.0; 61]).unwrap();
        let k = SmoothingKernel::new(0.1);
        assert_eq!(smoothed_marker(&zero, &k, 5.0), -5.0);

        let f = indicator_0_2();
        let s = smoothed_marker(&f, &k, 5.0);
        assert!((1.9..=2.0).contains(&s), "got {s}");
        let lower = truncated_marker(&f, 0.1, 5.0);
        let upper = truncated_marker(&f, 0.0, 5.0);
        assert!(lower <= s && s <= upper);
    }

    #[test]
    fn smoothed_marker_converges_as_m0_shrinks() {
        // On a grid the m ↓ 0 limit of the truncated marker sits one cell
        // left of the m = 0 marker (the tail mass strictly right of the
        // front cell is zero), so the smoothed marker converges to that
        // limit; only quadrature error remains.
        let f = indicator_0_2();
        let limit = truncated_marker(&f, 1e-12, 5.0);
        let mut prev_gap = f64::INFINITY;
        for m0 in [0.2, 0.1, 0.05, 0.025] {
            let s = smoothed_marker(&f, &SmoothingKernel::new(m0), 5.0);
            let gap = s - limit;
            assert!(
                gap.abs() <= prev_gap.abs() + 1e-3,
                "m0 {m0}: gap {gap} after {prev_gap}"
            );
            prev_gap = gap;
        }
        assert!(prev_gap.abs() < 1e-3, "final gap {prev_gap}");
    }
}
