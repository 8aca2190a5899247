//! Statistical and structural invariants of the coupled simulations and
//! estimators, at moderate replicate counts. The acceptance suite runs the
//! headline experiments at full scale; these cover the remaining claims.

use kpp_core::*;

fn bump(center: f64, height: f64) -> Profile {
    Profile::Bump {
        center,
        width: 2.0,
        height,
    }
}

fn absorbing(dt: f64, dx: f64) -> StepParams {
    StepParams::new(dt, dx, (Boundary::Absorbing, Boundary::Absorbing)).unwrap()
}

/// Two-sample z statistic for equality of means.
fn z_stat(a: &Estimate, b: &Estimate) -> f64 {
    (a.mean - b.mean).abs() / (a.standard_error().powi(2) + b.standard_error().powi(2)).sqrt()
}

#[test]
fn monotone_coupling_upper_marginal_matches_direct_law() {
    // Uniqueness in law: the upper path of the coupling started from v0 must
    // be statistically indistinguishable from a direct simulation from v0.
    // Two-sample test at the 1% level on mass and on a local moment.
    let grid = GridSpec::new(0.1, -8.0, 8.0);
    let p = absorbing(0.004, 0.1);
    let c = Coefficients::core(1.0);
    let u0 = Field::materialize(&bump(-1.0, 0.6), &grid).unwrap();
    let extra = Field::materialize(&bump(1.5, 0.8), &grid).unwrap();
    let v0 = Field::from_values(
        0.1,
        -8.0,
        u0.values()
            .iter()
            .zip(extra.values())
            .map(|(a, b)| a + b)
            .collect(),
    )
    .unwrap();
    let phi = Field::materialize(&bump(0.0, 1.0), &grid).unwrap();
    let reps = 600u32;

    let coupled: Vec<(f64, f64)> = run_replicates(reps, 0, |rep| {
        let pair = monotone_pair(
            &u0,
            &v0,
            &c,
            &p,
            1.0,
            &Schedule::endpoints_only().with_snapshots(vec![1.0]),
            900,
            rep,
        )
        .unwrap();
        let final_upper = &pair.upper.snapshots[0].1;
        (
            final_upper.total_mass(),
            final_upper.inner_product_field(&phi),
        )
    });
    let direct: Vec<(f64, f64)> = run_replicates(reps, 0, |rep| {
        let (f, _) = simulate_final(&v0, &c, &p, 1.0, NoiseStream::new(901, rep, 0)).unwrap();
        (f.total_mass(), f.inner_product_field(&phi))
    });

    for (name, pick) in [("mass", 0usize), ("phi-moment", 1usize)] {
        let pick_fn = |v: &[(f64, f64)]| -> Vec<f64> {
            v.iter()
                .map(|x| if pick == 0 { x.0 } else { x.1 })
                .collect()
        };
        let e_c = Estimate::from_samples(&pick_fn(&coupled)).unwrap();
        let e_d = Estimate::from_samples(&pick_fn(&direct)).unwrap();
        let z = z_stat(&e_c, &e_d);
        assert!(
            z < 2.576,
            "{name} means differ: {} vs {} (z = {z:.2})",
            e_c.mean,
            e_d.mean
        );
    }
}

#[test]
fn core_equation_dies_at_least_as_often_as_superprocess() {
    let grid = GridSpec::new(0.1, -10.0, 10.0);
    let p = absorbing(0.004, 0.1);
    let u0 = Field::materialize(&bump(0.0, 1.0), &grid)
        .unwrap()
        .scaled_to_mass(1.0)
        .unwrap();
    let core = Coefficients::core(1.0);
    let sp = core.superprocess_mode();
    let p_core = extinction_prob(&u0, &core, &p, 1.0, 1500, 77, 0).unwrap();
    let p_sp = extinction_prob(&u0, &sp, &p, 1.0, 1500, 78, 0).unwrap();
    assert!(
        p_core.mean >= p_sp.mean - (p_core.half_width + p_sp.half_width),
        "core {} vs superprocess {}",
        p_core.mean,
        p_sp.mean
    );
}

#[test]
fn survival_fraction_nonincreasing_in_horizon_for_fixed_seeds() {
    let grid = GridSpec::new(0.1, -8.0, 8.0);
    let p = absorbing(0.004, 0.1);
    let g0 = Field::materialize(&bump(0.0, 0.4), &grid).unwrap();
    let c = Coefficients::core(0.5);
    let mut prev = f64::INFINITY;
    for horizon in [0.25, 0.5, 1.0, 2.0] {
        let times = extinction_times(&g0, &c, &p, horizon, 300, 5150, 0).unwrap();
        let surv = times.iter().filter(|t| t.is_none()).count() as f64 / 300.0;
        assert!(
            surv <= prev + 1e-12,
            "horizon {horizon}: survival {surv} after {prev}"
        );
        prev = surv;
    }
}

#[test]
fn recurrence_fraction_nondecreasing_in_horizon_for_fixed_seeds() {
    let grid = GridSpec::new(0.2, -60.0, 60.0);
    let p = absorbing(0.01, 0.2);
    let g0 = Field::materialize(&bump(4.0, 1.0), &grid)
        .unwrap()
        .scaled_to_mass(2.0)
        .unwrap();
    let c = Coefficients::core(4.0);
    let mut prev = -1.0;
    for horizon in [2.0, 4.0, 8.0] {
        let e = recurrence_fraction(
            &g0,
            (-1.0, 1.0),
            &c,
            &p,
            horizon,
            0.0,
            &Schedule::every(0.1),
            120,
            31,
            0,
        )
        .unwrap();
        assert!(
            e.mean >= prev - 1e-12,
            "horizon {horizon}: fraction {} after {prev}",
            e.mean
        );
        prev = e.mean;
    }
}

#[test]
fn left_upper_coupling_dominates_markers() {
    // u0 compact with R0(u0) ≤ 0 against the ζ_N approximant: the coupled
    // pair keeps cells ordered, hence markers ordered, at every sample.
    let grid = GridSpec::new(0.1, -8.0, 8.0);
    let p = StepParams::new(0.004, 0.1, (Boundary::Held, Boundary::Absorbing)).unwrap();
    let u0 = Field::materialize(&bump(-2.0, 0.5), &grid).unwrap();
    let zeta = Field::materialize(&Profile::HalfLineZetaN { level: 10.0 }, &grid).unwrap();
    let c = Coefficients::core(1.0);
    for rep in 0..40 {
        let pair =
            monotone_pair(&u0, &zeta, &c, &p, 1.0, &Schedule::every(0.05), 606, rep).unwrap();
        assert!(pair.min_gap >= 0.0);
        for (lo, up) in pair.lower.rows.iter().zip(&pair.upper.rows) {
            assert!(lo.r0 <= up.r0, "rep {rep} at t {}", lo.t);
        }
    }
}

#[test]
fn upper_measure_moments_saturate_in_level() {
    // Successive approximant levels agree within combined CI once the level
    // is far above the carrying capacity.
    let grid = GridSpec::new(0.1, -10.0, 10.0);
    let p = absorbing(0.004, 0.1);
    let c = Coefficients::core(1.0);
    let phi = Field::materialize(&bump(0.0, 1.0), &grid)
        .unwrap()
        .scaled_to_mass(1.0)
        .unwrap();
    let mut means = Vec::new();
    for (i, level) in [20.0, 40.0].into_iter().enumerate() {
        let vals: Vec<f64> = run_replicates(400, 0, |rep| {
            let f = upper_measure_sample(
                1.0,
                level,
                UpperKind::Full,
                &c,
                &p,
                &grid,
                1000 + i as u64,
                rep,
            )
            .unwrap();
            f.inner_product_field(&phi)
        });
        means.push(Estimate::from_samples(&vals).unwrap());
    }
    let gap = (means[0].mean - means[1].mean).abs();
    let budget = means[0].half_width + means[1].half_width;
    assert!(gap <= budget, "saturation gap {gap} > {budget}");
}

#[test]
fn front_scaling_probe_is_monotone_and_sublinear() {
    let grid = GridSpec::new(0.1, -10.0, 10.0);
    let p = absorbing(0.004, 0.1);
    let table = front_scaling_probe(
        1.0,
        &[0.0625, 0.125, 0.25, 0.5, 1.0],
        10.0,
        &p,
        &grid,
        300,
        112,
        0,
    )
    .unwrap();
    for pair in table.rows.windows(2) {
        let (_, a) = &pair[0];
        let (t, b) = &pair[1];
        assert!(
            b.mean >= a.mean - (a.half_width + b.half_width),
            "mean not nondecreasing at T = {t}"
        );
    }
    assert!(
        table.loglog_slope < 1.1,
        "slope {} should stay below the linear envelope",
        table.loglog_slope
    );
}

#[test]
fn stochastic_wave_speed_within_theoretical_range() {
    // Surviving paths at θ = 5 must not outrun the 2√θ envelope (and should
    // not systematically retreat): per-path fitted slopes in [−ε, 2√θ + ε].
    let dx = 0.2;
    let grid = GridSpec::new(dx, -120.0, 120.0);
    let p = absorbing(0.01, dx);
    let g0 = Field::materialize(&bump(0.0, 1.0), &grid)
        .unwrap()
        .scaled_to_mass(2.0)
        .unwrap();
    let c = Coefficients::core(5.0);
    let eps = 0.5;
    let cap = 2.0 * 5.0f64.sqrt();
    let mut survivors = 0;
    for rep in 0..16u32 {
        let traj = simulate(
            &g0,
            &c,
            &p,
            20.0,
            &Schedule::every(0.25),
            NoiseStream::new(808, rep, 0),
        )
        .unwrap();
        if traj.extinction_time.is_none() {
            survivors += 1;
            let s = wave_speed(&traj, (5.0, 20.0)).unwrap();
            assert!(
                (-eps..=cap + eps).contains(&s),
                "rep {rep}: slope {s} outside [−{eps}, {cap} + {eps}]"
            );
        }
    }
    assert!(survivors > 8, "too few survivors ({survivors}/16)");
}

#[test]
fn noiseless_kpp_mass_increases_after_transient() {
    let grid = GridSpec::new(0.1, -40.0, 40.0);
    let p = absorbing(0.004, 0.1);
    let u0 = Field::materialize(&bump(0.0, 1.0), &grid).unwrap();
    let traj = simulate(
        &u0,
        &Coefficients::deterministic_kpp(1.0),
        &p,
        10.0,
        &Schedule::every(0.5),
        NoiseStream::new(0, 0, 0),
    )
    .unwrap();
    let series = mass_and_span(&traj);
    for pair in series.windows(2) {
        if pair[0].0 >= 2.0 {
            assert!(
                pair[1].1 > pair[0].1,
                "mass not increasing at t = {}",
                pair[0].0
            );
        }
    }
    // span grows too
    let early = series.iter().find(|r| r.0 >= 2.0).unwrap().2;
    let late = series.last().unwrap().2;
    assert!(late > early);
}

#[test]
fn duality_gap_with_identical_symmetric_data_is_within_ci() {
    // u0 = v0 symmetric bump: the two Laplace estimates are equal in law.
    let grid = GridSpec::new(0.1, -8.0, 8.0);
    let p = absorbing(0.004, 0.1);
    let b = Field::materialize(&bump(0.0, 1.0), &grid)
        .unwrap()
        .scaled_to_mass(1.0)
        .unwrap();
    let (fwd, bwd) =
        self_duality_gap(&b, &b, 0.5, &Coefficients::core(1.0), &p, 1500, 2211, 0).unwrap();
    assert!(
        (fwd.mean - bwd.mean).abs() <= 3.0 * (fwd.standard_error() + bwd.standard_error()),
        "gap {} vs {}",
        fwd.mean,
        bwd.mean
    );
}
