use proptest::prelude::*;
use srhlab_core::equilibrium::equilibrium_mass;
use srhlab_core::mesh::discrete_flux_divergence;
use srhlab_core::*;

fn pair(cells: usize, fam_n: PotentialFamily, fam_p: PotentialFamily, amp: f64) -> PotentialPair {
    let g = build_grid(cells).unwrap();
    PotentialPair::from_potentials(
        &g,
        Potential::new(fam_n, amp),
        Potential::new(fam_p, 0.5 * amp),
    )
    .unwrap()
}

fn family() -> impl Strategy<Value = PotentialFamily> {
    prop::sample::select(PotentialFamily::ALL.to_vec())
}

fn initial_family() -> impl Strategy<Value = InitialFamily> {
    prop::sample::select(InitialFamily::ALL.to_vec())
}

fn eps_value() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.0, 0.01, 0.1, 1.0])
}

fn positive_field(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..3.0, len).prop_map(|v| v.into_iter().map(f64::exp).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flux_divergence_is_conservative_and_fixes_weighted_constants(
        f in positive_field(24),
        fam in family(),
        amp in -3.0f64..3.0,
        c in 0.01f64..10.0,
    ) {
        let pot = pair(24, fam, fam, amp);
        let f = Field::new(f).unwrap();
        let div = discrete_flux_divergence(&f, &pot.mu_n).unwrap();
        let scale: f64 = f.iter().map(|v| v.abs()).sum::<f64>() * 24.0 * 24.0 * 20.0;
        prop_assert!(div.iter().sum::<f64>().abs() / 24.0 <= 1e-14 * scale.max(1.0));
        let steady = discrete_flux_divergence(&pot.mu_n.map(|m| c * m), &pot.mu_n).unwrap();
        prop_assert!(steady.sup_norm() <= 1e-12 * c * pot.mu_n.max() * 24.0 * 24.0);
    }

    #[test]
    fn equilibrium_identities_hold(
        n0 in 0.1f64..10.0,
        p0 in 0.1f64..10.0,
        mass in -5.0f64..5.0,
        eps in eps_value(),
        fam_n in family(),
        fam_p in family(),
        amp in -2.0f64..2.0,
    ) {
        let pot = pair(32, fam_n, fam_p, amp);
        let params = SimParams::new(1.0, 1.0, n0, p0, eps, 1.0, pot).unwrap();
        let eq = solve_equilibrium(&params, mass).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        prop_assert!(rel(eq.n_star * eq.p_star, n0 * p0) <= 1e-12);
        prop_assert!(rel(eq.ntr_inf, eq.n_star / (eq.n_star + n0)) <= 1e-12);
        prop_assert!(rel(eq.ntr_inf, p0 / (eq.p_star + p0)) <= 1e-12);
        let scale = eq.n_star * params.potentials.mu_n_bar() + eq.p_star * params.potentials.mu_p_bar() + eps;
        prop_assert!((equilibrium_mass(&eq, &params) - mass).abs() <= 1e-12 * scale);
        let b = equilibrium_bounds(&params, mass);
        prop_assert!(b.alpha <= eq.n_star * (1.0 + 1e-12) && eq.n_star <= b.beta * (1.0 + 1e-12));
        prop_assert!(b.alpha_p <= eq.p_star * (1.0 + 1e-12) && eq.p_star <= b.beta_p * (1.0 + 1e-12));
    }

    #[test]
    fn short_runs_conserve_charge_and_stay_in_the_box(
        init in initial_family(),
        eps in eps_value(),
        fam in family(),
        amp in 0.0f64..2.0,
        level_n in 0.1f64..3.0,
        level_p in 0.1f64..3.0,
        a in 0.0f64..1.0,
        tau_n in 0.2f64..5.0,
        tau_p in 0.2f64..5.0,
    ) {
        let pot = pair(40, fam, fam, amp);
        let params = SimParams::new(tau_n, tau_p, 1.0, 1.0, eps, 1.0, pot).unwrap();
        let g = build_grid(40).unwrap();
        let spec = InitialSpec { family: init, n_level: level_n, p_level: level_p, amplitude: a, ntr: None, mass: level_n - level_p };
        let s = spec.build(&g, &params).unwrap();
        let traj = simulate(&s, &params, &StepperConfig::new(2e-3, 0.4, 10).unwrap()).unwrap();
        let sum = &traj.summary;
        prop_assert!(sum.max_mass_drift <= 1e-10, "drift {}", sum.max_mass_drift);
        prop_assert_eq!(sum.box_violations, 0);
        prop_assert_eq!(sum.monotonicity_violations, 0);
        prop_assert_eq!(sum.negative_production, 0);
        prop_assert_eq!(sum.ckp_violations, 0);
    }

    #[test]
    fn srh_production_is_the_slaved_trap_production(
        n in positive_field(16),
        p in positive_field(16),
        tau_n in 0.1f64..5.0,
        tau_p in 0.1f64..5.0,
        fam in family(),
        amp in -2.0f64..2.0,
    ) {
        let pot = pair(16, fam, fam, amp);
        let params = SimParams::new(tau_n, tau_p, 1.3, 0.4, 0.0, 1.0, pot).unwrap();
        let (n, p) = (Field::new(n).unwrap(), Field::new(p).unwrap());
        let ntr = ntr_quasi_equilibrium(&n, &p, &params).unwrap();
        let d0 = production_srh(&n, &p, &params).unwrap().value;
        let d = entropy_production(&State::new(0.0, n, p, ntr).unwrap(), &params).unwrap().value;
        prop_assert!((d0 - d).abs() <= 1e-10 * d0.abs().max(1.0));
    }

    #[test]
    fn pinsker_bound_holds_on_arbitrary_states(
        n in positive_field(20),
        p in positive_field(20),
        t in prop::collection::vec(0.0f64..=1.0, 20),
        eps in eps_value(),
        mass in -2.0f64..2.0,
    ) {
        let pot = pair(20, PotentialFamily::DoubleWell, PotentialFamily::CosineWell, 1.0);
        let params = SimParams::new(1.0, 1.0, 1.0, 1.0, eps, 1.0, pot).unwrap();
        let eq = solve_equilibrium(&params, mass).unwrap();
        let s = State::new(0.0, Field::new(n).unwrap(), Field::new(p).unwrap(), Field::new(t).unwrap()).unwrap();
        let e_rel = relative_entropy(&s, &eq, &params).unwrap();
        prop_assert!(e_rel >= ckp_bound(&s, &eq, &params).unwrap() - 1e-10);
    }
}
