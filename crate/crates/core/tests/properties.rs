use mixed_greens::amplitude::{action_derivatives, action_derivatives_transposed};
use mixed_greens::bench::{compare, ho_semiclassical_g, WindingSum};
use mixed_greens::dynamics::{flow, flow_jacobian, hamiltonian, symplectic_form, ModelSpec, PhasePoint, Representation};
use mixed_greens::greens::{assemble_with, AssembleOptions, PrefactorExponent};
use mixed_greens::pathfinder::{boundary_residual, find_trajectories, refine, BoundaryCondition, Guess, SearchParams};
use mixed_greens::trajectory::{action_mixed, action_mixed_quadrature, integrate, propagate, symplectic_defect};
use mixed_greens::transforms::{
    inverse_partial_ft, partial_ft_converged, partial_ft_direct, Axis, Direction, GridFunction, QuadratureOptions,
    Refinement,
};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn quartic_2d(masses: [f64; 2], freqs: [f64; 2], coeffs: [f64; 3]) -> ModelSpec {
    ModelSpec::quartic(&masses, &freqs, &coeffs)
}

fn point(q: [f64; 2], p: [f64; 2]) -> PhasePoint {
    PhasePoint::new(q.to_vec(), p.to_vec()).unwrap()
}

fn masses() -> impl Strategy<Value = [f64; 2]> {
    [0.5..2.0f64, 0.5..2.0f64]
}

fn freqs() -> impl Strategy<Value = [f64; 2]> {
    [0.6..1.6f64, 0.6..1.6f64]
}

fn coeffs() -> impl Strategy<Value = [f64; 3]> {
    [0.01..0.3f64, 0.01..0.3f64, 0.0..0.1f64]
}

fn coords() -> impl Strategy<Value = [f64; 2]> {
    [-1.0..1.0f64, -1.0..1.0f64]
}

/// Every model family, in one and two dimensions.
fn any_model() -> impl Strategy<Value = ModelSpec> {
    prop_oneof![
        masses().prop_map(|m| ModelSpec::free_particle(&m[..1])),
        (masses(), freqs()).prop_map(|(m, w)| ModelSpec::harmonic(&m[..1], &w[..1])),
        (masses(), freqs()).prop_map(|(m, w)| ModelSpec::harmonic(&m, &w)),
        (masses(), freqs(), coeffs()).prop_map(|(m, w, c)| ModelSpec::quartic(&m[..1], &w[..1], &c[..1])),
        (masses(), freqs(), coeffs()).prop_map(|(m, w, c)| quartic_2d(m, w, c)),
        // Graded-lex cubic in one dimension and a full quartic in two.
        (masses(), prop::collection::vec(-0.5..0.5f64, 5)).prop_map(|(m, c)| ModelSpec::polynomial(&m[..1], &c)),
        (masses(), prop::collection::vec(-0.5..0.5f64, 15)).prop_map(|(m, c)| ModelSpec::polynomial(&m, &c)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flow_jacobian_matches_finite_differences(model in any_model(), q in coords(), p in coords()) {
        let n = model.n;
        let x = PhasePoint::new(q[..n].to_vec(), p[..n].to_vec()).unwrap();
        let jac = flow_jacobian(&model, &x).unwrap();
        let h = 1e-5;
        for j in 0..2 * n {
            let shifted = |d: f64| {
                let mut v = x.to_vec();
                v[j] += d;
                flow(&model, &PhasePoint::new(v[..n].to_vec(), v[n..].to_vec()).unwrap()).unwrap()
            };
            let (fp, fm) = (shifted(h), shifted(-h));
            for i in 0..2 * n {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                prop_assert!((fd - jac[(i, j)]).abs() <= 1e-6, "entry ({i},{j}): {fd} vs {}", jac[(i, j)]);
            }
        }
        // A Hamiltonian vector field has J·Df symmetric (it is minus the Hessian of H).
        let s = symplectic_form(n) * &jac;
        prop_assert!((&s - s.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn flow_is_symplectic_and_conserves_energy(m in masses(), w in freqs(), c in coeffs(), q in coords(), p in coords(), t in 0.5..6.0f64) {
        let model = quartic_2d(m, w, c);
        let x = point(q, p);
        let traj = integrate(&model, &x, t, 0.05).unwrap();
        let e0 = hamiltonian(&model, &x).unwrap();
        for k in 0..traj.len() {
            prop_assert!(symplectic_defect(&traj.sample_monodromy(k)) <= 1e-8, "sample {k}");
            let e = hamiltonian(&model, &traj.sample(k).1).unwrap();
            prop_assert!((e - e0).abs() <= 1e-9 * e0.abs(), "sample {k}");
        }
    }

    #[test]
    fn monodromy_matches_finite_differences(m in masses(), w in freqs(), c in coeffs(), q in coords(), p in coords(), t in 0.5..4.0f64) {
        let model = quartic_2d(m, w, c);
        let x = point(q, p);
        let traj = integrate(&model, &x, t, 0.05).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let (a, _) = propagate(&model, &point([plus[0], plus[1]], [plus[2], plus[3]]), t, 0.05).unwrap();
            let (b, _) = propagate(&model, &point([minus[0], minus[1]], [minus[2], minus[3]]), t, 0.05).unwrap();
            let (a, b) = (a.to_vec(), b.to_vec());
            for i in 0..4 {
                let fd = (a[i] - b[i]) / (2.0 * h);
                let exact = traj.monodromy[(i, j)];
                prop_assert!((fd - exact).abs() <= 1e-5, "entry ({i},{j}): {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn legendre_form_matches_quadrature(m in masses(), w in freqs(), c in coeffs(), q in coords(), p in coords(), t in 0.5..6.0f64) {
        let model = quartic_2d(m, w, c);
        let traj = integrate(&model, &point(q, p), t, 0.05).unwrap();
        for rep in Representation::all(2) {
            let boundary = action_mixed(&traj, &rep).unwrap();
            let quad = action_mixed_quadrature(&traj, &rep).unwrap();
            prop_assert!((boundary - quad).abs() <= 1e-8 * boundary.abs().max(1.0));
        }
    }
}

fn shifted_gaussian(x: f64, centre: f64, width: f64) -> f64 {
    (-(x - centre).powi(2) / (2.0 * width * width)).exp()
}

/// Exact transform of the product of two shifted Gaussians in the sign convention
/// `e^{i(p′q′ − p″q″)/ħ}`.
fn gaussian_transform(pf: f64, pi: f64, cf: f64, ci: f64, width: f64, hbar: f64) -> Complex64 {
    let one = |p: f64, c: f64, sign: f64| {
        Complex64::from_polar(
            width * (2.0 * PI).sqrt() * (-(p * width / hbar).powi(2) / 2.0).exp(),
            sign * p * c / hbar,
        )
    };
    one(pf, cf, -1.0) * one(pi, ci, 1.0) / (2.0 * PI * hbar)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_of_gaussian_is_exact_and_window_invariant(
        cf in -1.0..1.0f64, ci in -1.0..1.0f64, width in 0.5..1.2f64,
        pf in -1.5..1.5f64, pi in -1.5..1.5f64,
    ) {
        let hbar = 1.0;
        let rep = Representation::momentum(1);
        let sample = |half: f64, count: usize| {
            let axes = vec![Axis::new(-half, half, count).unwrap(); 2];
            GridFunction::from_fn(rep.clone(), axes, |x| {
                Ok(Complex64::new(shifted_gaussian(x[0], cf, width) * shifted_gaussian(x[1], ci, width), 0.0))
            })
            .unwrap()
        };
        let exact = gaussian_transform(pf, pi, cf, ci, width, hbar);
        let narrow = partial_ft_direct(&sample(10.0, 401), &[pf], &[pi], hbar).unwrap();
        let wide = partial_ft_direct(&sample(20.0, 801), &[pf], &[pi], hbar).unwrap();
        prop_assert!((narrow - exact).norm() <= 1e-5 * exact.norm().max(1e-3));
        prop_assert!((narrow - wide).norm() <= 1e-6 * exact.norm().max(1e-3));
    }

    #[test]
    fn inverse_transform_undoes_forward(
        cf in -1.0..1.0f64, ci in -1.0..1.0f64, width in 0.5..1.2f64,
        qf in -1.5..1.5f64, qi in -1.5..1.5f64,
    ) {
        let hbar = 1.0;
        // The momentum profile has width ħ/width; the taper must start well outside it.
        let half = 8.0 * hbar / width;
        let axes = vec![Axis::new(-half, half, (2.0 * half / 0.05).ceil() as usize + 1).unwrap(); 2];
        let momentum = GridFunction::from_fn(Representation::momentum(1), axes, |p| {
            Ok(gaussian_transform(p[0], p[1], cf, ci, width, hbar))
        })
        .unwrap();
        let back = inverse_partial_ft(&momentum, &[qf], &[qi], hbar).unwrap();
        let original = shifted_gaussian(qf, cf, width) * shifted_gaussian(qi, ci, width);
        prop_assert!((back - Complex64::new(original, 0.0)).norm() <= 1e-6 * original.max(1e-3));
    }

    #[test]
    fn comparison_report_tracks_worst_point(
        pairs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -0.1..0.1f64), 1..20),
        tol in 1e-4..1e-1f64,
    ) {
        let computed: Vec<(Vec<f64>, Complex64)> = pairs
            .iter()
            .map(|&(re, im, noise)| (vec![re, im], Complex64::new(re + 10.0 + noise, im)))
            .collect();
        let report = compare(&computed, |x| Ok(Complex64::new(x[0] + 10.0, x[1])), tol).unwrap();
        let worst = report.points.iter().map(|p| p.rel_err).fold(0.0, f64::max);
        prop_assert_eq!(report.points.len(), pairs.len());
        prop_assert_eq!(report.max_rel_err, worst);
        prop_assert_eq!(report.passed, worst <= tol);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Each momentum-space orbit is also a position-space orbit between its own
    /// endpoints, i.e. a stationary point of the transform's phase.
    #[test]
    fn momentum_orbits_are_stationary_points(energy in 1.0..3.0f64, a in -0.85..0.85f64, b in -0.85..0.85f64) {
        let model = ModelSpec::harmonic(&[1.0], &[1.0]);
        let params = SearchParams::with_t_max(2.0 * PI);
        let edge = (2.0 * energy).sqrt();
        let bc = BoundaryCondition::new(Representation::momentum(1), &[a * edge], &[b * edge], energy);
        let orbits = find_trajectories(&model, &bc, &params).unwrap();
        prop_assert!(!orbits.is_empty());
        for orbit in &orbits {
            let (start, end) = (orbit.initial(), orbit.final_point());
            let pos = BoundaryCondition::new(Representation::position(1), &start.q, &end.q, energy);
            let matched = find_trajectories(&model, &pos, &params).unwrap().iter().any(|o| {
                (o.t_f - orbit.t_f).abs() <= 1e-6 && (o.initial().p[0] - start.p[0]).abs() <= 1e-6
            });
            prop_assert!(matched, "orbit with t = {} has no position-space partner", orbit.t_f);
        }
    }

    /// The two orderings of the second-difference stencil estimate one matrix.
    #[test]
    fn derivative_matrix_is_symmetric_in_construction(energy in 1.0..3.0f64, a in -0.7..0.7f64, b in -0.7..0.7f64) {
        let model = ModelSpec::harmonic(&[1.0], &[1.0]);
        let params = SearchParams::with_t_max(2.0 * PI);
        let bc = BoundaryCondition::new(Representation::position(1), &[a], &[b], energy);
        for orbit in find_trajectories(&model, &bc, &params).unwrap() {
            let Ok(forward) = action_derivatives(&model, &bc, &orbit, &params, 1e-4) else { continue };
            let Ok(backward) = action_derivatives_transposed(&model, &bc, &orbit, &params, 1e-4) else { continue };
            let scale = forward.matrix.amax().max(1.0);
            prop_assert!((&forward.matrix - &backward.matrix).amax() <= 1e-5 * scale);
        }
    }
}

/// Boundary momentum as a fraction of `√(2mE)`, kept off the turning points.
fn boundary_fraction() -> impl Strategy<Value = f64> {
    prop_oneof![-0.85..-0.1f64, 0.1..0.85f64]
}

fn one_dimensional_model() -> impl Strategy<Value = ModelSpec> {
    prop_oneof![
        Just(ModelSpec::harmonic(&[1.0], &[1.0])),
        (0.05..0.5f64).prop_map(|c| ModelSpec::quartic(&[1.0], &[1.0], &[c])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn returned_trajectories_solve_their_problem(
        two_d in any::<bool>(), mask in 0usize..4, energy in 1.0..2.5f64,
        a in coords(), b in coords(), c in coeffs(),
    ) {
        let (model, rep, t_max) = if two_d {
            (quartic_2d([1.0, 1.0], [1.0, 1.3], c), Representation::all(2)[mask].clone(), 4.0)
        } else {
            (ModelSpec::quartic(&[1.0], &[1.0], &c[..1]), Representation::all(1)[mask % 2].clone(), 7.0)
        };
        let n = model.n;
        // Scale momenta so that the kinetic part alone stays below the energy.
        let scale = |x: &[f64; 2]| -> Vec<f64> {
            (0..n).map(|i| if rep.is_momentum(i) { 0.6 * x[i] * energy.sqrt() } else { 0.6 * x[i] }).collect()
        };
        let bc = BoundaryCondition::new(rep.clone(), &scale(&a), &scale(&b), energy);
        let params = SearchParams::with_t_max(t_max);
        for traj in find_trajectories(&model, &bc, &params).unwrap() {
            prop_assert!(boundary_residual(&bc, &traj) <= params.newton_tol, "{}", boundary_residual(&bc, &traj));
            prop_assert!(traj.t_f > 0.0 && traj.t_f <= t_max * (1.0 + 1e-12));
            for k in 0..traj.len() {
                let x = traj.sample(k).1;
                prop_assert!((model.energy_of(&x.q, &x.p) - energy).abs() <= 1e-9 * energy);
            }
        }
    }

    /// Differentiating the position-space action over re-solved problems
    /// recovers the endpoint momenta of every momentum-space orbit.
    #[test]
    fn position_action_gradient_gives_orbit_momenta(
        model in one_dimensional_model(), energy in 1.0..3.0f64, a in boundary_fraction(), b in boundary_fraction(),
    ) {
        let params = SearchParams::with_t_max(2.0 * PI);
        let edge = (2.0 * energy).sqrt();
        let bc = BoundaryCondition::new(Representation::momentum(1), &[a * edge], &[b * edge], energy);
        for orbit in find_trajectories(&model, &bc, &params).unwrap() {
            // Skip orbits whose position-space family folds (caustic in q).
            if orbit.monodromy[(0, 1)].abs() < 1e-2 {
                continue;
            }
            let (start, end) = (orbit.initial(), orbit.final_point());
            let action = |qi: f64, qf: f64| {
                let pos = BoundaryCondition::new(Representation::position(1), &[qi], &[qf], energy);
                let guess = Guess { unknowns: vec![start.p[0]], t_f: orbit.t_f };
                refine(&model, &pos, &guess, &params).map(|t| t.action_full)
            };
            let (q0, q1) = (start.q[0], end.q[0]);
            // Near a turning point the momentum varies like 1/p per unit q; scale the step with it.
            let h = 1e-3 * start.p[0].abs().min(end.p[0].abs()).min(1.0);
            let derivative = |f: &dyn Fn(f64) -> mixed_greens::Result<f64>| -> Option<f64> {
                let v = [f(2.0 * h).ok()?, f(h).ok()?, f(-h).ok()?, f(-2.0 * h).ok()?];
                Some((-v[0] + 8.0 * v[1] - 8.0 * v[2] + v[3]) / (12.0 * h))
            };
            let (Some(d_initial), Some(d_final)) = (
                derivative(&|d| action(q0 + d, q1)),
                derivative(&|d| action(q0, q1 + d)),
            ) else {
                continue;
            };
            prop_assert!((d_initial + start.p[0]).abs() <= 1e-5, "{d_initial} vs {}", -start.p[0]);
            prop_assert!((d_final - end.p[0]).abs() <= 1e-5, "{d_final} vs {}", end.p[0]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2))]

    /// Against a brute-force transform of the position-space function, the
    /// mixed-space error shrinks as ħ decreases.
    #[test]
    fn transform_oracle_discrepancy_shrinks_with_hbar(energy in 2.2..2.5f64) {
        let model = ModelSpec::harmonic(&[1.0], &[1.0]);
        let t_max = 2.0 * PI;
        let params = SearchParams::with_t_max(t_max);
        let p_initial = (2.0 * energy - 1.0f64).sqrt();
        let p_final = -(2.0 * energy - 1.96f64).sqrt();
        let rep = Representation::momentum(1);
        let bc = BoundaryCondition::new(rep.clone(), &[p_initial], &[p_final], energy);
        let axes = vec![Axis::new(-2.1, 2.1, 801).unwrap(); 2];
        let opts = QuadratureOptions { refinement: Refinement::DensityOnly, ..Default::default() };
        let mut discrepancy = Vec::new();
        for hbar in [0.2, 0.1, 0.05] {
            let oracle = partial_ft_converged(
                &rep,
                &axes,
                |x| ho_semiclassical_g(x[1], x[0], energy, 1.0, 1.0, hbar, WindingSum::Sharp(t_max)),
                &[p_final],
                &[p_initial],
                hbar,
                Direction::Forward,
                &opts,
            )
            .unwrap();
            let assemble_opts = AssembleOptions { prefactor: PrefactorExponent::HalfNPlusOne, ..Default::default() };
            let (f, _) = assemble_with(&model, &bc, hbar, &params, &assemble_opts, &[]).unwrap();
            discrepancy.push((f.value - oracle.value).norm() / oracle.value.norm());
        }
        prop_assert!(discrepancy.windows(2).all(|w| w[1] <= 1.2 * w[0]), "{discrepancy:?}");
    }
}
