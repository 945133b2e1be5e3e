//! Quick invariant suite behind the `selftest` command.

use std::f64::consts::PI;

use mixed_greens::amplitude::maslov_index;
use mixed_greens::bench::{exact_free_particle_g, ho_semiclassical_g, ho_spectral_g, WindingSum};
use mixed_greens::dynamics::{flow, flow_jacobian, ModelSpec, PhasePoint, Representation};
use mixed_greens::greens::{assemble, momentum_greens, position_greens};
use mixed_greens::pathfinder::{BoundaryCondition, SearchParams};
use mixed_greens::trajectory::{action_mixed, action_mixed_quadrature, integrate, symplectic_defect, DEFAULT_STEP};
use mixed_greens::transforms::{partial_ft_direct, Axis, GridFunction};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    pub tolerance: f64,
}

type Outcome = mixed_greens::Result<f64>;

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

fn point(q: &[f64], p: &[f64]) -> PhasePoint {
    PhasePoint::new(q.to_vec(), p.to_vec()).expect("valid point")
}

fn models() -> Vec<(ModelSpec, PhasePoint)> {
    vec![
        (ModelSpec::free_particle(&[1.0]), point(&[0.0], &[1.0])),
        (ModelSpec::harmonic(&[1.0], &[1.0]), point(&[0.3], &[0.9])),
        (ModelSpec::quartic(&[1.0], &[1.0], &[0.4]), point(&[0.5], &[1.2])),
        (ModelSpec::harmonic(&[1.0, 2.0], &[1.0, 1.37]), point(&[0.3, -0.4], &[0.5, 0.8])),
        (
            ModelSpec::quartic(&[1.0, 1.0], &[1.0, 1.3], &[0.1, 0.1, 0.05]),
            point(&[0.4, -0.2], &[0.9, 0.6]),
        ),
    ]
}

fn free_particle() -> Outcome {
    let model = ModelSpec::free_particle(&[1.0]);
    let mut worst: f64 = 0.0;
    for (a, b, e, h) in [(0.0, 1.0, 0.5, 1.0), (-0.3, 2.2, 1.7, 0.1), (1.0, -4.0, 0.2, 0.05)] {
        let bc = BoundaryCondition::new(Representation::position(1), &[a], &[b], e);
        let g = assemble(&model, &bc, h, &SearchParams::default())?;
        worst = worst.max(rel(g.value, exact_free_particle_g(a, b, e, 1.0, h)?));
    }
    Ok(worst)
}

fn reduction() -> Outcome {
    let model = ModelSpec::harmonic(&[1.0], &[1.0]);
    let params = SearchParams::with_t_max(3.0 * PI);
    let mut worst: f64 = 0.0;
    for (a, b, e, h) in [(0.2, -0.4, 1.3, 0.3), (-0.5, 0.1, 0.9, 0.7)] {
        let pos = BoundaryCondition::new(Representation::position(1), &[a], &[b], e);
        worst = worst.max(rel(assemble(&model, &pos, h, &params)?.value, position_greens(&model, &[a], &[b], e, h, &params)?.value));
        let mom = BoundaryCondition::new(Representation::momentum(1), &[a], &[b], e);
        worst = worst.max(rel(assemble(&model, &mom, h, &params)?.value, momentum_greens(&model, &[a], &[b], e, h, &params)?.value));
    }
    Ok(worst)
}

fn symplectic() -> Outcome {
    let mut worst: f64 = 0.0;
    for (model, x0) in models() {
        worst = worst.max(symplectic_defect(&integrate(&model, &x0, 20.0, DEFAULT_STEP)?.monodromy));
    }
    Ok(worst)
}

fn energy_drift() -> Outcome {
    let mut worst: f64 = 0.0;
    for (model, x0) in models() {
        let e0 = model.energy_of(&x0.q, &x0.p);
        for (_, x) in integrate(&model, &x0, 20.0, DEFAULT_STEP)?.samples() {
            worst = worst.max((model.energy_of(&x.q, &x.p) - e0).abs() / e0.abs());
        }
    }
    Ok(worst)
}

fn jacobian() -> Outcome {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (model, x0) in models() {
        let n = model.n;
        let jac = flow_jacobian(&model, &x0)?;
        let base = x0.to_vec();
        for j in 0..2 * n {
            let shifted = |d: f64| {
                let mut v = base.clone();
                v[j] += d;
                flow(&model, &point(&v[..n], &v[n..]))
            };
            let (fp, fm) = (shifted(h)?, shifted(-h)?);
            for i in 0..2 * n {
                worst = worst.max(((fp[i] - fm[i]) / (2.0 * h) - jac[(i, j)]).abs());
            }
        }
    }
    Ok(worst)
}

fn legendre() -> Outcome {
    let mut worst: f64 = 0.0;
    for (model, x0) in models() {
        let traj = integrate(&model, &x0, 7.3, DEFAULT_STEP)?;
        for rep in Representation::all(model.n) {
            let a = action_mixed(&traj, &rep)?;
            worst = worst.max((a - action_mixed_quadrature(&traj, &rep)?).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Zeros of the position block of the oscillator fall at multiples of π; reports
/// the largest miscount.
fn conjugate_points() -> Outcome {
    let model = ModelSpec::harmonic(&[1.0], &[1.0]);
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let traj = integrate(&model, &point(&[0.3], &[0.9]), k as f64 * PI + 0.5, DEFAULT_STEP)?;
        let count = maslov_index(&traj, &Representation::position(1))?.index;
        worst = worst.max((count as f64 - k as f64).abs());
    }
    Ok(worst)
}

fn gaussian_transform() -> Outcome {
    let hbar = 1.0;
    let axes = vec![Axis::new(-10.0, 10.0, 401)?; 2];
    let grid = GridFunction::from_fn(Representation::momentum(1), axes, |x| {
        Ok(Complex64::new((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), 0.0))
    })?;
    let mut worst: f64 = 0.0;
    for (pf, pi) in [(0.0f64, 0.0f64), (0.7, -1.1), (1.5, 0.4)] {
        let exact = Complex64::new((-(pf * pf + pi * pi) / (2.0 * hbar * hbar)).exp() / hbar, 0.0);
        worst = worst.max(rel(partial_ft_direct(&grid, &[pf], &[pi], hbar)?, exact));
    }
    Ok(worst)
}

fn oscillator_spectral() -> Outcome {
    let (a, b, e, h) = (0.0, 0.7, 1.05, 0.05);
    let semiclassical = ho_semiclassical_g(a, b, e, 1.0, 1.0, h, WindingSum::Resummed)?;
    Ok(rel(semiclassical, ho_spectral_g(a, b, e, 1.0, 1.0, h, 1024)?))
}

pub fn run() -> Vec<Check> {
    let checks: [(&str, fn() -> Outcome, f64); 9] = [
        ("free particle matches the exact Green function", free_particle, 1e-10),
        ("position and momentum forms match the mixed formula", reduction, 1e-10),
        ("monodromy is symplectic", symplectic, 1e-8),
        ("energy is conserved", energy_drift, 1e-9),
        ("flow Jacobian matches finite differences", jacobian, 1e-6),
        ("boundary-form action matches quadrature", legendre, 1e-8),
        ("oscillator conjugate points are counted", conjugate_points, 0.0),
        ("transform of a Gaussian is exact", gaussian_transform, 1e-6),
        ("oscillator closed form tracks the spectral sum", oscillator_spectral, 0.02),
    ];
    checks
        .iter()
        .map(|(name, check, tolerance)| {
            let worst = check().unwrap_or(f64::INFINITY);
            Check {
                name: name.to_string(),
                passed: worst <= *tolerance,
                worst,
                tolerance: *tolerance,
            }
        })
        .collect()
}
