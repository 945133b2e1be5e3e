//! Assembly of the semiclassical fixed-energy Green function as a sum over
//! classical trajectories.
//!
//! Each trajectory contributes
//! `2π / (2πiħ)^{(n+1)/2} · |D|^{1/2} · exp(i (S̃/ħ − ν π/2))`
//! where `D` is the determinant of the action's second-derivative matrix and
//! `ν` the phase index of [`crate::amplitude::phase_index`]. The square root
//! is always the positive root of `|D|`; all phase content sits in `ν`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::amplitude::{action_derivatives_batch, maslov_index, phase_index, DEFAULT_FD_STEP};
use crate::dynamics::{ModelSpec, Representation};
use crate::error::{Error, Result};
use crate::pathfinder::{find_trajectories_seeded, BoundaryCondition, SearchParams};
use crate::trajectory::{action_mixed, Trajectory};

/// Power of `2πiħ` in the prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PrefactorExponent {
    /// `(n+1)/2`, which reduces exactly to the position and momentum forms.
    #[default]
    HalfNPlusOne,
    /// `(2n+1)/2`. Kept only so that the quadrature comparison can rule it out.
    HalfTwoNPlusOne,
}

impl PrefactorExponent {
    pub fn value(self, n: usize) -> f64 {
        match self {
            Self::HalfNPlusOne => 0.5 * (n as f64 + 1.0),
            Self::HalfTwoNPlusOne => 0.5 * (2.0 * n as f64 + 1.0),
        }
    }
}

/// How the sum over durations is cut off at `t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Truncation {
    /// Every trajectory with `t_f ≤ t_max` at full weight.
    #[default]
    Sharp,
    /// Weight `1 − t_f/t_max`, which damps the oscillating tail of long sums.
    Fejer,
}

impl Truncation {
    pub fn weight(self, t_f: f64, t_max: f64) -> f64 {
        match self {
            Self::Sharp => 1.0,
            Self::Fejer => (1.0 - t_f / t_max).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssembleOptions {
    pub fd_step: f64,
    pub prefactor: PrefactorExponent,
    pub truncation: Truncation,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self {
            fd_step: DEFAULT_FD_STEP,
            prefactor: PrefactorExponent::default(),
            truncation: Truncation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub trajectory_id: usize,
    pub t_f: f64,
    pub action: f64,
    pub det: f64,
    /// Phase index entering `exp(−iνπ/2)`.
    pub maslov: i32,
    /// Sign changes of the representation block along the path.
    pub conjugate_points: usize,
    pub weight: f64,
    pub term: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreensValue {
    pub rep: Representation,
    pub boundary: BoundaryCondition,
    pub hbar: f64,
    pub value: Complex64,
    pub contributions: Vec<Contribution>,
    pub t_max: f64,
    pub diagnostics: Vec<String>,
}

impl GreensValue {
    pub fn n_trajectories(&self) -> usize {
        self.contributions.len()
    }
}

/// `2π / (2πiħ)^e` on the principal branch.
pub fn prefactor(hbar: f64, exponent: f64) -> Complex64 {
    let base = Complex64::new(0.0, 2.0 * std::f64::consts::PI * hbar);
    Complex64::new(2.0 * std::f64::consts::PI, 0.0) / base.powf(exponent)
}

/// Contribution of one trajectory.
pub fn contribution_term(hbar: f64, pref: Complex64, det: f64, action: f64, index: i32, weight: f64) -> Complex64 {
    let phase = action / hbar - index as f64 * std::f64::consts::FRAC_PI_2;
    pref * det.abs().sqrt() * weight * Complex64::from_polar(1.0, phase)
}

/// Green function from already found trajectories.
pub fn assemble_from(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    hbar: f64,
    params: &SearchParams,
    opts: &AssembleOptions,
    trajs: &[Trajectory],
) -> Result<GreensValue> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::Config(format!("hbar must be positive, got {hbar}")));
    }
    let n = model.n;
    let pref = prefactor(hbar, opts.prefactor.value(n));
    let mut diagnostics = Vec::new();
    if trajs.is_empty() {
        diagnostics.push("NoTrajectories: no classical path satisfies the boundary condition".into());
    }
    let derivs = action_derivatives_batch(model, bc, trajs, params, opts.fd_step)?;
    let mut contributions = Vec::with_capacity(trajs.len());
    let mut value = Complex64::new(0.0, 0.0);
    for (id, (tr, d)) in trajs.iter().zip(derivs).enumerate() {
        let d = d?;
        let action = action_mixed(tr, &bc.rep)?;
        let index = phase_index(model, tr, &d)?;
        let mc = maslov_index(tr, &bc.rep)?;
        diagnostics.extend(mc.diagnostics.iter().map(|s| format!("trajectory {id}: {s}")));
        let weight = opts.truncation.weight(tr.t_f, params.t_max);
        let term = contribution_term(hbar, pref, d.det, action, index, weight);
        value += term;
        contributions.push(Contribution {
            trajectory_id: id,
            t_f: tr.t_f,
            action,
            det: d.det,
            maslov: index,
            conjugate_points: mc.index,
            weight,
            term,
        });
    }
    Ok(GreensValue {
        rep: bc.rep.clone(),
        boundary: bc.clone(),
        hbar,
        value,
        contributions,
        t_max: params.t_max,
        diagnostics,
    })
}

/// Green function with explicit options; also returns the trajectories used.
pub fn assemble_with(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    hbar: f64,
    params: &SearchParams,
    opts: &AssembleOptions,
    hints: &[Trajectory],
) -> Result<(GreensValue, Vec<Trajectory>)> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::Config(format!("hbar must be positive, got {hbar}")));
    }
    let trajs = find_trajectories_seeded(model, bc, params, hints)?;
    let g = assemble_from(model, bc, hbar, params, opts, &trajs)?;
    Ok((g, trajs))
}

/// Semiclassical Green function in the representation of `bc`.
pub fn assemble(model: &ModelSpec, bc: &BoundaryCondition, hbar: f64, params: &SearchParams) -> Result<GreensValue> {
    assemble_with(model, bc, hbar, params, &AssembleOptions::default(), &[]).map(|(g, _)| g)
}

/// Position-space Green function `G(q″, q′, E)` in its textbook form
/// `(iħ)⁻¹ (2πiħ)^{-(n-1)/2} Σ |D|^{1/2} e^{iS/ħ − iνπ/2}` with `S = ∫p dq`.
pub fn position_greens(
    model: &ModelSpec,
    q_initial: &[f64],
    q_final: &[f64],
    energy: f64,
    hbar: f64,
    params: &SearchParams,
) -> Result<GreensValue> {
    let bc = BoundaryCondition::new(Representation::position(model.n), q_initial, q_final, energy);
    let trajs = find_trajectories_seeded(model, &bc, params, &[])?;
    let mut g = assemble_from(model, &bc, hbar, params, &AssembleOptions::default(), &trajs)?;
    let actions: Vec<f64> = trajs.iter().map(|tr| tr.action_full).collect();
    retarget(&mut g, hbar, &actions);
    Ok(g)
}

/// Momentum-space Green function `F(p″, p′, E)` in the same textbook form,
/// with the Legendre-transformed action `T = S − p″·q″ + p′·q′`.
pub fn momentum_greens(
    model: &ModelSpec,
    p_initial: &[f64],
    p_final: &[f64],
    energy: f64,
    hbar: f64,
    params: &SearchParams,
) -> Result<GreensValue> {
    let bc = BoundaryCondition::new(Representation::momentum(model.n), p_initial, p_final, energy);
    let trajs = find_trajectories_seeded(model, &bc, params, &[])?;
    let mut g = assemble_from(model, &bc, hbar, params, &AssembleOptions::default(), &trajs)?;
    let actions: Vec<f64> = trajs
        .iter()
        .map(|tr| {
            let (a, b) = (tr.initial(), tr.final_point());
            let boundary: f64 = (0..tr.dim()).map(|i| a.p[i] * a.q[i] - b.p[i] * b.q[i]).sum();
            tr.action_full + boundary
        })
        .collect();
    retarget(&mut g, hbar, &actions);
    Ok(g)
}

/// Recomputes every term with the given actions and the textbook prefactor,
/// keeping amplitude and index.
fn retarget(g: &mut GreensValue, hbar: f64, actions: &[f64]) {
    let n = g.rep.n as f64;
    let two_pi_i_hbar = Complex64::new(0.0, 2.0 * std::f64::consts::PI * hbar);
    let pref = Complex64::new(0.0, hbar).inv() * two_pi_i_hbar.powf(-0.5 * (n - 1.0));
    let mut value = Complex64::new(0.0, 0.0);
    for (c, &action) in g.contributions.iter_mut().zip(actions) {
        c.action = action;
        c.term = contribution_term(hbar, pref, c.det, c.action, c.maslov, c.weight);
        value += c.term;
    }
    g.value = value;
}

/// One point of an energy scan; failures are kept in band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub energy: f64,
    pub result: std::result::Result<GreensValue, String>,
}

/// Assembles the Green function over an increasing energy grid. Trajectories
/// found at each energy seed the search at the next one.
pub fn energy_scan(
    model: &ModelSpec,
    bc_template: &BoundaryCondition,
    energies: &[f64],
    hbar: f64,
    params: &SearchParams,
) -> Result<Vec<ScanPoint>> {
    energy_scan_with(model, bc_template, energies, hbar, params, &AssembleOptions::default())
}

pub fn energy_scan_with(
    model: &ModelSpec,
    bc_template: &BoundaryCondition,
    energies: &[f64],
    hbar: f64,
    params: &SearchParams,
    opts: &AssembleOptions,
) -> Result<Vec<ScanPoint>> {
    if energies.is_empty() {
        return Err(Error::Config("energy grid is empty".into()));
    }
    if energies.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("energy grid must be strictly increasing".into()));
    }
    let mut hints: Vec<Trajectory> = Vec::new();
    let mut out = Vec::with_capacity(energies.len());
    for &e in energies {
        let bc = BoundaryCondition {
            energy: e,
            ..bc_template.clone()
        };
        let hint_slice: &[Trajectory] = if model.n > 1 { &hints } else { &[] };
        match assemble_with(model, &bc, hbar, params, opts, hint_slice) {
            Ok((g, trajs)) => {
                hints = trajs;
                out.push(ScanPoint {
                    energy: e,
                    result: Ok(g),
                });
            }
            Err(err) => out.push(ScanPoint {
                energy: e,
                result: Err(err.to_string()),
            }),
        }
    }
    Ok(out)
}
