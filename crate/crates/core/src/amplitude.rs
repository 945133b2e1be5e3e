//! Second-derivative matrices of the representation action, their
//! determinants, and conjugate-point counts.
//!
//! The matrix is `(n+1)×(n+1)`. Row `i < n` differentiates with respect to the
//! initial transformed coordinate `x′_i`, the last row with respect to `E`.
//! Column `j < n` holds the final first derivative `∂S̃/∂x″_j`, the last
//! column the duration `t_f = ∂S̃/∂E`. For the position representation this
//! is the familiar `[[∂²S/∂q′∂q″, ∂²S/∂q′∂E], [∂²S/∂E∂q″, ∂²S/∂E²]]`.
//!
//! First derivatives of `S̃` are exact endpoint data:
//! `∂S̃/∂p′_α = q′_α`, `∂S̃/∂q′_β = −p′_β`, `∂S̃/∂p″_α = −q″_α`,
//! `∂S̃/∂q″_β = p″_β`, `∂S̃/∂E = t_f`. They are differentiated by central
//! differences over re-solved boundary problems with one Richardson step.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelSpec, Representation};
use crate::error::{Error, Result};
use crate::pathfinder::{newton_2d, seed_of, solve_durations_1d, BoundaryCondition, SearchParams, Seed, Solved};
use crate::trajectory::{CausticKind, State, Trajectory, ENDPOINT_CONJUGATE_TOL};

/// Default relative finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Re-solve Jacobians below this magnitude signal a nearby caustic.
pub const CAUSTIC_JACOBIAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDerivatives {
    pub rep: Representation,
    pub matrix: DMatrix<f64>,
    pub det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaslovCount {
    pub rep: Representation,
    pub index: usize,
    pub crossing_times: Vec<f64>,
    /// Zeros that were logged but not counted.
    pub diagnostics: Vec<String>,
}

/// Exact first derivatives of `S̃` read off a trajectory's endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstDerivatives {
    /// `∂S̃/∂x′`, i.e. `(q′_α, −p′_β)` in index order.
    pub initial: Vec<f64>,
    /// `∂S̃/∂x″`, i.e. `(−q″_α, p″_β)` in index order.
    pub final_: Vec<f64>,
    /// `∂S̃/∂E = t_f`.
    pub duration: f64,
}

impl FirstDerivatives {
    fn from_states(rep: &Representation, a: &State, b: &State, t: f64) -> Self {
        let n = rep.n;
        let initial = (0..n)
            .map(|i| if rep.is_momentum(i) { a.q[i] } else { -a.p[i] })
            .collect();
        let final_ = (0..n)
            .map(|i| if rep.is_momentum(i) { -b.q[i] } else { b.p[i] })
            .collect();
        Self {
            initial,
            final_,
            duration: t,
        }
    }

    /// Gradient in the order (initial values, final values, energy).
    pub fn as_vec(&self) -> Vec<f64> {
        self.initial
            .iter()
            .chain(self.final_.iter())
            .copied()
            .chain(std::iter::once(self.duration))
            .collect()
    }
}

fn endpoint_states(traj: &Trajectory) -> (State, State) {
    let a = traj.initial();
    let b = traj.final_point();
    (State::new(&a.q, &a.p), State::new(&b.q, &b.p))
}

/// First derivatives of the representation action at a trajectory.
pub fn first_derivatives(rep: &Representation, traj: &Trajectory) -> Result<FirstDerivatives> {
    if rep.n != traj.dim() {
        return Err(Error::Dimension("representation and trajectory differ in n".into()));
    }
    let (a, b) = endpoint_states(traj);
    Ok(FirstDerivatives::from_states(rep, &a, &b, traj.t_f))
}

fn mixed_action(rep: &Representation, s: &Solved) -> f64 {
    let mut v = s.state.action;
    for &i in &rep.alpha {
        v += s.initial.p[i] * s.initial.q[i] - s.state.p[i] * s.state.q[i];
    }
    v
}

/// Re-solves every trajectory of `trajs` under the perturbed condition.
/// One-dimensional launches sharing an initial point share one integration.
fn resolve_all(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    seeds: &[Seed],
    trajs: &[&Trajectory],
    params: &SearchParams,
) -> Vec<Result<Solved>> {
    let mut out: Vec<Option<Result<Solved>>> = vec![None; trajs.len()];
    if model.n == 1 {
        let mut done = vec![false; trajs.len()];
        for i in 0..trajs.len() {
            if done[i] {
                continue;
            }
            let members: Vec<usize> = (i..trajs.len())
                .filter(|&j| !done[j] && seeds[j] == seeds[i])
                .collect();
            let guesses: Vec<f64> = members.iter().map(|&j| trajs[j].t_f).collect();
            match solve_durations_1d(model, bc, &seeds[i], &guesses, params) {
                Ok(results) => {
                    for (&j, r) in members.iter().zip(results) {
                        out[j] = Some(r);
                        done[j] = true;
                    }
                }
                Err(e) => {
                    for &j in &members {
                        out[j] = Some(Err(e.clone()));
                        done[j] = true;
                    }
                }
            }
        }
    } else {
        for (j, tr) in trajs.iter().enumerate() {
            out[j] = Some(newton_2d(model, bc, seeds[j], tr.t_f, params));
        }
    }
    out.into_iter().map(|r| r.expect("filled")).collect()
}

/// Checks a re-solved root and converts failures to stencil errors.
fn accept(solved: Result<Solved>, base_t: f64) -> Result<Solved> {
    let s = solved.map_err(|e| match e {
        Error::CausticProximity(_) => e,
        other => Error::FdStencil(other.to_string()),
    })?;
    if s.jac_det.abs() < CAUSTIC_JACOBIAN_FLOOR {
        return Err(Error::CausticProximity(format!(
            "re-solve Jacobian {:.3e} at t = {:.6}",
            s.jac_det, s.t
        )));
    }
    if (s.t - base_t).abs() > 0.05 * base_t.max(1.0) {
        return Err(Error::FdStencil(format!(
            "re-solve jumped from t = {base_t} to t = {}",
            s.t
        )));
    }
    Ok(s)
}

/// Per-trajectory stencil values: for each perturbed slot and each of the
/// offsets `(+h, −h, +h/2, −h/2)`, the quantity extracted by `read`.
fn stencil<T: Clone>(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    trajs: &[&Trajectory],
    params: &SearchParams,
    fd_step: f64,
    slots: &[usize],
    read: impl Fn(&Solved) -> T,
) -> Vec<Result<Vec<Vec<(f64, [T; 4])>>>> {
    let seeds: Vec<Seed> = trajs.iter().map(|t| seed_of(model, &bc.rep, t)).collect();
    let n = model.n;
    let mut acc: Vec<Result<Vec<Vec<(f64, [T; 4])>>>> = vec![Ok(Vec::new()); trajs.len()];
    for &slot in slots {
        let x = if slot < n {
            bc.initial_values[slot]
        } else if slot < 2 * n {
            bc.final_values[slot - n]
        } else {
            bc.energy
        };
        let h = fd_step * x.abs().max(1.0);
        let offsets = [h, -h, 0.5 * h, -0.5 * h];
        let mut values: Vec<Vec<Option<T>>> = vec![Vec::new(); trajs.len()];
        let mut errors: Vec<Option<Error>> = vec![None; trajs.len()];
        for d in offsets {
            let pbc = bc.perturbed(slot, d);
            for (j, r) in resolve_all(model, &pbc, &seeds, trajs, params).into_iter().enumerate() {
                match accept(r, trajs[j].t_f) {
                    Ok(s) => values[j].push(Some(read(&s))),
                    Err(e) => {
                        errors[j].get_or_insert(e);
                        values[j].push(None);
                    }
                }
            }
        }
        for j in 0..trajs.len() {
            let Ok(list) = &mut acc[j] else { continue };
            if let Some(e) = errors[j].take() {
                acc[j] = Err(e);
                continue;
            }
            let v: Vec<T> = values[j].iter().map(|x| x.clone().expect("no error")).collect();
            list.push(vec![(h, [v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone()])]);
        }
    }
    acc
}

fn richardson(h: f64, v: &[f64; 4]) -> f64 {
    let coarse = (v[0] - v[1]) / (2.0 * h);
    let fine = (v[2] - v[3]) / h;
    (4.0 * fine - coarse) / 3.0
}

fn check_inputs(model: &ModelSpec, bc: &BoundaryCondition, fd_step: f64) -> Result<()> {
    model.validate()?;
    bc.validate(model)?;
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::Config(format!("fd_step must be positive, got {fd_step}")));
    }
    Ok(())
}

/// Derivative matrices for several trajectories of the same boundary problem.
pub fn action_derivatives_batch(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    trajs: &[Trajectory],
    params: &SearchParams,
    fd_step: f64,
) -> Result<Vec<Result<ActionDerivatives>>> {
    check_inputs(model, bc, fd_step)?;
    let n = model.n;
    let refs: Vec<&Trajectory> = trajs.iter().collect();
    let slots: Vec<usize> = (0..n).chain(std::iter::once(2 * n)).collect();
    let rep = bc.rep.clone();
    let data = stencil(model, bc, &refs, params, fd_step, &slots, |s| {
        let d = FirstDerivatives::from_states(&rep, &s.initial, &s.state, s.t);
        let mut row = d.final_;
        row.push(d.duration);
        row
    });
    Ok(data
        .into_iter()
        .map(|r| {
            let rows = r?;
            let matrix = DMatrix::from_fn(n + 1, n + 1, |i, j| {
                let (h, v) = &rows[i][0];
                richardson(*h, &[v[0][j], v[1][j], v[2][j], v[3][j]])
            });
            let det = matrix.determinant();
            Ok(ActionDerivatives {
                rep: rep.clone(),
                matrix,
                det,
            })
        })
        .collect())
}

/// Derivative matrix of one trajectory (differentiating the final first
/// derivatives and the duration with respect to initial data and energy).
pub fn action_derivatives(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    traj: &Trajectory,
    params: &SearchParams,
    fd_step: f64,
) -> Result<ActionDerivatives> {
    action_derivatives_batch(model, bc, std::slice::from_ref(traj), params, fd_step)?
        .pop()
        .expect("one trajectory")
}

/// The same matrix built the other way round: the initial first derivatives
/// and the duration differentiated with respect to final data and energy.
/// Entry `(i, j)` estimates the same second derivative as in
/// [`action_derivatives`], so the two agree up to finite-difference error.
pub fn action_derivatives_transposed(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    traj: &Trajectory,
    params: &SearchParams,
    fd_step: f64,
) -> Result<ActionDerivatives> {
    check_inputs(model, bc, fd_step)?;
    let n = model.n;
    let slots: Vec<usize> = (n..2 * n).chain(std::iter::once(2 * n)).collect();
    let rep = bc.rep.clone();
    let rows = stencil(model, bc, &[traj], params, fd_step, &slots, |s| {
        let d = FirstDerivatives::from_states(&rep, &s.initial, &s.state, s.t);
        let mut row = d.initial;
        row.push(d.duration);
        row
    })
    .pop()
    .expect("one trajectory")?;
    // rows[k] differentiates (g′, t) with respect to slot k; transpose into the
    // (initial, final) layout.
    let d = |k: usize, c: usize| {
        let (h, v) = &rows[k][0];
        richardson(*h, &[v[0][c], v[1][c], v[2][c], v[3][c]])
    };
    let matrix = DMatrix::from_fn(n + 1, n + 1, |i, j| d(j, i));
    let det = matrix.determinant();
    Ok(ActionDerivatives { rep, matrix, det })
}

/// Central-difference gradient of `S̃` over re-solved problems, in the order
/// (initial values, final values, energy). Used to validate the exact first
/// derivatives before second differences are trusted.
pub fn action_gradient_fd(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    traj: &Trajectory,
    params: &SearchParams,
    fd_step: f64,
) -> Result<Vec<f64>> {
    check_inputs(model, bc, fd_step)?;
    let n = model.n;
    let slots: Vec<usize> = (0..=2 * n).collect();
    let rep = bc.rep.clone();
    let rows = stencil(model, bc, &[traj], params, fd_step, &slots, |s| mixed_action(&rep, s))
        .pop()
        .expect("one trajectory")?;
    Ok(rows.iter().map(|r| richardson(r[0].0, &r[0].1)).collect())
}

/// Number of sign changes of the representation's block determinant on `(0, t_f)`.
pub fn maslov_index(traj: &Trajectory, rep: &Representation) -> Result<MaslovCount> {
    let key = rep.key();
    let events = traj
        .caustic_log
        .get(&key)
        .ok_or_else(|| Error::Config(format!("caustic log has no entry for representation {key:?}")))?;
    let crossing_times: Vec<f64> = events
        .iter()
        .filter(|e| e.kind == CausticKind::SignChange)
        .map(|e| e.t)
        .collect();
    let diagnostics = events
        .iter()
        .filter(|e| e.kind == CausticKind::Tangential)
        .map(|e| {
            format!(
                "tangential zero at t = {:.9} (kernel dimension {}, signature {}) not counted",
                e.t, e.kernel_dim, e.signature
            )
        })
        .collect();
    Ok(MaslovCount {
        rep: rep.clone(),
        index: crossing_times.len(),
        crossing_times,
        diagnostics,
    })
}

/// Number of negative eigenvalues of the potential Hessian restricted to the
/// momentum-type indices at the launch point.
fn negative_curvatures(model: &ModelSpec, rep: &Representation, traj: &Trajectory) -> i32 {
    let k = rep.k();
    if k == 0 {
        return 0;
    }
    let q0 = traj.initial().q;
    let h = model.hessian(&q0);
    let block = DMatrix::from_fn(k, k, |i, j| h[rep.alpha[i]][rep.alpha[j]]);
    SymmetricEigen::new(block)
        .eigenvalues
        .iter()
        .filter(|&&l| l < 0.0)
        .count() as i32
}

/// Phase index of a trajectory's contribution: the crossing-form signatures of
/// all logged zeros of the representation block, corrected by the launch
/// curvature count and the sign of `∂t_f/∂E`.
///
/// When the block vanishes at the endpoint itself, `∂t_f/∂E` vanishes with it
/// and both the zero count and the sign are decided by roundoff. Their sum is
/// not: the endpoint zero is left out and the sign term is replaced by its
/// limit from the side where the zero lies beyond `t_f`.
pub fn phase_index(model: &ModelSpec, traj: &Trajectory, derivs: &ActionDerivatives) -> Result<i32> {
    let rep = &derivs.rep;
    let events = traj
        .caustic_log
        .get(&rep.key())
        .ok_or_else(|| Error::Config("caustic log lacks the representation".into()))?;
    let n = rep.n;
    let curvature = negative_curvatures(model, rep, traj);
    if let Some(endpoint_signature) = traj.endpoint_conjugacy(rep) {
        let tol = ENDPOINT_CONJUGATE_TOL * traj.t_f.max(1.0);
        let inner: i32 = events
            .iter()
            .filter(|e| (e.t - traj.t_f).abs() > tol)
            .map(|e| e.signature)
            .sum();
        return Ok(inner - curvature + i32::from(endpoint_signature > 0));
    }
    let signatures: i32 = events.iter().map(|e| e.signature).sum();
    let dt_de = derivs.matrix[(n, n)];
    Ok(signatures - curvature + i32::from(dt_de > 0.0))
}
