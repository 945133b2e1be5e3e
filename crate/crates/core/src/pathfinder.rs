//! Fixed-energy two-point boundary-value problems in mixed representations.
//!
//! A boundary condition prescribes the transformed coordinates `(p_α, q_β)` at
//! both ends and the energy. The complementary initial coordinates
//! `(q_α, p_β)` are the unknowns; one of them is eliminated by the energy
//! constraint through a chart of the energy shell, leaving `n − 1` chart
//! parameters plus the duration. Charts:
//!
//! * `n = 1`, position: the launch direction `sign(p′)`.
//! * `n = 1`, momentum: the roots `q′` of `V(q′) = E − p′²/2m`.
//! * `n = 2`, position: an angle `θ` with `p′ = (√(2 m₁ K) cos θ, √(2 m₂ K) sin θ)`.
//! * `n = 2`, one momentum index `a`: the free position `q′_a` and the sign of
//!   the remaining momentum `p′_b`.
//! * `n = 2`, momentum: the polar angle `φ` of `q′` on the level set `V = E − T(p′)`.
//!
//! Newton iterations use the tangent map for the chart column and the flow
//! for the duration column.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelKind, ModelSpec, PhasePoint, Representation, MAX_DIM};
use crate::error::{Error, Result};
use crate::trajectory::{Path, State, Trajectory, DEFAULT_STEP};

/// Relative allowance above `t_max` when accepting a duration.
pub const T_MAX_SLACK: f64 = 1e-12;

/// Prescribed transformed coordinates at both ends and the energy.
///
/// Values are ordered by coordinate index: slot `i` holds `p_i` when `i ∈ α`
/// and `q_i` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub rep: Representation,
    pub initial_values: Vec<f64>,
    pub final_values: Vec<f64>,
    pub energy: f64,
}

impl BoundaryCondition {
    pub fn new(rep: Representation, initial_values: &[f64], final_values: &[f64], energy: f64) -> Self {
        Self {
            rep,
            initial_values: initial_values.to_vec(),
            final_values: final_values.to_vec(),
            energy,
        }
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let n = model.n;
        if self.rep.n != n || self.initial_values.len() != n || self.final_values.len() != n {
            return Err(Error::Dimension(format!(
                "boundary condition does not match model dimension {n}"
            )));
        }
        if !self.rep.is_partition() {
            return Err(Error::Config("representation is not a partition".into()));
        }
        let all = self.initial_values.iter().chain(self.final_values.iter());
        if all.clone().any(|x| !x.is_finite()) || !self.energy.is_finite() {
            return Err(Error::Config("boundary values must be finite".into()));
        }
        if let Some(vmin) = model.potential_minimum() {
            if self.energy <= vmin {
                return Err(Error::Domain(format!(
                    "energy {} does not exceed the potential minimum {vmin}",
                    self.energy
                )));
            }
        }
        Ok(())
    }

    /// Same condition with one entry replaced; `slot` counts initial values,
    /// then final values, then the energy.
    pub fn perturbed(&self, slot: usize, delta: f64) -> Self {
        let mut bc = self.clone();
        let n = self.initial_values.len();
        if slot < n {
            bc.initial_values[slot] += delta;
        } else if slot < 2 * n {
            bc.final_values[slot - n] += delta;
        } else {
            bc.energy += delta;
        }
        bc
    }
}

/// Controls for the multistart Newton search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    /// Seeds per chart parameter (and root-scan resolution for the 1D momentum chart).
    pub multistart_grid: usize,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub t_max: f64,
    pub dedup_tol: f64,
    /// Integration step.
    pub step: f64,
    /// Half-width of the coordinate window scanned for launch points.
    pub search_box: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            multistart_grid: 16,
            newton_tol: 1e-10,
            max_newton_iters: 40,
            t_max: 10.0,
            dedup_tol: 1e-6,
            step: DEFAULT_STEP,
            search_box: 10.0,
        }
    }
}

impl SearchParams {
    pub fn with_t_max(t_max: f64) -> Self {
        Self {
            t_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.newton_tol,
            self.t_max,
            self.dedup_tol,
            self.step,
            self.search_box,
        ];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) || self.max_newton_iters == 0 {
            return Err(Error::Config("search parameters must be positive".into()));
        }
        if self.multistart_grid < 4 {
            return Err(Error::Config(format!(
                "multistart_grid must be at least 4, got {}",
                self.multistart_grid
            )));
        }
        Ok(())
    }
}

/// Chart coordinates of a launch point: the continuous parameter, the
/// discrete branch, and a guess for any implicitly solved coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Seed {
    pub u: f64,
    pub branch: f64,
    pub aux: f64,
}

/// A launch point on the energy shell and its derivative along the chart.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Launch {
    pub q: [f64; MAX_DIM],
    pub p: [f64; MAX_DIM],
    pub dxdu: [f64; 2 * MAX_DIM],
    pub aux: f64,
}

/// Safeguarded Newton iteration for a scalar root, bracketed when `bracket` is given.
fn solve_scalar(
    f: impl Fn(f64) -> (f64, f64),
    x0: f64,
    bracket: Option<(f64, f64)>,
    tol: f64,
) -> Option<f64> {
    let mut x = x0;
    let (mut lo, mut hi) = bracket.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let f_lo = bracket.map(|(a, _)| f(a).0);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if !fx.is_finite() {
            return None;
        }
        if fx.abs() <= tol {
            return Some(x);
        }
        if let Some(fl) = f_lo {
            if (fx > 0.0) == (fl > 0.0) {
                lo = x;
            } else {
                hi = x;
            }
        }
        let mut next = if dfx != 0.0 { x - fx / dfx } else { f64::NAN };
        if bracket.is_some() && !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if !next.is_finite() {
            return None;
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return (f(next).0.abs() <= tol * 1e3).then_some(next);
        }
        x = next;
    }
    None
}

fn grad(model: &ModelSpec, q: &[f64; MAX_DIM]) -> [f64; MAX_DIM] {
    let mut g = [0.0; MAX_DIM];
    model.gradient_into(q, &mut g);
    g
}

/// Point on the energy shell for the given chart coordinates.
pub(crate) fn launch(model: &ModelSpec, bc: &BoundaryCondition, seed: &Seed) -> Result<Launch> {
    let n = model.n;
    let rep = &bc.rep;
    let e = bc.energy;
    let x = &bc.initial_values;
    let mut out = Launch {
        q: [0.0; MAX_DIM],
        p: [0.0; MAX_DIM],
        dxdu: [0.0; 2 * MAX_DIM],
        aux: seed.aux,
    };
    let off_shell = || Error::Domain("no launch point on the energy shell".into());
    match (n, rep.k()) {
        (1, 0) => {
            out.q[0] = x[0];
            let k = e - model.potential(&out.q);
            if k < 0.0 {
                return Err(off_shell());
            }
            out.p[0] = seed.branch * (2.0 * model.masses[0] * k).sqrt();
        }
        (1, _) => {
            out.p[0] = x[0];
            let c = e - 0.5 * x[0] * x[0] / model.masses[0];
            let tol = 1e-15 * c.abs().max(1.0);
            let f = |q: f64| (model.potential(&[q]) - c, grad(model, &[q, 0.0])[0]);
            let root = solve_scalar(f, seed.aux, None, tol).ok_or_else(off_shell)?;
            out.q[0] = root;
            out.aux = root;
        }
        (2, 0) => {
            out.q = [x[0], x[1]];
            let k = e - model.potential(&out.q);
            if k < 0.0 {
                return Err(off_shell());
            }
            let (r1, r2) = (
                (2.0 * model.masses[0] * k).sqrt(),
                (2.0 * model.masses[1] * k).sqrt(),
            );
            let (s, c) = seed.u.sin_cos();
            out.p = [r1 * c, r2 * s];
            out.dxdu = [0.0, 0.0, -r1 * s, r2 * c];
        }
        (2, 1) => {
            let a = rep.alpha[0];
            let b = rep.beta[0];
            out.q[a] = seed.u;
            out.q[b] = x[b];
            out.p[a] = x[a];
            let rest = e - 0.5 * x[a] * x[a] / model.masses[a] - model.potential(&out.q);
            if rest <= 0.0 {
                return Err(off_shell());
            }
            let pb = seed.branch * (2.0 * model.masses[b] * rest).sqrt();
            out.p[b] = pb;
            let g = grad(model, &out.q);
            out.dxdu[a] = 1.0;
            out.dxdu[2 + b] = -model.masses[b] * g[a] / pb;
        }
        _ => {
            out.p = [x[0], x[1]];
            let c = e - model.kinetic(&out.p);
            let (s, co) = seed.u.sin_cos();
            let dir = [co, s];
            let f = |r: f64| {
                let q = [r * dir[0], r * dir[1]];
                let g = grad(model, &q);
                (model.potential(&q) - c, g[0] * dir[0] + g[1] * dir[1])
            };
            let tol = 1e-15 * c.abs().max(1.0);
            let r = if seed.aux > 0.0 {
                solve_scalar(f, seed.aux, None, tol)
            } else {
                None
            }
            .filter(|r| *r > 0.0);
            let r = match r {
                Some(r) => r,
                None => radial_root(&f, tol).ok_or_else(off_shell)?,
            };
            out.q = [r * dir[0], r * dir[1]];
            out.aux = r;
            let g = grad(model, &out.q);
            let g_radial = g[0] * dir[0] + g[1] * dir[1];
            let g_angular = -g[0] * dir[1] + g[1] * dir[0];
            if g_radial == 0.0 {
                return Err(off_shell());
            }
            let dr = -r * g_angular / g_radial;
            out.dxdu = [dr * dir[0] - r * dir[1], dr * dir[1] + r * dir[0], 0.0, 0.0];
        }
    }
    Ok(out)
}

/// First root of `f(r)` for `r > 0`, scanning outward.
fn radial_root(f: &impl Fn(f64) -> (f64, f64), tol: f64) -> Option<f64> {
    let mut prev = (0.0, f(0.0).0);
    let mut r = 1e-3;
    while r < 1e4 {
        let v = f(r).0;
        if v == 0.0 {
            return Some(r);
        }
        if (v > 0.0) != (prev.1 > 0.0) {
            return solve_scalar(f, 0.5 * (prev.0 + r), Some((prev.0, r)), tol);
        }
        prev = (r, v);
        r *= 1.05;
    }
    None
}

/// Chart coordinates recovered from complementary initial coordinates `(q′_α, p′_β)`.
pub(crate) fn seed_from_complementary(model: &ModelSpec, rep: &Representation, comp: &[f64]) -> Seed {
    let sign = |x: f64| if x < 0.0 { -1.0 } else { 1.0 };
    match (model.n, rep.k()) {
        (1, 0) => Seed {
            u: 0.0,
            branch: sign(comp[0]),
            aux: 0.0,
        },
        (1, _) => Seed {
            u: 0.0,
            branch: 1.0,
            aux: comp[0],
        },
        (2, 0) => Seed {
            u: (comp[1] / model.masses[1].sqrt()).atan2(comp[0] / model.masses[0].sqrt()),
            branch: 1.0,
            aux: 0.0,
        },
        (2, 1) => {
            let a = rep.alpha[0];
            let b = rep.beta[0];
            Seed {
                u: comp[a],
                branch: sign(comp[b]),
                aux: 0.0,
            }
        }
        _ => Seed {
            u: comp[1].atan2(comp[0]),
            branch: 1.0,
            aux: comp[0].hypot(comp[1]),
        },
    }
}

/// Chart coordinates of an existing trajectory's launch point.
pub(crate) fn seed_of(model: &ModelSpec, rep: &Representation, traj: &Trajectory) -> Seed {
    let x0 = traj.initial();
    seed_from_complementary(model, rep, &rep.complementary(&x0.q, &x0.p))
}

/// Boundary residual and its derivatives at a final state.
struct Residual {
    r: [f64; MAX_DIM],
    dt: [f64; MAX_DIM],
}

fn residual(model: &ModelSpec, bc: &BoundaryCondition, st: &State) -> Residual {
    let n = model.n;
    let g = grad(model, &st.q);
    let mut out = Residual {
        r: [0.0; MAX_DIM],
        dt: [0.0; MAX_DIM],
    };
    for i in 0..n {
        if bc.rep.is_momentum(i) {
            out.r[i] = st.p[i] - bc.final_values[i];
            out.dt[i] = -g[i];
        } else {
            out.r[i] = st.q[i] - bc.final_values[i];
            out.dt[i] = st.p[i] / model.masses[i];
        }
    }
    out
}

fn norm(r: &[f64; MAX_DIM], n: usize) -> f64 {
    r[..n].iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A converged boundary-value solution.
#[derive(Debug, Clone)]
pub(crate) struct Solved {
    pub t: f64,
    pub state: State,
    pub initial: State,
    /// Determinant of the residual Jacobian at the root.
    pub jac_det: f64,
}

/// One-dimensional problems: the launch point is fixed by the chart, so the
/// duration is the only unknown. Roots near each guess are polished on one
/// shared states-only path.
pub(crate) fn solve_durations_1d(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    seed: &Seed,
    guesses: &[f64],
    params: &SearchParams,
) -> Result<Vec<Result<Solved>>> {
    let l = launch(model, bc, seed)?;
    let t_end = guesses.iter().cloned().fold(0.0, f64::max) * 1.05 + 2.0 * params.step;
    let path = Path::integrate(model, &l.q, &l.p, t_end, params.step, false)?;
    Ok(guesses
        .iter()
        .map(|&t0| newton_duration(model, bc, &path, t0, None, params))
        .collect())
}

fn newton_duration(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    path: &Path,
    t0: f64,
    bracket: Option<(f64, f64)>,
    params: &SearchParams,
) -> Result<Solved> {
    let eval = |t: f64| -> Result<(State, Residual)> {
        let st = path.state_at_extended(t)?;
        let r = residual(model, bc, &st);
        Ok((st, r))
    };
    let (mut lo, mut hi) = bracket.unwrap_or((0.0, f64::INFINITY));
    let r_lo = match bracket {
        Some((a, _)) => Some(eval(a)?.1.r[0]),
        None => None,
    };
    let cap = 2.0 * params.t_max.max(t0);
    let mut t = t0;
    let mut last = f64::INFINITY;
    for _ in 0..params.max_newton_iters.max(60) {
        let (st, r) = eval(t)?;
        let res = r.r[0].abs();
        if res <= params.newton_tol && (res == 0.0 || res >= last * 0.5 || res <= 1e-3 * params.newton_tol) {
            return Ok(Solved {
                t,
                state: st,
                initial: path.states[0],
                jac_det: r.dt[0],
            });
        }
        last = res;
        if let Some(rl) = r_lo {
            if (r.r[0] > 0.0) == (rl > 0.0) {
                lo = t;
            } else {
                hi = t;
            }
        }
        let mut next = t - r.r[0] / r.dt[0];
        if bracket.is_some() {
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
        } else if !next.is_finite() {
            return Err(Error::DegenerateBvp("vanishing flow along the residual".into()));
        } else if next <= 0.0 {
            next = 0.5 * t;
        } else if next > cap {
            // Extending the path is linear in the duration; keep trials near the window.
            next = 0.5 * (t + cap);
        }
        if next == t {
            if res <= params.newton_tol {
                return Ok(Solved {
                    t,
                    state: st,
                    initial: path.states[0],
                    jac_det: r.dt[0],
                });
            }
            break;
        }
        t = next;
    }
    let (_, r) = eval(t)?;
    Err(Error::NoConvergence {
        iterations: params.max_newton_iters,
        residual: r.r[0].abs(),
    })
}

/// Two-dimensional problems: Newton in (chart parameter, duration) with
/// backtracking on the residual norm.
pub(crate) fn newton_2d(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    seed: Seed,
    t0: f64,
    params: &SearchParams,
) -> Result<Solved> {
    let n = 2;
    let eval = |seed: &Seed, t: f64, tangent: bool| -> Result<(Launch, State, Residual)> {
        let l = launch(model, bc, seed)?;
        let path = Path::integrate(model, &l.q, &l.p, t, params.step, tangent)?;
        let st = *path.states.last().expect("nonempty");
        let r = residual(model, bc, &st);
        Ok((l, st, r))
    };
    let mut seed = seed;
    let mut t = t0;
    let (mut l, mut st, mut r) = eval(&seed, t, true)?;
    let mut res = norm(&r.r, n);
    for _ in 0..params.max_newton_iters {
        let mut jac = [[0.0; 2]; 2];
        for i in 0..n {
            let slot = bc.rep.transformed_slot(i);
            jac[i][0] = (0..2 * n).map(|c| st.m[slot][c] * l.dxdu[c]).sum();
            jac[i][1] = r.dt[i];
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let scale = (jac[0][0].hypot(jac[1][0]) * jac[0][1].hypot(jac[1][1])).max(1e-300);
        if res <= params.newton_tol {
            if det.abs() <= 1e-12 * scale {
                return Err(Error::DegenerateBvp(
                    "residual Jacobian is singular at the root".into(),
                ));
            }
            return Ok(Solved {
                t,
                state: st,
                initial: State::new(&l.q, &l.p),
                jac_det: det,
            });
        }
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: res,
            });
        }
        let du = -(jac[1][1] * r.r[0] - jac[0][1] * r.r[1]) / det;
        let dt = -(-jac[1][0] * r.r[0] + jac[0][0] * r.r[1]) / det;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = seed;
            trial.u += lambda * du;
            trial.aux = l.aux;
            let tt = t + lambda * dt;
            // Roots past t_max are discarded, so long excursions are wasted work.
            if tt > 0.0 && tt <= 2.0 * params.t_max {
                if let Ok((tl, _, tr)) = eval(&trial, tt, false) {
                    let tres = norm(&tr.r, n);
                    if tres < res || tres <= params.newton_tol {
                        seed = Seed { aux: tl.aux, ..trial };
                        t = tt;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        let next = eval(&seed, t, true)?;
        l = next.0;
        st = next.1;
        r = next.2;
        res = norm(&r.r, n);
    }
    Err(Error::NoConvergence {
        iterations: params.max_newton_iters,
        residual: res,
    })
}

/// Newton guess for [`refine`]: complementary initial coordinates
/// `(q′_α, p′_β)` in index order, and the duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guess {
    pub unknowns: Vec<f64>,
    pub t_f: f64,
}

fn check_degenerate(model: &ModelSpec, bc: &BoundaryCondition) -> Result<()> {
    if model.kind == ModelKind::FreeParticle && bc.rep.k() > 0 {
        return Err(Error::DegenerateBvp(
            "momentum is conserved by the free flow; the transformed momenta cannot be steered"
                .into(),
        ));
    }
    Ok(())
}

fn solved_to_trajectory(model: &ModelSpec, bc: &BoundaryCondition, s: &Solved, step: f64) -> Result<Trajectory> {
    let n = model.n;
    let path = Path::integrate(model, &s.initial.q[..n], &s.initial.p[..n], s.t, step, true)?;
    Ok(Trajectory::from_path(path, bc.energy))
}

/// Newton polish of one boundary-value solution from a guess.
pub fn refine(model: &ModelSpec, bc: &BoundaryCondition, guess: &Guess, params: &SearchParams) -> Result<Trajectory> {
    model.validate()?;
    bc.validate(model)?;
    params.validate()?;
    if guess.unknowns.len() != model.n {
        return Err(Error::Dimension(format!(
            "guess has {} unknowns, expected {}",
            guess.unknowns.len(),
            model.n
        )));
    }
    if !(guess.t_f > 0.0) || guess.unknowns.iter().any(|x| !x.is_finite()) || !guess.t_f.is_finite() {
        return Err(Error::Config("guess must be finite with positive duration".into()));
    }
    check_degenerate(model, bc)?;
    let seed = seed_from_complementary(model, &bc.rep, &guess.unknowns);
    let solved = solve_one(model, bc, seed, guess.t_f, params)?;
    if solved.jac_det == 0.0 {
        return Err(Error::DegenerateBvp("residual Jacobian is singular at the root".into()));
    }
    solved_to_trajectory(model, bc, &solved, params.step)
}

pub(crate) fn solve_one(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    seed: Seed,
    t: f64,
    params: &SearchParams,
) -> Result<Solved> {
    if model.n == 1 {
        solve_durations_1d(model, bc, &seed, &[t], params)?
            .pop()
            .expect("one guess")
    } else {
        newton_2d(model, bc, seed, t, params)
    }
}

/// Roots `q` of `V(q) = c` inside the search window.
fn level_roots_1d(model: &ModelSpec, c: f64, params: &SearchParams) -> Vec<f64> {
    let count = (params.multistart_grid * 64).max(512);
    let b = params.search_box;
    let xs: Vec<f64> = (0..=count).map(|i| -b + 2.0 * b * i as f64 / count as f64).collect();
    let f = |q: f64| (model.potential(&[q]) - c, grad(model, &[q, 0.0])[0]);
    let tol = 1e-15 * c.abs().max(1.0);
    let mut roots: Vec<f64> = Vec::new();
    for w in xs.windows(2) {
        let (fa, fb) = (f(w[0]).0, f(w[1]).0);
        if fa == 0.0 {
            roots.push(w[0]);
        } else if (fa > 0.0) != (fb > 0.0) && fb != 0.0 {
            if let Some(r) = solve_scalar(f, 0.5 * (w[0] + w[1]), Some((w[0], w[1])), tol) {
                roots.push(r);
            }
        }
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    roots
}

/// Initial chart seeds covering the energy shell.
fn shell_seeds(model: &ModelSpec, bc: &BoundaryCondition, params: &SearchParams) -> Vec<Seed> {
    let g = params.multistart_grid;
    let mut seeds = Vec::new();
    match (model.n, bc.rep.k()) {
        (1, 0) => {
            for branch in [1.0, -1.0] {
                seeds.push(Seed {
                    u: 0.0,
                    branch,
                    aux: 0.0,
                });
            }
        }
        (1, _) => {
            let p = bc.initial_values[0];
            let c = bc.energy - 0.5 * p * p / model.masses[0];
            for root in level_roots_1d(model, c, params) {
                seeds.push(Seed {
                    u: 0.0,
                    branch: 1.0,
                    aux: root,
                });
            }
        }
        (2, 0) | (2, 2) => {
            for j in 0..g {
                seeds.push(Seed {
                    u: std::f64::consts::TAU * (j as f64 + 0.5) / g as f64,
                    branch: 1.0,
                    aux: 0.0,
                });
            }
        }
        _ => {
            // Admissible launch positions form intervals; seeds are spread over them.
            let b = params.search_box;
            let fine = 64 * g;
            let admissible: Vec<f64> = (0..=fine)
                .map(|i| -b + 2.0 * b * i as f64 / fine as f64)
                .filter(|&s| {
                    launch(
                        model,
                        bc,
                        &Seed {
                            u: s,
                            branch: 1.0,
                            aux: 0.0,
                        },
                    )
                    .is_ok()
                })
                .collect();
            if admissible.is_empty() {
                return seeds;
            }
            let stride = (admissible.len() as f64 / g as f64).max(1.0);
            let mut idx = 0.5 * stride;
            while (idx as usize) < admissible.len() {
                for branch in [1.0, -1.0] {
                    seeds.push(Seed {
                        u: admissible[idx as usize],
                        branch,
                        aux: 0.0,
                    });
                }
                idx += stride;
            }
        }
    }
    seeds
}

/// Candidate durations along one launch: sign changes of the residual (1D) or
/// local minima of its norm (2D).
fn scan_candidates(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    path: &Path,
) -> Vec<(f64, Option<(f64, f64)>)> {
    let n = model.n;
    let res: Vec<Residual> = path.states.iter().map(|s| residual(model, bc, s)).collect();
    let mut out = Vec::new();
    if n == 1 {
        for k in 1..res.len() {
            let (a, b) = (res[k - 1].r[0], res[k].r[0]);
            if b == 0.0 {
                out.push((path.times[k], None));
            } else if a != 0.0 && (a > 0.0) != (b > 0.0) {
                let (ta, tb) = (path.times[k - 1], path.times[k]);
                out.push((0.5 * (ta + tb), Some((ta, tb))));
            }
        }
        // A pair of roots closer together than one step (endpoint near a
        // turning point) shows up as a sampled extremum of r that stays on
        // one side of zero. Locate the extremum and bracket both roots.
        for k in 1..res.len().saturating_sub(1) {
            let (a, b, c) = (res[k - 1].r[0], res[k].r[0], res[k + 1].r[0]);
            let same_side = (a > 0.0) == (b > 0.0) && (b > 0.0) == (c > 0.0) && a != 0.0 && b != 0.0 && c != 0.0;
            if !same_side || b.abs() > a.abs() || b.abs() > c.abs() {
                continue;
            }
            let (mut lo, mut hi) = (path.times[k - 1], path.times[k + 1]);
            let slope_lo = res[k - 1].dt[0];
            if (slope_lo > 0.0) == (res[k + 1].dt[0] > 0.0) {
                continue;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let s = residual(model, bc, &path.state_at(mid)).dt[0];
                if (s > 0.0) == (slope_lo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t_ext = 0.5 * (lo + hi);
            let r_ext = residual(model, bc, &path.state_at(t_ext)).r[0];
            if r_ext != 0.0 && (r_ext > 0.0) != (b > 0.0) {
                let (ta, tc) = (path.times[k - 1], path.times[k + 1]);
                out.push((0.5 * (ta + t_ext), Some((ta, t_ext))));
                out.push((0.5 * (t_ext + tc), Some((t_ext, tc))));
            }
        }
    } else {
        let norms: Vec<f64> = res.iter().map(|r| norm(&r.r, n)).collect();
        for k in 1..norms.len().saturating_sub(1) {
            if norms[k] <= norms[k - 1] && norms[k] <= norms[k + 1] {
                out.push((path.times[k], None));
            }
        }
    }
    out
}

fn is_duplicate(a: &Solved, b: &Solved, n: usize, tol: f64) -> bool {
    let scale = |x: f64, y: f64| tol * x.abs().max(y.abs()).max(1.0);
    if (a.t - b.t).abs() > scale(a.t, b.t) {
        return false;
    }
    (0..n).all(|i| {
        (a.initial.q[i] - b.initial.q[i]).abs() <= scale(a.initial.q[i], b.initial.q[i])
            && (a.initial.p[i] - b.initial.p[i]).abs() <= scale(a.initial.p[i], b.initial.p[i])
    })
}

/// Every distinct trajectory with duration at most `params.t_max` that
/// satisfies the boundary condition.
pub fn find_trajectories(model: &ModelSpec, bc: &BoundaryCondition, params: &SearchParams) -> Result<Vec<Trajectory>> {
    find_trajectories_seeded(model, bc, params, &[])
}

/// [`find_trajectories`] with additional Newton starts taken from known
/// trajectories, e.g. solutions at a neighboring energy.
pub fn find_trajectories_seeded(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    params: &SearchParams,
    hints: &[Trajectory],
) -> Result<Vec<Trajectory>> {
    let solved = solve_all(model, bc, params, hints)?;
    if model.n == 1 {
        // Solutions of one launch share a single long path; cut it at each root.
        let mut paths: Vec<(State, Path)> = Vec::new();
        for s in &solved {
            if !paths.iter().any(|(init, _)| *init == s.initial) {
                let t_end = solved
                    .iter()
                    .filter(|o| o.initial == s.initial)
                    .map(|o| o.t)
                    .fold(0.0, f64::max);
                let path = Path::integrate(model, &s.initial.q[..1], &s.initial.p[..1], t_end, params.step, true)?;
                paths.push((s.initial, path));
            }
        }
        let mut out = Vec::with_capacity(solved.len());
        for s in &solved {
            let path = &paths.iter().find(|(init, _)| *init == s.initial).expect("cached").1;
            let cut = if s.t == path.t_end() { path.clone() } else { path.truncated(s.t) };
            out.push(Trajectory::from_path(cut, bc.energy));
        }
        return Ok(out);
    }
    solved
        .iter()
        .map(|s| solved_to_trajectory(model, bc, s, params.step))
        .collect()
}

/// Converged, deduplicated roots sorted by duration.
pub(crate) fn solve_all(
    model: &ModelSpec,
    bc: &BoundaryCondition,
    params: &SearchParams,
    hints: &[Trajectory],
) -> Result<Vec<Solved>> {
    model.validate()?;
    bc.validate(model)?;
    params.validate()?;
    check_degenerate(model, bc)?;
    let n = model.n;
    let mut found: Vec<Solved> = Vec::new();
    let mut degenerate: Option<Error> = None;
    // t_max is inclusive; a root landing on it may come back a rounding error above.
    let t_limit = params.t_max * (1.0 + T_MAX_SLACK);
    let accept = |s: Solved, found: &mut Vec<Solved>| {
        if s.t > 0.0 && s.t <= t_limit && !found.iter().any(|o| is_duplicate(o, &s, n, params.dedup_tol)) {
            found.push(s);
        }
    };
    for seed in shell_seeds(model, bc, params) {
        let Ok(l) = launch(model, bc, &seed) else {
            continue;
        };
        let seed = Seed { aux: l.aux, ..seed };
        // One step past t_max so that a root at t_max is bracketed.
        let path = Path::integrate(model, &l.q[..n], &l.p[..n], params.t_max + params.step, params.step, false)?;
        for (t, bracket) in scan_candidates(model, bc, &path) {
            let result = if n == 1 {
                newton_duration(model, bc, &path, t, bracket, params)
            } else {
                newton_2d(model, bc, seed, t, params)
            };
            match result {
                Ok(s) => accept(s, &mut found),
                Err(e @ Error::DegenerateBvp(_)) => degenerate = Some(e),
                Err(_) => {}
            }
        }
    }
    for hint in hints {
        if hint.dim() != n {
            continue;
        }
        let seed = seed_of(model, &bc.rep, hint);
        if let Ok(s) = solve_one(model, bc, seed, hint.t_f, params) {
            accept(s, &mut found);
        }
    }
    if found.is_empty() {
        if let Some(e) = degenerate {
            return Err(e);
        }
    }
    found.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then(a.initial.p[0].total_cmp(&b.initial.p[0]))
            .then(a.initial.q[0].total_cmp(&b.initial.q[0]))
    });
    Ok(found)
}

/// Boundary residual norm of a trajectory with respect to `bc`.
pub fn boundary_residual(bc: &BoundaryCondition, traj: &Trajectory) -> f64 {
    let x0 = traj.initial();
    let x1 = traj.final_point();
    let a = bc.rep.transformed(&x0.q, &x0.p);
    let b = bc.rep.transformed(&x1.q, &x1.p);
    let start = a
        .iter()
        .zip(&bc.initial_values)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>();
    let end = b
        .iter()
        .zip(&bc.final_values)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>();
    (start + end).sqrt()
}

/// Residual Jacobian `∂(final transformed coordinates)/∂(chart parameter, t)` at a
/// trajectory, used as a conditioning diagnostic.
pub fn residual_jacobian(model: &ModelSpec, bc: &BoundaryCondition, traj: &Trajectory) -> Result<DMatrix<f64>> {
    let n = model.n;
    let seed = seed_of(model, &bc.rep, traj);
    let l = launch(model, bc, &seed)?;
    let x1 = traj.final_point();
    let st = State::new(&x1.q, &x1.p);
    let r = residual(model, bc, &st);
    let m = &traj.monodromy;
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let slot = bc.rep.transformed_slot(i);
        if n == 2 {
            let dx = DVector::from_row_slice(&l.dxdu[..4]);
            jac[(i, 0)] = (m.row(slot) * dx)[0];
        }
        jac[(i, n - 1)] = r.dt[i];
    }
    Ok(jac)
}

/// Launch point at the given complementary coordinates projected onto the
/// energy shell.
pub fn shell_point(model: &ModelSpec, bc: &BoundaryCondition, complementary: &[f64]) -> Result<PhasePoint> {
    let seed = seed_from_complementary(model, &bc.rep, complementary);
    let l = launch(model, bc, &seed)?;
    PhasePoint::new(l.q[..model.n].to_vec(), l.p[..model.n].to_vec())
}
