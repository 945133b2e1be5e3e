//! Fixed-step symplectic integration of Hamilton's equations together with the
//! tangent (monodromy) map and the action `∫ p·dq`.
//!
//! The scheme is an eighth-order composition of the Strang splitting
//! (half drift, kick, half drift). The tangent map is propagated by the
//! linearization of each substep, so the stored monodromy matrices are
//! symplectic to rounding. The action is advanced inside each drift, where
//! `p` is frozen and `p·Δq` is exact.
//!
//! Time samples sit on the grid `t_k = k·h` up to `⌊t_f/h⌋·h`, followed by a
//! single partial step to `t_f`. Any intermediate state is produced by one
//! partial step from the nearest earlier sample, which makes every
//! evaluation reproducible bit for bit.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelSpec, PhasePoint, Representation, MAX_DIM};
use crate::error::{Error, Result};

/// Default integration step. Meets the energy and symplecticity budgets on
/// the benchmark models at moderate energies.
pub const DEFAULT_STEP: f64 = 0.05;

/// Width in `t` to which sign changes of a caustic determinant are localized.
pub const CAUSTIC_TIME_TOL: f64 = 1e-7;

const TANGENTIAL_CANDIDATE: f64 = 0.1;
/// Zeros of a representation block this close to the final time (relative
/// to `max(1, t_f)`) are treated as lying on the endpoint.
pub const ENDPOINT_CONJUGATE_TOL: f64 = 1e-6;
const TANGENTIAL_ACCEPT: f64 = 1e-8;
const KERNEL_REL_TOL: f64 = 1e-4;

const YOSHIDA8: [f64; 7] = [
    0.102799849391985,
    -1.96061023357152,
    1.93813913762276,
    -0.158240635368243,
    -1.44485223686048,
    0.253693336566229,
    0.914844246229740,
];

/// Drift and kick fractions of one composed step, with adjacent half drifts merged.
#[derive(Debug, Clone, Copy)]
struct Scheme {
    drift: [f64; 16],
    kick: [f64; 15],
}

fn scheme() -> Scheme {
    let w0 = 1.0 - 2.0 * YOSHIDA8.iter().sum::<f64>();
    let mut stages = [0.0; 15];
    for i in 0..7 {
        stages[i] = YOSHIDA8[6 - i];
        stages[14 - i] = YOSHIDA8[6 - i];
    }
    stages[7] = w0;
    let mut drift = [0.0; 16];
    drift[0] = 0.5 * stages[0];
    for i in 1..15 {
        drift[i] = 0.5 * (stages[i - 1] + stages[i]);
    }
    drift[15] = 0.5 * stages[14];
    Scheme {
        drift,
        kick: stages,
    }
}

/// Compact integrator state: positions, momenta, accumulated action and the
/// tangent map in `(q, p)` ordering (only the leading `2n × 2n` block is used).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct State {
    pub q: [f64; MAX_DIM],
    pub p: [f64; MAX_DIM],
    pub action: f64,
    pub m: [[f64; 2 * MAX_DIM]; 2 * MAX_DIM],
}

impl State {
    pub fn new(q: &[f64], p: &[f64]) -> Self {
        let mut s = State {
            q: [0.0; MAX_DIM],
            p: [0.0; MAX_DIM],
            action: 0.0,
            m: [[0.0; 2 * MAX_DIM]; 2 * MAX_DIM],
        };
        s.q[..q.len()].copy_from_slice(q);
        s.p[..p.len()].copy_from_slice(p);
        for (i, row) in s.m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        s
    }

    pub fn point(&self, n: usize) -> PhasePoint {
        PhasePoint {
            q: self.q[..n].to_vec(),
            p: self.p[..n].to_vec(),
        }
    }

    pub fn monodromy(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(2 * n, 2 * n, |i, j| self.m[i][j])
    }

    fn is_finite(&self, n: usize, tangent: bool) -> bool {
        let base = self.q[..n]
            .iter()
            .chain(self.p[..n].iter())
            .all(|x| x.is_finite())
            && self.action.is_finite();
        base && (!tangent || self.m.iter().flatten().all(|x| x.is_finite()))
    }
}

#[inline]
fn drift(model: &ModelSpec, st: &mut State, tau: f64, tangent: bool) {
    let n = model.n;
    for i in 0..n {
        let inv_m = 1.0 / model.masses[i];
        let dq = tau * st.p[i] * inv_m;
        st.q[i] += dq;
        st.action += st.p[i] * dq;
        if tangent {
            for c in 0..2 * n {
                st.m[i][c] += tau * inv_m * st.m[n + i][c];
            }
        }
    }
}

#[inline]
fn kick(model: &ModelSpec, st: &mut State, tau: f64, tangent: bool) {
    let n = model.n;
    let mut g = [0.0; MAX_DIM];
    model.gradient_into(&st.q, &mut g);
    for i in 0..n {
        st.p[i] -= tau * g[i];
    }
    if tangent {
        let h = model.hessian(&st.q);
        for c in 0..2 * n {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += h[i][j] * st.m[j][c];
                }
                st.m[n + i][c] -= tau * acc;
            }
        }
    }
}

fn step(model: &ModelSpec, sc: &Scheme, st: &mut State, h: f64, tangent: bool) {
    for i in 0..15 {
        drift(model, st, sc.drift[i] * h, tangent);
        kick(model, st, sc.kick[i] * h, tangent);
    }
    drift(model, st, sc.drift[15] * h, tangent);
}

/// Sampled solution on the uniform time grid plus the final partial step.
#[derive(Debug, Clone)]
pub(crate) struct Path {
    pub model: ModelSpec,
    pub h: f64,
    pub tangent: bool,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    sc: Scheme,
}

impl Path {
    pub fn integrate(
        model: &ModelSpec,
        q0: &[f64],
        p0: &[f64],
        t_f: f64,
        h: f64,
        tangent: bool,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("integration step must be positive, got {h}")));
        }
        if !(t_f > 0.0 && t_f.is_finite()) {
            return Err(Error::Config(format!("duration must be positive, got {t_f}")));
        }
        let sc = scheme();
        let n = model.n;
        let full = (t_f / h).floor() as usize;
        let mut times = Vec::with_capacity(full + 2);
        let mut states = Vec::with_capacity(full + 2);
        let mut st = State::new(q0, p0);
        if !st.is_finite(n, tangent) {
            return Err(Error::IntegrationBlowup { t: 0.0 });
        }
        times.push(0.0);
        states.push(st);
        for k in 1..=full {
            step(model, &sc, &mut st, h, tangent);
            let t = k as f64 * h;
            if !st.is_finite(n, tangent) {
                return Err(Error::IntegrationBlowup { t });
            }
            times.push(t);
            states.push(st);
        }
        let last = *times.last().expect("nonempty");
        let rest = t_f - last;
        if rest > 1e-14 * t_f.max(1.0) {
            step(model, &sc, &mut st, rest, tangent);
            if !st.is_finite(n, tangent) {
                return Err(Error::IntegrationBlowup { t: t_f });
            }
            times.push(t_f);
            states.push(st);
        } else if full > 0 {
            *times.last_mut().expect("nonempty") = t_f;
        } else {
            return Err(Error::Config(format!("duration {t_f} too short")));
        }
        Ok(Self {
            model: model.clone(),
            h,
            tangent,
            times,
            states,
            sc,
        })
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    /// Index of the grid sample at or before `t`.
    fn base_index(&self, t: f64) -> usize {
        let grid_len = if self.states.len() >= 2
            && (self.times[self.times.len() - 1] - self.times[self.times.len() - 2]) < self.h * (1.0 - 1e-12)
        {
            self.states.len() - 1
        } else {
            self.states.len()
        };
        let k = (t / self.h).floor() as isize;
        k.clamp(0, grid_len as isize - 1) as usize
    }

    /// The path cut at `t ∈ (0, t_end]`.
    pub fn truncated(&self, t: f64) -> Path {
        let k = self.base_index(t);
        let mut path = self.clone();
        let tail = self.state_at(t);
        path.times.truncate(k + 1);
        path.states.truncate(k + 1);
        if t > path.times[k] {
            path.times.push(t);
            path.states.push(tail);
        }
        path
    }

    /// State at time `t ∈ [0, t_end]`, reproducible for identical `t`.
    pub fn state_at(&self, t: f64) -> State {
        if t == self.t_end() {
            return *self.states.last().expect("nonempty");
        }
        let k = self.base_index(t);
        let mut st = self.states[k];
        let tau = t - self.times[k];
        if tau != 0.0 {
            step(&self.model, &self.sc, &mut st, tau, self.tangent);
        }
        st
    }

    /// State at `t`, allowed beyond the end of the path by continuing the grid.
    pub fn state_at_extended(&self, t: f64) -> Result<State> {
        if t <= self.t_end() {
            return Ok(self.state_at(t));
        }
        let mut k = self.base_index(self.t_end());
        let mut st = self.states[k];
        let n = self.model.n;
        while (k + 1) as f64 * self.h <= t {
            step(&self.model, &self.sc, &mut st, self.h, self.tangent);
            k += 1;
            if !st.is_finite(n, self.tangent) {
                return Err(Error::IntegrationBlowup { t: k as f64 * self.h });
            }
        }
        let tau = t - k as f64 * self.h;
        if tau != 0.0 {
            step(&self.model, &self.sc, &mut st, tau, self.tangent);
        }
        Ok(st)
    }
}

/// Reason a determinant zero was logged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausticKind {
    /// The determinant changes sign.
    SignChange,
    /// The determinant touches zero without changing sign.
    Tangential,
}

/// One zero of a representation's Jacobian-block determinant along the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausticEvent {
    pub t: f64,
    pub kind: CausticKind,
    /// Dimension of the kernel of the block at the zero.
    pub kernel_dim: usize,
    /// Signature of the crossing form `δxᵀ ∇²H δx` restricted to the kernel.
    pub signature: i32,
}

/// Sensitivity block `∂(p_α, q_β)(t) / ∂(q_α, p_β)(0)` of a tangent map.
fn block(m: &[[f64; 2 * MAX_DIM]; 2 * MAX_DIM], rep: &Representation) -> DMatrix<f64> {
    let n = rep.n;
    DMatrix::from_fn(n, n, |i, j| {
        m[rep.transformed_slot(i)][rep.complementary_slot(j)]
    })
}

/// Block determinant divided by the product of the corresponding full column
/// norms of the tangent map, so that its magnitude is at most one.
fn normalized_det(st: &State, rep: &Representation) -> f64 {
    let n = rep.n;
    let det = match n {
        1 => st.m[rep.transformed_slot(0)][rep.complementary_slot(0)],
        _ => {
            let b = |i: usize, j: usize| st.m[rep.transformed_slot(i)][rep.complementary_slot(j)];
            b(0, 0) * b(1, 1) - b(0, 1) * b(1, 0)
        }
    };
    let mut scale = 1.0;
    for j in 0..n {
        let c = rep.complementary_slot(j);
        let norm: f64 = (0..2 * n).map(|r| st.m[r][c].powi(2)).sum::<f64>().sqrt();
        scale *= norm;
    }
    if scale > 0.0 {
        det / scale
    } else {
        det
    }
}

/// Kernel dimension and crossing-form signature of the block at a zero.
fn crossing_data(model: &ModelSpec, st: &State, rep: &Representation, kind: CausticKind) -> (usize, i32) {
    let n = model.n;
    let b = block(&st.m, rep);
    let svd = b.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let col_scale = (0..n)
        .map(|j| {
            let c = rep.complementary_slot(j);
            (0..2 * n).map(|r| st.m[r][c].powi(2)).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut kernel: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= KERNEL_REL_TOL * col_scale)
        .map(|i| v_t.row(i).transpose())
        .collect();
    if kernel.is_empty() && kind == CausticKind::SignChange {
        let i = svd.singular_values.imin();
        kernel.push(v_t.row(i).transpose());
    }
    let hess = model.hessian(&st.q);
    let images: Vec<([f64; MAX_DIM], [f64; MAX_DIM])> = kernel
        .iter()
        .map(|v| {
            let mut dq = [0.0; MAX_DIM];
            let mut dp = [0.0; MAX_DIM];
            for r in 0..n {
                let mut aq = 0.0;
                let mut ap = 0.0;
                for j in 0..n {
                    let c = rep.complementary_slot(j);
                    aq += st.m[r][c] * v[j];
                    ap += st.m[n + r][c] * v[j];
                }
                dq[r] = aq;
                dp[r] = ap;
            }
            (dq, dp)
        })
        .collect();
    let d = images.len();
    let form = DMatrix::from_fn(d, d, |a, b| {
        let (qa, pa) = images[a];
        let (qb, pb) = images[b];
        let mut acc = 0.0;
        for i in 0..n {
            acc += pa[i] * pb[i] / model.masses[i];
            for j in 0..n {
                acc += qa[i] * hess[i][j] * qb[j];
            }
        }
        acc
    });
    let eig = SymmetricEigen::new(form);
    let scale = eig.eigenvalues.amax().max(1e-300);
    let signature = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l > 1e-10 * scale {
                1
            } else if l < -1e-10 * scale {
                -1
            } else {
                0
            }
        })
        .sum();
    (d, signature)
}

/// Scans the samples for zeros of every representation's block determinant.
fn scan_caustics(path: &Path) -> BTreeMap<String, Vec<CausticEvent>> {
    let n = path.model.n;
    let mut log = BTreeMap::new();
    for rep in Representation::all(n) {
        let dets: Vec<f64> = path.states.iter().map(|s| normalized_det(s, &rep)).collect();
        let mut events = Vec::new();
        // The block vanishes at t = 0, so scanning starts at the first step.
        let mut last: Option<(usize, f64)> = None;
        for (k, &d) in dets.iter().enumerate().skip(1) {
            if d == 0.0 {
                continue;
            }
            if let Some((kl, dl)) = last {
                if dl.signum() != d.signum() {
                    let t = bisect(path, &rep, kl, k, dl);
                    let st = path.state_at(t);
                    let (kernel_dim, signature) =
                        crossing_data(&path.model, &st, &rep, CausticKind::SignChange);
                    events.push(CausticEvent {
                        t,
                        kind: CausticKind::SignChange,
                        kernel_dim,
                        signature,
                    });
                }
            }
            last = Some((k, d));
        }
        // Tangential zeros: interior local minima of |det| without a sign change.
        for k in 2..dets.len().saturating_sub(1) {
            let (a, b, c) = (dets[k - 1].abs(), dets[k].abs(), dets[k + 1].abs());
            if b >= TANGENTIAL_CANDIDATE || !(b <= a && b <= c && b < a.max(c)) {
                continue;
            }
            if !(dets[k - 1] * dets[k] > 0.0 && dets[k] * dets[k + 1] > 0.0) {
                continue;
            }
            let Some(t) = golden_min(path, &rep, path.times[k - 1], path.times[k + 1]) else {
                continue;
            };
            if events.iter().any(|e: &CausticEvent| (e.t - t).abs() < 10.0 * CAUSTIC_TIME_TOL) {
                continue;
            }
            let st = path.state_at(t);
            let (kernel_dim, signature) =
                crossing_data(&path.model, &st, &rep, CausticKind::Tangential);
            events.push(CausticEvent {
                t,
                kind: CausticKind::Tangential,
                kernel_dim,
                signature,
            });
        }
        events.sort_by(|x, y| x.t.total_cmp(&y.t));
        log.insert(rep.key(), events);
    }
    log
}

fn bisect(path: &Path, rep: &Representation, ka: usize, kb: usize, da: f64) -> f64 {
    let (mut lo, mut hi) = (path.times[ka], path.times[kb]);
    while hi - lo > CAUSTIC_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        let d = normalized_det(&path.state_at(mid), rep);
        if d == 0.0 {
            return mid;
        }
        if d.signum() == da.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section minimization of `|det|`; returns the minimizer if the
/// minimum is numerically zero.
fn golden_min(path: &Path, rep: &Representation, a: f64, b: f64) -> Option<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let f = |t: f64| normalized_det(&path.state_at(t), rep).abs();
    let (mut a, mut b) = (a, b);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > CAUSTIC_TIME_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (f(t) < TANGENTIAL_ACCEPT).then_some(t)
}

/// A classical path at fixed energy with its tangent map, action and caustic log.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub model: ModelSpec,
    pub energy: f64,
    pub t_f: f64,
    pub step: f64,
    pub action_full: f64,
    pub monodromy: DMatrix<f64>,
    /// Zeros of each representation's block determinant keyed by [`Representation::key`].
    pub caustic_log: BTreeMap<String, Vec<CausticEvent>>,
    pub(crate) path: Path,
}

impl Trajectory {
    pub(crate) fn from_path(path: Path, energy: f64) -> Self {
        let n = path.model.n;
        let last = *path.states.last().expect("nonempty");
        let log = scan_caustics(&path);
        Self {
            model: path.model.clone(),
            energy,
            t_f: path.t_end(),
            step: path.h,
            action_full: last.action,
            monodromy: last.monodromy(n),
            caustic_log: log,
            path,
        }
    }

    pub fn dim(&self) -> usize {
        self.model.n
    }

    /// Crossing-form signature of a zero of the representation block at the
    /// final time, if there is one: a logged event within
    /// [`ENDPOINT_CONJUGATE_TOL`] of `t_f`, or a vanishing block at `t_f` itself.
    pub fn endpoint_conjugacy(&self, rep: &Representation) -> Option<i32> {
        let tol = ENDPOINT_CONJUGATE_TOL * self.t_f.max(1.0);
        let near: Vec<&CausticEvent> = self
            .caustic_log
            .get(&rep.key())?
            .iter()
            .filter(|e| (e.t - self.t_f).abs() <= tol)
            .collect();
        if !near.is_empty() {
            return Some(near.iter().map(|e| e.signature).sum());
        }
        let last = self.path.states.last()?;
        if normalized_det(last, rep).abs() <= ENDPOINT_CONJUGATE_TOL {
            return Some(crossing_data(&self.model, last, rep, CausticKind::SignChange).1);
        }
        None
    }

    pub fn len(&self) -> usize {
        self.path.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.path.times
    }

    pub fn sample(&self, k: usize) -> (f64, PhasePoint) {
        (self.path.times[k], self.path.states[k].point(self.dim()))
    }

    /// All samples as `(t, point)` pairs.
    pub fn samples(&self) -> Vec<(f64, PhasePoint)> {
        (0..self.len()).map(|k| self.sample(k)).collect()
    }

    pub fn sample_action(&self, k: usize) -> f64 {
        self.path.states[k].action
    }

    pub fn sample_monodromy(&self, k: usize) -> DMatrix<f64> {
        self.path.states[k].monodromy(self.dim())
    }

    pub fn initial(&self) -> PhasePoint {
        self.path.states[0].point(self.dim())
    }

    pub fn final_point(&self) -> PhasePoint {
        self.path.states.last().expect("nonempty").point(self.dim())
    }

    /// State, action and tangent map at an intermediate time.
    pub fn state_at(&self, t: f64) -> Result<(PhasePoint, f64, DMatrix<f64>)> {
        self.check_time(t)?;
        let st = self.path.state_at(t);
        Ok((st.point(self.dim()), st.action, st.monodromy(self.dim())))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.t_f) {
            return Err(Error::Range(format!("t = {t} outside [0, {}]", self.t_f)));
        }
        Ok(())
    }

    /// The same trajectory cut at an earlier duration. Bitwise identical to a
    /// fresh integration of the same initial data over `t`.
    pub fn truncated(&self, t: f64) -> Result<Trajectory> {
        self.check_time(t)?;
        if t <= 0.0 {
            return Err(Error::Config("truncation time must be positive".into()));
        }
        if t == self.t_f {
            return Ok(self.clone());
        }
        Ok(Trajectory::from_path(self.path.truncated(t), self.energy))
    }

    /// Serializable dump of the trajectory.
    pub fn to_dump(&self) -> TrajectoryDump {
        TrajectoryDump {
            energy: self.energy,
            t_f: self.t_f,
            samples: (0..self.len())
                .map(|k| {
                    let st = &self.path.states[k];
                    (self.path.times[k], st.q[..self.dim()].to_vec(), st.p[..self.dim()].to_vec())
                })
                .collect(),
            monodromy: (0..self.monodromy.nrows())
                .map(|i| self.monodromy.row(i).iter().copied().collect())
                .collect(),
            action_full: self.action_full,
            caustic_log: self
                .caustic_log
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|e| e.t).collect()))
                .collect(),
        }
    }
}

/// JSON layout of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDump {
    pub energy: f64,
    pub t_f: f64,
    pub samples: Vec<(f64, Vec<f64>, Vec<f64>)>,
    pub monodromy: Vec<Vec<f64>>,
    pub action_full: f64,
    pub caustic_log: BTreeMap<String, Vec<f64>>,
}

/// Integrates the flow from `x0` over `[0, t_f]` with the given step.
pub fn integrate(model: &ModelSpec, x0: &PhasePoint, t_f: f64, step: f64) -> Result<Trajectory> {
    model.validate()?;
    if x0.q.len() != model.n || x0.p.len() != model.n {
        return Err(Error::Dimension(format!(
            "model has n = {}, initial point has {} components",
            model.n,
            x0.q.len()
        )));
    }
    if x0.q.iter().chain(x0.p.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Config("initial point must be finite".into()));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    if !(t_f > 0.0 && t_f.is_finite()) {
        return Err(Error::Config(format!("duration must be positive, got {t_f}")));
    }
    let path = Path::integrate(model, &x0.q, &x0.p, t_f, step, true)?;
    let energy = model.energy_of(&x0.q, &x0.p);
    Ok(Trajectory::from_path(path, energy))
}

/// Phase point at time `t` along the trajectory.
pub fn evaluate_at(traj: &Trajectory, t: f64) -> Result<PhasePoint> {
    traj.check_time(t)?;
    Ok(traj.path.state_at(t).point(traj.dim()))
}

/// Representation action `S̃ = S + p′_α·q′_α − p″_α·q″_α`.
pub fn action_mixed(traj: &Trajectory, rep: &Representation) -> Result<f64> {
    if rep.n != traj.dim() {
        return Err(Error::Dimension(format!(
            "representation has n = {}, trajectory has n = {}",
            rep.n,
            traj.dim()
        )));
    }
    let a = &traj.path.states[0];
    let b = traj.path.states.last().expect("nonempty");
    let mut s = traj.action_full;
    for &i in &rep.alpha {
        s += a.p[i] * a.q[i] - b.p[i] * b.q[i];
    }
    Ok(s)
}

/// `S̃` as the line integral `∫ (p_β·dq_β − q_α·dp_α)` evaluated by
/// Gauss–Legendre quadrature on each step, independently of the action
/// accumulated by the integrator.
pub fn action_mixed_quadrature(traj: &Trajectory, rep: &Representation) -> Result<f64> {
    if rep.n != traj.dim() {
        return Err(Error::Dimension(format!(
            "representation has n = {}, trajectory has n = {}",
            rep.n,
            traj.dim()
        )));
    }
    let model = &traj.model;
    let n = traj.dim();
    let nodes = crate::bench::gauss_legendre(8);
    let integrand = |t: f64| {
        let st = traj.path.state_at(t);
        let mut grad = [0.0; MAX_DIM];
        model.gradient_into(&st.q, &mut grad);
        (0..n)
            .map(|i| {
                if rep.is_momentum(i) {
                    st.q[i] * grad[i]
                } else {
                    st.p[i] * st.p[i] / model.masses[i]
                }
            })
            .sum::<f64>()
    };
    let times = &traj.path.times;
    let mut total = 0.0;
    for w in times.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        total += nodes.iter().map(|&(x, wt)| wt * integrand(mid + half * x)).sum::<f64>() * half;
    }
    Ok(total)
}

/// Endpoint state after integrating without the tangent map. Used for cheap
/// re-solves; the arithmetic of the state variables matches [`integrate`].
pub fn propagate(model: &ModelSpec, x0: &PhasePoint, t_f: f64, step: f64) -> Result<(PhasePoint, f64)> {
    let path = Path::integrate(model, &x0.q, &x0.p, t_f, step, false)?;
    let st = path.states.last().expect("nonempty");
    Ok((st.point(model.n), st.action))
}

/// Difference between the endpoint computed with `step` and with `step / 2`,
/// as a max-norm over `(q, p)`. Serves as the step-halving convergence check.
pub fn step_halving_error(model: &ModelSpec, x0: &PhasePoint, t_f: f64, step: f64) -> Result<f64> {
    let (a, _) = propagate(model, x0, t_f, step)?;
    let (b, _) = propagate(model, x0, t_f, 0.5 * step)?;
    Ok(a.to_vec()
        .iter()
        .zip(b.to_vec().iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// `‖MᵀJM − J‖∞` (max absolute entry).
pub fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows() / 2;
    let j = crate::dynamics::symplectic_form(n);
    (m.transpose() * &j * m - j).amax()
}
