//! Hamiltonian models with separable kinetic energy, phase-space points and
//! the disjoint momentum/position index partitions that define a mixed
//! representation.
//!
//! Every model has the form `H(p, q) = Σ p_i² / (2 m_i) + V(q)` with `n ∈ {1, 2}`
//! degrees of freedom. Units are dimensionless; ħ never enters here.
//!
//! Polynomial potentials list their coefficients in graded lexicographic
//! order. For `n = 1` this is `c0 + c1 q + c2 q² + …`. For `n = 2` the
//! monomials of total degree `d` are ordered `q1^d, q1^(d-1) q2, …, q2^d`, so a
//! quadratic potential reads `[1, q1, q2, q1², q1 q2, q2²]`. The coefficient
//! list must be complete up to its highest degree.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum supported number of degrees of freedom.
pub const MAX_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    FreeParticle,
    HarmonicOscillator,
    /// `V = Σ ½ m_i ω_i² q_i² + Σ c_i q_i⁴ / 4 (+ c_12 q1² q2²)`. Frequencies may be
    /// omitted for a pure quartic well.
    AnharmonicQuartic,
    PolynomialPotential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n: usize,
    pub masses: Vec<f64>,
    #[serde(default)]
    pub frequencies: Vec<f64>,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

impl ModelSpec {
    pub fn free_particle(masses: &[f64]) -> Self {
        Self {
            kind: ModelKind::FreeParticle,
            n: masses.len(),
            masses: masses.to_vec(),
            frequencies: Vec::new(),
            coefficients: Vec::new(),
        }
    }

    pub fn harmonic(masses: &[f64], frequencies: &[f64]) -> Self {
        Self {
            kind: ModelKind::HarmonicOscillator,
            n: masses.len(),
            masses: masses.to_vec(),
            frequencies: frequencies.to_vec(),
            coefficients: Vec::new(),
        }
    }

    pub fn quartic(masses: &[f64], frequencies: &[f64], coefficients: &[f64]) -> Self {
        Self {
            kind: ModelKind::AnharmonicQuartic,
            n: masses.len(),
            masses: masses.to_vec(),
            frequencies: frequencies.to_vec(),
            coefficients: coefficients.to_vec(),
        }
    }

    pub fn polynomial(masses: &[f64], coefficients: &[f64]) -> Self {
        Self {
            kind: ModelKind::PolynomialPotential,
            n: masses.len(),
            masses: masses.to_vec(),
            frequencies: Vec::new(),
            coefficients: coefficients.to_vec(),
        }
    }

    /// Checks the structural invariants of the model.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_DIM {
            return Err(Error::Config(format!("n must be 1 or 2, got {}", self.n)));
        }
        if self.masses.len() != self.n {
            return Err(Error::Config(format!(
                "expected {} masses, got {}",
                self.n,
                self.masses.len()
            )));
        }
        if self.masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Config("masses must be positive and finite".into()));
        }
        let check_freqs = |required: bool| -> Result<()> {
            if self.frequencies.is_empty() && !required {
                return Ok(());
            }
            if self.frequencies.len() != self.n {
                return Err(Error::Config(format!(
                    "expected {} frequencies, got {}",
                    self.n,
                    self.frequencies.len()
                )));
            }
            if self.frequencies.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::Config("frequencies must be positive and finite".into()));
            }
            Ok(())
        };
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("coefficients must be finite".into()));
        }
        match self.kind {
            ModelKind::FreeParticle => Ok(()),
            ModelKind::HarmonicOscillator => check_freqs(true),
            ModelKind::AnharmonicQuartic => {
                check_freqs(false)?;
                let ok = self.coefficients.len() == self.n
                    || (self.n == 2 && self.coefficients.len() == 3);
                if !ok {
                    return Err(Error::Config(format!(
                        "quartic model needs {} coefficients (plus an optional coupling for n = 2), got {}",
                        self.n,
                        self.coefficients.len()
                    )));
                }
                Ok(())
            }
            ModelKind::PolynomialPotential => {
                polynomial_degree(self.n, self.coefficients.len()).map(|_| ())
            }
        }
    }

    fn omega(&self, i: usize) -> f64 {
        self.frequencies.get(i).copied().unwrap_or(0.0)
    }

    /// Potential energy `V(q)`.
    pub fn potential(&self, q: &[f64]) -> f64 {
        match self.kind {
            ModelKind::FreeParticle => 0.0,
            ModelKind::HarmonicOscillator => (0..self.n)
                .map(|i| 0.5 * self.masses[i] * self.omega(i).powi(2) * q[i] * q[i])
                .sum(),
            ModelKind::AnharmonicQuartic => {
                let mut v = 0.0;
                for i in 0..self.n {
                    let q2 = q[i] * q[i];
                    v += 0.5 * self.masses[i] * self.omega(i).powi(2) * q2
                        + 0.25 * self.coefficients[i] * q2 * q2;
                }
                if let Some(c) = self.coupling() {
                    v += c * q[0] * q[0] * q[1] * q[1];
                }
                v
            }
            ModelKind::PolynomialPotential => self.poly_eval(q, (0, 0)),
        }
    }

    /// Gradient of the potential written into `out[..n]`.
    pub fn gradient_into(&self, q: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::FreeParticle => out[..self.n].iter_mut().for_each(|g| *g = 0.0),
            ModelKind::HarmonicOscillator => {
                for i in 0..self.n {
                    out[i] = self.masses[i] * self.omega(i).powi(2) * q[i];
                }
            }
            ModelKind::AnharmonicQuartic => {
                for i in 0..self.n {
                    out[i] = self.masses[i] * self.omega(i).powi(2) * q[i]
                        + self.coefficients[i] * q[i] * q[i] * q[i];
                }
                if let Some(c) = self.coupling() {
                    out[0] += 2.0 * c * q[0] * q[1] * q[1];
                    out[1] += 2.0 * c * q[1] * q[0] * q[0];
                }
            }
            ModelKind::PolynomialPotential => {
                out[0] = self.poly_eval(q, (1, 0));
                if self.n == 2 {
                    out[1] = self.poly_eval(q, (0, 1));
                }
            }
        }
    }

    /// Hessian of the potential; only the leading `n × n` block is meaningful.
    pub fn hessian(&self, q: &[f64]) -> [[f64; MAX_DIM]; MAX_DIM] {
        let mut h = [[0.0; MAX_DIM]; MAX_DIM];
        match self.kind {
            ModelKind::FreeParticle => {}
            ModelKind::HarmonicOscillator => {
                for (i, row) in h.iter_mut().enumerate().take(self.n) {
                    row[i] = self.masses[i] * self.omega(i).powi(2);
                }
            }
            ModelKind::AnharmonicQuartic => {
                for (i, row) in h.iter_mut().enumerate().take(self.n) {
                    row[i] = self.masses[i] * self.omega(i).powi(2)
                        + 3.0 * self.coefficients[i] * q[i] * q[i];
                }
                if let Some(c) = self.coupling() {
                    h[0][0] += 2.0 * c * q[1] * q[1];
                    h[1][1] += 2.0 * c * q[0] * q[0];
                    h[0][1] = 4.0 * c * q[0] * q[1];
                    h[1][0] = h[0][1];
                }
            }
            ModelKind::PolynomialPotential => {
                h[0][0] = self.poly_eval(q, (2, 0));
                if self.n == 2 {
                    h[0][1] = self.poly_eval(q, (1, 1));
                    h[1][0] = h[0][1];
                    h[1][1] = self.poly_eval(q, (0, 2));
                }
            }
        }
        h
    }

    fn coupling(&self) -> Option<f64> {
        (self.n == 2 && self.coefficients.len() == 3).then(|| self.coefficients[2])
    }

    /// Evaluates the `(d1, d2)`-th partial derivative of the polynomial potential.
    fn poly_eval(&self, q: &[f64], deriv: (u32, u32)) -> f64 {
        let falling = |e: u32, d: u32| -> f64 { (0..d).map(|j| (e - j) as f64).product() };
        let pow = |x: f64, e: i32| if e == 0 { 1.0 } else { x.powi(e) };
        let mut sum = 0.0;
        if self.n == 1 {
            for (e, c) in self.coefficients.iter().enumerate() {
                let e = e as u32;
                if e < deriv.0 || *c == 0.0 {
                    continue;
                }
                sum += c * falling(e, deriv.0) * pow(q[0], (e - deriv.0) as i32);
            }
            return sum;
        }
        let mut idx = 0;
        let mut degree = 0u32;
        while idx < self.coefficients.len() {
            for j in 0..=degree {
                let (e1, e2) = (degree - j, j);
                let c = self.coefficients[idx];
                idx += 1;
                if c == 0.0 || e1 < deriv.0 || e2 < deriv.1 {
                    continue;
                }
                sum += c
                    * falling(e1, deriv.0)
                    * falling(e2, deriv.1)
                    * pow(q[0], (e1 - deriv.0) as i32)
                    * pow(q[1], (e2 - deriv.1) as i32);
            }
            degree += 1;
        }
        sum
    }

    /// Global minimum of the potential when it is known in closed form.
    pub fn potential_minimum(&self) -> Option<f64> {
        match self.kind {
            ModelKind::FreeParticle | ModelKind::HarmonicOscillator => Some(0.0),
            ModelKind::AnharmonicQuartic => {
                let confining = self.coefficients.iter().all(|&c| c >= 0.0);
                confining.then_some(0.0)
            }
            ModelKind::PolynomialPotential => None,
        }
    }

    /// Kinetic energy of momentum `p`.
    pub fn kinetic(&self, p: &[f64]) -> f64 {
        (0..self.n).map(|i| 0.5 * p[i] * p[i] / self.masses[i]).sum()
    }

    /// Fast Hamiltonian on raw slices (no dimension checks).
    pub fn energy_of(&self, q: &[f64], p: &[f64]) -> f64 {
        self.kinetic(p) + self.potential(q)
    }
}

/// Degree of a complete graded-lex coefficient list of the given length.
fn polynomial_degree(n: usize, len: usize) -> Result<usize> {
    if len == 0 {
        return Err(Error::Config("polynomial potential needs coefficients".into()));
    }
    if n == 1 {
        return Ok(len - 1);
    }
    let mut total = 0;
    for d in 0.. {
        total += d + 1;
        if total == len {
            return Ok(d);
        }
        if total > len {
            break;
        }
    }
    Err(Error::Config(format!(
        "{len} coefficients do not form a complete graded-lex list for n = 2"
    )))
}

/// A point `(q, p)` of the 2n-dimensional phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() || q.is_empty() {
            return Err(Error::Dimension(format!(
                "q has {} components, p has {}",
                q.len(),
                p.len()
            )));
        }
        if q.iter().chain(p.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Config("phase point components must be finite".into()));
        }
        Ok(Self { q, p })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Flattened `(q, p)` ordering.
    pub fn to_vec(&self) -> Vec<f64> {
        self.q.iter().chain(self.p.iter()).copied().collect()
    }
}

/// Disjoint split of the coordinate indices into momentum-type (`alpha`) and
/// position-type (`beta`) sets. Indices are zero-based internally; the textual
/// key renders them one-based, e.g. `"1,2"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Representation {
    pub n: usize,
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
}

impl Representation {
    pub fn new(n: usize, alpha: &[usize]) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::Config(format!("n must be 1 or 2, got {n}")));
        }
        let mut a = alpha.to_vec();
        a.sort_unstable();
        a.dedup();
        if a.len() != alpha.len() || a.iter().any(|&i| i >= n) {
            return Err(Error::Config(format!(
                "alpha {alpha:?} is not a set of distinct indices below {n}"
            )));
        }
        let beta = (0..n).filter(|i| !a.contains(i)).collect();
        Ok(Self { n, alpha: a, beta })
    }

    pub fn position(n: usize) -> Self {
        Self::new(n, &[]).expect("valid dimension")
    }

    pub fn momentum(n: usize) -> Self {
        Self::new(n, &(0..n).collect::<Vec<_>>()).expect("valid dimension")
    }

    /// All `2^n` representations, ordered by bitmask.
    pub fn all(n: usize) -> Vec<Self> {
        (0..(1usize << n))
            .map(|mask| {
                let alpha: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                Self::new(n, &alpha).expect("valid dimension")
            })
            .collect()
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_momentum(&self, i: usize) -> bool {
        self.alpha.contains(&i)
    }

    /// One-based, comma-separated α set; empty for the position representation.
    pub fn key(&self) -> String {
        self.alpha
            .iter()
            .map(|i| (i + 1).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_key(n: usize, key: &str) -> Result<Self> {
        let alpha = if key.trim().is_empty() {
            Vec::new()
        } else {
            key.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .ok()
                        .filter(|&i| i >= 1)
                        .map(|i| i - 1)
                        .ok_or_else(|| Error::Config(format!("bad representation key {key:?}")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        Self::new(n, &alpha)
    }

    /// Checks the partition invariant: disjoint and covering `0..n`.
    pub fn is_partition(&self) -> bool {
        let mut all: Vec<usize> = self.alpha.iter().chain(self.beta.iter()).copied().collect();
        all.sort_unstable();
        all == (0..self.n).collect::<Vec<_>>()
    }

    /// Transformed coordinates `(p_α, q_β)` of a raw phase-space point, in index order.
    pub fn transformed(&self, q: &[f64], p: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| if self.is_momentum(i) { p[i] } else { q[i] })
            .collect()
    }

    /// Complementary coordinates `(q_α, p_β)`, in index order.
    pub fn complementary(&self, q: &[f64], p: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| if self.is_momentum(i) { q[i] } else { p[i] })
            .collect()
    }

    /// Row index into a `(q, p)`-ordered 2n vector of transformed coordinate `i`.
    pub fn transformed_slot(&self, i: usize) -> usize {
        if self.is_momentum(i) {
            self.n + i
        } else {
            i
        }
    }

    /// Row index of complementary coordinate `i`.
    pub fn complementary_slot(&self, i: usize) -> usize {
        if self.is_momentum(i) {
            i
        } else {
            self.n + i
        }
    }
}

fn check_dim(model: &ModelSpec, x: &PhasePoint) -> Result<()> {
    if x.q.len() != model.n || x.p.len() != model.n {
        return Err(Error::Dimension(format!(
            "model has n = {}, point has {} positions and {} momenta",
            model.n,
            x.q.len(),
            x.p.len()
        )));
    }
    Ok(())
}

/// `H(p, q) = Σ p_i²/(2 m_i) + V(q)`.
pub fn hamiltonian(model: &ModelSpec, x: &PhasePoint) -> Result<f64> {
    check_dim(model, x)?;
    Ok(model.energy_of(&x.q, &x.p))
}

/// Hamilton's equations `(q̇, ṗ) = (∂H/∂p, −∂H/∂q)`, flattened in `(q, p)` order.
pub fn flow(model: &ModelSpec, x: &PhasePoint) -> Result<Vec<f64>> {
    check_dim(model, x)?;
    let n = model.n;
    let mut grad = [0.0; MAX_DIM];
    model.gradient_into(&x.q, &mut grad);
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[i] = x.p[i] / model.masses[i];
        out[n + i] = -grad[i];
    }
    Ok(out)
}

/// Jacobian of [`flow`]: `[[0, M⁻¹], [−∇²V, 0]]`.
pub fn flow_jacobian(model: &ModelSpec, x: &PhasePoint) -> Result<DMatrix<f64>> {
    check_dim(model, x)?;
    let n = model.n;
    let hess = model.hessian(&x.q);
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        jac[(i, n + i)] = 1.0 / model.masses[i];
        for j in 0..n {
            jac[(n + i, j)] = -hess[i][j];
        }
    }
    Ok(jac)
}

/// The canonical symplectic form `J = [[0, I], [−I, 0]]`.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}
