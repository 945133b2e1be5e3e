//! Reference solutions: the free-particle Green function, the oscillator
//! spectral sum, the oscillator's closed-form semiclassical sum, and a small
//! comparison report.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Outgoing-wave Green function of a free particle,
/// `−(i m)/(ħ² k) e^{ik|q″−q′|}` with `k = √(2mE)/ħ`.
pub fn exact_free_particle_g(q_initial: f64, q_final: f64, energy: f64, mass: f64, hbar: f64) -> Result<Complex64> {
    if !(energy > 0.0) {
        return Err(Error::Domain(format!("free-particle energy must be positive, got {energy}")));
    }
    let k = (2.0 * mass * energy).sqrt() / hbar;
    let dq = (q_final - q_initial).abs();
    Ok(Complex64::new(0.0, -mass / (hbar * hbar * k)) * Complex64::from_polar(1.0, k * dq))
}

/// The free-particle closed form continued to complex energy `E + iε`.
pub fn free_particle_g_complex(dq: f64, energy: Complex64, mass: f64, hbar: f64) -> Complex64 {
    let mut k = (2.0 * mass * energy).sqrt() / hbar;
    if k.im < 0.0 {
        k = -k;
    }
    Complex64::new(0.0, -mass / (hbar * hbar)) / k * (Complex64::i() * k * dq.abs()).exp()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(order);
    for i in 0..order {
        let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Direct numerical evaluation of `∫ dp/(2πħ) e^{ipΔ/ħ} / (E + iε − p²/2m)`.
///
/// The `−2m/p²` tail is removed by subtracting `−2m/(p² + c²)`, whose
/// transform `−(m/ħc) e^{−c|Δ|/ħ}` is added back analytically; the remainder
/// is integrated with graded Gauss–Legendre panels.
pub fn free_particle_spectral_integral(dq: f64, energy: f64, eps: f64, mass: f64, hbar: f64) -> Complex64 {
    let z = Complex64::new(energy, eps);
    let c = (2.0 * mass * energy).sqrt().max(1.0);
    let f = |p: f64| -> Complex64 {
        let resolvent = Complex64::new(1.0, 0.0) / (z - p * p / (2.0 * mass));
        (resolvent + 2.0 * mass / (p * p + c * c)) * Complex64::from_polar(1.0, p * dq / hbar)
    };
    let p0 = (2.0 * mass * energy).sqrt();
    let width = eps * mass / p0.max(1e-12);
    // Panel edges graded geometrically toward the two resonances at ±p0.
    let mut edges = vec![0.0];
    let mut d = width * 1e-3;
    while d < p0 {
        edges.push(p0 - d);
        d *= 1.3;
    }
    edges.push(p0);
    let mut d = width * 1e-3;
    let p_max = 2e3 * c;
    while p0 + d < p_max {
        edges.push(p0 + d);
        d += (0.3 * d).min(0.5);
    }
    edges.push(p_max);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let gl = gauss_legendre(24);
    let mut sum = Complex64::new(0.0, 0.0);
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for &(x, wt) in &gl {
            let p = mid + half * x;
            sum += (f(p) + f(-p)) * wt * half;
        }
    }
    let tail = -(mass / (hbar * c)) * (-c * dq.abs() / hbar).exp();
    sum / (2.0 * PI * hbar) + tail
}

/// Normalized Hermite functions `φ_0(x) … φ_{n_max}(x)` of the oscillator.
pub fn hermite_functions(x: f64, mass: f64, omega: f64, hbar: f64, n_max: usize) -> Vec<f64> {
    let xi = x * (mass * omega / hbar).sqrt();
    let norm = (mass * omega / (PI * hbar)).powf(0.25);
    let mut out = Vec::with_capacity(n_max + 1);
    let mut h0 = norm * (-0.5 * xi * xi).exp();
    out.push(h0);
    if n_max == 0 {
        return out;
    }
    let mut h1 = 2f64.sqrt() * xi * h0;
    out.push(h1);
    for k in 1..n_max {
        let kf = k as f64;
        let h2 = (2.0 / (kf + 1.0)).sqrt() * xi * h1 - (kf / (kf + 1.0)).sqrt() * h0;
        h0 = h1;
        h1 = h2;
        out.push(h1);
    }
    out
}

/// Largest number of spectral terms tried before giving up.
pub const MAX_SPECTRAL_TERMS: usize = 1 << 22;

/// `(E_ref − H)⁻¹(q′, q″)` at `E_ref = 0`, from the imaginary-time kernel
/// `−(1/ħ)∫₀^∞ K(q′, q″, τ) dτ`, integrated in `s = √τ` on Gauss–Legendre panels.
fn ho_resolvent_at_zero(a: f64, b: f64, mass: f64, omega: f64, hbar: f64) -> f64 {
    let kernel = |tau: f64| -> f64 {
        let x = omega * tau;
        let (sh, ch) = (x.sinh(), x.cosh());
        let expo = -mass * omega * ((a * a + b * b) * ch - 2.0 * a * b) / (2.0 * hbar * sh);
        (mass * omega / (2.0 * PI * hbar * sh)).sqrt() * expo.exp()
    };
    let s_max = (80.0 / omega).sqrt();
    let panels = 400;
    let gl = gauss_legendre(24);
    let mut sum = 0.0;
    for i in 0..panels {
        let lo = s_max * i as f64 / panels as f64;
        let hi = s_max * (i + 1) as f64 / panels as f64;
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for &(x, w) in &gl {
            let s = mid + half * x;
            sum += 2.0 * s * kernel(s * s) * w * half;
        }
    }
    -sum / hbar
}

/// The oscillator resolvent `Σ_n φ_n(q′) φ_n(q″) / (E − ħω(n + ½))`.
///
/// The sum is taken as `G(0) − E Σ_n φ_n φ_n / ((E − E_n)(−E_n))`, whose terms
/// fall off as `n^{-5/2}`; `G(0)` comes from the imaginary-time kernel. The
/// number of terms doubles from `n_terms` until the relative change is at
/// most `1e-6`.
pub fn ho_spectral_g(
    q_initial: f64,
    q_final: f64,
    energy: f64,
    mass: f64,
    omega: f64,
    hbar: f64,
    n_terms: usize,
) -> Result<Complex64> {
    if n_terms < 64 {
        return Err(Error::Config(format!("n_terms must be at least 64, got {n_terms}")));
    }
    let quantum = hbar * omega;
    let nearest = (energy / quantum - 0.5).round().max(0.0);
    let pole = quantum * (nearest + 0.5);
    if (energy - pole).abs() < 1e-3 * quantum {
        return Err(Error::PoleProximity {
            energy,
            pole,
            distance: (energy - pole).abs(),
        });
    }
    let reference = ho_resolvent_at_zero(q_initial, q_final, mass, omega, hbar);
    let a = q_initial * (mass * omega / hbar).sqrt();
    let b = q_final * (mass * omega / hbar).sqrt();
    let norm2 = (mass * omega / (PI * hbar)).sqrt();
    let term = |k: usize, product: f64| {
        let level = quantum * (k as f64 + 0.5);
        product / ((energy - level) * level)
    };
    let (mut a0, mut b0) = ((-0.5 * a * a).exp(), (-0.5 * b * b).exp());
    let (mut a1, mut b1) = (2f64.sqrt() * a * a0, 2f64.sqrt() * b * b0);
    let mut sum = term(0, a0 * b0) + term(1, a1 * b1);
    let mut k = 2usize;
    let mut target = n_terms;
    let mut previous: Option<f64> = None;
    loop {
        while k < target {
            let kf = (k - 1) as f64;
            let a2 = (2.0 / (kf + 1.0)).sqrt() * a * a1 - (kf / (kf + 1.0)).sqrt() * a0;
            let b2 = (2.0 / (kf + 1.0)).sqrt() * b * b1 - (kf / (kf + 1.0)).sqrt() * b0;
            sum += term(k, a2 * b2);
            a0 = a1;
            a1 = a2;
            b0 = b1;
            b1 = b2;
            k += 1;
        }
        let value = reference + energy * norm2 * sum;
        if let Some(prev) = previous {
            let change = (value - prev).abs() / value.abs().max(1e-300);
            if change <= 1e-6 {
                return Ok(Complex64::new(value, 0.0));
            }
            if target >= MAX_SPECTRAL_TERMS {
                return Err(Error::Truncation {
                    terms: target,
                    rel_change: change,
                });
            }
        }
        previous = Some(value);
        target *= 2;
    }
}

/// How the repetitions of the closed orbit are summed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WindingSum {
    /// All durations up to `t_max` at unit weight.
    Sharp(f64),
    /// Durations up to `t_max` with weight `1 − t/t_max`.
    Fejer(f64),
    /// The geometric series over all repetitions in closed form.
    Resummed,
}

/// Closed-form semiclassical position-space Green function of the 1D oscillator.
///
/// The orbit is `q = A sin φ`, `p = mωA cos φ` with `φ̇ = ω`. Each of the four
/// branch pairs (direction at `q′` and at `q″`) gives a shortest duration in
/// `(0, 2π/ω]`; every repetition adds `2πE/ω` to the action and two turning points.
pub fn ho_semiclassical_g(
    q_initial: f64,
    q_final: f64,
    energy: f64,
    mass: f64,
    omega: f64,
    hbar: f64,
    windings: WindingSum,
) -> Result<Complex64> {
    if !(energy > 0.0) {
        return Err(Error::Domain("oscillator energy must be positive".into()));
    }
    let amp = (2.0 * energy / (mass * omega * omega)).sqrt();
    // No real orbit reaches a point outside the turning points.
    if q_initial.abs() >= amp || q_final.abs() >= amp {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let period = 2.0 * PI / omega;
    let action_between = |f1: f64, f2: f64| {
        let f = |x: f64| x + x.sin() * x.cos();
        0.5 * mass * omega * amp * amp * (f(f2) - f(f1))
    };
    let turning = |f1: f64, f2: f64| {
        ((f2 - 0.5 * PI) / PI).floor() - ((f1 - 0.5 * PI) / PI).floor()
    };
    let ratio = Complex64::from_polar(1.0, 2.0 * PI * energy / (hbar * omega) - PI);
    let mut total = Complex64::new(0.0, 0.0);
    for s1 in [1.0, -1.0] {
        let a1 = (q_initial / amp).asin();
        let phi1 = if s1 > 0.0 { a1 } else { PI - a1 };
        for s2 in [1.0, -1.0] {
            let a2 = (q_final / amp).asin();
            let phi2 = if s2 > 0.0 { a2 } else { PI - a2 };
            let mut dphi = (phi2 - phi1).rem_euclid(2.0 * PI);
            if dphi == 0.0 {
                dphi = 2.0 * PI;
            }
            let t0 = dphi / omega;
            let v1 = omega * amp * phi1.cos();
            let v2 = omega * amp * phi2.cos();
            let base = Complex64::from_polar(
                1.0 / (v1 * v2).abs().sqrt(),
                action_between(phi1, phi1 + dphi) / hbar - turning(phi1, phi1 + dphi) * 0.5 * PI,
            );
            let series = match windings {
                WindingSum::Resummed => Complex64::new(1.0, 0.0) / (Complex64::new(1.0, 0.0) - ratio),
                WindingSum::Sharp(t_max) | WindingSum::Fejer(t_max) => {
                    let mut s = Complex64::new(0.0, 0.0);
                    let mut w = 0;
                    loop {
                        let t = t0 + w as f64 * period;
                        if t > t_max {
                            break;
                        }
                        let weight = match windings {
                            WindingSum::Fejer(_) => 1.0 - t / t_max,
                            _ => 1.0,
                        };
                        s += ratio.powi(w) * weight;
                        w += 1;
                    }
                    s
                }
            };
            total += base * series;
        }
    }
    Ok(total / Complex64::new(0.0, hbar))
}

/// Momentum-space counterpart of [`ho_semiclassical_g`], obtained from the
/// oscillator's symmetry `(q, p) → (p, −q)` which maps it to an oscillator of
/// mass `1/(mω²)`.
pub fn ho_semiclassical_momentum_g(
    p_initial: f64,
    p_final: f64,
    energy: f64,
    mass: f64,
    omega: f64,
    hbar: f64,
    windings: WindingSum,
) -> Result<Complex64> {
    ho_semiclassical_g(p_initial, p_final, energy, 1.0 / (mass * omega * omega), omega, hbar, windings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub input: Vec<f64>,
    pub reference: Complex64,
    pub computed: Complex64,
    pub abs_err: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub points: Vec<ComparisonPoint>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    /// Flat CSV: one row per point.
    pub fn to_csv(&self) -> String {
        let width = self.points.iter().map(|p| p.input.len()).max().unwrap_or(0);
        let mut out = String::new();
        let inputs: Vec<String> = (0..width).map(|i| format!("input{i}")).collect();
        out.push_str(&inputs.join(","));
        if width > 0 {
            out.push(',');
        }
        out.push_str("ref_re,ref_im,computed_re,computed_im,abs_err,rel_err\n");
        for p in &self.points {
            let mut row: Vec<String> = p.input.iter().map(|x| format!("{x:.16e}")).collect();
            row.resize(width, String::new());
            for x in [
                p.reference.re,
                p.reference.im,
                p.computed.re,
                p.computed.im,
                p.abs_err,
                p.rel_err,
            ] {
                row.push(format!("{x:.16e}"));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Compares computed values with a reference oracle evaluated at each input.
pub fn compare(
    computed: &[(Vec<f64>, Complex64)],
    reference: impl Fn(&[f64]) -> Result<Complex64>,
    tol: f64,
) -> Result<ComparisonReport> {
    if computed.is_empty() {
        return Err(Error::Config("nothing to compare".into()));
    }
    let mut points = Vec::with_capacity(computed.len());
    let mut notes = Vec::new();
    for (input, value) in computed {
        let r = match reference(input) {
            Ok(r) => r,
            Err(e) => {
                notes.push(format!("reference failed at {input:?}: {e}"));
                continue;
            }
        };
        let abs_err = (value - r).norm();
        let rel_err = if r.norm() > 0.0 {
            abs_err / r.norm()
        } else if abs_err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        points.push(ComparisonPoint {
            input: input.clone(),
            reference: r,
            computed: *value,
            abs_err,
            rel_err,
        });
    }
    let max_rel_err = points.iter().map(|p| p.rel_err).fold(0.0, f64::max);
    Ok(ComparisonReport {
        passed: max_rel_err <= tol && notes.is_empty(),
        points,
        max_rel_err,
        tolerance: tol,
        notes,
    })
}
