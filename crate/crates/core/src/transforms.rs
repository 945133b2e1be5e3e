//! Partial Fourier transforms by direct windowed quadrature, their inverse,
//! and sewing a transformed Green function into the primitive one.
//!
//! A [`GridFunction`] for a transform over the momentum-type indices `α`
//! has `2k` axes: first the `k` final coordinates, then the `k` initial ones.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use crate::dynamics::Representation;
use crate::error::{Error, Result};

/// Smallest number of samples per axis.
pub const MIN_AXIS_COUNT: usize = 16;
/// Fraction of each axis, at each end, covered by the raised-cosine taper.
pub const TAPER_FRACTION: f64 = 0.125;
pub const DEFAULT_SEW_THRESHOLD: f64 = 1e3;
pub const DEFAULT_SEW_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let axis = Axis { min, max, count };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.max > self.min) {
            return Err(Error::Config(format!("axis bounds [{}, {}] are not increasing", self.min, self.max)));
        }
        if self.count < MIN_AXIS_COUNT {
            return Err(Error::Config(format!(
                "axis needs at least {MIN_AXIS_COUNT} points, got {}",
                self.count
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.point(i)).collect()
    }

    /// Raised-cosine window: 0 at both ends, 1 on the inner 75%.
    pub fn window(&self, x: f64) -> f64 {
        let taper = TAPER_FRACTION * (self.max - self.min);
        if x <= self.min || x >= self.max {
            0.0
        } else if x < self.min + taper {
            0.5 * (1.0 - (PI * (x - self.min) / taper).cos())
        } else if x > self.max - taper {
            0.5 * (1.0 - (PI * (self.max - x) / taper).cos())
        } else {
            1.0
        }
    }

    fn refined(&self, refinement: Refinement) -> Axis {
        match refinement {
            Refinement::DensityOnly => Axis {
                count: 2 * (self.count - 1) + 1,
                ..*self
            },
            Refinement::DensityAndWidth => {
                let centre = 0.5 * (self.min + self.max);
                let half = self.max - self.min;
                Axis {
                    min: centre - half,
                    max: centre + half,
                    count: 4 * (self.count - 1) + 1,
                }
            }
        }
    }
}

/// Complex samples on a product of uniform axes, last axis fastest.
/// Coordinates of the grid point stored at `flat`; the last axis varies fastest.
pub fn grid_coordinates(axes: &[Axis], flat: usize) -> Vec<f64> {
    let mut coords = vec![0.0; axes.len()];
    let mut rest = flat;
    for (d, axis) in axes.iter().enumerate().rev() {
        coords[d] = axis.point(rest % axis.count);
        rest /= axis.count;
    }
    coords
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub rep: Representation,
    pub axes: Vec<Axis>,
    pub values: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridHeader {
    representation: String,
    dim: usize,
    axes: Vec<Axis>,
    payload: String,
}

impl GridFunction {
    pub fn new(rep: Representation, axes: Vec<Axis>, values: Vec<Complex64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Dimension("grid function needs at least one axis".into()));
        }
        for axis in &axes {
            axis.validate()?;
        }
        let len: usize = axes.iter().map(|a| a.count).product();
        if values.len() != len {
            return Err(Error::Dimension(format!("{} values for a grid of {len} points", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Domain(format!("grid value {i} is not finite")));
        }
        Ok(GridFunction { rep, axes, values })
    }

    /// Samples `f` at every grid point; `f` receives one coordinate per axis.
    pub fn from_fn(
        rep: Representation,
        axes: Vec<Axis>,
        mut f: impl FnMut(&[f64]) -> Result<Complex64>,
    ) -> Result<Self> {
        let len: usize = axes.iter().map(|a| a.count).product();
        let mut values = Vec::with_capacity(len);
        for flat in 0..len {
            values.push(f(&grid_coordinates(&axes, flat))?);
        }
        GridFunction::new(rep, axes, values)
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.axes == other.axes
    }

    /// One JSON header line, then one `re,im` CSV row per value.
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let header = GridHeader {
            representation: self.rep.key(),
            dim: self.rep.n,
            axes: self.axes.clone(),
            payload: "csv".into(),
        };
        let io = |e: std::io::Error| Error::Config(format!("write failed: {e}"));
        let line = serde_json::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(out, "{line}").map_err(io)?;
        for v in &self.values {
            writeln!(out, "{:.16e},{:.16e}", v.re, v.im).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let io = |e: std::io::Error| Error::Config(format!("read failed: {e}"));
        let first = lines
            .next()
            .ok_or_else(|| Error::Config("empty grid file".into()))?
            .map_err(io)?;
        let header: GridHeader =
            serde_json::from_str(&first).map_err(|e| Error::Config(format!("grid header: {e}")))?;
        if header.payload != "csv" {
            return Err(Error::Config(format!("unsupported payload {:?}", header.payload)));
        }
        let rep = Representation::from_key(header.dim, &header.representation)?;
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|t| t.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad value on data row {}", row + 1)))
            };
            let mut parts = line.split(',');
            let re = parse(parts.next())?;
            let im = parse(parts.next())?;
            values.push(Complex64::new(re, im));
        }
        GridFunction::new(rep, header.axes, values)
    }
}

/// Windowed trapezoid sum of `f · Π_d e^{i s_d k_d x_d / ħ}` over the grid,
/// where final axes carry sign `final_sign` and initial axes the opposite.
fn windowed_transform(
    grid: &GridFunction,
    conjugate_final: &[f64],
    conjugate_initial: &[f64],
    hbar: f64,
    final_sign: f64,
) -> Result<Complex64> {
    let k = conjugate_final.len();
    if conjugate_initial.len() != k || grid.axes.len() != 2 * k || k == 0 {
        return Err(Error::Dimension(format!(
            "transform over {} + {} conjugate values needs {} axes, grid has {}",
            conjugate_final.len(),
            conjugate_initial.len(),
            2 * k,
            grid.axes.len()
        )));
    }
    if !(hbar > 0.0) {
        return Err(Error::Config("hbar must be positive".into()));
    }
    let factors: Vec<Vec<Complex64>> = grid
        .axes
        .iter()
        .enumerate()
        .map(|(d, axis)| {
            let (sign, wave) = if d < k {
                (final_sign, conjugate_final[d])
            } else {
                (-final_sign, conjugate_initial[d - k])
            };
            (0..axis.count)
                .map(|i| {
                    let x = axis.point(i);
                    Complex64::from_polar(axis.window(x) * axis.spacing(), sign * wave * x / hbar)
                })
                .collect()
        })
        .collect();
    let last = grid.axes.len() - 1;
    let row_len = grid.axes[last].count;
    let mut total = Complex64::new(0.0, 0.0);
    let mut index = vec![0usize; grid.axes.len()];
    for (r, row) in grid.values.chunks(row_len).enumerate() {
        let mut rest = r;
        for d in (0..last).rev() {
            index[d] = rest % grid.axes[d].count;
            rest /= grid.axes[d].count;
        }
        let outer: Complex64 = (0..last).map(|d| factors[d][index[d]]).product();
        if outer == Complex64::new(0.0, 0.0) {
            continue;
        }
        let inner: Complex64 = row.iter().zip(&factors[last]).map(|(v, f)| v * f).sum();
        total += outer * inner;
    }
    Ok(total / (2.0 * PI * hbar).powi(k as i32))
}

/// `(2πħ)^{-k} ∬ dq″_α dq′_α G e^{i(p′_α·q′_α − p″_α·q″_α)/ħ}` on the grid as given.
pub fn partial_ft_direct(grid: &GridFunction, p_final: &[f64], p_initial: &[f64], hbar: f64) -> Result<Complex64> {
    windowed_transform(grid, p_final, p_initial, hbar, -1.0)
}

/// The conjugate transform `(2πħ)^{-k} ∬ dp″_α dp′_α F e^{i(p″_α·q″_α − p′_α·q′_α)/ħ}`.
pub fn inverse_partial_ft(grid: &GridFunction, q_final: &[f64], q_initial: &[f64], hbar: f64) -> Result<Complex64> {
    windowed_transform(grid, q_final, q_initial, hbar, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Refinement {
    /// Halve the spacing and double the window width at each level.
    #[default]
    DensityAndWidth,
    /// Halve the spacing only; for integrands with structure at the window edge.
    DensityOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub max_refinements: usize,
    pub refinement: Refinement,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            rel_tol: 1e-3,
            max_refinements: 2,
            refinement: Refinement::DensityAndWidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub value: Complex64,
    pub rel_change: f64,
    pub axes: Vec<Axis>,
    pub levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Samples `integrand` on `axes`, transforms, and refines until two
/// successive levels agree to `opts.rel_tol`.
pub fn partial_ft_converged(
    rep: &Representation,
    axes: &[Axis],
    mut integrand: impl FnMut(&[f64]) -> Result<Complex64>,
    conjugate_final: &[f64],
    conjugate_initial: &[f64],
    hbar: f64,
    direction: Direction,
    opts: &QuadratureOptions,
) -> Result<Quadrature> {
    partial_ft_converged_with(
        axes,
        |axes| GridFunction::from_fn(rep.clone(), axes.to_vec(), &mut integrand),
        conjugate_final,
        conjugate_initial,
        hbar,
        direction,
        opts,
    )
}

/// [`partial_ft_converged`] with the sampling left to the caller, e.g. to
/// evaluate grid points in parallel. `sample` receives the axes of each level.
pub fn partial_ft_converged_with(
    axes: &[Axis],
    mut sample: impl FnMut(&[Axis]) -> Result<GridFunction>,
    conjugate_final: &[f64],
    conjugate_initial: &[f64],
    hbar: f64,
    direction: Direction,
    opts: &QuadratureOptions,
) -> Result<Quadrature> {
    let transform = match direction {
        Direction::Forward => partial_ft_direct,
        Direction::Inverse => inverse_partial_ft,
    };
    let mut axes = axes.to_vec();
    let grid = sample(&axes)?;
    let mut value = transform(&grid, conjugate_final, conjugate_initial, hbar)?;
    let mut rel_change = f64::INFINITY;
    for level in 1..=opts.max_refinements {
        axes = axes.iter().map(|a| a.refined(opts.refinement)).collect();
        let grid = sample(&axes)?;
        let next = transform(&grid, conjugate_final, conjugate_initial, hbar)?;
        let scale = next.norm().max(value.norm());
        rel_change = if scale == 0.0 { 0.0 } else { (next - value).norm() / scale };
        value = next;
        if rel_change <= opts.rel_tol {
            return Ok(Quadrature {
                value,
                rel_change,
                axes,
                levels: level,
            });
        }
    }
    Err(Error::QuadratureNoConvergence { rel_change })
}

/// Sewing weight: 0 below `threshold`, 1 once `log10|D|` exceeds
/// `log10(threshold) + width`, raised cosine between. Non-finite metrics count as caustic.
pub fn sew_weight(metric: f64, threshold: f64, width: f64) -> f64 {
    if !metric.is_finite() {
        return 1.0;
    }
    let s = (metric.abs().log10() - threshold.log10()) / width;
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 - (PI * s).cos())
    }
}

/// Blends `w·transformed + (1 − w)·primitive` point by point, with `w` from [`sew_weight`].
pub fn uniformize(
    primitive: &GridFunction,
    transformed: &GridFunction,
    caustic_metric: &[f64],
    threshold: f64,
    width: f64,
) -> Result<GridFunction> {
    if !primitive.same_grid(transformed) || caustic_metric.len() != primitive.values.len() {
        return Err(Error::Dimension("uniformize needs both fields and the metric on one grid".into()));
    }
    if !(threshold > 0.0) || !(width > 0.0) {
        return Err(Error::Config("sewing threshold and width must be positive".into()));
    }
    let values = primitive
        .values
        .iter()
        .zip(&transformed.values)
        .zip(caustic_metric)
        .map(|((&g, &f), &d)| {
            let w = sew_weight(d, threshold, width);
            if w == 0.0 {
                g
            } else if w == 1.0 {
                f
            } else {
                f * w + g * (1.0 - w)
            }
        })
        .collect();
    GridFunction::new(primitive.rep.clone(), primitive.axes.clone(), values)
}
