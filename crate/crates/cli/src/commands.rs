use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;

use mixed_greens::bench::{compare, ho_semiclassical_g, ho_semiclassical_momentum_g, WindingSum};
use mixed_greens::dynamics::{ModelKind, ModelSpec, Representation};
use mixed_greens::greens::{assemble_with, energy_scan_with, AssembleOptions, GreensValue, Truncation};
use mixed_greens::pathfinder::{BoundaryCondition, SearchParams};
use mixed_greens::transforms::{
    grid_coordinates, inverse_partial_ft, partial_ft_converged_with, sew_weight, uniformize, Axis, Direction,
    GridFunction,
};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{require, Integrand, MomentumSource, RunConfig, UsageError};

#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or command line (exit 2).
    Usage(String),
    /// The computation itself failed (exit 1).
    Compute(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<mixed_greens::Error> for Failure {
    fn from(e: mixed_greens::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

/// Files produced by a command plus anything worth recording in the metadata.
#[derive(Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub stdout: Option<String>,
    pub diagnostics: Vec<String>,
    /// Set when the command ran but its checks did not hold.
    pub failed: bool,
}

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn energy_of(cfg: &RunConfig, command: &str) -> Result<f64, UsageError> {
    require(&cfg.energy, "energy", command).copied()
}

#[derive(Serialize)]
struct GreensSummary<'a> {
    value: ComplexOut,
    abs: f64,
    n_trajectories: usize,
    result: &'a GreensValue,
}

#[derive(Serialize)]
struct ComplexOut {
    re: f64,
    im: f64,
}

impl From<Complex64> for ComplexOut {
    fn from(z: Complex64) -> Self {
        ComplexOut { re: z.re, im: z.im }
    }
}

pub fn greens(cfg: &RunConfig) -> Result<Artifacts, Failure> {
    let command = "greens";
    let model = cfg.model(command)?;
    let bc = cfg.boundary(command, energy_of(cfg, command)?)?;
    let hbar = cfg.hbar(command)?;
    let params = cfg.search()?;
    let (g, _) = assemble_with(model, &bc, hbar, params, &cfg.assemble, &[])?;
    let summary = json(&GreensSummary {
        value: g.value.into(),
        abs: g.value.norm(),
        n_trajectories: g.n_trajectories(),
        result: &g,
    });
    Ok(Artifacts {
        files: vec![("greens.json".into(), summary.clone())],
        stdout: Some(summary),
        diagnostics: g.diagnostics.clone(),
        failed: false,
    })
}

pub fn scan(cfg: &RunConfig) -> Result<Artifacts, Failure> {
    let command = "scan";
    let model = cfg.model(command)?;
    let energies = require(&cfg.energies, "energies", command)?.values()?;
    let first = *energies
        .first()
        .ok_or_else(|| Failure::Usage("config key `energies` is empty".into()))?;
    let bc = cfg.boundary(command, first)?;
    let hbar = cfg.hbar(command)?;
    let params = cfg.search()?;
    let points = energy_scan_with(model, &bc, &energies, hbar, params, &cfg.assemble)?;
    let mut csv = String::from("E,Re,Im,|G|,n_traj\n");
    let mut diagnostics = Vec::new();
    for point in &points {
        match &point.result {
            Ok(g) => {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    fmt(point.energy),
                    fmt(g.value.re),
                    fmt(g.value.im),
                    fmt(g.value.norm()),
                    g.n_trajectories()
                );
            }
            Err(e) => {
                let _ = writeln!(csv, "{},NaN,NaN,NaN,0", fmt(point.energy));
                diagnostics.push(format!("E = {}: {e}", fmt(point.energy)));
            }
        }
    }
    Ok(Artifacts {
        files: vec![("scan.csv".into(), csv)],
        diagnostics,
        ..Default::default()
    })
}

fn oscillator_constants(model: &ModelSpec) -> Option<(f64, f64)> {
    (model.kind == ModelKind::HarmonicOscillator && model.n == 1).then(|| (model.masses[0], model.frequencies[0]))
}

fn windings(opts: &AssembleOptions, params: &SearchParams) -> WindingSum {
    match opts.truncation {
        Truncation::Sharp => WindingSum::Sharp(params.t_max),
        Truncation::Fejer => WindingSum::Fejer(params.t_max),
    }
}

/// Samples `f` over `axes` in parallel; failed points become zero and are counted.
fn sample_parallel(
    rep: &Representation,
    axes: &[Axis],
    f: impl Fn(&[f64]) -> mixed_greens::Result<Complex64> + Sync,
    failures: &std::sync::atomic::AtomicUsize,
) -> mixed_greens::Result<GridFunction> {
    let len: usize = axes.iter().map(|a| a.count).product();
    let values: Vec<Complex64> = (0..len)
        .into_par_iter()
        .map(|flat| {
            f(&grid_coordinates(axes, flat)).unwrap_or_else(|_| {
                failures.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                Complex64::new(0.0, 0.0)
            })
        })
        .collect();
    GridFunction::new(rep.clone(), axes.to_vec(), values)
}

/// Position values of all coordinates, with the transformed ones taken from `grid`.
fn position_endpoints(bc: &BoundaryCondition, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = bc.rep.k();
    let mut initial = bc.initial_values.clone();
    let mut final_ = bc.final_values.clone();
    for (j, &a) in bc.rep.alpha.iter().enumerate() {
        final_[a] = x[j];
        initial[a] = x[k + j];
    }
    (initial, final_)
}

pub fn oracle_compare(cfg: &RunConfig) -> Result<Artifacts, Failure> {
    let command = "oracle-compare";
    let model = cfg.model(command)?;
    let oc = require(&cfg.oracle_compare, "oracle_compare", command)?;
    let energy = energy_of(cfg, command)?;
    let bc = cfg.boundary(command, energy)?;
    let params = cfg.search()?;
    let k = bc.rep.k();
    if k == 0 {
        return Err(Failure::Usage("oracle-compare needs a non-empty `representation`".into()));
    }
    if oc.axes.len() != 2 * k {
        return Err(Failure::Usage(format!(
            "oracle_compare.axes needs {} axes (final then initial), got {}",
            2 * k,
            oc.axes.len()
        )));
    }
    for axis in &oc.axes {
        axis.validate().map_err(|e| Failure::Usage(format!("oracle_compare.axes: {e}")))?;
    }
    if oc.hbars.is_empty() || oc.hbars.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Failure::Usage("oracle_compare.hbars must be a non-empty list of positive values".into()));
    }
    let closed_form = match oc.integrand {
        Integrand::Assemble => None,
        Integrand::OscillatorClosedForm => Some(oscillator_constants(model).ok_or_else(|| {
            Failure::Usage("oscillator_closed_form needs a one-dimensional harmonic model".into())
        })?),
    };
    let conj_final: Vec<f64> = bc.rep.alpha.iter().map(|&a| bc.final_values[a]).collect();
    let conj_initial: Vec<f64> = bc.rep.alpha.iter().map(|&a| bc.initial_values[a]).collect();
    let position = Representation::position(model.n);
    let failures = std::sync::atomic::AtomicUsize::new(0);
    let winding = windings(&cfg.assemble, params);
    let oracle = |hbar: f64| -> mixed_greens::Result<Complex64> {
        let integrand = |x: &[f64]| -> mixed_greens::Result<Complex64> {
            let (initial, final_) = position_endpoints(&bc, x);
            match closed_form {
                Some((m, w)) => ho_semiclassical_g(initial[0], final_[0], energy, m, w, hbar, winding),
                None => {
                    let pbc = BoundaryCondition::new(position.clone(), &initial, &final_, energy);
                    assemble_with(model, &pbc, hbar, params, &cfg.assemble, &[]).map(|(g, _)| g.value)
                }
            }
        };
        partial_ft_converged_with(
            &oc.axes,
            |axes| sample_parallel(&bc.rep, axes, integrand, &failures),
            &conj_final,
            &conj_initial,
            hbar,
            Direction::Forward,
            &oc.quadrature,
        )
        .map(|q| q.value)
    };
    let mut computed = Vec::with_capacity(oc.hbars.len());
    for &hbar in &oc.hbars {
        let (g, _) = assemble_with(model, &bc, hbar, params, &cfg.assemble, &[])?;
        computed.push((vec![hbar], g.value));
    }
    let report = compare(&computed, |x| oracle(x[0]), oc.tolerance)?;
    let mut diagnostics = report.notes.clone();
    let failed_points = failures.load(std::sync::atomic::Ordering::Relaxed);
    if failed_points > 0 {
        diagnostics.push(format!("{failed_points} integrand samples failed and were set to zero"));
    }
    if report.points.len() != computed.len() {
        return Err(Failure::Compute(format!("oracle failed: {}", report.notes.join("; "))));
    }
    if !report.passed {
        diagnostics.push(format!(
            "largest relative difference {} exceeds the tolerance {}",
            fmt(report.max_rel_err),
            fmt(report.tolerance)
        ));
    }
    Ok(Artifacts {
        files: vec![
            ("oracle_compare.csv".into(), report.to_csv().replacen("input0", "hbar", 1)),
            ("oracle_compare.json".into(), json(&report)),
        ],
        diagnostics,
        ..Default::default()
    })
}

pub fn run_uniformize(cfg: &RunConfig) -> Result<Artifacts, Failure> {
    let command = "uniformize";
    let model = cfg.model(command)?;
    let uc = require(&cfg.uniformize, "uniformize", command)?;
    let energy = energy_of(cfg, command)?;
    let hbar = cfg.hbar(command)?;
    let params = cfg.search()?;
    let rep = cfg.rep(command)?;
    if rep.k() != 1 {
        return Err(Failure::Usage("uniformize needs exactly one index in `representation`".into()));
    }
    let a = rep.alpha[0];
    // Endpoints are given in position space here.
    let position = Representation::position(model.n);
    let initial = require(&cfg.initial, "initial", command)?.clone();
    let final_ = require(&cfg.final_, "final", command)?.clone();
    BoundaryCondition::new(position.clone(), &initial, &final_, energy)
        .validate(model)
        .map_err(|e| Failure::Usage(format!("boundary condition: {e}")))?;
    uc.window.validate().map_err(|e| Failure::Usage(format!("uniformize.window: {e}")))?;
    if !(uc.threshold > 0.0) || !(uc.width > 0.0) {
        return Err(Failure::Usage("uniformize.threshold and width must be positive".into()));
    }

    let mut diagnostics = Vec::new();
    let f_grid = match &uc.momentum_source {
        MomentumSource::File(path) => {
            let file = File::open(path).map_err(|e| Failure::Usage(format!("cannot open momentum grid {path}: {e}")))?;
            let grid = GridFunction::read_from(BufReader::new(file))?;
            if grid.rep != rep || grid.axes.len() != 2 {
                return Err(Failure::Usage(format!("momentum grid {path} is not over (p″, p′) of {:?}", rep.alpha)));
            }
            grid
        }
        source => {
            let axis = require(&uc.momentum_axis, "uniformize.momentum_axis", command)?;
            axis.validate().map_err(|e| Failure::Usage(format!("uniformize.momentum_axis: {e}")))?;
            let closed_form = match source {
                MomentumSource::OscillatorClosedForm => Some(oscillator_constants(model).ok_or_else(|| {
                    Failure::Usage("oscillator_closed_form needs a one-dimensional harmonic model".into())
                })?),
                _ => None,
            };
            let winding = windings(&cfg.assemble, params);
            let failures = std::sync::atomic::AtomicUsize::new(0);
            let grid = sample_parallel(
                &rep,
                &[*axis, *axis],
                |p| match closed_form {
                    Some((m, w)) => ho_semiclassical_momentum_g(p[1], p[0], energy, m, w, hbar, winding),
                    None => {
                        let (mut i, mut f) = (initial.clone(), final_.clone());
                        f[a] = p[0];
                        i[a] = p[1];
                        let bc = BoundaryCondition::new(rep.clone(), &i, &f, energy);
                        assemble_with(model, &bc, hbar, params, &cfg.assemble, &[]).map(|(g, _)| g.value)
                    }
                },
                &failures,
            )?;
            let failed = failures.load(std::sync::atomic::Ordering::Relaxed);
            if failed > 0 {
                diagnostics.push(format!("{failed} momentum samples failed and were set to zero"));
            }
            grid
        }
    };

    let q_initial = [initial[a]];
    let window = uc.window.points();
    let rows: Vec<(Complex64, Complex64, f64)> = window
        .par_iter()
        .map(|&q| -> mixed_greens::Result<(Complex64, Complex64, f64)> {
            let transformed = inverse_partial_ft(&f_grid, &[q], &q_initial, hbar)?;
            let mut f = final_.clone();
            f[a] = q;
            let bc = BoundaryCondition::new(position.clone(), &initial, &f, energy);
            Ok(match assemble_with(model, &bc, hbar, params, &cfg.assemble, &[]) {
                Ok((g, _)) => {
                    let metric = g.contributions.iter().map(|c| c.det.abs()).fold(f64::NAN, f64::max);
                    (g.value, transformed, metric)
                }
                // No usable amplitude on the caustic itself.
                Err(_) => (Complex64::new(0.0, 0.0), transformed, f64::INFINITY),
            })
        })
        .collect::<mixed_greens::Result<_>>()?;
    let (primitive, transformed, metric): (Vec<_>, Vec<_>, Vec<_>) =
        rows.into_iter().fold((vec![], vec![], vec![]), |mut acc, (g, t, m)| {
            acc.0.push(g);
            acc.1.push(t);
            acc.2.push(m);
            acc
        });
    let gp = GridFunction::new(position.clone(), vec![uc.window], primitive.clone())?;
    let gt = GridFunction::new(position, vec![uc.window], transformed.clone())?;
    let sewn = uniformize(&gp, &gt, &metric, uc.threshold, uc.width)?;
    let mut csv = String::from("q,primitive_re,primitive_im,transformed_re,transformed_im,metric,weight,sewn_re,sewn_im\n");
    for (i, q) in window.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            fmt(*q),
            fmt(primitive[i].re),
            fmt(primitive[i].im),
            fmt(transformed[i].re),
            fmt(transformed[i].im),
            fmt(metric[i]),
            fmt(sew_weight(metric[i], uc.threshold, uc.width)),
            fmt(sewn.values[i].re),
            fmt(sewn.values[i].im)
        );
    }
    let mut grid_file = Vec::new();
    sewn.write_to(&mut grid_file)?;
    Ok(Artifacts {
        files: vec![
            ("uniformized.csv".into(), csv),
            ("uniformized.grid".into(), String::from_utf8(grid_file).expect("utf-8")),
        ],
        diagnostics,
        ..Default::default()
    })
}
