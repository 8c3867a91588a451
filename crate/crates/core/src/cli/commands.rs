//! `run`, `compare` and `scan`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Resolved, ScenarioConfig};
use super::output::{fmt9, write_json, write_table, write_trajectory, TrajectoryColumns};
use crate::dissipators::KernelKind;
use crate::error::{Error, Result};
use crate::integrator::{evolve, AbortReport, Diagnostics, EvolveOptions, Picture, Trajectory};
use crate::spectrum::bloch_siegert_spectrum;

/// Derived parameters written to the JSON sidecar.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedParams {
    pub regime: String,
    pub kernel: KernelKind,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub bs_shift: f64,
    pub dispersive_shift: Option<f64>,
    pub lambda: f64,
    pub xi: f64,
    pub kerr_alpha: Option<f64>,
    pub beta: f64,
    /// Unit of the `beta_t` column and the sweep quantities.
    pub sweep_unit: f64,
    pub beta_re: f64,
    pub beta_im: f64,
    pub eta_center: f64,
    pub nu0: f64,
    pub nu_rate: f64,
    pub direction: i8,
    pub t_end: f64,
    pub t_end_beta: f64,
    pub dt: f64,
    pub steps: usize,
    pub sample_stride: usize,
    pub fock_cutoff: usize,
    pub picture: Picture,
    pub lz_probability: Option<f64>,
    pub effective_n_max: usize,
}

impl ResolvedParams {
    pub fn new(r: &Resolved) -> Self {
        let d = &r.derived;
        ResolvedParams {
            regime: r.config.regime.to_string(),
            kernel: r.config.kernel,
            delta_plus: d.detuning_sum,
            delta_minus: d.detuning,
            bs_shift: d.bs_shift,
            dispersive_shift: d.dispersive_shift,
            lambda: d.lambda,
            xi: d.xi,
            kerr_alpha: d.kerr,
            beta: r.beta_abs(),
            sweep_unit: r.unit,
            beta_re: r.beta.re,
            beta_im: r.beta.im,
            eta_center: r.protocol.eta_center,
            nu0: r.protocol.nu0,
            nu_rate: r.protocol.nu_rate,
            direction: r.protocol.direction.into(),
            t_end: r.protocol.t_end,
            t_end_beta: r.config.sweep.t_end_beta,
            dt: r.grid.dt,
            steps: r.grid.steps(),
            sample_stride: r.grid.sample_stride,
            fock_cutoff: r.space.fock_cutoff(),
            picture: r.config.picture,
            lz_probability: r.lz_probability,
            effective_n_max: r.effective.n_max,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Sidecar {
    pub name: String,
    pub status: &'static str,
    pub resolved: ResolvedParams,
    pub columns: Vec<String>,
    pub diagnostics: Option<Diagnostics>,
    pub abort: Option<AbortReport>,
}

fn output_dir(config: &ScenarioConfig) -> PathBuf {
    config.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn columns(r: &Resolved) -> TrajectoryColumns {
    TrajectoryColumns {
        fock_cutoff: r.space.fock_cutoff(),
        joint: r.config.output.joint_probabilities,
        dressed: r.config.output.dressed.clone(),
    }
}

/// Runs the resolved scenario without touching the file system.
pub fn simulate(r: &Resolved) -> Result<Trajectory> {
    let rho0 = r.initial_state()?;
    let options = evolve_options(r)?;
    evolve(&rho0, &r.config.system, &r.protocol, r.config.kernel, &r.grid, &options)
}

/// Propagation options implied by the scenario's output settings.
pub fn evolve_options(r: &Resolved) -> Result<EvolveOptions> {
    let spectrum = if r.config.output.dressed.is_empty() {
        None
    } else {
        let n_max = crate::spectrum::max_analytic_n(&r.space);
        let s = bloch_siegert_spectrum(&r.config.system, &r.space, n_max).map_err(|e| Error::Config(e.to_string()))?;
        for &label in &r.config.output.dressed {
            if s.index_of(label).is_none() {
                return Err(Error::Config(format!("dressed label {label} is not resolved by cutoff {}", r.space.fock_cutoff())));
            }
        }
        Some(s)
    };
    Ok(EvolveOptions { spectrum, picture: r.config.picture, ..Default::default() })
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
    pub trajectory: Trajectory,
}

/// Resolves, simulates and writes `<name>.csv` and `<name>.json`.
///
/// A monitor abort still writes the sidecar (status `aborted`) before the
/// error is returned.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput> {
    let r = config.resolve()?;
    let dir = output_dir(config);
    let csv = dir.join(format!("{}.csv", config.name));
    let sidecar_path = dir.join(format!("{}.json", config.name));
    let cols = columns(&r);
    let mut sidecar = Sidecar {
        name: config.name.clone(),
        status: "ok",
        resolved: ResolvedParams::new(&r),
        columns: cols.header(),
        diagnostics: None,
        abort: None,
    };
    match simulate(&r) {
        Ok(traj) => {
            write_trajectory(&csv, &cols, &traj, r.unit)?;
            sidecar.diagnostics = Some(traj.diagnostics);
            write_json(&sidecar_path, &sidecar)?;
            Ok(RunOutput { csv, sidecar: sidecar_path, trajectory: traj })
        }
        Err(Error::MonitorAbort(report)) => {
            sidecar.status = "aborted";
            sidecar.diagnostics = Some(report.diagnostics);
            sidecar.abort = Some((*report).clone());
            write_json(&sidecar_path, &sidecar)?;
            Err(Error::MonitorAbort(report))
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelDeviation {
    pub kernel: KernelKind,
    pub max_abs_dev_mean_n: f64,
    pub max_abs_dev_p_e: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareSummary {
    pub name: String,
    pub reference: KernelKind,
    pub deviations: Vec<KernelDeviation>,
    pub resolved: ResolvedParams,
}

/// One run per kernel on a shared sample grid; deviations are measured
/// against the first kernel.
pub fn compare(config: &ScenarioConfig, kernels: &[KernelKind]) -> Result<(CompareSummary, Vec<Trajectory>)> {
    if kernels.len() < 2 {
        return Err(Error::Config("compare needs at least two kernels".into()));
    }
    let resolved: Vec<Resolved> = kernels
        .iter()
        .map(|&k| {
            let mut c = config.clone();
            c.kernel = k;
            c.resolve()
        })
        .collect::<Result<_>>()?;
    let trajectories: Vec<Trajectory> = resolved.par_iter().map(simulate).collect::<Result<_>>()?;

    let reference = &trajectories[0];
    let deviations = kernels
        .iter()
        .zip(&trajectories)
        .skip(1)
        .map(|(&kernel, t)| {
            let (dn, dp) = crate::integrator::trajectory_deviation(reference, t);
            KernelDeviation { kernel, max_abs_dev_mean_n: dn, max_abs_dev_p_e: dp }
        })
        .collect();

    let beta = resolved[0].unit;
    let mut header = vec!["t".to_string(), "beta_t".to_string()];
    for k in kernels {
        for col in ["mean_n", "mandel_q", "q_valid", "p_e"] {
            header.push(format!("{col}_{k}"));
        }
    }
    let rows: Vec<Vec<String>> = reference
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut row = vec![fmt9(t), fmt9(t * beta)];
            for traj in &trajectories {
                let r = &traj.records[i];
                row.push(fmt9(r.mean_n));
                row.push(fmt9(r.mandel_q.unwrap_or(0.0)));
                row.push(if r.mandel_q.is_some() { "1" } else { "0" }.to_string());
                row.push(fmt9(r.p_excited));
            }
            row
        })
        .collect();

    let summary = CompareSummary {
        name: config.name.clone(),
        reference: kernels[0],
        deviations,
        resolved: ResolvedParams::new(&resolved[0]),
    };
    let dir = output_dir(config);
    write_table(&dir.join(format!("{}_compare.csv", config.name)), &header, &rows)?;
    write_json(&dir.join(format!("{}_compare.json", config.name)), &summary)?;
    Ok((summary, trajectories))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParameter {
    EtaCenter,
    /// Sweep rate in units of `|β|²`.
    NuRate,
    EpsOmega,
    Kernel,
}

impl fmt::Display for ScanParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanParameter::EtaCenter => "eta_center",
            ScanParameter::NuRate => "nu_rate",
            ScanParameter::EpsOmega => "eps_omega",
            ScanParameter::Kernel => "kernel",
        })
    }
}

impl FromStr for ScanParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "eta_center" => ScanParameter::EtaCenter,
            "nu_rate" => ScanParameter::NuRate,
            "eps_omega" | "eps_Omega" => ScanParameter::EpsOmega,
            "kernel" => ScanParameter::Kernel,
            other => {
                return Err(Error::Config(format!(
                    "unknown scan parameter {other:?} (eta_center|nu_rate|eps_omega|kernel)"
                )))
            }
        })
    }
}

impl ScanParameter {
    /// Config with the parameter set to `value`.
    pub fn apply(self, config: &ScenarioConfig, value: &str) -> Result<ScenarioConfig> {
        let mut c = config.clone();
        let number = || -> Result<f64> {
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{self} value {value:?} is not a number")))
        };
        match self {
            ScanParameter::EtaCenter => c.sweep.eta_center = Some(number()?),
            ScanParameter::NuRate => c.sweep.nu_rate_beta2 = number()?,
            ScanParameter::EpsOmega => c.system.eps_omega = number()?,
            ScanParameter::Kernel => c.kernel = value.trim().parse().map_err(|e: Error| Error::Config(e.to_string()))?,
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanPoint {
    pub value: String,
    pub status: String,
    pub final_mean_n: Option<f64>,
    pub max_mean_n: Option<f64>,
    pub t_at_max: Option<f64>,
}

/// Runs every point (in parallel) and writes a summary CSV.
pub fn sweep_scan(config: &ScenarioConfig, parameter: ScanParameter, values: &[String]) -> Result<Vec<ScanPoint>> {
    if values.is_empty() {
        return Err(Error::Config("scan needs at least one value".into()));
    }
    let configs: Vec<ScenarioConfig> = values.iter().map(|v| parameter.apply(config, v)).collect::<Result<_>>()?;
    let resolved: Vec<Resolved> = configs.iter().map(|c| c.resolve()).collect::<Result<_>>()?;
    let points: Vec<ScanPoint> = resolved
        .par_iter()
        .zip(values)
        .map(|(r, value)| match simulate(r) {
            Ok(traj) => {
                let (i_max, max) = traj
                    .records
                    .iter()
                    .map(|rec| rec.mean_n)
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, n)| if n > acc.1 { (i, n) } else { acc });
                ScanPoint {
                    value: value.clone(),
                    status: "ok".into(),
                    final_mean_n: traj.records.last().map(|rec| rec.mean_n),
                    max_mean_n: Some(max),
                    t_at_max: Some(traj.times[i_max]),
                }
            }
            Err(e) => ScanPoint {
                value: value.clone(),
                status: e.to_string(),
                final_mean_n: None,
                max_mean_n: None,
                t_at_max: None,
            },
        })
        .collect();

    let header: Vec<String> =
        [parameter.to_string().as_str(), "status", "final_mean_n", "max_mean_n", "t_at_max"].map(String::from).to_vec();
    let opt = |x: Option<f64>| x.map(fmt9).unwrap_or_default();
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![p.value.clone(), p.status.clone(), opt(p.final_mean_n), opt(p.max_mean_n), opt(p.t_at_max)])
        .collect();
    write_table(&output_dir(config).join(format!("{}_scan_{parameter}.csv", config.name)), &header, &rows)?;
    Ok(points)
}
