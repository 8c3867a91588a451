//! JSON scenario files and their resolution into simulation inputs.
//!
//! All frequencies are in units of `ω₀`. Sweep quantities are given in
//! units of the regime's effective coupling `|β|` (or of `beta_unit` when
//! set): `ν₀ = nu0_beta·|β|`, `ν̇ = nu_rate_beta2·|β|²` and
//! `t_end = t_end_beta/|β|`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dissipators::KernelKind;
use crate::effective::{build_effective, lz_probability, EffectiveModel};
use crate::error::{Error, Result};
use crate::integrator::{Picture, TimeGrid};
use crate::linalg::{eigh, C64};
use crate::model::{DerivedParams, Direction, SweepProtocol, SystemParams};
use crate::qops::{coherent_state, DensityMatrix, HilbertSpace, Qubit};
use crate::spectrum::{resonance_eta, Label, Regime};

fn default_k_range() -> f64 {
    8.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Overrides the regime's center frequency `η_c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_center: Option<f64>,
    pub nu0_beta: f64,
    pub nu_rate_beta2: f64,
    pub direction: Direction,
    #[serde(default = "default_k_range")]
    pub k_range: f64,
    pub t_end_beta: f64,
    /// Unit for the sweep quantities in place of `|β|`; required when `β = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_unit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Lowest eigenstate of the bare Rabi Hamiltonian.
    Ground,
    Bare { qubit: Qubit, n: usize },
    /// `|g, α⟩` with `α = amplitude·e^{i phase}`.
    Coherent {
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl InitialState {
    pub fn build(&self, params: &SystemParams, space: &HilbertSpace) -> Result<DensityMatrix> {
        match self {
            InitialState::Ground => {
                let (_, vecs) = eigh(&crate::model::bare_hamiltonian(params, space));
                Ok(DensityMatrix::pure(&vecs.column(0).into_owned()))
            }
            InitialState::Bare { qubit, n } => {
                if *n >= space.fock_cutoff() {
                    return Err(Error::Config(format!(
                        "initial photon number {n} is outside the cutoff {}",
                        space.fock_cutoff()
                    )));
                }
                Ok(DensityMatrix::basis(space, *qubit, *n))
            }
            InitialState::Coherent { amplitude, phase } => {
                coherent_state(space, C64::from_polar(*amplitude, *phase))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Adds `P_g_n` and `P_e_n` columns.
    #[serde(default)]
    pub joint_probabilities: bool,
    /// Dressed states (Bloch-Siegert labels) whose populations are written.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dressed: Vec<Label>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub system: SystemParams,
    pub regime: Regime,
    pub sweep: SweepConfig,
    pub kernel: KernelKind,
    pub initial_state: InitialState,
    pub fock_cutoff: usize,
    pub dt: f64,
    pub sample_stride: usize,
    /// Propagation picture (`interaction` unless set to `lab`).
    #[serde(default)]
    pub picture: Picture,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub kernel: Option<KernelKind>,
    pub out: Option<PathBuf>,
    pub fock_cutoff: Option<usize>,
    pub dt: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(k) = overrides.kernel {
            self.kernel = k;
        }
        if let Some(out) = &overrides.out {
            self.output.dir = Some(out.clone());
        }
        if let Some(n) = overrides.fock_cutoff {
            self.fock_cutoff = n;
        }
        if let Some(dt) = overrides.dt {
            self.dt = dt;
        }
    }

    /// Pure resolution of every derived quantity; no simulation.
    pub fn resolve(&self) -> Result<Resolved> {
        let config_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.system.validate().map_err(config_err)?;
        let space = HilbertSpace::new(self.fock_cutoff).map_err(config_err)?;
        let effective = build_effective(&self.system, self.regime).map_err(config_err)?;
        let beta = effective.beta;
        let unit = self.sweep.beta_unit.unwrap_or(beta.norm());
        if !(unit > 0.0 && unit.is_finite()) {
            return Err(Error::Config(format!(
                "sweep unit must be positive, got {unit} (set sweep.beta_unit when eps_omega = 0)"
            )));
        }
        let regime_eta = resonance_eta(&self.system, self.regime).map_err(config_err)?;
        let eta_center = self.sweep.eta_center.unwrap_or(regime_eta);
        let mut protocol = SweepProtocol::in_beta_units(
            eta_center,
            unit,
            self.sweep.nu0_beta,
            self.sweep.nu_rate_beta2,
            self.sweep.direction,
            self.sweep.t_end_beta,
        );
        protocol.k_range = self.sweep.k_range;
        protocol.check_window(unit).map_err(config_err)?;
        let grid = TimeGrid::new(0.0, protocol.t_end, self.dt, self.sample_stride).map_err(config_err)?;
        grid.check_step_bound(&self.system, &protocol).map_err(config_err)?;
        let lz = (protocol.nu_rate != 0.0).then(|| lz_probability(beta, protocol.nu_rate)).transpose()?;
        Ok(Resolved {
            config: self.clone(),
            space,
            derived: self.system.derived(),
            effective,
            beta,
            unit,
            regime_eta,
            protocol,
            grid,
            lz_probability: lz,
        })
    }
}

/// A config with every derived quantity computed.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ScenarioConfig,
    pub space: HilbertSpace,
    pub derived: DerivedParams,
    pub effective: EffectiveModel,
    pub beta: C64,
    /// Unit of the sweep quantities (`|β|` unless overridden).
    pub unit: f64,
    /// Center frequency of the regime's formula (before any override).
    pub regime_eta: f64,
    pub protocol: SweepProtocol,
    pub grid: TimeGrid,
    pub lz_probability: Option<f64>,
}

impl Resolved {
    pub fn beta_abs(&self) -> f64 {
        self.beta.norm()
    }

    pub fn initial_state(&self) -> Result<DensityMatrix> {
        self.config
            .initial_state
            .build(&self.config.system, &self.space)
            .map_err(|e| Error::Config(e.to_string()))
    }
}
