//! Physical parameters, the chirped modulation law and the Rabi Hamiltonian.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{re, C64};
use crate::qops::{HilbertSpace, Operator, Operators};

/// Detunings smaller than this are treated as exact resonance.
pub const RESONANCE_TOLERANCE: f64 = 1e-6;

/// Physical constants in units of the cavity frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    #[serde(default = "one")]
    pub omega0: f64,
    /// Bare qubit transition frequency `Ω₀`.
    pub omega_qubit: f64,
    pub g0: f64,
    /// Modulation depth `ε_Ω`.
    pub eps_omega: f64,
    /// Modulation phase `φ_Ω` in radians.
    #[serde(default)]
    pub phi_omega: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub gamma_phi: f64,
}

fn one() -> f64 {
    1.0
}

impl SystemParams {
    /// Dissipationless parameters with `ω₀ = 1` and `φ_Ω = 0`.
    pub fn new(omega_qubit: f64, g0: f64, eps_omega: f64) -> Self {
        SystemParams {
            omega0: 1.0,
            omega_qubit,
            g0,
            eps_omega,
            phi_omega: 0.0,
            kappa: 0.0,
            gamma: 0.0,
            gamma_phi: 0.0,
        }
    }

    pub fn with_rates(mut self, kappa: f64, gamma: f64, gamma_phi: f64) -> Self {
        self.kappa = kappa;
        self.gamma = gamma;
        self.gamma_phi = gamma_phi;
        self
    }

    /// Checks the perturbative-modulation conditions and rate signs.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.omega0 > 0.0) || !(self.omega_qubit > 0.0) {
            return bad(format!(
                "frequencies must be positive (omega0 = {}, omega_qubit = {})",
                self.omega0, self.omega_qubit
            ));
        }
        if !(self.g0 >= 0.0) {
            return bad(format!("g0 must be non-negative, got {}", self.g0));
        }
        if !(self.eps_omega >= 0.0) {
            return bad(format!("eps_omega must be non-negative, got {}", self.eps_omega));
        }
        if !(self.eps_omega < 0.1 * self.omega_qubit) {
            return bad(format!(
                "eps_omega = {} is not small against omega_qubit = {} (need < 0.1 omega_qubit)",
                self.eps_omega, self.omega_qubit
            ));
        }
        for (name, rate) in [("kappa", self.kappa), ("gamma", self.gamma), ("gamma_phi", self.gamma_phi)] {
            if !(rate >= 0.0) {
                return bad(format!("{name} must be non-negative, got {rate}"));
            }
        }
        Ok(())
    }

    pub fn derived(&self) -> DerivedParams {
        DerivedParams::new(self)
    }
}

/// Constants derived from [`SystemParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivedParams {
    /// `Δ₊ = ω₀ + Ω₀`
    pub detuning_sum: f64,
    /// `Δ₋ = ω₀ − Ω₀`
    pub detuning: f64,
    /// Bloch-Siegert shift `δ₊ = g₀²/Δ₊`.
    pub bs_shift: f64,
    /// Dispersive shift `δ₋ = g₀²/Δ₋`, unavailable at resonance.
    pub dispersive_shift: Option<f64>,
    /// `Λ = g₀/Δ₊`
    pub lambda: f64,
    /// `ξ = Λ g₀ / 2ω₀`
    pub xi: f64,
    /// Kerr constant `α = g₀⁴/Δ₋³`, unavailable at resonance.
    pub kerr: Option<f64>,
    /// Sign of `Δ₋` (`+1` at resonance).
    pub detuning_sign: f64,
    /// `ε_Ω e^{iφ_Ω}`
    pub eps_complex: C64,
}

impl DerivedParams {
    pub fn new(p: &SystemParams) -> Self {
        let detuning_sum = p.omega0 + p.omega_qubit;
        let detuning = p.omega0 - p.omega_qubit;
        let g2 = p.g0 * p.g0;
        let resonant = detuning.abs() < RESONANCE_TOLERANCE;
        let lambda = p.g0 / detuning_sum;
        DerivedParams {
            detuning_sum,
            detuning,
            bs_shift: g2 / detuning_sum,
            dispersive_shift: (!resonant).then(|| g2 / detuning),
            lambda,
            xi: lambda * p.g0 / (2.0 * p.omega0),
            kerr: (!resonant).then(|| g2 * g2 / detuning.powi(3)),
            detuning_sign: if detuning < 0.0 { -1.0 } else { 1.0 },
            eps_complex: C64::from_polar(p.eps_omega, p.phi_omega),
        }
    }

    pub fn is_resonant(&self) -> bool {
        self.detuning.abs() < RESONANCE_TOLERANCE
    }
}

/// Sweep direction `S` in `η(t) = η_c − S ν(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }
}

impl TryFrom<i8> for Direction {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Direction::Forward),
            -1 => Ok(Direction::Reverse),
            other => Err(format!("direction must be +1 or -1, got {other}")),
        }
    }
}

impl From<Direction> for i8 {
    fn from(d: Direction) -> i8 {
        d.sign() as i8
    }
}

/// Linear chirp of the modulation frequency:
/// `η(t) = η_c − S ν(t)` with `ν(t) = ν₀ + ν̇ t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepProtocol {
    pub eta_center: f64,
    pub nu0: f64,
    pub nu_rate: f64,
    pub direction: Direction,
    pub t_end: f64,
    /// Allowed excursion of `|ν|` in units of `|β|`.
    pub k_range: f64,
}

impl SweepProtocol {
    /// Constant-frequency drive at `eta`.
    pub fn harmonic(eta: f64, t_end: f64) -> Self {
        SweepProtocol {
            eta_center: eta,
            nu0: 0.0,
            nu_rate: 0.0,
            direction: Direction::Forward,
            t_end,
            k_range: 8.0,
        }
    }

    /// Sweep expressed in units of the effective coupling: `ν₀ = start·|β|`,
    /// `ν̇ = rate·|β|²`, `t_end = duration/|β|`.
    pub fn in_beta_units(
        eta_center: f64,
        beta_abs: f64,
        start: f64,
        rate: f64,
        direction: Direction,
        duration: f64,
    ) -> Self {
        SweepProtocol {
            eta_center,
            nu0: start * beta_abs,
            nu_rate: rate * beta_abs * beta_abs,
            direction,
            t_end: duration / beta_abs,
            k_range: 8.0,
        }
    }

    pub fn nu(&self, t: f64) -> f64 {
        self.nu0 + self.nu_rate * t
    }

    /// `V(t) = ν(t) + t ν̇`, the detuning seen by the effective models.
    pub fn sweep_detuning(&self, t: f64) -> f64 {
        self.nu(t) + t * self.nu_rate
    }

    pub fn modulation_frequency(&self, t: f64) -> f64 {
        self.eta_center - self.direction.sign() * self.nu(t)
    }

    /// Time at which `ν(t) = 0`, if it happens inside `[0, t_end]`.
    pub fn center_crossing(&self) -> Option<f64> {
        if self.nu_rate == 0.0 {
            return None;
        }
        let t = -self.nu0 / self.nu_rate;
        (0.0..=self.t_end).contains(&t).then_some(t)
    }

    /// Checks `|ν(t)| ≤ K|β|` over the protocol window (ν is linear, so the
    /// endpoints suffice).
    pub fn check_window(&self, beta_abs: f64) -> Result<()> {
        let limit = self.k_range * beta_abs * (1.0 + 1e-12);
        let worst = self.nu(0.0).abs().max(self.nu(self.t_end).abs());
        if worst > limit {
            return Err(Error::OutOfRegime(format!(
                "|nu| reaches {:.4}|beta| but k_range is {}",
                worst / beta_abs,
                self.k_range
            )));
        }
        Ok(())
    }
}

/// `Ω(t) = Ω₀ + ε_Ω sin(η(t)·t + φ_Ω)`, with the phase taken literally as
/// `η(t)·t` (not the accumulated phase).
pub fn qubit_frequency(params: &SystemParams, protocol: &SweepProtocol, t: f64) -> f64 {
    params.omega_qubit + modulation_offset(params, protocol, t)
}

/// `Ω(t) − Ω₀`.
#[inline]
pub fn modulation_offset(params: &SystemParams, protocol: &SweepProtocol, t: f64) -> f64 {
    params.eps_omega * (protocol.modulation_frequency(t) * t + params.phi_omega).sin()
}

/// `H = ω₀ n + Ω₀ σz/2 + g₀ (a + a†)(σ₊ + σ₋)`.
pub fn bare_hamiltonian(params: &SystemParams, space: &HilbertSpace) -> Operator {
    bare_from_operators(params, &space.operators())
}

pub(crate) fn bare_from_operators(params: &SystemParams, ops: &Operators) -> Operator {
    &ops.n * re(params.omega0)
        + &ops.sz * re(params.omega_qubit / 2.0)
        + (&ops.x_field * &ops.x_qubit) * re(params.g0)
}

/// Time-dependent Rabi Hamiltonian at time `t`.
pub fn rabi_hamiltonian(
    params: &SystemParams,
    protocol: &SweepProtocol,
    t: f64,
    space: &HilbertSpace,
) -> Operator {
    let ops = space.operators();
    bare_from_operators(params, &ops) + &ops.sz * re(modulation_offset(params, protocol, t) / 2.0)
}

/// Rabi parity `exp(iπ(n + |e⟩⟨e|))`, diagonal `±1` in the product basis.
pub fn parity_operator(space: &HilbertSpace) -> Operator {
    let mut p = space.zeros();
    for i in 0..space.dim() {
        let (q, n) = space.state_of(i);
        let excitations = n + q.index();
        p[(i, i)] = (C64::new(0.0, PI * excitations as f64)).exp();
    }
    p
}
