//! Reduced interaction-picture Hamiltonians for the four modulation regimes
//! and the Landau-Zener transition probability.
//!
//! Every model depends on time only through the effective detuning
//! `𝒮V(t)`, with `V = ν + tν̇`; the sweep direction `𝒮` enters because the
//! drive is `η(t) = η_c − 𝒮ν(t)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::TimeGrid;
use crate::linalg::{re, CMatrix, CVector, C64, I, ZERO};
use crate::model::{SweepProtocol, SystemParams};
use crate::qops::Operator;
use crate::spectrum::{check_regime, dispersive_n_max, Branch, DressedSpectrum, Label, Regime};

/// Landau-Zener transition probability `1 − exp(−π|β|²/|ν̇|)`.
pub fn lz_probability(beta: C64, nu_rate: f64) -> Result<f64> {
    if nu_rate == 0.0 || !nu_rate.is_finite() {
        return Err(Error::InvalidArgument(format!("nu_rate must be finite and nonzero, got {nu_rate}")));
    }
    Ok(-(-std::f64::consts::PI * beta.norm_sqr() / nu_rate.abs()).exp_m1())
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectiveModel {
    pub regime: Regime,
    pub basis: Vec<Label>,
    pub beta: C64,
    /// Kerr constant (DCE and sideband models).
    pub alpha_kerr: Option<f64>,
    pub n_max: usize,
    /// Sign of `Δ₋`.
    pub d_sign: f64,
    /// `δ₋ − δ₊`, used by the sideband diagonal.
    shift_difference: f64,
}

impl EffectiveModel {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.basis.iter().position(|&l| l == label)
    }

    /// Hamiltonian at effective detuning `v` (that is `𝒮V(t)`).
    pub fn hamiltonian(&self, v: f64) -> CMatrix {
        let d = self.dim();
        let mut h = CMatrix::from_element(d, d, ZERO);
        let beta = self.beta;
        match self.regime {
            Regime::Resonant { branch } => {
                h[(0, 0)] = re(-v / 2.0);
                h[(1, 1)] = re(v / 2.0);
                h[(0, 1)] = I * beta * branch.sign();
                h[(1, 0)] = h[(0, 1)].conj();
            }
            Regime::AntiJc => {
                h[(0, 0)] = re(-v / 2.0);
                h[(1, 1)] = re(v / 2.0);
                h[(0, 1)] = -I * beta * self.d_sign;
                h[(1, 0)] = h[(0, 1)].conj();
            }
            Regime::Dce => {
                let alpha = self.alpha_kerr.unwrap_or(0.0);
                for n in 0..d {
                    let nf = n as f64;
                    h[(n, n)] = re((v - 2.0 * alpha * (nf - 2.0)) / 2.0 * nf);
                    if n + 2 < d {
                        h[(n, n + 2)] = I * beta * (((nf + 1.0) * (nf + 2.0)) / 2.0).sqrt();
                        h[(n + 2, n)] = h[(n, n + 2)].conj();
                    }
                }
            }
            Regime::Sideband { m } => {
                let alpha = self.alpha_kerr.unwrap_or(0.0);
                let mf = m as f64;
                for n in 1..=self.n_max {
                    let nf = n as f64;
                    let h_n = (self.d_sign * v - 2.0 * self.shift_difference * (mf - nf)
                        + 2.0 * alpha * (mf * mf - nf * nf))
                        / 2.0;
                    let (up, down) = (2 * (n - 1), 2 * (n - 1) + 1);
                    h[(up, up)] = re(h_n);
                    h[(down, down)] = re(-h_n);
                    h[(down, up)] = I * beta * (nf.sqrt() / 2.0);
                    h[(up, down)] = h[(down, up)].conj();
                }
            }
        }
        h
    }
}

fn dispersive_label(n: usize, sign: f64) -> Label {
    if n == 0 {
        Label::Ground
    } else {
        Label::dressed(n, Branch::from_sign(sign))
    }
}

/// Builds the effective model of `regime`; fails when its validity
/// conditions do not hold.
pub fn build_effective(params: &SystemParams, regime: Regime) -> Result<EffectiveModel> {
    let d = check_regime(params, regime)?;
    let g = params.g0;
    let eps = d.eps_complex;
    let sign = d.detuning_sign;
    let delta_minus = d.dispersive_shift.unwrap_or(0.0);
    let mut model = EffectiveModel {
        regime,
        basis: Vec::new(),
        beta: ZERO,
        alpha_kerr: d.kerr,
        n_max: 2,
        d_sign: sign,
        shift_difference: delta_minus - d.bs_shift,
    };
    match regime {
        Regime::Resonant { branch } => {
            model.basis = vec![Label::Ground, Label::dressed(2, branch)];
            model.beta = eps * (g / (2.0 * 2f64.sqrt() * d.detuning_sum));
            model.alpha_kerr = None;
        }
        Regime::AntiJc => {
            model.basis = vec![Label::Ground, dispersive_label(2, -sign)];
            model.beta = eps * (g / (2.0 * d.detuning_sum));
        }
        Regime::Dce => {
            let n_max = dispersive_n_max(params);
            model.n_max = n_max;
            model.basis = (0..=n_max).map(|n| dispersive_label(n, sign)).collect();
            model.beta = eps * (delta_minus / (2f64.sqrt() * d.detuning_sum));
        }
        Regime::Sideband { m } => {
            if params.eps_omega * (m as f64).sqrt() >= g {
                return Err(Error::OutOfRegime(format!(
                    "sideband needs eps_Omega sqrt(m) << g0, got {:.4} vs {g}",
                    params.eps_omega * (m as f64).sqrt()
                )));
            }
            let n_max = dispersive_n_max(params);
            model.n_max = n_max;
            model.basis = (1..=n_max)
                .flat_map(|n| [dispersive_label(n, sign), dispersive_label(n, -sign)])
                .collect();
            let eps_d = if sign > 0.0 { eps } else { eps.conj() };
            model.beta = eps_d * (g / d.detuning);
        }
    }
    Ok(model)
}

/// Amplitudes over an effective model basis.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveState(CVector);

impl EffectiveState {
    pub fn from_amplitudes(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("amplitudes have norm {norm}")));
        }
        Ok(EffectiveState(amplitudes))
    }

    pub fn basis(model: &EffectiveModel, label: Label) -> Result<Self> {
        let i = model.index_of(label).ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        let mut v = CVector::zeros(model.dim());
        v[i] = re(1.0);
        Ok(EffectiveState(v))
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

#[derive(Clone, Debug)]
pub struct EffectiveTrajectory {
    pub times: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
    pub final_state: EffectiveState,
}

impl EffectiveTrajectory {
    /// Population of basis entry `index` at every sample.
    pub fn population_series(&self, index: usize) -> Vec<f64> {
        self.populations.iter().map(|p| p[index]).collect()
    }
}

/// RK4 on `i dA/dt = H(𝒮V(t)) A`.
pub fn evolve_effective(
    model: &EffectiveModel,
    protocol: &SweepProtocol,
    state0: &EffectiveState,
    grid: &TimeGrid,
) -> Result<EffectiveTrajectory> {
    if state0.0.len() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "state has {} amplitudes, model basis has {}",
            state0.0.len(),
            model.dim()
        )));
    }
    let s = protocol.direction.sign();
    let rhs = |t: f64, a: &CVector| -> CVector { (model.hamiltonian(s * protocol.sweep_detuning(t)) * a) * (-I) };
    let mut a = state0.0.clone();
    let mut times = Vec::new();
    let mut populations = Vec::new();
    let steps = grid.steps();
    let dt = grid.dt;
    for step in 0..=steps {
        let t = grid.time(step);
        if step % grid.sample_stride == 0 || step == steps {
            times.push(t);
            populations.push(a.iter().map(|z| z.norm_sqr()).collect());
        }
        if step == steps {
            break;
        }
        let k1 = rhs(t, &a);
        let k2 = rhs(t + dt / 2.0, &(&a + &k1 * re(dt / 2.0)));
        let k3 = rhs(t + dt / 2.0, &(&a + &k2 * re(dt / 2.0)));
        let k4 = rhs(t + dt, &(&a + &k3 * re(dt)));
        a += (k1 + (k2 + k3) * re(2.0) + k4) * re(dt / 6.0);
    }
    Ok(EffectiveTrajectory { times, populations, final_state: EffectiveState(a) })
}

/// `|R⟩⟨R|` on the full space.
pub fn dressed_projector(spectrum: &DressedSpectrum, label: Label) -> Result<Operator> {
    let v = spectrum.vector(label)?;
    Ok(v * v.adjoint())
}
