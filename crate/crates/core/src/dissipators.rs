//! Zero-temperature Lindblad kernels.
//!
//! * phenomenological: `κ𝒟[a] + γ𝒟[σ₋] + (γ_φ/2)𝒟[σz]` with constant rates;
//! * dressed (Jaynes-Cummings or Rabi eigenbasis): dephasing
//!   `𝒟[Σ_l Φ_l |l⟩⟨l|]` plus downward jumps `Γ^{lk} 𝒟[|l⟩⟨k|]` between
//!   time-independent dressed states, with rates vanishing at negative
//!   transition frequency.
//!
//! Dressed rate tables are built once from the spectrum at `Ω₀` and never
//! rebuilt during a sweep.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{re, CMatrix, CVector, ZERO};
use crate::model::SystemParams;
use crate::qops::{DensityMatrix, HilbertSpace, Operator, Operators, Qubit};
use crate::spectrum::{self, DressedSpectrum, Label};

/// Transition frequencies closer than this violate the secular assumption.
pub const GAP_DEGENERACY_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "ph")]
    Phenomenological,
    #[serde(rename = "jc")]
    JcDressed,
    #[serde(rename = "rabi")]
    RabiDressed,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::None,
        KernelKind::Phenomenological,
        KernelKind::JcDressed,
        KernelKind::RabiDressed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::None => "none",
            KernelKind::Phenomenological => "ph",
            KernelKind::JcDressed => "jc",
            KernelKind::RabiDressed => "rabi",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel {s:?} (none|ph|jc|rabi)")))
    }
}

/// Two distinct level pairs sharing a transition frequency.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegenerateGap {
    pub first: (Label, Label),
    pub second: (Label, Label),
    pub frequency: f64,
}

/// Dressed-picture rates. Index `[l][k]` is the jump `k → l`.
///
/// The basis is completed to a full orthonormal basis of the truncated
/// space; completion vectors carry no rates and no dephasing.
#[derive(Clone, Debug)]
pub struct RateTable {
    basis: CMatrix,
    labels: Vec<Label>,
    energies: Vec<f64>,
    phi: Vec<f64>,
    gamma_phi: DMatrix<f64>,
    gamma_kappa: DMatrix<f64>,
    gamma_gamma: DMatrix<f64>,
    degenerate_gaps: Vec<DegenerateGap>,
}

impl RateTable {
    /// Full `dim × dim` unitary whose first columns are the dressed states.
    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// `Φ_l = √(γ_φ/2) σz^{ll}`, zero on completion vectors.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn gamma_phi(&self) -> &DMatrix<f64> {
        &self.gamma_phi
    }

    pub fn gamma_kappa(&self) -> &DMatrix<f64> {
        &self.gamma_kappa
    }

    pub fn gamma_gamma(&self) -> &DMatrix<f64> {
        &self.gamma_gamma
    }

    /// Sum of the three jump rates.
    pub fn total(&self) -> DMatrix<f64> {
        &self.gamma_phi + &self.gamma_kappa + &self.gamma_gamma
    }

    pub fn degenerate_gaps(&self) -> &[DegenerateGap] {
        &self.degenerate_gaps
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Rate of `from → to` summed over channels.
    pub fn rate(&self, to: Label, from: Label) -> Result<f64> {
        let l = self.index_of(to).ok_or_else(|| Error::UnknownLabel(to.to_string()))?;
        let k = self.index_of(from).ok_or_else(|| Error::UnknownLabel(from.to_string()))?;
        Ok(self.gamma_phi[(l, k)] + self.gamma_kappa[(l, k)] + self.gamma_gamma[(l, k)])
    }

    /// Total decay rate out of each basis state, `Γ_k = Σ_l G_{lk}`.
    pub fn outflow(&self) -> Vec<f64> {
        let total = self.total();
        (0..self.dim()).map(|k| total.column(k).sum()).collect()
    }
}

/// Orthonormal completion of the columns of `w` using product basis vectors.
fn complete_basis(w: &CMatrix) -> CMatrix {
    let d = w.nrows();
    let mut cols: Vec<CVector> = (0..w.ncols()).map(|j| w.column(j).into_owned()).collect();
    for i in 0..d {
        if cols.len() == d {
            break;
        }
        let mut v = CVector::zeros(d);
        v[i] = re(1.0);
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dotc(&v);
                v -= c * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v / re(norm));
        }
    }
    CMatrix::from_columns(&cols)
}

fn degenerate_transitions(labels: &[Label], energies: &[f64]) -> Vec<DegenerateGap> {
    let mut gaps: Vec<(f64, usize, usize)> = Vec::new();
    for k in 0..energies.len() {
        for l in 0..k {
            gaps.push(((energies[k] - energies[l]).abs(), l, k));
        }
    }
    gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut found = Vec::new();
    for (i, a) in gaps.iter().enumerate() {
        for b in gaps[i + 1..].iter() {
            if b.0 - a.0 >= GAP_DEGENERACY_TOLERANCE {
                break;
            }
            found.push(DegenerateGap {
                first: (labels[a.1], labels[a.2]),
                second: (labels[b.1], labels[b.2]),
                frequency: a.0,
            });
        }
    }
    found
}

/// Builds the dressed rate table from a spectrum evaluated at `Ω₀`.
pub fn build_rate_table(spectrum: &DressedSpectrum, params: &SystemParams) -> RateTable {
    let d = spectrum.dim();
    let space = HilbertSpace::new(d / 2).expect("spectrum lives on a valid space");
    let ops = space.operators();
    let labelled = spectrum.len();
    let basis = complete_basis(&spectrum.vector_matrix());
    let energies: Vec<f64> = spectrum.levels().iter().map(|l| l.energy).collect();
    let labels: Vec<Label> = spectrum.labels().collect();

    let in_basis = |op: &Operator| basis.adjoint() * op * &basis;
    let sz = in_basis(&ops.sz);
    let xf = in_basis(&ops.x_field);
    let xq = in_basis(&ops.x_qubit);

    let mut phi = vec![0.0; d];
    for (l, p) in phi.iter_mut().enumerate().take(labelled) {
        *p = (params.gamma_phi / 2.0).sqrt() * sz[(l, l)].re;
    }
    let mut gamma_phi = DMatrix::zeros(d, d);
    let mut gamma_kappa = DMatrix::zeros(d, d);
    let mut gamma_gamma = DMatrix::zeros(d, d);
    for l in 0..labelled {
        for k in 0..labelled {
            // the bath only absorbs energy: rates live at Δ_kl = λ_k − λ_l ≥ 0
            if k == l || energies[k] < energies[l] {
                continue;
            }
            gamma_phi[(l, k)] = params.gamma_phi * sz[(l, k)].norm_sqr() / 2.0;
            gamma_kappa[(l, k)] = params.kappa * xf[(l, k)].norm_sqr();
            gamma_gamma[(l, k)] = params.gamma * xq[(l, k)].norm_sqr();
        }
    }

    let degenerate_gaps = degenerate_transitions(&labels, &energies);
    if !degenerate_gaps.is_empty() {
        warn!(
            "{} pairs of dressed transitions share a frequency within {GAP_DEGENERACY_TOLERANCE:e}; \
             treating them independently (first: {:?})",
            degenerate_gaps.len(),
            degenerate_gaps[0]
        );
    }
    RateTable {
        basis,
        labels,
        energies,
        phi,
        gamma_phi,
        gamma_kappa,
        gamma_gamma,
        degenerate_gaps,
    }
}

/// Decay constant of the dressed-frame coherence `ρ̃_ij`:
/// `½(Γ_i + Γ_j) + ½(Φ_i − Φ_j)²`.
pub(crate) fn coherence_decay(outflow: &[f64], phi: &[f64], i: usize, j: usize) -> f64 {
    0.5 * (outflow[i] + outflow[j]) + 0.5 * (phi[i] - phi[j]).powi(2)
}

/// Dressed kernel applied to `ρ`: rotate into the dressed basis, apply every
/// rank-one jump in closed form, rotate back.
pub fn apply_dressed(rho: &DensityMatrix, table: &RateTable) -> CMatrix {
    let w = table.basis();
    let d = table.dim();
    let rt = w.adjoint() * rho.matrix() * w;
    let total = table.total();
    let outflow = table.outflow();
    let phi = table.phi();
    let mut out = CMatrix::from_fn(d, d, |i, j| -rt[(i, j)] * coherence_decay(&outflow, phi, i, j));
    for l in 0..d {
        let feed: f64 = (0..d).map(|k| total[(l, k)] * rt[(k, k)].re).sum();
        out[(l, l)] += re(feed);
    }
    w * out * w.adjoint()
}

/// `𝒟[O]ρ = OρO† − ½{O†O, ρ}`.
pub fn lindblad_term(op: &Operator, rho: &CMatrix) -> CMatrix {
    let od = op.adjoint();
    let odo = &od * op;
    op * rho * &od - (&odo * rho + rho * &odo) * re(0.5)
}

/// Standard quantum-optical kernel with constant rates.
pub fn apply_phenomenological(rho: &DensityMatrix, params: &SystemParams, ops: &Operators) -> CMatrix {
    let r = rho.matrix();
    let mut out = CMatrix::from_element(r.nrows(), r.ncols(), ZERO);
    if params.kappa > 0.0 {
        out += lindblad_term(&ops.a, r) * re(params.kappa);
    }
    if params.gamma > 0.0 {
        out += lindblad_term(&ops.sm, r) * re(params.gamma);
    }
    if params.gamma_phi > 0.0 {
        out += lindblad_term(&ops.sz, r) * re(params.gamma_phi / 2.0);
    }
    out
}

/// A kernel ready for use, with its rate table when dressed.
#[derive(Clone, Debug)]
pub enum Kernel {
    None,
    Phenomenological,
    Dressed { kind: KernelKind, table: RateTable, spectrum: DressedSpectrum },
}

impl Kernel {
    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::None => KernelKind::None,
            Kernel::Phenomenological => KernelKind::Phenomenological,
            Kernel::Dressed { kind, .. } => *kind,
        }
    }

    pub fn table(&self) -> Option<&RateTable> {
        match self {
            Kernel::Dressed { table, .. } => Some(table),
            _ => None,
        }
    }

    pub fn spectrum(&self) -> Option<&DressedSpectrum> {
        match self {
            Kernel::Dressed { spectrum, .. } => Some(spectrum),
            _ => None,
        }
    }

    /// `ℒρ`.
    pub fn apply(&self, rho: &DensityMatrix, params: &SystemParams, space: &HilbertSpace) -> CMatrix {
        match self {
            Kernel::None => CMatrix::zeros(space.dim(), space.dim()),
            Kernel::Phenomenological => apply_phenomenological(rho, params, &space.operators()),
            Kernel::Dressed { table, .. } => apply_dressed(rho, table),
        }
    }

    /// State left invariant by the kernel at zero temperature.
    pub fn ground_state(&self, space: &HilbertSpace) -> DensityMatrix {
        match self {
            Kernel::Dressed { spectrum, .. } => {
                DensityMatrix::pure(spectrum.vector(Label::Ground).expect("dressed ground is labelled"))
            }
            _ => DensityMatrix::basis(space, Qubit::Ground, 0),
        }
    }
}

/// Builds a kernel; dressed kernels use every dressed level the space
/// supports (`n ≤ N − 3`).
pub fn build_kernel(kind: KernelKind, params: &SystemParams, space: &HilbertSpace) -> Result<Kernel> {
    let n_max = spectrum::max_analytic_n(space);
    let spectrum = match kind {
        KernelKind::None => return Ok(Kernel::None),
        KernelKind::Phenomenological => return Ok(Kernel::Phenomenological),
        KernelKind::JcDressed => spectrum::jc_spectrum(params, space, n_max)?,
        KernelKind::RabiDressed => spectrum::bloch_siegert_spectrum(params, space, n_max)?,
    };
    let table = build_rate_table(&spectrum, params);
    Ok(Kernel::Dressed { kind, table, spectrum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermiticity_error, C64};
    use crate::spectrum::{bloch_siegert_spectrum, jc_spectrum};

    const G: f64 = 0.04;

    fn params() -> SystemParams {
        SystemParams::new(1.0, G, 0.01).with_rates(1e-3, 2e-3, 3e-3)
    }

    fn random_state(d: usize, seed: u64) -> DensityMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = CMatrix::from_fn(d, d, |_, _| C64::new(next(), next()));
        let m = &a * a.adjoint();
        let tr = m.trace();
        DensityMatrix::from_matrix(m / tr)
    }

    #[test]
    fn kernel_names_round_trip() {
        for k in KernelKind::ALL {
            assert_eq!(k.name().parse::<KernelKind>().unwrap(), k);
        }
        assert!("davies".parse::<KernelKind>().is_err());
    }

    #[test]
    fn jc_resonant_rates() {
        let space = HilbertSpace::new(7).unwrap();
        let p = params();
        let table = build_rate_table(&jc_spectrum(&p, &space, 3).unwrap(), &p);
        let kappa = table.gamma_kappa()[(table.index_of(Label::Ground).unwrap(), table.index_of(Label::minus(1)).unwrap())];
        assert!((kappa - p.kappa / 2.0).abs() < 1e-15);
        let ground = table.index_of(Label::Ground).unwrap();
        assert!((table.phi()[ground] + (p.gamma_phi / 2.0).sqrt()).abs() < 1e-15);
        // nothing flows upwards
        let up = table.rate(Label::plus(1), Label::Ground).unwrap();
        assert_eq!(up, 0.0);
    }

    #[test]
    fn zero_rates_give_empty_table() {
        let space = HilbertSpace::new(6).unwrap();
        let p = SystemParams::new(1.0, G, 0.0);
        let table = build_rate_table(&bloch_siegert_spectrum(&p, &space, 3).unwrap(), &p);
        assert_eq!(table.total().amax(), 0.0);
        assert!(table.phi().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rates_vanish_at_negative_frequency() {
        let space = HilbertSpace::new(8).unwrap();
        let p = params();
        let table = build_rate_table(&bloch_siegert_spectrum(&p, &space, 5).unwrap(), &p);
        let total = table.total();
        let e = table.energies();
        for l in 0..e.len() {
            for k in 0..e.len() {
                assert!(total[(l, k)] >= 0.0);
                if e[k] < e[l] {
                    assert_eq!(total[(l, k)], 0.0);
                }
            }
        }
    }

    #[test]
    fn completed_basis_is_unitary() {
        let space = HilbertSpace::new(7).unwrap();
        let p = params();
        let table = build_rate_table(&bloch_siegert_spectrum(&p, &space, 4).unwrap(), &p);
        let w = table.basis();
        assert!((w.adjoint() * w - CMatrix::identity(14, 14)).camax() < 1e-12);
    }

    #[test]
    fn dressed_kernel_properties() {
        let space = HilbertSpace::new(6).unwrap();
        let p = params();
        for spectrum in [jc_spectrum(&p, &space, 3).unwrap(), bloch_siegert_spectrum(&p, &space, 3).unwrap()] {
            let table = build_rate_table(&spectrum, &p);
            for seed in 0..5 {
                let rho = random_state(space.dim(), seed);
                let out = apply_dressed(&rho, &table);
                assert!(out.trace().norm() < 1e-12);
                assert!(hermiticity_error(&out) < 1e-12);
            }
            let ground = DensityMatrix::pure(spectrum.vector(Label::Ground).unwrap());
            assert!(apply_dressed(&ground, &table).camax() < 1e-12);
        }
    }

    #[test]
    fn lower_polariton_decays_into_ground() {
        let space = HilbertSpace::new(6).unwrap();
        let p = params();
        let spectrum = jc_spectrum(&p, &space, 3).unwrap();
        let table = build_rate_table(&spectrum, &p);
        let rho = DensityMatrix::pure(spectrum.vector(Label::minus(1)).unwrap());
        let out = apply_dressed(&rho, &table);
        let g = spectrum.vector(Label::Ground).unwrap();
        let flow = g.dotc(&(&out * g)).re;
        assert!((flow - (p.kappa / 2.0 + p.gamma / 2.0)).abs() < 1e-15, "flow {flow}");
    }

    #[test]
    fn phenomenological_examples() {
        let space = HilbertSpace::new(5).unwrap();
        let ops = space.operators();
        let p = params();
        let vac = DensityMatrix::vacuum(&space);
        assert!(apply_phenomenological(&vac, &p, &ops).camax() < 1e-15);

        let one = DensityMatrix::basis(&space, Qubit::Ground, 1);
        let d = DensityMatrix::from_matrix(apply_phenomenological(&one, &p, &ops));
        assert!((d.expectation(&ops.n).re + p.kappa).abs() < 1e-15);

        let excited = DensityMatrix::basis(&space, Qubit::Excited, 0);
        let d = DensityMatrix::from_matrix(apply_phenomenological(&excited, &p, &ops));
        let pe = &ops.sp * &ops.sm;
        assert!((d.expectation(&pe).re + p.gamma).abs() < 1e-15);

        for seed in 0..5 {
            let rho = random_state(space.dim(), seed);
            let out = apply_phenomenological(&rho, &p, &ops);
            assert!(out.trace().norm() < 1e-12);
            assert!(hermiticity_error(&out) < 1e-12);
        }
    }

    #[test]
    fn jc_and_rabi_tables_agree() {
        let space = HilbertSpace::new(8).unwrap();
        let p = params();
        let jc = build_rate_table(&jc_spectrum(&p, &space, 5).unwrap(), &p);
        let rabi = build_rate_table(&bloch_siegert_spectrum(&p, &space, 5).unwrap(), &p);
        let scale = p.kappa.max(p.gamma).max(p.gamma_phi);
        for &to in jc.labels() {
            for &from in jc.labels() {
                let a = jc.rate(to, from).unwrap();
                let b = rabi.rate(to, from).unwrap();
                assert!((a - b).abs() < 0.1 * scale, "{from}->{to}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn build_kernel_variants() {
        let space = HilbertSpace::new(6).unwrap();
        let p = params();
        for kind in KernelKind::ALL {
            let k = build_kernel(kind, &p, &space).unwrap();
            assert_eq!(k.kind(), kind);
            let ground = k.ground_state(&space);
            assert!(k.apply(&ground, &p, &space).camax() < 1e-12);
        }
    }
}
