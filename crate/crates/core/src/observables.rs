//! Quantities extracted from a density matrix: photon-number moments,
//! Mandel Q, qubit excitation and joint qubit/Fock populations.

use serde::Serialize;

use crate::linalg::CMatrix;
use crate::qops::DensityMatrix;
use crate::spectrum::{DressedSpectrum, Label};

/// Below this mean photon number Q is reported as undefined.
pub const MIN_MEAN_N: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableBundle {
    pub mean_n: f64,
    /// `None` when `⟨n⟩ < 10⁻¹⁰`.
    pub mandel_q: Option<f64>,
    pub p_excited: f64,
    pub fock_dist: Vec<f64>,
    pub joint_g: Vec<f64>,
    pub joint_e: Vec<f64>,
    pub dressed_pops: Option<Vec<(Label, f64)>>,
}

impl ObservableBundle {
    pub fn dressed_population(&self, label: Label) -> Option<f64> {
        self.dressed_pops
            .as_ref()?
            .iter()
            .find(|(l, _)| *l == label)
            .map(|&(_, p)| p)
    }
}

/// `Q = (⟨Δn²⟩ − ⟨n⟩)/⟨n⟩` of a photon-number distribution.
pub fn mandel_q_from_distribution(p: &[f64]) -> Option<f64> {
    let (m1, m2) = p.iter().enumerate().fold((0.0, 0.0), |(m1, m2), (n, &pn)| {
        let n = n as f64;
        (m1 + n * pn, m2 + n * n * pn)
    });
    (m1 >= MIN_MEAN_N).then(|| (m2 - m1 * m1 - m1) / m1)
}

/// Photon-number distribution `P(n)` summed over the qubit.
pub fn fock_distribution(rho: &DensityMatrix) -> Vec<f64> {
    let d = rho.diagonal();
    d.chunks(2).map(|c| c[0] + c[1]).collect()
}

/// Reduced field state `Tr_qubit ρ`.
pub fn reduced_field(rho: &DensityMatrix) -> CMatrix {
    let m = rho.matrix();
    let n = m.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)])
}

pub fn mandel_q(rho: &DensityMatrix) -> Option<f64> {
    mandel_q_from_distribution(&fock_distribution(rho))
}

/// All plotted quantities; dressed populations only when a spectrum is given.
pub fn bundle(rho: &DensityMatrix, spectrum: Option<&DressedSpectrum>) -> ObservableBundle {
    let diag = rho.diagonal();
    let joint_g: Vec<f64> = diag.iter().step_by(2).copied().collect();
    let joint_e: Vec<f64> = diag.iter().skip(1).step_by(2).copied().collect();
    let fock_dist: Vec<f64> = joint_g.iter().zip(&joint_e).map(|(g, e)| g + e).collect();
    let mean_n = fock_dist.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let dressed_pops = spectrum.map(|s| {
        s.levels()
            .iter()
            .map(|level| (level.label, rho.population(&level.vector)))
            .collect()
    });
    ObservableBundle {
        mean_n,
        mandel_q: mandel_q_from_distribution(&fock_dist),
        p_excited: joint_e.iter().sum(),
        fock_dist,
        joint_g,
        joint_e,
        dressed_pops,
    }
}
