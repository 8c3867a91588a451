//! Truncated qubit ⊗ Fock space and its operator algebra.
//!
//! Basis ordering is fixed: the state `|q, n⟩` (qubit `q ∈ {g, e}`, photon
//! number `n < N`) lives at index `2n + q` with `g = 0`, `e = 1`. All
//! operators are dense `2N × 2N` complex matrices.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64, ONE, ZERO};

pub type Operator = CMatrix;

/// Qubit basis state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Qubit {
    #[serde(rename = "g")]
    Ground,
    #[serde(rename = "e")]
    Excited,
}

impl Qubit {
    pub fn index(self) -> usize {
        match self {
            Qubit::Ground => 0,
            Qubit::Excited => 1,
        }
    }
}

impl fmt::Display for Qubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Qubit::Ground => "g",
            Qubit::Excited => "e",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HilbertSpace {
    fock_cutoff: usize,
}

impl HilbertSpace {
    /// Space with Fock levels `0..fock_cutoff`.
    pub fn new(fock_cutoff: usize) -> Result<Self> {
        if fock_cutoff < 2 {
            return Err(Error::InvalidArgument(format!(
                "fock cutoff must be at least 2, got {fock_cutoff}"
            )));
        }
        Ok(HilbertSpace { fock_cutoff })
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn dim(&self) -> usize {
        2 * self.fock_cutoff
    }

    #[inline]
    pub fn index(&self, q: Qubit, n: usize) -> usize {
        debug_assert!(n < self.fock_cutoff);
        2 * n + q.index()
    }

    /// Inverse of [`HilbertSpace::index`].
    pub fn state_of(&self, index: usize) -> (Qubit, usize) {
        let q = if index % 2 == 0 { Qubit::Ground } else { Qubit::Excited };
        (q, index / 2)
    }

    pub fn ket(&self, q: Qubit, n: usize) -> CVector {
        let mut v = CVector::zeros(self.dim());
        v[self.index(q, n)] = ONE;
        v
    }

    pub fn identity(&self) -> Operator {
        Operator::identity(self.dim(), self.dim())
    }

    pub fn zeros(&self) -> Operator {
        Operator::zeros(self.dim(), self.dim())
    }

    /// Field operator `f ⊗ 1_qubit`.
    pub fn embed_field(&self, field: &DMatrix<f64>) -> Operator {
        linalg::complexify(&field.kronecker(&DMatrix::identity(2, 2)))
    }

    /// Qubit operator `1_field ⊗ s`.
    pub fn embed_qubit(&self, qubit: &DMatrix<f64>) -> Operator {
        let n = self.fock_cutoff;
        linalg::complexify(&DMatrix::<f64>::identity(n, n).kronecker(qubit))
    }

    pub fn operators(&self) -> Operators {
        let n = self.fock_cutoff;
        let mut a = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            a[(k - 1, k)] = (k as f64).sqrt();
        }
        let a_dag = a.transpose();
        let num = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_fn(n, |k, _| k as f64));
        // qubit ordering: g = 0, e = 1
        let sp = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let sm = sp.transpose();
        let sz = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);

        let a = self.embed_field(&a);
        let a_dag = self.embed_field(&a_dag);
        let sp = self.embed_qubit(&sp);
        let sm = self.embed_qubit(&sm);
        Operators {
            x_field: &a + &a_dag,
            x_qubit: &sp + &sm,
            n: self.embed_field(&num),
            sz: self.embed_qubit(&sz),
            a,
            a_dag,
            sp,
            sm,
        }
    }
}

/// The elementary operators of the model, embedded on the full space.
#[derive(Clone, Debug)]
pub struct Operators {
    pub a: Operator,
    pub a_dag: Operator,
    pub n: Operator,
    pub sp: Operator,
    pub sm: Operator,
    pub sz: Operator,
    /// `a + a†`
    pub x_field: Operator,
    /// `σ₊ + σ₋`
    pub x_qubit: Operator,
}

/// Dense density operator on a [`HilbertSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

/// Sanity figures of a density matrix.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StateHealth {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl DensityMatrix {
    pub fn from_matrix(m: CMatrix) -> Self {
        assert!(m.is_square(), "density matrix must be square");
        DensityMatrix(m)
    }

    /// `|ψ⟩⟨ψ|` for the normalized `ψ`.
    pub fn pure(psi: &CVector) -> Self {
        let psi = psi.normalize();
        DensityMatrix(&psi * psi.adjoint())
    }

    pub fn basis(space: &HilbertSpace, q: Qubit, n: usize) -> Self {
        Self::pure(&space.ket(q, n))
    }

    pub fn vacuum(space: &HilbertSpace) -> Self {
        Self::basis(space, Qubit::Ground, 0)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `Tr[ρ O]`.
    pub fn expectation(&self, op: &Operator) -> C64 {
        // Tr[ρ O] = Σ_ij ρ_ij O_ji
        let n = self.dim();
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += self.0[(i, j)] * op[(j, i)];
            }
        }
        acc
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized `ψ`.
    pub fn population(&self, psi: &CVector) -> f64 {
        psi.dotc(&(&self.0 * psi)).re
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::eigvalsh(&self.0).first().copied().unwrap_or(0.0)
    }

    pub fn health(&self) -> StateHealth {
        StateHealth {
            trace_error: (self.trace() - ONE).norm(),
            hermiticity_error: linalg::hermiticity_error(&self.0),
            min_eigenvalue: self.min_eigenvalue(),
        }
    }
}

/// Coherent field state `|g, α⟩`, renormalized after truncation.
pub fn coherent_state(space: &HilbertSpace, alpha: C64) -> Result<DensityMatrix> {
    let cutoff = space.fock_cutoff();
    if alpha.norm_sqr() > cutoff as f64 / 2.0 {
        return Err(Error::Truncation(format!(
            "|alpha|^2 = {:.4} exceeds half the fock cutoff {cutoff}",
            alpha.norm_sqr()
        )));
    }
    let mut psi = CVector::zeros(space.dim());
    let mut amp = ONE;
    for n in 0..cutoff {
        if n > 0 {
            amp *= alpha / (n as f64).sqrt();
        }
        psi[space.index(Qubit::Ground, n)] = amp;
    }
    Ok(DensityMatrix::pure(&psi))
}

/// Total population of the two highest Fock levels (both qubit states).
pub fn leakage(rho: &DensityMatrix, space: &HilbertSpace) -> f64 {
    let top = space.fock_cutoff();
    (top - 2..top)
        .flat_map(|n| [Qubit::Ground, Qubit::Excited].map(|q| space.index(q, n)))
        .map(|i| rho.matrix()[(i, i)].re)
        .sum()
}
