//! Dressed spectra of the bare Rabi Hamiltonian.
//!
//! Three flavours are produced: the first-order Bloch-Siegert approximation
//! (Jaynes-Cummings structure with shifted parameters, rotated back by the
//! unitary `U_R`), the plain Jaynes-Cummings spectrum, and exact numerical
//! diagonalization labelled by overlap with the Bloch-Siegert states.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, re, CMatrix, CVector};
use crate::model::{bare_hamiltonian, DerivedParams, SystemParams};
use crate::qops::{HilbertSpace, Operator, Qubit};

/// Largest `Λ = g₀/Δ₊` accepted by the Bloch-Siegert construction.
pub const MAX_LAMBDA: f64 = 0.1;
/// Two overlaps closer than this make a label assignment ambiguous.
pub const AMBIGUITY_TOLERANCE: f64 = 1e-3;
/// Exact eigenvalues closer than this are treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;
/// Minimum overlap for an exact level to inherit an analytic label.
pub const MIN_LABEL_OVERLAP: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "plus")]
    Plus,
    #[serde(rename = "minus")]
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn from_sign(sign: f64) -> Self {
        if sign < 0.0 {
            Branch::Minus
        } else {
            Branch::Plus
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

/// Dressed-state label: the ground state `G` or `(n, ±)` for `n ≥ 1`
/// total excitations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Ground,
    Dressed { n: usize, branch: Branch },
}

impl Label {
    pub fn dressed(n: usize, branch: Branch) -> Self {
        if n == 0 {
            Label::Ground
        } else {
            Label::Dressed { n, branch }
        }
    }

    pub fn plus(n: usize) -> Self {
        Self::dressed(n, Branch::Plus)
    }

    pub fn minus(n: usize) -> Self {
        Self::dressed(n, Branch::Minus)
    }

    pub fn excitations(&self) -> usize {
        match self {
            Label::Ground => 0,
            Label::Dressed { n, .. } => *n,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Ground => f.write_str("G"),
            Label::Dressed { n, branch } => {
                write!(f, "{n}{}", if *branch == Branch::Plus { '+' } else { '-' })
            }
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "G" || s == "0" {
            return Ok(Label::Ground);
        }
        let bad = || Error::UnknownLabel(s.to_string());
        let (num, sign) = s.split_at(s.len().checked_sub(1).ok_or_else(bad)?);
        let branch = match sign {
            "+" => Branch::Plus,
            "-" => Branch::Minus,
            _ => return Err(bad()),
        };
        let n: usize = num.parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        Ok(Label::Dressed { n, branch })
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    BlochSiegert,
    JaynesCummings,
    Exact,
}

#[derive(Clone, Debug)]
pub struct Level {
    pub label: Label,
    pub energy: f64,
    pub vector: CVector,
}

/// Labelled energies and eigenvectors, stored in nondecreasing energy order.
#[derive(Clone, Debug)]
pub struct DressedSpectrum {
    kind: SpectrumKind,
    levels: Vec<Level>,
    /// `θ_n` for `n = 1..=n_max` (empty for exact spectra).
    mixing_angles: Vec<f64>,
}

impl DressedSpectrum {
    fn from_levels(kind: SpectrumKind, mut levels: Vec<Level>, mixing_angles: Vec<f64>) -> Self {
        levels.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.label.cmp(&b.label)));
        DressedSpectrum { kind, levels, mixing_angles }
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Dimension of the Hilbert space the eigenvectors live in.
    pub fn dim(&self) -> usize {
        self.levels.first().map_or(0, |l| l.vector.len())
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.levels.iter().map(|l| l.label)
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.levels.iter().position(|l| l.label == label)
    }

    pub fn level(&self, label: Label) -> Result<&Level> {
        self.levels
            .iter()
            .find(|l| l.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn energy(&self, label: Label) -> Result<f64> {
        self.level(label).map(|l| l.energy)
    }

    pub fn vector(&self, label: Label) -> Result<&CVector> {
        self.level(label).map(|l| &l.vector)
    }

    /// `θ_n`, `n ≥ 1`.
    pub fn mixing_angle(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.mixing_angles.get(i)).copied()
    }

    /// Largest excitation number carried by a label.
    pub fn n_max(&self) -> usize {
        self.levels.iter().map(|l| l.label.excitations()).max().unwrap_or(0)
    }

    /// Eigenvectors as the columns of a `dim × len` matrix, in level order.
    pub fn vector_matrix(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim(), self.len());
        for (j, level) in self.levels.iter().enumerate() {
            m.set_column(j, &level.vector);
        }
        m
    }
}

/// `θ_n = arctan[(Δ̃ + √(Δ̃² + 4g²n)) / (2g√n)]`, evaluated without
/// cancellation for negative `Δ̃`.
pub fn mixing_angle(shifted_detuning: f64, g0: f64, n: usize) -> f64 {
    let coupling = 2.0 * g0 * (n as f64).sqrt();
    let root = shifted_detuning.hypot(coupling);
    let numerator = if shifted_detuning >= 0.0 {
        shifted_detuning + root
    } else {
        coupling * coupling / (root - shifted_detuning)
    };
    numerator.atan2(coupling)
}

/// `U_R = exp[Λ(aσ₋ − a†σ₊) + ξ(a² − a†²)σz]` on the truncated space.
pub fn bs_unitary(params: &SystemParams, space: &HilbertSpace) -> Operator {
    let d = params.derived();
    let ops = space.operators();
    let a2 = &ops.a * &ops.a;
    let a2_dag = &ops.a_dag * &ops.a_dag;
    let generator = (&ops.a * &ops.sm - &ops.a_dag * &ops.sp) * re(d.lambda)
        + ((a2 - a2_dag) * &ops.sz) * re(d.xi);
    generator.exp()
}

fn analytic_spectrum(
    params: &SystemParams,
    space: &HilbertSpace,
    n_max: usize,
    kind: SpectrumKind,
) -> Result<DressedSpectrum> {
    if n_max + 2 >= space.fock_cutoff() {
        return Err(Error::InvalidArgument(format!(
            "n_max = {n_max} must be below fock_cutoff - 2 = {}",
            space.fock_cutoff() as isize - 2
        )));
    }
    let derived = params.derived();
    let (shift, rotation) = match kind {
        SpectrumKind::BlochSiegert => {
            if derived.lambda >= MAX_LAMBDA {
                return Err(Error::OutOfRegime(format!(
                    "Lambda = g0/Delta_plus = {:.4} is not small (limit {MAX_LAMBDA})",
                    derived.lambda
                )));
            }
            (derived.bs_shift, Some(bs_unitary(params, space)))
        }
        SpectrumKind::JaynesCummings => (0.0, None),
        SpectrumKind::Exact => unreachable!("exact spectra are built by diagonalization"),
    };
    let w0 = params.omega0;
    let g = params.g0;
    let rotate = |v: CVector| match &rotation {
        Some(u) => u * v,
        None => v,
    };

    let mut levels = Vec::with_capacity(2 * n_max + 1);
    let mut angles = Vec::with_capacity(n_max);
    levels.push(Level {
        label: Label::Ground,
        energy: -(params.omega_qubit + shift) / 2.0,
        vector: rotate(space.ket(Qubit::Ground, 0)),
    });
    for n in 1..=n_max {
        let nf = n as f64;
        let shifted = derived.detuning - 2.0 * shift * nf;
        let root = (shifted * shifted + 4.0 * g * g * nf).sqrt();
        let center = w0 * nf - (w0 + shift) / 2.0;
        let theta = mixing_angle(shifted, g, n);
        let (s, c) = theta.sin_cos();
        let gn = space.ket(Qubit::Ground, n);
        let en = space.ket(Qubit::Excited, n - 1);
        levels.push(Level {
            label: Label::plus(n),
            energy: center + root / 2.0,
            vector: rotate(&gn * re(s) + &en * re(c)),
        });
        levels.push(Level {
            label: Label::minus(n),
            energy: center - root / 2.0,
            vector: rotate(&gn * re(c) - &en * re(s)),
        });
        angles.push(theta);
    }
    Ok(DressedSpectrum::from_levels(kind, levels, angles))
}

/// First-order Bloch-Siegert spectrum with eigenvectors `U_R|Υ_i⟩`.
pub fn bloch_siegert_spectrum(
    params: &SystemParams,
    space: &HilbertSpace,
    n_max: usize,
) -> Result<DressedSpectrum> {
    analytic_spectrum(params, space, n_max, SpectrumKind::BlochSiegert)
}

/// Jaynes-Cummings spectrum (`δ₊ = Λ = ξ = 0`).
pub fn jc_spectrum(params: &SystemParams, space: &HilbertSpace, n_max: usize) -> Result<DressedSpectrum> {
    analytic_spectrum(params, space, n_max, SpectrumKind::JaynesCummings)
}

/// Largest `n_max` accepted by the analytic spectra on this space.
pub fn max_analytic_n(space: &HilbertSpace) -> usize {
    space.fock_cutoff().saturating_sub(3)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assignment {
    pub target_index: usize,
    pub label: Label,
    pub overlap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ambiguity {
    pub target_index: usize,
    pub candidates: Vec<(Label, f64)>,
}

/// Result of [`match_labels`].
#[derive(Clone, Debug, Default, Serialize)]
pub struct LabelMatch {
    /// Sorted by target index.
    pub assignments: Vec<Assignment>,
    pub ambiguities: Vec<Ambiguity>,
}

impl LabelMatch {
    pub fn label_of(&self, target_index: usize) -> Option<Label> {
        self.assignments
            .iter()
            .find(|a| a.target_index == target_index)
            .map(|a| a.label)
    }

    pub fn min_overlap(&self) -> f64 {
        self.assignments.iter().map(|a| a.overlap).fold(f64::INFINITY, f64::min)
    }
}

/// Greedy maximum-overlap assignment of reference labels to target levels;
/// ties are broken towards the lower target, then reference, index.
pub fn match_labels(reference: &DressedSpectrum, target: &DressedSpectrum) -> LabelMatch {
    let energies: Vec<f64> = target.levels.iter().map(|l| l.energy).collect();
    let vectors: Vec<&CVector> = target.levels.iter().map(|l| &l.vector).collect();
    match_vectors(reference, &energies, &vectors)
}

fn match_vectors(reference: &DressedSpectrum, energies: &[f64], vectors: &[&CVector]) -> LabelMatch {
    let n_ref = reference.len();
    let n_tgt = vectors.len();
    let overlap: Vec<Vec<f64>> = vectors
        .iter()
        .map(|t| reference.levels.iter().map(|r| linalg::inner(&r.vector, t).norm()).collect())
        .collect();

    let mut pairs: Vec<(usize, usize)> =
        (0..n_tgt).flat_map(|j| (0..n_ref).map(move |i| (j, i))).collect();
    pairs.sort_by(|&(j1, i1), &(j2, i2)| {
        overlap[j2][i2]
            .partial_cmp(&overlap[j1][i1])
            .unwrap_or(Ordering::Equal)
            .then(j1.cmp(&j2))
            .then(i1.cmp(&i2))
    });
    let mut ref_used = vec![false; n_ref];
    let mut tgt_label: Vec<Option<usize>> = vec![None; n_tgt];
    for (j, i) in pairs {
        if tgt_label[j].is_none() && !ref_used[i] {
            tgt_label[j] = Some(i);
            ref_used[i] = true;
        }
    }

    let mut result = LabelMatch::default();
    for (j, assigned) in tgt_label.iter().enumerate() {
        let Some(i) = *assigned else { continue };
        result.assignments.push(Assignment {
            target_index: j,
            label: reference.levels[i].label,
            overlap: overlap[j][i],
        });

        let mut ranked: Vec<usize> = (0..n_ref).collect();
        ranked.sort_by(|&a, &b| overlap[j][b].total_cmp(&overlap[j][a]).then(a.cmp(&b)));
        let mut candidates = Vec::new();
        if let [best, second, ..] = ranked[..] {
            if overlap[j][second] > 0.0 && overlap[j][best] - overlap[j][second] < AMBIGUITY_TOLERANCE {
                candidates.push((reference.levels[best].label, overlap[j][best]));
                candidates.push((reference.levels[second].label, overlap[j][second]));
            }
        }
        for (k, other) in tgt_label.iter().enumerate() {
            if k == j {
                continue;
            }
            if let Some(i2) = *other {
                if (energies[k] - energies[j]).abs() < DEGENERACY_TOLERANCE {
                    if candidates.is_empty() {
                        candidates.push((reference.levels[i].label, overlap[j][i]));
                    }
                    candidates.push((reference.levels[i2].label, overlap[j][i2]));
                }
            }
        }
        if !candidates.is_empty() {
            result.ambiguities.push(Ambiguity { target_index: j, candidates });
        }
    }
    result
}

/// Exact diagonalization of the bare Rabi Hamiltonian. Levels are labelled
/// by overlap with the Bloch-Siegert states (Jaynes-Cummings when `Λ` is
/// too large); eigenvectors with no analytic counterpart near the Fock
/// truncation are dropped.
pub fn exact_spectrum(params: &SystemParams, space: &HilbertSpace) -> Result<DressedSpectrum> {
    let n_max = max_analytic_n(space);
    let reference = bloch_siegert_spectrum(params, space, n_max)
        .or_else(|_| jc_spectrum(params, space, n_max))?;
    let h = bare_hamiltonian(params, space);
    let (energies, vectors) = linalg::eigh(&h);
    let columns: Vec<CVector> = (0..energies.len()).map(|i| vectors.column(i).into_owned()).collect();
    let refs: Vec<&CVector> = columns.iter().collect();
    let matched = match_vectors(&reference, &energies, &refs);

    if let Some(weak) = matched.assignments.iter().find(|a| a.overlap < MIN_LABEL_OVERLAP) {
        return Err(Error::LabelAmbiguity(format!(
            "exact level {} (E = {:.8}) overlaps {} only by {:.3}",
            weak.target_index, energies[weak.target_index], weak.label, weak.overlap
        )));
    }
    for amb in &matched.ambiguities {
        warn!(
            "exact level {} (E = {:.10}) has ambiguous label candidates {:?}",
            amb.target_index, energies[amb.target_index], amb.candidates
        );
    }
    let levels = matched
        .assignments
        .iter()
        .map(|a| Level {
            label: a.label,
            energy: energies[a.target_index],
            vector: columns[a.target_index].clone(),
        })
        .collect();
    Ok(DressedSpectrum::from_levels(SpectrumKind::Exact, levels, Vec::new()))
}

/// Modulation-frequency law selecting a family of effective transitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// `|R_0⟩ ↔ |R_{2,±}⟩` at `Δ₋ = 0`.
    Resonant { branch: Branch },
    /// `|R_0⟩ ↔ |R_{2,−𝒟}⟩` in the dispersive regime.
    AntiJc,
    /// Multiphoton `|R_{n,𝒟}⟩ ↔ |R_{n+2,𝒟}⟩` ladder in the dispersive regime.
    Dce,
    /// `|R_{n,𝒟}⟩ ↔ |R_{n,−𝒟}⟩` sideband resonant at `n = m`.
    Sideband { m: usize },
}

impl Regime {
    pub fn is_dispersive(&self) -> bool {
        !matches!(self, Regime::Resonant { .. })
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Resonant { branch: Branch::Plus } => f.write_str("resonant+"),
            Regime::Resonant { branch: Branch::Minus } => f.write_str("resonant-"),
            Regime::AntiJc => f.write_str("anti-jc"),
            Regime::Dce => f.write_str("dce"),
            Regime::Sideband { m } => write!(f, "sideband(m={m})"),
        }
    }
}

/// Highest excitation number for which the dispersive picture is used:
/// `floor((Δ₋ / 4g₀)²)`.
pub fn dispersive_n_max(params: &SystemParams) -> usize {
    let ratio = (params.omega0 - params.omega_qubit) / (4.0 * params.g0);
    (ratio * ratio).floor() as usize
}

/// Validity conditions of a regime; returns the derived constants.
pub fn check_regime(params: &SystemParams, regime: Regime) -> Result<DerivedParams> {
    let d = params.derived();
    if !regime.is_dispersive() {
        if !d.is_resonant() {
            return Err(Error::OutOfRegime(format!(
                "{regime} needs Delta_minus = 0, got {:.3e}",
                d.detuning
            )));
        }
        if d.lambda >= MAX_LAMBDA {
            return Err(Error::OutOfRegime(format!(
                "{regime} needs Lambda << 1, got {:.4}",
                d.lambda
            )));
        }
        return Ok(d);
    }
    if d.is_resonant() {
        return Err(Error::OutOfRegime(format!("{regime} needs Delta_minus != 0")));
    }
    if d.detuning.abs() >= params.omega0 {
        return Err(Error::OutOfRegime(format!(
            "{regime} needs |Delta_minus| << omega0, got {:.4}",
            d.detuning
        )));
    }
    let n_max = dispersive_n_max(params);
    if n_max < 1 {
        return Err(Error::OutOfRegime(format!(
            "{regime} needs g0 sqrt(n) << |Delta_minus|/2; |Delta_minus| = {:.4} < 4 g0",
            d.detuning.abs()
        )));
    }
    if let Regime::Sideband { m } = regime {
        if m == 0 || m > n_max {
            return Err(Error::OutOfRegime(format!(
                "sideband index m = {m} must lie in 1..={n_max}"
            )));
        }
    }
    Ok(d)
}

/// Center modulation frequency `η_c` of a regime.
pub fn resonance_eta(params: &SystemParams, regime: Regime) -> Result<f64> {
    let d = check_regime(params, regime)?;
    let w0 = params.omega0;
    let dm = d.dispersive_shift.unwrap_or(0.0);
    let alpha = d.kerr.unwrap_or(0.0);
    let dp = d.bs_shift;
    Ok(match regime {
        Regime::Resonant { branch } => 2.0 * w0 + branch.sign() * params.g0 * 2f64.sqrt(),
        Regime::AntiJc => d.detuning_sum - 2.0 * (dm - dp) + 4.0 * alpha,
        Regime::Dce => 2.0 * w0 + 2.0 * (dm - dp) - 4.0 * alpha,
        Regime::Sideband { m } => {
            let m = m as f64;
            (d.detuning - 2.0 * dp * m).abs() + 2.0 * dm.abs() * m - 2.0 * alpha.abs() * m * m
        }
    })
}
