//! Fixed-step RK4 propagation of `dρ/dt = −i[H(t), ρ] + ℒρ`.
//!
//! The right-hand side is assembled from operator products. The
//! anti-Hermitian part of every kernel is folded into `K = H − (i/2)A`, so
//! with `Y = ρK†` the coherent and anticommutator terms are `i(Y − Y†)`
//! (ρ is Hermitian) and one sparse product per evaluation suffices. Jump
//! terms `JρJ†` reuse the same product.
//!
//! Dressed kernels are integrated in the dressed frame `ρ̃ = W†ρW` where
//! their action is diagonal in closed form; states are rotated back at
//! sample times only. Parity blocks of `ρ̃` that stay empty are skipped.
//!
//! By default the state is propagated in the interaction picture of the
//! static diagonal energies `E` of the frame, `ρ_I = e^{iEt} ρ̃ e^{−iEt}`.
//! The rotation is diagonal and exact, so the step error no longer grows
//! with the spread of the spectrum, which in the lab picture breaks
//! positivity of states with coherences across many Fock levels.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dissipators::{self, Kernel, KernelKind};
use crate::error::{Error, Result};
use crate::linalg::{adjoint_into, re, CMatrix, C64, I, ZERO};
use crate::model::{self, SweepProtocol, SystemParams};
use crate::observables::{self, ObservableBundle};
use crate::qops::{leakage, DensityMatrix, HilbertSpace};
use crate::spectrum::DressedSpectrum;

/// Step bound `dt ≤ STEP_FACTOR / max(ω₀, η_max)`.
pub const STEP_FACTOR: f64 = 0.1;
pub const MAX_TRACE_ERROR: f64 = 1e-6;
pub const MAX_LEAKAGE: f64 = 1e-4;
pub const MIN_EIGENVALUE: f64 = -1e-6;
/// Tolerance of the self-convergence check.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-3;

/// Relative magnitude below which dressed-frame matrix entries are dropped.
const SPARSITY_CUTOFF: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub sample_stride: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, dt: f64, sample_stride: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if !(t_end >= t_start) {
            return Err(Error::InvalidArgument(format!("t_end {t_end} precedes t_start {t_start}")));
        }
        if sample_stride == 0 {
            return Err(Error::InvalidArgument("sample_stride must be at least 1".into()));
        }
        Ok(TimeGrid { t_start, t_end, dt, sample_stride })
    }

    /// Number of RK4 steps; the last step lands on `t_end` up to rounding.
    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t_start + step as f64 * self.dt
    }

    /// Same window with half the step and twice the stride.
    pub fn refined(&self) -> TimeGrid {
        TimeGrid { dt: self.dt / 2.0, sample_stride: self.sample_stride * 2, ..*self }
    }

    /// Largest step allowed for a drive reaching `η_max`.
    pub fn max_step(params: &SystemParams, protocol: &SweepProtocol, t_start: f64, t_end: f64) -> f64 {
        let eta_max = protocol
            .modulation_frequency(t_start)
            .abs()
            .max(protocol.modulation_frequency(t_end).abs());
        STEP_FACTOR / params.omega0.max(eta_max)
    }

    pub fn check_step_bound(&self, params: &SystemParams, protocol: &SweepProtocol) -> Result<()> {
        let limit = Self::max_step(params, protocol, self.t_start, self.t_end);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "dt = {} exceeds the step bound {limit:.6}",
                self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
    pub max_leakage: f64,
    /// Largest `|ρ − ρ†|` entry produced by a step before symmetrization.
    pub max_hermiticity_error: f64,
}

/// Why and when a run stopped, with the diagnostics gathered so far.
#[derive(Clone, Debug, Serialize)]
pub struct AbortReport {
    pub time: f64,
    pub reason: String,
    pub diagnostics: Diagnostics,
    pub samples_completed: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub records: Vec<ObservableBundle>,
    pub leakage: Vec<f64>,
    pub final_state: DensityMatrix,
    pub diagnostics: Diagnostics,
    /// Sampled states, only when requested.
    pub states: Option<Vec<DensityMatrix>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mean_n(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_n).collect()
    }

    pub fn p_excited(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.p_excited).collect()
    }
}

/// Picture in which the state is propagated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Picture {
    /// Rotating with the static diagonal energies of the frame.
    #[default]
    Interaction,
    Lab,
}

#[derive(Clone, Debug, Default)]
pub struct EvolveOptions {
    pub picture: Picture,
    /// Spectrum whose populations are recorded at each sample.
    pub spectrum: Option<DressedSpectrum>,
    pub store_states: bool,
    /// Skip the `dt` bound (convergence studies only).
    pub allow_coarse_step: bool,
}

/// Sparse right operand `B(t) = B₀ + f(t)·B₁`, stored per column.
#[derive(Clone, Debug)]
struct DrivenColumns {
    cols: Vec<Vec<(usize, C64, C64)>>,
}

impl DrivenColumns {
    fn new(base: &CMatrix, drive: Option<&CMatrix>) -> Self {
        let scale = base.camax().max(drive.map_or(0.0, |d| d.camax()));
        let cut = SPARSITY_CUTOFF * scale;
        let n = base.nrows();
        let cols = (0..n)
            .map(|j| {
                (0..n)
                    .filter_map(|k| {
                        let b = base[(k, j)];
                        let d = drive.map_or(ZERO, |d| d[(k, j)]);
                        (b.norm() > cut || d.norm() > cut).then_some((k, b, d))
                    })
                    .collect()
            })
            .collect();
        DrivenColumns { cols }
    }

    /// `out ← a · (B₀ + f B₁)`, reading only `rows[k]` of column `k` of `a`.
    fn right_mul(&self, a: &CMatrix, f: f64, out: &mut CMatrix, rows: &[Range<usize>]) {
        let n = a.nrows();
        let a = a.as_slice();
        let o = out.as_mut_slice();
        for (j, col) in self.cols.iter().enumerate() {
            let oc = &mut o[j * n..(j + 1) * n];
            oc.fill(ZERO);
            for &(k, b, d) in col {
                let r = rows[k].clone();
                if r.is_empty() {
                    continue;
                }
                let w = b + d * f;
                for (oi, ai) in oc[r.clone()].iter_mut().zip(&a[k * n + r.start..k * n + r.end]) {
                    *oi += ai * w;
                }
            }
        }
    }
}

/// Jump operator `J` for the term `JρJ†`.
#[derive(Clone, Debug)]
enum Jump {
    /// At most one entry per row: `J_{i,k_i} = c_i`, so `(JρJ†)_{ij} = c_i c_j* ρ_{k_i k_j}`.
    Monomial(Vec<Option<(usize, C64)>>),
    /// Columns of `J†`.
    General(DrivenColumns),
}

impl Jump {
    fn new(j: &CMatrix) -> Self {
        let cut = SPARSITY_CUTOFF * j.camax();
        let rows: Vec<Vec<(usize, C64)>> = (0..j.nrows())
            .map(|i| (0..j.ncols()).filter(|&k| j[(i, k)].norm() > cut).map(|k| (k, j[(i, k)])).collect())
            .collect();
        if rows.iter().all(|r| r.len() <= 1) {
            Jump::Monomial(rows.into_iter().map(|r| r.first().copied()).collect())
        } else {
            Jump::General(DrivenColumns::new(&j.adjoint(), None))
        }
    }

    /// `out += JρJ†`, where `active` bounds the nonzero rows of each output column.
    fn add_to(&self, rho: &CMatrix, out: &mut CMatrix, s: &mut Scratch, active: &[Range<usize>], all: &[Range<usize>]) {
        match self {
            Jump::Monomial(entries) => {
                for (j, ej) in entries.iter().enumerate() {
                    let Some((kj, cj)) = *ej else { continue };
                    let cj = cj.conj();
                    for i in active[j].clone() {
                        if let Some((ki, ci)) = entries[i] {
                            out[(i, j)] += ci * cj * rho[(ki, kj)];
                        }
                    }
                }
            }
            Jump::General(j_dag) => {
                // ρJ† then (Jρ)J† = JρJ†
                j_dag.right_mul(rho, 0.0, &mut s.z, all);
                adjoint_into(&s.z, &mut s.zd);
                j_dag.right_mul(&s.zd, 0.0, &mut s.z, all);
                *out += &s.z;
            }
        }
    }
}

#[derive(Clone, Debug)]
struct DressedTerms {
    phi: Vec<f64>,
    feed: Vec<Vec<(usize, f64)>>,
}

/// Parity `n + q mod 2` of product-basis index `2n + q`.
fn basis_parity(i: usize) -> usize {
    (i / 2 + i % 2) % 2
}

/// Parity of a vector, if it has one (weights below `10⁻²⁸` count as zero).
fn vector_parity(v: &[C64]) -> Option<usize> {
    let mut w = [0.0; 2];
    for (i, z) in v.iter().enumerate() {
        w[basis_parity(i)] += z.norm_sqr();
    }
    match (w[0] > 1e-28, w[1] > 1e-28) {
        (true, false) => Some(0),
        (false, true) => Some(1),
        _ => None,
    }
}

/// Right-hand side compiled for one (params, protocol, kernel) triple.
///
/// The frame basis is ordered even parity first whenever the generator
/// conserves Rabi parity. A state whose parity blocks are partly empty then
/// keeps that structure (jumps that flip parity map block `(p, q)` to
/// `(1−p, 1−q)`), and the coherent product skips the empty blocks.
#[derive(Clone, Debug)]
struct Generator {
    params: SystemParams,
    protocol: SweepProtocol,
    k_dag: DrivenColumns,
    jumps: Vec<Jump>,
    dressed: Option<DressedTerms>,
    /// Frame basis `W` (columns are frame vectors); `ρ̃ = W†ρW`.
    frame: CMatrix,
    /// Number of even frame vectors when parity is conserved.
    split: Option<usize>,
    flips_parity: bool,
    /// Rows of column `k` of `ρ̃` that may be nonzero.
    rows: Vec<Range<usize>>,
    all_rows: Vec<Range<usize>>,
    /// Energies removed from `K` in the interaction picture.
    energies: Option<Vec<f64>>,
    /// Time at which both pictures coincide.
    origin: f64,
}

struct Scratch {
    y: CMatrix,
    z: CMatrix,
    zd: CMatrix,
    r: CMatrix,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch {
            y: CMatrix::zeros(d, d),
            z: CMatrix::zeros(d, d),
            zd: CMatrix::zeros(d, d),
            r: CMatrix::zeros(d, d),
        }
    }
}

fn conserves_parity(m: &CMatrix, split: usize) -> bool {
    let cut = SPARSITY_CUTOFF * m.camax();
    let d = m.nrows();
    (0..d).all(|j| (0..d).all(|i| (i < split) == (j < split) || m[(i, j)].norm() <= cut))
}

impl Generator {
    fn new(
        params: &SystemParams,
        protocol: &SweepProtocol,
        kernel: &Kernel,
        space: &HilbertSpace,
        picture: Picture,
        origin: f64,
    ) -> Self {
        let ops = space.operators();
        let d = space.dim();
        let h0 = model::bare_from_operators(params, &ops);
        let lab_frame = CMatrix::identity(d, d);
        let w = match kernel {
            Kernel::Dressed { table, .. } => table.basis(),
            _ => &lab_frame,
        };

        let parities: Option<Vec<usize>> = (0..d).map(|j| vector_parity(w.column(j).as_slice())).collect();
        let order: Vec<usize> = match &parities {
            Some(p) => (0..d).filter(|&j| p[j] == 0).chain((0..d).filter(|&j| p[j] == 1)).collect(),
            None => (0..d).collect(),
        };
        let frame = CMatrix::from_fn(d, d, |i, j| w[(i, order[j])]);
        let conj = |m: &CMatrix| frame.adjoint() * m * &frame;

        let mut k_dag = conj(&h0);
        let drive = conj(&ops.sz);
        let mut jumps = Vec::new();
        let mut jump_ops = Vec::new();
        let mut dressed = None;
        match kernel {
            Kernel::None => {}
            Kernel::Phenomenological => {
                let channels = [(params.kappa, &ops.a), (params.gamma, &ops.sm), (params.gamma_phi / 2.0, &ops.sz)];
                for (rate, op) in channels {
                    if rate > 0.0 {
                        let j = conj(op) * re(rate.sqrt());
                        k_dag += (j.adjoint() * &j) * (I * 0.5);
                        jumps.push(Jump::new(&j));
                        jump_ops.push(j);
                    }
                }
            }
            Kernel::Dressed { table, .. } => {
                let total = table.total();
                let outflow = table.outflow();
                let phi: Vec<f64> = order.iter().map(|&k| table.phi()[k]).collect();
                for (i, &k) in order.iter().enumerate() {
                    k_dag[(i, i)] += I * (0.5 * (outflow[k] + phi[i] * phi[i]));
                }
                let feed = order
                    .iter()
                    .map(|&l| {
                        order
                            .iter()
                            .enumerate()
                            .filter(|&(_, &k)| total[(l, k)] > 0.0)
                            .map(|(i, &k)| (i, total[(l, k)]))
                            .collect()
                    })
                    .collect();
                dressed = Some(DressedTerms { phi, feed });
            }
        }

        let split = parities
            .map(|p| p.iter().filter(|&&x| x == 0).count())
            .filter(|&s| conserves_parity(&k_dag, s) && conserves_parity(&drive, s));
        let flips_parity = match split {
            None => false,
            Some(s) => {
                let jump_flip = jump_ops.iter().any(|j| !conserves_parity(j, s));
                let feed_flip = dressed.as_ref().is_some_and(|dr: &DressedTerms| {
                    dr.feed.iter().enumerate().any(|(l, f)| f.iter().any(|&(k, _)| (k < s) != (l < s)))
                });
                jump_flip || feed_flip
            }
        };
        let energies = (picture == Picture::Interaction).then(|| {
            let e: Vec<f64> = (0..d).map(|i| k_dag[(i, i)].re).collect();
            for (i, &ei) in e.iter().enumerate() {
                k_dag[(i, i)] -= ei;
            }
            e
        });
        let all_rows = vec![0..d; d];
        Generator {
            params: *params,
            protocol: *protocol,
            k_dag: DrivenColumns::new(&k_dag, Some(&drive)),
            jumps,
            dressed,
            frame,
            split,
            flips_parity,
            rows: all_rows.clone(),
            all_rows,
            energies,
            origin,
        }
    }

    /// Restricts the coherent product to the parity blocks reachable from
    /// `rho` (in the frame); entries of `rho` in unreachable blocks below
    /// `10⁻¹⁴` are cleared.
    fn restrict_to(&mut self, rho: &mut CMatrix) {
        let Some(s) = self.split else { return };
        let d = rho.nrows();
        let block = |i: usize| usize::from(i >= s);
        let mut active = [[false; 2]; 2];
        for j in 0..d {
            for i in 0..d {
                if rho[(i, j)].norm() > 1e-14 {
                    active[block(i)][block(j)] = true;
                }
            }
        }
        if self.flips_parity {
            for p in 0..2 {
                for q in 0..2 {
                    active[p][q] |= active[1 - p][1 - q];
                }
            }
        }
        for j in 0..d {
            for i in 0..d {
                if !active[block(i)][block(j)] {
                    rho[(i, j)] = ZERO;
                }
            }
        }
        let ranges = [0..s, s..d];
        self.rows = (0..d)
            .map(|k| {
                let q = block(k);
                match (active[0][q], active[1][q]) {
                    (true, true) => 0..d,
                    (true, false) => ranges[0].clone(),
                    (false, true) => ranges[1].clone(),
                    (false, false) => 0..0,
                }
            })
            .collect();
    }

    fn drive(&self, t: f64) -> f64 {
        model::modulation_offset(&self.params, &self.protocol, t) / 2.0
    }

    /// `u_k = e^{−iE_k(t − t₀)}`; false in the lab picture.
    fn phases(&self, t: f64, u: &mut [C64]) -> bool {
        let Some(e) = &self.energies else { return false };
        let tau = t - self.origin;
        for (uk, ek) in u.iter_mut().zip(e) {
            *uk = C64::from_polar(1.0, -ek * tau);
        }
        true
    }

    /// Lab picture state (in the frame basis) at time `t` to propagated state.
    fn to_frame(&self, t: f64, rho: &CMatrix) -> CMatrix {
        let mut m = self.frame.adjoint() * rho * &self.frame;
        let mut u = vec![ZERO; m.nrows()];
        if self.phases(t, &mut u) {
            rotate(&mut m, &u, true, &self.all_rows);
        }
        m
    }

    fn from_frame(&self, t: f64, rho: &CMatrix) -> CMatrix {
        let mut u = vec![ZERO; rho.nrows()];
        if self.phases(t, &mut u) {
            let mut m = rho.clone();
            rotate(&mut m, &u, false, &self.all_rows);
            &self.frame * m * self.frame.adjoint()
        } else {
            &self.frame * rho * self.frame.adjoint()
        }
    }

    /// Right-hand side of the propagated state at `t`.
    #[cfg(test)]
    fn eval_at(&self, t: f64, rho: &CMatrix, out: &mut CMatrix, s: &mut Scratch) {
        let mut u = vec![ZERO; rho.nrows()];
        let u = self.phases(t, &mut u).then_some(&u[..]);
        self.eval(t, u, rho, out, s);
    }

    /// Right-hand side given the phases `u` at `t` (interaction picture only).
    fn eval(&self, t: f64, u: Option<&[C64]>, rho: &CMatrix, out: &mut CMatrix, s: &mut Scratch) {
        let Some(u) = u else {
            return self.eval_frame(t, rho, out, s);
        };
        let mut r = std::mem::replace(&mut s.r, CMatrix::zeros(0, 0));
        for (j, rows) in self.rows.iter().enumerate() {
            let (a, b) = (col(&mut r, j, rows), col_ref(rho, j, rows));
            a.copy_from_slice(b);
        }
        rotate(&mut r, u, false, &self.rows);
        self.eval_frame(t, &r, out, s);
        rotate(out, u, true, &self.rows);
        s.r = r;
    }

    /// Right-hand side for the state in the frame basis, lab picture
    /// (minus `−i[E, ρ̃]` in the interaction picture).
    fn eval_frame(&self, t: f64, rho: &CMatrix, out: &mut CMatrix, s: &mut Scratch) {
        self.k_dag.right_mul(rho, self.drive(t), &mut s.y, &self.rows);
        for (j, rows) in self.rows.iter().enumerate() {
            for i in rows.clone() {
                out[(i, j)] = I * (s.y[(i, j)] - s.y[(j, i)].conj());
            }
        }
        for jump in &self.jumps {
            jump.add_to(rho, out, s, &self.rows, &self.all_rows);
        }
        if let Some(dr) = &self.dressed {
            for (j, rows) in self.rows.iter().enumerate() {
                for i in rows.clone() {
                    out[(i, j)] += rho[(i, j)] * (dr.phi[i] * dr.phi[j]);
                }
            }
            for (l, feed) in dr.feed.iter().enumerate() {
                let gain: f64 = feed.iter().map(|&(k, g)| g * rho[(k, k)].re).sum();
                out[(l, l)] += gain;
            }
        }
    }
}

/// Rows `rows` of column `j`.
fn col<'a>(m: &'a mut CMatrix, j: usize, rows: &Range<usize>) -> &'a mut [C64] {
    let n = m.nrows();
    &mut m.as_mut_slice()[j * n + rows.start..j * n + rows.end]
}

fn col_ref<'a>(m: &'a CMatrix, j: usize, rows: &Range<usize>) -> &'a [C64] {
    let n = m.nrows();
    &m.as_slice()[j * n + rows.start..j * n + rows.end]
}

/// `ρ_ij ← u_i ρ_ij u_j*`, or with `u*` when `inverse`.
fn rotate(rho: &mut CMatrix, u: &[C64], inverse: bool, rows: &[Range<usize>]) {
    for (j, r) in rows.iter().enumerate() {
        let uj = if inverse { u[j] } else { u[j].conj() };
        for (x, ui) in col(rho, j, r).iter_mut().zip(&u[r.clone()]) {
            let ui = if inverse { ui.conj() } else { *ui };
            *x *= ui * uj;
        }
    }
}

/// `ρ ← (ρ + ρ†)/2` over the active rows, returning the largest asymmetry removed.
fn symmetrize(rho: &mut CMatrix, rows: &[Range<usize>]) -> f64 {
    let mut worst = 0.0f64;
    for (j, r) in rows.iter().enumerate() {
        for i in r.start..r.end.min(j) {
            let a = rho[(i, j)];
            let b = rho[(j, i)].conj();
            worst = worst.max((a - b).norm());
            let m = (a + b) * 0.5;
            rho[(i, j)] = m;
            rho[(j, i)] = m.conj();
        }
        if r.contains(&j) {
            worst = worst.max(rho[(j, j)].im.abs());
            rho[(j, j)].im = 0.0;
        }
    }
    worst
}

/// `out ← x + a·y` over the active rows.
fn axpy_into(out: &mut CMatrix, x: &CMatrix, a: f64, y: &CMatrix, rows: &[Range<usize>]) {
    for (j, r) in rows.iter().enumerate() {
        for ((o, xi), yi) in col(out, j, r).iter_mut().zip(col_ref(x, j, r)).zip(col_ref(y, j, r)) {
            *o = xi + yi * a;
        }
    }
}

/// Propagates `rho0` with a kernel built from `kind`.
pub fn evolve(
    rho0: &DensityMatrix,
    params: &SystemParams,
    protocol: &SweepProtocol,
    kind: KernelKind,
    grid: &TimeGrid,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    let space = HilbertSpace::new(rho0.dim() / 2)?;
    let kernel = dissipators::build_kernel(kind, params, &space)?;
    evolve_with_kernel(rho0, params, protocol, &kernel, grid, options)
}

/// Propagates `rho0` with a prebuilt kernel.
pub fn evolve_with_kernel(
    rho0: &DensityMatrix,
    params: &SystemParams,
    protocol: &SweepProtocol,
    kernel: &Kernel,
    grid: &TimeGrid,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    params.validate()?;
    if rho0.dim() % 2 != 0 {
        return Err(Error::InvalidArgument(format!("state dimension {} is odd", rho0.dim())));
    }
    let space = HilbertSpace::new(rho0.dim() / 2)?;
    let health = rho0.health();
    if health.trace_error > MAX_TRACE_ERROR
        || health.hermiticity_error > 1e-10
        || health.min_eigenvalue < MIN_EIGENVALUE
    {
        return Err(Error::InvalidArgument(format!("initial state is not a density matrix: {health:?}")));
    }
    if !options.allow_coarse_step {
        grid.check_step_bound(params, protocol)?;
    }

    let mut gen = Generator::new(params, protocol, kernel, &space, options.picture, grid.t_start);
    let d = space.dim();
    let spectrum = options.spectrum.as_ref();
    let mut rho = gen.to_frame(grid.t_start, rho0.matrix());
    gen.restrict_to(&mut rho);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (CMatrix::zeros(d, d), CMatrix::zeros(d, d), CMatrix::zeros(d, d), CMatrix::zeros(d, d), CMatrix::zeros(d, d));
    let mut scratch = Scratch::new(d);
    // phases at t, t + dt/2 and t + dt
    let mut u = [vec![ZERO; d], vec![ZERO; d], vec![ZERO; d]];
    let half_step: Vec<C64> = gen
        .energies
        .as_ref()
        .map_or_else(Vec::new, |e| e.iter().map(|&ek| C64::from_polar(1.0, -ek * grid.dt / 2.0)).collect());
    let mut diagnostics = Diagnostics { min_eigenvalue: f64::INFINITY, ..Default::default() };
    let mut traj = Trajectory {
        times: Vec::new(),
        records: Vec::new(),
        leakage: Vec::new(),
        final_state: rho0.clone(),
        diagnostics,
        states: options.store_states.then(Vec::new),
    };

    let steps = grid.steps();
    let dt = grid.dt;
    for step in 0..=steps {
        let t = grid.time(step);
        if step % grid.sample_stride == 0 || step == steps {
            let lab = DensityMatrix::from_matrix(gen.from_frame(t, &rho));
            let abort = |reason: String, diagnostics: Diagnostics, samples: usize| {
                Error::MonitorAbort(Box::new(AbortReport { time: t, reason, diagnostics, samples_completed: samples }))
            };
            if lab.matrix().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(abort("non-finite entry in the density matrix".into(), diagnostics, traj.len()));
            }
            let trace_error = (lab.trace() - re(1.0)).norm();
            let leak = leakage(&lab, &space);
            let min_eig = lab.min_eigenvalue();
            diagnostics.max_trace_error = diagnostics.max_trace_error.max(trace_error);
            diagnostics.max_leakage = diagnostics.max_leakage.max(leak);
            diagnostics.min_eigenvalue = diagnostics.min_eigenvalue.min(min_eig);
            diagnostics.steps = step;
            if trace_error > MAX_TRACE_ERROR {
                return Err(abort(format!("trace error {trace_error:.5e} exceeds {MAX_TRACE_ERROR:e}"), diagnostics, traj.len()));
            }
            if leak > MAX_LEAKAGE {
                return Err(abort(
                    format!("leakage {leak:.5e} into the top Fock levels exceeds {MAX_LEAKAGE:e}"),
                    diagnostics,
                    traj.len(),
                ));
            }
            if min_eig < MIN_EIGENVALUE {
                return Err(abort(format!("negative eigenvalue {min_eig:.5e} below {MIN_EIGENVALUE:e}"), diagnostics, traj.len()));
            }
            traj.times.push(t);
            traj.records.push(observables::bundle(&lab, spectrum));
            traj.leakage.push(leak);
            if let Some(states) = traj.states.as_mut() {
                states.push(lab.clone());
            }
            if step == steps {
                traj.final_state = lab;
                break;
            }
        }
        let rotating = gen.phases(t, &mut u[0]);
        if rotating {
            for k in 0..d {
                u[1][k] = u[0][k] * half_step[k];
                u[2][k] = u[1][k] * half_step[k];
            }
        }
        let phase = |i: usize| rotating.then_some(&u[i][..]);
        let rows = &gen.rows;
        gen.eval(t, phase(0), &rho, &mut k1, &mut scratch);
        axpy_into(&mut tmp, &rho, dt / 2.0, &k1, rows);
        gen.eval(t + dt / 2.0, phase(1), &tmp, &mut k2, &mut scratch);
        axpy_into(&mut tmp, &rho, dt / 2.0, &k2, rows);
        gen.eval(t + dt / 2.0, phase(1), &tmp, &mut k3, &mut scratch);
        axpy_into(&mut tmp, &rho, dt, &k3, rows);
        gen.eval(t + dt, phase(2), &tmp, &mut k4, &mut scratch);
        let c = dt / 6.0;
        for (j, r) in rows.iter().enumerate() {
            let (a, b, e, f) = (col_ref(&k1, j, r), col_ref(&k2, j, r), col_ref(&k3, j, r), col_ref(&k4, j, r));
            for (i, x) in col(&mut rho, j, r).iter_mut().enumerate() {
                *x += (a[i] + (b[i] + e[i]) * 2.0 + f[i]) * c;
            }
        }
        let asym = symmetrize(&mut rho, rows);
        diagnostics.max_hermiticity_error = diagnostics.max_hermiticity_error.max(asym);
    }
    diagnostics.steps = steps;
    traj.diagnostics = diagnostics;
    Ok(traj)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub dt: f64,
    pub max_deviation_mean_n: f64,
    pub max_deviation_p_excited: f64,
    pub passed: bool,
    /// Set when either run could not complete.
    pub failure: Option<String>,
}

impl ConvergenceReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_deviation_mean_n.max(self.max_deviation_p_excited)
    }
}

/// Largest sample-wise deviation of `⟨n⟩` and `P_e` between two runs on
/// aligned sample grids.
pub fn trajectory_deviation(a: &Trajectory, b: &Trajectory) -> (f64, f64) {
    let dev = |x: Vec<f64>, y: Vec<f64>| x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    (dev(a.mean_n(), b.mean_n()), dev(a.p_excited(), b.p_excited()))
}

/// Reruns with `dt/2` and compares the sampled observables.
pub fn convergence_check(
    rho0: &DensityMatrix,
    params: &SystemParams,
    protocol: &SweepProtocol,
    kernel: &Kernel,
    grid: &TimeGrid,
) -> ConvergenceReport {
    let options = EvolveOptions { allow_coarse_step: true, ..Default::default() };
    let fail = |msg: String| ConvergenceReport {
        dt: grid.dt,
        max_deviation_mean_n: f64::INFINITY,
        max_deviation_p_excited: f64::INFINITY,
        passed: false,
        failure: Some(msg),
    };
    if let Err(e) = grid.check_step_bound(params, protocol) {
        return fail(e.to_string());
    }
    let coarse = match evolve_with_kernel(rho0, params, protocol, kernel, grid, &options) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    let fine = match evolve_with_kernel(rho0, params, protocol, kernel, &grid.refined(), &options) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    let (dn, dp) = trajectory_deviation(&coarse, &fine);
    ConvergenceReport {
        dt: grid.dt,
        max_deviation_mean_n: dn,
        max_deviation_p_excited: dp,
        passed: dn.max(dp) < CONVERGENCE_TOLERANCE,
        failure: None,
    }
}
