//! The bipartite quantum walk `W(M) = R₂R₁` built from a reversible kernel.
//!
//! The walk acts on `C^d ⊗ C^d`; basis state `|a b⟩` has index `a·d + b` and
//! the marker `|𝔬⟩` is basis state 0 of each factor. Two representations are
//! provided: [`WalkOperator`] holds the dense `d²×d²` matrices, while
//! [`WalkBasis`] works in the eigenbasis of the walk and never forms them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::markov::{kernel_spectrum, symmetrize, KernelSpectrum, TransitionKernel};

/// Largest `d` accepted by the dense backend.
pub const DENSE_DIM_LIMIT: usize = 64;
/// Largest `d` accepted by the eigenbasis backend.
pub const ANALYTIC_DIM_LIMIT: usize = 4096;
/// Pairs with `sin φ_j` below this are indistinguishable from phase 0.
pub const DEGENERATE_SIN: f64 = 1e-9;
const COMPLETION_PIVOT_MIN: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// How `U_X` and `U_Y` are extended from the isometries to full unitaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    /// Per-block plane rotation taking `|𝔬⟩` to the kernel column; `U_Y` is
    /// the swap-conjugate of `U_X`.
    Canonical,
    /// Gram-Schmidt of the isometry columns against Gaussian vectors drawn
    /// from the seed (stream 0 for `U_X`, stream 1 for `U_Y`).
    Seeded(u64),
}

/// `√m_{ab}` laid out as `[a][b]`: row `a` is the amplitude vector `X` writes
/// next to `|a⟩`.
fn sqrt_rows(kernel: &TransitionKernel) -> Vec<Vec<f64>> {
    let d = kernel.dim();
    (0..d)
        .map(|a| (0..d).map(|b| kernel.prob(a, b).sqrt()).collect())
        .collect()
}

/// The minimal rotation in the plane of `e₀` and `x` sending `e₀` to the
/// unit vector `x`.
#[derive(Debug, Clone)]
struct PlaneRotation {
    c: f64,
    s: f64,
    u: Vec<f64>,
}

impl PlaneRotation {
    fn new(x: &[f64]) -> Self {
        let c = x[0];
        let s = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let u = if s > 0.0 {
            std::iter::once(0.0).chain(x[1..].iter().map(|v| v / s)).collect()
        } else {
            vec![0.0; x.len()]
        };
        Self { c, s, u }
    }

    fn apply(&self, v: &mut [Complex64], transpose: bool) {
        if self.s == 0.0 {
            return;
        }
        let s = if transpose { -self.s } else { self.s };
        let v0 = v[0];
        let uv: Complex64 = self.u.iter().zip(v.iter()).map(|(u, x)| x * u).sum();
        for (x, &u) in v.iter_mut().zip(&self.u) {
            *x += (self.c - 1.0) * uv * u + s * v0 * u;
        }
        v[0] += (self.c - 1.0) * v0 - s * uv;
    }

    fn dense(&self) -> DMatrix<f64> {
        let d = self.u.len();
        let mut r = DMatrix::identity(d, d);
        if self.s == 0.0 {
            return r;
        }
        for i in 0..d {
            for j in 0..d {
                let e0i = f64::from(u8::from(i == 0));
                let e0j = f64::from(u8::from(j == 0));
                r[(i, j)] += (self.c - 1.0) * (e0i * e0j + self.u[i] * self.u[j])
                    + self.s * (self.u[i] * e0j - e0i * self.u[j]);
            }
        }
        r
    }
}

fn swap_conjugate(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let swap = |i: usize| (i % d) * d + i / d;
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(swap(r), swap(c))])
}

/// Completes `cols` (orthonormal, `D×k`) to a `D×D` orthogonal matrix whose
/// column `slot[i]` is `cols[:, i]`.
fn seeded_completion(
    cols: &DMatrix<f64>,
    slots: &[usize],
    seed: u64,
    stream: u64,
) -> Result<DMatrix<f64>> {
    let (n, k) = cols.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut aug = DMatrix::zeros(n, n);
    aug.columns_mut(0, k).copy_from(cols);
    for c in k..n {
        for r in 0..n {
            aug[(r, c)] = StandardNormal.sample(&mut rng);
        }
    }
    let qr = aug.qr();
    let r = qr.r();
    let q = qr.q();
    if let Some(i) = (0..n).find(|&i| r[(i, i)].abs() < COMPLETION_PIVOT_MIN) {
        return Err(Error::CompletionFailure(format!(
            "pivot {i} is {:e}",
            r[(i, i)].abs()
        )));
    }
    let mut out = DMatrix::zeros(n, n);
    let mut free = (0..n).filter(|c| !slots.contains(c));
    for i in 0..n {
        let sign = r[(i, i)].signum();
        let target = if i < k {
            slots[i]
        } else {
            free.next().expect("slot count matches dimension")
        };
        out.set_column(target, &(q.column(i) * sign));
    }
    Ok(out)
}

/// Dense walk operator and the ingredients it was assembled from.
#[derive(Debug, Clone)]
pub struct WalkOperator {
    d: usize,
    beta: f64,
    completion: Completion,
    isometry_x: DMatrix<f64>,
    isometry_y: DMatrix<f64>,
    u_x: DMatrix<f64>,
    u_y: DMatrix<f64>,
    w: DMatrix<f64>,
}

impl WalkOperator {
    pub fn build(kernel: &TransitionKernel, completion: Completion) -> Result<Self> {
        let d = kernel.dim();
        if d > DENSE_DIM_LIMIT {
            return Err(Error::DimensionTooLarge {
                got: d,
                limit: DENSE_DIM_LIMIT,
            });
        }
        let n = d * d;
        let rows = sqrt_rows(kernel);
        let mut isometry_x = DMatrix::zeros(n, d);
        let mut isometry_y = DMatrix::zeros(n, d);
        for a in 0..d {
            for b in 0..d {
                isometry_x[(a * d + b, a)] = rows[a][b];
                isometry_y[(a * d + b, b)] = rows[b][a];
            }
        }

        let (u_x, u_y) = match completion {
            Completion::Canonical => {
                let mut u_x = DMatrix::zeros(n, n);
                for (a, row) in rows.iter().enumerate() {
                    u_x.view_mut((a * d, a * d), (d, d))
                        .copy_from(&PlaneRotation::new(row).dense());
                }
                let u_y = swap_conjugate(&u_x, d);
                (u_x, u_y)
            }
            Completion::Seeded(seed) => {
                let x_slots: Vec<usize> = (0..d).map(|a| a * d).collect();
                let y_slots: Vec<usize> = (0..d).collect();
                (
                    seeded_completion(&isometry_x, &x_slots, seed, 0)?,
                    seeded_completion(&isometry_y, &y_slots, seed, 1)?,
                )
            }
        };

        // Π₂ = V P V† with V = U_X† U_Y and P onto the first-factor marker,
        // i.e. the first d columns of V.
        let v = u_x.transpose() * &u_y;
        let v0 = v.columns(0, d);
        let pi2 = v0 * v0.transpose();
        let mut w = pi2 * 2.0;
        for i in 0..n {
            w[(i, i)] -= 1.0;
        }
        // R₁ is diagonal: +1 on |a 𝔬⟩, −1 elsewhere.
        for c in 0..n {
            if c % d != 0 {
                w.column_mut(c).neg_mut();
            }
        }
        Ok(Self {
            d,
            beta: kernel.beta(),
            completion,
            isometry_x,
            isometry_y,
            u_x,
            u_y,
            w,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Index of `|𝔬⟩` in each factor.
    pub fn marker_index(&self) -> usize {
        0
    }

    pub fn completion(&self) -> Completion {
        self.completion
    }

    pub fn isometry_x(&self) -> &DMatrix<f64> {
        &self.isometry_x
    }

    pub fn isometry_y(&self) -> &DMatrix<f64> {
        &self.isometry_y
    }

    pub fn u_x(&self) -> &DMatrix<f64> {
        &self.u_x
    }

    pub fn u_y(&self) -> &DMatrix<f64> {
        &self.u_y
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `W v` for a complex vector.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        real_matvec(&self.w, v)
    }

    /// In-place `W v` using `scratch` as workspace.
    pub fn apply_in_place(&self, v: &mut [Complex64], scratch: &mut [Complex64]) {
        real_matvec_into(&self.w, v, scratch);
        v.copy_from_slice(scratch);
    }

    /// `U_X† U_Y |𝔬 φ⟩` for a real first-factor vector `φ`.
    pub fn reflected_marker(&self, phi: &[f64]) -> Vec<f64> {
        let y_phi = &self.isometry_y * nalgebra::DVector::from_column_slice(phi);
        (self.u_x.transpose() * y_phi).iter().copied().collect()
    }

    /// Eigenphases in `(-π, π]`.
    pub fn eigenphases(&self) -> Vec<f64> {
        dense_eigenphases(&self.w)
    }

    /// Plain-text dump of `W`, row-major with 17 significant digits.
    pub fn to_text(&self) -> String {
        crate::markov::matrix_to_text(&self.w)
    }
}

pub(crate) fn real_matvec(m: &DMatrix<f64>, v: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m.nrows()];
    real_matvec_into(m, v, &mut out);
    out
}

pub(crate) fn real_matvec_into(m: &DMatrix<f64>, v: &[Complex64], out: &mut [Complex64]) {
    out.fill(Complex64::new(0.0, 0.0));
    for (c, &x) in v.iter().enumerate() {
        if x == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (o, &a) in out.iter_mut().zip(m.column(c).iter()) {
            *o += x * a;
        }
    }
}

/// Eigenphases of a real orthogonal matrix, in `(-π, π]`, ascending.
///
/// Coarse phases `±arccos` from the symmetric part locate an arc free of
/// eigenvalues; the matrix is rotated so that arc sits at `-1`, and the
/// Cayley transform `i(I − W′)(I + W′)⁻¹` is then Hermitian with eigenvalues
/// `tan(θ′/2)`, which a Hermitian solver resolves to full accuracy.
pub fn dense_eigenphases(w: &DMatrix<f64>) -> Vec<f64> {
    let n = w.nrows();
    assert_eq!(n, w.ncols(), "square matrix required");
    let sym = (w + w.transpose()) * 0.5;
    let mut coarse: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .flat_map(|c| {
            let t = c.clamp(-1.0, 1.0).acos();
            [t, -t]
        })
        .collect();
    coarse.sort_by(f64::total_cmp);
    // Widest empty arc between consecutive coarse phases, wrapping around.
    let mut gap = coarse[0] + 2.0 * PI - coarse[coarse.len() - 1];
    let mut centre = coarse[0] - 0.5 * gap;
    for pair in coarse.windows(2) {
        if pair[1] - pair[0] > gap {
            gap = pair[1] - pair[0];
            centre = 0.5 * (pair[0] + pair[1]);
        }
    }
    let alpha = centre - PI;

    let rot = Complex64::from_polar(1.0, -alpha);
    let wr = w.map(|x| rot * x);
    let id = DMatrix::<Complex64>::identity(n, n);
    let denom = (&id + &wr).lu();
    // (I + W′)⁻¹ commutes with I − W′, so solve on the right-hand side.
    let cayley = denom
        .solve(&(&id - &wr))
        .expect("rotated matrix keeps -1 out of its spectrum")
        .map(|z| z * Complex64::i());
    let herm = (&cayley + cayley.adjoint()) * Complex64::new(0.5, 0.0);
    let mut phases: Vec<f64> = SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .map(|c| {
            let t = (alpha + 2.0 * c.atan()).rem_euclid(2.0 * PI);
            if t > PI { t - 2.0 * PI } else { t }
        })
        .collect();
    phases.sort_by(f64::total_cmp);
    phases
}

/// Distance between two angles on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let x = (a - b).rem_euclid(2.0 * PI);
    x.min(2.0 * PI - x)
}

/// The walk spectrum predicted from the kernel spectrum alone.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkSpectrumView {
    /// `(+2φ_j, -2φ_j)` for `j ≥ 1`.
    pub pairs: Vec<(f64, f64)>,
    /// `2(d−1) + 1`.
    pub relevant_dim: usize,
    /// Phases of the remaining `d² − 2d + 1` dimensions.
    pub residual_phases: Vec<f64>,
}

impl WalkSpectrumView {
    /// Every predicted eigenphase, including `0` for `|φ₀ 𝔬⟩`.
    pub fn all_phases(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for &(p, m) in &self.pairs {
            out.push(p);
            out.push(m);
        }
        out.extend_from_slice(&self.residual_phases);
        out
    }
}

/// `{0} ∪ {±2φ_j}` plus the residual dimensions, all of which sit at phase
/// 0: off `span{|σ 𝔬⟩} + U_X†U_Y span{|𝔬 σ⟩}` both reflections equal `−1`.
pub fn walk_eigenphase_table(spectrum: &KernelSpectrum) -> WalkSpectrumView {
    let d = spectrum.dim();
    WalkSpectrumView {
        pairs: spectrum.phis()[1..].iter().map(|&p| (2.0 * p, -2.0 * p)).collect(),
        relevant_dim: 2 * (d - 1) + 1,
        residual_phases: vec![0.0; d * d - 2 * d + 1],
    }
}

/// Result of comparing dense eigenphases with [`walk_eigenphase_table`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCheck {
    /// Worst distance from a predicted `±2φ_j` to its matched dense phase.
    pub pair_error: f64,
    /// Worst distance from an unmatched dense phase to `{0, π}`.
    pub residual_error: f64,
    /// `‖W|φ₀ 𝔬⟩ − |φ₀ 𝔬⟩‖∞`.
    pub fixed_point_error: f64,
}

impl SpectralCheck {
    pub fn worst(&self) -> f64 {
        self.pair_error.max(self.residual_error).max(self.fixed_point_error)
    }
}

pub fn check_spectral_correspondence(
    walk: &WalkOperator,
    spectrum: &KernelSpectrum,
) -> SpectralCheck {
    let mut dense = walk.eigenphases();
    let mut used = vec![false; dense.len()];
    let mut pair_error: f64 = 0.0;
    for &(p, m) in &walk_eigenphase_table(spectrum).pairs {
        for target in [p, m] {
            let (best, dist) = dense
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .map(|(i, &x)| (i, circular_distance(x, target)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("dense spectrum has enough phases");
            used[best] = true;
            pair_error = pair_error.max(dist);
        }
    }
    let residual_error = dense
        .drain(..)
        .zip(used)
        .filter(|(_, u)| !u)
        .map(|(x, _)| circular_distance(x, 0.0).min(circular_distance(x, PI)))
        .fold(0.0, f64::max);

    let psi0 = embed_marker(&spectrum.eigvec(0));
    let fixed_point_error = walk
        .apply(&psi0)
        .iter()
        .zip(&psi0)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    SpectralCheck {
        pair_error,
        residual_error,
        fixed_point_error,
    }
}

/// `|φ 𝔬⟩` as a complex `d²` vector.
pub fn embed_marker(phi: &[f64]) -> Vec<Complex64> {
    let d = phi.len();
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for (a, &x) in phi.iter().enumerate() {
        out[a * d] = Complex64::new(x, 0.0);
    }
    out
}

/// Amplitudes over `{|ψ₀⟩, |ψ₊ⱼ⟩, |ψ₋ⱼ⟩}` plus the mass outside their span.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkBasisState {
    pub c0: Complex64,
    pub cplus: Vec<Complex64>,
    pub cminus: Vec<Complex64>,
    pub leaked: f64,
}

impl WalkBasisState {
    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr()
            + self.cplus.iter().chain(&self.cminus).map(|c| c.norm_sqr()).sum::<f64>()
            + self.leaked
    }
}

/// `⟨φ_j(β_to)|φ₀(β_from)⟩` expressed in the walk basis at `β_to`.
///
/// Every `|φ_j 𝔬⟩` splits evenly between `|ψ₊ⱼ⟩` and `|ψ₋ⱼ⟩`, so
/// `c±ⱼ = c_j/√2`. Pairs with `sin φ_j ≈ 0` have no such split and their
/// weight is counted as leaked.
pub fn decompose_gibbs(model: &EnergyModel, beta_from: f64, spectrum_to: &KernelSpectrum) -> WalkBasisState {
    let from = model.boltzmann(beta_from).gibbs_amplitudes();
    let c: Vec<f64> = (0..spectrum_to.dim())
        .map(|j| spectrum_to.eigvecs().column(j).iter().zip(&from).map(|(a, b)| a * b).sum())
        .collect();
    let mut state = WalkBasisState {
        c0: Complex64::new(c[0], 0.0),
        cplus: Vec::with_capacity(c.len() - 1),
        cminus: Vec::with_capacity(c.len() - 1),
        leaked: 0.0,
    };
    for (j, &cj) in c.iter().enumerate().skip(1) {
        if spectrum_to.phis()[j].sin() < DEGENERATE_SIN {
            state.cplus.push(Complex64::new(0.0, 0.0));
            state.cminus.push(Complex64::new(0.0, 0.0));
            state.leaked += cj * cj;
        } else {
            let half = Complex64::new(cj / std::f64::consts::SQRT_2, 0.0);
            state.cplus.push(half);
            state.cminus.push(half);
        }
    }
    state
}

/// `Σ_σ √(π^σ(β₁) π^σ(β₂))`.
pub fn gibbs_overlap(model: &EnergyModel, beta1: f64, beta2: f64) -> f64 {
    let a = model.boltzmann(beta1).gibbs_amplitudes();
    let b = model.boltzmann(beta2).gibbs_amplitudes();
    a.iter().zip(&b).map(|(x, y)| x * y).sum()
}

/// The walk at one temperature, represented through its eigenbasis and the
/// canonical completion of `U_X`.
#[derive(Debug, Clone)]
pub struct WalkBasis {
    d: usize,
    beta: f64,
    rows: Vec<Vec<f64>>,
    rotations: Vec<PlaneRotation>,
    spectrum: KernelSpectrum,
    /// `j ≥ 1` with `sin φ_j ≥ DEGENERATE_SIN`.
    active: Vec<usize>,
}

/// Coefficients on the active `|ψ±ⱼ⟩`, indexed like [`WalkBasis::active`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairCoefficients {
    pub plus: Vec<Complex64>,
    pub minus: Vec<Complex64>,
}

impl WalkBasis {
    pub fn new(kernel: &TransitionKernel, model: &EnergyModel) -> Result<Self> {
        let d = kernel.dim();
        if d > ANALYTIC_DIM_LIMIT {
            return Err(Error::DimensionTooLarge {
                got: d,
                limit: ANALYTIC_DIM_LIMIT,
            });
        }
        let spectrum = kernel_spectrum(&symmetrize(kernel, model)?)?;
        let rows = sqrt_rows(kernel);
        let rotations = rows.iter().map(|r| PlaneRotation::new(r)).collect();
        let active = (1..d)
            .filter(|&j| spectrum.phis()[j].sin() >= DEGENERATE_SIN)
            .collect();
        Ok(Self {
            d,
            beta: kernel.beta(),
            rows,
            rotations,
            spectrum,
            active,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn spectrum(&self) -> &KernelSpectrum {
        &self.spectrum
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// `(θ₊, θ₋) = (2φ_j, 2π − 2φ_j)` for each active pair.
    pub fn pair_phases(&self) -> Vec<(f64, f64)> {
        self.active
            .iter()
            .map(|&j| {
                let t = 2.0 * self.spectrum.phis()[j];
                (t, 2.0 * PI - t)
            })
            .collect()
    }

    /// Canonical `U_X` (or its transpose) applied block by block.
    pub fn apply_ux(&self, v: &mut [Complex64], transpose: bool) {
        for (a, rot) in self.rotations.iter().enumerate() {
            rot.apply(&mut v[a * self.d..(a + 1) * self.d], transpose);
        }
    }

    /// Quantum Gibbs state `|φ₀ 𝔬⟩`.
    pub fn gibbs_state(&self) -> Vec<Complex64> {
        embed_marker(&self.spectrum.eigvec(0))
    }

    /// `|ψ±ⱼ⟩` for a kernel index `j ≥ 1` with non-degenerate phase.
    pub fn eigvec(&self, j: usize, plus: bool) -> Vec<Complex64> {
        let phi = self.spectrum.phis()[j];
        let sign = if plus { 1.0 } else { -1.0 };
        let pref = sign * I / (std::f64::consts::SQRT_2 * phi.sin());
        let mut out = vec![Complex64::new(0.0, 0.0); self.d * self.d];
        self.lift(&[j], &[Complex64::from_polar(1.0, -sign * phi) * pref], &[-pref], &mut out);
        out
    }

    /// Adds `Σ_k a_k |φ_{j_k} 𝔬⟩ + U_X†Y Σ_k b_k |φ_{j_k}⟩` to `out`.
    fn lift(&self, js: &[usize], a: &[Complex64], b: &[Complex64], out: &mut [Complex64]) {
        let d = self.d;
        let eig = self.spectrum.eigvecs();
        let mut g = vec![Complex64::new(0.0, 0.0); d];
        let mut f = vec![Complex64::new(0.0, 0.0); d];
        for (k, &j) in js.iter().enumerate() {
            for s in 0..d {
                let e = eig[(s, j)];
                f[s] += a[k] * e;
                g[s] += b[k] * e;
            }
        }
        // Y g has amplitude √m_{b a}·g[b] on |a b⟩.
        let mut yg = vec![Complex64::new(0.0, 0.0); d * d];
        for a in 0..d {
            for (bi, &gb) in g.iter().enumerate() {
                yg[a * d + bi] = gb * self.rows[bi][a];
            }
        }
        self.apply_ux(&mut yg, true);
        for (o, y) in out.iter_mut().zip(&yg) {
            *o += y;
        }
        for a in 0..d {
            out[a * d] += f[a];
        }
    }

    /// `⟨φ_j 𝔬|ψ⟩` and `⟨U_X†Y φ_j|ψ⟩` for every `j`.
    fn projections(&self, psi: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let d = self.d;
        let eig = self.spectrum.eigvecs();
        let mut w = psi.to_vec();
        self.apply_ux(&mut w, false);
        let mut t = vec![Complex64::new(0.0, 0.0); d];
        for a in 0..d {
            for (b, tb) in t.iter_mut().enumerate() {
                *tb += w[a * d + b] * self.rows[b][a];
            }
        }
        let mut alpha = vec![Complex64::new(0.0, 0.0); d];
        let mut beta = vec![Complex64::new(0.0, 0.0); d];
        for j in 0..d {
            for s in 0..d {
                let e = eig[(s, j)];
                alpha[j] += psi[s * d] * e;
                beta[j] += t[s] * e;
            }
        }
        (alpha, beta)
    }

    /// Coefficients `⟨ψ±ⱼ|ψ⟩` of the active pairs.
    pub fn pair_coefficients(&self, psi: &[Complex64]) -> PairCoefficients {
        let (alpha, beta) = self.projections(psi);
        let mut plus = Vec::with_capacity(self.active.len());
        let mut minus = Vec::with_capacity(self.active.len());
        for &j in &self.active {
            let phi = self.spectrum.phis()[j];
            let pref = 1.0 / (std::f64::consts::SQRT_2 * phi.sin());
            plus.push(-I * pref * (Complex64::from_polar(1.0, phi) * alpha[j] - beta[j]));
            minus.push(I * pref * (Complex64::from_polar(1.0, -phi) * alpha[j] - beta[j]));
        }
        PairCoefficients { plus, minus }
    }

    /// Full walk-basis description of `psi`.
    pub fn basis_state(&self, psi: &[Complex64]) -> WalkBasisState {
        let (alpha, _) = self.projections(psi);
        let pc = self.pair_coefficients(psi);
        let mut cplus = vec![Complex64::new(0.0, 0.0); self.d - 1];
        let mut cminus = cplus.clone();
        for (k, &j) in self.active.iter().enumerate() {
            cplus[j - 1] = pc.plus[k];
            cminus[j - 1] = pc.minus[k];
        }
        let total: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        let mut state = WalkBasisState {
            c0: alpha[0],
            cplus,
            cminus,
            leaked: 0.0,
        };
        state.leaked = (total - state.norm_sqr()).max(0.0);
        state
    }

    /// Replaces each active component `c±ⱼ|ψ±ⱼ⟩` of `psi` by
    /// `f(θ±ⱼ)·c±ⱼ|ψ±ⱼ⟩`. The phase-0 part is multiplied by `f(0)`.
    pub fn filter<F>(&self, psi: &[Complex64], pc: &PairCoefficients, f: F) -> Vec<Complex64>
    where
        F: Fn(f64) -> Complex64,
    {
        let f0 = f(0.0);
        let mut out: Vec<Complex64> = psi.iter().map(|&x| x * f0).collect();
        let mut a = Vec::with_capacity(self.active.len());
        let mut b = Vec::with_capacity(self.active.len());
        for (k, (tp, tm)) in self.pair_phases().into_iter().enumerate() {
            let phi = 0.5 * tp;
            let pref = I / (std::f64::consts::SQRT_2 * phi.sin());
            let wp = (f(tp) - f0) * pc.plus[k] * pref;
            let wm = (f(tm) - f0) * pc.minus[k] * (-pref);
            // |ψ±⟩ = ±i/(√2 sin φ)·(e^{∓iφ}|φ 𝔬⟩ − U_X†Y|φ⟩)
            a.push(wp * Complex64::from_polar(1.0, -phi) + wm * Complex64::from_polar(1.0, phi));
            b.push(-(wp + wm));
        }
        self.lift(&self.active, &a, &b, &mut out);
        out
    }

    /// `W^n ψ` without forming `W`.
    pub fn apply_walk_power(&self, psi: &[Complex64], n: u64) -> Vec<Complex64> {
        let pc = self.pair_coefficients(psi);
        let n = n as f64;
        self.filter(psi, &pc, |t| Complex64::from_polar(1.0, n * t))
    }
}
