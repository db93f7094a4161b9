//! Reversible transition kernels, their symmetrization and spectra.
//!
//! Kernels are column-stochastic: entry `(σ', σ)` is the probability of the
//! move `σ → σ'`, so one annealing step is the product `μ ← M μ`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Schur, SymmetricEigen};

use crate::energy::{BoltzmannDist, EnergyModel};
use crate::error::{Error, Result};

/// Tolerance on stochasticity and detailed balance for constructed kernels.
pub const KERNEL_TOL: f64 = 1e-12;
/// Agreement required between the two symmetrization routes.
pub const SYMMETRIZE_TOL: f64 = 1e-10;
/// Eigenvalues below `-NEGATIVE_TOL` are rejected.
pub const NEGATIVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct TransitionKernel {
    beta: f64,
    laziness: f64,
    matrix: DMatrix<f64>,
}

impl TransitionKernel {
    /// Lazy Metropolis kernel for a symmetric proposal.
    ///
    /// Off-diagonal `m_{σσ'} = (1-α) P_{σσ'} min(1, e^{-β(E[σ']-E[σ])})`; the
    /// diagonal takes the remaining mass of each column.
    pub fn metropolis(
        model: &EnergyModel,
        beta: f64,
        proposal: &DMatrix<f64>,
        laziness: f64,
    ) -> Result<Self> {
        check_laziness(laziness)?;
        if !(beta >= 0.0) {
            return Err(Error::param("beta", format!("{beta} is negative")));
        }
        validate_proposal(proposal, model.dim())?;

        let d = model.dim();
        let e = model.energies();
        let mut matrix = DMatrix::zeros(d, d);
        for from in 0..d {
            let mut leave = 0.0;
            for to in 0..d {
                if to == from || proposal[(to, from)] == 0.0 {
                    continue;
                }
                let rise = e[to] - e[from];
                let accept = if rise <= 0.0 { 1.0 } else { (-beta * rise).exp() };
                let p = (1.0 - laziness) * proposal[(to, from)] * accept;
                matrix[(to, from)] = p;
                leave += p;
            }
            matrix[(from, from)] = 1.0 - leave;
        }
        Self::from_matrix(model, beta, matrix, laziness)
    }

    /// Wraps an explicit column-stochastic matrix after checking every kernel
    /// invariant against the Boltzmann distribution at `beta`.
    pub fn from_matrix(
        model: &EnergyModel,
        beta: f64,
        matrix: DMatrix<f64>,
        laziness: f64,
    ) -> Result<Self> {
        let d = model.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::KernelInvariant(format!(
                "matrix is {}x{}, model has {d} states",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        for c in 0..d {
            let col = matrix.column(c);
            if col.iter().any(|&v| !(-KERNEL_TOL..=1.0 + KERNEL_TOL).contains(&v)) {
                return Err(Error::KernelInvariant(format!(
                    "column {c} has an entry outside [0, 1]"
                )));
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > KERNEL_TOL {
                return Err(Error::KernelInvariant(format!(
                    "column {c} sums to {sum}"
                )));
            }
        }
        let dist = model.boltzmann(beta);
        let report = verify_detailed_balance(&matrix, &dist);
        if report.max_violation > KERNEL_TOL {
            let (a, b) = report.pair.unwrap_or((0, 0));
            return Err(Error::KernelInvariant(format!(
                "detailed balance violated by {:e} at ({a}, {b})",
                report.max_violation
            )));
        }
        Ok(Self {
            beta,
            laziness,
            matrix,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn laziness(&self) -> f64 {
        self.laziness
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Probability of the move `from → to`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.matrix[(to, from)]
    }

    /// One step of the distribution: `M μ`.
    pub fn apply(&self, mu: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (from, &weight) in mu.iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            for (to, o) in out.iter_mut().enumerate() {
                *o += self.matrix[(to, from)] * weight;
            }
        }
        out
    }

    /// Inverse-CDF draw of the successor of `from`, scanning targets in
    /// ascending index order. `u` is uniform on `[0, 1)`.
    pub fn sample_next(&self, from: usize, u: f64) -> usize {
        let col = self.matrix.column(from);
        let mut acc = 0.0;
        let mut last = from;
        for (to, &p) in col.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = to;
            if u < acc {
                return to;
            }
        }
        last
    }

    pub fn detailed_balance(&self, dist: &BoltzmannDist) -> BalanceReport {
        verify_detailed_balance(&self.matrix, dist)
    }

    /// Row-major plain-text dump with 17 significant digits.
    pub fn to_text(&self) -> String {
        matrix_to_text(&self.matrix)
    }
}

/// A fixed proposal and laziness, instantiated as a Metropolis kernel at any
/// inverse temperature.
#[derive(Debug, Clone)]
pub struct MetropolisChain {
    model: EnergyModel,
    proposal: DMatrix<f64>,
    laziness: f64,
}

impl MetropolisChain {
    pub fn new(model: EnergyModel, proposal: DMatrix<f64>, laziness: f64) -> Result<Self> {
        check_laziness(laziness)?;
        validate_proposal(&proposal, model.dim())?;
        Ok(Self {
            model,
            proposal,
            laziness,
        })
    }

    pub fn model(&self) -> &EnergyModel {
        &self.model
    }

    pub fn proposal(&self) -> &DMatrix<f64> {
        &self.proposal
    }

    pub fn laziness(&self) -> f64 {
        self.laziness
    }

    pub fn kernel(&self, beta: f64) -> Result<TransitionKernel> {
        TransitionKernel::metropolis(&self.model, beta, &self.proposal, self.laziness)
    }

    pub fn spectrum(&self, beta: f64) -> Result<KernelSpectrum> {
        kernel_spectrum(&symmetrize(&self.kernel(beta)?, &self.model)?)
    }

    /// Smallest `1 - λ_1` over the given temperatures.
    pub fn min_gap(&self, betas: impl IntoIterator<Item = f64>) -> Result<f64> {
        let mut gap = f64::INFINITY;
        for beta in betas {
            gap = gap.min(self.spectrum(beta)?.delta());
        }
        Ok(gap)
    }
}

fn check_laziness(laziness: f64) -> Result<()> {
    if (0.0..1.0).contains(&laziness) {
        Ok(())
    } else {
        Err(Error::param("laziness", format!("{laziness} is outside [0, 1)")))
    }
}

fn validate_proposal(p: &DMatrix<f64>, d: usize) -> Result<()> {
    if p.nrows() != d || p.ncols() != d {
        return Err(Error::InvalidProposal(format!(
            "proposal is {}x{}, model has {d} states",
            p.nrows(),
            p.ncols()
        )));
    }
    for c in 0..d {
        if p[(c, c)] != 0.0 {
            return Err(Error::InvalidProposal(format!("diagonal entry {c} is nonzero")));
        }
        let mut sum = 0.0;
        for r in 0..d {
            let v = p[(r, c)];
            if v < 0.0 {
                return Err(Error::InvalidProposal(format!("negative entry ({r}, {c})")));
            }
            if (v - p[(c, r)]).abs() > KERNEL_TOL {
                return Err(Error::InvalidProposal(format!("asymmetric at ({r}, {c})")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > KERNEL_TOL {
            return Err(Error::InvalidProposal(format!("column {c} sums to {sum}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceReport {
    pub max_violation: f64,
    /// `(σ, σ')` attaining the maximum, if any flux is unbalanced.
    pub pair: Option<(usize, usize)>,
}

/// Largest residual `|π^σ m_{σσ'} - π^{σ'} m_{σ'σ}|` over all pairs.
pub fn verify_detailed_balance(matrix: &DMatrix<f64>, dist: &BoltzmannDist) -> BalanceReport {
    let pi = dist.probabilities();
    let d = pi.len();
    assert_eq!(matrix.nrows(), d, "kernel and distribution dimensions differ");
    let mut report = BalanceReport {
        max_violation: 0.0,
        pair: None,
    };
    for s in 0..d {
        for t in (s + 1)..d {
            // m_{st} is stored at (t, s)
            let v = (pi[s] * matrix[(t, s)] - pi[t] * matrix[(s, t)]).abs();
            if v > report.max_violation {
                report.max_violation = v;
                report.pair = Some((s, t));
            }
        }
    }
    report
}

#[derive(Debug, Clone)]
pub struct SymmetricKernel {
    beta: f64,
    matrix: DMatrix<f64>,
}

impl SymmetricKernel {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `h_{σσ'} = √(m_{σσ'} m_{σ'σ})`, cross-checked against the similarity
/// transform `e^{βE/2} M e^{-βE/2}`.
pub fn symmetrize(kernel: &TransitionKernel, model: &EnergyModel) -> Result<SymmetricKernel> {
    let d = kernel.dim();
    let m = kernel.matrix();
    let e = model.energies();
    let beta = kernel.beta();
    let mut h = DMatrix::zeros(d, d);
    let mut worst: f64 = 0.0;
    for c in 0..d {
        for r in 0..d {
            let geometric = (m[(r, c)] * m[(c, r)]).sqrt();
            let similar = if m[(r, c)] == 0.0 {
                0.0
            } else {
                (0.5 * beta * (e[r] - e[c])).exp() * m[(r, c)]
            };
            worst = worst.max((geometric - similar).abs());
            h[(r, c)] = geometric;
        }
    }
    if !(worst <= SYMMETRIZE_TOL) {
        return Err(Error::Mismatch(worst));
    }
    Ok(SymmetricKernel { beta, matrix: h })
}

#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    lambdas: Vec<f64>,
    phis: Vec<f64>,
    eigvecs: DMatrix<f64>,
    delta: f64,
}

impl KernelSpectrum {
    /// Eigenvalues in descending order; `lambdas()[0]` is the stationary 1.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `φ_j = arccos λ_j`, ascending.
    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    /// Orthonormal eigenvectors as columns, in the order of `lambdas()`.
    /// Column 0 has non-negative entries.
    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn eigvec(&self, j: usize) -> Vec<f64> {
        self.eigvecs.column(j).iter().copied().collect()
    }

    /// `1 - λ_1`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }
}

/// Full symmetric eigendecomposition of `H`.
pub fn kernel_spectrum(sym: &SymmetricKernel) -> Result<KernelSpectrum> {
    let d = sym.dim();
    let eig = SymmetricEigen::new(sym.matrix().clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if let Some(&low) = lambdas.last() {
        if low < -NEGATIVE_TOL {
            return Err(Error::NegativeEigenvalue(low));
        }
    }
    let mut eigvecs = DMatrix::zeros(d, d);
    for (k, &i) in order.iter().enumerate() {
        eigvecs.set_column(k, &eig.eigenvectors.column(i));
    }
    if eigvecs.column(0).sum() < 0.0 {
        eigvecs.column_mut(0).neg_mut();
    }
    let phis = lambdas.iter().map(|l| l.clamp(-1.0, 1.0).acos()).collect();
    let delta = if d > 1 { (1.0 - lambdas[1]).max(0.0) } else { 0.0 };
    Ok(KernelSpectrum {
        lambdas,
        phis,
        eigvecs,
        delta,
    })
}

/// Largest elementwise gap between the sorted spectrum of `H` and the sorted
/// real parts of a general (non-symmetric) eigensolve of `M`.
///
/// `M = D H D⁻¹` with `D = e^{-βE/2}`, so the general solver loses accuracy
/// like `cond(D)`; keep `β·E_M` moderate when asserting tight agreement.
/// Returns infinity if the general solver does not converge.
pub fn spectrum_cross_check(kernel: &TransitionKernel, spectrum: &KernelSpectrum) -> f64 {
    let Some(schur) = Schur::try_new(kernel.matrix().clone(), f64::EPSILON, 10_000) else {
        return f64::INFINITY;
    };
    let mut general: Vec<f64> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .collect();
    general.sort_by(|a, b| b.total_cmp(a));
    general
        .iter()
        .zip(spectrum.lambdas())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn matrix_to_text(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| crate::fmt_f64(m[(r, c)])).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn swap() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    fn two_state() -> (EnergyModel, TransitionKernel) {
        let model = EnergyModel::new(vec![0.0, 1.0]).unwrap();
        let k = TransitionKernel::metropolis(&model, LN_2, &swap(), 0.5).unwrap();
        (model, k)
    }

    #[test]
    fn two_state_metropolis_columns() {
        let (_, k) = two_state();
        // exp(-ln 2) = 1/2 acceptance uphill, then halved by laziness
        assert!((k.prob(0, 0) - 0.75).abs() < 1e-15);
        assert!((k.prob(0, 1) - 0.25).abs() < 1e-15);
        assert!((k.prob(1, 0) - 0.5).abs() < 1e-15);
        assert!((k.prob(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn infinite_temperature_copies_proposal() {
        let model = EnergyModel::new(vec![0.0, 2.0, 1.0]).unwrap();
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5, 0.5, 0.0]);
        let k = TransitionKernel::metropolis(&model, 0.0, &p, 0.0).unwrap();
        assert_eq!(k.matrix(), &p);
    }

    #[test]
    fn rejects_bad_laziness_and_proposals() {
        let model = EnergyModel::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            TransitionKernel::metropolis(&model, 1.0, &swap(), 1.0),
            Err(Error::InvalidParameter { name: "laziness", .. })
        ));
        let lopsided = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.9, 0.0]);
        assert!(matches!(
            TransitionKernel::metropolis(&model, 1.0, &lopsided, 0.5),
            Err(Error::InvalidProposal(_))
        ));
        let diag = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(matches!(
            TransitionKernel::metropolis(&model, 1.0, &diag, 0.5),
            Err(Error::InvalidProposal(_))
        ));
    }

    #[test]
    fn two_state_balance_is_exact() {
        let (model, k) = two_state();
        let report = k.detailed_balance(&model.boltzmann(LN_2));
        // π0 m01 = 2/3 * 1/4 = 1/6 = 1/3 * 1/2 = π1 m10
        assert!(report.max_violation <= 1e-16, "{report:?}");
    }

    #[test]
    fn identity_has_no_flux() {
        let model = EnergyModel::new(vec![0.0, 1.0, 0.3]).unwrap();
        let dist = model.boltzmann(2.0);
        let report = verify_detailed_balance(&DMatrix::identity(3, 3), &dist);
        assert_eq!(report.max_violation, 0.0);
        assert_eq!(report.pair, None);
    }

    #[test]
    fn perturbed_kernel_reports_pair() {
        let (model, k) = two_state();
        let dist = model.boltzmann(LN_2);
        let mut m = k.matrix().clone();
        m[(1, 0)] += 1e-3;
        m[(0, 0)] -= 1e-3;
        let report = verify_detailed_balance(&m, &dist);
        // residual = π0 * 1e-3 = 2/3 * 1e-3
        assert!((report.max_violation - 2.0e-3 / 3.0).abs() < 1e-15);
        assert_eq!(report.pair, Some((0, 1)));
        assert!(TransitionKernel::from_matrix(&model, LN_2, m, 0.5).is_err());
    }

    #[test]
    fn symmetrize_two_state() {
        let (model, k) = two_state();
        let h = symmetrize(&k, &model).unwrap();
        let off = (0.25f64 * 0.5).sqrt();
        assert!((h.matrix()[(0, 1)] - off).abs() < 1e-15);
        assert!((h.matrix()[(1, 0)] - off).abs() < 1e-15);
        assert!((h.matrix()[(0, 0)] - 0.75).abs() < 1e-15);
        assert!((h.matrix()[(1, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_identity_kernels_are_fixed() {
        let model = EnergyModel::new(vec![0.0, 1.0, 0.5]).unwrap();
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5, 0.5, 0.0]);
        let k = TransitionKernel::metropolis(&model, 0.0, &p, 0.5).unwrap();
        assert_eq!(symmetrize(&k, &model).unwrap().matrix(), k.matrix());

        let id = TransitionKernel::from_matrix(&model, 3.0, DMatrix::identity(3, 3), 0.0).unwrap();
        assert_eq!(symmetrize(&id, &model).unwrap().matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn symmetrize_flags_broken_balance() {
        let model = EnergyModel::new(vec![0.0, 1.0]).unwrap();
        let (_, k) = two_state();
        // Valid at ln 2, but claim a different temperature for the similarity route.
        let mislabeled = TransitionKernel {
            beta: 3.0,
            ..k
        };
        assert!(matches!(symmetrize(&mislabeled, &model), Err(Error::Mismatch(_))));
    }

    #[test]
    fn two_state_spectrum() {
        let (model, k) = two_state();
        let s = kernel_spectrum(&symmetrize(&k, &model).unwrap()).unwrap();
        // trace 1.25, det 0.25 → eigenvalues 1 and 1/4
        assert!((s.lambdas()[0] - 1.0).abs() < 1e-14);
        assert!((s.lambdas()[1] - 0.25).abs() < 1e-14);
        assert!((s.delta() - 0.75).abs() < 1e-14);
        assert!((s.phis()[1] - 1.318_116_071_652_818).abs() < 1e-12);
        assert_eq!(s.phis()[0], 0.0);
        let g = model.boltzmann(LN_2).gibbs_amplitudes();
        for (a, b) in s.eigvec(0).iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(spectrum_cross_check(&k, &s) < 1e-12);
    }

    #[test]
    fn identity_spectrum_has_zero_gap() {
        let model = EnergyModel::new(vec![0.0, 1.0, 2.0]).unwrap();
        let id = TransitionKernel::from_matrix(&model, 1.0, DMatrix::identity(3, 3), 0.0).unwrap();
        let s = kernel_spectrum(&symmetrize(&id, &model).unwrap()).unwrap();
        assert!(s.lambdas().iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert_eq!(s.delta(), 0.0);
    }

    #[test]
    fn uniform_kernel_is_rank_one() {
        let d = 5;
        let model = EnergyModel::new((0..d).map(|i| i as f64).collect()).unwrap();
        let u = DMatrix::from_element(d, d, 1.0 / d as f64);
        let k = TransitionKernel::from_matrix(&model, 0.0, u, 0.0).unwrap();
        let s = kernel_spectrum(&symmetrize(&k, &model).unwrap()).unwrap();
        assert!((s.lambdas()[0] - 1.0).abs() < 1e-14);
        assert!(s.lambdas()[1..].iter().all(|l| l.abs() < 1e-14));
        assert!((s.delta() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn negative_spectrum_is_rejected_without_laziness() {
        let model = EnergyModel::new(vec![0.0, 1.0]).unwrap();
        let k = TransitionKernel::metropolis(&model, 0.0, &swap(), 0.0).unwrap();
        let sym = symmetrize(&k, &model).unwrap();
        assert!(matches!(kernel_spectrum(&sym), Err(Error::NegativeEigenvalue(_))));
    }

    #[test]
    fn inverse_cdf_sampling_scans_in_order() {
        let (_, k) = two_state();
        assert_eq!(k.sample_next(0, 0.0), 0);
        assert_eq!(k.sample_next(0, 0.7499), 0);
        assert_eq!(k.sample_next(0, 0.75), 1);
        assert_eq!(k.sample_next(1, 0.49), 0);
        assert_eq!(k.sample_next(1, 0.999_999), 1);
    }

    #[test]
    fn text_dump_round_trips() {
        let (_, k) = two_state();
        let text = k.to_text();
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(values, vec![0.75, 0.5, 0.25, 0.5]);
    }
}
