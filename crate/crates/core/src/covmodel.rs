//! Spiked covariance pairs with diagonal noise: generation, Gaussian
//! sampling, the three estimators, and per-trial error metrics.

use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng as _;

use crate::baseline::{altproj_lowrank_sparse, pca_truncate};
use crate::embed::{embed_factor, embed_matrix, EmbedShape};
use crate::error::{Error, Result};
use crate::harness::{Method, MetricsRecord};
use crate::matcore::{
    frob_norm, orthonormalize_columns, sin_theta_distance, sym_eigen, truncated_svd, DenseMatrix,
    OrthoFactor,
};
use crate::rng::{derive_seed, gaussian_matrix, rng_from_seed, Rng};
use crate::transfer::{estimate_source, make_anchors, measure_coherence, transfer_altproj, TransferConfig};

const INSTANCE_TAG: u64 = 0x1257;
const SOURCE_SAMPLE_TAG: u64 = 0x5A01;
const TARGET_SAMPLE_TAG: u64 = 0x5A02;

/// Regeneration attempts before an instance is declared infeasible.
const MAX_INSTANCE_ATTEMPTS: u64 = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct CovSpec {
    pub p1: usize,
    pub r1: usize,
    pub n1: usize,
    pub p2: usize,
    pub delta_r: usize,
    pub n2_grid: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub spike_scale: f64,
    pub noise_scale: f64,
    /// Diagonal edits on the new coordinates.
    pub delta_s: usize,
    /// Nonzero diagonal entries of the source noise.
    pub s1: usize,
    /// Sparsity budget used when estimating the source. Zero means a plain
    /// truncated SVD and an empty sparse anchor.
    pub source_sparsity: usize,
    /// Instances whose target low-rank part is more coherent than this are
    /// regenerated.
    pub max_coherence: f64,
}

impl Default for CovSpec {
    fn default() -> Self {
        Self {
            p1: 10,
            r1: 3,
            n1: 500,
            p2: 50,
            delta_r: 1,
            n2_grid: vec![30, 50, 80, 100, 120, 150, 200, 250, 300],
            trials: 50,
            master_seed: 20240601,
            spike_scale: 1.0,
            noise_scale: 1.0,
            delta_s: 5,
            s1: 10,
            source_sparsity: 0,
            max_coherence: 3.0,
        }
    }
}

impl CovSpec {
    pub fn r2(&self) -> usize {
        self.r1 + self.delta_r
    }

    /// Nonzeros of the target noise.
    pub fn s2(&self) -> usize {
        self.s1 + self.delta_s
    }

    /// Edit budget for the transfer fit: target nonzeros not already
    /// covered by the estimated sparse anchor.
    pub fn transfer_edit_budget(&self) -> usize {
        self.s2().saturating_sub(self.source_sparsity)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.p1 == 0 || self.p2 < self.p1 {
            return bad(format!("need 0 < p1 <= p2, got p1={} p2={}", self.p1, self.p2));
        }
        if self.r1 + self.delta_r > self.p1 {
            return bad(format!("r1 + delta_r = {} exceeds p1 = {}", self.r1 + self.delta_r, self.p1));
        }
        if self.s1 > self.p1 {
            return bad(format!("s1 = {} exceeds p1 = {}", self.s1, self.p1));
        }
        if self.source_sparsity > self.p1 * self.p1 {
            return bad(format!("source_sparsity = {} exceeds p1^2", self.source_sparsity));
        }
        if self.delta_s > self.p2 - self.p1 {
            return bad(format!(
                "delta_s = {} exceeds the {} new coordinates",
                self.delta_s,
                self.p2 - self.p1
            ));
        }
        if self.delta_r > 0 && self.p2 - self.p1 < 1 && self.r2() > self.p2 {
            return bad("no room for innovation directions".into());
        }
        if self.n1 == 0 || self.n2_grid.is_empty() || self.n2_grid.contains(&0) {
            return bad("sample sizes must be positive and the grid non-empty".into());
        }
        if self.n2_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n2 grid must be strictly increasing".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if !(self.spike_scale > 0.0 && self.noise_scale > 0.0) {
            return bad("spike_scale and noise_scale must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovInstance {
    pub sigma1: DenseMatrix,
    pub sigma2: DenseMatrix,
    pub l1: DenseMatrix,
    pub l2: DenseMatrix,
    pub s1: DenseMatrix,
    pub s2: DenseMatrix,
    /// Source principal factor `U1` (p1 x r1).
    pub u1_true: OrthoFactor,
    /// `[B(U1) U_delta]`.
    pub u2_true: OrthoFactor,
    /// Measured coherence of `l2`.
    pub coherence: f64,
}

/// `sum_k d_k u_k u_k^T`, with the upper triangle mirrored for exact symmetry.
fn spiked(u: &DenseMatrix, d: &[f64]) -> DenseMatrix {
    let p = u.rows();
    let mut out = DenseMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v: f64 = d.iter().enumerate().map(|(k, dk)| dk * u.get(i, k) * u.get(j, k)).sum();
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

fn source_spikes(spec: &CovSpec) -> Vec<f64> {
    (0..spec.r1)
        .map(|k| {
            let base = if spec.r1 == 1 {
                10.0
            } else {
                10.0 - 6.0 * k as f64 / (spec.r1 - 1) as f64
            };
            spec.spike_scale * base
        })
        .collect()
}

fn noise_entry(rng: &mut Rng, scale: f64) -> f64 {
    scale * rng.random_range(0.5..1.5)
}

fn try_instance(spec: &CovSpec, rng: &mut Rng) -> Result<CovInstance> {
    let (p1, p2) = (spec.p1, spec.p2);
    let u1 = orthonormalize_columns(&gaussian_matrix(rng, p1, spec.r1))?;
    let l1 = spiked(u1.matrix(), &source_spikes(spec));

    let mut s1 = DenseMatrix::zeros(p1, p1);
    let mut idx = sample(rng, p1, spec.s1).into_vec();
    idx.sort_unstable();
    for i in idx {
        s1.set(i, i, noise_entry(rng, spec.noise_scale));
    }

    let bu1 = embed_factor(&u1, p2)?;
    let g = gaussian_matrix(rng, p2, spec.delta_r);
    let g = &g - &bu1.project(&g);
    let u_delta = orthonormalize_columns(&g)?;
    let u2 = OrthoFactor::new(bu1.matrix().hcat(u_delta.matrix()))?;
    let innovation = spiked(u_delta.matrix(), &vec![5.0 * spec.spike_scale; spec.delta_r]);
    let l2 = &embed_matrix(&l1, EmbedShape::new(p2, p2))? + &innovation;

    let mut s2 = embed_matrix(&s1, EmbedShape::new(p2, p2))?;
    let mut edits = sample(rng, p2 - p1, spec.delta_s).into_vec();
    edits.sort_unstable();
    for e in edits {
        let i = p1 + e;
        s2.set(i, i, noise_entry(rng, spec.noise_scale));
    }

    let coherence = measure_coherence(&l2)?;
    Ok(CovInstance {
        sigma1: &l1 + &s1,
        sigma2: &l2 + &s2,
        l1,
        l2,
        s1,
        s2,
        u1_true: u1,
        u2_true: u2,
        coherence,
    })
}

/// Instance for `trial`; shared by every sample size so curves are paired.
pub fn generate_instance(spec: &CovSpec, trial: usize) -> Result<CovInstance> {
    spec.validate()?;
    let base = derive_seed(&[spec.master_seed, INSTANCE_TAG, trial as u64]);
    for attempt in 0..MAX_INSTANCE_ATTEMPTS {
        let mut rng = rng_from_seed(derive_seed(&[base, attempt]));
        let inst = try_instance(spec, &mut rng)?;
        if inst.coherence <= spec.max_coherence {
            return Ok(inst);
        }
        log::info!(
            "trial {trial}: regenerating instance (coherence {:.3} > {})",
            inst.coherence,
            spec.max_coherence
        );
    }
    Err(Error::Construction(format!(
        "no instance with coherence <= {} after {MAX_INSTANCE_ATTEMPTS} attempts",
        spec.max_coherence
    )))
}

/// `(1/n) sum x_i x_i^T` for `n` draws of `N(0, sigma)`.
pub fn sample_covariance(sigma: &DenseMatrix, n: usize, seed: u64) -> Result<DenseMatrix> {
    let p = sigma.rows();
    if sigma.cols() != p || !sigma.is_symmetric(1e-12 * (1.0 + frob_norm(sigma))) {
        return Err(Error::invalid("covariance must be square and symmetric"));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let eig = sym_eigen(sigma)?;
    let roots: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let vec = &eig.vectors;
    let root = DenseMatrix::from_fn(p, p, |i, j| (0..p).map(|k| vec.get(i, k) * roots[k] * vec.get(j, k)).sum());

    let mut rng = rng_from_seed(seed);
    let z = gaussian_matrix(&mut rng, n, p);
    let x = z.matmul(&root); // rows are samples; root is symmetric
    let gram = x.t_matmul(&x);
    let inv_n = 1.0 / n as f64;
    let mut out = DenseMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = gram.get(i, j) * inv_n;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

/// One method's fit of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodEstimate {
    pub method: Method,
    pub l_hat: DenseMatrix,
    pub s_hat: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Empty for methods without an iterative objective.
    pub objective_trace: Vec<f64>,
    /// Fitting time; the transfer time includes source estimation.
    pub wall_ms: f64,
}

/// Errors of each estimate against the instance truth.
pub fn evaluate_trial(
    instance: &CovInstance,
    n: usize,
    trial: usize,
    estimates: &[MethodEstimate],
) -> Result<Vec<MetricsRecord>> {
    let r2 = instance.u2_true.cols();
    estimates
        .iter()
        .map(|e| {
            let u_hat = truncated_svd(&e.l_hat, r2)?.u;
            Ok(MetricsRecord {
                experiment: "cov".into(),
                method: e.method,
                n,
                trial,
                err_l_fro: frob_norm(&(&e.l_hat - &instance.l2)),
                err_s_fro: frob_norm(&(&e.s_hat - &instance.s2)),
                err_theta_fro: frob_norm(&(&(&e.l_hat + &e.s_hat) - &instance.sigma2)),
                sin_theta: sin_theta_distance(&instance.u2_true, &u_hat)?,
                iterations: e.iterations,
                converged: e.converged,
                wall_ms: 0.0,
            })
        })
        .collect()
}

/// Settings shared by the iterative estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: crate::transfer::DEFAULT_TOLERANCE,
            max_iterations: crate::transfer::DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// The two sample covariances for `(n2, trial)`.
pub fn sample_pair(spec: &CovSpec, inst: &CovInstance, n2: usize, trial: usize) -> Result<(DenseMatrix, DenseMatrix)> {
    let key = [spec.master_seed, n2 as u64, trial as u64];
    let seed1 = derive_seed(&[key[0], key[1], key[2], SOURCE_SAMPLE_TAG]);
    let seed2 = derive_seed(&[key[0], key[1], key[2], TARGET_SAMPLE_TAG]);
    Ok((
        sample_covariance(&inst.sigma1, spec.n1, seed1)?,
        sample_covariance(&inst.sigma2, n2, seed2)?,
    ))
}

pub(crate) fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Fits transfer, non-transfer, and PCA to the target sample covariance.
pub fn fit_methods(
    spec: &CovSpec,
    sigma1_hat: &DenseMatrix,
    sigma2_hat: &DenseMatrix,
    solver: SolverSettings,
) -> Result<Vec<MethodEstimate>> {
    let p2 = spec.p2;
    let clock = Instant::now();
    let src = estimate_source(sigma1_hat, spec.r1, spec.source_sparsity)?;
    let (basis, s0) = make_anchors(&src, p2, p2, spec.delta_r)?;
    let cfg = TransferConfig {
        tolerance: solver.tolerance,
        max_iterations: solver.max_iterations,
        ..TransferConfig::new(spec.delta_r, spec.transfer_edit_budget())
    };
    let tr = transfer_altproj(sigma2_hat, &basis, &s0, &cfg)?;
    let tr_ms = elapsed_ms(clock);
    let clock = Instant::now();
    let nt = altproj_lowrank_sparse(sigma2_hat, spec.r2(), spec.s2(), solver.tolerance, solver.max_iterations)?;
    let nt_ms = elapsed_ms(clock);
    let clock = Instant::now();
    let pca = pca_truncate(sigma2_hat, spec.r2())?;
    let pca_ms = elapsed_ms(clock);
    Ok(vec![
        MethodEstimate {
            method: Method::Transfer,
            l_hat: tr.l_hat2.value,
            s_hat: tr.s_hat2,
            iterations: tr.iterations,
            converged: tr.converged,
            objective_trace: tr.objective_trace,
            wall_ms: tr_ms,
        },
        MethodEstimate {
            method: Method::Nontransfer,
            l_hat: nt.l_hat,
            s_hat: nt.s_hat,
            iterations: nt.iterations,
            converged: nt.converged,
            objective_trace: nt.objective_trace,
            wall_ms: nt_ms,
        },
        MethodEstimate {
            method: Method::Pca,
            l_hat: pca,
            s_hat: DenseMatrix::zeros(p2, p2),
            iterations: 0,
            converged: true,
            objective_trace: Vec::new(),
            wall_ms: pca_ms,
        },
    ])
}

/// Full trial: instance, samples, three fits, metrics.
pub fn run_trial(
    spec: &CovSpec,
    n2: usize,
    trial: usize,
    solver: SolverSettings,
) -> Result<(Vec<MetricsRecord>, Vec<MethodEstimate>)> {
    let inst = generate_instance(spec, trial)?;
    let (s1_hat, s2_hat) = sample_pair(spec, &inst, n2, trial)?;
    let est = fit_methods(spec, &s1_hat, &s2_hat, solver)?;
    let rows = evaluate_trial(&inst, n2, trial, &est)?;
    Ok((rows, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{full_svd, max_norm};

    fn check_invariants(spec: &CovSpec, inst: &CovInstance) {
        for (sigma, l, s) in [
            (&inst.sigma1, &inst.l1, &inst.s1),
            (&inst.sigma2, &inst.l2, &inst.s2),
        ] {
            assert!(sigma.is_symmetric(0.0));
            assert!(sigma.max_abs_diff(&(l + s)) == 0.0);
            let min_eig = *sym_eigen(sigma).unwrap().values.last().unwrap();
            assert!(min_eig >= -1e-10);
        }
        let bu1 = embed_factor(&inst.u1_true, spec.p2).unwrap();
        let ud = inst.u2_true.matrix().columns(spec.r1, spec.delta_r);
        assert!(max_norm(&ud.t_matmul(bu1.matrix())) < 1e-10);
        let svd = full_svd(&inst.l2).unwrap();
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10).count();
        assert_eq!(rank, spec.r2());
        assert!(inst.coherence <= spec.max_coherence);
    }

    #[test]
    fn default_instances_are_valid() {
        let spec = CovSpec::default();
        for trial in 0..5 {
            check_invariants(&spec, &generate_instance(&spec, trial).unwrap());
        }
    }

    #[test]
    fn no_growth_means_identical_tasks() {
        let spec = CovSpec {
            p2: 10,
            delta_r: 0,
            delta_s: 0,
            ..CovSpec::default()
        };
        let inst = generate_instance(&spec, 0).unwrap();
        assert_eq!(inst.sigma1, inst.sigma2);
    }

    #[test]
    fn instances_are_deterministic() {
        let spec = CovSpec::default();
        assert_eq!(generate_instance(&spec, 3).unwrap(), generate_instance(&spec, 3).unwrap());
        assert_ne!(generate_instance(&spec, 3).unwrap(), generate_instance(&spec, 4).unwrap());
    }

    #[test]
    fn sampling_basics() {
        let z = DenseMatrix::zeros(3, 3);
        assert_eq!(sample_covariance(&z, 7, 1).unwrap(), z);
        let s = sample_covariance(&DenseMatrix::identity(2), 1_000_000, 11).unwrap();
        assert!(max_norm(&(&s - &DenseMatrix::identity(2))) < 0.01);
        let sigma = DenseMatrix::from_rows(&[[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 1.5]]).unwrap();
        assert!(sample_covariance(&sigma, 13, 5).unwrap().is_symmetric(0.0));
    }

    #[test]
    fn sample_mean_is_unbiased() {
        // Var(entry ij) = (s_ii s_jj + s_ij^2) / n <= 2/50 here, so the mean of
        // 200 draws has sd <= 0.0142 and 3 sd = 0.042 < 0.05.
        let sigma = DenseMatrix::from_rows(&[[1.0, 0.3, 0.0], [0.3, 0.8, 0.2], [0.0, 0.2, 0.6]]).unwrap();
        let mut acc = DenseMatrix::zeros(3, 3);
        for seed in 0..200 {
            acc = &acc + &sample_covariance(&sigma, 50, seed).unwrap();
        }
        let mean = acc.scale(1.0 / 200.0);
        assert!(max_norm(&(&mean - &sigma)) < 0.05);
    }

    #[test]
    fn perfect_and_zero_estimates() {
        let spec = CovSpec::default();
        let inst = generate_instance(&spec, 0).unwrap();
        let perfect = MethodEstimate {
            method: Method::Transfer,
            l_hat: inst.l2.clone(),
            s_hat: inst.s2.clone(),
            iterations: 1,
            converged: true,
            objective_trace: vec![],
            wall_ms: 0.0,
        };
        let zero = MethodEstimate {
            method: Method::Pca,
            l_hat: DenseMatrix::zeros(50, 50),
            s_hat: DenseMatrix::zeros(50, 50),
            ..perfect.clone()
        };
        let rows = evaluate_trial(&inst, 30, 0, &[perfect, zero]).unwrap();
        assert!(rows[0].err_l_fro == 0.0 && rows[0].err_s_fro == 0.0 && rows[0].err_theta_fro == 0.0);
        assert!(rows[0].sin_theta < 1e-10);
        assert_eq!(rows[1].err_l_fro, frob_norm(&inst.l2));
    }

    #[test]
    fn full_rank_pca_on_noiseless_sigma() {
        let spec = CovSpec::default();
        let inst = generate_instance(&spec, 1).unwrap();
        let pca = pca_truncate(&inst.sigma2, 50).unwrap();
        assert!(frob_norm(&(&pca - &inst.sigma2)) < 1e-10);
    }
}
