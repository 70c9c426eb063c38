//! Markov transition estimation from a single trajectory: structured
//! source/target chain pairs, simulation, empirical frequency matrices, the
//! plug-in transition estimator, and the transfer denoising adapter.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::embed::{embed_factor, embed_matrix, EmbedShape};
use crate::matcore::{frob_norm, full_svd, truncated_svd, DenseMatrix, OrthoFactor};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::transfer::{make_anchors, measure_coherence, transfer_altproj, SourceEstimate, TransferConfig, TransferResult};

/// Attempts made by the pair generator before giving up.
pub const MAX_PAIR_ATTEMPTS: u64 = 20;

const ROW_SUM_TOL: f64 = 1e-10;
const STATIONARY_TOL: f64 = 1e-8;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERATIONS: usize = 100_000;

/// A row-stochastic transition matrix with its stationary distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    transition: DenseMatrix,
    stationary: Vec<f64>,
}

fn check_stochastic(p: &DenseMatrix) -> Result<()> {
    if p.rows() != p.cols() || p.rows() == 0 {
        return Err(Error::shape(format!("transition matrix must be square, got {}x{}", p.rows(), p.cols())));
    }
    for i in 0..p.rows() {
        let row = p.row(i);
        if let Some(j) = row.iter().position(|&x| x < 0.0) {
            return Err(Error::invalid(format!("negative transition probability at ({i}, {j})")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::invalid(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

impl MarkovChain {
    /// Validates `transition` and computes its stationary distribution.
    pub fn new(transition: DenseMatrix) -> Result<Self> {
        check_stochastic(&transition)?;
        let stationary = stationary_distribution(&transition)?;
        Ok(Self {
            transition,
            stationary,
        })
    }

    /// Chain with `F = Diag(pi) P` equal to `f`, where `f` must have equal
    /// row and column sums.
    pub fn from_frequency(f: &FrequencyMatrix) -> Result<Self> {
        let fv = f.values();
        let pi = fv.row_sums();
        let cols = fv.col_sums();
        for (i, (r, c)) in pi.iter().zip(&cols).enumerate() {
            if *r <= 0.0 {
                return Err(Error::Construction(format!("state {i} has zero stationary mass")));
            }
            if (r - c).abs() > STATIONARY_TOL {
                return Err(Error::Construction(format!("marginals differ at state {i}: {r} vs {c}")));
            }
        }
        let p = DenseMatrix::from_fn(fv.rows(), fv.cols(), |i, j| fv.get(i, j) / pi[i]);
        let chain = Self::new(p)?;
        let gap: f64 = chain.stationary.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if gap > STATIONARY_TOL {
            return Err(Error::Construction(format!("stationary distribution off by {gap:e}")));
        }
        Ok(chain)
    }

    pub fn transition(&self) -> &DenseMatrix {
        &self.transition
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn states(&self) -> usize {
        self.transition.rows()
    }

    /// `Diag(pi) P`.
    pub fn frequency(&self) -> FrequencyMatrix {
        let p = &self.transition;
        let f = DenseMatrix::from_fn(p.rows(), p.cols(), |i, j| self.stationary[i] * p.get(i, j));
        FrequencyMatrix { values: f, counts: None }
    }
}

/// Joint distribution of consecutive states. Empirical matrices keep their
/// integer counts so that the total can be checked exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatrix {
    values: DenseMatrix,
    counts: Option<(Vec<u64>, u64)>,
}

impl FrequencyMatrix {
    /// Validates non-negativity and unit total (within 1e-12).
    pub fn new(values: DenseMatrix) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(Error::shape("frequency matrix must be square"));
        }
        if values.as_slice().iter().any(|&x| x < 0.0) {
            return Err(Error::invalid("frequency matrix has negative entries"));
        }
        let total = values.sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("frequency matrix sums to {total}")));
        }
        Ok(Self { values, counts: None })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn states(&self) -> usize {
        self.values.rows()
    }

    /// Row-major transition counts and the number of transitions, for
    /// empirical matrices.
    pub fn counts(&self) -> Option<(&[u64], u64)> {
        self.counts.as_ref().map(|(c, n)| (c.as_slice(), *n))
    }

    /// For empirical matrices: the counts add up to the number of
    /// transitions, so the entries `count / n` total exactly one.
    pub fn total_is_exact(&self) -> bool {
        match &self.counts {
            Some((c, n)) => c.iter().sum::<u64>() == *n,
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPairSpec {
    pub p1: usize,
    pub p2: usize,
    pub rank: usize,
    pub rank_increment: usize,
    pub sparse_edits: usize,
    /// Source trajectory length in transitions.
    pub n1: usize,
    /// Target trajectory lengths in transitions.
    pub n2: Vec<usize>,
    pub seed: u64,
}

impl Default for MarkovPairSpec {
    fn default() -> Self {
        Self {
            p1: 5,
            p2: 8,
            rank: 2,
            rank_increment: 1,
            sparse_edits: 2,
            n1: 200_000,
            n2: vec![2000, 8000, 32000],
            seed: 20240601,
        }
    }
}

impl MarkovPairSpec {
    pub fn r2(&self) -> usize {
        self.rank + self.rank_increment
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.p1 == 0 || self.p2 < self.p1 {
            return bad(format!("need 0 < p1 <= p2, got p1={} p2={}", self.p1, self.p2));
        }
        if self.rank == 0 || self.rank + self.rank_increment > self.p1 {
            return bad(format!(
                "need 1 <= rank and rank + rank_increment <= p1, got {} + {} with p1={}",
                self.rank, self.rank_increment, self.p1
            ));
        }
        if self.p2 > self.p1 && self.rank_increment == 0 {
            return bad("new states need at least one innovation direction to be reachable".into());
        }
        if self.rank_increment > self.p2 - self.p1 {
            return bad(format!(
                "rank_increment {} exceeds the {} new states",
                self.rank_increment,
                self.p2 - self.p1
            ));
        }
        if self.sparse_edits > self.p2 {
            return bad(format!("sparse_edits {} exceeds p2 = {}", self.sparse_edits, self.p2));
        }
        if self.n1 == 0 || self.n2.is_empty() || self.n2.contains(&0) {
            return bad("trajectory lengths must be positive and the n2 grid non-empty".into());
        }
        if self.n2.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n2 grid must be strictly increasing".into());
        }
        Ok(())
    }
}

/// A generated source/target pair with the true decompositions.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredPair {
    pub source: MarkovChain,
    pub target: MarkovChain,
    pub f1: FrequencyMatrix,
    pub f2: FrequencyMatrix,
    /// Low-rank part of `F1` (the source has no sparse part).
    pub l1: DenseMatrix,
    pub l2: DenseMatrix,
    pub s2: DenseMatrix,
    /// Rank-r1 left factor of `l1`.
    pub u1: OrthoFactor,
    /// Rank-r2 left factor of `l2`.
    pub u2: OrthoFactor,
    /// `||F2 - L2 - S2||_F / ||F2||_F`.
    pub structure_violation: f64,
    pub coherence: f64,
    /// Whether `sparse_edits <= 0.1 * p2 / (mu * r2^3)`.
    pub sparse_bound_holds: bool,
}

/// Positive probability vector on `len` states, with extra mass on states
/// `i` where `boost(i)` holds.
fn positive_simplex(rng: &mut Rng, len: usize, boost: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len)
        .map(|i| rng.random_range(0.05..1.0) + if boost(i) { 1.5 } else { 0.0 })
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn outer_sym(a: &[f64], b: &[f64], scale: f64) -> DenseMatrix {
    let n = a.len();
    DenseMatrix::from_fn(n, n, |i, j| scale * (a[i] * b[j] + b[i] * a[j]))
}

fn try_pair(spec: &MarkovPairSpec, rng: &mut Rng) -> Result<StructuredPair> {
    let (p1, p2, r1, dr) = (spec.p1, spec.p2, spec.rank, spec.rank_increment);

    // Source: mixture of r1 independent-chain kernels q q^T.
    let mut w: Vec<f64> = (0..r1).map(|_| rng.random_range(0.5..1.5)).collect();
    let ws: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= ws);
    let qs: Vec<Vec<f64>> = (0..r1).map(|k| positive_simplex(rng, p1, |i| i % r1 == k)).collect();
    let f1v = DenseMatrix::from_fn(p1, p1, |i, j| (0..r1).map(|k| w[k] * qs[k][i] * qs[k][j]).sum());
    let pi1 = f1v.row_sums();
    let f1 = FrequencyMatrix::new(f1v.clone())?;
    let source = MarkovChain::from_frequency(&f1)?;

    // Target: scaled embedding, innovation through new states, diagonal edits.
    let edits: Vec<f64> = (0..spec.sparse_edits).map(|_| rng.random_range(0.03..0.06)).collect();
    let mut edit_states = sample(rng, p2, spec.sparse_edits).into_vec();
    edit_states.sort_unstable();
    let innovation_mass = (p2 - p1) as f64 / p2 as f64;
    let alpha = 1.0 - innovation_mass - edits.iter().sum::<f64>();
    if alpha <= 0.0 {
        return Err(Error::Construction(format!("no mass left for the source block (alpha = {alpha})")));
    }

    let mut l2 = embed_matrix(&f1v, EmbedShape::new(p2, p2))?.scale(alpha);
    let mut g = pi1.clone();
    g.resize(p2, 0.0);
    let per = innovation_mass / dr.max(1) as f64;
    for j in 0..dr {
        let mut h = vec![0.0; p1];
        h.extend(positive_simplex(rng, p2 - p1, |i| i % dr == j));
        // Cross mass 2*beta couples old and new states; gamma keeps the new block alive.
        let beta = per / 3.0;
        let gamma = per / 3.0;
        l2 = &l2 + &outer_sym(&g, &h, beta);
        l2 = &l2 + &outer_sym(&h, &h, gamma / 2.0);
    }
    let mut s2 = DenseMatrix::zeros(p2, p2);
    for (&i, &e) in edit_states.iter().zip(&edits) {
        s2.set(i, i, e);
    }
    let f2v = &l2 + &s2;
    let f2 = FrequencyMatrix::new(f2v.clone())?;
    let target = MarkovChain::from_frequency(&f2)?;

    let u1 = truncated_svd(&f1v, r1)?.u;
    let l2_svd = full_svd(&l2)?;
    if l2_svd.rank() != r1 + dr {
        return Err(Error::Construction(format!(
            "target low-rank part has rank {}, expected {}",
            l2_svd.rank(),
            r1 + dr
        )));
    }
    let u2 = l2_svd.truncate(r1 + dr).u;
    let bu1 = embed_factor(&u1, p2)?;
    let coherence = measure_coherence(&l2)?;
    let r2 = (r1 + dr) as f64;
    let sparse_bound_holds = (spec.sparse_edits as f64) <= 0.1 * p2 as f64 / (coherence * r2.powi(3));
    let structure_violation = frob_norm(&(&f2v - &(&l2 + &s2))) / frob_norm(&f2v);
    // The innovation lives on the new states, so it is orthogonal to B(U1).
    debug_assert!(crate::matcore::max_norm(&bu1.matrix().t_matmul(u2.matrix())) <= 1.0 + 1e-12);

    Ok(StructuredPair {
        source,
        target,
        f1,
        f2,
        l1: f1v,
        l2,
        s2,
        u1,
        u2,
        structure_violation,
        coherence,
        sparse_bound_holds,
    })
}

/// Generates a structured pair, retrying with derived seeds if a validity
/// gate fails.
pub fn build_structured_pair(spec: &MarkovPairSpec) -> Result<StructuredPair> {
    spec.validate()?;
    let mut last = None;
    for attempt in 0..MAX_PAIR_ATTEMPTS {
        let mut rng = rng_from_seed(derive_seed(&[spec.seed, 0x4D4B, attempt]));
        match try_pair(spec, &mut rng) {
            Ok(pair) => return Ok(pair),
            Err(e) => {
                log::info!("pair attempt {attempt} rejected: {e}");
                last = Some(e);
            }
        }
    }
    Err(Error::Construction(format!(
        "no valid pair after {MAX_PAIR_ATTEMPTS} attempts; last error: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Index of the first state whose cumulative probability exceeds `u`.
fn inverse_cdf(cum: &[f64], u: f64) -> usize {
    let idx = cum.partition_point(|&c| c <= u);
    if idx < cum.len() {
        return idx;
    }
    // Rounding left the total below u: take the last state with mass.
    let mut j = cum.len() - 1;
    while j > 0 && cum[j] == cum[j - 1] {
        j -= 1;
    }
    j
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// `length` states, starting from a draw of the stationary distribution.
pub fn simulate_trajectory(chain: &MarkovChain, length: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let start = inverse_cdf(&cumulative(&chain.stationary), rng.random::<f64>());
    simulate_from(chain, start, length, &mut rng)
}

/// `length` states starting at `start`.
pub fn simulate_trajectory_from(chain: &MarkovChain, start: usize, length: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    simulate_from(chain, start, length, &mut rng)
}

fn simulate_from(chain: &MarkovChain, start: usize, length: usize, rng: &mut Rng) -> Vec<usize> {
    let p = chain.states();
    let rows: Vec<Vec<f64>> = (0..p).map(|i| cumulative(chain.transition.row(i))).collect();
    let mut out = Vec::with_capacity(length);
    if length == 0 {
        return out;
    }
    let mut x = start;
    out.push(x);
    for _ in 1..length {
        x = inverse_cdf(&rows[x], rng.random::<f64>());
        out.push(x);
    }
    out
}

/// `F[i][j] = #{t : (x_t, x_{t+1}) = (i, j)} / n` with `n = len - 1`.
pub fn empirical_frequency(trajectory: &[usize], p: usize) -> Result<FrequencyMatrix> {
    if trajectory.len() < 2 {
        return Err(Error::invalid("trajectory needs at least two states"));
    }
    if let Some(&bad) = trajectory.iter().find(|&&s| s >= p) {
        return Err(Error::invalid(format!("state {bad} out of range for {p} states")));
    }
    let mut counts = vec![0u64; p * p];
    for w in trajectory.windows(2) {
        counts[w[0] * p + w[1]] += 1;
    }
    let n = (trajectory.len() - 1) as u64;
    let values = DenseMatrix::from_fn(p, p, |i, j| counts[i * p + j] as f64 / n as f64);
    Ok(FrequencyMatrix {
        values,
        counts: Some((counts, n)),
    })
}

fn power_iterate(p: &DenseMatrix, mut pi: Vec<f64>) -> Option<Vec<f64>> {
    let n = p.rows();
    for _ in 0..POWER_MAX_ITERATIONS {
        let mut next = vec![0.0; n];
        for (i, &w) in pi.iter().enumerate() {
            if w != 0.0 {
                for (j, x) in p.row(i).iter().enumerate() {
                    next[j] += w * x;
                }
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if change <= POWER_TOL {
            return Some(pi);
        }
    }
    None
}

/// Left fixed point of `P` by power iteration from the uniform vector,
/// confirmed by a second run from a perturbed start.
pub fn stationary_distribution(p_matrix: &DenseMatrix) -> Result<Vec<f64>> {
    check_stochastic(p_matrix)?;
    let n = p_matrix.rows();
    let uniform = vec![1.0 / n as f64; n];
    let pi = power_iterate(p_matrix, uniform.clone())
        .ok_or_else(|| Error::NonErgodic("power iteration did not converge".into()))?;
    let mut perturbed: Vec<f64> = uniform.iter().map(|u| 0.5 * u).collect();
    perturbed[0] += 0.5;
    let alt = power_iterate(p_matrix, perturbed)
        .ok_or_else(|| Error::NonErgodic("power iteration from a perturbed start did not converge".into()))?;
    let gap: f64 = pi.iter().zip(&alt).map(|(a, b)| (a - b).abs()).sum();
    if gap > STATIONARY_TOL {
        return Err(Error::NonErgodic(format!("fixed points from two starts differ by {gap:e}")));
    }
    Ok(pi)
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Rows of `f_hat` with no positive mass; the plug-in estimate makes them
/// uniform.
pub fn zero_mass_rows(f_hat: &DenseMatrix) -> Vec<usize> {
    f_hat
        .row_sums()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// `Diag(pi_hat)^{-1} F_hat` with each row projected onto the simplex;
/// rows without positive mass become uniform.
pub fn plugin_transition(f_hat: &DenseMatrix) -> Result<DenseMatrix> {
    let p = f_hat.rows();
    if f_hat.cols() != p {
        return Err(Error::shape("frequency estimate must be square"));
    }
    let pi = f_hat.row_sums();
    let mut rows = Vec::with_capacity(p);
    for (i, &m) in pi.iter().enumerate() {
        if m > 0.0 {
            let scaled: Vec<f64> = f_hat.row(i).iter().map(|x| x / m).collect();
            rows.push(simplex_project(&scaled));
        } else {
            rows.push(vec![1.0 / p as f64; p]);
        }
    }
    DenseMatrix::from_rows(&rows)
}

/// Transfer-denoised frequency matrix, its plug-in transition matrix, and
/// the underlying fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovEstimate {
    pub f_hat: DenseMatrix,
    pub p_hat: DenseMatrix,
    pub fit: TransferResult,
}

pub fn transfer_markov_estimate(
    f_hat2: &FrequencyMatrix,
    src: &SourceEstimate,
    cfg: &TransferConfig,
) -> Result<MarkovEstimate> {
    let p2 = f_hat2.states();
    let (basis, s0) = make_anchors(src, p2, p2, cfg.rank_increment)?;
    let fit = transfer_altproj(f_hat2.values(), &basis, &s0, cfg)?;
    let f_hat = fit.fitted();
    let p_hat = plugin_transition(&f_hat)?;
    Ok(MarkovEstimate { f_hat, p_hat, fit })
}

/// Header `p length seed`, then one state per line.
pub fn write_trajectory(states: &[usize], p: usize, seed: u64) -> String {
    let mut out = String::with_capacity(states.len() * 3 + 32);
    let _ = writeln!(out, "{p} {} {seed}", states.len());
    for s in states {
        let _ = writeln!(out, "{s}");
    }
    out
}

/// Inverse of [`write_trajectory`]: `(p, seed, states)`.
pub fn parse_trajectory(text: &str) -> Result<(usize, u64, Vec<usize>)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: None,
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty trajectory file".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 {
        return Err(err(1, format!("expected `p length seed`, got `{header}`")));
    }
    let p: usize = h[0].parse().map_err(|_| err(1, format!("bad state count `{}`", h[0])))?;
    let len: usize = h[1].parse().map_err(|_| err(1, format!("bad length `{}`", h[1])))?;
    let seed: u64 = h[2].parse().map_err(|_| err(1, format!("bad seed `{}`", h[2])))?;
    let mut states = Vec::with_capacity(len);
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let s: usize = line.parse().map_err(|_| err(i + 1, format!("bad state `{line}`")))?;
        if s >= p {
            return Err(err(i + 1, format!("state {s} out of range for {p} states")));
        }
        states.push(s);
    }
    if states.len() != len {
        return Err(err(1, format!("header says {len} states, found {}", states.len())));
    }
    Ok((p, seed, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::estimate_source;

    fn chain(rows: &[&[f64]]) -> MarkovChain {
        MarkovChain::new(DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&DenseMatrix::from_rows(&[[0.9, 0.1], [0.1, 0.9]]).unwrap()).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);
        assert!(matches!(
            stationary_distribution(&DenseMatrix::identity(2)),
            Err(Error::NonErgodic(_))
        ));
        assert!(matches!(
            stationary_distribution(&DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()),
            Err(Error::NonErgodic(_))
        ));
        let p = DenseMatrix::from_rows(&[[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]]).unwrap();
        let pi = stationary_distribution(&p).unwrap();
        for j in 0..3 {
            let v: f64 = (0..3).map(|i| pi[i] * p.get(i, j)).sum();
            assert!((v - pi[j]).abs() < 1e-8);
        }
        assert!(stationary_distribution(&DenseMatrix::from_rows(&[[0.5, 0.6], [0.5, 0.5]]).unwrap()).is_err());
    }

    #[test]
    fn simulation_examples() {
        let id = MarkovChain {
            transition: DenseMatrix::identity(3),
            stationary: vec![1.0 / 3.0; 3],
        };
        let t = simulate_trajectory(&id, 50, 4);
        assert!(t.iter().all(|&s| s == t[0]));

        let flip = MarkovChain {
            transition: DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(),
            stationary: vec![0.5, 0.5],
        };
        let t = simulate_trajectory_from(&flip, 0, 6, 1);
        assert_eq!(t, vec![0, 1, 0, 1, 0, 1]);

        let c = chain(&[&[0.7, 0.3], &[0.4, 0.6]]);
        assert_eq!(simulate_trajectory(&c, 200, 9), simulate_trajectory(&c, 200, 9));
        assert_ne!(simulate_trajectory(&c, 200, 9), simulate_trajectory(&c, 200, 10));
    }

    #[test]
    fn empirical_examples() {
        let f = empirical_frequency(&[0, 1, 0, 1, 0], 2).unwrap();
        assert_eq!(f.values(), &DenseMatrix::from_rows(&[[0.0, 0.5], [0.5, 0.0]]).unwrap());
        assert!(f.total_is_exact());
        let f = empirical_frequency(&[2, 2, 2, 2], 3).unwrap();
        let mut want = DenseMatrix::zeros(3, 3);
        want.set(2, 2, 1.0);
        assert_eq!(f.values(), &want);
        assert!(empirical_frequency(&[0, 3], 3).is_err());
        assert!(empirical_frequency(&[0], 3).is_err());
    }

    #[test]
    fn simplex_examples() {
        assert_eq!(simplex_project(&[0.5, 0.5]), vec![0.5, 0.5]);
        let x = simplex_project(&[1.2, -0.2]);
        assert!((x[0] - 1.0).abs() < 1e-15 && x[1] == 0.0);
        assert_eq!(simplex_project(&[2.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn plugin_examples() {
        let f = DenseMatrix::from_rows(&[[0.25, 0.25], [0.25, 0.25]]).unwrap();
        assert_eq!(plugin_transition(&f).unwrap(), DenseMatrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap());

        let f = DenseMatrix::from_rows(&[[0.6, -0.1], [0.2, 0.3]]).unwrap();
        let p = plugin_transition(&f).unwrap();
        assert!((p.get(0, 0) - 1.0).abs() < 1e-15 && p.get(0, 1) == 0.0);

        let c = chain(&[&[0.2, 0.5, 0.3], &[0.6, 0.1, 0.3], &[0.25, 0.25, 0.5]]);
        let p = plugin_transition(c.frequency().values()).unwrap();
        assert!(p.max_abs_diff(c.transition()) < 1e-10);

        let f = DenseMatrix::from_rows(&[[0.5, 0.5], [0.0, 0.0]]).unwrap();
        assert_eq!(plugin_transition(&f).unwrap().row(1), &[0.5, 0.5]);
        assert_eq!(zero_mass_rows(&f), vec![1]);
    }

    #[test]
    fn identity_transfer_pair() {
        let spec = MarkovPairSpec {
            p1: 4,
            p2: 4,
            rank: 2,
            rank_increment: 0,
            sparse_edits: 0,
            ..MarkovPairSpec::default()
        };
        let pair = build_structured_pair(&spec).unwrap();
        assert_eq!(pair.f1.values(), pair.f2.values());
    }

    #[test]
    fn rank_one_source_is_independent_chain() {
        let spec = MarkovPairSpec {
            rank: 1,
            ..MarkovPairSpec::default()
        };
        let pair = build_structured_pair(&spec).unwrap();
        let pi = pair.source.stationary();
        let outer = DenseMatrix::from_fn(5, 5, |i, j| pi[i] * pi[j]);
        assert!(pair.f1.values().max_abs_diff(&outer) < 1e-12);
        let sv = full_svd(pair.f1.values()).unwrap();
        assert_eq!(sv.rank(), 1);
    }

    #[test]
    fn pairs_pass_validity_gates() {
        for seed in 0..10 {
            let spec = MarkovPairSpec {
                seed,
                ..MarkovPairSpec::default()
            };
            let pair = build_structured_pair(&spec).unwrap();
            for c in [&pair.source, &pair.target] {
                check_stochastic(c.transition()).unwrap();
                let pi = c.stationary();
                assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for j in 0..c.states() {
                    let v: f64 = (0..c.states()).map(|i| pi[i] * c.transition().get(i, j)).sum();
                    assert!((v - pi[j]).abs() < 1e-8);
                }
            }
            assert!(pair.structure_violation < 0.01);
            assert_eq!(full_svd(&pair.l2).unwrap().rank(), 3);
            let bu1 = embed_factor(&pair.u1, 8).unwrap();
            let innov = remove_anchor(&pair.u2, &bu1);
            assert!(innov > 0.5);
        }
    }

    /// Norm of the part of `u2` outside `span(bu1)`.
    fn remove_anchor(u2: &OrthoFactor, bu1: &OrthoFactor) -> f64 {
        let m = u2.matrix();
        frob_norm(&(m - &bu1.project(m)))
    }

    #[test]
    fn trajectory_dump_roundtrip() {
        let t = vec![0, 2, 1, 1, 0];
        let text = write_trajectory(&t, 3, 77);
        assert!(text.starts_with("3 5 77\n"));
        assert_eq!(parse_trajectory(&text).unwrap(), (3, 77, t));
        assert!(parse_trajectory("3 2 1\n0\n5\n").is_err());
        assert!(parse_trajectory("3 3 1\n0\n1\n").is_err());
    }

    #[test]
    fn empirical_frequency_is_consistent() {
        let c = chain(&[&[0.5, 0.2, 0.2, 0.1], &[0.1, 0.6, 0.2, 0.1], &[0.3, 0.1, 0.4, 0.2], &[0.25, 0.25, 0.25, 0.25]]);
        let f = c.frequency();
        let mut pairs_ok = [0usize; 2];
        for seed in 0..20u64 {
            let errs: Vec<f64> = [1_000usize, 10_000, 100_000]
                .iter()
                .map(|&n| {
                    let t = simulate_trajectory(&c, n + 1, derive_seed(&[seed, n as u64]));
                    frob_norm(&(empirical_frequency(&t, 4).unwrap().values() - f.values()))
                })
                .collect();
            for k in 0..2 {
                if errs[k + 1] < errs[k] {
                    pairs_ok[k] += 1;
                }
            }
        }
        assert!(pairs_ok.iter().all(|&k| k >= 18), "{pairs_ok:?}");
    }

    #[test]
    fn two_state_chain_frequency_converges() {
        let c = chain(&[&[0.9, 0.1], &[0.2, 0.8]]);
        let t = simulate_trajectory(&c, 100_001, 5);
        let f = empirical_frequency(&t, 2).unwrap();
        assert!(frob_norm(&(f.values() - c.frequency().values())) < 0.01);
    }

    #[test]
    fn noiseless_transfer_pipeline() {
        let spec = MarkovPairSpec::default();
        let pair = build_structured_pair(&spec).unwrap();
        let src = estimate_source(pair.f1.values(), spec.rank, 0).unwrap();
        let cfg = TransferConfig::new(spec.rank_increment, spec.sparse_edits);
        let est = transfer_markov_estimate(&pair.f2, &src, &cfg).unwrap();
        assert!(frob_norm(&(&est.f_hat - pair.f2.values())) < 1e-6);
        for i in 0..8 {
            assert!((est.p_hat.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(est.p_hat.max_abs_diff(pair.target.transition()) < 1e-5);
    }

    #[test]
    fn pure_inheritance() {
        let spec = MarkovPairSpec {
            p1: 4,
            p2: 4,
            rank_increment: 0,
            sparse_edits: 0,
            ..MarkovPairSpec::default()
        };
        let pair = build_structured_pair(&spec).unwrap();
        let src = estimate_source(pair.f1.values(), 2, 0).unwrap();
        let est = transfer_markov_estimate(&pair.f2, &src, &TransferConfig::new(0, 0)).unwrap();
        let u = src.svd.u.matrix();
        let v = src.svd.v.matrix();
        let anchored = u.matmul(&u.t_matmul(pair.f2.values()).matmul(v)).matmul_t(v);
        assert!(est.f_hat.max_abs_diff(&anchored) < 1e-14);
    }
}
