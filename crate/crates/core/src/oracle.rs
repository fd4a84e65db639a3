//! Exact small-instance realization of the annealed samplers: dense
//! Hamiltonians over all k^n assignments, matrix exponentials, the exact
//! classical and quantum state distributions, and the exact marginal of
//! the coupled replica ring.
//!
//! Everything here exists to verify the incremental samplers, never to
//! optimize. Sizes are guarded so every check finishes in minutes.
//!
//! The ring marginal is evaluated two ways: a transfer-matrix product
//! around the ring (exact for any m) and a brute-force sum over all joint
//! replica configurations (feasible only for tiny instances), which serves
//! as the independent cross-check of the transfer route.

use nalgebra::{DMatrix, DVector};

use crate::assignment::{purity, similarity_s, Assignment};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::schedule::coupling;

/// Hard cap on the number of assignment states a dense matrix may span.
pub const MAX_DENSE_STATES: usize = 4096;

/// Hard cap on joint configurations for the brute-force ring sum.
pub const MAX_RING_CONFIGURATIONS: u128 = 10_000_000;

/// Bijection between integers `[0, k^n)` and assignments, ordered so that
/// the first point is the most significant digit: state
/// `t = sum_i label_i * k^(n-1-i)`. For k = n = 2 the state with index 1
/// carries labels `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    n: usize,
    k: usize,
    count: usize,
}

impl StateSpace {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::InvalidParameter(
                "state space needs n >= 1 and k >= 1".into(),
            ));
        }
        let count = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if count > MAX_DENSE_STATES as u128 {
            return Err(Error::StateSpaceTooLarge {
                states: count,
                limit: MAX_DENSE_STATES as u128,
            });
        }
        Ok(Self {
            n,
            k,
            count: count as usize,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels_of(&self, state: usize) -> Vec<usize> {
        debug_assert!(state < self.count);
        let mut labels = vec![0; self.n];
        let mut rest = state;
        for slot in labels.iter_mut().rev() {
            *slot = rest % self.k;
            rest /= self.k;
        }
        labels
    }

    pub fn index_of(&self, labels: &[usize]) -> usize {
        debug_assert_eq!(labels.len(), self.n);
        labels.iter().fold(0, |acc, &c| {
            debug_assert!(c < self.k);
            acc * self.k + c
        })
    }

    pub fn assignment_of(&self, state: usize) -> Assignment {
        Assignment::new(self.labels_of(state), self.k).expect("state labels are valid")
    }

    /// Full energy table in state order, evaluated from scratch.
    pub fn assignment_energies(&self, model: &dyn EnergyModel) -> Result<Vec<f64>> {
        if model.n_points() != self.n || model.n_clusters() != self.k {
            return Err(Error::DimensionMismatch(format!(
                "model over (n={}, k={}) vs state space (n={}, k={})",
                model.n_points(),
                model.n_clusters(),
                self.n,
                self.k
            )));
        }
        Ok((0..self.count)
            .map(|t| model.energy_of(&self.assignment_of(t)))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HamiltonianRole {
    Classical,
    Quantum,
    Total,
}

/// Dense symmetric k^n-by-k^n Hamiltonian.
#[derive(Debug, Clone)]
pub struct DenseHamiltonian {
    pub matrix: DMatrix<f64>,
    pub space: StateSpace,
    pub role: HamiltonianRole,
}

/// Diagonal classical Hamiltonian holding the energy of every assignment.
pub fn classical_hamiltonian(energies: &[f64], space: StateSpace) -> Result<DenseHamiltonian> {
    if energies.len() != space.count() {
        return Err(Error::DimensionMismatch(format!(
            "{} energies for a state space of {}",
            energies.len(),
            space.count()
        )));
    }
    let matrix = DMatrix::from_diagonal(&DVector::from_row_slice(energies));
    Ok(DenseHamiltonian {
        matrix,
        space,
        role: HamiltonianRole::Classical,
    })
}

/// Quantum Hamiltonian: the sum over points of the single-site coupler
/// `gamma * (I_k - ones_k)` embedded by Kronecker products. Off-diagonal
/// entries are `-gamma` exactly where two assignments differ in a single
/// point's label, zero elsewhere.
pub fn quantum_hamiltonian(space: StateSpace, gamma: f64) -> Result<DenseHamiltonian> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }
    let count = space.count();
    let mut matrix = DMatrix::zeros(count, count);
    for t in 0..count {
        let labels = space.labels_of(t);
        for (i, &c) in labels.iter().enumerate() {
            let stride = space.k().pow((space.n() - 1 - i) as u32);
            for c_new in 0..space.k() {
                if c_new == c {
                    continue;
                }
                let u = (t as isize + (c_new as isize - c as isize) * stride as isize) as usize;
                matrix[(t, u)] = -gamma;
            }
        }
    }
    Ok(DenseHamiltonian {
        matrix,
        space,
        role: HamiltonianRole::Quantum,
    })
}

/// Sum of the classical and quantum parts.
pub fn total_hamiltonian(hc: &DenseHamiltonian, hq: &DenseHamiltonian) -> Result<DenseHamiltonian> {
    if hc.space != hq.space {
        return Err(Error::DimensionMismatch(
            "classical and quantum Hamiltonians over different state spaces".into(),
        ));
    }
    Ok(DenseHamiltonian {
        matrix: &hc.matrix + &hq.matrix,
        space: hc.space,
        role: HamiltonianRole::Total,
    })
}

/// `exp(scale * h)` for symmetric `h`, via eigendecomposition.
pub fn matrix_exp(h: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    debug_assert_eq!(h.nrows(), h.ncols());
    let eig = h.clone().symmetric_eigen();
    let exp_vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| (scale * l).exp()),
    );
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&exp_vals);
    let result = scaled * eig.eigenvectors.transpose();
    // Symmetrize away eigensolver round-off.
    (&result + result.transpose()) * 0.5
}

/// Slow reference exponential: scaling-and-squaring with a long Taylor
/// series. Independent of the eigendecomposition route.
pub fn matrix_exp_series(h: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let a = h * scale;
    let norm = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let b = &a / 2f64.powi(squarings as i32);
    let dim = a.nrows();
    let mut term = DMatrix::<f64>::identity(dim, dim);
    let mut sum = term.clone();
    for l in 1..=64 {
        term = (&term * &b) / l as f64;
        sum += &term;
        let term_norm = term.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        if term_norm < 1e-300 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Boltzmann distribution over assignment states: softmax of `-beta * E`.
pub fn boltzmann_distribution(energies: &[f64], beta: f64) -> Vec<f64> {
    let max_logit = energies
        .iter()
        .map(|&e| -beta * e)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = energies
        .iter()
        .map(|&e| (-beta * e - max_logit).exp())
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Exact annealed quantum distribution: the normalized diagonal of
/// `exp(-beta * (Hc + Hq))`.
pub fn quantum_distribution(
    hc: &DenseHamiltonian,
    hq: &DenseHamiltonian,
    beta: f64,
) -> Result<Vec<f64>> {
    let total = total_hamiltonian(hc, hq)?;
    let exp = matrix_exp(&total.matrix, -beta);
    let diag: Vec<f64> = (0..exp.nrows()).map(|t| exp[(t, t)]).collect();
    let z: f64 = diag.iter().sum();
    Ok(diag.into_iter().map(|v| v / z).collect())
}

/// Which per-point similarity weighs the ring interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    /// Fraction of points with identical labels.
    Overlap,
    /// Label-permutation-invariant purity (directed, first argument first).
    Purity,
}

fn similarity_value(sim: Similarity, a: &Assignment, b: &Assignment) -> f64 {
    match sim {
        Similarity::Overlap => similarity_s(a, b).expect("states share n and k"),
        Similarity::Purity => purity(a, b).expect("states share n and k"),
    }
}

/// Log-weights of the ring factors: `L[t][u] = -(beta/m) E_t + f * sim(t, u)`.
fn ring_log_kernel(
    energies: &[f64],
    space: StateSpace,
    beta: f64,
    f_value: f64,
    m: usize,
    sim: Similarity,
) -> DMatrix<f64> {
    let count = space.count();
    let assignments: Vec<Assignment> = (0..count).map(|t| space.assignment_of(t)).collect();
    let beta_over_m = beta / m as f64;
    DMatrix::from_fn(count, count, |t, u| {
        -beta_over_m * energies[t]
            + f_value * similarity_value(sim, &assignments[t], &assignments[u])
    })
}

/// Exact marginal distribution of the first replica in the coupled ring of
/// `m` replicas: the joint weight is the product around the ring of
/// `exp(-(beta/m) E(state_j) + f(beta, gamma) * sim(state_j, state_{j+1}))`
/// and every other replica is summed out. Evaluated as a transfer-matrix
/// power in max-subtracted log space, which performs that sum exactly.
pub fn ring_marginal(
    energies: &[f64],
    space: StateSpace,
    beta: f64,
    gamma: f64,
    m: usize,
    sim: Similarity,
) -> Result<Vec<f64>> {
    if energies.len() != space.count() {
        return Err(Error::DimensionMismatch(format!(
            "{} energies for a state space of {}",
            energies.len(),
            space.count()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("ring needs m >= 1".into()));
    }
    let f_value = coupling(beta, gamma, space.n(), space.k(), m);
    if !f_value.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ring marginal needs a finite coupling, got {f_value} (gamma = {gamma})"
        )));
    }
    let logits = ring_log_kernel(energies, space, beta, f_value, m, sim);
    let max_logit = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kernel = logits.map(|v| (v - max_logit).exp());

    // kernel^m with per-step renormalization; the scale cancels below.
    let mut power = kernel.clone();
    for _ in 1..m {
        power *= &kernel;
        let peak = power.iter().copied().fold(0.0f64, f64::max);
        power /= peak;
    }
    let diag: Vec<f64> = (0..space.count()).map(|t| power[(t, t)]).collect();
    let z: f64 = diag.iter().sum();
    Ok(diag.into_iter().map(|v| v / z).collect())
}

/// Brute-force evaluation of the same marginal by enumerating every joint
/// replica configuration. Guarded to [`MAX_RING_CONFIGURATIONS`]; exists
/// as the independent cross-check of [`ring_marginal`].
pub fn ring_marginal_bruteforce(
    energies: &[f64],
    space: StateSpace,
    beta: f64,
    gamma: f64,
    m: usize,
    sim: Similarity,
) -> Result<Vec<f64>> {
    if energies.len() != space.count() {
        return Err(Error::DimensionMismatch(format!(
            "{} energies for a state space of {}",
            energies.len(),
            space.count()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("ring needs m >= 1".into()));
    }
    let count = space.count();
    let configs = (count as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if configs > MAX_RING_CONFIGURATIONS {
        return Err(Error::StateSpaceTooLarge {
            states: configs,
            limit: MAX_RING_CONFIGURATIONS,
        });
    }
    let f_value = coupling(beta, gamma, space.n(), space.k(), m);
    if !f_value.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ring marginal needs a finite coupling, got {f_value} (gamma = {gamma})"
        )));
    }
    let logits = ring_log_kernel(energies, space, beta, f_value, m, sim);

    // Joint log-weight of one configuration (ring-closed).
    let joint_logw = |config: &[usize]| -> f64 {
        (0..m)
            .map(|j| logits[(config[j], config[(j + 1) % m])])
            .sum()
    };

    // Two passes over sigma_2..sigma_m per first-replica state: find the
    // global maximum log-weight, then accumulate shifted exponentials.
    let tail = m - 1;
    let tail_configs = (count as u64).pow(tail as u32);
    let decode = |mut idx: u64, out: &mut Vec<usize>| {
        out.clear();
        for _ in 0..tail {
            out.push((idx % count as u64) as usize);
            idx /= count as u64;
        }
    };

    let per_first = |t: usize| -> (f64, f64) {
        let mut config = vec![0usize; m];
        let mut tail_buf = Vec::with_capacity(tail);
        let mut max_logw = f64::NEG_INFINITY;
        for idx in 0..tail_configs {
            decode(idx, &mut tail_buf);
            config[0] = t;
            config[1..].copy_from_slice(&tail_buf);
            max_logw = max_logw.max(joint_logw(&config));
        }
        let mut acc = 0.0;
        for idx in 0..tail_configs {
            decode(idx, &mut tail_buf);
            config[0] = t;
            config[1..].copy_from_slice(&tail_buf);
            acc += (joint_logw(&config) - max_logw).exp();
        }
        (max_logw, acc)
    };

    // Partitioned by the first replica's state; each partition is
    // independent.
    #[cfg(feature = "parallel")]
    let partials: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(per_first).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<(f64, f64)> = (0..count).map(per_first).collect();

    let global_max = partials
        .iter()
        .map(|&(mx, _)| mx)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = partials
        .iter()
        .map(|&(mx, acc)| acc * (mx - global_max).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / z).collect())
}

/// Max absolute deviation of `exp(-(beta/m) Hc)` from the diagonal matrix
/// of per-state Boltzmann factors it must equal.
pub fn diagonal_exp_deviation(
    energies: &[f64],
    space: StateSpace,
    beta: f64,
    m: usize,
) -> Result<f64> {
    let hc = classical_hamiltonian(energies, space)?;
    let exp = matrix_exp(&hc.matrix, -beta / m as f64);
    let mut dev = 0.0f64;
    for t in 0..space.count() {
        for u in 0..space.count() {
            let expected = if t == u {
                (-beta / m as f64 * energies[t]).exp()
            } else {
                0.0
            };
            dev = dev.max((exp[(t, u)] - expected).abs());
        }
    }
    Ok(dev)
}

/// Deviations of the three identities tying the quantum factor to the
/// per-site closed form and to the coupling.
#[derive(Debug, Clone, Copy)]
pub struct SiteFactorization {
    /// `exp(-(beta/m) Hq)` vs the n-fold Kronecker power of the single-site
    /// exponential.
    pub kron: f64,
    /// Single-site exponential vs its closed form
    /// `e^{ -x} delta + (1/k)(e^{(k-1)x} - e^{-x})`, with `x = beta gamma / m`.
    pub closed_form: f64,
    /// `exp(f(beta, gamma) / n)` vs the single-site diagonal/off-diagonal
    /// ratio.
    pub coupling_ratio: f64,
}

impl SiteFactorization {
    pub fn max_deviation(&self) -> f64 {
        self.kron.max(self.closed_form).max(self.coupling_ratio)
    }
}

/// Single-site coupler closed-form exponential.
fn single_site_closed_form(k: usize, x: f64) -> DMatrix<f64> {
    let off = ((k as f64 - 1.0) * x).exp() - (-x).exp();
    DMatrix::from_fn(k, k, |a, b| {
        let base = off / k as f64;
        if a == b {
            (-x).exp() + base
        } else {
            base
        }
    })
}

/// Verify the per-site factorization of the quantum factor.
pub fn site_factorization_deviation(
    space: StateSpace,
    beta: f64,
    gamma: f64,
    m: usize,
) -> Result<SiteFactorization> {
    let k = space.k();
    let x = beta * gamma / m as f64;

    // Single site: rho = gamma * (I - ones).
    let rho = DMatrix::from_fn(k, k, |a, b| if a == b { 0.0 } else { -gamma });
    let site_exp = matrix_exp(&rho, -beta / m as f64);
    let closed = single_site_closed_form(k, x);
    let closed_form_dev = (&site_exp - &closed)
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max);

    // Full factor vs Kronecker power of the closed form.
    let hq = quantum_hamiltonian(space, gamma)?;
    let full = matrix_exp(&hq.matrix, -beta / m as f64);
    let mut kron_power = DMatrix::<f64>::identity(1, 1);
    for _ in 0..space.n() {
        kron_power = kron_power.kronecker(&closed);
    }
    let kron_dev = (&full - &kron_power)
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max);

    // Coupling identity: exp(f/n) equals diag/offdiag of the site factor.
    let coupling_ratio = if k >= 2 {
        let ratio = site_exp[(0, 0)] / site_exp[(0, 1)];
        let n = space.n();
        let f = coupling(beta, gamma, n, k, m);
        ((f / n as f64).exp() - ratio).abs()
    } else {
        0.0
    };

    Ok(SiteFactorization {
        kron: kron_dev,
        closed_form: closed_form_dev,
        coupling_ratio,
    })
}

/// Total variation distance between two distributions.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Total-variation distances of the ring marginal (overlap similarity)
/// from the exact quantum distribution, for each replica count in `ms`.
pub fn trotter_convergence(
    energies: &[f64],
    space: StateSpace,
    beta: f64,
    gamma: f64,
    ms: &[usize],
) -> Result<Vec<f64>> {
    let hc = classical_hamiltonian(energies, space)?;
    let hq = quantum_hamiltonian(space, gamma)?;
    let exact = quantum_distribution(&hc, &hq, beta)?;
    ms.iter()
        .map(|&m| {
            let approx = ring_marginal(energies, space, beta, gamma, m, Similarity::Overlap)?;
            Ok(tv_distance(&approx, &exact))
        })
        .collect()
}
