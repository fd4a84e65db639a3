//! Energy models over cluster assignments, with incremental per-point
//! conditional energies for Gibbs sweeps.
//!
//! Two concrete models:
//!   * a collapsed mixture of Gaussians with a normal-inverse-Wishart
//!     prior on each component and a symmetric Dirichlet prior on the
//!     mixing weights, all integrated out so the energy is
//!     `-log p(data, assignment)`;
//!   * a squared-loss model, the total within-cluster sum of squared
//!     distances to the cluster mean.
//!
//! Both keep per-cluster sufficient statistics (count, sum, outer-product
//! sum) so that the k conditional energies of one point cost O(k) model
//! evaluations instead of anything n-dependent.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::assignment::Assignment;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Energy over assignments with incremental single-point updates.
///
/// `bind` synchronizes the cached statistics with an assignment; after
/// that, `candidate_energies` and `relabel_point` keep them in step.
pub trait EnergyModel: Send {
    fn n_points(&self) -> usize;

    fn n_clusters(&self) -> usize;

    /// Full energy of an arbitrary assignment, computed from scratch.
    fn energy_of(&self, a: &Assignment) -> f64;

    /// Rebuild the cached statistics to match `a`.
    fn bind(&mut self, a: &Assignment);

    /// Full energy of the bound assignment, from the cached statistics.
    fn energy_full(&self, a: &Assignment) -> f64;

    /// `out[c]` is the full energy of `a` with point `i` relabeled to `c`.
    /// All entries share the zero additive constant: the entry at the
    /// current label equals `energy_full(a)` up to round-off.
    fn candidate_energies(&self, a: &Assignment, i: usize, out: &mut Vec<f64>);

    /// Move point `i` to cluster `c`, updating both the labels and the
    /// cached statistics.
    fn relabel_point(&mut self, a: &mut Assignment, i: usize, c: usize);
}

/// Per-cluster sufficient statistics: count, sum vector, and sum of outer
/// products.
#[derive(Debug, Clone)]
pub struct ClusterStats {
    counts: Vec<usize>,
    sums: Vec<DVector<f64>>,
    outers: Vec<DMatrix<f64>>,
}

impl ClusterStats {
    fn empty(k: usize, d: usize) -> Self {
        Self {
            counts: vec![0; k],
            sums: vec![DVector::zeros(d); k],
            outers: vec![DMatrix::zeros(d, d); k],
        }
    }

    fn rebuild(data: &Dataset, a: &Assignment, k: usize) -> Self {
        let mut stats = Self::empty(k, data.d());
        for (i, row) in data.rows().enumerate() {
            stats.add(a.label(i), row);
        }
        stats
    }

    fn add(&mut self, c: usize, x: &[f64]) {
        self.counts[c] += 1;
        let d = x.len();
        for (a, &v) in self.sums[c].iter_mut().zip(x) {
            *a += v;
        }
        let outer = &mut self.outers[c];
        for p in 0..d {
            for q in 0..d {
                outer[(p, q)] += x[p] * x[q];
            }
        }
    }

    fn remove(&mut self, c: usize, x: &[f64]) {
        debug_assert!(self.counts[c] > 0, "removing a point from an empty cluster");
        self.counts[c] -= 1;
        let d = x.len();
        for (a, &v) in self.sums[c].iter_mut().zip(x) {
            *a -= v;
        }
        let outer = &mut self.outers[c];
        for p in 0..d {
            for q in 0..d {
                outer[(p, q)] -= x[p] * x[q];
            }
        }
    }

    pub fn count(&self, c: usize) -> usize {
        self.counts[c]
    }

    pub fn sum(&self, c: usize) -> &DVector<f64> {
        &self.sums[c]
    }

    pub fn outer(&self, c: usize) -> &DMatrix<f64> {
        &self.outers[c]
    }

    /// Totals across clusters; conserved by any relabel sequence.
    pub fn totals(&self) -> (usize, DVector<f64>, DMatrix<f64>) {
        let d = self.sums[0].len();
        let mut sum = DVector::zeros(d);
        let mut outer = DMatrix::zeros(d, d);
        for s in &self.sums {
            sum += s;
        }
        for o in &self.outers {
            outer += o;
        }
        (self.counts.iter().sum(), sum, outer)
    }

    fn counts_match(&self, a: &Assignment) -> bool {
        let mut counts = vec![0usize; self.counts.len()];
        for &c in a.labels() {
            counts[c] += 1;
        }
        counts == self.counts
    }
}

/// Normal-inverse-Wishart prior for one Gaussian component, plus the
/// symmetric Dirichlet concentration for the mixing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MogNiwPrior {
    pub mu0: DVector<f64>,
    pub kappa0: f64,
    pub nu0: f64,
    pub lambda0: DMatrix<f64>,
    pub alpha: f64,
}

impl MogNiwPrior {
    pub fn validate(&self) -> Result<()> {
        let d = self.mu0.len();
        let mut problems = Vec::new();
        if self.lambda0.nrows() != d || self.lambda0.ncols() != d {
            problems.push(format!(
                "lambda0 is {}x{}, expected {d}x{d}",
                self.lambda0.nrows(),
                self.lambda0.ncols()
            ));
        }
        if !(self.kappa0 > 0.0) {
            problems.push(format!("kappa0 must be positive, got {}", self.kappa0));
        }
        if !(self.nu0 > d as f64 - 1.0) {
            problems.push(format!(
                "nu0 must exceed d - 1 = {}, got {}",
                d - 1,
                self.nu0
            ));
        }
        if !(self.alpha > 0.0) {
            problems.push(format!("alpha must be positive, got {}", self.alpha));
        }
        if (&self.lambda0 - self.lambda0.transpose()).amax() > 1e-12 {
            problems.push("lambda0 must be symmetric".into());
        } else if Cholesky::new(self.lambda0.clone()).is_none() {
            problems.push("lambda0 must be positive-definite".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    /// Weakly informative default: `mu0` at the data mean, `kappa0 = 0.1`,
    /// `nu0 = d + 2`, `lambda0` the diagonal of the data covariance,
    /// `alpha = 1`.
    pub fn weakly_informative(data: &Dataset) -> Self {
        let d = data.d();
        Self {
            mu0: DVector::from_vec(data.mean()),
            kappa0: 0.1,
            nu0: d as f64 + 2.0,
            lambda0: DMatrix::from_diagonal(&DVector::from_vec(data.variance_diagonal())),
            alpha: 1.0,
        }
    }
}

/// Multivariate log-gamma.
fn ln_multigamma(d: usize, a: f64) -> f64 {
    let mut acc = (d * (d - 1)) as f64 / 4.0 * PI.ln();
    for j in 1..=d {
        acc += libm::lgamma(a + (1.0 - j as f64) / 2.0);
    }
    acc
}

fn spd_log_det(m: &DMatrix<f64>) -> f64 {
    let chol = Cholesky::new(m.clone())
        .or_else(|| {
            // Round-off can nudge a boundary matrix indefinite; nudge it back.
            let d = m.nrows();
            let jitter = 1e-12 * m.trace().abs().max(1.0) / d as f64;
            Cholesky::new(m + DMatrix::<f64>::identity(d, d) * jitter)
        })
        .expect("posterior scale matrix must be positive-definite");
    2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Collapsed mixture of Gaussians under a normal-inverse-Wishart prior.
pub struct MogNiwModel {
    data: Arc<Dataset>,
    k: usize,
    prior: MogNiwPrior,
    stats: ClusterStats,
    /// Cached per-cluster log marginal likelihoods.
    log_marg: Vec<f64>,
    /// Prior constants reused by every marginal evaluation.
    lambda0_log_det: f64,
    ln_multigamma_nu0: f64,
    prior_mu_outer: DMatrix<f64>,
}

impl MogNiwModel {
    pub fn new(data: Arc<Dataset>, k: usize, prior: MogNiwPrior) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("model needs k >= 1".into()));
        }
        if prior.mu0.len() != data.d() {
            return Err(Error::DimensionMismatch(format!(
                "prior location has {} dimensions, data has {}",
                prior.mu0.len(),
                data.d()
            )));
        }
        prior.validate()?;
        let d = data.d();
        let lambda0_log_det = spd_log_det(&prior.lambda0);
        let ln_multigamma_nu0 = ln_multigamma(d, prior.nu0 / 2.0);
        let prior_mu_outer = &prior.mu0 * prior.mu0.transpose() * prior.kappa0;
        Ok(Self {
            stats: ClusterStats::empty(k, d),
            log_marg: vec![0.0; k],
            data,
            k,
            prior,
            lambda0_log_det,
            ln_multigamma_nu0,
            prior_mu_outer,
        })
    }

    pub fn prior(&self) -> &MogNiwPrior {
        &self.prior
    }

    pub fn stats(&self) -> &ClusterStats {
        &self.stats
    }

    /// Log marginal likelihood of a cluster from its sufficient statistics,
    /// the standard collapsed conjugate form. Zero for an empty cluster.
    fn log_marginal(&self, count: usize, sum: &DVector<f64>, outer: &DMatrix<f64>) -> f64 {
        if count == 0 {
            return 0.0;
        }
        let d = self.data.d() as f64;
        let nc = count as f64;
        let kappa_n = self.prior.kappa0 + nc;
        let nu_n = self.prior.nu0 + nc;
        let mu_n = (&self.prior.mu0 * self.prior.kappa0 + sum) / kappa_n;
        let lambda_n = &self.prior.lambda0 + outer + &self.prior_mu_outer
            - (&mu_n * mu_n.transpose()) * kappa_n;
        ln_multigamma(self.data.d(), nu_n / 2.0) - self.ln_multigamma_nu0
            + (d / 2.0) * (self.prior.kappa0 / kappa_n).ln()
            + (self.prior.nu0 / 2.0) * self.lambda0_log_det
            - (nu_n / 2.0) * spd_log_det(&lambda_n)
            - nc * d / 2.0 * PI.ln()
    }

    fn log_marginal_of_cluster(&self, c: usize) -> f64 {
        self.log_marginal(self.stats.count(c), self.stats.sum(c), self.stats.outer(c))
    }

    /// Log Dirichlet-multinomial weight of the cluster sizes: the mixing
    /// weights are collapsed under a symmetric Dirichlet(alpha) prior.
    fn log_size_weight(&self, counts: &[usize]) -> f64 {
        let alpha = self.prior.alpha;
        let n: usize = counts.iter().sum();
        let k = self.k as f64;
        let mut acc =
            libm::lgamma(k * alpha) - libm::lgamma(n as f64 + k * alpha) - k * libm::lgamma(alpha);
        for &c in counts {
            acc += libm::lgamma(c as f64 + alpha);
        }
        acc
    }

    fn energy_from_parts(&self, counts: &[usize], log_margs: &[f64]) -> f64 {
        -(self.log_size_weight(counts) + log_margs.iter().sum::<f64>())
    }
}

impl EnergyModel for MogNiwModel {
    fn n_points(&self) -> usize {
        self.data.n()
    }

    fn n_clusters(&self) -> usize {
        self.k
    }

    fn energy_of(&self, a: &Assignment) -> f64 {
        let stats = ClusterStats::rebuild(&self.data, a, self.k);
        let log_margs: Vec<f64> = (0..self.k)
            .map(|c| self.log_marginal(stats.count(c), stats.sum(c), stats.outer(c)))
            .collect();
        self.energy_from_parts(&stats.counts, &log_margs)
    }

    fn bind(&mut self, a: &Assignment) {
        self.stats = ClusterStats::rebuild(&self.data, a, self.k);
        self.log_marg = (0..self.k)
            .map(|c| self.log_marginal_of_cluster(c))
            .collect();
    }

    fn energy_full(&self, a: &Assignment) -> f64 {
        debug_assert!(self.stats.counts_match(a), "stats out of sync with labels");
        let _ = a;
        self.energy_from_parts(&self.stats.counts, &self.log_marg)
    }

    fn candidate_energies(&self, a: &Assignment, i: usize, out: &mut Vec<f64>) {
        debug_assert!(self.stats.counts_match(a), "stats out of sync with labels");
        let c0 = a.label(i);
        let x = self.data.row(i);
        let xv = DVector::from_row_slice(x);
        let x_outer = &xv * xv.transpose();

        // Statistics of the home cluster with the point removed.
        let count_rm = self.stats.count(c0) - 1;
        let sum_rm = self.stats.sum(c0) - &xv;
        let outer_rm = self.stats.outer(c0) - &x_outer;
        let log_marg_rm = self.log_marginal(count_rm, &sum_rm, &outer_rm);

        // Sum of per-cluster marginals with the point held out.
        let log_marg_sum_rm: f64 =
            self.log_marg.iter().sum::<f64>() - self.log_marg[c0] + log_marg_rm;

        // Size weight with the point held out, shared by every candidate up
        // to the log(count + alpha) factor of the receiving cluster.
        let alpha = self.prior.alpha;
        let n = self.data.n() as f64;
        let k = self.k as f64;
        let mut size_base =
            libm::lgamma(k * alpha) - libm::lgamma(n + k * alpha) - k * libm::lgamma(alpha);
        for c in 0..self.k {
            let held_out = self.stats.count(c) - usize::from(c == c0);
            size_base += libm::lgamma(held_out as f64 + alpha);
        }

        out.clear();
        for c in 0..self.k {
            let (count_c, log_marg_c, sum_c, outer_c) = if c == c0 {
                (count_rm, log_marg_rm, &sum_rm, &outer_rm)
            } else {
                (
                    self.stats.count(c),
                    self.log_marg[c],
                    self.stats.sum(c),
                    self.stats.outer(c),
                )
            };
            let log_pred =
                self.log_marginal(count_c + 1, &(sum_c + &xv), &(outer_c + &x_outer)) - log_marg_c;
            let log_size = size_base + (count_c as f64 + alpha).ln();
            out.push(-(log_size + log_marg_sum_rm + log_pred));
        }
    }

    fn relabel_point(&mut self, a: &mut Assignment, i: usize, c: usize) {
        let c0 = a.label(i);
        if c0 == c {
            return;
        }
        let x = self.data.row(i).to_vec();
        self.stats.remove(c0, &x);
        self.stats.add(c, &x);
        a.set_label(i, c);
        self.log_marg[c0] = self.log_marginal_of_cluster(c0);
        self.log_marg[c] = self.log_marginal_of_cluster(c);
    }
}

/// Within-cluster sum of squared distances to the cluster mean. Empty
/// clusters contribute zero.
pub struct SqLossModel {
    data: Arc<Dataset>,
    k: usize,
    stats: ClusterStats,
}

impl SqLossModel {
    pub fn new(data: Arc<Dataset>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("model needs k >= 1".into()));
        }
        let d = data.d();
        Ok(Self {
            stats: ClusterStats::empty(k, d),
            data,
            k,
        })
    }

    pub fn stats(&self) -> &ClusterStats {
        &self.stats
    }

    /// `sum ||x||^2 - ||sum x||^2 / count` for one cluster.
    fn cluster_loss(count: usize, sum: &DVector<f64>, sq_norm_sum: f64) -> f64 {
        if count == 0 {
            return 0.0;
        }
        sq_norm_sum - sum.dot(sum) / count as f64
    }

    fn loss_from_stats(&self, stats: &ClusterStats) -> f64 {
        (0..self.k)
            .map(|c| Self::cluster_loss(stats.count(c), stats.sum(c), stats.outer(c).trace()))
            .sum()
    }
}

impl EnergyModel for SqLossModel {
    fn n_points(&self) -> usize {
        self.data.n()
    }

    fn n_clusters(&self) -> usize {
        self.k
    }

    fn energy_of(&self, a: &Assignment) -> f64 {
        self.loss_from_stats(&ClusterStats::rebuild(&self.data, a, self.k))
    }

    fn bind(&mut self, a: &Assignment) {
        self.stats = ClusterStats::rebuild(&self.data, a, self.k);
    }

    fn energy_full(&self, a: &Assignment) -> f64 {
        debug_assert!(self.stats.counts_match(a), "stats out of sync with labels");
        let _ = a;
        self.loss_from_stats(&self.stats)
    }

    fn candidate_energies(&self, a: &Assignment, i: usize, out: &mut Vec<f64>) {
        debug_assert!(self.stats.counts_match(a), "stats out of sync with labels");
        let c0 = a.label(i);
        let x = self.data.row(i);
        let xv = DVector::from_row_slice(x);
        let x_sq = xv.dot(&xv);

        let count_rm = self.stats.count(c0) - 1;
        let sum_rm = self.stats.sum(c0) - &xv;
        let sq_rm = self.stats.outer(c0).trace() - x_sq;
        let loss_rm = Self::cluster_loss(count_rm, &sum_rm, sq_rm);

        let total: f64 = self.loss_from_stats(&self.stats);
        let loss_c0 = Self::cluster_loss(
            self.stats.count(c0),
            self.stats.sum(c0),
            self.stats.outer(c0).trace(),
        );
        let base = total - loss_c0 + loss_rm;

        out.clear();
        for c in 0..self.k {
            let (count_c, sum_c, sq_c, loss_c) = if c == c0 {
                (count_rm, sum_rm.clone(), sq_rm, loss_rm)
            } else {
                let sq = self.stats.outer(c).trace();
                let loss = Self::cluster_loss(self.stats.count(c), self.stats.sum(c), sq);
                (self.stats.count(c), self.stats.sum(c).clone(), sq, loss)
            };
            let gained = Self::cluster_loss(count_c + 1, &(sum_c + &xv), sq_c + x_sq);
            out.push(base - loss_c + gained);
        }
    }

    fn relabel_point(&mut self, a: &mut Assignment, i: usize, c: usize) {
        let c0 = a.label(i);
        if c0 == c {
            return;
        }
        let x = self.data.row(i).to_vec();
        self.stats.remove(c0, &x);
        self.stats.add(c, &x);
        a.set_label(i, c);
    }
}

/// Which energy model a run uses.
#[derive(Debug, Clone)]
pub enum ModelKind {
    MogNiw(MogNiwPrior),
    SqLoss,
}

impl ModelKind {
    pub fn build(&self, data: Arc<Dataset>, k: usize) -> Result<Box<dyn EnergyModel>> {
        Ok(match self {
            ModelKind::MogNiw(prior) => Box::new(MogNiwModel::new(data, k, prior.clone())?),
            ModelKind::SqLoss => Box::new(SqLossModel::new(data, k)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data_1d(values: &[f64]) -> Arc<Dataset> {
        Arc::new(Dataset::from_rows(values.iter().map(|&v| vec![v]).collect()).unwrap())
    }

    fn random_dataset(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Arc<Dataset> {
        Arc::new(
            Dataset::from_rows(
                (0..n)
                    .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                    .collect(),
            )
            .unwrap(),
        )
    }

    fn bound_model(kind: &ModelKind, data: Arc<Dataset>, a: &Assignment) -> Box<dyn EnergyModel> {
        let mut model = kind.build(data, a.k()).unwrap();
        model.bind(a);
        model
    }

    #[test]
    fn sq_loss_hand_values() {
        let data = data_1d(&[0.0, 1.0, 10.0]);
        let model = SqLossModel::new(data.clone(), 2).unwrap();
        let a = Assignment::new(vec![0, 0, 1], 2).unwrap();
        assert!((model.energy_of(&a) - 0.5).abs() < 1e-12);

        // Every point a singleton: zero loss.
        let singletons = Assignment::new(vec![0, 1, 2], 3).unwrap();
        let model3 = SqLossModel::new(data, 3).unwrap();
        assert_eq!(model3.energy_of(&singletons), 0.0);
    }

    #[test]
    fn candidate_energies_match_from_scratch() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let data = random_dataset(12, 2, &mut rng);
        for kind in [
            ModelKind::SqLoss,
            ModelKind::MogNiw(MogNiwPrior::weakly_informative(&data)),
        ] {
            let a = Assignment::random(12, 3, &mut rng);
            let model = bound_model(&kind, data.clone(), &a);
            let mut out = Vec::new();
            for i in 0..12 {
                model.candidate_energies(&a, i, &mut out);
                for c in 0..3 {
                    let mut moved = a.clone();
                    moved.set_label(i, c);
                    let expected = model.energy_of(&moved);
                    assert!(
                        (out[c] - expected).abs() < 1e-9,
                        "i={i} c={c}: {} vs {expected}",
                        out[c]
                    );
                }
                // Entry at the current label is the bound energy itself.
                assert!((out[a.label(i)] - model.energy_full(&a)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn relabel_round_trip_matches_rebuild() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = random_dataset(15, 3, &mut rng);
        let kind = ModelKind::MogNiw(MogNiwPrior::weakly_informative(&data));
        let mut a = Assignment::random(15, 4, &mut rng);
        let mut model = kind.build(data.clone(), 4).unwrap();
        model.bind(&a);

        for _ in 0..120 {
            let i = rng.random_range(0..15);
            let c = rng.random_range(0..4);
            model.relabel_point(&mut a, i, c);
        }
        let incremental = model.energy_full(&a);
        let fresh = model.energy_of(&a);
        assert!((incremental - fresh).abs() < 1e-9);

        // Relabel to the current label is a no-op.
        let before = model.energy_full(&a);
        let l = a.label(3);
        model.relabel_point(&mut a, 3, l);
        assert_eq!(model.energy_full(&a), before);
    }

    #[test]
    fn stats_totals_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let data = random_dataset(20, 2, &mut rng);
        let mut a = Assignment::random(20, 3, &mut rng);
        let mut model = SqLossModel::new(data.clone(), 3).unwrap();
        model.bind(&a);
        let (count0, sum0, outer0) = model.stats().totals();
        for _ in 0..200 {
            let i = rng.random_range(0..20);
            let c = rng.random_range(0..3);
            model.relabel_point(&mut a, i, c);
        }
        let (count1, sum1, outer1) = model.stats().totals();
        assert_eq!(count0, count1);
        assert!((sum0 - sum1).amax() < 1e-10);
        assert!((outer0 - outer1).amax() < 1e-9);
    }

    #[test]
    fn mog_energy_invariant_under_label_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_dataset(10, 2, &mut rng);
        let kind = ModelKind::MogNiw(MogNiwPrior::weakly_informative(&data));
        let model = kind.build(data, 3).unwrap();
        let a = Assignment::random(10, 3, &mut rng);
        let perm = [2usize, 0, 1];
        let permuted = Assignment::new(a.labels().iter().map(|&c| perm[c]).collect(), 3).unwrap();
        assert!((model.energy_of(&a) - model.energy_of(&permuted)).abs() < 1e-9);
    }

    #[test]
    fn loss_point_equidistant_between_identical_clusters() {
        // Two clusters with identical members; the middle point sees equal
        // candidate energies.
        let data = data_1d(&[-1.0, 1.0, -1.0, 1.0, 0.0]);
        let a = Assignment::new(vec![0, 0, 1, 1, 0], 2).unwrap();
        let model = bound_model(&ModelKind::SqLoss, data, &a);
        let mut out = Vec::new();
        model.candidate_energies(&a, 4, &mut out);
        assert!((out[0] - out[1]).abs() < 1e-12);
    }

    #[test]
    fn loss_nonincreasing_on_nearest_mean_move() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let data = random_dataset(12, 2, &mut rng);
            let mut a = Assignment::random(12, 3, &mut rng);
            let mut model = SqLossModel::new(data.clone(), 3).unwrap();
            model.bind(&a);
            let i = rng.random_range(0..12);
            let x = DVector::from_row_slice(data.row(i));
            // Nearest cluster by current means, own cluster included.
            let nearest = (0..3)
                .filter(|&c| model.stats().count(c) > 0)
                .min_by(|&p, &q| {
                    let dist = |c: usize| {
                        let mean = model.stats().sum(c) / model.stats().count(c) as f64;
                        (&x - mean).norm_squared()
                    };
                    dist(p).partial_cmp(&dist(q)).unwrap()
                })
                .unwrap();
            let before = model.energy_full(&a);
            model.relabel_point(&mut a, i, nearest);
            let after = model.energy_full(&a);
            assert!(after <= before + 1e-9, "loss rose from {before} to {after}");
        }
    }

    #[test]
    fn gibbs_conditionals_form_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let data = random_dataset(8, 2, &mut rng);
        let kind = ModelKind::MogNiw(MogNiwPrior::weakly_informative(&data));
        let a = Assignment::random(8, 3, &mut rng);
        let model = bound_model(&kind, data, &a);
        let mut out = Vec::new();
        for beta in [0.0, 0.5, 4.0] {
            model.candidate_energies(&a, 2, &mut out);
            let max_logit = out
                .iter()
                .map(|&e| -beta * e)
                .fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = out.iter().map(|&e| (-beta * e - max_logit).exp()).collect();
            let z: f64 = weights.iter().sum();
            let total: f64 = weights.iter().map(|w| w / z).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(weights.iter().all(|&w| w >= 0.0));
        }
    }

    /// Quadrature reference for the 1-D collapsed marginal: integrate the
    /// Gaussian likelihood against the normal-inverse-Wishart density on a
    /// fine (mean, variance) grid.
    fn quadrature_log_marginal(points: &[f64], prior: &MogNiwPrior) -> f64 {
        let mu0 = prior.mu0[0];
        let kappa0 = prior.kappa0;
        let nu0 = prior.nu0;
        let lambda0 = prior.lambda0[(0, 0)];

        // 1-D inverse Wishart(nu0, lambda0) is inverse-gamma(nu0/2, lambda0/2).
        let ig_shape = nu0 / 2.0;
        let ig_scale = lambda0 / 2.0;
        let log_ig_norm = ig_shape * ig_scale.ln() - libm::lgamma(ig_shape);

        let mu_lo = mu0 - 12.0;
        let mu_hi = mu0 + 12.0;
        let n_mu = 4000;
        let var_lo_log = -7.0f64;
        let var_hi_log = 5.0f64;
        let n_var = 4000;

        let d_mu = (mu_hi - mu_lo) / n_mu as f64;
        let d_log_var = (var_hi_log - var_lo_log) / n_var as f64;

        let mut total = 0.0;
        for vi in 0..n_var {
            let log_var = var_lo_log + (vi as f64 + 0.5) * d_log_var;
            let var = log_var.exp();
            // Inverse-gamma density in variance, times the Jacobian of the
            // log-variance substitution.
            let log_ig = log_ig_norm - (ig_shape + 1.0) * var.ln() - ig_scale / var + log_var;
            for mi in 0..n_mu {
                let mu = mu_lo + (mi as f64 + 0.5) * d_mu;
                let log_mu_prior = -0.5 * ((2.0 * PI * var / kappa0).ln())
                    - kappa0 * (mu - mu0) * (mu - mu0) / (2.0 * var);
                let log_lik: f64 = points
                    .iter()
                    .map(|&x| -0.5 * (2.0 * PI * var).ln() - (x - mu) * (x - mu) / (2.0 * var))
                    .sum();
                total += (log_ig + log_mu_prior + log_lik).exp();
            }
        }
        (total * d_mu * d_log_var).ln()
    }

    #[test]
    fn mog_marginal_matches_quadrature() {
        let data = data_1d(&[0.5, -0.2]);
        let prior = MogNiwPrior {
            mu0: DVector::from_vec(vec![0.3]),
            kappa0: 0.1,
            nu0: 3.0,
            lambda0: DMatrix::from_vec(1, 1, vec![1.0]),
            alpha: 1.0,
        };
        let model = MogNiwModel::new(data, 1, prior.clone()).unwrap();
        let a = Assignment::new(vec![0, 0], 1).unwrap();
        let stats = ClusterStats::rebuild(&model.data, &a, 1);
        let closed = model.log_marginal(stats.count(0), stats.sum(0), stats.outer(0));
        let numeric = quadrature_log_marginal(&[0.5, -0.2], &prior);
        assert!(
            (closed - numeric).abs() < 1e-4,
            "closed {closed} vs quadrature {numeric}"
        );
    }
}
