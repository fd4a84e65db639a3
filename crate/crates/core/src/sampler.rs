//! The two annealed Gibbs samplers: a single simulated-annealing chain and
//! the coupled replica ring, where each point draw weighs the energy term
//! `-(beta/m) E` against the coupling times the two directed neighbor
//! purities, both evaluated with the point set to the candidate label.
//!
//! Runs are deterministic: one root seed is split into one ChaCha stream
//! per replica, so the draw sequence of a replica does not depend on how
//! the others are scheduled.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assignment::{Assignment, ReplicaChain};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::schedule::ScheduleParams;

/// Sampler flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sa,
    Qast,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub seed: u64,
    pub max_iters: usize,
    /// Stop after this many consecutive iterations without the best energy
    /// improving by more than `convergence_tol`.
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub mode: Mode,
    /// Replica count (ignored for `Mode::Sa`, which always runs one chain).
    pub m: usize,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.max_iters == 0 {
            problems.push("max_iters must be >= 1".to_string());
        }
        if self.convergence_window == 0 {
            problems.push("convergence_window must be >= 1".to_string());
        }
        if !(self.convergence_tol >= 0.0) {
            problems.push(format!(
                "convergence_tol must be nonnegative, got {}",
                self.convergence_tol
            ));
        }
        if self.mode == Mode::Qast && self.m == 0 {
            problems.push("m must be >= 1 for the replica ring".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    fn replica_count(&self) -> usize {
        match self.mode {
            Mode::Sa => 1,
            Mode::Qast => self.m,
        }
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub beta: f64,
    pub gamma: f64,
    pub coupling: f64,
    pub beta_over_m: f64,
    pub min_energy: f64,
    pub mean_energy: f64,
    pub mean_purity: f64,
    pub best_energy_ever: f64,
    /// True once `beta/m >= 1`: past `beta = m` for the ring, past
    /// `beta = 1` for a single chain.
    pub past_beta_m: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
        }
    }
}

/// Outcome of one annealing run: the lowest-energy replica at termination,
/// its energy, and the full trace.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub assignment: Assignment,
    pub energy: f64,
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    pub termination: Termination,
    pub best_energy_ever: f64,
}

/// Normalize logits into probabilities in place (max-subtracted).
fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in logits.iter_mut() {
        *l /= total;
    }
    debug_assert!(
        (logits.iter().sum::<f64>() - 1.0).abs() < 1e-12,
        "softmax must normalize"
    );
}

fn draw_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    probs.len() - 1
}

/// Conditional label distribution of point `i` under the single-chain
/// sampler: softmax over candidates of `-beta * E_c`.
pub fn sa_point_conditional(
    model: &dyn EnergyModel,
    a: &Assignment,
    i: usize,
    beta: f64,
) -> Vec<f64> {
    let mut energies = Vec::with_capacity(a.k());
    model.candidate_energies(a, i, &mut energies);
    let mut logits: Vec<f64> = energies.iter().map(|&e| -beta * e).collect();
    softmax_in_place(&mut logits);
    logits
}

/// One full Gibbs sweep of the single chain at inverse temperature `beta`.
pub fn sa_sweep<R: Rng + ?Sized>(
    model: &mut dyn EnergyModel,
    a: &mut Assignment,
    beta: f64,
    rng: &mut R,
) {
    let k = a.k();
    let mut energies = Vec::with_capacity(k);
    let mut logits = vec![0.0; k];
    for i in 0..a.n() {
        model.candidate_energies(a, i, &mut energies);
        for c in 0..k {
            logits[c] = -beta * energies[c];
        }
        softmax_in_place(&mut logits);
        let c = draw_categorical(&logits, rng);
        model.relabel_point(a, i, c);
    }
}

fn fill_qast_logits(
    model: &dyn EnergyModel,
    chain: &ReplicaChain,
    j: usize,
    i: usize,
    beta_over_m: f64,
    f_value: f64,
    energies: &mut Vec<f64>,
    purities: &mut Vec<f64>,
    logits: &mut Vec<f64>,
) {
    let k = chain.k();
    model.candidate_energies(chain.replica(j), i, energies);
    purities.resize(k, 0.0);
    chain.candidate_neighbor_purities(j, i, purities);
    logits.clear();
    if f_value.is_finite() {
        for c in 0..k {
            logits.push(-beta_over_m * energies[c] + f_value * purities[c]);
        }
    } else {
        // Infinite coupling (gamma has decayed to zero): only the maximal-
        // purity candidates keep support, weighed by their energies.
        let top = purities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for c in 0..k {
            logits.push(if purities[c] == top {
                -beta_over_m * energies[c]
            } else {
                f64::NEG_INFINITY
            });
        }
    }
}

/// Conditional label distribution of point `i` in replica `j` of the ring:
/// softmax over candidates of
/// `-(beta/m) E_c + f * (purity(j, j-1) + purity(j, j+1))`,
/// everything evaluated with the point set to the candidate label.
pub fn qast_point_conditional(
    model: &dyn EnergyModel,
    chain: &ReplicaChain,
    j: usize,
    i: usize,
    beta_over_m: f64,
    f_value: f64,
) -> Vec<f64> {
    let mut energies = Vec::new();
    let mut purities = Vec::new();
    let mut logits = Vec::new();
    fill_qast_logits(
        model,
        chain,
        j,
        i,
        beta_over_m,
        f_value,
        &mut energies,
        &mut purities,
        &mut logits,
    );
    softmax_in_place(&mut logits);
    logits
}

/// One sweep of the replica ring: replicas in order, points in order, each
/// draw followed by the O(k) table and statistics updates.
pub fn qast_sweep<R: Rng>(
    models: &mut [Box<dyn EnergyModel>],
    chain: &mut ReplicaChain,
    beta: f64,
    f_value: f64,
    rngs: &mut [R],
) {
    let m = chain.m();
    debug_assert_eq!(models.len(), m);
    debug_assert_eq!(rngs.len(), m);
    let n = chain.n();
    let k = chain.k();
    let beta_over_m = beta / m as f64;
    let mut energies = Vec::with_capacity(k);
    let mut purities = Vec::with_capacity(k);
    let mut logits = Vec::with_capacity(k);
    for j in 0..m {
        for i in 0..n {
            fill_qast_logits(
                models[j].as_ref(),
                chain,
                j,
                i,
                beta_over_m,
                f_value,
                &mut energies,
                &mut purities,
                &mut logits,
            );
            softmax_in_place(&mut logits);
            let c = draw_categorical(&logits, &mut rngs[j]);
            let old = chain.replica(j).label(i);
            if c != old {
                chain
                    .update_tables_for_relabel(j, i, old, c)
                    .expect("cached tables in sync with labels");
                models[j].relabel_point(chain.replica_mut(j), i, c);
            }
        }
    }
    debug_assert!(chain.tables_consistent(), "pair tables desynchronized");
}

/// Factory producing one energy model instance per replica.
pub type ModelFactory<'a> = dyn Fn() -> Result<Box<dyn EnergyModel>> + Sync + 'a;

fn rng_for_replica(seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

/// Run one annealing process to termination.
///
/// Replicas start from independent uniform-random assignments, one sweep
/// per schedule iteration; the run stops at `max_iters` or once the best
/// energy seen has not improved by more than the tolerance for a full
/// window of iterations. The returned assignment is the lowest-energy
/// replica at termination.
pub fn run(
    factory: &ModelFactory,
    schedule: &ScheduleParams,
    cfg: &SamplerConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    schedule.validate()?;
    let m = cfg.replica_count();
    if schedule.m != m {
        return Err(Error::InvalidParameter(format!(
            "schedule is for m = {}, sampler runs {} replica(s)",
            schedule.m, m
        )));
    }

    let mut models: Vec<Box<dyn EnergyModel>> = Vec::with_capacity(m);
    let mut rngs: Vec<ChaCha8Rng> = Vec::with_capacity(m);
    let mut replicas: Vec<Assignment> = Vec::with_capacity(m);
    for j in 0..m {
        let mut model = factory()?;
        let mut rng = rng_for_replica(cfg.seed, j);
        let a = Assignment::random(model.n_points(), model.n_clusters(), &mut rng);
        model.bind(&a);
        models.push(model);
        rngs.push(rng);
        replicas.push(a);
    }
    let mut chain = ReplicaChain::new(replicas)?;

    let mut trace = Vec::new();
    let mut best_energy = f64::INFINITY;
    let mut stale_iters = 0usize;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0usize;

    for iter in 0..cfg.max_iters {
        let state = schedule.state_at(iter);
        match cfg.mode {
            Mode::Sa => {
                sa_sweep(
                    models[0].as_mut(),
                    chain.replica_mut(0),
                    state.beta,
                    &mut rngs[0],
                );
            }
            Mode::Qast => {
                qast_sweep(
                    &mut models,
                    &mut chain,
                    state.beta,
                    state.coupling,
                    &mut rngs,
                );
            }
        }
        iterations = iter + 1;

        let energies: Vec<f64> = (0..m)
            .map(|j| models[j].energy_full(chain.replica(j)))
            .collect();
        let min_energy = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let mean_energy = energies.iter().sum::<f64>() / m as f64;

        let improved = best_energy - min_energy > cfg.convergence_tol;
        best_energy = best_energy.min(min_energy);
        // A single chain has no quantum coupling; its trace reports the
        // decoupled limit.
        let (gamma, coupling) = match cfg.mode {
            Mode::Sa => (f64::INFINITY, 0.0),
            Mode::Qast => (state.gamma, state.coupling),
        };
        trace.push(TraceRecord {
            iteration: iter,
            beta: state.beta,
            gamma,
            coupling,
            beta_over_m: state.beta_over_m,
            min_energy,
            mean_energy,
            mean_purity: chain.mean_ring_purity(),
            best_energy_ever: best_energy,
            past_beta_m: state.beta_over_m >= 1.0,
        });

        if improved {
            stale_iters = 0;
        } else {
            stale_iters += 1;
            if stale_iters >= cfg.convergence_window {
                termination = Termination::Converged;
                break;
            }
        }
    }

    let best_j = (0..m)
        .min_by(|&p, &q| {
            let ep = models[p].energy_full(chain.replica(p));
            let eq = models[q].energy_full(chain.replica(q));
            ep.partial_cmp(&eq).expect("energies are finite")
        })
        .expect("at least one replica");
    let assignment = chain.replica(best_j).clone();
    let energy = models[best_j].energy_of(&assignment);

    Ok(RunResult {
        assignment,
        energy,
        trace,
        iterations,
        termination,
        best_energy_ever: best_energy,
    })
}

/// Deterministic variation of a root seed for independent side chains.
fn derive_seed(root: u64, salt: u64) -> u64 {
    let mut z = root ^ (salt.wrapping_add(1)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SeedComparison {
    pub seed: u64,
    pub qa_energy: f64,
    pub sa_best_energy: f64,
    pub qa_iterations: usize,
    pub sa_iterations_each: usize,
    pub qa_sweeps: usize,
    pub sa_sweeps: usize,
    pub win: bool,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub per_seed: Vec<SeedComparison>,
    pub qa_median_energy: f64,
    pub sa_median_energy: f64,
    pub win_rate: f64,
    pub m: usize,
    pub m_prime: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite energies"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Equal-budget comparison: one ring run per seed against `m_prime`
/// independent single chains given the same total number of replica
/// sweeps. The single chains run exactly as many iterations as the ring
/// executed (its convergence rule may stop it early), scaled when
/// `m_prime != m` so the sweep budgets stay within 5%.
pub fn compare_equal_budget(
    factory: &ModelFactory,
    qa_schedule: &ScheduleParams,
    sa_schedule: &ScheduleParams,
    cfg: &SamplerConfig,
    seeds: &[u64],
    m_prime: Option<usize>,
) -> Result<ComparisonReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "comparison needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let m = cfg.m;
    let m_prime = m_prime.unwrap_or(m);
    if m_prime == 0 {
        return Err(Error::InvalidParameter("m_prime must be >= 1".into()));
    }

    let run_seed = |&seed: &u64| -> Result<SeedComparison> {
        let qa_cfg = SamplerConfig {
            seed,
            mode: Mode::Qast,
            ..cfg.clone()
        };
        let qa = run(factory, qa_schedule, &qa_cfg)?;
        let qa_sweeps = qa.iterations * m;

        let sa_iterations = qa_sweeps.div_ceil(m_prime);
        let sa_sweeps = sa_iterations * m_prime;
        debug_assert!(
            (sa_sweeps as f64 - qa_sweeps as f64).abs() / qa_sweeps as f64 <= 0.05,
            "sweep budgets drifted beyond 5%"
        );

        let mut sa_best = f64::INFINITY;
        for chain_idx in 0..m_prime {
            let sa_cfg = SamplerConfig {
                seed: derive_seed(seed, chain_idx as u64),
                max_iters: sa_iterations,
                // Budget-matched chains consume their full allotment.
                convergence_window: sa_iterations + 1,
                convergence_tol: cfg.convergence_tol,
                mode: Mode::Sa,
                m: 1,
            };
            let sa = run(factory, sa_schedule, &sa_cfg)?;
            sa_best = sa_best.min(sa.energy);
        }

        Ok(SeedComparison {
            seed,
            qa_energy: qa.energy,
            sa_best_energy: sa_best,
            qa_iterations: qa.iterations,
            sa_iterations_each: sa_iterations,
            qa_sweeps,
            sa_sweeps,
            win: qa.energy <= sa_best,
        })
    };

    #[cfg(feature = "parallel")]
    let per_seed: Vec<SeedComparison> = {
        use rayon::prelude::*;
        seeds.par_iter().map(run_seed).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let per_seed: Vec<SeedComparison> = seeds.iter().map(run_seed).collect::<Result<_>>()?;

    let mut qa_energies: Vec<f64> = per_seed.iter().map(|r| r.qa_energy).collect();
    let mut sa_energies: Vec<f64> = per_seed.iter().map(|r| r.sa_best_energy).collect();
    let wins = per_seed.iter().filter(|r| r.win).count();
    Ok(ComparisonReport {
        win_rate: wins as f64 / per_seed.len() as f64,
        qa_median_energy: median(&mut qa_energies),
        sa_median_energy: median(&mut sa_energies),
        per_seed,
        m,
        m_prime,
    })
}
