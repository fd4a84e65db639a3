//! Annealing schedules for the inverse temperature `beta` and the quantum
//! strength `gamma`, and the replica coupling `f(beta, gamma)` they induce.
//!
//! The coupling is evaluated in a log-stable form: the textbook expression
//! `n log(1 + k / (e^{k beta gamma / m} - 1))` overflows once the exponent
//! grows, so past [`COUPLING_BRANCH_THRESHOLD`] it switches to the
//! asymptote `n k e^{-x}`.

use crate::error::{Error, Result};

/// Exponent above which `coupling` uses its asymptotic branch.
pub const COUPLING_BRANCH_THRESHOLD: f64 = 30.0;

/// Geometric growth for beta, double-exponential decay for gamma:
/// `beta(i) = beta0 * r_beta^i`, `gamma(i) = gamma0 * exp(-r_gamma^i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleParams {
    pub beta0: f64,
    pub r_beta: f64,
    pub gamma0: f64,
    pub r_gamma: f64,
    /// Number of replicas in the ring.
    pub m: usize,
    /// Number of data points (enters the coupling).
    pub n: usize,
    /// Number of clusters (enters the coupling).
    pub k: usize,
}

/// Schedule values at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    pub iteration: usize,
    pub beta: f64,
    pub gamma: f64,
    pub coupling: f64,
    pub beta_over_m: f64,
}

/// Qualitative relation of the coupling path to `beta/m` over a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulePath {
    /// Coupling starts below `beta/m` and overtakes it within the horizon:
    /// independent exploration first, replica consolidation later.
    Crossover,
    /// Coupling is already at or above `beta/m` at iteration 0.
    CoupledFromStart,
    /// Coupling stays below `beta/m` for the whole horizon.
    NeverCoupled,
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            problems.push(format!(
                "beta0 must be positive and finite, got {}",
                self.beta0
            ));
        }
        if !(self.r_beta > 1.0 && self.r_beta.is_finite()) {
            problems.push(format!("r_beta must be > 1, got {}", self.r_beta));
        }
        if !(self.gamma0 > 0.0) {
            problems.push(format!("gamma0 must be positive, got {}", self.gamma0));
        }
        if !(self.r_gamma > 1.0 && self.r_gamma.is_finite()) {
            problems.push(format!("r_gamma must be > 1, got {}", self.r_gamma));
        }
        if self.m == 0 || self.n == 0 || self.k == 0 {
            problems.push(format!(
                "m, n, k must all be >= 1, got m={}, n={}, k={}",
                self.m, self.n, self.k
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    /// Deterministic, memoryless evaluation of the schedule at iteration `i`.
    pub fn state_at(&self, i: usize) -> ScheduleState {
        let beta = self.beta0 * self.r_beta.powi(i as i32);
        let gamma = self.gamma0 * (-self.r_gamma.powi(i as i32)).exp();
        ScheduleState {
            iteration: i,
            beta,
            gamma,
            coupling: coupling(beta, gamma, self.n, self.k, self.m),
            beta_over_m: beta / self.m as f64,
        }
    }

    /// First iteration at which `beta` reaches `target`.
    pub fn iteration_reaching(&self, target: f64) -> usize {
        if self.beta0 >= target {
            return 0;
        }
        let i = ((target / self.beta0).ln() / self.r_beta.ln()).ceil();
        let mut i = i.max(0.0) as usize;
        // Guard against rounding on the boundary.
        while self.beta0 * self.r_beta.powi(i as i32) < target {
            i += 1;
        }
        i
    }

    /// Replica-ring defaults: `beta0 = 0.2 m`, `r_gamma = 1.05 r_beta`, and
    /// `gamma0` solved so the coupling is still at most `1e-3` when `beta`
    /// first reaches `beta_hold_target` (default `m`). For loss-based
    /// energies the hold target is the calibration knob.
    pub fn crossover_defaults(
        n: usize,
        k: usize,
        m: usize,
        r_beta: f64,
        beta_hold_target: Option<f64>,
    ) -> Result<Self> {
        let mut params = ScheduleParams {
            beta0: 0.2 * m as f64,
            r_beta,
            gamma0: 1.0,
            r_gamma: 1.05 * r_beta,
            m,
            n,
            k,
        };
        params.validate()?;
        let target = beta_hold_target.unwrap_or(m as f64);
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta_hold_target must be positive and finite, got {target}"
            )));
        }
        params.gamma0 = solve_gamma0(&params, target)?;
        params.validate()?;
        Ok(params)
    }

    /// Single-chain defaults: `beta0 = 0.2`, `m = 1`. The quantum fields
    /// are filled with placeholders; a single chain has no replica coupling.
    pub fn single_chain_defaults(n: usize, k: usize, r_beta: f64) -> Result<Self> {
        let params = ScheduleParams {
            beta0: 0.2,
            r_beta,
            gamma0: 1.0,
            r_gamma: 1.05 * r_beta,
            m: 1,
            n,
            k,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Solve for the `gamma0` that keeps the coupling just under 1e-3 at the
/// iteration where `beta` first reaches `target`, given the other schedule
/// parameters. The coupling grows monotonically in the iteration, so it
/// stays below that bound over the whole hold phase.
pub fn solve_gamma0(params: &ScheduleParams, target: f64) -> Result<f64> {
    let hold_iter = params.iteration_reaching(target);
    let beta_hold = params.beta0 * params.r_beta.powi(hold_iter as i32);

    // Invert the coupling at a value just under 1e-3: with
    // f = n log(1 + k/(e^x - 1)), the exponent solving f = f_hold is
    // x = log1p(k / (e^{f_hold/n} - 1)).
    let f_hold = 1e-3 * 0.999;
    let x = (params.k as f64 / (f_hold / params.n as f64).exp_m1()).ln_1p();
    let gamma_hold = x * params.m as f64 / (params.k as f64 * beta_hold);

    let decay_exponent = params.r_gamma.powi(hold_iter as i32);
    let gamma0 = gamma_hold * decay_exponent.exp();
    if !gamma0.is_finite() {
        return Err(Error::ScheduleInfeasible(format!(
            "gamma0 = {gamma_hold:e} * exp({decay_exponent:e}) exceeds the float range \
             (r_beta={}, m={}, hold iteration {hold_iter})",
            params.r_beta, params.m
        )));
    }
    Ok(gamma0)
}

/// Interaction strength between ring-adjacent replicas,
/// `f(beta, gamma) = n log(1 + k / (e^{k beta gamma / m} - 1))`.
///
/// Limits: `gamma -> inf` gives 0 (replicas decouple into independent
/// chains); `gamma -> 0` gives `+inf`, returned as an infinity sentinel,
/// never NaN.
pub fn coupling(beta: f64, gamma: f64, n: usize, k: usize, m: usize) -> f64 {
    debug_assert!(beta > 0.0, "coupling needs beta > 0");
    debug_assert!(gamma >= 0.0, "coupling needs gamma >= 0");
    if gamma == 0.0 {
        return f64::INFINITY;
    }
    if gamma.is_infinite() {
        return 0.0;
    }
    let x = k as f64 * beta * gamma / m as f64;
    if x == 0.0 {
        // beta * gamma underflowed to zero.
        return f64::INFINITY;
    }
    let n = n as f64;
    let k = k as f64;
    if x > COUPLING_BRANCH_THRESHOLD {
        return n * k * (-x).exp();
    }
    let em1 = x.exp_m1();
    let ratio = k / em1;
    if ratio.is_finite() {
        n * ratio.ln_1p()
    } else {
        // Subnormal exponent: fall back to the log-difference form.
        n * ((em1 + k).ln() - em1.ln())
    }
}

/// Classify the coupling path against `beta/m` on integer iterations
/// `0..horizon`.
pub fn classify_path(params: &ScheduleParams, horizon: usize) -> Result<SchedulePath> {
    params.validate()?;
    if horizon < 2 {
        return Err(Error::InvalidParameter(format!(
            "path classification needs horizon >= 2, got {horizon}"
        )));
    }
    let first = params.state_at(0);
    if first.coupling >= first.beta_over_m {
        return Ok(SchedulePath::CoupledFromStart);
    }
    let last = params.state_at(horizon - 1);
    if last.coupling > last.beta_over_m {
        Ok(SchedulePath::Crossover)
    } else {
        Ok(SchedulePath::NeverCoupled)
    }
}

/// First iteration in `0..horizon` where the coupling is at or above
/// `beta/m`, if any.
pub fn crossing_iteration(params: &ScheduleParams, horizon: usize) -> Option<usize> {
    (0..horizon).find(|&i| {
        let s = params.state_at(i);
        s.coupling >= s.beta_over_m
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_at_zero_and_growth() {
        let p = ScheduleParams {
            beta0: 0.4,
            r_beta: 1.05,
            gamma0: 10.0,
            r_gamma: 1.1,
            m: 2,
            n: 4,
            k: 2,
        };
        let s0 = p.state_at(0);
        assert!((s0.beta - 0.4).abs() < 1e-15);
        // gamma(0) = gamma0 * exp(-r_gamma^0) = gamma0 / e.
        assert!((s0.gamma - 10.0 * (-1.0f64).exp()).abs() < 1e-14);

        // Beta doubles every log_r(2) iterations (14.2 here, so the nearest
        // integer iteration lands within one growth step of 2x).
        let doubling = (2.0f64.ln() / 1.05f64.ln()).round() as usize;
        let s = p.state_at(doubling);
        assert!((s.beta / s0.beta - 2.0).abs() < 0.05);

        let s10 = p.state_at(10);
        assert!((s10.beta - 0.4 * 1.05f64.powi(10)).abs() < 1e-12);
    }

    #[test]
    fn coupling_golden_point() {
        // k=2, n=4, beta*gamma/m = ln(3)/2 puts the exponent at ln 3,
        // so e^x - 1 = 2 and f = 4 ln 2.
        let m = 1;
        let beta = 1.0;
        let gamma = 3.0f64.ln() / 2.0;
        let f = coupling(beta, gamma, 4, 2, m);
        assert!((f - 4.0 * 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn coupling_limits() {
        assert_eq!(coupling(1.0, f64::INFINITY, 4, 2, 2), 0.0);
        assert_eq!(coupling(1.0, 0.0, 4, 2, 2), f64::INFINITY);
        // Large finite exponent: asymptotic branch, tiny but positive.
        let f = coupling(50.0, 1.0, 4, 2, 1);
        assert!(f > 0.0 && f < 1e-40);
    }

    #[test]
    fn coupling_small_exponent_approximation() {
        // For k beta gamma / m << 1 the coupling approaches
        // -n log(beta gamma / m), independently of k.
        let n = 7;
        let k = 3;
        let m = 2;
        let beta = 1e-2;
        let gamma = 1e-6 * m as f64 / (k as f64 * beta);
        let f = coupling(beta, gamma, n, k, m);
        let approx = -(n as f64) * (beta * gamma / m as f64).ln();
        assert!((f - approx).abs() / approx.abs() < 0.01);
    }

    #[test]
    fn coupling_monotonicity() {
        let f = |beta: f64, gamma: f64, n: usize| coupling(beta, gamma, n, 3, 4);
        assert!(f(1.0, 2.0, 10) > f(1.0, 2.5, 10));
        assert!(f(1.0, 2.0, 10) > f(1.2, 2.0, 10));
        assert!(f(1.0, 2.0, 11) > f(1.0, 2.0, 10));
    }

    #[test]
    fn stable_branch_matches_naive_form() {
        let n = 6;
        let k = 3;
        let m = 4;
        for i in 0..2000 {
            let x = 0.01 + i as f64 * 0.03;
            let gamma = x * m as f64 / k as f64; // beta = 1
            let naive = n as f64 * (1.0 + k as f64 / ((x).exp() - 1.0)).ln();
            if !naive.is_finite() {
                continue;
            }
            let stable = coupling(1.0, gamma, n, k, m);
            assert!(
                (stable - naive).abs() <= 1e-10,
                "x={x}: stable={stable:e} naive={naive:e}"
            );
        }
    }

    #[test]
    fn crossover_defaults_classify_and_hold() {
        let p = ScheduleParams::crossover_defaults(400, 4, 8, 1.02, None).unwrap();
        assert!((p.r_gamma / p.r_beta - 1.05).abs() < 1e-12);
        assert_eq!(classify_path(&p, 500).unwrap(), SchedulePath::Crossover);
        let hold = p.iteration_reaching(p.m as f64);
        let s = p.state_at(hold);
        assert!(s.beta >= p.m as f64);
        assert!(s.coupling <= 1e-3, "coupling at hold = {}", s.coupling);
    }

    #[test]
    fn path_classification_branches() {
        // Tiny gamma0: coupling is huge from iteration 0.
        let coupled = ScheduleParams {
            beta0: 0.5,
            r_beta: 1.05,
            gamma0: 1e-6,
            r_gamma: 1.06,
            m: 2,
            n: 10,
            k: 2,
        };
        assert_eq!(
            classify_path(&coupled, 100).unwrap(),
            SchedulePath::CoupledFromStart
        );

        // Enormous gamma0 with slow gamma decay over a short horizon:
        // coupling never catches up with beta/m.
        let never = ScheduleParams {
            beta0: 2.0,
            r_beta: 1.2,
            gamma0: 1e30,
            r_gamma: 1.01,
            m: 2,
            n: 10,
            k: 2,
        };
        assert_eq!(
            classify_path(&never, 20).unwrap(),
            SchedulePath::NeverCoupled
        );
    }

    #[test]
    fn residual_proxy_decreases_after_crossing() {
        let p = ScheduleParams::crossover_defaults(400, 4, 8, 1.02, None).unwrap();
        let cross = crossing_iteration(&p, 500).expect("crossover schedule must cross");
        // beta^2 gamma falls monotonically to zero past the crossing; once
        // gamma underflows the proxy sits exactly at its limit.
        let mut prev = f64::INFINITY;
        for i in cross..cross + 100 {
            let s = p.state_at(i);
            let proxy = s.beta * s.beta * s.gamma;
            assert!(
                proxy < prev || (proxy == 0.0 && prev == 0.0),
                "beta^2 gamma not decreasing at i={i}"
            );
            prev = proxy;
        }
        assert_eq!(prev, 0.0, "proxy should have reached its zero limit");
    }

    #[test]
    fn infeasible_gamma0_is_reported() {
        // Very slow beta growth pushes the hold iteration so far out that
        // exp(r_gamma^i) overflows.
        let err = ScheduleParams::crossover_defaults(100, 4, 64, 1.0005, None).unwrap_err();
        assert!(matches!(err, Error::ScheduleInfeasible(_)));
    }
}
