//! Continuous-time Markov model of primary/secondary channel sharing.
//!
//! State `(i, j)` counts `i` primary calls and `j` secondary sessions on `C`
//! channels, `i + j <= C`. Transitions:
//!
//! * PU arrival `lambda_p`: `(i, j) -> (i+1, j)` if a channel is free, else
//!   `(i+1, j-1)` when `j > 0` (one secondary session is preempted);
//!   blocked when `i = C`.
//! * SU arrival `lambda_s`: `(i, j) -> (i, j+1)` if a channel is free.
//! * Departures `i * mu_p` and `j * mu_s`.
//!
//! Blocking is the probability an arriving secondary finds all channels busy
//! (PASTA); non-completion is the preemption rate over the accepted
//! secondary rate. A Monte-Carlo simulation of the same chain is provided as
//! an independent check.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::substream;

pub const DEFAULT_MAX_STATES: usize = 1_000_000;
pub const DEFAULT_DENSE_LIMIT: usize = 2_000;
pub const STATIONARY_TOLERANCE: f64 = 1e-10;
pub const MIN_MONTE_CARLO_EVENTS: u64 = 10_000;
const MONTE_CARLO_BATCHES: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("invalid occupancy model: {0}")]
    InvalidModel(String),
    #[error("state space of {states} states exceeds the cap of {cap}")]
    Capacity { states: u128, cap: usize },
    #[error("stationary solve failed: {0}")]
    Numerical(String),
    #[error("non-completion is undefined when no secondary session is ever accepted")]
    UndefinedMetric,
    #[error("monte carlo needs at least {MIN_MONTE_CARLO_EVENTS} events, got {0}")]
    TooFewEvents(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyModel {
    pub channels: u32,
    pub lambda_p: f64,
    pub mu_p: f64,
    pub lambda_s: f64,
    pub mu_s: f64,
}

impl OccupancyModel {
    pub fn new(
        channels: u32,
        lambda_p: f64,
        mu_p: f64,
        lambda_s: f64,
        mu_s: f64,
    ) -> Result<Self, MarkovError> {
        let m = OccupancyModel {
            channels,
            lambda_p,
            mu_p,
            lambda_s,
            mu_s,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), MarkovError> {
        let bad = |msg: String| Err(MarkovError::InvalidModel(msg));
        if self.channels == 0 {
            return bad("channel count must be at least 1".into());
        }
        for (name, v) in [
            ("lambda_p", self.lambda_p),
            ("mu_p", self.mu_p),
            ("lambda_s", self.lambda_s),
            ("mu_s", self.mu_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.lambda_p > 0.0 && self.mu_p == 0.0 {
            return bad("mu_p must be positive when lambda_p is".into());
        }
        if self.lambda_s > 0.0 && self.mu_s == 0.0 {
            return bad("mu_s must be positive when lambda_s is".into());
        }
        Ok(())
    }

    pub fn state_count(&self) -> u128 {
        let c = u128::from(self.channels);
        (c + 1) * (c + 2) / 2
    }

    /// Index of `(i, j)` in the enumeration `i = 0..=C`, `j = 0..=C-i`.
    pub fn index(&self, i: u32, j: u32) -> usize {
        let (c, i, j) = (self.channels as usize, i as usize, j as usize);
        debug_assert!(i + j <= c);
        i * (c + 1) - i * i.saturating_sub(1) / 2 + j
    }

    pub fn states(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..=self.channels).flat_map(move |i| (0..=self.channels - i).map(move |j| (i, j)))
    }

    /// Outgoing transitions of `(i, j)` with their rates. Zero rates omitted.
    fn transitions(&self, i: u32, j: u32) -> Vec<((u32, u32), f64)> {
        let c = self.channels;
        let mut out = Vec::with_capacity(4);
        if self.lambda_p > 0.0 {
            if i + j < c {
                out.push(((i + 1, j), self.lambda_p));
            } else if j > 0 {
                out.push(((i + 1, j - 1), self.lambda_p));
            }
        }
        if self.lambda_s > 0.0 && i + j < c {
            out.push(((i, j + 1), self.lambda_s));
        }
        if i > 0 && self.mu_p > 0.0 {
            out.push(((i - 1, j), f64::from(i) * self.mu_p));
        }
        if j > 0 && self.mu_s > 0.0 {
            out.push(((i, j - 1), f64::from(j) * self.mu_s));
        }
        out
    }
}

/// Sparse infinitesimal generator.
#[derive(Debug, Clone)]
pub struct Generator {
    model: OccupancyModel,
    /// Off-diagonal `(target, rate)` per state.
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl Generator {
    pub fn model(&self) -> &OccupancyModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rate(&self, from: (u32, u32), to: (u32, u32)) -> f64 {
        let (f, t) = (
            self.model.index(from.0, from.1),
            self.model.index(to.0, to.1),
        );
        if f == t {
            return self.diag[f];
        }
        self.rows[f]
            .iter()
            .filter(|(k, _)| *k == t)
            .map(|(_, r)| r)
            .sum()
    }

    pub fn row(&self, state: usize) -> &[(usize, f64)] {
        &self.rows[state]
    }

    pub fn diagonal(&self, state: usize) -> f64 {
        self.diag[state]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut q = DMatrix::zeros(n, n);
        for (s, row) in self.rows.iter().enumerate() {
            for &(t, r) in row {
                q[(s, t)] += r;
            }
            q[(s, s)] = self.diag[s];
        }
        q
    }

    /// `max_k |(pi Q)_k|`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        let mut acc: Vec<f64> = pi.iter().zip(&self.diag).map(|(p, d)| p * d).collect();
        for (s, row) in self.rows.iter().enumerate() {
            for &(t, r) in row {
                acc[t] += pi[s] * r;
            }
        }
        acc.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// States reachable from the empty system.
    fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(s) = queue.pop_front() {
            for &(t, _) in &self.rows[s] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen
    }

    fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}

pub fn build_generator(m: &OccupancyModel) -> Result<Generator, MarkovError> {
    build_generator_capped(m, DEFAULT_MAX_STATES)
}

pub fn build_generator_capped(
    m: &OccupancyModel,
    max_states: usize,
) -> Result<Generator, MarkovError> {
    m.validate()?;
    let states = m.state_count();
    if states > max_states as u128 {
        return Err(MarkovError::Capacity {
            states,
            cap: max_states,
        });
    }
    let n = states as usize;
    let mut rows = vec![Vec::new(); n];
    let mut diag = vec![0.0; n];
    for (i, j) in m.states() {
        let s = m.index(i, j);
        let out: Vec<(usize, f64)> = m
            .transitions(i, j)
            .into_iter()
            .map(|((ti, tj), r)| (m.index(ti, tj), r))
            .collect();
        diag[s] = -out.iter().map(|(_, r)| r).sum::<f64>();
        rows[s] = out;
    }
    Ok(Generator {
        model: *m,
        rows,
        diag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_states: usize,
    /// Reachable state counts up to this use a dense LU solve.
    pub dense_limit: usize,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_states: DEFAULT_MAX_STATES,
            dense_limit: DEFAULT_DENSE_LIMIT,
            tolerance: STATIONARY_TOLERANCE,
            max_sweeps: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    model: OccupancyModel,
    probs: Vec<f64>,
    residual: f64,
    solver: SolverKind,
}

impl StationaryDistribution {
    pub fn model(&self) -> &OccupancyModel {
        &self.model
    }

    pub fn prob(&self, i: u32, j: u32) -> f64 {
        if i + j > self.model.channels {
            return 0.0;
        }
        self.probs[self.model.index(i, j)]
    }

    /// Probabilities in state-enumeration order.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.model.states().map(|(i, j)| ((i, j), self.prob(i, j)))
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn solver(&self) -> SolverKind {
        self.solver
    }
}

pub fn stationary(m: &OccupancyModel) -> Result<StationaryDistribution, MarkovError> {
    stationary_with(m, &SolverOptions::default())
}

/// Solves `pi Q = 0`, `sum pi = 1` on the class reachable from the empty
/// system; unreachable states get probability zero.
pub fn stationary_with(
    m: &OccupancyModel,
    opts: &SolverOptions,
) -> Result<StationaryDistribution, MarkovError> {
    let q = build_generator_capped(m, opts.max_states)?;
    let reach = q.reachable();
    let live: Vec<usize> = (0..q.len()).filter(|&s| reach[s]).collect();
    let (local, solver) = if live.len() == 1 {
        (vec![1.0], SolverKind::Dense)
    } else if live.len() <= opts.dense_limit {
        (solve_dense(&q, &live)?, SolverKind::Dense)
    } else {
        (solve_gauss_seidel(&q, &live, opts)?, SolverKind::Iterative)
    };

    let mut probs = vec![0.0; q.len()];
    for (&s, &p) in live.iter().zip(&local) {
        if p < -1e-12 {
            return Err(MarkovError::Numerical(format!(
                "negative probability {p} in state {s}"
            )));
        }
        probs[s] = p.max(0.0);
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);

    let residual = q.residual(&probs);
    let scale = q.max_exit_rate().max(1.0);
    if residual > opts.tolerance * scale {
        return Err(MarkovError::Numerical(format!(
            "residual {residual:e} above tolerance {:e}",
            opts.tolerance * scale
        )));
    }
    Ok(StationaryDistribution {
        model: *m,
        probs,
        residual,
        solver,
    })
}

fn solve_dense(q: &Generator, live: &[usize]) -> Result<Vec<f64>, MarkovError> {
    let n = live.len();
    let mut pos = vec![usize::MAX; q.len()];
    for (k, &s) in live.iter().enumerate() {
        pos[s] = k;
    }
    // Rows of A are balance equations (columns of Q); the last is replaced
    // by the normalization.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (k, &s) in live.iter().enumerate() {
        a[(k, k)] = q.diag[s];
        for &(t, r) in &q.rows[s] {
            if pos[t] != usize::MAX {
                a[(pos[t], k)] += r;
            }
        }
    }
    for k in 0..n {
        a[(n - 1, k)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| MarkovError::Numerical("singular balance system".into()))?;
    Ok(x.iter().copied().collect())
}

fn solve_gauss_seidel(
    q: &Generator,
    live: &[usize],
    opts: &SolverOptions,
) -> Result<Vec<f64>, MarkovError> {
    let n = live.len();
    let mut pos = vec![usize::MAX; q.len()];
    for (k, &s) in live.iter().enumerate() {
        pos[s] = k;
    }
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (k, &s) in live.iter().enumerate() {
        for &(t, r) in &q.rows[s] {
            if pos[t] != usize::MAX {
                incoming[pos[t]].push((k, r));
            }
        }
    }
    let exit: Vec<f64> = live.iter().map(|&s| -q.diag[s]).collect();
    if let Some(k) = exit.iter().position(|&e| e <= 0.0) {
        return Err(MarkovError::Numerical(format!(
            "absorbing state {} in a multi-state class",
            live[k]
        )));
    }
    let scale = q.max_exit_rate().max(1.0);
    let mut pi = vec![1.0 / n as f64; n];
    for sweep in 0..opts.max_sweeps {
        for k in 0..n {
            let inflow: f64 = incoming[k].iter().map(|&(s, r)| pi[s] * r).sum();
            pi[k] = inflow / exit[k];
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        if sweep % 16 == 15 {
            let mut full = vec![0.0; q.len()];
            for (k, &s) in live.iter().enumerate() {
                full[s] = pi[k];
            }
            if q.residual(&full) <= opts.tolerance * scale * 0.5 {
                return Ok(pi);
            }
        }
    }
    Err(MarkovError::Numerical(format!(
        "Gauss-Seidel did not converge in {} sweeps",
        opts.max_sweeps
    )))
}

/// Probability an arriving secondary finds every channel busy.
pub fn blocking_probability(d: &StationaryDistribution) -> f64 {
    let c = d.model.channels;
    (0..=c)
        .map(|i| d.prob(i, c - i))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Probability an admitted secondary session is preempted before completing.
pub fn noncompletion_probability(d: &StationaryDistribution) -> Result<f64, MarkovError> {
    let m = &d.model;
    let c = m.channels;
    let accepted = m.lambda_s * (1.0 - blocking_probability(d));
    if accepted <= 0.0 {
        return Err(MarkovError::UndefinedMetric);
    }
    let full_with_su: f64 = (0..c).map(|i| d.prob(i, c - i)).sum();
    Ok((m.lambda_p * full_with_su / accepted).clamp(0.0, 1.0))
}

/// Erlang-B loss probability `B(c, a)` by the standard recursion.
pub fn erlang_b(c: u32, offered_load: f64) -> f64 {
    (1..=c).fold(1.0, |b, k| {
        offered_load * b / (f64::from(k) + offered_load * b)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub events: u64,
    pub simulated_time: f64,
    pub su_arrivals: u64,
    pub su_blocked: u64,
    pub su_accepted: u64,
    pub su_preempted: u64,
    pub blocking: f64,
    pub blocking_se: f64,
    /// Absent when no secondary session was accepted.
    pub noncompletion: Option<f64>,
    pub noncompletion_se: Option<f64>,
}

#[derive(Default, Clone, Copy)]
struct BatchCounts {
    arrivals: u64,
    blocked: u64,
    accepted: u64,
    preempted: u64,
}

/// Batch-means standard error of the ratio estimator `sum(num) / sum(den)`.
pub(crate) fn ratio_standard_error(num: &[f64], den: &[f64]) -> f64 {
    let b = num.len() as f64;
    let (sn, sd): (f64, f64) = (num.iter().sum(), den.iter().sum());
    if sd == 0.0 || num.len() < 2 {
        return 0.0;
    }
    let r = sn / sd;
    let ss: f64 = num.iter().zip(den).map(|(n, d)| (n - r * d).powi(2)).sum();
    (ss / (b * (b - 1.0))).sqrt() / (sd / b)
}

/// Event-driven simulation of the same chain with exponential clocks.
pub fn monte_carlo(
    m: &OccupancyModel,
    events: u64,
    seed: u64,
) -> Result<MonteCarloEstimate, MarkovError> {
    m.validate()?;
    if events < MIN_MONTE_CARLO_EVENTS {
        return Err(MarkovError::TooFewEvents(events));
    }
    let mut rng = substream(seed, "markov-monte-carlo");
    let c = m.channels;
    let (mut i, mut j) = (0u32, 0u32);
    let mut time = 0.0;
    let per_batch = events / MONTE_CARLO_BATCHES;
    let mut batches = vec![BatchCounts::default(); MONTE_CARLO_BATCHES as usize];

    for n in 0..events {
        let b = &mut batches[(n / per_batch).min(MONTE_CARLO_BATCHES - 1) as usize];
        let rates = [
            m.lambda_p,
            m.lambda_s,
            f64::from(i) * m.mu_p,
            f64::from(j) * m.mu_s,
        ];
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            // Empty system with no arrivals: nothing ever happens.
            break;
        }
        time += Exp::new(total).expect("positive rate").sample(&mut rng);
        let mut u = rng.random::<f64>() * total;
        let mut which = 3;
        for (k, r) in rates.iter().enumerate() {
            if u < *r {
                which = k;
                break;
            }
            u -= r;
        }
        match which {
            0 => {
                if i + j < c {
                    i += 1;
                } else if j > 0 {
                    i += 1;
                    j -= 1;
                    b.preempted += 1;
                }
            }
            1 => {
                b.arrivals += 1;
                if i + j < c {
                    j += 1;
                    b.accepted += 1;
                } else {
                    b.blocked += 1;
                }
            }
            2 => i -= 1,
            _ => j -= 1,
        }
    }

    let sum = batches
        .iter()
        .fold(BatchCounts::default(), |a, b| BatchCounts {
            arrivals: a.arrivals + b.arrivals,
            blocked: a.blocked + b.blocked,
            accepted: a.accepted + b.accepted,
            preempted: a.preempted + b.preempted,
        });
    let col = |f: fn(&BatchCounts) -> u64| batches.iter().map(|b| f(b) as f64).collect::<Vec<_>>();
    let blocking = if sum.arrivals > 0 {
        sum.blocked as f64 / sum.arrivals as f64
    } else {
        0.0
    };
    let blocking_se = ratio_standard_error(&col(|b| b.blocked), &col(|b| b.arrivals));
    let (noncompletion, noncompletion_se) = if sum.accepted > 0 {
        (
            Some(sum.preempted as f64 / sum.accepted as f64),
            Some(ratio_standard_error(
                &col(|b| b.preempted),
                &col(|b| b.accepted),
            )),
        )
    } else {
        (None, None)
    };
    Ok(MonteCarloEstimate {
        events,
        simulated_time: time,
        su_arrivals: sum.arrivals,
        su_blocked: sum.blocked,
        su_accepted: sum.accepted,
        su_preempted: sum.preempted,
        blocking,
        blocking_se,
        noncompletion,
        noncompletion_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(c: u32) -> OccupancyModel {
        OccupancyModel::new(c, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn state_enumeration() {
        let m = unit(1);
        assert_eq!(m.states().collect::<Vec<_>>(), vec![(0, 0), (0, 1), (1, 0)]);
        let m = unit(4);
        for (k, (i, j)) in m.states().enumerate() {
            assert_eq!(m.index(i, j), k);
        }
        assert_eq!(m.states().count() as u128, m.state_count());
    }

    #[test]
    fn generator_edges() {
        let q = build_generator(&unit(1)).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(q.rate((0, 1), (1, 0)), 1.0);
        assert_eq!(q.rate((0, 0), (1, 0)), 1.0);
        assert_eq!(q.rate((0, 0), (0, 1)), 1.0);
        assert_eq!(q.rate((1, 0), (0, 0)), 1.0);
        assert_eq!(q.rate((1, 0), (0, 1)), 0.0);
        let dense = q.to_dense();
        for r in 0..3 {
            assert_eq!(dense.row(r).sum(), 0.0);
        }
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let q = build_generator(&OccupancyModel::new(6, 0.7, 1.3, 2.1, 0.4).unwrap()).unwrap();
        let d = q.to_dense();
        for r in 0..q.len() {
            assert!(d.row(r).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn no_pu_traffic_is_mmc_in_secondaries() {
        let m = OccupancyModel::new(3, 0.0, 1.0, 2.0, 1.0).unwrap();
        let d = stationary(&m).unwrap();
        for i in 1..=3 {
            for j in 0..=3 - i {
                assert_eq!(d.prob(i, j), 0.0);
            }
        }
        assert!((blocking_probability(&d) - erlang_b(3, 2.0)).abs() < 1e-12);
        assert_eq!(noncompletion_probability(&d).unwrap(), 0.0);
    }

    #[test]
    fn empty_system_is_absorbing() {
        let m = OccupancyModel::new(2, 0.0, 0.0, 0.0, 0.0).unwrap();
        let d = stationary(&m).unwrap();
        assert_eq!(d.prob(0, 0), 1.0);
        assert_eq!(blocking_probability(&d), 0.0);
        assert_eq!(
            noncompletion_probability(&d),
            Err(MarkovError::UndefinedMetric)
        );
    }

    #[test]
    fn hand_solved_single_channel() {
        // Balance: 2 pi00 = pi10 + pi01; 2 pi01 = pi00; pi10 = pi00 + pi01.
        let d = stationary(&unit(1)).unwrap();
        assert!((d.prob(0, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((d.prob(1, 0) - 0.5).abs() < 1e-12);
        assert!((d.prob(0, 1) - 1.0 / 6.0).abs() < 1e-12);
        assert!((blocking_probability(&d) - 2.0 / 3.0).abs() < 1e-12);
        assert!((noncompletion_probability(&d).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pu_only_single_channel_is_erlang_b() {
        let m = OccupancyModel::new(1, 1.0, 1.0, 0.0, 0.0).unwrap();
        let d = stationary(&m).unwrap();
        assert!((d.prob(1, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn erlang_b_small_values() {
        assert_eq!(erlang_b(0, 3.0), 1.0);
        assert!((erlang_b(1, 1.0) - 0.5).abs() < 1e-15);
        // B(2, 1) = (1/2) / (1 + 1 + 1/2)
        assert!((erlang_b(2, 1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn capacity_cap() {
        let m = OccupancyModel::new(2000, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            build_generator(&m),
            Err(MarkovError::Capacity { .. })
        ));
        assert!(matches!(
            build_generator_capped(&unit(3), 9),
            Err(MarkovError::Capacity { .. })
        ));
    }

    #[test]
    fn invalid_models() {
        assert!(OccupancyModel::new(0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(OccupancyModel::new(1, -1.0, 1.0, 1.0, 1.0).is_err());
        assert!(OccupancyModel::new(1, 1.0, 0.0, 1.0, 1.0).is_err());
        assert!(OccupancyModel::new(1, 1.0, 1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn iterative_solver_matches_dense() {
        let m = OccupancyModel::new(12, 1.5, 0.8, 2.5, 1.1).unwrap();
        let dense = stationary(&m).unwrap();
        let opts = SolverOptions {
            dense_limit: 10,
            ..SolverOptions::default()
        };
        let iter = stationary_with(&m, &opts).unwrap();
        assert_eq!(iter.solver(), SolverKind::Iterative);
        assert!(iter.residual() <= 1e-10 * 40.0);
        for (a, b) in dense.probs().iter().zip(iter.probs()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn blocking_grows_with_secondary_load() {
        let mut last = 0.0;
        for k in 0..30 {
            let ls = 0.1 * 1.5f64.powi(k);
            let d = stationary(&OccupancyModel::new(3, 1.0, 1.0, ls, 1.0).unwrap()).unwrap();
            let b = blocking_probability(&d);
            assert!(b >= last, "blocking fell at lambda_s={ls}");
            last = b;
        }
        assert!(last > 0.99);
    }

    #[test]
    fn monte_carlo_brackets_single_channel() {
        let est = monte_carlo(&unit(1), 1_000_000, 11).unwrap();
        assert!((est.blocking - 2.0 / 3.0).abs() < 0.01);
        assert!((est.blocking - 2.0 / 3.0).abs() < 3.0 * est.blocking_se);
        let nc = est.noncompletion.unwrap();
        assert!((nc - 0.5).abs() < 3.0 * est.noncompletion_se.unwrap());
    }

    #[test]
    fn monte_carlo_determinism_and_edge_cases() {
        let m = OccupancyModel::new(2, 0.0, 1.0, 1.0, 1.0).unwrap();
        let a = monte_carlo(&m, 20_000, 5).unwrap();
        assert_eq!(a.noncompletion, Some(0.0));
        assert_eq!(a, monte_carlo(&m, 20_000, 5).unwrap());
        assert_eq!(monte_carlo(&m, 10, 5), Err(MarkovError::TooFewEvents(10)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn stationary_is_a_distribution(c in 1u32..8, lp in 0.0..5.0f64, mp in 0.1..5.0f64, ls in 0.0..5.0f64, ms in 0.1..5.0f64) {
            let m = OccupancyModel::new(c, lp, mp, ls, ms).unwrap();
            let d = stationary(&m).unwrap();
            let total: f64 = d.probs().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
            prop_assert!(d.probs().iter().all(|&p| p >= 0.0));
            prop_assert!(d.residual() <= 1e-10);
            let b = blocking_probability(&d);
            prop_assert!((0.0..=1.0).contains(&b));
            if let Ok(nc) = noncompletion_probability(&d) {
                prop_assert!((0.0..=1.0).contains(&nc));
            }
        }
    }
}
