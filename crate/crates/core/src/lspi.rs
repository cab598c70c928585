//! Linear Q-functions over state-action block features, LSTDQ and LSPI,
//! plus least-squares fitting of a known value function.
//!
//! The Q-feature of `(s, a)` places the state's embedding `phi(s)` in block
//! `a` of a `4d` vector, so `Q(s, a) = theta_a . phi(s)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::mdp::{argmax_first, Action, PolicyTable, ValueVector};
use crate::sampling::EpisodeSet;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(len: usize) -> Self {
        WeightVector(vec![0.0; len])
    }

    pub fn distance(&self, other: &WeightVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WeightVector(self.0.iter().map(|x| x * factor).collect())
    }

    /// One weight per line.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, x) in self.0.iter().enumerate() {
            writeln!(out, "{i}\t{x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LspiConfig {
    pub gamma: f64,
    /// Stop once successive weight vectors are closer than this (L2).
    pub epsilon: f64,
    pub max_iters: usize,
    pub ridge: f64,
}

impl Default for LspiConfig {
    fn default() -> Self {
        LspiConfig { gamma: 0.9, epsilon: 1e-6, max_iters: 20, ridge: 1e-6 }
    }
}

/// Block one-hot feature of a state-action pair.
pub fn state_action_features(phi_s: &[f64], a: Action) -> Vec<f64> {
    let d = phi_s.len();
    let mut out = vec![0.0; Action::COUNT * d];
    out[a.index() * d..(a.index() + 1) * d].copy_from_slice(phi_s);
    out
}

/// Greedy action of a linear Q-function at a state with features `phi_s`.
pub fn greedy_action(theta: &WeightVector, phi_s: &[f64]) -> Action {
    let d = phi_s.len();
    let q = Action::ALL
        .map(|a| theta.0[a.index() * d..(a.index() + 1) * d].iter().zip(phi_s).map(|(t, f)| t * f).sum::<f64>());
    Action::ALL[argmax_first(&q)]
}

/// Greedy policy over `n_states` states; states without a basis row act on
/// zero features and so pick `Up`.
pub fn greedy_policy_linear(theta: &WeightVector, basis: &BasisMatrix, n_states: usize) -> PolicyTable {
    let features = basis.state_features(n_states);
    PolicyTable(
        (0..n_states)
            .map(|s| {
                let row: Vec<f64> = features.row(s).iter().copied().collect();
                greedy_action(theta, &row)
            })
            .collect(),
    )
}

/// The policy LSTDQ evaluates.
#[derive(Debug, Clone, Copy)]
pub enum EvalPolicy<'a> {
    Table(&'a PolicyTable),
    Greedy(&'a WeightVector),
}

fn n_states_of(data: &EpisodeSet, basis: &BasisMatrix) -> usize {
    let from_data = data.transitions().map(|t| t.s.max(t.s_next) + 1).max().unwrap_or(0);
    let from_basis = basis.node_to_state.iter().map(|&s| s + 1).max().unwrap_or(0);
    from_data.max(from_basis)
}

/// LSTDQ: solves `A theta = b` with
/// `A = mean phi(s,a) (phi(s,a) - gamma phi(s', pi(s')))^T + ridge I` and
/// `b = mean phi(s,a) r` over all transitions. Averaging rather than summing
/// keeps the ridge's weight independent of the data size. Transitions into
/// the data set's terminal state do not bootstrap.
pub fn lstdq(data: &EpisodeSet, basis: &BasisMatrix, policy: EvalPolicy<'_>, cfg: &LspiConfig) -> Result<WeightVector> {
    let d = basis.dim();
    let k = Action::COUNT * d;
    let n_states = n_states_of(data, basis);
    let features = basis.state_features(n_states);
    let next_action = |s: usize| -> Action {
        match policy {
            EvalPolicy::Table(table) => table.action(s),
            EvalPolicy::Greedy(theta) => {
                let row: Vec<f64> = features.row(s).iter().copied().collect();
                greedy_action(theta, &row)
            }
        }
    };

    let n_transitions = data.n_transitions();
    if n_transitions == 0 {
        return Err(Error::InsufficientData("LSTDQ needs at least one transition".into()));
    }
    let mut a_mat = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for t in data.transitions() {
        let f = features.row(t.s).transpose();
        let ia = t.a.index() * d;
        {
            let mut block = a_mat.view_mut((ia, ia), (d, d));
            block.ger(1.0, &f, &f, 1.0);
        }
        if data.terminal != Some(t.s_next) {
            let f_next = features.row(t.s_next).transpose();
            let ib = next_action(t.s_next).index() * d;
            let mut block = a_mat.view_mut((ia, ib), (d, d));
            block.ger(-cfg.gamma, &f, &f_next, 1.0);
        }
        if t.r != 0.0 {
            let mut seg = b.rows_mut(ia, d);
            seg.axpy(t.r, &f, 1.0);
        }
    }
    let scale = 1.0 / n_transitions as f64;
    a_mat *= scale;
    b *= scale;
    for i in 0..k {
        a_mat[(i, i)] += cfg.ridge;
    }
    if a_mat.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Contract("LSTDQ accumulated non-finite values".into()));
    }
    let theta = a_mat.lu().solve(&b).ok_or_else(|| Error::Contract("LSTDQ system is singular".into()))?;
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("LSTDQ solution is non-finite".into()));
    }
    Ok(WeightVector(theta.iter().copied().collect()))
}

#[derive(Debug, Clone)]
pub struct LspiResult {
    pub policy: PolicyTable,
    pub weights: WeightVector,
    pub iterations: usize,
}

/// Least-squares policy iteration from `theta = 0`, stopping when the
/// weights move less than `epsilon` or after `max_iters` evaluations.
///
/// An evaluation whose greedy policy equals the previous one would return
/// the same weights again, so the loop also stops there.
pub fn lspi(data: &EpisodeSet, basis: &BasisMatrix, cfg: &LspiConfig, n_states: usize) -> Result<LspiResult> {
    if cfg.epsilon <= 0.0 {
        return Err(Error::Config("LSPI epsilon must be positive".into()));
    }
    let n_states = n_states.max(n_states_of(data, basis));
    let mut theta = WeightVector::zeros(Action::COUNT * basis.dim());
    let mut policy = greedy_policy_linear(&theta, basis, n_states);
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let next = lstdq(data, basis, EvalPolicy::Table(&policy), cfg)?;
        iterations += 1;
        let moved = next.distance(&theta);
        theta = next;
        let next_policy = greedy_policy_linear(&theta, basis, n_states);
        let stable = next_policy == policy;
        policy = next_policy;
        if moved < cfg.epsilon || stable {
            break;
        }
    }
    Ok(LspiResult { policy, weights: theta, iterations })
}

/// Ridge least-squares fit of `v_star` on the basis. Both the fit and the
/// reported mean squared error run over every state of `v_star`; states
/// without a basis row are predicted as zero.
pub fn ls_value_fit(basis: &BasisMatrix, v_star: &ValueVector, ridge: f64) -> Result<(WeightVector, f64)> {
    let n = v_star.len();
    if let Some(&s) = basis.node_to_state.iter().find(|&&s| s >= n) {
        return Err(Error::Dimension(format!("basis row for state {s} beyond {n} values")));
    }
    let phi = basis.state_features(n);
    let v = DVector::from_column_slice(v_star.as_slice());
    let d = basis.dim();
    let gram = phi.transpose() * &phi + DMatrix::<f64>::identity(d, d) * ridge;
    let rhs = phi.transpose() * &v;
    let theta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.lu().solve(&rhs).ok_or_else(|| Error::Contract("value fit is singular".into()))?,
    };
    let residual = &phi * &theta - v;
    let mse = residual.norm_squared() / n as f64;
    Ok((WeightVector(theta.iter().copied().collect()), mse))
}

/// Fitted values `Phi theta` per state.
pub fn fitted_values(basis: &BasisMatrix, theta: &WeightVector, n_states: usize) -> ValueVector {
    let phi = basis.state_features(n_states);
    let th = DVector::from_column_slice(&theta.0);
    ValueVector((phi * th).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{greedy_policy, value_iteration, GridSpec, TabularMdp};
    use crate::sampling::{SamplingStrategy, Transition};
    use proptest::prelude::*;

    fn chain() -> TabularMdp {
        let mut spec = GridSpec::parse_map("..G").unwrap();
        spec.enter_prob_open = 1.0;
        TabularMdp::from_grid(&spec, 0.9).unwrap()
    }

    /// Every (s, a, s') with positive probability, weighted by repetition
    /// proportional to its probability (`reps` copies per unit mass).
    fn exhaustive(mdp: &TabularMdp, reps: usize) -> EpisodeSet {
        let mut episodes = Vec::new();
        for s in 0..mdp.n_states() {
            for a in Action::ALL {
                for o in mdp.outcomes(s, a) {
                    let copies = (o.prob * reps as f64).round() as usize;
                    for _ in 0..copies {
                        episodes.push(vec![Transition { s, a, s_next: o.next, r: o.reward }]);
                    }
                }
            }
        }
        EpisodeSet { episodes, max_len: 1, strategy: SamplingStrategy::UniformRandom, terminal: None }
    }

    fn one_hot(n: usize) -> BasisMatrix {
        BasisMatrix::new(DMatrix::identity(n, n), (0..n).collect()).unwrap()
    }

    fn exact_q(mdp: &TabularMdp, policy: &PolicyTable) -> Vec<[f64; 4]> {
        let n = mdp.n_states();
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for s in 0..n {
            for o in mdp.outcomes(s, policy.action(s)) {
                a[(s, o.next)] -= mdp.gamma * o.prob;
                b[s] += o.prob * o.reward;
            }
        }
        let v: Vec<f64> = a.lu().solve(&b).unwrap().iter().copied().collect();
        (0..n).map(|s| Action::ALL.map(|act| mdp.q_value(s, act, &v))).collect()
    }

    #[test]
    fn block_features() {
        assert_eq!(state_action_features(&[3.0, 4.0], Action::Left), vec![0.0, 0.0, 0.0, 0.0, 3.0, 4.0, 0.0, 0.0]);
        assert!(state_action_features(&[0.0, 0.0], Action::Up).iter().all(|&x| x == 0.0));
        let a = state_action_features(&[1.0, 2.0], Action::Up);
        let b = state_action_features(&[1.0, 2.0], Action::Down);
        assert_eq!(a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>(), 0.0);
    }

    #[test]
    fn lstdq_tabular_chain() {
        let mdp = chain();
        let data = exhaustive(&mdp, 1);
        let basis = one_hot(3);
        let cfg = LspiConfig { ridge: 1e-12, ..Default::default() };
        let pi = PolicyTable(vec![Action::Right; 3]);
        let theta = lstdq(&data, &basis, EvalPolicy::Table(&pi), &cfg).unwrap();
        let q = |s: usize, a: Action| theta.0[a.index() * 3 + s];
        assert!((q(1, Action::Right) - 100.0).abs() < 1e-6);
        assert!((q(0, Action::Right) - 90.0).abs() < 1e-6);

        let default_ridge = LspiConfig::default();
        let once = lstdq(&data, &basis, EvalPolicy::Table(&pi), &default_ridge).unwrap();
        let twice = lstdq(&data.repeated(2), &basis, EvalPolicy::Table(&pi), &default_ridge).unwrap();
        assert!(once.0.iter().zip(&twice.0).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn lstdq_zero_rewards() {
        let mdp = chain();
        let mut data = exhaustive(&mdp, 1);
        data.episodes.iter_mut().flatten().for_each(|t| t.r = 0.0);
        let pi = PolicyTable(vec![Action::Right; 3]);
        let theta = lstdq(&data, &one_hot(3), EvalPolicy::Table(&pi), &LspiConfig::default()).unwrap();
        assert!(theta.0.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn lspi_tabular_chain_finds_optimal_policy() {
        let mdp = chain();
        let data = exhaustive(&mdp, 1);
        let result = lspi(&data, &one_hot(3), &LspiConfig::default(), 3).unwrap();
        let optimal = greedy_policy(&mdp, &value_iteration(&mdp, 1e-12));
        assert_eq!(result.policy.0[..2], optimal.0[..2]);
        assert!(result.iterations <= 3, "{} iterations", result.iterations);
    }

    #[test]
    fn equal_rows_give_constant_policy() {
        let mdp = chain();
        let data = exhaustive(&mdp, 1);
        let basis = BasisMatrix::new(DMatrix::from_element(3, 2, 0.5), vec![0, 1, 2]).unwrap();
        let result = lspi(&data, &basis, &LspiConfig::default(), 3).unwrap();
        assert!(result.policy.0.iter().all(|&a| a == result.policy.0[0]));
    }

    #[test]
    fn lspi_respects_iteration_cap() {
        let mdp = chain();
        let data = exhaustive(&mdp, 1);
        let cfg = LspiConfig { max_iters: 1, ..Default::default() };
        assert_eq!(lspi(&data, &one_hot(3), &cfg, 3).unwrap().iterations, 1);
    }

    #[test]
    fn lstdq_matches_exact_q_on_random_small_mdps() {
        // small random gridworlds: every layout of <= 20 states with random
        // entry probabilities and a random fixed policy
        use rand::Rng;
        let mut rng = crate::rng::seeded(8);
        for trial in 0..10 {
            let (w, h) = (rng.gen_range(2..6), rng.gen_range(2..5));
            let mut cells = vec![crate::mdp::CellKind::Open; w * h];
            cells[rng.gen_range(0..w * h)] = crate::mdp::CellKind::Goal;
            let mut spec = GridSpec::new(w, h, cells).unwrap();
            spec.enter_prob_open = [0.25, 0.5, 0.75, 1.0][trial % 4];
            let mdp = TabularMdp::from_grid(&spec, 0.9).unwrap();
            let pi = PolicyTable((0..mdp.n_states()).map(|_| Action::ALL[rng.gen_range(0..4)]).collect());
            let data = exhaustive(&mdp, 4);
            let n = mdp.n_states();
            let cfg = LspiConfig { ridge: 0.0, ..Default::default() };
            let theta = lstdq(&data, &one_hot(n), EvalPolicy::Table(&pi), &cfg).unwrap();
            let exact = exact_q(&mdp, &pi);
            for s in 0..n {
                for a in Action::ALL {
                    let got = theta.0[a.index() * n + s];
                    assert!(
                        (got - exact[s][a.index()]).abs() < 1e-6,
                        "trial {trial} s {s} {a}: {got} vs {}",
                        exact[s][a.index()]
                    );
                }
            }
        }
    }

    #[test]
    fn lstdq_recovers_q_with_any_full_rank_basis() {
        // a dense invertible basis spans every Q-function, so the fixed point
        // is exact whatever the data weighting
        use rand::Rng;
        let mut rng = crate::rng::seeded(21);
        let (_, mdp) = crate::mdp::build_two_room();
        let n = mdp.n_states();
        let rows = DMatrix::from_fn(n, n, |r, c| rng.gen_range(-1.0..1.0) + if r == c { 3.0 } else { 0.0 });
        let basis = BasisMatrix::new(rows, (0..n).collect()).unwrap();
        let pi = PolicyTable((0..n).map(|_| Action::ALL[rng.gen_range(0..4)]).collect());
        let mut data = exhaustive(&mdp, 10);
        // uneven weighting: repeat the first transitions many times
        let extra: Vec<_> = data.episodes[..40].to_vec();
        data.episodes.extend(extra.iter().cycle().take(400).cloned());
        let theta =
            lstdq(&data, &basis, EvalPolicy::Table(&pi), &LspiConfig { ridge: 0.0, ..Default::default() }).unwrap();
        let exact = exact_q(&mdp, &pi);
        for s in 0..n {
            let f: Vec<f64> = basis.rows.row(s).iter().copied().collect();
            for a in Action::ALL {
                let q: f64 = theta.0[a.index() * n..(a.index() + 1) * n].iter().zip(&f).map(|(t, x)| t * x).sum();
                assert!((q - exact[s][a.index()]).abs() < 1e-6, "s {s} {a}: {q} vs {}", exact[s][a.index()]);
            }
        }
    }

    #[test]
    fn value_fit_identity_and_constant() {
        let v = ValueVector(vec![3.0, -1.0, 10.0, 4.0]);
        let (_, mse) = ls_value_fit(&one_hot(4), &v, 1e-8).unwrap();
        assert!(mse < 1e-12);

        let constant = BasisMatrix::new(DMatrix::from_element(4, 1, 1.0), vec![0, 1, 2, 3]).unwrap();
        let (theta, mse) = ls_value_fit(&constant, &v, 1e-8).unwrap();
        let mean = 4.0;
        let variance = v.0.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((theta.0[0] - mean).abs() < 1e-6);
        assert!((mse - variance).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn greedy_scale_invariant(theta in proptest::collection::vec(-5.0f64..5.0, 12), phi in proptest::collection::vec(-1.0f64..1.0, 3), scale in 0.01f64..100.0) {
            let t = WeightVector(theta);
            prop_assume!({
                let q: Vec<f64> = (0..4).map(|a| (0..3).map(|i| t.0[a * 3 + i] * phi[i]).sum()).collect();
                let mut sorted = q.clone();
                sorted.sort_by(f64::total_cmp);
                sorted[3] - sorted[2] > 1e-9
            });
            prop_assert_eq!(greedy_action(&t, &phi), greedy_action(&t.scaled(scale), &phi));
        }
    }
}
