//! The walk as a first-order Markov chain over entity states, and the
//! checks that it has a unique stationary distribution.

use ndarray::{Array1, Array2};
use pathfinding::directed::strongly_connected_components::strongly_connected_components;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::kernel::{ag_two_step_row, attribute_distribution, depth_first_row, similarity_weights, Move};
use super::AliasSampler;
use crate::error::{Error, Result};
use crate::tripgraph::{AttributeGuidedGraph, Graphs, NodeType};

pub const DEFAULT_DENSE_CAP: usize = 2000;
pub const MAX_POWER_ITERATIONS: usize = 1_000_000;

/// `α·P̃ + (1-α)·P^AG` over all entity nodes in global order.
///
/// Restart mass and empty depth-first rows go uniformly to the OD nodes.
/// Attribute nodes are marginalized out of the AG part.
pub fn joint_transition_matrix(
    g: &Graphs,
    alpha: f64,
    epsilon: f64,
    cap: usize,
) -> Result<Array2<f64>> {
    let tg = &g.trip;
    let n = tg.n_nodes();
    if n > cap {
        return Err(Error::Config(format!(
            "joint matrix would have {n} states, above the dense cap of {cap}"
        )));
    }
    let n_od = tg.n_od();
    if n_od == 0 {
        return Err(Error::Infeasible("no OD nodes to restart from".into()));
    }
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let mut restart = 0.0;
        match depth_first_row(g, i, epsilon) {
            Some(row) => {
                for (m, w) in row.outcomes.iter().zip(&row.probs) {
                    match m {
                        Move::To(j) => p[[i, *j]] += alpha * w,
                        Move::Restart => restart += alpha * w,
                    }
                }
            }
            None => restart = alpha,
        }
        for o in 0..n_od {
            p[[i, o]] += restart / n_od as f64;
        }
        let (t, local) = tg.local(i);
        let off = tg.offset(t);
        for (j, w) in ag_two_step_row(g.attributes.get(t), local).into_iter().enumerate() {
            p[[i, off + j]] += (1.0 - alpha) * w;
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErgodicityReport {
    pub irreducible: bool,
    pub aperiodic: bool,
    /// strongly connected components of the support digraph
    pub components: usize,
    /// period of the class containing state 0
    pub period: usize,
}

fn support(p: &Array2<f64>) -> Vec<Vec<usize>> {
    p.rows()
        .into_iter()
        .map(|r| (0..r.len()).filter(|&j| r[j] > 0.0).collect())
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of the strongly connected class `members`: gcd over its internal
/// edges of `level(u) + 1 - level(v)`, levels from a BFS at one member.
fn class_period(succ: &[Vec<usize>], members: &[usize]) -> usize {
    let n = succ.len();
    let mut inside = vec![false; n];
    for &m in members {
        inside[m] = true;
    }
    let mut level = vec![usize::MAX; n];
    let root = members[0];
    level[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in &succ[u] {
            if inside[v] && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut d = 0;
    for &u in members {
        for &v in &succ[u] {
            if inside[v] {
                d = gcd(d, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    // a single state without a self-loop has no cycle at all
    d
}

fn classes(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let nodes: Vec<usize> = (0..succ.len()).collect();
    strongly_connected_components(&nodes, |&u| succ[u].iter().copied())
}

/// Irreducibility from the strong connectivity of the support digraph,
/// aperiodicity from the cycle-length gcd of the class holding state 0.
pub fn ergodicity_check(p: &Array2<f64>) -> ErgodicityReport {
    let succ = support(p);
    if succ.is_empty() {
        return ErgodicityReport {
            irreducible: false,
            aperiodic: false,
            components: 0,
            period: 0,
        };
    }
    let comps = classes(&succ);
    let home = comps.iter().find(|c| c.contains(&0)).expect("state 0 has a class");
    let period = class_period(&succ, home);
    ErgodicityReport {
        irreducible: comps.len() == 1,
        aperiodic: period == 1,
        components: comps.len(),
        period,
    }
}

/// Closed classes with period above one; power iteration cannot settle on them.
fn periodic_closed_class(succ: &[Vec<usize>]) -> Option<usize> {
    let comps = classes(succ);
    let mut class_of = vec![0; succ.len()];
    for (c, members) in comps.iter().enumerate() {
        for &m in members {
            class_of[m] = c;
        }
    }
    comps.iter().enumerate().find_map(|(c, members)| {
        let closed = members.iter().all(|&u| succ[u].iter().all(|&v| class_of[v] == c));
        let period = class_period(succ, members);
        (closed && period != 1).then_some(period)
    })
}

pub fn check_row_stochastic(p: &Array2<f64>, tol: f64) -> Result<()> {
    let (r, c) = p.dim();
    if r != c {
        return Err(Error::Invariant(format!("transition matrix is {r}x{c}, not square")));
    }
    for (i, row) in p.rows().into_iter().enumerate() {
        if row.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Invariant(format!("row {i} has a negative or non-finite entry")));
        }
        let s = row.sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::Invariant(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

/// Power iteration from the uniform vector.
pub fn stationary_distribution(p: &Array2<f64>, tol: f64) -> Result<Array1<f64>> {
    let n = p.nrows();
    let start = Array1::from_elem(n, 1.0 / n as f64);
    stationary_distribution_from(p, start, tol, MAX_POWER_ITERATIONS)
}

/// Power iteration `π ← πP` until the L1 change drops below `tol`.
///
/// A closed periodic class is reported up front: from a start vector that
/// happens to be invariant the iteration would stop at once, which would hide
/// that the limit does not exist for other starts.
pub fn stationary_distribution_from(
    p: &Array2<f64>,
    start: Array1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Array1<f64>> {
    check_row_stochastic(p, 1e-9)?;
    if start.len() != p.nrows() {
        return Err(Error::Invariant(format!(
            "start vector has {} entries for {} states",
            start.len(),
            p.nrows()
        )));
    }
    if let Some(period) = periodic_closed_class(&support(p)) {
        return Err(Error::Numerical(format!(
            "power iteration cannot converge: a closed class has period {period}"
        )));
    }
    let mut pi = &start / start.sum();
    for _ in 0..max_iter {
        let next = pi.dot(p);
        let change: f64 = (&next - &pi).mapv(f64::abs).sum();
        pi = next;
        if change < tol {
            let residual: f64 = (&pi.dot(p) - &pi).mapv(f64::abs).sum();
            if residual > 10.0 * tol {
                return Err(Error::Numerical(format!(
                    "stationary residual {residual:e} exceeds {:e}",
                    10.0 * tol
                )));
            }
            return Ok(pi);
        }
    }
    Err(Error::Numerical(format!(
        "power iteration did not converge within {max_iter} iterations"
    )))
}

/// Differences between the two-step AG law and the propagation operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationIdentity {
    /// max |Σ_k ā_ki·s_k(i,j) − ϑ_i(j)| with both factors unnormalized
    pub unnormalized: f64,
    /// max |normalized two-step row − ϑ with each term divided by its normalizers|
    pub normalized: f64,
}

/// Checks the two-step identity for every entity of `ag`.
///
/// The two-step side marginalizes explicit entity → attribute and
/// attribute → entity factor tables; the operator side uses
/// [`super::kernel::propagation_operator`]'s closed form.
pub fn propagation_identity(ag: &AttributeGuidedGraph) -> PropagationIdentity {
    let n = ag.n_entities();
    let k_count = ag.n_attributes();
    let mut unnormalized: f64 = 0.0;
    let mut normalized: f64 = 0.0;
    for i in 0..n {
        // step one: entity i → attribute k
        let to_attr: Vec<f64> = ag.a_bar.column(i).to_vec();
        let z_i: f64 = to_attr.iter().sum();
        let p_attr = attribute_distribution(ag, i);
        // step two: attribute k (reached from i) → entity j
        let to_entity: Vec<Vec<f64>> = (0..k_count).map(|k| similarity_weights(ag, k, i)).collect();
        let z_k: Vec<f64> = to_entity.iter().map(|w| w.iter().sum()).collect();

        let theta = super::kernel::propagation_operator(ag, i);
        let row = ag_two_step_row(ag, i);
        for j in 0..n {
            let mut two_step = 0.0;
            let mut theta_scaled = 0.0;
            for k in 0..k_count {
                two_step += to_attr[k] * to_entity[k][j];
                let term = ag.a_bar[[k, i]] * (1.0 - (ag.a_bar[[k, j]] - ag.a_bar[[k, i]]).abs());
                theta_scaled += if z_i > 0.0 {
                    term / (z_i * z_k[k])
                } else {
                    // all-zero attribute column: the uniform fallback replaces ā_ki / z_i
                    p_attr[k] * to_entity[k][j] / z_k[k]
                };
            }
            unnormalized = unnormalized.max((two_step - theta[j]).abs());
            normalized = normalized.max((row[j] - theta_scaled).abs());
        }
    }
    PropagationIdentity {
        unnormalized,
        normalized,
    }
}

/// Runs the first-order joint chain (no predecessor mixing) for `steps`
/// steps and returns the fraction of steps spent in each entity state.
///
/// Restarts go to a uniformly drawn OD node, matching
/// [`joint_transition_matrix`]; attribute tokens are not states.
pub fn simulate_chain_visits(
    sampler: &AliasSampler,
    alpha: f64,
    steps: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sampler.n_nodes();
    let n_od = sampler.count(NodeType::Od);
    let mut visits = vec![0u64; n];
    let mut state = rng.random_range(0..n_od);
    for _ in 0..steps {
        state = if rng.random::<f64>() < alpha {
            match sampler.sample_tg(state, &mut rng) {
                Some(Move::To(j)) => j,
                Some(Move::Restart) | None => rng.random_range(0..n_od),
            }
        } else {
            let (t, i) = sampler.local(state);
            let k = sampler.sample_attribute(t, i, &mut rng);
            sampler.offset(t) + sampler.sample_entity(t, k, i, &mut rng)
        };
        visits[state] += 1;
    }
    visits.into_iter().map(|v| v as f64 / steps as f64).collect()
}

/// Pearson chi-square goodness-of-fit p-value of `observed` counts against `probs`.
///
/// Outcomes with zero probability are dropped from the statistic; a draw on
/// one of them gives p = 0.
pub fn chi_square_p_value(observed: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            if o > 0 {
                return 0.0;
            }
            continue;
        }
        let e = p * total as f64;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return 1.0;
    }
    let dist = ChiSquared::new((cells - 1) as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::example_network;
    use crate::walk::{build_sampler, WalkConfig};
    use ndarray::arr2;

    fn example() -> Graphs {
        Graphs::build(&example_network(), 2.0).unwrap()
    }

    #[test]
    fn symmetric_two_state_chain() {
        let p = arr2(&[[0.5, 0.5], [0.5, 0.5]]);
        let pi = stationary_distribution(&p, 1e-12).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn periodic_chain_does_not_converge() {
        let p = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        assert!(matches!(stationary_distribution(&p, 1e-12), Err(Error::Numerical(_))));
    }

    #[test]
    fn three_cycle_has_period_three() {
        let p = arr2(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
        let r = ergodicity_check(&p);
        assert!(r.irreducible);
        assert!(!r.aperiodic);
        assert_eq!(r.period, 3);
    }

    #[test]
    fn self_loop_breaks_periodicity() {
        let p = arr2(&[[0.5, 0.5, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
        let r = ergodicity_check(&p);
        assert!(r.irreducible && r.aperiodic);
    }

    #[test]
    fn absorbing_state_is_reducible() {
        let p = arr2(&[[0.5, 0.5], [0.0, 1.0]]);
        let r = ergodicity_check(&p);
        assert!(!r.irreducible);
        assert_eq!(r.components, 2);
    }

    #[test]
    fn joint_rows_are_stochastic() {
        let g = example();
        for alpha in [0.3, 0.6, 0.9, 1.0] {
            let p = joint_transition_matrix(&g, alpha, 0.5, DEFAULT_DENSE_CAP).unwrap();
            check_row_stochastic(&p, 1e-9).unwrap();
        }
    }

    #[test]
    fn dense_cap_is_enforced() {
        let g = example();
        assert!(matches!(
            joint_transition_matrix(&g, 0.6, 0.5, 10),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn alpha_one_gives_depth_first_matrix() {
        let g = example();
        let p = joint_transition_matrix(&g, 1.0, 0.5, DEFAULT_DENSE_CAP).unwrap();
        // od2 (global 1) splits evenly over p2, p3
        assert_eq!(p[[1, 3]], 0.5);
        assert_eq!(p[[1, 4]], 0.5);
        // no AG mass: od2 has no self transition
        assert_eq!(p[[1, 1]], 0.0);
    }

    #[test]
    fn example_chain_is_ergodic() {
        let g = example();
        let p = joint_transition_matrix(&g, 0.6, 0.5, DEFAULT_DENSE_CAP).unwrap();
        let r = ergodicity_check(&p);
        assert!(r.irreducible && r.aperiodic, "{r:?}");
        let a = stationary_distribution(&p, 1e-14).unwrap();
        let mut point = Array1::zeros(p.nrows());
        point[p.nrows() - 1] = 1.0;
        let b = stationary_distribution_from(&p, point, 1e-14, MAX_POWER_ITERATIONS).unwrap();
        assert!((&a - &b).mapv(f64::abs).sum() < 1e-8);
    }

    #[test]
    fn identity_holds_on_the_example_graphs() {
        let g = example();
        for t in NodeType::ALL {
            let r = propagation_identity(g.attributes.get(t));
            assert!(r.unnormalized < 1e-12 && r.normalized < 1e-12, "{t:?} {r:?}");
        }
    }

    #[test]
    fn chain_visits_approach_stationary_law() {
        let g = example();
        let cfg = WalkConfig::default();
        let p = joint_transition_matrix(&g, cfg.alpha, cfg.epsilon, DEFAULT_DENSE_CAP).unwrap();
        let pi = stationary_distribution(&p, 1e-13).unwrap();
        let s = build_sampler(&g, &cfg);
        let freq = simulate_chain_visits(&s, cfg.alpha, 200_000, 3);
        let l1: f64 = freq.iter().zip(pi.iter()).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < 0.03, "L1 {l1}");
    }

    #[test]
    fn chi_square_flags_a_wrong_law() {
        assert!(chi_square_p_value(&[500, 500], &[0.5, 0.5]) > 0.99);
        assert!(chi_square_p_value(&[700, 300], &[0.5, 0.5]) < 1e-6);
        assert_eq!(chi_square_p_value(&[10, 1], &[1.0, 0.0]), 0.0);
    }
}
