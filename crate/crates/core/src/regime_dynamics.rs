//! Markov-chain view of the regime-label sequence: transition-matrix
//! estimation, stationary distribution and occupancy comparison.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub states: Vec<String>,
    /// Row `i` is the distribution of the next state given state `i`.
    pub probs: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
    /// Rows with no observed outgoing transition; they hold the uniform row.
    pub empty_rows: Vec<usize>,
    /// Pseudo-count added to every cell before normalizing.
    pub smoothing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TransitionOptions {
    /// Add-one smoothing of the counts.
    pub laplace: bool,
}

impl TransitionMatrix {
    /// Wraps a given row-stochastic matrix (rows must sum to 1 within 1e-10).
    pub fn from_probs(states: Vec<String>, probs: Vec<Vec<f64>>) -> Result<Self> {
        let r = states.len();
        if r == 0 || probs.len() != r || probs.iter().any(|row| row.len() != r) {
            return Err(Error::Validation(format!("transition matrix must be {r} x {r}")));
        }
        for (i, row) in probs.iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Validation(format!("row {i} has an entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::Validation(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self {
            counts: vec![vec![0; r]; r],
            states,
            probs,
            empty_rows: vec![],
            smoothing: 0.0,
        })
    }

    /// Divides each row by its sum; for matrices printed with rounding.
    pub fn renormalized(states: Vec<String>, mut probs: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in probs.iter_mut().enumerate() {
            let s: f64 = row.iter().sum();
            if !(s > 0.0) {
                return Err(Error::Validation(format!("row {i} has no mass")));
            }
            row.iter_mut().for_each(|p| *p /= s);
        }
        Self::from_probs(states, probs)
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    fn matrix(&self) -> DMatrix<f64> {
        let r = self.n_states();
        DMatrix::from_fn(r, r, |i, j| self.probs[i][j])
    }
}

/// Transition counts and maximum-likelihood probabilities. With `states`
/// given, every label must belong to it; otherwise the observed labels are
/// used in sorted order.
pub fn estimate_transition_matrix<S: AsRef<str>>(
    labels: &[S],
    states: Option<&[String]>,
    opts: TransitionOptions,
) -> Result<TransitionMatrix> {
    if labels.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 labels, got {}",
            labels.len()
        )));
    }
    let states: Vec<String> = match states {
        Some(s) => s.to_vec(),
        None => {
            let mut s: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
            s.sort();
            s.dedup();
            s
        }
    };
    let idx: Vec<usize> = labels
        .iter()
        .enumerate()
        .map(|(t, l)| {
            states
                .iter()
                .position(|s| s == l.as_ref())
                .ok_or_else(|| Error::Domain(format!("label {:?} at position {t} is not a declared state", l.as_ref())))
        })
        .collect::<Result<_>>()?;
    from_indices(&idx, states, opts)
}

/// As `estimate_transition_matrix` for labels already mapped to
/// `0..states.len()`.
pub fn from_indices(labels: &[usize], states: Vec<String>, opts: TransitionOptions) -> Result<TransitionMatrix> {
    let r = states.len();
    if let Some((t, l)) = labels.iter().enumerate().find(|(_, l)| **l >= r) {
        return Err(Error::Domain(format!("label index {l} at position {t} exceeds {r} states")));
    }
    if labels.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 labels".into()));
    }
    let mut counts = vec![vec![0u64; r]; r];
    for w in labels.windows(2) {
        counts[w[0]][w[1]] += 1;
    }
    let smoothing = if opts.laplace { 1.0 } else { 0.0 };
    let mut empty_rows = Vec::new();
    let probs = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total = row.iter().sum::<u64>() as f64 + smoothing * r as f64;
            if total == 0.0 {
                empty_rows.push(i);
                vec![1.0 / r as f64; r]
            } else {
                row.iter().map(|c| (*c as f64 + smoothing) / total).collect()
            }
        })
        .collect();
    Ok(TransitionMatrix {
        states,
        probs,
        counts,
        empty_rows,
        smoothing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub probs: Vec<f64>,
}

/// Strongly connected components of the positive-entry graph that no edge
/// leaves.
pub fn closed_classes(p: &TransitionMatrix) -> Vec<Vec<usize>> {
    let r = p.n_states();
    // transitive closure; state spaces here are tiny
    let mut reach = vec![vec![false; r]; r];
    for i in 0..r {
        reach[i][i] = true;
        for j in 0..r {
            if p.probs[i][j] > 0.0 {
                reach[i][j] = true;
            }
        }
    }
    for k in 0..r {
        for i in 0..r {
            if reach[i][k] {
                for j in 0..r {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; r];
    let mut classes = Vec::new();
    for i in 0..r {
        if seen[i] {
            continue;
        }
        let class: Vec<usize> = (0..r).filter(|j| reach[i][*j] && reach[*j][i]).collect();
        class.iter().for_each(|j| seen[*j] = true);
        let closed = class.iter().all(|a| (0..r).all(|b| !reach[*a][b] || class.contains(&b)));
        if closed {
            classes.push(class);
        }
    }
    classes
}

/// Solves `v' P = v'`, `sum v = 1` by replacing one equation of
/// `(P' - I) v = 0` with the normalization.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<StationaryDistribution> {
    for (i, row) in p.probs.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-8 || row.iter().any(|x| *x < 0.0) {
            return Err(Error::Validation(format!("row {i} is not a probability vector")));
        }
    }
    let classes = closed_classes(p);
    if classes.len() > 1 {
        return Err(Error::ReducibleChain { classes });
    }
    let r = p.n_states();
    let mut a = p.matrix().transpose() - DMatrix::<f64>::identity(r, r);
    a.row_mut(r - 1).fill(1.0);
    let mut b = DVector::<f64>::zeros(r);
    b[r - 1] = 1.0;
    let v = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::numerical("stationary system is singular"))?;
    if v.iter().any(|x| !x.is_finite() || *x < -1e-9) {
        return Err(Error::numerical_with("stationary solve produced invalid weights", v.as_slice().to_vec()));
    }
    let v: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let s: f64 = v.iter().sum();
    Ok(StationaryDistribution {
        probs: v.into_iter().map(|x| x / s).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyReport {
    pub empirical: Vec<f64>,
    pub stationary: Vec<f64>,
    /// `|empirical - stationary|` per state.
    pub gaps: Vec<f64>,
}

pub fn occupancy_report(labels: &[usize], v: &StationaryDistribution) -> Result<OccupancyReport> {
    if labels.is_empty() {
        return Err(Error::InsufficientData("no labels".into()));
    }
    let r = v.probs.len();
    let mut counts = vec![0usize; r];
    for (t, l) in labels.iter().enumerate() {
        *counts
            .get_mut(*l)
            .ok_or_else(|| Error::Domain(format!("label index {l} at position {t} exceeds {r} states")))? += 1;
    }
    let n = labels.len() as f64;
    let empirical: Vec<f64> = counts.iter().map(|c| *c as f64 / n).collect();
    let gaps = empirical.iter().zip(&v.probs).map(|(e, s)| (e - s).abs()).collect();
    Ok(OccupancyReport {
        empirical,
        stationary: v.probs.clone(),
        gaps,
    })
}

/// `n` states of the chain started at `start`.
pub fn simulate_chain(p: &TransitionMatrix, start: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut s = start;
    for _ in 0..n {
        out.push(s);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let row = &p.probs[s];
        s = row.len() - 1;
        for (j, pj) in row.iter().enumerate() {
            acc += pj;
            if u < acc {
                s = j;
                break;
            }
        }
    }
    out
}

/// Export shape `{states, P, counts, stationary, empirical_occupancy}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub states: Vec<String>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
    pub empty_rows: Vec<usize>,
    pub stationary: Option<Vec<f64>>,
    /// Set when the stationary distribution is not unique.
    pub stationary_error: Option<String>,
    pub empirical_occupancy: Vec<f64>,
}

impl DynamicsReport {
    pub fn build(labels: &[usize], p: &TransitionMatrix) -> Result<Self> {
        let r = p.n_states();
        let (stationary, stationary_error) = match stationary_distribution(p) {
            Ok(v) => (Some(v.probs), None),
            Err(e @ Error::ReducibleChain { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        let uniform = StationaryDistribution {
            probs: vec![1.0 / r as f64; r],
        };
        let occ = occupancy_report(labels, &uniform)?;
        Ok(Self {
            states: p.states.clone(),
            p: p.probs.clone(),
            counts: p.counts.clone(),
            empty_rows: p.empty_rows.clone(),
            stationary,
            stationary_error,
            empirical_occupancy: occ.empirical,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{i}")).collect()
    }

    #[test]
    fn constant_sequence() {
        let p = estimate_transition_matrix(&["A", "A", "A", "A"], None, TransitionOptions::default()).unwrap();
        assert_eq!(p.states, vec!["A"]);
        assert_eq!(p.probs, vec![vec![1.0]]);
    }

    #[test]
    fn alternating_sequence() {
        let p = estimate_transition_matrix(&["A", "B", "A", "B", "A"], None, TransitionOptions::default()).unwrap();
        assert_eq!(p.probs, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(p.counts, vec![vec![0, 2], vec![2, 0]]);
    }

    #[test]
    fn unknown_label() {
        let states = vec!["A".to_string()];
        let e = estimate_transition_matrix(&["A", "B"], Some(&states), TransitionOptions::default());
        assert!(matches!(e, Err(Error::Domain(_))));
    }

    #[test]
    fn unvisited_row_is_uniform_and_flagged() {
        let states = names(3);
        let p = from_indices(&[0, 1, 0, 1], states, TransitionOptions::default()).unwrap();
        assert_eq!(p.empty_rows, vec![2]);
        assert_eq!(p.probs[2], vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn laplace_smoothing() {
        let p = from_indices(&[0, 0, 1], names(2), TransitionOptions { laplace: true }).unwrap();
        assert_eq!(p.probs[0], vec![2.0 / 4.0, 2.0 / 4.0]);
        assert_eq!(p.probs[1], vec![0.5, 0.5]);
        assert!(p.empty_rows.is_empty());
    }

    #[test]
    fn identity_is_reducible() {
        let p = TransitionMatrix::from_probs(names(2), vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        match stationary_distribution(&p) {
            Err(Error::ReducibleChain { classes }) => assert_eq!(classes, vec![vec![0], vec![1]]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transient_state_gets_zero_weight() {
        let p = TransitionMatrix::from_probs(
            names(3),
            vec![vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![0.3, 0.3, 0.4]],
        )
        .unwrap();
        let v = stationary_distribution(&p).unwrap();
        assert!((v.probs[0] - 0.5).abs() < 1e-12 && v.probs[2].abs() < 1e-12);
    }

    #[test]
    fn doubly_stochastic_is_uniform() {
        let p = TransitionMatrix::from_probs(
            names(3),
            vec![vec![0.2, 0.5, 0.3], vec![0.3, 0.2, 0.5], vec![0.5, 0.3, 0.2]],
        )
        .unwrap();
        let v = stationary_distribution(&p).unwrap();
        for x in v.probs {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn occupancy_of_single_state() {
        let v = StationaryDistribution { probs: vec![1.0, 0.0] };
        let o = occupancy_report(&[0, 0, 0], &v).unwrap();
        assert_eq!(o.gaps, vec![0.0, 0.0]);
        assert_eq!(o.empirical.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn report_includes_empirical_occupancy() {
        let p = from_indices(&[0, 0, 1, 1], names(2), TransitionOptions::default()).unwrap();
        let r = DynamicsReport::build(&[0, 0, 1, 1], &p).unwrap();
        assert_eq!(r.empirical_occupancy, vec![0.5, 0.5]);
    }
}
