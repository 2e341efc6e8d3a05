//! Scaled forward-backward and log-space Viterbi for the multi-source HMM.
//!
//! Sources are conditionally independent given the true tag, so the
//! emission likelihood of token `t` under tag `y` is the product over
//! sources of `E_j[y][obs(t, j)]`.

use super::{DenoiseError, HmmParams, Tag};
use crate::weak_sources::VoteGrid;

/// Posterior tag marginals and the sequence log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// `T x K`, each row sums to 1.
    pub marginals: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

/// Expected sufficient statistics of one sequence.
#[derive(Debug, Clone)]
pub(crate) struct SequenceStats {
    pub log_likelihood: f64,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    /// `[source][tag][column]`
    pub emissions: Vec<Vec<Vec<f64>>>,
}

fn check_grid(params: &HmmParams, grid: &VoteGrid) -> Result<(), DenoiseError> {
    if grid.sources != params.sources {
        return Err(DenoiseError::Dimension(format!(
            "grid {} has sources {:?}, parameters expect {:?}",
            grid.doc_id, grid.sources, params.sources
        )));
    }
    let k = params.n_tags();
    for t in 0..grid.n_tokens {
        if let Some(bad) = grid.row(t).iter().flatten().find(|&&o| o >= k) {
            return Err(DenoiseError::Dimension(format!(
                "grid {} token {t} has tag index {bad} outside {k} tags",
                grid.doc_id
            )));
        }
    }
    Ok(())
}

pub(crate) fn column(params: &HmmParams, o: Option<Tag>) -> usize {
    o.unwrap_or(params.abstain_column())
}

/// `b[t][y]`: likelihood of the observations at `t` under tag `y`.
fn emission_likelihoods(params: &HmmParams, grid: &VoteGrid) -> Vec<Vec<f64>> {
    let k = params.n_tags();
    (0..grid.n_tokens)
        .map(|t| {
            let row = grid.row(t);
            (0..k)
                .map(|y| {
                    row.iter()
                        .enumerate()
                        .map(|(j, &o)| params.emission[j][y][column(params, o)])
                        .product()
                })
                .collect()
        })
        .collect()
}

struct Lattice {
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    scale: Vec<f64>,
    b: Vec<Vec<f64>>,
}

fn degenerate(grid: &VoteGrid, position: usize) -> DenoiseError {
    DenoiseError::DegenerateLikelihood {
        doc_id: grid.doc_id.clone(),
        position,
    }
}

fn lattice(params: &HmmParams, grid: &VoteGrid) -> Result<Lattice, DenoiseError> {
    check_grid(params, grid)?;
    let k = params.n_tags();
    let n = grid.n_tokens;
    let b = emission_likelihoods(params, grid);
    let mut alpha = vec![vec![0.0; k]; n];
    let mut scale = vec![0.0; n];
    for t in 0..n {
        for y in 0..k {
            let prior = if t == 0 {
                params.initial[y]
            } else {
                (0..k)
                    .map(|x| alpha[t - 1][x] * params.transition[x][y])
                    .sum()
            };
            alpha[t][y] = prior * b[t][y];
        }
        let c: f64 = alpha[t].iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(degenerate(grid, t));
        }
        alpha[t].iter_mut().for_each(|a| *a /= c);
        scale[t] = c;
    }
    let mut beta = vec![vec![1.0; k]; n];
    for t in (0..n.saturating_sub(1)).rev() {
        for x in 0..k {
            beta[t][x] = (0..k)
                .map(|y| params.transition[x][y] * b[t + 1][y] * beta[t + 1][y])
                .sum::<f64>()
                / scale[t + 1];
        }
    }
    Ok(Lattice {
        alpha,
        beta,
        scale,
        b,
    })
}

pub fn forward_backward(params: &HmmParams, grid: &VoteGrid) -> Result<Posterior, DenoiseError> {
    let lat = lattice(params, grid)?;
    let marginals = lat
        .alpha
        .iter()
        .zip(&lat.beta)
        .map(|(a, b)| {
            let mut g: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            super::params::normalize(&mut g);
            g
        })
        .collect();
    Ok(Posterior {
        marginals,
        log_likelihood: lat.scale.iter().map(|c| c.ln()).sum(),
    })
}

pub(crate) fn sequence_stats(params: &HmmParams, grid: &VoteGrid) -> Result<SequenceStats, DenoiseError> {
    let k = params.n_tags();
    let cols = params.n_columns();
    let lat = lattice(params, grid)?;
    let n = grid.n_tokens;
    let mut stats = SequenceStats {
        log_likelihood: lat.scale.iter().map(|c| c.ln()).sum(),
        initial: vec![0.0; k],
        transitions: vec![vec![0.0; k]; k],
        emissions: vec![vec![vec![0.0; cols]; k]; params.sources.len()],
    };
    for t in 0..n {
        let mut gamma: Vec<f64> = (0..k).map(|y| lat.alpha[t][y] * lat.beta[t][y]).collect();
        super::params::normalize(&mut gamma);
        if t == 0 {
            stats.initial.copy_from_slice(&gamma);
        }
        for (j, &o) in grid.row(t).iter().enumerate() {
            let c = column(params, o);
            for y in 0..k {
                stats.emissions[j][y][c] += gamma[y];
            }
        }
        if t + 1 < n {
            for x in 0..k {
                if lat.alpha[t][x] == 0.0 {
                    continue;
                }
                for y in 0..k {
                    let a = params.transition[x][y];
                    if a == 0.0 {
                        continue;
                    }
                    stats.transitions[x][y] +=
                        lat.alpha[t][x] * a * lat.b[t + 1][y] * lat.beta[t + 1][y] / lat.scale[t + 1];
                }
            }
        }
    }
    Ok(stats)
}

/// Most probable tag sequence and its joint log-probability. Ties go to
/// the lower tag index.
pub fn viterbi_scored(params: &HmmParams, grid: &VoteGrid) -> Result<(Vec<Tag>, f64), DenoiseError> {
    check_grid(params, grid)?;
    let k = params.n_tags();
    let n = grid.n_tokens;
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let b = emission_likelihoods(params, grid);
    let log_a: Vec<Vec<f64>> = params
        .transition
        .iter()
        .map(|r| r.iter().map(|p| p.ln()).collect())
        .collect();
    let mut delta: Vec<f64> = (0..k)
        .map(|y| params.initial[y].ln() + b[0][y].ln())
        .collect();
    if delta.iter().all(|d| *d == f64::NEG_INFINITY) {
        return Err(degenerate(grid, 0));
    }
    let mut back = vec![vec![0usize; k]; n];
    for t in 1..n {
        let mut next = vec![f64::NEG_INFINITY; k];
        for y in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for x in 0..k {
                let s = delta[x] + log_a[x][y];
                if s > best {
                    best = s;
                    arg = x;
                }
            }
            next[y] = best + b[t][y].ln();
            back[t][y] = arg;
        }
        if next.iter().all(|d| *d == f64::NEG_INFINITY) {
            return Err(degenerate(grid, t));
        }
        delta = next;
    }
    let mut last = 0;
    for y in 1..k {
        if delta[y] > delta[last] {
            last = y;
        }
    }
    let score = delta[last];
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, score))
}

pub fn viterbi(params: &HmmParams, grid: &VoteGrid) -> Result<Vec<Tag>, DenoiseError> {
    viterbi_scored(params, grid).map(|(p, _)| p)
}

/// Joint log-probability of `path` and the observations.
pub fn path_log_score(params: &HmmParams, grid: &VoteGrid, path: &[Tag]) -> f64 {
    assert_eq!(path.len(), grid.n_tokens);
    let mut score = 0.0;
    for (t, &y) in path.iter().enumerate() {
        score += if t == 0 {
            params.initial[y].ln()
        } else {
            params.transition[path[t - 1]][y].ln()
        };
        for (j, &o) in grid.row(t).iter().enumerate() {
            score += params.emission[j][y][column(params, o)].ln();
        }
    }
    score
}
