use std::ops::ControlFlow;

use rayon::prelude::*;

use super::inference::{sequence_stats, SequenceStats};
use super::params::normalize;
use super::{DenoiseError, FitConfig, HmmParams, TagSpace};
use crate::weak_sources::VoteGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub params: HmmParams,
    /// Log-likelihood of every parameter set visited, starting with the
    /// initialization. The last entry belongs to `params`.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Baum-Welch over a corpus of vote grids.
pub fn em_fit(grids: &[VoteGrid], tags: &TagSpace, cfg: &FitConfig) -> Result<Fit, DenoiseError> {
    em_fit_with(grids, tags, cfg, |_, _| ControlFlow::Continue(()))
}

/// Like [`em_fit`], calling `on_iteration(iteration, log_likelihood)` after
/// every E-step. Returning `Break` aborts with [`DenoiseError::Cancelled`].
pub fn em_fit_with<F>(grids: &[VoteGrid], tags: &TagSpace, cfg: &FitConfig, on_iteration: F) -> Result<Fit, DenoiseError>
where
    F: FnMut(usize, f64) -> ControlFlow<()>,
{
    cfg.check()?;
    let first = grids.first().ok_or(DenoiseError::NoDocuments)?;
    let init = HmmParams::initial_guess(tags, first.sources.clone(), &cfg.init, cfg.seed);
    run(grids, init, cfg, on_iteration)
}

/// Baum-Welch starting from `init` instead of the configured initial guess,
/// e.g. parameters saved by an earlier fit.
pub fn em_fit_from(grids: &[VoteGrid], init: HmmParams, cfg: &FitConfig) -> Result<Fit, DenoiseError> {
    cfg.check()?;
    init.validate()?;
    run(grids, init, cfg, |_, _| ControlFlow::Continue(()))
}

fn run<F>(grids: &[VoteGrid], mut params: HmmParams, cfg: &FitConfig, mut on_iteration: F) -> Result<Fit, DenoiseError>
where
    F: FnMut(usize, f64) -> ControlFlow<()>,
{
    let first = grids.first().ok_or(DenoiseError::NoDocuments)?;
    if first.n_sources() == 0 {
        return Err(DenoiseError::NoSources);
    }
    if let Some(g) = grids.iter().find(|g| g.sources != params.sources) {
        return Err(DenoiseError::Dimension(format!(
            "grid {} has sources {:?}, expected {:?}",
            g.doc_id, g.sources, params.sources
        )));
    }
    // accumulate in doc-id order so the reduction is reproducible
    let mut order: Vec<&VoteGrid> = grids.iter().collect();
    order.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let mut trace = Vec::new();
    let mut converged = false;
    for iter in 0..cfg.max_iters {
        let per_doc: Vec<SequenceStats> = order
            .par_iter()
            .map(|g| sequence_stats(&params, g))
            .collect::<Result<_, _>>()?;
        let ll: f64 = per_doc.iter().map(|s| s.log_likelihood).sum();
        trace.push(ll);
        if on_iteration(iter, ll).is_break() {
            return Err(DenoiseError::Cancelled);
        }
        if let [.., prev, last] = trace[..] {
            if (last - prev).abs() / prev.abs().max(f64::MIN_POSITIVE) < cfg.rel_tol {
                converged = true;
                break;
            }
        }
        if iter + 1 == cfg.max_iters {
            break;
        }
        params = m_step(&params, &per_doc, cfg.smoothing);
    }
    Ok(Fit {
        params,
        trace,
        converged,
    })
}

fn m_step(old: &HmmParams, stats: &[SequenceStats], eps: f64) -> HmmParams {
    let k = old.n_tags();
    let cols = old.n_columns();
    let tags = &old.tags;
    let mut initial = vec![0.0; k];
    let mut transition = vec![vec![0.0; k]; k];
    let mut emission = vec![vec![vec![0.0; cols]; k]; old.sources.len()];
    for s in stats {
        for y in 0..k {
            initial[y] += s.initial[y];
            for y2 in 0..k {
                transition[y][y2] += s.transitions[y][y2];
            }
        }
        for (acc, e) in emission.iter_mut().zip(&s.emissions) {
            for (acc_row, row) in acc.iter_mut().zip(e) {
                for (a, v) in acc_row.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
    }
    for (y, p) in initial.iter_mut().enumerate() {
        *p = if tags.start_allowed(y) { *p + eps } else { 0.0 };
    }
    normalize(&mut initial);
    for (x, row) in transition.iter_mut().enumerate() {
        for (y, a) in row.iter_mut().enumerate() {
            *a = if tags.transition_allowed(x, y) { *a + eps } else { 0.0 };
        }
        normalize(row);
    }
    for e in emission.iter_mut() {
        for row in e.iter_mut() {
            row.iter_mut().for_each(|v| *v += eps);
            normalize(row);
        }
    }
    HmmParams {
        tags: tags.clone(),
        sources: old.sources.clone(),
        initial,
        transition,
        emission,
    }
}
