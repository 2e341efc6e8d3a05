use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DenoiseError, TagSpace, OUTSIDE};

const ROW_TOLERANCE: f64 = 1e-9;

/// Multi-source HMM parameters over a BIO tag space.
///
/// `emission[j][y][o]` is the probability that source `j` reports column `o`
/// when the true tag is `y`; columns `0..K` are tags and column `K` is the
/// abstain symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub tags: TagSpace,
    pub sources: Vec<String>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<Vec<f64>>>,
}

/// Initial-parameter shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// Emission mass on the `observed == true tag` column.
    pub diag_mass: f64,
    /// Weight of `y -> y` relative to other valid successors.
    pub self_loop_boost: f64,
    /// Seeded multiplicative noise on the initial emissions; 0 disables it.
    pub jitter: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            diag_mass: 0.8,
            self_loop_boost: 2.0,
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Stop once the relative log-likelihood change falls below this.
    pub rel_tol: f64,
    /// Pseudo-count added to every structurally allowed entry.
    pub smoothing: f64,
    pub seed: u64,
    pub init: InitConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 50,
            rel_tol: 1e-4,
            smoothing: 1e-6,
            seed: 0,
            init: InitConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn check(&self) -> Result<(), DenoiseError> {
        let bad = |m: &str| Err(DenoiseError::InvalidConfig(m.to_string()));
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol must be positive");
        }
        if !(self.smoothing > 0.0) {
            return bad("smoothing must be positive");
        }
        if !(0.0..=1.0).contains(&self.init.diag_mass) {
            return bad("diag_mass must lie in [0, 1]");
        }
        if !(self.init.self_loop_boost > 0.0) {
            return bad("self_loop_boost must be positive");
        }
        if !(self.init.jitter >= 0.0) {
            return bad("jitter must be non-negative");
        }
        Ok(())
    }
}

pub(crate) fn normalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        row.iter_mut().for_each(|x| *x /= sum);
    }
}

impl HmmParams {
    pub fn n_tags(&self) -> usize {
        self.tags.len()
    }

    /// Number of emission columns (tags plus abstain).
    pub fn n_columns(&self) -> usize {
        self.tags.len() + 1
    }

    pub fn abstain_column(&self) -> usize {
        self.tags.len()
    }

    /// Valid BIO transitions.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        let k = self.n_tags();
        (0..k)
            .map(|x| (0..k).map(|y| self.tags.transition_allowed(x, y)).collect())
            .collect()
    }

    /// Starting point for EM: uniform valid starts, uniform valid successors
    /// with a boosted self-loop, emissions concentrated on the diagonal (for
    /// `O`, on the diagonal and the abstain column).
    pub fn initial_guess(tags: &TagSpace, sources: Vec<String>, init: &InitConfig, seed: u64) -> Self {
        let k = tags.len();
        let mut initial: Vec<f64> = (0..k)
            .map(|y| if tags.start_allowed(y) { 1.0 } else { 0.0 })
            .collect();
        normalize(&mut initial);

        let transition = (0..k)
            .map(|x| {
                let mut row: Vec<f64> = (0..k)
                    .map(|y| match (tags.transition_allowed(x, y), x == y) {
                        (false, _) => 0.0,
                        (true, true) => init.self_loop_boost,
                        (true, false) => 1.0,
                    })
                    .collect();
                normalize(&mut row);
                row
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let off = (1.0 - init.diag_mass) / k as f64;
        let emission = sources
            .iter()
            .map(|_| {
                (0..k)
                    .map(|y| {
                        // sources rarely say O out loud, so the O row shares
                        // its diagonal mass with the abstain column
                        let mut row: Vec<f64> = (0..=k)
                            .map(|o| match (y, o) {
                                (OUTSIDE, o) if o == OUTSIDE || o == k => (init.diag_mass + off) / 2.0,
                                _ if o == y => init.diag_mass,
                                _ => off,
                            })
                            .collect();
                        if init.jitter > 0.0 {
                            for v in row.iter_mut() {
                                *v *= 1.0 + init.jitter * rng.random::<f64>();
                            }
                        }
                        normalize(&mut row);
                        row
                    })
                    .collect()
            })
            .collect();

        HmmParams {
            tags: tags.clone(),
            sources,
            initial,
            transition,
            emission,
        }
    }

    /// Checks shapes, non-negativity, row sums and the BIO mask.
    pub fn validate(&self) -> Result<(), DenoiseError> {
        let k = self.n_tags();
        let bad = |m: String| Err(DenoiseError::InvalidParams(m));
        let row_ok = |row: &[f64]| {
            row.iter().all(|&x| x >= 0.0 && x.is_finite())
                && (row.iter().sum::<f64>() - 1.0).abs() <= ROW_TOLERANCE
        };
        if self.initial.len() != k || !row_ok(&self.initial) {
            return bad("initial distribution".into());
        }
        if self.transition.len() != k {
            return bad("transition shape".into());
        }
        for (x, row) in self.transition.iter().enumerate() {
            if row.len() != k || !row_ok(row) {
                return bad(format!("transition row {x}"));
            }
            for (y, &p) in row.iter().enumerate() {
                if p != 0.0 && !self.tags.transition_allowed(x, y) {
                    return bad(format!("masked transition {x}->{y} is {p}"));
                }
            }
        }
        if self.emission.len() != self.sources.len() {
            return bad("one emission matrix per source".into());
        }
        for (j, e) in self.emission.iter().enumerate() {
            if e.len() != k {
                return bad(format!("emission matrix {j} shape"));
            }
            for (y, row) in e.iter().enumerate() {
                if row.len() != k + 1 || !row_ok(row) {
                    return bad(format!("emission {j} row {y}"));
                }
            }
        }
        Ok(())
    }
}
