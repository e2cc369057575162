//! Seeded multi-start search with coordinate-wise polish.
//!
//! Candidate `i` draws from its own ChaCha stream `(seed, i)`, candidates are
//! scored in parallel and collected in index order, and every reduction picks
//! the highest score with the smallest index on ties. The result is therefore
//! identical for any size of the rayon pool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A parameter vector with a score to maximize.
///
/// `set` followed by `score` may update cached state incrementally, but the
/// score must be a pure function of the current parameters.
pub trait VectorObjective: Send {
    fn params(&self) -> &[f64];
    fn set(&mut self, i: usize, v: f64);
    fn score(&mut self) -> f64;
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    /// Number of indexed starting candidates.
    pub budget: usize,
    pub seed: u64,
    /// How many of the best starts are polished.
    pub polish_top: usize,
    /// First polish step, relative to the candidate's largest coordinate.
    pub initial_step: f64,
    /// Polish stops once the step falls below this (relative) size.
    pub min_step: f64,
    /// A sweep counts as progress only above this relative improvement.
    pub rel_improvement: f64,
    pub max_sweeps: usize,
    /// Polish step scale used when every parameter starts at zero.
    pub zero_scale: f64,
}

impl SearchOptions {
    pub fn new(budget: usize, seed: u64) -> Self {
        SearchOptions {
            budget,
            seed,
            polish_top: 8,
            initial_step: 0.25,
            min_step: 1e-9,
            rel_improvement: 1e-10,
            max_sweeps: 400,
            zero_scale: 1.0,
        }
    }

    pub fn polish_top(mut self, k: usize) -> Self {
        self.polish_top = k;
        self
    }

    pub fn min_step(mut self, s: f64) -> Self {
        self.min_step = s;
        self
    }

    pub fn max_sweeps(mut self, n: usize) -> Self {
        self.max_sweeps = n;
        self
    }

    pub fn zero_scale(mut self, s: f64) -> Self {
        self.zero_scale = s;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Outcome<O> {
    pub index: usize,
    pub state: O,
    pub score: f64,
    pub evaluations: u64,
}

/// The independent random stream of candidate `index`.
pub fn candidate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Uniform on `[-scale, scale]^n`.
pub fn uniform_vector(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if scale == 0.0 {
                0.0
            } else {
                rng.gen_range(-scale..=scale)
            }
        })
        .collect()
}

/// `±e_i` and `e_i ± e_j`: the directions where polyhedral and `ℓ_1`/`ℓ_∞`
/// norms have their corners.
pub fn signed_patterns(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        out.push(e);
    }
    for i in 0..n {
        for j in i + 1..n {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e[j] = s;
                out.push(e);
            }
        }
    }
    out
}

fn ordered(score: f64) -> f64 {
    if score.is_nan() {
        f64::NEG_INFINITY
    } else {
        score
    }
}

/// `true` if `(a, ia)` beats `(b, ib)`: higher score, then smaller index.
fn beats(a: f64, ia: usize, b: f64, ib: usize) -> bool {
    let (a, b) = (ordered(a), ordered(b));
    a > b || (a == b && ia < ib)
}

/// Coordinate polish: try `±step` on every coordinate, keep strict
/// improvements, halve the step once a sweep improves by less than
/// `rel_improvement`. Returns the final score and the number of evaluations.
pub fn polish<O: VectorObjective>(state: &mut O, options: &SearchOptions) -> (f64, u64) {
    let mut best = ordered(state.score());
    let mut evaluations = 1;
    let scale = state.params().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 {
        scale
    } else {
        options.zero_scale
    };
    let mut step = options.initial_step * scale;
    let min_step = options.min_step * scale;
    let n = state.params().len();
    let mut sweeps = 0;
    while step >= min_step && sweeps < options.max_sweeps && best < f64::INFINITY {
        let before = best;
        for i in 0..n {
            let old = state.params()[i];
            for dir in [1.0, -1.0] {
                state.set(i, old + dir * step);
                let s = ordered(state.score());
                evaluations += 1;
                if s > best {
                    best = s;
                    break;
                }
                state.set(i, old);
            }
        }
        // restore the cached score for the accepted configuration
        let _ = state.score();
        sweeps += 1;
        let gain = best - before;
        if !(gain > options.rel_improvement * before.abs().max(1e-300)) {
            step *= 0.5;
        }
    }
    (best, evaluations)
}

/// Multi-start maximization. `make(index, rng)` must build candidate `index`
/// deterministically from the provided stream.
pub fn maximize<O, F>(options: &SearchOptions, make: F) -> Outcome<O>
where
    O: VectorObjective,
    F: Fn(usize, &mut ChaCha8Rng) -> O + Sync,
{
    let budget = options.budget.max(1);
    let build = |i: usize| make(i, &mut candidate_rng(options.seed, i));
    let scores: Vec<f64> = (0..budget)
        .into_par_iter()
        .map(|i| ordered(build(i).score()))
        .collect();
    let mut ranked: Vec<usize> = (0..budget).collect();
    ranked.sort_by(|&a, &b| {
        ordered(scores[b])
            .total_cmp(&ordered(scores[a]))
            .then(a.cmp(&b))
    });
    ranked.truncate(options.polish_top.max(1));
    let polished: Vec<(usize, O, f64, u64)> = ranked
        .into_par_iter()
        .map(|i| {
            let mut state = build(i);
            let (score, evals) = polish(&mut state, options);
            (i, state, score, evals)
        })
        .collect();
    let evaluations = budget as u64 + polished.iter().map(|p| p.3).sum::<u64>();
    let (index, state, score, _) = polished
        .into_iter()
        .reduce(|a, b| if beats(b.2, b.0, a.2, a.0) { b } else { a })
        .expect("at least one polished candidate");
    Outcome {
        index,
        state,
        score,
        evaluations,
    }
}
