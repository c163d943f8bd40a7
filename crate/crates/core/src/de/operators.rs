use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DeConfig, Individual, Population};
use crate::error::Result;
use crate::scalar::Scalar;

/// Stream used for the initial population.
pub const INIT_STREAM: u64 = 0;

/// Generator for one random stream derived from the master seed.
///
/// Individual `i` of generation `g` uses stream `((g + 1) << 32) | i`, so its draws
/// do not depend on how work is scheduled across threads.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn individual_stream(generation: usize, index: usize) -> u64 {
    ((generation as u64 + 1) << 32) | index as u64
}

fn unit<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>())
}

/// `NP` individuals with independent uniform weights and the mid-range scale factor.
pub fn initialize_population<T: Scalar>(
    cfg: &DeConfig<T>,
    num_models: usize,
) -> Result<Population<T>> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, INIT_STREAM);
    let f0 = cfg.initial_scale_factor();
    let mut individuals: Vec<Individual<T>> = (0..cfg.population_size)
        .map(|_| Individual::new((0..num_models).map(|_| unit(&mut rng)).collect(), f0))
        .collect();
    if cfg.one_hot_seeding {
        for (m, ind) in individuals.iter_mut().take(num_models).enumerate() {
            ind.weights = (0..num_models)
                .map(|k| if k == m { T::one() } else { T::zero() })
                .collect();
        }
    }
    Ok(Population {
        individuals,
        generation: 0,
    })
}

/// Three indices, pairwise distinct and distinct from `target`. Needs `np >= 4`.
pub fn pick_distinct<R: Rng + ?Sized>(rng: &mut R, np: usize, target: usize) -> [usize; 3] {
    assert!(np >= 4, "DE/rand/1 needs at least four individuals");
    let mut picked = [usize::MAX; 3];
    for k in 0..3 {
        picked[k] = loop {
            let r = rng.random_range(0..np);
            if r != target && !picked[..k].contains(&r) {
                break r;
            }
        };
    }
    picked
}

/// `x1 + f * (x2 - x3)`, clamped to `[0, 1]` per component.
pub fn mutate_with<T: Scalar>(x1: &[T], x2: &[T], x3: &[T], f: T) -> Vec<T> {
    x1.iter()
        .zip(x2)
        .zip(x3)
        .map(|((&a, &b), &c)| (a + f * (b - c)).clamp_to(T::zero(), T::one()))
        .collect()
}

/// DE/rand/1 mutant for `target_index`, with the indices it was built from.
pub fn mutate<T: Scalar, R: Rng + ?Sized>(
    target_index: usize,
    pop: &Population<T>,
    f: T,
    rng: &mut R,
) -> (Vec<T>, [usize; 3]) {
    let r = pick_distinct(rng, pop.len(), target_index);
    let w = |i: usize| pop.individuals[i].weights.as_slice();
    (mutate_with(w(r[0]), w(r[1]), w(r[2]), f), r)
}

/// `x + k * (v - x)`.
pub fn crossover_with<T: Scalar>(x: &[T], v: &[T], k: T) -> Vec<T> {
    assert_eq!(
        x.len(),
        v.len(),
        "crossover of vectors with different lengths"
    );
    x.iter().zip(v).map(|(&a, &b)| a + k * (b - a)).collect()
}

/// Arithmetic crossover with one `k ~ U[0, 1]` per trial.
pub fn crossover<T: Scalar, R: Rng + ?Sized>(x: &[T], v: &[T], rng: &mut R) -> Vec<T> {
    let k = unit(rng);
    crossover_with(x, v, k)
}

/// Keeps the trial only when it is strictly fitter than the target.
pub fn select<T: Scalar>(target: Individual<T>, trial: Individual<T>) -> Individual<T> {
    match (trial.fitness, target.fitness) {
        (Some(u), Some(x)) if u > x => trial,
        _ => target,
    }
}

/// Uniform draws consumed by one scale-factor update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleDraws<T> {
    pub rand1: T,
    pub rand2: T,
    pub rand3: T,
}

impl<T: Scalar> ScaleDraws<T> {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            rand1: unit(rng),
            rand2: unit(rng),
            rand3: unit(rng),
        }
    }

    /// Whether these draws land in one of the two local-search branches.
    pub fn wants_local_search(&self, cfg: &DeConfig<T>) -> bool {
        self.rand3 < cfg.tau3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleBranch {
    GoldenSection,
    HillClimb,
    Perturb,
    Keep,
}

/// Evaluates trial vectors built with a candidate scale factor.
pub trait TrialContext<T> {
    /// Evaluations this update may spend.
    fn budget(&self) -> usize;
    fn trial_fitness(&mut self, scale_factor: T) -> T;
}

/// Context with no evaluation budget; the local-search branches fall through.
pub struct NoLocalSearch;

impl<T: Scalar> TrialContext<T> for NoLocalSearch {
    fn budget(&self) -> usize {
        0
    }
    fn trial_fitness(&mut self, _: T) -> T {
        T::zero()
    }
}

/// Golden-section maximisation of trial fitness over `[lo, hi]`.
/// Returns the best evaluated `(scale_factor, fitness)`, or `None` with no budget.
pub fn golden_section_scale<T: Scalar>(
    ctx: &mut dyn TrialContext<T>,
    lo: T,
    hi: T,
    budget: usize,
) -> Option<(T, T)> {
    if budget == 0 {
        return None;
    }
    let mut best: Option<(T, T)> = None;
    let mut eval = |ctx: &mut dyn TrialContext<T>, f: T| {
        let v = ctx.trial_fitness(f);
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((f, v));
        }
        v
    };
    if budget == 1 || lo >= hi {
        eval(ctx, (lo + hi) / T::lit(2.0));
        return best;
    }
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(ctx, c);
    let mut fd = eval(ctx, d);
    for _ in 2..budget {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(ctx, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(ctx, d);
        }
    }
    best
}

/// Hill climbing from `start` with step 0.1, halved whenever neither neighbour improves.
pub fn hill_climb_scale<T: Scalar>(
    ctx: &mut dyn TrialContext<T>,
    start: T,
    lo: T,
    hi: T,
    budget: usize,
) -> Option<(T, T)> {
    if budget == 0 {
        return None;
    }
    let mut cur = start.clamp_to(lo, hi);
    let mut f_cur = ctx.trial_fitness(cur);
    let mut used = 1;
    let mut step = T::lit(0.1);
    let min_step = T::lit(1e-6);
    while used < budget && step > min_step {
        let mut moved = false;
        for cand in [cur + step, cur - step] {
            let cand = cand.clamp_to(lo, hi);
            if cand == cur || used >= budget {
                continue;
            }
            let v = ctx.trial_fitness(cand);
            used += 1;
            if v > f_cur {
                cur = cand;
                f_cur = v;
                moved = true;
                break;
            }
        }
        if !moved {
            step /= T::lit(2.0);
        }
    }
    Some((cur, f_cur))
}

/// Scale-factor update for given draws; branches are tested in order
/// golden-section, hill-climb, perturbation, keep. Local-search branches
/// without budget fall through to the later tests.
pub fn adapt_scale_factor_with<T: Scalar>(
    f: T,
    draws: ScaleDraws<T>,
    cfg: &DeConfig<T>,
    ctx: &mut dyn TrialContext<T>,
) -> (T, ScaleBranch) {
    let budget = ctx.budget();
    let ScaleDraws {
        rand1,
        rand2,
        rand3,
    } = draws;
    let mut out = None;
    if rand3 < cfg.tau2 {
        out = golden_section_scale(ctx, cfg.f_lo, cfg.f_hi, budget)
            .map(|(v, _)| (v, ScaleBranch::GoldenSection));
    } else if rand3 < cfg.tau3 {
        out = hill_climb_scale(ctx, f, cfg.f_lo, cfg.f_hi, budget)
            .map(|(v, _)| (v, ScaleBranch::HillClimb));
    }
    let (v, branch) = out.unwrap_or_else(|| {
        if rand2 < cfg.tau1 && rand3 > cfg.tau3 {
            (f + cfg.f_a * rand1, ScaleBranch::Perturb)
        } else {
            (f, ScaleBranch::Keep)
        }
    });
    (v.clamp_to(cfg.f_lo, cfg.f_hi), branch)
}

pub fn adapt_scale_factor<T: Scalar, R: Rng + ?Sized>(
    f: T,
    rng: &mut R,
    cfg: &DeConfig<T>,
    ctx: &mut dyn TrialContext<T>,
) -> T {
    adapt_scale_factor_with(f, ScaleDraws::draw(rng), cfg, ctx).0
}
