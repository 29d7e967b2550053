//! The three alternating-least-squares trainers: baseline fixed-dimension,
//! zero-padded mixed-dimension, and projected mixed-dimension, including the
//! flatten-trick projection-matrix update, interaction subsampling, and the
//! B -> A -> Y -> X iteration schedule.
//!
//! Parallelism contract: within a half-step the fixed side is read-only and
//! per-entity solves are independent; cross-entity reductions (projection
//! Gram matrices, loss sums) are computed as partial accumulators over
//! fixed-size chunks and merged in chunk order, so results are bit-identical
//! for any worker count.

use std::time::Instant;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Adjacency, DimensionScheme, RatingDataset, Split};
use crate::linalg::{dot, flatten_outer_into, unflatten, Accumulator};
use crate::model::{
    count_parameters, init_params, project_all, EmbeddingStore, ModelParams, ProjectionSet,
    Variant,
};
use crate::{Error, Matrix, Normals, Real, Result, Vector};

const GRAM_CHUNK: usize = 4096;
const LOSS_CHUNK: usize = 8192;

/// Training hyperparameters and schedule knobs.
#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    /// Embedding regularization.
    pub lambda: Real,
    /// Projection-matrix regularization (projected variant only).
    pub beta: Real,
    pub iterations: usize,
    /// Run the eval hook every this many iterations.
    pub eval_every: usize,
    /// Bernoulli(1/p^2) row subsampling for projection updates.
    pub subsample: bool,
    /// Scale beta by the realized keep fraction so the
    /// regularization-to-data ratio of the subsampled system matches the
    /// full one.
    pub rescale_beta_on_subsample: bool,
    /// Pin all trainable projections to truncated identities and skip their
    /// updates; reduces the projected variant to zero-padding.
    pub frozen_identity_projections: bool,
    /// Record the train loss after every update group, not just once per
    /// iteration.
    pub trace_steps: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(lambda: Real, beta: Real) -> Self {
        Self {
            lambda,
            beta,
            iterations: 30,
            eval_every: 5,
            subsample: false,
            rescale_beta_on_subsample: true,
            frozen_identity_projections: false,
            trace_steps: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config("beta must be positive".into()));
        }
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// The objective value split into its terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub squared_error: Real,
    pub embedding_penalty: Real,
    pub projection_penalty: Real,
    pub total: Real,
}

/// Update group after which a loss sample was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    Init,
    ProjectionB,
    ProjectionA,
    Items,
    Users,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossSample {
    pub iteration: usize,
    pub stage: Stage,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSample {
    pub iteration: usize,
    pub score: Real,
}

/// Per-iteration trace plus the best-iteration bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub variant: Variant,
    pub loss_trace: Vec<LossSample>,
    pub eval_trace: Vec<EvalSample>,
    pub best_iteration: Option<usize>,
    pub best_score: Option<Real>,
    pub parameter_count: usize,
}

/// Wall time spent in each update group of one iteration.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct IterationTimings {
    pub project_secs: f64,
    pub projection_b_secs: f64,
    pub projection_a_secs: f64,
    pub items_secs: f64,
    pub users_secs: f64,
}

impl IterationTimings {
    pub fn total_secs(&self) -> f64 {
        self.project_secs
            + self.projection_b_secs
            + self.projection_a_secs
            + self.items_secs
            + self.users_secs
    }
}

/// Closed-form baseline update for one entity: ridge regression of its
/// ratings against the fixed side's embedding rows.
pub fn solve_entity_baseline(
    neighbors: &[u32],
    targets: &[Real],
    fixed_side: &Matrix,
    lambda: Real,
) -> Result<Vector> {
    let mut ne = Normals::new(fixed_side.cols());
    for (&n, &r) in neighbors.iter().zip(targets) {
        ne.accumulate(fixed_side.row(n as usize), r);
    }
    ne.solve_regularized(lambda)
}

/// Zero-pad update: features are the fixed side's live prefixes sliced or
/// zero-extended to this entity's own dimension.
pub fn solve_entity_zeropad(
    neighbors: &[u32],
    targets: &[Real],
    fixed_side: &EmbeddingStore,
    own_dim: usize,
    lambda: Real,
) -> Result<Vector> {
    let mut ne = Normals::new(own_dim);
    let mut feature = vec![0.0; own_dim];
    for (&n, &r) in neighbors.iter().zip(targets) {
        let v = fixed_side.vector(n as usize);
        let k = v.len().min(own_dim);
        feature[..k].copy_from_slice(&v[..k]);
        for f in feature[k..].iter_mut() {
            *f = 0.0;
        }
        ne.accumulate(&feature, r);
    }
    ne.solve_regularized(lambda)
}

/// Projected update: features are the fixed side's already-projected rows
/// pulled back through this entity's own projection transpose
/// (`own_projection == None` encodes the identity at `own_dim == d`).
pub fn solve_entity_projected(
    neighbors: &[u32],
    targets: &[Real],
    fixed_projected: &Matrix,
    own_projection: Option<&Matrix>,
    own_dim: usize,
    lambda: Real,
) -> Result<Vector> {
    debug_assert!(own_projection.is_some() || own_dim == fixed_projected.cols());
    let mut ne = Normals::new(own_dim);
    let mut feature = vec![0.0; own_dim];
    for (&n, &r) in neighbors.iter().zip(targets) {
        let row = fixed_projected.row(n as usize);
        match own_projection {
            Some(a) => {
                a.matvec_transpose_into(row, &mut feature);
                ne.accumulate(&feature, r);
            }
            None => ne.accumulate(row, r),
        }
    }
    ne.solve_regularized(lambda)
}

/// Closed-form update of one `d x p` projection matrix from the
/// interactions whose own-side entity has dimension `p`.
///
/// Each interaction contributes the feature `flatten(g * e^T)` where `g` is
/// the other side's projected row and `e` this side's raw embedding; the
/// resulting `pd x pd` ridge system is accumulated in parallel over
/// fixed-size chunks, merged in chunk order, solved with `beta`, and
/// reshaped back.
pub fn update_projection(
    p: usize,
    d: usize,
    interactions: &[(u32, u32, Real)],
    own_embeddings: &EmbeddingStore,
    other_projected: &Matrix,
    beta: Real,
) -> Result<Matrix> {
    if interactions.is_empty() {
        return Err(Error::InvalidInput(
            "projection update needs at least one interaction".into(),
        ));
    }
    let dim = p * d;
    let partials: Vec<Normals> = interactions
        .par_chunks(GRAM_CHUNK)
        .map(|chunk| {
            let mut ne = Normals::new(dim);
            let mut feature = vec![0.0; dim];
            for &(own, other, target) in chunk {
                let e = own_embeddings.vector(own as usize);
                debug_assert_eq!(e.len(), p);
                flatten_outer_into(other_projected.row(other as usize), e, &mut feature);
                ne.accumulate(&feature, target);
            }
            ne
        })
        .collect();
    let mut ne = Normals::new(dim);
    for part in &partials {
        ne.merge(part);
    }
    let w = ne.solve_regularized(beta)?;
    Ok(unflatten(&w, d, p))
}

/// Independent Bernoulli(1/p^2) row subsampling, seeded; `p == 1` keeps
/// everything.
pub fn subsample_interactions<T: Copy>(interactions: &[T], p: usize, seed: u64) -> Vec<T> {
    assert!(p >= 1, "dimension must be at least 1");
    if p == 1 {
        return interactions.to_vec();
    }
    let keep = 1.0 / (p * p) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    interactions
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < keep)
        .collect()
}

/// Exact objective value for the variant over one split: squared error plus
/// the lambda and beta penalty terms, each reported separately.
pub fn compute_loss(
    params: &ModelParams,
    ds: &RatingDataset,
    split: Split,
    lambda: Real,
    beta: Real,
) -> LossBreakdown {
    let d = params.max_dim;
    let users = project_all(&params.user_embeddings, params.user_projections.as_ref(), d);
    let items = project_all(&params.item_embeddings, params.item_projections.as_ref(), d);
    let rows: Vec<(u32, u32, Real)> = ds
        .split_interactions(split)
        .map(|it| (it.user, it.item, it.target()))
        .collect();
    let partials: Vec<Accumulator<Real>> = rows
        .par_chunks(LOSS_CHUNK)
        .map(|chunk| {
            let mut acc = Accumulator::default();
            for &(u, i, r) in chunk {
                let err = dot(users.row(u as usize), items.row(i as usize)) - r;
                acc.add(err * err);
            }
            acc
        })
        .collect();
    let mut se = Accumulator::default();
    for part in partials {
        se.merge(part);
    }

    let mut emb = Accumulator::default();
    for v in params
        .user_embeddings
        .values()
        .iter()
        .chain(params.item_embeddings.values())
    {
        emb.add(v * v);
    }
    let proj_frob = params
        .user_projections
        .as_ref()
        .map_or(0.0, |p| p.frobenius_sq())
        + params
            .item_projections
            .as_ref()
            .map_or(0.0, |p| p.frobenius_sq());

    let squared_error = se.total();
    let embedding_penalty = lambda * emb.total();
    let projection_penalty = beta * proj_frob;
    LossBreakdown {
        squared_error,
        embedding_penalty,
        projection_penalty,
        total: squared_error + embedding_penalty + projection_penalty,
    }
}

/// Convenience wrapper: build a [`Trainer`] and run it to completion.
pub fn train(
    ds: &RatingDataset,
    scheme: &DimensionScheme,
    variant: Variant,
    config: TrainConfig,
    eval: Option<EvalHook<'_>>,
) -> Result<(ModelParams, TrainReport)> {
    Trainer::new(ds, scheme, variant, config)?.train(eval)
}

/// Called with the current parameters and the 1-based iteration index;
/// returns the validation score to maximize.
pub type EvalHook<'h> = &'h mut dyn FnMut(&ModelParams, usize) -> Result<Real>;

pub struct Trainer<'a> {
    ds: &'a RatingDataset,
    scheme: &'a DimensionScheme,
    variant: Variant,
    config: TrainConfig,
    params: ModelParams,
    // per trainable dimension p: (own entity, other entity, target), own
    // side first
    user_groups: Vec<(u32, Vec<(u32, u32, Real)>)>,
    item_groups: Vec<(u32, Vec<(u32, u32, Real)>)>,
    completed_iterations: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        ds: &'a RatingDataset,
        scheme: &'a DimensionScheme,
        variant: Variant,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if scheme.user_dims().len() != ds.num_users()
            || scheme.item_dims().len() != ds.num_items()
        {
            return Err(Error::Config(format!(
                "scheme covers {}x{} entities but dataset has {}x{}",
                scheme.user_dims().len(),
                scheme.item_dims().len(),
                ds.num_users(),
                ds.num_items()
            )));
        }
        if config.frozen_identity_projections && variant != Variant::Projected {
            return Err(Error::Config(
                "frozen identity projections only apply to the projected variant".into(),
            ));
        }
        for u in 0..ds.num_users() {
            if ds.train_by_user().degree(u) == 0 {
                return Err(Error::Training(format!(
                    "user {} has no train ratings",
                    ds.user_tokens()[u]
                )));
            }
        }
        for i in 0..ds.num_items() {
            if ds.train_by_item().degree(i) == 0 {
                return Err(Error::Training(format!(
                    "item {} has no train ratings",
                    ds.item_tokens()[i]
                )));
            }
        }

        let mut params = init_params(scheme, variant, config.seed);
        if config.frozen_identity_projections {
            for side in [&mut params.user_projections, &mut params.item_projections] {
                if let Some(set) = side {
                    set.set_truncated_identities();
                }
            }
        }

        let (user_groups, item_groups) = if variant == Variant::Projected {
            let d = scheme.max_dim() as u32;
            let mut users: Vec<(u32, Vec<(u32, u32, Real)>)> = scheme
                .trainable_dims(scheme.user_dims())
                .into_iter()
                .map(|p| (p, Vec::new()))
                .collect();
            let mut items: Vec<(u32, Vec<(u32, u32, Real)>)> = scheme
                .trainable_dims(scheme.item_dims())
                .into_iter()
                .map(|p| (p, Vec::new()))
                .collect();
            for it in ds.split_interactions(Split::Train) {
                let up = scheme.user_dims()[it.user as usize];
                if up < d {
                    let slot = users.iter_mut().find(|(p, _)| *p == up).expect("key");
                    slot.1.push((it.user, it.item, it.target()));
                }
                let ip = scheme.item_dims()[it.item as usize];
                if ip < d {
                    let slot = items.iter_mut().find(|(p, _)| *p == ip).expect("key");
                    slot.1.push((it.item, it.user, it.target()));
                }
            }
            (users, items)
        } else {
            (Vec::new(), Vec::new())
        };

        Ok(Self {
            ds,
            scheme,
            variant,
            config,
            params,
            user_groups,
            item_groups,
            completed_iterations: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn completed_iterations(&self) -> usize {
        self.completed_iterations
    }

    pub fn run_iteration(&mut self) -> Result<IterationTimings> {
        self.run_iteration_observed(|_, _| {})
    }

    /// One full iteration; the observer fires after every update group.
    pub fn run_iteration_observed<F>(&mut self, mut observe: F) -> Result<IterationTimings>
    where
        F: FnMut(Stage, &ModelParams),
    {
        let mut timings = IterationTimings::default();
        match self.variant {
            Variant::Baseline => {
                let d = self.params.max_dim;
                timed(&mut timings.items_secs, || -> Result<()> {
                    let table = project_all(&self.params.user_embeddings, None, d);
                    let solved = solve_side_baseline(
                        self.ds.train_by_item(),
                        &table,
                        self.config.lambda,
                        "item",
                        self.ds.item_tokens(),
                    )?;
                    write_back(&mut self.params.item_embeddings, solved);
                    Ok(())
                })?;
                observe(Stage::Items, &self.params);
                timed(&mut timings.users_secs, || -> Result<()> {
                    let table = project_all(&self.params.item_embeddings, None, d);
                    let solved = solve_side_baseline(
                        self.ds.train_by_user(),
                        &table,
                        self.config.lambda,
                        "user",
                        self.ds.user_tokens(),
                    )?;
                    write_back(&mut self.params.user_embeddings, solved);
                    Ok(())
                })?;
                observe(Stage::Users, &self.params);
            }
            Variant::ZeroPad => {
                timed(&mut timings.items_secs, || -> Result<()> {
                    let solved = solve_side_zeropad(
                        self.ds.train_by_item(),
                        &self.params.user_embeddings,
                        self.params.item_embeddings.dims(),
                        self.config.lambda,
                        "item",
                        self.ds.item_tokens(),
                    )?;
                    write_back(&mut self.params.item_embeddings, solved);
                    Ok(())
                })?;
                observe(Stage::Items, &self.params);
                timed(&mut timings.users_secs, || -> Result<()> {
                    let solved = solve_side_zeropad(
                        self.ds.train_by_user(),
                        &self.params.item_embeddings,
                        self.params.user_embeddings.dims(),
                        self.config.lambda,
                        "user",
                        self.ds.user_tokens(),
                    )?;
                    write_back(&mut self.params.user_embeddings, solved);
                    Ok(())
                })?;
                observe(Stage::Users, &self.params);
            }
            Variant::Projected => {
                self.run_projected_iteration(&mut observe, &mut timings)?;
            }
        }
        self.completed_iterations += 1;
        Ok(timings)
    }

    /// Parameter updates in order B, A, Y, X, recomputing the projected
    /// tables before each group that needs them.
    fn run_projected_iteration<F>(
        &mut self,
        observe: &mut F,
        timings: &mut IterationTimings,
    ) -> Result<IterationTimings>
    where
        F: FnMut(Stage, &ModelParams),
    {
        let d = self.params.max_dim;
        let iteration = (self.completed_iterations + 1) as u64;
        let frozen = self.config.frozen_identity_projections;

        // B step: item-side projections from projected users
        let user_table = timed(&mut timings.project_secs, || {
            project_all(&self.params.user_embeddings, self.params.user_projections.as_ref(), d)
        });
        if !frozen {
            timed(&mut timings.projection_b_secs, || {
                update_projection_groups(
                    &self.item_groups,
                    &self.params.item_embeddings,
                    self.params.item_projections.as_mut().expect("projected"),
                    &user_table,
                    d,
                    &self.config,
                    iteration,
                    SIDE_ITEM,
                    "item",
                )
            })?;
            observe(Stage::ProjectionB, &self.params);
        }

        // A step: user-side projections from projected items
        let item_table = timed(&mut timings.project_secs, || {
            project_all(&self.params.item_embeddings, self.params.item_projections.as_ref(), d)
        });
        if !frozen {
            timed(&mut timings.projection_a_secs, || {
                update_projection_groups(
                    &self.user_groups,
                    &self.params.user_embeddings,
                    self.params.user_projections.as_mut().expect("projected"),
                    &item_table,
                    d,
                    &self.config,
                    iteration,
                    SIDE_USER,
                    "user",
                )
            })?;
            observe(Stage::ProjectionA, &self.params);
        }

        // Y step: item embeddings against projected users
        let user_table = timed(&mut timings.project_secs, || {
            project_all(&self.params.user_embeddings, self.params.user_projections.as_ref(), d)
        });
        timed(&mut timings.items_secs, || -> Result<()> {
            let solved = solve_side_projected(
                self.ds.train_by_item(),
                &user_table,
                self.params.item_projections.as_ref().expect("projected"),
                self.params.item_embeddings.dims(),
                self.config.lambda,
                "item",
                self.ds.item_tokens(),
            )?;
            write_back(&mut self.params.item_embeddings, solved);
            Ok(())
        })?;
        observe(Stage::Items, &self.params);

        // X step: user embeddings against projected items
        let item_table = timed(&mut timings.project_secs, || {
            project_all(&self.params.item_embeddings, self.params.item_projections.as_ref(), d)
        });
        timed(&mut timings.users_secs, || -> Result<()> {
            let solved = solve_side_projected(
                self.ds.train_by_user(),
                &item_table,
                self.params.user_projections.as_ref().expect("projected"),
                self.params.user_embeddings.dims(),
                self.config.lambda,
                "user",
                self.ds.user_tokens(),
            )?;
            write_back(&mut self.params.user_embeddings, solved);
            Ok(())
        })?;
        observe(Stage::Users, &self.params);

        Ok(*timings)
    }

    /// Runs the configured number of iterations, evaluating every
    /// `eval_every` iterations and returning the best-scoring snapshot (the
    /// final parameters when no evaluation ran).
    pub fn train(mut self, mut eval: Option<EvalHook<'_>>) -> Result<(ModelParams, TrainReport)> {
        let ds = self.ds;
        let (lambda, beta) = (self.config.lambda, self.config.beta);
        let trace_steps = self.config.trace_steps;

        let mut loss_trace = vec![LossSample {
            iteration: 0,
            stage: Stage::Init,
            loss: compute_loss(&self.params, ds, Split::Train, lambda, beta),
        }];
        let mut eval_trace = Vec::new();
        let mut best: Option<(Real, usize, ModelParams)> = None;

        for iteration in 1..=self.config.iterations {
            {
                let trace = &mut loss_trace;
                self.run_iteration_observed(|stage, params| {
                    if trace_steps || stage == Stage::Users {
                        trace.push(LossSample {
                            iteration,
                            stage,
                            loss: compute_loss(params, ds, Split::Train, lambda, beta),
                        });
                    }
                })?;
            }
            let last = loss_trace.last().expect("trace nonempty");
            if !last.loss.total.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at iteration {iteration}: {:?}",
                    last.loss
                )));
            }
            if iteration % self.config.eval_every == 0 {
                if let Some(hook) = eval.as_mut() {
                    let score = hook(&self.params, iteration)?;
                    eval_trace.push(EvalSample { iteration, score });
                    let improved = best.as_ref().map_or(true, |(b, _, _)| score > *b);
                    if improved {
                        best = Some((score, iteration, self.params.clone()));
                    }
                }
            }
        }

        let parameter_count = count_parameters(&self.params);
        let (best_iteration, best_score, best_params) = match best {
            Some((score, iteration, params)) => (Some(iteration), Some(score), params),
            None => (None, None, self.params),
        };
        let report = TrainReport {
            variant: self.variant,
            loss_trace,
            eval_trace,
            best_iteration,
            best_score,
            parameter_count,
        };
        Ok((best_params, report))
    }

    /// Loss of the current parameters on a split.
    pub fn current_loss(&self, split: Split) -> LossBreakdown {
        compute_loss(&self.params, self.ds, split, self.config.lambda, self.config.beta)
    }

    pub fn scheme(&self) -> &DimensionScheme {
        self.scheme
    }
}

const SIDE_USER: u64 = 0;
const SIDE_ITEM: u64 = 1;

fn timed<R>(acc: &mut f64, f: impl FnOnce() -> R) -> R {
    let start = Instant::now();
    let out = f();
    *acc += start.elapsed().as_secs_f64();
    out
}

fn write_back(store: &mut EmbeddingStore, solved: Vec<Vector>) {
    for (e, v) in solved.into_iter().enumerate() {
        store.set_vector(e, &v);
    }
}

fn solve_side_baseline(
    adj: &Adjacency,
    fixed: &Matrix,
    lambda: Real,
    side: &str,
    tokens: &[String],
) -> Result<Vec<Vector>> {
    (0..adj.entities())
        .into_par_iter()
        .map(|e| {
            solve_entity_baseline(adj.neighbors(e), adj.targets(e), fixed, lambda)
                .map_err(|err| Error::Training(format!("{side} {}: {err}", tokens[e])))
        })
        .collect()
}

fn solve_side_zeropad(
    adj: &Adjacency,
    fixed: &EmbeddingStore,
    own_dims: &[u32],
    lambda: Real,
    side: &str,
    tokens: &[String],
) -> Result<Vec<Vector>> {
    (0..adj.entities())
        .into_par_iter()
        .map(|e| {
            solve_entity_zeropad(
                adj.neighbors(e),
                adj.targets(e),
                fixed,
                own_dims[e] as usize,
                lambda,
            )
            .map_err(|err| Error::Training(format!("{side} {}: {err}", tokens[e])))
        })
        .collect()
}

fn solve_side_projected(
    adj: &Adjacency,
    fixed_projected: &Matrix,
    own_projections: &ProjectionSet,
    own_dims: &[u32],
    lambda: Real,
    side: &str,
    tokens: &[String],
) -> Result<Vec<Vector>> {
    (0..adj.entities())
        .into_par_iter()
        .map(|e| {
            let own_dim = own_dims[e] as usize;
            solve_entity_projected(
                adj.neighbors(e),
                adj.targets(e),
                fixed_projected,
                own_projections.get(own_dim),
                own_dim,
                lambda,
            )
            .map_err(|err| Error::Training(format!("{side} {}: {err}", tokens[e])))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn update_projection_groups(
    groups: &[(u32, Vec<(u32, u32, Real)>)],
    own_embeddings: &EmbeddingStore,
    projections: &mut ProjectionSet,
    other_projected: &Matrix,
    d: usize,
    config: &TrainConfig,
    iteration: u64,
    side_tag: u64,
    side: &str,
) -> Result<()> {
    for (p, group) in groups {
        let p_usize = *p as usize;
        let rows: Vec<(u32, u32, Real)> = if config.subsample {
            // fresh draw each iteration
            let seed = mix_seed(config.seed, iteration, side_tag, *p as u64);
            subsample_interactions(group, p_usize, seed)
        } else {
            group.clone()
        };
        if rows.is_empty() {
            warn!("no interactions for {side} projection {p} this iteration; keeping old matrix");
            continue;
        }
        let beta = if config.subsample && config.rescale_beta_on_subsample {
            config.beta * rows.len() as Real / group.len() as Real
        } else {
            config.beta
        };
        let m = update_projection(p_usize, d, &rows, own_embeddings, other_projected, beta)
            .map_err(|err| Error::Training(format!("{side} projection {p}: {err}")))?;
        projections.set(p_usize, m).expect("validated shape");
    }
    Ok(())
}

fn mix_seed(base: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = base
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ c.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
