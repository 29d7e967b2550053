//! Experiment orchestration: regularization grid search with k-fold
//! cross-validation, quality-versus-parameter-count sweeps with repeated
//! reseeded runs, CSV emission, and the scaling benchmark.

use std::path::Path;
use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{
    assign_dimensions, popularity_stats, DimensionScheme, HistogramBin, RatingDataset, Split,
};
use crate::eval::evaluate_model;
use crate::model::{count_parameters, ModelParams, Variant};
use crate::solvers::{train, TrainConfig};
use crate::{Error, Real, Result};

pub mod bench;
pub mod synth;

/// One sweep definition: the model-size axis plus shared protocol settings.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub variant: Variant,
    pub axis: SweepAxis,
    /// Candidate dimensions for the mixed variants.
    pub allowed_dims: Vec<u32>,
    pub lambda_grid: Vec<Real>,
    pub beta_grid: Vec<Real>,
    /// Reseeded training runs per axis value.
    pub repeats: usize,
    pub cv_folds: usize,
    /// Fraction of each cross-validation train fold held out for
    /// best-iteration selection.
    pub holdout_frac: Real,
    pub iterations: usize,
    pub eval_every: usize,
    pub subsample: bool,
    pub base_seed: u64,
}

/// What varies along the sweep: the baseline's dimension, or the mixed
/// variants' popularity scale gamma at fixed maximum dimension.
#[derive(Debug, Clone, Serialize)]
pub enum SweepAxis {
    BaselineDims(Vec<u32>),
    Gammas(Vec<Real>),
}

impl SweepSpec {
    /// Protocol defaults: baseline dims 2..6, gammas {0.2,0.3,0.5,1}, d=6
    /// with candidates {2,4,6}, lambda grid {0.1,0.3,1,3}, beta grid
    /// {300,1000,3000,10000}, 3 repeats, 3 folds, 10% holdout, 30
    /// iterations evaluated every 5.
    pub fn defaults(variant: Variant) -> Self {
        let axis = match variant {
            Variant::Baseline => SweepAxis::BaselineDims(vec![2, 3, 4, 5, 6]),
            _ => SweepAxis::Gammas(vec![0.2, 0.3, 0.5, 1.0]),
        };
        Self {
            variant,
            axis,
            allowed_dims: vec![2, 4, 6],
            lambda_grid: vec![0.1, 0.3, 1.0, 3.0],
            beta_grid: vec![300.0, 1000.0, 3000.0, 10_000.0],
            repeats: 3,
            cv_folds: 3,
            holdout_frac: 0.10,
            iterations: 30,
            eval_every: 5,
            subsample: false,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let axis_len = match &self.axis {
            SweepAxis::BaselineDims(d) => d.len(),
            SweepAxis::Gammas(g) => g.len(),
        };
        if axis_len == 0 || self.lambda_grid.is_empty() || self.beta_grid.is_empty() {
            return Err(Error::Config("sweep axis and grids must be nonempty".into()));
        }
        if self.repeats < 1 || self.cv_folds < 2 {
            return Err(Error::Config(
                "sweep needs at least 1 repeat and 2 folds".into(),
            ));
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 0.5) {
            return Err(Error::Config("holdout fraction must be in (0, 0.5)".into()));
        }
        match &self.axis {
            SweepAxis::BaselineDims(dims) if self.variant != Variant::Baseline => {
                Err(Error::Config(format!(
                    "dimension axis {dims:?} only applies to the baseline"
                )))
            }
            SweepAxis::Gammas(_) if self.variant == Variant::Baseline => Err(Error::Config(
                "gamma axis does not apply to the baseline".into(),
            )),
            _ => Ok(()),
        }
    }

    fn scheme_for_axis(&self, ds: &RatingDataset, axis: Real) -> Result<DimensionScheme> {
        match self.variant {
            Variant::Baseline => Ok(DimensionScheme::uniform(
                axis as u32,
                ds.num_users(),
                ds.num_items(),
            )),
            _ => {
                let stats = popularity_stats(ds);
                assign_dimensions(&stats, &self.allowed_dims, axis)
            }
        }
    }

    fn axis_values(&self) -> Vec<Real> {
        match &self.axis {
            SweepAxis::BaselineDims(dims) => dims.iter().map(|&d| d as Real).collect(),
            SweepAxis::Gammas(g) => g.clone(),
        }
    }

    /// Axis value of the largest model: the biggest baseline dimension, or
    /// the smallest gamma.
    fn largest_axis(&self) -> Real {
        match &self.axis {
            SweepAxis::BaselineDims(dims) => dims.iter().copied().max().unwrap_or(0) as Real,
            SweepAxis::Gammas(g) => g.iter().copied().fold(Real::INFINITY, Real::min),
        }
    }
}

/// One trained run in a sweep. `wall_secs` is carried in memory and in the
/// run manifest but not in the CSV, which must be byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub axis: Real,
    pub lambda: Real,
    pub beta: Real,
    pub seed: u64,
    pub parameter_count: usize,
    pub best_iteration: Option<usize>,
    pub val_auc: Real,
    pub test_auc: Real,
    pub test_rmse: Real,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub axis: Real,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

/// Cross-validated grid search over (lambda, beta) for the largest model of
/// the sweep: train+validation rows are pooled, split into folds, 10% of
/// each train fold is held out for best-iteration selection, and the mean
/// fold AUC decides. Ties prefer smaller lambda, then smaller beta. Failed
/// grid points are excluded.
///
/// For variants without projection matrices the beta grid is inert and only
/// its first value is reported back.
pub fn grid_search(ds: &RatingDataset, spec: &SweepSpec) -> Result<(Real, Real)> {
    spec.validate()?;
    let folds = build_cv_folds(ds, spec)?;
    let axis = spec.largest_axis();
    let schemes: Vec<DimensionScheme> = folds
        .iter()
        .map(|fold| spec.scheme_for_axis(fold, axis))
        .collect::<Result<_>>()?;

    let mut lambdas = spec.lambda_grid.clone();
    lambdas.sort_by(Real::total_cmp);
    let mut betas = if spec.variant == Variant::Projected {
        spec.beta_grid.clone()
    } else {
        vec![spec.beta_grid[0]]
    };
    betas.sort_by(Real::total_cmp);

    let mut best: Option<(Real, Real, Real)> = None; // (mean auc, lambda, beta)
    for &lambda in &lambdas {
        for &beta in &betas {
            match grid_point_score(spec, &folds, &schemes, lambda, beta) {
                Ok(mean) => {
                    // strict improvement keeps the smaller lambda/beta on ties
                    if best.map_or(true, |(b, _, _)| mean > b) {
                        best = Some((mean, lambda, beta));
                    }
                }
                Err(e) => {
                    warn!("grid point lambda={lambda} beta={beta} failed: {e}");
                }
            }
        }
    }
    best.map(|(_, lambda, beta)| (lambda, beta))
        .ok_or_else(|| Error::Training("every grid point failed".into()))
}

fn grid_point_score(
    spec: &SweepSpec,
    folds: &[RatingDataset],
    schemes: &[DimensionScheme],
    lambda: Real,
    beta: Real,
) -> Result<Real> {
    let mut total = 0.0;
    for (k, (fold, scheme)) in folds.iter().zip(schemes).enumerate() {
        let mut config = TrainConfig::new(lambda, beta);
        config.iterations = spec.iterations;
        config.eval_every = spec.eval_every;
        config.subsample = spec.subsample;
        config.seed = mix(spec.base_seed, 0x6f6c64, k as u64);
        let mut hook = validation_auc_hook(fold);
        let (params, _) = train(fold, scheme, spec.variant, config, Some(&mut hook))?;
        let metrics = evaluate_model(&params, fold, Split::Test)?;
        total += metrics
            .auc
            .ok_or_else(|| Error::Metric("single-class fold".into()))?;
    }
    Ok(total / folds.len() as Real)
}

/// Pools train+validation rows, shuffles them once, and builds one dataset
/// per fold: the fold itself becomes the test split, the rest is the train
/// split minus a random holdout used for best-iteration selection.
fn build_cv_folds(ds: &RatingDataset, spec: &SweepSpec) -> Result<Vec<RatingDataset>> {
    let mut pool: Vec<(String, String, bool)> = ds
        .split_interactions(Split::Train)
        .chain(ds.split_interactions(Split::Validation))
        .map(|it| {
            (
                ds.user_tokens()[it.user as usize].clone(),
                ds.item_tokens()[it.item as usize].clone(),
                it.label,
            )
        })
        .collect();
    if pool.len() < spec.cv_folds * 2 {
        return Err(Error::Data("too few rows for cross-validation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.base_seed, 0xcf, 0));
    pool.shuffle(&mut rng);

    let n = pool.len();
    let mut folds = Vec::with_capacity(spec.cv_folds);
    for k in 0..spec.cv_folds {
        let lo = k * n / spec.cv_folds;
        let hi = (k + 1) * n / spec.cv_folds;
        let test: Vec<_> = pool[lo..hi].to_vec();
        let mut rest: Vec<_> = pool[..lo].iter().chain(&pool[hi..]).cloned().collect();
        let mut fold_rng = ChaCha8Rng::seed_from_u64(mix(spec.base_seed, 0xcf, k as u64 + 1));
        rest.shuffle(&mut fold_rng);
        let holdout_len = ((rest.len() as Real) * spec.holdout_frac).round() as usize;
        let holdout_len = holdout_len.clamp(1, rest.len() - 1);
        let holdout: Vec<_> = rest[..holdout_len].to_vec();
        let train_part: Vec<_> = rest[holdout_len..].to_vec();
        folds.push(RatingDataset::from_token_parts(&train_part, &holdout, &test)?);
    }
    Ok(folds)
}

/// Best-iteration selection hook: validation-split ROC AUC.
pub fn validation_auc_hook(
    ds: &RatingDataset,
) -> impl FnMut(&ModelParams, usize) -> Result<Real> + '_ {
    move |params, _iteration| {
        let metrics = evaluate_model(params, ds, Split::Validation)?;
        metrics
            .auc
            .ok_or_else(|| Error::Metric("single-class validation split".into()))
    }
}

/// Trains every axis value `repeats` times with seeds `base_seed + k`,
/// selecting the best iteration by validation AUC and reporting test
/// metrics and parameter counts. Per-run failures are recorded and the
/// sweep continues.
pub fn run_sweep(ds: &RatingDataset, spec: &SweepSpec, lambda: Real, beta: Real) -> Result<SweepResult> {
    spec.validate()?;
    let mut result = SweepResult::default();
    for axis in spec.axis_values() {
        let scheme = spec.scheme_for_axis(ds, axis)?;
        for k in 0..spec.repeats {
            let seed = spec.base_seed + k as u64;
            match run_single(ds, spec, &scheme, lambda, beta, seed) {
                Ok(mut row) => {
                    row.axis = axis;
                    result.rows.push(row);
                }
                Err(e) => {
                    warn!("sweep run axis={axis} seed={seed} failed: {e}");
                    result.failures.push(SweepFailure {
                        axis,
                        seed,
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    Ok(result)
}

fn run_single(
    ds: &RatingDataset,
    spec: &SweepSpec,
    scheme: &DimensionScheme,
    lambda: Real,
    beta: Real,
    seed: u64,
) -> Result<SweepRow> {
    let mut config = TrainConfig::new(lambda, beta);
    config.iterations = spec.iterations;
    config.eval_every = spec.eval_every;
    config.subsample = spec.subsample;
    config.seed = seed;
    let start = Instant::now();
    let mut hook = validation_auc_hook(ds);
    let (params, report) = train(ds, scheme, spec.variant, config, Some(&mut hook))?;
    let wall_secs = start.elapsed().as_secs_f64();
    let val = evaluate_model(&params, ds, Split::Validation)?;
    let test = evaluate_model(&params, ds, Split::Test)?;
    Ok(SweepRow {
        variant: spec.variant,
        axis: 0.0, // filled by the caller
        lambda,
        beta,
        seed,
        parameter_count: count_parameters(&params),
        best_iteration: report.best_iteration,
        val_auc: val.auc.ok_or_else(|| Error::Metric("single-class validation".into()))?,
        test_auc: test.auc.ok_or_else(|| Error::Metric("single-class test".into()))?,
        test_rmse: test.rmse,
        wall_secs,
    })
}

/// RFC-4180 CSV with a header row, rows in (axis, seed) order as produced
/// by [`run_sweep`]. Wall times are deliberately excluded so emission is
/// byte-reproducible; they live in the run manifest.
pub fn emit_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "variant",
        "axis",
        "lambda",
        "beta",
        "seed",
        "parameter_count",
        "best_iteration",
        "val_auc",
        "test_auc",
        "test_rmse",
    ])?;
    for row in &result.rows {
        w.write_record([
            row.variant.to_string(),
            row.axis.to_string(),
            row.lambda.to_string(),
            row.beta.to_string(),
            row.seed.to_string(),
            row.parameter_count.to_string(),
            row.best_iteration.map_or(String::new(), |b| b.to_string()),
            row.val_auc.to_string(),
            row.test_auc.to_string(),
            row.test_rmse.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a sweep CSV back. `wall_secs` is not stored in the CSV and comes
/// back as zero.
pub fn parse_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let field = |k: usize| -> Result<&str> {
            record
                .get(k)
                .ok_or_else(|| Error::Format(format!("missing column {k}")))
        };
        let parse_real = |k: usize| -> Result<Real> {
            field(k)?
                .parse()
                .map_err(|e| Error::Format(format!("column {k}: {e}")))
        };
        rows.push(SweepRow {
            variant: field(0)?.parse()?,
            axis: parse_real(1)?,
            lambda: parse_real(2)?,
            beta: parse_real(3)?,
            seed: field(4)?
                .parse()
                .map_err(|e| Error::Format(format!("seed: {e}")))?,
            parameter_count: field(5)?
                .parse()
                .map_err(|e| Error::Format(format!("parameter_count: {e}")))?,
            best_iteration: {
                let s = field(6)?;
                if s.is_empty() {
                    None
                } else {
                    Some(s.parse().map_err(|e| Error::Format(format!("best_iteration: {e}")))?)
                }
            },
            val_auc: parse_real(7)?,
            test_auc: parse_real(8)?,
            test_rmse: parse_real(9)?,
            wall_secs: 0.0,
        });
    }
    Ok(rows)
}

/// Popularity histogram CSV: `bin_left,bin_right,user_count,item_count`.
pub fn emit_histogram_csv(histogram: &[HistogramBin], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_left", "bin_right", "user_count", "item_count"])?;
    for bin in histogram {
        w.write_record([
            bin.bin_left.to_string(),
            bin.bin_right.to_string(),
            bin.user_count.to_string(),
            bin.item_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Config echo written beside every CSV output.
pub fn run_manifest(config: impl Serialize, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "tool": "mdals",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": config,
    })
}

pub(crate) fn mix(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
