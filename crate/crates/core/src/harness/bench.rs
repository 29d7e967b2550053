//! Per-iteration wall-time measurements on synthetic datasets of scaled
//! sizes, for checking that iteration cost grows linearly with the number
//! of interactions.

use std::path::Path;

use serde::Serialize;

use crate::data::{assign_dimensions, popularity_stats, DimensionScheme, Split};
use crate::harness::synth::{generate_dataset, SyntheticSpec};
use crate::model::Variant;
use crate::solvers::{IterationTimings, TrainConfig, Trainer};
use crate::{Real, Result};

/// Benchmark definition: interaction counts are `base_interactions * scale`
/// with entity counts fixed, so the dimension mix stays put while the
/// dataset grows.
#[derive(Debug, Clone, Serialize)]
pub struct BenchSpec {
    pub users: usize,
    pub items: usize,
    pub base_interactions: usize,
    pub scales: Vec<usize>,
    pub allowed_dims: Vec<u32>,
    pub gamma: Real,
    pub lambda: Real,
    pub beta: Real,
    pub seed: u64,
    pub warmup_iterations: usize,
    pub timed_iterations: usize,
}

impl BenchSpec {
    pub fn new(users: usize, items: usize, base_interactions: usize, scales: Vec<usize>) -> Self {
        Self {
            users,
            items,
            base_interactions,
            scales,
            allowed_dims: vec![2, 4, 6],
            gamma: 0.5,
            lambda: 0.3,
            beta: 1000.0,
            seed: 0,
            warmup_iterations: 1,
            timed_iterations: 3,
        }
    }
}

/// Median per-iteration timings for one (variant, scale) cell.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub variant: Variant,
    pub subsample: bool,
    pub scale: usize,
    pub train_interactions: usize,
    pub iter_secs: f64,
    pub project_secs: f64,
    pub projection_b_secs: f64,
    pub projection_a_secs: f64,
    pub items_secs: f64,
    pub users_secs: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn find(&self, variant: Variant, subsample: bool, scale: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.subsample == subsample && r.scale == scale)
    }
}

/// Times the baseline, zero-pad, and projected trainers (the projected one
/// with subsampling both off and on) on synthetic datasets of each scale.
/// Each measurement is the median over `timed_iterations` iterations after
/// `warmup_iterations` warmup iterations.
pub fn scaling_benchmark(spec: &BenchSpec) -> Result<BenchReport> {
    let mut report = BenchReport::default();
    for &scale in &spec.scales {
        let mut synth = SyntheticSpec::new(spec.users, spec.items, spec.base_interactions * scale);
        synth.seed = spec.seed;
        let ds = generate_dataset(&synth, 0.1, 0.1, 5)?;
        let stats = popularity_stats(&ds);
        let mixed = assign_dimensions(&stats, &spec.allowed_dims, spec.gamma)?;
        let d = mixed.max_dim() as u32;
        let uniform = DimensionScheme::uniform(d, ds.num_users(), ds.num_items());

        let cells: [(Variant, bool, &DimensionScheme); 4] = [
            (Variant::Baseline, false, &uniform),
            (Variant::ZeroPad, false, &mixed),
            (Variant::Projected, false, &mixed),
            (Variant::Projected, true, &mixed),
        ];
        for (variant, subsample, scheme) in cells {
            let mut config = TrainConfig::new(spec.lambda, spec.beta);
            config.subsample = subsample;
            config.seed = spec.seed;
            config.iterations = spec.warmup_iterations + spec.timed_iterations;
            let mut trainer = Trainer::new(&ds, scheme, variant, config)?;
            for _ in 0..spec.warmup_iterations {
                trainer.run_iteration()?;
            }
            let mut timings = Vec::with_capacity(spec.timed_iterations);
            for _ in 0..spec.timed_iterations {
                timings.push(trainer.run_iteration()?);
            }
            report.rows.push(summarize(
                variant,
                subsample,
                scale,
                ds.split_len(Split::Train),
                &timings,
            ));
        }
    }
    Ok(report)
}

fn summarize(
    variant: Variant,
    subsample: bool,
    scale: usize,
    train_interactions: usize,
    timings: &[IterationTimings],
) -> BenchRow {
    let med = |get: fn(&IterationTimings) -> f64| -> f64 {
        let mut v: Vec<f64> = timings.iter().map(get).collect();
        v.sort_by(f64::total_cmp);
        v[(v.len() - 1) / 2]
    };
    BenchRow {
        variant,
        subsample,
        scale,
        train_interactions,
        iter_secs: med(|t| t.total_secs()),
        project_secs: med(|t| t.project_secs),
        projection_b_secs: med(|t| t.projection_b_secs),
        projection_a_secs: med(|t| t.projection_a_secs),
        items_secs: med(|t| t.items_secs),
        users_secs: med(|t| t.users_secs),
    }
}

/// Timing CSV: one row per (variant, subsample, scale).
pub fn emit_bench_csv(report: &BenchReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "variant",
        "subsample",
        "scale",
        "train_interactions",
        "iter_secs",
        "project_secs",
        "projection_b_secs",
        "projection_a_secs",
        "items_secs",
        "users_secs",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.variant.to_string(),
            r.subsample.to_string(),
            r.scale.to_string(),
            r.train_interactions.to_string(),
            r.iter_secs.to_string(),
            r.project_secs.to_string(),
            r.projection_b_secs.to_string(),
            r.projection_a_secs.to_string(),
            r.items_secs.to_string(),
            r.users_secs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_emits_all_cells() {
        let mut spec = BenchSpec::new(80, 80, 2500, vec![1, 2]);
        spec.timed_iterations = 1;
        let report = scaling_benchmark(&spec).unwrap();
        assert_eq!(report.rows.len(), 8);
        assert!(report.find(Variant::Baseline, false, 2).is_some());
        assert!(report.find(Variant::Projected, true, 1).is_some());
        for row in &report.rows {
            assert!(row.iter_secs > 0.0);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        emit_bench_csv(&report, &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap().lines().count(),
            9
        );
    }
}
