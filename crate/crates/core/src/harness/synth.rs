//! Synthetic rating logs with planted low-rank structure and Zipf
//! popularity skew, used for desk-scale experiments and benchmarks.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};
use serde::Serialize;

use crate::data::{binarize, filter_min_support, temporal_split, RatingDataset, RawRating};
use crate::{Error, Real, Result};

/// Generator parameters. Labels are `threshold(x_u . y_i + noise)` with the
/// threshold at the median score, so classes are balanced.
#[derive(Debug, Clone, Serialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    /// Rank of the planted factors.
    pub rank: usize,
    /// Zipf exponent of the user and item popularity distributions.
    pub zipf_exponent: f64,
    /// Label noise as a fraction of the score standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(users: usize, items: usize, interactions: usize) -> Self {
        Self {
            users,
            items,
            interactions,
            rank: 2,
            zipf_exponent: 1.2,
            noise: 0.5,
            seed: 0,
        }
    }
}

/// Draws unique user-item pairs with Zipf-distributed endpoints and emits
/// 1-star/5-star ratings from the planted factor model.
pub fn generate_ratings(spec: &SyntheticSpec) -> Result<Vec<RawRating>> {
    if spec.users == 0 || spec.items == 0 || spec.interactions == 0 || spec.rank == 0 {
        return Err(Error::InvalidInput("synthetic sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0 / (spec.rank as f64).sqrt())
        .map_err(|e| Error::InvalidInput(format!("normal: {e}")))?;
    let user_factors: Vec<Vec<f64>> = (0..spec.users)
        .map(|_| (0..spec.rank).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    let item_factors: Vec<Vec<f64>> = (0..spec.items)
        .map(|_| (0..spec.rank).map(|_| normal.sample(&mut rng)).collect())
        .collect();

    let user_pop = Zipf::new(spec.users as f64, spec.zipf_exponent)
        .map_err(|e| Error::InvalidInput(format!("zipf: {e}")))?;
    let item_pop = Zipf::new(spec.items as f64, spec.zipf_exponent)
        .map_err(|e| Error::InvalidInput(format!("zipf: {e}")))?;

    let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(spec.interactions);
    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(spec.interactions);
    let max_attempts = 50 * spec.interactions;
    let mut attempts = 0;
    while pairs.len() < spec.interactions && attempts < max_attempts {
        attempts += 1;
        let u = user_pop.sample(&mut rng) as u32 - 1;
        let i = item_pop.sample(&mut rng) as u32 - 1;
        if seen.insert((u, i)) {
            pairs.push((u, i));
        }
    }
    if pairs.len() < spec.interactions / 2 {
        return Err(Error::Data(format!(
            "could only draw {} of {} unique pairs",
            pairs.len(),
            spec.interactions
        )));
    }

    let scores: Vec<f64> = pairs
        .iter()
        .map(|&(u, i)| {
            let clean: f64 = user_factors[u as usize]
                .iter()
                .zip(&item_factors[i as usize])
                .map(|(a, b)| a * b)
                .sum();
            clean
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / scores.len() as f64;
    let sigma = var.sqrt().max(1e-12);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noisy: Vec<f64> = scores
        .iter()
        .map(|s| s + spec.noise * sigma * std_normal.sample(&mut rng))
        .collect();
    let mut sorted = noisy.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[(sorted.len() - 1) / 2];

    Ok(pairs
        .iter()
        .zip(&noisy)
        .map(|(&(u, i), &score)| RawRating {
            user: format!("u{u}"),
            item: format!("i{i}"),
            rating: if score > threshold { 5.0 } else { 1.0 },
            timestamp: rng.random_range(0..1_000_000_000) as i64,
        })
        .collect())
}

/// Full pipeline on generated ratings: binarize, temporal split, minimum
/// support filter.
pub fn generate_dataset(
    spec: &SyntheticSpec,
    val_frac: Real,
    test_frac: Real,
    min_count: usize,
) -> Result<RatingDataset> {
    let ratings = generate_ratings(spec)?;
    let labeled = binarize(ratings);
    let ds = temporal_split(labeled, val_frac, test_frac)?;
    filter_min_support(&ds, min_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    #[test]
    fn generator_is_deterministic() {
        let spec = SyntheticSpec::new(100, 100, 2000);
        let a = generate_ratings(&spec).unwrap();
        let b = generate_ratings(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generator_balances_labels() {
        let spec = SyntheticSpec::new(150, 150, 4000);
        let ratings = generate_ratings(&spec).unwrap();
        let positives = ratings.iter().filter(|r| r.rating > 3.0).count();
        let frac = positives as f64 / ratings.len() as f64;
        assert!((0.4..=0.6).contains(&frac), "positive fraction {frac}");
    }

    #[test]
    fn pipeline_produces_trainable_dataset() {
        let spec = SyntheticSpec::new(200, 200, 8000);
        let ds = generate_dataset(&spec, 0.1, 0.1, 5).unwrap();
        assert!(ds.num_users() > 20);
        assert!(ds.num_items() > 20);
        assert!(ds.split_len(Split::Validation) > 0);
        assert!(ds.split_len(Split::Test) > 0);
        for u in 0..ds.num_users() {
            assert!(ds.train_by_user().degree(u) >= 1);
        }
    }

    #[test]
    fn popularity_is_skewed() {
        let spec = SyntheticSpec::new(300, 300, 10_000);
        let ds = generate_dataset(&spec, 0.1, 0.1, 5).unwrap();
        let stats = crate::data::popularity_stats(&ds);
        let max = *stats.user_counts.iter().max().unwrap() as f64;
        let median = stats.user_median;
        assert!(
            max > 4.0 * median,
            "expected a popularity skew, max {max} vs median {median}"
        );
    }
}
