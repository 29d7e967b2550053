//! Parameter containers for the three model variants: packed
//! variable-length embeddings, projection-matrix sets, seeded
//! initialization, scoring, and parameter counting.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DimensionScheme;
use crate::{Error, Matrix, Real, Result};

pub mod checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Baseline,
    ZeroPad,
    Projected,
}

impl Variant {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Variant::Baseline => 0,
            Variant::ZeroPad => 1,
            Variant::Projected => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Variant::Baseline),
            1 => Some(Variant::ZeroPad),
            2 => Some(Variant::Projected),
            _ => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Baseline => write!(f, "baseline"),
            Variant::ZeroPad => write!(f, "zero-pad"),
            Variant::Projected => write!(f, "projected"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "zero-pad" | "zeropad" | "zero_pad" => Ok(Variant::ZeroPad),
            "projected" => Ok(Variant::Projected),
            other => Err(Error::InvalidInput(format!("unknown variant '{other}'"))),
        }
    }
}

/// Variable-length embedding vectors packed into one flat buffer with
/// prefix-sum offsets. The zero-pad variant stores only the live prefix of
/// each vector; the implicit tail of zeros is never materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dims: Vec<u32>,
    offsets: Vec<usize>,
    values: Vec<Real>,
}

impl EmbeddingStore {
    pub fn with_dims(dims: &[u32]) -> Self {
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut total = 0usize;
        offsets.push(0);
        for &d in dims {
            total += d as usize;
            offsets.push(total);
        }
        Self {
            dims: dims.to_vec(),
            offsets,
            values: vec![0.0; total],
        }
    }

    pub fn count(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn dim(&self, entity: usize) -> usize {
        self.dims[entity] as usize
    }

    pub fn vector(&self, entity: usize) -> &[Real] {
        &self.values[self.offsets[entity]..self.offsets[entity + 1]]
    }

    pub fn vector_mut(&mut self, entity: usize) -> &mut [Real] {
        &mut self.values[self.offsets[entity]..self.offsets[entity + 1]]
    }

    pub fn set_vector(&mut self, entity: usize, v: &[Real]) {
        self.vector_mut(entity).copy_from_slice(v);
    }

    pub fn values(&self) -> &[Real] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Real] {
        &mut self.values
    }

    pub fn total_params(&self) -> usize {
        self.values.len()
    }
}

/// Trainable projection matrices keyed by source dimension `p`, each of
/// shape `max_dim x p`. The matrix at `p == max_dim` is an implicit,
/// immutable identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    max_dim: usize,
    matrices: BTreeMap<u32, Matrix>,
}

impl ProjectionSet {
    pub fn new(max_dim: usize) -> Self {
        Self {
            max_dim,
            matrices: BTreeMap::new(),
        }
    }

    pub fn max_dim(&self) -> usize {
        self.max_dim
    }

    /// Trainable source dimensions, ascending.
    pub fn keys(&self) -> impl Iterator<Item = u32> + '_ {
        self.matrices.keys().copied()
    }

    /// `None` encodes the identity at `p == max_dim`.
    pub fn get(&self, p: usize) -> Option<&Matrix> {
        self.matrices.get(&(p as u32))
    }

    pub fn set(&mut self, p: usize, m: Matrix) -> Result<()> {
        if p >= self.max_dim {
            return Err(Error::InvalidInput(format!(
                "projection key {p} must be below max dim {}",
                self.max_dim
            )));
        }
        if m.rows() != self.max_dim || m.cols() != p {
            return Err(Error::InvalidInput(format!(
                "projection for {p} must be {}x{p}, got {}x{}",
                self.max_dim,
                m.rows(),
                m.cols()
            )));
        }
        self.matrices.insert(p as u32, m);
        Ok(())
    }

    /// Projects a length-`p` vector into the common space.
    pub fn apply(&self, x: &[Real]) -> Vec<Real> {
        match self.get(x.len()) {
            Some(m) => m.matvec(x),
            None => {
                debug_assert_eq!(x.len(), self.max_dim);
                x.to_vec()
            }
        }
    }

    /// Applies the transpose of the projection for dimension `p` to a
    /// common-space vector.
    pub fn apply_transpose(&self, p: usize, v: &[Real]) -> Vec<Real> {
        match self.get(p) {
            Some(m) => m.matvec_transpose(v),
            None => {
                debug_assert_eq!(p, self.max_dim);
                v.to_vec()
            }
        }
    }

    pub fn frobenius_sq(&self) -> Real {
        self.matrices.values().map(|m| m.frobenius_sq()).sum()
    }

    pub fn param_count(&self) -> usize {
        self.matrices.values().map(|m| m.rows() * m.cols()).sum()
    }

    /// Replaces every trainable matrix with the truncated identity.
    pub fn set_truncated_identities(&mut self) {
        let d = self.max_dim;
        for (p, m) in self.matrices.iter_mut() {
            *m = Matrix::truncated_identity(d, *p as usize);
        }
    }
}

/// Complete parameter set for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: Variant,
    pub max_dim: usize,
    pub user_embeddings: EmbeddingStore,
    pub item_embeddings: EmbeddingStore,
    pub user_projections: Option<ProjectionSet>,
    pub item_projections: Option<ProjectionSet>,
}

const INIT_RANGE: Real = 0.1;

/// Seeded deterministic initialization: embeddings uniform in
/// [-0.1, 0.1], trainable projections Xavier-uniform in
/// [-sqrt(6/(d+p)), sqrt(6/(d+p))].
///
/// Values are drawn from one ChaCha8 stream in a fixed order (user
/// embeddings, item embeddings, user projections ascending p, item
/// projections ascending p), so the same seed gives bit-identical
/// parameters, and variants sharing a scheme draw identical embeddings.
pub fn init_params(scheme: &DimensionScheme, variant: Variant, seed: u64) -> ModelParams {
    let d = scheme.max_dim();
    let (user_dims, item_dims): (Vec<u32>, Vec<u32>) = match variant {
        Variant::Baseline => (
            vec![d as u32; scheme.user_dims().len()],
            vec![d as u32; scheme.item_dims().len()],
        ),
        Variant::ZeroPad | Variant::Projected => {
            (scheme.user_dims().to_vec(), scheme.item_dims().to_vec())
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut user_embeddings = EmbeddingStore::with_dims(&user_dims);
    let mut item_embeddings = EmbeddingStore::with_dims(&item_dims);
    for store in [&mut user_embeddings, &mut item_embeddings] {
        for v in store.values.iter_mut() {
            *v = uniform(&mut rng, INIT_RANGE);
        }
    }

    let (user_projections, item_projections) = if variant == Variant::Projected {
        let mut sets = Vec::with_capacity(2);
        for dims in [scheme.user_dims(), scheme.item_dims()] {
            let mut set = ProjectionSet::new(d);
            for p in scheme.trainable_dims(dims) {
                let bound = (6.0 / (d as Real + p as Real)).sqrt();
                let values: Vec<Real> = (0..d * p as usize)
                    .map(|_| uniform(&mut rng, bound))
                    .collect();
                let m = Matrix::from_vec(d, p as usize, values).expect("finite init");
                set.set(p as usize, m).expect("valid key");
            }
            sets.push(set);
        }
        let items = sets.pop();
        (sets.pop(), items)
    } else {
        (None, None)
    };

    ModelParams {
        variant,
        max_dim: d,
        user_embeddings,
        item_embeddings,
        user_projections,
        item_projections,
    }
}

fn uniform(rng: &mut ChaCha8Rng, bound: Real) -> Real {
    -bound + 2.0 * bound * rng.random::<Real>()
}

/// Dense common-space table: entity `k` with dimension `p` becomes
/// `projection(p) * embedding_k`; with no projections the live prefix is
/// zero-padded to `d`, which also covers the baseline (where `p == d`).
pub fn project_all(
    store: &EmbeddingStore,
    projections: Option<&ProjectionSet>,
    d: usize,
) -> Matrix {
    let mut table = Matrix::zeros(store.count(), d);
    for k in 0..store.count() {
        let v = store.vector(k);
        let row = table.row_mut(k);
        match projections.and_then(|ps| ps.get(v.len())) {
            Some(m) => row.copy_from_slice(&m.matvec(v)),
            None => row[..v.len()].copy_from_slice(v),
        }
    }
    table
}

/// Predicted affinity for one user-item pair.
pub fn predict(params: &ModelParams, user: usize, item: usize) -> Real {
    let x = params.user_embeddings.vector(user);
    let y = params.item_embeddings.vector(item);
    match params.variant {
        Variant::Baseline => crate::linalg::dot(x, y),
        Variant::ZeroPad => {
            // only the shared live prefix contributes
            let n = x.len().min(y.len());
            crate::linalg::dot(&x[..n], &y[..n])
        }
        Variant::Projected => {
            let xp = params
                .user_projections
                .as_ref()
                .expect("projected variant has user projections")
                .apply(x);
            let yp = params
                .item_projections
                .as_ref()
                .expect("projected variant has item projections")
                .apply(y);
            crate::linalg::dot(&xp, &yp)
        }
    }
}

/// Total trainable parameter count: all embedding components plus the
/// trainable projection matrix entries.
pub fn count_parameters(params: &ModelParams) -> usize {
    params.user_embeddings.total_params()
        + params.item_embeddings.total_params()
        + params
            .user_projections
            .as_ref()
            .map_or(0, |p| p.param_count())
        + params
            .item_projections
            .as_ref()
            .map_or(0, |p| p.param_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DimensionScheme;
    use rand::Rng;

    fn mixed_scheme() -> DimensionScheme {
        DimensionScheme::new(vec![2, 4, 6], 0.5, vec![2, 4, 6, 2, 6], vec![6, 4, 2, 4]).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let scheme = mixed_scheme();
        let a = init_params(&scheme, Variant::Projected, 42);
        let b = init_params(&scheme, Variant::Projected, 42);
        assert_eq!(a, b);
        let c = init_params(&scheme, Variant::Projected, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_embedding_range() {
        let scheme = mixed_scheme();
        let p = init_params(&scheme, Variant::Projected, 7);
        for v in p
            .user_embeddings
            .values()
            .iter()
            .chain(p.item_embeddings.values())
        {
            assert!((-0.1..=0.1).contains(v));
        }
    }

    #[test]
    fn init_projection_keys_are_distinct_sub_max_dims() {
        let scheme = mixed_scheme();
        let p = init_params(&scheme, Variant::Projected, 7);
        let user_keys: Vec<u32> = p.user_projections.as_ref().unwrap().keys().collect();
        let item_keys: Vec<u32> = p.item_projections.as_ref().unwrap().keys().collect();
        assert_eq!(user_keys, vec![2, 4]);
        assert_eq!(item_keys, vec![2, 4]);
    }

    #[test]
    fn init_xavier_bound_holds() {
        let scheme = mixed_scheme();
        let p = init_params(&scheme, Variant::Projected, 3);
        let set = p.user_projections.as_ref().unwrap();
        for key in set.keys() {
            let bound = (6.0 / (6.0 + key as Real)).sqrt();
            for v in set.get(key as usize).unwrap().values() {
                assert!(v.abs() <= bound);
            }
        }
    }

    #[test]
    fn variants_share_embedding_draws() {
        let scheme = mixed_scheme();
        let zp = init_params(&scheme, Variant::ZeroPad, 11);
        let pr = init_params(&scheme, Variant::Projected, 11);
        assert_eq!(zp.user_embeddings, pr.user_embeddings);
        assert_eq!(zp.item_embeddings, pr.item_embeddings);
    }

    #[test]
    fn project_all_identity_passthrough() {
        let store = {
            let mut s = EmbeddingStore::with_dims(&[6]);
            s.set_vector(0, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
            s
        };
        let ps = ProjectionSet::new(6);
        let table = project_all(&store, Some(&ps), 6);
        assert_eq!(table.row(0), store.vector(0));
    }

    #[test]
    fn project_all_truncated_identity_equals_zero_padding() {
        let mut store = EmbeddingStore::with_dims(&[2]);
        store.set_vector(0, &[3.0, 4.0]);
        let mut ps = ProjectionSet::new(6);
        ps.set(2, Matrix::truncated_identity(6, 2)).unwrap();
        let projected = project_all(&store, Some(&ps), 6);
        let padded = project_all(&store, None, 6);
        assert_eq!(projected, padded);
        assert_eq!(projected.row(0), &[3.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn project_all_matches_naive_matvec() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let d = 6;
        let p = 2;
        let mut store = EmbeddingStore::with_dims(&[p as u32]);
        let x: Vec<Real> = (0..p).map(|_| rng.random::<Real>()).collect();
        store.set_vector(0, &x);
        let values: Vec<Real> = (0..d * p).map(|_| rng.random::<Real>()).collect();
        let a = Matrix::from_vec(d, p, values).unwrap();
        let mut ps = ProjectionSet::new(d);
        ps.set(p, a.clone()).unwrap();
        let table = project_all(&store, Some(&ps), d);
        for r in 0..d {
            let naive: Real = (0..p).map(|c| a.get(r, c) * x[c]).sum();
            assert!((table.get(0, r) - naive).abs() < 1e-12);
        }
    }

    fn two_entity_params(variant: Variant, user: &[Real], item: &[Real], d: usize) -> ModelParams {
        let mut user_embeddings = EmbeddingStore::with_dims(&[user.len() as u32]);
        user_embeddings.set_vector(0, user);
        let mut item_embeddings = EmbeddingStore::with_dims(&[item.len() as u32]);
        item_embeddings.set_vector(0, item);
        let projections = |dims: &[usize]| {
            let mut ps = ProjectionSet::new(d);
            for &p in dims {
                if p < d {
                    ps.set(p, Matrix::truncated_identity(d, p)).unwrap();
                }
            }
            ps
        };
        ModelParams {
            variant,
            max_dim: d,
            user_projections: (variant == Variant::Projected).then(|| projections(&[user.len()])),
            item_projections: (variant == Variant::Projected).then(|| projections(&[item.len()])),
            user_embeddings,
            item_embeddings,
        }
    }

    #[test]
    fn predict_baseline_dot() {
        let p = two_entity_params(Variant::Baseline, &[1.0, 2.0], &[3.0, 4.0], 2);
        assert_eq!(predict(&p, 0, 0), 11.0);
    }

    #[test]
    fn predict_zeropad_uses_live_prefix() {
        let p = two_entity_params(Variant::ZeroPad, &[1.0, 2.0], &[5.0], 6);
        assert_eq!(predict(&p, 0, 0), 5.0);
    }

    #[test]
    fn predict_projected_with_identities_matches_baseline() {
        let x = [0.5, -1.0, 2.0];
        let y = [1.5, 0.25, -0.5];
        let base = two_entity_params(Variant::Baseline, &x, &y, 3);
        let proj = two_entity_params(Variant::Projected, &x, &y, 3);
        assert_eq!(predict(&base, 0, 0), predict(&proj, 0, 0));
    }

    #[test]
    fn zeropad_predict_equals_baseline_on_padded_vectors() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let d = 6;
            let du = rng.random_range(1..=d);
            let ti = rng.random_range(1..=d);
            let x: Vec<Real> = (0..du).map(|_| rng.random::<Real>() - 0.5).collect();
            let y: Vec<Real> = (0..ti).map(|_| rng.random::<Real>() - 0.5).collect();
            let mut padded_x = x.clone();
            padded_x.resize(d, 0.0);
            let mut padded_y = y.clone();
            padded_y.resize(d, 0.0);

            let zp = two_entity_params(Variant::ZeroPad, &x, &y, d);
            let base = two_entity_params(Variant::Baseline, &padded_x, &padded_y, d);
            assert_eq!(predict(&zp, 0, 0), predict(&base, 0, 0));
        }
    }

    #[test]
    fn projected_truncated_identity_predict_equals_zeropad() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let d = 6;
            let du = rng.random_range(1..=d);
            let ti = rng.random_range(1..=d);
            let x: Vec<Real> = (0..du).map(|_| rng.random::<Real>() - 0.5).collect();
            let y: Vec<Real> = (0..ti).map(|_| rng.random::<Real>() - 0.5).collect();
            let zp = two_entity_params(Variant::ZeroPad, &x, &y, d);
            let pr = two_entity_params(Variant::Projected, &x, &y, d);
            assert_eq!(predict(&zp, 0, 0), predict(&pr, 0, 0));
        }
    }

    #[test]
    fn count_parameters_formulas() {
        // baseline: (10 + 20) * 6
        let scheme = DimensionScheme::uniform(6, 10, 20);
        let p = init_params(&scheme, Variant::Baseline, 0);
        assert_eq!(count_parameters(&p), 180);

        // projected with all dims max: no projection matrices
        let scheme = DimensionScheme::new(vec![6], 1.0, vec![6; 10], vec![6; 20]).unwrap();
        let p = init_params(&scheme, Variant::Projected, 0);
        assert_eq!(count_parameters(&p), 180);

        // projected with user dims {2,4,6}: adds 6*2 + 6*4 = 36
        let scheme =
            DimensionScheme::new(vec![2, 4, 6], 1.0, vec![2, 4, 6], vec![6, 6, 6]).unwrap();
        let p = init_params(&scheme, Variant::Projected, 0);
        assert_eq!(count_parameters(&p), (2 + 4 + 6) + 18 + 36);
    }

    #[test]
    fn count_parameters_monotone_in_dims() {
        let small = DimensionScheme::new(vec![2, 4, 6], 1.0, vec![2, 2], vec![2]).unwrap();
        let large = DimensionScheme::new(vec![2, 4, 6], 1.0, vec![4, 2], vec![2]).unwrap();
        let a = count_parameters(&init_params(&small, Variant::ZeroPad, 0));
        let b = count_parameters(&init_params(&large, Variant::ZeroPad, 0));
        assert!(b > a);
    }
}
