//! A small dense reverse-mode autodiff engine: matrices, a recording tape,
//! a GRU layer, Adam, and a finite-difference gradient checker.

mod gradcheck;
mod gru;
mod matrix;
mod optim;
mod params;
mod tape;

use rand::Rng;

use crate::error::{Error, Result};

pub use gradcheck::{grad_check, relative_error, GradCheckReport, MIN_SAMPLES};
pub use gru::GruLayer;
pub use matrix::Matrix;
pub use optim::{adam_step, AdamHyper};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{NodeId, Tape, LOG_FLOOR};

/// Numerically stable softmax (max subtraction).
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::invalid("softmax of an empty row"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Cross-entropy of a probability vector against a target index, with
/// the same log floor as the tape operation.
pub fn cross_entropy_loss(dist: &[f64], target: usize) -> Result<f64> {
    let p = dist.get(target).ok_or_else(|| {
        Error::invalid(format!(
            "target index {target} out of range for {} classes",
            dist.len()
        ))
    })?;
    Ok(-(p + LOG_FLOOR).ln())
}

/// A probability vector over a vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid(
                "distribution entries must be finite and non-negative",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::invalid(format!("distribution sums to {sum}")));
        }
        Ok(Distribution(probs))
    }

    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        Self::new(softmax(logits)?)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// The `k` most probable indices, descending, ties to the lower index.
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut order: Vec<usize> = (0..self.0.len()).collect();
        order.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        order.into_iter().take(k).map(|i| (i, self.0[i])).collect()
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Matrix with entries drawn uniformly from `[-bound, bound)`.
pub fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("finite uniform draws")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Central differences computed directly, independent of `grad_check`.
    fn finite_difference<F: Fn(&ParamStore) -> f64>(
        store: &ParamStore,
        id: ParamId,
        idx: usize,
        h: f64,
        f: F,
    ) -> f64 {
        let mut plus = store.clone();
        plus.get_mut(id).value.data_mut()[idx] += h;
        let mut minus = store.clone();
        minus.get_mut(id).value.data_mut()[idx] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    #[test]
    fn softmax_contracts() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        for c in [-50.0, 0.0, 3.7, 900.0] {
            let s = softmax(&[c, c, c]).unwrap();
            for p in s {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let s = softmax(&[1000.0, 0.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15 && s[1] >= 0.0 && s[1] < 1e-300);
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        assert!(cross_entropy_loss(&[0.0, 1.0, 0.0], 1).unwrap().abs() < 1e-11);
        let k = 7;
        let uniform = vec![1.0 / k as f64; k];
        for t in 0..k {
            assert!((cross_entropy_loss(&uniform, t).unwrap() - (k as f64).ln()).abs() < 1e-9);
        }
        assert!(cross_entropy_loss(&uniform, k).is_err());
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let a = store.add("a", uniform_matrix(3, 4, 1.0, &mut rng(1)));
        let b = store.add("b", uniform_matrix(4, 2, 1.0, &mut rng(2)));
        let weights = uniform_matrix(3, 2, 1.0, &mut rng(3));
        let loss_of = |s: &ParamStore| -> f64 {
            let c = s.value(a).matmul(s.value(b)).unwrap();
            c.data()
                .iter()
                .zip(weights.data())
                .map(|(x, w)| x * w)
                .sum()
        };
        let mut tape = Tape::new(&store);
        let (na, nb) = (tape.param(a), tape.param(b));
        let c = tape.matmul(na, nb).unwrap();
        let w = tape.constant(weights.clone()).unwrap();
        let cw = tape.mul(c, w).unwrap();
        let ones = tape
            .constant(Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap())
            .unwrap();
        let rowsum = tape.matmul(cw, ones).unwrap();
        let ones3 = tape
            .constant(Matrix::from_vec(1, 3, vec![1.0; 3]).unwrap())
            .unwrap();
        let loss = tape.matmul(ones3, rowsum).unwrap();
        assert!((tape.scalar(loss) - loss_of(&store)).abs() < 1e-12);
        let grads = tape.backward(loss).unwrap();
        for (id, n) in [(a, 12), (b, 8)] {
            for i in 0..n {
                let fd = finite_difference(&store, id, i, 1e-5, loss_of);
                let an = grads.scalar(id, i);
                assert!(
                    (an - fd).abs() / an.abs().max(fd.abs()).max(1e-12) < 1e-8,
                    "{an} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut store = ParamStore::new();
        let z = store.add("z", uniform_matrix(1, 5, 2.0, &mut rng(4)));
        let target = 2;
        let mut tape = Tape::new(&store);
        let nz = tape.param(z);
        let loss = tape.cross_entropy(nz, target).unwrap();
        let grads = tape.backward(loss).unwrap();
        let probs = softmax(store.value(z).data()).unwrap();
        for (i, p) in probs.iter().enumerate() {
            let expected = p - if i == target { 1.0 } else { 0.0 };
            let fd = finite_difference(&store, z, i, 1e-5, |s| {
                cross_entropy_loss(&softmax(s.value(z).data()).unwrap(), target).unwrap()
            });
            let an = grads.scalar(z, i);
            assert!((an - expected).abs() < 1e-15);
            assert!(
                (an - fd).abs() / an.abs().max(fd.abs()) < 1e-8,
                "{an} vs {fd}"
            );
        }
    }

    #[test]
    fn square_and_reuse_rules() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::scalar(3.0));
        let mut tape = Tape::new(&store);
        let nw = tape.param(w);
        let sq = tape.mul(nw, nw).unwrap();
        assert_eq!(tape.backward(sq).unwrap().scalar(w, 0), 6.0);

        let mut tape = Tape::new(&store);
        let nw = tape.param(w);
        let twice = tape.add(nw, nw).unwrap();
        assert_eq!(tape.backward(twice).unwrap().scalar(w, 0), 2.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::zeros(1, 2));
        let mut tape = Tape::new(&store);
        let nw = tape.param(w);
        assert!(tape.backward(nw).is_err());
    }

    fn gru_loss_builder(
        layer: GruLayer,
        out: ParamId,
        emb: ParamId,
    ) -> impl Fn(&mut Tape<'_>) -> Result<NodeId> {
        move |tape: &mut Tape<'_>| {
            let mut h = tape.constant(Matrix::zeros(1, layer.hidden_dim))?;
            let mut states = Vec::new();
            for tok in [1usize, 3, 0] {
                let x = tape.embedding(emb, tok)?;
                h = layer.step(tape, x, h)?;
                states.push(h);
            }
            // Exercise softmax / stack / matmul_bt / concat paths too.
            let stacked = tape.stack_rows(&states)?;
            let scores = tape.matmul_bt(h, stacked)?;
            let weights = tape.softmax(scores)?;
            let ctx = tape.matmul(weights, stacked)?;
            let both = tape.concat_cols(&[ctx, h])?;
            let w = tape.param(out);
            let logits = tape.matmul(both, w)?;
            let l1 = tape.cross_entropy(logits, 2)?;
            let l2 = tape.cross_entropy(logits, 0)?;
            let total = tape.sum(&[l1, l2])?;
            tape.scale(total, 0.5)
        }
    }

    fn gru_fixture() -> (ParamStore, GruLayer, ParamId, ParamId) {
        let mut store = ParamStore::new();
        let mut r = rng(9);
        let emb = store.add("emb", uniform_matrix(4, 3, 0.5, &mut r));
        let layer = GruLayer::new(&mut store, "gru", 3, 5, 0.5, &mut r);
        let out = store.add("out", uniform_matrix(10, 4, 0.5, &mut r));
        (store, layer, out, emb)
    }

    #[test]
    fn gru_cell_passes_grad_check() {
        let (mut store, layer, out, emb) = gru_fixture();
        let report = grad_check(
            &mut store,
            1e-5,
            10_000,
            0,
            gru_loss_builder(layer, out, emb),
        )
        .unwrap();
        assert_eq!(report.checked, store.n_scalars());
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let (mut store, layer, out, emb) = gru_fixture();
        let build = gru_loss_builder(layer, out, emb);
        let analytic = {
            let mut tape = Tape::new(&store);
            tape.corrupt_sigmoid = true;
            let loss = build(&mut tape).unwrap();
            tape.backward(loss).unwrap()
        };
        let mut worst: f64 = 0.0;
        for (id, p) in store.clone().iter() {
            for i in 0..p.value.data().len() {
                let fd = finite_difference(&store, id, i, 1e-5, |s| {
                    let mut t = Tape::new(s);
                    let l = build(&mut t).unwrap();
                    t.scalar(l)
                });
                worst = worst.max(relative_error(analytic.scalar(id, i), fd));
            }
        }
        assert!(worst > 1e-2, "negative control not detected: {worst}");
        let _ = &mut store;
    }

    #[test]
    fn linear_model_check_is_exact() {
        let mut store = ParamStore::new();
        let w = store.add("w", uniform_matrix(3, 1, 1.0, &mut rng(5)));
        let x = Matrix::from_vec(1, 3, vec![0.3, -1.2, 2.0]).unwrap();
        let report = grad_check(&mut store, 1e-5, 200, 0, |tape| {
            let nx = tape.constant(x.clone())?;
            let nw = tape.param(w);
            tape.matmul(nx, nw)
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-10, "{report:?}");
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::scalar(0.5));
        store.get_mut(w).grad = Matrix::scalar(1.0);
        adam_step(&mut store, &AdamHyper::default()).unwrap();
        // m̂ = g, v̂ = g², step = lr·g/(|g|+ε)
        let expected = 0.5 - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((store.value(w).data()[0] - expected).abs() < 1e-15);
        assert_eq!(store.get(w).grad.data(), &[0.0]);
        assert_eq!(store.get(w).step(), 1);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut store = ParamStore::new();
        let w = store.add("w", uniform_matrix(2, 2, 1.0, &mut rng(6)));
        store.get_mut(w).grad = Matrix::from_vec(2, 2, vec![0.3, -0.2, 0.1, 1.0]).unwrap();
        adam_step(&mut store, &AdamHyper::default()).unwrap();
        let before = store.clone();
        adam_step(&mut store, &AdamHyper::default()).unwrap();
        assert_eq!(store, before);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut store = ParamStore::new();
            let w = store.add("w", uniform_matrix(3, 3, 1.0, &mut rng(7)));
            for k in 0..5 {
                store.get_mut(w).grad = uniform_matrix(3, 3, 1.0, &mut rng(100 + k));
                adam_step(&mut store, &AdamHyper::default()).unwrap();
            }
            store
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn distribution_helpers() {
        let d = Distribution::new(vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(d.argmax(), 1);
        assert_eq!(d.top_k(2), vec![(1, 0.5), (0, 0.25)]);
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn replay_is_bitwise_deterministic() {
        let (store, layer, out, emb) = gru_fixture();
        let build = gru_loss_builder(layer, out, emb);
        let run = || {
            let mut t = Tape::new(&store);
            let l = build(&mut t).unwrap();
            t.scalar(l).to_bits()
        };
        assert_eq!(run(), run());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_is_a_distribution(z in prop::collection::vec(-500.0f64..500.0, 1..40)) {
                let s = softmax(&z).unwrap();
                let total: f64 = s.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(s.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }
}
