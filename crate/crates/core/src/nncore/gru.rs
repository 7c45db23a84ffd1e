use rand::Rng;

use crate::error::Result;
use crate::nncore::{uniform_matrix, NodeId, ParamId, ParamStore, Tape};

/// Weights of one GRU layer, gates packed as `[reset | update | candidate]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruLayer {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub b_input: ParamId,
    pub b_hidden: ParamId,
    pub hidden_dim: usize,
}

impl GruLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        init: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let h3 = 3 * hidden_dim;
        GruLayer {
            w_input: store.add(
                format!("{prefix}.w_input"),
                uniform_matrix(input_dim, h3, init, rng),
            ),
            w_hidden: store.add(
                format!("{prefix}.w_hidden"),
                uniform_matrix(hidden_dim, h3, init, rng),
            ),
            b_input: store.add(
                format!("{prefix}.b_input"),
                uniform_matrix(1, h3, init, rng),
            ),
            b_hidden: store.add(
                format!("{prefix}.b_hidden"),
                uniform_matrix(1, h3, init, rng),
            ),
            hidden_dim,
        }
    }

    /// One recurrence step:
    ///
    /// ```text
    /// r  = σ(x·Wi_r + bi_r + h·Wh_r + bh_r)
    /// z  = σ(x·Wi_z + bi_z + h·Wh_z + bh_z)
    /// n  = tanh(x·Wi_n + bi_n + r ⊙ (h·Wh_n + bh_n))
    /// h' = (1 − z) ⊙ n + z ⊙ h
    /// ```
    pub fn step(&self, tape: &mut Tape<'_>, x: NodeId, h: NodeId) -> Result<NodeId> {
        let hd = self.hidden_dim;
        let (wi, wh, bi, bh) = (
            tape.param(self.w_input),
            tape.param(self.w_hidden),
            tape.param(self.b_input),
            tape.param(self.b_hidden),
        );
        let gi = tape.matmul(x, wi)?;
        let gi = tape.add(gi, bi)?;
        let gh = tape.matmul(h, wh)?;
        let gh = tape.add(gh, bh)?;

        let gi_r = tape.slice_cols(gi, 0, hd)?;
        let gh_r = tape.slice_cols(gh, 0, hd)?;
        let r = tape.add(gi_r, gh_r)?;
        let r = tape.sigmoid(r)?;

        let gi_z = tape.slice_cols(gi, hd, hd)?;
        let gh_z = tape.slice_cols(gh, hd, hd)?;
        let z = tape.add(gi_z, gh_z)?;
        let z = tape.sigmoid(z)?;

        let gi_n = tape.slice_cols(gi, 2 * hd, hd)?;
        let gh_n = tape.slice_cols(gh, 2 * hd, hd)?;
        let rn = tape.mul(r, gh_n)?;
        let n = tape.add(gi_n, rn)?;
        let n = tape.tanh(n)?;

        let keep = tape.one_minus(z)?;
        let a = tape.mul(keep, n)?;
        let b = tape.mul(z, h)?;
        tape.add(a, b)
    }
}
