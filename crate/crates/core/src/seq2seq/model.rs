use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EOS, SOS};
use crate::error::{Error, Result};
use crate::nncore::{
    argmax, uniform_matrix, Distribution, GruLayer, Matrix, NodeId, ParamId, ParamStore, Tape,
};

/// Bound of the uniform parameter initialization.
pub const INIT_RANGE: f64 = 0.08;

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Stacked GRU depth for both encoder and decoder, 1 to 3.
    pub num_layers: usize,
    pub attention: bool,
    pub teacher_forcing: bool,
    pub proc_vocab_size: usize,
    pub diag_vocab_size: usize,
    pub max_decode_len: usize,
    pub seed: u64,
    /// Also train the first decoder step on every strict procedure prefix.
    #[serde(default = "default_true")]
    pub prefix_supervision: bool,
}

impl ModelConfig {
    pub fn new(proc_vocab_size: usize, diag_vocab_size: usize) -> Self {
        ModelConfig {
            embed_dim: 32,
            hidden_dim: 64,
            num_layers: 1,
            attention: true,
            teacher_forcing: true,
            proc_vocab_size,
            diag_vocab_size,
            max_decode_len: 10,
            seed: 42,
            prefix_supervision: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.num_layers) {
            return Err(Error::invalid(format!(
                "num_layers must be 1, 2 or 3, got {}",
                self.num_layers
            )));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.max_decode_len == 0 {
            return Err(Error::invalid(
                "embed_dim, hidden_dim and max_decode_len must be positive",
            ));
        }
        if self.proc_vocab_size < 5 || self.diag_vocab_size < 5 {
            return Err(Error::invalid(
                "vocabularies need at least one non-reserved code",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub proc_embedding: ParamId,
    pub diag_embedding: ParamId,
    pub encoder: Vec<GruLayer>,
    pub decoder: Vec<GruLayer>,
    pub combine: Option<(ParamId, ParamId)>,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Encoder states for one procedure sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodeResult {
    /// `layers[position][layer]` hidden vectors.
    layers: Vec<Vec<Vec<f64>>>,
}

impl EncodeResult {
    /// Builds an encoding from `layers[position][layer]` vectors, which must
    /// all share one depth and width.
    pub fn from_layers(layers: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let depth = layers.first().map_or(0, Vec::len);
        let width = layers.first().and_then(|l| l.first()).map_or(0, Vec::len);
        let ragged = layers
            .iter()
            .any(|pos| pos.len() != depth || pos.iter().any(|h| h.len() != width));
        if depth == 0 || width == 0 || ragged {
            return Err(Error::invalid(
                "encoding must be a non-empty rectangular array",
            ));
        }
        Ok(EncodeResult { layers })
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Top-layer hidden state at each input position.
    pub fn hidden_states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.layers
            .iter()
            .map(|l| l.last().expect("at least one layer").as_slice())
    }

    /// Final top-layer state: the context vector.
    pub fn context(&self) -> &[f64] {
        self.layers
            .last()
            .and_then(|l| l.last())
            .expect("non-empty encoding")
    }

    /// Final state of every layer, bottom first.
    pub fn final_states(&self) -> &[Vec<f64>] {
        self.layers.last().expect("non-empty encoding")
    }

    /// Encoding of the first `m` inputs. The encoder is causal, so this is
    /// exactly what encoding the prefix alone would give.
    pub fn prefix(&self, m: usize) -> Result<EncodeResult> {
        if m == 0 || m > self.layers.len() {
            return Err(Error::invalid(format!(
                "prefix length {m} out of range 1..={}",
                self.layers.len()
            )));
        }
        Ok(EncodeResult {
            layers: self.layers[..m].to_vec(),
        })
    }
}

/// Output of Luong dot-product attention.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    pub weights: Distribution,
    /// Weighted sum of encoder states.
    pub context: Vec<f64>,
    /// `tanh([context, hidden]·W + b)`
    pub combined: Vec<f64>,
}

/// Stacked-GRU encoder/decoder over procedure and diagnosis indices.
#[derive(Clone, Debug)]
pub struct Seq2SeqModel {
    config: ModelConfig,
    pub(crate) params: ParamStore,
    pub(crate) layout: Layout,
}

impl Seq2SeqModel {
    /// Fresh model with seeded `uniform(-0.08, 0.08)` parameters.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let (e, h) = (config.embed_dim, config.hidden_dim);
        let r = INIT_RANGE;
        let proc_embedding = params.add(
            "proc_embedding",
            uniform_matrix(config.proc_vocab_size, e, r, &mut rng),
        );
        let diag_embedding = params.add(
            "diag_embedding",
            uniform_matrix(config.diag_vocab_size, e, r, &mut rng),
        );
        let encoder = (0..config.num_layers)
            .map(|l| {
                GruLayer::new(
                    &mut params,
                    &format!("encoder.{l}"),
                    if l == 0 { e } else { h },
                    h,
                    r,
                    &mut rng,
                )
            })
            .collect();
        let decoder = (0..config.num_layers)
            .map(|l| {
                GruLayer::new(
                    &mut params,
                    &format!("decoder.{l}"),
                    if l == 0 { e } else { h },
                    h,
                    r,
                    &mut rng,
                )
            })
            .collect();
        let combine = config.attention.then(|| {
            (
                params.add("combine.w", uniform_matrix(2 * h, h, r, &mut rng)),
                params.add("combine.b", uniform_matrix(1, h, r, &mut rng)),
            )
        });
        let out_w = params.add(
            "output.w",
            uniform_matrix(h, config.diag_vocab_size, r, &mut rng),
        );
        let out_b = params.add(
            "output.b",
            uniform_matrix(1, config.diag_vocab_size, r, &mut rng),
        );
        Ok(Seq2SeqModel {
            config,
            params,
            layout: Layout {
                proc_embedding,
                diag_embedding,
                encoder,
                decoder,
                combine,
                out_w,
                out_b,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_procs(&self, procs: &[usize]) -> Result<()> {
        if procs.is_empty() {
            return Err(Error::invalid("cannot encode an empty procedure sequence"));
        }
        if let Some(bad) = procs.iter().find(|&&i| i >= self.config.proc_vocab_size) {
            return Err(Error::invalid(format!(
                "procedure index {bad} out of range for vocabulary of {}",
                self.config.proc_vocab_size
            )));
        }
        Ok(())
    }

    /// Runs the encoder on the tape; returns per-position, per-layer nodes.
    pub(crate) fn encode_on(
        &self,
        tape: &mut Tape<'_>,
        procs: &[usize],
    ) -> Result<Vec<Vec<NodeId>>> {
        self.check_procs(procs)?;
        let hd = self.config.hidden_dim;
        let zero = tape.constant(Matrix::zeros(1, hd))?;
        let mut hidden = vec![zero; self.config.num_layers];
        let mut out = Vec::with_capacity(procs.len());
        for &p in procs {
            let mut x = tape.embedding(self.layout.proc_embedding, p)?;
            for (layer, h) in self.layout.encoder.iter().zip(hidden.iter_mut()) {
                *h = layer.step(tape, x, *h)?;
                x = *h;
            }
            out.push(hidden.clone());
        }
        Ok(out)
    }

    /// One decoder step. `memory` is the stacked top-layer encoder states
    /// (positions × hidden), used only when attention is on.
    pub(crate) fn decode_step_on(
        &self,
        tape: &mut Tape<'_>,
        token: usize,
        hidden: &[NodeId],
        memory: NodeId,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let mut x = tape.embedding(self.layout.diag_embedding, token)?;
        let mut next = Vec::with_capacity(hidden.len());
        for (layer, &h) in self.layout.decoder.iter().zip(hidden) {
            x = layer.step(tape, x, h)?;
            next.push(x);
        }
        let top = x;
        let features = match self.layout.combine {
            Some((w, b)) => self.attend_on(tape, top, memory, w, b)?.2,
            None => top,
        };
        let w = tape.param(self.layout.out_w);
        let b = tape.param(self.layout.out_b);
        let logits = tape.matmul(features, w)?;
        let logits = tape.add(logits, b)?;
        Ok((logits, next))
    }

    /// Returns (weights, context, combined) nodes.
    fn attend_on(
        &self,
        tape: &mut Tape<'_>,
        hidden: NodeId,
        memory: NodeId,
        w: ParamId,
        b: ParamId,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let scores = tape.matmul_bt(hidden, memory)?;
        let weights = tape.softmax(scores)?;
        let context = tape.matmul(weights, memory)?;
        let joined = tape.concat_cols(&[context, hidden])?;
        let (w, b) = (tape.param(w), tape.param(b));
        let combined = tape.matmul(joined, w)?;
        let combined = tape.add(combined, b)?;
        let combined = tape.tanh(combined)?;
        Ok((weights, context, combined))
    }

    /// Encodes a procedure index sequence from a zero initial state.
    pub fn encode(&self, procs: &[usize]) -> Result<EncodeResult> {
        let mut tape = Tape::new(&self.params);
        let nodes = self.encode_on(&mut tape, procs)?;
        let layers = nodes
            .iter()
            .map(|layer_nodes| {
                layer_nodes
                    .iter()
                    .map(|&n| tape.value(n).data().to_vec())
                    .collect()
            })
            .collect();
        Ok(EncodeResult { layers })
    }

    fn memory_and_hidden(
        &self,
        tape: &mut Tape<'_>,
        enc: &EncodeResult,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let hd = self.config.hidden_dim;
        if enc.is_empty() {
            return Err(Error::invalid("empty encoding"));
        }
        if enc.final_states().len() != self.config.num_layers || enc.context().len() != hd {
            return Err(Error::invalid(format!(
                "encoding has {} layers of width {}, model expects {} of width {hd}",
                enc.final_states().len(),
                enc.context().len(),
                self.config.num_layers
            )));
        }
        let rows: Vec<f64> = enc
            .hidden_states()
            .flat_map(|h| h.iter().copied())
            .collect();
        let memory = tape.constant(Matrix::from_vec(enc.len(), hd, rows)?)?;
        let hidden = enc
            .final_states()
            .iter()
            .map(|h| tape.constant(Matrix::row_vector(h.clone())?))
            .collect::<Result<Vec<_>>>()?;
        Ok((memory, hidden))
    }

    /// Luong global dot attention of a decoder state over the encoder
    /// states.
    pub fn attend(&self, decoder_hidden: &[f64], enc: &EncodeResult) -> Result<Attention> {
        let (w, b) = self
            .layout
            .combine
            .ok_or_else(|| Error::invalid("attention is disabled for this model"))?;
        if decoder_hidden.len() != self.config.hidden_dim {
            return Err(Error::Shape {
                op: "attend",
                left: (1, decoder_hidden.len()),
                right: (1, self.config.hidden_dim),
            });
        }
        let mut tape = Tape::new(&self.params);
        let (memory, _) = self.memory_and_hidden(&mut tape, enc)?;
        let h = tape.constant(Matrix::row_vector(decoder_hidden.to_vec())?)?;
        let (weights, context, combined) = self.attend_on(&mut tape, h, memory, w, b)?;
        Ok(Attention {
            weights: Distribution::new(tape.value(weights).data().to_vec())?,
            context: tape.value(context).data().to_vec(),
            combined: tape.value(combined).data().to_vec(),
        })
    }

    /// Softmax of the first decoder step (input SOS, initial state = the
    /// encoder's final states): the distribution over the primary diagnosis.
    pub fn decode_first_distribution(&self, enc: &EncodeResult) -> Result<Distribution> {
        let mut tape = Tape::new(&self.params);
        let (memory, hidden) = self.memory_and_hidden(&mut tape, enc)?;
        let (logits, _) = self.decode_step_on(&mut tape, SOS, &hidden, memory)?;
        Distribution::from_logits(tape.value(logits).data())
    }

    /// `decode_first_distribution(encode(procs))`
    pub fn first_distribution(&self, procs: &[usize]) -> Result<Distribution> {
        self.decode_first_distribution(&self.encode(procs)?)
    }

    /// First-step distributions for every cumulative prefix `procs[..m]`,
    /// `m = 1..=len`, from a single encoder pass.
    pub fn prefix_distributions(&self, procs: &[usize]) -> Result<Vec<Distribution>> {
        let enc = self.encode(procs)?;
        (1..=procs.len())
            .map(|m| self.decode_first_distribution(&enc.prefix(m)?))
            .collect()
    }

    /// Greedy decoding: feed back the argmax (ties to the lowest index)
    /// until EOS or `max_decode_len` tokens. EOS is not returned.
    pub fn greedy_decode(&self, procs: &[usize]) -> Result<Vec<usize>> {
        let enc = self.encode(procs)?;
        let mut tape = Tape::new(&self.params);
        let (memory, mut hidden) = self.memory_and_hidden(&mut tape, &enc)?;
        let mut token = SOS;
        let mut out = Vec::new();
        while out.len() < self.config.max_decode_len {
            let (logits, next) = self.decode_step_on(&mut tape, token, &hidden, memory)?;
            token = argmax(tape.value(logits).data());
            if token == EOS {
                break;
            }
            out.push(token);
            hidden = next;
        }
        Ok(out)
    }
}
