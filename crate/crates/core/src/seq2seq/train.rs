use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Admission, Corpus, Split, Vocab, EOS, SOS};
use crate::error::{Error, Result};
use crate::nncore::{adam_step, argmax, grad_check, AdamHyper, GradCheckReport, NodeId, Tape};
use crate::seq2seq::Seq2SeqModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub hyper: AdamHyper,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 30,
            batch_size: 32,
            hyper: AdamHyper::default(),
        }
    }
}

/// Index-encoded training pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub procedures: Vec<usize>,
    /// Diagnosis indices followed by EOS.
    pub targets: Vec<usize>,
}

impl Example {
    /// Encodes an admission; diagnoses beyond `max_decode_len` are dropped.
    pub fn from_admission(
        adm: &Admission,
        procs: &Vocab,
        diags: &Vocab,
        max_decode_len: usize,
    ) -> Self {
        let mut targets: Vec<usize> = adm
            .diagnoses
            .iter()
            .take(max_decode_len)
            .map(|d| diags.index_of(d.as_str()))
            .collect();
        targets.push(EOS);
        Example {
            procedures: procs.encode(&adm.procedures),
            targets,
        }
    }
}

impl Seq2SeqModel {
    /// Records the training loss of one example and returns its node.
    ///
    /// The loss is the mean cross-entropy over every supervised decoder
    /// step: each target token (plus EOS) for the full procedure sequence
    /// and, with prefix supervision, the first diagnosis for every strict
    /// prefix of the procedures.
    pub fn loss_on(&self, tape: &mut Tape<'_>, example: &Example) -> Result<NodeId> {
        if example.targets.is_empty() {
            return Err(Error::invalid("example has no targets"));
        }
        let states = self.encode_on(tape, &example.procedures)?;
        let tops: Vec<NodeId> = states.iter().map(|s| *s.last().expect("layers")).collect();
        let mut terms = Vec::new();

        let memory = tape.stack_rows(&tops)?;
        let mut hidden = states.last().expect("non-empty").clone();
        let mut token = SOS;
        for &target in &example.targets {
            let (logits, next) = self.decode_step_on(tape, token, &hidden, memory)?;
            terms.push(tape.cross_entropy(logits, target)?);
            token = if self.config().teacher_forcing {
                target
            } else {
                argmax(tape.value(logits).data())
            };
            hidden = next;
        }

        if self.config().prefix_supervision {
            let first = example.targets[0];
            for m in 1..example.procedures.len() {
                let memory = tape.stack_rows(&tops[..m])?;
                let (logits, _) = self.decode_step_on(tape, SOS, &states[m - 1], memory)?;
                terms.push(tape.cross_entropy(logits, first)?);
            }
        }

        let n = terms.len() as f64;
        let total = tape.sum(&terms)?;
        tape.scale(total, 1.0 / n)
    }

    /// Loss value of one example without recording gradients.
    pub fn example_loss(&self, example: &Example) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let loss = self.loss_on(&mut tape, example)?;
        Ok(tape.scalar(loss))
    }

    /// Checks the gradient of the mean loss over `examples` against
    /// central differences with step `h`; see [`grad_check`].
    pub fn grad_check(
        &mut self,
        examples: &[Example],
        h: f64,
        cap: usize,
        seed: u64,
    ) -> Result<GradCheckReport> {
        if examples.is_empty() {
            return Err(Error::invalid("no examples to check"));
        }
        let mut params = std::mem::take(&mut self.params);
        let shell = &*self;
        let report = grad_check(&mut params, h, cap, seed, |tape| {
            let losses = examples
                .iter()
                .map(|e| shell.loss_on(tape, e))
                .collect::<Result<Vec<_>>>()?;
            let total = tape.sum(&losses)?;
            tape.scale(total, 1.0 / examples.len() as f64)
        });
        self.params = params;
        report
    }
}

/// Training examples: the train split when the corpus has one, otherwise
/// every admission.
pub fn training_examples(model: &Seq2SeqModel, corpus: &Corpus) -> Result<Vec<Example>> {
    let max_len = model.config().max_decode_len;
    let make = |a: &Admission| {
        Example::from_admission(a, corpus.proc_vocab(), corpus.diag_vocab(), max_len)
    };
    let examples: Vec<Example> = if corpus.has_splits() {
        corpus.admissions_in(Split::Train).map(make).collect()
    } else {
        corpus.admissions().iter().map(make).collect()
    };
    if examples.is_empty() {
        return Err(Error::invalid("the training split is empty"));
    }
    let cfg = model.config();
    if corpus.proc_vocab().len() != cfg.proc_vocab_size
        || corpus.diag_vocab().len() != cfg.diag_vocab_size
    {
        return Err(Error::invalid(format!(
            "model vocab sizes ({}, {}) do not match corpus ({}, {})",
            cfg.proc_vocab_size,
            cfg.diag_vocab_size,
            corpus.proc_vocab().len(),
            corpus.diag_vocab().len()
        )));
    }
    Ok(examples)
}

/// Trains in place; see [`train`].
pub fn train_with<F>(
    model: &mut Seq2SeqModel,
    corpus: &Corpus,
    opts: &TrainOptions,
    mut on_epoch: F,
) -> Result<Vec<f64>>
where
    F: FnMut(usize, f64),
{
    opts.hyper.validate()?;
    if opts.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let examples = training_examples(model, corpus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.config().seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let grads = {
                    let mut tape = Tape::new(&model.params);
                    let loss = model.loss_on(&mut tape, &examples[i])?;
                    epoch_loss += tape.scalar(loss);
                    tape.backward(loss)?
                };
                model.params.accumulate(&grads, scale);
            }
            adam_step(&mut model.params, &opts.hyper)?;
        }
        let mean = epoch_loss / examples.len() as f64;
        on_epoch(epoch, mean);
        history.push(mean);
    }
    Ok(history)
}

/// Trains with per-example gradient accumulation into batches and returns
/// the trained model with the mean loss of every epoch.
pub fn train(
    mut model: Seq2SeqModel,
    corpus: &Corpus,
    opts: &TrainOptions,
) -> Result<(Seq2SeqModel, Vec<f64>)> {
    let history = train_with(&mut model, corpus, opts, |_, _| {})?;
    Ok((model, history))
}
