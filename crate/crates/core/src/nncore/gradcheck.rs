use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nncore::{NodeId, ParamId, ParamStore, Tape};

/// Smallest number of scalars a capped check will sample.
pub const MIN_SAMPLES: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst scalar.
    pub worst: Option<(String, usize)>,
}

/// Relative error with an absolute floor in the denominator so that
/// gradients that are zero up to rounding do not blow up the ratio.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-4);
    (analytic - numeric).abs() / denom
}

/// Compares analytic gradients against central finite differences.
///
/// `build_loss` records a scalar loss on the tape it is given. When the
/// model has more than `cap` scalars a seeded random subset of
/// `max(cap, MIN_SAMPLES)` of them is checked.
pub fn grad_check<F>(
    params: &mut ParamStore,
    h: f64,
    cap: usize,
    seed: u64,
    build_loss: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<NodeId>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let eval = |params: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(params);
        let loss = build_loss(&mut tape)?;
        let v = tape.scalar(loss);
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check loss"));
        }
        Ok(v)
    };

    let analytic = {
        let mut tape = Tape::new(params);
        let loss = build_loss(&mut tape)?;
        if !tape.scalar(loss).is_finite() {
            return Err(Error::NonFinite("grad_check loss"));
        }
        tape.backward(loss)?
    };

    let mut all: Vec<(ParamId, usize)> = Vec::new();
    for (id, p) in params.iter() {
        all.extend((0..p.value.data().len()).map(|i| (id, i)));
    }
    let cap = cap.max(MIN_SAMPLES);
    let chosen: Vec<(ParamId, usize)> = if all.len() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = sample(&mut rng, all.len(), cap).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| all[i]).collect()
    } else {
        all
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: chosen.len(),
        worst: None,
    };
    for (id, idx) in chosen {
        let original = params.value(id).data()[idx];
        params.get_mut(id).value.data_mut()[idx] = original + h;
        let plus = eval(params);
        params.get_mut(id).value.data_mut()[idx] = original - h;
        let minus = eval(params);
        params.get_mut(id).value.data_mut()[idx] = original;
        let numeric = (plus? - minus?) / (2.0 * h);
        let err = relative_error(analytic.scalar(id, idx), numeric);
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = Some((params.get(id).name.clone(), idx));
        }
    }
    Ok(report)
}
