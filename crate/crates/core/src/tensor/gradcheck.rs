use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Bound, ParamStore, Tape, TensorError, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Coordinates are subsampled (seeded) when the store holds more.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_coords: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// `|a - n| / max(1, |a|, |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn evaluate<F, E>(store: &ParamStore, f: &mut F) -> Result<f64, E>
where
    F: FnMut(&mut Tape, &Bound) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape)?;
    let out = f(&mut tape, &bound)?;
    let value = tape.value(out).item().ok_or_else(|| TensorError::NotScalar {
        shape: tape.value(out).shape().to_vec(),
    })?;
    if !value.is_finite() {
        return Err(TensorError::NonFiniteObjective.into());
    }
    Ok(value)
}

/// Compare reverse-mode gradients of `f` against central differences.
///
/// `f` builds a scalar on the given tape from the bound parameters; it must
/// be deterministic (any noise frozen by the caller).
pub fn finite_diff_check<F, E>(params: &ParamStore, mut f: F, opts: GradCheckOptions) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &Bound) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape)?;
    let loss = f(&mut tape, &bound)?;
    if !tape.value(loss).all_finite() {
        return Err(TensorError::NonFiniteObjective.into());
    }
    tape.backward(loss)?;
    let grads = params.gradients(&tape, &bound);
    drop(tape);

    let coords: Vec<(String, usize)> = params
        .iter()
        .flat_map(|(name, a)| (0..a.len()).map(move |i| (name.to_string(), i)))
        .collect();
    let chosen: Vec<usize> = if coords.len() <= opts.max_coords {
        (0..coords.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut idx = sample(&mut rng, coords.len(), opts.max_coords).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: chosen.len(),
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for c in chosen {
        let (name, i) = &coords[c];
        let base = params.get(name).expect("coordinate from store").data()[*i];
        let mut probe = params.clone();
        probe.get_mut(name).expect("present").data_mut()[*i] = base + opts.step;
        let plus = evaluate(&probe, &mut f)?;
        probe.get_mut(name).expect("present").data_mut()[*i] = base - opts.step;
        let minus = evaluate(&probe, &mut f)?;
        let numeric = (plus - minus) / (2.0 * opts.step);
        let analytic = grads[name].data()[*i];
        let err = relative_error(analytic, numeric);
        if err > report.max_rel_error || report.worst_param.is_empty() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst_param = name.clone();
            report.worst_index = *i;
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
