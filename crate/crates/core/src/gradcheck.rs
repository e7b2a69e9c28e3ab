//! Central-difference verification of tape gradients.
//!
//! `f` must be deterministic: it is re-evaluated twice per checked coordinate
//! on perturbed copies of the parameters and its value is compared against the
//! analytic gradient from a single backward pass.

use crate::error::{Error, Result};
use crate::par;
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Check at most this many evenly spaced coordinates per parameter.
    pub max_coords_per_param: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            max_coords_per_param: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    tape.scalar(out)
}

fn coords(len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(k) if k < len => (0..k).map(|i| i * len / k + (len / k) / 2).collect(),
        _ => (0..len).collect(),
    }
}

/// Largest relative error between autodiff and central differences over the
/// checked coordinates of every parameter in `store`.
pub fn finite_diff_check<F>(store: &ParamStore, opts: &GradCheckOptions, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var> + Sync,
{
    let eps = opts.epsilon;
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference epsilon {eps} outside [1e-7, 1e-3]"
        )));
    }
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let grads = tape.backward(out)?;
    let mut analytic = store.clone();
    analytic.zero_grads();
    analytic.accumulate(&grads)?;

    let jobs: Vec<(usize, usize)> = store
        .ids()
        .flat_map(|id| {
            coords(store.value(id).len(), opts.max_coords_per_param)
                .into_iter()
                .map(move |c| (id.index(), c))
        })
        .collect();

    let numeric: Vec<Result<f64>> = par::map_indexed(jobs.len(), |j| {
        let (p, c) = jobs[j];
        let id = store.ids().nth(p).expect("parameter index in range");
        let mut probe = store.clone();
        let base = probe.value(id).data()[c];
        probe.value_mut(id).data_mut()[c] = base + eps;
        let plus = eval(&probe, &f)?;
        probe.value_mut(id).data_mut()[c] = base - eps;
        let minus = eval(&probe, &f)?;
        Ok((plus - minus) / (2.0 * eps))
    });

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: jobs.len(),
    };
    for (&(p, c), n) in jobs.iter().zip(numeric) {
        let n = n?;
        let param = analytic.iter().nth(p).expect("parameter index in range");
        let a = param.grad.data()[c];
        let err = relative_error(a, n);
        if !(err <= report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_param = param.name.clone();
            report.worst_index = c;
            report.analytic = a;
            report.numeric = n;
        }
    }
    Ok(report)
}
