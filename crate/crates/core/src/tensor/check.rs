use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamWalk, Parameter};
use crate::error::{Error, Result};

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `name[index]` of the entry with the largest relative error.
    pub worst_entry: String,
    pub entries_checked: usize,
}

/// Compares analytic gradients against central finite differences.
///
/// The caller runs its own backward pass first and leaves the analytic
/// gradient of each parameter in [`Parameter::grad`]. `loss` recomputes the
/// scalar loss from the current parameter values; it is called twice per
/// checked entry with that entry nudged by `±step`. The relative error per
/// entry is `|ad - fd| / max(1e-8, |ad| + |fd|)`.
///
/// Tensors larger than `samples_per_tensor` are subsampled with a seeded RNG
/// instead of being swept entirely.
pub fn grad_check<P, F>(
    params: &mut P,
    mut loss: F,
    step: f64,
    samples_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    P: ParamWalk<f64>,
    F: FnMut(&mut P) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive and finite, got {step}"
        )));
    }
    if samples_per_tensor == 0 {
        return Err(Error::Config(
            "samples_per_tensor must be at least 1".to_string(),
        ));
    }

    let mut meta: Vec<(String, usize)> = Vec::new();
    params.walk_mut(&mut |p| {
        meta.push((p.name.clone(), p.value.len()));
        Ok(())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_entry: String::new(),
        entries_checked: 0,
    };

    for (pidx, (name, len)) in meta.iter().enumerate() {
        if *len == 0 {
            continue;
        }
        let indices: Vec<usize> = if *len <= samples_per_tensor {
            (0..*len).collect()
        } else {
            rand::seq::index::sample(&mut rng, *len, samples_per_tensor).into_vec()
        };
        for &ei in &indices {
            let (orig, ad) = read_entry(params, pidx, ei)?;
            if !ad.is_finite() {
                return Err(Error::NonFinite {
                    path: format!("{name}[{ei}] analytic gradient"),
                });
            }

            write_entry(params, pidx, ei, orig + step)?;
            let loss_plus = loss(params)?;
            write_entry(params, pidx, ei, orig - step)?;
            let loss_minus = loss(params)?;
            write_entry(params, pidx, ei, orig)?;

            let fd = (loss_plus - loss_minus) / (2.0 * step);
            if !fd.is_finite() {
                return Err(Error::NonFinite {
                    path: format!("{name}[{ei}] finite difference"),
                });
            }

            let rel = (ad - fd).abs() / 1e-8f64.max(ad.abs() + fd.abs());
            report.entries_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_entry = format!("{name}[{ei}]");
            }
        }
    }
    Ok(report)
}

fn read_entry<P: ParamWalk<f64>>(params: &mut P, pidx: usize, ei: usize) -> Result<(f64, f64)> {
    let mut found = None;
    let mut i = 0usize;
    params.walk_mut(&mut |p: &mut Parameter<f64>| {
        if i == pidx {
            found = Some((p.value.data()[ei], p.grad.data()[ei]));
        }
        i += 1;
        Ok(())
    })?;
    found.ok_or_else(|| Error::Config(format!("parameter index {pidx} out of range")))
}

fn write_entry<P: ParamWalk<f64>>(params: &mut P, pidx: usize, ei: usize, v: f64) -> Result<()> {
    let mut i = 0usize;
    params.walk_mut(&mut |p: &mut Parameter<f64>| {
        if i == pidx {
            p.value.data_mut()[ei] = v;
        }
        i += 1;
        Ok(())
    })
}
