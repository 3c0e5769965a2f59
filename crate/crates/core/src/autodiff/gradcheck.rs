use crate::error::{Error, Result};
use crate::model::{ParameterStore, StoreGradient};

/// Worst disagreement found by [`finite_difference_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(store index, parameter name, flat entry)` of the worst entry.
    pub worst: Option<(usize, String, usize)>,
    pub entries_checked: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares analytic gradients against central differences for every entry
/// of every store.
///
/// `objective` evaluates the scalar at the current parameters and returns the
/// analytic gradient for each store, aligned with `stores`. Each entry is
/// restored bit-exactly after it is perturbed.
pub fn finite_difference_check<F>(
    stores: &mut [ParameterStore],
    eps: f64,
    mut objective: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[ParameterStore]) -> Result<(f64, Vec<StoreGradient>)>,
{
    if !(1e-5..=1e-2).contains(&eps) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {eps} outside [1e-5, 1e-2]"
        )));
    }
    let (_, analytic) = objective(stores)?;
    if analytic.len() != stores.len() {
        return Err(Error::DimMismatch {
            op: "gradcheck",
            detail: format!("{} gradients for {} stores", analytic.len(), stores.len()),
        });
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for s in 0..stores.len() {
        for p in 0..stores[s].len() {
            let id = stores[s].id_at(p);
            for e in 0..stores[s].get(id).len() {
                let original = stores[s].get(id).data()[e];
                stores[s].get_mut(id).data_mut()[e] = original + eps;
                let plus = objective(stores)?.0;
                stores[s].get_mut(id).data_mut()[e] = original - eps;
                let minus = objective(stores)?.0;
                stores[s].get_mut(id).data_mut()[e] = original;
                if !plus.is_finite() || !minus.is_finite() {
                    return Err(Error::NonFinite("finite difference"));
                }
                let numeric = (plus - minus) / (2.0 * eps);
                let err = relative_error(analytic[s].get(id).data()[e], numeric);
                report.entries_checked += 1;
                if err > report.max_relative_error || report.worst.is_none() {
                    report.max_relative_error = report.max_relative_error.max(err);
                    report.worst = Some((s, stores[s].name(id).to_string(), e));
                }
            }
        }
    }
    Ok(report)
}
