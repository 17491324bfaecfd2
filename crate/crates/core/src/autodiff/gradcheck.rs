//! Central-difference gradient verification.

use super::{AutodiffError, BoundParams, ParamStore, Tape, Var};

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a − b| / max(1, |a|, |b|)` over the checked entries.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Entries where one-sided slopes disagree, i.e. `f` has a kink within
    /// one step. They are excluded from `max_rel_error`.
    pub skipped: Vec<(String, usize)>,
    pub warnings: Vec<String>,
}

/// One-sided slopes differing by more than this (relative) mark a kink.
const KINK_TOLERANCE: f64 = 1e-2;

/// Compares reverse-mode gradients of `f` at `params` with central
/// differences `(f(p+h) − f(p−h)) / 2h`, entry by entry.
pub fn grad_check<F>(params: &ParamStore, f: F, h: f64) -> Result<GradCheckReport, AutodiffError>
where
    F: for<'t> Fn(&'t Tape, &BoundParams<'t>) -> Result<Var<'t>, AutodiffError>,
{
    let eval = |store: &ParamStore| -> Result<f64, AutodiffError> {
        let tape = Tape::new();
        let bound = store.bind(&tape, false);
        let out = f(&tape, &bound)?;
        let value = out.value().item().ok_or_else(|| AutodiffError::NonScalarLoss(out.shape()))?;
        if !value.is_finite() {
            return Err(AutodiffError::NonFiniteValue(value));
        }
        Ok(value)
    };

    let analytic = {
        let tape = Tape::new();
        let bound = params.bind(&tape, true);
        let loss = f(&tape, &bound)?;
        let v = loss.value().item().ok_or_else(|| AutodiffError::NonScalarLoss(loss.shape()))?;
        if !v.is_finite() {
            return Err(AutodiffError::NonFiniteValue(v));
        }
        let mut grads = tape.backward(loss)?;
        bound.collect_grads(&mut grads)
    };
    let f0 = eval(params)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: Vec::new(),
        warnings: Vec::new(),
    };
    let mut probe = params.clone();
    for (name, grad) in &analytic {
        for idx in 0..grad.len() {
            let original = probe.get(name).expect("same names").data()[idx];
            probe.get_mut(name).unwrap().data_mut()[idx] = original + h;
            let plus = eval(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[idx] = original - h;
            let minus = eval(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[idx] = original;

            let forward = (plus - f0) / h;
            let backward = (f0 - minus) / h;
            if (forward - backward).abs() > KINK_TOLERANCE * 1f64.max(forward.abs()).max(backward.abs()) {
                report.warnings.push(format!(
                    "{name}[{idx}]: one-sided slopes {forward:.6e} and {backward:.6e} disagree; skipped as a kink"
                ));
                report.skipped.push((name.clone(), idx));
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[idx];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.checked += 1;
            if rel >= report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), idx));
            }
        }
    }
    Ok(report)
}
