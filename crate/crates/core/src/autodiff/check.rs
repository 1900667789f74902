//! Central-difference gradient verification harness.

use std::collections::BTreeMap;

use super::{NodeId, Tape, TapeBinding};
use crate::error::{CoreError, Result};
use crate::tensor::ParamSet;

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over checked elements of |fd - analytic| / max(1, |analytic|)
    pub max_rel_err: f64,
    /// Coordinate attaining the max, as `(param name, flat index)`.
    pub worst: (String, usize),
    /// Number of scalar coordinates compared.
    pub checked: usize,
    /// Smallest kink margin seen on the analytic tape.
    pub kink_margin: f64,
}

/// Compare the tape gradient of a scalar function against central
/// differences, coordinate by coordinate.
///
/// `build` must construct the loss on the given tape from a binding of
/// `params` and be deterministic (freeze any sampling noise outside).
/// Only parameters whose name satisfies `filter` are perturbed and compared;
/// the analytic gradient is still taken with every parameter live.
pub fn finite_diff_check<F>(
    build: F,
    params: &ParamSet,
    filter: impl Fn(&str) -> bool,
    h: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &TapeBinding) -> Result<NodeId>,
{
    if h <= 0.0 {
        return Err(CoreError::InvalidArgument(format!(
            "finite_diff_check: h must be positive, got {h}"
        )));
    }

    // Analytic pass.
    let mut tape = Tape::new();
    let binding = TapeBinding::bind(&mut tape, params, true);
    let loss = build(&mut tape, &binding)?;
    tape.backward(loss)?;
    let analytic: BTreeMap<String, Vec<f64>> = binding.gradients(&tape);
    let kink_margin = tape.min_kink_margin();

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut t = Tape::new();
        let b = TapeBinding::bind(&mut t, p, false);
        let id = build(&mut t, &b)?;
        Ok(t.value(id))
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        checked: 0,
        kink_margin,
    };

    let mut work = params.clone();
    let names: Vec<String> = params
        .names()
        .filter(|n| filter(n))
        .cloned()
        .collect();
    for name in names {
        let len = params.get(&name)?.numel();
        for idx in 0..len {
            let orig = params.get(&name)?.data()[idx];
            work.get_mut(&name)?.data_mut()[idx] = orig + h;
            let f_plus = eval(&work)?;
            work.get_mut(&name)?.data_mut()[idx] = orig - h;
            let f_minus = eval(&work)?;
            work.get_mut(&name)?.data_mut()[idx] = orig;

            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(CoreError::NonFinite {
                    context: "finite_diff_check".to_string(),
                    detail: format!(
                        "perturbing {name}[{idx}] gave f(+h)={f_plus}, f(-h)={f_minus}"
                    ),
                });
            }

            let fd = (f_plus - f_minus) / (2.0 * h);
            let an = analytic[&name][idx];
            let rel = (fd - an).abs() / an.abs().max(1.0);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (name.clone(), idx);
            }
        }
    }
    Ok(report)
}
