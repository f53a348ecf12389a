use super::{Gradients, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub n_checked: usize,
    /// `(param name, flat index, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
    /// `(analytic, numeric)` for every coordinate, in parameter order.
    pub pairs: Vec<(f64, f64)>,
}

impl GradCheckReport {
    /// Coordinates that miss `rel_tol` and also differ by more than
    /// `abs_tol`. With `abs_tol` set near the finite-difference roundoff
    /// floor this separates real gradient errors from float noise on
    /// vanishing gradients.
    pub fn count_beyond(&self, rel_tol: f64, abs_tol: f64) -> usize {
        self.pairs
            .iter()
            .filter(|&&(a, n)| {
                let diff = (a - n).abs();
                diff > rel_tol * a.abs().max(n.abs()).max(1e-8) && diff > abs_tol
            })
            .count()
    }
}

/// Roundoff floor of a central difference: a few ulps of the objective
/// divided by `2h`.
pub fn roundoff_floor(objective: f64, h: f64) -> f64 {
    8.0 * f64::EPSILON * objective.abs().max(1.0) / (2.0 * h)
}

/// Compares `analytic` against central differences of `f` on every scalar
/// of every parameter. Relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(store: &mut ParamStore, analytic: &Gradients, mut f: F, h: f64) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        n_checked: 0,
        worst: None,
        pairs: Vec::new(),
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for i in 0..store.value(id).len() {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + h;
            let plus = f(store);
            store.value_mut(id).data_mut()[i] = orig - h;
            let minus = f(store);
            store.value_mut(id).data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.scalar(id, i);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.n_checked += 1;
            report.pairs.push((a, numeric));
            if report.worst.is_none() || rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((store.name(id).to_string(), i, a, numeric));
            }
        }
    }
    report
}
