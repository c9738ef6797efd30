use super::{ParamId, ParamStore};

/// One compared coordinate.
#[derive(Clone, Debug)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub failures: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// Central-difference gradient checker.
///
/// Analytic gradients are read from the store's gradient slots, which the
/// caller fills before running the check. Each checked coordinate compares
/// `|analytic - numeric| / max(1, |analytic|)` against the tolerance.
#[derive(Clone, Debug)]
pub struct GradCheck {
    eps: f64,
    tol: f64,
    params: Option<Vec<String>>,
    max_coords: Option<usize>,
}

impl GradCheck {
    pub fn new(eps: f64, tol: f64) -> Self {
        assert!(eps > 0.0, "eps must be positive");
        GradCheck {
            eps,
            tol,
            params: None,
            max_coords: None,
        }
    }

    /// Restrict the check to parameters whose names start with one of `prefixes`.
    pub fn params<S: AsRef<str>>(mut self, prefixes: &[S]) -> Self {
        self.params = Some(prefixes.iter().map(|s| s.as_ref().to_string()).collect());
        self
    }

    /// Check at most `n` evenly spaced coordinates per parameter.
    pub fn max_coords(mut self, n: usize) -> Self {
        self.max_coords = Some(n.max(1));
        self
    }

    pub fn run<F>(&self, store: &mut ParamStore, mut f: F) -> GradCheckReport
    where
        F: FnMut(&ParamStore) -> f64,
    {
        let mut report = GradCheckReport {
            tolerance: self.tol,
            ..Default::default()
        };
        let ids: Vec<ParamId> = store
            .ids()
            .filter(|&id| match &self.params {
                None => true,
                Some(prefixes) => prefixes.iter().any(|p| store.name(id).starts_with(p.as_str())),
            })
            .collect();
        for id in ids {
            let len = store.value(id).data().len();
            let stride = match self.max_coords {
                Some(n) if n < len => len.div_ceil(n),
                _ => 1,
            };
            for index in (0..len).step_by(stride) {
                let analytic = store.grad(id).data()[index];
                let orig = store.value(id).data()[index];
                store.value_mut(id).data_mut()[index] = orig + self.eps;
                let plus = f(store);
                store.value_mut(id).data_mut()[index] = orig - self.eps;
                let minus = f(store);
                store.value_mut(id).data_mut()[index] = orig;
                let numeric = (plus - minus) / (2.0 * self.eps);
                let rel_error = (analytic - numeric).abs() / analytic.abs().max(1.0);
                report.checked += 1;
                report.max_rel_error = report.max_rel_error.max(rel_error);
                if !(rel_error <= self.tol) {
                    report.failures.push(CoordCheck {
                        param: store.name(id).to_string(),
                        index,
                        analytic,
                        numeric,
                        rel_error,
                    });
                }
            }
        }
        report
    }
}

/// Convenience wrapper checking every coordinate of every parameter.
pub fn finite_diff_check<F>(store: &mut ParamStore, f: F, eps: f64, tol: f64) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    GradCheck::new(eps, tol).run(store, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Mat;

    #[test]
    fn square_function() {
        let mut s = ParamStore::new();
        let id = s.add("p", Mat::from_rows(&[[3.0]])).unwrap();
        s.grad_mut(id).set(0, 0, 6.0);
        let report = finite_diff_check(&mut s, |s| s.value(id).get(0, 0).powi(2), 1e-4, 1e-6);
        assert!(report.passed(), "{report:?}");
        assert_eq!(s.value(id).get(0, 0), 3.0, "value restored");
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut s = ParamStore::new();
        s.add("p", Mat::from_rows(&[[1.0, -2.0, 5.0]])).unwrap();
        let report = finite_diff_check(&mut s, |_| 4.2, 1e-4, 1e-9);
        assert!(report.passed());
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let mut s = ParamStore::new();
        let id = s.add("p", Mat::from_rows(&[[2.0]])).unwrap();
        s.grad_mut(id).set(0, 0, 1.0);
        let report = finite_diff_check(&mut s, |s| s.value(id).get(0, 0).powi(2), 1e-4, 1e-4);
        assert!(!report.passed());
        assert_eq!(report.failures[0].param, "p");
        assert!((report.failures[0].numeric - 4.0).abs() < 1e-6);
    }

    #[test]
    fn prefix_filter_and_sampling() {
        let mut s = ParamStore::new();
        s.add("enc.w", Mat::zeros(1, 10)).unwrap();
        s.add("other", Mat::zeros(1, 10)).unwrap();
        let report = GradCheck::new(1e-4, 1e-6)
            .params(&["enc."])
            .max_coords(3)
            .run(&mut s, |_| 0.0);
        assert_eq!(report.checked, 3);
    }
}
