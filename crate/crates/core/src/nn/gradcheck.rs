use super::{Graph, NnError, ParamStore, Var};

/// Worst disagreement between reverse-mode and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `name[index]` of the worst scalar.
    pub worst: String,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const REL_FLOOR: f64 = 1e-6;

/// Compares the gradient of the scalar built by `loss` with respect to every
/// parameter in `store` against central differences with step `step`.
pub fn check_gradients<E, F>(store: &ParamStore, step: f64, loss: F) -> Result<GradCheck, E>
where
    E: From<NnError>,
    F: Fn(&mut Graph, &ParamStore) -> Result<Var, E>,
{
    let eval = |s: &ParamStore| -> Result<f64, E> {
        let mut g = Graph::new();
        let l = loss(&mut g, s)?;
        Ok(g.scalar(l))
    };
    let mut g = Graph::new();
    let l = loss(&mut g, store)?;
    let analytic = g.backward(l)?.param_grads(store)?;

    let mut probe = store.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (name, grad) in &analytic {
        for (i, &a) in grad.iter().enumerate() {
            let orig = probe.get(name)?.data()[i];
            probe.get_mut(name)?.data_mut()[i] = orig + step;
            let up = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig - step;
            let down = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            let n = (up - down) / (2.0 * step);
            let err = relative_error(a, n, REL_FLOOR);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = err;
                report.worst = format!("{name}[{i}]");
                report.analytic = a;
                report.numeric = n;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn quadratic_is_exact() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap());
        let r = check_gradients::<NnError, _>(&s, 1e-5, |g, s| {
            let w = g.param(s, "w")?;
            g.mse(w, &[0.0, 0.0, 0.0])
        })
        .unwrap();
        assert_eq!(r.checked, 3);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1e-6), 0.0);
        assert_eq!(relative_error(1e-9, 0.0, 1e-6), 1e-3);
        assert_eq!(relative_error(2.0, 1.0, 1e-6), 0.5);
    }
}
