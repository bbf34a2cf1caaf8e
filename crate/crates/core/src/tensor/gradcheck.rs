use super::{Backend, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest per-tensor relative error `‖g_ad − g_fd‖ / max(‖g_ad‖, ‖g_fd‖)`
    /// over the checked entries.
    pub max_rel_error: f64,
    /// Relative error of each parameter tensor, in input order.
    pub per_param: Vec<f64>,
    pub entries_checked: usize,
}

/// Compares reverse-mode gradients of `f` against central differences.
///
/// `f` builds a scalar from leaves registered for `params` and must be
/// deterministic. At most `max_entries` entries per tensor are perturbed,
/// spread evenly over the buffer.
pub fn grad_check<F>(params: &[Tensor], h: f64, max_entries: usize, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        let v = g.value(&out);
        if !v.is_scalar() {
            return Err(Error::Usage("grad_check needs a scalar-valued function".into()));
        }
        Ok(v.data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| g.grad_tensor(v)).collect();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    let mut entries_checked = 0;
    for (pi, p) in params.iter().enumerate() {
        let n = p.numel();
        let stride = n.div_ceil(max_entries.max(1)).max(1);
        let (mut diff2, mut ad2, mut fd2) = (0.0, 0.0, 0.0);
        for idx in (0..n).step_by(stride) {
            let orig = p.data()[idx];
            work[pi].data_mut()[idx] = orig + h;
            let fp = eval(&work)?;
            work[pi].data_mut()[idx] = orig - h;
            let fm = eval(&work)?;
            work[pi].data_mut()[idx] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let ad = analytic[pi].data()[idx];
            diff2 += (ad - fd) * (ad - fd);
            ad2 += ad * ad;
            fd2 += fd * fd;
            entries_checked += 1;
        }
        let denom = ad2.max(fd2).sqrt();
        per_param.push(if denom > 0.0 { diff2.sqrt() / denom } else { diff2.sqrt() });
    }
    let max_rel_error = per_param.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        per_param,
        entries_checked,
    })
}
