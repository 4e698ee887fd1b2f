use super::graph::{Graph, Var};
use super::rng::RngStream;
use super::tensor::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Which parameter coordinates to compare.
#[derive(Clone, Copy, Debug)]
pub enum Coordinates {
    All,
    /// `count` coordinates drawn uniformly over all parameter values.
    Sample { count: usize, seed: u64 },
}

/// Maximum relative error between reverse-mode gradients and central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε`, with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
///
/// `loss` builds the scalar loss on a fresh graph; it must be a deterministic
/// function of the parameters.
pub fn grad_check<F>(params: &ParamStore<f64>, loss: F, eps: f64, coords: Coordinates) -> Result<f64>
where
    F: Fn(&mut Graph<f64>) -> Var,
{
    let evaluate = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new(store);
        let out = loss(&mut g);
        let v = g.scalar(out);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss evaluated to {v}")));
        }
        Ok(v)
    };
    evaluate(params)?;
    let analytic = {
        let mut g = Graph::new(params);
        let out = loss(&mut g);
        g.backward(out)
    };

    let all: Vec<(ParamId, usize)> = params
        .ids()
        .flat_map(|id| (0..params.get(id).len()).map(move |i| (id, i)))
        .collect();
    let picked: Vec<(ParamId, usize)> = match coords {
        Coordinates::All => all,
        Coordinates::Sample { count, seed } => {
            let mut s = RngStream::derive(seed, "grad_check", 0);
            (0..count).map(|_| all[s.below(all.len())]).collect()
        }
    };

    let mut work = params.clone();
    let mut worst = 0.0f64;
    for (id, i) in picked {
        let orig = work.get(id).data()[i];
        work.get_mut(id).data_mut()[i] = orig + eps;
        let up = evaluate(&work)?;
        work.get_mut(id).data_mut()[i] = orig - eps;
        let down = evaluate(&work)?;
        work.get_mut(id).data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let exact = analytic.get(id).data()[i];
        let denom = exact.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((exact - numeric).abs() / denom);
    }
    Ok(worst)
}
