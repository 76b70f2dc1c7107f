use super::network::{Network, Recurrence};
use super::train::Dataset;
use crate::error::{Error, Result};

fn lags(net: &Network) -> Result<(usize, usize, usize)> {
    match net.topology.recurrence {
        Recurrence::Narx { input_lags, output_lags } => {
            let n_exo = net
                .topology
                .narx_exogenous()
                .ok_or_else(|| Error::Shape("inconsistent NARX input width".into()))?;
            Ok((n_exo, input_lags, output_lags))
        }
        other => Err(Error::Mode(format!("expected a NARX network, found {other:?}"))),
    }
}

/// Tapped-delay regressor `[u(t) … u(t−du+1), y(t−1) … y(t−dy)]`.
/// Histories are chronological: the last input is `u(t)`, the last output
/// is `y(t−1)`.
pub fn narx_regressor(
    input_history: &[Vec<f64>],
    output_history: &[Vec<f64>],
    input_lags: usize,
    output_lags: usize,
) -> Result<Vec<f64>> {
    if input_history.len() < input_lags {
        return Err(Error::range("input history length", input_history.len() as f64, input_lags as f64, f64::INFINITY));
    }
    if output_history.len() < output_lags {
        return Err(Error::range("output history length", output_history.len() as f64, output_lags as f64, f64::INFINITY));
    }
    let mut r = Vec::new();
    for u in input_history.iter().rev().take(input_lags) {
        r.extend_from_slice(u);
    }
    for y in output_history.iter().rev().take(output_lags) {
        r.extend_from_slice(y);
    }
    Ok(r)
}

/// Series-parallel one-step prediction from true past outputs.
pub fn narx_predict(net: &Network, input_history: &[Vec<f64>], output_history: &[Vec<f64>]) -> Result<Vec<f64>> {
    let (n_exo, du, dy) = lags(net)?;
    let n_out = net.n_outputs();
    if input_history.iter().rev().take(du).any(|u| u.len() != n_exo)
        || output_history.iter().rev().take(dy).any(|y| y.len() != n_out)
    {
        return Err(Error::Shape("history widths do not match the network".into()));
    }
    let r = narx_regressor(input_history, output_history, du, dy)?;
    net.forward(&r)
}

/// Teacher-forced training pairs from aligned input/output series.
pub fn narx_dataset(inputs: &[Vec<f64>], outputs: &[Vec<f64>], input_lags: usize, output_lags: usize) -> Result<Dataset> {
    if inputs.len() != outputs.len() {
        return Err(Error::Shape("input and output series differ in length".into()));
    }
    let start = (input_lags - 1).max(output_lags);
    let mut ds = Dataset::default();
    for t in start..inputs.len() {
        let r = narx_regressor(&inputs[..=t], &outputs[..t], input_lags, output_lags)?;
        ds.push(r, outputs[t].clone());
    }
    ds.validate()?;
    Ok(ds)
}

/// Free-running (parallel) simulation: predictions are fed back in place
/// of measured outputs. `initial_outputs` seeds the first `dy` lags and
/// the first `max(du − 1, dy)` steps are not predicted.
pub fn narx_free_run(net: &Network, inputs: &[Vec<f64>], initial_outputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (_, du, dy) = lags(net)?;
    let start = (du - 1).max(dy);
    if initial_outputs.len() < start {
        return Err(Error::range("initial output count", initial_outputs.len() as f64, start as f64, f64::INFINITY));
    }
    let mut ys: Vec<Vec<f64>> = initial_outputs[..start].to_vec();
    for t in start..inputs.len() {
        let y = narx_predict(net, &inputs[..=t], &ys)?;
        ys.push(y);
    }
    Ok(ys)
}
