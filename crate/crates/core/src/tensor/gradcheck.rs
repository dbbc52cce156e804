//! Central finite-difference verification of analytic gradients.

use super::{Graph, Real, Tensor, Var};
use crate::error::Result;

/// Outcome of a gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// Max over elements of `|a - n| / max(|a|, |n|, 1e-6)`.
    pub max_rel_error: f64,
    /// `(input index, element index)` where the maximum occurred.
    pub worst: (usize, usize),
    pub checked: usize,
    /// Elements where every probe step crossed a ReLU or max-pool kink.
    pub skipped_at_kinks: usize,
}

/// Step shrink factors tried when a probe crosses a kink.
const SHRINK: [f64; 5] = [1.0, 0.25, 0.0625, 0.015625, 0.00390625];

/// Checks the gradient of `build` with respect to a single input.
pub fn grad_check<T, F>(build: F, input: &Tensor<T>, eps: f64) -> Result<GradCheck>
where
    T: Real,
    F: Fn(&mut Graph<T>, Var) -> Result<Var>,
{
    grad_check_many(|g, vs| build(g, vs[0]), std::slice::from_ref(input), eps)
}

/// Checks the gradient of a scalar-valued graph with respect to every
/// element of every tensor in `inputs`.
///
/// A central difference is only meaningful when both probes stay in the
/// smooth region of the base point. When a probe changes the ReLU or
/// max-pool branch pattern the step is shrunk; if it still crosses, the
/// element is counted in `skipped_at_kinks` instead of `checked`.
pub fn grad_check_many<T, F>(build: F, inputs: &[Tensor<T>], eps: f64) -> Result<GradCheck>
where
    T: Real,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    grad_check_against(&build, &build, inputs, eps)
}

fn eval<T: Real, F>(
    build: &F,
    tensors: &[Tensor<T>],
    with_grad: bool,
) -> Result<(Graph<T>, Vec<Var>, Var)>
where
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = tensors
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.zero_grad();
            t.requires_grad = with_grad;
            g.leaf(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let loss = build(&mut g, &vars)?;
    Ok((g, vars, loss))
}

/// Like [`grad_check_many`], but the finite differences are taken on
/// `reference`, a second build of the same graph in element type `U`,
/// evaluated at `inputs` converted to `U`. With `U = f64` this checks an
/// `f32` backward pass without the `f32` forward rounding noise that
/// swamps small gradients.
pub fn grad_check_against<T, U, F, G>(
    build: &F,
    reference: &G,
    inputs: &[Tensor<T>],
    eps: f64,
) -> Result<GradCheck>
where
    T: Real,
    U: Real,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
    G: Fn(&mut Graph<U>, &[Var]) -> Result<Var>,
{
    let (mut g, vars, loss) = eval(build, inputs, true)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| match g.grad(v) {
            Some(d) => d.iter().map(|x| x.as_f64()).collect(),
            None => vec![0.0; t.numel()],
        })
        .collect();
    drop(g);

    let mut probe: Vec<Tensor<U>> = inputs.iter().map(Tensor::cast).collect();
    let base_sig = eval(reference, &probe, false)?.0.activation_signature();
    let probe_at = |probe: &[Tensor<U>]| -> Result<(f64, u64)> {
        let (g, _, loss) = eval(reference, probe, false)?;
        Ok((g.scalar_f64(loss), g.activation_signature()))
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
        skipped_at_kinks: 0,
    };
    for ti in 0..inputs.len() {
        for j in 0..inputs[ti].numel() {
            let orig = probe[ti].data()[j];
            let mut numeric = None;
            for f in SHRINK {
                let h = eps * f;
                // step by the representable perturbation, not the requested one
                let up = U::from_f64(orig.as_f64() + h);
                let down = U::from_f64(orig.as_f64() - h);
                probe[ti].data_mut()[j] = up;
                let (plus, sig_up) = probe_at(&probe)?;
                probe[ti].data_mut()[j] = down;
                let (minus, sig_down) = probe_at(&probe)?;
                probe[ti].data_mut()[j] = orig;
                if sig_up == base_sig && sig_down == base_sig {
                    numeric = Some((plus - minus) / (up.as_f64() - down.as_f64()));
                    break;
                }
            }
            let Some(numeric) = numeric else {
                report.skipped_at_kinks += 1;
                continue;
            };
            let a = analytic[ti][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (ti, j);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
