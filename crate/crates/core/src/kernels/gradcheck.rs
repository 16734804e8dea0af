//! Finite-difference verification of the reverse pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{ForwardOptions, Graph, NodeId, Op, Tape};
use super::params::{ParamKind, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Scalar reduction of the graph outputs that gradients are taken of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probe {
    /// `0.5 * sum(y^2)` over every output.
    Quadratic,
    /// `sum(r * y)` with fixed uniform `r` in `[-1, 1]` drawn from `seed`.
    Projection { seed: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates compared per tensor (those with the largest analytic
    /// gradient magnitude are taken first).
    pub samples: usize,
    /// Denominator floor of the relative error.
    pub abs_floor: f64,
    pub probe: Probe,
    pub forward: ForwardOptions,
    /// Also check gradients with respect to the graph inputs.
    pub inputs: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            samples: 4,
            abs_floor: 1e-8,
            probe: Probe::Projection { seed: 0x5eed },
            forward: ForwardOptions::eval(),
            inputs: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_grad: f64,
    pub checked: usize,
    /// Coordinates dropped because a perturbation moved some ReLU input
    /// across zero, where the function is not differentiable.
    pub skipped: usize,
    /// Coordinates where both analytic and numeric values are below the
    /// probe's roundoff level, so the derivative is zero to working
    /// precision; they count as agreeing.
    pub within_roundoff: usize,
    pub frozen: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
    /// Resolution of a central difference: `ROUNDOFF_ULPS * eps * mass / 2h`
    /// with `mass` the summed magnitude of the probe's terms.
    pub roundoff: f64,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn probe_weights(graph: &Graph, tape: &Tape, probe: Probe) -> Vec<(NodeId, Option<Tensor>)> {
    graph
        .outputs()
        .iter()
        .enumerate()
        .map(|(k, &(_, id))| {
            let w = match probe {
                Probe::Quadratic => None,
                Probe::Projection { seed } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
                    Some(Tensor::uniform(tape.value(id).shape(), -1.0, 1.0, &mut rng))
                }
            };
            (id, w)
        })
        .collect()
}

fn probe_value(tape: &Tape, weights: &[(NodeId, Option<Tensor>)]) -> f64 {
    weights
        .iter()
        .map(|(id, w)| {
            let y = tape.value(*id).data();
            match w {
                None => 0.5 * y.iter().map(|v| v * v).sum::<f64>(),
                Some(w) => y.iter().zip(w.data()).map(|(a, b)| a * b).sum(),
            }
        })
        .sum()
}

/// Summed magnitude of the probe's terms; the rounding error of the probe
/// value scales with it.
fn probe_mass(tape: &Tape, weights: &[(NodeId, Option<Tensor>)]) -> f64 {
    weights
        .iter()
        .map(|(id, w)| {
            let y = tape.value(*id).data();
            match w {
                None => 0.5 * y.iter().map(|v| v * v).sum::<f64>(),
                Some(w) => y.iter().zip(w.data()).map(|(a, b)| (a * b).abs()).sum(),
            }
        })
        .sum()
}

const ROUNDOFF_ULPS: f64 = 4.0;

fn relu_signs(graph: &Graph, tape: &Tape) -> Vec<bool> {
    graph
        .nodes()
        .iter()
        .filter(|n| n.op == Op::Relu)
        .flat_map(|n| tape.value(n.inputs[0]).data().iter().map(|&v| v > 0.0))
        .collect()
}

fn top_coordinates(g: &Tensor) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| g.data()[b].abs().total_cmp(&g.data()[a].abs()).then(a.cmp(&b)));
    idx
}

fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compare analytic gradients of the probe against central differences.
///
/// Parameters are perturbed in place and restored afterwards. Buffers are
/// not checked; frozen parameters are reported with a zero gradient.
pub fn grad_check(
    graph: &Graph,
    store: &mut ParamStore,
    inputs: &[Tensor],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let tape = graph.forward(store, inputs, opts.forward)?;
    let weights = probe_weights(graph, &tape, opts.probe);
    let seeds = weights
        .iter()
        .map(|(id, w)| (*id, w.clone().unwrap_or_else(|| tape.value(*id).clone())))
        .collect();
    let back = graph.backward(store, &tape, seeds, opts.inputs)?;

    let eval = |store: &ParamStore, inputs: &[Tensor]| -> Result<(f64, Vec<bool>)> {
        let t = graph.forward(store, inputs, opts.forward)?;
        Ok((probe_value(&t, &weights), relu_signs(graph, &t)))
    };
    let h = opts.step;
    let roundoff = ROUNDOFF_ULPS * f64::EPSILON * probe_mass(&tape, &weights) / (2.0 * h);
    let compare = |check: &mut ParamCheck, a: f64, n: f64| {
        if a.abs().max(n.abs()) <= roundoff {
            check.within_roundoff += 1;
        } else {
            check.max_rel_error = check.max_rel_error.max(rel_error(a, n, opts.abs_floor));
        }
        check.checked += 1;
    };
    let mut report = Vec::new();

    for id in graph.referenced_params() {
        let entry = store.entry(id);
        if entry.kind != ParamKind::Trainable {
            continue;
        }
        let name = entry.name.clone();
        if entry.frozen {
            if back.params.get(id).is_some() {
                return Err(Error::Numeric(format!("frozen parameter `{name}` received a gradient")));
            }
            report.push(ParamCheck {
                name,
                max_rel_error: 0.0,
                max_abs_grad: 0.0,
                checked: 0,
                skipped: 0,
                within_roundoff: 0,
                frozen: true,
            });
            continue;
        }
        let analytic = back
            .params
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.value(id).shape()));
        if !analytic.all_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for parameter `{name}`")));
        }
        let mut check = ParamCheck {
            name,
            max_rel_error: 0.0,
            max_abs_grad: analytic.max_abs(),
            checked: 0,
            skipped: 0,
            within_roundoff: 0,
            frozen: false,
        };
        for i in top_coordinates(&analytic).into_iter().take(4 * opts.samples) {
            if check.checked >= opts.samples {
                break;
            }
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + h;
            let plus = eval(store, inputs);
            store.value_mut(id).data_mut()[i] = orig - h;
            let minus = eval(store, inputs);
            store.value_mut(id).data_mut()[i] = orig;
            let ((fp, sp), (fm, sm)) = (plus?, minus?);
            if sp != sm {
                check.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            if !numeric.is_finite() {
                return Err(Error::Numeric(format!("non-finite probe around `{}`", check.name)));
            }
            compare(&mut check, analytic.data()[i], numeric);
        }
        report.push(check);
    }

    if opts.inputs {
        for (slot, g) in back.inputs.iter().enumerate() {
            let analytic = g.clone().unwrap_or_else(|| Tensor::zeros(inputs[slot].shape()));
            let mut check = ParamCheck {
                name: format!("input{slot}"),
                max_rel_error: 0.0,
                max_abs_grad: analytic.max_abs(),
                checked: 0,
                skipped: 0,
                within_roundoff: 0,
                frozen: false,
            };
            let mut probe_inputs = inputs.to_vec();
            for i in top_coordinates(&analytic).into_iter().take(4 * opts.samples) {
                if check.checked >= opts.samples {
                    break;
                }
                let orig = inputs[slot].data()[i];
                probe_inputs[slot].data_mut()[i] = orig + h;
                let (fp, sp) = eval(store, &probe_inputs)?;
                probe_inputs[slot].data_mut()[i] = orig - h;
                let (fm, sm) = eval(store, &probe_inputs)?;
                probe_inputs[slot].data_mut()[i] = orig;
                if sp != sm {
                    check.skipped += 1;
                    continue;
                }
                let numeric = (fp - fm) / (2.0 * h);
                compare(&mut check, analytic.data()[i], numeric);
            }
            report.push(check);
        }
    }

    let pass = report.iter().all(|p| p.max_rel_error < opts.tolerance);
    Ok(GradCheckReport {
        params: report,
        tolerance: opts.tolerance,
        roundoff,
        pass,
    })
}

/// Random tensor helper for checks.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..shape.iter().product::<usize>()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::graph::GraphBuilder;

    #[test]
    fn linear_quadratic_probe_is_tight() {
        let mut store = ParamStore::new();
        let mut b = GraphBuilder::new(&mut store, 4);
        let x = b.input("x");
        let y = b.linear("fc", x, 3, 2).unwrap();
        b.output("y", y);
        let g = b.finish();
        let opts = GradCheckOptions {
            probe: Probe::Quadratic,
            samples: 6,
            inputs: true,
            tolerance: 1e-7,
            ..Default::default()
        };
        let r = grad_check(&g, &mut store, &[random_tensor(&[2, 3], 1)], &opts).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn frozen_parameter_reports_zero() {
        let mut store = ParamStore::new();
        let mut b = GraphBuilder::new(&mut store, 4);
        let x = b.input("x");
        let y = b.linear("fc", x, 3, 2).unwrap();
        b.output("y", y);
        let g = b.finish();
        store.set_frozen("fc.weight", true).unwrap();
        let r = grad_check(&g, &mut store, &[random_tensor(&[2, 3], 1)], &GradCheckOptions::default()).unwrap();
        let w = r.params.iter().find(|p| p.name == "fc.weight").unwrap();
        assert!(w.frozen && w.max_abs_grad == 0.0);
    }
}
