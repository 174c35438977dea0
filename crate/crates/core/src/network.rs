//! Dense feed-forward networks shared by every trainer: topology, weight
//! sets, forward evaluation, losses and classification metrics.
//!
//! Layer `l` (1-based, as in `layer_sizes`) owns a weight matrix of shape
//! `inputs x outputs`, so a layer output is `phi(W^T . o)` where `o` is the
//! previous layer output, optionally extended with a trailing constant 1
//! when the topology uses biases.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Lower clamp applied to predicted probabilities inside the cross-entropy log.
pub const CROSS_ENTROPY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    #[serde(rename = "relu")]
    ReLU,
    Identity,
    Softmax,
}

impl Activation {
    pub fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::ReLU => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Identity => {}
            Activation::Softmax => softmax_in_place(z),
        }
    }

    /// Back-propagates `grad_out = dL/do` through the activation, returning
    /// `dL/dz`. `z` is the pre-activation and `out` the activation output.
    pub fn backprop(self, z: &[f64], out: &[f64], grad_out: &[f64]) -> Vec<f64> {
        match self {
            Activation::Sigmoid => out.iter().zip(grad_out).map(|(o, g)| g * o * (1.0 - o)).collect(),
            Activation::Tanh => out.iter().zip(grad_out).map(|(o, g)| g * (1.0 - o * o)).collect(),
            // Subgradient 0 at the kink.
            Activation::ReLU => z
                .iter()
                .zip(grad_out)
                .map(|(z, g)| if *z > 0.0 { *g } else { 0.0 })
                .collect(),
            Activation::Identity => grad_out.to_vec(),
            Activation::Softmax => {
                let dot: f64 = out.iter().zip(grad_out).map(|(o, g)| o * g).sum();
                out.iter().zip(grad_out).map(|(o, g)| o * (g - dot)).collect()
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::ReLU),
            "identity" | "linear" => Ok(Activation::Identity),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Layer sizes plus one activation per non-input layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologyFields")]
pub struct Topology {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    #[serde(default)]
    use_bias: bool,
}

#[derive(Deserialize)]
struct TopologyFields {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    #[serde(default)]
    use_bias: bool,
}

impl TryFrom<TopologyFields> for Topology {
    type Error = Error;

    fn try_from(f: TopologyFields) -> Result<Self> {
        Topology::new(f.layer_sizes, f.activations, f.use_bias)
    }
}

impl Topology {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>, use_bias: bool) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Topology("need an input size and at least one layer".into()));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(Error::Topology(format!(
                "{} layers need {} activations, got {}",
                layer_sizes.len() - 1,
                layer_sizes.len() - 1,
                activations.len()
            )));
        }
        if let Some(pos) = layer_sizes.iter().position(|&n| n == 0) {
            return Err(Error::Topology(format!("layer {pos} has size 0")));
        }
        let last = activations.len() - 1;
        if let Some(pos) = activations[..last].iter().position(|a| *a == Activation::Softmax) {
            return Err(Error::Topology(format!(
                "softmax is only allowed in the final layer (found at layer {})",
                pos + 1
            )));
        }
        Ok(Self {
            layer_sizes,
            activations,
            use_bias,
        })
    }

    /// Same activation for every hidden layer and a distinct output activation.
    pub fn uniform(layer_sizes: Vec<usize>, hidden: Activation, output: Activation) -> Result<Self> {
        let n = layer_sizes.len().saturating_sub(1);
        let mut activations = vec![hidden; n];
        if let Some(last) = activations.last_mut() {
            *last = output;
        }
        Self::new(layer_sizes, activations, false)
    }

    pub fn with_bias(mut self, use_bias: bool) -> Self {
        self.use_bias = use_bias;
        self
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn use_bias(&self) -> bool {
        self.use_bias
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    /// Number of weight layers `L`.
    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    /// Shape `(rows, cols)` of the weight matrix of layer `l`, 0-based.
    pub fn weight_shape(&self, l: usize) -> (usize, usize) {
        let rows = self.layer_sizes[l] + usize::from(self.use_bias);
        (rows, self.layer_sizes[l + 1])
    }

    pub fn weight_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_layers()).map(|l| self.weight_shape(l))
    }
}

/// One concrete realization of every layer weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightSet {
    matrices: Vec<Matrix>,
}

impl WeightSet {
    pub fn new(matrices: Vec<Matrix>) -> Self {
        Self { matrices }
    }

    pub fn zeros(topo: &Topology) -> Self {
        Self::from_fn(topo, |_, _, _| 0.0)
    }

    /// Builds a weight set calling `f(layer, row, col)` for every entry.
    pub fn from_fn(topo: &Topology, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let matrices = topo
            .weight_shapes()
            .enumerate()
            .map(|(l, (r, c))| Matrix::from_fn(r, c, |i, j| f(l, i, j)))
            .collect();
        Self { matrices }
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn matrices_mut(&mut self) -> &mut [Matrix] {
        &mut self.matrices
    }

    pub fn layer(&self, l: usize) -> &Matrix {
        &self.matrices[l]
    }

    pub fn scalar_count(&self) -> usize {
        self.matrices.iter().map(|m| m.rows() * m.cols()).sum()
    }

    pub fn check(&self, topo: &Topology) -> Result<()> {
        if self.matrices.len() != topo.num_layers() {
            return Err(Error::Length {
                what: "weight layers",
                expected: topo.num_layers(),
                found: self.matrices.len(),
            });
        }
        for (l, (m, shape)) in self.matrices.iter().zip(topo.weight_shapes()).enumerate() {
            if m.shape() != shape {
                return Err(Error::LayerShape {
                    layer: l + 1,
                    expected: format!("{}x{}", shape.0, shape.1),
                    found: format!("{}x{}", m.rows(), m.cols()),
                });
            }
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("weights of layer {}", l + 1)));
            }
        }
        Ok(())
    }

    /// Every layer rescaled by its own max-abs entry.
    pub fn normalized(&self) -> Result<Self> {
        let matrices = self
            .matrices
            .iter()
            .map(normalize_layer_weights)
            .collect::<Result<_>>()?;
        Ok(Self { matrices })
    }
}

/// Intermediate values of one forward pass, kept for back-propagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Layer inputs, bias-augmented when the topology uses biases.
    pub inputs: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("at least one layer")
    }
}

fn layer_input(o: &[f64], use_bias: bool) -> Vec<f64> {
    let mut input = Vec::with_capacity(o.len() + 1);
    input.extend_from_slice(o);
    if use_bias {
        input.push(1.0);
    }
    input
}

fn affine(w: &Matrix, input: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; w.cols()];
    for (i, &x) in input.iter().enumerate() {
        for (zj, wij) in z.iter_mut().zip(w.row(i)) {
            *zj += wij * x;
        }
    }
    z
}

fn check_input(ws: &WeightSet, topo: &Topology, x: &[f64]) -> Result<()> {
    ws.check(topo)?;
    if x.len() != topo.input_dim() {
        return Err(Error::LayerShape {
            layer: 0,
            expected: format!("input of length {}", topo.input_dim()),
            found: format!("input of length {}", x.len()),
        });
    }
    Ok(())
}

fn forward_unchecked(ws: &WeightSet, topo: &Topology, x: &[f64]) -> Vec<f64> {
    let mut o = x.to_vec();
    for (w, act) in ws.matrices.iter().zip(&topo.activations) {
        let input = layer_input(&o, topo.use_bias);
        let mut z = affine(w, &input);
        act.apply(&mut z);
        o = z;
    }
    o
}

pub fn forward(ws: &WeightSet, topo: &Topology, x: &[f64]) -> Result<Vec<f64>> {
    check_input(ws, topo, x)?;
    Ok(forward_unchecked(ws, topo, x))
}

pub fn forward_trace(ws: &WeightSet, topo: &Topology, x: &[f64]) -> Result<ForwardTrace> {
    check_input(ws, topo, x)?;
    let l = topo.num_layers();
    let mut trace = ForwardTrace {
        inputs: Vec::with_capacity(l),
        pre_activations: Vec::with_capacity(l),
        outputs: Vec::with_capacity(l),
    };
    let mut o = x.to_vec();
    for (w, act) in ws.matrices.iter().zip(&topo.activations) {
        let input = layer_input(&o, topo.use_bias);
        let z = affine(w, &input);
        let mut out = z.clone();
        act.apply(&mut out);
        trace.inputs.push(input);
        trace.pre_activations.push(z);
        trace.outputs.push(out.clone());
        o = out;
    }
    Ok(trace)
}

pub fn forward_batch(ws: &WeightSet, topo: &Topology, x: &Matrix) -> Result<Matrix> {
    ws.check(topo)?;
    if x.cols() != topo.input_dim() && x.rows() > 0 {
        return Err(Error::LayerShape {
            layer: 0,
            expected: format!("{} feature columns", topo.input_dim()),
            found: format!("{} feature columns", x.cols()),
        });
    }
    let rows = x.iter_rows().map(|r| forward_unchecked(ws, topo, r)).collect();
    Matrix::from_rows_with_width(rows, topo.output_dim())
}

/// Divides a layer by its largest absolute entry so every entry lies in [-1, 1].
pub fn normalize_layer_weights(w: &Matrix) -> Result<Matrix> {
    if w.as_slice().is_empty() {
        return Err(Error::Config("cannot normalize an empty weight matrix".into()));
    }
    if !w.is_finite() {
        return Err(Error::NonFinite("weight matrix".into()));
    }
    let scale = w.max_abs();
    if scale == 0.0 {
        return Ok(w.clone());
    }
    Ok(w.map(|v| v / scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    CrossEntropy,
    Mae,
}

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Length {
            what: "loss target",
            expected: y_hat.len(),
            found: y.len(),
        });
    }
    Ok(())
}

pub fn loss(kind: LossKind, y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let n = y.len() as f64;
    let value = match kind {
        LossKind::Mse => y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n,
        LossKind::Mae => y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
        LossKind::CrossEntropy => -y
            .iter()
            .zip(y_hat)
            .map(|(t, p)| t * p.max(CROSS_ENTROPY_EPS).ln())
            .sum::<f64>(),
    };
    Ok(value)
}

/// `dL/dy_hat` for a single example.
pub fn loss_gradient(kind: LossKind, y: &[f64], y_hat: &[f64]) -> Result<Vec<f64>> {
    check_lengths(y, y_hat)?;
    let n = y.len() as f64;
    let grad = match kind {
        LossKind::Mse => y.iter().zip(y_hat).map(|(t, p)| 2.0 * (p - t) / n).collect(),
        LossKind::Mae => y
            .iter()
            .zip(y_hat)
            .map(|(t, p)| {
                let d = p - t;
                if d > 0.0 {
                    1.0 / n
                } else if d < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                }
            })
            .collect(),
        LossKind::CrossEntropy => y
            .iter()
            .zip(y_hat)
            .map(|(t, p)| if *p > CROSS_ENTROPY_EPS { -t / p } else { 0.0 })
            .collect(),
    };
    Ok(grad)
}

/// Adapts a one-hot label row to the network output width. A single-output
/// binary head is trained against the probability of class index 1.
pub fn target_for_output(y: &[f64], output_dim: usize) -> Result<Cow<'_, [f64]>> {
    if y.len() == output_dim {
        Ok(Cow::Borrowed(y))
    } else if output_dim == 1 && y.len() == 2 {
        Ok(Cow::Owned(vec![y[1]]))
    } else {
        Err(Error::Length {
            what: "label width",
            expected: output_dim,
            found: y.len(),
        })
    }
}

/// Sum of per-row losses over a feature/label pair, in row order.
pub fn total_error_rows(ws: &WeightSet, topo: &Topology, x: &Matrix, y: &Matrix, kind: LossKind) -> Result<f64> {
    ws.check(topo)?;
    if x.rows() != y.rows() {
        return Err(Error::Length {
            what: "label rows",
            expected: x.rows(),
            found: y.rows(),
        });
    }
    if x.rows() > 0 && x.cols() != topo.input_dim() {
        return Err(Error::LayerShape {
            layer: 0,
            expected: format!("{} feature columns", topo.input_dim()),
            found: format!("{} feature columns", x.cols()),
        });
    }
    let mut total = 0.0;
    for (xi, yi) in x.iter_rows().zip(y.iter_rows()) {
        let out = forward_unchecked(ws, topo, xi);
        let target = target_for_output(yi, out.len())?;
        total += loss(kind, &target, &out)?;
    }
    Ok(total)
}

pub fn total_error(ws: &WeightSet, topo: &Topology, data: &Dataset, kind: LossKind) -> Result<f64> {
    total_error_rows(ws, topo, &data.x, &data.y, kind)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Predicted class of one output row. A single sigmoid output is read as
/// class 1 when it is at least 0.5.
pub fn predicted_class(p: &[f64]) -> usize {
    if p.len() == 1 {
        usize::from(p[0] >= 0.5)
    } else {
        argmax(p)
    }
}

fn check_prediction_shape(y: &Matrix, p: &Matrix) -> Result<()> {
    let binary_head = p.cols() == 1 && y.cols() == 2;
    if y.rows() != p.rows() || (y.cols() != p.cols() && !binary_head) {
        return Err(Error::Length {
            what: "prediction matrix",
            expected: y.rows() * y.cols(),
            found: p.rows() * p.cols(),
        });
    }
    Ok(())
}

/// Fraction of rows whose predicted class matches the one-hot label.
pub fn accuracy(y: &Matrix, p: &Matrix) -> Result<f64> {
    check_prediction_shape(y, p)?;
    if y.rows() == 0 {
        return Ok(0.0);
    }
    let correct = y
        .iter_rows()
        .zip(p.iter_rows())
        .filter(|(yi, pi)| argmax(yi) == predicted_class(pi))
        .count();
    Ok(correct as f64 / y.rows() as f64)
}

/// Recall of every class; `None` for classes absent from `y`.
pub fn per_class_recall(y: &Matrix, p: &Matrix) -> Result<Vec<Option<f64>>> {
    check_prediction_shape(y, p)?;
    let mut hits = vec![0usize; y.cols()];
    let mut totals = vec![0usize; y.cols()];
    for (yi, pi) in y.iter_rows().zip(p.iter_rows()) {
        let class = argmax(yi);
        totals[class] += 1;
        if predicted_class(pi) == class {
            hits[class] += 1;
        }
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rbnn,
    Ffnn,
    Bnn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rbnn => "rbnn",
            ModelKind::Ffnn => "ffnn",
            ModelKind::Bnn => "bnn",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbnn" => Ok(ModelKind::Rbnn),
            "ffnn" => Ok(ModelKind::Ffnn),
            "bnn" => Ok(ModelKind::Bnn),
            other => Err(Error::Config(format!(
                "unknown model {other:?} (expected rbnn, ffnn or bnn)"
            ))),
        }
    }
}

/// Stored scalars per layer. RBNN keeps one mean per neuron (its shared
/// deviation is not counted), FFNN every weight, BNN a mean and a deviation
/// per weight.
pub fn param_breakdown(kind: ModelKind, topo: &Topology) -> Vec<usize> {
    topo.weight_shapes()
        .map(|(rows, cols)| match kind {
            ModelKind::Rbnn => cols,
            ModelKind::Ffnn => rows * cols,
            ModelKind::Bnn => 2 * rows * cols,
        })
        .collect()
}

pub fn param_count(kind: ModelKind, topo: &Topology) -> usize {
    param_breakdown(kind, topo).iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn topo(sizes: &[usize], acts: &[Activation]) -> Topology {
        Topology::new(sizes.to_vec(), acts.to_vec(), false).unwrap()
    }

    #[test]
    fn two_layer_sigmoid_hand_evaluation() {
        use Activation::Sigmoid;
        let t = topo(&[2, 2, 1], &[Sigmoid, Sigmoid]);
        let ws = WeightSet::new(vec![
            Matrix::from_rows(vec![vec![1.0, -1.0], vec![1.0, -1.0]]).unwrap(),
            Matrix::from_rows(vec![vec![1.0], vec![1.0]]).unwrap(),
        ]);
        let trace = forward_trace(&ws, &t, &[1.0, 1.0]).unwrap();
        let hidden = &trace.outputs[0];
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        assert_abs_diff_eq!(hidden[0], s(2.0), epsilon = 1e-15);
        assert_abs_diff_eq!(hidden[1], s(-2.0), epsilon = 1e-15);
        assert_abs_diff_eq!(hidden[0] + hidden[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(trace.output()[0], 0.731_058_578_630_004_9, epsilon = 1e-12);
    }

    #[test]
    fn zero_weights_give_half() {
        let t = topo(&[3, 4, 2], &[Activation::Tanh, Activation::Sigmoid]);
        let out = forward(&WeightSet::zeros(&t), &t, &[0.3, -2.0, 7.0]).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
    }

    #[test]
    fn identity_network_passes_input_through() {
        let t = topo(&[3, 3], &[Activation::Identity]);
        let ws = WeightSet::new(vec![Matrix::identity(3)]);
        let x = [0.25, -1.5, 9.0];
        assert_eq!(forward(&ws, &t, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn bias_row_is_appended() {
        let t = topo(&[1, 1], &[Activation::Identity]).with_bias(true);
        let ws = WeightSet::new(vec![Matrix::from_rows(vec![vec![2.0], vec![0.5]]).unwrap()]);
        assert_eq!(forward(&ws, &t, &[3.0]).unwrap(), vec![6.5]);
    }

    #[test]
    fn forward_reports_offending_layer() {
        let t = topo(&[2, 3, 2], &[Activation::Sigmoid, Activation::Softmax]);
        let ws = WeightSet::new(vec![Matrix::zeros(2, 3), Matrix::zeros(2, 2)]);
        match forward(&ws, &t, &[0.0, 0.0]).unwrap_err() {
            Error::LayerShape { layer, .. } => assert_eq!(layer, 2),
            e => panic!("unexpected error {e}"),
        }
        let ws = WeightSet::zeros(&t);
        assert!(matches!(
            forward(&ws, &t, &[0.0]).unwrap_err(),
            Error::LayerShape { layer: 0, .. }
        ));
    }

    #[test]
    fn softmax_only_in_last_layer() {
        let err = Topology::new(vec![2, 2, 2], vec![Activation::Softmax, Activation::Softmax], false).unwrap_err();
        assert!(matches!(err, Error::Topology(_)));
    }

    #[test]
    fn forward_batch_edge_cases() {
        let t = topo(&[2, 3, 2], &[Activation::Tanh, Activation::Softmax]);
        let ws = WeightSet::from_fn(&t, |l, i, j| 0.1 * (l + 1) as f64 * (i as f64 - j as f64));
        let empty = forward_batch(&ws, &t, &Matrix::zeros(0, 2)).unwrap();
        assert_eq!(empty.shape(), (0, 2));
        let x = Matrix::from_rows(vec![vec![0.5, -0.5]]).unwrap();
        let out = forward_batch(&ws, &t, &x).unwrap();
        assert_eq!(out.row(0), forward(&ws, &t, &[0.5, -0.5]).unwrap().as_slice());
    }

    #[test]
    fn normalize_examples() {
        let w = Matrix::from_rows(vec![vec![2.0, -4.0], vec![1.0, 0.5]]).unwrap();
        let n = normalize_layer_weights(&w).unwrap();
        assert_eq!(n.to_rows(), vec![vec![0.5, -1.0], vec![0.25, 0.125]]);
        let z = Matrix::zeros(2, 3);
        assert_eq!(normalize_layer_weights(&z).unwrap(), z);
        let unit = Matrix::from_rows(vec![vec![1.0, -0.3]]).unwrap();
        assert_eq!(normalize_layer_weights(&unit).unwrap(), unit);
        let bad = Matrix::from_rows(vec![vec![f64::NAN]]).unwrap();
        assert!(matches!(normalize_layer_weights(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(LossKind::Mse, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(loss(LossKind::Mse, &[1.0, 0.0], &[0.5, 0.5]).unwrap(), 0.25);
        assert_abs_diff_eq!(
            loss(LossKind::CrossEntropy, &[0.0, 1.0, 0.0], &[0.1, 0.8, 0.1]).unwrap(),
            0.223_143_551_314_209_7,
            epsilon = 1e-12
        );
        assert_eq!(loss(LossKind::Mae, &[1.0, 0.0], &[0.5, 0.0]).unwrap(), 0.25);
        let ce_zero = loss(LossKind::CrossEntropy, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(ce_zero, -(1e-12f64).ln(), epsilon = 1e-9);
        assert!(matches!(
            loss(LossKind::Mse, &[1.0], &[1.0, 2.0]),
            Err(Error::Length { .. })
        ));
    }

    #[test]
    fn accuracy_examples() {
        let y = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        let p = Matrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.4, 0.6], vec![0.3, 0.7]]).unwrap();
        assert_eq!(accuracy(&y, &p).unwrap(), 0.75);

        let y3 = Matrix::from_rows(vec![vec![1.0, 0.0, 0.0]]).unwrap();
        let uniform = Matrix::from_rows(vec![vec![1.0 / 3.0; 3]]).unwrap();
        assert_eq!(accuracy(&y3, &uniform).unwrap(), 1.0);

        let binary = Matrix::from_rows(vec![vec![0.7], vec![0.2], vec![0.1], vec![0.5]]).unwrap();
        assert_eq!(accuracy(&y, &binary).unwrap(), 0.5);
        assert!(accuracy(&y, &Matrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn recall_per_class() {
        let y = Matrix::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let p = Matrix::from_rows(vec![vec![0.9, 0.1], vec![0.1, 0.9], vec![0.6, 0.4]]).unwrap();
        let r = per_class_recall(&y, &p).unwrap();
        assert_abs_diff_eq!(r[0].unwrap(), 2.0 / 3.0);
        assert_eq!(r[1], None);
    }

    #[test]
    fn param_count_examples() {
        use Activation::{Sigmoid, Softmax};
        // Non-input layers {4,2,2}.
        let t = topo(&[4, 4, 2, 2], &[Sigmoid, Sigmoid, Softmax]);
        assert_eq!(param_count(ModelKind::Rbnn, &t), 8);
        assert_eq!(param_count(ModelKind::Ffnn, &t), 28);
        assert_eq!(param_count(ModelKind::Bnn, &t), 56);
        let t = topo(&[8, 2, 2, 2], &[Sigmoid, Sigmoid, Softmax]);
        assert_eq!(param_breakdown(ModelKind::Rbnn, &t), vec![2, 2, 2]);
        assert_eq!(param_count(ModelKind::Ffnn, &t), 24);
        let biased = t.clone().with_bias(true);
        assert_eq!(param_count(ModelKind::Ffnn, &biased), 9 * 2 + 3 * 2 + 3 * 2);
        assert_eq!(param_count(ModelKind::Rbnn, &biased), 6);
    }
}
