use std::sync::Arc;

use super::{apply_mask, argmax, dropout_mask, Layout, Network, ParamVec, TargetSpec, TensorSpec};
use crate::linalg::{add_column_sums, add_row_bias, gemm, log_softmax_in_place, View};
use crate::rng::Rng;
use crate::{Error, Result};

/// Fully connected ReLU network with a softmax output.
///
/// `dropout[0]` applies to the input, `dropout[l]` to the output of hidden
/// layer `l`.
#[derive(Debug, Clone)]
pub struct FeedforwardClassifier {
    widths: Vec<usize>,
    dropout: Vec<f64>,
    params: ParamVec,
}

fn weight_name(l: usize) -> String {
    format!("fc{l}.weight")
}

fn bias_name(l: usize) -> String {
    format!("fc{l}.bias")
}

fn layout_for(widths: &[usize]) -> Layout {
    let mut t = Vec::new();
    for l in 0..widths.len() - 1 {
        t.push(TensorSpec::new(weight_name(l), &[widths[l + 1], widths[l]]));
        t.push(TensorSpec::new(bias_name(l), &[widths[l + 1]]));
    }
    Layout::new(t)
}

struct Cache {
    /// Inputs to each layer (after dropout).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
    log_probs: Vec<f64>,
}

impl FeedforwardClassifier {
    pub fn new(widths: &[usize], dropout: &[f64], rng: &mut Rng) -> Result<Self> {
        Self::check_shape(widths, dropout)?;
        let params = ParamVec::uniform_init(Arc::new(layout_for(widths)), 0.05, rng);
        Ok(FeedforwardClassifier { widths: widths.to_vec(), dropout: dropout.to_vec(), params })
    }

    fn check_shape(widths: &[usize], dropout: &[f64]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        if dropout.len() != widths.len() - 1 {
            return Err(Error::Config(format!(
                "need {} dropout probabilities, got {}",
                widths.len() - 1,
                dropout.len()
            )));
        }
        if dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::Config("dropout probabilities must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Rebuild from a checkpointed parameter vector.
    pub fn from_params(params: ParamVec, dropout: &[f64]) -> Result<Self> {
        let tensors = params.layout().tensors();
        if tensors.len() < 2 || !tensors.len().is_multiple_of(2) {
            return Err(Error::Layout("not a feedforward layout".into()));
        }
        let mut widths = Vec::new();
        for l in 0..tensors.len() / 2 {
            let w = &tensors[2 * l];
            if w.name != weight_name(l) || w.shape.len() != 2 {
                return Err(Error::Layout(format!("unexpected tensor {:?}", w.name)));
            }
            if l == 0 {
                widths.push(w.shape[1]);
            }
            widths.push(w.shape[0]);
        }
        if *params.layout().as_ref() != layout_for(&widths) {
            return Err(Error::Layout("not a feedforward layout".into()));
        }
        Self::check_shape(&widths, dropout)?;
        Ok(FeedforwardClassifier { widths, dropout: dropout.to_vec(), params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn dropout(&self) -> &[f64] {
        &self.dropout
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn check_input(&self, x: &[f64], n: usize) -> Result<()> {
        if x.len() != n * self.input_dim() {
            return Err(Error::Input(format!(
                "{} features for {n} examples of width {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn forward(&self, x: &[f64], n: usize, mut rng: Option<&mut Rng>) -> Cache {
        let layers = self.widths.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers - 1);
        let mut masks = Vec::with_capacity(layers);
        let mut a = x.to_vec();
        masks.push(dropout_mask(&mut a, self.dropout[0], rng.as_deref_mut()));
        for l in 0..layers {
            let (din, dout) = (self.widths[l], self.widths[l + 1]);
            let w = self.params.tensor(&weight_name(l)).unwrap();
            let b = self.params.tensor(&bias_name(l)).unwrap();
            let mut z = vec![0.0; n * dout];
            gemm(View::new(&a, n, din), false, View::new(w, dout, din), true, &mut z, dout, 0.0);
            add_row_bias(&mut z, b);
            inputs.push(a);
            if l + 1 < layers {
                let mut h: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
                masks.push(dropout_mask(&mut h, self.dropout[l + 1], rng.as_deref_mut()));
                pre.push(z);
                a = h;
            } else {
                for row in z.chunks_exact_mut(dout) {
                    log_softmax_in_place(row);
                }
                return Cache { inputs, pre, masks, log_probs: z };
            }
        }
        unreachable!("at least one layer")
    }

    /// Class probabilities, `n x classes`, dropout disabled.
    pub fn predict_proba(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_input(x, n)?;
        let mut p = self.forward(x, n, None).log_probs;
        for v in &mut p {
            *v = v.exp();
        }
        Ok(p)
    }

    /// Predicted class per example; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64], n: usize) -> Result<Vec<usize>> {
        self.check_input(x, n)?;
        let lp = self.forward(x, n, None).log_probs;
        Ok(lp.chunks_exact(self.classes()).map(argmax).collect())
    }

    /// Mean cross-entropy over the batch against `targets`, and its gradient.
    ///
    /// Passing an rng enables dropout; the same rng state reproduces the same
    /// masks.
    pub fn loss_and_grad(
        &self,
        x: &[f64],
        labels: &[usize],
        targets: &TargetSpec<'_, FeedforwardClassifier>,
        rng: Option<&mut Rng>,
    ) -> Result<(f64, ParamVec)> {
        let n = labels.len();
        self.check_input(x, n)?;
        if n == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        let k = self.classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::Input(format!("label {bad} out of range for {k} classes")));
        }
        let (lambda, teachers) = targets.resolve(&self.params)?;
        let soft = if teachers.is_empty() {
            None
        } else {
            let mut q = vec![0.0; n * k];
            for (j, t) in teachers.iter().enumerate() {
                let p = t.predict_proba(x, n)?;
                let count = (j + 1) as f64;
                for (m, v) in q.iter_mut().zip(&p) {
                    *m += (v - *m) / count;
                }
            }
            Some(q)
        };

        let cache = self.forward(x, n, rng);
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut delta = vec![0.0; n * k];
        for i in 0..n {
            let lp = &cache.log_probs[i * k..(i + 1) * k];
            let d = &mut delta[i * k..(i + 1) * k];
            for c in 0..k {
                d[c] = lp[c].exp();
            }
            loss -= lambda * lp[labels[i]];
            d[labels[i]] -= lambda;
            if let Some(q) = &soft {
                let q = &q[i * k..(i + 1) * k];
                for c in 0..k {
                    let y = (1.0 - lambda) * q[c];
                    loss -= y * lp[c];
                    d[c] -= y;
                }
            }
            for v in d.iter_mut() {
                *v *= inv_n;
            }
        }
        loss *= inv_n;

        let mut grad = ParamVec::zeros(self.params.layout().clone());
        let layers = self.widths.len() - 1;
        for l in (0..layers).rev() {
            let (din, dout) = (self.widths[l], self.widths[l + 1]);
            let a = &cache.inputs[l];
            {
                let gw = grad.tensor_mut(&weight_name(l))?;
                gemm(View::new(&delta, n, dout), true, View::new(a, n, din), false, gw, din, 0.0);
            }
            add_column_sums(&delta, grad.tensor_mut(&bias_name(l))?);
            if l == 0 {
                break;
            }
            let w = self.params.tensor(&weight_name(l))?;
            let mut da = vec![0.0; n * din];
            gemm(View::new(&delta, n, dout), false, View::new(w, dout, din), false, &mut da, din, 0.0);
            apply_mask(&mut da, &cache.masks[l]);
            for (g, &z) in da.iter_mut().zip(&cache.pre[l - 1]) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
            delta = da;
        }
        Ok((loss, grad))
    }
}

impl Network for FeedforwardClassifier {
    fn params(&self) -> &ParamVec {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamVec {
        &mut self.params
    }

    fn with_params(&self, params: ParamVec) -> Result<Self> {
        self.params.check_layout(&params)?;
        Ok(FeedforwardClassifier { widths: self.widths.clone(), dropout: self.dropout.clone(), params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn small(seed: u64, dropout: &[f64]) -> FeedforwardClassifier {
        let mut rng = seeded(seed);
        let mut m = FeedforwardClassifier::new(&[4, 6, 5, 3], dropout, &mut rng).unwrap();
        // larger weights than the default init so gradients are not tiny
        for v in m.params.values_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
        m
    }

    #[test]
    fn outputs_are_distributions() {
        let m = small(1, &[0.0, 0.0, 0.0]);
        let mut rng = seeded(2);
        let x: Vec<f64> = (0..20).map(|_| rng.random()).collect();
        let p = m.predict_proba(&x, 5).unwrap();
        for row in p.chunks_exact(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn from_params_recovers_widths() {
        let m = small(3, &[0.2, 0.5, 0.5]);
        let back = FeedforwardClassifier::from_params(m.params.clone(), m.dropout()).unwrap();
        assert_eq!(back.widths(), m.widths());
        assert!(FeedforwardClassifier::from_params(m.params.clone(), &[0.1]).is_err());
    }

    #[test]
    fn input_errors() {
        let m = small(4, &[0.0; 3]);
        assert!(matches!(m.predict(&[0.0; 3], 1), Err(Error::Input(_))));
        assert!(matches!(
            m.loss_and_grad(&[0.0; 4], &[3], &TargetSpec::Hard, None),
            Err(Error::Input(_))
        ));
        let lambda_bad = TargetSpec::Mixed { lambda: 1.5, teachers: std::slice::from_ref(&m) };
        assert!(matches!(m.loss_and_grad(&[0.0; 4], &[1], &lambda_bad, None), Err(Error::Config(_))));
        let mut rng = seeded(5);
        let other = FeedforwardClassifier::new(&[4, 2, 3], &[0.0, 0.0], &mut rng).unwrap();
        let mismatch = TargetSpec::Mixed { lambda: 0.5, teachers: std::slice::from_ref(&other) };
        assert!(matches!(m.loss_and_grad(&[0.0; 4], &[1], &mismatch, None), Err(Error::Layout(_))));
    }
}
