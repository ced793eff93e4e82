use std::sync::Arc;

use rand::Rng as _;

use super::{apply_mask, dropout_mask, Layout, Network, ParamVec, TargetSpec, TensorSpec};
use crate::linalg::{add_column_sums, add_row_bias, gemm, log_softmax_in_place, sigmoid, View};
use crate::rng::Rng;
use crate::{Error, Result};

/// Sizes of a recurrent language model.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmShape {
    pub vocab: usize,
    pub embed: usize,
    /// Width of each stacked LSTM layer, bottom first.
    pub hidden: Vec<usize>,
}

impl LmShape {
    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.embed
        } else {
            self.hidden[l - 1]
        }
    }

    fn top(&self) -> usize {
        *self.hidden.last().unwrap()
    }

    /// Parameter layout, without allocating the weights.
    pub fn layout(&self) -> Layout {
        let mut t = vec![TensorSpec::new("embed.weight", &[self.vocab, self.embed])];
        for (l, &h) in self.hidden.iter().enumerate() {
            t.push(TensorSpec::new(format!("lstm{l}.weight"), &[4 * h, self.layer_input(l) + h]));
            t.push(TensorSpec::new(format!("lstm{l}.bias"), &[4 * h]));
        }
        t.push(TensorSpec::new("out.weight", &[self.vocab, self.top()]));
        t.push(TensorSpec::new("out.bias", &[self.vocab]));
        Layout::new(t)
    }

    pub fn param_count(&self) -> usize {
        self.layout().len()
    }

    fn validate(&self) -> Result<()> {
        if self.vocab < 2 || self.embed == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("invalid language model shape {self:?}")));
        }
        Ok(())
    }
}

/// Recurrent state for a batch of independent streams.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    batch: usize,
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

impl HiddenState {
    pub fn zeros(shape: &LmShape, batch: usize) -> Self {
        HiddenState {
            batch,
            h: shape.hidden.iter().map(|&w| vec![0.0; batch * w]).collect(),
            c: shape.hidden.iter().map(|&w| vec![0.0; batch * w]).collect(),
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Output of the top layer, `batch x top width`.
    pub fn top(&self) -> &[f64] {
        self.h.last().unwrap()
    }

    /// Perturb the state; only useful for testing gradients from non-zero
    /// initial states.
    pub fn randomize(&mut self, rng: &mut Rng, scale: f64) {
        for v in self.h.iter_mut().chain(self.c.iter_mut()).flatten() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

/// A minibatch of `batch` streams unrolled over `steps` positions, stored
/// time-major: element `t * batch + b` is stream `b` at step `t`.
#[derive(Debug, Clone)]
pub struct LmBatch {
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
    pub batch: usize,
    pub steps: usize,
}

impl LmBatch {
    /// Each window must hold `steps + 1` tokens; inputs are the first
    /// `steps`, targets the last `steps`.
    pub fn from_windows(windows: &[&[u32]]) -> Result<Self> {
        let batch = windows.len();
        if batch == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        let len = windows[0].len();
        if len < 2 || windows.iter().any(|w| w.len() != len) {
            return Err(Error::Input("windows must share a length of at least 2".into()));
        }
        let steps = len - 1;
        let mut inputs = Vec::with_capacity(steps * batch);
        let mut targets = Vec::with_capacity(steps * batch);
        for t in 0..steps {
            for w in windows {
                inputs.push(w[t]);
                targets.push(w[t + 1]);
            }
        }
        Ok(LmBatch { inputs, targets, batch, steps })
    }
}

/// Loss, gradient and the recurrent state after the batch.
#[derive(Debug, Clone)]
pub struct LmLossGrad {
    pub loss: f64,
    pub grad: ParamVec,
    pub state: HiddenState,
}

/// Stacked LSTM language model with tied-free embedding and softmax output.
///
/// Gates use the standard `i, f, g, o` formulation without peepholes. Dropout
/// applies to the non-recurrent connections only (embedding output, between
/// layers, before the softmax), with inverted scaling at train time.
#[derive(Debug, Clone)]
pub struct RecurrentLM {
    shape: LmShape,
    dropout: f64,
    bptt: usize,
    params: ParamVec,
}

struct LayerCache {
    x: Vec<f64>,
    in_mask: Option<Vec<f64>>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    acts: Vec<f64>,
    tanh_c: Vec<f64>,
}

struct SeqCache {
    layers: Vec<LayerCache>,
    top: Vec<f64>,
    top_mask: Option<Vec<f64>>,
}

impl RecurrentLM {
    pub fn new(shape: LmShape, dropout: f64, bptt: usize, rng: &mut Rng) -> Result<Self> {
        shape.validate()?;
        Self::check_hyper(dropout, bptt)?;
        let params = ParamVec::uniform_init(Arc::new(shape.layout()), 0.05, rng);
        Ok(RecurrentLM { shape, dropout, bptt, params })
    }

    fn check_hyper(dropout: f64, bptt: usize) -> Result<()> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        if bptt == 0 {
            return Err(Error::Config("bptt must be >= 1".into()));
        }
        Ok(())
    }

    /// Rebuild from a checkpointed parameter vector; sizes are read off the
    /// tensor shapes.
    pub fn from_params(params: ParamVec, dropout: f64, bptt: usize) -> Result<Self> {
        Self::check_hyper(dropout, bptt)?;
        let tensors = params.layout().tensors();
        let bad = || Error::Layout("not a recurrent language model layout".into());
        let embed = tensors.first().filter(|t| t.name == "embed.weight" && t.shape.len() == 2).ok_or_else(bad)?;
        let (vocab, embed_w) = (embed.shape[0], embed.shape[1]);
        let layers = (tensors.len().checked_sub(3).ok_or_else(bad)?) / 2;
        let mut hidden = Vec::with_capacity(layers);
        for l in 0..layers {
            let w = &tensors[1 + 2 * l];
            if w.shape.len() != 2 || !w.shape[0].is_multiple_of(4) {
                return Err(bad());
            }
            hidden.push(w.shape[0] / 4);
        }
        let shape = LmShape { vocab, embed: embed_w, hidden };
        shape.validate().map_err(|_| bad())?;
        if shape.layout() != *params.layout().as_ref() {
            return Err(bad());
        }
        Ok(RecurrentLM { shape, dropout, bptt, params })
    }

    pub fn shape(&self) -> &LmShape {
        &self.shape
    }

    pub fn vocab_size(&self) -> usize {
        self.shape.vocab
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn bptt(&self) -> usize {
        self.bptt
    }

    pub fn zero_state(&self, batch: usize) -> HiddenState {
        HiddenState::zeros(&self.shape, batch)
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        match tokens.iter().find(|&&t| t as usize >= self.shape.vocab) {
            Some(t) => Err(Error::Input(format!("token id {t} out of range for vocabulary {}", self.shape.vocab))),
            None => Ok(()),
        }
    }

    fn check_state(&self, state: &HiddenState, batch: usize) -> Result<()> {
        if state.batch != batch || state.h.len() != self.shape.hidden.len() {
            return Err(Error::Input(format!(
                "hidden state for batch {} does not fit batch {batch}",
                state.batch
            )));
        }
        Ok(())
    }

    /// Run the stack over `steps x batch` time-major tokens.
    fn forward_seq(
        &self,
        tokens: &[u32],
        batch: usize,
        state: &HiddenState,
        mut rng: Option<&mut Rng>,
    ) -> (SeqCache, HiddenState) {
        let rows = tokens.len();
        let steps = rows / batch;
        let e = self.shape.embed;
        let emb = self.params.tensor("embed.weight").unwrap();
        let mut x = Vec::with_capacity(rows * e);
        for &t in tokens {
            let t = t as usize;
            x.extend_from_slice(&emb[t * e..(t + 1) * e]);
        }
        let mut in_mask = dropout_mask(&mut x, self.dropout, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.shape.hidden.len());
        let mut out_state = state.clone();
        for (l, &hw) in self.shape.hidden.iter().enumerate() {
            let d = self.shape.layer_input(l);
            let g = 4 * hw;
            let w = self.params.tensor(&format!("lstm{l}.weight")).unwrap();
            let b = self.params.tensor(&format!("lstm{l}.bias")).unwrap();
            let mut pre = vec![0.0; rows * g];
            gemm(View::new(&x, rows, d), false, View::columns(w, g, d + hw, 0, d), true, &mut pre, g, 0.0);
            add_row_bias(&mut pre, b);
            let wh = View::columns(w, g, d + hw, d, hw);

            let mut h = state.h[l].clone();
            let mut c = state.c[l].clone();
            let mut h_prev = vec![0.0; rows * hw];
            let mut c_prev = vec![0.0; rows * hw];
            let mut tanh_c = vec![0.0; rows * hw];
            let mut h_all = vec![0.0; rows * hw];
            for t in 0..steps {
                let r = t * batch * hw..(t + 1) * batch * hw;
                h_prev[r.clone()].copy_from_slice(&h);
                c_prev[r.clone()].copy_from_slice(&c);
                let gates = &mut pre[t * batch * g..(t + 1) * batch * g];
                gemm(View::new(&h, batch, hw), false, wh, true, gates, g, 1.0);
                for bi in 0..batch {
                    let gr = &mut gates[bi * g..(bi + 1) * g];
                    for j in 0..hw {
                        let i = sigmoid(gr[j]);
                        let f = sigmoid(gr[hw + j]);
                        let gg = gr[2 * hw + j].tanh();
                        let o = sigmoid(gr[3 * hw + j]);
                        gr[j] = i;
                        gr[hw + j] = f;
                        gr[2 * hw + j] = gg;
                        gr[3 * hw + j] = o;
                        let k = bi * hw + j;
                        c[k] = f * c[k] + i * gg;
                        let tc = c[k].tanh();
                        h[k] = o * tc;
                        tanh_c[t * batch * hw + k] = tc;
                    }
                }
                h_all[r].copy_from_slice(&h);
            }
            out_state.h[l] = h;
            out_state.c[l] = c;
            let mut next = h_all;
            let next_mask = dropout_mask(&mut next, self.dropout, rng.as_deref_mut());
            layers.push(LayerCache {
                x: std::mem::replace(&mut x, next),
                in_mask: std::mem::replace(&mut in_mask, next_mask),
                h_prev,
                c_prev,
                acts: pre,
                tanh_c,
            });
        }
        (SeqCache { layers, top: x, top_mask: in_mask }, out_state)
    }

    /// Log-softmax outputs for rows of top-layer activations.
    fn output_log_probs_rows(&self, top: &[f64]) -> Vec<f64> {
        let (v, hw) = (self.shape.vocab, self.shape.top());
        let rows = top.len() / hw;
        let wo = self.params.tensor("out.weight").unwrap();
        let bo = self.params.tensor("out.bias").unwrap();
        let mut logits = vec![0.0; rows * v];
        gemm(View::new(top, rows, hw), false, View::new(wo, v, hw), true, &mut logits, v, 0.0);
        add_row_bias(&mut logits, bo);
        for row in logits.chunks_exact_mut(v) {
            log_softmax_in_place(row);
        }
        logits
    }

    /// Next-token log-probabilities for every stream in `state`, `batch x V`.
    pub fn state_log_probs(&self, state: &HiddenState) -> Vec<f64> {
        self.output_log_probs_rows(state.top())
    }

    /// Feed one token per stream, in inference mode.
    pub fn step(&self, state: &mut HiddenState, tokens: &[u32]) -> Result<()> {
        self.check_tokens(tokens)?;
        self.check_state(state, tokens.len())?;
        let (_, next) = self.forward_seq(tokens, tokens.len(), state, None);
        *state = next;
        Ok(())
    }

    /// Feed a context (one stream) from the zero state.
    pub fn state_after(&self, context: &[u32]) -> Result<HiddenState> {
        self.check_tokens(context)?;
        let state = self.zero_state(1);
        if context.is_empty() {
            return Ok(state);
        }
        Ok(self.forward_seq(context, 1, &state, None).1)
    }

    /// Next-token distribution after `context`. An empty context reads the
    /// output layer off the initial (zero) state.
    pub fn forward_lm(&self, context: &[u32]) -> Result<Vec<f64>> {
        let state = self.state_after(context)?;
        Ok(self.state_log_probs(&state).into_iter().map(f64::exp).collect())
    }

    /// Sum of log-probabilities of `tokens` continuing from `state`; the
    /// state is advanced past the last token.
    pub fn stream_log_prob(&self, tokens: &[u32], state: &mut HiddenState) -> Result<f64> {
        self.check_tokens(tokens)?;
        self.check_state(state, 1)?;
        const CHUNK: usize = 256;
        let hw = self.shape.top();
        let v = self.shape.vocab;
        let mut total = 0.0;
        for chunk in tokens.chunks(CHUNK) {
            let (cache, next) = self.forward_seq(chunk, 1, state, None);
            // predictions for chunk[j] come from the state before feeding it
            let mut rows = Vec::with_capacity(chunk.len() * hw);
            rows.extend_from_slice(state.top());
            rows.extend_from_slice(&cache.top[..(chunk.len() - 1) * hw]);
            let lp = self.output_log_probs_rows(&rows);
            total += chunk.iter().enumerate().map(|(j, &t)| lp[j * v + t as usize]).sum::<f64>();
            *state = next;
        }
        Ok(total)
    }

    /// `log P(s)`: every token of `s` is scored, the first one from the
    /// initial state.
    pub fn sequence_logprob(&self, s: &[u32]) -> Result<f64> {
        if s.is_empty() {
            return Err(Error::Input("empty sequence".into()));
        }
        let mut state = self.zero_state(1);
        self.stream_log_prob(s, &mut state)
    }

    /// [`RecurrentLM::sequence_logprob`] for `n` sequences of equal length
    /// stored row-major.
    pub fn score_batch(&self, seqs: &[u32], n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        if !seqs.len().is_multiple_of(n) || seqs.is_empty() {
            return Err(Error::Input("sequences must share a non-zero length".into()));
        }
        self.check_tokens(seqs)?;
        let len = seqs.len() / n;
        let v = self.shape.vocab;
        let state = self.zero_state(n);
        let mut rows = state.top().to_vec();
        if len > 1 {
            let mut inputs = Vec::with_capacity((len - 1) * n);
            for t in 0..len - 1 {
                inputs.extend((0..n).map(|i| seqs[i * len + t]));
            }
            let (cache, _) = self.forward_seq(&inputs, n, &state, None);
            rows.extend_from_slice(&cache.top);
        }
        let lp = self.output_log_probs_rows(&rows);
        let mut out = vec![0.0; n];
        for t in 0..len {
            for (i, o) in out.iter_mut().enumerate() {
                *o += lp[(t * n + i) * v + seqs[i * len + t] as usize];
            }
        }
        Ok(out)
    }

    /// Ancestral sampling at temperature 1, starting from the initial state.
    pub fn sample_sequence(&self, length: usize, rng: &mut Rng) -> Result<Vec<u32>> {
        Ok(self.sample_batch(length, std::slice::from_mut(rng))?.pop().unwrap())
    }

    /// Sample one sequence per generator, advancing all of them in lockstep.
    pub fn sample_batch(&self, length: usize, rngs: &mut [Rng]) -> Result<Vec<Vec<u32>>> {
        if length == 0 {
            return Err(Error::Input("sequence length must be >= 1".into()));
        }
        let n = rngs.len();
        let v = self.shape.vocab;
        let mut state = self.zero_state(n);
        let mut out = vec![Vec::with_capacity(length); n];
        let mut tokens = vec![0u32; n];
        for pos in 0..length {
            let lp = self.state_log_probs(&state);
            for (i, rng) in rngs.iter_mut().enumerate() {
                tokens[i] = sample_index(&lp[i * v..(i + 1) * v], rng) as u32;
                out[i].push(tokens[i]);
            }
            if pos + 1 < length {
                state = self.forward_seq(&tokens, n, &state, None).1;
            }
        }
        Ok(out)
    }

    /// Softmax outputs for every position of `batch` (dropout off), `rows x V`.
    /// The state is advanced past the batch.
    pub fn batch_probs(&self, inputs: &[u32], batch: usize, state: &mut HiddenState) -> Result<Vec<f64>> {
        self.check_tokens(inputs)?;
        self.check_state(state, batch)?;
        let (cache, next) = self.forward_seq(inputs, batch, state, None);
        *state = next;
        let mut p = self.output_log_probs_rows(&cache.top);
        for x in &mut p {
            *x = x.exp();
        }
        Ok(p)
    }

    /// Mean cross-entropy over all `steps x batch` positions and its exact
    /// gradient by truncated backpropagation through time.
    ///
    /// `teacher_states` must hold one state per teacher in `targets`; they are
    /// advanced alongside the student. Passing an rng enables dropout.
    pub fn loss_and_grad(
        &self,
        batch: &LmBatch,
        state: &HiddenState,
        targets: &TargetSpec<'_, RecurrentLM>,
        teacher_states: &mut [HiddenState],
        rng: Option<&mut Rng>,
    ) -> Result<LmLossGrad> {
        let (b, steps) = (batch.batch, batch.steps);
        let rows = b * steps;
        if batch.inputs.len() != rows || batch.targets.len() != rows || rows == 0 {
            return Err(Error::Input("malformed batch".into()));
        }
        self.check_tokens(&batch.inputs)?;
        self.check_tokens(&batch.targets)?;
        self.check_state(state, b)?;
        let (lambda, teachers) = targets.resolve(&self.params)?;
        if let TargetSpec::Mixed { teachers: all, .. } = targets {
            if teacher_states.len() != all.len() {
                return Err(Error::Input("one hidden state per reference model is required".into()));
            }
        }
        let v = self.shape.vocab;
        let soft = if teachers.is_empty() {
            None
        } else {
            let mut q = vec![0.0; rows * v];
            for (j, (t, st)) in teachers.iter().zip(teacher_states.iter_mut()).enumerate() {
                let p = t.batch_probs(&batch.inputs, b, st)?;
                let count = (j + 1) as f64;
                for (m, x) in q.iter_mut().zip(&p) {
                    *m += (x - *m) / count;
                }
            }
            Some(q)
        };

        let (cache, final_state) = self.forward_seq(&batch.inputs, b, state, rng);
        let mut delta = self.output_log_probs_rows(&cache.top);
        let inv = 1.0 / rows as f64;
        let mut loss = 0.0;
        for r in 0..rows {
            let row = &mut delta[r * v..(r + 1) * v];
            let target = batch.targets[r] as usize;
            loss -= lambda * row[target];
            if let Some(q) = &soft {
                let q = &q[r * v..(r + 1) * v];
                for (lp, &qq) in row.iter().zip(q) {
                    loss -= (1.0 - lambda) * qq * lp;
                }
            }
            for x in row.iter_mut() {
                *x = x.exp();
            }
            row[target] -= lambda;
            if let Some(q) = &soft {
                for (x, &qq) in row.iter_mut().zip(&q[r * v..(r + 1) * v]) {
                    *x -= (1.0 - lambda) * qq;
                }
            }
            for x in row.iter_mut() {
                *x *= inv;
            }
        }
        loss *= inv;

        let mut grad = ParamVec::zeros(self.params.layout().clone());
        let top_w = self.shape.top();
        {
            let gw = grad.tensor_mut("out.weight")?;
            gemm(View::new(&delta, rows, v), true, View::new(&cache.top, rows, top_w), false, gw, top_w, 0.0);
        }
        add_column_sums(&delta, grad.tensor_mut("out.bias")?);
        let wo = self.params.tensor("out.weight")?;
        let mut dh = vec![0.0; rows * top_w];
        gemm(View::new(&delta, rows, v), false, View::new(wo, v, top_w), false, &mut dh, top_w, 0.0);
        apply_mask(&mut dh, &cache.top_mask);

        for l in (0..self.shape.hidden.len()).rev() {
            let lc = &cache.layers[l];
            let hw = self.shape.hidden[l];
            let d = self.shape.layer_input(l);
            let g = 4 * hw;
            let w = self.params.tensor(&format!("lstm{l}.weight"))?;
            let wh = View::columns(w, g, d + hw, d, hw);
            let mut dgates = vec![0.0; rows * g];
            let mut dh_next = vec![0.0; b * hw];
            let mut dc_next = vec![0.0; b * hw];
            for t in (0..steps).rev() {
                for bi in 0..b {
                    let k = t * b * hw + bi * hw;
                    let gr = &lc.acts[(t * b + bi) * g..(t * b + bi + 1) * g];
                    let dg_row = &mut dgates[(t * b + bi) * g..(t * b + bi + 1) * g];
                    for j in 0..hw {
                        let (i, f, gg, o) = (gr[j], gr[hw + j], gr[2 * hw + j], gr[3 * hw + j]);
                        let tc = lc.tanh_c[k + j];
                        let dhv = dh[k + j] + dh_next[bi * hw + j];
                        let d_o = dhv * tc;
                        let dc = dc_next[bi * hw + j] + dhv * o * (1.0 - tc * tc);
                        let d_i = dc * gg;
                        let d_g = dc * i;
                        let d_f = dc * lc.c_prev[k + j];
                        dc_next[bi * hw + j] = dc * f;
                        dg_row[j] = d_i * i * (1.0 - i);
                        dg_row[hw + j] = d_f * f * (1.0 - f);
                        dg_row[2 * hw + j] = d_g * (1.0 - gg * gg);
                        dg_row[3 * hw + j] = d_o * o * (1.0 - o);
                    }
                }
                if t > 0 {
                    let dgt = &dgates[t * b * g..(t + 1) * b * g];
                    gemm(View::new(dgt, b, g), false, wh, false, &mut dh_next, hw, 0.0);
                }
            }
            {
                let gw = grad.tensor_mut(&format!("lstm{l}.weight"))?;
                gemm(View::new(&dgates, rows, g), true, View::new(&lc.x, rows, d), false, gw, d + hw, 0.0);
                gemm(
                    View::new(&dgates, rows, g),
                    true,
                    View::new(&lc.h_prev, rows, hw),
                    false,
                    &mut gw[d..],
                    d + hw,
                    0.0,
                );
            }
            add_column_sums(&dgates, grad.tensor_mut(&format!("lstm{l}.bias"))?);
            let mut dx = vec![0.0; rows * d];
            gemm(View::new(&dgates, rows, g), false, View::columns(w, g, d + hw, 0, d), false, &mut dx, d, 0.0);
            apply_mask(&mut dx, &lc.in_mask);
            dh = dx;
        }
        let e = self.shape.embed;
        let ge = grad.tensor_mut("embed.weight")?;
        for (r, &tok) in batch.inputs.iter().enumerate() {
            let t = tok as usize;
            for (gv, dv) in ge[t * e..(t + 1) * e].iter_mut().zip(&dh[r * e..(r + 1) * e]) {
                *gv += dv;
            }
        }
        Ok(LmLossGrad { loss, grad, state: final_state })
    }
}

/// Draw an index from log-probabilities by inverse CDF.
pub(crate) fn sample_index(log_probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &lp) in log_probs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

impl Network for RecurrentLM {
    fn params(&self) -> &ParamVec {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamVec {
        &mut self.params
    }

    fn with_params(&self, params: ParamVec) -> Result<Self> {
        self.params.check_layout(&params)?;
        Ok(RecurrentLM { shape: self.shape.clone(), dropout: self.dropout, bptt: self.bptt, params })
    }
}
