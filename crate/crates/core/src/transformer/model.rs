use super::config::{SubModelLadder, TrainingMode, TransformerConfig};
use super::ops::{self, NormCache};
use super::params::{init_params, LayerParams, Params};
use crate::error::{ensure, Error, Result};
use crate::model::{LanguageModel, TokenId, Vocabulary};

/// Pre-norm decoder-only transformer whose hidden state can be read after any
/// ladder depth through one shared final norm and output head.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyTransformer {
    pub(crate) config: TransformerConfig,
    pub(crate) ladder: SubModelLadder,
    pub(crate) vocab: Vocabulary,
    pub(crate) training_mode: TrainingMode,
    pub(crate) params: Params<f32>,
}

pub(crate) struct LayerCache {
    ln1: NormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    att: Vec<f64>,
    ctx: Vec<f64>,
    ln2: NormCache,
    m: Vec<f64>,
    u: Vec<f64>,
    h: Vec<f64>,
}

/// Activations of a forward pass up to some depth. `hidden[l]` is the
/// residual stream after `l` layers (`hidden[0]` = embeddings).
pub(crate) struct ForwardTrace {
    pub hidden: Vec<Vec<f64>>,
    caches: Vec<LayerCache>,
    len: usize,
}

impl TinyTransformer {
    pub fn init(config: TransformerConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        ensure!(
            vocab.size() == config.vocab_size,
            Config,
            "vocabulary has {} symbols but config declares {}",
            vocab.size(),
            config.vocab_size
        );
        Ok(Self {
            params: init_params(&config),
            ladder: SubModelLadder::full(config.n_layers),
            config,
            vocab,
            training_mode: TrainingMode::Sft,
        })
    }

    pub(crate) fn from_parts(
        config: TransformerConfig,
        ladder: SubModelLadder,
        vocab: Vocabulary,
        training_mode: TrainingMode,
        params: Params<f32>,
    ) -> Self {
        Self {
            config,
            ladder,
            vocab,
            training_mode,
            params,
        }
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn ladder(&self) -> &SubModelLadder {
        &self.ladder
    }

    pub fn training_mode(&self) -> TrainingMode {
        self.training_mode
    }

    pub fn set_training_mode(&mut self, mode: TrainingMode) {
        self.training_mode = mode;
    }

    pub fn params(&self) -> &Params<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<f32> {
        &mut self.params
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn with_ladder(mut self, exits: Vec<usize>) -> Result<Self> {
        self.ladder = SubModelLadder::new(exits, self.config.n_layers)?;
        Ok(self)
    }

    /// Copies the embeddings, the first `n_layers_kept` layers, the final
    /// norm and the head. The copy's full-depth forward equals this model's
    /// forward at exit `n_layers_kept` bit for bit.
    pub fn extract_prefix(&self, n_layers_kept: usize) -> Result<Self> {
        ensure!(
            (1..=self.config.n_layers).contains(&n_layers_kept),
            Config,
            "cannot keep {n_layers_kept} of {} layers",
            self.config.n_layers
        );
        let config = TransformerConfig {
            n_layers: n_layers_kept,
            ..self.config
        };
        let mut exits: Vec<usize> = self
            .ladder
            .exits()
            .iter()
            .copied()
            .filter(|&e| e < n_layers_kept)
            .collect();
        exits.push(n_layers_kept);
        let params = Params {
            tok_emb: self.params.tok_emb.clone(),
            layers: self.params.layers[..n_layers_kept].to_vec(),
            lnf_g: self.params.lnf_g.clone(),
            lnf_b: self.params.lnf_b.clone(),
            head_w: self.params.head_w.clone(),
            head_b: self.params.head_b.clone(),
        };
        Ok(Self {
            config,
            ladder: SubModelLadder::new(exits, n_layers_kept)?,
            vocab: self.vocab.clone(),
            training_mode: self.training_mode,
            params,
        })
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        ensure!(!tokens.is_empty(), Validation, "empty token sequence");
        if tokens.len() > self.config.max_context {
            return Err(Error::ContextOverflow {
                len: tokens.len(),
                max: self.config.max_context,
            });
        }
        if let Some(t) = tokens.iter().find(|t| t.index() >= self.config.vocab_size) {
            return Err(Error::Validation(format!("token {t} outside vocabulary")));
        }
        Ok(())
    }

    fn check_exit(&self, exit: usize) -> Result<()> {
        ensure!(
            (1..=self.config.n_layers).contains(&exit),
            Config,
            "exit {exit} outside 1..={}",
            self.config.n_layers
        );
        Ok(())
    }

    fn embed(&self, tokens: &[TokenId]) -> Vec<f64> {
        let d = self.config.d_model;
        let mut x = Vec::with_capacity(tokens.len() * d);
        for (t, tok) in tokens.iter().enumerate() {
            let row = &self.params.tok_emb[tok.index() * d..(tok.index() + 1) * d];
            x.extend(
                row.iter()
                    .zip(ops::positional(t, d))
                    .map(|(&e, p)| e as f64 + p),
            );
        }
        x
    }

    fn layer_forward(
        &self,
        lp: &LayerParams<f32>,
        x: &[f64],
        len: usize,
    ) -> (Vec<f64>, LayerCache) {
        let cfg = &self.config;
        let (d, f, nh, dh) = (cfg.d_model, cfg.d_ff, cfg.n_heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();

        let (a, ln1) = ops::layer_norm(x, len, d, &lp.ln1_g, &lp.ln1_b);
        let q = ops::linear(&a, len, d, &lp.w_q, &lp.b_q, d);
        let k = ops::linear(&a, len, d, &lp.w_k, &lp.b_k, d);
        let v = ops::linear(&a, len, d, &lp.w_v, &lp.b_v, d);

        let mut att = vec![0.0; nh * len * len];
        let mut ctx = vec![0.0; len * d];
        for h in 0..nh {
            let off = h * dh;
            for t in 0..len {
                let row = &mut att[(h * len + t) * len..(h * len + t + 1) * len];
                let qt = &q[t * d + off..t * d + off + dh];
                let mut max = f64::NEG_INFINITY;
                for s in 0..=t {
                    let ks = &k[s * d + off..s * d + off + dh];
                    let sc = qt.iter().zip(ks).map(|(a, b)| a * b).sum::<f64>() * scale;
                    row[s] = sc;
                    max = max.max(sc);
                }
                let mut sum = 0.0;
                for p in &mut row[..=t] {
                    *p = (*p - max).exp();
                    sum += *p;
                }
                let ct = &mut ctx[t * d + off..t * d + off + dh];
                for s in 0..=t {
                    row[s] /= sum;
                    let vs = &v[s * d + off..s * d + off + dh];
                    for (c, &vv) in ct.iter_mut().zip(vs) {
                        *c += row[s] * vv;
                    }
                }
            }
        }
        let attn_out = ops::linear(&ctx, len, d, &lp.w_o, &lp.b_o, d);
        let x_mid: Vec<f64> = x.iter().zip(&attn_out).map(|(a, b)| a + b).collect();

        let (m, ln2) = ops::layer_norm(&x_mid, len, d, &lp.ln2_g, &lp.ln2_b);
        let u = ops::linear(&m, len, d, &lp.w_1, &lp.b_1, f);
        let h: Vec<f64> = u.iter().map(|&z| ops::gelu(z)).collect();
        let ffn_out = ops::linear(&h, len, f, &lp.w_2, &lp.b_2, d);
        let x_out = x_mid.iter().zip(&ffn_out).map(|(a, b)| a + b).collect();

        (
            x_out,
            LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                att,
                ctx,
                ln2,
                m,
                u,
                h,
            },
        )
    }

    /// Runs the trunk through `depth` layers keeping every activation.
    pub(crate) fn forward_trace(&self, tokens: &[TokenId], depth: usize) -> ForwardTrace {
        let len = tokens.len();
        let mut hidden = vec![self.embed(tokens)];
        let mut caches = Vec::with_capacity(depth);
        for lp in &self.params.layers[..depth] {
            let (next, cache) = self.layer_forward(lp, hidden.last().unwrap(), len);
            hidden.push(next);
            caches.push(cache);
        }
        ForwardTrace {
            hidden,
            caches,
            len,
        }
    }

    /// Shared-head logits for `rows` rows of a residual stream.
    pub(crate) fn head(&self, hidden_rows: &[f64], rows: usize) -> (Vec<f64>, Vec<f64>, NormCache) {
        let d = self.config.d_model;
        let (y, cache) =
            ops::layer_norm(hidden_rows, rows, d, &self.params.lnf_g, &self.params.lnf_b);
        let logits = ops::linear(
            &y,
            rows,
            d,
            &self.params.head_w,
            &self.params.head_b,
            self.config.vocab_size,
        );
        (logits, y, cache)
    }

    /// Logits for every position at `exit`, shape `[len][vocab]`.
    pub fn forward(&self, tokens: &[TokenId], exit: usize) -> Result<Vec<Vec<f64>>> {
        self.forward_last(tokens, tokens.len(), exit)
    }

    /// Logits for the last `n` positions at `exit`.
    pub fn forward_last(&self, tokens: &[TokenId], n: usize, exit: usize) -> Result<Vec<Vec<f64>>> {
        self.check_tokens(tokens)?;
        self.check_exit(exit)?;
        ensure!(
            (1..=tokens.len()).contains(&n),
            Validation,
            "invalid position count {n}"
        );
        let trace = self.forward_trace(tokens, exit);
        Ok(self.read_exit(&trace, exit, n))
    }

    fn read_exit(&self, trace: &ForwardTrace, exit: usize, n: usize) -> Vec<Vec<f64>> {
        let d = self.config.d_model;
        let v = self.config.vocab_size;
        let start = trace.len - n;
        let (logits, _, _) = self.head(&trace.hidden[exit][start * d..], n);
        logits.chunks(v).map(<[f64]>::to_vec).collect()
    }

    /// Summed next-token cross-entropy per requested exit, and (when `grads`
    /// is given) accumulation of `sum_e weight_e * scale * dCE_e/dtheta`.
    pub(crate) fn sequence_loss(
        &self,
        tokens: &[TokenId],
        exits: &[(usize, f64)],
        scale: f64,
        grads: Option<&mut Params<f64>>,
    ) -> Vec<f64> {
        let len = tokens.len();
        let rows = len - 1;
        let (d, v) = (self.config.d_model, self.config.vocab_size);
        let depth = exits.iter().map(|e| e.0).max().unwrap_or(0);
        let trace = self.forward_trace(tokens, depth);

        let mut losses = Vec::with_capacity(exits.len());
        let mut head_grads = Vec::new();
        let mut probs = vec![0.0; v];
        for &(exit, weight) in exits {
            let (logits, y, ncache) = self.head(&trace.hidden[exit][..rows * d], rows);
            let mut dlogits = vec![0.0; rows * v];
            let mut total = 0.0;
            for r in 0..rows {
                let target = tokens[r + 1].index();
                total += ops::cross_entropy(&logits[r * v..(r + 1) * v], target, &mut probs);
                let g = &mut dlogits[r * v..(r + 1) * v];
                for (gj, &p) in g.iter_mut().zip(&probs) {
                    *gj = p * weight * scale;
                }
                g[target] -= weight * scale;
            }
            losses.push(total);
            if weight != 0.0 {
                head_grads.push((exit, y, ncache, dlogits));
            }
        }

        let Some(grads) = grads else {
            return losses;
        };
        if head_grads.is_empty() {
            return losses;
        }

        let grad_depth = head_grads.iter().map(|h| h.0).max().unwrap_or(0);
        let mut dhidden: Vec<Vec<f64>> = vec![Vec::new(); grad_depth + 1];
        for (exit, y, ncache, dlogits) in head_grads {
            let dy = ops::linear_backward(
                &y,
                &dlogits,
                rows,
                d,
                v,
                &self.params.head_w,
                &mut grads.head_w,
                &mut grads.head_b,
            );
            let dx = ops::layer_norm_backward(
                &dy,
                &ncache,
                d,
                &self.params.lnf_g,
                &mut grads.lnf_g,
                &mut grads.lnf_b,
            );
            let slot = &mut dhidden[exit];
            if slot.is_empty() {
                *slot = vec![0.0; len * d];
            }
            for (a, b) in slot.iter_mut().zip(dx) {
                *a += b;
            }
        }

        let mut dx = std::mem::take(&mut dhidden[grad_depth]);
        for l in (0..grad_depth).rev() {
            dx = self.layer_backward(l, &trace, dx, &mut grads.layers[l]);
            if !dhidden[l].is_empty() {
                for (a, b) in dx.iter_mut().zip(&dhidden[l]) {
                    *a += b;
                }
            }
        }
        // embeddings: positional part is fixed
        for (t, tok) in tokens.iter().enumerate() {
            let row = &mut grads.tok_emb[tok.index() * d..(tok.index() + 1) * d];
            for (g, &x) in row.iter_mut().zip(&dx[t * d..(t + 1) * d]) {
                *g += x;
            }
        }
        losses
    }

    fn layer_backward(
        &self,
        l: usize,
        trace: &ForwardTrace,
        dx_out: Vec<f64>,
        g: &mut LayerParams<f64>,
    ) -> Vec<f64> {
        let cfg = &self.config;
        let (d, f, nh, dh) = (cfg.d_model, cfg.d_ff, cfg.n_heads, cfg.head_dim());
        let len = trace.len;
        let scale = 1.0 / (dh as f64).sqrt();
        let lp = &self.params.layers[l];
        let c = &trace.caches[l];

        // feed-forward branch
        let dh_act =
            ops::linear_backward(&c.h, &dx_out, len, f, d, &lp.w_2, &mut g.w_2, &mut g.b_2);
        let du: Vec<f64> = dh_act
            .iter()
            .zip(&c.u)
            .map(|(g, &u)| g * ops::gelu_grad(u))
            .collect();
        let dm = ops::linear_backward(&c.m, &du, len, d, f, &lp.w_1, &mut g.w_1, &mut g.b_1);
        let dln2 = ops::layer_norm_backward(&dm, &c.ln2, d, &lp.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
        let dx_mid: Vec<f64> = dx_out.iter().zip(&dln2).map(|(a, b)| a + b).collect();

        // attention branch
        let dctx =
            ops::linear_backward(&c.ctx, &dx_mid, len, d, d, &lp.w_o, &mut g.w_o, &mut g.b_o);
        let mut dq = vec![0.0; len * d];
        let mut dk = vec![0.0; len * d];
        let mut dv = vec![0.0; len * d];
        let mut dp = vec![0.0; len];
        for h in 0..nh {
            let off = h * dh;
            for t in 0..len {
                let p = &c.att[(h * len + t) * len..(h * len + t) * len + t + 1];
                let dct = &dctx[t * d + off..t * d + off + dh];
                let mut dot = 0.0;
                for s in 0..=t {
                    let vs = &c.v[s * d + off..s * d + off + dh];
                    dp[s] = dct.iter().zip(vs).map(|(a, b)| a * b).sum();
                    dot += p[s] * dp[s];
                    let dvs = &mut dv[s * d + off..s * d + off + dh];
                    for (x, &y) in dvs.iter_mut().zip(dct) {
                        *x += p[s] * y;
                    }
                }
                for s in 0..=t {
                    let ds = p[s] * (dp[s] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for i in 0..dh {
                        dq[t * d + off + i] += ds * c.k[s * d + off + i];
                        dk[s * d + off + i] += ds * c.q[t * d + off + i];
                    }
                }
            }
        }
        let mut da = ops::linear_backward(&c.a, &dq, len, d, d, &lp.w_q, &mut g.w_q, &mut g.b_q);
        let dak = ops::linear_backward(&c.a, &dk, len, d, d, &lp.w_k, &mut g.w_k, &mut g.b_k);
        let dav = ops::linear_backward(&c.a, &dv, len, d, d, &lp.w_v, &mut g.w_v, &mut g.b_v);
        for ((x, y), z) in da.iter_mut().zip(dak).zip(dav) {
            *x += y + z;
        }
        let dln1 = ops::layer_norm_backward(&da, &c.ln1, d, &lp.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
        dx_mid.iter().zip(dln1).map(|(a, b)| a + b).collect()
    }
}

impl LanguageModel for TinyTransformer {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn n_layers(&self) -> usize {
        self.config.n_layers
    }

    fn exits(&self) -> &[usize] {
        self.ladder.exits()
    }

    fn max_context(&self) -> Option<usize> {
        Some(self.config.max_context)
    }

    fn score(&self, tokens: &[TokenId], n_positions: usize, exit: usize) -> Result<Vec<Vec<f64>>> {
        self.forward_last(tokens, n_positions, exit)
    }

    fn score_exits(&self, tokens: &[TokenId], exits: &[usize]) -> Result<Vec<Vec<f64>>> {
        self.check_tokens(tokens)?;
        for &e in exits {
            self.check_exit(e)?;
        }
        let depth = exits.iter().copied().max().unwrap_or(0);
        let trace = self.forward_trace(tokens, depth);
        Ok(exits
            .iter()
            .map(|&e| self.read_exit(&trace, e, 1).pop().unwrap())
            .collect())
    }

    fn probe_exits(
        &self,
        tokens: &[TokenId],
        exits: &[usize],
        visit: &mut dyn FnMut(usize, Vec<f64>) -> bool,
    ) -> Result<()> {
        self.check_tokens(tokens)?;
        for &e in exits {
            self.check_exit(e)?;
        }
        let d = self.config.d_model;
        let len = tokens.len();
        let mut x = self.embed(tokens);
        let mut depth = 0;
        for (i, &e) in exits.iter().enumerate() {
            while depth < e {
                x = self.layer_forward(&self.params.layers[depth], &x, len).0;
                depth += 1;
            }
            let (logits, _, _) = self.head(&x[(len - 1) * d..], 1);
            if !visit(i, logits) {
                break;
            }
        }
        Ok(())
    }
}
