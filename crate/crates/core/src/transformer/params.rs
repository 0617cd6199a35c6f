use super::config::TransformerConfig;
use crate::model::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_g: Vec<T>,
    pub ln1_b: Vec<T>,
    /// `[d_model, d_model]`, row-major (input, output)
    pub w_q: Vec<T>,
    pub b_q: Vec<T>,
    pub w_k: Vec<T>,
    pub b_k: Vec<T>,
    pub w_v: Vec<T>,
    pub b_v: Vec<T>,
    pub w_o: Vec<T>,
    pub b_o: Vec<T>,
    pub ln2_g: Vec<T>,
    pub ln2_b: Vec<T>,
    /// `[d_model, d_ff]`
    pub w_1: Vec<T>,
    pub b_1: Vec<T>,
    /// `[d_ff, d_model]`
    pub w_2: Vec<T>,
    pub b_2: Vec<T>,
}

/// Every trainable tensor of the model. Instantiated with `f32` for weights
/// and `f64` for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// `[vocab, d_model]`
    pub tok_emb: Vec<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_g: Vec<T>,
    pub lnf_b: Vec<T>,
    /// `[d_model, vocab]`
    pub head_w: Vec<T>,
    pub head_b: Vec<T>,
}

/// Names and shapes of every tensor, in serialization order.
pub fn tensor_shapes(cfg: &TransformerConfig) -> Vec<(String, Vec<usize>)> {
    let (v, d, f) = (cfg.vocab_size, cfg.d_model, cfg.d_ff);
    let mut out = vec![("tok_emb".to_string(), vec![v, d])];
    for l in 0..cfg.n_layers {
        let p = |n: &str| format!("layers.{l}.{n}");
        out.extend([
            (p("ln1_g"), vec![d]),
            (p("ln1_b"), vec![d]),
            (p("w_q"), vec![d, d]),
            (p("b_q"), vec![d]),
            (p("w_k"), vec![d, d]),
            (p("b_k"), vec![d]),
            (p("w_v"), vec![d, d]),
            (p("b_v"), vec![d]),
            (p("w_o"), vec![d, d]),
            (p("b_o"), vec![d]),
            (p("ln2_g"), vec![d]),
            (p("ln2_b"), vec![d]),
            (p("w_1"), vec![d, f]),
            (p("b_1"), vec![f]),
            (p("w_2"), vec![f, d]),
            (p("b_2"), vec![d]),
        ]);
    }
    out.extend([
        ("lnf_g".to_string(), vec![d]),
        ("lnf_b".to_string(), vec![d]),
        ("head_w".to_string(), vec![d, v]),
        ("head_b".to_string(), vec![v]),
    ]);
    out
}

impl<T> LayerParams<T> {
    fn tensors(&self) -> [&Vec<T>; 16] {
        [
            &self.ln1_g,
            &self.ln1_b,
            &self.w_q,
            &self.b_q,
            &self.w_k,
            &self.b_k,
            &self.w_v,
            &self.b_v,
            &self.w_o,
            &self.b_o,
            &self.ln2_g,
            &self.ln2_b,
            &self.w_1,
            &self.b_1,
            &self.w_2,
            &self.b_2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<T>; 16] {
        [
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.w_q,
            &mut self.b_q,
            &mut self.w_k,
            &mut self.b_k,
            &mut self.w_v,
            &mut self.b_v,
            &mut self.w_o,
            &mut self.b_o,
            &mut self.ln2_g,
            &mut self.ln2_b,
            &mut self.w_1,
            &mut self.b_1,
            &mut self.w_2,
            &mut self.b_2,
        ]
    }
}

impl<T: Clone> Params<T> {
    /// Builds a tensor set from flat arrays in [`tensor_shapes`] order.
    pub fn from_tensors(cfg: &TransformerConfig, mut arrays: Vec<Vec<T>>) -> Self {
        debug_assert_eq!(arrays.len(), 4 + 16 * cfg.n_layers + 1);
        let mut rest = arrays.split_off(1);
        let tok_emb = arrays.pop().unwrap();
        let tail = rest.split_off(16 * cfg.n_layers);
        let mut layer_iter = rest.into_iter();
        let layers = (0..cfg.n_layers)
            .map(|_| {
                let mut n = || layer_iter.next().unwrap();
                LayerParams {
                    ln1_g: n(),
                    ln1_b: n(),
                    w_q: n(),
                    b_q: n(),
                    w_k: n(),
                    b_k: n(),
                    w_v: n(),
                    b_v: n(),
                    w_o: n(),
                    b_o: n(),
                    ln2_g: n(),
                    ln2_b: n(),
                    w_1: n(),
                    b_1: n(),
                    w_2: n(),
                    b_2: n(),
                }
            })
            .collect();
        let [lnf_g, lnf_b, head_w, head_b]: [Vec<T>; 4] = tail.try_into().ok().unwrap();
        Self {
            tok_emb,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
        }
    }
}

impl<T> Params<T> {
    /// All tensors in [`tensor_shapes`] order.
    pub fn tensors(&self) -> Vec<&Vec<T>> {
        let mut out = vec![&self.tok_emb];
        for l in &self.layers {
            out.extend(l.tensors());
        }
        out.extend([&self.lnf_g, &self.lnf_b, &self.head_w, &self.head_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = vec![&mut self.tok_emb];
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        out.extend([
            &mut self.lnf_g,
            &mut self.lnf_b,
            &mut self.head_w,
            &mut self.head_b,
        ]);
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Params<f64> {
    pub fn zeros(cfg: &TransformerConfig) -> Self {
        let arrays = tensor_shapes(cfg)
            .into_iter()
            .map(|(_, s)| vec![0.0; s.iter().product()])
            .collect();
        Self::from_tensors(cfg, arrays)
    }

    pub fn add_assign(&mut self, other: &Params<f64>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Deterministic initialization: layer-norm gains 1, biases 0, embeddings
/// N(0, 1), projections N(0, 1/fan_in); residual output projections are
/// further scaled by `1/sqrt(2 * n_layers)`.
pub fn init_params(cfg: &TransformerConfig) -> Params<f32> {
    let mut rng = Rng::new(cfg.init_seed);
    let (v, d, f) = (cfg.vocab_size, cfg.d_model, cfg.d_ff);
    let resid = 1.0 / (2.0 * cfg.n_layers as f64).sqrt();
    let mut normal = |n: usize, std: f64| -> Vec<f32> {
        (0..n).map(|_| (rng.next_normal() * std) as f32).collect()
    };
    let tok_emb = normal(v * d, 1.0);
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for _ in 0..cfg.n_layers {
        let sd = 1.0 / (d as f64).sqrt();
        let sf = 1.0 / (f as f64).sqrt();
        layers.push(LayerParams {
            ln1_g: vec![1.0; d],
            ln1_b: vec![0.0; d],
            w_q: normal(d * d, sd),
            b_q: vec![0.0; d],
            w_k: normal(d * d, sd),
            b_k: vec![0.0; d],
            w_v: normal(d * d, sd),
            b_v: vec![0.0; d],
            w_o: normal(d * d, sd * resid),
            b_o: vec![0.0; d],
            ln2_g: vec![1.0; d],
            ln2_b: vec![0.0; d],
            w_1: normal(d * f, sd),
            b_1: vec![0.0; f],
            w_2: normal(f * d, sf * resid),
            b_2: vec![0.0; d],
        });
    }
    let head_w = normal(d * v, 1.0 / (d as f64).sqrt());
    Params {
        tok_emb,
        layers,
        lnf_g: vec![1.0; d],
        lnf_b: vec![0.0; d],
        head_w,
        head_b: vec![0.0; v],
    }
}
