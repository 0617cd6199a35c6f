//! Dense kernels over row-major `f64` activations and `f32` weights.

pub const LN_EPS: f64 = 1e-5;

/// `y[rows, out] = x[rows, inp] * w[inp, out] + b[out]`
pub fn linear(x: &[f64], rows: usize, inp: usize, w: &[f32], b: &[f32], out: usize) -> Vec<f64> {
    debug_assert_eq!(x.len(), rows * inp);
    debug_assert_eq!(w.len(), inp * out);
    let mut y = Vec::with_capacity(rows * out);
    for r in 0..rows {
        y.extend(b.iter().map(|&v| v as f64));
        let yr = &mut y[r * out..(r + 1) * out];
        for (i, &xi) in x[r * inp..(r + 1) * inp].iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let wr = &w[i * out..(i + 1) * out];
            for (yj, &wj) in yr.iter_mut().zip(wr) {
                *yj += xi * wj as f64;
            }
        }
    }
    y
}

/// Accumulates `dw += x^T dy`, `db += sum(dy)` and returns `dx = dy w^T`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    inp: usize,
    out: usize,
    w: &[f32],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * inp];
    for r in 0..rows {
        let dyr = &dy[r * out..(r + 1) * out];
        for (dbj, &g) in db.iter_mut().zip(dyr) {
            *dbj += g;
        }
        let xr = &x[r * inp..(r + 1) * inp];
        let dxr = &mut dx[r * inp..(r + 1) * inp];
        for i in 0..inp {
            let wr = &w[i * out..(i + 1) * out];
            let dwr = &mut dw[i * out..(i + 1) * out];
            let xi = xr[i];
            let mut acc = 0.0;
            for j in 0..out {
                acc += dyr[j] * wr[j] as f64;
                dwr[j] += xi * dyr[j];
            }
            dxr[i] = acc;
        }
    }
    dx
}

pub struct NormCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub fn layer_norm(x: &[f64], rows: usize, d: usize, g: &[f32], b: &[f32]) -> (Vec<f64>, NormCache) {
    let mut y = vec![0.0; rows * d];
    let mut xhat = vec![0.0; rows * d];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let h = (xr[i] - mean) * rs;
            xhat[r * d + i] = h;
            y[r * d + i] = g[i] as f64 * h + b[i] as f64;
        }
    }
    (y, NormCache { xhat, rstd })
}

pub fn layer_norm_backward(
    dy: &[f64],
    cache: &NormCache,
    d: usize,
    g: &[f32],
    dg: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let rows = cache.rstd.len();
    let mut dx = vec![0.0; rows * d];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..d {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            dxhat[i] = dyr[i] * g[i] as f64;
            m1 += dxhat[i];
            m2 += dxhat[i] * xh[i];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let rs = cache.rstd[r];
        for i in 0..d {
            dx[r * d + i] = rs * (dxhat[i] - m1 - xh[i] * m2);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_K * u * u * u)).tanh())
}

#[inline]
pub fn gelu_grad(u: f64) -> f64 {
    let th = (GELU_C * (u + GELU_K * u * u * u)).tanh();
    0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_K * u * u)
}

/// Fixed sinusoidal encoding: even dims `sin(t / 10000^(i/d))`, odd dims the
/// matching cosine.
pub fn positional(t: usize, d: usize) -> impl Iterator<Item = f64> {
    (0..d).map(move |i| {
        let pair = (i / 2 * 2) as f64;
        let angle = t as f64 / 10000f64.powf(pair / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Cross-entropy of `target` under `softmax(logits)`; writes the softmax into
/// `probs`.
pub fn cross_entropy(logits: &[f64], target: usize, probs: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &l) in probs.iter_mut().zip(logits) {
        *p = (l - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    -(logits[target] - max - sum.ln())
}
