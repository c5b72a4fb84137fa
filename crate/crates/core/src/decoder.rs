//! The three conditional LSTM generation cells and the output layer.
//!
//! All cells read `W_big` (`4n x 3n`) over the concatenation `[m; w; h]`.
//! Row blocks are `(i, f, o, x)` where `x` is the candidate cell `ĉ` for
//! `lm` and the reading gate `r` for `mem` and `hybrid`; those two compute
//! `ĉ = tanh(W_c [w; h])` separately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, matvec, matvec_acc, matvec_t_acc, outer_acc, sigmoid_scalar, softmax_in_place, Parameter, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Lm,
    Mem,
    Hybrid,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lm, Variant::Mem, Variant::Hybrid];

    pub fn has_reading_gate(self) -> bool {
        self != Variant::Lm
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Lm => "lm",
            Variant::Mem => "mem",
            Variant::Hybrid => "hybrid",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lm" => Ok(Variant::Lm),
            "mem" => Ok(Variant::Mem),
            "hybrid" => Ok(Variant::Hybrid),
            _ => Err(Error::Config(format!("unknown variant {s:?} (expected lm, mem or hybrid)"))),
        }
    }
}

/// Generation network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub variant: Variant,
    pub hidden: usize,
    pub emb: Parameter,
    pub w_big: Parameter,
    pub w_c: Option<Parameter>,
    pub w_out: Parameter,
    pub b_out: Parameter,
}

impl DecoderParams {
    pub fn init(variant: Variant, hidden: usize, vocab: usize, range: f64, rng: &mut Rng) -> Self {
        let n = hidden;
        let emb = Parameter::new("dec.emb", Tensor::uniform(&[vocab, n], range, rng));
        let w_big = Parameter::new("dec.w_big", Tensor::uniform(&[4 * n, 3 * n], range, rng));
        let w_c = variant
            .has_reading_gate()
            .then(|| Parameter::new("dec.w_c", Tensor::uniform(&[n, 2 * n], range, rng)));
        let w_out = Parameter::new("dec.w_out", Tensor::uniform(&[vocab, n], range, rng));
        let b_out = Parameter::new("dec.b_out", Tensor::uniform(&[vocab], range, rng));
        DecoderParams {
            variant,
            hidden,
            emb,
            w_big,
            w_c,
            w_out,
            b_out,
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        let mut v = vec![&self.emb, &self.w_big];
        v.extend(self.w_c.as_ref());
        v.push(&self.w_out);
        v.push(&self.b_out);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![&mut self.emb, &mut self.w_big];
        v.extend(self.w_c.as_mut());
        v.push(&mut self.w_out);
        v.push(&mut self.b_out);
        v
    }

    pub fn vocab_size(&self) -> usize {
        self.b_out.value.len()
    }

    pub fn embedding(&self, token: usize) -> &[f64] {
        self.emb.value.row(token)
    }

    /// One cell step from `(h, c)` with conditioning `m` and input `w`.
    pub fn step(&self, m: &[f64], w: &[f64], h: &[f64], c: &[f64]) -> StepCache {
        let n = self.hidden;
        let mut input = Vec::with_capacity(3 * n);
        input.extend_from_slice(m);
        input.extend_from_slice(w);
        input.extend_from_slice(h);
        let mut pre = vec![0.0; 4 * n];
        matvec(self.w_big.value.data(), 3 * n, &input, &mut pre);
        let gi: Vec<f64> = pre[..n].iter().map(|&x| sigmoid_scalar(x)).collect();
        let gf: Vec<f64> = pre[n..2 * n].iter().map(|&x| sigmoid_scalar(x)).collect();
        let go: Vec<f64> = pre[2 * n..3 * n].iter().map(|&x| sigmoid_scalar(x)).collect();
        let (cand, gr) = match &self.w_c {
            None => (pre[3 * n..].iter().map(|x| x.tanh()).collect::<Vec<_>>(), Vec::new()),
            Some(w_c) => {
                let mut cp = vec![0.0; n];
                matvec(w_c.value.data(), 2 * n, &input[n..], &mut cp);
                let r = pre[3 * n..].iter().map(|&x| sigmoid_scalar(x)).collect();
                (cp.iter().map(|x| x.tanh()).collect(), r)
            }
        };
        let mut c_new = vec![0.0; n];
        for k in 0..n {
            c_new[k] = gf[k] * c[k] + gi[k] * cand[k];
            if self.variant == Variant::Mem {
                c_new[k] += gr[k] * m[k];
            }
        }
        let tanh_c: Vec<f64> = c_new.iter().map(|x| x.tanh()).collect();
        let mut h_new: Vec<f64> = go.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
        if self.variant == Variant::Hybrid {
            for k in 0..n {
                h_new[k] += gr[k] * m[k];
            }
        }
        StepCache {
            input,
            i: gi,
            f: gf,
            o: go,
            r: gr,
            cand,
            c_prev: c.to_vec(),
            c: c_new,
            tanh_c,
            h: h_new,
        }
    }

    /// Back-propagate one step. `dh` and `dc` are gradients on the step's
    /// outputs; returns gradients on `m`, `w`, `h_prev` and `c_prev`.
    pub fn step_backward(&mut self, cache: &StepCache, dh: &[f64], dc: &[f64]) -> StepGrads {
        let n = self.hidden;
        let m = &cache.input[..n];
        let mut dm = vec![0.0; n];
        let mut dpre = vec![0.0; 4 * n];
        let mut dc_prev = vec![0.0; n];
        let mut dcand_pre = vec![0.0; n];
        for k in 0..n {
            let (i, f, o, t) = (cache.i[k], cache.f[k], cache.o[k], cache.tanh_c[k]);
            let dct = dc[k] + dh[k] * o * (1.0 - t * t);
            let d_o = dh[k] * t;
            let di = dct * cache.cand[k];
            let df = dct * cache.c_prev[k];
            let dcand = dct * i;
            dc_prev[k] = dct * f;
            dpre[k] = di * i * (1.0 - i);
            dpre[n + k] = df * f * (1.0 - f);
            dpre[2 * n + k] = d_o * o * (1.0 - o);
            let g = cache.cand[k];
            match self.variant {
                Variant::Lm => dpre[3 * n + k] = dcand * (1.0 - g * g),
                Variant::Mem => {
                    let r = cache.r[k];
                    dpre[3 * n + k] = dct * m[k] * r * (1.0 - r);
                    dm[k] += dct * r;
                    dcand_pre[k] = dcand * (1.0 - g * g);
                }
                Variant::Hybrid => {
                    let r = cache.r[k];
                    dpre[3 * n + k] = dh[k] * m[k] * r * (1.0 - r);
                    dm[k] += dh[k] * r;
                    dcand_pre[k] = dcand * (1.0 - g * g);
                }
            }
        }
        let mut dinput = vec![0.0; 3 * n];
        {
            let (w, g) = self.w_big.split();
            outer_acc(&dpre, &cache.input, g.data_mut());
            matvec_t_acc(w.data(), 3 * n, &dpre, &mut dinput);
        }
        if let Some(w_c) = self.w_c.as_mut() {
            let (w, g) = w_c.split();
            outer_acc(&dcand_pre, &cache.input[n..], g.data_mut());
            matvec_t_acc(w.data(), 2 * n, &dcand_pre, &mut dinput[n..]);
        }
        axpy(1.0, &dinput[..n], &mut dm);
        StepGrads {
            dm,
            dw: dinput[n..2 * n].to_vec(),
            dh_prev: dinput[2 * n..].to_vec(),
            dc_prev,
        }
    }

    /// Output token distribution `softmax(W_out h + b_out)`.
    pub fn output_dist(&self, h: &[f64]) -> Vec<f64> {
        let mut logits = self.b_out.value.data().to_vec();
        matvec_acc(self.w_out.value.data(), self.hidden, h, &mut logits);
        softmax_in_place(&mut logits);
        logits
    }

    /// Gradient of `-log p[target]` given the distribution `p`; accumulates
    /// output-layer gradients and returns `dL/dh`.
    pub fn output_backward(&mut self, h: &[f64], p: &[f64], target: usize) -> Vec<f64> {
        let mut dlogits = p.to_vec();
        dlogits[target] -= 1.0;
        let mut dh = vec![0.0; self.hidden];
        {
            let (w, g) = self.w_out.split();
            outer_acc(&dlogits, h, g.data_mut());
            matvec_t_acc(w.data(), self.hidden, &dlogits, &mut dh);
        }
        axpy(1.0, &dlogits, self.b_out.grad_mut().data_mut());
        dh
    }
}

/// Everything one step needs for its backward pass and for tracing.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    /// `[m; w; h_prev]`.
    pub input: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    /// Reading gate; empty for `lm`.
    pub r: Vec<f64>,
    /// Candidate cell `ĉ`.
    pub cand: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepGrads {
    pub dm: Vec<f64>,
    pub dw: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Reference step of a standard LSTM whose candidate comes from a separate
/// `W_c`: gates from `W_big [m; w; h]`, no reading gate. Used to pin the
/// `m = 0` identity of the `mem` and `hybrid` cells.
pub fn reference_lstm_step(params: &DecoderParams, w: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = params.hidden;
    let w_c = params
        .w_c
        .as_ref()
        .ok_or_else(|| Error::Unsupported("reference step needs W_c".into()))?;
    let mut input = vec![0.0; n];
    input.extend_from_slice(w);
    input.extend_from_slice(h);
    let mut pre = vec![0.0; 4 * n];
    matvec(params.w_big.value.data(), 3 * n, &input, &mut pre);
    let mut cp = vec![0.0; n];
    matvec(w_c.value.data(), 2 * n, &input[n..], &mut cp);
    let mut c_new = vec![0.0; n];
    let mut h_new = vec![0.0; n];
    for k in 0..n {
        let i = sigmoid_scalar(pre[k]);
        let f = sigmoid_scalar(pre[n + k]);
        let o = sigmoid_scalar(pre[2 * n + k]);
        c_new[k] = f * c[k] + i * cp[k].tanh();
        h_new[k] = o * c_new[k].tanh();
    }
    Ok((h_new, c_new))
}
