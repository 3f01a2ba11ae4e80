use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::dataset::{format_real, PRECISION};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::simgym::sigmoid;
use crate::types::{Item, Query};

pub const MODEL_VERSION: u32 = 1;
const MAGIC: &str = "#fairranklab-model";

/// One-hidden-layer network with a click head and an engagement head.
///
/// ```text
/// h = tanh(W x + b)
/// ŷ = sigmoid(w_click · h + b_click)
/// ẑ = softplus(w_eng · h + b_eng)
/// ```
///
/// All parameters live in one flat vector (layout: `W` row-major, `b`,
/// `w_click`, `b_click`, `w_eng`, `b_eng`) so optimizers and gradient
/// checks can treat the model as a point in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    input_dim: usize,
    hidden: usize,
    theta: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub click_logit: f64,
    pub engagement_raw: f64,
    pub y_hat: f64,
    pub z_hat: f64,
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl ModelParams {
    pub fn param_count(input_dim: usize, hidden: usize) -> usize {
        hidden * (input_dim + 3) + 2
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        ModelParams {
            input_dim,
            hidden,
            theta: vec![0.0; Self::param_count(input_dim, hidden)],
        }
    }

    /// Scaled Gaussian initialization, deterministic in `seed`.
    pub fn init(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        let mut rng = rng::stream(seed, 0, Stream::Init);
        let w_in = Normal::new(0.0, 1.0 / (input_dim.max(1) as f64).sqrt()).expect("valid normal");
        let w_out = Normal::new(0.0, 0.1 / (hidden.max(1) as f64).sqrt()).expect("valid normal");
        let (w1, rest) = p.theta.split_at_mut(hidden * input_dim);
        w1.iter_mut().for_each(|w| *w = w_in.sample(&mut rng));
        let heads = &mut rest[hidden..];
        for w in heads[..hidden].iter_mut() {
            *w = w_out.sample(&mut rng);
        }
        for w in heads[hidden + 1..2 * hidden + 1].iter_mut() {
            *w = w_out.sample(&mut rng);
        }
        p
    }

    pub fn from_flat(input_dim: usize, hidden: usize, theta: Vec<f64>) -> Result<Self> {
        let expected = Self::param_count(input_dim, hidden);
        if theta.len() != expected {
            return Err(Error::Shape {
                expected,
                actual: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        Ok(ModelParams {
            input_dim,
            hidden,
            theta,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn off_b1(&self) -> usize {
        self.hidden * self.input_dim
    }
    fn off_wc(&self) -> usize {
        self.off_b1() + self.hidden
    }
    fn off_bc(&self) -> usize {
        self.off_wc() + self.hidden
    }
    fn off_we(&self) -> usize {
        self.off_bc() + 1
    }
    fn off_be(&self) -> usize {
        self.off_we() + self.hidden
    }

    /// Concatenated `(user, context, item)` input vector.
    pub fn input(&self, query: &Query, item: &Item) -> Result<Vec<f64>> {
        let actual = query.feature_len() + item.features.len();
        if actual != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                actual,
            });
        }
        let mut x = Vec::with_capacity(actual);
        x.extend_from_slice(&query.user_features);
        x.extend_from_slice(&query.context_features);
        x.extend_from_slice(&item.features);
        Ok(x)
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        debug_assert_eq!(x.len(), self.input_dim);
        let t = &self.theta;
        let (d, hdim) = (self.input_dim, self.hidden);
        let b1 = &t[self.off_b1()..self.off_wc()];
        let hidden: Vec<f64> = (0..hdim)
            .map(|k| {
                let row = &t[k * d..(k + 1) * d];
                let pre: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b1[k];
                pre.tanh()
            })
            .collect();
        let wc = &t[self.off_wc()..self.off_bc()];
        let we = &t[self.off_we()..self.off_be()];
        let click_logit = wc.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + t[self.off_bc()];
        let engagement_raw = we.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + t[self.off_be()];
        Forward {
            y_hat: sigmoid(click_logit),
            z_hat: softplus(engagement_raw),
            hidden,
            click_logit,
            engagement_raw,
        }
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// derivatives with respect to the click logit and the raw engagement
    /// output are `d_logit` and `d_raw`.
    pub fn backward(&self, x: &[f64], fwd: &Forward, d_logit: f64, d_raw: f64, grad: &mut [f64]) {
        let t = &self.theta;
        let (d, hdim) = (self.input_dim, self.hidden);
        let (off_b1, off_wc, off_bc, off_we, off_be) =
            (self.off_b1(), self.off_wc(), self.off_bc(), self.off_we(), self.off_be());
        grad[off_bc] += d_logit;
        grad[off_be] += d_raw;
        for k in 0..hdim {
            let h = fwd.hidden[k];
            grad[off_wc + k] += d_logit * h;
            grad[off_we + k] += d_raw * h;
            let d_pre = (d_logit * t[off_wc + k] + d_raw * t[off_we + k]) * (1.0 - h * h);
            if d_pre == 0.0 {
                continue;
            }
            grad[off_b1 + k] += d_pre;
            for (gw, xi) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                *gw += d_pre * xi;
            }
        }
    }

    /// `(ŷ, ẑ)` for one (query, item) pair.
    pub fn predict(&self, query: &Query, item: &Item) -> Result<(f64, f64)> {
        let x = self.input(query, item)?;
        let f = self.forward(&x);
        Ok((f.y_hat, f.z_hat))
    }

    /// Text checkpoint: header, shapes, then one line per tensor.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} version={MODEL_VERSION} precision={PRECISION}");
        let _ = writeln!(out, "input_dim {}", self.input_dim);
        let _ = writeln!(out, "hidden {}", self.hidden);
        let (d, h) = (self.input_dim, self.hidden);
        let tensors: [(&str, usize, usize, std::ops::Range<usize>); 6] = [
            ("hidden.weight", h, d, 0..self.off_b1()),
            ("hidden.bias", h, 1, self.off_b1()..self.off_wc()),
            ("click.weight", 1, h, self.off_wc()..self.off_bc()),
            ("click.bias", 1, 1, self.off_bc()..self.off_we()),
            ("engagement.weight", 1, h, self.off_we()..self.off_be()),
            ("engagement.bias", 1, 1, self.off_be()..self.theta.len()),
        ];
        for (name, rows, cols, range) in tensors {
            let _ = writeln!(out, "tensor {name} {rows} {cols}");
            let vals: Vec<String> = self.theta[range].iter().map(|v| format_real(*v)).collect();
            let _ = writeln!(out, "{}", vals.join(" "));
        }
        out
    }

    pub fn from_checkpoint(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            message: "empty checkpoint".into(),
        })?;
        let expected_header = format!("{MAGIC} version={MODEL_VERSION} precision={PRECISION}");
        if header != expected_header {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("expected header `{expected_header}`, found `{header}`"),
            });
        }
        let mut dim = |key: &str| -> Result<usize> {
            let (n, line) = lines.next().ok_or_else(|| parse_err(0, format!("missing `{key}`")))?;
            line.strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| parse_err(n, format!("expected `{key} <n>`, found `{line}`")))
        };
        let input_dim = dim("input_dim")?;
        let hidden = dim("hidden")?;
        let mut theta = Vec::with_capacity(Self::param_count(input_dim, hidden));
        let names = [
            ("hidden.weight", hidden, input_dim),
            ("hidden.bias", hidden, 1),
            ("click.weight", 1, hidden),
            ("click.bias", 1, 1),
            ("engagement.weight", 1, hidden),
            ("engagement.bias", 1, 1),
        ];
        for (name, rows, cols) in names {
            let (n, line) = lines.next().ok_or_else(|| parse_err(0, format!("missing tensor {name}")))?;
            let expected = format!("tensor {name} {rows} {cols}");
            if line != expected {
                return Err(parse_err(n, format!("expected `{expected}`, found `{line}`")));
            }
            let (n, values) = lines.next().ok_or_else(|| parse_err(n + 1, format!("missing values of {name}")))?;
            let vals = values
                .split(' ')
                .map(|v| v.parse::<f64>().map_err(|_| parse_err(n, format!("bad value `{v}` in {name}"))))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != rows * cols {
                return Err(parse_err(n, format!("{name} holds {} values, expected {}", vals.len(), rows * cols)));
            }
            theta.extend(vals);
        }
        ModelParams::from_flat(input_dim, hidden, theta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text, path)
    }
}
