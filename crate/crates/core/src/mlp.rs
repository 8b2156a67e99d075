//! Small tanh feed-forward network with a hand-written backward pass.
//!
//! Hidden layers use `tanh`; the output layer is affine. The network is a
//! stand-in for a learned flow prior, so it only needs evaluation, a
//! vector-Jacobian product and a Jacobian-vector product with respect to its
//! input.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `rows = fan_out`, `cols = fan_in`.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForward {
    layers: Vec<Layer>,
}

struct Tape {
    /// Post-activation of every hidden layer.
    hidden: Vec<DVector<f64>>,
    output: DVector<f64>,
}

impl FeedForward {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("feed-forward network needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.nrows() {
                return Err(invalid(format!("layer {i}: bias length does not match weight rows")));
            }
            if i > 0 && layers[i - 1].weight.nrows() != layer.weight.ncols() {
                return Err(invalid(format!("layer {i}: input dimension does not chain")));
            }
        }
        Ok(FeedForward { layers })
    }

    /// Gaussian init with standard deviation `scale / sqrt(fan_in)` (biases
    /// a tenth of that), two hidden layers of width `hidden`.
    pub fn random(input: usize, hidden: usize, output: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [input, hidden, hidden, output];
        let layers = dims
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, scale / (w[0] as f64).sqrt()).expect("finite std");
                Layer {
                    weight: DMatrix::from_fn(w[1], w[0], |_, _| normal.sample(&mut rng)),
                    bias: DVector::from_fn(w[1], |_, _| 0.1 * normal.sample(&mut rng)),
                }
            })
            .collect();
        FeedForward { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    fn check_input(&self, input: &DVector<f64>) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(invalid(format!("network expects input of length {}, got {}", self.input_dim(), input.len())));
        }
        Ok(())
    }

    fn forward_tape(&self, input: &DVector<f64>) -> Tape {
        let last = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(last);
        let mut a = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = &layer.weight * &a + &layer.bias;
            if i == last {
                return Tape { hidden, output: z };
            }
            a = z.map(f64::tanh);
            hidden.push(a.clone());
        }
        unreachable!("network has at least one layer")
    }

    pub fn forward(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(input)?;
        Ok(self.forward_tape(input).output)
    }

    /// `(d out / d in)^T g`.
    pub fn vjp(&self, input: &DVector<f64>, cotangent: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(input)?;
        if cotangent.len() != self.output_dim() {
            return Err(invalid("cotangent length does not match network output"));
        }
        let tape = self.forward_tape(input);
        let mut g = cotangent.clone();
        for i in (0..self.layers.len()).rev() {
            let gin = self.layers[i].weight.tr_mul(&g);
            if i == 0 {
                return Ok(gin);
            }
            // tanh'(z) = 1 - tanh(z)^2
            let h = &tape.hidden[i - 1];
            g = gin.zip_map(h, |gv, hv| gv * (1.0 - hv * hv));
        }
        unreachable!("network has at least one layer")
    }

    /// `(d out / d in) v`.
    pub fn jvp(&self, input: &DVector<f64>, tangent: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(input)?;
        if tangent.len() != self.input_dim() {
            return Err(invalid("tangent length does not match network input"));
        }
        let tape = self.forward_tape(input);
        let last = self.layers.len() - 1;
        let mut v = tangent.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let dz = &layer.weight * &v;
            if i == last {
                return Ok(dz);
            }
            let h = &tape.hidden[i];
            v = dz.zip_map(h, |dv, hv| dv * (1.0 - hv * hv));
        }
        unreachable!("network has at least one layer")
    }

    /// Plain-text weights format:
    ///
    /// ```text
    /// layers: n
    /// rows cols
    /// <rows*cols weights, row-major>
    /// <rows biases>
    /// ```
    ///
    /// Values are written with 17 significant digits, so parsing the
    /// text reproduces every weight bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "layers: {}", self.layers.len());
        for layer in &self.layers {
            let (rows, cols) = layer.weight.shape();
            let _ = writeln!(out, "{rows} {cols}");
            let weights: Vec<String> = (0..rows)
                .flat_map(|r| (0..cols).map(move |c| (r, c)))
                .map(|(r, c)| format!("{:.16e}", layer.weight[(r, c)]))
                .collect();
            let _ = writeln!(out, "{}", weights.join(" "));
            let biases: Vec<String> = layer.bias.iter().map(|b| format!("{b:.16e}")).collect();
            let _ = writeln!(out, "{}", biases.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let (ln, header) = lines.next().ok_or_else(|| invalid("empty weights file"))?;
        let count: usize = header
            .strip_prefix("layers:")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| invalid(format!("line {ln}: expected 'layers: n'")))?;

        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, dims) = lines.next().ok_or_else(|| invalid("weights file truncated"))?;
            let dims = parse_numbers::<usize>(dims, ln)?;
            let [rows, cols] = dims[..] else {
                return Err(invalid(format!("line {ln}: expected 'rows cols'")));
            };
            let (ln, w) = lines.next().ok_or_else(|| invalid("weights file truncated"))?;
            let w = parse_numbers::<f64>(w, ln)?;
            if w.len() != rows * cols {
                return Err(invalid(format!("line {ln}: expected {} weights, got {}", rows * cols, w.len())));
            }
            let (ln, b) = lines.next().ok_or_else(|| invalid("weights file truncated"))?;
            let b = parse_numbers::<f64>(b, ln)?;
            if b.len() != rows {
                return Err(invalid(format!("line {ln}: expected {rows} biases, got {}", b.len())));
            }
            layers.push(Layer { weight: DMatrix::from_row_slice(rows, cols, &w), bias: DVector::from_vec(b) });
        }
        if let Some((ln, _)) = lines.next() {
            return Err(invalid(format!("line {ln}: trailing content after last layer")));
        }
        FeedForward::new(layers)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
    }
}

fn parse_numbers<T: std::str::FromStr>(line: &str, ln: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|tok| tok.parse::<T>().map_err(|_| invalid(format!("line {ln}: cannot parse '{tok}'"))))
        .collect()
}
