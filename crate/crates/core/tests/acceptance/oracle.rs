//! Brute-force reimplementation of inference and every report metric, built
//! only from the checkpoint JSON and plain loops over nested vectors.

#![allow(clippy::needless_range_loop)]

use serde_json::Value;

pub type Rows = Vec<Vec<f64>>;
/// Accuracy, precision and recall of one variable.
pub type ClassTriple = (f64, Option<f64>, Option<f64>);
pub type ClassRows = Vec<Vec<usize>>;

const SPECIES: [&[usize]; 4] = [&[0, 1, 2, 3, 4], &[5, 6, 7, 8], &[9, 10, 11, 12], &[13, 14, 15, 16]];

pub struct Net {
    weights: Vec<Rows>,
    biases: Rows,
    activation: String,
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    y_mean: Vec<f64>,
    y_std: Vec<f64>,
    log_inputs: bool,
    pub completion: Vec<usize>,
    pub epsilon: Vec<f64>,
}

fn nums(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

impl Net {
    pub fn from_json(text: &str) -> Net {
        let v: Value = serde_json::from_str(text).unwrap();
        let weights = v["weights"]
            .as_array()
            .unwrap()
            .iter()
            .map(|layer| layer.as_array().unwrap().iter().map(nums).collect())
            .collect();
        let biases = v["biases"].as_array().unwrap().iter().map(nums).collect();
        let s = &v["norm_stats"];
        let epsilon = if v["log_transform"].is_null() {
            Vec::new()
        } else {
            nums(&v["log_transform"]["epsilon"])
        };
        Net {
            weights,
            biases,
            activation: v["activation"].as_str().unwrap().to_string(),
            x_mean: nums(&s["x_mean"]),
            x_std: nums(&s["x_std"]),
            y_mean: nums(&s["y_mean"]),
            y_std: nums(&s["y_std"]),
            log_inputs: v["transform"] == "log",
            completion: v["completion_indices"]
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_u64().unwrap() as usize)
                .collect(),
            epsilon,
        }
    }

    fn act(&self, z: f64) -> f64 {
        match self.activation.as_str() {
            "relu" => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            "leaky_relu" => {
                if z > 0.0 {
                    z
                } else {
                    0.01 * z
                }
            }
            "tanh" => z.tanh(),
            "sigmoid" => 1.0 / (1.0 + (-z).exp()),
            other => panic!("activation {other}"),
        }
    }

    /// Raw network output for one physical input row.
    pub fn raw(&self, x: &[f64]) -> Vec<f64> {
        let mut a: Vec<f64> = (0..x.len())
            .map(|j| {
                let v = if self.log_inputs && (j == 2 || j >= 7) {
                    x[j].max(1e-30).ln()
                } else {
                    x[j]
                };
                (v - self.x_mean[j]) / self.x_std[j]
            })
            .collect();
        let n_layers = self.weights.len();
        for l in 0..n_layers {
            let w = &self.weights[l];
            let b = &self.biases[l];
            let mut z = vec![0.0; b.len()];
            for o in 0..b.len() {
                let mut s = 0.0;
                for i in 0..a.len() {
                    s += a[i] * w[i][o];
                }
                z[o] = s + b[o];
                if l + 1 < n_layers {
                    z[o] = self.act(z[o]);
                }
            }
            a = z;
        }
        a
    }

    pub fn g(&self, k: usize, v: f64) -> f64 {
        v * self.y_std[k] + self.y_mean[k]
    }

    pub fn standardize(&self, k: usize, v: f64) -> f64 {
        (v - self.y_mean[k]) / self.y_std[k]
    }
}

pub fn correct(y: &mut [f64], x: &[f64]) {
    for k in 0..28 {
        let base = if k < 24 { x[k + 8] } else { 0.0 };
        if y[k] + base < 0.0 {
            y[k] = -base;
        }
    }
}

pub fn complete(y: &mut [f64], completion: &[usize]) {
    for (s, idx) in SPECIES.iter().enumerate() {
        let j = completion[s];
        let mut rest = 0.0;
        for &i in idx.iter() {
            if i != j {
                rest += y[i];
            }
        }
        y[j] = -rest;
    }
}

pub fn constrain(y: &mut [f64], x: &[f64], mode: &str, completion: &[usize]) {
    if mode == "correct" || mode == "correct_then_complete" {
        correct(y, x);
    }
    if mode == "complete" || mode == "correct_then_complete" {
        complete(y, completion);
    }
}

/// Standard regressor predictions in physical units.
pub fn predict_standard(net: &Net, xs: &Rows, mode: &str) -> Rows {
    xs.iter()
        .map(|x| {
            let raw = net.raw(x);
            let mut y: Vec<f64> = (0..28).map(|k| net.g(k, raw[k])).collect();
            constrain(&mut y, x, mode, &net.completion);
            y
        })
        .collect()
}

/// Sign class index (0 negative, 1 zero, 2 positive) of a value under floor `eps`.
pub fn class_of(v: f64, eps: f64) -> usize {
    if v.abs() < eps {
        1
    } else if v > 0.0 {
        2
    } else {
        0
    }
}

/// Bundle predictions: decoded classes and constrained physical values.
pub fn predict_bundle(reg: &Net, cls: &Net, xs: &Rows, mode: &str) -> (ClassRows, Rows) {
    let mut classes = Vec::new();
    let mut preds = Vec::new();
    for x in xs {
        let mag = reg.raw(x);
        let logits = cls.raw(x);
        let mut c = vec![0; 28];
        let mut y = vec![0.0; 28];
        for k in 0..28 {
            let z = &logits[3 * k..3 * k + 3];
            let mut best = 0;
            for i in 1..3 {
                if z[i] > z[best] {
                    best = i;
                }
            }
            if k >= 24 {
                best = 2;
            }
            c[k] = best;
            let m = reg.g(k, mag[k]);
            y[k] = match best {
                0 => -m.exp(),
                1 => 0.0,
                _ => m.exp(),
            };
        }
        constrain(&mut y, x, mode, &reg.completion);
        classes.push(c);
        preds.push(y);
    }
    (classes, preds)
}

pub fn r2(p: &[f64], t: &[f64]) -> f64 {
    let n = t.len() as f64;
    let mut mean = 0.0;
    for v in t {
        mean += v;
    }
    mean /= n;
    let (mut tot, mut res) = (0.0, 0.0);
    for i in 0..t.len() {
        tot += (t[i] - mean) * (t[i] - mean);
        res += (p[i] - t[i]) * (p[i] - t[i]);
    }
    1.0 - res / tot
}

pub struct Metrics {
    pub r2: f64,
    pub r2_per_variable: Vec<f64>,
    pub mse: f64,
    pub rmse: f64,
    pub mass_bias: [f64; 4],
    pub mass_violation: f64,
    pub negative_fraction: f64,
    pub negative_mean: f64,
    /// Per variable: accuracy, precision, recall.
    pub classes: Option<Vec<ClassTriple>>,
}

/// All metrics from physical predictions `pred` and score-scale values.
pub fn metrics(
    xs: &Rows,
    truth: &Rows,
    pred: &Rows,
    score_pred: &Rows,
    score_truth: &Rows,
    classes: Option<(&ClassRows, &ClassRows)>,
) -> Metrics {
    let n = xs.len();
    let col = |m: &Rows, k: usize| m.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let r2v: Vec<f64> = (0..28).map(|k| r2(&col(score_pred, k), &col(score_truth, k))).collect();
    let mut sq = 0.0;
    for i in 0..n {
        for k in 0..28 {
            sq += (score_pred[i][k] - score_truth[i][k]).powi(2);
        }
    }
    let mse = sq / (n * 28) as f64;

    let mut bias = [0.0; 4];
    let mut viol = 0.0;
    for (s, idx) in SPECIES.iter().enumerate() {
        let mut total_mass = 0.0;
        let (mut signed, mut abs) = (0.0, 0.0);
        for i in 0..n {
            let mut sum = 0.0;
            for &k in idx.iter() {
                total_mass += xs[i][k + 8];
                sum += pred[i][k];
            }
            signed += sum;
            abs += sum.abs();
        }
        let m_s = total_mass / n as f64;
        bias[s] = signed / n as f64 / m_s;
        viol += abs / n as f64 / m_s;
    }

    let full = |y: &Rows, i: usize, k: usize| if k < 24 { xs[i][k + 8] + y[i][k] } else { y[i][k] };
    let mut m_k = vec![0.0; 28];
    for k in 0..28 {
        for i in 0..n {
            m_k[k] += full(truth, i, k);
        }
        m_k[k] /= n as f64;
    }
    let (mut count, mut extent) = (0usize, 0.0);
    for i in 0..n {
        for k in 0..28 {
            let f = full(pred, i, k);
            if f < 0.0 {
                count += 1;
                extent += -f / m_k[k];
            }
        }
    }

    let class_scores = classes.map(|(p, t)| {
        (0..28)
            .map(|k| {
                let (mut hit, mut tp, mut fp, mut fneg) = (0, 0, 0, 0);
                for i in 0..n {
                    let (a, b) = (p[i][k], t[i][k]);
                    if a == b {
                        hit += 1;
                    }
                    if a == 2 && b == 2 {
                        tp += 1;
                    }
                    if a == 2 && b != 2 {
                        fp += 1;
                    }
                    if a != 2 && b == 2 {
                        fneg += 1;
                    }
                }
                let precision = if tp + fp > 0 {
                    Some(tp as f64 / (tp + fp) as f64)
                } else {
                    None
                };
                let recall = if tp + fneg > 0 {
                    Some(tp as f64 / (tp + fneg) as f64)
                } else {
                    None
                };
                (hit as f64 / n as f64, precision, recall)
            })
            .collect()
    });

    Metrics {
        r2: r2v.iter().sum::<f64>() / 28.0,
        r2_per_variable: r2v,
        mse,
        rmse: mse.sqrt(),
        mass_bias: bias,
        mass_violation: viol / 4.0,
        negative_fraction: count as f64 / (n * 28) as f64,
        negative_mean: extent / (n * 28) as f64,
        classes: class_scores,
    }
}
