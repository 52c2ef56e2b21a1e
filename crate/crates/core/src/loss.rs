//! Ranking losses on a single list: value `l(y, s)` and score gradient `∂l/∂s`.
//!
//! None of the losses normalize by list length; a dataset objective is the
//! unweighted mean of per-query losses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LossError {
    #[error("LengthMismatch: {labels} labels vs {scores} scores")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("DomainError: {0}")]
    DomainError(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// `Σ (y_i − s_i)²`, no ½ factor.
    #[serde(rename = "mse")]
    Mse,
    /// Binary cross entropy on `σ(s_i)` with soft targets `y_i ∈ [0, 1]`.
    #[serde(rename = "logistic")]
    PointwiseLogistic,
    /// `−Σ_{i≠j} 1[y_i > y_j] ln σ(s_i − s_j)`.
    #[serde(rename = "ranknet")]
    RankNet,
    /// `−Σ_i y_i ln softmax(s)_i` with unnormalized label weights.
    #[serde(rename = "softmax")]
    Softmax,
}

pub const ALL_LOSSES: [LossKind; 4] = [
    LossKind::Mse,
    LossKind::PointwiseLogistic,
    LossKind::RankNet,
    LossKind::Softmax,
];

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::PointwiseLogistic => "logistic",
            LossKind::RankNet => "ranknet",
            LossKind::Softmax => "softmax",
        }
    }

    /// Whether adding one constant to every score leaves the loss unchanged.
    pub fn is_translation_invariant(self) -> bool {
        matches!(self, LossKind::RankNet | LossKind::Softmax)
    }

    pub fn value(self, y: &[f64], s: &[f64]) -> Result<f64, LossError> {
        self.check(y, s)?;
        Ok(match self {
            LossKind::Mse => y.iter().zip(s).map(|(y, s)| (y - s).powi(2)).sum(),
            LossKind::PointwiseLogistic => y.iter().zip(s).map(|(&y, &s)| softplus(s) - y * s).sum(),
            LossKind::RankNet => {
                let mut total = 0.0;
                for i in 0..y.len() {
                    for j in 0..y.len() {
                        if y[i] > y[j] {
                            total += softplus(s[j] - s[i]);
                        }
                    }
                }
                total
            }
            LossKind::Softmax => {
                let lse = log_sum_exp(s);
                y.iter().zip(s).map(|(y, s)| y * (lse - s)).sum()
            }
        })
    }

    pub fn grad(self, y: &[f64], s: &[f64]) -> Result<Vec<f64>, LossError> {
        self.check(y, s)?;
        Ok(match self {
            LossKind::Mse => y.iter().zip(s).map(|(y, s)| -2.0 * (y - s)).collect(),
            LossKind::PointwiseLogistic => y.iter().zip(s).map(|(y, &s)| -(y - sigmoid(s))).collect(),
            LossKind::RankNet => {
                let mut g = vec![0.0; y.len()];
                for i in 0..y.len() {
                    for j in 0..y.len() {
                        if y[i] > y[j] {
                            // d/ds_i softplus(s_j - s_i) = -σ(s_j - s_i)
                            let w = sigmoid(s[j] - s[i]);
                            g[i] -= w;
                            g[j] += w;
                        }
                    }
                }
                g
            }
            LossKind::Softmax => {
                let p = softmax(s);
                let total: f64 = y.iter().sum();
                y.iter().zip(&p).map(|(y, p)| -(y - p * total)).collect()
            }
        })
    }

    pub fn value_and_grad(self, y: &[f64], s: &[f64]) -> Result<(f64, Vec<f64>), LossError> {
        if self == LossKind::Softmax {
            // Shares the log-sum-exp between value and gradient.
            self.check(y, s)?;
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let lse = max + z.ln();
            let total: f64 = y.iter().sum();
            let value = y.iter().zip(s).map(|(y, s)| y * (lse - s)).sum();
            let grad = y.iter().zip(&exps).map(|(y, e)| -(y - e / z * total)).collect();
            return Ok((value, grad));
        }
        Ok((self.value(y, s)?, self.grad(y, s)?))
    }

    fn check(self, y: &[f64], s: &[f64]) -> Result<(), LossError> {
        if y.len() != s.len() || y.is_empty() {
            return Err(LossError::LengthMismatch {
                labels: y.len(),
                scores: s.len(),
            });
        }
        match self {
            LossKind::Softmax if y.iter().any(|&v| v < 0.0) => Err(LossError::DomainError(
                "softmax loss requires non-negative labels".into(),
            )),
            LossKind::PointwiseLogistic if y.iter().any(|&v| !(0.0..=1.0).contains(&v)) => Err(
                LossError::DomainError("logistic loss requires labels in [0, 1]".into()),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "logistic" => Ok(LossKind::PointwiseLogistic),
            "ranknet" => Ok(LossKind::RankNet),
            "softmax" => Ok(LossKind::Softmax),
            other => Err(format!(
                "unknown loss {other:?} (expected mse | logistic | ranknet | softmax)"
            )),
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(s: &[f64]) -> f64 {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Max-shifted softmax.
pub fn softmax(s: &[f64]) -> Vec<f64> {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_scores() {
        let v = LossKind::Softmax.value(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        let shifted = LossKind::Softmax.value(&[1.0, 0.0], &[100.0, 100.0]).unwrap();
        assert!((v - shifted).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_values() {
        // ln(1 + e^-2)
        let v = LossKind::RankNet.value(&[1.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((v - 0.126_928_011_042_973).abs() < 1e-12, "{v}");
        // -ln(e / (e + 1))
        let v = LossKind::Softmax.value(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v - 0.313_261_687_518_223).abs() < 1e-12, "{v}");
        assert_eq!(LossKind::Mse.value(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(LossKind::Mse.value(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn softmax_gradient_example() {
        let g = LossKind::Softmax.grad(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mse_zero_at_identity() {
        let g = LossKind::Mse.grad(&[0.3, 0.3, 0.3], &[0.3, 0.3, 0.3]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invariance_flags() {
        assert!(LossKind::RankNet.is_translation_invariant());
        assert!(LossKind::Softmax.is_translation_invariant());
        assert!(!LossKind::Mse.is_translation_invariant());
        assert!(!LossKind::PointwiseLogistic.is_translation_invariant());
    }

    #[test]
    fn ranknet_zero_without_ordered_pairs() {
        let v = LossKind::RankNet.value(&[2.0, 2.0, 2.0], &[5.0, -1.0, 0.3]).unwrap();
        assert_eq!(v, 0.0);
        assert!(LossKind::RankNet
            .grad(&[2.0, 2.0, 2.0], &[5.0, -1.0, 0.3])
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
    }

    #[test]
    fn softmax_normalized_labels_reduce_to_cross_entropy() {
        let y = [0.2, 0.5, 0.3];
        let s = [0.1, -1.2, 2.0];
        let p = softmax(&s);
        let g = LossKind::Softmax.grad(&y, &s).unwrap();
        for i in 0..3 {
            assert!((g[i] - (p[i] - y[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn domain_and_length_errors() {
        assert!(matches!(
            LossKind::Softmax.value(&[-1.0, 0.0], &[0.0, 0.0]),
            Err(LossError::DomainError(_))
        ));
        assert!(matches!(
            LossKind::PointwiseLogistic.value(&[1.5], &[0.0]),
            Err(LossError::DomainError(_))
        ));
        assert!(matches!(
            LossKind::PointwiseLogistic.grad(&[-0.5], &[0.0]),
            Err(LossError::DomainError(_))
        ));
        assert!(matches!(
            LossKind::Mse.value(&[1.0, 2.0], &[1.0]),
            Err(LossError::LengthMismatch { labels: 2, scores: 1 })
        ));
        assert!(matches!(LossKind::RankNet.grad(&[], &[]), Err(LossError::LengthMismatch { .. })));
        // MSE and RankNet accept any real labels.
        assert!(LossKind::Mse.value(&[-3.0], &[0.0]).is_ok());
    }

    #[test]
    fn stable_at_extreme_scores() {
        let v = LossKind::RankNet.value(&[1.0, 0.0], &[-800.0, 800.0]).unwrap();
        assert!((v - 1600.0).abs() < 1e-9);
        let v = LossKind::Softmax.value(&[1.0, 0.0], &[1e4, -1e4]).unwrap();
        assert!(v.is_finite() && v >= 0.0);
        let v = LossKind::PointwiseLogistic.value(&[0.0], &[1000.0]).unwrap();
        assert!((v - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn value_and_grad_agree_with_separate_calls() {
        let y = [3.0, 0.0, 1.0, 2.0];
        let s = [0.4, -0.3, 1.7, 0.0];
        for kind in ALL_LOSSES {
            let y: Vec<f64> = if kind == LossKind::PointwiseLogistic {
                y.iter().map(|v| v / 3.0).collect()
            } else {
                y.to_vec()
            };
            let (v, g) = kind.value_and_grad(&y, &s).unwrap();
            assert!((v - kind.value(&y, &s).unwrap()).abs() < 1e-12);
            let g2 = kind.grad(&y, &s).unwrap();
            for (a, b) in g.iter().zip(&g2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in ALL_LOSSES {
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
        assert!("lambda".parse::<LossKind>().is_err());
    }
}
