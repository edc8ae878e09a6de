use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derive_seed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestOptions {
    pub trees: usize,
    /// Nodes with fewer samples become leaves.
    pub min_split: usize,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions { trees: 10, min_split: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    /// `x[feature] <= threshold` goes left.
    Threshold { feature: usize, threshold: f64, left: usize, right: usize },
    /// `x[feature] == value` goes left.
    Equals { feature: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Threshold { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right }
                }
                Node::Equals { feature, value, left, right } => i = if x[feature] == value { left } else { right },
            }
        }
    }
}

/// Random-forest regression surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    categorical: Vec<bool>,
}

struct Split {
    feature: usize,
    value: f64,
    equals: bool,
    sse: f64,
}

struct Builder<'a, R> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    categorical: &'a [bool],
    min_split: usize,
    mtry: usize,
    rng: R,
    nodes: Vec<Node>,
}

fn sse(sum: f64, sum_sq: f64, n: usize) -> f64 {
    (sum_sq - sum * sum / n as f64).max(0.0)
}

impl<R: Rng> Builder<'_, R> {
    fn best_split_on(&self, rows: &[usize], feature: usize) -> Option<Split> {
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let total_sq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let n = rows.len();
        let mut best: Option<Split> = None;
        let mut consider = |split: Split| {
            if best.as_ref().is_none_or(|b| split.sse < b.sse) {
                best = Some(split);
            }
        };
        let mut sorted: Vec<usize> = rows.to_vec();
        sorted.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        if self.categorical[feature] {
            let mut start = 0;
            while start < n {
                let v = self.x[sorted[start]][feature];
                let end = start + sorted[start..].iter().take_while(|&&r| self.x[r][feature] == v).count();
                if end - start < n {
                    let s: f64 = sorted[start..end].iter().map(|&r| self.y[r]).sum();
                    let sq: f64 = sorted[start..end].iter().map(|&r| self.y[r] * self.y[r]).sum();
                    let k = end - start;
                    consider(Split {
                        feature,
                        value: v,
                        equals: true,
                        sse: sse(s, sq, k) + sse(total - s, total_sq - sq, n - k),
                    });
                }
                start = end;
            }
        } else {
            let (mut s, mut sq) = (0.0, 0.0);
            for i in 0..n - 1 {
                let y = self.y[sorted[i]];
                s += y;
                sq += y * y;
                let (a, b) = (self.x[sorted[i]][feature], self.x[sorted[i + 1]][feature]);
                if a < b {
                    let k = i + 1;
                    consider(Split {
                        feature,
                        value: a + (b - a) / 2.0,
                        equals: false,
                        sse: sse(s, sq, k) + sse(total - s, total_sq - sq, n - k),
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        let first = self.y[rows[0]];
        if rows.len() < self.min_split || rows.iter().all(|&r| self.y[r] == first) {
            return id;
        }
        let parent_sse = {
            let s: f64 = rows.iter().map(|&r| self.y[r]).sum();
            let sq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
            sse(s, sq, rows.len())
        };
        let mut features: Vec<usize> = (0..self.categorical.len()).collect();
        features.shuffle(&mut self.rng);
        // Like most CART implementations, keep looking past `mtry` features
        // until one of them yields a useful split.
        let mut best: Option<Split> = None;
        for (checked, &f) in features.iter().enumerate() {
            if checked >= self.mtry && best.is_some() {
                break;
            }
            if let Some(split) = self.best_split_on(&rows, f) {
                if split.sse < parent_sse && best.as_ref().is_none_or(|b| split.sse < b.sse) {
                    best = Some(split);
                }
            }
        }
        let Some(split) = best else {
            return id;
        };
        let goes_left = |r: &usize| {
            let v = self.x[*r][split.feature];
            if split.equals {
                v == split.value
            } else {
                v <= split.value
            }
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(goes_left);
        let left = self.build(l);
        let right = self.build(r);
        self.nodes[id] = if split.equals {
            Node::Equals { feature: split.feature, value: split.value, left, right }
        } else {
            Node::Threshold { feature: split.feature, threshold: split.value, left, right }
        };
        id
    }
}

impl Forest {
    /// Fits `opts.trees` trees, each on a bootstrap resample of the rows.
    /// Split candidates at every node are a random subset of
    /// `ceil(sqrt(features))` features; categorical features split by
    /// equality with one category.
    pub fn fit(x: &[Vec<f64>], y: &[f64], categorical: &[bool], opts: ForestOptions, seed: u64) -> Result<Forest> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidArgument("forest needs matching, non-empty samples".into()));
        }
        if x.iter().any(|r| r.len() != categorical.len()) {
            return Err(Error::Arity {
                expected: categorical.len(),
                got: x.iter().map(Vec::len).find(|&l| l != categorical.len()).unwrap_or(0),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("forest targets must be finite".into()));
        }
        let mtry = ((categorical.len() as f64).sqrt().ceil() as usize).max(1);
        let trees = (0..opts.trees.max(1))
            .map(|t| {
                let mut rng = rng(derive_seed(seed, &[b"tree", &(t as u64).to_le_bytes()]));
                let rows: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
                let mut b = Builder {
                    x,
                    y,
                    categorical,
                    min_split: opts.min_split,
                    mtry,
                    rng,
                    nodes: Vec::new(),
                };
                b.build(rows);
                Tree { nodes: b.nodes }
            })
            .collect();
        Ok(Forest {
            trees,
            categorical: categorical.to_vec(),
        })
    }

    pub fn dims(&self) -> usize {
        self.categorical.len()
    }

    /// Mean of the per-tree predictions and their population variance.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.categorical.len() {
            return Err(Error::Arity {
                expected: self.categorical.len(),
                got: x.len(),
            });
        }
        let preds: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        let n = preds.len() as f64;
        let mean = preds.iter().sum::<f64>() / n;
        let var = preds.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
        Ok((mean, var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_targets() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, (i % 3) as f64]).collect();
        let y = vec![7.5; 20];
        let f = Forest::fit(&x, &y, &[false, true], ForestOptions::default(), 1).unwrap();
        for probe in [[0.0, 0.0], [0.33, 2.0], [1.0, 1.0]] {
            assert_eq!(f.predict(&probe).unwrap(), (7.5, 0.0));
        }
    }

    #[test]
    fn single_observation() {
        let f = Forest::fit(&[vec![0.4]], &[3.0], &[false], ForestOptions::default(), 9).unwrap();
        assert_eq!(f.predict(&[0.9]).unwrap(), (3.0, 0.0));
    }

    #[test]
    fn learns_a_step_and_categories() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0, (i % 2) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] < 0.5 { 1.0 } else { 5.0 } + 10.0 * r[1]).collect();
        let f = Forest::fit(&x, &y, &[false, true], ForestOptions::default(), 3).unwrap();
        let (lo, _) = f.predict(&[0.1, 0.0]).unwrap();
        let (hi, _) = f.predict(&[0.9, 1.0]).unwrap();
        assert!(lo < 3.0 && hi > 12.0, "{lo} {hi}");
    }

    #[test]
    fn deterministic_and_pure() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 30) as f64 / 30.0, (i % 4) as f64 / 4.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] - 0.3).powi(2) + r[1]).collect();
        let a = Forest::fit(&x, &y, &[false, false], ForestOptions::default(), 5).unwrap();
        let b = Forest::fit(&x, &y, &[false, false], ForestOptions::default(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict(&[0.2, 0.5]).unwrap(), a.predict(&[0.2, 0.5]).unwrap());
        assert!(a.predict(&[0.2]).is_err());
    }

    #[test]
    fn errors() {
        assert!(Forest::fit(&[], &[], &[false], ForestOptions::default(), 0).is_err());
        assert!(Forest::fit(&[vec![1.0]], &[1.0, 2.0], &[false], ForestOptions::default(), 0).is_err());
        assert!(Forest::fit(&[vec![1.0]], &[f64::NAN], &[false], ForestOptions::default(), 0).is_err());
    }

    proptest! {
        #[test]
        fn mean_within_training_range(xs in proptest::collection::vec(-3.0f64..3.0, 50), seed in any::<u64>(), probes in proptest::collection::vec(-5.0f64..5.0, 20)) {
            let x: Vec<Vec<f64>> = xs.iter().map(|v| vec![*v]).collect();
            let y: Vec<f64> = xs.iter().map(|v| v * v - 2.0 * v).collect();
            let f = Forest::fit(&x, &y, &[false], ForestOptions::default(), seed).unwrap();
            let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for p in probes {
                let (m, v) = f.predict(&[p]).unwrap();
                prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
                prop_assert!(v >= 0.0);
            }
        }
    }
}
