use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Positive-semidefinite kernel on feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// exp(-||x - y||^2 / (2 h^2)); k(x, x) = 1.
    Rbf { bandwidth: f64 },
    /// Plain inner product.
    Linear,
}

impl Kernel {
    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(Kernel::Rbf { bandwidth })
        } else {
            Err(Error::Mmd(format!("bandwidth must be positive and finite, got {bandwidth}")))
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            Kernel::Rbf { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

/// How the kernel for a pairwise comparison is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelChoice {
    /// RBF with the median-heuristic bandwidth computed on the pooled pair.
    RbfMedian,
    Rbf { bandwidth: f64 },
    Linear,
}

impl KernelChoice {
    pub fn resolve(&self, pooled: &[Vec<f64>]) -> Result<Kernel> {
        match self {
            KernelChoice::RbfMedian => Kernel::rbf(median_bandwidth(pooled)?),
            KernelChoice::Rbf { bandwidth } => Kernel::rbf(*bandwidth),
            KernelChoice::Linear => Ok(Kernel::Linear),
        }
    }
}

/// Median of pairwise Euclidean distances over the pooled sample; falls back
/// to the smallest positive distance when the median is zero and refuses a
/// pool of identical points.
pub fn median_bandwidth(points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Mmd("median bandwidth needs at least 2 points".into()));
    }
    let mut distances = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d2: f64 =
                points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            distances.push(d2.sqrt());
        }
    }
    let med = crate::util::median(&distances);
    if med > 0.0 {
        return Ok(med);
    }
    let smallest_positive = distances
        .iter()
        .copied()
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if smallest_positive.is_finite() {
        Ok(smallest_positive)
    } else {
        Err(Error::Mmd("all points identical; no usable bandwidth".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_single_pair() {
        assert_eq!(median_bandwidth(&[vec![0.0], vec![2.0]]).unwrap(), 2.0);
    }

    #[test]
    fn median_of_three_points_by_enumeration() {
        // distances {1, 3, 2} -> median 2
        assert_eq!(median_bandwidth(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap(), 2.0);
    }

    #[test]
    fn duplicate_points_use_positive_distances() {
        // distances {0, 5, 5} -> median 5
        assert_eq!(median_bandwidth(&[vec![0.0], vec![0.0], vec![5.0]]).unwrap(), 5.0);
        // distances {0, 0, 4, 4, 4, 4}: median 2 -> already positive
        let d =
            median_bandwidth(&[vec![0.0], vec![0.0], vec![4.0], vec![4.0]]).unwrap();
        assert_eq!(d, 4.0);
    }

    #[test]
    fn identical_pool_is_refused() {
        let err = median_bandwidth(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap_err();
        assert!(err.to_string().contains("identical"));
    }

    #[test]
    fn rbf_is_one_on_the_diagonal() {
        let k = Kernel::rbf(1.5).unwrap();
        assert_eq!(k.eval(&[0.3, -0.4], &[0.3, -0.4]), 1.0);
        assert!(Kernel::rbf(0.0).is_err());
        assert!(Kernel::rbf(f64::NAN).is_err());
    }
}
