//! Gauss–Hermite quadrature against the standard normal density.
//!
//! Nodes and weights come from the Golub–Welsch eigendecomposition of the
//! Hermite Jacobi matrix, rescaled so that Σ w_q f(x_q) ≈ ∫ f(x) φ(x) dx.

use nalgebra::DMatrix;

/// Quadrature rule for expectations under N(0, 1).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Build a rule with `q` points (q ≥ 1). Weights sum to 1.
    pub fn new(q: usize) -> Self {
        assert!(q >= 1, "quadrature needs at least one point");
        if q == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![1.0],
            };
        }
        // Jacobi matrix for physicists' Hermite polynomials: zero diagonal,
        // off-diagonal b_k = sqrt(k/2).
        let mut jacobi = DMatrix::zeros(q, q);
        for k in 1..q {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = nalgebra::SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..q)
            .map(|i| {
                let t = eig.eigenvalues[i];
                let v0 = eig.eigenvectors[(0, i)];
                (t, v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // Probabilists' change of variable x = √2 t; weights already sum to 1.
        Self {
            nodes: pairs.iter().map(|(t, _)| t * std::f64::consts::SQRT_2).collect(),
            weights: pairs.iter().map(|(_, w)| *w).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_one() {
        for q in [1, 2, 5, 21, 41] {
            let gh = GaussHermite::new(q);
            let total: f64 = gh.weights.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn normal_moments_are_exact() {
        let gh = GaussHermite::new(21);
        let m2: f64 = gh
            .nodes
            .iter()
            .zip(&gh.weights)
            .map(|(x, w)| w * x * x)
            .sum();
        let m4: f64 = gh
            .nodes
            .iter()
            .zip(&gh.weights)
            .map(|(x, w)| w * x.powi(4))
            .sum();
        assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(m4, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn five_point_nodes_match_reference() {
        // Probabilists' 5-point rule: 0, ±√(5−√10), ±√(5+√10).
        let gh = GaussHermite::new(5);
        let inner = (5.0 - 10.0_f64.sqrt()).sqrt();
        let outer = (5.0 + 10.0_f64.sqrt()).sqrt();
        assert_abs_diff_eq!(gh.nodes[2], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(gh.nodes[3], inner, epsilon = 1e-10);
        assert_abs_diff_eq!(gh.nodes[4], outer, epsilon = 1e-10);
    }
}
