//! Empirical measures and exact Wasserstein distances between them.

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, dist_sq};

/// Largest support size accepted by [`wasserstein_assignment`] by default.
pub const DEFAULT_ASSIGNMENT_CAP: usize = 512;

/// Largest support size accepted by the permutation oracle.
pub const BRUTE_FORCE_CAP: usize = 9;

/// Uniformly weighted atoms in R^d, stored point-major in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("dimension must be positive"));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::arg(format!("expected a nonzero multiple of {dim} coordinates, got {}", points.len())));
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite coordinate at atom {}", pos / dim)));
        }
        Ok(Self { dim, points })
    }

    /// One-dimensional measure from scalar atoms.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    /// `n` copies of one point.
    pub fn repeated(point: &[f64], n: usize) -> Result<Self> {
        Self::new(point.len(), point.repeat(n))
    }

    pub(crate) fn from_raw(dim: usize, points: Vec<f64>) -> Self {
        debug_assert!(dim > 0 && !points.is_empty() && points.len().is_multiple_of(dim));
        Self { dim, points }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.points
    }

    /// Concatenation of two measures of the same dimension.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Dimension { expected: self.dim, got: other.dim });
        }
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        Ok(Self { dim: self.dim, points })
    }

    /// Reorders atoms by `order[i]` = index of the atom placed at position i.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut points = Vec::with_capacity(self.points.len());
        for &j in order {
            points.extend_from_slice(self.point(j));
        }
        Self { dim: self.dim, points }
    }

    /// Componentwise sample mean.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim).map(|k| compensated_sum(self.iter().map(|x| x[k])) / self.len() as f64).collect()
    }

    /// `(1/N) Σ |x_i|^p`.
    pub fn moment(&self, p: f64) -> f64 {
        moment(self, p)
    }
}

/// `(1/N) Σ |x_i|^p` with the Euclidean norm.
pub fn moment(mu: &EmpiricalMeasure, p: f64) -> f64 {
    let total = compensated_sum(mu.iter().map(|x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if p == 2.0 {
            r2
        } else {
            r2.sqrt().powf(p)
        }
    }));
    let m = total / mu.len() as f64;
    assert!(m.is_finite(), "moment of order {p} is not finite");
    m
}

/// A permutation coupling between two equal-size empirical measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `pairing[i]` is the atom of the target matched with atom i of the source.
    pub pairing: Vec<usize>,
    /// `((1/N) Σ |x_i - y_pairing(i)|^p)^(1/p)`.
    pub cost: f64,
    pub p: f64,
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::arg(format!("order p must be a finite real >= 1, got {p}")));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension { expected: mu.dim(), got: nu.dim() });
    }
    if mu.len() != nu.len() {
        return Err(Error::Unsupported(format!(
            "exact transport between measures of different sizes ({} vs {})",
            mu.len(),
            nu.len()
        )));
    }
    Ok(())
}

#[inline]
fn ground_cost(x: &[f64], y: &[f64], p: f64) -> f64 {
    let d2 = dist_sq(x, y);
    if p == 2.0 {
        d2
    } else if p == 1.0 {
        d2.sqrt()
    } else {
        d2.sqrt().powf(p)
    }
}

/// Cost of the plan `i -> pairing[i]` raised to `1/p`.
pub fn plan_cost(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, pairing: &[usize], p: f64) -> f64 {
    let total = compensated_sum(pairing.iter().enumerate().map(|(i, &j)| ground_cost(mu.point(i), nu.point(j), p)));
    (total / mu.len() as f64).powf(1.0 / p)
}

/// Exact `W_p` between equal-size one-dimensional measures by pairing order
/// statistics.
pub fn wasserstein_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_pair(mu, nu, p)?;
    if mu.dim() != 1 {
        return Err(Error::Unsupported(format!("order-statistic transport needs d = 1, got d = {}", mu.dim())));
    }
    let mut xs = mu.as_flat().to_vec();
    let mut ys = nu.as_flat().to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let total = compensated_sum(xs.iter().zip(&ys).map(|(x, y)| {
        let d = (x - y).abs();
        if p == 1.0 {
            d
        } else {
            d.powf(p)
        }
    }));
    Ok((total / xs.len() as f64).powf(1.0 / p))
}

/// Exact `W_p` via an optimal assignment, for supports of at most
/// [`DEFAULT_ASSIGNMENT_CAP`] atoms.
pub fn wasserstein_assignment(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<TransportPlan> {
    wasserstein_assignment_capped(mu, nu, p, DEFAULT_ASSIGNMENT_CAP)
}

pub fn wasserstein_assignment_capped(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    p: f64,
    cap: usize,
) -> Result<TransportPlan> {
    check_pair(mu, nu, p)?;
    let n = mu.len();
    if n > cap {
        return Err(Error::Unsupported(format!(
            "assignment over {n} atoms exceeds the cap of {cap}; use wasserstein_1d for d = 1 \
             or the identity-coupling bound for an upper estimate"
        )));
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = ground_cost(mu.point(i), nu.point(j), p);
        }
    }
    let pairing = min_cost_assignment(&cost, n);
    let cost = plan_cost(mu, nu, &pairing, p);
    Ok(TransportPlan { pairing, cost, p })
}

/// Minimum-cost perfect matching on a dense `n x n` cost matrix (row-major),
/// by the shortest-augmenting-path form of the Hungarian method. Returns
/// `assignment[row] = column`.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return Vec::new();
    }
    // 1-based indexing with column 0 as the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[col0] = true;
            let r = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut next = 0usize;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r - 1) * n + (col - 1)] - u[r] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    next = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = next;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let prev = way[col0];
            row_of_col[col0] = row_of_col[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for col in 1..=n {
        assignment[row_of_col[col] - 1] = col - 1;
    }
    assignment
}

/// Exhaustive minimum over all N! permutation couplings. Test oracle only.
pub fn wasserstein_brute_force(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_pair(mu, nu, p)?;
    let n = mu.len();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::Unsupported(format!("permutation enumeration over {n} atoms exceeds {BRUTE_FORCE_CAP}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm, iterative form.
    let mut counters = vec![0usize; n];
    let mut eval = |perm: &[usize]| {
        let s: f64 = perm.iter().enumerate().map(|(i, &j)| ground_cost(mu.point(i), nu.point(j), p)).sum();
        if s < best {
            best = s;
        }
    };
    eval(&perm);
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            eval(&perm);
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    Ok((best / n as f64).powf(1.0 / p))
}

/// `(1/N) Σ |x_i - y_i|^2`: the squared `W_2` upper bound from the identity
/// coupling of paired samples.
pub fn identity_coupling_cost_sq(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_pair(mu, nu, 2.0)?;
    let total = compensated_sum(mu.iter().zip(nu.iter()).map(|(x, y)| dist_sq(x, y)));
    Ok(total / mu.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(v: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(v).unwrap()
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let mu = m1(&[0.3, -1.2, 4.0, 2.2]);
        assert_eq!(wasserstein_1d(&mu, &mu, 1.0).unwrap(), 0.0);
        assert_eq!(wasserstein_assignment(&mu, &mu, 2.0).unwrap().cost, 0.0);
    }

    #[test]
    fn point_mass_translation() {
        let x0 = -2.5;
        let mu = m1(&[0.0; 5]);
        let nu = m1(&[x0; 5]);
        for p in [1.0, 1.5, 2.0, 3.0] {
            let w = wasserstein_1d(&mu, &nu, p).unwrap();
            assert!((w - x0.abs()).abs() < 1e-14, "p = {p}: {w}");
        }
    }

    #[test]
    fn two_point_hand_example() {
        // pairings: (0->0.5, 1->3) costs 1.25, (0->3, 1->0.5) costs 1.75
        let w = wasserstein_1d(&m1(&[0.0, 1.0]), &m1(&[0.5, 3.0]), 1.0).unwrap();
        assert!((w - 1.25).abs() < 1e-15);
        let bf = wasserstein_brute_force(&m1(&[0.0, 1.0]), &m1(&[3.0, 0.5]), 1.0).unwrap();
        assert!((bf - 1.25).abs() < 1e-15);
    }

    #[test]
    fn moment_hand_sums() {
        assert_eq!(moment(&m1(&[0.0, 0.0, 0.0]), 2.0), 0.0);
        let x0 = EmpiricalMeasure::new(2, vec![3.0, 4.0]).unwrap();
        assert!((moment(&x0, 2.0) - 25.0).abs() < 1e-14);
        assert!((moment(&m1(&[1.0, -1.0, 3.0]), 2.0) - 11.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = m1(&[1.0, 2.0]);
        let b = m1(&[1.0, 2.0, 3.0]);
        assert!(matches!(wasserstein_1d(&a, &b, 1.0), Err(Error::Unsupported(_))));
        let planar = EmpiricalMeasure::new(2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(wasserstein_1d(&planar, &planar, 1.0), Err(Error::Unsupported(_))));
        assert!(wasserstein_1d(&a, &a, 0.5).is_err());
        assert!(EmpiricalMeasure::new(1, vec![f64::NAN]).is_err());
        assert!(EmpiricalMeasure::new(1, vec![]).is_err());
        assert!(EmpiricalMeasure::new(2, vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn assignment_cap_is_enforced() {
        let mu = m1(&[0.0; 20]);
        let err = wasserstein_assignment_capped(&mu, &mu, 1.0, 10).unwrap_err();
        assert!(err.to_string().contains("wasserstein_1d"));
    }

    #[test]
    fn assignment_recovers_a_permutation() {
        let mu = EmpiricalMeasure::new(2, vec![0.0, 0.0, 1.0, 2.0, -3.0, 0.5, 4.0, 4.0]).unwrap();
        let nu = mu.permuted(&[2, 0, 3, 1]);
        let plan = wasserstein_assignment(&mu, &nu, 2.0).unwrap();
        assert_eq!(plan.cost, 0.0);
        assert_eq!(plan.pairing, vec![1, 3, 0, 2]);
    }

    #[test]
    fn hungarian_small_matrix() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = min_cost_assignment(&cost, 3);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }
}
