//! Symmetric tridiagonal eigenpairs by Sturm-sequence bisection followed by
//! inverse iteration.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidArgument(format!(
                "tridiagonal needs n diagonal and n-1 off-diagonal entries, got {} and {}",
                diag.len(),
                off.len()
            )));
        }
        if diag.iter().chain(&off).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("tridiagonal entries must be finite".into()));
        }
        Ok(SymTridiagonal { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * v[i];
            if i > 0 {
                s += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * v[i + 1];
            }
            out[i] = s;
        }
        out
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    fn norm_bound(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
    }

    /// Number of eigenvalues strictly below `lambda`.
    pub fn count_below(&self, lambda: f64) -> usize {
        let pivmin = f64::MIN_POSITIVE.sqrt() * self.norm_bound();
        let mut count = 0;
        let mut q = self.diag[0] - lambda;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            q = self.diag[i] - lambda - self.off[i - 1] * self.off[i - 1] / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `index`-th smallest eigenvalue (0-based).
    pub fn eigenvalue(&self, index: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let pad = f64::EPSILON * self.norm_bound() * 4.0 + f64::MIN_POSITIVE;
        lo -= pad;
        hi += pad;
        for _ in 0..256 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Lowest `k` eigenpairs, ascending, with unit eigenvectors.
    pub fn lowest(&self, k: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("requested {k} eigenpairs of a {n}x{n} matrix")));
        }
        let norm = self.norm_bound();
        let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
        for index in 0..k {
            let lambda = self.eigenvalue(index);
            let mut v = self.inverse_iteration(lambda, norm)?;
            // Re-orthogonalize against clustered predecessors.
            let mut touched = false;
            for (mu, u) in &pairs {
                if (lambda - mu).abs() <= 1e-3 * norm {
                    let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
                    touched = true;
                }
            }
            if touched {
                normalize_unit(&mut v)?;
            }
            let tv = self.mul(&v);
            let rayleigh: f64 = v.iter().zip(&tv).map(|(a, b)| a * b).sum();
            pairs.push((rayleigh, v));
        }
        Ok(pairs)
    }

    fn inverse_iteration(&self, lambda: f64, norm: f64) -> Result<Vec<f64>> {
        let n = self.len();
        let lu = ShiftedLu::factor(self, lambda, norm);
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
        normalize_unit(&mut v)?;
        for _ in 0..5 {
            v = lu.solve(&v);
            normalize_unit(&mut v)?;
        }
        Ok(v)
    }
}

fn normalize_unit(v: &mut [f64]) -> Result<()> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::NotConverged("inverse iteration"));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

/// LU factorization of `T - λI` with partial pivoting (the banded layout
/// of LAPACK's `gttrf`).
struct ShiftedLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn factor(t: &SymTridiagonal, lambda: f64, norm: f64) -> Self {
        let n = t.len();
        let tiny = f64::EPSILON * norm;
        let mut d: Vec<f64> = t.diag.iter().map(|v| v - lambda).collect();
        let mut dl = t.off.clone();
        let mut du = t.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i].abs() < tiny {
                    d[i] = tiny;
                }
                let l = dl[i] / d[i];
                dl[i] = l;
                d[i + 1] -= l * du[i];
            } else {
                let l = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = l;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - l * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -l;
                }
                swapped[i] = true;
            }
        }
        if d[n - 1].abs() < tiny {
            d[n - 1] = tiny;
        }
        ShiftedLu { dl, d, du, du2, swapped }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let tmp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = tmp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    // Dirichlet Laplacian: eigenvalues 2 - 2cos(kπ/(n+1)).
    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn laplacian_spectrum() {
        let n = 50;
        let t = laplacian(n);
        let pairs = t.lowest(6).unwrap();
        for (k, (lambda, v)) in pairs.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * PI / (n + 1) as f64).cos();
            assert!((lambda - exact).abs() < 1e-13, "k = {k}");
            let tv = t.mul(v);
            let r: f64 = tv.iter().zip(v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
            assert!(r < 1e-13);
        }
        for i in 0..pairs.len() {
            for j in 0..pairs.len() {
                let d: f64 = pairs[i].1.iter().zip(&pairs[j].1).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sturm_count_brackets_eigenvalues() {
        let t = SymTridiagonal::new(vec![1.0, 3.0, -2.0, 0.5], vec![0.4, -1.1, 0.3]).unwrap();
        let evs: Vec<f64> = (0..4).map(|i| t.eigenvalue(i)).collect();
        for w in evs.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert_eq!(t.count_below(evs[0] - 1e-9), 0);
        assert_eq!(t.count_below(evs[3] + 1e-9), 4);
        // trace is preserved
        assert!((evs.iter().sum::<f64>() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn handles_pivoting_shifts() {
        // zero diagonal forces row swaps in the shifted factorization
        let t = SymTridiagonal::new(vec![0.0; 7], vec![1.0; 6]).unwrap();
        let pairs = t.lowest(7).unwrap();
        for (k, (lambda, v)) in pairs.iter().enumerate() {
            let exact = 2.0 * ((7 - k) as f64 * PI / 8.0).cos();
            assert!((lambda - exact).abs() < 1e-13);
            let tv = t.mul(v);
            assert!(tv.iter().zip(v).all(|(a, b)| (a - lambda * b).abs() < 1e-12));
        }
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(SymTridiagonal::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(laplacian(5).lowest(0).is_err());
        assert!(laplacian(5).lowest(6).is_err());
    }
}
