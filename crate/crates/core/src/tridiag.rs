//! Dense-free linear algebra for real symmetric tridiagonal matrices: Sturm counts,
//! bisection, implicit QL eigenvalues and inverse iteration.

use crate::model::TridiagonalHamiltonian;

/// Borrowed view with squared off-diagonals cached for Sturm sequences.
pub struct SymTridiag<'a> {
    pub diag: &'a [f64],
    pub off: &'a [f64],
    off_sq: Vec<f64>,
    pivmin: f64,
    norm: f64,
}

impl<'a> SymTridiag<'a> {
    pub fn new(diag: &'a [f64], off: &'a [f64]) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        let off_sq: Vec<f64> = off.iter().map(|e| e * e).collect();
        let max_sq = off_sq.iter().copied().fold(1.0, f64::max);
        let n = diag.len();
        let norm = (0..n)
            .map(|i| {
                let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
                let r = if i + 1 < n { off[i].abs() } else { 0.0 };
                diag[i].abs() + l + r
            })
            .fold(0.0, f64::max);
        Self {
            diag,
            off,
            off_sq,
            pivmin: f64::MIN_POSITIVE * max_sq,
            norm,
        }
    }

    pub fn from_hamiltonian(h: &'a TridiagonalHamiltonian) -> Self {
        Self::new(&h.diagonal, &h.off_diagonal)
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Gershgorin norm, an upper bound on the spectral radius.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin_interval(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let l = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let r = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - l - r);
            hi = hi.max(self.diag[i] + l + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < self.pivmin {
            q = -self.pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            q = self.diag[i] - x - self.off_sq[i - 1] / q;
            if q.abs() < self.pivmin {
                q = -self.pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Absolute accuracy achievable for any eigenvalue.
    pub fn eigen_tolerance(&self) -> f64 {
        4.0 * f64::EPSILON * self.norm.max(f64::MIN_POSITIVE)
    }

    /// The `k`-th eigenvalue (ascending, 0-based) by bisection inside `[lo, hi]`.
    /// The bracket is widened automatically if it does not contain the eigenvalue.
    pub fn eigenvalue_in(&self, k: usize, mut lo: f64, mut hi: f64) -> f64 {
        let (glo, ghi) = self.gershgorin_interval();
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            lo = glo;
            hi = ghi;
        }
        // widen until count(lo) <= k < count(hi)
        let mut width = (hi - lo).max(self.eigen_tolerance());
        while self.count_below(lo) > k {
            lo = (lo - width).max(glo - 1.0);
            width *= 2.0;
            if lo <= glo - 1.0 {
                break;
            }
        }
        width = (hi - lo).max(self.eigen_tolerance());
        while self.count_below(hi) <= k {
            hi = (hi + width).min(ghi + 1.0);
            width *= 2.0;
            if hi >= ghi + 1.0 {
                break;
            }
        }
        let tol = self.eigen_tolerance();
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (lo, hi) = self.gershgorin_interval();
        self.eigenvalue_in(k, lo - 1.0, hi + 1.0)
    }
}

/// All eigenvalues in ascending order by implicit QL with Wilkinson shifts.
/// Returns `None` if an eigenvalue fails to converge within 60 sweeps.
pub fn eigenvalues(diag: &[f64], off: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.total_cmp(b));
    Some(d)
}

/// LU factorization of `T - shift I` with partial pivoting.
struct ShiftedLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn new(t: &SymTridiag, shift: f64) -> Self {
        let n = t.dim();
        let mut d: Vec<f64> = t.diag.iter().map(|x| x - shift).collect();
        let mut dl = t.off.to_vec();
        let mut du = t.off.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let tiny = f64::EPSILON * t.norm().max(f64::MIN_POSITIVE);
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
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
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nrm > 0.0 {
        v.iter_mut().for_each(|x| *x /= nrm);
    }
    nrm
}

fn orthogonalize_against(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
    }
}

/// Deterministic, well-spread starting vector.
fn start_vector(n: usize, seed: usize) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (seed as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

/// Unit eigenvector for eigenvalue estimate `lambda`, orthogonal to `deflate`.
pub fn inverse_iteration(t: &SymTridiag, lambda: f64, deflate: &[Vec<f64>], seed: usize) -> Vec<f64> {
    let lu = ShiftedLu::new(t, lambda);
    let mut v = start_vector(t.dim(), seed);
    orthogonalize_against(&mut v, deflate);
    normalize(&mut v);
    for _ in 0..3 {
        lu.solve(&mut v);
        orthogonalize_against(&mut v, deflate);
        normalize(&mut v);
    }
    v
}

/// Eigenvectors for ascending `values`, reorthogonalizing inside clusters of close
/// eigenvalues (relative separation below `1e-7` of the matrix norm).
pub fn eigenvectors(t: &SymTridiag, values: &[f64]) -> Vec<Vec<f64>> {
    let cluster_tol = 1e-7 * t.norm().max(f64::MIN_POSITIVE);
    let pert = 10.0 * f64::EPSILON * t.norm().max(f64::MIN_POSITIVE);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    let mut cluster_start = 0;
    let mut prev_shift = f64::NEG_INFINITY;
    for (j, &lam) in values.iter().enumerate() {
        if j > 0 && lam - values[j - 1] > cluster_tol {
            cluster_start = j;
        }
        let mut shift = lam;
        if j > cluster_start && shift - prev_shift < pert {
            shift = prev_shift + pert;
        }
        prev_shift = shift;
        let v = inverse_iteration(t, shift, &out[cluster_start..j], j);
        out.push(v);
    }
    out
}

/// `<v| diag(w) |v>` for a real unit vector.
pub fn diagonal_expectation(v: &[f64], w: impl Fn(usize) -> f64) -> f64 {
    v.iter().enumerate().map(|(i, x)| x * x * w(i)).sum()
}
