//! `exp(-i R) psi` for a real symmetric tridiagonal `R` by Chebyshev expansion.

use num_complex::Complex64;

use crate::tridiag::SymTridiag;

/// Bessel functions `J_0(x) ..= J_kmax(x)` by Miller's backward recurrence.
pub(crate) fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    if x == 0.0 {
        let mut out = vec![0.0; kmax + 1];
        out[0] = 1.0;
        return out;
    }
    let start = kmax + 30 + (x.abs().sqrt() * 10.0) as usize;
    let start = start + (start % 2);
    let mut out = vec![0.0; kmax + 1];
    let (mut next, mut cur) = (0.0f64, 1e-280f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // cur now holds J_{k-1}
        let idx = k - 1;
        if idx <= kmax {
            out[idx] = cur;
        }
        if idx > 0 && idx % 2 == 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            out.iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    norm += cur;
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Reusable workspace for Chebyshev propagation on dimension `n`.
pub(crate) struct ChebyshevKernel {
    re: [Vec<f64>; 3],
    im: [Vec<f64>; 3],
    acc_re: Vec<f64>,
    acc_im: Vec<f64>,
    dd: Vec<f64>,
    ee: Vec<f64>,
    pub matvecs: u64,
}

impl ChebyshevKernel {
    pub fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        Self {
            re: [z(), z(), z()],
            im: [z(), z(), z()],
            acc_re: z(),
            acc_im: z(),
            dd: z(),
            ee: vec![0.0; n.saturating_sub(1)],
            matvecs: 0,
        }
    }

    /// Replace `psi` by `exp(-i R) psi` where `R = tridiag(off, diag, off)`.
    pub fn apply(&mut self, diag: &[f64], off: &[f64], psi: &mut [Complex64]) {
        let n = diag.len();
        let t = SymTridiag::new(diag, off);
        let (lo, hi) = spectral_bounds(&t);
        let centre = 0.5 * (lo + hi);
        let half = (0.5 * (hi - lo)).max(1e-300);
        for i in 0..n {
            self.dd[i] = (diag[i] - centre) / half;
        }
        for i in 0..n.saturating_sub(1) {
            self.ee[i] = off[i] / half;
        }
        let kmax = (half + 12.0 * half.cbrt() + 30.0) as usize;
        let bessel = bessel_j_sequence(half, kmax);
        let mut terms = bessel.len();
        while terms > 1 && bessel[terms - 1].abs() < 1e-18 && (terms as f64) > half {
            terms -= 1;
        }

        for i in 0..n {
            self.re[0][i] = psi[i].re;
            self.im[0][i] = psi[i].im;
            self.acc_re[i] = bessel[0] * psi[i].re;
            self.acc_im[i] = bessel[0] * psi[i].im;
        }
        let (dd, ee) = (&self.dd, &self.ee);
        // phi_1 = A phi_0
        {
            let [r0, r1, _] = &mut self.re;
            matvec(dd, ee, r0, r1, None);
            let [i0, i1, _] = &mut self.im;
            matvec(dd, ee, i0, i1, None);
        }
        self.matvecs += 1;
        accumulate(1, 2.0 * bessel.get(1).copied().unwrap_or(0.0), &self.re[1], &self.im[1], &mut self.acc_re, &mut self.acc_im);
        let (mut a, mut b, mut c) = (0usize, 1usize, 2usize);
        for k in 2..terms {
            // phi_c = 2 A phi_b - phi_a
            {
                let (src, prev, dst) = split3(&mut self.re, b, a, c);
                matvec(dd, ee, src, dst, Some(prev));
            }
            {
                let (src, prev, dst) = split3(&mut self.im, b, a, c);
                matvec(dd, ee, src, dst, Some(prev));
            }
            self.matvecs += 1;
            accumulate(k, 2.0 * bessel[k], &self.re[c], &self.im[c], &mut self.acc_re, &mut self.acc_im);
            (a, b, c) = (b, c, a);
        }
        let phase = Complex64::from_polar(1.0, -centre);
        for i in 0..n {
            psi[i] = phase * Complex64::new(self.acc_re[i], self.acc_im[i]);
        }
    }
}

fn split3<'a>(v: &'a mut [Vec<f64>; 3], src: usize, prev: usize, dst: usize) -> (&'a [f64], &'a [f64], &'a mut [f64]) {
    let [x, y, z] = v;
    let mut slots: [Option<&'a mut Vec<f64>>; 3] = [Some(x), Some(y), Some(z)];
    let s = slots[src].take().unwrap();
    let p = slots[prev].take().unwrap();
    let d = slots[dst].take().unwrap();
    (s, p, d)
}

/// `y = A x` or, with `prev`, `y = 2 A x - prev`.
#[inline]
fn matvec(d: &[f64], e: &[f64], x: &[f64], y: &mut [f64], prev: Option<&[f64]>) {
    let n = d.len();
    if n == 1 {
        y[0] = d[0] * x[0];
    } else {
        y[0] = d[0] * x[0] + e[0] * x[1];
        for i in 1..n - 1 {
            y[i] = e[i - 1] * x[i - 1] + d[i] * x[i] + e[i] * x[i + 1];
        }
        y[n - 1] = e[n - 2] * x[n - 2] + d[n - 1] * x[n - 1];
    }
    if let Some(p) = prev {
        for (yi, pi) in y.iter_mut().zip(p) {
            *yi = 2.0 * *yi - pi;
        }
    }
}

/// acc += c (-i)^k (re + i im)
#[inline]
fn accumulate(k: usize, c: f64, re: &[f64], im: &[f64], acc_re: &mut [f64], acc_im: &mut [f64]) {
    match k % 4 {
        0 => {
            acc_re.iter_mut().zip(re).for_each(|(a, x)| *a += c * x);
            acc_im.iter_mut().zip(im).for_each(|(a, x)| *a += c * x);
        }
        1 => {
            acc_re.iter_mut().zip(im).for_each(|(a, x)| *a += c * x);
            acc_im.iter_mut().zip(re).for_each(|(a, x)| *a -= c * x);
        }
        2 => {
            acc_re.iter_mut().zip(re).for_each(|(a, x)| *a -= c * x);
            acc_im.iter_mut().zip(im).for_each(|(a, x)| *a -= c * x);
        }
        _ => {
            acc_re.iter_mut().zip(im).for_each(|(a, x)| *a -= c * x);
            acc_im.iter_mut().zip(re).for_each(|(a, x)| *a += c * x);
        }
    }
}

/// Interval enclosing the spectrum, from coarse Sturm bisection of both extremes.
fn spectral_bounds(t: &SymTridiag) -> (f64, f64) {
    let (glo, ghi) = t.gershgorin_interval();
    let n = t.dim();
    let tol = 1e-3 * (ghi - glo).max(1e-300);
    let bisect = |k: usize| {
        let (mut lo, mut hi) = (glo, ghi);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if t.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo, hi)
    };
    let low = bisect(0).0;
    let high = bisect(n - 1).1;
    (low - tol, high + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn bessel_values() {
        // J_0(1), J_1(1), J_5(1), J_0(10) from tables
        let j = bessel_j_sequence(1.0, 6);
        assert!((j[0] - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((j[1] - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((j[5] - 2.497_577_302_112_344e-4).abs() < 1e-16);
        let j = bessel_j_sequence(10.0, 12);
        assert!((j[0] + 0.245_935_764_451_348_3).abs() < 1e-13);
        let j = bessel_j_sequence(800.0, 900);
        let sum: f64 = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_exponential() {
        let n = 9;
        let d: Vec<f64> = (0..n).map(|i| (i as f64 - 3.0).powi(2) * 0.7).collect();
        let e: Vec<f64> = (0..n - 1).map(|i| -0.5 * ((i + 1) as f64).sqrt()).collect();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = d[i];
            if i + 1 < n {
                m[(i, i + 1)] = e[i];
                m[(i + 1, i)] = e[i];
            }
        }
        let eig = m.clone().symmetric_eigen();
        let psi0: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0 / (1.0 + i as f64), 0.3 * i as f64)).collect();
        for scale in [0.01, 1.0, 7.5] {
            let mut psi = psi0.clone();
            let ds: Vec<f64> = d.iter().map(|x| x * scale).collect();
            let es: Vec<f64> = e.iter().map(|x| x * scale).collect();
            ChebyshevKernel::new(n).apply(&ds, &es, &mut psi);
            let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
            let phases = DVector::from_iterator(n, eig.eigenvalues.iter().map(|l| Complex64::from_polar(1.0, -l * scale)));
            let x0 = DVector::from_column_slice(&psi0);
            let want = &v * (phases.component_mul(&(v.adjoint() * x0)));
            for i in 0..n {
                assert!((psi[i] - want[i]).norm() < 1e-12, "scale {scale} i {i}");
            }
        }
    }
}
