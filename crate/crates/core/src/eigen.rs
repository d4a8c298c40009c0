//! Dense real nonsymmetric eigenproblem.
//!
//! Householder reduction to upper Hessenberg form followed by the Francis
//! double-shift QR iteration, after the EISPACK routines `orthes` and
//! `hqr2`. Eigenvectors are optional; without them the QR sweeps touch only
//! the active window, which is roughly twice as fast.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square matrix in row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.n;
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn mat_vec_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| b * *a).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn swap_rows_cols(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                self.data.swap(i * n + j, j * n + i);
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = self.clone();
        t.swap_rows_cols();
        t
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Solve `a x = b` by LU factorization with partial pivoting.
pub fn solve_linear(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n();
    assert_eq!(b.len(), n);
    let mut lu = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| lu[(i, k)].abs().total_cmp(&lu[(j, k)].abs())).unwrap();
        if lu[(p, k)] == 0.0 || !lu[(p, k)].is_finite() {
            return Err(Error::InvalidConfig(format!("singular matrix at column {k}")));
        }
        if p != k {
            for j in 0..n {
                lu.data.swap(p * n + j, k * n + j);
            }
            x.swap(p, k);
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let f = lu[(i, k)] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k + 1..n {
                let v = lu[(k, j)];
                lu[(i, j)] -= f * v;
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| lu[(k, j)] * x[j]).sum();
        x[k] = (x[k] - s) / lu[(k, k)];
    }
    Ok(x)
}

/// Eigenvalues with optional right eigenvectors, sorted by descending real
/// part and then descending imaginary part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    pub eigenvalues: Vec<Complex64>,
    /// `vectors[k]` belongs to `eigenvalues[k]`, unit 2-norm.
    #[serde(skip)]
    pub vectors: Option<Vec<Vec<Complex64>>>,
}

impl EigenSpectrum {
    pub fn new(eigenvalues: Vec<Complex64>, vectors: Option<Vec<Vec<Complex64>>>) -> Self {
        let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (eigenvalues[a], eigenvalues[b]);
            y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im))
        });
        let values = order.iter().map(|&k| eigenvalues[k]).collect();
        let vectors = vectors.map(|v| order.iter().map(|&k| v[k].clone()).collect());
        Self { eigenvalues: values, vectors }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_real(&self) -> f64 {
        self.eigenvalues.first().map_or(f64::NEG_INFINITY, |z| z.re)
    }

    /// Eigenvalue attaining the maximal real part (largest imaginary part on ties).
    pub fn leading(&self) -> Option<Complex64> {
        self.eigenvalues.first().copied()
    }

    /// Largest distance from an eigenvalue's conjugate to the nearest
    /// eigenvalue, relative to the spectral scale. Zero for an exactly
    /// conjugate-closed set.
    pub fn conjugate_pairing_error(&self) -> f64 {
        let scale = self.eigenvalues.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        let mut worst = 0.0f64;
        for z in &self.eigenvalues {
            let c = z.conj();
            let d = self.eigenvalues.iter().map(|w| (w - c).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
        worst / scale
    }
}

/// Maximum QR sweeps spent on one eigenvalue before giving up.
const MAX_SWEEPS: usize = 200;

/// All eigenvalues of `a`.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Complex64>> {
    check_finite(a)?;
    let mut h = a.clone();
    hessenberg(&mut h, None);
    let (d, e) = hqr(&mut h, None)?;
    Ok(d.iter().zip(&e).map(|(&re, &im)| Complex64::new(re, im)).collect())
}

/// Eigenvalues and unit-norm right eigenvectors of `a`.
pub fn eigen_decomposition(a: &DenseMatrix) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
    check_finite(a)?;
    let n = a.n();
    let mut h = a.clone();
    let mut v = DenseMatrix::identity(n);
    hessenberg(&mut h, Some(&mut v));
    let (d, e) = hqr(&mut h, Some(&mut v))?;
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        if e[k] == 0.0 {
            values.push(Complex64::new(d[k], 0.0));
            vectors.push(normalized((0..n).map(|i| Complex64::new(v[(i, k)], 0.0)).collect()));
            k += 1;
        } else {
            // Pair (k, k+1): lambda = d + i e[k], e[k] > 0, vector V[:,k] + i V[:,k+1].
            let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(v[(i, k)], v[(i, k + 1)])).collect();
            values.push(Complex64::new(d[k], e[k]));
            values.push(Complex64::new(d[k + 1], e[k + 1]));
            vectors.push(normalized(x.clone()));
            vectors.push(normalized(x.iter().map(|z| z.conj()).collect()));
            k += 2;
        }
    }
    Ok((values, vectors))
}

pub fn spectrum(a: &DenseMatrix, want_vectors: bool) -> Result<EigenSpectrum> {
    if want_vectors {
        let (vals, vecs) = eigen_decomposition(a)?;
        Ok(EigenSpectrum::new(vals, Some(vecs)))
    } else {
        Ok(EigenSpectrum::new(eigenvalues(a)?, None))
    }
}

fn check_finite(a: &DenseMatrix) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig("matrix has non-finite entries".into()))
    }
}

fn normalized(mut x: Vec<Complex64>) -> Vec<Complex64> {
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for z in &mut x {
            *z /= norm;
        }
    }
    x
}

/// Householder reduction to Hessenberg form, accumulating the orthogonal
/// similarity into `v` when given. Entries below the subdiagonal are zeroed.
fn hessenberg(h: &mut DenseMatrix, v: Option<&mut DenseMatrix>) {
    let n = h.n();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    let mut f = vec![0.0; n];
    // Householder vectors, kept for the accumulation of v.
    let mut saved: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        // H := (I - u u'/hh) H, rows m..=high, columns m..n.
        f[m..n].iter_mut().for_each(|x| *x = 0.0);
        for i in m..=high {
            let oi = ort[i];
            let row = h.row(i);
            for j in m..n {
                f[j] += oi * row[j];
            }
        }
        for i in m..=high {
            let c = ort[i] / hh;
            let row = h.row_mut(i);
            for j in m..n {
                row[j] -= f[j] * c;
            }
        }
        // H := H (I - u u'/hh), all rows, columns m..=high.
        for i in 0..=high {
            let row = h.row_mut(i);
            let mut s = 0.0;
            for j in m..=high {
                s += ort[j] * row[j];
            }
            let s = s / hh;
            for j in m..=high {
                row[j] -= s * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
        let mut u: Vec<f64> = ort[m..=high].iter().map(|x| x * scale).collect();
        u[0] = ort[m];
        saved.push((m, u, h[(m, m - 1)]));
    }

    if let Some(v) = v {
        for (m, u, hm) in saved.into_iter().rev() {
            // v := (I - u u'/(u_m hm)) v, restricted to rows/columns m..=high.
            f[m..=high].iter_mut().for_each(|x| *x = 0.0);
            for (k, &uk) in u.iter().enumerate() {
                let row = v.row(m + k);
                for j in m..=high {
                    f[j] += uk * row[j];
                }
            }
            let denom = u[0];
            for j in m..=high {
                f[j] = (f[j] / denom) / hm;
            }
            for (k, &uk) in u.iter().enumerate() {
                let row = v.row_mut(m + k);
                for j in m..=high {
                    row[j] += f[j] * uk;
                }
            }
        }
    }

    for i in 2..n {
        for j in 0..i - 1 {
            h[(i, j)] = 0.0;
        }
    }
}

#[inline]
fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    let z = Complex64::new(xr, xi) / Complex64::new(yr, yi);
    (z.re, z.im)
}

/// Francis double-shift QR on a Hessenberg matrix. Returns real and
/// imaginary parts of the eigenvalues; complex pairs occupy consecutive
/// slots with the positive imaginary part first. With `v`, the eigenvectors
/// are left in its columns (a complex pair as real part, imaginary part).
#[allow(unused_assignments)]
fn hqr(h: &mut DenseMatrix, mut v: Option<&mut DenseMatrix>) -> Result<(Vec<f64>, Vec<f64>)> {
    let nn = h.n();
    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    if nn == 0 {
        return Ok((d, e));
    }
    let vectors = v.is_some();
    let low = 0usize;
    let eps = f64::EPSILON;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut t, mut w, mut x, mut y);

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0usize;
    while n >= low as isize {
        let nu = n as usize;
        // Single small subdiagonal element.
        let mut l = nu;
        while l > low {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)] == 0.0 || h[(l, l - 1)].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            h[(nu, nu)] += exshift;
            d[nu] = h[(nu, nu)];
            e[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == nu - 1 {
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(nu, nu)] += exshift;
            h[(nu - 1, nu - 1)] += exshift;
            x = h[(nu, nu)];
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != 0.0 {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = 0.0;
                e[nu] = 0.0;
                if let Some(v) = v.as_deref_mut() {
                    x = h[(nu, nu - 1)];
                    s = x.abs() + z.abs();
                    p = x / s;
                    q = z / s;
                    r = (p * p + q * q).sqrt();
                    p /= r;
                    q /= r;
                    for j in nu - 1..nn {
                        z = h[(nu - 1, j)];
                        h[(nu - 1, j)] = q * z + p * h[(nu, j)];
                        h[(nu, j)] = q * h[(nu, j)] - p * z;
                    }
                    for i in 0..=nu {
                        z = h[(i, nu - 1)];
                        h[(i, nu - 1)] = q * z + p * h[(i, nu)];
                        h[(i, nu)] = q * h[(i, nu)] - p * z;
                    }
                    for i in 0..nn {
                        let row = v.row_mut(i);
                        z = row[nu - 1];
                        row[nu - 1] = q * z + p * row[nu];
                        row[nu] = q * row[nu] - p * z;
                    }
                }
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[(nu - 1, nu - 1)];
                w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            }
            // Exceptional shifts.
            if iter == 10 {
                exshift += x;
                for i in low..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            if iter > MAX_SWEEPS {
                return Err(Error::EigenNoConvergence { index: nu });
            }

            // Two consecutive small subdiagonal elements.
            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..=n and columns m..=n.
            let (col_lo, row_hi) = if vectors { (0, nn) } else { (l, nu + 1) };
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s == 0.0 {
                    continue;
                }
                if k != m {
                    h[(k, k - 1)] = -s * x;
                } else if l != m {
                    h[(k, k - 1)] = -h[(k, k - 1)];
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;

                for j in k..row_hi {
                    p = h[(k, j)] + q * h[(k + 1, j)];
                    if notlast {
                        p += r * h[(k + 2, j)];
                        h[(k + 2, j)] -= p * z;
                    }
                    h[(k, j)] -= p * x;
                    h[(k + 1, j)] -= p * y;
                }
                for i in col_lo..=nu.min(k + 3) {
                    let row = h.row_mut(i);
                    p = x * row[k] + y * row[k + 1];
                    if notlast {
                        p += z * row[k + 2];
                        row[k + 2] -= p * r;
                    }
                    row[k] -= p;
                    row[k + 1] -= p * q;
                }
                if let Some(v) = v.as_deref_mut() {
                    for i in 0..nn {
                        let row = v.row_mut(i);
                        p = x * row[k] + y * row[k + 1];
                        if notlast {
                            p += z * row[k + 2];
                            row[k + 2] -= p * r;
                        }
                        row[k] -= p;
                        row[k + 1] -= p * q;
                    }
                }
            }
        }
    }

    let Some(v) = v else {
        return Ok((d, e));
    };
    if norm == 0.0 {
        return Ok((d, e));
    }

    // Back substitution for the eigenvectors of the quasi-triangular form.
    for n in (0..nn).rev() {
        p = d[n];
        q = e[n];
        if q == 0.0 {
            let mut l = n;
            h[(n, n)] = 1.0;
            for i in (0..n).rev() {
                w = h[(i, i)] - p;
                r = 0.0;
                for j in l..=n {
                    r += h[(i, j)] * h[(j, n)];
                }
                if e[i] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        h[(i, n)] = if w != 0.0 { -r / w } else { -r / (eps * norm) };
                    } else {
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        q = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                        t = (x * s - z * r) / q;
                        h[(i, n)] = t;
                        h[(i + 1, n)] = if x.abs() > z.abs() { (-r - w * t) / x } else { (-s - y * t) / z };
                    }
                    t = h[(i, n)].abs();
                    if (eps * t) * t > 1.0 {
                        for j in i..=n {
                            h[(j, n)] /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            let mut l = n - 1;
            if h[(n, n - 1)].abs() > h[(n - 1, n)].abs() {
                h[(n - 1, n - 1)] = q / h[(n, n - 1)];
                h[(n - 1, n)] = -(h[(n, n)] - p) / h[(n, n - 1)];
            } else {
                let (cr, ci) = cdiv(0.0, -h[(n - 1, n)], h[(n - 1, n - 1)] - p, q);
                h[(n - 1, n - 1)] = cr;
                h[(n - 1, n)] = ci;
            }
            h[(n, n - 1)] = 0.0;
            h[(n, n)] = 1.0;
            for i in (0..n.saturating_sub(1)).rev() {
                let (mut ra, mut sa) = (0.0, 0.0);
                for j in l..=n {
                    ra += h[(i, j)] * h[(j, n - 1)];
                    sa += h[(i, j)] * h[(j, n)];
                }
                w = h[(i, i)] - p;
                if e[i] < 0.0 {
                    z = w;
                    r = ra;
                    s = sa;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        let (cr, ci) = cdiv(-ra, -sa, w, q);
                        h[(i, n - 1)] = cr;
                        h[(i, n)] = ci;
                    } else {
                        x = h[(i, i + 1)];
                        y = h[(i + 1, i)];
                        let mut vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
                        let vi = (d[i] - p) * 2.0 * q;
                        if vr == 0.0 && vi == 0.0 {
                            vr = eps * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                        }
                        let (cr, ci) = cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                        h[(i, n - 1)] = cr;
                        h[(i, n)] = ci;
                        if x.abs() > z.abs() + q.abs() {
                            h[(i + 1, n - 1)] = (-ra - w * h[(i, n - 1)] + q * h[(i, n)]) / x;
                            h[(i + 1, n)] = (-sa - w * h[(i, n)] - q * h[(i, n - 1)]) / x;
                        } else {
                            let (cr, ci) = cdiv(-r - y * h[(i, n - 1)], -s - y * h[(i, n)], z, q);
                            h[(i + 1, n - 1)] = cr;
                            h[(i + 1, n)] = ci;
                        }
                    }
                    t = h[(i, n - 1)].abs().max(h[(i, n)].abs());
                    if (eps * t) * t > 1.0 {
                        for j in i..=n {
                            h[(j, n - 1)] /= t;
                            h[(j, n)] /= t;
                        }
                    }
                }
            }
        }
    }

    // Back transformation: V := V * (upper triangle of H), column by column
    // from the right so each column only reads columns not yet overwritten.
    let ht = h.transpose();
    for i in 0..nn {
        let row = v.row_mut(i);
        for j in (0..nn).rev() {
            let hcol = &ht.row(j)[..=j];
            row[j] = row[..=j].iter().zip(hcol).map(|(a, b)| a * b).sum();
        }
    }
    Ok((d, e))
}
