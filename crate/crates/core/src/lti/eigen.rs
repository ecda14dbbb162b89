//! Dense nonsymmetric eigenvalue solver.
//!
//! Balancing, reduction to upper Hessenberg form by stabilized elementary
//! similarity transforms, then the Francis double-shift QR iteration. The
//! working array is 1-based internally so the index arithmetic of the
//! classical formulation carries over unchanged.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use num_complex::Complex64;

use super::LtiError;
#[allow(unused_imports)]
use num_traits::Float;

/// Iteration budget per eigenvalue before the QR sweep gives up.
const MAX_SWEEPS: usize = 60;

struct Work {
    n: usize,
    data: Vec<f64>,
}

impl Work {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut data = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                data[(i + 1) * (n + 1) + j + 1] = m[(i, j)];
            }
        }
        Work { n, data }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.n + 1) + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.data[i * (n + 1) + j] = v;
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.data[i * (n + 1) + j] += v;
    }

    fn swap(&mut self, a: (usize, usize), b: (usize, usize)) {
        let n = self.n;
        self.data.swap(a.0 * (n + 1) + a.1, b.0 * (n + 1) + b.1);
    }
}

fn balance(a: &mut Work) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let n = a.n;
    loop {
        let mut done = true;
        for i in 1..=n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 1..=n {
                if j != i {
                    c += a.get(j, i).abs();
                    r += a.get(i, j).abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 1..=n {
                        let v = a.get(i, j) * g;
                        a.set(i, j, v);
                    }
                    for j in 1..=n {
                        let v = a.get(j, i) * f;
                        a.set(j, i, v);
                    }
                }
            }
        }
        if done {
            break;
        }
    }
}

fn hessenberg(a: &mut Work) {
    let n = a.n;
    if n < 3 {
        return;
    }
    for m in 2..n {
        let mut x: f64 = 0.0;
        let mut i = m;
        for j in m..=n {
            if a.get(j, m - 1).abs() > x.abs() {
                x = a.get(j, m - 1);
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                a.swap((i, j), (m, j));
            }
            for j in 1..=n {
                a.swap((j, i), (j, m));
            }
        }
        if x != 0.0 {
            for i in (m + 1)..=n {
                let mut y = a.get(i, m - 1);
                if y != 0.0 {
                    y /= x;
                    a.set(i, m - 1, y);
                    for j in m..=n {
                        let v = a.get(m, j);
                        a.add(i, j, -y * v);
                    }
                    for j in 1..=n {
                        let v = a.get(j, i);
                        a.add(j, m, y * v);
                    }
                }
            }
        }
    }
    // multipliers below the subdiagonal are not part of the Hessenberg form
    for i in 3..=n {
        for j in 1..(i - 1) {
            a.set(i, j, 0.0);
        }
    }
}

#[inline]
fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

fn hqr(a: &mut Work) -> Result<Vec<Complex64>, LtiError> {
    let n = a.n as isize;
    let mut wr = vec![0.0; a.n + 1];
    let mut wi = vec![0.0; a.n + 1];
    let g = |a: &Work, i: isize, j: isize| a.get(i as usize, j as usize);

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in core::cmp::max(i - 1, 1)..=n {
            anorm += g(a, i, j).abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
    let (mut x, mut y, mut z);
    let mut w;
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = g(a, l - 1, l - 1).abs() + g(a, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if g(a, l, l - 1).abs() + s == s {
                    a.set(l as usize, (l - 1) as usize, 0.0);
                    break;
                }
                l -= 1;
            }
            x = g(a, nn, nn);
            if l == nn {
                wr[nn as usize] = x + t;
                wi[nn as usize] = 0.0;
                nn -= 1;
            } else {
                y = g(a, nn - 1, nn - 1);
                w = g(a, nn, nn - 1) * g(a, nn - 1, nn);
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    let (i1, i2) = ((nn - 1) as usize, nn as usize);
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[i1] = x + z;
                        wr[i2] = x + z;
                        if z != 0.0 {
                            wr[i2] = x - w / z;
                        }
                        wi[i1] = 0.0;
                        wi[i2] = 0.0;
                    } else {
                        wr[i1] = x + p;
                        wr[i2] = x + p;
                        wi[i1] = -z;
                        wi[i2] = z;
                    }
                    nn -= 2;
                } else {
                    if its == MAX_SWEEPS {
                        return Err(LtiError::EigenNoConvergence(MAX_SWEEPS));
                    }
                    if its > 0 && its % 10 == 0 {
                        // exceptional shift
                        t += x;
                        for i in 1..=nn {
                            a.add(i as usize, i as usize, -x);
                        }
                        let s = g(a, nn, nn - 1).abs() + g(a, nn - 1, nn - 2).abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    while m >= l {
                        z = g(a, m, m);
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / g(a, m + 1, m) + g(a, m, m + 1);
                        q = g(a, m + 1, m + 1) - z - r - s;
                        r = g(a, m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = g(a, m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs()
                            * (g(a, m - 1, m - 1).abs() + z.abs() + g(a, m + 1, m + 1).abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        a.set(i as usize, (i - 2) as usize, 0.0);
                        if i != m + 2 {
                            a.set(i as usize, (i - 3) as usize, 0.0);
                        }
                    }
                    let mut k = m;
                    while k <= nn - 1 {
                        if k != m {
                            p = g(a, k, k - 1);
                            q = g(a, k + 1, k - 1);
                            r = 0.0;
                            if k != nn - 1 {
                                r = g(a, k + 2, k - 1);
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    let v = -g(a, k, k - 1);
                                    a.set(k as usize, (k - 1) as usize, v);
                                }
                            } else {
                                a.set(k as usize, (k - 1) as usize, -s * x);
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = g(a, k, j) + q * g(a, k + 1, j);
                                if k != nn - 1 {
                                    p += r * g(a, k + 2, j);
                                    a.add((k + 2) as usize, j as usize, -p * z);
                                }
                                a.add((k + 1) as usize, j as usize, -p * y);
                                a.add(k as usize, j as usize, -p * x);
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                p = x * g(a, i, k) + y * g(a, i, k + 1);
                                if k != nn - 1 {
                                    p += z * g(a, i, k + 2);
                                    a.add(i as usize, (k + 2) as usize, -p * r);
                                }
                                a.add(i as usize, (k + 1) as usize, -p * q);
                                a.add(i as usize, k as usize, -p);
                            }
                        }
                        k += 1;
                    }
                }
            }
            if !(l < nn - 1) {
                break;
            }
        }
    }
    Ok((1..=a.n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

/// Full spectrum of a square real matrix.
///
/// Complex eigenvalues come out in conjugate pairs. The order is that in
/// which the QR sweep deflates them; callers that need a canonical order
/// should sort.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>, LtiError> {
    if m.nrows() != m.ncols() {
        return Err(LtiError::NotSquare);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LtiError::NonFinite);
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut work = Work::from_matrix(m);
    balance(&mut work);
    hessenberg(&mut work);
    hqr(&mut work)
}

/// Largest real part of the spectrum, `-inf` for an empty matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64, LtiError> {
    Ok(eigenvalues(m)?
        .iter()
        .fold(f64::NEG_INFINITY, |acc, l| acc.max(l.re)))
}
