//! Cubic B-spline bases on equally spaced knots and the second-order
//! random-walk penalty.
//!
//! The knot sequence continues with the same spacing for three knots past
//! each end of the domain, so every basis function is a translate of the
//! same cardinal cubic and linear coefficient sequences reproduce linear
//! functions exactly.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::scalar::Real;

pub const DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis<T> {
    inner_knot_count: usize,
    domain_lo: T,
    domain_hi: T,
    knots: Vec<T>,
}

/// Builds a cubic basis with `inner_knots` equally spaced interior knots
/// strictly inside `[lo, hi]`.
pub fn make_basis<T: Real>(lo: T, hi: T, inner_knots: usize) -> Result<SplineBasis<T>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("invalid basis domain [{lo}, {hi}]")));
    }
    if inner_knots < 2 {
        return Err(Error::domain(format!(
            "at least 2 inner knots required, got {inner_knots}"
        )));
    }
    let h = (hi - lo) / T::from_usize(inner_knots + 1).unwrap();
    let total = inner_knots + 2 + 2 * DEGREE;
    let knots = (0..total)
        .map(|i| lo + (T::from_usize(i).unwrap() - T::from_usize(DEGREE).unwrap()) * h)
        .collect();
    Ok(SplineBasis {
        inner_knot_count: inner_knots,
        domain_lo: lo,
        domain_hi: hi,
        knots,
    })
}

impl<T: Real> SplineBasis<T> {
    pub fn degree(&self) -> usize {
        DEGREE
    }

    pub fn inner_knot_count(&self) -> usize {
        self.inner_knot_count
    }

    /// Number of basis functions, `inner_knots + degree + 1`.
    pub fn num_basis(&self) -> usize {
        self.inner_knot_count + DEGREE + 1
    }

    pub fn domain(&self) -> (T, T) {
        (self.domain_lo, self.domain_hi)
    }

    pub fn spacing(&self) -> T {
        self.knots[1] - self.knots[0]
    }

    pub fn full_knots(&self) -> &[T] {
        &self.knots
    }

    /// Knots lying in the closed domain (both boundaries and the inner knots).
    pub fn domain_knots(&self) -> &[T] {
        &self.knots[DEGREE..DEGREE + self.inner_knot_count + 2]
    }

    /// Index `s` of the knot interval `[t_s, t_{s+1})` containing `x`, with
    /// the last interval closed on the right.
    fn span(&self, x: T) -> Result<usize> {
        let (lo, hi) = self.domain();
        let slack = T::lit(1e-12) * (hi - lo);
        if !(x >= lo - slack && x <= hi + slack) {
            return Err(Error::OutOfDomain {
                value: x.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        let first = DEGREE;
        let last = DEGREE + self.inner_knot_count;
        let raw = ((x - lo) / self.spacing()).floor().to_usize().unwrap_or(0);
        let mut s = (first + raw).min(last);
        // floor() can land one cell off when x sits on a knot in floating point
        while s > first && x < self.knots[s] {
            s -= 1;
        }
        while s < last && x >= self.knots[s + 1] {
            s += 1;
        }
        Ok(s)
    }

    /// Nonzero basis values and derivatives at `x` up to order `nders`:
    /// returns the first basis index and `ders[order][0..=3]`.
    fn local_derivatives(&self, x: T, nders: usize) -> Result<(usize, Vec<[T; DEGREE + 1]>)> {
        let s = self.span(x)?;
        let p = DEGREE;
        let t = &self.knots;
        let mut ndu = [[T::zero(); DEGREE + 1]; DEGREE + 1];
        let mut left = [T::zero(); DEGREE + 1];
        let mut right = [T::zero(); DEGREE + 1];
        ndu[0][0] = T::one();
        for j in 1..=p {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = T::zero();
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![[T::zero(); DEGREE + 1]; nders + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = [[T::zero(); DEGREE + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0] = [T::zero(); DEGREE + 1];
            a[0][0] = T::one();
            for k in 1..=nders.min(p) {
                let mut d = T::zero();
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d = d + a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d = d + a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = T::from_usize(p).unwrap();
        for k in 1..=nders.min(p) {
            for j in 0..=p {
                ders[k][j] = ders[k][j] * factor;
            }
            factor = factor * T::from_usize(p - k).unwrap();
        }
        Ok((s - p, ders))
    }

    fn eval_order(&self, x: &[T], order: usize) -> Result<Matrix<T>> {
        let k = self.num_basis();
        let mut out = Matrix::zeros(x.len(), k);
        for (i, &xi) in x.iter().enumerate() {
            let (start, ders) = self.local_derivatives(xi, order)?;
            for (j, &v) in ders[order].iter().enumerate() {
                out[(i, start + j)] = v;
            }
        }
        Ok(out)
    }

    /// Design matrix `Z` with `Z[i, j] = B_j(x_i)`.
    pub fn eval_design(&self, x: &[T]) -> Result<Matrix<T>> {
        self.eval_order(x, 0)
    }

    /// Matrix of second derivatives `B_j''(x_i)`.
    pub fn eval_design_deriv2(&self, x: &[T]) -> Result<Matrix<T>> {
        self.eval_order(x, 2)
    }

    /// `count` equally spaced points covering the closed domain.
    pub fn grid(&self, count: usize) -> Vec<T> {
        equispaced(self.domain_lo, self.domain_hi, count)
    }
}

pub fn equispaced<T: Real>(lo: T, hi: T, count: usize) -> Vec<T> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / T::from_usize(count - 1).unwrap();
            (0..count)
                .map(|i| {
                    if i + 1 == count {
                        hi
                    } else {
                        lo + T::from_usize(i).unwrap() * step
                    }
                })
                .collect()
        }
    }
}

/// Second-difference matrix `D`, `(k-2) x k`.
pub fn second_difference<T: Real>(k: usize) -> Result<Matrix<T>> {
    if k < 3 {
        return Err(Error::domain(format!("second differences need k >= 3, got {k}")));
    }
    let mut d = Matrix::zeros(k - 2, k);
    for r in 0..k - 2 {
        d[(r, r)] = T::one();
        d[(r, r + 1)] = T::lit(-2.0);
        d[(r, r + 2)] = T::one();
    }
    Ok(d)
}

/// RW2 penalty `K = D'D` with rank `k - 2`.
pub fn rw2_penalty<T: Real>(k: usize) -> Result<SymMatrix<T>> {
    Ok(second_difference::<T>(k)?.gram())
}
