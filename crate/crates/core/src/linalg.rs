//! Small dense block helpers: `M x M` blocks with LU factorization and
//! partial pivoting.

pub type Block<const M: usize> = [[f64; M]; M];
pub type BlockVec<const M: usize> = Vec<[f64; M]>;

pub fn zero_block<const M: usize>() -> Block<M> {
    [[0.0; M]; M]
}

pub fn identity_block<const M: usize>() -> Block<M> {
    let mut b = zero_block::<M>();
    for (k, row) in b.iter_mut().enumerate() {
        row[k] = 1.0;
    }
    b
}

/// `y += a x`
#[inline]
pub fn gemv_add<const M: usize>(a: &Block<M>, x: &[f64; M], y: &mut [f64; M]) {
    for r in 0..M {
        let mut s = 0.0;
        for c in 0..M {
            s += a[r][c] * x[c];
        }
        y[r] += s;
    }
}

/// `y -= a x`
#[inline]
pub fn gemv_sub<const M: usize>(a: &Block<M>, x: &[f64; M], y: &mut [f64; M]) {
    for r in 0..M {
        let mut s = 0.0;
        for c in 0..M {
            s += a[r][c] * x[c];
        }
        y[r] -= s;
    }
}

#[inline]
pub fn block_add_assign<const M: usize>(a: &mut Block<M>, b: &Block<M>) {
    for r in 0..M {
        for c in 0..M {
            a[r][c] += b[r][c];
        }
    }
}

pub fn l1<const M: usize>(v: &[f64; M]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Sum over blocks of the Euclidean norm squared.
pub fn norm2<const M: usize>(v: &[[f64; M]]) -> f64 {
    v.iter().flat_map(|b| b.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// LU factors of one block, `P A = L U` with unit lower `L`.
#[derive(Clone, Copy, Debug)]
pub struct BlockLu<const M: usize> {
    lu: Block<M>,
    perm: [usize; M],
}

impl<const M: usize> BlockLu<M> {
    /// Returns `None` for numerically singular blocks.
    pub fn factor(a: &Block<M>) -> Option<Self> {
        let mut lu = *a;
        let mut perm = [0usize; M];
        for (k, p) in perm.iter_mut().enumerate() {
            *p = k;
        }
        let scale = a
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if !(a.iter().flat_map(|r| r.iter()).all(|v| v.is_finite()) && scale > 0.0) {
            return None;
        }
        for k in 0..M {
            let mut p = k;
            for r in k + 1..M {
                if lu[r][k].abs() > lu[p][k].abs() {
                    p = r;
                }
            }
            if lu[p][k].abs() <= 1e-300_f64.max(scale * 1e-15) {
                return None;
            }
            lu.swap(k, p);
            perm.swap(k, p);
            for r in k + 1..M {
                let f = lu[r][k] / lu[k][k];
                lu[r][k] = f;
                for c in k + 1..M {
                    lu[r][c] -= f * lu[k][c];
                }
            }
        }
        Some(BlockLu { lu, perm })
    }

    pub fn solve(&self, b: &[f64; M]) -> [f64; M] {
        let mut x = [0.0; M];
        for r in 0..M {
            let mut s = b[self.perm[r]];
            for c in 0..r {
                s -= self.lu[r][c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..M).rev() {
            let mut s = x[r];
            for c in r + 1..M {
                s -= self.lu[r][c] * x[c];
            }
            x[r] = s / self.lu[r][r];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_with_pivoting() {
        let a: Block<3> = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let x = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        gemv_add(&a, &x, &mut b);
        let got = BlockLu::factor(&a).unwrap().solve(&b);
        for k in 0..3 {
            assert!((got[k] - x[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_detected() {
        let a: Block<2> = [[1.0, 2.0], [2.0, 4.0]];
        assert!(BlockLu::factor(&a).is_none());
        assert!(BlockLu::factor(&zero_block::<2>()).is_none());
        assert!(BlockLu::factor(&[[f64::NAN, 0.0], [0.0, 1.0]]).is_none());
    }

    #[test]
    fn identity_solve() {
        let lu = BlockLu::factor(&identity_block::<3>()).unwrap();
        assert_eq!(lu.solve(&[1.0, 2.0, 3.0]), [1.0, 2.0, 3.0]);
    }
}
