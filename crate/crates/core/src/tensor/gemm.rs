use alloc::vec;
use alloc::vec::Vec;

use crate::Real;

/// `c = a * b` for row-major `a: m x k`, `b: k x n`.
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    // The kernel streams rows of length n; for narrow outputs compute the
    // transposed product instead so the inner loop stays long.
    if n < 16 && m > n {
        let at = transpose(a, m, k);
        let bt = transpose(b, k, n);
        let mut ct = vec![T::zero(); n * m];
        kernel(&bt, &at, &mut ct, n, k, m);
        transpose(&ct, n, m)
    } else {
        let mut c = vec![T::zero(); m * n];
        kernel(a, b, &mut c, m, k, n);
        c
    }
}

pub(crate) fn transpose<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    out[c * rows + r] = a[r * cols + c];
                }
            }
        }
    }
    out
}

const MR: usize = 4;
const NR: usize = 8;

/// `c += a * b`. Each `NR`-column panel of `b` is packed contiguously and
/// reused by every `MR`-row tile of `c`, which is accumulated in registers.
fn kernel<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let mut panel = vec![T::zero(); k * NR];
    for j0 in (0..n).step_by(NR) {
        let nr = NR.min(n - j0);
        for l in 0..k {
            let dst = &mut panel[l * NR..(l + 1) * NR];
            dst[..nr].copy_from_slice(&b[l * n + j0..l * n + j0 + nr]);
            dst[nr..].fill(T::zero());
        }
        let mut i0 = 0;
        while i0 + MR <= m {
            let mut acc = [[T::zero(); NR]; MR];
            let rows: [&[T]; MR] = core::array::from_fn(|r| &a[(i0 + r) * k..(i0 + r + 1) * k]);
            for (l, bv) in panel.chunks_exact(NR).enumerate() {
                for r in 0..MR {
                    let av = rows[r][l];
                    for q in 0..NR {
                        acc[r][q] += av * bv[q];
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                for q in 0..nr {
                    c[(i0 + r) * n + j0 + q] += row[q];
                }
            }
            i0 += MR;
        }
        for i in i0..m {
            let mut acc = [T::zero(); NR];
            let row = &a[i * k..(i + 1) * k];
            for (bv, &av) in panel.chunks_exact(NR).zip(row) {
                for q in 0..NR {
                    acc[q] += av * bv[q];
                }
            }
            for q in 0..nr {
                c[i * n + j0 + q] += acc[q];
            }
        }
    }
}
