//! Row-major matrix multiplication kernels.
//!
//! One tiled core handles every shape in the model. Both operands are packed
//! into tile-major panels so the microkernel's inner loop iterates with
//! `chunks_exact` only — no bounds checks, no panic edges — which lets the
//! 6x8 accumulator tile live entirely in vector registers across a k-tile.
//! The backward-pass layouts (`A·Bᵀ`, `Aᵀ·C`) transpose whichever operand is
//! small and reuse the same core. Parallelism splits disjoint output row
//! ranges; per-element accumulation order is fixed, so results are bitwise
//! reproducible for a given build regardless of thread count.

use rayon::prelude::*;

use super::real::Real;

const RB: usize = 6;
const JV: usize = 8;
const K_TILE: usize = 256;
const J_TILE: usize = 512; // multiple of JV
/// Work threshold below which threading overhead dominates.
const PAR_FLOPS: usize = 1 << 21;

/// Register-tile microkernel over packed panels.
///
/// `apack` holds the row block in `[kk][RB]` order, `btile` one JV-wide
/// column strip in `[kk][JV]` order; both have exactly `kt` chunks.
#[inline(never)]
fn micro<T: Real>(apack: &[T], btile: &[T], acc: &mut [[T; JV]; RB]) {
    for (acol, brow) in apack.chunks_exact(RB).zip(btile.chunks_exact(JV)) {
        for (r, accr) in acc.iter_mut().enumerate() {
            let aik = acol[r];
            for (o, &bv) in accr.iter_mut().zip(brow.iter()) {
                *o = aik.fma(bv, *o);
            }
        }
    }
}

/// Ragged-edge fallback covering arbitrary row/column counts.
#[allow(clippy::too_many_arguments)]
fn edge<T: Real>(
    a: &[T],
    b: &[T],
    out: &mut [T],
    k: usize,
    n: usize,
    rows_at: usize,
    out_row0: usize,
    rb: usize,
    j0: usize,
    jw: usize,
    k0: usize,
    k1: usize,
    first: bool,
) {
    for r in 0..rb {
        let orow = &mut out[(out_row0 + r) * n + j0..(out_row0 + r) * n + j0 + jw];
        if first {
            for o in orow.iter_mut() {
                *o = T::zero();
            }
        }
        for kk in k0..k1 {
            let aik = a[(rows_at + r) * k + kk];
            let brow = &b[kk * n + j0..kk * n + j0 + jw];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o = aik.fma(bv, *o);
            }
        }
    }
}

fn matmul_rows<T: Real>(
    a: &[T],
    b: &[T],
    out: &mut [T],
    row0: usize,
    rows: usize,
    k: usize,
    n: usize,
) {
    let j_main = (n / JV) * JV;
    let r_main = (rows / RB) * RB;
    let jt_width = J_TILE.min(j_main.max(JV));
    // B panel in [tile][kk][JV] order, A block in [kk][RB] order.
    let mut panel = vec![T::zero(); K_TILE * jt_width];
    let mut apack = vec![T::zero(); K_TILE * RB];
    for k0 in (0..k).step_by(K_TILE) {
        let k1 = (k0 + K_TILE).min(k);
        let kt = k1 - k0;
        let first = k0 == 0;
        for j0 in (0..j_main).step_by(J_TILE) {
            let j1 = (j0 + J_TILE).min(j_main);
            let jw = j1 - j0;
            let tiles = jw / JV;
            for t in 0..tiles {
                for kk in 0..kt {
                    let src = (k0 + kk) * n + j0 + t * JV;
                    panel[t * kt * JV + kk * JV..t * kt * JV + (kk + 1) * JV]
                        .copy_from_slice(&b[src..src + JV]);
                }
            }
            for r0 in (0..r_main).step_by(RB) {
                for kk in 0..kt {
                    for r in 0..RB {
                        apack[kk * RB + r] = a[(row0 + r0 + r) * k + k0 + kk];
                    }
                }
                for t in 0..tiles {
                    let btile = &panel[t * kt * JV..(t + 1) * kt * JV];
                    let mut acc = [[T::zero(); JV]; RB];
                    let jcol = j0 + t * JV;
                    if !first {
                        for (r, accr) in acc.iter_mut().enumerate() {
                            accr.copy_from_slice(
                                &out[(r0 + r) * n + jcol..(r0 + r) * n + jcol + JV],
                            );
                        }
                    }
                    micro(&apack[..kt * RB], btile, &mut acc);
                    for (r, accr) in acc.iter().enumerate() {
                        out[(r0 + r) * n + jcol..(r0 + r) * n + jcol + JV]
                            .copy_from_slice(accr);
                    }
                }
            }
            if r_main < rows {
                edge(
                    a,
                    b,
                    out,
                    k,
                    n,
                    row0 + r_main,
                    r_main,
                    rows - r_main,
                    j0,
                    jw,
                    k0,
                    k1,
                    first,
                );
            }
        }
        if j_main < n {
            edge(
                a, b, out, k, n, row0, 0, rows, j_main, n - j_main, k0, k1, first,
            );
        }
    }
}

/// `out = A · B` with `A: [m,k]`, `B: [k,n]`, `out: [m,n]`.
pub fn matmul<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let parallel = m * k * n >= PAR_FLOPS && m >= 2 * RB;
    if parallel {
        let threads = rayon::current_num_threads().max(1);
        let chunk_rows = m.div_ceil(4 * threads).div_ceil(RB).max(1) * RB;
        out.par_chunks_mut(chunk_rows * n)
            .enumerate()
            .for_each(|(ci, orows)| {
                matmul_rows(a, b, orows, ci * chunk_rows, orows.len() / n, k, n);
            });
    } else {
        matmul_rows(a, b, out, 0, m, k, n);
    }
}

pub fn transpose<T: Real>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// `out = A · Bᵀ` with `A: [m,d]`, `B: [n,d]`, `out: [m,n]`.
/// Transposes `B` (the small operand at every call site).
pub fn matmul_a_bt<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, d: usize, n: usize) {
    let bt = transpose(b, n, d);
    matmul(a, &bt, out, m, d, n);
}

/// `out = Aᵀ · C` with `A: [m,k]`, `C: [m,n]`, `out: [k,n]`.
/// Transposes `A` (the small operand at every call site).
pub fn matmul_at_b<T: Real>(a: &[T], c: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    let at = transpose(a, m, k);
    matmul(&at, c, out, k, m, n);
}

/// `out += Aᵀ · C`.
pub fn matmul_at_b_acc<T: Real>(a: &[T], c: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    let mut tmp = vec![T::zero(); k * n];
    matmul_at_b(a, c, &mut tmp, m, k, n);
    for (o, &t) in out.iter_mut().zip(tmp.iter()) {
        *o += t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    out[i * n + j] += a[i * k + kk] * b[kk * n + j];
                }
            }
        }
        out
    }

    fn fill(n: usize, seed: u64) -> Vec<f64> {
        let mut s = absynth::rng::SeedTree::new(seed).stream();
        (0..n).map(|_| s.normal()).collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_matches_naive_small() {
        let (m, k, n) = (7, 13, 9);
        let a = fill(m * k, 1);
        let b = fill(k * n, 2);
        let mut out = vec![0.0; m * n];
        matmul(&a, &b, &mut out, m, k, n);
        assert_close(&out, &naive(&a, &b, m, k, n), 1e-12);
    }

    #[test]
    fn matmul_matches_naive_tiled() {
        // spans several k-tiles and j-tiles with ragged edges everywhere
        let (m, k, n) = (21, 1100, 1503);
        let a = fill(m * k, 3);
        let b = fill(k * n, 4);
        let mut out = vec![0.0; m * n];
        matmul(&a, &b, &mut out, m, k, n);
        assert_close(&out, &naive(&a, &b, m, k, n), 1e-9);
    }

    #[test]
    fn matmul_matches_naive_block_shapes() {
        // exact multiples of the microkernel tile
        let (m, k, n) = (12, 512, 64);
        let a = fill(m * k, 9);
        let b = fill(k * n, 10);
        let mut out = vec![0.0; m * n];
        matmul(&a, &b, &mut out, m, k, n);
        assert_close(&out, &naive(&a, &b, m, k, n), 1e-9);
    }

    #[test]
    fn a_bt_matches_naive() {
        let (m, d, n) = (5, 11, 6);
        let a = fill(m * d, 3);
        let b = fill(n * d, 4);
        let mut out = vec![0.0; m * n];
        matmul_a_bt(&a, &b, &mut out, m, d, n);
        let bt = transpose(&b, n, d);
        assert_close(&out, &naive(&a, &bt, m, d, n), 1e-12);
    }

    #[test]
    fn at_b_matches_naive() {
        let (m, k, n) = (9, 70, 5);
        let a = fill(m * k, 5);
        let c = fill(m * n, 6);
        let mut out = vec![0.0; k * n];
        matmul_at_b(&a, &c, &mut out, m, k, n);
        let at = transpose(&a, m, k);
        assert_close(&out, &naive(&at, &c, k, m, n), 1e-12);
    }

    #[test]
    fn parallel_path_is_bitwise_identical_to_serial() {
        let (m, k, n) = (128, 64, 2000);
        let a = fill(m * k, 7);
        let b = fill(k * n, 8);
        let mut big = vec![0.0; m * n];
        matmul(&a, &b, &mut big, m, k, n);
        for i in 0..m {
            let mut row = vec![0.0; n];
            matmul(&a[i * k..(i + 1) * k], &b, &mut row, 1, k, n);
            assert_eq!(&big[i * n..(i + 1) * n], row.as_slice(), "row {i}");
        }
    }
}
