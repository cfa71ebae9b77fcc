//! Scratch: raw matmul throughput.

use std::time::Instant;
use trace::kernel::matmul;

fn main() {
    let (m, k, n) = (2048usize, 64usize, 9002usize);
    let a32 = vec![1.0f32; m * k];
    let b32 = vec![1.0f32; k * n];
    let mut c32 = vec![0.0f32; m * n];
    let t = Instant::now();
    matmul(&a32, &b32, &mut c32, m, k, n);
    let dt = t.elapsed().as_secs_f64();
    let gf = (2.0 * m as f64 * k as f64 * n as f64) / dt / 1e9;
    println!("generic f32: {:.3}s = {gf:.1} GF/s", dt);

    // direct f32 loop for comparison
    let t = Instant::now();
    for (i, orow) in c32.chunks_exact_mut(n).enumerate() {
        orow.fill(0.0);
        let arow = &a32[i * k..(i + 1) * k];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b32[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += aik * bv;
            }
        }
    }
    let dt = t.elapsed().as_secs_f64();
    let gf = (2.0 * m as f64 * k as f64 * n as f64) / dt / 1e9;
    println!("direct f32 single-thread: {:.3}s = {gf:.1} GF/s", dt);
}
