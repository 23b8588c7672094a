use mbdm_core::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use std::time::Instant;
fn main() {
    for (m, k, n) in [(1000usize, 133usize, 64usize), (1000, 64, 64), (1000, 133, 256), (1000, 256, 256)] {
        let a = Tensor::<f64>::from_vec(&[m, k], (0..m*k).map(|i| (i % 97) as f64 * 0.01).collect()).unwrap();
        let b = Tensor::<f64>::from_vec(&[k, n], (0..k*n).map(|i| (i % 89) as f64 * 0.01).collect()).unwrap();
        let t0 = Instant::now();
        let mut reps = 0u32;
        while t0.elapsed().as_secs_f64() < 1.0 { let _ = gemm_nn(&a, &b).unwrap(); reps += 1; }
        let gf = 2.0 * (m*k*n) as f64 * reps as f64 / t0.elapsed().as_secs_f64() / 1e9;
        let bt = Tensor::<f64>::from_vec(&[n, k], (0..k*n).map(|i| (i % 89) as f64 * 0.01).collect()).unwrap();
        let t1 = Instant::now(); let mut r1 = 0u32;
        while t1.elapsed().as_secs_f64() < 1.0 { let _ = gemm_nt(&a, &bt).unwrap(); r1 += 1; }
        let gf_nt = 2.0 * (m*k*n) as f64 * r1 as f64 / t1.elapsed().as_secs_f64() / 1e9;
        let at = Tensor::<f64>::from_vec(&[k, m], (0..k*m).map(|i| (i % 97) as f64 * 0.01).collect()).unwrap();
        let t2 = Instant::now(); let mut r2 = 0u32;
        while t2.elapsed().as_secs_f64() < 1.0 { let _ = gemm_tn(&at, &b).unwrap(); r2 += 1; }
        let gf_tn = 2.0 * (m*k*n) as f64 * r2 as f64 / t2.elapsed().as_secs_f64() / 1e9;
        println!("[{m}x{k}x{n}] nn {gf:.2} GF/s  nt {gf_nt:.2}  tn {gf_tn:.2}");
    }
}
