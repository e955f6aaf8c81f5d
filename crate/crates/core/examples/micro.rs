use blsim_core::grid::Field;
use std::time::Instant;

fn main() {
    let n = 129 * 128;
    let a = Field::from_fn(129, 128, |i, j| (i + j) as f64 * 1e-6);
    let b = Field::from_fn(129, 128, |i, j| (i * j) as f64 * 1e-9);
    // dot
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..1000 {
        acc += a.dot(&b);
    }
    println!("1000 dots of {n}: {:?} ({acc:.3e})", t0.elapsed());
    // axpy
    let mut c = a.clone();
    let t0 = Instant::now();
    for _ in 0..1000 {
        c.axpy(1e-9, &b);
    }
    println!("1000 axpys: {:?} ({:.3e})", t0.elapsed(), c.data[5]);
    // alloc
    let t0 = Instant::now();
    let mut sum = 0.0;
    for _ in 0..1000 {
        let f = Field::zeros(129, 128);
        sum += f.data[100];
    }
    println!("1000 alloc+zero: {:?} ({sum})", t0.elapsed());
}
