//! Shared setup for the kernel benchmarks.

use adjlb_core::{cases, Problem};

/// A 2D bend of `n`×`n` nodes with a few forward steps taken, so the state
/// is not a uniform field.
pub fn warmed_bend(n: usize) -> (Problem, Vec<f64>, Vec<f64>) {
    let p = cases::pipe_bend_2d(n, 0.8, 2.0, 1.0).build().expect("bend case");
    let alpha = vec![1.0; p.flow().len()];
    let mut f = p.flow().initial_state();
    let mut buf = vec![0.0; f.len()];
    for _ in 0..50 {
        p.flow().step(&mut f, &mut buf, &alpha);
    }
    (p, f, alpha)
}
