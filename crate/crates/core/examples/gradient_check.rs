//! Builds a small expression with the autodiff graph, checks its gradient
//! against central differences and takes a few Adam steps.
//!
//! cargo run --release --example gradient_check

use mqtcn::tensor::{Adam, AdamConfig, Graph, Tensor};

fn loss(w: &Tensor, x: &Tensor) -> mqtcn::Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let wv = g.leaf(w);
    let xv = g.leaf(x);
    let h = g.matmul(xv, wv)?;
    let r = g.relu(h);
    let sq = g.mul(r, r)?;
    let l = g.mean(sq);
    g.backward(l)?;
    Ok((g.value(l)[0], g.grad(wv).unwrap_or_default().to_vec()))
}

fn main() -> mqtcn::Result<()> {
    let x = Tensor::new(vec![3, 2], vec![0.5, -1.0, 2.0, 0.3, -0.7, 1.1])?;
    let mut w = Tensor::new(vec![2, 2], vec![0.4, -0.2, 0.9, 0.6])?.with_grad(true);
    let (_, analytic) = loss(&w, &x)?;
    let eps = 1e-6;
    for i in 0..w.len() {
        let mut plus = w.clone();
        plus.data_mut()[i] += eps;
        let mut minus = w.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (loss(&plus, &x)?.0 - loss(&minus, &x)?.0) / (2.0 * eps);
        println!("w[{i}]: analytic {:+.8} numeric {:+.8}", analytic[i], numeric);
    }

    let mut adam = Adam::new(AdamConfig::with_lr(0.05));
    for step in 0..=50 {
        let (value, grad) = loss(&w, &x)?;
        if step % 10 == 0 {
            println!("step {step:>2}: loss {value:.6}");
        }
        w.zero_grad();
        w.accumulate_grad(&grad)?;
        adam.step(&mut [("w", &mut w)])?;
    }
    Ok(())
}
