//! Reverse-mode gradients on the tape, checked against central differences.
//!
//! Run with `cargo run --example autodiff`.

use klflow::{Tape, Tensor};

fn loss(w: &Tensor, x: &Tensor) -> klflow::Result<(f64, Tensor)> {
    let tape = Tape::new();
    let wv = tape.param(w.clone());
    let xv = tape.constant(x.clone());
    let h = tape.tanh(tape.matmul(xv, wv)?)?;
    let out = tape.mean(tape.square(h)?)?;
    let grads = tape.backward(out)?;
    Ok((tape.scalar_value(out), grads.get(wv)))
}

fn main() -> klflow::Result<()> {
    let x = Tensor::from_rows(&[vec![0.3, -1.2, 0.5], vec![1.1, 0.4, -0.7]])?;
    let w = Tensor::from_rows(&[vec![0.2, -0.4], vec![0.9, 0.1], vec![-0.3, 0.6]])?;
    let (value, grad) = loss(&w, &x)?;
    println!("loss = {value:.6}");

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..w.numel() {
        let (mut up, mut down) = (w.clone(), w.clone());
        up.data_mut()[i] += h;
        down.data_mut()[i] -= h;
        let fd = (loss(&up, &x)?.0 - loss(&down, &x)?.0) / (2.0 * h);
        let ad = grad.data()[i];
        worst = worst.max((fd - ad).abs() / ad.abs().max(1e-12));
        println!("dL/dw[{i}]  tape {ad:+.8}  finite difference {fd:+.8}");
    }
    println!("largest relative error {worst:.2e}");
    Ok(())
}
