//! Tape basics: build a graph, read gradients, take optimizer steps.
//!
//! Run with `cargo run --example autodiff_basics`.

use std::collections::BTreeMap;

use zsdg::autodiff::{Graph, Optimizer, OptimizerSpec, Tensor};

fn main() -> zsdg::Result<()> {
    // forward: loss = mean((x*W + b - y)^2), a one-layer regression
    let mut w = Tensor::new(vec![2, 1], vec![0.1, -0.2])?;
    let mut b = Tensor::new(vec![1], vec![0.0])?;
    let x = Tensor::new(vec![4, 2], vec![0., 0., 0., 1., 1., 0., 1., 1.])?;
    let y = Tensor::new(vec![4, 1], vec![1.0, 3.0, 2.0, 4.0])?; // 1 + x0 + 2*x1

    let mut opt = Optimizer::new(OptimizerSpec::adam(0.05))?;
    for step in 0..200 {
        let mut g = Graph::new();
        let wid = g.leaf(w.clone());
        let bid = g.leaf(b.clone());
        let xid = g.leaf(x.clone());
        let yid = g.leaf(y.clone());
        let z = g.matmul(xid, wid)?;
        let pred = g.add(z, bid)?;
        let loss = g.mse_loss(pred, yid)?;
        if step % 50 == 0 {
            println!("step {step:3}: loss {:.6}", g.value(loss).item());
        }
        g.backward(loss)?;
        let grads: BTreeMap<String, Tensor> = [
            ("w".to_string(), g.grad_tensor(wid)),
            ("b".to_string(), g.grad_tensor(bid)),
        ]
        .into();
        let mut params = vec![("w".to_string(), &mut w), ("b".to_string(), &mut b)];
        opt.step(&mut params, &grads)?;
    }
    println!(
        "fitted: w = [{:.3}, {:.3}], b = {:.3} (target 1, 2, 1)",
        w.values()[0],
        w.values()[1],
        b.values()[0]
    );

    // shape errors carry both operand shapes
    let mut g = Graph::new();
    let a = g.leaf(Tensor::new(vec![2, 3], vec![0.0; 6])?);
    let c = g.leaf(Tensor::new(vec![2, 2], vec![0.0; 4])?);
    if let Err(e) = g.matmul(a, c) {
        println!("rejected as expected: {e}");
    }
    Ok(())
}
