//! Verify analytic gradients of a two-layer network against central finite
//! differences.
//!
//! Run with `cargo run --example gradient_check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zsdg::autodiff::{Graph, Tensor};

fn loss_value(params: &[Tensor], x: &Tensor, labels: &[usize]) -> f64 {
    let mut g = Graph::new();
    let ids: Vec<_> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let xid = g.leaf(x.clone());
    let h1 = g.matmul(xid, ids[0]).unwrap();
    let h1 = g.add(h1, ids[1]).unwrap();
    let h1 = g.relu(h1).unwrap();
    let logits = g.matmul(h1, ids[2]).unwrap();
    let logits = g.add(logits, ids[3]).unwrap();
    let loss = g.softmax_cross_entropy(logits, labels).unwrap();
    g.value(loss).item()
}

fn main() -> zsdg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut rand_tensor = |shape: &[usize]| -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.random_range(-0.8..0.8)).collect(),
        )
        .unwrap()
    };
    let params = vec![
        rand_tensor(&[5, 7]), // w1
        rand_tensor(&[7]),    // b1
        rand_tensor(&[7, 3]), // w2
        rand_tensor(&[3]),    // b2
    ];
    let x = rand_tensor(&[6, 5]);
    let labels = vec![0, 1, 2, 0, 2, 1];

    // analytic gradients
    let mut g = Graph::new();
    let ids: Vec<_> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let xid = g.leaf(x.clone());
    let h1 = g.matmul(xid, ids[0])?;
    let h1 = g.add(h1, ids[1])?;
    let h1 = g.relu(h1)?;
    let logits = g.matmul(h1, ids[2])?;
    let logits = g.add(logits, ids[3])?;
    let loss = g.softmax_cross_entropy(logits, &labels)?;
    g.backward(loss)?;

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (k, name) in ["w1", "b1", "w2", "b2"].iter().enumerate() {
        let analytic = g.grad_tensor(ids[k]);
        let mut max_err = 0.0f64;
        for i in 0..params[k].numel() {
            let mut probe = params.clone();
            probe[k].values_mut()[i] += h;
            let up = loss_value(&probe, &x, &labels);
            probe[k].values_mut()[i] -= 2.0 * h;
            let down = loss_value(&probe, &x, &labels);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.values()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            max_err = max_err.max(err);
        }
        println!("{name}: max relative error {max_err:.3e}");
        worst = worst.max(max_err);
    }
    assert!(worst < 1e-4);
    println!("all gradients match finite differences within 1e-4");
    Ok(())
}
