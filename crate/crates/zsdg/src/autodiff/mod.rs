//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! Everything is 64-bit: desk-scale workloads make the memory cost
//! irrelevant and keep finite-difference gradient checks tight. A [`Graph`]
//! and its nodes are confined to one worker; independent graphs may run in
//! parallel workers.

mod graph;
mod optimizer;
mod tensor;

pub use graph::{Graph, NodeId};
pub use optimizer::{Optimizer, OptimizerKind, OptimizerSpec};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn t(shape: &[usize], values: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), values.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_passthrough() {
        let mut g = Graph::new();
        let eye = g.leaf(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let a = g.leaf(t(&[3, 2], &[1., 2., 3., 4., 5., 6.]));
        let out = g.matmul(eye, a).unwrap();
        assert_eq!(g.value(out).values(), g.value(a).values());
    }

    #[test]
    fn matmul_hand_oracle() {
        // [[1,2],[3,4]] * [[5],[6]] = [[17],[39]] by hand dot products
        let mut g = Graph::new();
        let a = g.leaf(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = g.leaf(t(&[2, 1], &[5., 6.]));
        let out = g.matmul(a, b).unwrap();
        assert_eq!(g.value(out).values(), &[17., 39.]);
    }

    #[test]
    fn relu_definition() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[-1., 0., 2.]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).values(), &[0., 0., 2.]);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut g = Graph::new();
        let a = g.leaf(t(&[2, 3], &[0.; 6]));
        let b = g.leaf(t(&[2, 2], &[0.; 4]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn mse_loss_cases() {
        let mut g = Graph::new();
        let p = g.leaf(t(&[2, 2], &[1., 2., 3., 4.]));
        let q = g.leaf(t(&[2, 2], &[1., 2., 3., 4.]));
        let same = g.mse_loss(p, q).unwrap();
        assert_eq!(g.value(same).item(), 0.0);

        let r = g.leaf(t(&[2, 2], &[2., 3., 4., 5.]));
        let offset = g.mse_loss(r, q).unwrap();
        assert_eq!(g.value(offset).item(), 1.0);

        // pred=[1,2], target=[0,0]: (1+4)/2 by hand
        let a = g.leaf(t(&[2], &[1., 2.]));
        let b = g.leaf(t(&[2], &[0., 0.]));
        let l = g.mse_loss(a, b).unwrap();
        assert_eq!(g.value(l).item(), 2.5);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut g = Graph::new();
        let logits = g.leaf(t(&[1, 10], &[0.7; 10]));
        let ce = g.softmax_cross_entropy(logits, &[3]).unwrap();
        assert!((g.value(ce).item() - 10.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_saturated_logit() {
        let mut g = Graph::new();
        let logits = g.leaf(t(&[1, 4], &[0., 1000., 0., 0.]));
        let ce = g.softmax_cross_entropy(logits, &[1]).unwrap();
        assert!(g.value(ce).item().abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_direct_softmax_oracle() {
        // logits [1,2,3], label 2: -ln(e^3 / (e^1+e^2+e^3)) = 0.40761...
        let mut g = Graph::new();
        let logits = g.leaf(t(&[1, 3], &[1., 2., 3.]));
        let ce = g.softmax_cross_entropy(logits, &[2]).unwrap();
        let z: f64 = (1f64).exp() + (2f64).exp() + (3f64).exp();
        let expected = -((3f64).exp() / z).ln();
        assert!((g.value(ce).item() - expected).abs() < 1e-12);
        assert!((g.value(ce).item() - 0.40761).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut g = Graph::new();
        let logits = g.leaf(t(&[1, 3], &[0., 0., 0.]));
        assert!(g.softmax_cross_entropy(logits, &[3]).is_err());
    }

    #[test]
    fn backward_sum_of_squares_is_2x() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[1., -2., 0.5]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum_reduce(sq).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2., -4., 1.]);
    }

    #[test]
    fn backward_unrelated_param_gets_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1., 2.]));
        let unrelated = g.leaf(t(&[2], &[3., 4.]));
        let loss = g.sum_reduce(x).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(unrelated).is_none());
        assert_eq!(g.grad_tensor(unrelated).values(), &[0., 0.]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1., 2.]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn backward_rejects_second_call() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[1], &[2.]));
        let loss = g.sum_reduce(x).unwrap();
        g.backward(loss).unwrap();
        assert!(g.backward(loss).is_err());
    }

    #[test]
    fn bias_broadcast_gradient_sums_rows() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3, 2], &[1., 2., 3., 4., 5., 6.]));
        let b = g.leaf(t(&[2], &[10., 20.]));
        let y = g.add(x, b).unwrap();
        assert_eq!(g.value(y).values(), &[11., 22., 13., 24., 15., 26.]);
        let loss = g.sum_reduce(y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(b).unwrap(), &[3., 3.]);
    }

    #[test]
    fn concat_and_slice_route_gradients() {
        let mut g = Graph::new();
        let a = g.leaf(t(&[1, 2], &[1., 2.]));
        let b = g.leaf(t(&[2, 2], &[3., 4., 5., 6.]));
        let cat = g.concat_rows(a, b).unwrap();
        assert_eq!(g.value(cat).shape(), &[3, 2]);
        let mid = g.slice_rows(cat, 1, 2).unwrap();
        assert_eq!(g.value(mid).values(), &[3., 4.]);
        let loss = g.sum_reduce(mid).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(b).unwrap(), &[1., 1., 0., 0.]);
        // `a` is reachable through the concat node; its rows fall outside
        // the slice, so the gradient is zero
        assert_eq!(g.grad(a).unwrap(), &[0., 0.]);
    }

    #[test]
    fn backward_is_linear_in_the_root() {
        // gradients of a*L1 + b*L2 match the same combination of the
        // separate gradients
        let (a, b) = (1.75, -0.6);
        let build = |g: &mut Graph| -> (NodeId, NodeId, NodeId) {
            let x = g.leaf(t(&[2, 2], &[0.3, -1.2, 0.8, 2.0]));
            let sq = g.mul(x, x).unwrap();
            let l1 = g.sum_reduce(sq).unwrap();
            let l2 = g.mean_reduce(x).unwrap();
            (x, l1, l2)
        };
        let mut g1 = Graph::new();
        let (x1, l1, _) = build(&mut g1);
        g1.backward(l1).unwrap();
        let mut g2 = Graph::new();
        let (x2, _, l2) = build(&mut g2);
        g2.backward(l2).unwrap();
        let mut g3 = Graph::new();
        let (x3, l1c, l2c) = build(&mut g3);
        let sa = g3.scale(l1c, a).unwrap();
        let sb = g3.scale(l2c, b).unwrap();
        let combined = g3.add(sa, sb).unwrap();
        g3.backward(combined).unwrap();
        for i in 0..4 {
            let want = a * g1.grad(x1).unwrap()[i] + b * g2.grad(x2).unwrap()[i];
            let got = g3.grad(x3).unwrap()[i];
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn optimizer_zero_lr_leaves_params_bit_identical() {
        let mut p = t(&[3], &[1.0, -0.25, 7.5]);
        let before = p.clone();
        let grads: BTreeMap<String, Tensor> =
            [("p".to_string(), t(&[3], &[1., 2., 3.]))].into();
        for spec in [OptimizerSpec::sgd(0.0, 0.9), OptimizerSpec::adam(0.0)] {
            let mut opt = Optimizer::new(spec.with_weight_decay(0.5)).unwrap();
            let mut params = vec![("p".to_string(), &mut p)];
            opt.step(&mut params, &grads).unwrap();
            assert_eq!(p.values(), before.values());
        }
    }

    #[test]
    fn sgd_definition_step() {
        // sgd, lr=0.1, no momentum, grad=[1], param=[1], decay 0 -> [0.9]
        let mut p = t(&[1], &[1.0]);
        let grads: BTreeMap<String, Tensor> = [("p".to_string(), t(&[1], &[1.0]))].into();
        let mut opt = Optimizer::new(OptimizerSpec::sgd(0.1, 0.0)).unwrap();
        let mut params = vec![("p".to_string(), &mut p)];
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(p.values(), &[0.9]);
    }

    #[test]
    fn adam_first_step_matches_hand_recurrence() {
        // t=1: m=(1-b1)g, v=(1-b2)g^2, mhat=g, vhat=g^2,
        // p -= lr * g / (|g| + eps)
        let g0: f64 = 0.3;
        let lr = 1e-3;
        let eps = 1e-8;
        let expected = 1.0 - lr * g0 / (g0.abs() + eps);

        let mut p = t(&[1], &[1.0]);
        let grads: BTreeMap<String, Tensor> = [("p".to_string(), t(&[1], &[g0]))].into();
        let mut opt = Optimizer::new(OptimizerSpec::adam(lr)).unwrap();
        let mut params = vec![("p".to_string(), &mut p)];
        opt.step(&mut params, &grads).unwrap();
        assert!((p.values()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        // zero gradient, decay 0.1, lr 0.5: p -= lr*decay*p -> 1.0 * (1 - 0.05)
        let mut p = t(&[1], &[1.0]);
        let grads: BTreeMap<String, Tensor> = [("p".to_string(), t(&[1], &[0.0]))].into();
        let mut opt = Optimizer::new(OptimizerSpec::sgd(0.5, 0.0).with_weight_decay(0.1)).unwrap();
        let mut params = vec![("p".to_string(), &mut p)];
        opt.step(&mut params, &grads).unwrap();
        assert!((p.values()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = t(&[1], &[1.0]);
        let grads: BTreeMap<String, Tensor> = [("p".to_string(), t(&[1], &[f64::NAN]))].into();
        let mut opt = Optimizer::new(OptimizerSpec::adam(1e-3)).unwrap();
        let mut params = vec![("p".to_string(), &mut p)];
        let err = opt.step(&mut params, &grads).unwrap_err();
        assert!(err.to_string().contains("'p'"));
        assert_eq!(p.values(), &[1.0]);
    }
}
