//! Dense tensors and reverse-mode automatic differentiation.
//!
//! Everything the model needs and nothing more: embedding lookup, affine
//! maps, same-padded 1-D convolution, segment max-pooling, highway and GRU
//! layers, softmax and cross-entropy, recorded on a [`Tape`] and
//! differentiated by one reverse sweep.

mod gradcheck;
mod layers;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckReport};
pub use layers::{gru_step, highway_rows, GruNodes, HighwayNodes};
pub use tape::{sigmoid, NodeId, Tape};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let p = tape.softmax(x);
        for v in tape.value(p).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_of_certain_prediction_is_zero() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::vector(vec![0.0, 1.0, 0.0]));
        let loss = tape.cross_entropy(p, 1);
        assert_eq!(tape.value(loss).item(), 0.0);
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_p_minus_onehot() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let logits = rand_tensor(&mut rng, &[9]);
            let target = rng.random_range(0..9);
            let mut tape = Tape::new();
            let x = tape.leaf(logits.clone());
            let p = tape.softmax(x);
            let loss = tape.cross_entropy(p, target);
            let grads = tape.backward(loss);
            let probs = tape.value(p).data().to_vec();
            for j in 0..9 {
                let expected = probs[j] - if j == target { 1.0 } else { 0.0 };
                assert!(
                    (grads[x.0].data()[j] - expected).abs() < 1e-9,
                    "coordinate {j}: {} vs {}",
                    grads[x.0].data()[j],
                    expected
                );
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = rand_tensor(&mut rng, &[17]);
            let mut tape = Tape::new();
            let xn = tape.leaf(x);
            let p = tape.softmax(xn);
            let sum: f64 = tape.value(p).data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(tape.value(p).data().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn conv1d_identity_filter_preserves_input() {
        // Width-1 filters arranged as the identity matrix.
        let ch = 3;
        let mut eye = vec![0.0; ch * ch];
        for i in 0..ch {
            eye[i * ch + i] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, &[4, ch]);
        let mut tape = Tape::new();
        let xn = tape.leaf(x.clone());
        let w = tape.leaf(Tensor::matrix(ch, ch, eye));
        let b = tape.leaf(Tensor::vector(vec![0.0; ch]));
        let y = tape.conv1d(xn, w, b, 1);
        assert_eq!(tape.value(y).data(), x.data());
    }

    #[test]
    fn conv1d_zero_input_yields_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = rand_tensor(&mut rng, &[4, 3 * 2]);
        let b = rand_tensor(&mut rng, &[4]);
        let mut tape = Tape::new();
        let xn = tape.leaf(Tensor::zeros(&[5, 2]));
        let wn = tape.leaf(w);
        let bn = tape.leaf(b.clone());
        let y = tape.conv1d(xn, wn, bn, 3);
        for t in 0..5 {
            assert_eq!(tape.value(y).row(t), b.data());
        }
    }

    #[test]
    fn maxpool_stride_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_tensor(&mut rng, &[6, 2]);
        let mut tape = Tape::new();
        let xn = tape.leaf(x.clone());
        let y = tape.segment_maxpool(xn, 1);
        assert_eq!(tape.value(y).data(), x.data());
    }

    #[test]
    fn maxpool_takes_segment_maxima() {
        let mut tape = Tape::new();
        let xn = tape.leaf(Tensor::matrix(4, 1, vec![1.0, 3.0, 2.0, 5.0]));
        let y = tape.segment_maxpool(xn, 2);
        assert_eq!(tape.value(y).data(), &[3.0, 5.0]);
    }

    #[test]
    fn maxpool_ragged_tail_segment() {
        let mut tape = Tape::new();
        let xn = tape.leaf(Tensor::matrix(5, 1, vec![1.0, 3.0, 2.0, 5.0, 4.0]));
        let y = tape.segment_maxpool(xn, 2);
        assert_eq!(tape.value(y).shape(), &[3, 1]);
        assert_eq!(tape.value(y).data(), &[3.0, 5.0, 4.0]);
    }

    #[test]
    fn highway_gate_limits() {
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = rand_tensor(&mut rng, &[3, d]);
        let w = rand_tensor(&mut rng, &[d, d]);
        let b = rand_tensor(&mut rng, &[d]);
        let wg = rand_tensor(&mut rng, &[d, d]);

        // Gate slammed shut: the input passes through unchanged.
        let mut tape = Tape::new();
        let xn = tape.leaf(x.clone());
        let p = HighwayNodes {
            transform_w: tape.leaf(w.clone()),
            transform_b: tape.leaf(b.clone()),
            gate_w: tape.leaf(Tensor::zeros(&[d, d])),
            gate_b: tape.leaf(Tensor::vector(vec![-40.0; d])),
        };
        let y = highway_rows(&mut tape, xn, &p);
        for (a, e) in tape.value(y).data().iter().zip(x.data()) {
            assert!((a - e).abs() < 1e-12);
        }

        // Gate wide open: pure rectified transform.
        let mut tape = Tape::new();
        let xn = tape.leaf(x.clone());
        let p = HighwayNodes {
            transform_w: tape.leaf(w.clone()),
            transform_b: tape.leaf(b.clone()),
            gate_w: tape.leaf(wg),
            gate_b: tape.leaf(Tensor::vector(vec![40.0; d])),
        };
        let y = highway_rows(&mut tape, xn, &p);
        let mut expect = Tape::new();
        let xe = expect.leaf(x);
        let we = expect.leaf(w);
        let be = expect.leaf(b);
        let pre = expect.linear_rows(xe, we, be);
        let relu = expect.relu(pre);
        for (a, e) in tape.value(y).data().iter().zip(expect.value(relu).data()) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    fn zero_gru(tape: &mut Tape, hidden: usize, input: usize) -> GruNodes {
        GruNodes {
            w_z: tape.leaf(Tensor::zeros(&[hidden, input])),
            u_z: tape.leaf(Tensor::zeros(&[hidden, hidden])),
            b_z: tape.leaf(Tensor::zeros(&[hidden])),
            w_r: tape.leaf(Tensor::zeros(&[hidden, input])),
            u_r: tape.leaf(Tensor::zeros(&[hidden, hidden])),
            b_r: tape.leaf(Tensor::zeros(&[hidden])),
            w_h: tape.leaf(Tensor::zeros(&[hidden, input])),
            u_h: tape.leaf(Tensor::zeros(&[hidden, hidden])),
            b_h: tape.leaf(Tensor::zeros(&[hidden])),
        }
    }

    fn rand_gru(tape: &mut Tape, rng: &mut ChaCha8Rng, hidden: usize, input: usize) -> GruNodes {
        GruNodes {
            w_z: tape.leaf(rand_tensor(rng, &[hidden, input])),
            u_z: tape.leaf(rand_tensor(rng, &[hidden, hidden])),
            b_z: tape.leaf(rand_tensor(rng, &[hidden])),
            w_r: tape.leaf(rand_tensor(rng, &[hidden, input])),
            u_r: tape.leaf(rand_tensor(rng, &[hidden, hidden])),
            b_r: tape.leaf(rand_tensor(rng, &[hidden])),
            w_h: tape.leaf(rand_tensor(rng, &[hidden, input])),
            u_h: tape.leaf(rand_tensor(rng, &[hidden, hidden])),
            b_h: tape.leaf(rand_tensor(rng, &[hidden])),
        }
    }

    #[test]
    fn gru_all_zero_params_give_zero_state() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.3, -0.2]));
        let h = tape.leaf(Tensor::zeros(&[3]));
        let p = zero_gru(&mut tape, 3, 2);
        let out = gru_step(&mut tape, x, h, &p);
        assert!(tape.value(out).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gru_closed_update_gate_copies_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tape = Tape::new();
        let x = tape.leaf(rand_tensor(&mut rng, &[2]));
        let h_val = rand_tensor(&mut rng, &[3]);
        let h = tape.leaf(h_val.clone());
        let mut p = rand_gru(&mut tape, &mut rng, 3, 2);
        p.b_z = tape.leaf(Tensor::vector(vec![-40.0; 3]));
        p.w_z = tape.leaf(Tensor::zeros(&[3, 2]));
        p.u_z = tape.leaf(Tensor::zeros(&[3, 3]));
        let out = gru_step(&mut tape, x, h, &p);
        for (a, e) in tape.value(out).data().iter().zip(h_val.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_open_update_gate_yields_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut tape = Tape::new();
        let x_val = rand_tensor(&mut rng, &[2]);
        let x = tape.leaf(x_val.clone());
        let h_val = rand_tensor(&mut rng, &[3]);
        let h = tape.leaf(h_val.clone());
        let mut p = rand_gru(&mut tape, &mut rng, 3, 2);
        p.b_z = tape.leaf(Tensor::vector(vec![40.0; 3]));
        p.w_z = tape.leaf(Tensor::zeros(&[3, 2]));
        p.u_z = tape.leaf(Tensor::zeros(&[3, 3]));
        let out = gru_step(&mut tape, x, h, &p);

        // Candidate recomputed directly.
        let mut t2 = Tape::new();
        let x2 = t2.leaf(x_val);
        let h2 = t2.leaf(h_val);
        let w_r = t2.leaf(tape.value(p.w_r).clone());
        let u_r = t2.leaf(tape.value(p.u_r).clone());
        let b_r = t2.leaf(tape.value(p.b_r).clone());
        let w_h = t2.leaf(tape.value(p.w_h).clone());
        let u_h = t2.leaf(tape.value(p.u_h).clone());
        let b_h = t2.leaf(tape.value(p.b_h).clone());
        let r_pre = t2.affine2(w_r, x2, u_r, h2, b_r);
        let r = t2.sigmoid(r_pre);
        let gated = t2.mul(r, h2);
        let cand_pre = t2.affine2(w_h, x2, u_h, gated, b_h);
        let cand = t2.tanh(cand_pre);
        for (a, e) in tape.value(out).data().iter().zip(t2.value(cand).data()) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let loss = tape.sum(x);
        let grads = tape.backward(loss);
        assert_eq!(grads[x.0].data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_product_swaps_factors() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.leaf(Tensor::scalar(-4.0));
        let prod = tape.mul(x, y);
        let loss = tape.sum(prod);
        let grads = tape.backward(loss);
        assert_eq!(grads[x.0].item(), -4.0);
        assert_eq!(grads[y.0].item(), 3.0);
    }

    // Finite-difference checks for the individual layers; the full-model
    // check lives in the acceptance suite.

    fn fd_check_op<F>(build: F, inputs: Vec<Tensor>, tol: f64)
    where
        F: Fn(&mut Tape, &[NodeId]) -> NodeId,
    {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &ids);
        let loss = tape.sum(out);
        let grads = tape.backward(loss);
        let analytic: Vec<Tensor> = ids.iter().map(|id| grads[id.0].clone()).collect();
        let report = check_gradients(
            |xs| {
                let mut t = Tape::new();
                let ids: Vec<NodeId> = xs.iter().map(|x| t.leaf(x.clone())).collect();
                let out = build(&mut t, &ids);
                let loss = t.sum(out);
                t.value(loss).item()
            },
            &inputs,
            &analytic,
            1e-5,
        );
        assert!(
            report.max_rel_err < tol,
            "max relative error {} over {} coordinates",
            report.max_rel_err,
            report.count
        );
    }

    #[test]
    fn conv1d_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for width in [1, 2, 3, 4, 5] {
            let inputs = vec![
                rand_tensor(&mut rng, &[6, 3]),
                rand_tensor(&mut rng, &[4, width * 3]),
                rand_tensor(&mut rng, &[4]),
            ];
            fd_check_op(
                |t, ids| t.conv1d(ids[0], ids[1], ids[2], width),
                inputs,
                1e-6,
            );
        }
    }

    #[test]
    fn maxpool_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        // Random continuous values: ties have probability zero.
        let inputs = vec![rand_tensor(&mut rng, &[7, 4])];
        fd_check_op(|t, ids| t.segment_maxpool(ids[0], 3), inputs, 1e-6);
    }

    #[test]
    fn highway_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let d = 4;
        let inputs = vec![
            rand_tensor(&mut rng, &[3, d]),
            rand_tensor(&mut rng, &[d, d]),
            rand_tensor(&mut rng, &[d]),
            rand_tensor(&mut rng, &[d, d]),
            rand_tensor(&mut rng, &[d]),
        ];
        fd_check_op(
            |t, ids| {
                let p = HighwayNodes {
                    transform_w: ids[1],
                    transform_b: ids[2],
                    gate_w: ids[3],
                    gate_b: ids[4],
                };
                highway_rows(t, ids[0], &p)
            },
            inputs,
            1e-6,
        );
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let (hidden, input) = (4, 3);
        let mut inputs = vec![rand_tensor(&mut rng, &[input]), rand_tensor(&mut rng, &[hidden])];
        for _ in 0..3 {
            inputs.push(rand_tensor(&mut rng, &[hidden, input]));
            inputs.push(rand_tensor(&mut rng, &[hidden, hidden]));
            inputs.push(rand_tensor(&mut rng, &[hidden]));
        }
        fd_check_op(
            |t, ids| {
                let p = GruNodes {
                    w_z: ids[2],
                    u_z: ids[3],
                    b_z: ids[4],
                    w_r: ids[5],
                    u_r: ids[6],
                    b_r: ids[7],
                    w_h: ids[8],
                    u_h: ids[9],
                    b_h: ids[10],
                };
                gru_step(t, ids[0], ids[1], &p)
            },
            inputs,
            1e-6,
        );
    }

    #[test]
    fn embed_rows_gradients_accumulate_per_id() {
        let mut tape = Tape::new();
        let table = tape.leaf(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let rows = tape.embed_rows(table, &[1, 1, 0]);
        let loss = tape.sum(rows);
        let grads = tape.backward(loss);
        assert_eq!(grads[table.0].data(), &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn affine_matches_manual_computation() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let w = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let b = tape.leaf(Tensor::vector(vec![0.5, -0.5]));
        let y = tape.affine(x, w, b);
        assert_eq!(tape.value(y).data(), &[1.5, 1.5]);
    }
}
