use hubtopo_nn::io::{decode_params, encode_params, ParamHeader};
use hubtopo_nn::{finite_diff_check, gru_step, softmax_masked, Dense, GruCell, NnError, ParamSet, Tape};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec_in(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_apply_matches_tape(seed in 0u64..1000, x in vec_in(5)) {
        let mut ps = ParamSet::new();
        let layer = Dense::new(&mut ps, "d", 5, 3, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut tape = Tape::new(&ps);
        let xi = tape.input(x.clone());
        let y = layer.forward(&mut tape, xi).unwrap();
        for (a, b) in tape.value(y).iter().zip(layer.apply(&ps, &x)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_step_matches_tape(seed in 0u64..1000, x in vec_in(3), h in prop::collection::vec(-1.0..1.0f64, 4)) {
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, "g", 3, 4, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut tape = Tape::new(&ps);
        let xi = tape.input(x.clone());
        let hi = tape.input(h.clone());
        let out = cell.forward(&mut tape, xi, hi).unwrap();
        let direct = gru_step(&ps, &cell, &x, &h).unwrap();
        for (a, b) in tape.value(out).iter().zip(&direct) {
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(b.abs() < 1.0);
        }
    }

    #[test]
    fn masked_softmax_is_a_distribution_on_kept_classes(
        logits in vec_in(6),
        mask in prop::collection::vec(any::<bool>(), 6),
    ) {
        let p = softmax_masked(&logits, Some(&mask));
        if mask.iter().any(|&m| m) {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        } else {
            prop_assert!(p.iter().all(|&v| v == 0.0));
        }
        for (v, m) in p.iter().zip(&mask) {
            if !m {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn param_encoding_round_trips(seed in 0u64..1000, tag in any::<u64>()) {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dense::new(&mut ps, "a", 2, 3, &mut rng);
        GruCell::new(&mut ps, "b", 3, 2, &mut rng);
        let header = ParamHeader { kind: "test".into(), tag };
        let (h, back) = decode_params(&encode_params(&header, &ps)).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(back, ps);
    }
}

/// Mixed loss touching every differentiable op the models use.
fn mixed_loss(ps: &ParamSet, enc: &Dense, cell: &GruCell, head: &Dense, xs: &[Vec<f64>]) -> Result<(f64, hubtopo_nn::Gradients), NnError> {
    let mut tape = Tape::new(ps);
    let mut h = tape.input(vec![0.0; cell.hidden]);
    let mut terms = Vec::new();
    for (t, x) in xs.iter().enumerate() {
        let xi = tape.input(x.clone());
        let e = enc.forward(&mut tape, xi)?;
        let e = tape.relu(e);
        h = cell.forward(&mut tape, e, h)?;
        let logits = head.forward(&mut tape, h)?;
        let mut target = vec![0.0; head.output];
        target[t % head.output] = 1.0;
        let mask: Vec<bool> = (0..head.output).map(|k| k != (t + 1) % head.output).collect();
        terms.push(tape.softmax_cross_entropy(logits, target.clone(), Some(mask))?);
        terms.push(tape.sigmoid_bce(logits, target)?);
        let goal = tape.input(x.iter().take(head.output).map(|v| v * 0.5).collect());
        let th = tape.tanh(logits);
        terms.push(tape.squared_error(th, goal, None)?);
    }
    let loss = tape.sum(&terms)?;
    Ok((tape.scalar(loss), tape.backward(loss)?))
}

#[test]
fn mixed_network_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ps = ParamSet::new();
    let enc = Dense::new(&mut ps, "enc", 4, 5, &mut rng);
    let cell = GruCell::new(&mut ps, "gru", 5, 4, &mut rng);
    let head = Dense::new(&mut ps, "head", 4, 3, &mut rng);
    let xs: Vec<Vec<f64>> = (0..4).map(|t| (0..4).map(|k| ((t * 4 + k) as f64 * 0.7).sin()).collect()).collect();
    let (_, g) = mixed_loss(&ps, &enc, &cell, &head, &xs).unwrap();
    let err = finite_diff_check(|p| mixed_loss(p, &enc, &cell, &head, &xs).unwrap().0, &ps, &g, 1e-5).unwrap();
    assert!(err < 1e-6, "max relative error {err}");
}

#[test]
fn corrupted_encoding_is_rejected() {
    let mut ps = ParamSet::new();
    Dense::new(&mut ps, "a", 3, 3, &mut ChaCha8Rng::seed_from_u64(0));
    let header = ParamHeader { kind: "test".into(), tag: 9 };
    let bytes = encode_params(&header, &ps);
    for pos in [0, 10, bytes.len() / 2, bytes.len() - 1] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x01;
        assert!(decode_params(&bad).is_err(), "flip at {pos} accepted");
    }
    assert!(decode_params(&bytes[..bytes.len() - 3]).is_err());
}
