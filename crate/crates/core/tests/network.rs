mod oracle;

use vizseq::model::{
    backward, decode_step, encode_source, forward, model_forward, Example, ForwardPass, Mode, ModelParams,
};
use vizseq::tokenizer::{EOS, SOS};

fn batch() -> Vec<(Vec<u32>, Vec<u32>)> {
    vec![
        (vec![4, 5, 6, 7, EOS], vec![4, 5, EOS]),
        (vec![6, EOS], vec![5, 4, 4, 6, EOS]),
        (vec![7, 4, 8, EOS], vec![EOS]),
    ]
}

fn examples(data: &[(Vec<u32>, Vec<u32>)]) -> Vec<Example<'_>> {
    data.iter().map(|(s, t)| Example { source: s, target: t }).collect()
}

#[test]
fn padded_batch_matches_unbatched_reference() {
    let p = oracle::random_params(9, 7, 3, 2, 11);
    let data = batch();
    let pass: ForwardPass<f64> = forward(&p, &examples(&data), Mode::Eval).unwrap();
    let mut total = 0.0;
    for (b, (s, t)) in data.iter().enumerate() {
        let (nll, align) = oracle::score(&p, s, t);
        assert_eq!(pass.step_nll[b].len(), t.len());
        for (x, y) in pass.step_nll[b].iter().zip(&nll) {
            assert!((x - y).abs() < 1e-10, "example {b}: {x} vs {y}");
        }
        let got = pass.alignment(b);
        for (r1, r2) in got.iter().zip(&align) {
            assert_eq!(r1.len(), s.len());
            for (x, y) in r1.iter().zip(r2) {
                assert!((x - y).abs() < 1e-10);
            }
        }
        total += nll.iter().sum::<f64>();
    }
    assert!((pass.total_nll - total).abs() < 1e-9);
}

#[test]
fn decode_step_matches_reference() {
    let p = oracle::random_params(9, 7, 4, 3, 5);
    let src = [4, 8, 6, EOS];
    let enc = encode_source(&p, &src).unwrap();
    let renc = oracle::encode(&p, &src);
    let mut state = enc.initial_state();
    let mut rstate = oracle::RefState::initial(&p, &renc);
    let mut prev = SOS;
    for y in [5, 6, 4, EOS] {
        let out = decode_step(&p, &enc, prev, &state).unwrap();
        let (lp, alpha, next) = oracle::step(&p, &renc, prev, &rstate);
        for (x, y) in out.log_probs.iter().zip(&lp) {
            assert!((x - y).abs() < 1e-10);
        }
        for (x, y) in out.attention.iter().zip(&alpha) {
            assert!((x - y).abs() < 1e-10);
        }
        state = out.state;
        rstate = next;
        prev = y;
    }
}

#[test]
fn model_forward_agrees_with_step_decoding() {
    let p = oracle::random_params(9, 7, 3, 3, 8);
    let src = [5, 5, 7, EOS];
    let tgt = [6, 4, EOS];
    let scored = model_forward(&p, &src, &tgt, Mode::Eval).unwrap();
    let enc = encode_source(&p, &src).unwrap();
    let mut state = enc.initial_state();
    let mut prev = SOS;
    let mut total = 0.0;
    for &y in &tgt {
        let out = decode_step(&p, &enc, prev, &state).unwrap();
        total -= out.log_probs[y as usize];
        state = out.state;
        prev = y;
    }
    assert!((scored.total_nll - total).abs() < 1e-10);
    assert_eq!(scored.alignment.len(), tgt.len());
    for row in &scored.alignment {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn loss(p: &ModelParams<f64>, data: &[(Vec<u32>, Vec<u32>)], mode: Mode) -> f64 {
    forward(p, &examples(data), mode).unwrap().total_nll
}

fn gradient_check(mode: Mode) {
    let mut p = oracle::random_params(9, 7, 3, 2, 21);
    let data = batch();
    let pass = forward(&p, &examples(&data), mode).unwrap();
    let mut grads = p.zeros_like();
    backward(&p, &pass, &mut grads, 1.0);
    let mut analytic = Vec::new();
    grads.visit(|name, t| analytic.push((name.to_string(), t.data.clone())));
    let eps = 1e-6;
    let mut worst = 0.0f64;
    for (ti, (name, g)) in analytic.iter().enumerate() {
        for i in 0..g.len() {
            let bump = |p: &mut ModelParams<f64>, delta: f64| {
                let mut k = 0;
                p.visit_mut(|_, t| {
                    if k == ti {
                        t.data[i] += delta;
                    }
                    k += 1;
                });
            };
            bump(&mut p, eps);
            let up = loss(&p, &data, mode);
            bump(&mut p, -2.0 * eps);
            let down = loss(&p, &data, mode);
            bump(&mut p, eps);
            let numeric = (up - down) / (2.0 * eps);
            let err = (numeric - g[i]).abs() / (1.0f64).max(numeric.abs() + g[i].abs());
            assert!(err < 1e-6, "{name}[{i}]: analytic {} numeric {numeric}", g[i]);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-6);
}

#[test]
fn gradients_match_finite_differences() {
    gradient_check(Mode::Eval);
}

#[test]
fn gradients_match_finite_differences_with_dropout() {
    gradient_check(Mode::Train { dropout: 0.3, seed: 9 });
}

#[test]
fn backward_scales_linearly() {
    let p = oracle::random_params(9, 7, 3, 2, 2);
    let data = batch();
    let pass = forward(&p, &examples(&data), Mode::Eval).unwrap();
    let mut g1 = p.zeros_like();
    backward(&p, &pass, &mut g1, 1.0);
    let mut g2 = p.zeros_like();
    backward(&p, &pass, &mut g2, 0.25);
    assert!((g1.global_norm() * 0.25 - g2.global_norm()).abs() < 1e-12);
}

#[test]
fn dropout_changes_train_loss_but_not_eval() {
    let p = oracle::random_params(9, 7, 3, 2, 4);
    let data = batch();
    let e1 = loss(&p, &data, Mode::Eval);
    let e2 = loss(&p, &data, Mode::Eval);
    assert_eq!(e1, e2);
    let t1 = loss(&p, &data, Mode::Train { dropout: 0.5, seed: 1 });
    let t1b = loss(&p, &data, Mode::Train { dropout: 0.5, seed: 1 });
    let t2 = loss(&p, &data, Mode::Train { dropout: 0.5, seed: 2 });
    assert_eq!(t1, t1b);
    assert_ne!(t1, e1);
    assert_ne!(t1, t2);
    assert_eq!(loss(&p, &data, Mode::Train { dropout: 0.0, seed: 1 }), e1);
}

#[test]
fn single_precision_tracks_double() {
    let p = oracle::random_params(9, 7, 4, 4, 13);
    let q: ModelParams<f32> = p.cast();
    let data = batch();
    let a = loss(&p, &data, Mode::Eval);
    let b = forward(&q, &examples(&data), Mode::Eval).unwrap().total_nll;
    assert!((a - b).abs() < 1e-4 * a.abs().max(1.0), "{a} vs {b}");
}

#[test]
fn rejects_bad_inputs() {
    let p = oracle::random_params(9, 7, 3, 2, 1);
    let src = [4, EOS];
    assert!(forward(&p, &[Example { source: &[], target: &[EOS] }], Mode::Eval).is_err());
    assert!(forward(&p, &[Example { source: &src, target: &[7] }], Mode::Eval).is_err());
    assert!(forward::<f64>(&p, &[], Mode::Eval).is_err());
    let enc = encode_source(&p, &src).unwrap();
    assert!(decode_step(&p, &enc, 99, &enc.initial_state()).is_err());
    let mut bad = enc.initial_state();
    bad.ctx.pop();
    assert!(decode_step(&p, &enc, SOS, &bad).is_err());
}
