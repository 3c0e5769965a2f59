use approx::assert_abs_diff_eq;
use biasattn::autodiff::Graph;
use biasattn::corpus::{SentencePair, Vocab};
use biasattn::model::{Architecture, BiasFlags, Bound, Model, ModelConfig};
use biasattn::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(arch: Architecture, flags: BiasFlags, vs: usize, vt: usize) -> ModelConfig {
    ModelConfig::new(arch, vs, vt)
        .with_dims(6, 5, 4)
        .with_flags(flags)
}

fn random_pair(rng: &mut ChaCha8Rng, vs: usize, vt: usize) -> SentencePair {
    let mut side = |v: usize| {
        let len = rng.gen_range(0..6);
        let mut ids = vec![Vocab::BOS_ID];
        ids.extend((0..len).map(|_| rng.gen_range(0..v)));
        ids.push(Vocab::EOS_ID);
        ids
    };
    let s = side(vs);
    let t = side(vt);
    SentencePair::new(s, t).unwrap()
}

#[test]
fn zero_encoder_gives_zero_states() {
    let model = Model::zeroed(tiny(Architecture::Attentional, BiasFlags::none(), 5, 5)).unwrap();
    let mut g = Graph::new();
    let mut b = Bound::new(&model);
    let enc = model
        .encode_bidirectional(&mut g, &mut b, &[0, 3, 4, 1])
        .unwrap();
    assert_eq!(enc.len(), 4);
    assert_eq!(g.dims(enc.matrix), (12, 4));
    assert!(g.value(enc.matrix).data().iter().all(|v| *v == 0.0));

    let base = Model::zeroed(tiny(Architecture::Baseline, BiasFlags::none(), 5, 5)).unwrap();
    let mut g = Graph::new();
    let mut b = Bound::new(&base);
    let v = base.encode_baseline(&mut g, &mut b, &[0, 1]).unwrap();
    assert!(g.value(v).data().iter().all(|x| *x == 0.0));
}

#[test]
fn encoder_rejects_unknown_ids() {
    let model = Model::new(tiny(Architecture::Attentional, BiasFlags::none(), 5, 5), 0).unwrap();
    let mut g = Graph::new();
    let mut b = Bound::new(&model);
    assert!(model
        .encode_bidirectional(&mut g, &mut b, &[0, 5, 1])
        .is_err());
}

#[test]
fn uniform_model_nll_is_predicted_tokens_times_log_vocab() {
    for arch in [Architecture::Attentional, Architecture::Baseline] {
        let model = Model::zeroed(tiny(arch, BiasFlags::none(), 4, 4)).unwrap();
        // Three predicted tokens: two words and `</s>`.
        let pair = SentencePair::new(vec![0, 2, 3, 1], vec![0, 3, 2, 1]).unwrap();
        let (nll, trace) = model.sentence_nll(&pair).unwrap();
        assert_abs_diff_eq!(nll, 3.0 * 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(nll, 4.158883, epsilon = 1e-6);
        match arch {
            Architecture::Baseline => assert!(trace.is_empty()),
            Architecture::Attentional => {
                assert_eq!((trace.rows(), trace.cols()), (3, 4));
                for j in 0..3 {
                    assert!(trace.row(j).iter().all(|a| *a == 0.25));
                }
            }
        }
    }
}

#[test]
fn zero_scorer_vector_gives_uniform_attention() {
    let mut model =
        Model::new(tiny(Architecture::Attentional, BiasFlags::align(), 6, 6), 2).unwrap();
    let v = model.params().id("att.v").unwrap();
    *model.params_mut().get_mut(v) = Tensor::zeros(4, 1);
    let pair = SentencePair::new(vec![0, 3, 4, 5, 1], vec![0, 5, 1]).unwrap();
    let (_, trace) = model.sentence_nll(&pair).unwrap();
    for j in 0..trace.rows() {
        for a in trace.row(j) {
            assert_abs_diff_eq!(*a, 0.2, epsilon = 1e-15);
        }
    }
}

#[test]
fn logits_have_target_vocab_shape_and_zero_weights_give_bias() {
    let cfg = tiny(Architecture::Attentional, BiasFlags::all(), 5, 7);
    let mut model = Model::zeroed(cfg).unwrap();
    let b_to = model.params().id("out.b_to").unwrap();
    let bias = Tensor::column(vec![0.1, -0.2, 0.3, 0.0, 0.5, 1.0, -1.0]).unwrap();
    *model.params_mut().get_mut(b_to) = bias.clone();
    let mut g = Graph::new();
    let mut b = Bound::new(&model);
    let state = model.initial_decoder_state(&mut g, None).unwrap();
    let context = g.input(Tensor::zeros(12, 1)).unwrap();
    let (_, logits) = model
        .decoder_step(&mut g, &mut b, &state, 3, Some(context))
        .unwrap();
    assert_eq!(g.value(logits), &bias);
    assert!(model
        .decoder_step(&mut g, &mut b, &state, 7, Some(context))
        .is_err());
}

/// Copies every parameter of `from` that `to` also has, by name.
fn copy_shared(from: &Model, to: &mut Model) {
    let names: Vec<String> = to.params().iter().map(|(_, n, _)| n.to_string()).collect();
    for name in names {
        let id = to.params().id(&name).unwrap();
        *to.params_mut().get_mut(id) = from.params().by_name(&name).unwrap().clone();
    }
}

#[test]
fn disabled_biases_reduce_to_plain_scorer() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut biased =
        Model::new(tiny(Architecture::Attentional, BiasFlags::all(), 7, 7), 3).unwrap();
    for name in ["att.w_ap", "att.w_am", "att.w_af"] {
        let id = biased.params().id(name).unwrap();
        let t = biased.params().get(id);
        *biased.params_mut().get_mut(id) = Tensor::zeros(t.rows(), t.cols());
    }
    let mut plain =
        Model::new(tiny(Architecture::Attentional, BiasFlags::none(), 7, 7), 99).unwrap();
    copy_shared(&biased, &mut plain);
    for _ in 0..20 {
        let pair = random_pair(&mut rng, 7, 7);
        let (a, ta) = biased.sentence_nll(&pair).unwrap();
        let (b, tb) = plain.sentence_nll(&pair).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        for (x, y) in ta.values.data().iter().zip(tb.values.data()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
        }
    }
}

#[test]
fn fertilities_sum_to_predicted_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = Model::new(tiny(Architecture::Attentional, BiasFlags::all(), 6, 6), 1).unwrap();
    for _ in 0..30 {
        let pair = random_pair(&mut rng, 6, 6);
        let (_, trace) = model.sentence_nll(&pair).unwrap();
        let total: f64 = trace.fertilities().iter().sum();
        assert_abs_diff_eq!(total, pair.predicted_len() as f64, epsilon = 1e-6);
    }
}

#[test]
fn greedy_decode_stops_and_caps() {
    let cfg = tiny(Architecture::Attentional, BiasFlags::align(), 5, 5);
    let mut model = Model::zeroed(cfg).unwrap();
    let b_to = model.params().id("out.b_to").unwrap();
    let mut bias = Tensor::zeros(5, 1);
    bias.set(Vocab::EOS_ID, 0, 1.0);
    *model.params_mut().get_mut(b_to) = bias.clone();
    assert!(model.greedy_decode(&[0, 3, 1], 10).unwrap().is_empty());

    bias.set(Vocab::EOS_ID, 0, 0.0);
    bias.set(4, 0, 1.0);
    *model.params_mut().get_mut(b_to) = bias;
    assert_eq!(model.greedy_decode(&[0, 3, 1], 1).unwrap(), vec![4]);
    assert_eq!(model.greedy_decode(&[0, 3, 1], 3).unwrap(), vec![4, 4, 4]);
    assert!(model.greedy_decode(&[0, 3, 1], 0).is_err());

    let random = Model::new(tiny(Architecture::Baseline, BiasFlags::none(), 5, 5), 7).unwrap();
    let a = random.greedy_decode(&[0, 2, 3, 1], 6).unwrap();
    assert_eq!(a, random.greedy_decode(&[0, 2, 3, 1], 6).unwrap());
    assert!(a.len() <= 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_rows_are_distributions(seed in 0u64..1000, flags in 0usize..8) {
        let flags = BiasFlags::scorer_combinations()[flags];
        let model = Model::new(tiny(Architecture::Attentional, flags, 6, 6), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_pair(&mut rng, 6, 6);
        let (nll, trace) = model.sentence_nll(&pair).unwrap();
        prop_assert!(nll >= 0.0);
        prop_assert_eq!(trace.rows(), pair.target.len() - 1);
        prop_assert_eq!(trace.cols(), pair.source.len());
        for j in 0..trace.rows() {
            let row = trace.row(j);
            prop_assert!(row.iter().all(|a| (0.0..=1.0).contains(a)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }
}
