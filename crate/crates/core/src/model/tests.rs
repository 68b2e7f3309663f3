use alloc::string::String;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::testkit::{sylls, tiny, toy, Toy, SYLLABLES};
use super::*;
use crate::corpus::ParallelSentence;
use crate::tensor::{math, Graph, ParamId, Tensor};

fn sentence() -> ParallelSentence {
    let py = ["bei'jing", "huan'ying", "ni"].iter().map(|p| sylls(p)).collect();
    ParallelSentence::new(py, ["北京", "欢迎", "你"].iter().map(|&w| String::from(w)).collect()).unwrap()
}

fn norm(xs: &[Real]) -> Real {
    math::sqrt(xs.iter().map(|x| x * x).sum())
}

#[cfg(not(feature = "f32"))]
#[test]
fn sentence_loss_gradient_matches_finite_differences() {
    let t = toy(2);
    let mut cfg = tiny(21);
    cfg.layers = 2;
    let mut m = t.model(cfg);
    // larger weights than the initializer so every gradient is well above
    // finite-difference round-off
    let mut rng = crate::tensor::seeded_rng(21);
    let ids: Vec<ParamId> = m.params().iter().map(|(id, _, _)| id).collect();
    for &id in &ids {
        let [r, c] = m.params().get(id).shape();
        m.params_mut().set(id, crate::tensor::uniform_tensor(&mut rng, r, c, 0.0, 0.5));
    }
    let s = sentence();
    let (_, grads) = m.sentence_gradients(&s, t.lex()).unwrap();
    let h = 1e-5;
    for id in ids {
        let n = m.params().get(id).len();
        let analytic: Vec<Real> = grads.get(id).map_or_else(|| alloc::vec![0.0; n], |g| g.data().to_vec());
        let mut numeric = alloc::vec![0.0; n];
        for k in 0..n {
            let orig = m.params().get(id).data()[k];
            m.params_mut().get_mut(id).data_mut()[k] = orig + h;
            let up = evaluate_sentence_loss(&m, &s, t.lex()).unwrap();
            m.params_mut().get_mut(id).data_mut()[k] = orig - h;
            let down = evaluate_sentence_loss(&m, &s, t.lex()).unwrap();
            m.params_mut().get_mut(id).data_mut()[k] = orig;
            numeric[k] = (up - down) / (2.0 * h);
        }
        let diff: Vec<Real> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric)).max(1e-7);
        let err = norm(&diff) / scale;
        assert!(err <= 1e-3, "{}: relative error {err}", m.params().name(id));
    }
}

fn cwe_and_ce(m: &Model, words: &[Vec<char>]) -> (Tensor, Tensor) {
    let mut g = Graph::new(m.params());
    let cwe = m.tgt.cwe(&mut g, words);
    let ce = m.tgt.ce(&mut g, words);
    (g.value(cwe).clone(), g.value(ce).clone())
}

#[test]
fn cwe_with_unit_word_vectors_is_ce() {
    let t = toy(2);
    let mut m = t.model(tiny(3));
    let id = m.params().id("tgt.word").unwrap();
    let [r, c] = m.params().get(id).shape();
    m.params_mut().set(id, Tensor::full(r, c, 1.0));
    let words: Vec<Vec<char>> = ["北京", "欢迎", "背景"].iter().map(|w| w.chars().collect()).collect();
    let (cwe, ce) = cwe_and_ce(&m, &words);
    assert_eq!(cwe, ce);
}

#[test]
fn word_without_row_uses_ce() {
    let t = toy(2);
    let m = t.model(tiny(4));
    let unseen: Vec<char> = "北影".chars().collect();
    assert!(m.target_bank().word_row(&unseen).is_none());
    let seen: Vec<char> = "你".chars().collect();
    assert!(m.target_bank().word_row(&seen).is_some());
    let (cwe, ce) = cwe_and_ce(&m, &[unseen, seen]);
    assert_eq!(cwe.row(0), ce.row(0));
    assert_ne!(cwe.row(1), ce.row(1));
}

#[test]
fn filter_ratio_controls_rows() {
    let t = toy(2);
    let mut cfg = tiny(5);
    cfg.filter_ratio = 0.0;
    assert!(t.model(cfg).target_bank().frequent_words().is_empty());
    cfg.filter_ratio = 1.0;
    assert_eq!(t.model(cfg).target_bank().frequent_words().len(), t.vocab.len());
    cfg.filter_ratio = 0.6;
    // ceil(0.6 * 6) most frequent words
    let m = t.model(cfg);
    let words: Vec<String> = m.target_bank().frequent_words().iter().map(|w| w.iter().collect()).collect();
    assert_eq!(words, ["你", "北京", "欢迎", "背景"]);
}

#[test]
fn composer_batches_by_length_without_changing_results() {
    let t = toy(2);
    let m = t.model(tiny(6));
    let words: Vec<Vec<char>> = ["北京", "你", "欢迎你", "景"].iter().map(|w| w.chars().collect()).collect();
    let (mixed, _) = cwe_and_ce(&m, &words);
    for (i, w) in words.iter().enumerate() {
        let (alone, _) = cwe_and_ce(&m, core::slice::from_ref(w));
        for (a, b) in alone.row(0).iter().zip(mixed.row(i)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn table_example_candidates() {
    let t = toy(2);
    let m = t.model(tiny(7));
    let opts = DecodeOptions { beam: 20, top_k: 20, keep_fraction: 1.0 };
    let out = beam_search(&m, &sylls("bei jing"), t.lex(), &opts).unwrap();
    let texts: Vec<&str> = out.iter().map(|c| c.text.as_str()).collect();
    for w in ["北京", "背景", "北景", "被京"] {
        assert!(texts.contains(&w), "{w} missing from {texts:?}");
    }
    // 3 x 2 character combinations; the two words coincide with two of them
    assert_eq!(out.len(), 6);
    assert_eq!(lattice_paths(&sylls("bei jing"), t.lex(), 1.0).unwrap(), 8);
}

#[test]
fn unknown_syllable_fails_before_decoding() {
    let t = toy(2);
    let m = t.model(tiny(8));
    let err = beam_search(&m, &sylls("bei zhuang"), t.lex(), &DecodeOptions::default()).unwrap_err();
    assert_eq!(err, crate::Error::InvalidSyllable(String::from("zhuang")));
}

#[test]
fn untrained_loss_is_log_vocab_size() {
    let t = toy(2);
    let s = sentence();
    let mut m = t.model(tiny(9));
    let m_size = build_target_vocab(&s.syllables(), &t.vocab, &t.dict, &t.common, Some(&s.hanzi_words)).len() as Real;
    let steps = s.hanzi_words.len() as Real;
    // small random weights: close to uniform
    let loss = evaluate_sentence_loss(&m, &s, t.lex()).unwrap() / steps;
    assert!((loss - math::ln(m_size)).abs() < 0.05 * math::ln(m_size), "{loss} vs ln {m_size}");
    // zero weights: exactly uniform
    let ids: Vec<ParamId> = m.params().iter().map(|(id, _, _)| id).collect();
    for id in ids {
        let [r, c] = m.params().get(id).shape();
        m.params_mut().set(id, Tensor::zeros(r, c));
    }
    let loss = evaluate_sentence_loss(&m, &s, t.lex()).unwrap() / steps;
    assert!((loss - math::ln(m_size)).abs() < 1e-12);
}

#[test]
fn missing_tensor_is_rejected() {
    let t = toy(2);
    let m = t.model(tiny(10));
    let mut partial = crate::tensor::ParamStore::new();
    for (_, name, tensor) in m.params().iter().filter(|(_, n, _)| *n != "attn.wc") {
        partial.add(name, tensor.clone());
    }
    assert!(Model::from_parts(m.meta(), partial).is_err());
    let mut reshaped = m.params().clone();
    let id = reshaped.id("dec.bos").unwrap();
    reshaped.set(id, Tensor::zeros(1, 3));
    assert!(Model::from_parts(m.meta(), reshaped).is_err());
    assert!(Model::from_parts(m.meta(), m.params().clone()).is_ok());
}

#[test]
fn checkpoint_round_trip_preserves_decoding() {
    let t = toy(2);
    let m = t.model(tiny(11));
    let back = Model::from_parts(m.meta(), decode_params(&encode_params(m.params())).unwrap()).unwrap();
    let input = sylls("bei jing huan ying ni");
    let opts = DecodeOptions::default();
    assert_eq!(beam_search(&m, &input, t.lex(), &opts).unwrap(), beam_search(&back, &input, t.lex(), &opts).unwrap());
    // every truncation is rejected, either by the decoder or by reassembly
    let bytes = encode_params(m.params());
    for cut in (0..bytes.len()).step_by(7) {
        let ok = decode_params(&bytes[..cut]).and_then(|p| Model::from_parts(m.meta(), p));
        assert!(ok.is_err(), "cut at {cut} accepted");
    }
}

#[test]
fn training_is_deterministic_and_learns() {
    let t = toy(2);
    let corpus = alloc::vec![sentence(), {
        let py = ["bei'jing", "ni"].iter().map(|p| sylls(p)).collect();
        ParallelSentence::new(py, alloc::vec![String::from("背景"), String::from("你")]).unwrap()
    }];
    let cfg = TrainConfig { epochs: 6, batch: 2, lr: 0.5, lr_halve_after: 100, clip_norm: Some(5.0), dropout: 0.2, seed: 3 };
    let run = || {
        let mut m = t.model(tiny(12));
        let logs = train(&mut m, &corpus, t.lex(), &cfg, |_, _| Ok(TrainControl::Continue)).unwrap();
        (encode_params(m.params()), logs)
    };
    let (a, logs) = run();
    let (b, _) = run();
    assert_eq!(a, b);
    assert!(logs.last().unwrap().loss < logs[0].loss);
}

fn toy_input() -> impl Strategy<Value = Vec<Syllable>> {
    prop::collection::vec(0..SYLLABLES.len(), 1..=4).prop_map(|ix| ix.into_iter().map(|i| sylls(SYLLABLES[i])[0]).collect())
}

fn check_alignment(t: &Toy, input: &[Syllable], c: &Candidate) {
    assert_eq!(c.text.chars().count(), input.len());
    let flat: Vec<Syllable> = c.pinyin_words.iter().flatten().copied().collect();
    assert_eq!(flat, input);
    for (py, w) in c.pinyin_words.iter().zip(&c.words) {
        let in_vocab = t.vocab.contains(py, w);
        let single = py.len() == 1 && w.chars().count() == 1 && t.dict.pronunciations(w.chars().next().unwrap()).is_some_and(|p| p.contains(&py[0]));
        assert!(in_vocab || single, "{w} is not a reading of {py:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_candidate_is_aligned(input in toy_input(), seed in 0u64..1000, beam in 1usize..12) {
        let t = toy(2);
        let m = t.model(tiny(seed));
        let opts = DecodeOptions { beam, top_k: 10, keep_fraction: 1.0 };
        let out = beam_search(&m, &input, t.lex(), &opts).unwrap();
        prop_assert!(!out.is_empty());
        for c in &out {
            check_alignment(&t, &input, c);
        }
        let texts: alloc::collections::BTreeSet<&str> = out.iter().map(|c| c.text.as_str()).collect();
        prop_assert_eq!(texts.len(), out.len());
        prop_assert!(out.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn beam_of_one_is_greedy(input in toy_input(), seed in 0u64..1000) {
        let t = toy(2);
        let m = t.model(tiny(seed));
        let opts = DecodeOptions { beam: 1, top_k: 1, keep_fraction: 1.0 };
        let beam = beam_search(&m, &input, t.lex(), &opts).unwrap();
        let greedy = greedy_search(&m, &input, t.lex(), 1.0).unwrap();
        prop_assert_eq!(&beam[0], &greedy);
    }

    #[test]
    fn wide_beam_is_exhaustive(input in prop::collection::vec(0..SYLLABLES.len(), 1..=3), seed in 0u64..1000, k in 1usize..8) {
        let t = toy(2);
        let input: Vec<Syllable> = input.into_iter().map(|i| sylls(SYLLABLES[i])[0]).collect();
        let m = t.model(tiny(seed));
        let width = lattice_paths(&input, t.lex(), 1.0).unwrap();
        let opts = DecodeOptions { beam: width, top_k: k, keep_fraction: 1.0 };
        let beam = beam_search(&m, &input, t.lex(), &opts).unwrap();
        let exact = exhaustive_search(&m, &input, t.lex(), &opts).unwrap();
        prop_assert_eq!(beam.len(), exact.len());
        for (a, b) in beam.iter().zip(&exact) {
            prop_assert_eq!(&a.text, &b.text);
            prop_assert!((a.score - b.score).abs() <= 1e-9);
        }
    }
}
