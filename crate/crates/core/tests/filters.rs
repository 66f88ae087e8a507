use proptest::prelude::*;
use sensetag::corpus::Links;
use sensetag::refine::{is_synchronized, kb_filter, nn_filter, sync_filter};
use sensetag::{
    AlignedSentencePair, EmbeddingStore, LexKb, Pos, SenseAnnotation, Sentence, Source, Synset,
    SynsetId, Token, TokenPos,
};

const LEMMAS: [&str; 5] = ["a", "b", "c", "d", "e"];

fn kb() -> LexKb {
    // s{i} lexicalizes lemmas i and i+1 in both languages
    LexKb::from_synsets((0..5).map(|i| {
        Synset::new(format!("s{i}"), Pos::Noun)
            .with_lemma("en", LEMMAS[i])
            .with_lemma("en", LEMMAS[(i + 1) % 5])
            .with_lemma("it", LEMMAS[i])
    }))
    .unwrap()
}

fn sentence(lang: &'static str) -> impl Strategy<Value = Sentence> {
    prop::collection::vec((0..5usize, prop::option::of(0..6usize)), 1..8).prop_map(move |toks| {
        let tokens = toks
            .iter()
            .map(|(l, _)| Token::new(LEMMAS[*l], LEMMAS[*l], TokenPos::Noun))
            .collect();
        let mut s = Sentence::new("d", "0", lang, tokens);
        for (i, (_, ann)) in toks.iter().enumerate() {
            if let Some(k) = ann {
                // s5 is not in the KB
                let a = SenseAnnotation::new(i, SynsetId::new(format!("s{k}")), 0.5, Source::Ppr);
                s.set_annotation(a);
            }
        }
        s
    })
}

fn pair() -> impl Strategy<Value = AlignedSentencePair> {
    (sentence("en"), sentence("it")).prop_flat_map(|(src, tgt)| {
        let (n, m) = (src.tokens.len(), tgt.tokens.len());
        prop::collection::btree_set((0..n, 0..m), 0..=n + m)
            .prop_map(move |links: Links| AlignedSentencePair::new(src.clone(), tgt.clone(), links))
    })
}

fn stores(seed: &[f64]) -> (EmbeddingStore<f64>, EmbeddingStore<f64>) {
    let mut tok = EmbeddingStore::new(2);
    let mut syn = EmbeddingStore::new(2);
    for i in 0..5 {
        syn.insert(format!("s{i}"), vec![(i as f64).cos(), (i as f64).sin()])
            .unwrap();
    }
    for (i, x) in seed.iter().enumerate() {
        tok.insert(format!("d.0.t{i}"), vec![x.cos(), x.sin()])
            .unwrap();
    }
    (tok, syn)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn kb_filter_is_sound_and_idempotent(s in sentence("en")) {
        let kb = kb();
        let (once, removed) = kb_filter(&s, &kb);
        prop_assert_eq!(once.annotations.len() + removed.total(), s.annotations.len());
        for a in &once.annotations {
            prop_assert!(kb.synset_contains(a.synset.as_str(), &once.tokens[a.token].lemma, "en").unwrap());
        }
        let (twice, again) = kb_filter(&once, &kb);
        prop_assert_eq!(twice, once);
        prop_assert_eq!(again.total(), 0);
    }

    #[test]
    fn nn_filter_is_idempotent(s in sentence("en"), angles in prop::collection::vec(0.0f64..6.3, 0..8)) {
        let kb = kb();
        let (tok, syn) = stores(&angles);
        let (once, _) = nn_filter(&s, &tok, &syn, &kb).unwrap();
        let (twice, again) = nn_filter(&once, &tok, &syn, &kb).unwrap();
        prop_assert_eq!(twice, once);
        prop_assert_eq!(again.total(), 0);
    }

    #[test]
    fn sync_filter_synchronizes_and_is_idempotent(p in pair()) {
        let (once, (rs, rt)) = sync_filter(&p);
        prop_assert!(is_synchronized(&once));
        prop_assert_eq!(once.src.annotations.len() + rs, p.src.annotations.len());
        prop_assert_eq!(once.tgt.annotations.len() + rt, p.tgt.annotations.len());
        let (twice, removed) = sync_filter(&once);
        prop_assert_eq!(removed, (0, 0));
        prop_assert_eq!(twice, once);
    }
}
