use std::collections::HashSet;
use std::fs;

use precedence_core::experiments::chi_square_homogeneity;
use precedence_core::ledger::{
    canonical_key, measurement_key, preparation_key, KeyMode, Ledger, PrepStep, PreparationSpec,
};
use precedence_core::qcore::random::{haar_unitary, random_povm};
use precedence_core::qcore::Povm;
use precedence_core::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec_corpus(n: usize, seed: u64) -> Vec<PreparationSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let dim = 2 + i % 3;
            let u = haar_unitary(dim, &mut rng);
            PreparationSpec::basis(dim, i % dim).then(PrepStep::Transform(u.matrix().clone()))
        })
        .collect()
}

#[test]
fn save_load_round_trip_ten_thousand_records() {
    let specs = spec_corpus(5, 1);
    let meas = measurement_key(&Povm::computational_basis(4));
    let keys: Vec<_> = specs.iter().map(|s| canonical_key(s).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ledger = Ledger::new();
    for _ in 0..10_000 {
        let k = keys[rng.random_range(0..keys.len())];
        ledger.record_outcome(k, meas, rng.random_range(0..4), 4).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.jsonl");
    ledger.save(&path).unwrap();
    let back = Ledger::load(&path).unwrap();
    assert_eq!(back.records(), ledger.records());
    assert_eq!(back.stream_ids(), ledger.stream_ids());
    for (p, m) in ledger.stream_ids() {
        assert_eq!(back.stream(&p, &m), ledger.stream(&p, &m));
    }
    // Saving again gives the same bytes.
    let again = dir.path().join("m.jsonl");
    back.save(&again).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn distinct_preparations_get_distinct_keys() {
    let specs = spec_corpus(1000, 3);
    let keys: HashSet<_> = specs.iter().map(|s| canonical_key(s).unwrap()).collect();
    assert_eq!(keys.len(), 1000);
    for s in specs.iter().take(50) {
        assert_eq!(canonical_key(s).unwrap(), canonical_key(&s.clone()).unwrap());
    }
}

#[test]
fn distinct_measurements_get_distinct_keys() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let keys: HashSet<_> = (0..200)
        .map(|i| measurement_key(&random_povm(2 + i % 3, 2 + i % 4, &mut rng)))
        .collect();
    assert_eq!(keys.len(), 200);
}

#[test]
fn semantic_keys_identify_equal_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = haar_unitary(3, &mut rng);
    // Applying U then U† leaves |0⟩ unchanged.
    let round = PreparationSpec::basis(3, 0)
        .then(PrepStep::Transform(u.matrix().clone()))
        .then(PrepStep::Transform(u.matrix().adjoint()));
    let plain = PreparationSpec::basis(3, 0);
    assert_ne!(
        preparation_key(&round, KeyMode::Syntactic).unwrap(),
        preparation_key(&plain, KeyMode::Syntactic).unwrap()
    );
    assert_eq!(
        preparation_key(&round, KeyMode::Semantic).unwrap(),
        preparation_key(&plain, KeyMode::Semantic).unwrap()
    );
}

#[test]
fn permuted_ledgers_sample_alike() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sequence: Vec<usize> = (0..1000).map(|_| rng.random_range(0..3)).collect();
    let mut permuted = sequence.clone();
    permuted.shuffle(&mut rng);
    let spec = PreparationSpec::basis(3, 0);
    let p = canonical_key(&spec).unwrap();
    let m = measurement_key(&Povm::computational_basis(3));
    let fill = |seq: &[usize]| {
        let mut l = Ledger::new();
        for &o in seq {
            l.record_outcome(p, m, o, 3).unwrap();
        }
        l
    };
    let (a, b) = (fill(&sequence), fill(&permuted));
    assert_eq!(a.precedent_ensemble(&p, &m).counts, b.precedent_ensemble(&p, &m).counts);
    let draw = |l: &Ledger, seed: u64| {
        let s = l.stream(&p, &m).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut c = vec![0u64; 3];
        for _ in 0..10_000 {
            c[s.sample_uniform(&mut r).unwrap()] += 1;
        }
        c
    };
    let (_, pval) = chi_square_homogeneity(&draw(&a, 7), &draw(&b, 8)).unwrap();
    assert!(pval > 0.001, "p = {pval}");
}

#[test]
fn corrupt_lines_are_reported() {
    let p = canonical_key(&PreparationSpec::basis(2, 0)).unwrap();
    let m = measurement_key(&Povm::computational_basis(2));
    let mut ledger = Ledger::new();
    for o in [0, 1, 1] {
        ledger.record_outcome(p, m, o, 2).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.jsonl");
    ledger.save(&path).unwrap();
    let text = fs::read_to_string(&path).unwrap();

    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{not json";
    fs::write(&path, lines.join("\n")).unwrap();
    match Ledger::load(&path) {
        Err(Error::CorruptLedger { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected corruption error, got {other:?}"),
    }

    let mut lines: Vec<&str> = text.lines().collect();
    lines.remove(2);
    fs::write(&path, lines.join("\n")).unwrap();
    match Ledger::load(&path) {
        Err(Error::CorruptLedger { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("seq_no"), "{message}");
        }
        other => panic!("expected sequence error, got {other:?}"),
    }
}
