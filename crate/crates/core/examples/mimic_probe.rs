use mgcd_core::corpus::{flatten, Label};
use mgcd_core::stylemimic::*;
use mgcd_core::synth;
use mgcd_core::textproc::train_bpe;

fn main() {
    let t0 = std::time::Instant::now();
    let pairs = synth::prefix_style_corpus(&synth::PrefixStyleCorpusSpec {
        pairs: 950,
        sentences_per_doc: (1, 1),
        words_per_sentence: (3, 6),
        vocab_words: 12,
        seed: 5,
    });
    let (train, rest) = pairs.split_at(700);
    let (valid, test) = rest.split_at(100);
    let texts: Vec<&str> = train.iter().flat_map(|p| [p.hpc_text.as_str(), p.mgc_text.as_str()]).collect();
    let bpe = train_bpe(&texts, 384).unwrap();
    println!("bpe size {} in {:?}", bpe.size, t0.elapsed());

    let config = MimicConfig {
        d_model: 48,
        d_ff: 192,
        batch: 8,
        lr: 2e-3,
        epochs: 100,
        early_stop: 10,
        ..MimicConfig::desk(7)
    };
    let t = std::time::Instant::now();
    let report = train_mimic(&config, train, valid, bpe.clone(), &MimicTrainOptions { record_seconds: true, verbose: true }).unwrap();
    println!("train: {:?}", t.elapsed());

    // per-class copy diagnostics
    let hpc_ok = test.iter().filter(|p| report.model.generate(&p.hpc_text) == p.hpc_text).count();
    println!("HPC passthrough exact: {}/{}", hpc_ok, test.len());
    // exact match on held-out HPC targets
    let t = std::time::Instant::now();
    let outs = mgcd_core::parallel::map_slice(test, |p| report.model.generate(&p.mgc_text));
    let exact = outs.iter().zip(test).filter(|(o, p)| **o == p.hpc_text).count();
    println!("held-out exact match: {}/{} in {:?}", exact, test.len(), t.elapsed());
    for p in test.iter().take(3) {
        println!("in : {}\nout: {}\nref: {}\n", p.mgc_text, report.model.generate(&p.mgc_text), p.hpc_text);
    }

    // full pipeline: features + LR
    let t = std::time::Instant::now();
    let mimic = Mimic::Trained(report.model);
    let embedder_bpe = bpe.clone();
    let featurize = |pairs: &[mgcd_core::corpus::PairedRecord]| -> (Vec<DifferenceFeatures>, Vec<Label>) {
        let docs = flatten(pairs);
        let feats: Vec<DifferenceFeatures> = mgcd_core::parallel::map_slice(&docs, |d| extract_features(&d.text, &mimic, &Embedder::TermFrequency(&embedder_bpe)));
        let labels: Vec<Label> = docs.iter().map(|d| d.label).collect();
        (feats, labels)
    };
    let (train_f, train_l) = featurize(&train[..150]);
    let (test_f, test_l) = featurize(test);
    let lr = train_lr(&train_f, &train_l).unwrap();
    let correct = test_f.iter().zip(&test_l).filter(|(f, &l)| classify(f, &lr.model).unwrap().0 == l).count();
    println!("pipeline held-out accuracy: {}/{} in {:?}", correct, test_f.len(), t.elapsed());
}
