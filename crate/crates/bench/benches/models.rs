use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use incivility::classifier::{
    BiLstmClassifier, CharClassifier, CharCnn, CharModelConfig, FusionModel,
};
use incivility::nn::{Graph, Mode, Trainable};
use incivility::synth;
use incivility::tdsa::{TdLstm, TdLstmConfig, WordEmbeddingTable};
use incivility_bench::char_batch;

fn train_step<M: Trainable>(m: &M, batch: &[&M::Example]) {
    let mut g = Graph::new(m.params(), Mode::Train, 1);
    let loss = m.batch_loss(&mut g, batch).expect("loss");
    std::hint::black_box(g.backward(loss).expect("backward"));
}

fn char_models(c: &mut Criterion) {
    let (vocab, xs) = char_batch(64, 1);
    let refs: Vec<_> = xs.iter().collect();
    let cfg = CharModelConfig::default();
    let cnn = CharCnn::new(vocab.clone(), cfg.clone(), 1).expect("cnn");
    let lstm = BiLstmClassifier::new(vocab.clone(), cfg.clone(), 1).expect("bilstm");
    let mut fusion = FusionModel::new(vocab, cfg, 1).expect("fusion");
    fusion.fit_standardizer(&xs).expect("standardizer");

    let mut g = c.benchmark_group("batch64");
    g.sample_size(10);
    g.bench_function("charcnn_train_step", |b| b.iter(|| train_step(&cnn, &refs)));
    g.bench_function("bilstm_train_step", |b| b.iter(|| train_step(&lstm, &refs)));
    g.bench_function("fusion_train_step", |b| {
        b.iter(|| train_step(&fusion, &refs))
    });
    g.bench_function("charcnn_predict", |b| {
        b.iter(|| cnn.predict_proba(&xs).expect("predict"))
    });
    g.bench_function("bilstm_predict", |b| {
        b.iter(|| lstm.predict_proba(&xs).expect("predict"))
    });
    g.finish();
}

fn td_lstm(c: &mut Criterion) {
    let data = synth::two_entity_examples(64, 2);
    let refs: Vec<_> = data.iter().collect();
    let table = WordEmbeddingTable::random(&synth::sentiment_vocabulary(), 50, 1).expect("table");
    let m = TdLstm::new(&table, &TdLstmConfig::default(), 1).expect("td-lstm");
    c.bench_function("tdlstm_train_step_64", |b| b.iter(|| train_step(&m, &refs)));
    c.bench_function("tdlstm_predict", |b| {
        b.iter_batched(
            || data[0].clone(),
            |x| m.predict(&x).expect("predict"),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, char_models, td_lstm);
criterion_main!(benches);
