use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use log::{debug, info};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::EmbeddingModel;
use super::sgns::{apply_example, PairExample, Scratch, SharedMatrix};
use super::{build_vocab, EmbeddingError, Result, TrainParams, Vocab};
use crate::corpus::TokenStream;

/// Smallest fraction of the initial learning rate used near the end.
const MIN_LR_FRACTION: f64 = 1e-4;

/// Trains a skip-gram negative-sampling model.
///
/// Input vectors start uniform in `±0.5/dim`, output vectors at zero. Each
/// position draws a window size uniformly from `1..=window`; frequent words
/// are discarded with probability `1 - sqrt(t / f(w))`; negatives come from
/// the unigram distribution raised to 3/4. The learning rate decays linearly
/// with the number of processed tokens.
///
/// With `threads == 1` the result is a pure function of the stream and the
/// parameters.
pub fn train(streams: &TokenStream, params: &TrainParams) -> Result<EmbeddingModel> {
    params.validate()?;
    let vocab = build_vocab(streams, params.min_count)?;
    let subwords = params.subword_index();
    let dim = params.dim;
    let words = vocab.len();
    let bucket_rows = if subwords.is_some() { params.bucket } else { 0 };

    let mut init_rng = ChaCha8Rng::seed_from_u64(params.seed);
    let bound = 0.5 / dim as f32;
    let init: Vec<f32> = (0..(words + bucket_rows) * dim)
        .map(|_| (init_rng.random::<f32>() * 2.0 - 1.0) * bound)
        .collect();
    let input = SharedMatrix::from_vec(words + bucket_rows, dim, init);
    let output = SharedMatrix::<f32>::zeros(words, dim);

    // Rows composing each word's center vector.
    let center_rows: Vec<Vec<usize>> = (0..words)
        .map(|w| {
            let mut rows = vec![w];
            if let Some(index) = &subwords {
                rows.extend(
                    index
                        .slots(vocab.token(w), true)
                        .into_iter()
                        .map(|slot| words + slot as usize),
                );
            }
            rows
        })
        .collect();

    let docs: Vec<Vec<usize>> = streams
        .docs
        .iter()
        .map(|doc| doc.iter().filter_map(|t| vocab.get(t)).collect())
        .collect();
    let corpus_tokens: u64 = docs.iter().map(|d| d.len() as u64).sum();

    let ctx = TrainContext {
        params,
        keep_prob: keep_probabilities(&vocab, params.subsample_t),
        noise: WeightedIndex::new((0..words).map(|w| (vocab.count(w) as f64).powf(0.75)))
            .expect("vocabulary counts are positive"),
        center_rows,
        docs,
        total_work: (corpus_tokens * params.epochs as u64).max(1),
        processed: AtomicU64::new(0),
        steps: AtomicU64::new(0),
        failed: AtomicBool::new(false),
        failure: Mutex::new(None),
        loss: Mutex::new((0.0, 0)),
        input,
        output,
    };

    info!(
        "training: {} words, {} bucket rows, {} tokens, {} epochs, {} thread(s)",
        words, bucket_rows, corpus_tokens, params.epochs, params.threads
    );
    if params.threads == 1 {
        ctx.run_worker(0);
    } else {
        std::thread::scope(|scope| {
            for tid in 0..params.threads {
                let ctx = &ctx;
                scope.spawn(move || ctx.run_worker(tid));
            }
        });
    }

    if let Some(err) = ctx.failure.into_inner().expect("failure lock poisoned") {
        return Err(err);
    }
    let (loss_sum, pairs) = ctx.loss.into_inner().expect("loss lock poisoned");
    debug!("mean pair loss {:.5} over {} pairs", loss_sum / pairs.max(1) as f64, pairs);

    EmbeddingModel::from_parts(
        Default::default(),
        params.clone(),
        Default::default(),
        vocab,
        ctx.input.into_vec(),
        Some(ctx.output.into_vec()),
    )
}

fn keep_probabilities(vocab: &Vocab, t: f64) -> Vec<f64> {
    let total = vocab.total_count() as f64;
    (0..vocab.len())
        .map(|w| {
            let freq = vocab.count(w) as f64 / total;
            (t / freq).sqrt().min(1.0)
        })
        .collect()
}

struct TrainContext<'a> {
    params: &'a TrainParams,
    keep_prob: Vec<f64>,
    noise: WeightedIndex<f64>,
    center_rows: Vec<Vec<usize>>,
    docs: Vec<Vec<usize>>,
    total_work: u64,
    processed: AtomicU64,
    steps: AtomicU64,
    failed: AtomicBool,
    failure: Mutex<Option<EmbeddingError>>,
    loss: Mutex<(f64, u64)>,
    input: SharedMatrix<f32>,
    output: SharedMatrix<f32>,
}

impl TrainContext<'_> {
    fn lr_at(&self, processed: u64) -> f64 {
        let progress = processed as f64 / self.total_work as f64;
        self.params.initial_lr * (1.0 - progress).max(MIN_LR_FRACTION)
    }

    fn run_worker(&self, tid: usize) {
        let params = self.params;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(1 + tid as u64));
        let mut scratch = Scratch::new(params.dim);
        let mut negatives = vec![0usize; params.negatives];
        let mut kept = Vec::new();
        let (mut loss_sum, mut pairs) = (0.0f64, 0u64);

        for _epoch in 0..params.epochs {
            for doc in self.docs.iter().skip(tid).step_by(params.threads) {
                if self.failed.load(Ordering::Relaxed) {
                    return;
                }
                kept.clear();
                kept.extend(
                    doc.iter()
                        .copied()
                        .filter(|&w| rng.random::<f64>() < self.keep_prob[w]),
                );
                let base = self.processed.load(Ordering::Relaxed);

                for i in 0..kept.len() {
                    // Progress is measured in original tokens.
                    let done = base + (i as u64 * doc.len() as u64) / kept.len().max(1) as u64;
                    let lr = self.lr_at(done);
                    let reach = rng.random_range(1..=params.window);
                    let lo = i.saturating_sub(reach);
                    let hi = (i + reach).min(kept.len() - 1);
                    for j in lo..=hi {
                        if j == i {
                            continue;
                        }
                        let positive = kept[j];
                        self.sample_negatives(&mut rng, positive, &mut negatives);
                        let ex = PairExample {
                            center_rows: &self.center_rows[kept[i]],
                            positive,
                            negatives: &negatives,
                        };
                        let loss = apply_example(&self.input, &self.output, &ex, lr as f32, &mut scratch);
                        let step = self.steps.fetch_add(1, Ordering::Relaxed);
                        if !loss.is_finite() {
                            self.fail(EmbeddingError::NonFinite { step, lr });
                            return;
                        }
                        loss_sum += loss as f64;
                        pairs += 1;
                    }
                }
                self.processed.fetch_add(doc.len() as u64, Ordering::Relaxed);
            }
        }

        let mut total = self.loss.lock().expect("loss lock poisoned");
        total.0 += loss_sum;
        total.1 += pairs;
    }

    fn sample_negatives(&self, rng: &mut ChaCha8Rng, positive: usize, out: &mut [usize]) {
        let single_word = self.center_rows.len() == 1;
        for slot in out.iter_mut() {
            *slot = loop {
                let candidate = self.noise.sample(rng);
                if candidate != positive || single_word {
                    break candidate;
                }
            };
        }
    }

    fn fail(&self, err: EmbeddingError) {
        self.failed.store(true, Ordering::Relaxed);
        let mut slot = self.failure.lock().expect("failure lock poisoned");
        if slot.is_none() {
            *slot = Some(err);
        }
    }
}
