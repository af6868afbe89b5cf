#include "clab/autophagy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "clab/optim.hpp"
#include "clab/spectral.hpp"

namespace clab {

namespace {

constexpr int kGenBatch = 8;       // sampling batch width of the reference loop
constexpr int kSampleChars = 100;  // qualitative excerpt length in tokens

std::vector<int> batch_ids(const ChunkedDataset& ds, const std::vector<int>& order, int first,
                           int count) {
    std::vector<int> ids;
    ids.reserve(static_cast<std::size_t>(count) * static_cast<std::size_t>(ds.seq_len));
    for (int r = first; r < first + count; ++r) {
        const int* row = ds.row(order[static_cast<std::size_t>(r)]);
        ids.insert(ids.end(), row, row + ds.seq_len);
    }
    return ids;
}

std::vector<std::vector<int>> dataset_rows(const ChunkedDataset& ds) {
    std::vector<std::vector<int>> rows;
    rows.reserve(static_cast<std::size_t>(ds.rows));
    for (int r = 0; r < ds.rows; ++r) {
        rows.emplace_back(ds.row(r), ds.row(r) + ds.seq_len);
    }
    return rows;
}

std::string excerpt(const int* ids, int n) {
    return detokenize_utf8(std::vector<int>(ids, ids + std::min(n, kSampleChars)));
}

// No-grad pass over the dataset for the pre-training (Gen 0) record.
TrainStats eval_stats(const TinyLM& model, const ChunkedDataset& ds, int batch_size, int k_layers) {
    TrainStats s;
    const AsncConfig raw{1.0, k_layers};
    int batches = 0, asnc_batches = 0;
    for (int first = 0; first < ds.rows; first += batch_size) {
        const int count = std::min(batch_size, ds.rows - first);
        std::vector<int> ids(ds.row(first), ds.row(first) + static_cast<std::size_t>(count) * ds.seq_len);
        Tape tape(false);
        ForwardOutput out;
        s.mean_lm_loss += model.lm_loss(tape, ids, count, ds.seq_len, {}, out).item();
        ++batches;
        if (count >= 2) {
            s.mean_asnc_loss += asnc_loss(tape, out.hidden_states, raw).item();
            ++asnc_batches;
        }
    }
    s.mean_lm_loss /= static_cast<double>(batches);
    if (asnc_batches > 0) s.mean_asnc_loss /= static_cast<double>(asnc_batches);
    return s;
}

}  // namespace

void TrainConfig::validate() const {
    if (learning_rate <= 0.0 || epochs_per_gen <= 0 || clip_norm <= 0.0 || batch_size <= 0 ||
        weight_decay < 0.0) {
        throw std::invalid_argument("TrainConfig: all fields must be positive");
    }
}

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    ppl.validate();
    if (n_generations < 0) throw std::invalid_argument("ExperimentConfig: n_generations < 0");
    if (seq_len < 2 || seq_len > model.max_positions) {
        throw std::invalid_argument("ExperimentConfig: seq_len must be in [2, max_positions]");
    }
    if (prompt_len < 1 || prompt_len >= seq_len) {
        throw std::invalid_argument("ExperimentConfig: prompt_len must be in [1, seq_len)");
    }
    if (subset_cap < kGenBatch) {
        throw std::invalid_argument("ExperimentConfig: subset_cap below one sampling batch");
    }
    if (prompt_pool_tokens < seq_len) {
        throw std::invalid_argument("ExperimentConfig: prompt_pool_tokens below seq_len");
    }
    if (asnc.lambda < 0.0) throw std::invalid_argument("ExperimentConfig: negative lambda");
    if (asnc.k_layers < 1 || asnc.k_layers > model.n_layers + 1) {
        throw std::invalid_argument("ExperimentConfig: k_layers out of range");
    }
    if (sampling.top_k < 1 || sampling.temperature <= 0.0) {
        throw std::invalid_argument("ExperimentConfig: bad sampling parameters");
    }
}

TrainStats train_generation(TinyLM& model, const ChunkedDataset& dataset, const TrainConfig& tc,
                            const AsncConfig& ac, bool mncis_enabled, std::uint64_t shuffle_seed) {
    if (dataset.rows == 0) throw std::invalid_argument("train_generation: empty dataset");
    // fresh optimizer per generation, as in the reference loop
    AdamWConfig oc;
    oc.lr = tc.learning_rate;
    oc.weight_decay = tc.weight_decay;
    AdamW opt(oc);

    const bool couple = mncis_enabled && ac.lambda != 0.0;
    const AsncConfig raw{1.0, ac.k_layers};
    TrainStats stats;
    int batches = 0, asnc_batches = 0;
    for (int epoch = 0; epoch < tc.epochs_per_gen; ++epoch) {
        std::vector<int> order = shuffle_order(dataset.rows, shuffle_seed, epoch);
        for (int first = 0; first < dataset.rows; first += tc.batch_size) {
            const int count = std::min(tc.batch_size, dataset.rows - first);
            std::vector<int> ids = batch_ids(dataset, order, first, count);

            model.zero_grad();
            Tape tape(true);
            ForwardOutput out;
            Tensor lm = model.lm_loss(tape, ids, count, dataset.seq_len, {}, out);
            Tensor total = lm;
            double asnc_item = 0.0;
            if (count >= 2) {  // the gram matrix needs at least two rows
                if (couple) {
                    Tensor gram = asnc_loss(tape, out.hidden_states, raw);
                    asnc_item = gram.item();
                    total = add(tape, lm, scale(tape, gram, ac.lambda));
                } else {
                    Tape dead(false);
                    asnc_item = asnc_loss(dead, out.hidden_states, raw).item();
                }
                stats.mean_asnc_loss += asnc_item;
                ++asnc_batches;
            }
            const double lm_item = lm.item();
            if (!std::isfinite(lm_item) || !std::isfinite(asnc_item)) {
                throw std::runtime_error("train_generation: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(first / tc.batch_size));
            }
            stats.mean_lm_loss += lm_item;
            ++batches;

            tape.backward(total);
            clip_global_norm(model.parameters(), tc.clip_norm);
            opt.step(model.parameters());
        }
    }
    stats.mean_lm_loss /= static_cast<double>(batches);
    if (asnc_batches > 0) stats.mean_asnc_loss /= static_cast<double>(asnc_batches);
    return stats;
}

double dataset_effective_rank(const TinyLM& model, const ChunkedDataset& dataset, int batch_size) {
    if (dataset.rows < 2) throw std::invalid_argument("dataset_effective_rank: need >= 2 rows");
    const int d = model.config().d_model;
    HiddenBatch pooled;
    pooled.rows = dataset.rows;
    pooled.cols = d;
    pooled.data.resize(static_cast<std::size_t>(dataset.rows) * static_cast<std::size_t>(d));
    for (int first = 0; first < dataset.rows; first += batch_size) {
        const int count = std::min(batch_size, dataset.rows - first);
        std::vector<int> ids(dataset.row(first),
                             dataset.row(first) + static_cast<std::size_t>(count) * dataset.seq_len);
        Tape tape(false);
        ForwardOutput out = model.forward(tape, ids, count, dataset.seq_len);
        const Tensor& h = out.hidden_states.back();  // [count x T x D]
        const double* hv = h.data();
        for (int b = 0; b < count; ++b) {
            for (int j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int t = 0; t < dataset.seq_len; ++t) {
                    acc += hv[(static_cast<std::size_t>(b) * dataset.seq_len + t) * d + j];
                }
                pooled.at(first + b, j) = acc / static_cast<double>(dataset.seq_len);
            }
        }
    }
    return effective_rank(pooled);
}

std::vector<std::vector<int>> generate_dataset(const TinyLM& model, const ChunkedDataset& pool,
                                               int n_rows, int prompt_len, int seq_len,
                                               const SamplingParams& sampling,
                                               std::uint64_t seed) {
    if (pool.rows == 0) throw std::invalid_argument("generate_dataset: empty prompt pool");
    const int total_batches = n_rows / kGenBatch;
    if (total_batches < 1) throw std::invalid_argument("generate_dataset: n_rows below one batch");

    Rng idx_rng(Rng::mix(seed, 0x1D, 0));
    std::vector<std::vector<int>> out;
    out.reserve(static_cast<std::size_t>(total_batches) * kGenBatch);
    for (int b = 0; b < total_batches; ++b) {
        std::vector<std::vector<int>> prompts;
        prompts.reserve(kGenBatch);
        for (int j = 0; j < kGenBatch; ++j) {
            const int r = static_cast<int>(idx_rng.randint(static_cast<std::uint64_t>(pool.rows)));
            prompts.emplace_back(pool.row(r), pool.row(r) + prompt_len);
        }
        auto batch = model.generate(prompts, seq_len, sampling, Rng::mix(seed, 0x5A, b));
        for (auto& row : batch) out.push_back(std::move(row));
    }
    return out;
}

std::vector<GenerationRecord> run_experiment(
    const ExperimentConfig& cfg, const std::function<void(const GenerationRecord&)>& on_record) {
    cfg.validate();
    TokenStream real = load_corpus(cfg.corpus_path);
    ChunkedDataset dataset = chunk(real, cfg.seq_len, cfg.subset_cap);
    ChunkedDataset pool = build_prompt_pool(real, cfg.seq_len, cfg.prompt_pool_tokens);

    TinyLM model = TinyLM::init(cfg.model, Rng::mix(cfg.seed, 0xA0, 0));

    std::vector<GenerationRecord> records;
    auto emit = [&](GenerationRecord rec) {
        records.push_back(std::move(rec));
        if (on_record) on_record(records.back());
    };

    {
        GenerationRecord rec;
        rec.generation = 0;
        rec.perplexity = sliding_window_ppl(model, real.ids, cfg.ppl).ppl;
        rec.effective_rank = dataset_effective_rank(model, dataset, cfg.train.batch_size);
        TrainStats s = eval_stats(model, dataset, cfg.train.batch_size, cfg.asnc.k_layers);
        rec.mean_lm_loss = s.mean_lm_loss;
        rec.mean_asnc_loss = s.mean_asnc_loss;
        rec.distinct_2 = distinct_n(dataset_rows(dataset), 2);
        rec.sample_text = excerpt(dataset.row(0), dataset.seq_len);
        emit(std::move(rec));
    }

    for (int gen = 1; gen <= cfg.n_generations; ++gen) {
        TrainStats stats =
            train_generation(model, dataset, cfg.train, cfg.asnc, cfg.mncis_enabled,
                             Rng::mix(cfg.seed, 0xB0, static_cast<std::uint64_t>(gen)));

        GenerationRecord rec;
        rec.generation = gen;
        rec.perplexity = sliding_window_ppl(model, real.ids, cfg.ppl).ppl;
        // rank of what the model is training on: real data at Gen 1, its own
        // output afterwards
        rec.effective_rank = dataset_effective_rank(model, dataset, cfg.train.batch_size);
        rec.mean_lm_loss = stats.mean_lm_loss;
        rec.mean_asnc_loss = stats.mean_asnc_loss;

        auto samples =
            generate_dataset(model, pool, cfg.subset_cap, cfg.prompt_len, cfg.seq_len,
                             cfg.sampling, Rng::mix(cfg.seed, 0xC0, static_cast<std::uint64_t>(gen)));
        rec.distinct_2 = distinct_n(samples, 2);
        rec.sample_text = excerpt(samples[0].data(), static_cast<int>(samples[0].size()));
        emit(std::move(rec));

        dataset = assemble_synthetic(samples, cfg.seq_len, cfg.subset_cap, gen);
    }
    return records;
}

}  // namespace clab
