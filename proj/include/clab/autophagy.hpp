#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "clab/asnc.hpp"
#include "clab/corpus.hpp"
#include "clab/eval_ppl.hpp"
#include "clab/tiny_lm.hpp"

namespace clab {

struct TrainConfig {
    double learning_rate = 3e-4;  // appendix uses 1e-5 for fine-tuning pretrained GPT-2
    int epochs_per_gen = 2;
    double clip_norm = 1.0;
    int batch_size = 16;
    double weight_decay = 0.01;

    void validate() const;
};

struct GenerationRecord {
    int generation = 0;
    double effective_rank = 0.0;
    double perplexity = 0.0;
    double mean_lm_loss = 0.0;
    double mean_asnc_loss = 0.0;  // unscaled mean gram loss, comparable across lambdas
    double distinct_2 = 0.0;
    std::string sample_text;
};

struct ExperimentConfig {
    std::uint64_t seed = 42;
    int n_generations = 15;
    bool mncis_enabled = false;
    AsncConfig asnc;
    TrainConfig train;
    PplConfig ppl;
    ModelConfig model;
    SamplingParams sampling;
    int seq_len = 128;
    int prompt_len = 5;
    int subset_cap = 1500;
    int prompt_pool_tokens = 5120;
    std::string corpus_path = "data/corpus.txt";
    std::string out_dir = "out";

    void validate() const;
};

struct TrainStats {
    double mean_lm_loss = 0.0;
    double mean_asnc_loss = 0.0;  // unscaled, averaged over batches with B >= 2
};

// One generation of training: epochs_per_gen shuffled passes, fresh optimizer
// state (the reference loop rebuilds its optimizer every generation). The ASNC
// term joins the objective only when mncis_enabled and lambda != 0, so a
// lambda-0 run optimizes the exact same objective as a disabled one; the gram
// loss is still evaluated for logging either way.
TrainStats train_generation(TinyLM& model, const ChunkedDataset& dataset, const TrainConfig& tc,
                            const AsncConfig& ac, bool mncis_enabled, std::uint64_t shuffle_seed);

// Mean-pool the final hidden state of every row and take the effective rank.
double dataset_effective_rank(const TinyLM& model, const ChunkedDataset& dataset, int batch_size);

// Top-k sampling of `n_rows` sequences (rounded down to whole batches of 8)
// from 5-token prompts drawn uniformly from the pool, each padded out to
// seq_len with the pad/eos id.
std::vector<std::vector<int>> generate_dataset(const TinyLM& model, const ChunkedDataset& pool,
                                               int n_rows, int prompt_len, int seq_len,
                                               const SamplingParams& sampling, std::uint64_t seed);

// Full autophagy run: a Gen-0 record measured before any training, then
// n_generations train/measure/generate cycles. `on_record`, when given, is
// called after each record so partial trajectories survive an abort.
std::vector<GenerationRecord> run_experiment(
    const ExperimentConfig& cfg,
    const std::function<void(const GenerationRecord&)>& on_record = nullptr);

}  // namespace clab
