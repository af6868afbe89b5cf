#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace clab {

constexpr int kByteVocab = 256;
constexpr int kPadToken = 256;       // reserved pad/eos id
constexpr int kVocabSize = 257;

struct TokenStream {
    std::vector<int> ids;
    int generation = -1;  // -1 = real corpus, >= 0 = synthetic from that generation

    bool synthetic() const { return generation >= 0; }
};

struct ChunkedDataset {
    std::vector<int> tokens;  // rows * seq_len ids, row-major
    int seq_len = 128;
    int rows = 0;
    int generation = -1;

    const int* row(int r) const { return tokens.data() + static_cast<std::size_t>(r) * seq_len; }
};

// Byte-level tokenization: each byte maps to its own id, 0-255.
std::vector<int> tokenize(const std::string& text);
std::string detokenize(const std::vector<int>& ids);
// Lossy UTF-8 rendering for sample dumps: pad tokens and invalid byte
// sequences become U+FFFD.
std::string detokenize_utf8(const std::vector<int>& ids);

// Reads a corpus file as a continuous byte stream. Empty file is an error.
TokenStream load_corpus(const std::string& path);

// Truncate to a multiple of seq_len, reshape to rows, keep first subset_cap rows.
ChunkedDataset chunk(const TokenStream& stream, int seq_len, int subset_cap);

// Prompt pool: first min(target_pool_tokens, available) tokens rounded down to
// a seq_len multiple, as rows. Prompts are each row's leading tokens.
ChunkedDataset build_prompt_pool(const TokenStream& stream, int seq_len, int target_pool_tokens);

// Flatten generated rows and re-chunk with the same seq_len; rows must be uniform.
ChunkedDataset assemble_synthetic(const std::vector<std::vector<int>>& rows, int seq_len,
                                  int subset_cap, int generation);

// Deterministic epoch shuffle: permutation of [0, n) as a pure function of
// (seed, epoch).
std::vector<int> shuffle_order(int n, std::uint64_t seed, int epoch);

// Token-id CSV (one row per line) for external inspection.
void write_token_csv(const ChunkedDataset& ds, const std::string& path);
std::vector<std::vector<int>> read_token_csv(const std::string& path);

}  // namespace clab
