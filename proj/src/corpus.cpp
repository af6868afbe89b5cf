#include "clab/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "clab/rng.hpp"

namespace clab {

std::vector<int> tokenize(const std::string& text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<int>(c));
    return ids;
}

std::string detokenize(const std::vector<int>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= kVocabSize) throw std::invalid_argument("detokenize: id out of range");
        if (id < kByteVocab) out.push_back(static_cast<char>(id));
        // pad tokens carry no byte
    }
    return out;
}

std::string detokenize_utf8(const std::vector<int>& ids) {
    std::string bytes;
    std::vector<bool> is_pad;
    bytes.reserve(ids.size());
    is_pad.reserve(ids.size());
    const std::string replacement = "\xEF\xBF\xBD";  // U+FFFD
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= kVocabSize) throw std::invalid_argument("detokenize_utf8: id out of range");
        bytes.push_back(id == kPadToken ? '\0' : static_cast<char>(id));
        is_pad.push_back(id == kPadToken);
    }
    // validate UTF-8, replacing bad sequences and pad tokens
    std::size_t i = 0;
    while (i < bytes.size()) {
        if (is_pad[i]) {
            out += replacement;
            ++i;
            continue;
        }
        unsigned char c = static_cast<unsigned char>(bytes[i]);
        std::size_t len = 0;
        if (c < 0x80) {
            len = 1;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
        }
        bool ok = len > 0 && i + len <= bytes.size();
        if (ok) {
            for (std::size_t j = 1; j < len; ++j) {
                if (is_pad[i + j] || (static_cast<unsigned char>(bytes[i + j]) & 0xC0) != 0x80) ok = false;
            }
        }
        if (ok) {
            out.append(bytes, i, len);
            i += len;
        } else {
            out += replacement;
            ++i;
        }
    }
    return out;
}

TokenStream load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    if (text.empty()) throw std::runtime_error("corpus file " + path + " is empty");
    TokenStream s;
    s.ids = tokenize(text);
    s.generation = -1;
    return s;
}

ChunkedDataset chunk(const TokenStream& stream, int seq_len, int subset_cap) {
    if (seq_len < 1) throw std::invalid_argument("chunk: seq_len must be positive");
    if (subset_cap < 1) throw std::invalid_argument("chunk: subset_cap must be positive");
    const int n = static_cast<int>(stream.ids.size());
    if (n < seq_len) {
        throw std::invalid_argument("chunk: stream of " + std::to_string(n) +
                                    " tokens is shorter than seq_len " + std::to_string(seq_len));
    }
    int rows = std::min(n / seq_len, subset_cap);
    ChunkedDataset ds;
    ds.seq_len = seq_len;
    ds.rows = rows;
    ds.generation = stream.generation;
    ds.tokens.assign(stream.ids.begin(), stream.ids.begin() + static_cast<std::size_t>(rows) * seq_len);
    return ds;
}

ChunkedDataset build_prompt_pool(const TokenStream& stream, int seq_len, int target_pool_tokens) {
    if (seq_len < 1) throw std::invalid_argument("build_prompt_pool: seq_len must be positive");
    const int n = static_cast<int>(stream.ids.size());
    if (n < seq_len) {
        throw std::invalid_argument("build_prompt_pool: stream shorter than seq_len");
    }
    int pool = std::min(n, target_pool_tokens) / seq_len * seq_len;
    ChunkedDataset ds;
    ds.seq_len = seq_len;
    ds.rows = pool / seq_len;
    ds.generation = stream.generation;
    ds.tokens.assign(stream.ids.begin(), stream.ids.begin() + pool);
    return ds;
}

ChunkedDataset assemble_synthetic(const std::vector<std::vector<int>>& rows, int seq_len,
                                  int subset_cap, int generation) {
    if (rows.empty()) throw std::invalid_argument("assemble_synthetic: no rows");
    TokenStream flat;
    flat.generation = generation;
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != seq_len) {
            throw std::invalid_argument("assemble_synthetic: ragged row of length " +
                                        std::to_string(r.size()) + ", expected " +
                                        std::to_string(seq_len));
        }
        flat.ids.insert(flat.ids.end(), r.begin(), r.end());
    }
    return chunk(flat, seq_len, subset_cap);
}

std::vector<int> shuffle_order(int n, std::uint64_t seed, int epoch) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(Rng::mix(seed, 0x51AFF1EDULL, static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(rng.randint(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    return order;
}

void write_token_csv(const ChunkedDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (int r = 0; r < ds.rows; ++r) {
        const int* row = ds.row(r);
        for (int c = 0; c < ds.seq_len; ++c) out << row[c] << (c + 1 == ds.seq_len ? "" : ",");
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<std::vector<int>> read_token_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<int>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<int> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(std::stoi(cell));
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad token id '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace clab
