#include "clab/trajectory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace clab {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_real(const std::string& field, int line_no) {
    try {
        std::size_t pos = 0;
        double v = std::stod(field, &pos);
        if (pos != field.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("trajectory line " + std::to_string(line_no) +
                                 ": bad real value '" + field + "'");
    }
}

}  // namespace

void write_trajectory(const std::vector<GenerationRecord>& records, const std::string& path) {
    for (const auto& r : records) {
        for (double v : {r.effective_rank, r.perplexity, r.mean_lm_loss, r.mean_asnc_loss,
                         r.distinct_2}) {
            if (!std::isfinite(v)) {
                throw std::runtime_error("write_trajectory: non-finite value at generation " +
                                         std::to_string(r.generation));
            }
        }
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_trajectory: cannot open " + path);
    f << kTrajectoryHeader << "\n";
    for (const auto& r : records) {
        f << r.generation << ',' << fmt(r.effective_rank) << ',' << fmt(r.perplexity) << ','
          << fmt(r.mean_lm_loss) << ',' << fmt(r.mean_asnc_loss) << ',' << fmt(r.distinct_2)
          << "\n";
    }
    if (!f) throw std::runtime_error("write_trajectory: write failed for " + path);
}

std::vector<GenerationRecord> read_trajectory(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_trajectory: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("read_trajectory: empty file " + path);
    if (line != kTrajectoryHeader) {
        throw std::runtime_error("trajectory line 1: unexpected header '" + line + "'");
    }
    std::vector<GenerationRecord> records;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6) {
            throw std::runtime_error("trajectory line " + std::to_string(line_no) + ": expected 6 fields, got " +
                                     std::to_string(fields.size()));
        }
        GenerationRecord r;
        try {
            std::size_t pos = 0;
            r.generation = std::stoi(fields[0], &pos);
            if (pos != fields[0].size()) throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw std::runtime_error("trajectory line " + std::to_string(line_no) +
                                     ": bad generation '" + fields[0] + "'");
        }
        r.effective_rank = parse_real(fields[1], line_no);
        r.perplexity = parse_real(fields[2], line_no);
        r.mean_lm_loss = parse_real(fields[3], line_no);
        r.mean_asnc_loss = parse_real(fields[4], line_no);
        r.distinct_2 = parse_real(fields[5], line_no);
        const int expected = static_cast<int>(records.size());
        if (r.generation != expected) {
            throw std::runtime_error("trajectory line " + std::to_string(line_no) +
                                     ": generation " + std::to_string(r.generation) +
                                     " out of sequence (expected " + std::to_string(expected) + ")");
        }
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace clab
