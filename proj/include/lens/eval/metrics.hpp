#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace lens::eval {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LengthMismatch : EvalError {
    using EvalError::EvalError;
};
struct NotNormalized : EvalError {
    using EvalError::EvalError;
};
struct EmptyList : EvalError {
    using EvalError::EvalError;
};

using Distribution = std::map<std::string, double>;

// Relative-frequency distribution of a sample; throws EmptyList on empty input.
Distribution frequencies(const std::vector<std::string>& values);

// Exact-string-match fraction. Throws LengthMismatch.
double accuracy(const std::vector<std::string>& preds, const std::vector<std::string>& golds);

// Unweighted mean of per-class F1 over label_space; a class with no gold
// support and no predictions contributes F1 = 0. Throws LengthMismatch.
double macro_f1(const std::vector<std::string>& preds, const std::vector<std::string>& golds,
                const std::vector<std::string>& label_space);

// Jensen-Shannon divergence, base-2 logarithm, over the union support.
// Both inputs must sum to 1 within 1e-9 (NotNormalized otherwise).
double jsd(const Distribution& p, const Distribution& q);

// Total variation distance: half the L1 distance over the union support.
double tvd(const Distribution& p, const Distribution& q);

enum class ValueKind { IP, PORT, LEN };

// Diversity ratio: |distinct valid values| / |total cases|.
// IP: dotted quad, each octet 0-255. PORT: integer 0-65535. LEN: integer 0-65535.
double dr(const std::vector<std::string>& generated, ValueKind kind);

struct TopkRow {
    std::string value;
    double real_freq = 0.0;
    double generated_freq = 0.0;
};

struct CdfRow {
    std::string value;
    double real_cdf = 0.0;
    double generated_cdf = 0.0;
};

struct DistributionTables {
    std::vector<TopkRow> topk;
    std::vector<CdfRow> cdf;
};

// Top-k most frequent real values with both relative frequencies, plus
// empirical CDFs of both samples on the sorted union of values. Values that
// parse as integers or dotted quads sort numerically, others lexically.
DistributionTables distribution_report(const std::vector<std::string>& real,
                                       const std::vector<std::string>& generated, int k = 5);

struct EvalReport {
    std::string task_name;
    bool understanding = false;
    // understanding
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    // generation
    double jsd = 0.0;
    double tvd = 0.0;
    double dr = 0.0;
    DistributionTables tables;
    int64_t examples = 0;
    int64_t truncated_predictions = 0;

    std::string to_json() const;
};

void write_topk_csv(const std::vector<TopkRow>& rows, const std::string& path);
void write_cdf_csv(const std::vector<CdfRow>& rows, const std::string& path);

} // namespace lens::eval
