#include "lens/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"

namespace lens::eval {

namespace {

void check_normalized(const Distribution& d, const char* which) {
    double sum = 0.0;
    for (const auto& [k, v] : d) {
        if (v < 0.0) throw NotNormalized(std::string(which) + " has a negative probability");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw NotNormalized(std::string(which) + " does not sum to 1");
}

double lookup(const Distribution& d, const std::string& k) {
    auto it = d.find(k);
    return it == d.end() ? 0.0 : it->second;
}

std::set<std::string> union_support(const Distribution& p, const Distribution& q) {
    std::set<std::string> keys;
    for (const auto& [k, v] : p) keys.insert(k);
    for (const auto& [k, v] : q) keys.insert(k);
    return keys;
}

bool parse_uint(const std::string& s, uint64_t& out) {
    if (s.empty() || s.size() > 20) return false;
    out = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        out = out * 10 + static_cast<uint64_t>(c - '0');
    }
    // reject leading zeros except for "0" itself
    if (s.size() > 1 && s[0] == '0') return false;
    return true;
}

bool parse_ip(const std::string& s, uint64_t& out) {
    uint64_t octets[4];
    size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        size_t dot = i < 3 ? s.find('.', pos) : s.size();
        if (dot == std::string::npos) return false;
        if (!parse_uint(s.substr(pos, dot - pos), octets[i])) return false;
        if (octets[i] > 255) return false;
        pos = dot + 1;
    }
    out = (octets[0] << 24) | (octets[1] << 16) | (octets[2] << 8) | octets[3];
    return true;
}

// Sort key: numeric values (integers, dotted quads) before and among
// themselves by magnitude, everything else lexically after.
struct SortKey {
    bool numeric = false;
    uint64_t num = 0;
    std::string text;

    bool operator<(const SortKey& o) const {
        if (numeric != o.numeric) return numeric;
        if (numeric) {
            if (num != o.num) return num < o.num;
            return text < o.text;
        }
        return text < o.text;
    }
};

SortKey sort_key(const std::string& v) {
    SortKey k;
    k.text = v;
    uint64_t n;
    if (parse_uint(v, n) || parse_ip(v, n)) {
        k.numeric = true;
        k.num = n;
    }
    return k;
}

} // namespace

Distribution frequencies(const std::vector<std::string>& values) {
    if (values.empty()) throw EmptyList("cannot build a distribution from an empty sample");
    Distribution d;
    for (const auto& v : values) d[v] += 1.0;
    for (auto& [k, v] : d) v /= static_cast<double>(values.size());
    return d;
}

double accuracy(const std::vector<std::string>& preds, const std::vector<std::string>& golds) {
    if (preds.size() != golds.size())
        throw LengthMismatch("prediction and gold lists differ in length");
    if (preds.empty()) throw EmptyList("cannot score an empty prediction list");
    size_t hit = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == golds[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double macro_f1(const std::vector<std::string>& preds, const std::vector<std::string>& golds,
                const std::vector<std::string>& label_space) {
    if (preds.size() != golds.size())
        throw LengthMismatch("prediction and gold lists differ in length");
    if (label_space.empty()) throw EmptyList("label space is empty");
    double sum = 0.0;
    for (const auto& cls : label_space) {
        int64_t tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < preds.size(); ++i) {
            bool p = preds[i] == cls;
            bool g = golds[i] == cls;
            if (p && g) ++tp;
            else if (p) ++fp;
            else if (g) ++fn;
        }
        // no support and no predictions: contributes 0
        double f1 = tp > 0 ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn) : 0.0;
        sum += f1;
    }
    return sum / static_cast<double>(label_space.size());
}

double jsd(const Distribution& p, const Distribution& q) {
    check_normalized(p, "first distribution");
    check_normalized(q, "second distribution");
    double div = 0.0;
    for (const auto& k : union_support(p, q)) {
        double pi = lookup(p, k);
        double qi = lookup(q, k);
        double mi = 0.5 * (pi + qi);
        if (pi > 0.0) div += 0.5 * pi * std::log2(pi / mi);
        if (qi > 0.0) div += 0.5 * qi * std::log2(qi / mi);
    }
    return std::clamp(div, 0.0, 1.0);
}

double tvd(const Distribution& p, const Distribution& q) {
    check_normalized(p, "first distribution");
    check_normalized(q, "second distribution");
    double sum = 0.0;
    for (const auto& k : union_support(p, q)) sum += std::abs(lookup(p, k) - lookup(q, k));
    return 0.5 * sum;
}

double dr(const std::vector<std::string>& generated, ValueKind kind) {
    if (generated.empty()) throw EmptyList("cannot compute diversity of an empty list");
    std::set<std::string> distinct_valid;
    for (const auto& v : generated) {
        uint64_t n;
        bool ok = false;
        switch (kind) {
            case ValueKind::IP: ok = parse_ip(v, n); break;
            case ValueKind::PORT:
            case ValueKind::LEN: ok = parse_uint(v, n) && n <= 65535; break;
        }
        if (ok) distinct_valid.insert(v);
    }
    return static_cast<double>(distinct_valid.size()) / static_cast<double>(generated.size());
}

DistributionTables distribution_report(const std::vector<std::string>& real,
                                       const std::vector<std::string>& generated, int k) {
    if (real.empty()) throw EmptyList("real sample is empty");
    if (generated.empty()) throw EmptyList("generated sample is empty");
    Distribution rf = frequencies(real);
    Distribution gf = frequencies(generated);

    DistributionTables out;

    // top-k by real frequency, ties broken by value order
    std::vector<std::pair<std::string, double>> ranked(rf.begin(), rf.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return sort_key(a.first) < sort_key(b.first);
    });
    for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(k); ++i)
        out.topk.push_back({ranked[i].first, ranked[i].second, lookup(gf, ranked[i].first)});

    // empirical CDFs on the sorted union of values
    std::vector<std::string> values;
    for (const auto& key : union_support(rf, gf)) values.push_back(key);
    std::sort(values.begin(), values.end(),
              [](const std::string& a, const std::string& b) { return sort_key(a) < sort_key(b); });
    double rc = 0.0, gc = 0.0;
    for (const auto& v : values) {
        rc += lookup(rf, v);
        gc += lookup(gf, v);
        out.cdf.push_back({v, rc, gc});
    }
    return out;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["task"] = task_name;
    j["kind"] = understanding ? "understanding" : "generation";
    j["examples"] = examples;
    j["truncated_predictions"] = truncated_predictions;
    if (understanding) {
        j["accuracy"] = accuracy;
        j["macro_f1"] = macro_f1;
    } else {
        j["jsd"] = jsd;
        j["tvd"] = tvd;
        j["dr"] = dr;
        nlohmann::json topk = nlohmann::json::array();
        for (const auto& r : tables.topk)
            topk.push_back({{"value", r.value},
                            {"real_freq", r.real_freq},
                            {"generated_freq", r.generated_freq}});
        j["topk"] = topk;
    }
    return j.dump(2);
}

void write_topk_csv(const std::vector<TopkRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw EvalError("cannot open for writing: " + path);
    out << "value,real_freq,generated_freq\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g", r.real_freq, r.generated_freq);
        out << r.value << ',' << buf << '\n';
    }
}

void write_cdf_csv(const std::vector<CdfRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw EvalError("cannot open for writing: " + path);
    out << "value,real_cdf,generated_cdf\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g", r.real_cdf, r.generated_cdf);
        out << r.value << ',' << buf << '\n';
    }
}

} // namespace lens::eval
