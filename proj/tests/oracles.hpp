#pragma once

// Brute-force reference implementations. Each is written from the definition
// and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <openssl/evp.h>

namespace crumq::oracle {

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

/// Every subset of `ids` with 2..6 members and at least one external member,
/// each subset sorted.
inline std::set<std::vector<std::string>> qualifying_subsets(const std::vector<std::string>& ids,
                                                             const std::vector<bool>& external) {
    std::set<std::vector<std::string>> out;
    const std::size_t n = ids.size();
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        std::vector<std::string> s;
        int ext = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) {
                s.push_back(ids[i]);
                ext += external[i];
            }
        if (s.size() < 2 || s.size() > 6 || ext == 0) continue;
        std::sort(s.begin(), s.end());
        out.insert(s);
    }
    return out;
}

inline std::uint64_t choose(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// Top-k (id, score) by full scan: score descending, id ascending.
inline std::vector<std::pair<std::string, double>> cosine_topk(
    const std::vector<std::pair<std::string, std::vector<float>>>& entries, const std::vector<float>& q,
    std::size_t k) {
    std::vector<std::pair<std::string, double>> all;
    for (const auto& [id, v] : entries) {
        double s = 0;
        for (std::size_t i = 0; i < v.size(); ++i) s += double(v[i]) * double(q[i]);
        all.emplace_back(id, s);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

/// Holm step-down from its definition: with p sorted ascending, reject
/// H_(1..j-1) where j is the first index (1-based) with p_(j) > alpha/(m-j+1).
inline std::vector<bool> holm(const std::vector<double>& p, double alpha) {
    const std::size_t m = p.size();
    std::vector<double> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    double cutoff = -1.0;  // reject every p <= cutoff
    for (std::size_t j = 1; j <= m; ++j) {
        if (sorted[j - 1] > alpha / double(m - j + 1)) break;
        cutoff = sorted[j - 1];
    }
    std::vector<bool> out;
    for (double x : p) out.push_back(x <= cutoff);
    return out;
}

inline std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

/// Bag-of-words F1 over whitespace tokens via explicit multiset intersection.
inline double multiset_f1(const std::string& pred, const std::string& gold) {
    auto p = words(pred), g = words(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, int> cp, cg;
    for (auto& w : p) ++cp[w];
    for (auto& w : g) ++cg[w];
    int common = 0;
    for (auto& [w, c] : cp)
        if (cg.count(w)) common += std::min(c, cg[w]);
    if (common == 0) return 0.0;
    double prec = double(common) / p.size(), rec = double(common) / g.size();
    return 2 * prec * rec / (prec + rec);
}

inline double set_f1(const std::set<std::string>& p, const std::set<std::string>& g) {
    if (p.empty() && g.empty()) return 1.0;
    std::size_t common = 0;
    for (auto& x : p) common += g.count(x);
    if (common == 0) return 0.0;
    double prec = double(common) / p.size(), rec = double(common) / g.size();
    return 2 * prec * rec / (prec + rec);
}

/// Greedy scan in the given order: keep an item iff its similarity to every
/// kept item is below the threshold.
inline std::vector<std::size_t> greedy_keep(const std::vector<std::vector<double>>& sim, double threshold) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < sim.size(); ++i) {
        bool ok = true;
        for (auto j : kept)
            if (sim[i][j] >= threshold) ok = false;
        if (ok) kept.push_back(i);
    }
    return kept;
}

/// Token count by a hand-written scan: runs of [A-Za-z0-9_] or bytes >= 0x80
/// are one token, any other non-space byte is one token.
inline std::size_t count_tokens(const std::string& s) {
    auto word = [](unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; };
    std::size_t n = 0, i = 0;
    while (i < s.size()) {
        unsigned char c = s[i];
        if (std::isspace(c)) {
            ++i;
        } else if (word(c)) {
            ++n;
            while (i < s.size() && word(static_cast<unsigned char>(s[i]))) ++i;
        } else {
            ++n;
            ++i;
        }
    }
    return n;
}

/// One BM25 term contribution with the smoothed idf log(1 + (N - df + 0.5)/(df + 0.5)).
inline double bm25_term(double tf, double df, double n_docs, double len, double avg_len, double k1, double b) {
    double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg_len));
}

}  // namespace crumq::oracle
