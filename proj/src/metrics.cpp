#include "capnet/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "capnet/errors.hpp"

namespace capnet {

namespace {

void validate(const CorpusPair& corpus) {
    if (corpus.candidates.empty()) throw ValidationError("empty candidate set");
    if (corpus.candidates.size() != corpus.references.size()) {
        throw ValidationError("candidate/reference id sets differ in size");
    }
    for (const auto& [id, cand] : corpus.candidates) {
        auto it = corpus.references.find(id);
        if (it == corpus.references.end()) {
            throw ValidationError("no references for segment " + id);
        }
        if (it->second.empty()) throw ValidationError("empty reference list for segment " + id);
    }
}

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
    Counts counts;
    if (toks.size() < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        ++counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
    }
    return counts;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&]() {
        while (!cur.empty()) {
            const char c = cur.back();
            if (c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':') {
                cur.pop_back();
            } else {
                break;
            }
        }
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        }
    }
    flush();
    return out;
}

double bleu(const CorpusPair& corpus, int max_n) {
    validate(corpus);
    if (max_n < 1 || max_n > 4) throw ValidationError("bleu supports max_n in 1..4");
    std::vector<double> matched(static_cast<std::size_t>(max_n), 0.0);
    std::vector<double> total(static_cast<std::size_t>(max_n), 0.0);
    double cand_len = 0, ref_len = 0;
    for (const auto& [id, cand] : corpus.candidates) {
        const auto& refs = corpus.references.at(id);
        cand_len += static_cast<double>(cand.size());
        // closest reference length; ties toward the shorter one
        std::size_t best_ref = refs[0].size();
        for (const auto& r : refs) {
            const auto diff = [&](std::size_t len) {
                return std::llabs(static_cast<long long>(len) - static_cast<long long>(cand.size()));
            };
            if (diff(r.size()) < diff(best_ref) || (diff(r.size()) == diff(best_ref) && r.size() < best_ref)) {
                best_ref = r.size();
            }
        }
        ref_len += static_cast<double>(best_ref);
        for (int n = 1; n <= max_n; ++n) {
            const Counts cc = ngram_counts(cand, static_cast<std::size_t>(n));
            Counts rmax;
            for (const auto& r : refs) {
                for (const auto& [g, c] : ngram_counts(r, static_cast<std::size_t>(n))) {
                    rmax[g] = std::max(rmax[g], c);
                }
            }
            for (const auto& [g, c] : cc) {
                total[static_cast<std::size_t>(n - 1)] += static_cast<double>(c);
                auto it = rmax.find(g);
                if (it != rmax.end()) {
                    matched[static_cast<std::size_t>(n - 1)] +=
                        static_cast<double>(std::min(c, it->second));
                }
            }
        }
    }
    double log_precision = 0.0;
    for (int n = 0; n < max_n; ++n) {
        if (matched[static_cast<std::size_t>(n)] <= 0.0 || total[static_cast<std::size_t>(n)] <= 0.0) {
            return 0.0;  // unsmoothed: any empty precision zeroes the score
        }
        log_precision += std::log(matched[static_cast<std::size_t>(n)] / total[static_cast<std::size_t>(n)]);
    }
    const double bp = cand_len >= ref_len || cand_len == 0.0
                          ? (cand_len == 0.0 ? 0.0 : 1.0)
                          : std::exp(1.0 - ref_len / cand_len);
    return bp * std::exp(log_precision / static_cast<double>(max_n));
}

double rouge_l(const CorpusPair& corpus) {
    validate(corpus);
    constexpr double beta = 1.2;
    constexpr double beta2 = beta * beta;
    double sum = 0.0;
    for (const auto& [id, cand] : corpus.candidates) {
        double best = 0.0;
        for (const auto& ref : corpus.references.at(id)) {
            if (cand.empty() || ref.empty()) continue;
            const double lcs = static_cast<double>(lcs_length(cand, ref));
            if (lcs == 0.0) continue;
            const double p = lcs / static_cast<double>(cand.size());
            const double r = lcs / static_cast<double>(ref.size());
            const double f = (1.0 + beta2) * p * r / (r + beta2 * p);
            best = std::max(best, f);
        }
        sum += best;
    }
    return sum / static_cast<double>(corpus.candidates.size());
}

double cider(const CorpusPair& corpus) {
    validate(corpus);
    constexpr int kMaxN = 4;
    constexpr double kSigma = 6.0;
    const double num_images = static_cast<double>(corpus.references.size());

    // document frequency: how many reference sets contain each n-gram
    std::map<std::vector<std::string>, double> df;
    for (const auto& [id, refs] : corpus.references) {
        std::map<std::vector<std::string>, bool> seen;
        for (const auto& r : refs) {
            for (int n = 1; n <= kMaxN; ++n) {
                for (const auto& [g, c] : ngram_counts(r, static_cast<std::size_t>(n))) seen[g] = true;
            }
        }
        for (const auto& [g, b] : seen) df[g] += 1.0;
    }
    auto idf = [&](const std::vector<std::string>& g) {
        auto it = df.find(g);
        const double d = it == df.end() ? 1.0 : std::max(1.0, it->second);
        return std::log(num_images / d);
    };

    double total = 0.0;
    for (const auto& [id, cand] : corpus.candidates) {
        const auto& refs = corpus.references.at(id);
        double seg = 0.0;
        for (int n = 1; n <= kMaxN; ++n) {
            const Counts cc = ngram_counts(cand, static_cast<std::size_t>(n));
            double cnorm = 0.0;
            for (const auto& [g, c] : cc) {
                const double v = static_cast<double>(c) * idf(g);
                cnorm += v * v;
            }
            cnorm = std::sqrt(cnorm);
            double ref_avg = 0.0;
            for (const auto& ref : refs) {
                const Counts rc = ngram_counts(ref, static_cast<std::size_t>(n));
                double rnorm = 0.0;
                for (const auto& [g, c] : rc) {
                    const double v = static_cast<double>(c) * idf(g);
                    rnorm += v * v;
                }
                rnorm = std::sqrt(rnorm);
                double dotp = 0.0;
                for (const auto& [g, c] : cc) {
                    auto it = rc.find(g);
                    if (it == rc.end()) continue;
                    const double w = idf(g);
                    dotp += static_cast<double>(std::min(c, it->second)) * w *
                            static_cast<double>(it->second) * w;
                }
                double sim = 0.0;
                if (cnorm > 0.0 && rnorm > 0.0) sim = dotp / (cnorm * rnorm);
                const double delta =
                    static_cast<double>(cand.size()) - static_cast<double>(ref.size());
                sim *= std::exp(-delta * delta / (2.0 * kSigma * kSigma));
                ref_avg += sim;
            }
            seg += ref_avg / static_cast<double>(refs.size());
        }
        total += 10.0 * seg / static_cast<double>(kMaxN);
    }
    return total / static_cast<double>(corpus.candidates.size());
}

namespace {

struct Alignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
};

// Greedy left-to-right exact alignment; prefers the reference position that
// extends the current contiguous run.
Alignment align_exact(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
    std::vector<bool> used(ref.size(), false);
    Alignment out;
    long prev_pos = -2;
    for (const auto& tok : cand) {
        long pos = -1;
        const long want = prev_pos + 1;
        if (want >= 0 && want < static_cast<long>(ref.size()) &&
            !used[static_cast<std::size_t>(want)] && ref[static_cast<std::size_t>(want)] == tok) {
            pos = want;
        } else {
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (!used[j] && ref[j] == tok) {
                    pos = static_cast<long>(j);
                    break;
                }
            }
        }
        if (pos < 0) {
            prev_pos = -2;
            continue;
        }
        used[static_cast<std::size_t>(pos)] = true;
        ++out.matches;
        if (pos != prev_pos + 1) ++out.chunks;
        prev_pos = pos;
    }
    return out;
}

}  // namespace

double meteor_lite(const CorpusPair& corpus) {
    validate(corpus);
    constexpr double alpha = 0.9;
    constexpr double gamma = 0.5;
    double sum = 0.0;
    for (const auto& [id, cand] : corpus.candidates) {
        double best = 0.0;
        for (const auto& ref : corpus.references.at(id)) {
            if (cand.empty() || ref.empty()) continue;
            const Alignment a = align_exact(cand, ref);
            if (a.matches == 0) continue;
            const double m = static_cast<double>(a.matches);
            const double p = m / static_cast<double>(cand.size());
            const double r = m / static_cast<double>(ref.size());
            const double f_mean = p * r / (alpha * p + (1.0 - alpha) * r);
            const double frag = static_cast<double>(a.chunks) / m;
            const double score = f_mean * (1.0 - gamma * frag * frag * frag);
            best = std::max(best, score);
        }
        sum += best;
    }
    return sum / static_cast<double>(corpus.candidates.size());
}

MetricsReport evaluate_corpus(const CorpusPair& corpus) {
    validate(corpus);
    MetricsReport r;
    r.b1 = bleu(corpus, 1);
    r.b2 = bleu(corpus, 2);
    r.b3 = bleu(corpus, 3);
    r.b4 = bleu(corpus, 4);
    r.meteor = meteor_lite(corpus);
    r.rouge_l = rouge_l(corpus);
    r.cider = cider(corpus);
    return r;
}

std::string metrics_csv_header() { return "model,B-1,B-2,B-3,B-4,METEOR,ROUGE-L,CIDEr"; }

std::string metrics_csv_row(const std::string& model, const MetricsReport& r) {
    std::ostringstream os;
    os << model << std::fixed << std::setprecision(4);
    for (double v : {r.b1, r.b2, r.b3, r.b4, r.meteor, r.rouge_l, r.cider}) os << "," << v;
    return os.str();
}

}  // namespace capnet
