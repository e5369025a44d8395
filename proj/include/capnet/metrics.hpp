#pragma once

#include <map>
#include <string>
#include <vector>

namespace capnet {

// Candidate/reference token sequences keyed by segment id. Reference lists
// must be non-empty and cover the same ids.
struct CorpusPair {
    std::map<std::string, std::vector<std::string>> candidates;
    std::map<std::string, std::vector<std::vector<std::string>>> references;
};

struct MetricsReport {
    double b1 = 0, b2 = 0, b3 = 0, b4 = 0;
    double meteor = 0;  // METEOR-lite, exact-match variant
    double rouge_l = 0;
    double cider = 0;
};

// Lowercase, split on whitespace, strip terminal punctuation (.,!?;:).
std::vector<std::string> tokenize(const std::string& text);

// Corpus BLEU: clipped n-gram precision, uniform geometric mean over
// 1..max_n, brevity penalty from closest reference lengths, no smoothing.
double bleu(const CorpusPair& corpus, int max_n);

// LCS F-measure with beta = 1.2, max over references, mean over segments.
double rouge_l(const CorpusPair& corpus);

// CIDEr-D: tf-idf n-gram cosine (n = 1..4) with clipped candidate counts and
// a Gaussian length penalty (sigma = 6), averaged over n, scaled by 10.
double cider(const CorpusPair& corpus);

// Exact-match unigram alignment; F_mean = PR/(0.9 P + 0.1 R), fragmentation
// penalty 0.5 (chunks/matches)^3. Not comparable to full METEOR.
double meteor_lite(const CorpusPair& corpus);

MetricsReport evaluate_corpus(const CorpusPair& corpus);

// Table row in column order B-1..B-4, METEOR, ROUGE-L, CIDEr.
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& model, const MetricsReport& r);

}  // namespace capnet
