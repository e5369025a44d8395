#include "capnet/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capnet/errors.hpp"

namespace capnet {

namespace {

double conv_sigma(std::size_t in_ch, std::size_t kh, std::size_t kw) {
    return std::sqrt(2.0 / static_cast<double>(in_ch * kh * kw));
}

}  // namespace

void init_trunk_params(ParamStore& params, const std::string& prefix, const EncoderConfig& cfg,
                       RngStream& rng) {
    params.add_gaussian(prefix + "conv1.K", {cfg.conv1_channels, 3, 5, 5}, conv_sigma(3, 5, 5), rng);
    params.add(prefix + "conv1.b", Tensor::zeros({cfg.conv1_channels}));
    params.add_gaussian(prefix + "conv2.K", {cfg.feat_dim, cfg.conv1_channels, 5, 5},
                        conv_sigma(cfg.conv1_channels, 5, 5), rng);
    params.add(prefix + "conv2.b", Tensor::zeros({cfg.feat_dim}));
}

void init_extractor_params(ParamStore& params, const EncoderConfig& cfg, std::size_t attr_vocab,
                           RngStream& rng) {
    init_trunk_params(params, "ext.", cfg, rng);
    params.add_gaussian("ext.head.K", {cfg.head_channels, cfg.feat_dim, 5, 5},
                        conv_sigma(cfg.feat_dim, 5, 5), rng);
    params.add("ext.head.b", Tensor::zeros({cfg.head_channels}));
    params.add_gaussian("ext.fc.W", {cfg.head_channels, cfg.head_fc_dim},
                        std::sqrt(1.0 / static_cast<double>(cfg.head_channels)), rng);
    params.add("ext.fc.b", Tensor::zeros({cfg.head_fc_dim}));
    params.add("ext.out.V", Tensor::zeros({cfg.head_fc_dim, attr_vocab}));
    params.add("ext.out.u", Tensor::zeros({attr_vocab}));
}

namespace {

ad::Value bind_p(ad::Tape& tape, Parameter& p, bool train) {
    return train ? tape.param(p) : tape.constant(p.value);
}

}  // namespace

ad::Value trunk_forward(ad::Tape& tape, ad::Value image, ParamStore& params,
                        const std::string& prefix, bool train) {
    if (image.val().rank() != 3 || image.val().dim(0) != 3) {
        throw DimensionError("encoder expects a (3,H,W) image, got " +
                             shape_str(image.val().shape()));
    }
    ad::Value h1 = ad::relu(ad::conv2d(image, bind_p(tape, params.get(prefix + "conv1.K"), train),
                                       bind_p(tape, params.get(prefix + "conv1.b"), train), 1, 1, 2, 2));
    ad::Value p1 = ad::maxpool2d(h1, 2, 2, 2, 2);
    ad::Value h2 = ad::relu(ad::conv2d(p1, bind_p(tape, params.get(prefix + "conv2.K"), train),
                                       bind_p(tape, params.get(prefix + "conv2.b"), train), 1, 1, 2, 2));
    return h2;
}

FeatureGridNodes encode_image_nodes(ad::Tape& tape, ad::Value image, ParamStore& params,
                                    const EncoderConfig& cfg, const std::string& prefix,
                                    bool train) {
    ad::Value feat = trunk_forward(tape, image, params, prefix, train);
    const std::size_t g = cfg.grid_side;
    const std::size_t k = g * g;
    ad::Value pooled = ad::adaptive_avg_pool(feat, g, g);      // (d, g, g)
    ad::Value flat = ad::reshape(pooled, {cfg.feat_dim, k});   // (d, k)
    ad::Value regions = ad::transpose(flat);                   // (k, d)
    ad::Value uniform = tape.constant(Tensor::full({k}, 1.0 / static_cast<double>(k)));
    ad::Value global = ad::matmul(uniform, regions);            // mean of rows
    return FeatureGridNodes{regions, global, g};
}

FeatureGrid encode_image(const Tensor& image, ParamStore& params, const EncoderConfig& cfg,
                         const std::string& prefix) {
    ad::Tape tape;
    ad::Value img = tape.constant(image);
    FeatureGridNodes nodes = encode_image_nodes(tape, img, params, cfg, prefix);
    return FeatureGrid{nodes.regions.val(), nodes.global.val(), nodes.grid_side};
}

ad::Value attribute_logits_nodes(ad::Tape& tape, ad::Value image, ParamStore& params,
                                 const EncoderConfig& cfg, bool train) {
    if (!params.has("ext.out.V")) {
        throw ConfigError("parameter store has no attribute extractor weights (ext.*)");
    }
    ad::Value feat = trunk_forward(tape, image, params, "ext.", train);
    ad::Value hc = ad::relu(ad::conv2d(feat, bind_p(tape, params.get("ext.head.K"), train),
                                       bind_p(tape, params.get("ext.head.b"), train), 1, 1, 2, 2));
    const std::size_t fh = hc.val().dim(1), fw = hc.val().dim(2);
    ad::Value pooled = ad::maxpool2d(hc, static_cast<int>(fh), static_cast<int>(fw), 1, 1);
    ad::Value flat = ad::reshape(pooled, {cfg.head_channels});
    ad::Value phi = ad::relu(ad::add(ad::matmul(flat, bind_p(tape, params.get("ext.fc.W"), train)),
                                     bind_p(tape, params.get("ext.fc.b"), train)));
    return ad::add(ad::matmul(phi, bind_p(tape, params.get("ext.out.V"), train)),
                   bind_p(tape, params.get("ext.out.u"), train));
}

AttributeProbs attribute_probs(const Tensor& image, ParamStore& params, const EncoderConfig& cfg) {
    ad::Tape tape;
    ad::Value img = tape.constant(image);
    ad::Value probs = ad::sigmoid(attribute_logits_nodes(tape, img, params, cfg));
    return AttributeProbs{probs.val()};
}

namespace {

void check_labels(const Tensor& labels, std::size_t n) {
    if (labels.size() != n) {
        throw DimensionError("attribute labels length " + std::to_string(labels.size()) +
                             " does not match vocabulary size " + std::to_string(n));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0.0 && labels[i] != 1.0) {
            throw ValidationError("attribute label must be 0 or 1, got " +
                                  std::to_string(labels[i]));
        }
    }
}

}  // namespace

ad::Value attribute_loss_nodes(ad::Tape& tape, ad::Value probs, const Tensor& labels,
                               double beta_n) {
    check_labels(labels, probs.val().size());
    const double beta_p = 100.0 * beta_n;
    ad::Value q = ad::clamp(probs, 1e-12, 1.0 - 1e-12);
    ad::Value pos = tape.constant(labels);
    Tensor neg_t(labels.shape());
    for (std::size_t i = 0; i < labels.size(); ++i) neg_t[i] = 1.0 - labels[i];
    ad::Value neg = tape.constant(neg_t);
    ad::Value pos_term = ad::scale(ad::sum(ad::mul(pos, ad::log_(q))), -beta_p);
    ad::Value neg_term = ad::scale(ad::sum(ad::mul(neg, ad::log_(ad::one_minus(q)))), -beta_n);
    return ad::add(pos_term, neg_term);
}

double attribute_loss(const AttributeProbs& probs, const Tensor& labels, double beta_n) {
    ad::Tape tape;
    ad::Value q = tape.constant(probs.probs);
    return attribute_loss_nodes(tape, q, labels, beta_n).val()[0];
}

std::vector<std::size_t> top_k_attributes(const AttributeProbs& probs, std::size_t k) {
    if (k == 0) throw ValidationError("top_k_attributes requires k >= 1");
    if (k > probs.probs.size()) {
        throw ValidationError("top_k_attributes: k " + std::to_string(k) +
                              " exceeds vocabulary size " + std::to_string(probs.probs.size()));
    }
    std::vector<std::size_t> ids(probs.probs.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
        if (probs.probs[a] != probs.probs[b]) return probs.probs[a] > probs.probs[b];
        return a < b;
    });
    ids.resize(k);
    return ids;
}

}  // namespace capnet
