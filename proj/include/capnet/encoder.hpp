#pragma once

#include <cstdint>
#include <vector>

#include "capnet/params.hpp"
#include "capnet/tape.hpp"
#include "capnet/tensor.hpp"

namespace capnet {

// Geometry of the small trainable CNN. The trunk is
// conv(3->c1, 5x5, pad 2) -> relu -> maxpool 2x2 -> conv(c1->d, 5x5, pad 2) -> relu,
// captioner features come from an adaptive average pool to grid_side^2 cells,
// the attribute head from conv(d->head_ch, 5x5, pad 2) -> relu -> global max
// pool -> fc -> relu -> per-word sigmoid.
struct EncoderConfig {
    std::size_t conv1_channels = 16;
    std::size_t feat_dim = 64;  // d
    std::size_t grid_side = 7;
    std::size_t head_channels = 32;
    std::size_t head_fc_dim = 64;
};

// Encoder output: k = grid_side^2 region feature rows plus their mean.
struct FeatureGrid {
    Tensor regions;  // k x d
    Tensor global;   // d
    std::size_t grid_side = 0;
};

struct FeatureGridNodes {
    ad::Value regions;
    ad::Value global;
    std::size_t grid_side = 0;
};

struct AttributeProbs {
    Tensor probs;  // |V_attr| values in (0,1)
};

// Parameter initialisation. Trunk weights go under "<prefix>conv1"/"conv2",
// head weights under "<prefix>head"/"fc"/"out". Output layer starts at zero
// so an untrained extractor predicts exactly 0.5 per word.
void init_trunk_params(ParamStore& params, const std::string& prefix, const EncoderConfig& cfg,
                       RngStream& rng);
void init_extractor_params(ParamStore& params, const EncoderConfig& cfg, std::size_t attr_vocab,
                           RngStream& rng);

// Shared trunk: (3,h,w) -> (d, h/2, w/2). train=false binds the weights as
// constants so no gradients flow into them.
ad::Value trunk_forward(ad::Tape& tape, ad::Value image, ParamStore& params,
                        const std::string& prefix, bool train = true);

FeatureGridNodes encode_image_nodes(ad::Tape& tape, ad::Value image, ParamStore& params,
                                    const EncoderConfig& cfg, const std::string& prefix,
                                    bool train = true);
FeatureGrid encode_image(const Tensor& image, ParamStore& params, const EncoderConfig& cfg,
                         const std::string& prefix = "enc.");

ad::Value attribute_logits_nodes(ad::Tape& tape, ad::Value image, ParamStore& params,
                                 const EncoderConfig& cfg, bool train = true);
AttributeProbs attribute_probs(const Tensor& image, ParamStore& params, const EncoderConfig& cfg);

// Class-weighted binary cross entropy, summed over the attribute vocabulary.
// beta_p = 100 * beta_n puts the heavy penalty on missed positive words.
ad::Value attribute_loss_nodes(ad::Tape& tape, ad::Value probs, const Tensor& labels,
                               double beta_n);
double attribute_loss(const AttributeProbs& probs, const Tensor& labels, double beta_n);

// k ids by descending probability, ties by ascending id.
std::vector<std::size_t> top_k_attributes(const AttributeProbs& probs, std::size_t k);

}  // namespace capnet
