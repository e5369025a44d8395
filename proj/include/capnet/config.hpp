#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capnet/dataset.hpp"
#include "capnet/decoder.hpp"

namespace capnet {

// Flat key = value configuration with '#' comments. Unknown keys, bad types
// and out-of-range values are rejected at load; parse -> serialize -> parse
// is idempotent.
struct Config {
    // model
    Mode mode = Mode::full;
    std::size_t image_size = 64;
    std::size_t grid_side = 7;
    std::size_t d = 64;  // region feature width
    std::size_t hidden = 128;
    std::size_t cap_embed = 64;
    std::size_t attr_embed = 16;
    std::size_t attn_dim = 64;
    std::size_t conv1_channels = 16;
    std::size_t head_channels = 32;
    std::size_t head_fc_dim = 64;
    AttrFusion attr_fusion = AttrFusion::concat;

    // training
    double lr = 4e-4;
    double beta1 = 0.8;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double beta_n = 1.0;
    std::size_t epochs_caption = 50;
    std::size_t epochs_attr = 10;
    std::size_t batch_size = 16;
    std::uint64_t seed = 1;
    bool freeze_encoder = false;
    std::string attr_source = "ground_truth";  // or "extractor"
    std::size_t max_caption_len = 16;

    // attention evaluation
    double th = 0.6;
    int connectivity = 4;

    // synthetic data
    std::size_t samples_per_class = 8;
    std::vector<std::string> shapes = {"circle", "square", "triangle", "bar"};
    std::vector<std::string> colors = {"red", "green", "blue", "yellow", "purple", "cyan"};
    std::vector<std::string> textures = {"solid", "striped", "dotted"};
    std::vector<std::string> backgrounds = {"white", "gray", "black"};
    std::size_t max_attr_words = 1000;

    static Config parse_file(const std::string& path);
    static Config parse_text(const std::string& text, const std::string& origin = "<text>");
    std::string to_text() const;
    void validate() const;

    SyntheticSpec synthetic_spec() const;
    DecoderDims decoder_dims(std::size_t cap_vocab, std::size_t attr_vocab) const;
    EncoderConfig encoder_config() const;
};

}  // namespace capnet
