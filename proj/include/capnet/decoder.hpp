#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "capnet/encoder.hpp"
#include "capnet/params.hpp"
#include "capnet/tape.hpp"

namespace capnet {

// Ablation modes. "adaptive" drops attribute injection, "attr_only" drops the
// attention/sentinel path, "vanilla" drops both.
enum class Mode { full, adaptive, attr_only, vanilla };

enum class AttrFusion { concat, sum, mean };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

struct DecoderDims {
    std::size_t cap_vocab = 0;
    std::size_t attr_vocab = 0;
    std::size_t cap_embed = 64;   // 255 at full scale
    std::size_t attr_embed = 16;  // 51 at full scale
    std::size_t hidden = 128;     // 512 at full scale
    std::size_t feat_dim = 64;
    std::size_t attn_dim = 64;
    std::size_t grid_side = 7;
    Mode mode = Mode::full;
    AttrFusion fusion = AttrFusion::concat;

    bool uses_attributes() const { return mode == Mode::full || mode == Mode::attr_only; }
    bool uses_attention() const { return mode == Mode::full || mode == Mode::adaptive; }
    std::size_t attr_len() const {
        if (!uses_attributes()) return 0;
        return fusion == AttrFusion::concat ? 5 * attr_embed : attr_embed;
    }
    std::size_t step_input() const { return cap_embed + attr_len(); }
    std::size_t regions() const { return grid_side * grid_side; }
};

constexpr std::size_t kNumAttributes = 5;
using AttrIds = std::array<std::size_t, kNumAttributes>;

// Per-step attention trace: spatial weights, sentinel gate, spatial context,
// projected sentinel and the gate-mixed adaptive context.
struct AttentionResult {
    Tensor alpha;     // k, sums to 1
    double beta = 0;  // in [0,1]
    Tensor c;         // d
    Tensor s;         // d (sentinel projected to feature width)
    Tensor c_hat;     // d, == beta*s + (1-beta)*c
};

struct DecodeResult {
    std::vector<std::size_t> tokens;      // caption body, specials stripped
    std::vector<AttentionResult> trace;   // one per generated step in attention modes
};

void init_decoder_params(ParamStore& params, const DecoderDims& dims, RngStream& rng);

// Parameter leaves bound once per tape and shared across time steps.
struct DecoderNodes {
    ad::Value embed_cap, init_Wh, init_Wm, lstm_W, lstm_b, out_Wp;
    std::optional<ad::Value> embed_attr;
    std::optional<ad::Value> sent_Wx, sent_Wh, sent_Wproj;
    std::optional<ad::Value> attn_Wv, attn_Wg, attn_w, attn_Ws, out_Wc;
};
// train=false binds parameters as constants (no gradient bookkeeping).
DecoderNodes bind_decoder(ad::Tape& tape, ParamStore& params, const DecoderDims& dims,
                          bool train = true);

// Row lookups; out-of-range ids raise VocabularyError.
ad::Value embed_token(ad::Tape& tape, ad::Value table, std::size_t id);
Tensor embed_tokens(const std::vector<std::size_t>& ids, const Tensor& table);

// Attribute representation A: five embeddings fused by concat/sum/mean.
ad::Value attribute_vector(ad::Tape& tape, const DecoderNodes& nodes, const AttrIds& attrs,
                           const DecoderDims& dims);

struct LstmStepOut {
    ad::Value h, m;
    std::optional<ad::Value> gate;  // sentinel input gate, attention modes only
};

// One cell update over [x; A; h_prev]; also emits the sentinel gate
// g = sigmoid(W_x [x;A] + W_h h_prev) when the mode has a sentinel.
LstmStepOut lstm_step(ad::Tape& tape, const DecoderNodes& nodes, ad::Value x,
                      std::optional<ad::Value> A, ad::Value h_prev, ad::Value m_prev,
                      bool with_gate);

struct SpatialAttentionOut {
    ad::Value c;       // d
    ad::Value alpha;   // k
    ad::Value logits;  // k, reused by the sentinel gate softmax
};
SpatialAttentionOut spatial_attention(ad::Tape& tape, const DecoderNodes& nodes,
                                      ad::Value regions, ad::Value h);

// s = g (*) tanh(m), at hidden width.
ad::Value visual_sentinel(ad::Tape& tape, ad::Value m, ad::Value gate);

struct AdaptiveContextOut {
    ad::Value c_hat;  // d
    ad::Value beta;   // single element
};
// Extends the spatial logits with the sentinel logit, takes the extended
// softmax's last component as the gate and mixes contexts.
AdaptiveContextOut adaptive_context(ad::Tape& tape, const DecoderNodes& nodes, ad::Value c,
                                    ad::Value s_proj, ad::Value h, ad::Value spatial_logits);

ad::Value vocab_logits(ad::Tape& tape, const DecoderNodes& nodes,
                       std::optional<ad::Value> c_hat, ad::Value h);
ad::Value vocab_distribution(ad::Tape& tape, const DecoderNodes& nodes,
                             std::optional<ad::Value> c_hat, ad::Value h);

// Whole captioning model: shared trunk encoder + decoder over one store.
class CaptionModel {
public:
    CaptionModel(DecoderDims dims, EncoderConfig enc, std::uint64_t seed);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const DecoderDims& dims() const { return dims_; }
    const EncoderConfig& encoder_config() const { return enc_; }

    // Teacher-forced mean NLL of an encoded caption ([start, ..., end]).
    ad::Value caption_nll_nodes(ad::Tape& tape, const Tensor& image,
                                const std::vector<std::size_t>& caption_ids,
                                const AttrIds& attrs, bool encoder_grad = true);
    double caption_nll(const Tensor& image, const std::vector<std::size_t>& caption_ids,
                       const AttrIds& attrs);

    DecodeResult decode_greedy(const Tensor& image, const AttrIds& attrs,
                               std::size_t max_len) const;

private:
    DecoderDims dims_;
    EncoderConfig enc_;
    ParamStore params_;
};

}  // namespace capnet
