#include "capnet/decoder.hpp"

#include <cmath>

#include "capnet/errors.hpp"
#include "capnet/tokens.hpp"

namespace capnet {

Mode mode_from_string(const std::string& s) {
    if (s == "full") return Mode::full;
    if (s == "adaptive") return Mode::adaptive;
    if (s == "attr_only") return Mode::attr_only;
    if (s == "vanilla") return Mode::vanilla;
    throw ConfigError("unknown mode: " + s);
}

std::string mode_to_string(Mode m) {
    switch (m) {
        case Mode::full: return "full";
        case Mode::adaptive: return "adaptive";
        case Mode::attr_only: return "attr_only";
        case Mode::vanilla: return "vanilla";
    }
    return "full";
}

void init_decoder_params(ParamStore& params, const DecoderDims& dims, RngStream& rng) {
    const std::size_t H = dims.hidden, d = dims.feat_dim, a = dims.attn_dim;
    const std::size_t X = dims.step_input();
    auto sig = [](std::size_t fan_in) { return std::sqrt(1.0 / static_cast<double>(fan_in)); };

    params.add_gaussian("dec.embed.cap", {dims.cap_vocab, dims.cap_embed}, 0.1, rng);
    if (dims.uses_attributes()) {
        params.add_gaussian("dec.embed.attr", {dims.attr_vocab, dims.attr_embed}, 0.1, rng);
    }
    params.add_gaussian("dec.init.W_h", {d, H}, sig(d), rng);
    params.add_gaussian("dec.init.W_m", {d, H}, sig(d), rng);
    params.add_gaussian("dec.lstm.W", {X + H, 4 * H}, sig(X + H), rng);
    Tensor lstm_b = Tensor::zeros({4 * H});
    for (std::size_t i = H; i < 2 * H; ++i) lstm_b[i] = 1.0;  // forget gate bias
    params.add("dec.lstm.b", std::move(lstm_b));
    if (dims.uses_attention()) {
        params.add_gaussian("dec.sent.W_x", {X, H}, sig(X), rng);
        params.add_gaussian("dec.sent.W_h", {H, H}, sig(H), rng);
        params.add_gaussian("dec.sent.W_proj", {H, d}, sig(H), rng);
        params.add_gaussian("dec.attn.W_v", {d, a}, sig(d), rng);
        params.add_gaussian("dec.attn.W_g", {H, a}, sig(H), rng);
        params.add_gaussian("dec.attn.w", {a}, sig(a), rng);
        params.add_gaussian("dec.attn.W_s", {d, a}, sig(d), rng);
        params.add_gaussian("dec.out.W_c", {d, H}, sig(d), rng);
    }
    params.add_gaussian("dec.out.W_p", {H, dims.cap_vocab}, 0.05, rng);
}

namespace {

ad::Value bind(ad::Tape& tape, Parameter& p, bool train) {
    return train ? tape.param(p) : tape.constant(p.value);
}

}  // namespace

DecoderNodes bind_decoder(ad::Tape& tape, ParamStore& params, const DecoderDims& dims,
                          bool train) {
    DecoderNodes n;
    n.embed_cap = bind(tape, params.get("dec.embed.cap"), train);
    n.init_Wh = bind(tape, params.get("dec.init.W_h"), train);
    n.init_Wm = bind(tape, params.get("dec.init.W_m"), train);
    n.lstm_W = bind(tape, params.get("dec.lstm.W"), train);
    n.lstm_b = bind(tape, params.get("dec.lstm.b"), train);
    n.out_Wp = bind(tape, params.get("dec.out.W_p"), train);
    if (dims.uses_attributes()) {
        n.embed_attr = bind(tape, params.get("dec.embed.attr"), train);
    }
    if (dims.uses_attention()) {
        n.sent_Wx = bind(tape, params.get("dec.sent.W_x"), train);
        n.sent_Wh = bind(tape, params.get("dec.sent.W_h"), train);
        n.sent_Wproj = bind(tape, params.get("dec.sent.W_proj"), train);
        n.attn_Wv = bind(tape, params.get("dec.attn.W_v"), train);
        n.attn_Wg = bind(tape, params.get("dec.attn.W_g"), train);
        n.attn_w = bind(tape, params.get("dec.attn.w"), train);
        n.attn_Ws = bind(tape, params.get("dec.attn.W_s"), train);
        n.out_Wc = bind(tape, params.get("dec.out.W_c"), train);
    }
    return n;
}

ad::Value embed_token(ad::Tape&, ad::Value table, std::size_t id) {
    if (id >= table.val().dim(0)) {
        throw VocabularyError("token id " + std::to_string(id) + " out of range for table " +
                              shape_str(table.val().shape()));
    }
    return ad::embed_row(table, id);
}

Tensor embed_tokens(const std::vector<std::size_t>& ids, const Tensor& table) {
    if (table.rank() != 2) throw DimensionError("embedding table must be rank 2");
    Tensor out({ids.size(), table.dim(1)});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= table.dim(0)) {
            throw VocabularyError("token id " + std::to_string(ids[i]) +
                                  " out of range for table " + shape_str(table.shape()));
        }
        for (std::size_t j = 0; j < table.dim(1); ++j) out.at(i, j) = table.at(ids[i], j);
    }
    return out;
}

ad::Value attribute_vector(ad::Tape& tape, const DecoderNodes& nodes, const AttrIds& attrs,
                           const DecoderDims& dims) {
    std::vector<ad::Value> rows;
    rows.reserve(kNumAttributes);
    for (std::size_t id : attrs) rows.push_back(embed_token(tape, *nodes.embed_attr, id));
    switch (dims.fusion) {
        case AttrFusion::concat: return ad::concat(rows);
        case AttrFusion::sum: {
            ad::Value acc = rows[0];
            for (std::size_t i = 1; i < rows.size(); ++i) acc = ad::add(acc, rows[i]);
            return acc;
        }
        case AttrFusion::mean: {
            ad::Value acc = rows[0];
            for (std::size_t i = 1; i < rows.size(); ++i) acc = ad::add(acc, rows[i]);
            return ad::scale(acc, 1.0 / static_cast<double>(rows.size()));
        }
    }
    return rows[0];
}

LstmStepOut lstm_step(ad::Tape&, const DecoderNodes& nodes, ad::Value x,
                      std::optional<ad::Value> A, ad::Value h_prev, ad::Value m_prev,
                      bool with_gate) {
    ad::Value x_aug = A ? ad::concat({x, *A}) : x;
    ad::Value z = ad::concat({x_aug, h_prev});
    ad::Value gates = ad::add(ad::matmul(z, nodes.lstm_W), nodes.lstm_b);
    const std::size_t H = h_prev.val().size();
    ad::Value i_g = ad::sigmoid(ad::slice(gates, 0, H));
    ad::Value f_g = ad::sigmoid(ad::slice(gates, H, H));
    ad::Value o_g = ad::sigmoid(ad::slice(gates, 2 * H, H));
    ad::Value u_g = ad::tanh_(ad::slice(gates, 3 * H, H));
    ad::Value m = ad::add(ad::mul(f_g, m_prev), ad::mul(i_g, u_g));
    ad::Value h = ad::mul(o_g, ad::tanh_(m));
    LstmStepOut out{h, m, std::nullopt};
    if (with_gate) {
        out.gate = ad::sigmoid(ad::add(ad::matmul(x_aug, *nodes.sent_Wx),
                                       ad::matmul(h_prev, *nodes.sent_Wh)));
    }
    return out;
}

SpatialAttentionOut spatial_attention(ad::Tape&, const DecoderNodes& nodes,
                                      ad::Value regions, ad::Value h) {
    // z_i = w^T tanh(W_v v_i + W_g h)
    ad::Value proj_v = ad::matmul(regions, *nodes.attn_Wv);        // k x a
    ad::Value proj_h = ad::matmul(h, *nodes.attn_Wg);              // a
    ad::Value act = ad::tanh_(ad::add_rows(proj_v, proj_h));       // k x a
    ad::Value logits = ad::matmul(act, *nodes.attn_w);             // k
    ad::Value alpha = ad::softmax(logits);
    ad::Value c = ad::matmul(alpha, regions);                      // d
    return SpatialAttentionOut{c, alpha, logits};
}

ad::Value visual_sentinel(ad::Tape&, ad::Value m, ad::Value gate) {
    return ad::mul(gate, ad::tanh_(m));
}

AdaptiveContextOut adaptive_context(ad::Tape&, const DecoderNodes& nodes, ad::Value c,
                                    ad::Value s_proj, ad::Value h, ad::Value spatial_logits) {
    ad::Value act = ad::tanh_(ad::add(ad::matmul(s_proj, *nodes.attn_Ws),
                                      ad::matmul(h, *nodes.attn_Wg)));
    ad::Value sent_logit = ad::dot(act, *nodes.attn_w);
    ad::Value extended = ad::softmax(ad::concat({spatial_logits, sent_logit}));
    ad::Value beta = ad::slice(extended, spatial_logits.val().size(), 1);
    ad::Value c_hat = ad::add(ad::mul_scalar(s_proj, beta), ad::mul_scalar(c, ad::one_minus(beta)));
    return AdaptiveContextOut{c_hat, beta};
}

ad::Value vocab_logits(ad::Tape&, const DecoderNodes& nodes,
                       std::optional<ad::Value> c_hat, ad::Value h) {
    if (c_hat) {
        ad::Value mixed = ad::add(ad::matmul(*c_hat, *nodes.out_Wc), h);
        return ad::matmul(mixed, nodes.out_Wp);
    }
    return ad::matmul(h, nodes.out_Wp);
}

ad::Value vocab_distribution(ad::Tape& tape, const DecoderNodes& nodes,
                             std::optional<ad::Value> c_hat, ad::Value h) {
    return ad::softmax(vocab_logits(tape, nodes, c_hat, h));
}

CaptionModel::CaptionModel(DecoderDims dims, EncoderConfig enc, std::uint64_t seed)
    : dims_(std::move(dims)), enc_(enc) {
    enc_.feat_dim = dims_.feat_dim;
    enc_.grid_side = dims_.grid_side;
    RngStream rng(seed);
    init_trunk_params(params_, "enc.", enc_, rng);
    init_decoder_params(params_, dims_, rng);
}

namespace {

void validate_caption(const std::vector<std::size_t>& ids) {
    if (ids.size() < 2 || ids.front() != kStartId || ids.back() != kEndId) {
        throw ValidationError("caption must be encoded as [<start>, ..., <end>]");
    }
}

struct StepOutput {
    ad::Value logits;
    ad::Value h, m;
    std::optional<SpatialAttentionOut> att;
    std::optional<AdaptiveContextOut> adp;
    std::optional<ad::Value> s_proj;
};

StepOutput run_step(ad::Tape& tape, const DecoderNodes& nodes, const DecoderDims& dims,
                    const FeatureGridNodes& grid, std::optional<ad::Value> A, std::size_t tok,
                    ad::Value h_prev, ad::Value m_prev) {
    ad::Value x = embed_token(tape, nodes.embed_cap, tok);
    LstmStepOut cell = lstm_step(tape, nodes, x, A, h_prev, m_prev, dims.uses_attention());
    StepOutput out{ad::Value{}, cell.h, cell.m, std::nullopt, std::nullopt, std::nullopt};
    if (dims.uses_attention()) {
        SpatialAttentionOut att = spatial_attention(tape, nodes, grid.regions, cell.h);
        ad::Value s_hid = visual_sentinel(tape, cell.m, *cell.gate);
        ad::Value s_proj = ad::matmul(s_hid, *nodes.sent_Wproj);
        AdaptiveContextOut adp = adaptive_context(tape, nodes, att.c, s_proj, cell.h, att.logits);
        out.logits = vocab_logits(tape, nodes, adp.c_hat, cell.h);
        out.att = att;
        out.adp = adp;
        out.s_proj = s_proj;
    } else {
        out.logits = vocab_logits(tape, nodes, std::nullopt, cell.h);
    }
    return out;
}

}  // namespace

ad::Value CaptionModel::caption_nll_nodes(ad::Tape& tape, const Tensor& image,
                                          const std::vector<std::size_t>& caption_ids,
                                          const AttrIds& attrs, bool encoder_grad) {
    validate_caption(caption_ids);
    ad::Value img = tape.constant(image);
    FeatureGridNodes grid = encode_image_nodes(tape, img, params_, enc_, "enc.", encoder_grad);
    DecoderNodes nodes = bind_decoder(tape, params_, dims_, true);
    std::optional<ad::Value> A;
    if (dims_.uses_attributes()) A = attribute_vector(tape, nodes, attrs, dims_);
    ad::Value h = ad::matmul(grid.global, nodes.init_Wh);
    ad::Value m = ad::matmul(grid.global, nodes.init_Wm);
    ad::Value total;
    const std::size_t steps = caption_ids.size() - 1;
    for (std::size_t t = 0; t < steps; ++t) {
        StepOutput step = run_step(tape, nodes, dims_, grid, A, caption_ids[t], h, m);
        ad::Value nll = ad::cross_entropy_logits(step.logits, caption_ids[t + 1]);
        total = total.valid() ? ad::add(total, nll) : nll;
        h = step.h;
        m = step.m;
    }
    return ad::scale(total, 1.0 / static_cast<double>(steps));
}

double CaptionModel::caption_nll(const Tensor& image, const std::vector<std::size_t>& caption_ids,
                                 const AttrIds& attrs) {
    validate_caption(caption_ids);
    ad::Tape tape;
    ad::Value img = tape.constant(image);
    ParamStore& ps = params_;
    FeatureGridNodes grid = encode_image_nodes(tape, img, ps, enc_, "enc.", false);
    DecoderNodes nodes = bind_decoder(tape, ps, dims_, false);
    std::optional<ad::Value> A;
    if (dims_.uses_attributes()) A = attribute_vector(tape, nodes, attrs, dims_);
    ad::Value h = ad::matmul(grid.global, nodes.init_Wh);
    ad::Value m = ad::matmul(grid.global, nodes.init_Wm);
    double total = 0.0;
    const std::size_t steps = caption_ids.size() - 1;
    for (std::size_t t = 0; t < steps; ++t) {
        StepOutput step = run_step(tape, nodes, dims_, grid, A, caption_ids[t], h, m);
        total += ad::cross_entropy_logits(step.logits, caption_ids[t + 1]).val()[0];
        h = step.h;
        m = step.m;
    }
    return total / static_cast<double>(steps);
}

DecodeResult CaptionModel::decode_greedy(const Tensor& image, const AttrIds& attrs,
                                         std::size_t max_len) const {
    if (max_len < 1) throw ValidationError("decode_greedy requires max_len >= 1");
    auto& ps = const_cast<ParamStore&>(params_);  // read-only binding below
    ad::Tape tape;
    ad::Value img = tape.constant(image);
    FeatureGridNodes grid = encode_image_nodes(tape, img, ps, enc_, "enc.", false);
    DecoderNodes nodes = bind_decoder(tape, ps, dims_, false);
    std::optional<ad::Value> A;
    if (dims_.uses_attributes()) A = attribute_vector(tape, nodes, attrs, dims_);
    ad::Value h = ad::matmul(grid.global, nodes.init_Wh);
    ad::Value m = ad::matmul(grid.global, nodes.init_Wm);

    DecodeResult result;
    std::size_t tok = kStartId;
    for (std::size_t t = 0; t < max_len; ++t) {
        StepOutput step = run_step(tape, nodes, dims_, grid, A, tok, h, m);
        const Tensor& logits = step.logits.val();
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.size(); ++i) {
            if (logits[i] > logits[best]) best = i;  // ties keep the lowest id
        }
        if (best == kEndId) break;
        result.tokens.push_back(best);
        if (dims_.uses_attention()) {
            AttentionResult tr;
            tr.alpha = step.att->alpha.val();
            tr.beta = step.adp->beta.val()[0];
            tr.c = step.att->c.val();
            tr.s = step.s_proj->val();
            tr.c_hat = step.adp->c_hat.val();
            result.trace.push_back(std::move(tr));
        }
        h = step.h;
        m = step.m;
        tok = best;
    }
    return result;
}

}  // namespace capnet
