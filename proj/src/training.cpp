#include "capnet/training.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "capnet/errors.hpp"
#include "capnet/image_io.hpp"
#include "capnet/threading.hpp"

namespace capnet {

std::string training_log_csv(const std::vector<TrainLogRow>& log) {
    std::ostringstream os;
    os << "epoch,lr,train_loss,val_loss\n";
    for (const auto& row : log) {
        os << row.epoch << "," << std::setprecision(10) << row.lr << "," << std::fixed
           << std::setprecision(6) << row.train_loss << "," << row.val_loss << "\n";
        os.unsetf(std::ios::fixed);
    }
    return os.str();
}

ExtractorModel make_extractor(const Config& cfg, std::size_t attr_vocab) {
    ExtractorModel m;
    m.enc = cfg.encoder_config();
    m.attr_vocab = attr_vocab;
    RngStream rng(cfg.seed ^ 0x5ca1ab1eULL);
    init_extractor_params(m.params, m.enc, attr_vocab, rng);
    return m;
}

Tensor attribute_label_vector(const Sample& sample, std::size_t attr_vocab) {
    Tensor labels({attr_vocab});
    for (std::size_t id : sample.attr_ids) {
        if (id > kUnkId && id < attr_vocab) labels[id] = 1.0;
    }
    return labels;
}

AttrIds predicted_attributes(const ExtractorModel& model, const Tensor& image) {
    auto& params = const_cast<ParamStore&>(model.params);
    AttributeProbs probs = attribute_probs(image, params, model.enc);
    const auto top = top_k_attributes(probs, kNumAttributes);
    AttrIds out{};
    for (std::size_t i = 0; i < kNumAttributes; ++i) out[i] = top[i];
    return out;
}

namespace {

void check_finite_loss(double loss, std::size_t epoch) {
    if (!std::isfinite(loss)) {
        throw EvaluationError("non-finite training loss at epoch " + std::to_string(epoch));
    }
}

std::vector<std::size_t> epoch_order(const std::vector<std::size_t>& base, std::uint64_t seed,
                                     std::size_t epoch) {
    std::vector<std::size_t> order = base;
    RngStream rng = derive_stream(seed, 0x7000 + epoch);
    rng.shuffle(order);
    return order;
}

}  // namespace

std::vector<TrainLogRow> train_attribute_extractor(ExtractorModel& model, const Dataset& data,
                                                   const Config& cfg) {
    const auto train_idx = data.indices_of(Split::train);
    const auto val_idx = data.indices_of(Split::val);
    if (train_idx.empty()) throw ValidationError("train split is empty");

    AdamState adam = AdamState::init(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    std::vector<TrainLogRow> log;
    const std::size_t nv = model.attr_vocab;

    auto sample_loss = [&](const Sample& s, bool with_grad, double grad_scale) {
        ad::Tape tape;
        ad::Value img = tape.constant(s.image);
        ad::Value probs = ad::sigmoid(attribute_logits_nodes(tape, img, model.params, model.enc, with_grad));
        ad::Value loss = attribute_loss_nodes(tape, probs, attribute_label_vector(s, nv), cfg.beta_n);
        if (with_grad) tape.backward(ad::scale(loss, grad_scale));
        return loss.val()[0];
    };

    for (std::size_t epoch = 1; epoch <= cfg.epochs_attr; ++epoch) {
        const auto order = epoch_order(train_idx, cfg.seed, epoch);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), b + cfg.batch_size);
            model.params.zero_grads();
            for (std::size_t i = b; i < end; ++i) {
                epoch_loss += sample_loss(data.samples[order[i]], true,
                                          1.0 / static_cast<double>(end - b));
            }
            adam_step(model.params, adam);
        }
        epoch_loss /= static_cast<double>(order.size());
        check_finite_loss(epoch_loss, epoch);
        double val_loss = 0.0;
        for (std::size_t i : val_idx) val_loss += sample_loss(data.samples[i], false, 1.0);
        if (!val_idx.empty()) val_loss /= static_cast<double>(val_idx.size());
        log.push_back({epoch, adam.learning_rate, epoch_loss, val_loss});
        adam.learning_rate = lr_schedule(static_cast<int>(epoch), adam.learning_rate);
    }
    return log;
}

std::vector<TrainLogRow> train_captioner(CaptionModel& model, const Dataset& data,
                                         const Config& cfg, const ExtractorModel* extractor) {
    const auto train_idx = data.indices_of(Split::train);
    const auto val_idx = data.indices_of(Split::val);
    if (train_idx.empty()) throw ValidationError("train split is empty");
    const bool use_extractor = cfg.attr_source == "extractor" && extractor != nullptr;

    AdamState adam = AdamState::init(model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    std::vector<TrainLogRow> log;

    auto attrs_for = [&](const Sample& s) -> AttrIds {
        if (use_extractor) return predicted_attributes(*extractor, s.image);
        return s.attr_ids;
    };

    for (std::size_t epoch = 1; epoch <= cfg.epochs_caption; ++epoch) {
        const auto order = epoch_order(train_idx, cfg.seed, epoch);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), b + cfg.batch_size);
            model.params().zero_grads();
            for (std::size_t i = b; i < end; ++i) {
                const Sample& s = data.samples[order[i]];
                ad::Tape tape;
                ad::Value loss = model.caption_nll_nodes(tape, s.image, s.caption_ids,
                                                         attrs_for(s), !cfg.freeze_encoder);
                tape.backward(ad::scale(loss, 1.0 / static_cast<double>(end - b)));
                epoch_loss += loss.val()[0];
            }
            adam_step(model.params(), adam);
        }
        epoch_loss /= static_cast<double>(order.size());
        check_finite_loss(epoch_loss, epoch);
        double val_loss = 0.0;
        for (std::size_t i : val_idx) {
            const Sample& s = data.samples[i];
            val_loss += model.caption_nll(s.image, s.caption_ids, attrs_for(s));
        }
        if (!val_idx.empty()) val_loss /= static_cast<double>(val_idx.size());
        log.push_back({epoch, adam.learning_rate, epoch_loss, val_loss});
        adam.learning_rate = lr_schedule(static_cast<int>(epoch), adam.learning_rate);
    }
    return log;
}

CorpusPair decode_corpus(const CaptionModel& model, const Dataset& data, Split split,
                         const Config& cfg, const ExtractorModel* extractor) {
    const auto idx = data.indices_of(split);
    CorpusPair corpus;
    std::vector<std::vector<std::string>> decoded(idx.size());
    parallel_for(idx.size(), [&](std::size_t i) {
        const Sample& s = data.samples[idx[i]];
        AttrIds attrs = extractor ? predicted_attributes(*extractor, s.image) : s.attr_ids;
        DecodeResult res = model.decode_greedy(s.image, attrs, cfg.max_caption_len);
        decoded[i] = decode_caption(res.tokens, data.vocabs.captions);
    });
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Sample& s = data.samples[idx[i]];
        corpus.candidates[s.id] = decoded[i];
        corpus.references[s.id] = {s.caption};
    }
    return corpus;
}

std::vector<SampleTrace> decode_traces(const CaptionModel& model, const Dataset& data,
                                       Split split, const Config& cfg,
                                       const ExtractorModel* extractor) {
    if (!model.dims().uses_attention()) {
        throw ValidationError("attention traces require an attention-mode checkpoint");
    }
    const auto idx = data.indices_of(split);
    const std::size_t g = model.dims().grid_side;
    std::vector<SampleTrace> traces(idx.size());
    parallel_for(idx.size(), [&](std::size_t i) {
        const Sample& s = data.samples[idx[i]];
        AttrIds attrs = extractor ? predicted_attributes(*extractor, s.image) : s.attr_ids;
        DecodeResult res = model.decode_greedy(s.image, attrs, cfg.max_caption_len);
        SampleTrace tr;
        tr.caption = decode_caption(res.tokens, data.vocabs.captions);
        tr.truth = s.bbox;
        tr.image_h = s.image.dim(1);
        tr.image_w = s.image.dim(2);
        for (std::size_t t = 0; t < res.trace.size(); ++t) {
            AttentionMap map;
            map.weights = res.trace[t].alpha.reshaped({g, g});
            map.word = t < tr.caption.size() ? tr.caption[t] : "";
            map.step = t;
            tr.maps.push_back(std::move(map));
        }
        traces[i] = std::move(tr);
    });
    return traces;
}

std::vector<AblationRow> run_ablation(const Dataset& data, const Config& base_cfg) {
    ExtractorModel extractor = make_extractor(base_cfg, data.vocabs.attributes.size());
    train_attribute_extractor(extractor, data, base_cfg);

    std::vector<AblationRow> rows;
    for (Mode mode : {Mode::adaptive, Mode::vanilla, Mode::attr_only, Mode::full}) {
        Config cfg = base_cfg;
        cfg.mode = mode;
        DecoderDims dims = cfg.decoder_dims(data.vocabs.captions.size(), data.vocabs.attributes.size());
        CaptionModel model(dims, cfg.encoder_config(), cfg.seed);
        train_captioner(model, data, cfg, nullptr);
        const bool needs_attrs = dims.uses_attributes();
        CorpusPair corpus = decode_corpus(model, data, Split::test, cfg,
                                          needs_attrs ? &extractor : nullptr);
        rows.push_back({mode, evaluate_corpus(corpus)});
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << metrics_csv_header() << "\n";
    for (const auto& row : rows) os << metrics_csv_row(mode_to_string(row.mode), row.report) << "\n";
    os << "# METEOR column is METEOR-lite (exact-match variant), not comparable to standard METEOR\n";
    return os.str();
}

void save_caption_model(const std::string& path, const CaptionModel& model, const Config& cfg,
                        const AdamState* adam) {
    save_checkpoint(path, cfg.to_text(), model.params(), adam);
}

CaptionModel load_caption_model(const std::string& path) {
    LoadedCheckpoint ckpt = load_checkpoint(path);
    Config cfg = Config::parse_text(ckpt.config_echo, path + "#config");
    if (!ckpt.params.has("dec.embed.cap")) {
        throw StateError(path + " is not a captioner checkpoint (no dec.embed.cap)");
    }
    const std::size_t cap_vocab = ckpt.params.get("dec.embed.cap").value.dim(0);
    std::size_t attr_vocab = 1;
    if (ckpt.params.has("dec.embed.attr")) {
        attr_vocab = ckpt.params.get("dec.embed.attr").value.dim(0);
    }
    CaptionModel model(cfg.decoder_dims(cap_vocab, attr_vocab), cfg.encoder_config(), cfg.seed);
    apply_checkpoint(ckpt, model.params());
    return model;
}

void save_extractor(const std::string& path, const ExtractorModel& model, const Config& cfg,
                    const AdamState* adam) {
    save_checkpoint(path, cfg.to_text(), model.params, adam);
}

ExtractorModel load_extractor(const std::string& path) {
    LoadedCheckpoint ckpt = load_checkpoint(path);
    Config cfg = Config::parse_text(ckpt.config_echo, path + "#config");
    if (!ckpt.params.has("ext.out.u")) {
        throw StateError(path + " is not an extractor checkpoint (no ext.out.u)");
    }
    ExtractorModel model = make_extractor(cfg, ckpt.params.get("ext.out.u").value.dim(0));
    apply_checkpoint(ckpt, model.params);
    return model;
}

void load_images(std::vector<Sample>& samples, const std::string& manifest_dir,
                 std::size_t image_size) {
    namespace fs = std::filesystem;
    for (Sample& s : samples) {
        const fs::path p = fs::path(manifest_dir) / s.image_path;
        Tensor img = read_ppm(p.string());
        if (img.dim(1) != image_size || img.dim(2) != image_size) {
            img = bilinear_resize(img, image_size, image_size);
        }
        s.image = std::move(img);
    }
}

}  // namespace capnet
