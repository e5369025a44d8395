// capnet: synthetic-data image captioning pipeline in one binary.
//
// Stage outputs are plain files (manifest -> vocab -> checkpoints -> CSV
// reports) so every stage can be rerun and diffed in isolation.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "capnet/attention_eval.hpp"
#include "capnet/config.hpp"
#include "capnet/dataset.hpp"
#include "capnet/errors.hpp"
#include "capnet/gradcheck.hpp"
#include "capnet/image_io.hpp"
#include "capnet/metrics.hpp"
#include "capnet/training.hpp"

namespace fs = std::filesystem;
using namespace capnet;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    long long seed_override = -1;
};

Config load_config(const CommonArgs& args) {
    Config cfg = args.config_path.empty() ? Config{} : Config::parse_file(args.config_path);
    if (args.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed_override);
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

Dataset load_dataset(const std::string& manifest, const std::string& vocab_dir,
                     const Config& cfg, bool with_images) {
    Dataset data;
    data.samples = read_manifest(manifest);
    data.vocabs.captions = Vocabulary::load((fs::path(vocab_dir) / "vocab_captions.txt").string());
    data.vocabs.attributes = Vocabulary::load((fs::path(vocab_dir) / "vocab_attrs.txt").string());
    // rebuild corpus frequencies from the manifest's train captions
    for (const Sample& s : data.samples) {
        if (s.split != Split::train) continue;
        for (const auto& tok : s.caption) {
            if (data.vocabs.captions.contains(tok)) data.vocabs.captions.bump_count(tok);
            if (data.vocabs.attributes.contains(tok)) data.vocabs.attributes.bump_count(tok);
        }
    }
    encode_samples(data.samples, data.vocabs);
    if (with_images) {
        load_images(data.samples, fs::path(manifest).parent_path().string(), cfg.image_size);
    }
    return data;
}

int cmd_gen_data(const CommonArgs& common) {
    const Config cfg = load_config(common);
    Dataset data = build_synthetic_dataset(cfg.synthetic_spec());
    const fs::path out(common.out_dir);
    fs::create_directories(out / "images");
    for (const Sample& s : data.samples) write_ppm((out / s.image_path).string(), s.image);
    write_manifest((out / "manifest.tsv").string(), data.samples);
    std::cout << "wrote " << data.samples.size() << " samples to " << out.string() << "\n";
    return 0;
}

int cmd_build_vocab(const CommonArgs& common, const std::string& manifest) {
    const Config cfg = load_config(common);
    auto samples = read_manifest(manifest);
    std::vector<std::vector<std::string>> train_caps;
    for (const Sample& s : samples) {
        if (s.split == Split::train) train_caps.push_back(s.caption);
    }
    VocabPair vocabs = build_vocab(train_caps, cfg.max_attr_words,
                                   cfg.synthetic_spec().attribute_wordlist());
    const fs::path out(common.out_dir);
    fs::create_directories(out);
    vocabs.captions.save((out / "vocab_captions.txt").string());
    vocabs.attributes.save((out / "vocab_attrs.txt").string());
    std::cout << "caption vocab " << vocabs.captions.size() << " tokens, attribute vocab "
              << vocabs.attributes.size() << " tokens\n";
    return 0;
}

int cmd_train_attr(const CommonArgs& common, const std::string& manifest,
                   const std::string& vocab_dir) {
    const Config cfg = load_config(common);
    Dataset data = load_dataset(manifest, vocab_dir, cfg, true);
    ExtractorModel model = make_extractor(cfg, data.vocabs.attributes.size());
    auto log = train_attribute_extractor(model, data, cfg);
    const fs::path out(common.out_dir);
    fs::create_directories(out);
    save_extractor((out / "attr.ckpt").string(), model, cfg);
    write_text(out / "attr_train_log.csv", training_log_csv(log));
    std::cout << "final train loss " << log.back().train_loss << "\n";
    return 0;
}

int cmd_train_caption(const CommonArgs& common, const std::string& manifest,
                      const std::string& vocab_dir, const std::string& attr_ckpt) {
    const Config cfg = load_config(common);
    Dataset data = load_dataset(manifest, vocab_dir, cfg, true);
    DecoderDims dims = cfg.decoder_dims(data.vocabs.captions.size(), data.vocabs.attributes.size());
    CaptionModel model(dims, cfg.encoder_config(), cfg.seed);
    std::optional<ExtractorModel> extractor;
    if (!attr_ckpt.empty()) extractor = load_extractor(attr_ckpt);
    auto log = train_captioner(model, data, cfg, extractor ? &*extractor : nullptr);
    const fs::path out(common.out_dir);
    fs::create_directories(out);
    save_caption_model((out / "caption.ckpt").string(), model, cfg);
    write_text(out / "caption_train_log.csv", training_log_csv(log));
    std::cout << "final train loss " << log.back().train_loss << "\n";
    return 0;
}

AttrIds resolve_attrs(const CaptionModel& model, const Tensor& image,
                      const std::string& attr_ckpt, const std::string& attr_words,
                      const Vocabulary* attr_vocab) {
    AttrIds attrs{kPadId, kPadId, kPadId, kPadId, kPadId};
    if (!attr_words.empty()) {
        if (!attr_vocab) throw ValidationError("--attrs requires --vocab-dir");
        std::istringstream ss(attr_words);
        std::string w;
        std::size_t i = 0;
        while (ss >> w && i < kNumAttributes) attrs[i++] = attr_vocab->id_of(w);
    } else if (!attr_ckpt.empty()) {
        ExtractorModel extractor = load_extractor(attr_ckpt);
        attrs = predicted_attributes(extractor, image);
    } else if (model.dims().uses_attributes()) {
        throw ValidationError("this checkpoint needs attributes: pass --attr-ckpt or --attrs");
    }
    return attrs;
}

int cmd_caption(const CommonArgs& common, const std::string& ckpt, const std::string& image_path,
                const std::string& vocab_dir, const std::string& attr_ckpt,
                const std::string& attr_words) {
    CaptionModel model = load_caption_model(ckpt);
    const Config cfg = Config::parse_text(load_checkpoint(ckpt).config_echo, "checkpoint");
    Tensor image = read_ppm(image_path);
    if (image.dim(1) != cfg.image_size || image.dim(2) != cfg.image_size) {
        image = bilinear_resize(image, cfg.image_size, cfg.image_size);
    }
    Vocabulary cap_vocab = Vocabulary::load((fs::path(vocab_dir) / "vocab_captions.txt").string());
    Vocabulary attr_vocab = Vocabulary::load((fs::path(vocab_dir) / "vocab_attrs.txt").string());
    const AttrIds attrs = resolve_attrs(model, image, attr_ckpt, attr_words, &attr_vocab);

    DecodeResult res = model.decode_greedy(image, attrs, cfg.max_caption_len);
    const auto words = decode_caption(res.tokens, cap_vocab);
    std::string caption;
    for (std::size_t i = 0; i < words.size(); ++i) caption += (i ? " " : "") + words[i];
    std::cout << caption << "\n";

    const fs::path out(common.out_dir);
    fs::create_directories(out);
    write_text(out / "caption.txt", caption + "\n");
    const std::size_t g = model.dims().grid_side;
    for (std::size_t t = 0; t < res.trace.size() && t < words.size(); ++t) {
        AttentionMap map{res.trace[t].alpha.reshaped({g, g}), words[t], t};
        Tensor heat = normalize_map(upsample_attention(map, cfg.image_size, cfg.image_size));
        std::ostringstream base;
        base << "attn_" << std::setw(2) << std::setfill('0') << t << "_" << words[t];
        write_pgm((out / (base.str() + ".pgm")).string(), heat);
        std::ostringstream side;
        side << "word " << words[t] << "\nstep " << t << "\nbeta " << std::setprecision(6)
             << res.trace[t].beta << "\n";
        auto box = attention_bbox(map, cfg.image_size, cfg.image_size, cfg.th, cfg.connectivity);
        if (box) {
            side << "bbox " << box->x << "," << box->y << "," << box->w << "," << box->h << "\n";
        } else {
            side << "bbox none\n";
        }
        write_text(out / (base.str() + ".txt"), side.str());
    }
    return 0;
}

int cmd_evaluate(const CommonArgs& common, const std::string& ckpt, const std::string& manifest,
                 const std::string& vocab_dir, const std::string& split_name,
                 const std::string& attr_ckpt, const std::string& model_name,
                 const std::string& out_csv) {
    CaptionModel model = load_caption_model(ckpt);
    Config cfg = Config::parse_text(load_checkpoint(ckpt).config_echo, "checkpoint");
    if (common.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(common.seed_override);
    Dataset data = load_dataset(manifest, vocab_dir, cfg, true);
    std::optional<ExtractorModel> extractor;
    if (!attr_ckpt.empty()) extractor = load_extractor(attr_ckpt);
    const ExtractorModel* ext = nullptr;
    if (model.dims().uses_attributes() && cfg.attr_source == "extractor") {
        if (!extractor) throw ValidationError("attr_source = extractor requires --attr-ckpt");
        ext = &*extractor;
    }
    CorpusPair corpus = decode_corpus(model, data, split_from_string(split_name), cfg, ext);
    MetricsReport report = evaluate_corpus(corpus);
    std::ostringstream os;
    os << metrics_csv_header() << "\n"
       << metrics_csv_row(model_name, report) << "\n"
       << "# METEOR column is METEOR-lite (exact-match variant), not comparable to standard METEOR\n";
    write_text(out_csv, os.str());
    std::cout << os.str();
    return 0;
}

int cmd_attn_eval(const CommonArgs& common, const std::string& ckpt, const std::string& manifest,
                  const std::string& vocab_dir, const std::string& split_name,
                  const std::string& attr_ckpt, const std::string& categories_arg,
                  const std::string& out_csv) {
    CaptionModel model = load_caption_model(ckpt);
    Config cfg = Config::parse_text(load_checkpoint(ckpt).config_echo, "checkpoint");
    if (common.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(common.seed_override);
    Dataset data = load_dataset(manifest, vocab_dir, cfg, true);
    std::optional<ExtractorModel> extractor;
    if (!attr_ckpt.empty()) extractor = load_extractor(attr_ckpt);
    const ExtractorModel* ext = nullptr;
    if (model.dims().uses_attributes() && cfg.attr_source == "extractor") {
        if (!extractor) throw ValidationError("attr_source = extractor requires --attr-ckpt");
        ext = &*extractor;
    }
    auto traces = decode_traces(model, data, split_from_string(split_name), cfg, ext);
    std::vector<std::string> categories = cfg.shapes;
    if (!categories_arg.empty()) {
        categories.clear();
        std::istringstream ss(categories_arg);
        std::string w;
        while (std::getline(ss, w, ',')) {
            if (!w.empty()) categories.push_back(w);
        }
    }
    auto rows = localization_accuracy(traces, categories, cfg.th, cfg.connectivity);
    write_text(out_csv, localization_csv(rows));
    std::cout << localization_csv(rows);
    return 0;
}

int cmd_ablate(const CommonArgs& common, const std::string& manifest,
               const std::string& vocab_dir) {
    const Config cfg = load_config(common);
    Dataset data = load_dataset(manifest, vocab_dir, cfg, true);
    auto rows = run_ablation(data, cfg);
    const fs::path out(common.out_dir);
    fs::create_directories(out);
    write_text(out / "ablation.csv", ablation_csv(rows));
    std::cout << ablation_csv(rows);
    return 0;
}

int cmd_grad_check(const std::string& dims_name, double tol, double eps, std::uint64_t seed) {
    DecoderDims dims;
    EncoderConfig enc;
    std::size_t image_size = 16;
    std::size_t n_samples = 6;
    if (dims_name == "tiny") {
        dims.cap_vocab = 20;
        dims.attr_vocab = 10;
        dims.cap_embed = 8;
        dims.attr_embed = 4;
        dims.hidden = 16;
        dims.feat_dim = 8;
        dims.attn_dim = 8;
        dims.grid_side = 2;
        enc.conv1_channels = 4;
        enc.feat_dim = 8;
        enc.grid_side = 2;
    } else {
        throw ValidationError("unknown --dims preset: " + dims_name + " (only tiny is defined)");
    }
    dims.mode = Mode::full;
    CaptionModel model(dims, enc, seed);
    RngStream rng(seed ^ 0xface0fful);
    for (auto& [name, p] : model.params()) {
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = rng.normal(0.0, 0.3);
    }
    std::vector<Tensor> images;
    std::vector<std::vector<std::size_t>> caps;
    std::vector<AttrIds> attrs;
    for (std::size_t s = 0; s < n_samples; ++s) {
        Tensor img({3, image_size, image_size});
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
        images.push_back(std::move(img));
        std::vector<std::size_t> cap{kStartId};
        for (int t = 0; t < 5; ++t) cap.push_back(4 + rng.below(dims.cap_vocab - 4));
        cap.push_back(kEndId);
        caps.push_back(std::move(cap));
        attrs.push_back({rng.below(dims.attr_vocab), rng.below(dims.attr_vocab),
                         rng.below(dims.attr_vocab), kPadId, kPadId});
    }
    LossFn loss = [&](ParamStore&, bool with_grad) {
        double total = 0.0;
        for (std::size_t s = 0; s < n_samples; ++s) {
            if (!with_grad) {
                total += model.caption_nll(images[s], caps[s], attrs[s]);
                continue;
            }
            ad::Tape tape;
            ad::Value l = model.caption_nll_nodes(tape, images[s], caps[s], attrs[s]);
            tape.backward(l);
            total += l.val()[0];
        }
        return total;
    };
    auto report = grad_check(loss, model.params(), eps, tol, seed, 32);
    std::cout << format_report(report, tol);
    return report.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"capnet: adaptive-attention image captioning with text attributes"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string manifest, vocab_dir, ckpt, attr_ckpt, image_path, attr_words;
    std::string split_name = "test", model_name = "model", out_csv, categories;
    std::string dims_name = "tiny";
    double tol = 1e-4, eps = 2e-5;
    std::uint64_t gc_seed = 7;

    auto add_common = [&](CLI::App* cmd, bool with_out = true) {
        cmd->add_option("--config", common.config_path, "config file (flat key = value)");
        cmd->add_option("--seed", common.seed_override, "override the config seed");
        if (with_out) cmd->add_option("--out", common.out_dir, "output directory")->required();
    };

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
    add_common(gen);

    auto* bv = app.add_subcommand("build-vocab", "build caption and attribute vocabularies");
    add_common(bv);
    bv->add_option("--manifest", manifest, "dataset manifest")->required();

    auto* ta = app.add_subcommand("train-attr", "train the attribute extractor");
    add_common(ta);
    ta->add_option("--manifest", manifest)->required();
    ta->add_option("--vocab-dir", vocab_dir)->required();

    auto* tc = app.add_subcommand("train-caption", "train the captioner");
    add_common(tc);
    tc->add_option("--manifest", manifest)->required();
    tc->add_option("--vocab-dir", vocab_dir)->required();
    tc->add_option("--attr-ckpt", attr_ckpt, "extractor checkpoint (attr_source = extractor)");

    auto* cap = app.add_subcommand("caption", "caption one image and dump attention maps");
    add_common(cap);
    cap->add_option("--ckpt", ckpt)->required();
    cap->add_option("--image", image_path)->required();
    cap->add_option("--vocab-dir", vocab_dir)->required();
    cap->add_option("--attr-ckpt", attr_ckpt);
    cap->add_option("--attrs", attr_words, "space-separated attribute words");

    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on one split");
    add_common(ev, false);
    ev->add_option("--ckpt", ckpt)->required();
    ev->add_option("--manifest", manifest)->required();
    ev->add_option("--vocab-dir", vocab_dir)->required();
    ev->add_option("--split", split_name);
    ev->add_option("--attr-ckpt", attr_ckpt);
    ev->add_option("--model-name", model_name);
    ev->add_option("--out", out_csv, "metrics CSV path")->required();

    auto* ae = app.add_subcommand("attn-eval", "attention localization scoring");
    add_common(ae, false);
    ae->add_option("--ckpt", ckpt)->required();
    ae->add_option("--manifest", manifest)->required();
    ae->add_option("--vocab-dir", vocab_dir)->required();
    ae->add_option("--split", split_name);
    ae->add_option("--attr-ckpt", attr_ckpt);
    ae->add_option("--categories", categories, "comma-separated category words");
    ae->add_option("--out", out_csv, "localization CSV path")->required();

    auto* ab = app.add_subcommand("ablate", "train and score all four modes");
    add_common(ab);
    ab->add_option("--manifest", manifest)->required();
    ab->add_option("--vocab-dir", vocab_dir)->required();

    auto* gc = app.add_subcommand("grad-check", "finite-difference check of the full model");
    gc->add_option("--dims", dims_name, "dimension preset (tiny)");
    gc->add_option("--tol", tol);
    gc->add_option("--eps", eps);
    gc->add_option("--seed", gc_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(common);
        if (bv->parsed()) return cmd_build_vocab(common, manifest);
        if (ta->parsed()) return cmd_train_attr(common, manifest, vocab_dir);
        if (tc->parsed()) return cmd_train_caption(common, manifest, vocab_dir, attr_ckpt);
        if (cap->parsed()) {
            return cmd_caption(common, ckpt, image_path, vocab_dir, attr_ckpt, attr_words);
        }
        if (ev->parsed()) {
            return cmd_evaluate(common, ckpt, manifest, vocab_dir, split_name, attr_ckpt,
                                model_name, out_csv);
        }
        if (ae->parsed()) {
            return cmd_attn_eval(common, ckpt, manifest, vocab_dir, split_name, attr_ckpt,
                                 categories, out_csv);
        }
        if (ab->parsed()) return cmd_ablate(common, manifest, vocab_dir);
        if (gc->parsed()) return cmd_grad_check(dims_name, tol, eps, gc_seed);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const EvaluationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
