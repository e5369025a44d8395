#include "capnet/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "capnet/errors.hpp"

namespace capnet {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return s.substr(a, b - a);
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += v[i];
    }
    return out;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

AttrFusion fusion_from_string(const std::string& s) {
    if (s == "concat") return AttrFusion::concat;
    if (s == "sum") return AttrFusion::sum;
    if (s == "mean") return AttrFusion::mean;
    throw ConfigError("unknown attr_fusion: " + s);
}

std::string fusion_to_string(AttrFusion f) {
    switch (f) {
        case AttrFusion::concat: return "concat";
        case AttrFusion::sum: return "sum";
        case AttrFusion::mean: return "mean";
    }
    return "concat";
}

}  // namespace

Config Config::parse_text(const std::string& text, const std::string& origin) {
    Config cfg;
    std::map<std::string, std::function<void(const std::string&)>> setters;

    auto set_size = [&](const std::string& key, std::size_t& field) {
        setters[key] = [&field, key](const std::string& v) {
            std::size_t out = 0;
            auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
            if (ec != std::errc{} || p != v.data() + v.size()) {
                throw ConfigError("key " + key + ": expected a non-negative integer, got '" + v + "'");
            }
            field = out;
        };
    };
    auto set_u64 = [&](const std::string& key, std::uint64_t& field) {
        setters[key] = [&field, key](const std::string& v) {
            std::uint64_t out = 0;
            auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
            if (ec != std::errc{} || p != v.data() + v.size()) {
                throw ConfigError("key " + key + ": expected a non-negative integer, got '" + v + "'");
            }
            field = out;
        };
    };
    auto set_double = [&](const std::string& key, double& field) {
        setters[key] = [&field, key](const std::string& v) {
            try {
                std::size_t used = 0;
                field = std::stod(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
                throw ConfigError("key " + key + ": expected a number, got '" + v + "'");
            }
        };
    };
    auto set_list = [&](const std::string& key, std::vector<std::string>& field) {
        setters[key] = [&field, key](const std::string& v) {
            field = split_commas(v);
            if (field.empty()) throw ConfigError("key " + key + ": list must be non-empty");
        };
    };

    setters["mode"] = [&cfg](const std::string& v) { cfg.mode = mode_from_string(v); };
    set_size("image_size", cfg.image_size);
    set_size("grid_side", cfg.grid_side);
    set_size("d", cfg.d);
    set_size("hidden", cfg.hidden);
    set_size("cap_embed", cfg.cap_embed);
    set_size("attr_embed", cfg.attr_embed);
    set_size("attn_dim", cfg.attn_dim);
    set_size("conv1_channels", cfg.conv1_channels);
    set_size("head_channels", cfg.head_channels);
    set_size("head_fc_dim", cfg.head_fc_dim);
    setters["attr_fusion"] = [&cfg](const std::string& v) { cfg.attr_fusion = fusion_from_string(v); };
    set_double("lr", cfg.lr);
    set_double("beta1", cfg.beta1);
    set_double("beta2", cfg.beta2);
    set_double("adam_eps", cfg.adam_eps);
    set_double("beta_n", cfg.beta_n);
    set_size("epochs_caption", cfg.epochs_caption);
    set_size("epochs_attr", cfg.epochs_attr);
    set_size("batch_size", cfg.batch_size);
    set_u64("seed", cfg.seed);
    setters["freeze_encoder"] = [&cfg](const std::string& v) {
        if (v == "true") cfg.freeze_encoder = true;
        else if (v == "false") cfg.freeze_encoder = false;
        else throw ConfigError("key freeze_encoder: expected true or false, got '" + v + "'");
    };
    setters["attr_source"] = [&cfg](const std::string& v) {
        if (v != "ground_truth" && v != "extractor") {
            throw ConfigError("key attr_source: expected ground_truth or extractor, got '" + v + "'");
        }
        cfg.attr_source = v;
    };
    set_size("max_caption_len", cfg.max_caption_len);
    set_double("th", cfg.th);
    setters["connectivity"] = [&cfg](const std::string& v) {
        if (v == "4") cfg.connectivity = 4;
        else if (v == "8") cfg.connectivity = 8;
        else throw ConfigError("key connectivity: expected 4 or 8, got '" + v + "'");
    };
    set_size("samples_per_class", cfg.samples_per_class);
    set_list("shapes", cfg.shapes);
    set_list("colors", cfg.colors);
    set_list("textures", cfg.textures);
    set_list("backgrounds", cfg.backgrounds);
    set_size("max_attr_words", cfg.max_attr_words);

    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        try {
            it->second(value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path);
}

void Config::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(image_size >= 32, "image_size must be >= 32");
    require(grid_side >= 1 && grid_side * 2 <= image_size,
            "grid_side must be >= 1 and fit the encoder output");
    require(d >= 1 && hidden >= 1 && cap_embed >= 1 && attr_embed >= 1 && attn_dim >= 1,
            "model dimensions must be positive");
    require(conv1_channels >= 1 && head_channels >= 1 && head_fc_dim >= 1,
            "encoder dimensions must be positive");
    require(lr > 0, "lr must be positive");
    require(beta1 >= 0 && beta1 < 1, "beta1 must lie in [0, 1)");
    require(beta2 >= 0 && beta2 < 1, "beta2 must lie in [0, 1)");
    require(adam_eps > 0, "adam_eps must be positive");
    require(beta_n > 0, "beta_n must be positive");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(max_caption_len >= 1, "max_caption_len must be >= 1");
    require(th >= 0 && th < 1, "th must lie in [0, 1)");
    require(samples_per_class >= 1, "samples_per_class must be >= 1");
    require(max_attr_words >= 1, "max_attr_words must be >= 1");
    require(!shapes.empty() && !colors.empty() && !textures.empty() && !backgrounds.empty(),
            "shape/color/texture/background sets must be non-empty");
}

std::string Config::to_text() const {
    std::ostringstream os;
    os << "mode = " << mode_to_string(mode) << "\n";
    os << "image_size = " << image_size << "\n";
    os << "grid_side = " << grid_side << "\n";
    os << "d = " << d << "\n";
    os << "hidden = " << hidden << "\n";
    os << "cap_embed = " << cap_embed << "\n";
    os << "attr_embed = " << attr_embed << "\n";
    os << "attn_dim = " << attn_dim << "\n";
    os << "conv1_channels = " << conv1_channels << "\n";
    os << "head_channels = " << head_channels << "\n";
    os << "head_fc_dim = " << head_fc_dim << "\n";
    os << "attr_fusion = " << fusion_to_string(attr_fusion) << "\n";
    os << "lr = " << fmt_double(lr) << "\n";
    os << "beta1 = " << fmt_double(beta1) << "\n";
    os << "beta2 = " << fmt_double(beta2) << "\n";
    os << "adam_eps = " << fmt_double(adam_eps) << "\n";
    os << "beta_n = " << fmt_double(beta_n) << "\n";
    os << "epochs_caption = " << epochs_caption << "\n";
    os << "epochs_attr = " << epochs_attr << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "seed = " << seed << "\n";
    os << "freeze_encoder = " << (freeze_encoder ? "true" : "false") << "\n";
    os << "attr_source = " << attr_source << "\n";
    os << "max_caption_len = " << max_caption_len << "\n";
    os << "th = " << fmt_double(th) << "\n";
    os << "connectivity = " << connectivity << "\n";
    os << "samples_per_class = " << samples_per_class << "\n";
    os << "shapes = " << join(shapes) << "\n";
    os << "colors = " << join(colors) << "\n";
    os << "textures = " << join(textures) << "\n";
    os << "backgrounds = " << join(backgrounds) << "\n";
    os << "max_attr_words = " << max_attr_words << "\n";
    return os.str();
}

SyntheticSpec Config::synthetic_spec() const {
    SyntheticSpec spec;
    spec.image_size = image_size;
    spec.shapes = shapes;
    spec.colors = colors;
    spec.textures = textures;
    spec.backgrounds = backgrounds;
    spec.samples_per_class = samples_per_class;
    spec.seed = seed;
    return spec;
}

DecoderDims Config::decoder_dims(std::size_t cap_vocab, std::size_t attr_vocab) const {
    DecoderDims dims;
    dims.cap_vocab = cap_vocab;
    dims.attr_vocab = attr_vocab;
    dims.cap_embed = cap_embed;
    dims.attr_embed = attr_embed;
    dims.hidden = hidden;
    dims.feat_dim = d;
    dims.attn_dim = attn_dim;
    dims.grid_side = grid_side;
    dims.mode = mode;
    dims.fusion = attr_fusion;
    return dims;
}

EncoderConfig Config::encoder_config() const {
    EncoderConfig enc;
    enc.conv1_channels = conv1_channels;
    enc.feat_dim = d;
    enc.grid_side = grid_side;
    enc.head_channels = head_channels;
    enc.head_fc_dim = head_fc_dim;
    return enc;
}

}  // namespace capnet
