#include "capnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "capnet/errors.hpp"
#include "capnet/rng.hpp"

namespace capnet {

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ValidationError("unknown split: " + s);
}

std::string split_to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

// ---- Vocabulary ----

Vocabulary::Vocabulary() {
    for (const char* t : {"<pad>", "<start>", "<end>", "<unk>"}) add(t);
}

std::size_t Vocabulary::add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    tokens_.push_back(token);
    index_.emplace(token, tokens_.size() - 1);
    return tokens_.size() - 1;
}

std::size_t Vocabulary::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return index_.find(token) != index_.end();
}

const std::string& Vocabulary::token(std::size_t id) const {
    if (id >= tokens_.size()) {
        throw VocabularyError("token id " + std::to_string(id) + " out of range (size " +
                              std::to_string(tokens_.size()) + ")");
    }
    return tokens_[id];
}

std::size_t Vocabulary::count(const std::string& token) const {
    auto it = counts_.find(token);
    return it == counts_.end() ? 0 : it->second;
}

void Vocabulary::bump_count(const std::string& token, std::size_t by) { counts_[token] += by; }

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& t : tokens_) out << t << "\n";
    if (!out) throw IoError("short write to " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    Vocabulary v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno < 4) {
            if (line != v.tokens_[lineno]) {
                throw IoError(path + ": line " + std::to_string(lineno + 1) +
                              " must be the reserved token " + v.tokens_[lineno]);
            }
        } else {
            if (line.empty()) throw IoError(path + ": empty token at line " + std::to_string(lineno + 1));
            if (v.contains(line)) throw IoError(path + ": duplicate token " + line);
            v.add(line);
        }
        ++lineno;
    }
    if (lineno < 4) throw IoError(path + ": vocabulary must contain the four reserved tokens");
    return v;
}

// ---- synthetic rendering ----

namespace {

struct Rgb {
    double r, g, b;
};

Rgb named_color(const std::string& name) {
    if (name == "red") return {0.85, 0.10, 0.10};
    if (name == "green") return {0.10, 0.75, 0.15};
    if (name == "blue") return {0.15, 0.25, 0.90};
    if (name == "yellow") return {0.90, 0.85, 0.10};
    if (name == "purple") return {0.60, 0.15, 0.80};
    if (name == "cyan") return {0.10, 0.80, 0.85};
    if (name == "orange") return {0.95, 0.55, 0.10};
    if (name == "white") return {1.00, 1.00, 1.00};
    if (name == "gray") return {0.50, 0.50, 0.50};
    if (name == "black") return {0.00, 0.00, 0.00};
    throw ValidationError("unknown color name: " + name);
}

struct Placement {
    long x0, y0, size;
};

bool inside_shape(const std::string& shape, const Placement& p, long x, long y) {
    const double px = static_cast<double>(x) + 0.5;
    const double py = static_cast<double>(y) + 0.5;
    const double cx = static_cast<double>(p.x0) + static_cast<double>(p.size) / 2.0;
    if (shape == "circle") {
        const double cy = static_cast<double>(p.y0) + static_cast<double>(p.size) / 2.0;
        const double r = static_cast<double>(p.size) / 2.0;
        return (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
    }
    if (shape == "square") {
        return x >= p.x0 && x < p.x0 + p.size && y >= p.y0 && y < p.y0 + p.size;
    }
    if (shape == "triangle") {
        if (y < p.y0 || y >= p.y0 + p.size) return false;
        const double depth = py - static_cast<double>(p.y0);
        const double halfw = depth / 2.0;
        return std::abs(px - cx) <= halfw;
    }
    if (shape == "bar") {
        const long thickness = std::max<long>(3, p.size / 4);
        return x >= p.x0 && x < p.x0 + p.size && y >= p.y0 && y < p.y0 + thickness;
    }
    throw ValidationError("unknown shape name: " + shape);
}

Rgb texel(const std::string& texture, const Rgb& color, const Placement& p, long x, long y) {
    if (texture == "solid") return color;
    if (texture == "striped") {
        // dark bands below the base color
        const Rgb dark{color.r * 0.55, color.g * 0.55, color.b * 0.55};
        return (((y - p.y0) / 3) % 2 == 0) ? color : dark;
    }
    if (texture == "dotted") {
        // light dots above the base color; never equal to a background
        const Rgb light{0.55 * color.r + 0.45, 0.55 * color.g + 0.45, 0.55 * color.b + 0.45};
        return (((y - p.y0) % 6) < 3 && ((x - p.x0) % 6) < 3) ? light : color;
    }
    throw ValidationError("unknown texture name: " + texture);
}

}  // namespace

std::vector<std::string> SyntheticSpec::attribute_wordlist() const {
    std::vector<std::string> words;
    std::set<std::string> seen;
    for (const auto& group : {colors, textures, shapes, backgrounds}) {
        for (const auto& w : group) {
            if (seen.insert(w).second) words.push_back(w);
        }
    }
    return words;
}

namespace {

void validate_spec(const SyntheticSpec& spec) {
    if (spec.image_size < 32) throw ValidationError("image_size must be >= 32");
    if (spec.shapes.empty() || spec.colors.empty() || spec.textures.empty() ||
        spec.backgrounds.empty()) {
        throw ValidationError("synthetic spec requires non-empty shape/color/texture/background sets");
    }
    if (spec.samples_per_class == 0) throw ValidationError("samples_per_class must be positive");
}

Sample render_sample(const SyntheticSpec& spec, std::size_t index) {
    RngStream rng = derive_stream(spec.seed, index);
    const long n = static_cast<long>(spec.image_size);

    Sample s;
    std::ostringstream oss;
    oss << "s" << std::setw(5) << std::setfill('0') << index;
    s.id = oss.str();

    const std::string& shape = spec.shapes[index / spec.samples_per_class];
    const std::string& color_name = spec.colors[rng.below(spec.colors.size())];
    const std::string& texture = spec.textures[rng.below(spec.textures.size())];
    const std::string& bg_name = spec.backgrounds[rng.below(spec.backgrounds.size())];
    const Rgb color = named_color(color_name);
    const Rgb bg = named_color(bg_name);

    const long min_size = n / 3;
    const long max_size = n / 2;
    if (min_size < 4 || max_size >= n - 2 || min_size > max_size) {
        throw GenerationError("cannot fit a shape into a " + std::to_string(n) + "px image");
    }
    Placement p{};
    p.size = min_size + static_cast<long>(rng.below(static_cast<std::uint64_t>(max_size - min_size + 1)));
    p.x0 = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(n - p.size - 2)));
    p.y0 = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(n - p.size - 2)));

    s.image = Tensor({3, spec.image_size, spec.image_size});
    long min_x = n, min_y = n, max_x = -1, max_y = -1;
    for (long y = 0; y < n; ++y) {
        for (long x = 0; x < n; ++x) {
            Rgb px = bg;
            if (inside_shape(shape, p, x, y)) {
                px = texel(texture, color, p, x, y);
                min_x = std::min(min_x, x);
                max_x = std::max(max_x, x);
                min_y = std::min(min_y, y);
                max_y = std::max(max_y, y);
            }
            s.image.at(0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = px.r;
            s.image.at(1, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = px.g;
            s.image.at(2, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = px.b;
        }
    }
    if (max_x < 0) throw GenerationError("rendered shape has no pixels (sample " + s.id + ")");
    s.bbox = BBox{min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
    s.caption = {"a", color_name, texture, shape, "on", "a", bg_name, "background"};
    s.attr_words = {"<pad>", "<pad>", "<pad>", "<pad>", "<pad>"};
    s.image_path = "images/" + s.id + ".ppm";
    return s;
}

}  // namespace

std::vector<Sample> generate_synthetic(const SyntheticSpec& spec) {
    validate_spec(spec);
    std::vector<Sample> samples;
    samples.reserve(spec.total());
    for (std::size_t i = 0; i < spec.total(); ++i) samples.push_back(render_sample(spec, i));
    split_dataset(samples, 0.70, 0.15, 0.15, spec.seed);

    std::vector<std::vector<std::string>> train_caps;
    for (const Sample& s : samples) {
        if (s.split == Split::train) train_caps.push_back(s.caption);
    }
    VocabPair vocabs = build_vocab(train_caps, 1000, spec.attribute_wordlist());
    for (Sample& s : samples) s.attr_words = select_attributes(s.caption, vocabs.attributes);
    return samples;
}

VocabPair build_vocab(const std::vector<std::vector<std::string>>& train_captions,
                      std::size_t max_attr_words, const std::vector<std::string>& wordlist) {
    if (train_captions.empty()) throw ValidationError("cannot build vocabulary from an empty corpus");
    VocabPair out;
    std::map<std::string, std::size_t> counts;
    for (const auto& cap : train_captions) {
        for (const auto& tok : cap) {
            out.captions.add(tok);
            ++counts[tok];
        }
    }
    for (const auto& [tok, c] : counts) out.captions.bump_count(tok, c);

    std::set<std::string> allowed(wordlist.begin(), wordlist.end());
    std::vector<std::pair<std::string, std::size_t>> candidates;
    for (const auto& [tok, c] : counts) {
        if (allowed.count(tok)) candidates.emplace_back(tok, c);
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (candidates.size() > max_attr_words) candidates.resize(max_attr_words);
    for (const auto& [tok, c] : candidates) {
        out.attributes.add(tok);
        out.attributes.bump_count(tok, c);
    }
    return out;
}

std::array<std::string, 5> select_attributes(const std::vector<std::string>& caption,
                                             const Vocabulary& attr_vocab) {
    std::set<std::string> seen;
    std::vector<std::string> hits;
    for (const auto& tok : caption) {
        if (attr_vocab.contains(tok) && attr_vocab.id_of(tok) > kUnkId && seen.insert(tok).second) {
            hits.push_back(tok);
        }
    }
    std::sort(hits.begin(), hits.end(), [&](const std::string& a, const std::string& b) {
        const std::size_t ca = attr_vocab.count(a), cb = attr_vocab.count(b);
        if (ca != cb) return ca > cb;
        return a < b;
    });
    std::array<std::string, 5> out = {"<pad>", "<pad>", "<pad>", "<pad>", "<pad>"};
    for (std::size_t i = 0; i < std::min<std::size_t>(5, hits.size()); ++i) out[i] = hits[i];
    return out;
}

void split_dataset(std::vector<Sample>& samples, double train_frac, double val_frac,
                   double test_frac, std::uint64_t seed) {
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw ValidationError("split fractions must sum to 1");
    }
    if (samples.size() < 3) throw ValidationError("need at least 3 samples to split");
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream rng(seed);
    rng.shuffle(order);
    const std::size_t n = samples.size();
    const std::size_t n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n)));
    const std::size_t n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(n)));
    const std::size_t n_train = n - n_val - n_test;
    for (std::size_t i = 0; i < n; ++i) {
        Split s = Split::train;
        if (i >= n_train && i < n_train + n_val) s = Split::val;
        else if (i >= n_train + n_val) s = Split::test;
        samples[order[i]].split = s;
    }
}

std::vector<std::size_t> encode_caption(const std::vector<std::string>& caption,
                                        const Vocabulary& vocab) {
    std::vector<std::size_t> ids;
    ids.reserve(caption.size() + 2);
    ids.push_back(kStartId);
    for (const auto& tok : caption) ids.push_back(vocab.id_of(tok));
    ids.push_back(kEndId);
    return ids;
}

std::vector<std::string> decode_caption(const std::vector<std::size_t>& ids,
                                        const Vocabulary& vocab) {
    std::vector<std::string> tokens;
    for (std::size_t id : ids) {
        if (id == kPadId || id == kStartId || id == kEndId) continue;
        tokens.push_back(vocab.token(id));
    }
    return tokens;
}

void encode_samples(std::vector<Sample>& samples, const VocabPair& vocabs) {
    for (Sample& s : samples) {
        s.caption_ids = encode_caption(s.caption, vocabs.captions);
        for (std::size_t i = 0; i < 5; ++i) s.attr_ids[i] = vocabs.attributes.id_of(s.attr_words[i]);
    }
}

void write_manifest(const std::string& path, const std::vector<Sample>& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const Sample& s : samples) {
        out << s.id << "\t" << s.image_path << "\t";
        for (std::size_t i = 0; i < s.caption.size(); ++i) {
            if (i) out << " ";
            out << s.caption[i];
        }
        out << "\t";
        for (std::size_t i = 0; i < 5; ++i) {
            if (i) out << " ";
            out << s.attr_words[i];
        }
        out << "\t" << s.bbox.x << "," << s.bbox.y << "," << s.bbox.w << "," << s.bbox.h << "\t"
            << split_to_string(s.split) << "\n";
    }
    if (!out) throw IoError("short write to " + path);
}

namespace {

std::vector<std::string> split_on(const std::string& s, char delim) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == delim) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

}  // namespace

std::vector<Sample> read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<Sample> samples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_on(line, '\t');
        if (fields.size() != 6) {
            throw IoError(path + ": line " + std::to_string(lineno) + " has " +
                          std::to_string(fields.size()) + " fields, expected 6");
        }
        Sample s;
        s.id = fields[0];
        s.image_path = fields[1];
        for (const auto& tok : split_on(fields[2], ' ')) {
            if (!tok.empty()) s.caption.push_back(tok);
        }
        const auto attrs = split_on(fields[3], ' ');
        if (attrs.size() != 5) {
            throw IoError(path + ": line " + std::to_string(lineno) + " needs 5 attribute words");
        }
        for (std::size_t i = 0; i < 5; ++i) s.attr_words[i] = attrs[i];
        const auto box = split_on(fields[4], ',');
        if (box.size() != 4) {
            throw IoError(path + ": line " + std::to_string(lineno) + " has a malformed bbox");
        }
        try {
            s.bbox = BBox{std::stol(box[0]), std::stol(box[1]), std::stol(box[2]), std::stol(box[3])};
        } catch (const std::exception&) {
            throw IoError(path + ": line " + std::to_string(lineno) + " has a malformed bbox");
        }
        s.split = split_from_string(fields[5]);
        if (s.caption.empty()) {
            throw IoError(path + ": line " + std::to_string(lineno) + " has an empty caption");
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<std::size_t> Dataset::indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].split == s) out.push_back(i);
    }
    return out;
}

Dataset build_synthetic_dataset(const SyntheticSpec& spec) {
    Dataset d;
    d.samples = generate_synthetic(spec);
    std::vector<std::vector<std::string>> train_caps;
    for (const Sample& s : d.samples) {
        if (s.split == Split::train) train_caps.push_back(s.caption);
    }
    d.vocabs = build_vocab(train_caps, 1000, spec.attribute_wordlist());
    encode_samples(d.samples, d.vocabs);
    return d;
}

}  // namespace capnet
