#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "capnet/bbox.hpp"
#include "capnet/tensor.hpp"
#include "capnet/tokens.hpp"

namespace capnet {

enum class Split { train, val, test };
Split split_from_string(const std::string& s);
std::string split_to_string(Split s);

// Token list with fixed reserved slots and train-corpus frequencies.
class Vocabulary {
public:
    Vocabulary();

    std::size_t add(const std::string& token);  // idempotent, returns id
    std::size_t id_of(const std::string& token) const;  // <unk> when missing
    bool contains(const std::string& token) const;
    const std::string& token(std::size_t id) const;
    std::size_t size() const { return tokens_.size(); }
    std::size_t count(const std::string& token) const;
    void bump_count(const std::string& token, std::size_t by = 1);

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    std::map<std::string, std::size_t> counts_;
};

struct Sample {
    std::string id;
    Tensor image;  // (3,H,W) in [0,1]; empty until rendered/loaded
    std::vector<std::string> caption;               // tokens, no specials
    std::array<std::string, 5> attr_words;          // "<pad>"-padded
    std::vector<std::size_t> caption_ids;           // [<start> ... <end>] once encoded
    std::array<std::size_t, 5> attr_ids{};          // filled once encoded
    BBox bbox;
    Split split = Split::train;
    std::string image_path;  // manifest-relative
};

struct SyntheticSpec {
    std::size_t image_size = 64;
    std::vector<std::string> shapes = {"circle", "square", "triangle", "bar"};
    std::vector<std::string> colors = {"red", "green", "blue", "yellow", "purple", "cyan"};
    std::vector<std::string> textures = {"solid", "striped", "dotted"};
    std::vector<std::string> backgrounds = {"white", "gray", "black"};
    std::size_t samples_per_class = 8;  // per shape
    std::uint64_t seed = 1;

    std::size_t total() const { return shapes.size() * samples_per_class; }
    // Content words eligible as attributes.
    std::vector<std::string> attribute_wordlist() const;
};

// One rendered shape per image, caption
// "a <color> <texture> <shape> on a <background> background", bbox = tight
// box of the rendered mask. Split tags, vocabulary counts and the 5
// attribute words are all derived deterministically from the seed.
std::vector<Sample> generate_synthetic(const SyntheticSpec& spec);

struct VocabPair {
    Vocabulary captions;
    Vocabulary attributes;
};

// Caption vocabulary over every train token; attribute vocabulary over the
// wordlist filter, top max_attr_words by frequency (ties lexicographic).
VocabPair build_vocab(const std::vector<std::vector<std::string>>& train_captions,
                      std::size_t max_attr_words, const std::vector<std::string>& wordlist);

// Caption words present in the attribute vocabulary, ordered by descending
// corpus frequency (ties lexicographic), padded with <pad> to length 5.
std::array<std::string, 5> select_attributes(const std::vector<std::string>& caption,
                                             const Vocabulary& attr_vocab);

// Seeded shuffle + contiguous 70/15/15 cut (floor sizes, remainder to train).
void split_dataset(std::vector<Sample>& samples, double train_frac, double val_frac,
                   double test_frac, std::uint64_t seed);

std::vector<std::size_t> encode_caption(const std::vector<std::string>& caption,
                                        const Vocabulary& vocab);
std::vector<std::string> decode_caption(const std::vector<std::size_t>& ids,
                                        const Vocabulary& vocab);

// Fills caption_ids/attr_ids on every sample.
void encode_samples(std::vector<Sample>& samples, const VocabPair& vocabs);

// Tab-separated manifest: id, image path, caption, 5 attribute words,
// "x,y,w,h", split.
void write_manifest(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> read_manifest(const std::string& path);

struct Dataset {
    std::vector<Sample> samples;
    VocabPair vocabs;

    std::vector<std::size_t> indices_of(Split s) const;
};

// Full pipeline over a spec: generate, split, build vocab, encode.
Dataset build_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace capnet
