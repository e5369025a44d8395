#include "capnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "capnet/errors.hpp"

namespace capnet {

namespace {

constexpr char kMagic[6] = {'A', 'I', 'C', 'A', 'B', '1'};

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw IoError("cannot write " + path);
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) u64(d);
        bytes(t.data(), t.size() * sizeof(double));
    }
    void close() {
        out_.flush();
        if (!out_) throw IoError("short write to " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path);
        buf_.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }
    void bytes(void* p, std::size_t n) {
        if (pos_ + n > buf_.size()) throw FormatError(path_ + ": truncated checkpoint", pos_);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    double f64() { double v; bytes(&v, 8); return v; }
    std::string str() {
        const std::uint32_t n = u32();
        if (pos_ + n > buf_.size()) throw FormatError(path_ + ": truncated string", pos_);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    Tensor tensor() {
        const std::uint32_t rank = u32();
        if (rank > 8) throw FormatError(path_ + ": implausible tensor rank", pos_ - 4);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(u64());
        Tensor t(shape);
        bytes(t.data(), t.size() * sizeof(double));
        return t;
    }
    std::size_t pos() const { return pos_; }
    bool at_end() const { return pos_ == buf_.size(); }

private:
    std::string path_;
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_echo,
                     const ParamStore& params, const AdamState* adam) {
    Writer w(path);
    w.bytes(kMagic, sizeof(kMagic));
    w.str(config_echo);
    w.u32(static_cast<std::uint32_t>(params.count()));
    for (const auto& [name, p] : params) {
        w.str(name);
        w.tensor(p.value);
    }
    w.u8(adam ? 1 : 0);
    if (adam) {
        w.u64(adam->t);
        w.f64(adam->learning_rate);
        w.f64(adam->beta1);
        w.f64(adam->beta2);
        w.f64(adam->epsilon);
        for (const auto& [name, p] : params) {
            w.tensor(adam->m.at(name));
            w.tensor(adam->v.at(name));
        }
    }
    w.close();
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[6];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError(path + ": bad checkpoint magic", 0);
    }
    LoadedCheckpoint out;
    out.config_echo = r.str();
    const std::uint32_t n = r.u32();
    std::vector<std::string> order;
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.str();
        Tensor value = r.tensor();
        out.params.add(name, std::move(value));
        order.push_back(std::move(name));
    }
    if (r.u8()) {
        AdamState s;
        s.t = r.u64();
        s.learning_rate = r.f64();
        s.beta1 = r.f64();
        s.beta2 = r.f64();
        s.epsilon = r.f64();
        for (const std::string& name : order) {
            s.m.emplace(name, r.tensor());
            s.v.emplace(name, r.tensor());
        }
        out.adam = std::move(s);
    }
    if (!r.at_end()) throw FormatError(path + ": trailing bytes after checkpoint", r.pos());
    return out;
}

void apply_checkpoint(const LoadedCheckpoint& ckpt, ParamStore& target) {
    if (ckpt.params.count() != target.count()) {
        throw StateError("checkpoint has " + std::to_string(ckpt.params.count()) +
                         " tensors but the model expects " + std::to_string(target.count()));
    }
    for (auto& [name, p] : target) {
        const Parameter& src = ckpt.params.get(name);
        if (!src.value.same_shape(p.value)) {
            throw StateError("checkpoint shape mismatch for " + name + ": " +
                             shape_str(src.value.shape()) + " vs " + shape_str(p.value.shape()));
        }
        p.value = src.value;
    }
}

}  // namespace capnet
