#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <iterator>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "crae/common.hpp"
#include "crae/model.hpp"

namespace crae {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

// CRC-64/XZ (reflected ECMA-182 polynomial).
inline uint64_t crc64(const uint8_t* data, std::size_t len, uint64_t crc = 0) {
    static const auto table = [] {
        std::array<uint64_t, 256> t{};
        for (uint64_t i = 0; i < 256; ++i) {
            uint64_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? (c >> 1) ^ 0xC96C5795D7870F42ULL : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

namespace detail {

constexpr char kMagic[4] = {'C', 'R', 'A', 'E'};
constexpr uint32_t kFormatVersion = 1;

class ByteWriter {
public:
    template <typename T>
    void put(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const uint8_t*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void put_bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void put_doubles(const std::vector<double>& v) { put_bytes(v.data(), v.size() * 8); }
    void put_string(const std::string& s) {
        put<uint32_t>(static_cast<uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
    const std::vector<uint8_t>& bytes() const { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const uint8_t* p, std::size_t n) : p_(p), end_(p + n) {}
    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        need(sizeof(T));
        T v;
        std::memcpy(&v, p_, sizeof(T));
        p_ += sizeof(T);
        return v;
    }
    void get_doubles(std::vector<double>& v) {
        need(v.size() * 8);
        std::memcpy(v.data(), p_, v.size() * 8);
        p_ += v.size() * 8;
    }
    std::string get_string() {
        const auto n = get<uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(p_), n);
        p_ += n;
        return s;
    }
    bool exhausted() const { return p_ == end_; }

private:
    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end_ - p_) < n)
            throw input_error("checkpoint truncated");
    }
    const uint8_t* p_;
    const uint8_t* end_;
};

inline void write_config(ByteWriter& w, const TrainConfig& c) {
    w.put(c.lambda_u);
    w.put(c.lambda_v);
    w.put(c.lambda_w);
    w.put(c.lambda_s);
    w.put(c.alpha);
    w.put(c.beta);
    w.put(c.denoise_rate);
    w.put(c.learning_rate);
    w.put(c.epochs);
    w.put(c.minibatch_size);
    w.put(c.seed);
    w.put(c.pool.a);
    w.put(c.pool.b);
    w.put<uint8_t>(c.pool.learn_a);
    w.put(c.repr_dim);
    w.put(c.state_dim);
    w.put(static_cast<uint32_t>(c.mode));
    w.put<uint8_t>(c.resample_per_epoch);
    w.put<uint8_t>(c.sigma_candidate);
    w.put<uint8_t>(c.feed_previous);
    w.put(c.workers);
    w.put(c.content_holdout);
}

inline TrainConfig read_config(ByteReader& r) {
    TrainConfig c;
    c.lambda_u = r.get<double>();
    c.lambda_v = r.get<double>();
    c.lambda_w = r.get<double>();
    c.lambda_s = r.get<double>();
    c.alpha = r.get<double>();
    c.beta = r.get<double>();
    c.denoise_rate = r.get<double>();
    c.learning_rate = r.get<double>();
    c.epochs = r.get<uint64_t>();
    c.minibatch_size = r.get<uint64_t>();
    c.seed = r.get<uint64_t>();
    c.pool.a = r.get<double>();
    c.pool.b = r.get<double>();
    c.pool.learn_a = r.get<uint8_t>() != 0;
    c.repr_dim = r.get<uint64_t>();
    c.state_dim = r.get<uint64_t>();
    c.mode = static_cast<TrainMode>(r.get<uint32_t>());
    c.resample_per_epoch = r.get<uint8_t>() != 0;
    c.sigma_candidate = r.get<uint8_t>() != 0;
    c.feed_previous = r.get<uint8_t>() != 0;
    c.workers = r.get<uint64_t>();
    c.content_holdout = r.get<double>();
    return c;
}

}  // namespace detail

// Single binary file: magic, format version, dimension table, config, RNG
// state, vocabulary, all weight tensors and factors as raw little-endian
// doubles, then a trailing CRC-64 of everything before it.
inline void save_checkpoint(Model& m, const std::string& path) {
    detail::ByteWriter w;
    w.put_bytes(detail::kMagic, 4);
    w.put(detail::kFormatVersion);

    w.put<uint64_t>(static_cast<uint64_t>(m.vocab.size()));
    w.put(m.config.repr_dim);
    w.put(m.config.state_dim);
    w.put<uint64_t>(static_cast<uint64_t>(m.n_users()));
    w.put<uint64_t>(static_cast<uint64_t>(m.n_items()));
    w.put(m.epoch);

    detail::write_config(w, m.config);
    for (uint64_t word : m.rng.state()) w.put(word);

    w.put<uint32_t>(static_cast<uint32_t>(m.vocab.wildcard_id));
    w.put<uint32_t>(static_cast<uint32_t>(m.vocab.eos_id));
    for (const auto& tok : m.vocab.id_to_token) w.put_string(tok);

    w.put(m.params.encoder.lambda_s);
    w.put(m.params.decoder.lambda_s);
    w.put<uint8_t>(m.params.encoder.sigma_candidate);
    w.put<uint8_t>(m.params.feed_previous);
    m.params.for_each_tensor(
        [&](const char*, std::vector<double>& t) { w.put_doubles(t); });
    for (const auto& u : m.factors.users) w.put_doubles(u);
    for (const auto& v : m.factors.items) w.put_doubles(v);

    const uint64_t crc = crc64(w.bytes().data(), w.bytes().size());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw input_error("cannot write checkpoint: " + path);
    out.write(reinterpret_cast<const char*>(w.bytes().data()),
              static_cast<std::streamsize>(w.bytes().size()));
    out.write(reinterpret_cast<const char*>(&crc), 8);
    if (!out) throw input_error("failed writing checkpoint: " + path);
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open checkpoint: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 16) throw input_error("checkpoint truncated: " + path);

    uint64_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 8, 8);
    if (crc64(bytes.data(), bytes.size() - 8) != stored_crc)
        throw input_error("checkpoint checksum mismatch: " + path);

    detail::ByteReader r(bytes.data(), bytes.size() - 8);
    char magic[4];
    for (char& c : magic) c = r.get<char>();
    if (std::memcmp(magic, detail::kMagic, 4) != 0)
        throw input_error("not a CRAE checkpoint: " + path);
    if (r.get<uint32_t>() != detail::kFormatVersion)
        throw input_error("unsupported checkpoint format version: " + path);

    const auto vocab_size = r.get<uint64_t>();
    const auto repr_dim = r.get<uint64_t>();
    const auto state_dim = r.get<uint64_t>();
    const auto n_users = r.get<uint64_t>();
    const auto n_items = r.get<uint64_t>();
    const auto epoch = r.get<uint64_t>();

    Model m;
    m.epoch = epoch;
    m.config = detail::read_config(r);
    if (m.config.repr_dim != repr_dim || m.config.state_dim != state_dim)
        throw input_error("checkpoint dimension table disagrees with config: " + path);

    std::array<uint64_t, 4> rng_state;
    for (auto& word : rng_state) word = r.get<uint64_t>();
    m.rng.set_state(rng_state);

    m.vocab.wildcard_id = static_cast<int>(r.get<uint32_t>());
    m.vocab.eos_id = static_cast<int>(r.get<uint32_t>());
    for (uint64_t i = 0; i < vocab_size; ++i) {
        std::string tok = r.get_string();
        if (static_cast<int>(i) != m.vocab.wildcard_id && static_cast<int>(i) != m.vocab.eos_id)
            m.vocab.token_to_id.emplace(tok, static_cast<int>(i));
        m.vocab.id_to_token.push_back(std::move(tok));
    }

    Rng throwaway(0);
    m.params = DraeParams::init(repr_dim, state_dim, vocab_size, 1.0, false, false, throwaway);
    m.params.encoder.lambda_s = r.get<double>();
    m.params.decoder.lambda_s = r.get<double>();
    const bool sigma_cand = r.get<uint8_t>() != 0;
    m.params.encoder.sigma_candidate = sigma_cand;
    m.params.decoder.sigma_candidate = sigma_cand;
    m.params.feed_previous = r.get<uint8_t>() != 0;
    m.params.for_each_tensor([&](const char*, std::vector<double>& t) { r.get_doubles(t); });

    m.factors.users.assign(n_users, Vector(repr_dim));
    m.factors.items.assign(n_items, Vector(repr_dim));
    for (auto& u : m.factors.users) r.get_doubles(u);
    for (auto& v : m.factors.items) r.get_doubles(v);

    if (!r.exhausted()) throw input_error("checkpoint has trailing bytes: " + path);
    return m;
}

}  // namespace crae
