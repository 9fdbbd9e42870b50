#include "propwatch/embeddings.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <nlohmann/json.hpp>

#include "propwatch/data.hpp"
#include "propwatch/error.hpp"
#include "propwatch/text.hpp"

namespace propwatch {

using nlohmann::json;

namespace {
constexpr std::string_view kMagic = "TGEMB1\n";

void put_f32(std::string& out, float f) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float get_f32(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}
}  // namespace

EmbeddingStore::EmbeddingStore(std::size_t dim, std::string provenance)
    : dim_(dim), provenance_(std::move(provenance)) {
    if (dim == 0) fail(ErrorKind::data, "embedding dimension must be positive");
}

void EmbeddingStore::add(const std::string& id, std::span<const float> v) {
    if (v.size() != dim_)
        fail(ErrorKind::data, "vector for " + id + " has length " + std::to_string(v.size()) + ", store dim is " +
                                  std::to_string(dim_));
    for (float f : v)
        if (!std::isfinite(f)) fail(ErrorKind::data, "non-finite component in vector for " + id);
    if (id.size() > 0xffff) fail(ErrorKind::data, "message id too long");
    if (!index_.emplace(id, ids_.size()).second) fail(ErrorKind::data, "duplicate embedding id " + id);
    ids_.push_back(id);
    data_.insert(data_.end(), v.begin(), v.end());
}

std::optional<std::span<const float>> EmbeddingStore::get(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return std::span<const float>(data_.data() + it->second * dim_, dim_);
}

std::vector<std::optional<std::span<const float>>> EmbeddingStore::get_many(const std::vector<std::string>& ids) const {
    std::vector<std::optional<std::span<const float>>> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(get(id));
    return out;
}

std::string serialize_store(const EmbeddingStore& store) {
    std::string out(kMagic);
    json header = {{"dim", store.dim()}, {"count", store.size()}, {"provenance", store.provenance()}};
    out += header.dump();
    out += '\n';
    for (const auto& id : store.ids()) {
        out.push_back(static_cast<char>((id.size() >> 8) & 0xff));
        out.push_back(static_cast<char>(id.size() & 0xff));
        out += id;
        auto v = *store.get(id);
        for (float f : v) put_f32(out, f);
    }
    return out;
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
    write_text_file(path, serialize_store(store));
}

EmbeddingStore parse_store(std::string_view bytes) {
    if (bytes.substr(0, kMagic.size()) != kMagic) fail(ErrorKind::format, "not a TGEMB1 file (bad magic)");
    std::size_t nl = bytes.find('\n', kMagic.size());
    if (nl == std::string_view::npos) fail(ErrorKind::format, "TGEMB1 header line is not terminated");
    std::size_t dim = 0, count = 0;
    std::string provenance;
    try {
        auto h = json::parse(bytes.substr(kMagic.size(), nl - kMagic.size()));
        dim = h.at("dim").get<std::size_t>();
        count = h.at("count").get<std::size_t>();
        provenance = h.value("provenance", std::string{});
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("bad TGEMB1 header: ") + e.what());
    }
    if (dim == 0) fail(ErrorKind::format, "TGEMB1 header declares dim 0");

    EmbeddingStore store(dim, provenance);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    std::size_t pos = nl + 1;
    Vector v(dim);
    for (std::size_t r = 0; r < count; ++r) {
        if (pos + 2 > bytes.size()) fail(ErrorKind::format, "truncated TGEMB1 file at record " + std::to_string(r));
        std::size_t len = (static_cast<std::size_t>(p[pos]) << 8) | p[pos + 1];
        pos += 2;
        if (pos + len + 4 * dim > bytes.size())
            fail(ErrorKind::format, "truncated TGEMB1 file at record " + std::to_string(r));
        std::string id(bytes.substr(pos, len));
        pos += len;
        for (std::size_t k = 0; k < dim; ++k, pos += 4) v[k] = get_f32(p + pos);
        store.add(id, v);
    }
    if (pos != bytes.size()) fail(ErrorKind::format, "trailing bytes after the declared TGEMB1 records");
    return store;
}

EmbeddingStore load_store(const std::filesystem::path& path) { return parse_store(read_text_file(path)); }

// ------------------------------------------------------------ hash embedder

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> char_trigrams(std::string_view s) {
    std::u32string cps = U"\x02\x02" + text::decode(text::to_lower(s)) + U"\x03\x03";
    std::vector<std::string> out;
    out.reserve(cps.size() - 2);
    for (std::size_t i = 0; i + 3 <= cps.size(); ++i) out.push_back(text::encode(std::u32string_view(cps).substr(i, 3)));
    return out;
}

Vector hash_embed(std::string_view s, std::size_t dim) {
    if (dim < 8) fail(ErrorKind::usage, "hash embedding dimension must be at least 8");
    std::vector<double> acc(dim, 0.0);
    for (const auto& g : char_trigrams(s)) {
        std::uint64_t h = fnv1a64(g);
        acc[h % dim] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0.0;
    for (double x : acc) norm += x * x;
    norm = std::sqrt(norm);
    Vector v(dim, 0.0f);
    if (norm == 0.0) {
        // Opposite-signed collisions cancelled out; fall back to the first 3-gram's bucket.
        v[fnv1a64(char_trigrams(s).front()) % dim] = 1.0f;
        return v;
    }
    for (std::size_t i = 0; i < dim; ++i) v[i] = static_cast<float>(acc[i] / norm);
    return v;
}

HashEmbedder::HashEmbedder(std::size_t dim) : dim_(dim) {
    if (dim < 8) fail(ErrorKind::usage, "hash embedding dimension must be at least 8");
}

std::vector<Vector> HashEmbedder::embed(const std::vector<std::string>& texts) {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embed(t, dim_));
    return out;
}

std::string HashEmbedder::name() const { return "hash3gram-" + std::to_string(dim_); }

EmbeddingStore embed_corpus(const Corpus& corpus, Embedder& embedder, const std::string& provenance,
                            std::size_t batch) {
    EmbeddingStore store(embedder.dim(), provenance);
    auto msgs = corpus.messages();
    for (std::size_t i = 0; i < msgs.size(); i += batch) {
        std::vector<std::string> texts;
        for (std::size_t j = i; j < std::min(msgs.size(), i + batch); ++j) texts.push_back(msgs[j].text);
        auto vs = embedder.embed(texts);
        if (vs.size() != texts.size()) fail(ErrorKind::runtime, "embedder returned a wrong number of vectors");
        for (std::size_t j = 0; j < vs.size(); ++j) store.add(msgs[i + j].key().str(), vs[j]);
    }
    return store;
}

}  // namespace propwatch
