#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "propwatch/corpus.hpp"

namespace propwatch {

using Vector = std::vector<float>;

/// Message id -> fixed-dimension vector. Append-only while building, read-only after.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    EmbeddingStore(std::size_t dim, std::string provenance);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const std::string& provenance() const { return provenance_; }
    const std::vector<std::string>& ids() const { return ids_; }

    /// Throws Error(data) on wrong length, non-finite component, or duplicate id.
    void add(const std::string& id, std::span<const float> v);

    std::optional<std::span<const float>> get(const std::string& id) const;
    std::optional<std::span<const float>> get(const MessageKey& key) const { return get(key.str()); }
    /// Order-preserving bulk lookup.
    std::vector<std::optional<std::span<const float>>> get_many(const std::vector<std::string>& ids) const;

private:
    std::size_t dim_ = 0;
    std::string provenance_;
    std::vector<std::string> ids_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// TGEMB1 file: magic, JSON header line, then (u16 BE id length, id, dim x f32 LE) records.
void save_store(const EmbeddingStore& store, const std::filesystem::path& path);
std::string serialize_store(const EmbeddingStore& store);
/// Throws Error(format) on magic/header/length problems, Error(data) on non-finite values.
EmbeddingStore load_store(const std::filesystem::path& path);
EmbeddingStore parse_store(std::string_view bytes);

inline constexpr std::size_t kHashEmbedDim = 128;
inline constexpr std::size_t kEncoderDim = 768;

/// Signed feature hashing of lowercase character 3-grams (FNV-1a 64 over the UTF-8 of each
/// 3-gram; bucket = h mod dim, sign = top bit), text padded with two boundary markers on
/// each side, L2-normalized. Throws Error(usage) for dim < 8.
Vector hash_embed(std::string_view text, std::size_t dim = kHashEmbedDim);

/// The 3-grams hash_embed feeds into the hash, in order.
std::vector<std::string> char_trigrams(std::string_view text);
std::uint64_t fnv1a64(std::string_view bytes);

/// Text encoder abstraction used by online scoring.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string name() const = 0;
};

class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(std::size_t dim = kHashEmbedDim);
    std::size_t dim() const override { return dim_; }
    std::vector<Vector> embed(const std::vector<std::string>& texts) override;
    std::string name() const override;

private:
    std::size_t dim_;
};

/// Client for the one-route embedding service:
/// POST {base}/embed {"texts": [...]} -> {"dim": D, "vectors": [[...], ...]}.
class HttpEmbedder final : public Embedder {
public:
    /// `expected_dim` 0 accepts whatever the first response declares.
    explicit HttpEmbedder(std::string base_url, std::size_t expected_dim = 0, int timeout_seconds = 10);
    ~HttpEmbedder() override;
    std::size_t dim() const override { return dim_; }
    std::vector<Vector> embed(const std::vector<std::string>& texts) override;
    std::string name() const override { return "http:" + base_url_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string base_url_;
    std::size_t dim_;
};

/// Embeds every message text with `embedder`, keyed by `channel:message_id`.
EmbeddingStore embed_corpus(const Corpus& corpus, Embedder& embedder, const std::string& provenance,
                            std::size_t batch = 256);

}  // namespace propwatch
