#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "propwatch/corpus.hpp"

namespace propwatch {

enum class Label { propaganda, user };
enum class Provenance { seed, augmented, external };

std::string_view to_string(Label l);
std::string_view to_string(Provenance p);
Label parse_label(std::string_view s);
Provenance parse_provenance(std::string_view s);

struct LabelEntry {
    Label label = Label::user;
    Provenance provenance = Provenance::seed;
    int iteration = 0;  ///< augmentation round that added the account; 0 for seeds/external
};

class LabelSet {
public:
    /// Adds an account. Returns false (and leaves the entry alone) if it is already labeled.
    bool add(const std::string& account_id, LabelEntry entry);
    const LabelEntry* find(const std::string& account_id) const;
    std::optional<Label> label_of(const std::string& account_id) const;

    std::set<std::string> with_label(Label l) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::map<std::string, LabelEntry>& entries() const { return entries_; }

    /// JSONL: {"account_id", "label", "provenance", "iteration"}.
    static LabelSet read(const std::filesystem::path& path);
    void write(const std::filesystem::path& path) const;

private:
    std::map<std::string, LabelEntry> entries_;
};

/// Word lists used by the username heuristics.
struct Lexicon {
    std::unordered_set<std::string> english;
    std::unordered_set<std::string> russian;        ///< Cyrillic, lowercase
    std::unordered_set<std::string> russian_latin;  ///< `russian` transliterated to Latin
    std::unordered_set<std::string> names;          ///< Western given names and surnames, lowercase
    std::size_t longest_name = 0;                   ///< in bytes

    static Lexicon load(const std::filesystem::path& dir);
    /// Loaded once from data_dir().
    static const Lexicon& bundled();
};

/// Lowercase Latin rendering of a Russian word (GOST-like, ъ/ь dropped).
std::string transliterate_ru(std::string_view cyrillic);

struct PatternReport {
    bool is_western_name_number = false;
    bool dictionary_reference = false;
    bool username_hidden = false;
};

/// western: one or more listed names (optionally joined by `_`, `.` or `-`), an optional
/// separator, then at least one digit. dictionary_reference: some maximal letter run of
/// length >= 4 is a listed English or Russian word, after mapping 1->i and 0->o.
PatternReport username_pattern(const std::optional<std::string>& username, const Lexicon& lex = Lexicon::bundled());

/// Account label lookup used for cohort splits: "propaganda", "user" or "unlabeled".
std::string cohort_of(const LabelSet* labels, const std::optional<std::string>& account_id);

struct RepeatedText {
    std::string cohort;
    std::string text;            ///< NFC, trimmed
    std::size_t length = 0;      ///< Unicode scalars
    std::size_t occurrences = 0;
    std::size_t accounts = 0;    ///< distinct authors
};

struct RepetitionBin {
    std::string cohort;
    std::size_t length_lo = 0;   ///< bucket covers [length_lo, length_lo + width)
    std::size_t repetitions = 0; ///< occurrences of a text
    std::size_t texts = 0;       ///< distinct texts with that (length bucket, repetitions)
};

struct RepetitionStats {
    std::size_t bucket_width = 10;
    std::vector<RepeatedText> texts;  ///< sorted by (cohort, text)
    std::vector<RepetitionBin> bins;  ///< sorted by (cohort, length_lo, repetitions)

    /// Highest repetition count among texts whose length falls in the bucket of `length`.
    std::size_t max_repetitions(const std::string& cohort, std::size_t length) const;
};

/// Groups non-empty texts of account-authored messages by exact (NFC, trimmed) content.
/// Without labels every text falls in the "unlabeled" cohort.
RepetitionStats repetition_stats(const Corpus& corpus, const LabelSet* labels = nullptr,
                                 std::size_t bucket_width = 10);

struct AugmentOptions {
    std::size_t min_len = 30;           ///< texts must be strictly longer (scalars)
    std::set<std::string> exclusions;   ///< never promoted by augmentation
};

struct AugmentResult {
    LabelSet labels;
    std::vector<std::size_t> added_per_iteration;  ///< one entry per round that added accounts
    std::vector<std::string> review;               ///< augmented accounts, for manual false-positive review
    std::size_t pool_size = 0;                     ///< distinct long texts in the final pool
    std::size_t iterations() const { return added_per_iteration.size(); }
};

/// Fixed point of: pool = long texts by propaganda accounts; authors of pool texts become
/// propaganda. Seeds are never relabeled. Throws Error(data) without propaganda seeds.
AugmentResult augment_labels(const Corpus& corpus, const LabelSet& seeds, const AugmentOptions& opts = {});

struct Reactivity {
    double fraction = 0.0;         ///< replies / determinate; 0 when nothing is determinate
    std::size_t replies = 0;       ///< messages with a resolved reply target
    std::size_t determinate = 0;   ///< messages minus dangling replies
    std::size_t indeterminate = 0; ///< dangling replies
};

/// Throws Error(data) if the account has no messages.
Reactivity reactivity(const Corpus& corpus, const std::string& account_id);

}  // namespace propwatch
