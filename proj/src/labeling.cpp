#include "propwatch/labeling.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <unordered_map>

#include "propwatch/data.hpp"
#include "propwatch/error.hpp"
#include "propwatch/text.hpp"

namespace propwatch {

using nlohmann::json;

std::string_view to_string(Label l) { return l == Label::propaganda ? "propaganda" : "user"; }

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::seed: return "seed";
        case Provenance::augmented: return "augmented";
        case Provenance::external: return "external";
    }
    return "seed";
}

Label parse_label(std::string_view s) {
    if (s == "propaganda") return Label::propaganda;
    if (s == "user") return Label::user;
    fail(ErrorKind::parse, "unknown label '" + std::string(s) + "'");
}

Provenance parse_provenance(std::string_view s) {
    if (s == "seed") return Provenance::seed;
    if (s == "augmented") return Provenance::augmented;
    if (s == "external") return Provenance::external;
    fail(ErrorKind::parse, "unknown provenance '" + std::string(s) + "'");
}

bool LabelSet::add(const std::string& account_id, LabelEntry entry) {
    return entries_.try_emplace(account_id, entry).second;
}

const LabelEntry* LabelSet::find(const std::string& account_id) const {
    auto it = entries_.find(account_id);
    return it == entries_.end() ? nullptr : &it->second;
}

std::optional<Label> LabelSet::label_of(const std::string& account_id) const {
    if (auto* e = find(account_id)) return e->label;
    return std::nullopt;
}

std::set<std::string> LabelSet::with_label(Label l) const {
    std::set<std::string> out;
    for (const auto& [id, e] : entries_)
        if (e.label == l) out.insert(id);
    return out;
}

LabelSet LabelSet::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    LabelSet out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = json::parse(line);
            LabelEntry e;
            e.label = parse_label(j.at("label").get<std::string>());
            e.provenance = parse_provenance(j.value("provenance", std::string("seed")));
            e.iteration = j.value("iteration", 0);
            const auto& id = j.at("account_id");
            std::string account = id.is_string() ? id.get<std::string>() : id.dump();
            if (!out.add(account, e)) fail(ErrorKind::data, "account " + account + " labeled twice");
        } catch (const json::exception& ex) {
            fail(ErrorKind::parse, path.string() + ": line " + std::to_string(n) + ": " + ex.what());
        } catch (const Error& ex) {
            fail(ex.kind(), path.string() + ": line " + std::to_string(n) + ": " + ex.what());
        }
    }
    return out;
}

void LabelSet::write(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& [id, e] : entries_) {
        out += "{\"account_id\":" + json(id).dump() + ",\"label\":\"" + std::string(to_string(e.label)) +
               "\",\"provenance\":\"" + std::string(to_string(e.provenance)) +
               "\",\"iteration\":" + std::to_string(e.iteration) + "}\n";
    }
    write_text_file(path, out);
}

// ----------------------------------------------------------------- lexicon

std::string transliterate_ru(std::string_view cyrillic) {
    static const std::unordered_map<char32_t, const char*> table = {
        {U'а', "a"}, {U'б', "b"},  {U'в', "v"},  {U'г', "g"},  {U'д', "d"},    {U'е', "e"}, {U'ё', "e"},
        {U'ж', "zh"}, {U'з', "z"}, {U'и', "i"},  {U'й', "y"},  {U'к', "k"},    {U'л', "l"}, {U'м', "m"},
        {U'н', "n"}, {U'о', "o"},  {U'п', "p"},  {U'р', "r"},  {U'с', "s"},    {U'т', "t"}, {U'у', "u"},
        {U'ф', "f"}, {U'х', "kh"}, {U'ц', "ts"}, {U'ч', "ch"}, {U'ш', "sh"},   {U'щ', "shch"},
        {U'ъ', ""},  {U'ы', "y"},  {U'ь', ""},   {U'э', "e"},  {U'ю', "yu"},   {U'я', "ya"}};
    std::string out;
    for (char32_t c : text::decode(cyrillic)) {
        auto it = table.find(c);
        if (it != table.end()) {
            out += it->second;
        } else {
            text::append_utf8(out, c);
        }
    }
    return out;
}

Lexicon Lexicon::load(const std::filesystem::path& dir) {
    Lexicon lex;
    for (auto& w : read_lines(dir / "words_en.txt")) lex.english.insert(text::to_lower(w));
    for (auto& w : read_lines(dir / "words_ru.txt")) {
        auto lw = text::to_lower(w);
        lex.russian_latin.insert(transliterate_ru(lw));
        lex.russian.insert(std::move(lw));
    }
    for (auto& w : read_lines(dir / "western_names.txt")) {
        auto lw = text::to_lower(w);
        lex.longest_name = std::max(lex.longest_name, lw.size());
        lex.names.insert(std::move(lw));
    }
    return lex;
}

const Lexicon& Lexicon::bundled() {
    static const Lexicon lex = load(data_dir());
    return lex;
}

// --------------------------------------------------------------- usernames

namespace {

bool is_sep(char c) { return c == '_' || c == '.' || c == '-'; }

// Can `s` be split into listed names, each boundary optionally carrying one separator?
bool names_only(std::string_view s, const Lexicon& lex) {
    if (s.empty()) return false;
    std::vector<bool> ok(s.size() + 1, false);
    ok[0] = true;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!ok[i]) continue;
        std::size_t start = i;
        if (i > 0 && is_sep(s[i])) ++start;
        for (std::size_t len = 2; len <= lex.longest_name && start + len <= s.size(); ++len)
            if (lex.names.contains(std::string(s.substr(start, len)))) ok[start + len] = true;
    }
    return ok[s.size()];
}

bool western_name_number(std::string_view lower, const Lexicon& lex) {
    for (char c : lower)
        if (static_cast<unsigned char>(c) >= 0x80) return false;
    std::size_t end = lower.size();
    while (end > 0 && lower[end - 1] >= '0' && lower[end - 1] <= '9') --end;
    if (end == lower.size()) return false;
    if (end > 0 && is_sep(lower[end - 1])) --end;
    return names_only(lower.substr(0, end), lex);
}

bool dictionary_reference(std::string_view username, const Lexicon& lex) {
    std::string mapped(username);
    for (char& c : mapped) {
        if (c == '1') c = 'i';
        if (c == '0') c = 'o';
    }
    auto cps = text::decode(text::to_lower(mapped));
    std::size_t i = 0;
    while (i < cps.size()) {
        if (!text::is_letter(cps[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < cps.size() && text::is_letter(cps[j])) ++j;
        if (j - i >= 4) {
            std::string run = text::encode(std::u32string_view(cps).substr(i, j - i));
            if (lex.english.contains(run) || lex.russian.contains(run) || lex.russian_latin.contains(run))
                return true;
        }
        i = j;
    }
    return false;
}

}  // namespace

PatternReport username_pattern(const std::optional<std::string>& username, const Lexicon& lex) {
    PatternReport r;
    if (!username || username->empty()) {
        r.username_hidden = true;
        return r;
    }
    auto lower = text::to_lower(*username);
    r.is_western_name_number = western_name_number(lower, lex);
    r.dictionary_reference = dictionary_reference(*username, lex);
    return r;
}

std::string cohort_of(const LabelSet* labels, const std::optional<std::string>& account_id) {
    if (!labels || !account_id) return "unlabeled";
    auto l = labels->label_of(*account_id);
    return l ? std::string(to_string(*l)) : "unlabeled";
}

// -------------------------------------------------------------- repetition

std::size_t RepetitionStats::max_repetitions(const std::string& cohort, std::size_t length) const {
    std::size_t lo = length / bucket_width * bucket_width, best = 0;
    for (const auto& b : bins)
        if (b.cohort == cohort && b.length_lo == lo) best = std::max(best, b.repetitions);
    return best;
}

RepetitionStats repetition_stats(const Corpus& corpus, const LabelSet* labels, std::size_t bucket_width) {
    if (bucket_width == 0) fail(ErrorKind::usage, "bucket width must be positive");
    struct Acc {
        std::size_t occurrences = 0;
        std::set<std::string> accounts;
    };
    std::map<std::pair<std::string, std::string>, Acc> groups;
    for (const auto& m : corpus.messages()) {
        if (!m.account_id) continue;
        auto t = text::normalize(m.text);
        if (t.empty()) continue;
        auto& g = groups[{cohort_of(labels, m.account_id), std::move(t)}];
        ++g.occurrences;
        g.accounts.insert(*m.account_id);
    }
    RepetitionStats st;
    st.bucket_width = bucket_width;
    std::map<std::tuple<std::string, std::size_t, std::size_t>, std::size_t> bins;
    for (auto& [key, g] : groups) {
        RepeatedText rt{key.first, key.second, text::scalar_count(key.second), g.occurrences, g.accounts.size()};
        ++bins[{rt.cohort, rt.length / bucket_width * bucket_width, rt.occurrences}];
        st.texts.push_back(std::move(rt));
    }
    for (const auto& [k, n] : bins) st.bins.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), n});
    return st;
}

// ------------------------------------------------------------ augmentation

AugmentResult augment_labels(const Corpus& corpus, const LabelSet& seeds, const AugmentOptions& opts) {
    if (opts.min_len < 1) fail(ErrorKind::usage, "min_len must be at least 1");
    auto propaganda = seeds.with_label(Label::propaganda);
    if (propaganda.empty()) fail(ErrorKind::data, "augmentation needs at least one propaganda seed");

    std::unordered_map<std::string, std::set<std::string>> authors;        // long text -> accounts
    std::unordered_map<std::string, std::set<std::string>> texts_by_author;
    for (const auto& m : corpus.messages()) {
        if (!m.account_id) continue;
        auto t = text::normalize(m.text);
        if (text::scalar_count(t) <= opts.min_len) continue;
        authors[t].insert(*m.account_id);
        texts_by_author[*m.account_id].insert(std::move(t));
    }

    AugmentResult res;
    res.labels = seeds;
    std::set<std::string> pool;
    std::vector<std::string> fresh_texts;
    auto absorb = [&](const std::string& account) {
        auto it = texts_by_author.find(account);
        if (it == texts_by_author.end()) return;
        for (const auto& t : it->second)
            if (pool.insert(t).second) fresh_texts.push_back(t);
    };
    for (const auto& a : propaganda) absorb(a);

    for (int iteration = 1; !fresh_texts.empty(); ++iteration) {
        std::set<std::string> promoted;
        for (const auto& t : fresh_texts)
            for (const auto& a : authors.at(t))
                if (!res.labels.find(a) && !opts.exclusions.contains(a)) promoted.insert(a);
        fresh_texts.clear();
        if (promoted.empty()) break;
        for (const auto& a : promoted) {
            res.labels.add(a, {Label::propaganda, Provenance::augmented, iteration});
            res.review.push_back(a);
            absorb(a);
        }
        res.added_per_iteration.push_back(promoted.size());
    }
    res.pool_size = pool.size();
    return res;
}

Reactivity reactivity(const Corpus& corpus, const std::string& account_id) {
    Reactivity r;
    std::size_t total = 0;
    auto msgs = corpus.messages();
    for (std::size_t i = 0; i < msgs.size(); ++i) {
        if (msgs[i].account_id != account_id) continue;
        ++total;
        if (corpus.is_dangling(i)) {
            ++r.indeterminate;
        } else if (corpus.trigger_of(i)) {
            ++r.replies;
        }
    }
    if (total == 0) fail(ErrorKind::data, "account " + account_id + " has no messages");
    r.determinate = total - r.indeterminate;
    r.fraction = r.determinate ? static_cast<double>(r.replies) / static_cast<double>(r.determinate) : 0.0;
    return r;
}

}  // namespace propwatch
