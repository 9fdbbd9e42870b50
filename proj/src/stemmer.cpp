#include "propwatch/stemmer.hpp"

#include <algorithm>
#include <array>
#include <initializer_list>
#include <utility>

#include "propwatch/text.hpp"

namespace propwatch::stem {
namespace {

// ---------------------------------------------------------------- English

bool en_vowel(char32_t c) {
    return c == U'a' || c == U'e' || c == U'i' || c == U'o' || c == U'u' || c == U'y';
}

bool en_double(std::u32string_view w) {
    if (w.size() < 2) return false;
    char32_t a = w[w.size() - 1], b = w[w.size() - 2];
    if (a != b) return false;
    return a == U'b' || a == U'd' || a == U'f' || a == U'g' || a == U'm' || a == U'n' || a == U'p' ||
           a == U'r' || a == U't';
}

bool en_li_ending(char32_t c) {
    return c == U'c' || c == U'd' || c == U'e' || c == U'g' || c == U'h' || c == U'k' || c == U'm' ||
           c == U'n' || c == U'r' || c == U't';
}

bool ends_with(std::u32string_view w, std::u32string_view suf) {
    return w.size() >= suf.size() && w.substr(w.size() - suf.size()) == suf;
}

// Position after the first non-vowel that follows a vowel, starting at `from`.
std::size_t en_region(std::u32string_view w, std::size_t from) {
    for (std::size_t i = from + 1; i < w.size(); ++i)
        if (!en_vowel(w[i]) && en_vowel(w[i - 1])) return i + 1;
    return w.size();
}

// Short syllable ending at position `end` (exclusive).
bool en_short_syllable_at_end(std::u32string_view w) {
    std::size_t n = w.size();
    if (n == 2) return en_vowel(w[0]) && !en_vowel(w[1]);
    if (n < 3) return false;
    char32_t c = w[n - 1];
    return !en_vowel(w[n - 3]) && en_vowel(w[n - 2]) && !en_vowel(c) && c != U'w' && c != U'x' && c != U'Y';
}

bool contains_vowel(std::u32string_view w) { return std::any_of(w.begin(), w.end(), en_vowel); }

// Longest suffix of `w` among `candidates`; returns index or -1.
template <std::size_t N>
int longest(std::u32string_view w, const std::array<std::u32string_view, N>& candidates) {
    int best = -1;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < N; ++i)
        if (ends_with(w, candidates[i]) && (best < 0 || candidates[i].size() > best_len)) {
            best = static_cast<int>(i);
            best_len = candidates[i].size();
        }
    return best;
}

std::string english_impl(std::u32string w) {
    if (w.size() <= 2) return text::encode(w);

    static const std::pair<std::u32string_view, std::u32string_view> exceptions[] = {
        {U"skis", U"ski"},     {U"skies", U"sky"},    {U"sky", U"sky"},       {U"idly", U"idl"},
        {U"gently", U"gentl"}, {U"ugly", U"ugli"},    {U"early", U"earli"},   {U"only", U"onli"},
        {U"singly", U"singl"}, {U"dying", U"die"},    {U"lying", U"lie"},     {U"tying", U"tie"},
        {U"news", U"news"},    {U"howe", U"howe"},    {U"atlas", U"atlas"},   {U"cosmos", U"cosmos"},
        {U"bias", U"bias"},    {U"andes", U"andes"},
    };
    for (auto& [from, to] : exceptions)
        if (w == from) return text::encode(to);

    if (w[0] == U'\'') w.erase(0, 1);
    if (!w.empty() && w[0] == U'y') w[0] = U'Y';
    for (std::size_t i = 1; i < w.size(); ++i)
        if (w[i] == U'y' && en_vowel(w[i - 1])) w[i] = U'Y';

    std::size_t p1;
    if (w.rfind(U"gener", 0) == 0 || w.rfind(U"arsen", 0) == 0)
        p1 = 5;
    else if (w.rfind(U"commun", 0) == 0)
        p1 = 6;
    else
        p1 = en_region(w, 0);
    std::size_t p2 = en_region(w, p1);

    auto r1 = [&](std::size_t suf) { return w.size() >= suf && w.size() - suf >= p1; };
    auto r2 = [&](std::size_t suf) { return w.size() >= suf && w.size() - suf >= p2; };
    auto chop = [&](std::size_t n) { w.resize(w.size() - n); };

    // Step 0
    {
        static const std::array<std::u32string_view, 3> s0 = {U"'", U"'s", U"'s'"};
        int k = longest(w, s0);
        if (k >= 0) chop(s0[k].size());
    }
    // Step 1a
    {
        static const std::array<std::u32string_view, 6> s1a = {U"sses", U"ied", U"ies", U"s", U"us", U"ss"};
        int k = longest(w, s1a);
        switch (k) {
            case 0: chop(2); break;
            case 1:
            case 2:
                if (w.size() > 4) chop(2);
                else chop(1);
                break;
            case 3:
                if (w.size() >= 3 && contains_vowel(std::u32string_view(w).substr(0, w.size() - 2))) chop(1);
                break;
            default: break;
        }
    }
    static const std::u32string_view exceptions2[] = {U"inning", U"outing", U"canning", U"herring",
                                                      U"earring", U"proceed", U"exceed", U"succeed"};
    for (auto e : exceptions2)
        if (w == e) return text::encode(w);

    // Step 1b
    {
        static const std::array<std::u32string_view, 6> s1b = {U"eed", U"eedly", U"ed", U"edly", U"ing", U"ingly"};
        int k = longest(w, s1b);
        if (k == 0 || k == 1) {
            if (r1(s1b[k].size())) chop(s1b[k].size() - 2);
        } else if (k >= 2) {
            std::size_t n = s1b[k].size();
            if (contains_vowel(std::u32string_view(w).substr(0, w.size() - n))) {
                chop(n);
                if (ends_with(w, U"at") || ends_with(w, U"bl") || ends_with(w, U"iz")) {
                    w.push_back(U'e');
                } else if (en_double(w)) {
                    chop(1);
                } else if (p1 >= w.size() && en_short_syllable_at_end(w)) {
                    w.push_back(U'e');
                }
            }
        }
    }
    // Step 1c
    if (w.size() > 2 && (w.back() == U'y' || w.back() == U'Y') && !en_vowel(w[w.size() - 2])) w.back() = U'i';

    // Step 2
    {
        static const std::array<std::u32string_view, 24> s2 = {
            U"tional", U"enci",  U"anci",   U"abli",    U"entli",   U"izer",    U"ization", U"ational",
            U"ation",  U"ator",  U"alism",  U"aliti",   U"alli",    U"fulness", U"ousli",   U"ousness",
            U"iveness", U"iviti", U"biliti", U"bli",    U"ogi",     U"fulli",   U"lessli",  U"li"};
        static const std::array<std::u32string_view, 24> r2rep = {
            U"tion", U"ence", U"ance", U"able", U"ent", U"ize", U"ize", U"ate", U"ate", U"ate", U"al", U"al",
            U"al",   U"ful",  U"ous",  U"ous",  U"ive", U"ive", U"ble", U"ble", U"og",  U"ful", U"less", U""};
        int k = longest(w, s2);
        if (k >= 0 && r1(s2[k].size())) {
            std::size_t n = s2[k].size();
            bool ok = true;
            if (s2[k] == U"ogi") ok = w.size() > 3 && w[w.size() - 4] == U'l';
            if (s2[k] == U"li") ok = w.size() > 2 && en_li_ending(w[w.size() - 3]);
            if (ok) {
                chop(n);
                w.append(r2rep[k]);
            }
        }
    }
    // Step 3
    {
        static const std::array<std::u32string_view, 9> s3 = {U"tional", U"ational", U"alize", U"icate", U"iciti",
                                                                U"ical",   U"ful",     U"ness",  U"ative"};
        static const std::array<std::u32string_view, 9> rep = {U"tion", U"ate", U"al", U"ic", U"ic",
                                                                U"ic",   U"",    U"",   U""};
        int k = longest(w, s3);
        if (k >= 0 && r1(s3[k].size())) {
            if (s3[k] == U"ative") {
                if (r2(5)) chop(5);
            } else {
                chop(s3[k].size());
                w.append(rep[k]);
            }
        }
    }
    // Step 4
    {
        static const std::array<std::u32string_view, 18> s4 = {U"al",   U"ance", U"ence", U"er",  U"ic",  U"able",
                                                                U"ible", U"ant",  U"ement", U"ment", U"ent", U"ism",
                                                                U"ate",  U"iti",  U"ous",  U"ive", U"ize", U"ion"};
        int k = longest(w, s4);
        if (k >= 0 && r2(s4[k].size())) {
            if (s4[k] == U"ion") {
                if (w.size() > 3 && (w[w.size() - 4] == U's' || w[w.size() - 4] == U't')) chop(3);
            } else {
                chop(s4[k].size());
            }
        }
    }
    // Step 5
    if (!w.empty() && w.back() == U'e') {
        if (r2(1)) {
            chop(1);
        } else if (r1(1)) {
            std::u32string_view rest(w.data(), w.size() - 1);
            if (!en_short_syllable_at_end(rest)) chop(1);
        }
    } else if (!w.empty() && w.back() == U'l' && r2(1) && w.size() > 1 && w[w.size() - 2] == U'l') {
        chop(1);
    }

    for (auto& c : w)
        if (c == U'Y') c = U'y';
    return text::encode(w);
}

// ---------------------------------------------------------------- Russian

bool ru_vowel(char32_t c) {
    return c == U'а' || c == U'е' || c == U'и' || c == U'о' || c == U'у' || c == U'ы' || c == U'э' ||
           c == U'ю' || c == U'я';
}

struct Ending {
    std::u32string_view text;
    bool needs_a_ya;  // group-1 endings must follow а or я
};

// Longest ending from `set` inside [rv, end); -1 if none.
int longest_in(const std::u32string& w, std::size_t rv, std::initializer_list<Ending> set, Ending& found) {
    int best = -1;
    std::size_t best_len = 0;
    int idx = 0;
    for (const auto& e : set) {
        if (e.text.size() > best_len && w.size() >= rv + e.text.size() && ends_with(w, e.text)) {
            best = idx;
            best_len = e.text.size();
            found = e;
        }
        ++idx;
    }
    return best;
}

// Removes the longest matching ending if its context condition holds.
bool remove_ending(std::u32string& w, std::size_t rv, std::initializer_list<Ending> set) {
    Ending e{};
    if (longest_in(w, rv, set, e) < 0) return false;
    std::size_t start = w.size() - e.text.size();
    if (e.needs_a_ya) {
        if (start <= rv || (w[start - 1] != U'а' && w[start - 1] != U'я')) return false;
    }
    w.resize(start);
    return true;
}

const std::initializer_list<Ending> kPerfectiveGerund = {
    {U"в", true}, {U"вши", true}, {U"вшись", true}, {U"ив", false}, {U"ивши", false},
    {U"ившись", false}, {U"ыв", false}, {U"ывши", false}, {U"ывшись", false}};

const std::initializer_list<Ending> kAdjective = {
    {U"ее", false}, {U"ие", false}, {U"ые", false}, {U"ое", false}, {U"ими", false}, {U"ыми", false},
    {U"ей", false}, {U"ий", false}, {U"ый", false}, {U"ой", false}, {U"ем", false},  {U"им", false},
    {U"ым", false}, {U"ом", false}, {U"его", false}, {U"ого", false}, {U"ему", false}, {U"ому", false},
    {U"их", false}, {U"ых", false}, {U"ую", false}, {U"юю", false}, {U"ая", false},  {U"яя", false},
    {U"ою", false}, {U"ею", false}};

const std::initializer_list<Ending> kParticiple = {{U"ем", true},   {U"нн", true},   {U"вш", true},
                                                   {U"ющ", true},   {U"щ", true},    {U"ивш", false},
                                                   {U"ывш", false}, {U"ующ", false}};

const std::initializer_list<Ending> kReflexive = {{U"ся", false}, {U"сь", false}};

const std::initializer_list<Ending> kVerb = {
    {U"ла", true},    {U"на", true},    {U"ете", true},  {U"йте", true},  {U"ли", true},   {U"й", true},
    {U"л", true},     {U"ем", true},    {U"н", true},    {U"ло", true},   {U"но", true},   {U"ет", true},
    {U"ют", true},    {U"ны", true},    {U"ть", true},   {U"ешь", true},  {U"нно", true},  {U"ила", false},
    {U"ыла", false},  {U"ена", false},  {U"ейте", false}, {U"уйте", false}, {U"ите", false}, {U"или", false},
    {U"ыли", false},  {U"ей", false},   {U"уй", false},  {U"ил", false},  {U"ыл", false},  {U"им", false},
    {U"ым", false},   {U"ен", false},   {U"ило", false}, {U"ыло", false}, {U"ено", false}, {U"ят", false},
    {U"ует", false},  {U"уют", false},  {U"ит", false},  {U"ыт", false},  {U"ены", false}, {U"ить", false},
    {U"ыть", false},  {U"ишь", false},  {U"ую", false},  {U"ю", false}};

const std::initializer_list<Ending> kNoun = {
    {U"а", false},   {U"ев", false},  {U"ов", false},  {U"ие", false},  {U"ье", false},  {U"е", false},
    {U"иями", false}, {U"ями", false}, {U"ами", false}, {U"еи", false},  {U"ии", false},  {U"и", false},
    {U"ией", false}, {U"ей", false},  {U"ой", false},  {U"ий", false},  {U"й", false},   {U"иям", false},
    {U"ям", false},  {U"ием", false}, {U"ем", false},  {U"ам", false},  {U"ом", false},  {U"о", false},
    {U"у", false},   {U"ах", false},  {U"иях", false}, {U"ях", false},  {U"ы", false},   {U"ь", false},
    {U"ию", false},  {U"ью", false},  {U"ю", false},   {U"ия", false},  {U"ья", false},  {U"я", false}};

bool remove_adjectival(std::u32string& w, std::size_t rv) {
    if (!remove_ending(w, rv, kAdjective)) return false;
    remove_ending(w, rv, kParticiple);
    return true;
}

std::string russian_impl(std::u32string w) {
    for (auto& c : w)
        if (c == U'ё') c = U'е';

    std::size_t rv = w.size(), p2 = w.size();
    {
        std::size_t i = 0;
        while (i < w.size() && !ru_vowel(w[i])) ++i;
        if (i < w.size()) {
            rv = i + 1;
            std::size_t j = rv;
            while (j < w.size() && ru_vowel(w[j])) ++j;  // gopast non-v -> p1
            if (j < w.size()) {
                ++j;
                while (j < w.size() && !ru_vowel(w[j])) ++j;  // gopast v
                if (j < w.size()) {
                    ++j;
                    while (j < w.size() && ru_vowel(w[j])) ++j;  // gopast non-v
                    if (j < w.size()) p2 = j + 1;
                }
            }
        }
    }

    // Step 1
    if (!remove_ending(w, rv, kPerfectiveGerund)) {
        remove_ending(w, rv, kReflexive);
        if (!remove_adjectival(w, rv))
            if (!remove_ending(w, rv, kVerb)) remove_ending(w, rv, kNoun);
    }
    // Step 2
    if (w.size() > rv && w.back() == U'и') w.pop_back();
    // Step 3
    {
        Ending e{};
        if (longest_in(w, rv, {{U"ост", false}, {U"ость", false}}, e) >= 0 && w.size() - e.text.size() >= p2)
            w.resize(w.size() - e.text.size());
    }
    // Step 4
    {
        Ending e{};
        int k = longest_in(w, rv, {{U"ейш", false}, {U"ейше", false}, {U"н", false}, {U"ь", false}}, e);
        if (k == 0 || k == 1) {
            w.resize(w.size() - e.text.size());
            if (w.size() >= rv + 2 && ends_with(w, U"нн")) w.pop_back();
        } else if (k == 2) {
            if (w.size() >= rv + 2 && ends_with(w, U"нн")) w.pop_back();
        } else if (k == 3) {
            w.pop_back();
        }
    }
    return text::encode(w);
}

}  // namespace

std::string english(std::string_view word) { return english_impl(text::decode(word)); }

std::string russian(std::string_view word) { return russian_impl(text::decode(word)); }

std::string auto_stem(std::string_view lowercase_word) {
    std::u32string w = text::decode(lowercase_word);
    bool cyr = false, latin_only = !w.empty();
    for (char32_t c : w) {
        if (c >= 0x0400 && c <= 0x04FF) cyr = true;
        if (!((c >= U'a' && c <= U'z') || c == U'\'')) latin_only = false;
    }
    if (cyr) return russian_impl(std::move(w));
    if (latin_only) return english_impl(std::move(w));
    return std::string(lowercase_word);
}

}  // namespace propwatch::stem
