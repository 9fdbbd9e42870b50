#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "propwatch/error.hpp"
#include "propwatch/stemmer.hpp"
#include "propwatch/text.hpp"
#include "propwatch/timeutil.hpp"

using namespace propwatch;

TEST_CASE("utf8 validation and scalar counting") {
    CHECK(text::valid_utf8("Да!? Нет"));
    CHECK_FALSE(text::valid_utf8("\xC3\x28"));
    CHECK_FALSE(text::valid_utf8("\xED\xA0\x80"));   // surrogate
    CHECK_FALSE(text::valid_utf8("\xC0\xAF"));       // overlong '/'
    CHECK(text::scalar_count("Да") == 2);
    CHECK(text::scalar_count("😀a") == 2);
    CHECK_THROWS_AS(text::scalar_count("\xFF"), Error);
}

TEST_CASE("normalize applies NFC and trims unicode whitespace") {
    // "й" as и + combining breve composes to U+0439
    CHECK(text::normalize("\xD0\xB8\xCC\x86") == "\xD0\xB9");
    CHECK(text::normalize("  hello world \t\n") == "hello world");
    CHECK(text::normalize("   ").empty());
}

TEST_CASE("lowercase and word tokens") {
    CHECK(text::to_lower("ЗЕЛЕНСКИЙ Putin") == "зеленский putin");
    auto w = text::words("Да, да! It's 2023... ok?");
    REQUIRE(w.size() == 5);
    CHECK(w[0] == "Да");
    CHECK(w[2] == "It's");
    CHECK(w[3] == "2023");
}

TEST_CASE("iso8601 round trip and offsets") {
    auto t = parse_iso8601("2023-08-16T12:00:00Z");
    CHECK(format_iso8601(t) == "2023-08-16T12:00:00Z");
    CHECK(parse_iso8601("2023-08-16T15:00:00+03:00") == t);
    CHECK(parse_iso8601("2023-08-16T12:00:00") == t);
    CHECK(parse_iso8601("2023-08-16 12:00:00.250Z") == t);
    CHECK(to_unix(t) == 1692187200);
    CHECK(seconds_of_day(t) == 43200);
    CHECK(format_date(t) == "2023-08-16");
    CHECK_THROWS_AS(parse_iso8601("2023-02-30T00:00:00Z"), Error);
    CHECK_THROWS_AS(parse_iso8601("yesterday"), Error);
}

namespace {
void check_stems(const char* file, std::string (*stem)(std::string_view)) {
    std::ifstream in(std::string(PROPWATCH_FIXTURES) + "/" + file);
    REQUIRE(in.good());
    std::string line;
    int n = 0, bad = 0;
    while (std::getline(in, line)) {
        auto tab = line.find('\t');
        std::string word = line.substr(0, tab), expect = line.substr(tab + 1);
        std::string got = stem(word);
        if (got != expect) {
            ++bad;
            MESSAGE(word << ": got " << got << ", expected " << expect);
        }
        ++n;
    }
    CHECK(n == 1000);
    CHECK(bad == 0);
}
}  // namespace

TEST_CASE("english stemmer matches reference stems") { check_stems("stems_en.tsv", stem::english); }
TEST_CASE("russian stemmer matches reference stems") { check_stems("stems_ru.tsv", stem::russian); }

TEST_CASE("auto_stem dispatches by script") {
    CHECK(stem::auto_stem("да") == "да");
    CHECK(stem::auto_stem("running") == "run");
    CHECK(stem::auto_stem("зеленский") == "зеленск");
    CHECK(stem::auto_stem("2023") == "2023");
}
