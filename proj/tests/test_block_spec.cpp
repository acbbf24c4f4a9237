#include <doctest.h>

#include "hyb/block_spec.hpp"

using hyb::Aggregation;
using hyb::BlockSpec;
using hyb::LayerKind;
using hyb::parse_block_spec;
using hyb::render_block_spec;
using hyb::SpecParseError;

TEST_SUITE("block_spec") {
  TEST_CASE("sequential specs parse into layer lists") {
    auto s = parse_block_spec("MSF");
    CHECK_FALSE(s.parallel);
    REQUIRE(s.seq.size() == 3);
    CHECK(s.seq[0] == LayerKind::Mamba);
    CHECK(s.seq[1] == LayerKind::Swa);
    CHECK(s.seq[2] == LayerKind::Ff);
    CHECK(render_block_spec(s) == "MSF");
  }

  TEST_CASE("parallel specs carry branches by role") {
    auto s = parse_block_spec("SF|MF");
    CHECK(s.parallel);
    REQUIRE(s.branch_m.size() == 2);
    CHECK(s.branch_m[0] == LayerKind::Mamba);
    CHECK(s.branch_s[0] == LayerKind::Swa);
    CHECK(s.agg == Aggregation::Avg);
    // canonical render puts the M branch first
    CHECK(render_block_spec(s) == "MF|SF");
    CHECK(s.source == "SF|MF");
  }

  TEST_CASE("default aggregation is Avg and is omitted when rendering") {
    auto s = parse_block_spec("MF|SF+Avg");
    CHECK(s.agg == Aggregation::Avg);
    CHECK(render_block_spec(s) == "MF|SF");
    CHECK(parse_block_spec("MF|SF+Proj").agg == Aggregation::Proj);
    CHECK(parse_block_spec("MF|SF+MergeAttn").agg == Aggregation::MergeAttn);
    CHECK(render_block_spec(parse_block_spec("MF|SF+Proj")) == "MF|SF+Proj");
  }

  TEST_CASE("surrounding whitespace is tolerated") {
    auto s = parse_block_spec("  MSF\n");
    CHECK(render_block_spec(s) == "MSF");
  }

  TEST_CASE("the standard model family all parses and round-trips") {
    const char* family[] = {"M",     "MF",    "S",     "SF",        "MS",       "MFS",
                            "MSF",   "MFSF",  "SFMF",  "M|S",       "MF|S",     "M|SF",
                            "MF|SF", "MF|SF+Avg", "MF|SF+Proj", "MF|SF+MergeAttn"};
    for (const char* f : family) {
      auto s = parse_block_spec(f);
      CHECK(s.source == f);
      // rendering is canonical, re-parsing the render is a fixed point
      const std::string r = render_block_spec(s);
      CHECK(render_block_spec(parse_block_spec(r)) == r);
    }
  }

  TEST_CASE("errors carry the offending position") {
    struct Case {
      const char* text;
      size_t pos;
      const char* needle;
    };
    const Case cases[] = {
        {"", 0, "empty"},
        {"   ", 0, "empty"},
        {"MXF", 1, "unknown layer symbol 'X'"},
        {"M|S|F", 3, "more than one branch separator"},
        {"|SF", 0, "empty branch"},
        {"MF|", 3, "empty branch"},
        {"MF|SF+Foo", 6, "unknown aggregation 'Foo'"},
        {"MSF+Avg", 3, "aggregation requires a parallel spec"},
        {"MF|F", 0, "M-bearing and one S-bearing"},
        {"MS|F", 0, "mixes M and S"},
        {"M|MF", 0, "both branches bear M"},
        {"S|SF", 0, "both branches bear S"},
    };
    for (const auto& c : cases) {
      CAPTURE(c.text);
      try {
        parse_block_spec(c.text);
        FAIL_CHECK("expected parse error for: ", c.text);
      } catch (const SpecParseError& e) {
        CHECK(e.pos == c.pos);
        CHECK(std::string(e.what()).find(c.needle) != std::string::npos);
      }
    }
  }

  TEST_CASE("error rendering points a caret at the position") {
    try {
      parse_block_spec("MF|SF+Foo");
      FAIL("expected parse error");
    } catch (const SpecParseError& e) {
      const std::string r = e.render("MF|SF+Foo");
      CHECK(r.find("MF|SF+Foo\n      ^") != std::string::npos);
    }
  }
}
