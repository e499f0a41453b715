#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "doctest.h"
#include "dolphin/metrics.hpp"
#include "dolphin/synthdoc.hpp"
#include "dolphin/types.hpp"

using namespace dolphin;
namespace fs = std::filesystem;

TEST_CASE("edit distance known values") {
  CHECK(edit_distance("", "").raw == 0);
  CHECK(edit_distance("", "").normalized == 0.0);
  CHECK(edit_distance("abc", "abc").raw == 0);
  CHECK(edit_distance("kitten", "sitting").raw == 3);
  CHECK(edit_distance("abc", "").raw == 3);
  CHECK(edit_distance("abc", "").normalized == doctest::Approx(1.0));
  CHECK(edit_distance("ab", "ba").raw == 2);
  CHECK(edit_distance("sunday", "saturday").raw == 3);
  CHECK(edit_distance("kitten", "sitting").normalized == doctest::Approx(3.0 / 7.0));
}

TEST_CASE("edit distance metric axioms") {
  std::mt19937_64 rng(19);
  auto rand_str = [&rng] {
    std::string s(rng() % 10, 'a');
    for (auto& c : s) c = char('a' + rng() % 3);
    return s;
  };
  for (int i = 0; i < 2000; ++i) {
    const std::string a = rand_str(), b = rand_str(), c = rand_str();
    const auto ab = edit_distance(a, b), ba = edit_distance(b, a);
    CHECK(ab.raw == ba.raw);
    CHECK(edit_distance(a, a).raw == 0);
    CHECK((ab.raw == 0) == (a == b));
    CHECK(ab.raw <= edit_distance(a, c).raw + edit_distance(c, b).raw);
    CHECK(ab.normalized >= 0.0);
    CHECK(ab.normalized <= 1.0);
  }
}

TEST_CASE("latex canonicalization") {
  CHECK(canonicalize_latex("x + y") == "x+y");
  CHECK(canonicalize_latex("\\left( x \\right)") == "(x)");
  CHECK(canonicalize_latex("x^{2}") == "x^2");
  CHECK(canonicalize_latex("x^{2y}") == "x^{2y}");
  CHECK(canonicalize_latex("\\frac{x}{y}") == "\\fracxy");
  CHECK(canonicalize_latex("\\frac{ab}{y}") == "\\frac{ab}y");
  CHECK(cdm("x+y", "x + y") == doctest::Approx(1.0));
  CHECK(cdm("", "x") == doctest::Approx(0.0));
  CHECK(cdm("x^{2}", "x^2") == doctest::Approx(1.0));
}

TEST_CASE("table html parsing") {
  SUBCASE("well-formed table") {
    const auto t = parse_table_html(
        "<table><thead><tr><td>h</td></tr></thead>"
        "<tbody><tr><td colspan=\"2\">a&amp;b</td></tr></tbody></table>");
    REQUIRE(t.has_value());
    CHECK(t->label == "table");
    CHECK(t->node_count() == 7);
    REQUIRE(t->children.size() == 2);
    const auto& td = t->children[1].children[0].children[0];
    CHECK(td.label == "td");
    CHECK(td.text == "a&b");
    CHECK(td.colspan == 2);
    CHECK(td.children.empty());
  }
  SUBCASE("unclosed tags are tolerated") {
    const auto t = parse_table_html("<table><tr><td>x<tr><td>y</table>");
    REQUIRE(t.has_value());
    CHECK(t->node_count() == 5);  // table + two tr + two td, however nested
  }
  SUBCASE("td stays a leaf even with bad nesting") {
    const auto t = parse_table_html("<table><tr><td>a<td>b</td></td></tr></table>");
    REQUIRE(t.has_value());
    for (const auto& tr : t->children)
      for (const auto& td : tr.children) CHECK(td.children.empty());
  }
  SUBCASE("garbage yields nullopt") {
    CHECK(!parse_table_html("no markup at all").has_value());
    CHECK(!parse_table_html("").has_value());
    CHECK(!parse_table_html("<div><p>x</p></div>").has_value());
  }
}

namespace {

// Independent oracle: plain memoized forest-edit recursion, same cost model
// as the production algorithm but structured completely differently.
using Forest = std::vector<TableNode>;

double oracle_subst(const TableNode& a, const TableNode& b) {
  if (a.label != b.label) return 1.0;
  if (a.label == "td") {
    if (a.colspan != b.colspan || a.rowspan != b.rowspan) return 1.0;
    return edit_distance(a.text, b.text).normalized;
  }
  return 0.0;
}

int forest_size(const Forest& f) {
  int n = 0;
  for (const auto& t : f) n += t.node_count();
  return n;
}

std::string forest_key(const Forest& f) {
  std::string k;
  for (const auto& t : f) {
    k += t.label + "|" + t.text + "|" + std::to_string(t.colspan) + "," +
         std::to_string(t.rowspan) + "(" + forest_key(t.children) + ")";
  }
  return k;
}

double oracle_forest_dist(const Forest& f1, const Forest& f2,
                          std::map<std::pair<std::string, std::string>, double>& memo) {
  if (f1.empty()) return forest_size(f2);
  if (f2.empty()) return forest_size(f1);
  const auto key = std::make_pair(forest_key(f1), forest_key(f2));
  if (auto it = memo.find(key); it != memo.end()) return it->second;

  const TableNode& v = f1.back();
  const TableNode& w = f2.back();
  Forest l1(f1.begin(), f1.end() - 1);
  Forest l2(f2.begin(), f2.end() - 1);
  Forest f1_promoted = l1;
  f1_promoted.insert(f1_promoted.end(), v.children.begin(), v.children.end());
  Forest f2_promoted = l2;
  f2_promoted.insert(f2_promoted.end(), w.children.begin(), w.children.end());

  const double del = oracle_forest_dist(f1_promoted, f2, memo) + 1.0;
  const double ins = oracle_forest_dist(f1, f2_promoted, memo) + 1.0;
  const double sub = oracle_forest_dist(l1, l2, memo) +
                     oracle_forest_dist(v.children, w.children, memo) +
                     oracle_subst(v, w);
  const double d = std::min({del, ins, sub});
  memo[key] = d;
  return d;
}

double oracle_ted(const TableNode& a, const TableNode& b) {
  std::map<std::pair<std::string, std::string>, double> memo;
  return oracle_forest_dist({a}, {b}, memo);
}

TableNode random_tree(std::mt19937_64& rng, int max_nodes) {
  static const char* kInner[] = {"table", "tbody", "tr"};
  TableNode n;
  if (max_nodes == 1 || rng() % 3 == 0) {
    n.label = "td";
    n.text = std::string(rng() % 3, 'a');
    for (auto& c : n.text) c = char('a' + rng() % 2);
    if (rng() % 5 == 0) n.colspan = 2;
    if (rng() % 7 == 0) n.rowspan = 3;
    return n;
  }
  n.label = kInner[rng() % 3];
  int budget = max_nodes - 1;
  while (budget > 0 && rng() % 4 != 0) {
    const int take = 1 + int(rng() % uint64_t(budget));
    n.children.push_back(random_tree(rng, take));
    budget -= n.children.back().node_count();
  }
  return n;
}

}  // namespace

TEST_CASE("tree edit distance matches the recursive oracle on random trees") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 250; ++i) {
    const TableNode a = random_tree(rng, 7);
    const TableNode b = random_tree(rng, 7);
    CHECK(tree_edit_distance(a, b) == doctest::Approx(oracle_ted(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("teds reference cases") {
  const std::string cell = "<table><tbody><tr><td>a</td></tr></tbody></table>";
  CHECK(teds(cell, cell) == doctest::Approx(1.0));
  // delete tbody, tr, td from the 4-node ground truth: 1 - 3/4
  CHECK(teds("<table></table>", cell) == doctest::Approx(0.25));
  CHECK(teds("complete garbage", cell) == doctest::Approx(0.0));
  CHECK_THROWS_AS(teds(cell, "not a table"), MalformedGroundTruth);
  // span mismatch counts as a full substitution
  const std::string spanned = "<table><tbody><tr><td colspan=\"2\">a</td></tr></tbody></table>";
  CHECK(teds(spanned, cell) == doctest::Approx(0.75));
}

TEST_CASE("evaluate_corpus end to end") {
  const fs::path base = fs::temp_directory_path() / "dolphin_eval_test";
  fs::remove_all(base);
  fs::create_directories(base / "gt");
  fs::create_directories(base / "pred");

  SynthConfig cfg;
  cfg.seed = 31;
  for (int i = 0; i < 3; ++i) {
    auto [img, gt] = gen_page(cfg, uint64_t(i));
    (void)img;
    std::ofstream(base / "gt" / ("p" + std::to_string(i) + ".json")) << gt.to_json();

    ParsedDocument doc;  // echo the ground truth as a perfect prediction
    doc.page_w = gt.page_w;
    doc.page_h = gt.page_h;
    for (size_t k = 0; k < gt.layout.elements.size(); ++k) {
      ParsedElement pe;
      pe.element = gt.layout.elements[k];
      pe.content = gt.contents[k];
      pe.content_format = content_format_for(pe.element.etype);
      doc.elements.push_back(pe);
    }
    doc.timing.stage1_ms = 10;
    doc.timing.stage2_ms = 15;
    std::ofstream(base / "pred" / ("p" + std::to_string(i) + ".json")) << to_json(doc);
  }

  SUBCASE("perfect predictions score perfectly") {
    const EvalReport r = evaluate_corpus((base / "pred").string(), (base / "gt").string());
    CHECK(r.samples.size() == 3);
    CHECK(r.mean_ed == doctest::Approx(0.0));
    CHECK(r.type_accuracy == doctest::Approx(1.0));
    CHECK(r.mean_iou == doctest::Approx(1.0));
    CHECK(r.mean_teds == doctest::Approx(1.0));
    CHECK(r.mean_cdm == doctest::Approx(1.0));
    CHECK(r.parse_failures == 0);
    CHECK(r.fps == doctest::Approx(3.0 / 0.075));
    CHECK(r.to_json().find("\"mean_ed\"") != std::string::npos);
    CHECK(!r.to_text_table().empty());
  }
  SUBCASE("missing predictions raise MissingSample naming every id") {
    fs::remove(base / "pred" / "p1.json");
    fs::remove(base / "pred" / "p2.json");
    try {
      evaluate_corpus((base / "pred").string(), (base / "gt").string());
      FAIL("expected MissingSample");
    } catch (const MissingSample& e) {
      const std::string what = e.what();
      CHECK(what.find("p1") != std::string::npos);
      CHECK(what.find("p2") != std::string::npos);
    }
  }
  SUBCASE("unparseable prediction counts as a failure, not a crash") {
    std::ofstream(base / "pred" / "p1.json") << "{broken";
    const EvalReport r = evaluate_corpus((base / "pred").string(), (base / "gt").string());
    CHECK(r.parse_failures == 1);
    CHECK(r.samples[1].parse_failure);
    CHECK(r.samples[1].page_ed > 0.0);
  }
  fs::remove_all(base);
}
