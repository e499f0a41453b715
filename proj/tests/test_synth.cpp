#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "dolphin/image.hpp"
#include "dolphin/preprocess.hpp"
#include "dolphin/metrics.hpp"
#include "dolphin/synthdoc.hpp"
#include "dolphin/types.hpp"

using namespace dolphin;
namespace fs = std::filesystem;

namespace {

bool same_image(const PageImage& a, const PageImage& b) {
  return a.width == b.width && a.height == b.height && a.data == b.data;
}

// Tightest box containing every non-white pixel inside `clip`.
std::optional<BoundingBox> ink_bbox(const PageImage& img, const BoundingBox& clip) {
  int x1 = 1 << 30, y1 = 1 << 30, x2 = -1, y2 = -1;
  for (int y = clip.y1; y < clip.y2; ++y)
    for (int x = clip.x1; x < clip.x2; ++x)
      if (img.data[size_t(y) * size_t(img.width) + size_t(x)] < 250) {
        x1 = std::min(x1, x); y1 = std::min(y1, y);
        x2 = std::max(x2, x + 1); y2 = std::max(y2, y + 1);
      }
  if (x2 < 0) return std::nullopt;
  return BoundingBox{x1, y1, x2, y2};
}

}  // namespace

TEST_CASE("page generation is deterministic per (seed, index)") {
  SynthConfig cfg;
  cfg.seed = 5;
  for (uint64_t i = 0; i < 6; ++i) {
    auto [img1, gt1] = gen_page(cfg, i);
    auto [img2, gt2] = gen_page(cfg, i);
    CHECK(same_image(img1, img2));
    CHECK(gt1.to_json() == gt2.to_json());
  }
  auto [a, ga] = gen_page(cfg, 0);
  cfg.seed = 6;
  auto [b, gb] = gen_page(cfg, 0);
  CHECK(!same_image(a, b));  // different seeds diverge
}

TEST_CASE("ground-truth boxes tightly bound the rendered ink") {
  SynthConfig cfg;
  cfg.seed = 11;
  cfg.blank_page_prob = 0.0;
  int checked = 0;
  for (uint64_t i = 0; i < 12; ++i) {
    auto [img, gt] = gen_page(cfg, i);
    for (size_t k = 0; k < gt.layout.elements.size(); ++k) {
      const auto& box = gt.layout.elements[k].bbox;
      CHECK(box.valid(std::max(gt.page_w, gt.page_h)));
      CHECK(box.x2 <= gt.page_w);
      CHECK(box.y2 <= gt.page_h);
      const auto ink = ink_bbox(img, box);
      REQUIRE(ink.has_value());
      CHECK(ink->x1 >= box.x1);
      CHECK(ink->y1 >= box.y1);
      CHECK(box.x1 >= ink->x1 - 2);
      CHECK(box.y1 >= ink->y1 - 2);
      CHECK(box.x2 <= ink->x2 + 2);
      CHECK(box.y2 <= ink->y2 + 2);
      // line boxes nest inside the element box
      for (const auto& lb : gt.line_boxes[k]) {
        CHECK(lb.x1 >= box.x1);
        CHECK(lb.y1 >= box.y1);
        CHECK(lb.x2 <= box.x2);
        CHECK(lb.y2 <= box.y2);
      }
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("elements on a page never overlap and read top to bottom") {
  SynthConfig cfg;
  cfg.seed = 17;
  cfg.blank_page_prob = 0.0;
  for (uint64_t i = 0; i < 20; ++i) {
    auto [img, gt] = gen_page(cfg, i);
    (void)img;
    const auto& es = gt.layout.elements;
    for (size_t a = 0; a < es.size(); ++a) {
      CHECK(es[a].order_index == int(a));
      for (size_t b = a + 1; b < es.size(); ++b) {
        CHECK(iou(es[a].bbox, es[b].bbox) == doctest::Approx(0.0));
        CHECK(es[a].bbox.y1 < es[b].bbox.y1);
      }
    }
  }
}

TEST_CASE("ground truth is internally consistent") {
  SynthConfig cfg;
  cfg.seed = 29;
  cfg.blank_page_prob = 0.0;
  for (uint64_t i = 0; i < 10; ++i) {
    auto [img, gt] = gen_page(cfg, i);
    (void)img;
    const size_t n = gt.layout.elements.size();
    REQUIRE(gt.contents.size() == n);
    REQUIRE(gt.line_boxes.size() == n);
    REQUIRE(gt.line_texts.size() == n);
    for (size_t k = 0; k < n; ++k) {
      CHECK(gt.line_boxes[k].size() == gt.line_texts[k].size());
      const ElementType t = gt.layout.elements[k].etype;
      if (t == ElementType::tab) {
        CHECK(parse_table_html(gt.contents[k]).has_value());
        // table "lines" are cell texts; each must occur in the HTML
        for (const auto& cell : gt.line_texts[k])
          CHECK(gt.contents[k].find(">" + cell + "<") != std::string::npos);
      } else if (t != ElementType::fig) {
        CHECK(!gt.contents[k].empty());
        // line texts reproduce the content up to whitespace layout
        auto squash = [](const std::string& in) {
          std::string out;
          for (char c : in)
            if (!isspace(uint8_t(c))) out += c;
          return out;
        };
        std::string joined;
        for (const auto& lt : gt.line_texts[k]) joined += squash(lt);
        CHECK(joined == squash(gt.contents[k]));
      }
    }
    // JSON round trip
    const GroundTruth back = GroundTruth::from_json(gt.to_json());
    CHECK(back.to_json() == gt.to_json());
  }
}

TEST_CASE("blank pages are possible and carry empty layouts") {
  SynthConfig cfg;
  cfg.seed = 3;
  cfg.blank_page_prob = 1.0;
  auto [img, gt] = gen_page(cfg, 0);
  CHECK(gt.layout.elements.empty());
  CHECK(!ink_bbox(img, BoundingBox{0, 0, img.width, img.height}).has_value());
}

TEST_CASE("impossible packing raises LayoutOverflow") {
  SynthConfig cfg;
  cfg.seed = 1;
  cfg.page_width = 128;
  cfg.page_height = 128;
  cfg.blank_page_prob = 0.0;
  cfg.min_elements = 6;
  cfg.max_elements = 6;
  CHECK_THROWS_AS(gen_page(cfg, 0), LayoutOverflow);
}

TEST_CASE("corpus generation writes a complete, reloadable tree") {
  const fs::path dir = fs::temp_directory_path() / "dolphin_synth_corpus";
  fs::remove_all(dir);
  SynthConfig cfg;
  cfg.seed = 77;
  const CorpusManifest m = gen_corpus(cfg, 30, dir.string());

  CHECK(m.page_files.size() == 30);
  CHECK(m.gt_files.size() == 30);
  CHECK(m.splits.size() == 30);
  CHECK(m.seed == 77);
  CHECK(m.config_hash == sha256_hex(cfg.to_json()));
  CHECK(m.config_hash.size() == 64);

  int heldout = 0;
  for (const auto& s : m.splits) heldout += (s == "heldout");
  CHECK(heldout == 3);  // 90/10 split

  const CorpusManifest back = CorpusManifest::load(dir.string());
  CHECK(back.to_json() == m.to_json());

  // every referenced file exists and element crops match their source pages
  for (const auto& f : m.page_files) CHECK(fs::exists(dir / f));
  for (const auto& f : m.gt_files) CHECK(fs::exists(dir / f));
  REQUIRE(m.element_files.size() == m.element_gts.size());
  CHECK(!m.element_files.empty());
  for (size_t i = 0; i < m.element_files.size(); ++i) {
    REQUIRE(fs::exists(dir / m.element_files[i]));
    std::ifstream in(dir / m.element_gts[i]);
    REQUIRE(in.good());
    std::string gt_json((std::istreambuf_iterator<char>(in)), {});
    CHECK(gt_json.find("\"content\"") != std::string::npos);
    CHECK(gt_json.find("\"source_page\"") != std::string::npos);
  }

  // a sampled element crop equals re-cropping the page at the gt box
  auto [img, gt] = gen_page(cfg, 0);
  if (!gt.layout.elements.empty()) {
    const auto& box = gt.layout.elements[0].bbox;
    PageImage crop(box.width(), box.height(), 1);
    for (int y = box.y1; y < box.y2; ++y)
      for (int x = box.x1; x < box.x2; ++x)
        crop.at(x - box.x1, y - box.y1) = img.at(x, y);
    const PageImage from_disk = read_image((dir / m.element_files[0]).string());
    CHECK(same_image(crop, from_disk));
  }
  fs::remove_all(dir);
}

TEST_CASE("corpus generation is byte deterministic") {
  const fs::path d1 = fs::temp_directory_path() / "dolphin_synth_d1";
  const fs::path d2 = fs::temp_directory_path() / "dolphin_synth_d2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  SynthConfig cfg;
  cfg.seed = 101;
  gen_corpus(cfg, 8, d1.string());
  gen_corpus(cfg, 8, d2.string());
  size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(d1)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), d1);
    std::ifstream a(e.path(), std::ios::binary), b(d2 / rel, std::ios::binary);
    REQUIRE(b.good());
    std::string ca((std::istreambuf_iterator<char>(a)), {});
    std::string cb((std::istreambuf_iterator<char>(b)), {});
    CHECK(ca == cb);
    ++compared;
  }
  CHECK(compared > 16);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("config validation and serialization") {
  SynthConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  const SynthConfig back = SynthConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  SynthConfig bad = cfg;
  bad.min_elements = 5;
  bad.max_elements = 2;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.page_width = 0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.charset.clear();
  CHECK_THROWS(bad.validate());
}
