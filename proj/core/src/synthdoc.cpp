#include "dolphin/synthdoc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "dolphin/font5x7.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace dolphin {

namespace {

constexpr int kScale = 3;      // 5x7 font scaled x3
constexpr int kMargin = 8;
constexpr int kGutter = 10;
constexpr uint8_t kInk = 0;
constexpr uint8_t kBoxGray = 120;
constexpr uint8_t kHatchGray = 90;

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct ElemOut {
  ElementType et;
  BoundingBox box;
  std::string content;
  std::vector<BoundingBox> line_boxes;
  std::vector<std::string> line_texts;
};

// exact ink extents of a rendered string, computed from the glyph bitmaps
std::optional<BoundingBox> measure_ink(int x, int y, const std::string& text, int scale) {
  int minx = 1 << 30, miny = 1 << 30, maxx = -1, maxy = -1;
  int cx = x;
  for (char ch : text) {
    const uint8_t* g = font::glyph(ch);
    for (int r = 0; r < font::kGlyphH; ++r)
      for (int c = 0; c < font::kGlyphW; ++c)
        if (g[r] & (1u << (font::kGlyphW - 1 - c))) {
          minx = std::min(minx, cx + c * scale);
          maxx = std::max(maxx, cx + (c + 1) * scale);
          miny = std::min(miny, y + r * scale);
          maxy = std::max(maxy, y + (r + 1) * scale);
        }
    cx += font::advance(scale);
  }
  if (maxx < 0) return std::nullopt;
  return BoundingBox{minx, miny, maxx, maxy};
}

void draw_rect_outline(PageImage& img, const BoundingBox& b, uint8_t color) {
  for (int x = b.x1; x < b.x2; ++x) {
    img.at(x, b.y1) = color;
    img.at(x, b.y2 - 1) = color;
  }
  for (int y = b.y1; y < b.y2; ++y) {
    img.at(b.x1, y) = color;
    img.at(b.x2 - 1, y) = color;
  }
}

BoundingBox box_union(const BoundingBox& a, const BoundingBox& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1),
          std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

class PageBuilder {
 public:
  PageBuilder(const SynthConfig& cfg, std::mt19937_64& rng)
      : cfg_(cfg), rng_(rng), img_(cfg.page_width, cfg.page_height, 1, 255) {}

  PageImage img_;
  std::vector<ElemOut> elems_;

  std::string word(int min_len = 2, int max_len = 6) {
    const int len = irange(min_len, max_len);
    std::string w;
    for (int i = 0; i < len; ++i)
      w += cfg_.charset[size_t(irange(0, int(cfg_.charset.size()) - 1))];
    return w;
  }

  std::string words_for_width(int max_chars, int min_words = 1) {
    std::string out;
    for (int i = 0; i < 12; ++i) {
      std::string w = word();
      const int need = int(out.size() + (out.empty() ? 0 : 1) + w.size());
      if (need > max_chars) {
        if (int(out.size()) >= min_words * 2) break;
        if (need > max_chars + 4) break;
      }
      if (!out.empty()) out += ' ';
      out += w;
      if (irange(0, 2) == 0 && int(out.size()) > max_chars / 2) break;
    }
    if (out.empty()) out = word();
    return out;
  }

  int irange(int lo, int hi) {  // inclusive
    return lo + int(rng_() % uint64_t(hi - lo + 1));
  }
  double uniform() { return double(rng_() >> 11) * 0x1p-53; }

  // one rendered text line; returns ink box (nullopt for all-space)
  std::optional<BoundingBox> draw_line(int x, int y, const std::string& text) {
    font::draw_text(img_, x, y, text, kScale, kInk);
    return measure_ink(x, y, text, kScale);
  }

  std::string formula_latex() {
    const std::string vars = "abcxyz";
    auto v = [&] { return std::string(1, vars[size_t(irange(0, int(vars.size()) - 1))]); };
    auto d = [&] { return std::string(1, char('0' + irange(1, 9))); };
    switch (irange(0, 5)) {
      case 0: return "\\frac{" + v() + "}{" + v() + "}";
      case 1: return v() + "^{" + d() + "}";
      case 2: return "\\sum_{i} " + v() + "_{i}";
      case 3: return "\\sqrt{" + v() + "}";
      case 4: return v() + "_{" + d() + "}";
      default: return v() + "+" + v() + "=" + v();
    }
  }

  std::optional<ElemOut> make_text_elem(ElementType et, int x, int y, int col_w,
                                        int max_lines) {
    const int max_chars = std::max(3, (col_w - 2) / font::advance(kScale));
    const int n_lines = irange(1, max_lines);
    ElemOut e;
    e.et = et;
    std::optional<BoundingBox> box;
    int ly = y;
    std::vector<std::string> content_lines;
    const bool with_formula =
        et == ElementType::para && uniform() < cfg_.formula_prob;

    for (int i = 0; i < n_lines; ++i) {
      std::string prefix = et == ElementType::list ? "- " : "";
      if (et == ElementType::cap && i == 0) prefix = "fig. " + std::to_string(irange(1, 9)) + " ";
      std::string text = prefix + words_for_width(max_chars - int(prefix.size()));
      auto lb = draw_line(x, ly, text);
      if (lb) {
        e.line_boxes.push_back(*lb);
        e.line_texts.push_back(text);
        box = box ? box_union(*box, *lb) : *lb;
        content_lines.push_back(text);
      }
      ly += font::line_height(kScale);
    }
    if (with_formula) {
      const std::string latex = formula_latex();
      if (int(latex.size()) <= max_chars - 1) {
        auto ib = measure_ink(x + 4, ly + 3, latex, kScale);
        if (ib) {
          font::draw_text(img_, x + 4, ly + 3, latex, kScale, kInk);
          BoundingBox border{ib->x1 - 3, ib->y1 - 3, ib->x2 + 3, ib->y2 + 3};
          if (border.x1 >= 0 && border.y1 >= 0 && border.x2 <= img_.width &&
              border.y2 <= img_.height) {
            draw_rect_outline(img_, border, kBoxGray);
            e.line_boxes.push_back(border);
            e.line_texts.push_back("$" + latex + "$");
            box = box ? box_union(*box, border) : border;
            content_lines.push_back("$" + latex + "$");
          }
        }
      }
    }
    if (!box) return std::nullopt;
    e.box = *box;
    const char* joiner = et == ElementType::list ? "\n" : " ";
    for (size_t i = 0; i < content_lines.size(); ++i) {
      if (i) e.content += joiner;
      e.content += content_lines[i];
    }
    return e;
  }

  std::optional<ElemOut> make_table(int x, int y, int col_w) {
    const int rows = irange(2, 3), cols = irange(2, 3);
    std::vector<std::vector<std::string>> cells;
    cells.assign(size_t(rows), std::vector<std::string>(size_t(cols)));
    std::vector<int> widths(size_t(cols), 0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        cells[size_t(r)][size_t(c)] = word(1, 2);
        widths[size_t(c)] = std::max(widths[size_t(c)],
                                     font::text_width(cells[size_t(r)][size_t(c)].size(), kScale));
      }
    const int pad = 5;
    int total_w = 1;
    for (int c = 0; c < cols; ++c) total_w += widths[size_t(c)] + 2 * pad + 1;
    const int row_h = font::kGlyphH * kScale + 2 * pad;
    const int total_h = rows * (row_h + 1) + 1;
    if (total_w > col_w) return std::nullopt;

    ElemOut e;
    e.et = ElementType::tab;
    e.box = {x, y, x + total_w, y + total_h};
    // ruled grid
    for (int r = 0; r <= rows; ++r)
      for (int px = x; px < x + total_w; ++px) img_.at(px, y + r * (row_h + 1)) = kInk;
    int cx = x;
    for (int c = 0; c <= cols; ++c) {
      for (int py = y; py < y + total_h; ++py) img_.at(cx, py) = kInk;
      if (c < cols) cx += widths[size_t(c)] + 2 * pad + 1;
    }
    std::string html = "<table>";
    cx = x;
    for (int r = 0; r < rows; ++r) {
      html += "<tr>";
      int colx = x + 1;
      for (int c = 0; c < cols; ++c) {
        const auto& txt = cells[size_t(r)][size_t(c)];
        const int tx = colx + pad, ty = y + r * (row_h + 1) + 1 + pad;
        font::draw_text(img_, tx, ty, txt, kScale, kInk);
        if (auto ib = measure_ink(tx, ty, txt, kScale)) {
          e.line_boxes.push_back(*ib);
          e.line_texts.push_back(txt);
        }
        html += "<td>" + txt + "</td>";
        colx += widths[size_t(c)] + 2 * pad + 1;
      }
      html += "</tr>";
    }
    html += "</table>";
    e.content = html;
    return e;
  }

  ElemOut make_figure(int x, int y, int col_w) {
    const int w = std::min(col_w, irange(60, std::max(61, col_w)));
    const int h = irange(36, 72);
    ElemOut e;
    e.et = ElementType::fig;
    e.box = {x, y, x + w, y + h};
    draw_rect_outline(img_, e.box, kInk);
    for (int d = 6; d < w + h; d += 7) {  // diagonal hatching
      for (int px = std::max(x + 1, x + d - h + 1); px < std::min(x + w - 1, x + d); ++px) {
        const int py = y + d - (px - x);
        if (py > y && py < y + h - 1) img_.at(px, py) = kHatchGray;
      }
    }
    e.content = "";
    return e;
  }

 private:
  const SynthConfig& cfg_;
  std::mt19937_64& rng_;
};

}  // namespace

void SynthConfig::validate() const {
  if (page_width < 128 || page_height < 128)
    throw std::invalid_argument("page size must be >= 128");
  if (columns != 1 && columns != 2)
    throw std::invalid_argument("columns must be 1 or 2");
  double sum = 0;
  for (const auto& [k, v] : element_mix) {
    if (v < 0) throw std::invalid_argument("negative mix weight");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("element mix must sum to 1");
  if (charset.empty()) throw std::invalid_argument("empty charset");
  if (min_elements < 0 || max_elements < min_elements)
    throw std::invalid_argument("bad element count range");
}

std::pair<PageImage, GroundTruth> gen_page(const SynthConfig& cfg, uint64_t index) {
  cfg.validate();

  for (int attempt = 0; attempt < 10; ++attempt) {
    std::mt19937_64 rng(mix64(mix64(cfg.seed) ^ mix64(index * 2 + 1)) + uint64_t(attempt));
    PageBuilder b(cfg, rng);

    GroundTruth gt;
    gt.page_w = cfg.page_width;
    gt.page_h = cfg.page_height;

    if (b.uniform() < cfg.blank_page_prob)
      return {std::move(b.img_), std::move(gt)};

    const int target = b.irange(cfg.min_elements, cfg.max_elements);

    // header/foot go outside the column flow
    auto mixw = [&cfg](const char* k) {
      auto it = cfg.element_mix.find(k);
      return it == cfg.element_mix.end() ? 0.0 : it->second;
    };
    const bool want_header = b.uniform() < std::min(1.0, mixw("header") * target);
    const bool want_foot = b.uniform() < std::min(1.0, mixw("foot") * target);

    int top = kMargin, bottom = cfg.page_height - kMargin;
    if (want_header) {
      PageImage backup = b.img_;
      auto h = b.make_text_elem(ElementType::header, kMargin, top,
                                cfg.page_width - 2 * kMargin, 1);
      if (h && h->box.x2 > cfg.page_width - kMargin) h.reset();
      if (!h) b.img_ = std::move(backup);
      if (h) {
        b.elems_.push_back(std::move(*h));
        top = b.elems_.back().box.y2 + 8;
      }
    }
    ElemOut foot_elem;
    bool have_foot = false;
    if (want_foot) {
      const int fy = cfg.page_height - kMargin - font::kGlyphH * kScale;
      PageImage backup = b.img_;
      auto f = b.make_text_elem(ElementType::foot, kMargin, fy,
                                cfg.page_width - 2 * kMargin, 1);
      if (f && f->box.x2 > cfg.page_width - kMargin) f.reset();
      if (!f) b.img_ = std::move(backup);
      if (f) {
        foot_elem = std::move(*f);
        have_foot = true;
        bottom = foot_elem.box.y1 - 8;
      }
    }

    // flow element kinds and their normalized weights
    std::vector<std::pair<ElementType, double>> kinds;
    for (const char* k : {"sec", "para", "tab", "cap", "fig", "list"}) {
      const double w = mixw(k);
      if (w > 0) kinds.push_back({element_type_parse(k), w});
    }
    double wsum = 0;
    for (auto& [k, w] : kinds) wsum += w;

    const int col_w = cfg.columns == 1
                          ? cfg.page_width - 2 * kMargin
                          : (cfg.page_width - 2 * kMargin - kGutter) / 2;

    int placed = int(b.elems_.size()) + (have_foot ? 1 : 0);
    for (int col = 0; col < cfg.columns && placed < target; ++col) {
      const int x0 = kMargin + col * (col_w + kGutter);
      int y = top;
      int guard = 0;
      while (placed < target && guard++ < 24) {
        double r = b.uniform() * wsum;
        ElementType kind = kinds.back().first;
        for (const auto& [k, w] : kinds) {
          if (r < w) { kind = k; break; }
          r -= w;
        }
        std::optional<ElemOut> e;
        const int room = bottom - y;
        PageImage backup = b.img_;  // renderers draw eagerly; roll back rejects
        switch (kind) {
          case ElementType::sec:
            if (room >= 20) e = b.make_text_elem(kind, x0, y, col_w, 1);
            break;
          case ElementType::cap:
            if (room >= 20) e = b.make_text_elem(kind, x0, y, col_w, 1);
            break;
          case ElementType::para:
            if (room >= 80) e = b.make_text_elem(kind, x0, y, col_w, 3);
            else if (room >= 40) e = b.make_text_elem(kind, x0, y, col_w, 1);
            break;
          case ElementType::list:
            if (room >= 60) e = b.make_text_elem(kind, x0, y, col_w, 3);
            break;
          case ElementType::tab:
            if (room >= 80) e = b.make_table(x0, y, col_w);
            break;
          case ElementType::fig:
            if (room >= 80) e = b.make_figure(x0, y, col_w);
            break;
          default:
            break;
        }
        if (!e) {
          b.img_ = std::move(backup);
          if (room < 40) break;  // column full
          continue;
        }
        if (e->box.y2 > bottom || e->box.x2 > x0 + col_w) {
          b.img_ = std::move(backup);
          break;
        }
        y = e->box.y2 + 6 + b.irange(0, 6);
        b.elems_.push_back(std::move(*e));
        ++placed;
      }
    }
    if (have_foot) b.elems_.push_back(std::move(foot_elem));

    if (int(b.elems_.size()) < cfg.min_elements) continue;  // repack

    for (size_t i = 0; i < b.elems_.size(); ++i) {
      auto& e = b.elems_[i];
      gt.layout.elements.push_back({e.et, e.box, int(i)});
      gt.contents.push_back(std::move(e.content));
      gt.line_boxes.push_back(std::move(e.line_boxes));
      gt.line_texts.push_back(std::move(e.line_texts));
    }
    return {std::move(b.img_), std::move(gt)};
  }
  throw LayoutOverflow("could not pack " + std::to_string(cfg.min_elements) +
                       " elements after 10 attempts");
}

std::string SynthConfig::to_json() const {
  nlohmann::ordered_json j;
  j["page_width"] = page_width;
  j["page_height"] = page_height;
  j["columns"] = columns;
  j["element_mix"] = element_mix;
  j["formula_prob"] = formula_prob;
  j["blank_page_prob"] = blank_page_prob;
  j["charset"] = charset;
  j["min_elements"] = min_elements;
  j["max_elements"] = max_elements;
  j["seed"] = seed;
  return j.dump(2);
}

SynthConfig SynthConfig::from_json(const std::string& json) {
  auto j = nlohmann::json::parse(json);
  SynthConfig c;
  c.page_width = j.value("page_width", c.page_width);
  c.page_height = j.value("page_height", c.page_height);
  c.columns = j.value("columns", c.columns);
  if (j.contains("element_mix"))
    c.element_mix = j["element_mix"].get<std::map<std::string, double>>();
  c.formula_prob = j.value("formula_prob", c.formula_prob);
  c.blank_page_prob = j.value("blank_page_prob", c.blank_page_prob);
  c.charset = j.value("charset", c.charset);
  c.min_elements = j.value("min_elements", c.min_elements);
  c.max_elements = j.value("max_elements", c.max_elements);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string GroundTruth::to_json() const {
  nlohmann::ordered_json j;
  j["page_w"] = page_w;
  j["page_h"] = page_h;
  j["layout"] = nlohmann::ordered_json::array();
  for (const auto& e : layout.elements) {
    nlohmann::ordered_json el;
    el["type"] = std::string(element_type_tag(e.etype));
    el["bbox"] = {e.bbox.x1, e.bbox.y1, e.bbox.x2, e.bbox.y2};
    el["order"] = e.order_index;
    j["layout"].push_back(std::move(el));
  }
  j["contents"] = contents;
  j["lines"] = nlohmann::ordered_json::array();
  for (const auto& lbs : line_boxes) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (const auto& b : lbs) row.push_back({b.x1, b.y1, b.x2, b.y2});
    j["lines"].push_back(std::move(row));
  }
  j["line_texts"] = line_texts;
  return j.dump(2);
}

GroundTruth GroundTruth::from_json(const std::string& json) {
  auto j = nlohmann::json::parse(json);
  GroundTruth gt;
  gt.page_w = j.value("page_w", 0);
  gt.page_h = j.value("page_h", 0);
  for (const auto& el : j.at("layout")) {
    LayoutElement e;
    e.etype = element_type_parse(el.at("type").get<std::string>());
    const auto& b = el.at("bbox");
    e.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    e.order_index = el.at("order").get<int>();
    gt.layout.elements.push_back(e);
  }
  gt.contents = j.at("contents").get<std::vector<std::string>>();
  for (const auto& row : j.at("lines")) {
    std::vector<BoundingBox> lbs;
    for (const auto& b : row)
      lbs.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()});
    gt.line_boxes.push_back(std::move(lbs));
  }
  if (j.contains("line_texts"))
    gt.line_texts = j["line_texts"].get<std::vector<std::vector<std::string>>>();
  return gt;
}

std::string CorpusManifest::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["pages"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < page_files.size(); ++i) {
    nlohmann::ordered_json p;
    p["image"] = page_files[i];
    p["gt"] = gt_files[i];
    p["split"] = splits[i];
    j["pages"].push_back(std::move(p));
  }
  j["elements"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < element_files.size(); ++i) {
    nlohmann::ordered_json p;
    p["image"] = element_files[i];
    p["gt"] = element_gts[i];
    j["elements"].push_back(std::move(p));
  }
  return j.dump(2);
}

CorpusManifest CorpusManifest::from_json(const std::string& json) {
  auto j = nlohmann::json::parse(json);
  CorpusManifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.config_hash = j.at("config_hash").get<std::string>();
  for (const auto& p : j.at("pages")) {
    m.page_files.push_back(p.at("image").get<std::string>());
    m.gt_files.push_back(p.at("gt").get<std::string>());
    m.splits.push_back(p.at("split").get<std::string>());
  }
  for (const auto& p : j.at("elements")) {
    m.element_files.push_back(p.at("image").get<std::string>());
    m.element_gts.push_back(p.at("gt").get<std::string>());
  }
  return m;
}

CorpusManifest CorpusManifest::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!in) throw std::runtime_error("no manifest.json in " + dir);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

CorpusManifest gen_corpus(const SynthConfig& cfg, int n, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  fs::create_directories(fs::path(out_dir) / "elements");

  CorpusManifest m;
  m.seed = cfg.seed;
  m.config_hash = sha256_hex(cfg.to_json());

  auto write_file = [](const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << bytes;
  };

  for (int i = 0; i < n; ++i) {
    auto [img, gt] = gen_page(cfg, uint64_t(i));
    char name[64];
    snprintf(name, sizeof name, "page_%05d", i);
    const std::string img_rel = std::string(name) + ".png";
    const std::string gt_rel = std::string(name) + ".json";
    write_png((fs::path(out_dir) / img_rel).string(), img);
    write_file(fs::path(out_dir) / gt_rel, gt.to_json());
    m.page_files.push_back(img_rel);
    m.gt_files.push_back(gt_rel);
    m.splits.push_back(i % 10 == 7 ? "heldout" : "train");

    // decompose into element-level samples
    for (size_t k = 0; k < gt.layout.elements.size(); ++k) {
      const auto& e = gt.layout.elements[k];
      PageImage crop(e.bbox.width(), e.bbox.height(), 1);
      for (int y = e.bbox.y1; y < e.bbox.y2; ++y)
        for (int x = e.bbox.x1; x < e.bbox.x2; ++x)
          crop.at(x - e.bbox.x1, y - e.bbox.y1) = img.at(x, y);
      char ename[64];
      snprintf(ename, sizeof ename, "elements/el_%05d_%02d", i, int(k));
      const std::string e_img = std::string(ename) + ".png";
      const std::string e_gt = std::string(ename) + ".json";
      write_png((fs::path(out_dir) / e_img).string(), crop);
      nlohmann::ordered_json ej;
      ej["type"] = std::string(element_type_tag(e.etype));
      ej["content"] = gt.contents[k];
      ej["source_page"] = i;
      ej["element"] = int(k);
      ej["split"] = m.splits.back();
      write_file(fs::path(out_dir) / e_gt, ej.dump(2));
      m.element_files.push_back(e_img);
      m.element_gts.push_back(e_gt);
    }
  }
  write_file(fs::path(out_dir) / "manifest.json", m.to_json());
  write_file(fs::path(out_dir) / "synth_config.json", cfg.to_json());
  return m;
}

}  // namespace dolphin
