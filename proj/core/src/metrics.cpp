#include "dolphin/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dolphin/markdown.hpp"
#include "dolphin/synthdoc.hpp"
#include "dolphin/types.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace dolphin {

EditDistance edit_distance(const std::string& a, const std::string& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<long> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), 0L);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = long(i);
    for (size_t j = 1; j <= m; ++j) {
      const long sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  EditDistance d;
  d.raw = prev[m];
  d.normalized = double(d.raw) / double(std::max({n, m, size_t(1)}));
  return d;
}

namespace {

// minimal LaTeX token stream: commands, braces, single chars; whitespace dropped
std::vector<std::string> latex_tokens(const std::string& s) {
  std::vector<std::string> toks;
  for (size_t i = 0; i < s.size();) {
    const char c = s[i];
    if (isspace(uint8_t(c))) { ++i; continue; }
    if (c == '\\' && i + 1 < s.size() && isalpha(uint8_t(s[i + 1]))) {
      size_t j = i + 1;
      while (j < s.size() && isalpha(uint8_t(s[j]))) ++j;
      toks.push_back(s.substr(i, j - i));
      i = j;
    } else {
      toks.push_back(std::string(1, c));
      ++i;
    }
  }
  return toks;
}

// drops braces that wrap a single token; recursive over nested groups
std::string canonicalize_group(const std::vector<std::string>& toks, size_t& i,
                               bool stop_at_close) {
  std::string out;
  std::vector<std::string> parts;
  while (i < toks.size()) {
    const std::string& t = toks[i];
    if (t == "}" && stop_at_close) break;
    if (t == "\\left" || t == "\\right") { ++i; continue; }
    if (t == "{") {
      ++i;
      std::string inner = canonicalize_group(toks, i, true);
      if (i < toks.size() && toks[i] == "}") ++i;
      // re-tokenize to see whether the group reduced to one token
      auto inner_toks = latex_tokens(inner);
      if (inner_toks.size() == 1)
        parts.push_back(inner);
      else
        parts.push_back("{" + inner + "}");
    } else {
      parts.push_back(t);
      ++i;
    }
  }
  for (const auto& p : parts) out += p;
  return out;
}

}  // namespace

std::string canonicalize_latex(const std::string& s) {
  auto toks = latex_tokens(s);
  size_t i = 0;
  return canonicalize_group(toks, i, false);
}

double cdm(const std::string& pred_latex, const std::string& gt_latex) {
  const std::string p = canonicalize_latex(pred_latex);
  const std::string g = canonicalize_latex(gt_latex);
  return 1.0 - edit_distance(p, g).normalized;
}

namespace {

// $...$ and $$...$$ spans, concatenated; used to focus CDM on formulas
std::string formula_spans(const std::string& s) {
  std::string out;
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '$') { ++i; continue; }
    size_t start = i + 1;
    if (start < s.size() && s[start] == '$') ++start;  // display math
    size_t end = s.find('$', start);
    if (end == std::string::npos) break;
    if (!out.empty()) out += '\n';
    out += s.substr(start, end - start);
    i = end + 1;
    if (i < s.size() && s[i] == '$') ++i;
  }
  return out;
}

ParsedDocument gt_to_document(const GroundTruth& gt) {
  ParsedDocument doc;
  doc.page_w = gt.page_w;
  doc.page_h = gt.page_h;
  for (size_t i = 0; i < gt.layout.elements.size(); ++i) {
    ParsedElement pe;
    pe.element = gt.layout.elements[i];
    pe.content = i < gt.contents.size() ? gt.contents[i] : "";
    pe.content_format = content_format_for(pe.element.etype);
    doc.elements.push_back(std::move(pe));
  }
  return doc;
}

// greedy IoU matching, highest overlap first
std::vector<int> match_elements(const ParsedDocument& gt, const ParsedDocument& pred,
                                double min_iou = 0.5) {
  struct Cand { double iou; int gi, pi; };
  std::vector<Cand> cands;
  for (int gi = 0; gi < int(gt.elements.size()); ++gi)
    for (int pi = 0; pi < int(pred.elements.size()); ++pi) {
      const double v = iou(gt.elements[size_t(gi)].element.bbox,
                           pred.elements[size_t(pi)].element.bbox);
      if (v >= min_iou) cands.push_back({v, gi, pi});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    return std::tie(a.gi, a.pi) < std::tie(b.gi, b.pi);
  });
  std::vector<int> match(gt.elements.size(), -1);
  std::vector<bool> used(pred.elements.size(), false);
  for (const auto& c : cands) {
    if (match[size_t(c.gi)] >= 0 || used[size_t(c.pi)]) continue;
    match[size_t(c.gi)] = c.pi;
    used[size_t(c.pi)] = true;
  }
  return match;
}

double mean_of(const std::vector<double>& v, double when_empty) {
  if (v.empty()) return when_empty;
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

}  // namespace

EvalReport evaluate_corpus(const std::string& predictions_dir,
                           const std::string& ground_truth_dir) {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(ground_truth_dir))
    if (entry.path().extension() == ".json" && entry.path().filename() != "manifest.json" &&
        entry.path().filename() != "synth_config.json")
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());

  std::vector<std::string> missing;
  for (const auto& id : ids)
    if (!fs::exists(fs::path(predictions_dir) / (id + ".json"))) missing.push_back(id);
  if (!missing.empty()) {
    std::string msg = "missing predictions:";
    for (const auto& id : missing) msg += " " + id;
    throw MissingSample(msg);
  }

  EvalReport report;
  std::vector<double> eds, tedss, cdms, type_accs, ious;
  double total_ms = 0.0;

  for (const auto& id : ids) {
    SampleScores s;
    s.id = id;

    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    GroundTruth gt = GroundTruth::from_json(slurp(fs::path(ground_truth_dir) / (id + ".json")));
    ParsedDocument gt_doc = gt_to_document(gt);

    ParsedDocument pred;
    try {
      pred = parsed_document_from_json(slurp(fs::path(predictions_dir) / (id + ".json")));
    } catch (const std::exception&) {
      s.parse_failure = true;
      ++report.parse_failures;
    }

    s.n_gt_elements = int(gt_doc.elements.size());
    s.n_pred_elements = int(pred.elements.size());
    s.wall_ms = pred.timing.stage1_ms + pred.timing.stage2_ms;
    total_ms += s.wall_ms;

    s.page_ed = edit_distance(assemble_markdown(pred), assemble_markdown(gt_doc)).normalized;

    auto match = match_elements(gt_doc, pred);
    std::vector<double> sample_teds, sample_cdm;
    int correct_types = 0;
    double iou_sum = 0.0;
    for (size_t gi = 0; gi < gt_doc.elements.size(); ++gi) {
      const auto& ge = gt_doc.elements[gi];
      const int pi = match[gi];
      if (pi >= 0) {
        const auto& pe = pred.elements[size_t(pi)];
        iou_sum += iou(ge.element.bbox, pe.element.bbox);
        if (pe.element.etype == ge.element.etype) ++correct_types;
        if (ge.element.etype == ElementType::tab)
          sample_teds.push_back(teds(pe.content, ge.content));
        else if (ge.content.find('$') != std::string::npos)
          sample_cdm.push_back(cdm(formula_spans(pe.content), formula_spans(ge.content)));
      } else if (ge.element.etype == ElementType::tab) {
        sample_teds.push_back(0.0);
      } else if (ge.content.find('$') != std::string::npos) {
        sample_cdm.push_back(cdm("", formula_spans(ge.content)));
      }
    }
    if (!gt_doc.elements.empty()) {
      s.type_accuracy = double(correct_types) / double(gt_doc.elements.size());
      s.mean_iou = iou_sum / double(gt_doc.elements.size());
    } else {
      s.type_accuracy = pred.elements.empty() ? 1.0 : 0.0;
      s.mean_iou = s.type_accuracy;
    }
    if (!sample_teds.empty()) s.teds = mean_of(sample_teds, 1.0);
    if (!sample_cdm.empty()) s.cdm = mean_of(sample_cdm, 1.0);

    eds.push_back(s.page_ed);
    type_accs.push_back(s.type_accuracy);
    ious.push_back(s.mean_iou);
    if (s.teds) tedss.push_back(*s.teds);
    if (s.cdm) cdms.push_back(*s.cdm);
    report.samples.push_back(std::move(s));
  }

  report.mean_ed = mean_of(eds, 0.0);
  report.mean_teds = mean_of(tedss, 1.0);
  report.mean_cdm = mean_of(cdms, 1.0);
  report.type_accuracy = mean_of(type_accs, 1.0);
  report.mean_iou = mean_of(ious, 1.0);
  report.fps = total_ms > 0.0 ? double(ids.size()) / (total_ms / 1000.0) : 0.0;
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["mean_ed"] = mean_ed;
  j["mean_teds"] = mean_teds;
  j["mean_cdm"] = mean_cdm;
  j["type_accuracy"] = type_accuracy;
  j["mean_iou"] = mean_iou;
  j["fps"] = fps;
  j["parse_failures"] = parse_failures;
  j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : samples) {
    nlohmann::ordered_json e;
    e["id"] = s.id;
    e["page_ed"] = s.page_ed;
    if (s.teds) e["teds"] = *s.teds;
    if (s.cdm) e["cdm"] = *s.cdm;
    e["type_accuracy"] = s.type_accuracy;
    e["mean_iou"] = s.mean_iou;
    e["n_gt_elements"] = s.n_gt_elements;
    e["n_pred_elements"] = s.n_pred_elements;
    e["wall_ms"] = s.wall_ms;
    e["parse_failure"] = s.parse_failure;
    j["samples"].push_back(std::move(e));
  }
  return j.dump(2);
}

std::string EvalReport::to_text_table() const {
  std::ostringstream out;
  char line[256];
  snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s %8s\n",
           "sample", "ED", "TEDS", "CDM", "TypeAcc", "IoU");
  out << line;
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  for (const auto& s : samples) {
    snprintf(line, sizeof line, "%-24s %8.4f %8s %8s %8.4f %8.4f\n", s.id.c_str(),
             s.page_ed, fmt(s.teds).c_str(), fmt(s.cdm).c_str(), s.type_accuracy,
             s.mean_iou);
    out << line;
  }
  snprintf(line, sizeof line,
           "%-24s %8.4f %8.4f %8.4f %8.4f %8.4f   FPS %.4f  failures %d\n", "mean",
           mean_ed, mean_teds, mean_cdm, type_accuracy, mean_iou, fps, parse_failures);
  out << line;
  return out.str();
}

}  // namespace dolphin
