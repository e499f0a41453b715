// Evaluation metrics: normalized edit distance, TEDS for tables, a
// CDM-style formula score, and corpus-level aggregation.
#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dolphin {

struct EditDistance {
  long raw = 0;
  double normalized = 0.0;
};

// Unit-cost Levenshtein; normalized by max(len(a), len(b), 1).
EditDistance edit_distance(const std::string& a, const std::string& b);

// Rooted ordered labeled tree parsed from HTML table markup.
// Labels: table, thead, tbody, tr, td. td nodes are leaves and carry cell
// text plus span attributes.
struct TableNode {
  std::string label;
  std::string text;      // td only
  int colspan = 1, rowspan = 1;
  std::vector<TableNode> children;

  int node_count() const;
};

struct MalformedGroundTruth : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tolerant parse; nullopt when no <table> element can be recovered.
std::optional<TableNode> parse_table_html(const std::string& html);

// Ordered tree edit distance (Zhang-Shasha) with unit structural costs;
// td-vs-td substitution costs the normalized edit distance of the cell
// texts, with any span-attribute mismatch counting as cost 1.
double tree_edit_distance(const TableNode& a, const TableNode& b);

// 1 - TED / max(|pred|, |gt|). Unparseable prediction scores 0.
double teds(const std::string& pred_html, const std::string& gt_html);

// LaTeX canonicalization used by the CDM-style score: collapse whitespace,
// drop \left and \right, drop braces around single tokens.
std::string canonicalize_latex(const std::string& s);

// 1 - normalized edit distance over canonical forms.
double cdm(const std::string& pred_latex, const std::string& gt_latex);

struct MissingSample : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SampleScores {
  std::string id;
  double page_ed = 0.0;
  std::optional<double> teds;       // mean over matched tables, if any
  std::optional<double> cdm;        // mean over formula-bearing paras, if any
  double type_accuracy = 0.0;       // over matched layout elements
  double mean_iou = 0.0;            // over ground-truth elements
  int n_gt_elements = 0;
  int n_pred_elements = 0;
  double wall_ms = 0.0;
  bool parse_failure = false;
};

struct EvalReport {
  std::vector<SampleScores> samples;
  double mean_ed = 0.0;
  double mean_teds = 1.0;
  double mean_cdm = 1.0;
  double type_accuracy = 0.0;
  double mean_iou = 0.0;
  double fps = 0.0;
  int parse_failures = 0;

  std::string to_json() const;
  std::string to_text_table() const;
};

// predictions dir: <id>.json ParsedDocument files; ground truth dir:
// <id>.json synthetic ground-truth files. Sample ids are file stems.
EvalReport evaluate_corpus(const std::string& predictions_dir,
                           const std::string& ground_truth_dir);

}  // namespace dolphin
