#include <algorithm>
#include <cctype>

#include "dolphin/metrics.hpp"

namespace dolphin {

int TableNode::node_count() const {
  int n = 1;
  for (const auto& c : children) n += c.node_count();
  return n;
}

namespace {

std::string unescape_entities(const std::string& s) {
  std::string out;
  for (size_t i = 0; i < s.size();) {
    if (s.compare(i, 5, "&amp;") == 0) { out += '&'; i += 5; }
    else if (s.compare(i, 4, "&lt;") == 0) { out += '<'; i += 4; }
    else if (s.compare(i, 4, "&gt;") == 0) { out += '>'; i += 4; }
    else out += s[i++];
  }
  return out;
}

struct Tag {
  std::string name;
  bool closing = false;
  int colspan = 1, rowspan = 1;
};

int parse_span_attr(const std::string& body, const char* attr) {
  auto pos = body.find(attr);
  if (pos == std::string::npos) return 1;
  pos = body.find('"', pos);
  if (pos == std::string::npos) return 1;
  int v = 0;
  size_t i = pos + 1;
  while (i < body.size() && isdigit(uint8_t(body[i]))) v = v * 10 + (body[i++] - '0');
  return v >= 1 ? v : 1;
}

// Scans the next tag starting at '<'; returns nullopt when malformed.
std::optional<Tag> scan_tag(const std::string& s, size_t& pos) {
  const size_t end = s.find('>', pos);
  if (end == std::string::npos) { pos = s.size(); return std::nullopt; }
  std::string body = s.substr(pos + 1, end - pos - 1);
  pos = end + 1;

  Tag t;
  size_t i = 0;
  if (i < body.size() && body[i] == '/') { t.closing = true; ++i; }
  while (i < body.size() && (isalnum(uint8_t(body[i])) || body[i] == '_'))
    t.name += char(tolower(uint8_t(body[i++])));
  if (t.name.empty()) return std::nullopt;
  t.colspan = parse_span_attr(body, "colspan");
  t.rowspan = parse_span_attr(body, "rowspan");
  return t;
}

bool is_table_label(const std::string& n) {
  return n == "table" || n == "thead" || n == "tbody" || n == "tr" || n == "td";
}

}  // namespace

std::optional<TableNode> parse_table_html(const std::string& html) {
  std::vector<TableNode*> stack;
  std::optional<TableNode> root;
  std::string pending_text;

  auto flush_text = [&] {
    if (!stack.empty() && stack.back()->label == "td")
      stack.back()->text += unescape_entities(pending_text);
    pending_text.clear();
  };

  size_t pos = 0;
  while (pos < html.size()) {
    if (html[pos] != '<') { pending_text += html[pos++]; continue; }
    auto tag = scan_tag(html, pos);
    if (!tag || !is_table_label(tag->name)) continue;  // skip unknown markup
    flush_text();

    if (!tag->closing) {
      if (!root) {
        if (tag->name != "table") continue;  // ignore content before <table>
        root = TableNode{"table"};
        stack = {&*root};
        continue;
      }
      if (stack.empty()) break;  // past the closed root
      if (stack.back()->label == "td") stack.pop_back();  // td stays a leaf
      if (stack.empty()) break;
      TableNode child;
      child.label = tag->name;
      child.colspan = tag->colspan;
      child.rowspan = tag->rowspan;
      stack.back()->children.push_back(std::move(child));
      stack.push_back(&stack.back()->children.back());
    } else {
      // close the nearest matching open element
      for (size_t i = stack.size(); i-- > 0;) {
        if (stack[i]->label == tag->name) { stack.resize(i); break; }
      }
      if (stack.empty()) break;
    }
  }
  return root;
}

namespace {

// Zhang-Shasha over postorder-flattened trees.
struct FlatTree {
  std::vector<const TableNode*> post;  // postorder
  std::vector<int> lld;                // leftmost leaf descendant, postorder ids
  std::vector<int> keyroots;

  explicit FlatTree(const TableNode& root) {
    flatten(root);
    std::vector<bool> seen(post.size(), false);
    for (int i = int(post.size()) - 1; i >= 0; --i) {
      if (!seen[size_t(lld[size_t(i)])]) {
        keyroots.push_back(i);
        seen[size_t(lld[size_t(i)])] = true;
      }
    }
    std::sort(keyroots.begin(), keyroots.end());
  }

  int flatten(const TableNode& n) {  // returns lld of n
    int first = -1;
    for (const auto& c : n.children) {
      const int l = flatten(c);
      if (first < 0) first = l;
    }
    post.push_back(&n);
    lld.push_back(first < 0 ? int(post.size()) - 1 : first);
    return lld.back();
  }
};

double subst_cost(const TableNode& a, const TableNode& b) {
  if (a.label != b.label) return 1.0;
  if (a.label == "td") {
    if (a.colspan != b.colspan || a.rowspan != b.rowspan) return 1.0;
    return edit_distance(a.text, b.text).normalized;
  }
  return 0.0;
}

}  // namespace

double tree_edit_distance(const TableNode& ta, const TableNode& tb) {
  FlatTree a(ta), b(tb);
  const int n = int(a.post.size()), m = int(b.post.size());
  std::vector<std::vector<double>> td(size_t(n), std::vector<double>(size_t(m), 0.0));
  std::vector<std::vector<double>> fd(size_t(n) + 1, std::vector<double>(size_t(m) + 1, 0.0));

  for (int ki : a.keyroots) {
    for (int kj : b.keyroots) {
      const int li = a.lld[size_t(ki)], lj = b.lld[size_t(kj)];
      const int ni = ki - li + 1, nj = kj - lj + 1;
      fd[0][0] = 0.0;
      for (int i = 1; i <= ni; ++i) fd[size_t(i)][0] = fd[size_t(i) - 1][0] + 1.0;
      for (int j = 1; j <= nj; ++j) fd[0][size_t(j)] = fd[0][size_t(j) - 1] + 1.0;
      for (int i = 1; i <= ni; ++i) {
        for (int j = 1; j <= nj; ++j) {
          const int pi = li + i - 1, pj = lj + j - 1;
          const double del = fd[size_t(i) - 1][size_t(j)] + 1.0;
          const double ins = fd[size_t(i)][size_t(j) - 1] + 1.0;
          if (a.lld[size_t(pi)] == li && b.lld[size_t(pj)] == lj) {
            const double sub = fd[size_t(i) - 1][size_t(j) - 1] +
                               subst_cost(*a.post[size_t(pi)], *b.post[size_t(pj)]);
            fd[size_t(i)][size_t(j)] = std::min({del, ins, sub});
            td[size_t(pi)][size_t(pj)] = fd[size_t(i)][size_t(j)];
          } else {
            const double sub = fd[size_t(a.lld[size_t(pi)] - li)][size_t(b.lld[size_t(pj)] - lj)] +
                               td[size_t(pi)][size_t(pj)];
            fd[size_t(i)][size_t(j)] = std::min({del, ins, sub});
          }
        }
      }
    }
  }
  return td[size_t(n) - 1][size_t(m) - 1];
}

double teds(const std::string& pred_html, const std::string& gt_html) {
  auto gt = parse_table_html(gt_html);
  if (!gt) throw MalformedGroundTruth("ground-truth HTML has no parsable table");
  auto pred = parse_table_html(pred_html);
  if (!pred) return 0.0;
  const double dist = tree_edit_distance(*pred, *gt);
  const double denom = std::max(pred->node_count(), gt->node_count());
  const double score = 1.0 - dist / denom;
  return std::clamp(score, 0.0, 1.0);
}

}  // namespace dolphin
