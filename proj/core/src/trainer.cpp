#include "dolphin/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "dolphin/markdown.hpp"
#include "dolphin/metrics.hpp"
#include "dolphin/pipeline.hpp"
#include "dolphin/preprocess.hpp"
#include "dolphin/synthdoc.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace dolphin {

namespace {

struct SampleSpec {
  enum Kind { Layout, Spot, BoxQuery, Element } kind;
  int index;          // into manifest pages or elements
  uint64_t variant;   // per-sample randomness (box-query line choice)
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CorpusError("cannot read: " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct ElementGt {
  ElementType etype;
  std::string content;
};

ElementGt load_element_gt(const fs::path& p) {
  const auto j = nlohmann::json::parse(slurp(p));
  return {element_type_parse(j.at("type").get<std::string>()),
          j.at("content").get<std::string>()};
}

BoundingBox transform_box(const BoundingBox& b, const FrameTransform& tf) {
  return to_model_frame(SrcRect{b.x1, b.y1, b.x2, b.y2}, tf);
}

struct Loader {
  const CorpusManifest& manifest;
  const fs::path dir;
  const Model& model;

  // page -> (model frame, gt with boxes mapped into the frame)
  std::tuple<PageImage, FrameTransform, GroundTruth> load_page(int index) const {
    const PageImage img =
        read_image((dir / manifest.page_files[size_t(index)]).string()).to_gray();
    auto [frame, tf] = resize_pad(img, model.config().frame_size);
    GroundTruth gt = GroundTruth::from_json(slurp(dir / manifest.gt_files[size_t(index)]));
    return {std::move(frame), tf, std::move(gt)};
  }

  std::optional<TrainSample> build(const SampleSpec& spec) const {
    const int cap = model.config().max_seq_len;
    TrainSample s;
    Prompt prompt;
    std::string target;
    if (spec.kind == SampleSpec::Element) {
      const PageImage crop =
          read_image((dir / manifest.element_files[size_t(spec.index)]).string()).to_gray();
      const ElementGt gt = load_element_gt(dir / manifest.element_gts[size_t(spec.index)]);
      auto [frame, tf] = resize_pad(crop, model.config().frame_size);
      (void)tf;
      s.frame = std::move(frame);
      prompt = prompt_for(gt.etype);
      target = gt.content;
    } else {
      auto [frame, tf, gt] = load_page(spec.index);
      s.frame = std::move(frame);
      LayoutSequence layout = gt.layout;
      for (auto& e : layout.elements) e.bbox = transform_box(e.bbox, tf);
      if (spec.kind == SampleSpec::Layout) {
        prompt = Prompt::layout();
        target = serialize_layout(layout);
      } else {
        std::vector<SpottedLine> lines;
        for (size_t k = 0; k < gt.line_boxes.size(); ++k)
          for (size_t l = 0; l < gt.line_boxes[k].size(); ++l)
            lines.push_back({transform_box(gt.line_boxes[k][l], tf),
                             k < gt.line_texts.size() && l < gt.line_texts[k].size()
                                 ? gt.line_texts[k][l]
                                 : ""});
        if (spec.kind == SampleSpec::BoxQuery) {
          // half the queries target a whole element, half a single line
          if (spec.variant & 1) {
            if (layout.elements.empty()) return std::nullopt;
            const size_t k = size_t((spec.variant >> 1) % layout.elements.size());
            prompt = Prompt::box_query(layout.elements[k].bbox);
            target = k < gt.contents.size() ? gt.contents[k] : "";
          } else {
            if (lines.empty()) return std::nullopt;
            const auto& line = lines[size_t((spec.variant >> 1) % lines.size())];
            prompt = Prompt::box_query(line.bbox);
            target = line.text;
          }
        } else {
          prompt = Prompt::spotting();
          // drop trailing lines until the sequence fits the budget
          while (true) {
            target = serialize_spotting(lines);
            if (int(model.build_sequence(prompt, target, nullptr).size()) <= cap ||
                lines.empty())
              break;
            lines.pop_back();
          }
        }
      }
    }
    s.ids = model.build_sequence(prompt, target, &s.sep_pos);
    if (int(s.ids.size()) > cap) return std::nullopt;
    return s;
  }
};

float lr_at(const TrainerConfig& cfg, int64_t step, int64_t total_steps) {
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
    return cfg.lr * float(step + 1) / float(cfg.warmup_steps);
  const double span = double(std::max<int64_t>(1, total_steps - cfg.warmup_steps));
  const double t = std::min(1.0, double(step - cfg.warmup_steps) / span);
  const float floor = cfg.lr * cfg.min_lr_frac;
  return floor + (cfg.lr - floor) * 0.5f * float(1.0 + std::cos(3.14159265358979 * t));
}

}  // namespace

Trainer::Trainer(Model& model, TrainerConfig cfg) : model_(model), cfg_(std::move(cfg)) {
  if (cfg_.batch_size < 1 || cfg_.epochs < 0)
    throw CorpusError("batch_size must be >= 1 and epochs >= 0");
}

std::vector<EpochStats> Trainer::run(std::ostream* log) {
  const CorpusManifest manifest = CorpusManifest::load(cfg_.corpus_dir);
  if (manifest.page_files.empty()) throw CorpusError("corpus has no pages");
  const Loader loader{manifest, fs::path(cfg_.corpus_dir), model_};

  std::vector<int> train_pages, heldout_pages;
  for (int i = 0; i < int(manifest.splits.size()); ++i)
    (manifest.splits[size_t(i)] == "heldout" ? heldout_pages : train_pages).push_back(i);
  std::vector<int> train_elems, heldout_elems;
  for (int i = 0; i < int(manifest.element_gts.size()); ++i) {
    const auto j = nlohmann::json::parse(
        slurp(fs::path(cfg_.corpus_dir) / manifest.element_gts[size_t(i)]));
    (j.at("split").get<std::string>() == "heldout" ? heldout_elems : train_elems).push_back(i);
  }
  if (train_pages.empty()) throw CorpusError("corpus has no training pages");

  // all epochs' sample plans up front, so the lr schedule knows total steps
  std::vector<std::vector<SampleSpec>> plans;
  int64_t total_steps = 0;
  for (int e = 0; e < cfg_.epochs; ++e) {
    std::mt19937_64 rng(cfg_.seed * 0x100000001b3ULL + uint64_t(e) + 0xcbf29ce484222325ULL);
    auto coin = [&rng](double p) { return double(rng() >> 11) * 0x1.0p-53 < p; };
    std::vector<SampleSpec> specs;
    for (int pi : train_pages) {
      specs.push_back({SampleSpec::Layout, pi, 0});
      if (coin(cfg_.page_spot_prob)) specs.push_back({SampleSpec::Spot, pi, 0});
      if (coin(cfg_.page_boxquery_prob)) specs.push_back({SampleSpec::BoxQuery, pi, rng()});
    }
    for (int ei : train_elems)
      if (coin(cfg_.element_prob)) specs.push_back({SampleSpec::Element, ei, 0});
    std::shuffle(specs.begin(), specs.end(), rng);
    total_steps += int64_t((specs.size() + size_t(cfg_.batch_size) - 1) / size_t(cfg_.batch_size));
    plans.push_back(std::move(specs));
  }

  // fixed held-out probe: layout on held-out pages plus held-out elements
  std::vector<TrainSample> heldout_batchable;
  for (int pi : heldout_pages) {
    if (heldout_batchable.size() >= 12) break;
    if (auto s = loader.build({SampleSpec::Layout, pi, 0})) heldout_batchable.push_back(*s);
  }
  for (int ei : heldout_elems) {
    if (heldout_batchable.size() >= 24) break;
    if (auto s = loader.build({SampleSpec::Element, ei, 0})) heldout_batchable.push_back(*s);
  }

  OptimizerConfig opt;
  opt.lr = cfg_.lr;
  OptimizerState state;
  std::vector<EpochStats> history;
  int64_t step = 0;

  for (int e = 0; e < cfg_.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& specs = plans[size_t(e)];
    double loss_sum = 0.0;
    int n_batches = 0;
    std::vector<TrainSample> batch;
    auto flush = [&] {
      if (batch.empty()) return;
      const float lr = lr_at(cfg_, step, total_steps);
      try {
        loss_sum += double(model_.train_step(batch, opt, state, lr));
      } catch (const NonFiniteLoss& ex) {
        throw NonFiniteLoss(std::string(ex.what()) + " (epoch " + std::to_string(e) +
                            ", batch " + std::to_string(n_batches) + ")");
      }
      ++step;
      ++n_batches;
      if (log && cfg_.log_every > 0 && n_batches % cfg_.log_every == 0)
        *log << "epoch " << e << " batch " << n_batches << " loss "
             << loss_sum / n_batches << " lr " << lr << std::endl;
      batch.clear();
    };
    for (const auto& spec : specs) {
      if (auto s = loader.build(spec)) batch.push_back(std::move(*s));
      if (int(batch.size()) == cfg_.batch_size) flush();
    }
    flush();

    EpochStats st;
    st.epoch = e;
    st.n_batches = n_batches;
    st.train_loss = n_batches ? loss_sum / n_batches : 0.0;
    if (!heldout_batchable.empty()) {
      double hl = 0.0;
      int hb = 0;
      for (size_t i = 0; i < heldout_batchable.size(); i += size_t(cfg_.batch_size)) {
        std::vector<TrainSample> hb_batch(
            heldout_batchable.begin() + long(i),
            heldout_batchable.begin() +
                long(std::min(heldout_batchable.size(), i + size_t(cfg_.batch_size))));
        hl += double(model_.eval_loss(hb_batch));
        ++hb;
      }
      st.heldout_loss = hl / hb;
    }
    if (cfg_.heldout_ed_pages > 0 && !heldout_pages.empty()) {
      PipelineConfig pc;
      pc.max_len = std::min(model_.config().max_seq_len, 384);
      const Pipeline pipe(model_, pc);
      double ed_sum = 0.0;
      int n_ed = 0;
      for (int k = 0; k < cfg_.heldout_ed_pages && k < int(heldout_pages.size()); ++k) {
        const int pi = heldout_pages[size_t(k)];
        const PageImage img = read_image(
            (fs::path(cfg_.corpus_dir) / manifest.page_files[size_t(pi)]).string());
        const GroundTruth gt = GroundTruth::from_json(
            slurp(fs::path(cfg_.corpus_dir) / manifest.gt_files[size_t(pi)]));
        ParsedDocument gt_doc;
        for (size_t g2 = 0; g2 < gt.layout.elements.size(); ++g2) {
          ParsedElement pe;
          pe.element = gt.layout.elements[g2];
          pe.content = g2 < gt.contents.size() ? gt.contents[g2] : "";
          gt_doc.elements.push_back(std::move(pe));
        }
        const ParsedDocument pred = pipe.parse_document(img);
        ed_sum += edit_distance(assemble_markdown(pred), assemble_markdown(gt_doc)).normalized;
        ++n_ed;
      }
      st.heldout_ed = n_ed ? ed_sum / n_ed : 1.0;
    }
    st.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log)
      *log << "epoch " << e << " done: train " << st.train_loss << " heldout "
           << st.heldout_loss << " heldout_ed " << st.heldout_ed << " ("
           << st.seconds << "s, " << n_batches << " batches)" << std::endl;
    if (!cfg_.checkpoint_path.empty()) model_.save(cfg_.checkpoint_path);
    history.push_back(st);
  }
  return history;
}

}  // namespace dolphin
