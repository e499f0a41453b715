// Checkpoint file layout:
//   bytes 0..7   magic "DOLCK001"
//   bytes 8..15  uint64 little-endian length of the JSON header
//   header       UTF-8 JSON: {"config":{...},"vocab":[tokens...],
//                "params":[{"name","rows","cols","offset"}...]}
//   data         float32 little-endian, row-major, at header-relative offsets
#include <cstring>
#include <fstream>

#include "dolphin/model.hpp"
#include "json.hpp"

namespace dolphin {

namespace {
constexpr char kMagic[8] = {'D', 'O', 'L', 'C', 'K', '0', '0', '1'};
}

void Model::save(const std::string& path) const {
  nlohmann::ordered_json header;
  header["config"] = nlohmann::ordered_json::parse(cfg_.to_json());
  header["vocab"] = nlohmann::ordered_json::array();
  for (TokenId i = 0; i < vocab_.size(); ++i) header["vocab"].push_back(vocab_.token_of(i));
  header["params"] = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (const auto& [name, w] : params_) {
    nlohmann::ordered_json e;
    e["name"] = name;
    e["rows"] = w.rows();
    e["cols"] = w.cols();
    e["offset"] = offset;
    header["params"].push_back(std::move(e));
    offset += uint64_t(w.size()) * sizeof(float);
  }
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open for writing: " + path);
  out.write(kMagic, 8);
  const uint64_t len = hs.size();
  char lenb[8];
  for (int i = 0; i < 8; ++i) lenb[i] = char(len >> (8 * i));
  out.write(lenb, 8);
  out.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& [name, w] : params_)
    out.write(reinterpret_cast<const char*>(w.data()),
              std::streamsize(size_t(w.size()) * sizeof(float)));
  if (!out) throw CheckpointError("write failed: " + path);
}

Model Model::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw CheckpointError("bad checkpoint magic: " + path);
  char lenb[8];
  in.read(lenb, 8);
  if (!in) throw CheckpointError("truncated checkpoint header: " + path);
  uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= uint64_t(uint8_t(lenb[i])) << (8 * i);
  if (len == 0 || len > (64u << 20)) throw CheckpointError("implausible header length");
  std::string hs(len, '\0');
  in.read(hs.data(), std::streamsize(len));
  if (!in) throw CheckpointError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }

  ModelConfig cfg = ModelConfig::from_json(header.at("config").dump());
  std::vector<std::string> tokens = header.at("vocab").get<std::vector<std::string>>();
  Model model(cfg, Vocabulary::from_tokens(std::move(tokens)));
  if (model.cfg_.vocab_size != cfg.vocab_size)
    throw CheckpointError("vocab size does not match config");

  const std::streampos data_start = in.tellg();
  if (header.at("params").size() != model.params_.size())
    throw CheckpointError("parameter count does not match config");
  for (const auto& e : header.at("params")) {
    const std::string name = e.at("name");
    auto it = model.params_.find(name);
    if (it == model.params_.end())
      throw CheckpointError("unknown parameter in checkpoint: " + name);
    auto& w = it->second;
    if (w.rows() != e.at("rows").get<Eigen::Index>() ||
        w.cols() != e.at("cols").get<Eigen::Index>())
      throw CheckpointError("shape mismatch for parameter: " + name);
    in.seekg(data_start + std::streampos(e.at("offset").get<uint64_t>()));
    in.read(reinterpret_cast<char*>(w.data()),
            std::streamsize(size_t(w.size()) * sizeof(float)));
    if (!in) throw CheckpointError("truncated checkpoint data at: " + name);
  }
  return model;
}

}  // namespace dolphin
