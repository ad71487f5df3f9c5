#include "mose/checkpoint.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "binary_io.hpp"
#include "mose/error.hpp"

namespace mose {

std::uint64_t config_hash(const nlohmann::json& config) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

struct BlockWriter {
  nlohmann::json index = nlohmann::json::array();
  std::vector<const std::vector<double>*> payloads;
  std::vector<std::vector<double>> owned;

  void add(const std::string& name, std::size_t rows, std::size_t cols,
           const std::vector<double>& data) {
    index.push_back({{"name", name}, {"rows", rows}, {"cols", cols}});
    payloads.push_back(&data);
  }
  void add(const std::string& name, const Matrix& m) {
    add(name, m.rows, m.cols, m.data);
  }
  void add_owned(const std::string& name, std::size_t rows, std::size_t cols,
                 std::vector<double> data) {
    owned.push_back(std::move(data));
    index.push_back({{"name", name}, {"rows", rows}, {"cols", cols}});
    payloads.push_back(nullptr);
  }
};

struct Block {
  std::string name;
  Matrix data;
};

class BlockReader {
 public:
  explicit BlockReader(std::vector<Block> blocks) : blocks_(std::move(blocks)) {}

  Matrix take(const std::string& name) {
    if (next_ >= blocks_.size() || blocks_[next_].name != name) {
      throw FormatError("checkpoint block '" + name + "' missing or out of order");
    }
    return std::move(blocks_[next_++].data);
  }
  std::vector<double> take_vector(const std::string& name) {
    return take(name).data;
  }
  void expect_done() const {
    if (next_ != blocks_.size()) throw FormatError("unexpected checkpoint blocks");
  }

 private:
  std::vector<Block> blocks_;
  std::size_t next_ = 0;
};

nlohmann::json modality_names(const std::vector<Modality>& modalities) {
  auto out = nlohmann::json::array();
  for (auto m : modalities) out.push_back(std::string(to_string(m)));
  return out;
}

std::vector<Modality> parse_modalities(const nlohmann::json& j) {
  std::vector<Modality> out;
  for (const auto& name : j) out.push_back(parse_modality(name.get<std::string>()));
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto& params = ckpt.params;
  BlockWriter blocks;
  for (std::size_t i = 0; i < params.tensors().size(); ++i) {
    blocks.add(params.tensor_names()[i], params.tensors()[i]);
  }
  if (!ckpt.optimizer.accumulators.empty()) {
    if (ckpt.optimizer.accumulators.size() != params.tensors().size()) {
      throw ShapeError("optimizer state does not mirror the parameters");
    }
    for (std::size_t i = 0; i < params.tensors().size(); ++i) {
      blocks.add("adagrad/" + params.tensor_names()[i],
                 ckpt.optimizer.accumulators[i]);
    }
  }

  nlohmann::json sections = nlohmann::json::object();
  if (ckpt.has_average) sections["AI"] = {{"uniform", true}};
  if (ckpt.boosting) {
    const auto& bw = *ckpt.boosting;
    auto relations = nlohmann::json::array();
    std::vector<double> weights;
    for (const auto& [r, w] : bw.per_relation) {
      relations.push_back(r);
      weights.insert(weights.end(), w.begin(), w.end());
    }
    sections["BI"] = {{"modalities", modality_names(bw.modalities)},
                      {"relations", relations}};
    blocks.add_owned("BI/weights", bw.per_relation.size(), bw.modalities.size(),
                     std::move(weights));
    blocks.add("BI/fallback", 1, bw.fallback.size(), bw.fallback);
  }
  if (ckpt.meta) {
    const auto& ml = *ckpt.meta;
    sections["MI"] = {{"modalities", modality_names(ml.modalities)},
                      {"hidden", ml.params.hidden}};
    blocks.add("MI/mean", 1, ml.standardizer.mean.size(), ml.standardizer.mean);
    blocks.add("MI/stddev", 1, ml.standardizer.stddev.size(), ml.standardizer.stddev);
    blocks.add("MI/w1", ml.params.w1);
    blocks.add("MI/b1", 1, ml.params.b1.size(), ml.params.b1);
    blocks.add("MI/w2", ml.params.w2);
    blocks.add("MI/b2", 1, ml.params.b2.size(), ml.params.b2);
  }

  nlohmann::json header;
  header["config"] = ckpt.config;
  header["config_hash"] = hex(config_hash(ckpt.config));
  header["num_entities"] = ckpt.num_entities;
  header["num_base_relations"] = ckpt.num_base_relations;
  header["dim"] = params.dim();
  header["modalities"] = modality_names(params.modalities());
  header["tie_relations"] = params.tied();
  header["epoch"] = ckpt.epoch;
  header["seed"] = ckpt.seed;
  header["rng_state"] = ckpt.rng_state;
  header["sections"] = sections;
  header["blocks"] = blocks.index;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  detail::write_magic(out, "MSEC");
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::size_t owned = 0;
  for (const auto* payload : blocks.payloads) {
    const auto& data = payload != nullptr ? *payload : blocks.owned[owned++];
    for (double v : data) detail::write_le<double>(out, v);
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const FeatureBank& features) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string what = path.string();
  detail::expect_magic(in, "MSEC", what);
  const auto version = detail::read_le<std::uint32_t>(in, what);
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  const auto length = detail::read_le<std::uint64_t>(in, what);
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
    throw FormatError("truncated checkpoint header in " + what);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad checkpoint header: " + e.what());
  }

  std::vector<Block> raw;
  try {
    for (const auto& b : header.at("blocks")) {
      Block block{b.at("name").get<std::string>(),
                  Matrix(b.at("rows").get<std::size_t>(), b.at("cols").get<std::size_t>())};
      for (auto& v : block.data.data) v = detail::read_le<double>(in, what + " payload");
      raw.push_back(std::move(block));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad block index: " + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(what + ": trailing bytes after payload");
  }

  Checkpoint ckpt;
  try {
    ckpt.config = header.at("config");
    if (header.at("config_hash").get<std::string>() != hex(config_hash(ckpt.config))) {
      throw FormatError(what + ": config hash mismatch");
    }
    ckpt.num_entities = header.at("num_entities").get<std::size_t>();
    ckpt.num_base_relations = header.at("num_base_relations").get<std::size_t>();
    ckpt.epoch = header.at("epoch").get<std::size_t>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    const auto modalities = parse_modalities(header.at("modalities"));
    const bool tied = header.at("tie_relations").get<bool>();
    const auto dim = header.at("dim").get<std::size_t>();
    const auto& sections = header.at("sections");

    const auto layout = ModelParams::tensor_layout(modalities, tied);
    const bool has_optimizer =
        raw.size() > layout.size() && raw[layout.size()].name.starts_with("adagrad/");
    BlockReader reader(std::move(raw));
    std::vector<Matrix> tensors;
    for (const auto& name : layout) tensors.push_back(reader.take(name));
    ckpt.params = ModelParams::from_tensors(dim, ckpt.num_entities,
                                            2 * ckpt.num_base_relations, modalities,
                                            tied, std::move(tensors), features);
    if (has_optimizer) {
      for (const auto& name : ckpt.params.tensor_names()) {
        ckpt.optimizer.accumulators.push_back(reader.take("adagrad/" + name));
      }
    }
    ckpt.has_average = sections.contains("AI");
    if (sections.contains("BI")) {
      const auto& bi = sections.at("BI");
      RelationWeights w;
      w.modalities = parse_modalities(bi.at("modalities"));
      Matrix weights = reader.take("BI/weights");
      const auto relations = bi.at("relations").get<std::vector<RelationId>>();
      if (weights.rows != relations.size()) throw FormatError("BI block size mismatch");
      for (std::size_t i = 0; i < relations.size(); ++i) {
        auto row = weights.row(i);
        w.per_relation[relations[i]] = {row.begin(), row.end()};
      }
      w.fallback = reader.take_vector("BI/fallback");
      ckpt.boosting = std::move(w);
    }
    if (sections.contains("MI")) {
      const auto& mi = sections.at("MI");
      MetaLearner ml;
      ml.modalities = parse_modalities(mi.at("modalities"));
      ml.standardizer.mean = reader.take_vector("MI/mean");
      ml.standardizer.stddev = reader.take_vector("MI/stddev");
      ml.params.hidden = mi.at("hidden").get<std::size_t>();
      ml.params.w1 = reader.take("MI/w1");
      ml.params.b1 = reader.take_vector("MI/b1");
      ml.params.w2 = reader.take("MI/w2");
      ml.params.b2 = reader.take_vector("MI/b2");
      ckpt.meta = std::move(ml);
    }
    reader.expect_done();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad checkpoint header: " + e.what());
  }
  return ckpt;
}

}  // namespace mose
