#include "mose/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "mose/error.hpp"

namespace mose {

std::size_t filtered_rank(std::span<const double> scores, EntityId gold,
                          std::span<const EntityId> filter_set) {
  if (gold >= scores.size()) {
    throw IndexError("gold id " + std::to_string(gold) + " out of range");
  }
  const double target = scores[gold];
  std::size_t better = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (scores[e] > target) ++better;
  }
  for (EntityId e : filter_set) {
    if (e != gold && e < scores.size() && scores[e] > target) --better;
  }
  return better + 1;
}

RankMetrics RankMetrics::from_ranks(std::span<const std::size_t> ranks) {
  RankMetrics m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  for (auto r : ranks) {
    m.hits1 += r <= 1 ? 1.0 : 0.0;
    m.hits3 += r <= 3 ? 1.0 : 0.0;
    m.hits10 += r <= 10 ? 1.0 : 0.0;
    m.mr += static_cast<double>(r);
    m.mrr += 1.0 / static_cast<double>(r);
  }
  const double n = static_cast<double>(ranks.size());
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  m.mr /= n;
  m.mrr /= n;
  return m;
}

InferenceMode InferenceMode::parse(std::string_view text) {
  if (text == "ai") return average();
  if (text == "bi") return boosting();
  if (text == "mi") return meta_learner();
  constexpr std::string_view kSingle = "single:";
  if (text.starts_with(kSingle)) {
    return single(parse_modality(text.substr(kSingle.size())));
  }
  throw ConfigError("unknown inference mode '" + std::string(text) + "'");
}

std::string InferenceMode::name() const {
  switch (kind) {
    case Kind::kAverage: return "ai";
    case Kind::kBoosting: return "bi";
    case Kind::kMetaLearner: return "mi";
    case Kind::kSingle: return "single:" + std::string(to_string(modality));
  }
  return "?";
}

std::vector<ScoreTensor> modality_scores(const ModelParams& params,
                                         std::span<const Triple> queries) {
  std::vector<ScoreTensor> out;
  for (auto m : params.modalities()) {
    out.push_back(decoder::score_queries(params, m, queries));
  }
  return out;
}

Matrix fused_scores(const ModelParams& params, std::span<const Triple> queries,
                    const InferenceMode& mode, const EnsembleModel* ensemble) {
  using Kind = InferenceMode::Kind;
  switch (mode.kind) {
    case Kind::kSingle:
      return decoder::score_queries(params, mode.modality, queries).values;
    case Kind::kAverage:
      return combine_average(modality_scores(params, queries)).values;
    case Kind::kBoosting:
      if (ensemble == nullptr || !ensemble->boosting) {
        throw StateError("boosting inference requested before fit-ensemble --method bi");
      }
      return combine_boosting(modality_scores(params, queries), queries,
                              *ensemble->boosting)
          .values;
    case Kind::kMetaLearner:
      if (ensemble == nullptr || !ensemble->meta) {
        throw StateError("meta-learner inference requested before fit-ensemble --method mi");
      }
      return combine_metalearner(modality_scores(params, queries), *ensemble->meta)
          .values;
  }
  throw ConfigError("unknown inference mode");
}

MetricsReport evaluate(std::span<const Triple> queries,
                       const ModelParams& params, const FilterIndex& filter,
                       const InferenceMode& mode, const EnsembleModel* ensemble,
                       std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("evaluation batch size must be >= 1");
  // Fail on a missing ensemble even for an empty split.
  if (mode.kind == InferenceMode::Kind::kBoosting && (ensemble == nullptr || !ensemble->boosting)) {
    throw StateError("boosting inference requested before fit-ensemble --method bi");
  }
  if (mode.kind == InferenceMode::Kind::kMetaLearner && (ensemble == nullptr || !ensemble->meta)) {
    throw StateError("meta-learner inference requested before fit-ensemble --method mi");
  }
  MetricsReport report;
  report.ranks.resize(queries.size());
  for (std::size_t start = 0; start < queries.size(); start += batch_size) {
    const auto chunk =
        queries.subspan(start, std::min(batch_size, queries.size() - start));
    const Matrix scores = fused_scores(params, chunk, mode, ensemble);
    const auto rows = static_cast<std::ptrdiff_t>(chunk.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bi = 0; bi < rows; ++bi) {
      const auto b = static_cast<std::size_t>(bi);
      const auto& q = chunk[b];
      report.ranks[start + b] =
          filtered_rank(scores.row(b), q.tail, filter.tails(q.head, q.relation));
    }
  }

  const std::size_t base = params.num_relation_slots() / 2;
  std::vector<std::size_t> tail_ranks, head_ranks;
  std::map<RelationId, std::vector<std::size_t>> per_relation;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    (queries[i].relation < base ? tail_ranks : head_ranks).push_back(report.ranks[i]);
    per_relation[queries[i].relation].push_back(report.ranks[i]);
  }
  report.overall = RankMetrics::from_ranks(report.ranks);
  report.tail = RankMetrics::from_ranks(tail_ranks);
  report.head = RankMetrics::from_ranks(head_ranks);
  for (const auto& [r, ranks] : per_relation) {
    report.by_relation[r] = RankMetrics::from_ranks(ranks);
  }
  return report;
}

nlohmann::ordered_json to_json(const RankMetrics& m) {
  nlohmann::ordered_json j;
  j["count"] = m.count;
  j["hits@1"] = m.hits1;
  j["hits@3"] = m.hits3;
  j["hits@10"] = m.hits10;
  j["mr"] = m.mr;
  j["mrr"] = m.mrr;
  return j;
}

nlohmann::ordered_json to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["both"] = to_json(report.overall);
  j["tail"] = to_json(report.tail);
  j["head"] = to_json(report.head);
  return j;
}

namespace {

void tsv_row(std::ostringstream& out, const std::string& label,
             const std::string& direction, const RankMetrics& m) {
  out << label << '\t' << direction << '\t' << m.count << '\t' << std::fixed
      << std::setprecision(4) << m.hits1 << '\t' << m.hits3 << '\t' << m.hits10
      << '\t' << std::llround(m.mr) << '\t' << m.mrr << '\n';
}

}  // namespace

std::string metrics_tsv(const std::string& label, const MetricsReport& report) {
  std::ostringstream out;
  out << "mode\tdirection\tcount\thits@1\thits@3\thits@10\tmr\tmrr\n";
  tsv_row(out, label, "both", report.overall);
  tsv_row(out, label, "tail", report.tail);
  tsv_row(out, label, "head", report.head);
  return out.str();
}

std::vector<double> default_temperature_grid() {
  return {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
}

std::vector<SweepRow> temperature_sweep(const TripleStore& store,
                                        const FilterIndex& filter,
                                        const FeatureBank& features,
                                        const InitOptions& init_template,
                                        const TrainConfig& base,
                                        std::span<const double> temperatures,
                                        Split eval_split) {
  if (temperatures.empty()) throw ConfigError("empty temperature grid");
  for (double t : temperatures) {
    if (!(t > 0.0)) throw ConfigError("temperatures must be > 0");
  }
  std::vector<SweepRow> rows;
  for (double t : temperatures) {
    TrainConfig config = base;
    config.temperature = t;
    InitOptions init = init_template;
    init.seed = config.seed;
    init.dim = config.dim;
    init.modalities = config.modalities;
    init.tie_relations = config.tie_relations;
    init.scale = config.init_scale;
    auto trained = fit(store, filter, ModelParams::initialize(init, features), config);
    rows.push_back({t, evaluate(store.split(eval_split), trained.params, filter,
                                InferenceMode::average(), nullptr,
                                config.eval_batch_size)});
  }
  return rows;
}

std::string sweep_tsv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "temperature\thits@1\thits@3\thits@10\tmr\tmrr\n";
  for (const auto& row : rows) {
    const auto& m = row.report.overall;
    out << row.temperature << '\t' << std::fixed << std::setprecision(4)
        << m.hits1 << '\t' << m.hits3 << '\t' << m.hits10 << '\t'
        << std::llround(m.mr) << '\t' << m.mrr << '\n';
    out.unsetf(std::ios::fixed);
  }
  return out.str();
}

}  // namespace mose
