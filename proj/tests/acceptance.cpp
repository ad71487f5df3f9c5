// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "mose/decoder.hpp"
#include "mose/ensemble.hpp"
#include "mose/evaluator.hpp"
#include "mose/run.hpp"
#include "mose/synth.hpp"
#include "mose/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace {

using namespace mose;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(const std::string& name, Outcome& o) {
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ":" << o.detail.str() << "\n"
            << std::flush;
  if (!o.pass) ++failures;
}

struct Cli {
  int code = -1;
  std::string out;
};

Cli cli(const std::string& args) {
  const std::string cmd = std::string(MOSE_CLI_PATH) + " " + args;
  Cli r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

void gradient_suite() {
  Outcome o;
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> pick(0, 1 << 20);
  const std::vector<double> temps{0.5, 1, 2, 4, 8, 16, 32};
  double worst_model = 0.0, worst_meta = 0.0;
  std::size_t checked = 0;
  const int instances = 60;

  for (int inst = 0; inst < instances; ++inst) {
    const std::size_t entities = 4 + pick(rng) % 5;
    const std::size_t slots = 2 * (1 + pick(rng) % 3);
    InitOptions init;
    init.seed = static_cast<std::uint64_t>(inst);
    init.dim = 2 + pick(rng) % 3;
    init.num_entities = entities;
    init.num_relation_slots = slots;
    init.tie_relations = inst % 3 == 0;
    init.scale = 0.4;
    FeatureBank bank;
    bank.visual = std::make_shared<FeatureMatrix>(
        testing::random_matrix(entities, 3 + pick(rng) % 4, rng));
    bank.text = std::make_shared<FeatureMatrix>(
        testing::random_matrix(entities, 3 + pick(rng) % 4, rng));
    auto params = ModelParams::initialize(init, bank);

    TrainConfig config;
    config.temperature = temps[static_cast<std::size_t>(inst) % temps.size()];
    config.n3_weight = inst % 2 ? 0.02 : 0.0;
    if (inst % 5 == 4) config.loss_terms = {false, true, true};
    std::vector<Triple> batch;
    for (std::size_t b = 0, n = 1 + pick(rng) % 4; b < n; ++b) {
      batch.push_back({static_cast<EntityId>(pick(rng) % entities),
                       static_cast<RelationId>(pick(rng) % slots),
                       static_cast<EntityId>(pick(rng) % entities)});
    }

    auto grads = compute_batch_gradients(params, batch, config);
    o.require(std::abs(grads.loss.total() - oracle::full_loss(params, batch, config)) <
                  1e-10,
              "forward loss differs from oracle");
    for (std::size_t k = 0; k < params.tensors().size(); ++k) {
      for (std::size_t i = 0; i < params.tensors()[k].size(); ++i) {
        double& x = params.tensors()[k].data[i];
        const double keep = x, h = 1e-5;
        x = keep + h;
        const double plus = oracle::full_loss(params, batch, config);
        x = keep - h;
        const double minus = oracle::full_loss(params, batch, config);
        x = keep;
        worst_model = std::max(
            worst_model,
            testing::rel_error(grads.grads[k].data[i], (plus - minus) / (2 * h)));
        ++checked;
      }
    }

    const std::size_t hidden = 2 + pick(rng) % 8, candidates = 5 + pick(rng) % 8;
    auto mlp = MetaLearnerParams::zeros(3, hidden);
    for (double* v : mlp.flat()) *v = std::normal_distribution<double>(0, 0.7)(rng);
    auto inputs = testing::random_matrix(candidates, 3, rng);
    std::vector<std::uint8_t> mask(candidates, 1);
    mask[pick(rng) % candidates] = 0;
    const auto gold = static_cast<EntityId>(pick(rng) % candidates);
    auto g = MetaLearnerParams::zeros(3, hidden);
    metalearner_query_loss(mlp, inputs, mask, gold, &g);
    auto flat = mlp.flat();
    auto flat_g = g.flat();
    for (std::size_t k = 0; k < flat.size(); ++k) {
      const double keep = *flat[k], h = 1e-5;
      *flat[k] = keep + h;
      const double plus = oracle::mlp_query_loss(mlp, inputs, mask, gold);
      *flat[k] = keep - h;
      const double minus = oracle::mlp_query_loss(mlp, inputs, mask, gold);
      *flat[k] = keep;
      worst_meta = std::max(worst_meta,
                            testing::rel_error(*flat_g[k], (plus - minus) / (2 * h)));
      ++checked;
    }
  }
  const double elapsed = seconds_since(start);
  o.detail << " instances=" << instances << " coordinates=" << checked
           << " max_rel_err_model=" << worst_model
           << " max_rel_err_meta=" << worst_meta << " time=" << elapsed << "s";
  o.require(worst_model < 1e-4, "model gradient error >= 1e-4");
  o.require(worst_meta < 1e-4, "meta-learner gradient error >= 1e-4");
  o.require(elapsed < 30.0, "runtime >= 30s");
  report("gradient_suite", o);
}

// ---------------------------------------------------------------------------

std::size_t sort_oracle_rank(const std::vector<double>& scores, EntityId gold,
                             std::span<const EntityId> filter) {
  std::vector<EntityId> kept;
  for (EntityId e = 0; e < scores.size(); ++e)
    if (e == gold || std::find(filter.begin(), filter.end(), e) == filter.end())
      kept.push_back(e);
  std::sort(kept.begin(), kept.end(), [&](EntityId a, EntityId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if ((a == gold) != (b == gold)) return a == gold;
    return a < b;
  });
  return static_cast<std::size_t>(std::find(kept.begin(), kept.end(), gold) -
                                  kept.begin()) +
         1;
}

void oracle_equivalence() {
  Outcome o;
  auto kg = testing::random_toy_kg(20, 4, 200, 99);
  auto filter = build_filter_index(kg.store);
  InitOptions init;
  init.seed = 5;
  init.dim = 6;
  init.num_entities = 20;
  init.num_relation_slots = 8;
  init.modalities = {Modality::kStructure};
  init.scale = 0.7;
  auto params = ModelParams::initialize(init, {});

  // Queries cycle through every stored triple; scores come from the model
  // (rounded to force ties) and from random draws.
  std::vector<Triple> all = kg.store.train;
  all.insert(all.end(), kg.store.valid.begin(), kg.store.valid.end());
  all.insert(all.end(), kg.store.test.begin(), kg.store.test.end());
  std::mt19937_64 rng(100);
  std::size_t mismatches = 0;
  for (std::size_t c = 0; c < 1000; ++c) {
    const Triple& t = all[c % all.size()];
    std::vector<double> s =
        decoder::score_all_tails(params, Modality::kStructure, t.head, t.relation);
    if (c % 3 == 1)
      for (double& v : s) v = std::round(v * 2.0);
    if (c % 3 == 2) s = testing::random_vector(20, rng);
    auto tails = filter.tails(t.head, t.relation);
    mismatches += filtered_rank(s, t.tail, tails) != sort_oracle_rank(s, t.tail, tails);
  }
  o.detail << " rank_cases=1000 mismatches=" << mismatches;
  o.require(mismatches == 0, "rank mismatch");

  double worst = 0.0;
  for (std::size_t n : {5u, 20u, 100u}) {
    init.num_entities = n;
    init.seed = n;
    auto p = ModelParams::initialize(init, {});
    std::vector<Triple> queries;
    for (EntityId h = 0; h < n; h += 3)
      queries.push_back({h, static_cast<RelationId>(h % 8), 0});
    auto batched = decoder::score_queries(p, Modality::kStructure, queries);
    for (std::size_t b = 0; b < queries.size(); ++b) {
      auto hv = oracle::entity_vector(p, Modality::kStructure, queries[b].head);
      auto rv = oracle::relation_vector(p, Modality::kStructure, queries[b].relation);
      for (EntityId e = 0; e < n; ++e) {
        const double ref = oracle::complex_score(
            hv, rv, oracle::entity_vector(p, Modality::kStructure, e));
        worst = std::max(worst, std::abs(batched.values(b, e) - ref));
      }
    }
  }
  o.detail << " max_score_abs_err=" << worst;
  o.require(worst < 1e-12, "batched score differs from scalar oracle");
  report("oracle_equivalence", o);
}

// ---------------------------------------------------------------------------

void temperature_invariants() {
  Outcome o;
  const std::vector<double> temps{0.5, 1, 2, 4, 8, 16, 32};
  std::mt19937_64 rng(6);
  std::size_t argmax_violations = 0, entropy_violations = 0;
  for (int v = 0; v < 500; ++v) {
    auto s = testing::random_vector(10 + v % 40, rng, 1.0 + v % 7);
    const auto ref = std::max_element(s.begin(), s.end()) - s.begin();
    double prev = -1.0;
    for (double t : temps) {
      auto p = softmax_with_temperature(s, t);
      argmax_violations += (std::max_element(p.begin(), p.end()) - p.begin()) != ref;
      double h = 0.0;
      for (double x : p)
        if (x > 0.0) h -= x * std::log(x);
      entropy_violations += h < prev;
      prev = h;
    }
  }
  o.detail << " vectors=500 temperatures=7 argmax_violations=" << argmax_violations
           << " entropy_violations=" << entropy_violations;
  o.require(argmax_violations == 0, "argmax changed with T");
  o.require(entropy_violations == 0, "entropy decreased with T");
  report("temperature_invariants", o);
}

// ---------------------------------------------------------------------------

void memorization(const std::filesystem::path& root) {
  Outcome o;
  const auto data = root / "mem_data", run = root / "mem_run";
  std::ofstream(root / "mem.json")
      << R"({"train":{"dim":32,"learning_rate":0.05,"max_epochs":200,"patience":-1,"keep_best":false}})";
  const auto start = Clock::now();
  o.require(cli("--threads 1 synth random --seed 7 --out " + data.string()).code == 0,
            "synth");
  o.require(cli("--threads 1 ingest --data " + data.string() + " --out " +
                run.string())
                    .code == 0,
            "ingest");
  o.require(cli("--threads 1 train --run " + run.string() + " --config " +
                (root / "mem.json").string())
                    .code == 0,
            "train");
  const double elapsed = seconds_since(start);
  auto eval = cli("--threads 1 evaluate --run " + run.string() +
                  " --inference single:structure --split train");
  o.require(eval.code == 0, "evaluate");
  double hits1 = 0.0;
  try {
    auto j = nlohmann::json::parse(slurp(run / "metrics.json"));
    hits1 = j["train"]["single:structure"]["both"]["hits@1"].get<double>();
  } catch (const std::exception& e) {
    o.require(false, e.what());
  }
  o.detail << " d=32 epochs=200 train_hits@1=" << hits1 << " train_time=" << elapsed
           << "s threads=1";
  o.require(hits1 >= 0.95, "hits@1 < 0.95");
  o.require(elapsed < 60.0, "runtime >= 60s");
  report("memorization_benchmark", o);
}

// ---------------------------------------------------------------------------

struct ComplementaryRun {
  std::map<std::string, double> hits1;
  std::string weights;
  std::string metrics;
  bool ok = true;
};

ComplementaryRun complementary_pipeline(const std::filesystem::path& root,
                                        const std::string& tag) {
  ComplementaryRun r;
  const auto data = root / (tag + "_data"), run = root / (tag + "_run");
  std::ofstream(root / "comp.json")
      << R"({"train":{"dim":16,"batch_size":100,"max_epochs":300,"patience":20}})";
  auto step = [&](const std::string& args) {
    if (cli(args).code != 0) r.ok = false;
  };
  step("synth complementary --seed 7 --out " + data.string());
  step("ingest --data " + data.string() + " --out " + run.string());
  step("train --run " + run.string() + " --config " + (root / "comp.json").string() +
       " --seed 7");
  step("fit-ensemble --run " + run.string() + " --method bi");
  step("fit-ensemble --run " + run.string() + " --method mi");
  for (std::string mode :
       {"single:structure", "single:visual", "single:text", "ai", "bi", "mi"})
    step("evaluate --run " + run.string() + " --inference " + mode + " --split test");
  auto w = cli("export-weights --run " + run.string());
  r.ok = r.ok && w.code == 0;
  r.weights = w.out;
  r.metrics = slurp(run / "metrics.json");
  try {
    auto j = nlohmann::json::parse(r.metrics);
    for (auto& [mode, v] : j["test"].items())
      r.hits1[mode] = v["both"]["hits@1"].get<double>();
  } catch (const std::exception&) {
    r.ok = false;
  }
  return r;
}

void complementary(const std::filesystem::path& root) {
  Outcome o;
  auto a = complementary_pipeline(root, "comp_a");
  auto b = complementary_pipeline(root, "comp_b");
  o.require(a.ok && b.ok, "pipeline step failed");
  const double best_single = std::max(
      {a.hits1["single:structure"], a.hits1["single:visual"], a.hits1["single:text"]});
  o.detail << " test_hits@1 structure=" << a.hits1["single:structure"]
           << " visual=" << a.hits1["single:visual"]
           << " text=" << a.hits1["single:text"] << " ai=" << a.hits1["ai"]
           << " bi=" << a.hits1["bi"] << " mi=" << a.hits1["mi"];
  o.require(a.hits1["bi"] >= best_single, "bi below best single modality");
  o.require(a.hits1["mi"] >= best_single, "mi below best single modality");

  std::map<std::string, std::vector<double>> weights;
  std::istringstream in(a.weights);
  for (std::string line; std::getline(in, line);) {
    std::istringstream row(line);
    std::string label;
    std::vector<double> w(3);
    row >> label >> w[0] >> w[1] >> w[2];
    weights[label] = w;
  }
  auto argmax = [](const std::vector<double>& w) {
    return std::max_element(w.begin(), w.end()) - w.begin();
  };
  const bool visual_ok = weights.count("visual_rel") && argmax(weights["visual_rel"]) == 1;
  const bool text_ok = weights.count("text_rel") && argmax(weights["text_rel"]) == 2;
  o.detail << " bi_argmax visual_rel=" << (visual_ok ? "visual" : "other")
           << " text_rel=" << (text_ok ? "text" : "other");
  o.require(visual_ok, "visual_rel weight not maximal on visual");
  o.require(text_ok, "text_rel weight not maximal on text");
  const bool same = a.metrics == b.metrics && a.weights == b.weights;
  o.detail << " rerun_identical=" << (same ? "yes" : "no");
  o.require(same, "rerun differs");
  report("complementary_benchmark", o);
}

// ---------------------------------------------------------------------------

void rankboost_invariants(const std::filesystem::path& root) {
  Outcome o;
  std::vector<double> d(4, 0.25);
  std::vector<std::int8_t> h{1, 1, 1, -1};
  const double w = rankboost_candidate_weight(d, h, 1e-10);
  o.detail << " fixture_weight=" << w;
  o.require(std::abs(w - 0.5 * std::log(3.0)) < 1e-9, "3-of-4 weight");

  // Meta-set from a briefly trained model on the random fixture.
  synth::generate_random_kg({}, root / "rb_data");
  auto data = load_dataset_dir(root / "rb_data");
  auto filter = build_filter_index(data.store);
  TrainConfig config;
  config.dim = 8;
  config.max_epochs = 5;
  config.seed = 3;
  InitOptions init;
  init.seed = 3;
  init.dim = 8;
  init.num_entities = data.vocab.num_entities();
  init.num_relation_slots = 2 * data.vocab.num_relations();
  auto fitted = fit(data.store, filter, ModelParams::initialize(init, data.features),
                    config);
  auto scores = modality_scores(fitted.params, data.store.valid);
  auto result = fit_rankboost(data.store.valid, scores, filter, {});
  double worst_sum = 0.0, min_mass = 1.0;
  std::size_t bad_selection = 0;
  for (const auto& trace : result.traces) {
    std::vector<int> picks(3, 0);
    for (const auto& round : trace.rounds) {
      worst_sum = std::max(worst_sum, std::abs(round.distribution_sum - 1.0));
      min_mass = std::min(min_mass, round.distribution_min);
      ++picks[index_of(round.chosen)];
    }
    bad_selection += trace.num_pairs > 0 && picks != std::vector<int>{1, 1, 1};
  }
  o.detail << " relations=" << result.traces.size()
           << " max_|sum-1|=" << worst_sum << " min_mass=" << min_mass
           << " bad_selection=" << bad_selection;
  o.require(worst_sum <= 1e-9, "distribution sum");
  o.require(min_mass >= 0.0, "negative mass");
  o.require(bad_selection == 0, "modality not chosen exactly once");

  // Tied relation tables through training and a checkpointed CLI run.
  config.tie_relations = true;
  init.tie_relations = true;
  auto tied = fit(data.store, filter, ModelParams::initialize(init, data.features),
                  config);
  bool identical = true;
  for (auto m : {Modality::kVisual, Modality::kText})
    identical = identical && tied.params.relation_table(m) ==
                                 tied.params.relation_table(Modality::kStructure);
  o.detail << " tied_tables_identical=" << (identical ? "yes" : "no");
  o.require(identical, "tied tables diverged");
  report("rankboost_invariants", o);
}

// ---------------------------------------------------------------------------

void determinism(const std::filesystem::path& root) {
  Outcome o;
  std::ofstream(root / "det.json")
      << R"({"train":{"dim":16,"max_epochs":20,"batch_size":128}})";
  std::string metrics[2];
  for (int i = 0; i < 2; ++i) {
    const auto data = root / ("det_data" + std::to_string(i));
    const auto run = root / ("det_run" + std::to_string(i));
    bool ok = cli("synth random --seed 7 --out " + data.string()).code == 0;
    ok = ok && cli("ingest --data " + data.string() + " --out " + run.string() +
                   " --config " + (root / "det.json").string())
                       .code == 0;
    ok = ok && cli("train --run " + run.string() + " --seed 7").code == 0;
    for (std::string method : {"bi", "mi"})
      ok = ok && cli("fit-ensemble --run " + run.string() + " --method " + method)
                         .code == 0;
    for (std::string mode : {"ai", "bi", "mi", "single:visual"})
      ok = ok && cli("evaluate --run " + run.string() + " --inference " + mode).code == 0;
    o.require(ok, "pipeline step failed");
    metrics[i] = slurp(run / "metrics.json");
  }
  const bool same = !metrics[0].empty() && metrics[0] == metrics[1];
  o.detail << " metrics.json bytes=" << metrics[0].size()
           << " identical=" << (same ? "yes" : "no");
  o.require(same, "metrics.json differs");
  report("determinism", o);
}

}  // namespace

int main() {
  testing::TempDir root("acceptance");
  gradient_suite();
  oracle_equivalence();
  temperature_invariants();
  memorization(root.path());
  complementary(root.path());
  rankboost_invariants(root.path());
  determinism(root.path());
  std::cout << (failures == 0 ? "all criteria passed" : "some criteria failed") << "\n";
  return failures == 0 ? 0 : 1;
}
