#pragma once

// File-composed pipeline stages behind the CLI subcommands. Every stage reads
// its declared inputs, writes its artifacts atomically and records digests in
// the run manifest; reruns with unchanged inputs are byte-identical.

#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "memlab/corpus/frequency.hpp"
#include "memlab/internals/importance.hpp"
#include "memlab/internals/lens.hpp"
#include "memlab/internals/similarity.hpp"
#include "memlab/memscore/compression.hpp"
#include "memlab/report/config.hpp"
#include "memlab/report/manifest.hpp"
#include "memlab/stats/headsets.hpp"
#include "memlab/stats/profiles.hpp"
#include "memlab/stats/wasserstein.hpp"
#include "memlab/train/trainer.hpp"

namespace memlab::report {

namespace fs = std::filesystem;

namespace detail {

inline std::string producer_hint(const std::string& rel) {
  if (rel.rfind("corpus", 0) == 0) return "gen-corpus";
  if (rel.rfind("models/", 0) == 0) return "train";
  if (rel.rfind("scores/", 0) == 0 && rel.find("alpha0.records") != std::string::npos) return "score";
  if (rel.rfind("scores/", 0) == 0) return "noise";
  if (rel.rfind("similarity/", 0) == 0) return "noise";
  if (rel.rfind("compress/", 0) == 0) return "compress";
  if (rel.rfind("lens/", 0) == 0) return "lens";
  if (rel.rfind("ablate/", 0) == 0) return "ablate";
  if (rel.rfind("stats/", 0) == 0) return "stats";
  return "an earlier stage";
}

}  // namespace detail

// Declares a stage's inputs/outputs against the run manifest.
class StageRunner {
 public:
  StageRunner(const ExperimentConfig& cfg, std::string stage_name)
      : cfg_(cfg),
        manifest_(RunManifest::load_or_empty(cfg.out_dir, hex64(fnv1a64(cfg.raw.serialize())))) {
    entry_.name = std::move(stage_name);
    fs::create_directories(cfg.out_dir);
  }

  const ExperimentConfig& cfg() const { return cfg_; }

  // Declares and resolves an input artifact.
  fs::path in(const std::string& rel) {
    fs::path p = cfg_.out_dir / rel;
    if (!fs::exists(p))
      throw MissingInputError("missing input " + rel + "; run `memlab " +
                              detail::producer_hint(rel) + "` first");
    manifest_.check_input_fresh(rel);
    entry_.inputs[rel] = file_digest(p);
    return p;
  }

  std::string in_text(const std::string& rel) { return read_file(in(rel)); }

  void out(const std::string& rel, const std::string& content) {
    fs::path p = cfg_.out_dir / rel;
    write_file_atomic(p, content);
    entry_.outputs[rel] = hex64(fnv1a64(content));
  }

  void finish() {
    manifest_.record(entry_);
    manifest_.save();
  }

 private:
  const ExperimentConfig& cfg_;
  RunManifest manifest_;
  StageEntry entry_;
};

// --- gen-corpus -------------------------------------------------------------

inline corpus::PlantPlan build_plant_plan(const ExperimentConfig& cfg,
                                          const std::vector<corpus::DomainSpec>& domains) {
  corpus::PlantPlan plan;
  plan.budget_tokens = cfg.budget_tokens;
  plan.min_line_chars = cfg.min_line;
  plan.max_line_chars = cfg.max_line;
  for (const auto& d : domains) {
    auto it = cfg.plan_overrides.find(d.name);
    std::string plan_str = it != cfg.plan_overrides.end() ? it->second : cfg.default_plan;
    for (const auto& [r, count] : parse_plan(plan_str))
      plan.items.push_back({d.name, r, count, ""});
  }
  if (cfg.periodic_plants) {
    std::string loop1(80, 'z');
    std::string loop4;
    for (int i = 0; i < 20; ++i) loop4 += "abcd";
    plan.items.push_back({"brackets", 128, 1, loop1});
    plan.items.push_back({"brackets", 128, 1, loop4});
  }
  return plan;
}

inline void stage_gen_corpus(const ExperimentConfig& cfg) {
  StageRunner stage(cfg, "gen-corpus");
  auto domains = corpus::default_domains(cfg.seed);
  auto [corp, manifest] = corpus::generate_corpus(domains, build_plant_plan(cfg, domains), cfg.seed);
  stage.out("corpus.txt", corpus::corpus_to_text(corp));
  stage.out("corpus.manifest", corpus::manifest_to_text(manifest));
  stage.finish();
}

// --- shared loading helpers --------------------------------------------------

inline corpus::Corpus load_corpus(StageRunner& stage) {
  return corpus::corpus_from_text(stage.in_text("corpus.txt"));
}

inline std::vector<memscore::Probe> load_probes(StageRunner& stage, const corpus::Corpus& corp,
                                                int cap) {
  corpus::CorpusManifest manifest = corpus::manifest_from_text(stage.in_text("corpus.manifest"));
  corpus::resolve_manifest_tokens(manifest, corp);
  std::vector<memscore::Probe> probes = memscore::probes_from_manifest(manifest);
  if (cap > 0 && static_cast<int>(probes.size()) > cap) probes.resize(static_cast<size_t>(cap));
  return probes;
}

inline Transformer load_model(StageRunner& stage, const std::string& tag) {
  return train::load_checkpoint(stage.in("models/" + tag + ".ckpt")).to_model();
}

inline std::string alpha_label(double alpha) { return fmt_g(alpha); }

inline std::string records_rel(const std::string& tag, double alpha) {
  return "scores/" + tag + ".alpha" + alpha_label(alpha) + ".records";
}

// Probes as stored in a record dump (ctx/gold travel with the record).
inline std::vector<memscore::Probe> probes_from_records(const std::vector<memscore::MemRecord>& records) {
  std::vector<memscore::Probe> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back({r.ctx, r.gold, r.domain, r.repetitions, r.example_id});
  return out;
}

struct Cohorts {
  std::vector<memscore::MemRecord> memorized, unmemorized;
};

inline Cohorts split_cohorts(const std::vector<memscore::MemRecord>& records, int cap) {
  Cohorts c;
  for (const auto& r : records) {
    if (r.memorized() && (cap <= 0 || static_cast<int>(c.memorized.size()) < cap))
      c.memorized.push_back(r);
    else if (r.unmemorized() && (cap <= 0 || static_cast<int>(c.unmemorized.size()) < cap))
      c.unmemorized.push_back(r);
  }
  return c;
}

// --- train -------------------------------------------------------------------

inline void stage_train(const ExperimentConfig& cfg, const std::string& family_filter = "",
                        std::ostream* log = nullptr) {
  StageRunner stage(cfg, family_filter.empty() ? "train" : "train." + family_filter);
  corpus::Corpus corp = load_corpus(stage);

  std::ostringstream family_manifest;
  family_manifest << "tag,family,params,recipe\n";
  for (const auto& fam : cfg.families) {
    if (!family_filter.empty() && fam.name != family_filter) continue;
    for (size_t i = 0; i < fam.sizes.size(); ++i) {
      const std::string tag = fam.tag(i);
      train::TrainConfig tc;
      tc.model = fam.sizes[i];
      tc.steps = cfg.steps;
      tc.batch_size = cfg.batch;
      tc.seq_len = cfg.seq_len;
      tc.lr = cfg.lr;
      tc.seed = cfg.seed;
      tc.checkpoint_every = cfg.checkpoint_every;
      tc.tag = tag;
      auto progress = [&](int step, double loss) {
        if (log && (step % 200 == 0 || step + 1 == cfg.steps))
          (*log) << "[train " << tag << "] step " << step << " loss " << fmt_g(loss, 6) << "\n";
      };
      train::TrainResult result = train::train(tc, corp, progress);
      stage.out("models/" + tag + ".ckpt", train::checkpoint_to_bytes(result.checkpoint));
      stage.out("models/" + tag + ".loss.csv", train::loss_curve_to_csv(result.loss_curve));
      family_manifest << tag << "," << fam.name << "," << fam.sizes[i].param_count() << ","
                      << fam.sizes[i].recipe() << "\n";
    }
  }
  stage.out(family_filter.empty() ? "models/family.manifest"
                                  : "models/family." + family_filter + ".manifest",
            family_manifest.str());
  stage.finish();
}

// --- score / noise -------------------------------------------------------------

inline std::vector<memscore::MemRecord> score_probes(const Transformer& model,
                                                     const std::vector<memscore::Probe>& probes,
                                                     const InterventionSpec& spec,
                                                     const corpus::FrequencyIndex* freq, int workers) {
  std::vector<memscore::MemRecord> records(probes.size());
  parallel_for(static_cast<int64_t>(probes.size()), workers, [&](int64_t i) {
    records[static_cast<size_t>(i)] = memscore::memorization_score(model, probes[static_cast<size_t>(i)], spec);
    if (freq) {
      std::vector<int> full = probes[static_cast<size_t>(i)].ctx;
      full.insert(full.end(), probes[static_cast<size_t>(i)].gold.begin(),
                  probes[static_cast<size_t>(i)].gold.end());
      records[static_cast<size_t>(i)].avg_frequency = freq->avg_sequence_frequency(full);
    }
  });
  return records;
}

inline void stage_score(const ExperimentConfig& cfg, const std::string& tag) {
  StageRunner stage(cfg, "score." + tag);
  corpus::Corpus corp = load_corpus(stage);
  std::vector<memscore::Probe> probes = load_probes(stage, corp, cfg.probe_cap);
  Transformer model = load_model(stage, tag);
  corpus::FrequencyIndex freq(corp);
  auto records = score_probes(model, probes, InterventionSpec::none(), &freq, cfg.workers);
  stage.out(records_rel(tag, 0.0), memscore::records_to_text(records));
  stage.finish();
}

inline std::string similarity_csv(const std::vector<internals::SimilarityProfile>& profiles) {
  std::ostringstream out;
  out << "layer,cohort,alpha,attn_mean,attn_var,mlp_mean,mlp_var,samples\n";
  for (const auto& p : profiles)
    for (size_t l = 0; l < p.attn_mean.size(); ++l)
      out << l << "," << p.cohort << "," << fmt_g(p.alpha) << "," << fmt_g(p.attn_mean[l]) << ","
          << fmt_g(p.attn_var[l]) << "," << fmt_g(p.mlp_mean[l]) << "," << fmt_g(p.mlp_var[l])
          << "," << p.sample_count << "\n";
  return out.str();
}

inline void stage_noise(const ExperimentConfig& cfg, const std::string& tag) {
  StageRunner stage(cfg, "noise." + tag);
  corpus::Corpus corp = load_corpus(stage);
  std::vector<memscore::Probe> probes = load_probes(stage, corp, cfg.probe_cap);
  Transformer model = load_model(stage, tag);
  corpus::FrequencyIndex freq(corp);
  auto clean = memscore::records_from_text(stage.in_text(records_rel(tag, 0.0)));
  Cohorts cohorts = split_cohorts(clean, cfg.cohort_cap);
  auto mem_probes = probes_from_records(cohorts.memorized);
  auto unmem_probes = probes_from_records(cohorts.unmemorized);

  RngStream noise_rng = RngStream(cfg.seed).named("noise");
  for (double alpha : cfg.alphas) {
    if (alpha == 0.0) continue;
    InterventionSpec spec = InterventionSpec::noised(alpha, noise_rng, cfg.noise_layer);
    auto records = score_probes(model, probes, spec, &freq, cfg.workers);
    stage.out(records_rel(tag, alpha), memscore::records_to_text(records));

    std::vector<internals::SimilarityProfile> profiles;
    if (!mem_probes.empty())
      profiles.push_back(internals::similarity_profile(model, mem_probes, alpha, noise_rng,
                                                       "memorized", cfg.noise_layer, cfg.workers));
    if (!unmem_probes.empty())
      profiles.push_back(internals::similarity_profile(model, unmem_probes, alpha, noise_rng,
                                                       "unmemorized", cfg.noise_layer, cfg.workers));
    stage.out("similarity/" + tag + ".alpha" + alpha_label(alpha) + ".csv", similarity_csv(profiles));
  }
  stage.finish();
}

// --- compress ------------------------------------------------------------------

inline void stage_compress(const ExperimentConfig& cfg, const std::string& tag) {
  StageRunner stage(cfg, "compress." + tag);
  Transformer model = load_model(stage, tag);
  auto records = memscore::records_from_text(stage.in_text(records_rel(tag, 0.0)));
  std::vector<memscore::MemRecord> memorized;
  for (const auto& r : records) {
    if (!r.memorized()) continue;
    memorized.push_back(r);
    if (cfg.compress_cap > 0 && static_cast<int>(memorized.size()) >= cfg.compress_cap) break;
  }
  struct Row {
    int64_t id;
    std::string domain;
    int reps, k;
    bool monotone;
  };
  std::vector<Row> rows(memorized.size());
  parallel_for(static_cast<int64_t>(memorized.size()), cfg.workers, [&](int64_t i) {
    const auto& rec = memorized[static_cast<size_t>(i)];
    auto pattern = memscore::extraction_pattern(model, rec);
    int k = 0;
    while (k < memscore::kProbeLen && !pattern[static_cast<size_t>(k)]) ++k;
    rows[static_cast<size_t>(i)] = {rec.example_id, rec.domain, rec.repetitions, k + 1,
                                    memscore::pattern_is_monotone(pattern)};
  });
  std::ostringstream out;
  out << "id,domain,r,min_context,ratio,monotone\n";
  for (const auto& row : rows)
    out << row.id << "," << row.domain << "," << row.reps << "," << row.k << ","
        << fmt_g(static_cast<double>(row.k) / memscore::kProbeLen) << ","
        << (row.monotone ? 1 : 0) << "\n";
  stage.out("compress/" + tag + ".csv", out.str());
  stage.finish();
}

// --- lens ------------------------------------------------------------------------

inline void stage_lens(const ExperimentConfig& cfg, const std::string& tag) {
  StageRunner stage(cfg, "lens." + tag);
  Transformer model = load_model(stage, tag);
  auto records = memscore::records_from_text(stage.in_text(records_rel(tag, 0.0)));
  Cohorts cohorts = split_cohorts(records, cfg.cohort_cap);
  std::ostringstream out;
  out << "layer,cohort,mean_gold_prob,samples\n";
  auto emit = [&](const std::vector<memscore::MemRecord>& recs, const std::string& name) {
    if (recs.empty()) return;
    internals::LensCurve curve =
        internals::lens_curve(model, probes_from_records(recs), name, cfg.workers);
    for (size_t l = 0; l < curve.mean_gold_prob.size(); ++l)
      out << (l + 1) << "," << name << "," << fmt_g(curve.mean_gold_prob[l]) << ","
          << curve.sample_count << "\n";
  };
  emit(cohorts.memorized, "memorized");
  emit(cohorts.unmemorized, "unmemorized");
  stage.out("lens/" + tag + ".csv", out.str());
  stage.finish();
}

// --- ablate -----------------------------------------------------------------------

inline void stage_ablate(const ExperimentConfig& cfg, const std::string& tag) {
  StageRunner stage(cfg, "ablate." + tag);
  Transformer model = load_model(stage, tag);
  auto records = memscore::records_from_text(stage.in_text(records_rel(tag, 0.0)));
  std::map<std::string, std::vector<memscore::Probe>> by_domain;
  for (const auto& r : records)
    if (r.memorized()) by_domain[r.domain].push_back({r.ctx, r.gold, r.domain, r.repetitions, r.example_id});
  if (by_domain.empty()) throw Error("ablate: model " + tag + " memorized no probes");

  int cap = cfg.ablate_cap_for(model.config());
  std::map<std::string, std::vector<internals::ImportanceMatrix>> per_example;
  auto domain_mats = internals::domain_importance(model, by_domain, cap, cfg.workers, &per_example);

  std::ostringstream dout;
  dout << "domain,layer,head,importance,match,samples\n";
  for (const auto& [domain, m] : domain_mats)
    for (int l = 0; l < m.layers; ++l)
      for (int h = 0; h < m.heads; ++h)
        dout << domain << "," << l << "," << h << "," << fmt_g(m.importance_at(l, h)) << ","
             << fmt_g(m.match_at(l, h)) << "," << m.sample_count << "\n";
  stage.out("ablate/" + tag + ".domains.csv", dout.str());

  std::ostringstream eout;
  eout << "example,domain,layer,head,importance,match\n";
  for (const auto& [domain, mats] : per_example)
    for (const auto& m : mats)
      for (int l = 0; l < m.layers; ++l)
        for (int h = 0; h < m.heads; ++h)
          eout << m.provenance.substr(m.provenance.find(':') + 1) << "," << domain << "," << l
               << "," << h << "," << fmt_g(m.importance_at(l, h)) << "," << fmt_g(m.match_at(l, h))
               << "\n";
  stage.out("ablate/" + tag + ".examples.csv", eout.str());
  stage.finish();
}

// --- stats -------------------------------------------------------------------------

namespace detail {

struct AblateData {
  std::map<std::string, internals::ImportanceMatrix> domains;
  std::map<std::string, std::vector<internals::ImportanceMatrix>> examples;
  int layers = 0, heads = 0;
};

inline AblateData parse_ablate(const std::string& domains_csv, const std::string& examples_csv) {
  AblateData data;
  auto parse_grid = [&](const std::string& text, bool examples) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    std::map<std::string, std::map<std::pair<int, int>, std::pair<double, double>>> cells;
    std::map<std::string, std::string> example_domain;
    std::map<std::string, int64_t> samples;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split(line, ',');
      std::string key = examples ? f[0] : f[0];
      if (examples) example_domain[key] = f[1];
      int off = examples ? 1 : 0;
      int l = std::stoi(f[static_cast<size_t>(1 + off)]);
      int h = std::stoi(f[static_cast<size_t>(2 + off)]);
      double imp = std::stod(f[static_cast<size_t>(3 + off)]);
      double match = std::stod(f[static_cast<size_t>(4 + off)]);
      if (!examples) samples[key] = std::stoll(f[5]);
      cells[key][{l, h}] = {imp, match};
      data.layers = std::max(data.layers, l + 1);
      data.heads = std::max(data.heads, h + 1);
    }
    for (const auto& [key, grid] : cells) {
      internals::ImportanceMatrix m = internals::ImportanceMatrix::zeros(data.layers, data.heads);
      for (const auto& [lh, iv] : grid) {
        m.importance_at(lh.first, lh.second) = iv.first;
        m.match[static_cast<size_t>(lh.first) * data.heads + lh.second] = iv.second;
      }
      if (examples) {
        m.provenance = "example:" + key;
        m.sample_count = 1;
        data.examples[example_domain[key]].push_back(std::move(m));
      } else {
        m.provenance = "domain:" + key;
        m.sample_count = samples[key];
        data.domains.emplace(key, std::move(m));
      }
    }
  };
  parse_grid(domains_csv, false);
  parse_grid(examples_csv, true);
  return data;
}

}  // namespace detail

inline void stage_stats(const ExperimentConfig& cfg) {
  StageRunner stage(cfg, "stats");
  std::string family_manifest = stage.in_text("models/family.manifest");
  std::vector<std::string> tags;
  {
    std::istringstream in(family_manifest);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
      if (!line.empty()) tags.push_back(split(line, ',')[0]);
  }

  // Head-set overlap per model, plus layer profiles and the cross-model heatmap.
  std::vector<std::pair<std::string, stats::LayerProfile>> raw_profiles;
  std::ostringstream profiles_csv, shared_csv;
  profiles_csv << "tag,layer,raw,per_layer_normalized\n";
  shared_csv << "tag,layer,shared_heads\n";
  RngStream baseline_rng = RngStream(cfg.seed).named("baseline");
  std::ostringstream overlap_csv;
  overlap_csv << "model," << stats::overlap_row_csv_header() << "\n";

  for (const auto& tag : tags) {
    detail::AblateData data = detail::parse_ablate(stage.in_text("ablate/" + tag + ".domains.csv"),
                                                   stage.in_text("ablate/" + tag + ".examples.csv"));
    std::map<std::string, stats::HeadSet> domain_sets;
    for (const auto& [domain, m] : data.domains)
      domain_sets.emplace(domain, stats::top_fraction(m, 0.2, tag + "/" + domain));
    std::map<std::string, std::vector<stats::HeadSet>> example_sets;
    for (const auto& [domain, mats] : data.examples)
      for (const auto& m : mats)
        example_sets[domain].push_back(stats::top_fraction(m, 0.2, tag + "/" + m.provenance));
    if (domain_sets.size() >= 2) {
      stats::OverlapRow row = stats::overlap_table(domain_sets, example_sets, baseline_rng);
      overlap_csv << tag << "," << stats::overlap_row_to_csv(row) << "\n";
    }

    // Model-level aggregate: mean of domain matrices.
    std::vector<internals::ImportanceMatrix> mats;
    for (const auto& [domain, m] : data.domains) mats.push_back(m);
    internals::ImportanceMatrix model_mat = internals::aggregate(mats, "model:" + tag);
    stats::LayerProfile raw = stats::layer_profile(model_mat, stats::ProfileNorm::raw, tag);
    stats::LayerProfile normed =
        stats::layer_profile(model_mat, stats::ProfileNorm::per_layer_count, tag);
    for (size_t l = 0; l < raw.values.size(); ++l)
      profiles_csv << tag << "," << l << "," << fmt_g(raw.values[l]) << ","
                   << fmt_g(normed.values[l]) << "\n";
    raw_profiles.emplace_back(tag, raw);

    // Heads in the top sets of more than half the domains, by layer.
    std::map<std::pair<int, int>, int> appearance;
    for (const auto& [domain, s] : domain_sets)
      for (const auto& p : s.members) appearance[p]++;
    std::vector<int> shared_per_layer(static_cast<size_t>(data.layers), 0);
    for (const auto& [head, cnt] : appearance)
      if (cnt * 2 > static_cast<int>(domain_sets.size())) shared_per_layer[static_cast<size_t>(head.first)]++;
    for (int l = 0; l < data.layers; ++l)
      shared_csv << tag << "," << l << "," << shared_per_layer[static_cast<size_t>(l)] << "\n";
  }
  stage.out("stats/overlap.csv", overlap_csv.str());
  stage.out("stats/profiles.csv", profiles_csv.str());
  stage.out("stats/shared_heads.csv", shared_csv.str());
  if (raw_profiles.size() >= 2)
    stage.out("stats/heatmap.csv", stats::heatmap_to_csv(stats::profile_similarity(raw_profiles)));

  // W1 of the score distribution shift under noise, reference model.
  {
    auto clean = memscore::records_from_text(stage.in_text(records_rel(cfg.reference, 0.0)));
    std::vector<double> clean_scores;
    for (const auto& r : clean) clean_scores.push_back(r.score());
    std::ostringstream w1_csv;
    w1_csv << "model,alpha,w1,samples\n";
    for (double alpha : cfg.alphas) {
      if (alpha == 0.0) continue;
      auto noised = memscore::records_from_text(stage.in_text(records_rel(cfg.reference, alpha)));
      std::vector<double> noised_scores;
      for (const auto& r : noised) noised_scores.push_back(r.score());
      w1_csv << cfg.reference << "," << fmt_g(alpha) << ","
             << fmt_g(stats::wasserstein1(clean_scores, noised_scores)) << "," << clean_scores.size()
             << "\n";
    }
    stage.out("stats/w1.csv", w1_csv.str());
  }

  // Residual-stream norm profile for the reference model.
  {
    corpus::Corpus corp = load_corpus(stage);
    std::vector<memscore::Probe> probes = load_probes(stage, corp, cfg.residual_norm_cap);
    Transformer model = load_model(stage, cfg.reference);
    std::vector<std::vector<int>> examples;
    for (const auto& p : probes) {
      std::vector<int> seq = p.ctx;
      seq.insert(seq.end(), p.gold.begin(), p.gold.end());
      examples.push_back(std::move(seq));
    }
    auto prof = model.residual_norm_profile(examples);
    std::ostringstream out;
    out << "tag,site,rms\n";
    out << cfg.reference << ",embedding," << fmt_g(prof.embedding) << "\n";
    for (size_t l = 0; l < prof.layers.size(); ++l)
      out << cfg.reference << ",layer" << l << "," << fmt_g(prof.layers[l]) << "\n";
    stage.out("stats/residual_norms.csv", out.str());
  }
  stage.finish();
}

// --- report ---------------------------------------------------------------------

inline void stage_report(const ExperimentConfig& cfg) {
  StageRunner stage(cfg, "report");

  // Rate vs size and score histograms for every trained model.
  std::string family_manifest = stage.in_text("models/family.manifest");
  std::ostringstream rate_csv, hist_csv, domain_csv;
  rate_csv << "tag,family,params,recipe,memorization_rate,samples\n";
  hist_csv << "tag,score_num,count\n";
  domain_csv << "tag,alpha,structural,semi_structural,free_text,memorized\n";
  std::map<std::string, corpus::DomainCategory> categories;
  for (const auto& d : corpus::default_domains(cfg.seed)) categories[d.name] = d.category;

  {
    std::istringstream in(family_manifest);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split(line, ',');
      const std::string& tag = f[0];
      auto records = memscore::records_from_text(stage.in_text(records_rel(tag, 0.0)));
      rate_csv << tag << "," << f[1] << "," << f[2] << "," << f[3] << ","
               << fmt_g(memscore::memorization_rate(records)) << "," << records.size() << "\n";
      auto dist = memscore::score_distribution(records);
      for (size_t k = 0; k < dist.counts.size(); ++k)
        hist_csv << tag << "," << k << "," << dist.counts[k] << "\n";
      auto bd = memscore::domain_breakdown(records, categories);
      domain_csv << tag << ",0," << fmt_g(bd.structural) << "," << fmt_g(bd.semi_structural) << ","
                 << fmt_g(bd.free_text) << "," << bd.memorized_total << "\n";
    }
  }
  // Domain table under noise, reference model (appendix analogue).
  for (double alpha : cfg.alphas) {
    if (alpha == 0.0) continue;
    auto records = memscore::records_from_text(stage.in_text(records_rel(cfg.reference, alpha)));
    auto bd = memscore::domain_breakdown(records, categories);
    domain_csv << cfg.reference << "," << fmt_g(alpha) << "," << fmt_g(bd.structural) << ","
               << fmt_g(bd.semi_structural) << "," << fmt_g(bd.free_text) << ","
               << bd.memorized_total << "\n";
  }
  stage.out("report/rate_vs_size.csv", rate_csv.str());
  stage.out("report/score_hist.csv", hist_csv.str());
  stage.out("report/domain_table.csv", domain_csv.str());

  // Compression distribution (reference model).
  {
    std::istringstream in(stage.in_text("compress/" + cfg.reference + ".csv"));
    std::string line;
    std::getline(in, line);
    std::map<int, int64_t> hist;
    int64_t nonmono = 0, n = 0;
    double ratio_sum = 0.0, ratio_min = 1.0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split(line, ',');
      int k = std::stoi(f[3]);
      hist[k]++;
      ++n;
      double ratio = std::stod(f[4]);
      ratio_sum += ratio;
      ratio_min = std::min(ratio_min, ratio);
      if (f[5] == "0") ++nonmono;
    }
    std::ostringstream out;
    out << "tag,min_context,count\n";
    for (const auto& [k, c] : hist) out << cfg.reference << "," << k << "," << c << "\n";
    stage.out("report/compression_hist.csv", out.str());
    std::ostringstream sum;
    sum << "tag,samples,mean_ratio,min_ratio,nonmonotone_patterns\n";
    sum << cfg.reference << "," << n << "," << fmt_g(n ? ratio_sum / n : 0.0) << ","
        << fmt_g(ratio_min) << "," << nonmono << "\n";
    stage.out("report/compression_summary.csv", sum.str());
  }

  // Frequency quantile curves per cohort (memorized / half / unmemorized).
  {
    auto records = memscore::records_from_text(stage.in_text(records_rel(cfg.reference, 0.0)));
    corpus::Corpus corp = load_corpus(stage);
    double total = static_cast<double>(corp.total_tokens);
    std::map<std::string, std::vector<double>> cohorts;
    for (const auto& r : records) {
      if (!r.avg_frequency) continue;
      if (r.memorized()) cohorts["memorized"].push_back(*r.avg_frequency);
      else if (r.half_memorized()) cohorts["half_memorized"].push_back(*r.avg_frequency);
      else if (r.unmemorized()) cohorts["unmemorized"].push_back(*r.avg_frequency);
    }
    std::ostringstream out;
    out << "cohort,quantile,avg_frequency,normalized_frequency\n";
    for (auto& [name, vals] : cohorts) {
      std::sort(vals.begin(), vals.end());
      for (int q = 0; q <= 20; ++q) {
        size_t idx = static_cast<size_t>((vals.size() - 1) * q / 20);
        out << name << "," << fmt_g(q / 20.0) << "," << fmt_g(vals[idx]) << ","
            << fmt_g(vals[idx] / total, 12) << "\n";
      }
    }
    stage.out("report/frequency_curves.csv", out.str());
  }

  // Internal probes: copied through so the report directory is self-contained.
  stage.out("report/lens_curves.csv", stage.in_text("lens/" + cfg.reference + ".csv"));
  stage.out("report/w1_vs_alpha.csv", stage.in_text("stats/w1.csv"));
  {
    std::ostringstream sim;
    sim << "layer,cohort,alpha,attn_mean,attn_var,mlp_mean,mlp_var,samples\n";
    for (double alpha : cfg.alphas) {
      if (alpha == 0.0) continue;
      std::istringstream in(
          stage.in_text("similarity/" + cfg.reference + ".alpha" + alpha_label(alpha) + ".csv"));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line))
        if (!line.empty()) sim << line << "\n";
    }
    stage.out("report/similarity_profiles.csv", sim.str());
  }
  stage.out("report/overlap_table.csv", stage.in_text("stats/overlap.csv"));
  stage.out("report/layer_profiles.csv", stage.in_text("stats/profiles.csv"));
  stage.out("report/shared_heads_by_layer.csv", stage.in_text("stats/shared_heads.csv"));
  if (std::filesystem::exists(cfg.out_dir / "stats/heatmap.csv"))
    stage.out("report/heatmap.csv", stage.in_text("stats/heatmap.csv"));
  stage.out("report/residual_norms.csv", stage.in_text("stats/residual_norms.csv"));

  std::ostringstream flags;
  flags << "tool=" << kToolVersion << "\n";
  for (const auto& [k, v] : decision_flags()) flags << k << "=" << v << "\n";
  stage.out("report/flags.txt", flags.str());
  stage.finish();
}

// --- full pipeline ----------------------------------------------------------------

inline void run_full_pipeline(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  stage_gen_corpus(cfg);
  stage_train(cfg, "", log);
  for (const auto& model : cfg.all_models()) {
    stage_score(cfg, model.first);
    stage_ablate(cfg, model.first);
  }
  stage_noise(cfg, cfg.reference);
  stage_compress(cfg, cfg.reference);
  stage_lens(cfg, cfg.reference);
  stage_stats(cfg);
  stage_report(cfg);
}

}  // namespace memlab::report
