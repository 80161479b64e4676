#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "memlab/memscore/compression.hpp"
#include "memlab/memscore/score.hpp"

using namespace memlab;
using namespace memlab::memscore;
using Catch::Approx;

namespace {

MemRecord fake_record(int score_num, const std::string& domain = "d") {
  MemRecord r;
  r.score_num = score_num;
  r.domain = domain;
  r.ctx.assign(32, 0);
  r.gold.assign(32, 1);
  r.generated.assign(32, 2);
  return r;
}

}  // namespace

TEST_CASE("memorization score endpoints and the halfway case") {
  // A zero-weight model decodes a constant token (argmax of uniform logits).
  ModelConfig cfg;
  cfg.vocab_size = 59;
  Transformer zero(cfg);

  Probe p;
  p.ctx.assign(32, 5);
  p.gold.assign(32, 1);  // never token 0 => score 0
  MemRecord r0 = memorization_score(zero, p);
  REQUIRE(r0.score_num == 0);
  REQUIRE(r0.unmemorized());
  REQUIRE(r0.score() == 0.0);

  p.gold.assign(32, 0);  // always token 0 => score 1
  MemRecord r1 = memorization_score(zero, p);
  REQUIRE(r1.score_num == kProbeLen);
  REQUIRE(r1.memorized());
  REQUIRE(r1.score() == 1.0);

  for (int i = 0; i < 16; ++i) p.gold[static_cast<size_t>(i)] = 1;  // half the positions wrong
  MemRecord rh = memorization_score(zero, p);
  REQUIRE(rh.score_num == 16);
  REQUIRE(rh.score() == 0.5);
  REQUIRE(rh.half_memorized());

  p.ctx.resize(31);
  REQUIRE_THROWS_AS(memorization_score(zero, p), ShapeError);
}

TEST_CASE("trained model fully recalls planted loops") {
  const auto& fx = testutil::overfit_fixture();
  for (size_t i = 0; i < 3; ++i) {
    MemRecord rec = memorization_score(fx.model, fx.probe_for_domain("loops", i));
    REQUIRE(rec.memorized());
  }
}

TEST_CASE("memorization rate: direct counts, bounds, monotonicity") {
  std::vector<MemRecord> records = {fake_record(32), fake_record(16), fake_record(0)};
  REQUIRE(memorization_rate(records) == Approx(1.0 / 3.0));
  REQUIRE_THROWS_AS(memorization_rate({}), Error);

  std::vector<MemRecord> all_full(4, fake_record(32));
  REQUIRE(memorization_rate(all_full) == 1.0);
  std::vector<MemRecord> none = {fake_record(3), fake_record(31)};
  REQUIRE(memorization_rate(none) == 0.0);

  // Adding a non-memorized record never increases the rate.
  double before = memorization_rate(records);
  records.push_back(fake_record(7));
  REQUIRE(memorization_rate(records) <= before);
}

TEST_CASE("score distribution bins are exact rationals k/32") {
  std::vector<MemRecord> records = {fake_record(32)};
  ScoreDistribution d = score_distribution(records);
  REQUIRE(d.counts[32] == 1);
  REQUIRE(d.total == 1);

  records.clear();
  for (int k = 0; k <= 32; ++k) records.push_back(fake_record(k));
  d = score_distribution(records);
  int64_t sum = 0;
  for (int64_t c : d.counts) {
    REQUIRE(c == 1);
    sum += c;
  }
  REQUIRE(sum == d.total);
  REQUIRE_THROWS_AS(score_distribution({}), Error);
}

TEST_CASE("domain breakdown proportions over memorized records") {
  std::map<std::string, corpus::DomainCategory> cats = {
      {"code", corpus::DomainCategory::structural},
      {"law", corpus::DomainCategory::semi_structural},
      {"chat", corpus::DomainCategory::free_text}};
  std::vector<MemRecord> records = {fake_record(32, "code"), fake_record(32, "code"),
                                    fake_record(32, "chat"), fake_record(4, "law")};
  DomainBreakdown b = domain_breakdown(records, cats);
  REQUIRE(b.memorized_total == 3);
  REQUIRE(b.structural == Approx(2.0 / 3.0));
  REQUIRE(b.semi_structural == 0.0);
  REQUIRE(b.free_text == Approx(1.0 / 3.0));
  REQUIRE(b.structural + b.semi_structural + b.free_text == Approx(1.0));
}

TEST_CASE("record dump round trips with a stable field order") {
  const auto& fx = testutil::overfit_fixture();
  std::vector<MemRecord> records;
  for (size_t i = 0; i < 4; ++i)
    records.push_back(memorization_score(fx.model, fx.probes[i]));
  records[0].avg_frequency = 123.25;
  std::string text = records_to_text(records);
  auto back = records_from_text(text);
  REQUIRE(records_to_text(back) == text);
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    REQUIRE(back[i].ctx == records[i].ctx);
    REQUIRE(back[i].gold == records[i].gold);
    REQUIRE(back[i].generated == records[i].generated);
    REQUIRE(back[i].score_num == records[i].score_num);
    REQUIRE(back[i].domain == records[i].domain);
  }
  REQUIRE(back[0].avg_frequency);
  REQUIRE(*back[0].avg_frequency == Approx(123.25));
}

TEST_CASE("compression: period-1 loop reaches the 1/32 floor") {
  const auto& fx = testutil::overfit_fixture();
  // Fixture domain "loops": [0]=ab, [1]=abcd, [2]=zzzz.
  MemRecord z = memorization_score(fx.model, fx.probe_for_domain("loops", 2));
  REQUIRE(z.memorized());
  REQUIRE(min_context_tokens(fx.model, z) == 1);
  REQUIRE(compression_ratio(fx.model, z) == Approx(1.0 / 32.0));
}

TEST_CASE("ascending scan equals the exhaustive all-k oracle") {
  const auto& fx = testutil::overfit_fixture();
  for (const auto& probe : fx.probes) {
    MemRecord rec = memorization_score(fx.model, probe);
    if (!rec.memorized()) continue;
    auto pattern = extraction_pattern(fx.model, rec);
    int oracle_min = 0;
    while (!pattern[static_cast<size_t>(oracle_min)]) ++oracle_min;
    REQUIRE(min_context_tokens(fx.model, rec) == oracle_min + 1);
    REQUIRE(pattern[31]);  // full context always extracts, by precondition
  }
}

TEST_CASE("compression requires a fully memorized record") {
  const auto& fx = testutil::overfit_fixture();
  MemRecord rec = memorization_score(fx.model, fx.probe_for_domain("noise", 0));
  REQUIRE(!rec.memorized());
  REQUIRE_THROWS_AS(compression_ratio(fx.model, rec), Error);
}

TEST_CASE("prefix truncation mode is available and labeled") {
  const auto& fx = testutil::overfit_fixture();
  MemRecord rec = memorization_score(fx.model, fx.probe_for_domain("loops", 0));
  REQUIRE(rec.memorized());
  double suffix = compression_ratio(fx.model, rec, {}, TruncationSide::suffix);
  double prefix = compression_ratio(fx.model, rec, {}, TruncationSide::prefix);
  for (double r : {suffix, prefix}) {
    REQUIRE(r > 0.0);
    REQUIRE(r <= 1.0);
  }
  REQUIRE(std::string(to_string(TruncationSide::suffix)) == "suffix");
}
