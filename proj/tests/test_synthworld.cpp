#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "mogen/autodiff/rng.hpp"
#include "mogen/synthworld/dataset.hpp"

using namespace mogen::world;

namespace {

const Skeleton& skel() {
  static const Skeleton s = Skeleton::standard();
  return s;
}

double mean_forward_velocity(const MotionSequence& m) {
  double s = 0.0;
  for (int t = 0; t < m.frames; ++t) s += m.at(t, 2 * 8);
  return s / m.frames;
}

}  // namespace

TEST_CASE("render_primitive basic contracts") {
  SUBCASE("stand_still stays put") {
    auto m = render_primitive(meta_of(Primitive::stand_still), skel(), 1);
    CHECK(m.frames == 16);
    CHECK(m.feature_dim == 18);
    for (int t = 0; t < m.frames; ++t) {
      CHECK(m.at(t, 16) == 0.0f);
      CHECK(m.at(t, 17) == 0.0f);
      CHECK(m.at(t, 0) == 0.0f);  // root-relative root position
      CHECK(m.at(t, 1) == 0.0f);
    }
    // Joint variance only from the seeded jitter (sigma 0.01 * bone).
    for (int j = 1; j < 8; ++j) {
      double mu = 0.0, var = 0.0;
      for (int t = 0; t < m.frames; ++t) mu += m.at(t, 2 * j);
      mu /= m.frames;
      for (int t = 0; t < m.frames; ++t) {
        const double c = m.at(t, 2 * j) - mu;
        var += c * c;
      }
      CHECK(var / m.frames < 1e-3);
    }
  }
  SUBCASE("walk moves forward") {
    auto m = render_primitive(meta_of(Primitive::walk), skel(), 2);
    CHECK(mean_forward_velocity(m) > 0.0);
  }
  SUBCASE("same meta and seed render bit-identically") {
    auto a = render_primitive(meta_of(Primitive::run), skel(), 77);
    auto b = render_primitive(meta_of(Primitive::run), skel(), 77);
    CHECK(a.data == b.data);
  }
  SUBCASE("short durations are rejected") {
    MetaMotion m = meta_of(Primitive::walk);
    m.duration_frames = 4;
    CHECK_THROWS_AS(render_primitive(m, skel(), 0), std::invalid_argument);
  }
}

TEST_CASE("compose: 'then' concatenates with seam blend") {
  const auto a = meta_of(Primitive::walk);
  const auto b = meta_of(Primitive::jump);
  auto m = compose_motion(a, b, Connector::then, skel(), 5);
  CHECK(m.frames == a.duration_frames + b.duration_frames);
  CHECK(compose_text(a, b, Connector::then) ==
        "a person walks forward, then jumps.");
  CHECK(m.finite());
}

TEST_CASE("compose: 'while' merges channels by body region") {
  const auto a = meta_of(Primitive::walk);
  const auto b = meta_of(Primitive::wave_left_arm);
  CHECK(compose_text(a, b, Connector::while_) ==
        "a person walks forward while waving their left arm.");
  const std::uint64_t seed = 9;
  auto merged = compose_motion(a, b, Connector::while_, skel(), seed);

  // Oracle: re-render the two sources exactly as compose does and check the
  // channel-merge rule against them.
  MetaMotion base = a, upper = b;
  const int dur = std::max(a.duration_frames, b.duration_frames);
  base.duration_frames = dur;
  upper.duration_frames = dur;
  auto mb = render_primitive(base, skel(), mogen::Rng::hash_combine(seed, 1));
  auto mu = render_primitive(upper, skel(), mogen::Rng::hash_combine(seed, 2));
  CHECK(merged.frames == dur);
  for (int t = 0; t < dur; ++t) {
    // Lower body and root channels equal the locomotion render.
    for (int j : {0, 1, 2, 3, 6, 7}) {
      CHECK(merged.at(t, 2 * j) == mb.at(t, 2 * j));
      CHECK(merged.at(t, 2 * j + 1) == mb.at(t, 2 * j + 1));
    }
    CHECK(merged.at(t, 16) == mb.at(t, 16));
    CHECK(merged.at(t, 17) == mb.at(t, 17));
    // Arm channels equal the upper render re-anchored at the base chest.
    for (int j : {4, 5}) {
      CHECK(merged.at(t, 2 * j) ==
            doctest::Approx(mb.at(t, 4) + (mu.at(t, 2 * j) - mu.at(t, 4))).epsilon(1e-6));
    }
  }
}

TEST_CASE("compose: 'while' with overlapping regions is rejected") {
  CHECK_THROWS_AS(compose_motion(meta_of(Primitive::sit), meta_of(Primitive::walk),
                                 Connector::while_, skel(), 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(compose_motion(meta_of(Primitive::walk), meta_of(Primitive::kick),
                                 Connector::while_, skel(), 0),
                  std::invalid_argument);
}

TEST_CASE("decompose inverts the grammar") {
  SUBCASE("composition") {
    auto parsed = decompose("a person walks forward, then jumps.");
    REQUIRE(parsed.metas.size() == 2);
    CHECK(parsed.metas[0].primitive == Primitive::walk);
    CHECK(parsed.metas[1].primitive == Primitive::jump);
    CHECK(parsed.connector == Connector::then);
  }
  SUBCASE("atomic alias phrasing maps to its primitive") {
    auto parsed = decompose("a person flexes their left arm.");
    REQUIRE(parsed.metas.size() == 1);
    CHECK(parsed.metas[0].primitive == Primitive::wave_left_arm);
    CHECK(parsed.connector == Connector::none);
  }
  SUBCASE("out-of-grammar text reports the failing token") {
    try {
      decompose("a person walks forward, then explodes.");
      FAIL("expected GrammarError");
    } catch (const GrammarError& e) {
      CHECK(e.position == 6);
    }
    try {
      decompose("a robot walks forward.");
      FAIL("expected GrammarError");
    } catch (const GrammarError& e) {
      CHECK(e.position == 1);
    }
  }
  SUBCASE("round-trip over every composable triple") {
    for (const auto& tr : all_composition_triples()) {
      const auto text = compose_text(meta_of(tr.a), meta_of(tr.b), tr.conn);
      const auto parsed = decompose(text);
      REQUIRE(parsed.metas.size() == 2);
      CHECK(parsed.metas[0].primitive == tr.a);
      CHECK(parsed.metas[1].primitive == tr.b);
      CHECK(parsed.connector == tr.conn);
      // Text itself round-trips exactly through tokenize/detokenize.
      CHECK(detokenize(tokenize_text(text)) == text);
    }
    for (int i = 0; i < kPrimitiveCount; ++i) {
      const auto text = atomic_text(meta_of(static_cast<Primitive>(i)));
      const auto parsed = decompose(text);
      REQUIRE(parsed.metas.size() == 1);
      CHECK(parsed.metas[0].primitive == static_cast<Primitive>(i));
    }
  }
}

TEST_CASE("dataset construction honors split contracts") {
  DataConfig cfg;
  cfg.paired_train_records = 200;
  cfg.paired_test_records = 60;
  cfg.unpaired_train_records = 90;
  cfg.unpaired_test_records = 70;
  cfg.seed = 31337;
  auto ds = build_datasets(cfg);

  auto triple_of = [](const PromptRecord& r) {
    REQUIRE(r.meta_ids.size() == 2);
    return std::tuple<int, int, int>{r.meta_ids[0], r.meta_ids[1],
                                     static_cast<int>(r.connector)};
  };
  std::set<std::tuple<int, int, int>> paired_triples, unpaired_triples;
  for (const auto* split : {&ds.paired_train, &ds.paired_test})
    for (const auto& r : split->records)
      if (r.meta_ids.size() == 2) paired_triples.insert(triple_of(r));
  for (const auto* split : {&ds.unpaired_train, &ds.unpaired_test}) {
    for (const auto& r : split->records) {
      CHECK_FALSE(r.paired);
      unpaired_triples.insert(triple_of(r));
    }
  }
  SUBCASE("unpaired triples never occur in any paired split") {
    for (const auto& t : unpaired_triples) CHECK(paired_triples.count(t) == 0);
  }
  SUBCASE("unpaired train and test are triple-disjoint") {
    std::set<std::tuple<int, int, int>> ut, utest;
    for (const auto& r : ds.unpaired_train.records) ut.insert(triple_of(r));
    for (const auto& r : ds.unpaired_test.records) utest.insert(triple_of(r));
    for (const auto& t : utest) CHECK(ut.count(t) == 0);
  }
  SUBCASE("composition closure: unpaired metas are singletons in paired_train") {
    std::set<int> train_singletons;
    for (const auto& r : ds.paired_train.records)
      if (r.meta_ids.size() == 1) train_singletons.insert(r.meta_ids[0]);
    for (const auto* split : {&ds.unpaired_train, &ds.unpaired_test})
      for (const auto& r : split->records)
        for (int id : r.meta_ids) CHECK(train_singletons.count(id) == 1);
  }
  SUBCASE("normalized training features have unit statistics") {
    std::vector<double> mean(18, 0.0), var(18, 0.0);
    std::int64_t frames = 0;
    for (const auto& m : ds.paired_train.motions) {
      const auto n = normalize(m, ds.stats);
      frames += n.frames;
      for (int t = 0; t < n.frames; ++t)
        for (int k = 0; k < 18; ++k) mean[k] += n.at(t, k);
    }
    for (auto& v : mean) v /= static_cast<double>(frames);
    for (const auto& m : ds.paired_train.motions) {
      const auto n = normalize(m, ds.stats);
      for (int t = 0; t < n.frames; ++t)
        for (int k = 0; k < 18; ++k) {
          const double c = n.at(t, k) - mean[k];
          var[k] += c * c;
        }
    }
    // Root-relative root coordinates are identically zero by construction;
    // their variance is degenerate and exempt.
    for (int k = 0; k < 18; ++k) {
      CHECK(std::fabs(mean[k]) < 1e-6);
      if (k == 0 || k == 1) continue;
      CHECK(std::fabs(std::sqrt(var[k] / frames) - 1.0) < 1e-5);
    }
  }
  SUBCASE("zero unpaired count still builds") {
    DataConfig c2 = cfg;
    c2.unpaired_train_records = 0;
    c2.unpaired_test_records = 0;
    auto d2 = build_datasets(c2);
    CHECK(d2.unpaired_train.records.empty());
    CHECK(d2.unpaired_test.records.empty());
  }
  SUBCASE("over-budget triple request is rejected") {
    DataConfig c3 = cfg;
    c3.unpaired_test_triples = 1000;
    CHECK_THROWS_AS(build_datasets(c3), std::invalid_argument);
  }
}

TEST_CASE("dataset determinism and round-trip") {
  DataConfig cfg;
  cfg.paired_train_records = 40;
  cfg.paired_test_records = 10;
  cfg.unpaired_train_records = 12;
  cfg.unpaired_test_records = 8;
  cfg.seed = 99;

  auto a = build_datasets(cfg);
  auto b = build_datasets(cfg);
  REQUIRE(a.paired_train.records.size() == b.paired_train.records.size());
  for (std::size_t i = 0; i < a.paired_train.records.size(); ++i) {
    CHECK(a.paired_train.records[i].text == b.paired_train.records[i].text);
    CHECK(a.paired_train.motions[i].data == b.paired_train.motions[i].data);
  }
  CHECK(a.stats.mean == b.stats.mean);

  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "mogen_ds_test";
  fs::remove_all(dir);
  save_dataset(a, dir.string());
  auto loaded = load_dataset(dir.string());
  CHECK(loaded.paired_train.records.size() == a.paired_train.records.size());
  CHECK(loaded.paired_train.motions[3].data == a.paired_train.motions[3].data);
  CHECK(loaded.unpaired_test.records[2].text == a.unpaired_test.records[2].text);
  CHECK(loaded.stats.mean == a.stats.mean);
  CHECK(loaded.stats.stdev == a.stats.stdev);
  fs::remove_all(dir);
}
