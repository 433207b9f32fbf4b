#include "mogen/synthworld/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mogen/autodiff/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mogen::world {

const char* connector_name(Connector c) {
  switch (c) {
    case Connector::none: return "none";
    case Connector::then: return "then";
    case Connector::while_: return "while";
  }
  throw std::invalid_argument("bad connector");
}

Connector connector_from_name(const std::string& name) {
  if (name == "none") return Connector::none;
  if (name == "then") return Connector::then;
  if (name == "while") return Connector::while_;
  throw std::invalid_argument("bad connector '" + name + "'");
}

std::vector<Triple> all_composition_triples() {
  std::vector<Triple> out;
  for (int i = 0; i < kPrimitiveCount; ++i)
    for (int j = 0; j < kPrimitiveCount; ++j) {
      if (i == j) continue;
      out.push_back({static_cast<Primitive>(i), static_cast<Primitive>(j),
                     Connector::then});
    }
  for (int i = 0; i < kPrimitiveCount; ++i)
    for (int j = 0; j < kPrimitiveCount; ++j) {
      if (i == j) continue;
      const auto a = static_cast<Primitive>(i), b = static_cast<Primitive>(j);
      if (while_compatible(meta_of(a), meta_of(b)))
        out.push_back({a, b, Connector::while_});
    }
  return out;
}

void DataConfig::validate() const {
  if (paired_train_records < kPrimitiveCount)
    throw std::invalid_argument(
        "data: paired_train_records must cover every singleton primitive");
  if (paired_test_records < 0 || unpaired_train_records < 0 ||
      unpaired_test_records < 0)
    throw std::invalid_argument("data: record counts must be nonnegative");
  if (duration_jitter < 0.0 || duration_jitter >= 1.0)
    throw std::invalid_argument("data: duration_jitter must be in [0,1)");
  const int total = static_cast<int>(all_composition_triples().size());
  const int reserved =
      paired_test_triples + unpaired_train_triples + unpaired_test_triples;
  if (paired_test_triples < 0 || unpaired_train_triples < 0 ||
      unpaired_test_triples < 0)
    throw std::invalid_argument("data: triple counts must be nonnegative");
  if (reserved >= total)
    throw std::invalid_argument(
        "data: requested composition triples (" + std::to_string(reserved) +
        ") exceed the combinatorial budget (" + std::to_string(total) +
        " minus at least one paired_train triple)");
  if ((unpaired_train_records > 0 && unpaired_train_triples == 0) ||
      (unpaired_test_records > 0 && unpaired_test_triples == 0))
    throw std::invalid_argument("data: unpaired records need unpaired triples");
}

namespace {

MetaMotion jittered(Primitive p, double jitter, Rng& rng) {
  MetaMotion m = meta_of(p);
  if (jitter > 0.0) {
    const double u = 1.0 + jitter * (2.0 * rng.uniform() - 1.0);
    m.duration_frames = std::max(8, static_cast<int>(std::lround(m.duration_frames * u)));
  }
  return m;
}

struct TextSpec {  // a singleton (b unused) or a composition triple
  bool singleton = true;
  Primitive a = Primitive::stand_still;
  Primitive b = Primitive::stand_still;
  Connector conn = Connector::none;
};

PromptRecord render_record(const TextSpec& spec, const Skeleton& sk, bool paired,
                           double jitter, std::uint64_t record_seed,
                           MotionSequence* motion_out) {
  Rng rng(record_seed);
  std::string text;
  MotionSequence motion;
  if (spec.singleton) {
    const MetaMotion meta = jittered(spec.a, jitter, rng);
    text = atomic_text(meta);
    if (paired)
      motion = render_primitive(meta, sk, Rng::hash_combine(record_seed, 100));
  } else {
    MetaMotion ma = jittered(spec.a, jitter, rng);
    MetaMotion mb = jittered(spec.b, jitter, rng);
    text = compose_text(ma, mb, spec.conn);
    if (paired)
      motion = compose_motion(ma, mb, spec.conn, sk,
                              Rng::hash_combine(record_seed, 100));
  }
  PromptRecord rec = make_prompt(text, paired);
  rec.record_seed = record_seed;
  if (paired && motion_out) *motion_out = std::move(motion);
  return rec;
}

// Largest-remainder allocation of `records` over `pools` triples, at least
// one record per triple where possible.
std::vector<int> quota(int records, int pools) {
  std::vector<int> q(static_cast<std::size_t>(pools), records / std::max(1, pools));
  int rem = records - q[0] * pools;
  for (int i = 0; i < rem; ++i) q[static_cast<std::size_t>(i)] += 1;
  return q;
}

}  // namespace

Dataset build_datasets(const DataConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  ds.skeleton = Skeleton::standard();

  auto triples = all_composition_triples();
  {
    Rng shuffle_rng(Rng::hash_combine(cfg.seed, 0xda7a));
    for (int i = static_cast<int>(triples.size()) - 1; i > 0; --i)
      std::swap(triples[static_cast<std::size_t>(i)],
                triples[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);
  }
  const int n = static_cast<int>(triples.size());
  const int n_ptest = cfg.paired_test_triples;
  const int n_utrain = cfg.unpaired_train_triples;
  const int n_utest = cfg.unpaired_test_triples;
  const int n_ptrain = n - n_ptest - n_utrain - n_utest;

  const auto slice = [&](int begin, int count) {
    return std::vector<Triple>(triples.begin() + begin,
                               triples.begin() + begin + count);
  };
  const auto pt_pool = slice(0, n_ptrain);
  const auto ptest_pool = slice(n_ptrain, n_ptest);
  const auto ut_pool = slice(n_ptrain + n_ptest, n_utrain);
  const auto utest_pool = slice(n_ptrain + n_ptest + n_utrain, n_utest);

  // Paired splits sample uniformly over singletons plus their triple pool.
  // The training split opens with one record per singleton so that every
  // unpaired composition decomposes into meta-motions seen in paired_train.
  auto build_paired = [&](const std::string& name, int count,
                          const std::vector<Triple>& pool, std::uint64_t salt,
                          bool force_singletons) {
    DatasetSplit split;
    split.name = name;
    const int options = kPrimitiveCount + static_cast<int>(pool.size());
    for (int i = 0; i < count; ++i) {
      const std::uint64_t rec_seed =
          Rng::hash_combine(Rng::hash_combine(cfg.seed, salt), static_cast<std::uint64_t>(i));
      TextSpec spec;
      if (force_singletons && i < kPrimitiveCount) {
        spec.singleton = true;
        spec.a = static_cast<Primitive>(i);
      } else {
        Rng pick(Rng::hash_combine(rec_seed, 7));
        const int choice = pick.uniform_int(options);
        if (choice < kPrimitiveCount) {
          spec.singleton = true;
          spec.a = static_cast<Primitive>(choice);
        } else {
          const Triple& tr = pool[static_cast<std::size_t>(choice - kPrimitiveCount)];
          spec = {false, tr.a, tr.b, tr.conn};
        }
      }
      MotionSequence motion;
      split.records.push_back(render_record(spec, ds.skeleton, true,
                                            cfg.duration_jitter, rec_seed, &motion));
      split.motions.push_back(std::move(motion));
    }
    return split;
  };

  // Unpaired splits are grouped by triple so that a record-count prefix
  // corresponds to a triple-pool prefix (used by the data-scaling knob).
  auto build_unpaired = [&](const std::string& name, int count,
                            const std::vector<Triple>& pool, std::uint64_t salt) {
    DatasetSplit split;
    split.name = name;
    if (count == 0 || pool.empty()) return split;
    const auto q = quota(count, static_cast<int>(pool.size()));
    int idx = 0;
    for (std::size_t p = 0; p < pool.size(); ++p)
      for (int k = 0; k < q[p]; ++k, ++idx) {
        const std::uint64_t rec_seed = Rng::hash_combine(
            Rng::hash_combine(cfg.seed, salt), static_cast<std::uint64_t>(idx));
        const TextSpec spec{false, pool[p].a, pool[p].b, pool[p].conn};
        split.records.push_back(render_record(spec, ds.skeleton, false,
                                              cfg.duration_jitter, rec_seed, nullptr));
      }
    return split;
  };

  ds.paired_train = build_paired("paired_train", cfg.paired_train_records, pt_pool, 11, true);
  ds.paired_test = build_paired("paired_test", cfg.paired_test_records, ptest_pool, 22, false);
  ds.unpaired_train =
      build_unpaired("unpaired_train", cfg.unpaired_train_records, ut_pool, 33);
  ds.unpaired_test =
      build_unpaired("unpaired_test", cfg.unpaired_test_records, utest_pool, 44);
  ds.stats = compute_stats(ds.paired_train.motions);
  return ds;
}

NormalizationStats compute_stats(const std::vector<MotionSequence>& motions) {
  if (motions.empty()) throw std::invalid_argument("stats: no motions");
  const int d = motions[0].feature_dim;
  NormalizationStats s;
  s.mean.assign(static_cast<std::size_t>(d), 0.0);
  s.stdev.assign(static_cast<std::size_t>(d), 0.0);
  std::int64_t frames = 0;
  for (const auto& m : motions) {
    frames += m.frames;
    for (int t = 0; t < m.frames; ++t)
      for (int k = 0; k < d; ++k) s.mean[static_cast<std::size_t>(k)] += m.at(t, k);
  }
  for (auto& v : s.mean) v /= static_cast<double>(frames);
  for (const auto& m : motions)
    for (int t = 0; t < m.frames; ++t)
      for (int k = 0; k < d; ++k) {
        const double c = m.at(t, k) - s.mean[static_cast<std::size_t>(k)];
        s.stdev[static_cast<std::size_t>(k)] += c * c;
      }
  for (auto& v : s.stdev) {
    v = std::sqrt(v / static_cast<double>(frames));
    if (v < 1e-8) v = 1.0;  // degenerate dims (root-relative root coords)
  }
  return s;
}

MotionSequence normalize(const MotionSequence& m, const NormalizationStats& s) {
  MotionSequence out = m;
  for (int t = 0; t < m.frames; ++t)
    for (int k = 0; k < m.feature_dim; ++k)
      out.at(t, k) = static_cast<float>(
          (m.at(t, k) - s.mean[static_cast<std::size_t>(k)]) /
          s.stdev[static_cast<std::size_t>(k)]);
  return out;
}

MotionSequence denormalize(const MotionSequence& m, const NormalizationStats& s) {
  MotionSequence out = m;
  for (int t = 0; t < m.frames; ++t)
    for (int k = 0; k < m.feature_dim; ++k)
      out.at(t, k) = static_cast<float>(
          m.at(t, k) * s.stdev[static_cast<std::size_t>(k)] +
          s.mean[static_cast<std::size_t>(k)]);
  return out;
}

// -------------------------------------------------------- serialization

namespace {

constexpr char kMotionMagic[4] = {'M', 'O', 'T', 'N'};

json record_to_json(const PromptRecord& r) {
  json j;
  j["text"] = r.text;
  j["tokens"] = r.token_ids;
  j["pos"] = r.pos_tags;
  j["meta_ids"] = r.meta_ids;
  j["connector"] = connector_name(r.connector);
  j["paired"] = r.paired;
  if (!r.motion_ref.empty()) j["motion"] = r.motion_ref;
  j["seed"] = r.record_seed;
  return j;
}

PromptRecord record_from_json(const json& j) {
  PromptRecord r;
  r.text = j.at("text").get<std::string>();
  r.token_ids = j.at("tokens").get<std::vector<int>>();
  r.pos_tags = j.at("pos").get<std::vector<std::string>>();
  r.meta_ids = j.at("meta_ids").get<std::vector<int>>();
  r.connector = connector_from_name(j.at("connector").get<std::string>());
  r.paired = j.at("paired").get<bool>();
  if (j.contains("motion")) r.motion_ref = j.at("motion").get<std::string>();
  r.record_seed = j.at("seed").get<std::uint64_t>();
  return r;
}

void save_split(DatasetSplit& split, const fs::path& dir) {
  std::ofstream os(dir / (split.name + ".jsonl"));
  if (!os) throw std::runtime_error("dataset: cannot write split " + split.name);
  const bool paired = !split.motions.empty();
  for (std::size_t i = 0; i < split.records.size(); ++i) {
    if (paired) {
      auto ref = fs::path("motions") /
                 (split.name + "_" + std::to_string(i) + ".mbin");
      split.records[i].motion_ref = ref.generic_string();
      save_motion((dir / ref).string(), split.motions[i]);
    }
    os << record_to_json(split.records[i]).dump() << "\n";
  }
}

DatasetSplit load_split(const std::string& name, const fs::path& dir, bool paired) {
  DatasetSplit split;
  split.name = name;
  std::ifstream is(dir / (name + ".jsonl"));
  if (!is) throw std::runtime_error("dataset: missing split file " + name);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    split.records.push_back(record_from_json(json::parse(line)));
    if (paired)
      split.motions.push_back(
          load_motion((dir / split.records.back().motion_ref).string()));
  }
  return split;
}

}  // namespace

void save_motion(const std::string& path, const MotionSequence& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("motion: cannot write " + path);
  os.write(kMotionMagic, 4);
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(m.frames),
                                   static_cast<std::uint32_t>(m.feature_dim),
                                   static_cast<std::uint32_t>(m.fps)};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  os.write(reinterpret_cast<const char*>(m.data.data()),
           static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!os) throw std::runtime_error("motion: write failed " + path);
}

MotionSequence load_motion(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("motion: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMotionMagic, 4) != 0)
    throw std::runtime_error("motion: bad magic in " + path);
  std::uint32_t header[3];
  is.read(reinterpret_cast<char*>(header), sizeof(header));
  MotionSequence m;
  m.frames = static_cast<int>(header[0]);
  m.feature_dim = static_cast<int>(header[1]);
  m.fps = static_cast<int>(header[2]);
  m.data.resize(static_cast<std::size_t>(m.frames) * m.feature_dim);
  is.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!is) throw std::runtime_error("motion: truncated file " + path);
  return m;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "motions");
  Dataset copy = ds;  // motion_ref fields are filled while saving
  save_split(copy.paired_train, dir);
  save_split(copy.paired_test, dir);
  save_split(copy.unpaired_train, dir);
  save_split(copy.unpaired_test, dir);

  json manifest;
  manifest["seed"] = ds.config.seed;
  manifest["splits"] = {
      {"paired_train", copy.paired_train.records.size()},
      {"paired_test", copy.paired_test.records.size()},
      {"unpaired_train", copy.unpaired_train.records.size()},
      {"unpaired_test", copy.unpaired_test.records.size()},
  };
  const auto& vocab = vocabulary();
  manifest["vocabulary"] = vocab.words;
  manifest["pos_tags"] = vocab.pos;
  manifest["normalization"] = {{"mean", ds.stats.mean}, {"stdev", ds.stats.stdev}};
  manifest["config"] = {
      {"paired_train_records", ds.config.paired_train_records},
      {"paired_test_records", ds.config.paired_test_records},
      {"unpaired_train_records", ds.config.unpaired_train_records},
      {"unpaired_test_records", ds.config.unpaired_test_records},
      {"paired_test_triples", ds.config.paired_test_triples},
      {"unpaired_train_triples", ds.config.unpaired_train_triples},
      {"unpaired_test_triples", ds.config.unpaired_test_triples},
      {"duration_jitter", ds.config.duration_jitter},
  };
  manifest["skeleton"] = {{"joint_count", ds.skeleton.joint_count},
                          {"parent", ds.skeleton.parent},
                          {"bone_length", ds.skeleton.bone_length},
                          {"joint_name", ds.skeleton.joint_name}};
  std::ofstream os(fs::path(dir) / "manifest.json");
  os << manifest.dump(2) << "\n";
  if (!os) throw std::runtime_error("dataset: cannot write manifest");
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw std::runtime_error("dataset: missing manifest in " + dir);
  json manifest = json::parse(is);

  Dataset ds;
  ds.config.seed = manifest.at("seed").get<std::uint64_t>();
  const auto& jc = manifest.at("config");
  ds.config.paired_train_records = jc.at("paired_train_records").get<int>();
  ds.config.paired_test_records = jc.at("paired_test_records").get<int>();
  ds.config.unpaired_train_records = jc.at("unpaired_train_records").get<int>();
  ds.config.unpaired_test_records = jc.at("unpaired_test_records").get<int>();
  ds.config.paired_test_triples = jc.at("paired_test_triples").get<int>();
  ds.config.unpaired_train_triples = jc.at("unpaired_train_triples").get<int>();
  ds.config.unpaired_test_triples = jc.at("unpaired_test_triples").get<int>();
  ds.config.duration_jitter = jc.at("duration_jitter").get<double>();

  const auto& js = manifest.at("skeleton");
  ds.skeleton.joint_count = js.at("joint_count").get<int>();
  ds.skeleton.parent = js.at("parent").get<std::vector<int>>();
  ds.skeleton.bone_length = js.at("bone_length").get<std::vector<double>>();
  ds.skeleton.joint_name = js.at("joint_name").get<std::vector<std::string>>();
  ds.skeleton.validate();

  ds.stats.mean = manifest.at("normalization").at("mean").get<std::vector<double>>();
  ds.stats.stdev = manifest.at("normalization").at("stdev").get<std::vector<double>>();

  const auto words = manifest.at("vocabulary").get<std::vector<std::string>>();
  if (words != vocabulary().words)
    throw std::runtime_error("dataset: vocabulary mismatch with this build");

  ds.paired_train = load_split("paired_train", dir, true);
  ds.paired_test = load_split("paired_test", dir, true);
  ds.unpaired_train = load_split("unpaired_train", dir, false);
  ds.unpaired_test = load_split("unpaired_test", dir, false);
  return ds;
}

}  // namespace mogen::world
