#include "nips/dataset.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace nips {

namespace {

constexpr char kMagic[8] = {'N', 'I', 'P', 'S', 'D', 'S', '1', '\0'};
constexpr std::uint64_t kStreamMicro = 1;
constexpr std::uint64_t kStreamLoad = 2;
constexpr std::uint64_t kStreamNoise = 3;
constexpr std::uint64_t kStreamAugment = 4;

nlohmann::json grf_to_json(const GrfSpec& g) {
  return {{"tau", g.tau},         {"alpha", g.alpha},
          {"n1", g.n1},           {"n2", g.n2},
          {"period_length", g.period_length},
          {"seed", g.seed},       {"include_dc", g.include_dc}};
}

GrfSpec grf_from_json(const nlohmann::json& j) {
  GrfSpec g;
  g.tau = j.at("tau").get<double>();
  g.alpha = j.at("alpha").get<double>();
  g.n1 = j.at("n1").get<int>();
  g.n2 = j.at("n2").get<int>();
  g.period_length = j.at("period_length").get<double>();
  g.seed = j.at("seed").get<std::uint64_t>();
  g.include_dc = j.at("include_dc").get<bool>();
  return g;
}

nlohmann::json header_json(const CorpusSpec& s) {
  return {{"version", 1},
          {"grid_n", s.grid.n},
          {"n_systems", s.n_systems},
          {"d_pool", s.d_pool},
          {"n_train_systems", s.n_train_systems},
          {"seed", s.seed},
          {"noise_sigma", s.noise_sigma},
          {"micro", grf_to_json(s.micro)},
          {"load", grf_to_json(s.load)}};
}

void write_block(std::ofstream& f, const Tensor& t) {
  f.write(reinterpret_cast<const char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

std::vector<const SystemRecord*> Corpus::train_systems() const {
  std::vector<const SystemRecord*> out;
  for (int i = 0; i < spec.n_train_systems && i < static_cast<int>(systems.size()); ++i)
    out.push_back(&systems[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<const SystemRecord*> Corpus::test_systems() const {
  std::vector<const SystemRecord*> out;
  for (int i = spec.n_train_systems; i < static_cast<int>(systems.size()); ++i)
    out.push_back(&systems[static_cast<std::size_t>(i)]);
  return out;
}

std::size_t Corpus::pair_count() const {
  std::size_t n = 0;
  for (const auto& s : systems) n += s.loadings.size();
  return n;
}

Corpus build_darcy_corpus(const CorpusSpec& spec) {
  if (spec.n_systems < 1 || spec.d_pool < 1)
    throw ContractError("build_darcy_corpus: need at least one system and pair");
  if (spec.n_train_systems < 0 || spec.n_train_systems > spec.n_systems)
    throw ContractError("build_darcy_corpus: bad train split");
  spec.grid.validate();
  GrfSpec micro = spec.micro;
  GrfSpec load = spec.load;
  micro.n1 = micro.n2 = spec.grid.n;
  load.n1 = load.n2 = spec.grid.n;

  const std::uint64_t micro_base = split_seed(spec.seed, kStreamMicro);
  const std::uint64_t load_base = split_seed(spec.seed, kStreamLoad);
  const std::uint64_t noise_base = split_seed(spec.seed, kStreamNoise);

  Corpus corpus;
  corpus.spec = spec;
  corpus.spec.micro = micro;
  corpus.spec.load = load;
  corpus.systems.reserve(static_cast<std::size_t>(spec.n_systems));
  for (int sys = 0; sys < spec.n_systems; ++sys) {
    SystemRecord rec;
    rec.system_id = sys;
    try {
      Rng micro_rng(split_seed(micro_base, static_cast<std::uint64_t>(sys)));
      rec.b = binarize_microstructure(sample_grf(micro, micro_rng));

      Rng load_rng(split_seed(load_base, static_cast<std::uint64_t>(sys)));
      Rng noise_rng(split_seed(noise_base, static_cast<std::uint64_t>(sys)));
      rec.loadings.reserve(static_cast<std::size_t>(spec.d_pool));
      rec.solutions.reserve(static_cast<std::size_t>(spec.d_pool));
      for (int j = 0; j < spec.d_pool; ++j) {
        Tensor g = sample_grf(load, load_rng);
        rec.solutions.push_back(solve_darcy(rec.b, g));
        const bool is_train = sys < spec.n_train_systems;
        if (is_train && spec.noise_sigma > 0.0)
          g = add_noise(g, spec.noise_sigma, noise_rng);
        rec.loadings.push_back(std::move(g));
      }
    } catch (const Error& e) {
      throw Error("system " + std::to_string(sys) + ": " + e.what());
    }
    corpus.systems.push_back(std::move(rec));
  }
  return corpus;
}

TrainSample make_train_sample(const SystemRecord& rec,
                              const std::vector<int>& indices, int tag) {
  const int d = static_cast<int>(indices.size());
  if (d < 1) throw ContractError("make_train_sample: empty selection");
  const std::size_t nodes = rec.b.size();
  TrainSample s;
  s.system_id = rec.system_id;
  s.indices = indices;
  s.permutation_tag = tag;
  s.g = Tensor::zeros({static_cast<int>(nodes), d});
  s.u = Tensor::zeros({static_cast<int>(nodes), d});
  for (int j = 0; j < d; ++j) {
    const int idx = indices[static_cast<std::size_t>(j)];
    if (idx < 0 || idx >= static_cast<int>(rec.loadings.size()))
      throw ContractError("make_train_sample: pool index out of range");
    const Tensor& g = rec.loadings[static_cast<std::size_t>(idx)];
    const Tensor& u = rec.solutions[static_cast<std::size_t>(idx)];
    for (std::size_t x = 0; x < nodes; ++x) {
      s.g.data()[x * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] = g.data()[x];
      s.u.data()[x * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] = u.data()[x];
    }
  }
  return s;
}

std::vector<TrainSample> permute_augment(const SystemRecord& rec, int d,
                                         int n_rand, Rng& rng) {
  const int pool = static_cast<int>(rec.loadings.size());
  if (d > pool)
    throw ContractError("permute_augment: d exceeds the pair pool");
  if (d < 1 || n_rand < 1)
    throw ContractError("permute_augment: need d >= 1 and n_rand >= 1");
  std::vector<TrainSample> out;
  out.reserve(static_cast<std::size_t>(n_rand));
  std::vector<int> deck(static_cast<std::size_t>(pool));
  for (int t = 0; t < n_rand; ++t) {
    std::iota(deck.begin(), deck.end(), 0);
    // partial Fisher-Yates: the first d entries are a uniform ordered draw
    for (int i = 0; i < d; ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(pool - i)));
      std::swap(deck[static_cast<std::size_t>(i)], deck[static_cast<std::size_t>(j)]);
    }
    out.push_back(make_train_sample(
        rec, std::vector<int>(deck.begin(), deck.begin() + d), t));
  }
  return out;
}

std::vector<TrainSample> augment_training_set(const Corpus& corpus, int d,
                                              int n_rand, std::uint64_t seed) {
  const std::uint64_t base = split_seed(seed, kStreamAugment);
  std::vector<TrainSample> out;
  for (const SystemRecord* rec : corpus.train_systems()) {
    Rng rng(split_seed(base, static_cast<std::uint64_t>(rec->system_id)));
    auto samples = permute_augment(*rec, d, n_rand, rng);
    out.insert(out.end(), std::make_move_iterator(samples.begin()),
               std::make_move_iterator(samples.end()));
  }
  return out;
}

Tensor add_noise(const Tensor& g, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ContractError("add_noise: sigma must be nonnegative");
  if (sigma == 0.0) return g;
  Tensor out = Tensor::zeros(g.shape);
  for (std::size_t i = 0; i < g.size(); ++i)
    out.data()[i] = g.data()[i] + sigma * rng.normal();
  return out;
}

// --- container IO ---

void save_dataset(const Corpus& corpus, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  const std::string header = header_json(corpus.spec).dump();
  f.write(kMagic, 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(header.size());
  unsigned char lenb[4] = {static_cast<unsigned char>(hlen & 0xFF),
                           static_cast<unsigned char>((hlen >> 8) & 0xFF),
                           static_cast<unsigned char>((hlen >> 16) & 0xFF),
                           static_cast<unsigned char>((hlen >> 24) & 0xFF)};
  f.write(reinterpret_cast<const char*>(lenb), 4);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& rec : corpus.systems) {
    write_block(f, rec.b);
    for (std::size_t j = 0; j < rec.loadings.size(); ++j) {
      write_block(f, rec.loadings[j]);
      write_block(f, rec.solutions[j]);
    }
  }
  if (!f) throw Error("write failed: " + path);
}

Corpus load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open: " + path);
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("bad dataset magic", 0);
  unsigned char lenb[4];
  if (!f.read(reinterpret_cast<char*>(lenb), 4))
    throw FormatError("truncated header length", 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(lenb[0]) |
                             (static_cast<std::uint32_t>(lenb[1]) << 8) |
                             (static_cast<std::uint32_t>(lenb[2]) << 16) |
                             (static_cast<std::uint32_t>(lenb[3]) << 24);
  std::string header(hlen, '\0');
  if (!f.read(header.data(), hlen)) throw FormatError("truncated header", 12);

  CorpusSpec spec;
  try {
    nlohmann::json j = nlohmann::json::parse(header);
    spec.grid.n = j.at("grid_n").get<int>();
    spec.n_systems = j.at("n_systems").get<int>();
    spec.d_pool = j.at("d_pool").get<int>();
    spec.n_train_systems = j.at("n_train_systems").get<int>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.micro = grf_from_json(j.at("micro"));
    spec.load = grf_from_json(j.at("load"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad dataset header: ") + e.what(), 12);
  }
  if (spec.n_systems < 0 || spec.d_pool < 0 || spec.grid.n < 3)
    throw FormatError("implausible dataset header", 12);

  const int n = spec.grid.n;
  const std::size_t field_doubles = static_cast<std::size_t>(n) * n;
  Corpus corpus;
  corpus.spec = spec;
  auto read_field = [&](long long at) {
    Tensor t = Tensor::zeros({n, n});
    if (!f.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(field_doubles * sizeof(double))))
      throw FormatError("truncated data block", at);
    return t;
  };
  long long pos = 12 + static_cast<long long>(hlen);
  const long long block = static_cast<long long>(field_doubles * sizeof(double));
  for (int sys = 0; sys < spec.n_systems; ++sys) {
    SystemRecord rec;
    rec.system_id = sys;
    rec.b = read_field(pos);
    pos += block;
    for (int j = 0; j < spec.d_pool; ++j) {
      rec.loadings.push_back(read_field(pos));
      pos += block;
      rec.solutions.push_back(read_field(pos));
      pos += block;
    }
    corpus.systems.push_back(std::move(rec));
  }
  if (f.get() != std::ifstream::traits_type::eof())
    throw FormatError("trailing bytes after data blocks", pos);
  return corpus;
}

void write_dataset_manifest(const Corpus& corpus, const std::string& dataset_path,
                            const std::string& path) {
  std::string base = dataset_path;
  if (auto cut = base.find_last_of('/'); cut != std::string::npos)
    base = base.substr(cut + 1);
  std::ifstream f(dataset_path, std::ios::binary | std::ios::ate);
  if (!f) throw Error("cannot open: " + dataset_path);
  const std::size_t bytes = static_cast<std::size_t>(f.tellg());
  nlohmann::json j = {
      {"file", base},
      {"bytes", bytes},
      {"fnv1a64", hex64(fnv1a64_file(dataset_path))},
      {"pairs_total", corpus.pair_count()},
      {"header", header_json(corpus.spec)},
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

std::size_t dataset_file_size(int grid_n, int n_systems, int d_pool,
                              std::size_t header_len) {
  const std::size_t field = static_cast<std::size_t>(grid_n) * grid_n * sizeof(double);
  return 8 + 4 + header_len +
         static_cast<std::size_t>(n_systems) * field *
             (1 + 2 * static_cast<std::size_t>(d_pool));
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    h = fnv1a64(buf, static_cast<std::size_t>(f.gcount()), h);
    if (f.eof()) break;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace nips
