#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nips/darcy.hpp"
#include "nips/grf.hpp"

namespace nips {

/// One hidden PDE system: a permeability field and its pool of
/// (loading, solution) pairs, all on one grid.
struct SystemRecord {
  int system_id = 0;
  Tensor b;                       // n x n
  std::vector<Tensor> loadings;   // d_pool fields, n x n each
  std::vector<Tensor> solutions;  // matched, solve_darcy(b, loadings[i])
};

/// One augmented context: d pairs of the pool, stacked as columns in the
/// drawn order (column j of g and u come from the same pool pair).
struct TrainSample {
  int system_id = 0;
  std::vector<int> indices;
  Tensor g;  // N x d
  Tensor u;  // N x d
  int permutation_tag = 0;
};

struct CorpusSpec {
  int n_systems = 100;
  int d_pool = 100;
  Grid2D grid{21};
  GrfSpec micro;  // latent field thresholded into the two-phase b
  GrfSpec load;   // loading fields
  std::uint64_t seed = 0;
  /// Additive N(0, sigma^2) noise on the stored loadings of train systems;
  /// solutions always correspond to the clean loadings.
  double noise_sigma = 0.0;
  /// Leading systems are the training split; the rest are held out. The
  /// split lives in the corpus so no system ever appears on both sides.
  int n_train_systems = 0;
};

struct Corpus {
  CorpusSpec spec;
  std::vector<SystemRecord> systems;

  bool is_train(int system_index) const {
    return system_index < spec.n_train_systems;
  }
  std::vector<const SystemRecord*> train_systems() const;
  std::vector<const SystemRecord*> test_systems() const;
  std::size_t pair_count() const;
};

/// Seed fan-out: stream(kind, index) = split_seed(split_seed(seed, kind), index)
/// with kind 1 = microstructure, 2 = loadings, 3 = noise, index = system id.
Corpus build_darcy_corpus(const CorpusSpec& spec);

/// One sample from explicitly chosen pool pairs, in the given order.
TrainSample make_train_sample(const SystemRecord& rec,
                              const std::vector<int>& indices, int tag);

/// n_rand samples; each draws d of the pool uniformly without replacement,
/// the draw order being the permutation.
std::vector<TrainSample> permute_augment(const SystemRecord& rec, int d,
                                         int n_rand, Rng& rng);

/// Augments every train system of the corpus (n_rand samples each).
std::vector<TrainSample> augment_training_set(const Corpus& corpus, int d,
                                              int n_rand, std::uint64_t seed);

/// g + eps with eps iid N(0, sigma^2) per node.
Tensor add_noise(const Tensor& g, double sigma, Rng& rng);

// --- container format ---
//
// Layout: magic "NIPSDS1\0", u32 little-endian header length, UTF-8 JSON
// header, then raw little-endian float64 blocks, row-major: per system its
// b field followed by (g, p) per pool pair.

void save_dataset(const Corpus& corpus, const std::string& path);
Corpus load_dataset(const std::string& path);

/// Writes `<path>` (manifest JSON: spec, seeds, sizes, checksum) describing
/// the dataset container at `dataset_path`.
void write_dataset_manifest(const Corpus& corpus, const std::string& dataset_path,
                            const std::string& path);

/// Expected container byte size for given header parameters.
std::size_t dataset_file_size(int grid_n, int n_systems, int d_pool,
                              std::size_t header_len);

// --- checksums ---
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64_file(const std::string& path);
std::string hex64(std::uint64_t v);

}  // namespace nips
