#pragma once

#include <string>
#include <vector>

#include "nips/dataset.hpp"
#include "nips/model.hpp"
#include "nips/trainer.hpp"

namespace nips {

struct SystemEval {
  int system_id = 0;
  double forward_error = 0;
  double kernel_error = -1;  // -1 when not computed
};

struct EvalReport {
  int d = 0;
  std::vector<SystemEval> systems;
  double e_forward = 0;
  double e_inverse = -1;
  std::string config_digest;
  std::string dataset_digest;

  std::string to_json() const;  // deterministic, byte-stable
};

/// Zero-shot forward error of one system: the kernel is built from the
/// system's first d pool pairs and used to predict those same pairs; the
/// relative L2 errors are averaged.
double system_forward_error(const Model& model, const SystemRecord& rec, int d);

/// Mean forward error over systems (the test-phase prediction metric).
double eval_forward(const Model& model,
                    const std::vector<const SystemRecord*>& systems, int d);

/// Relative Frobenius error of the materialized learned kernel against the
/// Green's kernel of rec.b, restricted to interior nodes.
double system_kernel_error(const Model& model, const SystemRecord& rec, int d,
                           const Grid2D& grid);

double eval_kernel(const Model& model,
                   const std::vector<const SystemRecord*>& systems, int d,
                   const Grid2D& grid);

/// Full report over the corpus's held-out systems.
EvalReport evaluate(const Model& model, const Corpus& corpus, int d,
                    bool kernel_errors, const std::string& config_digest,
                    const std::string& dataset_digest);

/// Relative spread of the extracted kernel across n_perm random column
/// permutations of one system's first d pairs:
/// max pairwise Frobenius distance / mean Frobenius norm.
double permutation_stability(const Model& model, const SystemRecord& rec,
                             int d, int n_perm, std::uint64_t seed);

// --- parametric sweeps ---

enum class SweepAxis { kNRand, kDk, kSigma, kResolution };

std::string to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

struct SweepBase {
  ModelConfig model;
  TrainConfig train;
  int d = 0;
  int n_rand = 25;
};

struct SweepPoint {
  double value = 0;
  double e_forward = 0;
  double e_inverse = -1;
};

/// Trains one model per value from identical seeds and evaluates it on the
/// corpus's held-out systems. kSigma points re-noise the clean corpus's
/// training loadings; kResolution points evaluate the base-trained model
/// zero-shot on freshly sampled systems at the given grid size. Asserts
/// nothing itself.
std::vector<SweepPoint> sweep(SweepAxis axis, const std::vector<double>& values,
                              const Corpus& corpus, const SweepBase& base);

void write_sweep_csv(const std::string& path, SweepAxis axis,
                     const std::vector<SweepPoint>& points);

}  // namespace nips
