#include "nips/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace nips {

namespace {

constexpr std::uint64_t kStreamPermStability = 31;
constexpr std::uint64_t kStreamSweepEval = 32;

std::vector<int> leading_indices(int d) {
  std::vector<int> idx(static_cast<std::size_t>(d));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

void check_d(const SystemRecord& rec, int d) {
  if (d < 1 || d > static_cast<int>(rec.loadings.size()))
    throw ContractError("evaluation: d exceeds the system's pair pool");
}

double frobenius_interior(const KernelMatrix& a, const KernelMatrix& b,
                          bool diff) {
  const int n = a.grid_n;
  double acc = 0.0;
  for (int i = 1; i < n - 1; ++i)
    for (int j = 1; j < n - 1; ++j) {
      const int row = i * n + j;
      for (int p = 1; p < n - 1; ++p)
        for (int q = 1; q < n - 1; ++q) {
          const int col = p * n + q;
          const double v = diff ? a.at(row, col) - b.at(row, col) : b.at(row, col);
          acc += v * v;
        }
    }
  return std::sqrt(acc);
}

}  // namespace

double system_forward_error(const Model& model, const SystemRecord& rec, int d) {
  check_d(rec, d);
  TrainSample s = make_train_sample(rec, leading_indices(d), 0);
  KernelFactors kf = model_forward(model, s.g, s.u);
  Tensor pred = forward_predict(kf, s.g, model.cfg);
  // mean relative L2 over the d pairs; quadrature cancels in the ratio but
  // keeps both norms in discrete-L2 units
  Tensor loss = relative_l2_loss(pred, s.u, model.cfg.quad_weight());
  return loss.data()[0];
}

double eval_forward(const Model& model,
                    const std::vector<const SystemRecord*>& systems, int d) {
  if (systems.empty()) throw ContractError("eval_forward: no systems");
  double acc = 0.0;
  for (const SystemRecord* rec : systems)
    acc += system_forward_error(model, *rec, d);
  return acc / static_cast<double>(systems.size());
}

double system_kernel_error(const Model& model, const SystemRecord& rec, int d,
                           const Grid2D& grid) {
  check_d(rec, d);
  if (grid.n != model.cfg.n1 || grid.n != model.cfg.n2)
    throw DimensionError("system_kernel_error: grid does not match the model");
  TrainSample s = make_train_sample(rec, leading_indices(d), 0);
  KernelFactors kf = model_forward(model, s.g, s.u);
  KernelMatrix learned = materialize_kernel(kf, model.cfg);
  KernelMatrix truth = greens_kernel(rec.b, grid);
  const double denom = frobenius_interior(truth, truth, false);
  return frobenius_interior(learned, truth, true) / denom;
}

double eval_kernel(const Model& model,
                   const std::vector<const SystemRecord*>& systems, int d,
                   const Grid2D& grid) {
  if (systems.empty()) throw ContractError("eval_kernel: no systems");
  double acc = 0.0;
  for (const SystemRecord* rec : systems)
    acc += system_kernel_error(model, *rec, d, grid);
  return acc / static_cast<double>(systems.size());
}

EvalReport evaluate(const Model& model, const Corpus& corpus, int d,
                    bool kernel_errors, const std::string& config_digest,
                    const std::string& dataset_digest) {
  auto test = corpus.test_systems();
  if (test.empty()) throw ContractError("evaluate: corpus has no held-out systems");
  EvalReport report;
  report.d = d;
  report.config_digest = config_digest;
  report.dataset_digest = dataset_digest;
  double fsum = 0.0, ksum = 0.0;
  for (const SystemRecord* rec : test) {
    SystemEval se;
    se.system_id = rec->system_id;
    se.forward_error = system_forward_error(model, *rec, d);
    fsum += se.forward_error;
    if (kernel_errors) {
      se.kernel_error = system_kernel_error(model, *rec, d, corpus.spec.grid);
      ksum += se.kernel_error;
    }
    report.systems.push_back(se);
  }
  report.e_forward = fsum / static_cast<double>(test.size());
  report.e_inverse = kernel_errors ? ksum / static_cast<double>(test.size()) : -1;
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json sys = nlohmann::json::array();
  for (const SystemEval& s : systems) {
    nlohmann::json e = {{"system_id", s.system_id},
                        {"forward_error", s.forward_error}};
    if (s.kernel_error >= 0) e["kernel_error"] = s.kernel_error;
    sys.push_back(e);
  }
  nlohmann::json j = {{"d", d},
                      {"e_forward", e_forward},
                      {"config_digest", config_digest},
                      {"dataset_digest", dataset_digest},
                      {"systems", sys}};
  if (e_inverse >= 0) j["e_inverse"] = e_inverse;
  return j.dump(2) + "\n";
}

double permutation_stability(const Model& model, const SystemRecord& rec,
                             int d, int n_perm, std::uint64_t seed) {
  check_d(rec, d);
  if (n_perm < 1) throw ContractError("permutation_stability: n_perm >= 1");
  Rng rng(split_seed(seed, kStreamPermStability));
  std::vector<KernelMatrix> kernels;
  std::vector<int> idx = leading_indices(d);
  for (int p = 0; p < n_perm; ++p) {
    if (p > 0) rng.shuffle(idx);
    TrainSample s = make_train_sample(rec, idx, p);
    kernels.push_back(materialize_kernel(model_forward(model, s.g, s.u), model.cfg));
  }
  double mean_norm = 0.0;
  for (const KernelMatrix& k : kernels) {
    double acc = 0.0;
    for (double v : k.k) acc += v * v;
    mean_norm += std::sqrt(acc);
  }
  mean_norm /= static_cast<double>(kernels.size());
  double max_dist = 0.0;
  for (std::size_t a = 0; a < kernels.size(); ++a)
    for (std::size_t b = a + 1; b < kernels.size(); ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < kernels[a].k.size(); ++i) {
        const double v = kernels[a].k[i] - kernels[b].k[i];
        acc += v * v;
      }
      max_dist = std::max(max_dist, std::sqrt(acc));
    }
  return mean_norm > 0.0 ? max_dist / mean_norm : 0.0;
}

// --- sweeps ---

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kNRand: return "n_rand";
    case SweepAxis::kDk: return "d_k";
    case SweepAxis::kSigma: return "sigma";
    case SweepAxis::kResolution: return "resolution";
  }
  throw ConfigError("unknown sweep axis");
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "n_rand" || s == "nrand") return SweepAxis::kNRand;
  if (s == "d_k" || s == "dk") return SweepAxis::kDk;
  if (s == "sigma" || s == "noise") return SweepAxis::kSigma;
  if (s == "resolution") return SweepAxis::kResolution;
  throw ConfigError("unknown sweep axis: " + s);
}

namespace {

Corpus with_noise(const Corpus& clean, double sigma) {
  Corpus noisy = clean;
  noisy.spec.noise_sigma = sigma;
  if (sigma == 0.0) return noisy;
  const std::uint64_t base = split_seed(clean.spec.seed, 3 /*noise stream*/);
  for (int sys = 0; sys < noisy.spec.n_train_systems; ++sys) {
    SystemRecord& rec = noisy.systems[static_cast<std::size_t>(sys)];
    Rng rng(split_seed(base, static_cast<std::uint64_t>(sys)));
    for (Tensor& g : rec.loadings) g = add_noise(g, sigma, rng);
  }
  return noisy;
}

double train_and_eval(const Corpus& corpus, const SweepBase& base,
                      ModelConfig mcfg, int n_rand, double* kernel_err) {
  auto samples = augment_training_set(corpus, base.d, n_rand, base.train.seed);
  Model model = Model::init(mcfg, base.train.seed);
  fit(model, samples, base.train);
  auto test = corpus.test_systems();
  if (kernel_err) *kernel_err = eval_kernel(model, test, base.d, corpus.spec.grid);
  return eval_forward(model, test, base.d);
}

}  // namespace

std::vector<SweepPoint> sweep(SweepAxis axis, const std::vector<double>& values,
                              const Corpus& corpus, const SweepBase& base) {
  if (values.empty()) throw ContractError("sweep: no values");
  std::vector<SweepPoint> out;
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    const double value = values[vi];
    SweepPoint pt;
    pt.value = value;
    try {
      switch (axis) {
        case SweepAxis::kNRand: {
          pt.e_forward = train_and_eval(corpus, base, base.model,
                                        static_cast<int>(value), &pt.e_inverse);
          break;
        }
        case SweepAxis::kDk: {
          ModelConfig m = base.model;
          m.d_k = static_cast<int>(value);
          pt.e_forward = train_and_eval(corpus, base, m, base.n_rand, &pt.e_inverse);
          break;
        }
        case SweepAxis::kSigma: {
          Corpus noisy = with_noise(corpus, value);
          pt.e_forward = train_and_eval(noisy, base, base.model, base.n_rand,
                                        &pt.e_inverse);
          break;
        }
        case SweepAxis::kResolution: {
          // one base-resolution training, evaluated zero-shot per grid size
          auto samples =
              augment_training_set(corpus, base.d, base.n_rand, base.train.seed);
          Model model = Model::init(base.model, base.train.seed);
          fit(model, samples, base.train);
          const int n = static_cast<int>(value);
          CorpusSpec spec = corpus.spec;
          spec.grid = Grid2D{n};
          spec.n_systems = static_cast<int>(corpus.systems.size()) -
                           corpus.spec.n_train_systems;
          spec.n_train_systems = 0;
          spec.noise_sigma = 0.0;
          spec.seed = split_seed(corpus.spec.seed, kStreamSweepEval + static_cast<std::uint64_t>(n));
          Corpus eval_corpus = build_darcy_corpus(spec);
          Model moved = regrid(model, n, n);
          pt.e_forward = eval_forward(moved, eval_corpus.test_systems(), base.d);
          pt.e_inverse =
              eval_kernel(moved, eval_corpus.test_systems(), base.d, spec.grid);
          break;
        }
      }
    } catch (const Error& e) {
      throw Error("sweep point " + to_string(axis) + "=" + std::to_string(value) +
                  ": " + e.what());
    }
    out.push_back(pt);
  }
  return out;
}

void write_sweep_csv(const std::string& path, SweepAxis axis,
                     const std::vector<SweepPoint>& points) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  f << to_string(axis) << ",e_forward,e_inverse\n";
  char buf[64];
  for (const SweepPoint& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.value);
    f << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", p.e_forward);
    f << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", p.e_inverse);
    f << buf << "\n";
  }
}

}  // namespace nips
