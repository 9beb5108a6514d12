// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance                 run all criteria
//   acceptance --criterion N   run criterion N only

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "pclreid/bank.hpp"
#include "pclreid/losses.hpp"
#include "pclreid/metrics.hpp"
#include "pclreid/train.hpp"

using namespace pclreid;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
  }
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void profile(const std::string& text) { std::printf("  profile: %s\n", text.c_str()); }

// Benchmark recipe shared by criteria 4 to 7.
constexpr std::size_t kEpochs = 20;
constexpr std::size_t kIters = 100;
constexpr double kLr = 3.5e-2;

TrainConfig benchmark_config(std::uint64_t seed) {
  TrainConfig c;
  c.epochs = kEpochs;
  c.iters_per_epoch = kIters;
  c.base_lr = kLr;
  c.seed = seed;
  return c;
}

struct Splits {
  LabeledDataset train, query, gallery;
};

Splits splits(const LabeledDataset& data) {
  return {select_split(data, Split::train), select_split(data, Split::query), select_split(data, Split::gallery)};
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  profile("central differences h = 1e-6, 20 instances per check, relative error <= 1e-6");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<gradcheck::Summary> all{gradcheck::pcl(20, 1),          gradcheck::id_features(20, 2),
                                      gradcheck::id_classifier(20, 3), gradcheck::triplet(20, 4),
                                      gradcheck::i2t(20, 5),           gradcheck::t2i(20, 6)};
  for (bool through_pcl : {false, true}) {
    auto enc = gradcheck::encoder(20, through_pcl ? 8 : 7, through_pcl);
    for (auto* s : enc.all()) {
      if (through_pcl) s->name += " via pcl";
      all.push_back(*s);
    }
  }
  Outcome o;
  double worst = 0;
  for (const auto& s : all) {
    worst = std::max(worst, s.worst);
    if (s.instances < 20 || s.worst > 1e-6) o.require(false, s.name + " worst " + fmt("%.3g", s.worst));
  }
  const double secs = seconds_since(t0);
  o.require(true, std::to_string(all.size()) + " checks, worst " + fmt("%.3g", worst));
  o.require(secs < 30.0, "runtime " + fmt("%.2f", secs) + " s < 30 s");
  return o;
}

Outcome loss_oracles() {
  profile("100 random instances per loss, C <= 8, B <= 16, tolerance 1e-10");
  Rng rng(20);
  double worst[5] = {0, 0, 0, 0, 0};
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 1 + rng.uniform_index(8), b = 1 + rng.uniform_index(16), d = 2 + rng.uniform_index(7);
    const double tau = 0.02 + rng.uniform();
    const Matrix k = oracle::random_unit_rows(rng, c, d);
    const Matrix f = oracle::random_unit_rows(rng, b, d);
    std::vector<int> y;
    for (std::size_t i = 0; i < b; ++i) y.push_back(static_cast<int>(rng.uniform_index(c)));
    worst[0] = std::max(worst[0], std::abs(pcl_loss(CentroidBank(k, 0.2, tau), f, y).value - oracle::pcl(k, f, y, tau)));
    const Matrix w = oracle::random_matrix(rng, d, c, 2.0);
    const double eps = 0.9 * rng.uniform();
    worst[1] = std::max(worst[1], std::abs(id_loss(w, f, y, eps).value - oracle::id(w, f, y, eps)));
    worst[2] = std::max(worst[2], std::abs(i2t_loss(k, f, y, tau).value - oracle::i2t(k, f, y, tau)));
    worst[3] = std::max(worst[3], std::abs(t2i_loss(k, f, y, tau).value - oracle::t2i(k, f, y, tau)));

    const std::size_t p = 2 + rng.uniform_index(3), kk = 2 + rng.uniform_index(3);
    std::vector<int> ty;
    for (std::size_t i = 0; i < p; ++i) ty.insert(ty.end(), kk, static_cast<int>(i));
    for (std::size_t i = ty.size(); i > 1; --i) std::swap(ty[i - 1], ty[rng.uniform_index(i)]);
    const Matrix tf = oracle::random_unit_rows(rng, ty.size(), d);
    const double margin = rng.uniform();
    worst[4] = std::max(worst[4], std::abs(triplet_loss(tf, ty, margin).value - oracle::triplet(tf, ty, margin)));
  }
  Outcome o;
  const char* names[5] = {"pcl", "id", "i2t", "t2i", "triplet"};
  for (int i = 0; i < 5; ++i) o.require(worst[i] <= 1e-10, std::string(names[i]) + " " + fmt("%.2e", worst[i]));
  return o;
}

Outcome bank_properties() {
  profile("random 8 x 6 banks; 10^4 updates per convention at mu = 0.2 and at random mu");
  Rng rng(30);
  Outcome o;
  double noop = 0, replace = 0;
  for (int t = 0; t < 1000; ++t) {
    const Matrix k = oracle::random_unit_rows(rng, 4, 5);
    const Matrix f = oracle::random_unit_rows(rng, 1, 5);
    const std::size_t y = rng.uniform_index(4);
    CentroidBank keep(k, 1.0, 0.05);
    keep.update(y, f.row(0));
    noop = std::max(noop, oracle::max_abs_diff(keep.centroids().values(), k.values()));
    CentroidBank swap(k, 0.0, 0.05);
    swap.update(y, f.row(0));
    replace = std::max(replace, oracle::max_abs_diff(swap.centroid(y), f.row(0)));
  }
  o.require(noop == 0.0, "mu = 1 max change " + fmt("%.1e", noop));
  o.require(replace <= 1e-15, "mu = 0 distance to feature " + fmt("%.1e", replace));

  double deviation = 0;
  for (auto conv : {MomentumConvention::old_centroid, MomentumConvention::new_feature}) {
    for (bool random_mu : {false, true}) {
      CentroidBank bank(oracle::random_unit_rows(rng, 8, 6), 0.2, 0.05, conv);
      for (int t = 0; t < 10000; ++t) {
        if (random_mu) bank = CentroidBank(bank.centroids(), rng.uniform(), 0.05, conv);
        const Matrix f = oracle::random_unit_rows(rng, 1, 6);
        bank.update(rng.uniform_index(8), f.row(0));
      }
      for (std::size_t c = 0; c < 8; ++c) {
        deviation = std::max(deviation, std::abs(std::sqrt(squared_norm(bank.centroid(c))) - 1.0));
      }
    }
  }
  o.require(deviation <= 1e-10, "unit-norm deviation after 10^4 updates " + fmt("%.1e", deviation));
  return o;
}

Outcome supervised_benchmark() {
  profile("standard set seed 7, loss pcl, 20 epochs x 100 iters, lr 0.035, other settings default");
  const auto s = splits(gen_synthetic(SyntheticSpec::standard(7)));
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = train_supervised(s.train, benchmark_config(7));
  const double secs = seconds_since(t0);
  const auto rep = evaluate_head(r.head, s.query, s.gallery, true);
  Outcome o;
  o.require(rep.rank1 >= 0.95, "Rank-1 " + fmt("%.4f", rep.rank1) + " >= 0.95");
  o.require(rep.mAP >= 0.90, "mAP " + fmt("%.4f", rep.mAP) + " >= 0.90");
  o.require(secs < 120.0, "training " + fmt("%.1f", secs) + " s < 120 s");
  return o;
}

Outcome loss_ablation() {
  profile("hard set seeds 1-3, 20 epochs x 100 iters, lr 0.035; medians of final mAP");
  std::vector<double> pcl, id, both;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto s = splits(gen_synthetic(SyntheticSpec::hard(seed)));
    auto run = [&](const char* losses) {
      auto c = benchmark_config(seed);
      c.losses = parse_loss_weights(losses);
      return evaluate_head(train_supervised(s.train, c).head, s.query, s.gallery, true).mAP;
    };
    pcl.push_back(run("pcl"));
    id.push_back(run("id"));
    both.push_back(run("pcl,id"));
  }
  const double mp = median(pcl), mi = median(id), mb = median(both);
  Outcome o;
  o.require(mp > mi, "mAP(pcl) " + fmt("%.4f", mp) + " > mAP(id) " + fmt("%.4f", mi));
  o.require(mb >= mp - 0.01, "mAP(pcl+id) " + fmt("%.4f", mb) + " >= mAP(pcl) - 0.01");
  return o;
}

Outcome fixed_vs_momentum_bank() {
  profile("standard set seeds 1-3, camera biases redrawn every 5 epochs, 20 epochs x 100 iters, lr 0.035");
  std::vector<double> momentum, fixed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto make = [seed](std::uint64_t variant) {
      auto spec = SyntheticSpec::standard(seed);
      spec.camera_variant = variant;
      return gen_synthetic(spec);
    };
    const auto train = select_split(make(0), Split::train);
    const auto final_set = make((kEpochs - 1) / 5);
    TrainOptions opt;
    opt.epoch_data = [&](std::size_t e) -> std::optional<LabeledDataset> {
      if (e == 0 || e % 5 != 0) return std::nullopt;
      return select_split(make(e / 5), Split::train);
    };
    for (bool fixed_bank : {false, true}) {
      auto c = benchmark_config(seed);
      c.fixed_bank = fixed_bank;
      const auto r = train_supervised(train, c, opt);
      const double m = evaluate_head(r.head, select_split(final_set, Split::query),
                                     select_split(final_set, Split::gallery), true).mAP;
      (fixed_bank ? fixed : momentum).push_back(m);
    }
  }
  const double mm = median(momentum), mf = median(fixed);
  Outcome o;
  o.require(mm >= mf, "momentum-bank mAP " + fmt("%.4f", mm) + " >= fixed-bank mAP " + fmt("%.4f", mf));
  return o;
}

bool same_bytes(const LinearLayer& a, const LinearLayer& b) {
  return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
         a.bias.size() == b.bias.size() &&
         std::memcmp(a.weight.values().data(), b.weight.values().data(), a.weight.size() * sizeof(double)) == 0 &&
         std::memcmp(a.bias.data(), b.bias.data(), a.bias.size() * sizeof(double)) == 0;
}

Outcome unsupervised_pipeline() {
  profile("standard set seed 7, labels hidden, eps 0.4, min-samples 4, 20 epochs x 100 iters, lr 0.035; "
          "reference: supervised run with the same settings");
  const auto s = splits(gen_synthetic(SyntheticSpec::standard(7)));
  auto c = benchmark_config(7);
  c.eps = 0.4;
  LabeledDataset hidden = s.train;
  hidden.labels.clear();
  const auto u = train_unsupervised(hidden, c);
  const auto assignment = *u.last_clusters;
  const double purity = cluster_purity(assignment, s.train.labels).value;
  const double unsup_map = evaluate_head(u.head, s.query, s.gallery, true).mAP;
  const double sup_map = evaluate_head(train_supervised(s.train, c).head, s.query, s.gallery, true).mAP;
  Outcome o;
  o.require(purity >= 0.90, "final purity " + fmt("%.4f", purity) + " >= 0.90 (" +
                                std::to_string(assignment.cluster_count) + " clusters, " +
                                std::to_string(assignment.noise_count()) + " noise)");
  o.require(std::abs(unsup_map - sup_map) <= 0.05,
            "mAP " + fmt("%.4f", unsup_map) + " within 0.05 of supervised " + fmt("%.4f", sup_map));
  o.require(same_bytes(u.head.layer1(), initial_head(hidden.features, c).layer1()), "first layer bit-equal");
  return o;
}

Outcome stage1_alignment() {
  profile("standard set seed 7, frozen initial encoder, stage1-lr 0.3, stage1-tau 0.2, default step count");
  const auto train = select_split(gen_synthetic(SyntheticSpec::standard(7)), Split::train);
  TrainConfig c;
  c.seed = 7;
  c.stage1_lr = 0.3;
  c.stage1_temperature = 0.2;
  const auto head = initial_head(train.features, c);
  const auto table = learn_centroids_stage1(train, head, c);
  const auto a = centroid_alignment(table.vectors, encoder_embed(head, train.features), train.labels);
  Outcome o;
  o.require(a.mean >= 0.9, "mean alignment " + fmt("%.4f", a.mean) + " >= 0.9 (min " +
                               fmt("%.4f", *std::min_element(a.per_class.begin(), a.per_class.end())) + ")");
  return o;
}

Outcome metric_oracles() {
  profile("all relevance patterns, gallery 1..6, camera filtering on and off, tolerance 1e-12");
  Outcome o;
  double worst = 0;
  std::size_t cases = 0, mismatched = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      std::vector<bool> pattern(n);
      EvalSet q{Matrix(1, 2, std::vector<double>{1, 0}), {0}, {0}};
      EvalSet g{Matrix(n, 2), {}, {}};
      for (std::size_t k = 0; k < n; ++k) {
        pattern[k] = (mask >> k) & 1u;
        const double angle = 0.1 * static_cast<double>(k + 1);
        g.features(k, 0) = std::cos(angle);
        g.features(k, 1) = std::sin(angle);
        g.ids.push_back(pattern[k] ? 0 : 1);
        g.cameras.push_back(1);
      }
      for (bool filtering : {true, false}) {
        ++cases;
        const auto r = evaluate(q, g, filtering);
        const auto brute = oracle::evaluate(q.features, q.ids, q.cameras, g.features, g.ids, g.cameras, filtering);
        const auto direct = oracle::average_precision(pattern);
        if (r.per_query_ap[0].has_value() != direct.has_value() || r.rank1 != brute.rank1 ||
            r.excluded_queries != brute.excluded) {
          ++mismatched;
          continue;
        }
        if (direct) worst = std::max(worst, std::abs(*r.per_query_ap[0] - *direct));
        worst = std::max(worst, std::abs(r.mAP - brute.map));
      }
    }
  }
  o.require(mismatched == 0 && worst <= 1e-12,
            std::to_string(cases) + " cases, max deviation " + fmt("%.1e", worst));
  const bool hand[] = {true, false, true};
  const double ap = *average_precision(hand);
  o.require(std::abs(ap - 5.0 / 6.0) <= 1e-12, "AP[1,0,1] = " + fmt("%.15f", ap) + " = 5/6");
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome reproducibility() {
  profile("pclreid train --seed 7, default settings, run twice");
  Outcome o;
#ifdef PCLREID_CLI_PATH
  const fs::path root = fs::path(PCLREID_ACCEPTANCE_TMP) / "c10";
  fs::remove_all(root);
  std::string outputs[2][2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = root / ("run" + std::to_string(run));
    fs::create_directories(dir);
    const std::string cmd = std::string("\"") + PCLREID_CLI_PATH + "\" train --seed 7 --quiet --out \"" +
                            dir.string() + "\" > \"" + (dir / "stdout.txt").string() + "\" 2> \"" +
                            (dir / "stderr.txt").string() + "\"";
    const int status = std::system(cmd.c_str());
    if (status != 0) {
      o.require(false, "run " + std::to_string(run) + " exit status " + std::to_string(status));
      return o;
    }
    outputs[run][0] = slurp(dir / "model.pclc");
    outputs[run][1] = slurp(dir / "metrics.tsv");
  }
  o.require(!outputs[0][0].empty() && outputs[0][0] == outputs[1][0],
            "model.pclc identical (" + std::to_string(outputs[0][0].size()) + " bytes)");
  o.require(!outputs[0][1].empty() && outputs[0][1] == outputs[1][1],
            "metrics.tsv identical (" + std::to_string(outputs[0][1].size()) + " bytes)");
#else
  o.require(false, "command-line tool not built");
#endif
  return o;
}

struct Criterion {
  const char* title;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"gradient suite", gradient_suite},
      {"loss oracles", loss_oracles},
      {"momentum update properties", bank_properties},
      {"supervised benchmark", supervised_benchmark},
      {"loss ablation direction", loss_ablation},
      {"momentum bank vs fixed bank under drift", fixed_vs_momentum_bank},
      {"unsupervised pipeline", unsupervised_pipeline},
      {"stage-1 centroid alignment", stage1_alignment},
      {"metric oracles", metric_oracles},
      {"reproducibility", reproducibility},
  };
  return all;
}

bool run_one(std::size_t n) {
  const auto& c = criteria()[n - 1];
  std::printf("C%zu %s\n", n, c.title);
  std::fflush(stdout);
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  std::printf("C%zu %s: %s (%.1f s) | %s\n", n, o.pass ? "PASS" : "FAIL", c.title, seconds_since(t0),
              o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      const long n = std::strtol(argv[++i], nullptr, 10);
      if (n < 1 || n > static_cast<long>(criteria().size())) {
        std::fprintf(stderr, "acceptance: criterion must be 1..%zu\n", criteria().size());
        return 1;
      }
      selected.push_back(static_cast<std::size_t>(n));
    } else {
      std::fprintf(stderr, "usage: acceptance [--criterion N]...\n");
      return 1;
    }
  }
  if (selected.empty()) {
    for (std::size_t n = 1; n <= criteria().size(); ++n) selected.push_back(n);
  }
  std::size_t failed = 0;
  for (std::size_t n : selected) failed += !run_one(n);
  if (selected.size() > 1) std::printf("%zu/%zu criteria passed\n", selected.size() - failed, selected.size());
  return failed == 0 ? 0 : 1;
}
