// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Numbers are recomputed with the loop oracles in oracles.hpp wherever the
// library's own result is under test.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "essencekit/encoder_trainer.hpp"
#include "essencekit/essv.hpp"
#include "essencekit/evaluation.hpp"
#include "essencekit/losses.hpp"
#include "essencekit/optimizer.hpp"
#include "essencekit/profiles.hpp"
#include "essencekit/toy_backends.hpp"
#include "oracles.hpp"

using namespace essencekit;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

const BackendProfile& profile(const std::string& name) {
  static const auto reg = ProfileRegistry::load(fs::path("/nonexistent"));
  return reg.get(name);
}

LatentCode latent(const Generator& g, std::uint64_t seed) {
  return LatentCode(g.latent_shape(), toy::standard_normal(g.latent_shape().size(), 1, seed).col(0), g.space_id());
}

oracle::Vec raw(const SemanticEncoder& c, const ImageTensor& img) { return oracle::to_vec(c.raw_embed(img)); }

oracle::Vec minus(const oracle::Vec& a, const oracle::Vec& b) {
  oracle::Vec d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

double norm(const oracle::Vec& v) { return std::sqrt(oracle::dot(v, v)); }

// Objective at essence b, written out from its definition.
struct OracleTerms {
  double similarity = 0;
  double consistency = 0;
  double total = 0;
};

OracleTerms oracle_objective(const oracle::Vec& b, const ImageTensor& target, std::span<const LatentCode> sources,
                             const Generator& g, const SemanticEncoder& c, double ws, double wc, double wl2) {
  const auto t = raw(c, target);
  std::vector<oracle::Vec> m, d;
  for (const auto& z : sources) {
    oracle::Vec shifted = oracle::to_vec(z.data());
    for (std::size_t k = 0; k < b.size(); ++k) shifted[k] += b[k];
    m.push_back(raw(c, g.decode(LatentCode(z.shape(), oracle::to_eigen(shifted), z.space_id()))));
    d.push_back(minus(m.back(), raw(c, g.decode(z))));
  }
  OracleTerms r;
  r.similarity = oracle::similarity(t, m);
  r.consistency = d.size() >= 2 ? oracle::consistency(d) : 0.0;
  r.total = ws * r.similarity + wc * r.consistency + wl2 * norm(b);
  return r;
}

// ---------------------------------------------------------------------------

Outcome loss_conformance() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 7;
    const std::size_t dim = 2 + (trial * 7) % 31;
    const auto t = oracle::gaussian(dim, rng);
    std::vector<oracle::Vec> m, d;
    std::vector<SemanticEmbedding> me;
    std::vector<SemanticDelta> de;
    for (std::size_t i = 0; i < n; ++i) {
      m.push_back(oracle::gaussian(dim, rng, 0.1 + trial % 5));
      d.push_back(oracle::gaussian(dim, rng, 0.1 + trial % 3));
      me.emplace_back(oracle::to_eigen(m.back()), "enc");
      de.emplace_back(oracle::to_eigen(d.back()), "enc");
    }
    const double s = similarity_loss(SemanticEmbedding(oracle::to_eigen(t), "enc"), me);
    const double c = consistency_loss(std::span<const SemanticDelta>(de));
    worst = std::max({worst, std::abs(s - oracle::similarity(t, m)), std::abs(c - oracle::consistency(d))});

    const double nb = std::abs(oracle::gaussian(1, rng)[0]) * 10;
    const auto total = compose(s, c, nb, LossWeights{});
    worst = std::max(worst, std::abs(total.total - (oracle::similarity(t, m) + 0.5 * oracle::consistency(d) + 0.003 * nb)));
  }
  return {worst <= 1e-10, "max abs error " + fmt(worst) + " over 100 inputs"};
}

Outcome linear_additivity() {
  const auto b = make_backends(profile("toy-linear"));
  const auto& g = *b.generator;
  const auto& c = *b.encoder;
  std::mt19937_64 rng(202);
  double worst_delta = 0.0, worst_cons = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = g.latent_shape().size();
    const auto bv = oracle::gaussian(n, rng, 0.5 + trial % 4);
    const auto essence = EssenceVector::manual(g.latent_shape(), oracle::to_eigen(bv), g.space_id());
    const LatentCode z1(g.latent_shape(), oracle::to_eigen(oracle::gaussian(n, rng)), g.space_id());
    const LatentCode z2(g.latent_shape(), oracle::to_eigen(oracle::gaussian(n, rng)), g.space_id());
    const auto d1 = minus(raw(c, g.decode(z1 + essence)), raw(c, g.decode(z1)));
    const auto d2 = minus(raw(c, g.decode(z2 + essence)), raw(c, g.decode(z2)));
    for (std::size_t k = 0; k < d1.size(); ++k) worst_delta = std::max(worst_delta, std::abs(d1[k] - d2[k]));
    const std::vector<SemanticDelta> deltas{semantic_delta(g.decode(z1), g.decode(z1 + essence), c),
                                            semantic_delta(g.decode(z2), g.decode(z2 + essence), c)};
    worst_cons = std::max(worst_cons, consistency_loss(std::span<const SemanticDelta>(deltas)));
  }
  return {worst_delta <= 1e-9 && worst_cons <= 1e-6,
          "max delta gap " + fmt(worst_delta) + ", max consistency " + fmt(worst_cons)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  int configs = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const LatentShape ls{1 + static_cast<std::size_t>(trial % 4), 2 + static_cast<std::size_t>(trial % 7)};
    const ImageShape is{2 + static_cast<std::size_t>(trial % 3), 3, 1 + 2 * static_cast<std::size_t>(trial % 2)};
    const std::size_t embed = 4 + static_cast<std::size_t>(trial % 13);
    std::unique_ptr<Generator> g;
    std::unique_ptr<SemanticEncoder> c;
    if (trial % 4 == 3) {
      g = std::make_unique<toy::LinearGenerator>(100 + trial, ls, is);
      c = std::make_unique<toy::LinearEncoder>(200 + trial, is, embed);
    } else {
      g = std::make_unique<toy::TanhGenerator>(100 + trial, 0.25 + 0.05 * (trial % 3), ls, is);
      c = std::make_unique<toy::MlpEncoder>(200 + trial, 0.25, 8 + trial % 9, is, embed);
    }
    std::vector<LatentCode> zs;
    const std::size_t n = 2 + trial % 5;
    for (std::size_t i = 0; i < n; ++i) {
      zs.emplace_back(ls, oracle::to_eigen(oracle::gaussian(ls.size(), rng)), g->space_id());
    }
    const auto target = g->decode(LatentCode(ls, oracle::to_eigen(oracle::gaussian(ls.size(), rng)), g->space_id()));
    const LossWeights w{1.0, 0.25 * (trial % 3), 0.003 * (1 + trial % 2)};
    const Objective obj(*g, *c, target, SourceBatch(zs, "fd"), w);
    const auto bv = oracle::gaussian(ls.size(), rng, 0.4);
    Vector grad;
    obj.evaluate(oracle::to_eigen(bv), &grad);

    const double h = 1e-5;
    oracle::Vec fd(bv.size());
    for (std::size_t k = 0; k < bv.size(); ++k) {
      auto up = bv, dn = bv;
      up[k] += h;
      dn[k] -= h;
      fd[k] = (oracle_objective(up, target, zs, *g, *c, w.similarity, w.consistency, w.l2).total -
               oracle_objective(dn, target, zs, *g, *c, w.similarity, w.consistency, w.l2).total) /
              (2 * h);
    }
    const auto diff = minus(oracle::to_vec(grad), fd);
    const double rel = norm(diff) / std::max({norm(fd), norm(oracle::to_vec(grad)), 1e-12});
    worst = std::max(worst, rel);
    ++configs;
  }
  return {configs >= 20 && worst <= 1e-4, "worst relative error " + fmt(worst) + " over " + std::to_string(configs) +
                                              " configurations"};
}

Outcome optimization_success() {
  const auto b = make_backends(profile("toy"));
  const auto& g = *b.generator;
  const auto& c = *b.encoder;
  int ok = 0;
  double worst_red = 1.0, worst_cons = 0.0;
  for (std::uint64_t task = 0; task < 10; ++task) {
    // The hidden target latent is never shown to the optimizer.
    const auto target = g.decode(latent(g, 9000 + task));
    std::vector<LatentCode> pool;
    for (std::uint64_t i = 0; i < 16; ++i) pool.push_back(latent(g, 9100 + 100 * task + i));
    OptimizerConfig cfg;
    cfg.seed = task;
    const auto batch = sample_source_batch(pool, static_cast<std::size_t>(cfg.batch_size), task);
    const auto r = optimize_essence(target, batch, g, c, nullptr, cfg);
    if (r.trace.steps.size() > 1000) return {false, "ran past 1000 iterations"};

    const double init = r.trace.steps.front().similarity;
    const auto fin = oracle_objective(oracle::to_vec(r.essence.data()), target, batch.latents(), g, c, 1.0, 0.5, 0.003);
    const double red = 1.0 - fin.similarity / init;
    worst_red = std::min(worst_red, red);
    worst_cons = std::max(worst_cons, fin.consistency);
    if (red >= 0.9 && fin.consistency <= 0.05) ++ok;
  }
  return {ok >= 9, std::to_string(ok) + "/10 tasks; worst reduction " + fmt(100 * worst_red) +
                       "%, worst final consistency " + fmt(worst_cons)};
}

Outcome fid_oracle() {
  const std::size_t f = 8;
  const Matrix q = Eigen::HouseholderQR<Matrix>(toy::standard_normal(f, f, 55)).householderQ();
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0.1, 4.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    // Covariances sharing eigenvectors have Tr((Sa Sb)^{1/2}) = sum sqrt(a_i b_i).
    Vector da(f), db(f);
    long double tr = 0;
    for (std::size_t i = 0; i < f; ++i) {
      da[i] = u(rng);
      db[i] = u(rng);
      tr += da[i] + db[i] - 2.0L * std::sqrt(da[i] * db[i]);
    }
    const auto ma = oracle::gaussian(f, rng), mb = oracle::gaussian(f, rng);
    const auto dm = minus(ma, mb);
    const double expected = oracle::dot(dm, dm) + static_cast<double>(tr);
    const GaussianStats a{oracle::to_eigen(ma), q * da.asDiagonal() * q.transpose()};
    const GaussianStats b{oracle::to_eigen(mb), q * db.asDiagonal() * q.transpose()};
    worst = std::max(worst, std::abs(frechet_distance(a, b) - expected));
  }

  Matrix x(64, f), y(64, f);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Eigen::Index i = 0; i < 64; ++i) {
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(f); ++j) {
      x(i, j) = n(rng) * (1 + 0.2 * j);
      y(i, j) = n(rng) + 0.3 * j;
    }
  }
  const double self = fid(x, x);
  const double asym = std::abs(fid(x, y) - fid(y, x));
  return {worst <= 1e-3 && self <= 1e-6 && asym <= 1e-8,
          "closed-form error " + fmt(worst) + ", fid(X,X) " + fmt(self) + ", asymmetry " + fmt(asym)};
}

MetricRecord rec(std::string t, std::string s, double sem) { return {std::move(t), std::move(s), 0.0, 0.0, sem, {}}; }

Outcome aggregation() {
  const std::vector<MetricRecord> hand{rec("a", "1", 0.2), rec("a", "2", 0.4), rec("b", "1", 0.6), rec("b", "2", 0.8)};
  const double two_stage = aggregate(hand, {}).overall.at("sem_clip").mean;

  // Three sources on one target, one on the other.
  const std::vector<MetricRecord> unbalanced{rec("a", "1", 0.1), rec("a", "2", 0.2), rec("a", "3", 0.3),
                                             rec("b", "1", 0.9)};
  const double got = aggregate(unbalanced, {}).overall.at("sem_clip").mean;
  const double oracle_two_stage = ((0.1 + 0.2 + 0.3) / 3 + 0.9) / 2;
  const double pooled = (0.1 + 0.2 + 0.3 + 0.9) / 4;
  const bool pass = two_stage == 0.5 && std::abs(got - oracle_two_stage) <= 1e-15 && std::abs(got - pooled) > 0.1;
  return {pass, "hand example " + fmt(two_stage) + "; unbalanced " + fmt(got) + " vs pooled " + fmt(pooled)};
}

Outcome golden_config() {
  const json optimizer_golden = {{"iterations", 1000},
                                 {"learning_rate", 0.2},
                                 {"batch_size", 4},
                                 {"weights", {{"similarity", 1.0}, {"lambda_consistency", 0.5}, {"lambda_l2", 0.003}}},
                                 {"init_mode", "noise"},
                                 {"seed", 0},
                                 {"adam_beta1", 0.9},
                                 {"adam_beta2", 0.999},
                                 {"adam_eps", 1e-8},
                                 {"init_noise_sigma", 1e-3},
                                 {"early_stop_patience", 0}};
  const json encoder_golden = {{"learning_rate", 1e-4},
                               {"iterations", 3000},
                               {"targets_per_step", 1},
                               {"source_batch", 5},
                               {"weights", {{"similarity", 1.0}, {"lambda_consistency", 0.5}, {"lambda_l2", 0.003}}},
                               {"train_set_size", 200},
                               {"eval_set_size", 50},
                               {"seed", 0},
                               {"eval_every", 500},
                               {"adam_beta1", 0.9},
                               {"adam_beta2", 0.999},
                               {"adam_eps", 1e-8}};
  const bool opt_ok = json(OptimizerConfig{}) == optimizer_golden;
  const bool enc_ok = json(EncoderTrainConfig{}) == encoder_golden;
  std::string detail = std::string("optimizer ") + (opt_ok ? "matches" : "differs") + ", encoder " +
                       (enc_ok ? "matches" : "differs");
  if (!opt_ok) detail += "; got " + json(OptimizerConfig{}).dump();
  if (!enc_ok) detail += "; got " + json(EncoderTrainConfig{}).dump();
  return {opt_ok && enc_ok, detail};
}

Outcome encoder_finetune() {
  const auto b = make_backends(profile("toy"));
  const auto& g = *b.generator;
  const auto& c = *b.encoder;
  std::vector<ImageTensor> train, held_out;
  std::vector<LatentCode> pool;
  for (std::uint64_t i = 0; i < 200; ++i) train.push_back(g.decode(latent(g, 20000 + i)));
  for (std::uint64_t i = 0; i < 50; ++i) held_out.push_back(g.decode(latent(g, 21000 + i)));
  for (std::uint64_t i = 0; i < 64; ++i) pool.push_back(latent(g, 22000 + i));

  EncoderTrainConfig cfg;
  cfg.learning_rate = 3e-3;  // default rate is tuned for pretrained-scale encoders
  cfg.seed = 11;
  const auto g_digest = g.parameter_digest();
  const auto c_digest = c.parameter_digest();
  const auto enc = finetune_essence_encoder(*b.inverter, train, pool, b.generator, b.encoder, cfg, held_out);

  const auto sources = eval_source_batch(pool, cfg);
  const auto held_out_objective = [&](const Inverter& inv) {
    long double s = 0;
    for (const auto& t : held_out) {
      s += oracle_objective(oracle::to_vec(inv.invert(t).data()), t, sources.latents(), g, c, 1.0, 0.5, 0.003).total;
    }
    return static_cast<double>(s / held_out.size());
  };
  const double before = held_out_objective(*b.inverter);
  const double after = held_out_objective(enc.inverter());
  const double drop = 1.0 - after / before;

  const bool frozen = g.parameter_digest() == g_digest && c.parameter_digest() == c_digest;
  const auto e1 = essv::encode(enc.extract(held_out[0]).shape(), enc.extract(held_out[0]).data());
  const auto e2 = essv::encode(enc.extract(held_out[0]).shape(), enc.extract(held_out[0]).data());
  const auto again = finetune_essence_encoder(*b.inverter, train, pool, b.generator, b.encoder, cfg, held_out);
  const auto e3 = essv::encode(again.extract(held_out[0]).shape(), again.extract(held_out[0]).data());
  const bool deterministic = e1 == e2 && e1 == e3;
  return {drop >= 0.5 && frozen && deterministic,
          "held-out objective " + fmt(before) + " -> " + fmt(after) + " (" + fmt(100 * drop) + "% drop), frozen " +
              (frozen ? "yes" : "no") + ", extract deterministic " + (deterministic ? "yes" : "no")};
}

EvaluationFixture ablation_fixture() {
  EvaluationFixture fx;
  fx.backends = make_backends(profile("toy"));
  const auto& g = *fx.backends.generator;
  for (std::uint64_t t = 0; t < 10; ++t) {
    char id[8];
    std::snprintf(id, sizeof id, "t%03u", static_cast<unsigned>(t));
    fx.targets.push_back({id, g.decode(latent(g, 30000 + t)), true});
  }
  for (std::uint64_t i = 0; i < 16; ++i) fx.training_pool.push_back(latent(g, 31000 + i));
  for (std::uint64_t i = 0; i < 10; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "e%03u", static_cast<unsigned>(i));
    fx.eval_sources.push_back({id, latent(g, 32000 + i)});
  }
  fx.jobs = 4;
  return fx;
}

Outcome ablation() {
  const auto fx = ablation_fixture();
  const auto& g = *fx.backends.generator;
  const auto& c = *fx.backends.encoder;
  const auto run = [&](AblationVariant v) {
    OptimizerConfig cfg = fx.optimizer;
    cfg.weights = ablation_weights(v, cfg.weights);
    std::vector<EssenceResult> results;
    run_pipeline(fx, cfg, std::string(to_string(v)), &results);
    return results;
  };
  const auto full = run(AblationVariant::Full);
  const auto no_sim = run(AblationVariant::NoSimilarity);
  const auto no_l2 = run(AblationVariant::NoL2);
  const auto no_cons = run(AblationVariant::NoConsistency);

  // Mean target cosine of the edited held-out sources; b = 0 is the baseline.
  const auto mean_sem = [&](const std::vector<EssenceResult>* rs) {
    long double s = 0;
    for (std::size_t t = 0; t < fx.targets.size(); ++t) {
      const auto tv = raw(c, fx.targets[t].image);
      long double per = 0;
      for (const auto& src : fx.eval_sources) {
        const auto img = rs ? apply_essence(src.latent, (*rs)[t].essence, g) : g.decode(src.latent);
        per += oracle::cosine(tv, raw(c, img));
      }
      s += per / fx.eval_sources.size();
    }
    return static_cast<double>(s / fx.targets.size());
  };
  const auto heldout_consistency = [&](const EssenceVector& b) {
    std::vector<oracle::Vec> d;
    for (const auto& src : fx.eval_sources) {
      d.push_back(minus(raw(c, apply_essence(src.latent, b, g)), raw(c, g.decode(src.latent))));
    }
    return oracle::consistency(d);
  };

  const double base = mean_sem(nullptr);
  const double sem_full = mean_sem(&full);
  const double sem_no_sim = mean_sem(&no_sim);
  // Near zero: under a tenth of the change the full objective produces.
  const bool sim_ok = std::abs(sem_no_sim - base) <= 0.1 * std::abs(sem_full - base);

  bool l2_ok = true;
  int cons_worse = 0;
  for (std::size_t t = 0; t < fx.targets.size(); ++t) {
    const double nf = norm(oracle::to_vec(full[t].essence.data()));
    const double nl = norm(oracle::to_vec(no_l2[t].essence.data()));
    l2_ok = l2_ok && nl > nf;
    if (heldout_consistency(no_cons[t].essence) > heldout_consistency(full[t].essence)) ++cons_worse;
  }
  const bool cons_ok = 2 * cons_worse > static_cast<int>(fx.targets.size());
  return {sim_ok && l2_ok && cons_ok,
          "semantic change full " + fmt(sem_full - base) + " vs no_similarity " + fmt(sem_no_sim - base) +
              "; no_l2 norm larger on " + (l2_ok ? "every" : "not every") + " target; no_consistency worse on " +
              std::to_string(cons_worse) + "/10"};
}

int quiet_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Outcome determinism() {
  const auto dir = oracle::scratch_dir("acceptance");
  const auto p = [&](const std::string& rel) { return (dir / rel).string(); };
  if (quiet_cli({"fixture", "--out", p("fx"), "--seed", "3", "--non-face", "2"}) != 0) return {false, "fixture failed"};
  const std::string target = p("fx/targets/t000.png");
  for (const char* run : {"r1", "r2"}) {
    const std::string r(run);
    const std::vector<std::vector<std::string>> commands{
        {"transfer", "--target", target, "--sources", p("fx/train_sources"), "--out", p(r + "/transfer/b.essv")},
        {"evaluate", "--fixture", p("fx"), "--out", p(r + "/evaluate"), "--jobs", "4"},
        {"ablate", "--fixture", p("fx"), "--out", p(r + "/ablate"), "--jobs", "3"},
        {"sensitivity", "--fixture", p("fx"), "--out", p(r + "/sensitivity")},
    };
    for (const auto& cmd : commands) {
      if (quiet_cli(cmd) != 0) return {false, cmd.front() + " failed"};
    }
  }
  int compared = 0;
  std::string mismatch;
  for (const auto& e : fs::recursive_directory_iterator(dir / "r1")) {
    const auto ext = e.path().extension();
    if (!e.is_regular_file() || (ext != ".essv" && ext != ".csv")) continue;
    const auto twin = dir / "r2" / fs::relative(e.path(), dir / "r1");
    if (!fs::exists(twin) || essv::read_file(e.path()) != essv::read_file(twin)) mismatch = fs::relative(e.path(), dir);
    ++compared;
  }
  fs::remove_all(dir);
  if (!mismatch.empty()) return {false, mismatch + " differs between runs"};
  return {compared >= 10, std::to_string(compared) + " ESSV1/CSV files byte-identical across two runs"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"loss formulas match brute force", loss_conformance},
      {"linear backend double additivity", linear_additivity},
      {"objective gradient vs central differences", gradient_check},
      {"toy hidden-target optimization", optimization_success},
      {"FID closed form, identity, symmetry", fid_oracle},
      {"two-stage aggregation", aggregation},
      {"golden default configs", golden_config},
      {"encoder fine-tuning efficacy", encoder_finetune},
      {"ablation directionality", ablation},
      {"byte-identical repeat runs", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail << " ("
              << fmt(secs) << " s)\n";
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
