// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "essencekit/encoder_trainer.hpp"
#include "essencekit/essv.hpp"
#include "essencekit/evaluation.hpp"
#include "essencekit/image_io.hpp"
#include "essencekit/optimizer.hpp"
#include "essencekit/profiles.hpp"
#include "fixture.hpp"

namespace essencekit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BackendUnavailable:
    case ErrorCode::ProfileMismatch:
    case ErrorCode::SpaceMismatch:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::DimMismatch:
    case ErrorCode::MissingInverter:
    case ErrorCode::NonTrainableInverter:
      return kExitBackend;
    case ErrorCode::NumericFailure:
    case ErrorCode::ZeroVector:
    case ErrorCode::ZeroEmbedding:
    case ErrorCode::SingularCovariance:
      return kExitNumeric;
    default:
      return kExitConfig;
  }
}

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path parent_or_cwd(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

void refuse_existing(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) raise(ErrorCode::InvalidConfig, p.string() + " already exists (pass --force to overwrite)");
}

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  json j;
  try {
    j = json::parse(essv::read_file(path));
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
  if (!j.is_object()) raise(ErrorCode::InvalidConfig, path + ": expected a JSON object");
  // A run manifest is accepted as a config file.
  if (j.contains("config") && j.at("config").is_object()) return j.at("config");
  return j;
}

struct Common {
  std::string profile;
  std::string profile_dir;
  std::string config;
  int jobs = 1;
  bool force = false;
};

void add_common(CLI::App* sub, Common& c, bool outputs = true) {
  sub->add_option("--profile", c.profile, "Backend profile name (default: toy)");
  sub->add_option("--profile-dir", c.profile_dir, "Directory holding profiles.json (overrides $ESSENCEKIT_PROFILE_DIR)");
  sub->add_option("--config", c.config, "JSON config file or a previous run manifest");
  if (outputs) {
    sub->add_option("--jobs", c.jobs, "Worker threads for evaluation fan-out")->check(CLI::PositiveNumber);
    sub->add_flag("--force", c.force, "Overwrite existing outputs");
  }
}

struct Context {
  json file;
  BackendProfile profile;
  BackendSet backends;
};

Context load_context(const Common& c) {
  Context ctx;
  ctx.file = read_config_file(c.config);
  std::string name = c.profile;
  if (name.empty()) name = ctx.file.value("profile", std::string("toy"));
  const auto reg = ProfileRegistry::load(c.profile_dir.empty() ? std::nullopt
                                                               : std::optional<fs::path>(c.profile_dir));
  ctx.profile = reg.get(name);
  ctx.backends = make_backends(ctx.profile);
  return ctx;
}

struct OptimizerFlags {
  std::optional<int> iters;
  std::optional<int> n;
  std::optional<double> lr;
  std::optional<double> lambda_c;
  std::optional<double> lambda_l2;
  std::optional<std::string> init;
  std::optional<std::uint64_t> seed;
};

void add_optimizer_flags(CLI::App* sub, OptimizerFlags& f, bool with_n = true) {
  sub->add_option("--iters", f.iters, "Adam iterations (default 1000)");
  sub->add_option("--lr", f.lr, "Adam learning rate (default 0.2)");
  if (with_n) sub->add_option("--n", f.n, "Source batch size N (default 4)");
  sub->add_option("--lambda-c", f.lambda_c, "Consistency weight (default 0.5)");
  sub->add_option("--lambda-l2", f.lambda_l2, "L2 weight (default 0.003)");
  sub->add_option("--init", f.init, "Initialization: noise or inversion")->check(CLI::IsMember({"noise", "inversion"}));
  sub->add_option("--seed", f.seed, "Random seed");
}

OptimizerConfig resolve_optimizer(const json& file, const OptimizerFlags& f) {
  OptimizerConfig cfg;
  try {
    if (file.contains("optimizer")) file.at("optimizer").get_to(cfg);
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidConfig, std::string("optimizer config: ") + e.what());
  }
  if (f.iters) cfg.iterations = *f.iters;
  if (f.lr) cfg.learning_rate = *f.lr;
  if (f.n) cfg.batch_size = *f.n;
  if (f.lambda_c) cfg.weights.consistency = *f.lambda_c;
  if (f.lambda_l2) cfg.weights.l2 = *f.lambda_l2;
  if (f.init) cfg.init_mode = init_mode_from_string(*f.init);
  if (f.seed) cfg.seed = *f.seed;
  cfg.validate();
  return cfg;
}

class Manifest {
 public:
  Manifest(fs::path dir, std::string command, json config, const Context& ctx, std::uint64_t seed, json inputs,
           json outputs)
      : path_(std::move(dir) / "manifest.json") {
    body_ = {{"command", std::move(command)},
             {"config", std::move(config)},
             {"profile", {{"name", ctx.profile.name}, {"digest", ctx.backends.profile_digest}}},
             {"backends",
              {{"generator", ctx.backends.generator->parameter_digest()},
               {"encoder", ctx.backends.encoder->parameter_digest()}}},
             {"seed", seed},
             {"inputs", std::move(inputs)},
             {"outputs", std::move(outputs)},
             {"started_at", utc_now()}};
    if (ctx.backends.second_encoder) body_["backends"]["second_encoder"] = ctx.backends.second_encoder->parameter_digest();
    body_["config"]["profile"] = ctx.profile.name;
  }

  void start() const {
    fs::create_directories(path_.parent_path());
    essv::write_file_atomic(path_, body_.dump(2) + "\n");
  }

  void finish() {
    body_["finished_at"] = utc_now();
    essv::write_file_atomic(path_, body_.dump(2) + "\n");
  }

 private:
  fs::path path_;
  json body_;
};

std::vector<fs::path> collect_files(const std::vector<std::string>& inputs, std::initializer_list<std::string_view> exts) {
  std::vector<fs::path> out;
  const auto wanted = [&](const fs::path& p) {
    return std::any_of(exts.begin(), exts.end(), [&](std::string_view e) { return p.extension() == e; });
  };
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && wanted(e.path())) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p)) {
      out.push_back(p);
    } else {
      raise(ErrorCode::Io, in + " does not exist");
    }
  }
  return out;
}

ImageTensor read_image(const fs::path& p, const BackendSet& b) {
  return image_io::read_png(p, b.generator->value_range(), b.generator->image_shape().channels);
}

// Latents from .essv files; PNGs are inverted with the profile's inverter.
std::vector<SourceAsset> load_sources(const std::vector<std::string>& inputs, const BackendSet& b) {
  std::vector<SourceAsset> out;
  std::set<std::string> seen;
  for (const auto& p : collect_files(inputs, {".essv", ".png"})) {
    const auto id = p.stem().string();
    if (!seen.insert(id).second) raise(ErrorCode::InvalidConfig, "two sources share the id '" + id + "'");
    if (p.extension() == ".essv") {
      out.push_back({id, essv::load_latent(p)});
    } else {
      if (!b.inverter) raise(ErrorCode::MissingInverter, "image sources need an inverter in the profile");
      out.push_back({id, b.inverter->invert(read_image(p, b))});
    }
  }
  if (out.empty()) raise(ErrorCode::EmptyBatch, "no sources found");
  return out;
}

std::vector<ImageTensor> load_images(const std::string& dir, const BackendSet& b) {
  std::vector<ImageTensor> out;
  for (const auto& p : collect_files({dir}, {".png"})) out.push_back(read_image(p, b));
  if (out.empty()) raise(ErrorCode::EmptyBatch, "no PNG images in " + dir);
  return out;
}

json config_snapshot(const Context& ctx, const OptimizerConfig& cfg) {
  return {{"profile", ctx.profile.name}, {"profile_digest", ctx.backends.profile_digest}, {"optimizer", cfg}};
}

// Targets row, sources row, then one results row per essence.
ImageTensor render_grid(const std::vector<ImageTensor>& targets, const std::vector<SourceAsset>& sources,
                        const std::vector<EssenceVector>& essences, const Generator& g, std::size_t max_sources = 8) {
  const std::size_t n = std::min(max_sources, sources.size());
  std::vector<std::vector<ImageTensor>> rows(2);
  rows[0] = targets;
  for (std::size_t i = 0; i < n; ++i) rows[1].push_back(g.decode(sources[i].latent));
  for (const auto& b : essences) {
    auto& row = rows.emplace_back();
    for (std::size_t i = 0; i < n; ++i) row.push_back(apply_essence(sources[i].latent, b, g));
  }
  return image_io::compose_grid(rows);
}

void write_report(const fs::path& dir, const EvaluationReport& report, double scale) {
  fs::create_directories(dir);
  essv::write_file_atomic(dir / "report.json", report.to_json(scale).dump(2) + "\n");
  essv::write_file_atomic(dir / "records.csv", report.records_csv(scale));
  essv::write_file_atomic(dir / "fid.csv", report.fid_csv());
}

std::string summary_header() {
  return "variant,id_source,id_source_std,id_target,id_target_std,sem_clip,sem_clip_std,sem_blip,sem_blip_std,fid,"
         "fid_std,essence_norm,heldout_consistency\n";
}

std::string summary_row(const std::string& name, const EvaluationReport& r, double scale) {
  std::string row = name;
  const auto cell = [&](const char* key, double f, bool with_std) {
    auto it = r.overall.find(key);
    row += "," + (it == r.overall.end() ? std::string() : fmt(f * it->second.mean));
    if (with_std) row += "," + (it == r.overall.end() ? std::string() : fmt(f * it->second.std));
  };
  cell("id_source", scale, true);
  cell("id_target", scale, true);
  cell("sem_clip", scale, true);
  cell("sem_blip", scale, true);
  cell("fid", 1.0, true);
  cell("essence_norm", 1.0, false);
  cell("heldout_consistency", 1.0, false);
  return row + "\n";
}

std::string per_target_rows(const std::string& name, const EvaluationReport& r, double scale) {
  std::string out;
  for (const auto& t : r.targets) {
    const auto extra = [&](const char* key) {
      auto it = t.extras.find(key);
      return it == t.extras.end() ? std::string() : fmt(it->second);
    };
    out += name + "," + t.target_id + "," + fmt(scale * t.sem_clip) + "," + extra("essence_norm") + "," +
           extra("heldout_consistency") + "," + extra("similarity") + "," + extra("consistency") + "\n";
  }
  return out;
}

constexpr const char* kPerTargetHeader = "variant,target_id,sem_clip,essence_norm,heldout_consistency,similarity,consistency\n";

double resolve_scale(const json& file, std::optional<double> flag) {
  if (flag) return *flag;
  if (file.contains("evaluation")) return file.at("evaluation").value("scale", 1.0);
  return 1.0;
}

// ---------------------------------------------------------------------------

struct TransferArgs {
  Common common;
  OptimizerFlags opt;
  std::string target;
  std::vector<std::string> sources;
  std::string out;
  std::string essence;
  std::string grid;
};

int cmd_transfer(const TransferArgs& a, std::ostream& out) {
  auto ctx = load_context(a.common);
  const auto cfg = resolve_optimizer(ctx.file, a.opt);
  const fs::path out_path(a.out);
  const fs::path dir = parent_or_cwd(out_path);
  refuse_existing(out_path, a.common.force);
  if (!a.grid.empty()) refuse_existing(a.grid, a.common.force);
  const auto& g = *ctx.backends.generator;

  const auto target = read_image(a.target, ctx.backends);
  const auto sources = load_sources(a.sources, ctx.backends);

  json outputs = {{"essence", out_path.string()}, {"trace", (dir / "trace.json").string()},
                  {"manipulations", (dir / "manipulations").string()}};
  if (!a.grid.empty()) outputs["grid"] = a.grid;
  Manifest manifest(dir, "transfer", config_snapshot(ctx, cfg), ctx, cfg.seed,
                    {{"target", a.target}, {"sources", a.sources}, {"essence", a.essence}}, outputs);
  manifest.start();

  std::optional<EssenceVector> essence;
  json trace;
  if (!a.essence.empty()) {
    essence = essv::load_essence(a.essence);
    trace = {{"applied", a.essence}};
  } else {
    std::vector<LatentCode> pool;
    for (const auto& s : sources) pool.push_back(s.latent);
    const auto batch = sample_source_batch(pool, static_cast<std::size_t>(cfg.batch_size), cfg.seed);
    auto result = optimize_essence(target, batch, g, *ctx.backends.encoder, ctx.backends.inverter.get(), cfg);
    trace = result.trace.to_json();
    trace["config"] = cfg;
    trace["batch"] = batch.batch_id();
    essence = std::move(result.essence);
  }
  essv::save_essence(out_path, *essence, config_snapshot(ctx, cfg));
  essv::write_file_atomic(dir / "trace.json", trace.dump(2) + "\n");
  fs::create_directories(dir / "manipulations");
  for (const auto& s : sources) {
    image_io::write_png(dir / "manipulations" / (s.id + ".png"), apply_essence(s.latent, *essence, g));
  }
  if (!a.grid.empty()) image_io::write_png(a.grid, render_grid({target}, sources, {*essence}, g));
  manifest.finish();
  out << "wrote " << out_path.string() << " (|b| = " << fmt(essence->data().norm()) << ")\n";
  return kExitOk;
}

struct ExtractArgs {
  Common common;
  std::string checkpoint;
  std::string target;
  std::string out;
};

int cmd_extract(const ExtractArgs& a, std::ostream& out) {
  auto ctx = load_context(a.common);
  const fs::path out_path(a.out);
  refuse_existing(out_path, a.common.force);
  const auto encoder = load_encoder_checkpoint(a.checkpoint, ctx.backends);
  const auto target = read_image(a.target, ctx.backends);
  Manifest manifest(parent_or_cwd(out_path), "extract", {{"checkpoint", a.checkpoint}}, ctx, 0,
                    {{"checkpoint", a.checkpoint}, {"target", a.target}}, {{"essence", out_path.string()}});
  manifest.start();
  const auto b = encoder.extract(target);
  essv::save_essence(out_path, b, {{"profile", ctx.profile.name}, {"checkpoint", fs::path(a.checkpoint).filename().string()}});
  manifest.finish();
  out << "wrote " << out_path.string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  Common common;
  std::string targets;
  std::string eval_targets;
  std::vector<std::string> sources;
  std::string out;
  std::optional<int> iters;
  std::optional<double> lr;
  std::optional<int> n;
  std::optional<int> targets_per_step;
  std::optional<std::size_t> train_size;
  std::optional<std::size_t> eval_size;
  std::optional<int> eval_every;
  std::optional<double> lambda_c;
  std::optional<double> lambda_l2;
  std::optional<std::uint64_t> seed;
};

int cmd_train_encoder(const TrainArgs& a, std::ostream& out) {
  auto ctx = load_context(a.common);
  EncoderTrainConfig cfg;
  try {
    if (ctx.file.contains("encoder")) ctx.file.at("encoder").get_to(cfg);
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidConfig, std::string("encoder config: ") + e.what());
  }
  if (a.iters) cfg.iterations = *a.iters;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.n) cfg.source_batch = *a.n;
  if (a.targets_per_step) cfg.targets_per_step = *a.targets_per_step;
  if (a.train_size) cfg.train_set_size = *a.train_size;
  if (a.eval_size) cfg.eval_set_size = *a.eval_size;
  if (a.eval_every) cfg.eval_every = *a.eval_every;
  if (a.lambda_c) cfg.weights.consistency = *a.lambda_c;
  if (a.lambda_l2) cfg.weights.l2 = *a.lambda_l2;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  const fs::path out_path(a.out);
  const fs::path dir = parent_or_cwd(out_path);
  refuse_existing(out_path, a.common.force);
  if (!ctx.backends.inverter) raise(ErrorCode::MissingInverter, "profile has no pretrained inverter to fine-tune");

  const auto train = load_images(a.targets, ctx.backends);
  std::vector<ImageTensor> eval;
  if (!a.eval_targets.empty()) eval = load_images(a.eval_targets, ctx.backends);
  std::vector<LatentCode> pool;
  if (!a.sources.empty()) {
    for (auto& s : load_sources(a.sources, ctx.backends)) pool.push_back(std::move(s.latent));
  } else {
    for (const auto& t : train) pool.push_back(ctx.backends.inverter->invert(t));
  }

  const json snapshot = {{"profile", ctx.profile.name}, {"encoder", cfg}};
  Manifest manifest(dir, "train-encoder", snapshot, ctx, cfg.seed,
                    {{"targets", a.targets}, {"eval_targets", a.eval_targets}, {"sources", a.sources}},
                    {{"checkpoint", out_path.string()}, {"log", (dir / "train_log.json").string()}});
  manifest.start();
  const auto encoder = finetune_essence_encoder(*ctx.backends.inverter, train, pool, ctx.backends.generator,
                                                ctx.backends.encoder, cfg, eval);
  save_encoder_checkpoint(out_path, encoder, ctx.backends);
  json log = json::array();
  for (const auto& p : encoder.eval_log()) log.push_back({{"step", p.step}, {"mean_objective", p.mean_objective}});
  essv::write_file_atomic(dir / "train_log.json", json{{"config", cfg}, {"eval", log}}.dump(2) + "\n");
  manifest.finish();
  out << "wrote " << out_path.string();
  if (!encoder.eval_log().empty()) {
    out << " (held-out objective " << fmt(encoder.eval_log().front().mean_objective) << " -> "
        << fmt(encoder.eval_log().back().mean_objective) << ")";
  }
  out << "\n";
  return kExitOk;
}

struct EvalArgs {
  Common common;
  OptimizerFlags opt;
  std::string fixture;
  std::string out;
  std::string essences;
  std::string checkpoint;
  std::optional<double> scale;
  std::vector<std::string> variants;
  std::vector<int> n_values;
  // Image-level evaluation of pre-rendered edits.
  std::string manipulations;
  std::string targets;
  std::vector<std::string> sources;
  std::string reference;
  std::vector<std::string> non_face;
};

EvaluationFixture prepare_fixture(const EvalArgs& a, const Context& ctx, const OptimizerConfig& cfg) {
  auto fx = load_fixture(a.fixture, ctx.backends);
  fx.optimizer = cfg;
  fx.jobs = a.common.jobs;
  return fx;
}

void refuse_existing_dir(const fs::path& dir, bool force) { refuse_existing(dir / "manifest.json", force); }

// --manipulations DIR holds <target_id>/<source_id>.png for every pair.
int cmd_evaluate_images(const EvalArgs& a, std::ostream& out) {
  auto ctx = load_context(a.common);
  const double scale = resolve_scale(ctx.file, a.scale);
  const fs::path dir(a.out);
  refuse_existing_dir(dir, a.common.force);
  if (a.targets.empty() || a.sources.empty()) {
    raise(ErrorCode::InvalidConfig, "--manipulations needs --targets and --sources");
  }
  const std::set<std::string> non_face(a.non_face.begin(), a.non_face.end());
  std::vector<TargetAsset> targets;
  for (const auto& p : collect_files({a.targets}, {".png"})) {
    const auto id = p.stem().string();
    targets.push_back({id, read_image(p, ctx.backends), !non_face.contains(id)});
  }
  std::vector<SourceImage> sources;
  for (const auto& p : collect_files(a.sources, {".essv", ".png"})) {
    if (p.extension() == ".essv") {
      sources.push_back({p.stem().string(), ctx.backends.generator->decode(essv::load_latent(p))});
    } else {
      sources.push_back({p.stem().string(), read_image(p, ctx.backends)});
    }
  }
  if (targets.empty() || sources.empty()) raise(ErrorCode::EmptyBatch, "no targets or sources found");
  std::vector<std::vector<ImageTensor>> edited(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    for (const auto& s : sources) {
      const auto p = fs::path(a.manipulations) / targets[t].id / (s.id + ".png");
      if (!fs::exists(p)) raise(ErrorCode::MissingPair, "no edited image for pair (" + targets[t].id + ", " + s.id + ")");
      edited[t].push_back(read_image(p, ctx.backends));
    }
  }
  std::vector<ImageTensor> reference;
  if (!a.reference.empty()) reference = load_images(a.reference, ctx.backends);

  json snapshot = {{"evaluation", {{"scale", scale}, {"method", "images"}}}};
  Manifest manifest(dir, "evaluate", snapshot, ctx, 0,
                    {{"manipulations", a.manipulations}, {"targets", a.targets}, {"sources", a.sources},
                     {"reference", a.reference}},
                    {{"report", (dir / "report.json").string()}, {"records", (dir / "records.csv").string()},
                     {"fid", (dir / "fid.csv").string()}});
  manifest.start();
  const auto report =
      evaluate_manipulations(ctx.backends, targets, sources, edited, reference, a.common.jobs, "images");
  write_report(dir, report, scale);
  manifest.finish();
  out << summary_header() << summary_row("images", report, scale);
  return kExitOk;
}

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
  if (!a.manipulations.empty()) return cmd_evaluate_images(a, out);
  if (a.fixture.empty()) raise(ErrorCode::InvalidConfig, "evaluate needs --fixture or --manipulations");
  auto ctx = load_context(a.common);
  const auto cfg = resolve_optimizer(ctx.file, a.opt);
  const double scale = resolve_scale(ctx.file, a.scale);
  const fs::path dir(a.out);
  refuse_existing_dir(dir, a.common.force);
  auto fx = prepare_fixture(a, ctx, cfg);

  std::string method = "optimizer";
  if (!a.checkpoint.empty()) method = "encoder";
  if (!a.essences.empty()) method = "files";
  json snapshot = config_snapshot(ctx, cfg);
  snapshot["evaluation"] = {{"scale", scale}, {"method", method}};
  Manifest manifest(dir, "evaluate", snapshot, ctx, cfg.seed,
                    {{"fixture", a.fixture}, {"essences", a.essences}, {"checkpoint", a.checkpoint}},
                    {{"report", (dir / "report.json").string()}, {"records", (dir / "records.csv").string()},
                     {"fid", (dir / "fid.csv").string()}});
  manifest.start();

  EvaluationReport report;
  if (method == "optimizer") {
    std::vector<EssenceResult> results;
    report = run_pipeline(fx, cfg, method, &results);
    fs::create_directories(dir / "essences");
    for (std::size_t t = 0; t < fx.targets.size(); ++t) {
      essv::save_essence(dir / "essences" / (fx.targets[t].id + ".essv"), results[t].essence, config_snapshot(ctx, cfg));
    }
  } else {
    std::vector<EssenceVector> essences;
    std::optional<EssenceEncoder> encoder;
    if (method == "encoder") encoder.emplace(load_encoder_checkpoint(a.checkpoint, ctx.backends));
    for (const auto& t : fx.targets) {
      if (encoder) {
        essences.push_back(encoder->extract(t.image));
      } else {
        essences.push_back(essv::load_essence(fs::path(a.essences) / (t.id + ".essv")));
      }
    }
    report = evaluate_essences(fx, essences, method);
    report.config_digest = ctx.backends.profile_digest;
  }
  write_report(dir, report, scale);
  manifest.finish();
  out << summary_header() << summary_row(method, report, scale);
  return kExitOk;
}

int cmd_ablate(const EvalArgs& a, std::ostream& out) {
  auto ctx = load_context(a.common);
  const auto cfg = resolve_optimizer(ctx.file, a.opt);
  const double scale = resolve_scale(ctx.file, a.scale);
  std::vector<AblationVariant> variants;
  for (const auto& v : a.variants) variants.push_back(ablation_variant_from_string(v));
  if (variants.empty()) {
    variants = {AblationVariant::Full, AblationVariant::NoConsistency, AblationVariant::NoSimilarity,
                AblationVariant::NoL2};
  }
  const fs::path dir(a.out);
  refuse_existing_dir(dir, a.common.force);
  auto fx = prepare_fixture(a, ctx, cfg);

  json names = json::array();
  for (auto v : variants) names.push_back(std::string(to_string(v)));
  json snapshot = config_snapshot(ctx, cfg);
  snapshot["evaluation"] = {{"scale", scale}, {"variants", names}};
  Manifest manifest(dir, "ablate", snapshot, ctx, cfg.seed, {{"fixture", a.fixture}},
                    {{"summary", (dir / "summary.csv").string()}, {"per_target", (dir / "per_target.csv").string()}});
  manifest.start();

  std::string summary = summary_header();
  std::string per_target = kPerTargetHeader;
  const auto baseline = baseline_report(fx);
  write_report(dir / "baseline", baseline, scale);
  summary += summary_row("baseline", baseline, scale);
  for (auto v : variants) {
    const auto report = ablation_run(v, fx);
    const std::string name(to_string(v));
    write_report(dir / name, report, scale);
    summary += summary_row(name, report, scale);
    per_target += per_target_rows(name, report, scale);
  }
  essv::write_file_atomic(dir / "summary.csv", summary);
  essv::write_file_atomic(dir / "per_target.csv", per_target);
  manifest.finish();
  out << summary;
  return kExitOk;
}

int cmd_sensitivity(const EvalArgs& a, std::ostream& out) {
  auto ctx = load_context(a.common);
  const auto cfg = resolve_optimizer(ctx.file, a.opt);
  const double scale = resolve_scale(ctx.file, a.scale);
  std::vector<int> ns = a.n_values;
  if (ns.empty()) ns = {2, 4, 8};
  for (int n : ns) {
    if (n < 2) raise(ErrorCode::BatchTooSmall, "N = " + std::to_string(n) + " leaves the consistency term undefined");
  }
  const fs::path dir(a.out);
  refuse_existing_dir(dir, a.common.force);
  auto fx = prepare_fixture(a, ctx, cfg);

  json snapshot = config_snapshot(ctx, cfg);
  snapshot["evaluation"] = {{"scale", scale}, {"n_values", ns}};
  Manifest manifest(dir, "sensitivity", snapshot, ctx, cfg.seed, {{"fixture", a.fixture}},
                    {{"summary", (dir / "summary.csv").string()}, {"per_target", (dir / "per_target.csv").string()}});
  manifest.start();
  const auto reports = sensitivity_run(ns, fx);
  std::string summary = summary_header();
  std::string per_target = kPerTargetHeader;
  for (const auto& [n, report] : reports) {
    const auto name = "N" + std::to_string(n);
    write_report(dir / name, report, scale);
    summary += summary_row(name, report, scale);
    per_target += per_target_rows(name, report, scale);
  }
  essv::write_file_atomic(dir / "summary.csv", summary);
  essv::write_file_atomic(dir / "per_target.csv", per_target);
  manifest.finish();
  out << summary;
  return kExitOk;
}

struct GridArgs {
  Common common;
  std::vector<std::string> targets;
  std::vector<std::string> sources;
  std::vector<std::string> essences;
  std::string out;
  std::size_t max_sources = 8;
};

int cmd_grid(const GridArgs& a, std::ostream& out) {
  auto ctx = load_context(a.common);
  if (a.targets.size() != a.essences.size()) {
    raise(ErrorCode::InvalidConfig, "give one --essence per --target");
  }
  refuse_existing(a.out, a.common.force);
  std::vector<ImageTensor> targets;
  for (const auto& t : a.targets) targets.push_back(read_image(t, ctx.backends));
  std::vector<EssenceVector> essences;
  for (const auto& e : a.essences) essences.push_back(essv::load_essence(e));
  const auto sources = load_sources(a.sources, ctx.backends);
  const fs::path out_path(a.out);
  Manifest manifest(parent_or_cwd(out_path), "grid", {}, ctx, 0,
                    {{"targets", a.targets}, {"sources", a.sources}, {"essences", a.essences}},
                    {{"grid", out_path.string()}});
  manifest.start();
  image_io::write_png(out_path, render_grid(targets, sources, essences, *ctx.backends.generator, a.max_sources));
  manifest.finish();
  out << "wrote " << out_path.string() << "\n";
  return kExitOk;
}

struct ProfilesArgs {
  Common common;
  std::string show;
  bool check = false;
};

int cmd_profiles(const ProfilesArgs& a, std::ostream& out) {
  const auto reg = ProfileRegistry::load(a.common.profile_dir.empty() ? std::nullopt
                                                                      : std::optional<fs::path>(a.common.profile_dir));
  if (!a.show.empty()) {
    const auto& p = reg.get(a.show);
    json j = p.to_json();
    j["name"] = p.name;
    j["digest"] = p.digest();
    if (a.check) {
      const auto b = make_backends(p);
      j["generator_space"] = b.generator->space_id();
      j["conformance"] = "ok";
    }
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  for (const auto& name : reg.names()) {
    const auto& p = reg.get(name);
    out << name << "\t" << to_string(p.kind) << "\t" << p.digest().substr(0, 16);
    if (a.check) {
      try {
        make_backends(p);
        out << "\tok";
      } catch (const Error& e) {
        out << "\tunavailable: " << e.what();
      }
    }
    out << "\n";
  }
  return kExitOk;
}

struct FixtureArgs {
  Common common;
  std::string out;
  FixtureSpec spec;
};

int cmd_fixture(const FixtureArgs& a, std::ostream& out) {
  auto ctx = load_context(a.common);
  const fs::path dir(a.out);
  refuse_existing(dir / "fixture.json", a.common.force);
  const json spec = {{"targets", a.spec.targets},     {"train_sources", a.spec.train_sources},
                     {"eval_sources", a.spec.eval_sources}, {"reference", a.spec.reference},
                     {"non_face", a.spec.non_face},   {"seed", a.spec.seed}};
  Manifest manifest(dir, "fixture", {{"fixture", spec}}, ctx, a.spec.seed, json::object(), {{"fixture", dir.string()}});
  manifest.start();
  write_fixture(dir, ctx.profile, ctx.backends, a.spec);
  manifest.finish();
  out << "wrote fixture " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"essencekit: learn and apply essence vectors in a generator's latent space"};
  app.name("essencekit");
  app.require_subcommand(1);
  app.set_version_flag("--version", "essencekit 0.1.0");

  TransferArgs transfer;
  auto* t = app.add_subcommand("transfer", "Optimize an essence for one target and apply it to sources");
  add_common(t, transfer.common);
  add_optimizer_flags(t, transfer.opt);
  t->add_option("--target", transfer.target, "Target image (PNG)")->required()->check(CLI::ExistingFile);
  t->add_option("--sources", transfer.sources, "Source latents (.essv) or images (.png): files or directories")->required();
  t->add_option("--out", transfer.out, "Output essence file (.essv)")->required();
  t->add_option("--essence", transfer.essence, "Apply this essence instead of optimizing")->check(CLI::ExistingFile);
  t->add_option("--grid", transfer.grid, "Also write a target/source/result grid PNG");

  ExtractArgs extract;
  auto* x = app.add_subcommand("extract", "Extract an essence with a fine-tuned encoder");
  add_common(x, extract.common);
  x->add_option("--checkpoint", extract.checkpoint, "Encoder checkpoint")->required()->check(CLI::ExistingFile);
  x->add_option("--target", extract.target, "Target image (PNG)")->required()->check(CLI::ExistingFile);
  x->add_option("--out", extract.out, "Output essence file (.essv)")->required();

  TrainArgs train;
  auto* tr = app.add_subcommand("train-encoder", "Fine-tune the inverter into an essence encoder");
  add_common(tr, train.common);
  tr->add_option("--targets", train.targets, "Directory of training target images")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--eval-targets", train.eval_targets, "Directory of held-out target images")->check(CLI::ExistingDirectory);
  tr->add_option("--sources", train.sources, "Source pool (default: inverted training targets)");
  tr->add_option("--out", train.out, "Output checkpoint")->required();
  tr->add_option("--iters", train.iters, "Training iterations (default 3000)");
  tr->add_option("--lr", train.lr, "Learning rate (default 1e-4)");
  tr->add_option("--n", train.n, "Sources per step (default 5)");
  tr->add_option("--targets-per-step", train.targets_per_step, "Targets per step (default 1)");
  tr->add_option("--train-size", train.train_size, "Training subset size (default 200)");
  tr->add_option("--eval-size", train.eval_size, "Held-out subset size (default 50)");
  tr->add_option("--eval-every", train.eval_every, "Held-out evaluation interval (default 500)");
  tr->add_option("--lambda-c", train.lambda_c, "Consistency weight (default 0.5)");
  tr->add_option("--lambda-l2", train.lambda_l2, "L2 weight (default 0.003)");
  tr->add_option("--seed", train.seed, "Random seed");

  EvalArgs evaluate;
  auto* e = app.add_subcommand("evaluate", "Score essences on a fixture (optimizing them if none are given)");
  add_common(e, evaluate.common);
  add_optimizer_flags(e, evaluate.opt);
  auto* fixture_opt = e->add_option("--fixture", evaluate.fixture, "Fixture directory")->check(CLI::ExistingDirectory);
  e->add_option("--manipulations", evaluate.manipulations, "Edited images as <target_id>/<source_id>.png")
      ->check(CLI::ExistingDirectory)
      ->excludes(fixture_opt);
  e->add_option("--targets", evaluate.targets, "Target images (with --manipulations)")->check(CLI::ExistingDirectory);
  e->add_option("--sources", evaluate.sources, "Unedited sources, latents or images (with --manipulations)");
  e->add_option("--reference", evaluate.reference, "FID reference images (with --manipulations)")
      ->check(CLI::ExistingDirectory);
  e->add_option("--non-face", evaluate.non_face, "Target ids excluded from FID")->delimiter(',');
  e->add_option("--out", evaluate.out, "Output directory")->required();
  auto* ess = e->add_option("--essences", evaluate.essences, "Directory of <target_id>.essv files")->check(CLI::ExistingDirectory);
  e->add_option("--checkpoint", evaluate.checkpoint, "Extract essences with this encoder checkpoint")
      ->check(CLI::ExistingFile)
      ->excludes(ess);
  e->add_option("--scale", evaluate.scale, "Multiply cosine metrics (100 for table-style values)");

  EvalArgs ablate;
  auto* ab = app.add_subcommand("ablate", "Run the loss-term ablation variants on a fixture");
  add_common(ab, ablate.common);
  add_optimizer_flags(ab, ablate.opt);
  ab->add_option("--fixture", ablate.fixture, "Fixture directory")->required()->check(CLI::ExistingDirectory);
  ab->add_option("--out", ablate.out, "Output directory")->required();
  ab->add_option("--variants", ablate.variants, "Subset of full,no_consistency,no_similarity,no_l2")->delimiter(',');
  ab->add_option("--scale", ablate.scale, "Multiply cosine metrics");

  EvalArgs sens;
  auto* se = app.add_subcommand("sensitivity", "Sweep the source batch size N on a fixture");
  add_common(se, sens.common);
  add_optimizer_flags(se, sens.opt, false);
  se->add_option("--fixture", sens.fixture, "Fixture directory")->required()->check(CLI::ExistingDirectory);
  se->add_option("--out", sens.out, "Output directory")->required();
  se->add_option("--n", sens.n_values, "Comma-separated N values (default 2,4,8)")->delimiter(',');
  se->add_option("--scale", sens.scale, "Multiply cosine metrics");

  GridArgs grid;
  auto* gr = app.add_subcommand("grid", "Render targets, sources and edited sources as one PNG");
  add_common(gr, grid.common);
  gr->add_option("--target", grid.targets, "Target image; repeat for several")->required();
  gr->add_option("--essence", grid.essences, "Essence for the matching --target")->required();
  gr->add_option("--sources", grid.sources, "Source latents or images")->required();
  gr->add_option("--max-sources", grid.max_sources, "Columns in the source row");
  gr->add_option("--out", grid.out, "Output PNG")->required();

  ProfilesArgs profiles;
  auto* pr = app.add_subcommand("profiles", "List backend profiles");
  add_common(pr, profiles.common, false);
  pr->add_option("--show", profiles.show, "Print one profile as JSON");
  pr->add_flag("--check", profiles.check, "Instantiate and conformance-check");

  FixtureArgs fixture;
  auto* fx = app.add_subcommand("fixture", "Write a hidden-target evaluation fixture");
  add_common(fx, fixture.common);
  fx->add_option("--out", fixture.out, "Output directory")->required();
  fx->add_option("--targets", fixture.spec.targets, "Number of targets");
  fx->add_option("--train", fixture.spec.train_sources, "Training pool size");
  fx->add_option("--eval", fixture.spec.eval_sources, "Held-out sources");
  fx->add_option("--reference", fixture.spec.reference, "FID reference images");
  fx->add_option("--non-face", fixture.spec.non_face, "Mark the last K targets as non-face");
  fx->add_option("--seed", fixture.spec.seed, "Random seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* active = &app;
    for (auto* sub : app.get_subcommands()) active = sub;
    err << active->help();
    return kExitConfig;
  }

  try {
    if (t->parsed()) return cmd_transfer(transfer, out);
    if (x->parsed()) return cmd_extract(extract, out);
    if (tr->parsed()) return cmd_train_encoder(train, out);
    if (e->parsed()) return cmd_evaluate(evaluate, out);
    if (ab->parsed()) return cmd_ablate(ablate, out);
    if (se->parsed()) return cmd_sensitivity(sens, out);
    if (gr->parsed()) return cmd_grid(grid, out);
    if (pr->parsed()) return cmd_profiles(profiles, out);
    if (fx->parsed()) return cmd_fixture(fixture, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code_for(ex.code());
  } catch (const json::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace essencekit::cli
