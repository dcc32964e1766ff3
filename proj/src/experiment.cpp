#include "qkdfl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "qkdfl/errors.hpp"
#include "qkdfl/parallel.hpp"
#include "qkdfl/partition.hpp"
#include "qkdfl/rng.hpp"
#include "qkdfl/sha256.hpp"

namespace qkdfl::exp {

using nlohmann::json;

const char* experiment_name(ExperimentKind k) noexcept {
  switch (k) {
    case ExperimentKind::A: return "A";
    case ExperimentKind::B: return "B";
    case ExperimentKind::C: return "C";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

std::string join(const std::string& path, const std::string& key) { return path + "." + key; }

std::string at_index(const std::string& path, std::size_t i) { return fmt::format("{}[{}]", path, i); }

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(join(path, key), "unknown field");
    }
  }
}

const json& require(const json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join(path, key), "missing required field");
  return *it;
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(path, "expected a finite number");
  return d;
}

std::uint64_t as_unsigned(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(path, "expected a non-negative integer");
}

std::size_t as_count(const json& v, const std::string& path, std::size_t min) {
  const auto n = as_unsigned(v, path);
  if (n < min) throw ConfigError(path, fmt::format("must be >= {}", min));
  return static_cast<std::size_t>(n);
}

double number(const json& obj, const std::string& path, const char* key) {
  return as_number(require(obj, path, key), join(path, key));
}

std::size_t count(const json& obj, const std::string& path, const char* key, std::size_t min) {
  return as_count(require(obj, path, key), join(path, key), min);
}

bool boolean(const json& obj, const std::string& path, const char* key) {
  const auto& v = require(obj, path, key);
  if (!v.is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return v.get<bool>();
}

std::string text(const json& obj, const std::string& path, const char* key) {
  const auto& v = require(obj, path, key);
  if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
  return v.get<std::string>();
}

const json& nonempty_array(const json& obj, const std::string& path, const char* key) {
  const auto& v = require(obj, path, key);
  if (!v.is_array()) throw ConfigError(join(path, key), "expected an array");
  if (v.empty()) throw ConfigError(join(path, key), "must not be empty");
  return v;
}

const json& section(const json& obj, const std::string& path, const char* key) {
  const auto& v = require(obj, path, key);
  if (!v.is_object()) throw ConfigError(join(path, key), "expected an object");
  return v;
}

void parse_bb84(const json& j, const std::string& path, qkd::Bb84Config& out) {
  check_keys(j, path, {"raw_len", "pa_ratio", "depolarize_prob"});
  out.raw_len = count(j, path, "raw_len", 64);
  out.pa_ratio = number(j, path, "pa_ratio");
  if (!(out.pa_ratio > 0.0 && out.pa_ratio <= 1.0)) throw ConfigError(join(path, "pa_ratio"), "must be in (0, 1]");
  out.depolarize_prob = number(j, path, "depolarize_prob");
  if (out.depolarize_prob < 0.0 || out.depolarize_prob > 1.0) {
    throw ConfigError(join(path, "depolarize_prob"), "must be in [0, 1]");
  }
}

void parse_train(const json& j, const std::string& path, tasks::TrainOptions& out) {
  check_keys(j, path, {"epochs", "learning_rate", "batch_size", "beta1", "beta2", "epsilon"});
  out.epochs = count(j, path, "epochs", 0);
  out.batch_size = count(j, path, "batch_size", 1);
  out.learning_rate = number(j, path, "learning_rate");
  out.beta1 = number(j, path, "beta1");
  out.beta2 = number(j, path, "beta2");
  out.epsilon = number(j, path, "epsilon");
  if (!(out.learning_rate > 0.0)) throw ConfigError(join(path, "learning_rate"), "must be > 0");
  if (!(out.beta1 >= 0.0 && out.beta1 < 1.0)) throw ConfigError(join(path, "beta1"), "must be in [0, 1)");
  if (!(out.beta2 >= 0.0 && out.beta2 < 1.0)) throw ConfigError(join(path, "beta2"), "must be in [0, 1)");
  if (!(out.epsilon > 0.0)) throw ConfigError(join(path, "epsilon"), "must be > 0");
}

void parse_data(const json& j, const std::string& path, tasks::TaskKind task, DataConfig& out) {
  check_keys(j, path, {"train_samples", "val_samples", "skew", "snr_db", "height", "width", "image_size"});
  out.train_samples = count(j, path, "train_samples", 1);
  out.val_samples = count(j, path, "val_samples", 1);
  const auto& skew = require(j, path, "skew");
  if (skew.is_string() && skew.get<std::string>() == "uniform") {
    out.skew = fl::kUniformSkew;
  } else {
    out.skew = as_number(skew, join(path, "skew"));
    if (!(out.skew > 0.0)) throw ConfigError(join(path, "skew"), "must be > 0 or \"uniform\"");
  }
  if (task == tasks::TaskKind::channel) {
    const auto& snr = nonempty_array(j, path, "snr_db");
    out.snr_db.clear();
    for (std::size_t i = 0; i < snr.size(); ++i) {
      const auto p = at_index(join(path, "snr_db"), i);
      if (snr[i].is_string() && snr[i].get<std::string>() == "inf") {
        out.snr_db.push_back(std::numeric_limits<double>::infinity());
      } else {
        out.snr_db.push_back(as_number(snr[i], p));
      }
    }
    out.height = count(j, path, "height", 1);
    out.width = count(j, path, "width", 1);
  } else {
    out.image_size = count(j, path, "image_size", 16);
  }
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  const std::string root = "$";
  check_keys(doc, root,
             {"experiment", "task", "seed", "qber_threshold", "bb84", "clients", "rounds", "modes", "eve",
              "scenarios", "mask_scale", "key_bits", "prg_seed_bits", "train", "data", "model_scale", "eta_grid",
              "sessions_per_eta", "output_dir"});
  ExperimentConfig cfg;

  const auto kind = text(doc, root, "experiment");
  if (kind == "A") cfg.experiment = ExperimentKind::A;
  else if (kind == "B") cfg.experiment = ExperimentKind::B;
  else if (kind == "C") cfg.experiment = ExperimentKind::C;
  else throw ConfigError("$.experiment", "expected \"A\", \"B\" or \"C\"");

  try {
    cfg.task = tasks::task_from_name(text(doc, root, "task"));
  } catch (const std::invalid_argument&) {
    throw ConfigError("$.task", "expected \"channel\" or \"radar\"");
  }
  cfg.seed = as_unsigned(require(doc, root, "seed"), "$.seed");
  cfg.qber_threshold = number(doc, root, "qber_threshold");
  if (!(cfg.qber_threshold > 0.0 && cfg.qber_threshold < 1.0)) {
    throw ConfigError("$.qber_threshold", "must be in (0, 1)");
  }
  parse_bb84(section(doc, root, "bb84"), "$.bb84", cfg.bb84);

  if (auto it = doc.find("output_dir"); it != doc.end()) {
    if (!it->is_string() || it->get<std::string>().empty()) throw ConfigError("$.output_dir", "expected a path");
    cfg.output_dir = it->get<std::string>();
  }

  if (cfg.experiment == ExperimentKind::C) {
    cfg.eve = boolean(doc, root, "eve");
    const auto& grid = nonempty_array(doc, root, "eta_grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto p = at_index("$.eta_grid", i);
      const double eta = as_number(grid[i], p);
      if (eta < 0.0 || eta > 1.0) throw ConfigError(p, "must be in [0, 1]");
      cfg.eta_grid.push_back(eta);
    }
    cfg.sessions_per_eta = count(doc, root, "sessions_per_eta", 1);
    return cfg;
  }

  const auto& clients = nonempty_array(doc, root, "clients");
  for (std::size_t i = 0; i < clients.size(); ++i) cfg.clients.push_back(as_count(clients[i], at_index("$.clients", i), 1));
  cfg.rounds = count(doc, root, "rounds", 1);

  const auto& modes = nonempty_array(doc, root, "modes");
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto p = at_index("$.modes", i);
    if (!modes[i].is_string()) throw ConfigError(p, "expected a mode name");
    try {
      cfg.modes.push_back(fl::mode_from_name(modes[i].get<std::string>()));
    } catch (const std::invalid_argument&) {
      throw ConfigError(p, "expected \"plain\", \"classical_sa\" or \"qkd_sa\"");
    }
  }
  const bool masked = std::any_of(cfg.modes.begin(), cfg.modes.end(), fl::is_masked);
  for (std::size_t i = 0; i < cfg.clients.size(); ++i) {
    if (masked && cfg.clients[i] < 2) throw ConfigError(at_index("$.clients", i), "masked modes need at least 2 clients");
  }

  if (cfg.experiment == ExperimentKind::A) {
    cfg.eve = boolean(doc, root, "eve");
  } else {
    const auto& sc = nonempty_array(doc, root, "scenarios");
    for (std::size_t i = 0; i < sc.size(); ++i) {
      const auto p = at_index("$.scenarios", i);
      if (!sc[i].is_string() || (sc[i] != "baseline" && sc[i] != "eve")) {
        throw ConfigError(p, "expected \"baseline\" or \"eve\"");
      }
      cfg.scenarios.push_back(sc[i].get<std::string>());
    }
  }

  cfg.mask_scale = number(doc, root, "mask_scale");
  if (cfg.mask_scale < 0.0) throw ConfigError("$.mask_scale", "must be >= 0");
  cfg.key_bits = count(doc, root, "key_bits", 1);
  cfg.prg_seed_bits = count(doc, root, "prg_seed_bits", 256);
  parse_train(section(doc, root, "train"), "$.train", cfg.train);
  parse_data(section(doc, root, "data"), "$.data", cfg.task, cfg.data);
  for (std::size_t i = 0; i < cfg.clients.size(); ++i) {
    if (cfg.clients[i] > cfg.data.train_samples) {
      throw ConfigError(at_index("$.clients", i), "more clients than training samples");
    }
  }

  cfg.model_scale = text(doc, root, "model_scale");
  if (cfg.model_scale != "desk" && cfg.model_scale != "paper") {
    throw ConfigError("$.model_scale", "expected \"desk\" or \"paper\"");
  }
  if (cfg.task == tasks::TaskKind::radar) {
    const auto spec = cfg.model_scale == "desk" ? tasks::ModelSpec::radar_desk(0) : tasks::ModelSpec::radar_scaled(1, 0);
    if (cfg.data.image_size % (std::size_t{1} << spec.levels()) != 0) {
      throw ConfigError("$.data.image_size", fmt::format("must be divisible by {}", std::size_t{1} << spec.levels()));
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = experiment_name(experiment);
  j["task"] = tasks::task_name(task);
  j["seed"] = seed;
  j["qber_threshold"] = qber_threshold;
  j["bb84"] = {{"raw_len", bb84.raw_len}, {"pa_ratio", bb84.pa_ratio}, {"depolarize_prob", bb84.depolarize_prob}};
  j["output_dir"] = output_dir.generic_string();
  if (experiment == ExperimentKind::C) {
    j["eve"] = eve;
    j["eta_grid"] = eta_grid;
    j["sessions_per_eta"] = sessions_per_eta;
    return j;
  }
  j["clients"] = clients;
  j["rounds"] = rounds;
  json m = json::array();
  for (auto mode : modes) m.push_back(fl::mode_name(mode));
  j["modes"] = m;
  if (experiment == ExperimentKind::A) j["eve"] = eve;
  else j["scenarios"] = scenarios;
  j["mask_scale"] = mask_scale;
  j["key_bits"] = key_bits;
  j["prg_seed_bits"] = prg_seed_bits;
  j["train"] = {{"epochs", train.epochs},
                {"learning_rate", train.learning_rate},
                {"batch_size", train.batch_size},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"epsilon", train.epsilon}};
  json d = {{"train_samples", data.train_samples}, {"val_samples", data.val_samples}};
  d["skew"] = std::isinf(data.skew) ? json("uniform") : json(data.skew);
  if (task == tasks::TaskKind::channel) {
    json snr = json::array();
    for (double s : data.snr_db) snr.push_back(std::isinf(s) ? json("inf") : json(s));
    d["snr_db"] = snr;
    d["height"] = data.height;
    d["width"] = data.width;
  } else {
    d["image_size"] = data.image_size;
  }
  j["data"] = d;
  j["model_scale"] = model_scale;
  return j;
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  Sha256 h;
  h.update(std::string_view(j.dump()));
  const auto digest = h.finish();
  return to_hex(digest).substr(0, 16);
}

// ---------------------------------------------------------------------------
// Runners

namespace {

tasks::ModelSpec model_for(const ExperimentConfig& cfg) {
  const auto init_seed = derive_seed(cfg.seed, "model.init");
  const bool desk = cfg.model_scale == "desk";
  if (cfg.task == tasks::TaskKind::channel) {
    return desk ? tasks::ModelSpec::channel_desk(init_seed) : tasks::ModelSpec::channel_paper(init_seed);
  }
  return desk ? tasks::ModelSpec::radar_desk(init_seed) : tasks::ModelSpec::radar_scaled(1, init_seed);
}

// Splits n samples over the SNR levels as evenly as possible.
std::vector<tasks::ChannelSample> channel_split(const ExperimentConfig& cfg, std::size_t n, const char* label) {
  std::vector<tasks::ChannelSample> out;
  const std::size_t levels = cfg.data.snr_db.size();
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t m = n / levels + (l < n % levels ? 1 : 0);
    if (m == 0) continue;
    auto part = tasks::gen_channel_dataset(m, cfg.data.snr_db[l], {cfg.data.height, cfg.data.width},
                                           derive_seed(cfg.seed, label, l));
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

// Training data, validation data and model are shared by every cell so that
// cells differ only in K, mode and scenario.
class TaskFactory {
 public:
  explicit TaskFactory(const ExperimentConfig& cfg) : cfg_(cfg), spec_(model_for(cfg)) {
    if (cfg.task == tasks::TaskKind::channel) {
      channel_train_ = channel_split(cfg, cfg.data.train_samples, "data.train");
      channel_val_ = channel_split(cfg, cfg.data.val_samples, "data.val");
      keys_ = fl::skew_keys(std::span<const tasks::ChannelSample>(channel_train_));
    } else {
      radar_train_ = tasks::gen_radar_dataset(cfg.data.train_samples, cfg.data.image_size,
                                              derive_seed(cfg.seed, "data.train"));
      radar_val_ = tasks::gen_radar_dataset(cfg.data.val_samples, cfg.data.image_size,
                                            derive_seed(cfg.seed, "data.val"));
      keys_ = fl::skew_keys(std::span<const tasks::RadarSample>(radar_train_));
    }
  }

  const tasks::ModelSpec& spec() const noexcept { return spec_; }

  std::unique_ptr<fl::FederatedTask> make(std::size_t clients) const {
    const auto shards = fl::partition_non_iid(keys_, clients, cfg_.data.skew,
                                              derive_seed(cfg_.seed, "partition", clients));
    if (cfg_.task == tasks::TaskKind::channel) {
      return fl::make_channel_task(spec_, fl::materialize(std::span<const tasks::ChannelSample>(channel_train_), shards),
                                   channel_val_);
    }
    return fl::make_radar_task(spec_, fl::materialize(std::span<const tasks::RadarSample>(radar_train_), shards),
                               radar_val_);
  }

 private:
  const ExperimentConfig& cfg_;
  tasks::ModelSpec spec_;
  std::vector<tasks::ChannelSample> channel_train_, channel_val_;
  std::vector<tasks::RadarSample> radar_train_, radar_val_;
  std::vector<std::size_t> keys_;
};

fl::RoundConfig round_template(const ExperimentConfig& cfg, std::size_t clients, fl::AggregationMode mode, bool eve,
                               std::size_t jobs) {
  fl::RoundConfig rc;
  rc.num_clients = clients;
  rc.mode = mode;
  rc.train = cfg.train;
  rc.qber_threshold = cfg.qber_threshold;
  rc.bb84 = cfg.bb84;
  rc.bb84.eve_present = eve;
  rc.mask_scale = cfg.mask_scale;
  rc.key_bits = cfg.key_bits;
  rc.prg_seed_bits = cfg.prg_seed_bits;
  // Shared by every mode and scenario with the same K: paired comparisons.
  rc.seed = derive_seed(cfg.seed, "rounds", clients);
  rc.jobs = jobs;
  return rc;
}

CellResult run_cell(const ExperimentConfig& cfg, const TaskFactory& factory, const ParamVec& init,
                    std::size_t clients, fl::AggregationMode mode, const std::string& scenario, std::size_t jobs) {
  spdlog::info("cell K={} mode={} scenario={}", clients, fl::mode_name(mode), scenario);
  const auto task = factory.make(clients);
  const auto rc = round_template(cfg, clients, mode, scenario == "eve", jobs);
  auto run = fl::run_training(init, *task, cfg.rounds, rc);
  CellResult cell;
  cell.clients = clients;
  cell.mode = mode;
  cell.scenario = scenario;
  cell.final_utility = run.reports.back().utility;
  cell.reports = std::move(run.reports);
  cell.param_count = init.total_len();
  return cell;
}

void require_kind(const ExperimentConfig& cfg, ExperimentKind k) {
  if (cfg.experiment != k) {
    throw std::invalid_argument(fmt::format("config is for experiment {}, not {}", experiment_name(cfg.experiment),
                                            experiment_name(k)));
  }
}

}  // namespace

ExperimentResult run_experiment_a(const ExperimentConfig& cfg, std::size_t jobs) {
  require_kind(cfg, ExperimentKind::A);
  ExperimentResult result{cfg, {}, {}};
  const TaskFactory factory(cfg);
  const auto init = tasks::init_params(factory.spec());
  const std::string scenario = cfg.eve ? "eve" : "baseline";
  for (auto k : cfg.clients) {
    for (auto mode : cfg.modes) result.cells.push_back(run_cell(cfg, factory, init, k, mode, scenario, jobs));
  }
  return result;
}

ExperimentResult run_experiment_b(const ExperimentConfig& cfg, std::size_t jobs) {
  require_kind(cfg, ExperimentKind::B);
  ExperimentResult result{cfg, {}, {}};
  const TaskFactory factory(cfg);
  const auto init = tasks::init_params(factory.spec());
  for (const auto& scenario : cfg.scenarios) {
    for (auto k : cfg.clients) {
      for (auto mode : cfg.modes) result.cells.push_back(run_cell(cfg, factory, init, k, mode, scenario, jobs));
    }
  }
  return result;
}

ExperimentResult run_experiment_c(const ExperimentConfig& cfg, std::size_t jobs) {
  require_kind(cfg, ExperimentKind::C);
  ExperimentResult result{cfg, {}, {}};
  const std::size_t n = cfg.sessions_per_eta;
  // Session s uses the same seed at every noise level, so the labeled noise
  // substream couples the grid points (common random numbers).
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t s = 0; s < n; ++s) seeds[s] = derive_seed(cfg.seed, "session", s);

  for (double eta : cfg.eta_grid) {
    std::vector<qkd::QkdSession> sessions(n);
    parallel_for(n, jobs, [&](std::size_t s) {
      qkd::Bb84Config bb = cfg.bb84;
      bb.depolarize_prob = eta;
      bb.eve_present = cfg.eve;
      bb.rng_seed = seeds[s];
      sessions[s] = qkd::run_bb84(bb);
    });
    EtaPoint p;
    p.eta = eta;
    p.sessions = n;
    double sum = 0.0, sum_sq = 0.0, sifted = 0.0, final_len = 0.0;
    std::size_t aborted = 0;
    for (const auto& s : sessions) {
      sum += s.qber;
      sum_sq += s.qber * s.qber;
      sifted += static_cast<double>(s.sifted_len);
      final_len += static_cast<double>(s.final_len);
      if (s.aborted(cfg.qber_threshold)) ++aborted;
    }
    const double dn = static_cast<double>(n);
    p.mean_qber = sum / dn;
    const double var = n > 1 ? std::max(0.0, (sum_sq - dn * p.mean_qber * p.mean_qber) / (dn - 1.0)) : 0.0;
    p.qber_stderr = std::sqrt(var / dn);
    p.abort_rate = static_cast<double>(aborted) / dn;
    p.mean_sifted_len = sifted / dn;
    p.mean_final_len = final_len / dn;
    result.eta_points.push_back(p);
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t jobs) {
  switch (cfg.experiment) {
    case ExperimentKind::A: return run_experiment_a(cfg, jobs);
    case ExperimentKind::B: return run_experiment_b(cfg, jobs);
    case ExperimentKind::C: return run_experiment_c(cfg, jobs);
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string num(double v) { return fmt::format("{:.10g}", v); }

template <class T>
std::string opt_num(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>) return num(*v);
  else return std::to_string(*v);
}

std::string opt_json(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return "";
  if (it->is_number_float()) return num(it->get<double>());
  return it->dump();
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& table, std::string config_hash)
      : out_(path, std::ios::binary), hash_(std::move(config_hash)), width_(csv_columns(table).size()) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    const auto cols = csv_columns(table);
    for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
    out_ << '\n';
  }

  // `fields` excludes the two leading provenance columns.
  void row(const std::vector<std::string>& fields) {
    if (fields.size() + 2 != width_) throw std::logic_error("csv row width mismatch");
    out_ << kSchemaVersion << ',' << hash_;
    for (const auto& f : fields) out_ << ',' << f;
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::string hash_;
  std::size_t width_;
};

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json utility_json(const fl::Utility& u) {
  json j = json::object();
  if (u.nmse) j["nmse"] = *u.nmse;
  if (u.accuracy) j["accuracy"] = *u.accuracy;
  if (u.miou) j["miou"] = *u.miou;
  return j;
}

json round_line(const ExperimentResult& r, const CellResult& cell, const fl::RoundReport& rep, const std::string& hash) {
  json j = fl::to_json(rep);
  j["experiment"] = experiment_name(r.config.experiment);
  j["task"] = tasks::task_name(r.config.task);
  j["clients"] = cell.clients;
  j["scenario"] = cell.scenario;
  j["config_hash"] = hash;
  j["schema_version"] = kSchemaVersion;
  return j;
}

template <class F>
std::optional<double> mean_of(const std::vector<fl::RoundReport>& reps, F&& get) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : reps) {
    if (auto v = get(r)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

void write_table_a(const ExperimentResult& r, const std::filesystem::path& path, const std::string& hash) {
  CsvWriter csv(path, "experiment_a", hash);
  for (const auto& c : r.cells) {
    std::size_t secure = 0;
    std::uint64_t down_total = 0, up_total = 0, down_round = 0, up_round = 0;
    std::optional<double> max_recon;
    for (const auto& rep : c.reports) {
      if (rep.status == fl::RoundStatus::secure) ++secure;
      down_total += rep.bytes_down;
      up_total += rep.bytes_up;
      down_round = std::max(down_round, rep.bytes_down);
      up_round = std::max(up_round, rep.bytes_up);
      if (rep.recon_error) max_recon = std::max(max_recon.value_or(0.0), *rep.recon_error);
    }
    csv.row({tasks::task_name(r.config.task), std::to_string(c.clients), fl::mode_name(c.mode),
             r.config.eve ? "true" : "false", std::to_string(c.reports.size()), std::to_string(secure),
             std::to_string(c.reports.size() - secure), std::to_string(c.param_count), opt_num(c.final_utility.nmse),
             opt_num(c.final_utility.accuracy), opt_num(c.final_utility.miou), std::to_string(down_round),
             std::to_string(up_round), std::to_string(down_total), std::to_string(up_total), opt_num(max_recon),
             opt_num(mean_of(c.reports, [](const fl::RoundReport& x) { return x.mean_cosine; })),
             opt_num(mean_of(c.reports, [](const fl::RoundReport& x) { return x.mean_pearson; }))});
  }
}

void write_tables_b(const ExperimentResult& r, const std::filesystem::path& rounds_path,
                    const std::filesystem::path& summary_path, const std::string& hash) {
  CsvWriter rounds(rounds_path, "experiment_b_rounds", hash);
  CsvWriter summary(summary_path, "experiment_b_summary", hash);
  const auto task = tasks::task_name(r.config.task);
  for (const auto& c : r.cells) {
    std::size_t secure = 0;
    std::optional<double> qmin, qmax;
    for (const auto& rep : c.reports) {
      if (rep.status == fl::RoundStatus::secure) ++secure;
      if (rep.qber) {
        qmin = std::min(qmin.value_or(*rep.qber), *rep.qber);
        qmax = std::max(qmax.value_or(*rep.qber), *rep.qber);
      }
      rounds.row({task, c.scenario, std::to_string(c.clients), fl::mode_name(c.mode), std::to_string(rep.round_index),
                  fl::status_name(rep.status), opt_num(rep.qber), opt_num(rep.sifted_len), opt_num(rep.final_len),
                  opt_num(rep.utility.nmse), opt_num(rep.utility.accuracy), opt_num(rep.utility.miou),
                  opt_num(rep.recon_error), opt_num(rep.mean_cosine), opt_num(rep.mean_pearson)});
    }
    summary.row({task, c.scenario, std::to_string(c.clients), fl::mode_name(c.mode), std::to_string(c.reports.size()),
                 std::to_string(secure), std::to_string(c.reports.size() - secure),
                 opt_num(mean_of(c.reports, [](const fl::RoundReport& x) { return x.qber; })), opt_num(qmin),
                 opt_num(qmax), opt_num(c.final_utility.nmse), opt_num(c.final_utility.accuracy),
                 opt_num(c.final_utility.miou)});
  }
}

void write_table_c(const ExperimentResult& r, const std::filesystem::path& path, const std::string& hash) {
  CsvWriter csv(path, "experiment_c", hash);
  for (const auto& p : r.eta_points) {
    csv.row({num(p.eta), r.config.eve ? "true" : "false", std::to_string(p.sessions), num(p.mean_qber),
             num(p.qber_stderr), num(r.config.qber_threshold), num(p.abort_rate), num(p.mean_sifted_len),
             num(p.mean_final_len)});
  }
}

std::size_t write_leakage(const std::vector<json>& lines, const std::filesystem::path& path, const std::string& hash) {
  CsvWriter csv(path, "leakage", hash);
  std::size_t rows = 0;
  for (const auto& l : lines) {
    if (l.at("status") != "SECURE") continue;
    const auto& u = l.at("utility");
    csv.row({l.at("experiment").get<std::string>(), l.at("task").get<std::string>(), l.at("scenario").get<std::string>(),
             l.at("clients").dump(), l.at("mode").get<std::string>(), l.at("round").dump(), opt_json(u, "nmse"),
             opt_json(u, "accuracy"), opt_json(u, "miou"), opt_json(l, "qber"), opt_json(l, "mean_cosine"),
             opt_json(l, "mean_pearson")});
    ++rows;
  }
  if (rows == 0) spdlog::warn("no SECURE rounds; {} has only a header", path.filename().string());
  return rows;
}

}  // namespace

std::vector<std::string> csv_columns(const std::string& table) {
  std::vector<std::string> cols = {"schema_version", "config_hash"};
  std::vector<std::string> rest;
  if (table == "experiment_a") {
    rest = {"task", "clients", "mode", "eve", "rounds", "secure_rounds", "aborted_rounds", "param_count", "nmse",
            "accuracy", "miou", "bytes_down_per_round", "bytes_up_per_round", "bytes_down_total", "bytes_up_total",
            "max_recon_error", "mean_cosine", "mean_pearson"};
  } else if (table == "experiment_b_rounds") {
    rest = {"task", "scenario", "clients", "mode", "round", "status", "qber", "sifted_len", "final_len", "nmse",
            "accuracy", "miou", "recon_error", "mean_cosine", "mean_pearson"};
  } else if (table == "experiment_b_summary") {
    rest = {"task", "scenario", "clients", "mode", "rounds", "secure", "aborted", "mean_qber", "min_qber", "max_qber",
            "nmse", "accuracy", "miou"};
  } else if (table == "experiment_c") {
    rest = {"eta", "eve", "sessions", "mean_qber", "qber_stderr", "qber_threshold", "abort_rate", "mean_sifted_len",
            "mean_final_len"};
  } else if (table == "leakage") {
    rest = {"experiment", "task", "scenario", "clients", "mode", "round", "nmse", "accuracy", "miou", "qber",
            "mean_cosine", "mean_pearson"};
  } else {
    throw std::invalid_argument("unknown table: " + table);
  }
  cols.insert(cols.end(), rest.begin(), rest.end());
  return cols;
}

std::vector<std::string> write_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto hash = r.config.hash();
  std::vector<std::string> files;

  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["config_hash"] = hash;
  summary["config"] = r.config.to_json();

  if (r.config.experiment == ExperimentKind::C) {
    write_table_c(r, dir / "experiment_c.csv", hash);
    files.push_back("experiment_c.csv");
    json pts = json::array();
    for (const auto& p : r.eta_points) {
      pts.push_back({{"eta", p.eta},
                     {"sessions", p.sessions},
                     {"mean_qber", p.mean_qber},
                     {"qber_stderr", p.qber_stderr},
                     {"abort_rate", p.abort_rate},
                     {"mean_sifted_len", p.mean_sifted_len},
                     {"mean_final_len", p.mean_final_len}});
    }
    summary["eta_points"] = pts;
  } else {
    std::vector<json> lines;
    json cells = json::array();
    for (const auto& c : r.cells) {
      json rounds = json::array();
      for (const auto& rep : c.reports) {
        lines.push_back(round_line(r, c, rep, hash));
        rounds.push_back(fl::to_json(rep));
      }
      cells.push_back({{"clients", c.clients},
                       {"mode", fl::mode_name(c.mode)},
                       {"scenario", c.scenario},
                       {"param_count", c.param_count},
                       {"rounds", rounds},
                       {"final", utility_json(c.final_utility)},
                       {"leakage_reduction", "mean over clients"}});
    }
    summary["cells"] = cells;
    {
      std::ofstream out(dir / "rounds.jsonl", std::ios::binary);
      if (!out) throw std::runtime_error("cannot write rounds.jsonl");
      for (const auto& l : lines) out << l.dump() << '\n';
    }
    files.push_back("rounds.jsonl");
    if (r.config.experiment == ExperimentKind::A) {
      write_table_a(r, dir / "experiment_a.csv", hash);
      files.push_back("experiment_a.csv");
    } else {
      write_tables_b(r, dir / "experiment_b_rounds.csv", dir / "experiment_b_summary.csv", hash);
      files.push_back("experiment_b_rounds.csv");
      files.push_back("experiment_b_summary.csv");
    }
    write_leakage(lines, dir / "leakage.csv", hash);
    files.push_back("leakage.csv");
  }

  write_json(dir / "summary.json", summary);
  files.push_back("summary.json");
  files.push_back("manifest.json");
  write_json(dir / "manifest.json", {{"tool", "qkdfl"},
                                     {"schema_version", kSchemaVersion},
                                     {"experiment", experiment_name(r.config.experiment)},
                                     {"task", tasks::task_name(r.config.task)},
                                     {"config_hash", hash},
                                     {"config", r.config.to_json()},
                                     {"files", files}});
  return files;
}

std::size_t report_leakage(const std::filesystem::path& run_dir) {
  std::ifstream manifest_in(run_dir / "manifest.json");
  if (!manifest_in) throw std::runtime_error("not a run directory (no manifest.json): " + run_dir.string());
  const auto manifest = json::parse(manifest_in);
  std::ifstream in(run_dir / "rounds.jsonl");
  if (!in) throw std::runtime_error("run has no round reports (rounds.jsonl): " + run_dir.string());
  std::vector<json> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(json::parse(line));
  }
  return write_leakage(lines, run_dir / "leakage.csv", manifest.at("config_hash").get<std::string>());
}

}  // namespace qkdfl::exp
